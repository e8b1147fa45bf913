//! Checks shared by the focused integration tests and the acceptance suite.
#![allow(dead_code)]

use noma_dqn::channel::{self, Link, PropagationConfig, INFINITE_LATENCY};
use noma_dqn::dqn::{loss_and_gradients, AgentConfig, DeterministicMdp, DqnAgent, NetworkParameters, ReplayBuffer, Transition};
use noma_dqn::env::{self, FactoryConfig, FactoryEnv, LATENCY_CAP_MS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        return 0.0;
    }
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Analytic examples for the link and reward formulas.
pub fn formula_suite() -> Check {
    const TOL: f64 = 1e-12;
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut expect = |name: &str, got: f64, want: f64| {
        checked += 1;
        let ok = if want.is_infinite() { got == want } else { rel_err(got, want) <= TOL };
        if !ok {
            failures.push(format!("{name}: got {got}, want {want}"));
        }
    };

    expect("gain(1,1,2)", channel::channel_gain(1.0, 1.0, 2.0).unwrap(), 1.0);
    expect("gain(1,2,2)", channel::channel_gain(1.0, 2.0, 2.0).unwrap(), 0.25);
    expect("gain(0.5,10,2)", channel::channel_gain(0.5, 10.0, 2.0).unwrap(), 0.005);
    expect("gain halves under n=1", channel::channel_gain(0.8, 6.0, 1.0).unwrap(), channel::channel_gain(0.8, 3.0, 1.0).unwrap() / 2.0);
    expect("gain quarters under n=2", channel::channel_gain(0.8, 6.0, 2.0).unwrap(), channel::channel_gain(0.8, 3.0, 2.0).unwrap() / 4.0);

    let cfg = PropagationConfig::default();
    expect("pl(d0)", channel::path_loss_db(cfg.reference_distance, &cfg, 0.0).unwrap(), cfg.reference_path_loss_db);
    expect("pl(10 d0)", channel::path_loss_db(10.0 * cfg.reference_distance, &cfg, 0.0).unwrap(), 50.0);
    expect("pl(10 d0, shadow 3.2)", channel::path_loss_db(10.0 * cfg.reference_distance, &cfg, 3.2).unwrap(), 53.2);

    let one = Link { gain: 1.0, power: 1.0 };
    expect("sinr single", channel::sinr(0, &[one], 1.0).unwrap(), 1.0);
    expect("sinr pair", channel::sinr(0, &[one, one], 1e-6).unwrap(), 1.0 / (1.0 + 1e-6));
    let trio = [
        Link { gain: 3.1e-4, power: 0.75 },
        Link { gain: 8.0e-5, power: 0.25 },
        Link { gain: 1.7e-3, power: 1.0 },
    ];
    for i in 0..3 {
        let mut interference = 0.0;
        for (j, l) in trio.iter().enumerate() {
            if j != i {
                interference += l.gain * l.power;
            }
        }
        let want = trio[i].gain * trio[i].power / (interference + 1e-6);
        expect("sinr trio", channel::sinr(i, &trio, 1e-6).unwrap(), want);
    }

    expect("se(0)", channel::throughput_bps_hz(0.0), 0.0);
    expect("se(1)", channel::throughput_bps_hz(1.0), 1.0);
    expect("se(3)", channel::throughput_bps_hz(3.0), 2.0);

    expect("latency 4096 bits", channel::latency_seconds(4096.0, 1.0, 20e6) * 1e3, 0.2048);
    expect("latency 12000 bits", channel::latency_seconds(12000.0, 2.0, 20e6) * 1e3, 0.3);
    expect("latency dead link", channel::latency_seconds(8192.0, 0.0, 20e6), INFINITE_LATENCY);
    expect("latency halves", channel::latency_seconds(8192.0, 3.0, 20e6), channel::latency_seconds(8192.0, 1.5, 20e6) / 2.0);

    expect("reward(1,2,.5)", env::reward_of(1.0, 2.0, 0.5), 0.0);
    expect("reward(2,0,7)", env::reward_of(2.0, 0.0, 7.0), 2.0);
    expect("reward sentinel", env::reward_of(0.0, INFINITE_LATENCY, 0.1), -0.1 * LATENCY_CAP_MS);

    if failures.is_empty() {
        Ok(format!("{checked} examples exact"))
    } else {
        Err(failures.join("; "))
    }
}

/// Loss recomputed with plain loops, plus the smallest hidden pre-activation magnitude.
fn scalar_loss(layers: &[(Vec<Vec<f64>>, Vec<f64>)], batch: &[Transition], targets: &[f64]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut closest_kink = f64::INFINITY;
    for (t, y) in batch.iter().zip(targets) {
        let mut a = t.state.clone();
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut z: Vec<f64> = w.iter().zip(b).map(|(row, bi)| row.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() + bi).collect();
            if l + 1 < layers.len() {
                for v in &mut z {
                    closest_kink = closest_kink.min(v.abs());
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        loss += (a[t.action] - y).powi(2);
    }
    (loss / batch.len() as f64, closest_kink)
}

fn unpack(net: &NetworkParameters) -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
    net.layers()
        .iter()
        .map(|l| (l.weights.outer_iter().map(|r| r.to_vec()).collect(), l.bias.to_vec()))
        .collect()
}

pub struct GradientReport {
    pub networks: usize,
    pub coordinates: usize,
    pub worst_rel_err: f64,
}

/// Analytic gradients against central differences (step 1e-5) on random networks
/// of at most three layers and eight units. The relative error uses a 1e-6 floor
/// on the denominator so that coordinates with a zero gradient are compared in
/// absolute terms.
pub fn gradient_oracle(networks: usize, seed: u64) -> GradientReport {
    const STEP: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradientReport { networks, coordinates: 0, worst_rel_err: 0.0 };
    for _ in 0..networks {
        let depth = rng.random_range(1..=3);
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=8)).collect();
        let mut net = NetworkParameters::init(&sizes, &mut rng).unwrap();
        net.values_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let (inputs, outputs) = (sizes[0], sizes[depth]);

        // Redraw the batch until no hidden unit sits near its ReLU kink.
        let (batch, targets) = loop {
            let n = rng.random_range(1..=8);
            let batch: Vec<Transition> = (0..n)
                .map(|_| Transition {
                    state: (0..inputs).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    action: rng.random_range(0..outputs),
                    reward: 0.0,
                    next_state: vec![0.0; inputs],
                    done: false,
                })
                .collect();
            let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            if scalar_loss(&unpack(&net), &batch, &targets).1 > 1e-3 {
                break (batch, targets);
            }
        };

        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, grads) = loss_and_gradients(&net, &refs, &targets).unwrap();
        let analytic = grads.to_flat();
        let base = net.to_flat();
        for k in 0..base.len() {
            let mut probe = base.clone();
            probe[k] = base[k] + STEP;
            net.set_flat(&probe).unwrap();
            let plus = scalar_loss(&unpack(&net), &batch, &targets).0;
            probe[k] = base[k] - STEP;
            net.set_flat(&probe).unwrap();
            let minus = scalar_loss(&unpack(&net), &batch, &targets).0;
            let numeric = (plus - minus) / (2.0 * STEP);
            let err = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(FLOOR);
            report.worst_rel_err = report.worst_rel_err.max(err);
            report.coordinates += 1;
        }
        net.set_flat(&base).unwrap();
    }
    report
}

pub fn toy_agent_config() -> AgentConfig {
    AgentConfig {
        gamma: 0.9,
        batch_size: 32,
        learning_rate: 1e-3,
        epsilon_decay: 0.98,
        epsilon_min: 0.05,
        target_sync_interval: 50,
        hidden_layers: vec![32, 32],
        ..AgentConfig::default()
    }
}

/// Trains the full agent on `mdp` with one-hot states and returns its greedy policy.
pub fn train_toy_dqn(mdp: &DeterministicMdp, cfg: AgentConfig, episodes: usize, horizon: usize, seed: u64) -> Vec<usize> {
    let mut agent = DqnAgent::new(mdp.n_states(), mdp.n_actions(), cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..episodes {
        let mut s = rng.random_range(0..mdp.n_states());
        for _ in 0..horizon {
            let a = agent.act(&mdp.one_hot(s)).unwrap();
            let (s2, r) = mdp.step(s, a);
            agent
                .observe(Transition { state: mdp.one_hot(s), action: a, reward: r, next_state: mdp.one_hot(s2), done: false })
                .unwrap();
            s = s2;
        }
        agent.end_episode();
    }
    (0..mdp.n_states()).map(|s| agent.greedy(&mdp.one_hot(s)).unwrap()).collect()
}

/// Tabular greedy policy and the trained network's greedy policy.
pub fn tabular_equivalence(mdp: &DeterministicMdp, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let cfg = toy_agent_config();
    let tabular = mdp.solve_tabular(1.0, cfg.gamma, 1e-12, 100_000).greedy_policy();
    let dqn = train_toy_dqn(mdp, cfg, 400, 20, seed);
    (tabular, dqn)
}

/// Random actions through the environment while feeding a replay memory of the
/// default capacity; every step is checked against the allocation constraints.
pub fn constraint_walk(steps: usize, seed: u64) -> Check {
    let cfg = FactoryConfig::default();
    let n = cfg.n_devices();
    let capacity = AgentConfig::default().replay_capacity;
    let mut env = FactoryEnv::new(cfg.clone(), 200, seed).map_err(|e| e.to_string())?;
    let mut buffer = ReplayBuffer::new(capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.state();
    for i in 0..steps {
        let action = rng.random_range(0..env.action_count());
        let out = env.step(action).map_err(|e| format!("step {i}: {e}"))?;
        let alloc = env.allocation();
        alloc.check(&cfg).map_err(|e| format!("step {i}: {e}"))?;
        let mut memberships = vec![0usize; n];
        for c in 0..cfg.n_subchannels {
            for d in alloc.cluster(c) {
                memberships[d] += 1;
            }
        }
        if let Some(d) = memberships.iter().position(|&m| m != 1) {
            return Err(format!("step {i}: device {d} on {} sub-channels", memberships[d]));
        }
        if let Some(d) = (0..n).find(|&d| !(alloc.power(d, &cfg) <= cfg.p_max)) {
            return Err(format!("step {i}: device {d} exceeds p_max"));
        }
        buffer.push(Transition { state, action, reward: out.reward, next_state: out.next_state.clone(), done: out.done });
        if buffer.len() > capacity || buffer.len() != (i + 1).min(capacity) {
            return Err(format!("step {i}: replay holds {} of {capacity}", buffer.len()));
        }
        state = if out.done { env.reset() } else { out.next_state };
    }
    Ok(format!("{steps} steps, replay at {}/{capacity}", buffer.len()))
}
