//! Hand-written allocation policies on the same environment the agent sees:
//! uniform random actions, a myopic best response for the current device, and a
//! cooperative best response maximizing the summed reward of every device. The
//! best responses read the full allocation, which the agent's state does not carry.
//!
//! cargo run --release -p noma-dqn --example reference_policies [episodes]

use noma_dqn::env::{decode_action, link_metrics, reward_of, DeviceType, FactoryConfig, FactoryEnv, LATENCY_CAP_MS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEPS: usize = 100;

type Policy = fn(&FactoryEnv, &mut ChaCha8Rng) -> usize;

fn random(env: &FactoryEnv, rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(0..env.action_count())
}

/// Best action for the current device under `score`, evaluated on the live fading.
fn best_by(env: &FactoryEnv, score: impl Fn(&FactoryEnv, &[noma_dqn::env::LinkMetrics], usize) -> f64) -> usize {
    let k = env.allocation().current_device;
    let mut best = (f64::NEG_INFINITY, 0);
    for a in 0..env.action_count() {
        let act = decode_action(env.config(), a).expect("index in range");
        let mut alloc = env.allocation().clone();
        alloc.assigned_subchannel[k] = act.subchannel;
        alloc.power_level_index[k] = act.level;
        let s = score(env, &link_metrics(&alloc, env.devices(), env.config()), k);
        if s > best.0 {
            best = (s, a);
        }
    }
    best.1
}

fn myopic(env: &FactoryEnv, _: &mut ChaCha8Rng) -> usize {
    best_by(env, |env, m, k| reward_of(m[k].spectral_eff, m[k].latency_ms, env.config().lambda))
}

fn cooperative(env: &FactoryEnv, _: &mut ChaCha8Rng) -> usize {
    best_by(env, |env, m, _| m.iter().map(|x| reward_of(x.spectral_eff, x.latency_ms, env.config().lambda)).sum())
}

fn report(name: &str, lambda: f64, episodes: usize, policy: Policy) {
    let cfg = FactoryConfig { lambda, ..FactoryConfig::default() };
    let warm_in = cfg.n_devices();
    let mut env = FactoryEnv::new(cfg, STEPS, 7).expect("default config is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rewards = Vec::new();
    let mut sums = [[0.0; 2]; 3];
    let mut counts = [0.0; 3];
    for episode in 0..episodes {
        if episode > 0 {
            env.reset();
        }
        for t in 0..STEPS {
            let out = env.step(policy(&env, &mut rng)).expect("valid action");
            rewards.push(out.reward);
            if t >= warm_in {
                for (m, d) in out.metrics.iter().zip(env.devices()) {
                    let i = d.dtype.index();
                    sums[i][0] += m.throughput_mbps;
                    sums[i][1] += m.latency_ms.min(LATENCY_CAP_MS);
                    counts[i] += 1.0;
                }
            }
        }
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rewards.len() as f64;
    print!("{name:>12} lambda={lambda:<4} reward {mean:>9.3} (var {var:>8.1})");
    for t in DeviceType::ALL {
        let i = t.index();
        print!(" | {} {:.1} Mbps {:.2} ms", t.name(), sums[i][0] / counts[i], sums[i][1] / counts[i]);
    }
    println!();
}

fn main() {
    let episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    for lambda in [0.0, 0.5, 1.0] {
        report("random", lambda, episodes, random);
        report("myopic", lambda, episodes, myopic);
        report("cooperative", lambda, episodes, cooperative);
    }
}
