//! Training runs, learning-rate and lambda sweeps, greedy evaluation and
//! cross-seed aggregation.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dqn::{AgentConfig, DqnAgent, Transition};
use crate::env::{DeviceType, FactoryConfig, FactoryEnv, TraceRow, LATENCY_CAP_MS};
use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub episodes: usize,
    pub max_timesteps: usize,
    pub seeds: Vec<u64>,
    pub lr_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub eval_episodes: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            episodes: 1000,
            max_timesteps: 200,
            seeds: vec![1, 2, 3],
            lr_values: vec![1e-2, 5e-3, 1e-3],
            lambda_values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            eval_episodes: 20,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(config_err("experiment.episodes", "> 0"));
        }
        if self.max_timesteps == 0 {
            return Err(config_err("experiment.max_timesteps", "> 0"));
        }
        if self.eval_episodes == 0 {
            return Err(config_err("experiment.eval_episodes", "> 0"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("experiment.seeds", "non-empty"));
        }
        if self.lr_values.is_empty() || self.lr_values.iter().any(|&lr| !(lr > 0.0) || !lr.is_finite()) {
            return Err(config_err("experiment.lr_values", "non-empty, every value > 0"));
        }
        if self.lambda_values.is_empty() || self.lambda_values.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(config_err("experiment.lambda_values", "non-empty, every value >= 0"));
        }
        Ok(())
    }
}

/// Everything needed to execute one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub tag: String,
    pub factory: FactoryConfig,
    pub agent: AgentConfig,
    pub episodes: usize,
    pub max_timesteps: usize,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl RunSpec {
    pub fn new(tag: impl Into<String>, factory: FactoryConfig, agent: AgentConfig, plan: &ExperimentPlan, seed: u64) -> Self {
        Self {
            tag: tag.into(),
            factory,
            agent,
            episodes: plan.episodes,
            max_timesteps: plan.max_timesteps,
            eval_episodes: plan.eval_episodes,
            seed,
        }
    }
}

/// Independent RNG stream for one purpose within a run (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const ENV_STREAM: u64 = 1;
pub const AGENT_STREAM: u64 = 2;
pub const EVAL_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub trace: TraceRow,
    pub global_step: usize,
    /// Reward accumulated in the current episode up to and including this step.
    pub cumulative_reward: f64,
    pub epsilon: f64,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub throughput_mbps: f64,
    /// Mean latency with dead links counted at the latency cap.
    pub latency_ms: f64,
    pub violation_rate: f64,
}

/// Greedy-policy metrics with frozen weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyMetrics {
    pub robot: TypeMetrics,
    pub sensor: TypeMetrics,
    pub controller: TypeMetrics,
    /// Mean over all devices and measured steps, bits/s/Hz.
    pub mean_spectral_eff: f64,
    pub mean_reward: f64,
}

impl GreedyMetrics {
    pub fn of(&self, t: DeviceType) -> &TypeMetrics {
        match t {
            DeviceType::Robot => &self.robot,
            DeviceType::Sensor => &self.sensor,
            DeviceType::Controller => &self.controller,
        }
    }

    fn all_finite(&self) -> bool {
        let vals = DeviceType::ALL
            .iter()
            .flat_map(|&t| {
                let m = self.of(t);
                [m.throughput_mbps, m.latency_ms, m.violation_rate]
            })
            .chain([self.mean_spectral_eff, self.mean_reward]);
        vals.into_iter().all(f64::is_finite)
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub tag: String,
    pub seed: u64,
    pub learning_rate: f64,
    pub lambda: f64,
    pub steps: Vec<StepRecord>,
    pub episode_mean_reward: Vec<f64>,
    pub greedy: GreedyMetrics,
    pub transitions_stored: u64,
    pub gradient_steps: u64,
    pub wall_clock: Duration,
}

pub const RUN_CSV_HEADER: &str = "episode,step,device_id,dtype,subchannel,power,sinr_db,throughput_mbps,latency_ms,reward,violation,global_step,cumulative_reward,epsilon,loss";

impl RunRecord {
    pub fn step_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.trace.reward).collect()
    }

    /// Mean reward over the last quarter of training steps.
    pub fn final_quarter_mean_reward(&self) -> f64 {
        mean(final_quarter(&self.step_rewards()))
    }

    /// Population variance of per-step rewards over the last quarter of training.
    pub fn final_quarter_reward_variance(&self) -> f64 {
        variance(final_quarter(&self.step_rewards()))
    }

    /// Step series, one row per environment step, in [`RUN_CSV_HEADER`] order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{RUN_CSV_HEADER}")?;
        for s in &self.steps {
            let loss = s.loss.map(|l| format!("{l:.6}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{:.6},{:.6},{}",
                s.trace.csv_fields(),
                s.global_step,
                s.cumulative_reward,
                s.epsilon,
                loss
            )?;
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        self.greedy.all_finite()
            && self.episode_mean_reward.iter().all(|x| x.is_finite())
            && self
                .steps
                .iter()
                .all(|s| s.trace.reward.is_finite() && s.cumulative_reward.is_finite() && s.loss.is_none_or(f64::is_finite))
    }
}

/// The last quarter of a series (at least one element when non-empty).
pub fn final_quarter(xs: &[f64]) -> &[f64] {
    let n = (xs.len() / 4).max(1).min(xs.len());
    &xs[xs.len() - n..]
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    mean(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>())
}

/// Linear-interpolation quantile of an already sorted, non-empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

fn with_context(tag: &str, e: Error) -> Error {
    match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("run `{tag}`: {msg}")),
        other => other,
    }
}

/// Runs the training loop, then a frozen greedy evaluation.
pub fn train(spec: &RunSpec) -> Result<(RunRecord, DqnAgent)> {
    let started = Instant::now();
    let mut env = FactoryEnv::new(spec.factory.clone(), spec.max_timesteps, derive_seed(spec.seed, ENV_STREAM))?;
    let mut agent = DqnAgent::new(env.state_dim(), env.action_count(), spec.agent.clone(), derive_seed(spec.seed, AGENT_STREAM))?;
    if spec.episodes == 0 {
        return Err(config_err("experiment.episodes", "> 0"));
    }

    let mut steps = Vec::with_capacity(spec.episodes * spec.max_timesteps);
    let mut episode_mean_reward = Vec::with_capacity(spec.episodes);
    let mut global_step = 0;
    for episode in 0..spec.episodes {
        let mut state = if episode == 0 { env.state() } else { env.reset() };
        let mut total = 0.0;
        for t in 0..spec.max_timesteps {
            let epsilon = agent.epsilon();
            let action = agent.act(&state).map_err(|e| with_context(&spec.tag, e))?;
            let out = env.step(action)?;
            total += out.reward;
            let trace = TraceRow::from_outcome(episode, t, &out, &env);
            let loss = agent
                .observe(Transition {
                    state: std::mem::take(&mut state),
                    action,
                    reward: out.reward,
                    next_state: out.next_state.clone(),
                    done: out.done,
                })
                .map_err(|e| with_context(&spec.tag, e))?;
            steps.push(StepRecord { trace, global_step, cumulative_reward: total, epsilon, loss });
            global_step += 1;
            state = out.next_state;
        }
        episode_mean_reward.push(total / spec.max_timesteps as f64);
        agent.end_episode();
    }

    let greedy = evaluate_greedy(
        &agent,
        &spec.factory,
        spec.max_timesteps,
        spec.eval_episodes,
        derive_seed(spec.seed, EVAL_STREAM),
    )?;
    let record = RunRecord {
        tag: spec.tag.clone(),
        seed: spec.seed,
        learning_rate: spec.agent.learning_rate,
        lambda: spec.factory.lambda,
        steps,
        episode_mean_reward,
        greedy,
        transitions_stored: agent.env_steps(),
        gradient_steps: agent.gradient_steps(),
        wall_clock: started.elapsed(),
    };
    if !record.all_finite() {
        return Err(Error::NonFinite(format!("run `{}`: record series", spec.tag)));
    }
    Ok((record, agent))
}

/// Rolls out the greedy policy with frozen weights.
///
/// Metrics cover every device at every step after the first full round-robin
/// pass of each episode (so every device has been configured by the policy at
/// least once); episodes no longer than one pass are measured at every step.
pub fn evaluate_greedy(
    agent: &DqnAgent,
    factory: &FactoryConfig,
    max_timesteps: usize,
    episodes: usize,
    seed: u64,
) -> Result<GreedyMetrics> {
    if episodes == 0 {
        return Err(config_err("experiment.eval_episodes", "> 0"));
    }
    let mut env = FactoryEnv::new(factory.clone(), max_timesteps, seed)?;
    let n = factory.n_devices();
    let warm_in = if max_timesteps > n { n } else { 0 };

    let mut sums = [[0.0f64; 3]; 3];
    let mut counts = [0usize; 3];
    let (mut se_sum, mut se_count) = (0.0, 0usize);
    let (mut reward_sum, mut reward_count) = (0.0, 0usize);
    for episode in 0..episodes {
        let mut state = if episode == 0 { env.state() } else { env.reset() };
        for t in 0..max_timesteps {
            let action = agent.greedy(&state)?;
            let out = env.step(action)?;
            if t >= warm_in {
                for (m, d) in out.metrics.iter().zip(env.devices()) {
                    let k = d.dtype.index();
                    sums[k][0] += m.throughput_mbps;
                    sums[k][1] += m.latency_ms.min(LATENCY_CAP_MS);
                    sums[k][2] += m.violation as u8 as f64;
                    counts[k] += 1;
                    se_sum += m.spectral_eff;
                    se_count += 1;
                }
                reward_sum += out.reward;
                reward_count += 1;
            }
            state = out.next_state;
        }
    }
    let per_type = |t: DeviceType| {
        let k = t.index();
        let c = counts[k].max(1) as f64;
        TypeMetrics { throughput_mbps: sums[k][0] / c, latency_ms: sums[k][1] / c, violation_rate: sums[k][2] / c }
    };
    Ok(GreedyMetrics {
        robot: per_type(DeviceType::Robot),
        sensor: per_type(DeviceType::Sensor),
        controller: per_type(DeviceType::Controller),
        mean_spectral_eff: se_sum / se_count.max(1) as f64,
        mean_reward: reward_sum / reward_count.max(1) as f64,
    })
}

/// Trains every spec, up to `jobs` at a time. Output order matches input order.
pub fn run_all(specs: &[RunSpec], jobs: usize) -> Result<Vec<(RunRecord, DqnAgent)>> {
    #[cfg(feature = "parallel")]
    {
        if jobs > 1 && specs.len() > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
            return pool.install(|| specs.par_iter().map(train).collect());
        }
    }
    let _ = jobs;
    specs.iter().map(train).collect()
}

pub fn lr_tag(lr: f64, seed: u64) -> String {
    format!("lr{lr:e}_seed{seed}")
}

pub fn lambda_tag(lambda: f64, seed: u64) -> String {
    format!("lambda{lambda}_seed{seed}")
}

/// One run per (learning rate, seed), lr-major.
pub fn learning_rate_specs(factory: &FactoryConfig, agent: &AgentConfig, plan: &ExperimentPlan) -> Vec<RunSpec> {
    plan.lr_values
        .iter()
        .flat_map(|&lr| {
            plan.seeds.iter().map(move |&seed| {
                let agent = AgentConfig { learning_rate: lr, ..agent.clone() };
                RunSpec::new(lr_tag(lr, seed), factory.clone(), agent, plan, seed)
            })
        })
        .collect()
}

/// One run per (lambda, seed), lambda-major, at the agent's learning rate.
pub fn lambda_specs(factory: &FactoryConfig, agent: &AgentConfig, plan: &ExperimentPlan) -> Vec<RunSpec> {
    plan.lambda_values
        .iter()
        .flat_map(|&lambda| {
            plan.seeds.iter().map(move |&seed| {
                let factory = FactoryConfig { lambda, ..factory.clone() };
                RunSpec::new(lambda_tag(lambda, seed), factory, agent.clone(), plan, seed)
            })
        })
        .collect()
}

pub fn sweep_learning_rates(
    factory: &FactoryConfig,
    agent: &AgentConfig,
    plan: &ExperimentPlan,
    jobs: usize,
) -> Result<Vec<(RunRecord, DqnAgent)>> {
    plan.validate()?;
    run_all(&learning_rate_specs(factory, agent, plan), jobs)
}

pub fn sweep_lambda(
    factory: &FactoryConfig,
    agent: &AgentConfig,
    plan: &ExperimentPlan,
    jobs: usize,
) -> Result<Vec<(RunRecord, DqnAgent)>> {
    plan.validate()?;
    run_all(&lambda_specs(factory, agent, plan), jobs)
}

/// Median and interquartile range across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Spread {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Spread { median: quantile_sorted(&v, 0.5), q1: quantile_sorted(&v, 0.25), q3: quantile_sorted(&v, 0.75) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub learning_rate: f64,
    pub lambda: f64,
    pub device_type: DeviceType,
    pub n_seeds: usize,
    pub throughput_mbps: Spread,
    pub latency_ms: Spread,
    pub violation_rate: Spread,
    pub final_quarter_reward: Spread,
}

pub const SUMMARY_CSV_HEADER: &str = "learning_rate,lambda,device_type,n_seeds,throughput_mbps_median,throughput_mbps_q1,throughput_mbps_q3,latency_ms_median,latency_ms_q1,latency_ms_q3,violation_rate_median,violation_rate_q1,violation_rate_q3,final_quarter_reward_median,final_quarter_reward_q1,final_quarter_reward_q3";

impl SummaryRow {
    pub fn csv_fields(&self) -> String {
        let s = |x: &Spread| format!("{:.6},{:.6},{:.6}", x.median, x.q1, x.q3);
        format!(
            "{:e},{:.6},{},{},{},{},{},{}",
            self.learning_rate,
            self.lambda,
            self.device_type,
            self.n_seeds,
            s(&self.throughput_mbps),
            s(&self.latency_ms),
            s(&self.violation_rate),
            s(&self.final_quarter_reward)
        )
    }
}

/// Groups records by (learning rate, lambda) and summarizes each device type
/// across seeds. Rows are sorted by learning rate, lambda, then device type.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("run records"));
    }
    let mut keys: Vec<(f64, f64)> = records.iter().map(|r| (r.learning_rate, r.lambda)).collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();

    let mut rows = Vec::with_capacity(keys.len() * 3);
    for (lr, lambda) in keys {
        let group: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.learning_rate.to_bits() == lr.to_bits() && r.lambda.to_bits() == lambda.to_bits())
            .collect();
        let fq: Vec<f64> = group.iter().map(|r| r.final_quarter_mean_reward()).collect();
        for t in DeviceType::ALL {
            let pick = |f: fn(&TypeMetrics) -> f64| group.iter().map(|r| f(r.greedy.of(t))).collect::<Vec<_>>();
            rows.push(SummaryRow {
                learning_rate: lr,
                lambda,
                device_type: t,
                n_seeds: group.len(),
                throughput_mbps: Spread::of(&pick(|m| m.throughput_mbps)),
                latency_ms: Spread::of(&pick(|m| m.latency_ms)),
                violation_rate: Spread::of(&pick(|m| m.violation_rate)),
                final_quarter_reward: Spread::of(&fq),
            });
        }
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_fields())?;
    }
    Ok(())
}
