//! Browser bindings: a link calculator, an incremental trainer and a snapshot
//! of the factory floor under the current greedy policy.
//!
//! Every exported call takes and returns JSON strings. The plain-Rust halves
//! (`*_json`) carry the logic and are what the native tests exercise.

use noma_dqn::channel::{self, Link, PropagationConfig};
use noma_dqn::dqn::{AgentConfig, DqnAgent, Transition};
use noma_dqn::env::{reward_of, DeviceType, FactoryConfig, FactoryEnv, StepOutcome, LATENCY_CAP_MS};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

const STEPS_PER_EPISODE: usize = 100;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkQuery {
    pub distance_min: f64,
    pub distance_max: f64,
    pub points: usize,
    pub power: f64,
    /// Received interference `h * p` from co-channel users, linear watts.
    pub interference: f64,
    pub noise_power: f64,
    pub path_loss_exponent: f64,
    pub device_type: String,
    pub lambda: f64,
}

impl Default for LinkQuery {
    fn default() -> Self {
        Self {
            distance_min: 1.0,
            distance_max: 100.0,
            points: 60,
            power: 1.0,
            interference: 0.0,
            noise_power: PropagationConfig::default().noise_power,
            path_loss_exponent: PropagationConfig::default().path_loss_exponent,
            device_type: "robot".into(),
            lambda: FactoryConfig::default().lambda,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkPoint {
    pub distance: f64,
    pub sinr_db: f64,
    pub spectral_eff: f64,
    pub throughput_mbps: f64,
    pub latency_ms: f64,
    pub reward: f64,
    pub meets_deadline: bool,
}

fn device_type(name: &str) -> Result<DeviceType, String> {
    DeviceType::ALL
        .into_iter()
        .find(|t| t.name() == name)
        .ok_or_else(|| format!("unknown device type `{name}` (robot, sensor, controller)"))
}

/// Unit-fading link metrics along a range of distances.
pub fn link_curve_json(query: &str) -> Result<String, String> {
    let q: LinkQuery = serde_json::from_str(query).map_err(|e| e.to_string())?;
    if !(q.distance_min > 0.0 && q.distance_max >= q.distance_min) || q.points < 2 || q.points > 2000 {
        return Err("need 0 < distance_min <= distance_max and 2..=2000 points".into());
    }
    if !(q.power > 0.0 && q.noise_power > 0.0 && q.interference >= 0.0 && q.lambda >= 0.0) {
        return Err("power and noise must be positive, interference and lambda non-negative".into());
    }
    let dtype = device_type(&q.device_type)?;
    let bandwidth = FactoryConfig::default().subchannel_bandwidth_hz();
    let ratio = q.distance_max / q.distance_min;
    let mut out = Vec::with_capacity(q.points);
    for i in 0..q.points {
        let distance = q.distance_min * ratio.powf(i as f64 / (q.points - 1) as f64);
        let gain = channel::channel_gain(1.0, distance, q.path_loss_exponent).map_err(|e| e.to_string())?;
        // The interferer is folded into one link carrying the whole received power.
        let cluster = [Link { gain, power: q.power }, Link { gain: q.interference, power: 1.0 }];
        let sinr = channel::sinr(0, &cluster, q.noise_power).map_err(|e| e.to_string())?;
        let se = channel::throughput_bps_hz(sinr);
        let latency_ms = channel::latency_seconds(dtype.data_block_bits(), se, bandwidth) * 1e3;
        out.push(LinkPoint {
            distance,
            sinr_db: channel::to_db(sinr),
            spectral_eff: se,
            throughput_mbps: se * bandwidth / 1e6,
            latency_ms: latency_ms.min(LATENCY_CAP_MS),
            reward: reward_of(se, latency_ms, q.lambda),
            meets_deadline: latency_ms <= dtype.deadline_budget_ms(),
        });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingProgress {
    pub episodes: usize,
    pub episode_mean_reward: Vec<f64>,
    pub epsilon: f64,
    pub gradient_steps: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviceView {
    pub id: usize,
    pub device_type: &'static str,
    pub x: f64,
    pub y: f64,
    pub subchannel: usize,
    pub power: f64,
    pub throughput_mbps: f64,
    pub latency_ms: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FloorSnapshot {
    pub side_meters: f64,
    pub subchannels: usize,
    pub mean_reward: f64,
    pub devices: Vec<DeviceView>,
}

/// A factory environment and an agent trained a few episodes at a time.
#[wasm_bindgen]
pub struct FactoryDemo {
    env: FactoryEnv,
    agent: DqnAgent,
    curve: Vec<f64>,
}

impl FactoryDemo {
    pub fn create(seed: u64, lambda: f64, hidden: usize) -> Result<Self, String> {
        let factory = FactoryConfig { lambda, ..FactoryConfig::default() };
        let env = FactoryEnv::new(factory, STEPS_PER_EPISODE, seed).map_err(|e| e.to_string())?;
        let cfg = AgentConfig { hidden_layers: vec![hidden, hidden], ..AgentConfig::default() };
        let agent = DqnAgent::new(env.state_dim(), env.action_count(), cfg, seed.wrapping_add(1)).map_err(|e| e.to_string())?;
        Ok(Self { env, agent, curve: Vec::new() })
    }

    pub fn train_json(&mut self, episodes: usize) -> Result<String, String> {
        for _ in 0..episodes {
            let mut state = self.env.reset();
            let mut total = 0.0;
            for _ in 0..STEPS_PER_EPISODE {
                let action = self.agent.act(&state).map_err(|e| e.to_string())?;
                let out = self.env.step(action).map_err(|e| e.to_string())?;
                total += out.reward;
                let t = Transition {
                    state: std::mem::take(&mut state),
                    action,
                    reward: out.reward,
                    next_state: out.next_state.clone(),
                    done: out.done,
                };
                self.agent.observe(t).map_err(|e| e.to_string())?;
                state = out.next_state;
            }
            self.agent.end_episode();
            self.curve.push(total / STEPS_PER_EPISODE as f64);
        }
        let progress = TrainingProgress {
            episodes: self.curve.len(),
            episode_mean_reward: self.curve.clone(),
            epsilon: self.agent.epsilon(),
            gradient_steps: self.agent.gradient_steps(),
        };
        serde_json::to_string(&progress).map_err(|e| e.to_string())
    }

    /// Resets the floor, lets the greedy policy configure every device once,
    /// and reports the resulting allocation.
    pub fn snapshot_json(&mut self) -> Result<String, String> {
        let mut state = self.env.reset();
        let n = self.env.devices().len();
        let mut last: Option<StepOutcome> = None;
        let mut reward = 0.0;
        for _ in 0..n {
            let action = self.agent.greedy(&state).map_err(|e| e.to_string())?;
            let out = self.env.step(action).map_err(|e| e.to_string())?;
            reward += out.reward;
            state = out.next_state.clone();
            last = Some(out);
        }
        let last = last.ok_or("no devices")?;
        let cfg = self.env.config();
        let alloc = self.env.allocation();
        let devices = self
            .env
            .devices()
            .iter()
            .zip(&last.metrics)
            .map(|(d, m)| DeviceView {
                id: d.id,
                device_type: d.dtype.name(),
                x: d.position.0,
                y: d.position.1,
                subchannel: alloc.assigned_subchannel[d.id],
                power: alloc.power(d.id, cfg),
                throughput_mbps: m.throughput_mbps,
                latency_ms: m.latency_ms.min(LATENCY_CAP_MS),
                violation: m.violation,
            })
            .collect();
        let snap = FloorSnapshot {
            side_meters: cfg.factory_side_meters,
            subchannels: cfg.n_subchannels,
            mean_reward: reward / n as f64,
            devices,
        };
        serde_json::to_string(&snap).map_err(|e| e.to_string())
    }
}

#[wasm_bindgen]
impl FactoryDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, lambda: f64, hidden: u32) -> Result<FactoryDemo, JsValue> {
        Self::create(seed as u64, lambda, hidden as usize).map_err(|e| JsValue::from_str(&e))
    }

    /// Runs `episodes` more training episodes and returns the full reward curve.
    pub fn train(&mut self, episodes: u32) -> Result<String, JsValue> {
        self.train_json(episodes as usize).map_err(|e| JsValue::from_str(&e))
    }

    pub fn snapshot(&mut self) -> Result<String, JsValue> {
        self.snapshot_json().map_err(|e| JsValue::from_str(&e))
    }
}

#[wasm_bindgen]
pub fn link_curve(query: &str) -> Result<String, JsValue> {
    link_curve_json(query).map_err(|e| JsValue::from_str(&e))
}
