//! The allocation MDP: a factory floor of devices around a central base station.
//!
//! One device is configured per step, round-robin. An action picks a
//! (sub-channel, power level) pair for that device; the reward is the
//! throughput/latency trade-off of that device's link after the change.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelRealization, Link, PropagationConfig};
use crate::error::{config_err, Error, Result};

/// Latencies above this (including the dead-link sentinel) are clipped when scoring.
pub const LATENCY_CAP_MS: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceType {
    Robot,
    Sensor,
    Controller,
}

impl DeviceType {
    pub const ALL: [DeviceType; 3] = [DeviceType::Robot, DeviceType::Sensor, DeviceType::Controller];

    /// Data block size: 1500, 1024 and 512 bytes.
    pub fn data_block_bits(self) -> f64 {
        match self {
            DeviceType::Robot => 12_000.0,
            DeviceType::Sensor => 8_192.0,
            DeviceType::Controller => 4_096.0,
        }
    }

    pub fn deadline_budget_seconds(self) -> f64 {
        match self {
            DeviceType::Robot => 0.100,
            DeviceType::Sensor => 0.010,
            DeviceType::Controller => 0.100,
        }
    }

    pub fn deadline_budget_ms(self) -> f64 {
        self.deadline_budget_seconds() * 1e3
    }

    pub fn name(self) -> &'static str {
        match self {
            DeviceType::Robot => "robot",
            DeviceType::Sensor => "sensor",
            DeviceType::Controller => "controller",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DeviceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Device {
    pub id: usize,
    pub dtype: DeviceType,
    /// Meters from the factory corner; the base station sits at the center.
    pub position: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactoryConfig {
    pub n_subchannels: usize,
    pub n_robots: usize,
    pub n_sensors: usize,
    pub n_controllers: usize,
    pub total_bandwidth_hz: f64,
    pub factory_side_meters: f64,
    /// Linear watts, ascending.
    pub power_levels: Vec<f64>,
    pub p_max: f64,
    /// Weight on latency (in ms) in the reward.
    pub lambda: f64,
    #[serde(skip)]
    pub propagation: PropagationConfig,
}

impl Default for FactoryConfig {
    fn default() -> Self {
        Self {
            n_subchannels: 10,
            n_robots: 5,
            n_sensors: 10,
            n_controllers: 10,
            total_bandwidth_hz: 2e8,
            factory_side_meters: 100.0,
            power_levels: vec![0.25, 0.5, 0.75, 1.0],
            p_max: 1.0,
            lambda: 0.5,
            propagation: PropagationConfig::default(),
        }
    }
}

impl FactoryConfig {
    pub fn n_devices(&self) -> usize {
        self.n_robots + self.n_sensors + self.n_controllers
    }

    pub fn state_dim(&self) -> usize {
        3 * self.n_devices()
    }

    pub fn subchannel_bandwidth_hz(&self) -> f64 {
        self.total_bandwidth_hz / self.n_subchannels as f64
    }

    /// Device types in id order: robots, then sensors, then controllers.
    pub fn device_types(&self) -> Vec<DeviceType> {
        std::iter::repeat_n(DeviceType::Robot, self.n_robots)
            .chain(std::iter::repeat_n(DeviceType::Sensor, self.n_sensors))
            .chain(std::iter::repeat_n(DeviceType::Controller, self.n_controllers))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subchannels < 1 {
            return Err(config_err("factory.n_subchannels", ">= 1"));
        }
        if self.n_devices() < 1 {
            return Err(config_err("factory.n_robots", "at least one device in total"));
        }
        if !(self.total_bandwidth_hz > 0.0) || !self.total_bandwidth_hz.is_finite() {
            return Err(config_err("factory.total_bandwidth_hz", "> 0"));
        }
        if !(self.factory_side_meters > 0.0) || !self.factory_side_meters.is_finite() {
            return Err(config_err("factory.factory_side_meters", "> 0"));
        }
        if !(self.p_max > 0.0) || !self.p_max.is_finite() {
            return Err(config_err("factory.p_max", "> 0"));
        }
        if self.power_levels.is_empty() {
            return Err(config_err("factory.power_levels", "non-empty"));
        }
        for p in &self.power_levels {
            if !(*p > 0.0 && *p <= self.p_max) {
                return Err(config_err("factory.power_levels", format!("each level in (0, p_max={}]", self.p_max)));
            }
        }
        if self.power_levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("factory.power_levels", "strictly ascending"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(config_err("factory.lambda", ">= 0"));
        }
        self.propagation.validate()
    }
}

/// A decoded action: which sub-channel and power level the current device gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action {
    pub subchannel: usize,
    pub level: usize,
}

pub fn action_space_size(cfg: &FactoryConfig) -> usize {
    cfg.n_subchannels * cfg.power_levels.len()
}

pub fn encode_action(cfg: &FactoryConfig, action: Action) -> usize {
    action.subchannel * cfg.power_levels.len() + action.level
}

pub fn decode_action(cfg: &FactoryConfig, index: usize) -> Result<Action> {
    let size = action_space_size(cfg);
    if index >= size {
        return Err(Error::InvalidAction { index, size });
    }
    let levels = cfg.power_levels.len();
    Ok(Action {
        subchannel: index / levels,
        level: index % levels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationState {
    pub assigned_subchannel: Vec<usize>,
    pub power_level_index: Vec<usize>,
    pub current_device: usize,
    pub channels: Vec<ChannelRealization>,
}

impl AllocationState {
    pub fn power(&self, device: usize, cfg: &FactoryConfig) -> f64 {
        cfg.power_levels[self.power_level_index[device]]
    }

    /// Devices sharing sub-channel `subchannel`, in id order.
    pub fn cluster(&self, subchannel: usize) -> Vec<usize> {
        self.assigned_subchannel
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == subchannel)
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks the allocation constraints: one sub-channel per device, valid power,
    /// and clusters partitioning the device set.
    pub fn check(&self, cfg: &FactoryConfig) -> Result<()> {
        let n = cfg.n_devices();
        if self.assigned_subchannel.len() != n
            || self.power_level_index.len() != n
            || self.channels.len() != n
        {
            return Err(Error::DimensionMismatch {
                context: "allocation state",
                expected: n,
                got: self.assigned_subchannel.len(),
            });
        }
        if self.current_device >= n {
            return Err(Error::Domain(format!("current device {} out of range", self.current_device)));
        }
        for i in 0..n {
            if self.assigned_subchannel[i] >= cfg.n_subchannels {
                return Err(Error::Domain(format!("device {i} on invalid sub-channel")));
            }
            match cfg.power_levels.get(self.power_level_index[i]) {
                Some(&p) if p <= cfg.p_max => {}
                _ => return Err(Error::Domain(format!("device {i} has an invalid power level"))),
            }
        }
        let clustered: usize = (0..cfg.n_subchannels).map(|c| self.cluster(c).len()).sum();
        if clustered != n {
            return Err(Error::Domain("clusters do not partition the device set".into()));
        }
        Ok(())
    }
}

/// Gains normalized by the largest gain, powers normalized by `p_max`, then a
/// one-hot of the current device.
pub fn encode_state(alloc: &AllocationState, cfg: &FactoryConfig) -> Vec<f64> {
    let n = alloc.channels.len();
    let mut out = Vec::with_capacity(3 * n);
    let max_gain = alloc.channels.iter().map(|c| c.gain).fold(0.0f64, f64::max);
    out.extend(alloc.channels.iter().map(|c| if max_gain > 0.0 { c.gain / max_gain } else { 0.0 }));
    out.extend((0..n).map(|i| alloc.power(i, cfg) / cfg.p_max));
    out.extend((0..n).map(|i| if i == alloc.current_device { 1.0 } else { 0.0 }));
    out
}

/// Spectral efficiency minus `lambda` times latency in milliseconds, latency
/// clipped at [`LATENCY_CAP_MS`].
pub fn reward_of(spectral_eff: f64, latency_ms: f64, lambda: f64) -> f64 {
    spectral_eff - lambda * latency_ms.min(LATENCY_CAP_MS)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkMetrics {
    pub sinr: f64,
    pub spectral_eff: f64,
    pub throughput_mbps: f64,
    pub latency_ms: f64,
    pub violation: bool,
}

/// Per-device link metrics for the whole allocation.
pub fn link_metrics(alloc: &AllocationState, devices: &[Device], cfg: &FactoryConfig) -> Vec<LinkMetrics> {
    let bw = cfg.subchannel_bandwidth_hz();
    let noise = cfg.propagation.noise_power;
    let clusters: Vec<Vec<usize>> = (0..cfg.n_subchannels).map(|c| alloc.cluster(c)).collect();
    devices
        .iter()
        .map(|d| {
            let i = d.id;
            let members = &clusters[alloc.assigned_subchannel[i]];
            let links: Vec<Link> = members
                .iter()
                .map(|&j| Link { gain: alloc.channels[j].gain, power: alloc.power(j, cfg) })
                .collect();
            let own = members.iter().position(|&j| j == i).expect("device is in its own cluster");
            let sinr = channel::sinr(own, &links, noise).expect("own index and noise are valid");
            let spectral_eff = channel::throughput_bps_hz(sinr);
            let latency_ms = channel::latency_seconds(d.dtype.data_block_bits(), spectral_eff, bw) * 1e3;
            LinkMetrics {
                sinr,
                spectral_eff,
                throughput_mbps: spectral_eff * bw / 1e6,
                latency_ms,
                violation: latency_ms > d.dtype.deadline_budget_ms(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub acted_device: usize,
    pub action: Action,
    /// Metrics of every device right after the action, before fading is redrawn.
    pub metrics: Vec<LinkMetrics>,
    pub done: bool,
}

impl StepOutcome {
    pub fn throughput_mbps(&self) -> Vec<f64> {
        self.metrics.iter().map(|m| m.throughput_mbps).collect()
    }

    pub fn latency_ms(&self) -> Vec<f64> {
        self.metrics.iter().map(|m| m.latency_ms).collect()
    }

    pub fn deadline_violations(&self) -> Vec<bool> {
        self.metrics.iter().map(|m| m.violation).collect()
    }
}

pub struct FactoryEnv {
    cfg: FactoryConfig,
    devices: Vec<Device>,
    shadow_db: Vec<f64>,
    alloc: AllocationState,
    steps: usize,
    max_timesteps: usize,
    rng: ChaCha8Rng,
}

impl FactoryEnv {
    /// Builds and resets an environment. All randomness flows from `seed`.
    pub fn new(cfg: FactoryConfig, max_timesteps: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if max_timesteps == 0 {
            return Err(config_err("experiment.max_timesteps", "> 0"));
        }
        let n = cfg.n_devices();
        let mut env = Self {
            devices: Vec::with_capacity(n),
            shadow_db: vec![0.0; n],
            alloc: AllocationState {
                assigned_subchannel: vec![0; n],
                power_level_index: vec![0; n],
                current_device: 0,
                channels: Vec::with_capacity(n),
            },
            steps: 0,
            max_timesteps,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        };
        env.reset();
        Ok(env)
    }

    /// New episode: fresh positions, random sub-channels at the lowest power level,
    /// fresh fading. Returns the initial state vector.
    pub fn reset(&mut self) -> Vec<f64> {
        let side = self.cfg.factory_side_meters;
        let types = self.cfg.device_types();
        self.devices = types
            .into_iter()
            .enumerate()
            .map(|(id, dtype)| Device {
                id,
                dtype,
                position: (self.rng.random::<f64>() * side, self.rng.random::<f64>() * side),
            })
            .collect();
        let sigma = self.cfg.propagation.shadow_sigma_db;
        for s in self.shadow_db.iter_mut() {
            *s = channel::sample_shadow_db(&mut self.rng, sigma);
        }
        let n_sub = self.cfg.n_subchannels;
        for c in self.alloc.assigned_subchannel.iter_mut() {
            *c = self.rng.random_range(0..n_sub);
        }
        self.alloc.power_level_index.iter_mut().for_each(|p| *p = 0);
        self.alloc.current_device = 0;
        self.steps = 0;
        self.redraw_fading();
        self.state()
    }

    /// Replaces the device layout (positions and types), keeping the current allocation.
    pub fn set_devices(&mut self, devices: Vec<Device>) -> Result<()> {
        let n = self.cfg.n_devices();
        if devices.len() != n {
            return Err(Error::DimensionMismatch { context: "device list", expected: n, got: devices.len() });
        }
        if devices.iter().enumerate().any(|(i, d)| d.id != i) {
            return Err(Error::Domain("device ids must equal their position in the list".into()));
        }
        self.devices = devices;
        let fading: Vec<f64> = self.alloc.channels.iter().map(|c| c.fading).collect();
        self.set_fading(&fading)
    }

    /// Overwrites the small-scale fading of every device and recomputes gains.
    pub fn set_fading(&mut self, fading: &[f64]) -> Result<()> {
        let n = self.devices.len();
        if fading.len() != n {
            return Err(Error::DimensionMismatch { context: "fading vector", expected: n, got: fading.len() });
        }
        let mut channels = Vec::with_capacity(n);
        for (d, &g) in self.devices.iter().zip(fading) {
            let distance = self.distance_of(d);
            let gain = self.cfg.propagation.gain(g, distance, self.shadow_db[d.id])?;
            channels.push(ChannelRealization { device_id: d.id, distance, fading: g, gain });
        }
        self.alloc.channels = channels;
        Ok(())
    }

    /// Overwrites the allocation of one device without consuming a step.
    pub fn assign(&mut self, device: usize, action: Action) -> Result<()> {
        if device >= self.devices.len() {
            return Err(Error::Domain(format!("no device {device}")));
        }
        let index = encode_action(&self.cfg, action);
        decode_action(&self.cfg, index)?;
        self.alloc.assigned_subchannel[device] = action.subchannel;
        self.alloc.power_level_index[device] = action.level;
        Ok(())
    }

    fn distance_of(&self, d: &Device) -> f64 {
        let half = self.cfg.factory_side_meters / 2.0;
        let (dx, dy) = (d.position.0 - half, d.position.1 - half);
        // Devices closer than the reference distance are treated as sitting at it.
        (dx * dx + dy * dy).sqrt().max(self.cfg.propagation.reference_distance)
    }

    fn redraw_fading(&mut self) {
        let fading: Vec<f64> = (0..self.devices.len())
            .map(|_| channel::sample_fading(&mut self.rng))
            .collect();
        self.set_fading(&fading).expect("distances are clamped to the reference distance");
    }

    pub fn state(&self) -> Vec<f64> {
        encode_state(&self.alloc, &self.cfg)
    }

    pub fn step(&mut self, action_index: usize) -> Result<StepOutcome> {
        let action = decode_action(&self.cfg, action_index)?;
        let k = self.alloc.current_device;
        self.alloc.assigned_subchannel[k] = action.subchannel;
        self.alloc.power_level_index[k] = action.level;

        let metrics = link_metrics(&self.alloc, &self.devices, &self.cfg);
        let acted = &metrics[k];
        let reward = reward_of(acted.spectral_eff, acted.latency_ms, self.cfg.lambda);

        self.alloc.current_device = (k + 1) % self.devices.len();
        self.redraw_fading();
        self.steps += 1;
        Ok(StepOutcome {
            reward,
            next_state: self.state(),
            acted_device: k,
            action,
            metrics,
            done: self.steps >= self.max_timesteps,
        })
    }

    pub fn config(&self) -> &FactoryConfig {
        &self.cfg
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn allocation(&self) -> &AllocationState {
        &self.alloc
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn max_timesteps(&self) -> usize {
        self.max_timesteps
    }

    pub fn state_dim(&self) -> usize {
        self.cfg.state_dim()
    }

    pub fn action_count(&self) -> usize {
        action_space_size(&self.cfg)
    }
}

/// One row of an episode trace, describing the device that acted.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: usize,
    pub step: usize,
    pub device_id: usize,
    pub dtype: DeviceType,
    pub subchannel: usize,
    pub power: f64,
    pub sinr_db: f64,
    pub throughput_mbps: f64,
    pub latency_ms: f64,
    pub reward: f64,
    pub violation: bool,
}

impl TraceRow {
    pub const HEADER: &'static str =
        "episode,step,device_id,dtype,subchannel,power,sinr_db,throughput_mbps,latency_ms,reward,violation";

    pub fn from_outcome(episode: usize, step: usize, outcome: &StepOutcome, env: &FactoryEnv) -> Self {
        let k = outcome.acted_device;
        let m = &outcome.metrics[k];
        Self {
            episode,
            step,
            device_id: k,
            dtype: env.devices()[k].dtype,
            subchannel: outcome.action.subchannel,
            power: env.config().power_levels[outcome.action.level],
            sinr_db: channel::to_db(m.sinr),
            throughput_mbps: m.throughput_mbps,
            latency_ms: m.latency_ms,
            reward: outcome.reward,
            violation: m.violation,
        }
    }

    /// Comma-separated fields in [`TraceRow::HEADER`] order, six decimals for reals.
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.episode,
            self.step,
            self.device_id,
            self.dtype,
            self.subchannel,
            self.power,
            self.sinr_db,
            self.throughput_mbps,
            self.latency_ms,
            self.reward,
            self.violation as u8
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny(n_sub: usize, robots: usize, sensors: usize, levels: Vec<f64>) -> FactoryConfig {
        FactoryConfig {
            n_subchannels: n_sub,
            n_robots: robots,
            n_sensors: sensors,
            n_controllers: 0,
            power_levels: levels,
            ..Default::default()
        }
    }

    #[test]
    fn default_reset_has_25_devices_on_one_channel_each() {
        let env = FactoryEnv::new(FactoryConfig::default(), 200, 1).unwrap();
        assert_eq!(env.devices().len(), 25);
        env.allocation().check(env.config()).unwrap();
        assert!(env.allocation().power_level_index.iter().all(|&l| l == 0));
        assert_eq!(env.allocation().current_device, 0);
        let counts = DeviceType::ALL.map(|t| env.devices().iter().filter(|d| d.dtype == t).count());
        assert_eq!(counts, [5, 10, 10]);
    }

    #[test]
    fn single_device_single_channel() {
        let env = FactoryEnv::new(tiny(1, 1, 0, vec![1.0]), 10, 3).unwrap();
        assert_eq!(env.allocation().assigned_subchannel, vec![0]);
    }

    #[test]
    fn reset_is_deterministic() {
        let a = FactoryEnv::new(FactoryConfig::default(), 200, 42).unwrap();
        let b = FactoryEnv::new(FactoryConfig::default(), 200, 42).unwrap();
        let (sa, sb) = (a.state(), b.state());
        assert_eq!(sa.len(), sb.len());
        assert!(sa.iter().zip(&sb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn state_encoding_layout() {
        let mut env = FactoryEnv::new(FactoryConfig::default(), 200, 9).unwrap();
        let s = env.state();
        assert_eq!(s.len(), 75);
        let max = s[..25].iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, 1.0);
        assert!(s[25..50].iter().all(|&p| p == 0.25));

        env.set_fading(&[1.0; 25]).unwrap();
        let mut devices = env.devices().to_vec();
        for d in devices.iter_mut() {
            d.position = (10.0, 10.0);
        }
        env.set_devices(devices).unwrap();
        let s = env.state();
        assert!(s[..25].iter().all(|&g| g == 1.0));

        for k in 0..3 {
            env.step(0).unwrap();
            let s = env.state();
            let hot: Vec<usize> = (0..25).filter(|&i| s[50 + i] != 0.0).collect();
            assert_eq!(hot, vec![k + 1]);
            assert_eq!(s[50 + k + 1], 1.0);
        }
    }

    #[test]
    fn action_space() {
        assert_eq!(action_space_size(&FactoryConfig::default()), 40);
        assert_eq!(action_space_size(&tiny(1, 1, 0, vec![1.0])), 1);
        let cfg = FactoryConfig::default();
        let mut seen = std::collections::HashSet::new();
        for c in 0..10 {
            for l in 0..4 {
                let a = Action { subchannel: c, level: l };
                let idx = encode_action(&cfg, a);
                assert!(idx < 40);
                assert!(seen.insert(idx));
                assert_eq!(decode_action(&cfg, idx).unwrap(), a);
            }
        }
        assert!(matches!(decode_action(&cfg, 40), Err(Error::InvalidAction { index: 40, size: 40 })));
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward_of(1.0, 2.0, 0.5), 0.0);
        assert_eq!(reward_of(2.0, 0.0, 123.0), 2.0);
        assert_eq!(reward_of(0.0, f64::INFINITY, 0.1), -100.0);
    }

    #[test]
    fn raising_power_alone_on_channel_raises_throughput() {
        let mut env = FactoryEnv::new(tiny(2, 1, 0, vec![0.25, 1.0]), 10, 5).unwrap();
        env.set_fading(&[1.0]).unwrap();
        let low = env.step(encode_action(env.config(), Action { subchannel: 1, level: 0 })).unwrap();
        env.set_fading(&[1.0]).unwrap();
        let high = env.step(encode_action(env.config(), Action { subchannel: 1, level: 1 })).unwrap();
        assert!(high.metrics[0].throughput_mbps > low.metrics[0].throughput_mbps);
    }

    #[test]
    fn repeating_current_assignment_changes_nothing_but_fading() {
        let mut env = FactoryEnv::new(FactoryConfig::default(), 200, 8).unwrap();
        let before = env.allocation().clone();
        let idx = encode_action(
            env.config(),
            Action { subchannel: before.assigned_subchannel[0], level: before.power_level_index[0] },
        );
        env.step(idx).unwrap();
        let after = env.allocation();
        assert_eq!(after.assigned_subchannel, before.assigned_subchannel);
        assert_eq!(after.power_level_index, before.power_level_index);
        assert_ne!(after.channels, before.channels);
    }

    #[test]
    fn two_device_reward_matches_hand_composition() {
        let cfg = FactoryConfig { lambda: 0.3, ..tiny(1, 1, 1, vec![0.5, 1.0]) };
        let mut env = FactoryEnv::new(cfg, 10, 13).unwrap();
        env.set_devices(vec![
            Device { id: 0, dtype: DeviceType::Robot, position: (53.0, 54.0) },
            Device { id: 1, dtype: DeviceType::Sensor, position: (80.0, 20.0) },
        ])
        .unwrap();
        env.set_fading(&[0.8, 1.7]).unwrap();
        env.assign(1, Action { subchannel: 0, level: 1 }).unwrap();
        let out = env.step(encode_action(env.config(), Action { subchannel: 0, level: 0 })).unwrap();

        // Independent scalar recomputation.
        let d0 = (3.0f64 * 3.0 + 4.0 * 4.0).sqrt();
        let d1 = (30.0f64 * 30.0 + 30.0 * 30.0).sqrt();
        let h0 = 0.8 / (d0 * d0);
        let h1 = 1.7 / (d1 * d1);
        let s0 = (h0 * 0.5) / (h1 * 1.0 + 1e-6);
        let t0 = (1.0 + s0).log2();
        let lat_ms = 12_000.0 / (t0 * 2e8) * 1e3;
        let want = t0 - 0.3 * lat_ms;
        assert!((out.reward - want).abs() <= 1e-12 * want.abs(), "{} vs {}", out.reward, want);
        assert_eq!(out.acted_device, 0);
    }

    #[test]
    fn episode_ends_at_max_timesteps() {
        let mut env = FactoryEnv::new(FactoryConfig::default(), 3, 2).unwrap();
        assert!(!env.step(0).unwrap().done);
        assert!(!env.step(0).unwrap().done);
        assert!(env.step(0).unwrap().done);
    }

    #[test]
    fn invalid_action_is_rejected() {
        let mut env = FactoryEnv::new(FactoryConfig::default(), 3, 2).unwrap();
        assert!(env.step(40).is_err());
        assert_eq!(env.steps_taken(), 0);
    }

    #[test]
    fn zero_lambda_reward_is_spectral_efficiency() {
        let cfg = FactoryConfig { lambda: 0.0, ..Default::default() };
        let mut env = FactoryEnv::new(cfg, 50, 4).unwrap();
        for a in 0..40 {
            let out = env.step(a).unwrap();
            assert_eq!(out.reward, out.metrics[out.acted_device].spectral_eff);
        }
    }

    #[test]
    fn config_rejects_bad_power_levels() {
        let cfg = FactoryConfig { power_levels: vec![0.5, 1.5], ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        let cfg = FactoryConfig { lambda: -1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn step_only_touches_current_device(seed in any::<u64>(), actions in prop::collection::vec(0usize..40, 1..60)) {
            let mut env = FactoryEnv::new(FactoryConfig::default(), 1000, seed).unwrap();
            for a in actions {
                let before = env.allocation().clone();
                let k = before.current_device;
                let out = env.step(a).unwrap();
                let after = env.allocation();
                for i in 0..25 {
                    if i != k {
                        prop_assert_eq!(after.assigned_subchannel[i], before.assigned_subchannel[i]);
                        prop_assert_eq!(after.power_level_index[i], before.power_level_index[i]);
                    }
                }
                after.check(env.config()).unwrap();
                for (m, d) in out.metrics.iter().zip(env.devices()) {
                    prop_assert_eq!(m.violation, m.latency_ms > d.dtype.deadline_budget_ms());
                }
            }
        }

        #[test]
        fn round_robin_visits_each_device_once(seed in any::<u64>(), offset in 0usize..25) {
            let mut env = FactoryEnv::new(FactoryConfig::default(), 1000, seed).unwrap();
            for _ in 0..offset {
                env.step(0).unwrap();
            }
            let mut seen = vec![0; 25];
            for _ in 0..25 {
                seen[env.step(3).unwrap().acted_device] += 1;
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn reward_decreasing_in_lambda(t in 0.0f64..20.0, l in 1e-6f64..500.0, lam in 0.0f64..5.0, dl in 1e-3f64..5.0) {
            prop_assert!(reward_of(t, l, lam + dl) < reward_of(t, l, lam));
            prop_assert!(reward_of(t, l, lam) <= reward_of(t, l, 0.0));
        }
    }
}
