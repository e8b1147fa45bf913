use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{loss_and_gradients, stack_rows, NetworkParameters};
use super::optimizer::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
use super::policy::{argmax, select_action};
use super::replay::{ReplayBuffer, Transition};
use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Multiplicative decay applied once per episode.
    pub epsilon_decay: f64,
    /// Gradient steps between hard copies into the target network.
    pub target_sync_interval: usize,
    pub replay_capacity: usize,
    pub hidden_layers: Vec<usize>,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 64,
            learning_rate: 1e-3,
            epsilon_start: 1.0,
            epsilon_min: 0.01,
            epsilon_decay: 0.995,
            target_sync_interval: 100,
            replay_capacity: 2000,
            hidden_layers: vec![128, 128],
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(config_err("agent.gamma", "0 <= gamma < 1"));
        }
        if self.batch_size == 0 {
            return Err(config_err("agent.batch_size", ">= 1"));
        }
        if self.replay_capacity == 0 {
            return Err(config_err("agent.replay_capacity", ">= 1"));
        }
        if self.batch_size > self.replay_capacity {
            return Err(config_err("agent.batch_size", format!("<= replay_capacity ({})", self.replay_capacity)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(config_err("agent.learning_rate", "> 0"));
        }
        if !(self.epsilon_start > 0.0 && self.epsilon_start <= 1.0) {
            return Err(config_err("agent.epsilon_start", "0 < epsilon_start <= 1"));
        }
        if !(self.epsilon_min > 0.0 && self.epsilon_min <= self.epsilon_start) {
            return Err(config_err("agent.epsilon_min", "0 < epsilon_min <= epsilon_start"));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(config_err("agent.epsilon_decay", "0 < epsilon_decay <= 1"));
        }
        if self.target_sync_interval == 0 {
            return Err(config_err("agent.target_sync_interval", ">= 1"));
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(config_err("agent.hidden_layers", "non-empty, every width >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(config_err("agent.beta1", "0 <= beta1 < 1"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(config_err("agent.beta2", "0 <= beta2 < 1"));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(config_err("agent.adam_epsilon", "> 0"));
        }
        Ok(())
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn layer_sizes(&self, state_dim: usize, action_count: usize) -> Vec<usize> {
        let mut sizes = vec![state_dim];
        sizes.extend(&self.hidden_layers);
        sizes.push(action_count);
        sizes
    }
}

/// Evaluation and target networks, optimizer, replay memory and exploration schedule.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub(crate) cfg: AgentConfig,
    pub(crate) eval: NetworkParameters,
    pub(crate) target: NetworkParameters,
    pub(crate) opt: OptimizerState,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    pub(crate) epsilon: f64,
    pub(crate) gradient_steps: u64,
    pub(crate) env_steps: u64,
    pub(crate) episodes: u64,
}

impl DqnAgent {
    pub fn new(state_dim: usize, action_count: usize, cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eval = NetworkParameters::init(&cfg.layer_sizes(state_dim, action_count), &mut rng)?;
        Ok(Self::from_parts(cfg, eval.clone(), eval, rng))
    }

    pub(crate) fn from_parts(cfg: AgentConfig, eval: NetworkParameters, target: NetworkParameters, rng: ChaCha8Rng) -> Self {
        Self {
            opt: OptimizerState::new(&eval),
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            epsilon: cfg.epsilon_start,
            eval,
            target,
            rng,
            cfg,
            gradient_steps: 0,
            env_steps: 0,
            episodes: 0,
        }
    }

    /// Epsilon-greedy action under the current exploration rate.
    pub fn act(&mut self, state: &[f64]) -> Result<usize> {
        select_action(&self.eval, state, self.epsilon, &mut self.rng, self.eval.output_dim())
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.eval.forward(state)?))
    }

    /// Stores a transition and, once the memory holds a full batch, takes one
    /// gradient step. Returns the batch loss when a step was taken.
    pub fn observe(&mut self, t: Transition) -> Result<Option<f64>> {
        let dim = self.eval.input_dim();
        for len in [t.state.len(), t.next_state.len()] {
            if len != dim {
                return Err(Error::DimensionMismatch { context: "transition", expected: dim, got: len });
            }
        }
        self.buffer.push(t);
        self.env_steps += 1;
        if self.buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        self.learn().map(Some)
    }

    fn learn(&mut self) -> Result<f64> {
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng);
        let targets = batch_targets(&batch, &self.target, self.cfg.gamma)?;
        let (loss, grads) = loss_and_gradients(&self.eval, &batch, &targets)?;
        optimizer_step(&mut self.eval, &grads, &mut self.opt, &self.cfg.optimizer_config())?;
        if !self.eval.all_finite() {
            return Err(Error::NonFinite(format!(
                "network parameters after gradient step {}",
                self.gradient_steps + 1
            )));
        }
        self.gradient_steps += 1;
        if self.gradient_steps % self.cfg.target_sync_interval as u64 == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target = sync_target(&self.eval);
    }

    pub fn end_episode(&mut self) {
        self.episodes += 1;
        self.epsilon = (self.epsilon * self.cfg.epsilon_decay).max(self.cfg.epsilon_min);
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn eval_params(&self) -> &NetworkParameters {
        &self.eval
    }

    pub fn eval_params_mut(&mut self) -> &mut NetworkParameters {
        &mut self.eval
    }

    pub fn target_params(&self) -> &NetworkParameters {
        &self.target
    }

    pub fn optimizer_state(&self) -> &OptimizerState {
        &self.opt
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }
}

/// A detached copy of the evaluation network.
pub fn sync_target(eval: &NetworkParameters) -> NetworkParameters {
    eval.clone()
}

/// Bellman targets for a whole batch with one batched forward pass.
pub fn batch_targets(batch: &[&Transition], target: &NetworkParameters, gamma: f64) -> Result<Vec<f64>> {
    let next = stack_rows(batch.iter().map(|t| t.next_state.as_slice()), target.input_dim())?;
    let q = target.forward_batch(next.view())?;
    Ok(batch
        .iter()
        .zip(q.outer_iter())
        .map(|(t, row)| {
            if t.done {
                t.reward
            } else {
                t.reward + gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect())
}
