//! Deep Q-network stack: MLP with hand-written backpropagation, adaptive-moment
//! optimizer, replay memory, epsilon-greedy policy and target network.

pub mod agent;
pub mod checkpoint;
pub mod network;
pub mod optimizer;
pub mod policy;
pub mod replay;
pub mod tabular;

pub use agent::{batch_targets, sync_target, AgentConfig, DqnAgent};
pub use network::{loss_and_gradients, Gradients, Layer, NetworkParameters};
pub use optimizer::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
pub use policy::{argmax, bellman_target, select_action};
pub use replay::{ReplayBuffer, Transition};
pub use tabular::{tabular_q_update, DeterministicMdp, QTable};
