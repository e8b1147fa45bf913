use rand::Rng;

use super::network::NetworkParameters;
use super::replay::Transition;
use crate::error::{Error, Result};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice over `action_count` actions.
pub fn select_action<R: Rng + ?Sized>(
    params: &NetworkParameters,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
    action_count: usize,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..action_count));
    }
    let q = params.forward(state)?;
    if q.len() != action_count {
        return Err(Error::DimensionMismatch { context: "q-values", expected: action_count, got: q.len() });
    }
    Ok(argmax(&q))
}

/// `r` for terminal transitions, else `r + gamma * max_a' Q_target(s', a')`.
pub fn bellman_target(t: &Transition, target: &NetworkParameters, gamma: f64) -> Result<f64> {
    if t.done {
        return Ok(t.reward);
    }
    let q = target.forward(&t.next_state)?;
    Ok(t.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}
