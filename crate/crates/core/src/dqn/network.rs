//! Fully connected Q-network with rectifier hidden layers and a linear head.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::replay::Transition;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Weights and biases of an MLP. Also used to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    layers: Vec<Layer>,
}

pub type Gradients = NetworkParameters;

impl NetworkParameters {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs() + layer.outputs()) as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.random_range(-limit..limit));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Domain(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("layer list"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::DimensionMismatch { context: "layer bias", expected: l.outputs(), got: l.bias.len() });
            }
            if i > 0 && layers[i - 1].outputs() != l.inputs() {
                return Err(Error::DimensionMismatch {
                    context: "layer chain",
                    expected: layers[i - 1].outputs(),
                    got: l.inputs(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs()];
        sizes.extend(self.layers.iter().map(Layer::outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Every parameter, layer by layer: weights row-major, then bias.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.param_count();
        if flat.len() != n {
            return Err(Error::DimensionMismatch { context: "flat parameters", expected: n, got: flat.len() });
        }
        for (dst, src) in self.values_mut().zip(flat) {
            *dst = *src;
        }
        Ok(())
    }

    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_input(state.len())?;
        let mut a = Array1::from(state.to_vec());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = l.weights.dot(&a) + &l.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        Ok(a.to_vec())
    }

    /// Q-values for a batch of states, one per row.
    pub fn forward_batch(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.activations(states)?.pop().expect("at least one layer"))
    }

    /// Input followed by every layer's output.
    fn activations(&self, states: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_input(states.ncols())?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(states.to_owned());
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.weights.t());
            z += &l.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            acts.push(z);
        }
        Ok(acts)
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::DimensionMismatch { context: "network input", expected: self.input_dim(), got });
        }
        Ok(())
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub(crate) fn stack_rows<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, width: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    let mut out = Array2::zeros((n, width));
    for (mut dst, src) in out.outer_iter_mut().zip(rows) {
        if src.len() != width {
            return Err(Error::DimensionMismatch { context: "state vector", expected: width, got: src.len() });
        }
        dst.assign(&ndarray::ArrayView1::from(src));
    }
    Ok(out)
}

/// Mean squared error between `Q(s, a)` and the targets, with gradients taken
/// through the taken action's output only. Targets are constants.
pub fn loss_and_gradients(
    params: &NetworkParameters,
    batch: &[&Transition],
    targets: &[f64],
) -> Result<(f64, Gradients)> {
    if batch.len() != targets.len() {
        return Err(Error::DimensionMismatch { context: "batch targets", expected: batch.len(), got: targets.len() });
    }
    if batch.is_empty() {
        return Err(Error::EmptyInput("training batch"));
    }
    let n_actions = params.output_dim();
    if let Some(t) = batch.iter().find(|t| t.action >= n_actions) {
        return Err(Error::InvalidAction { index: t.action, size: n_actions });
    }
    let states = stack_rows(batch.iter().map(|t| t.state.as_slice()), params.input_dim())?;
    let acts = params.activations(states.view())?;
    let q = acts.last().expect("output layer");

    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut delta = Array2::<f64>::zeros(q.raw_dim());
    for (i, (t, &y)) in batch.iter().zip(targets).enumerate() {
        let err = q[[i, t.action]] - y;
        loss += err * err;
        delta[[i, t.action]] = 2.0 * err * scale;
    }
    loss *= scale;

    let mut grads = params.zeros_like();
    for l in (0..params.layers.len()).rev() {
        let input = &acts[l];
        grads.layers[l].weights = delta.t().dot(input);
        grads.layers[l].bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&params.layers[l].weights);
            Zip::from(&mut back).and(input).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    Ok((loss, grads))
}
