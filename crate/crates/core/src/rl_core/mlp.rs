use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Fully connected network with ReLU hidden layers.
///
/// Parameters live in one flat vector: for each layer, the `out × in`
/// weight matrix in row-major order followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: Activation,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[l]` is the input to layer l; the last entry is the output.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has at least the input")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub layer_sizes: Vec<usize>,
    pub output_activation: Activation,
    pub params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize], output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp { sizes: sizes.to_vec(), output, params: vec![0.0; param_count(sizes)] })
    }

    /// Uniform fan-in initialization; the output layer is drawn from
    /// `±final_scale` so initial outputs sit near the activation's center.
    pub fn random<R: Rng>(sizes: &[usize], output: Activation, final_scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let layers = sizes.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = if l + 1 == layers { final_scale } else { 1.0 / (fan_in as f64).sqrt() };
            for p in &mut net.params[offset..offset + fan_in * fan_out + fan_out] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let layers = self.sizes.len() - 1;
        let mut x = input.to_vec();
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let act = if l + 1 == layers { self.output } else { Activation::Relu };
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            x = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    act.apply(b[o] + row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>())
                })
                .collect();
            offset += n_in * n_out + n_out;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        activations.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let act = if l + 1 == layers { self.output } else { Activation::Relu };
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &activations[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let y = z.iter().map(|&v| act.apply(v)).collect();
            pre.push(z);
            activations.push(y);
            offset += n_in * n_out + n_out;
        }
        Ok(Trace { activations, pre })
    }

    /// Reverse-mode pass. Adds ∂L/∂θ into `param_grads` (so minibatches can
    /// accumulate) and returns ∂L/∂input, given `upstream` = ∂L/∂output.
    pub fn backward(&self, trace: &Trace, upstream: &[f64], param_grads: &mut [f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries, network has {} outputs",
                upstream.len(),
                self.output_dim()
            )));
        }
        if param_grads.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, network has {} parameters",
                param_grads.len(),
                self.params.len()
            )));
        }
        let layers = self.sizes.len() - 1;
        let mut offset = self.params.len();
        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            offset -= n_in * n_out + n_out;
            let act = if l + 1 == layers { self.output } else { Activation::Relu };
            let z = &trace.pre[l];
            let y = &trace.activations[l + 1];
            let x = &trace.activations[l];
            for o in 0..n_out {
                delta[o] *= act.derivative(z[o], y[o]);
            }
            let w = &self.params[offset..offset + n_in * n_out];
            let (gw, gb) = param_grads[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &w[o * n_in..(o + 1) * n_in];
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += d * x[i];
                    next[i] += d * row[i];
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    pub fn checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint { layer_sizes: self.sizes.clone(), output_activation: self.output, params: self.params.clone() }
    }

    pub fn from_checkpoint(ck: MlpCheckpoint) -> Result<Self> {
        let mut net = Self::zeros(&ck.layer_sizes, ck.output_activation)?;
        if ck.params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} parameters, layer sizes need {}",
                ck.params.len(),
                net.params.len()
            )));
        }
        net.params = ck.params;
        Ok(net)
    }
}
