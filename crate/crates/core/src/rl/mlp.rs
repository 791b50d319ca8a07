use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Fully connected layer, weights row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeroed(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Leaky-relu multilayer perceptron with a linear last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub slope: f64,
}

/// Per-layer inputs and pre-activations kept for backprop.
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn zeroed(dims: &[usize], slope: f64) -> Self {
        Mlp {
            layers: dims.windows(2).map(|w| Dense::zeroed(w[0], w[1])).collect(),
            slope,
        }
    }

    /// Weights and biases drawn uniformly from `[-scale, scale]`.
    pub fn uniform(dims: &[usize], slope: f64, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut m = Mlp::zeroed(dims, slope);
        for p in m.params_mut() {
            *p = rng.random_range(-scale..=scale);
        }
        m
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        d.extend(self.layers.last().map(|l| l.outputs));
        d
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    fn act(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.slope * z
        }
    }

    fn act_grad(&self, z: f64) -> f64 {
        if z > 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).pre.pop().unwrap_or_default()
    }

    pub fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&cur);
            inputs.push(cur);
            cur = if i + 1 < self.layers.len() {
                z.iter().map(|&v| self.act(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    /// Accumulates into `grads` the gradient of a scalar whose derivative
    /// with respect to the network output is `dout`.
    pub fn backward(&self, trace: &Trace, dout: &[f64], grads: &mut Mlp) {
        let mut delta = dout.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            let x = &trace.inputs[i];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, xv) in row.iter_mut().zip(x) {
                    *gw += d * xv;
                }
            }
            if i == 0 {
                break;
            }
            let below = &trace.pre[i - 1];
            let mut next = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            for (n, z) in next.iter_mut().zip(below) {
                *n *= self.act_grad(*z);
            }
            delta = next;
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    /// `self += scale * other`; shapes must agree.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (p, g) in self.params_mut().zip(other.params()) {
            *p += scale * g;
        }
    }
}
