//! Minimal dense-network numerics for the Q-function: forward pass,
//! reverse-mode gradients, global-norm clipping, and Adam. Everything is
//! plain `f64` with explicit loops; gradient correctness is pinned by
//! finite-difference tests rather than by construction.

use rand::Rng;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Glorot-uniform initialization: entries drawn from
    /// ±sqrt(6 / (fan_in + fan_out)).
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            out[r] = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// A fully connected feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
}

/// Per-layer activations cached by [`DenseNet::forward_trace`] for the
/// backward pass.
pub struct NetTrace {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation values of each layer.
    pre: Vec<Vec<f64>>,
}

impl NetTrace {
    pub fn output(&self, net: &DenseNet) -> Vec<f64> {
        let last = net.layers.last().expect("empty network");
        self.pre.last().unwrap().iter().map(|&x| last.activation.apply(x)).collect()
    }
}

/// Weight and bias gradients mirroring a [`DenseNet`].
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

impl NetGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        NetGrads {
            layers: net
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.weight.rows, l.weight.cols), vec![0.0; l.bias.len()]))
                .collect(),
        }
    }
}

impl DenseNet {
    /// Builds a Glorot-initialized network with ReLU hidden layers and an
    /// identity output layer. `dims` lists layer widths input-first.
    pub fn glorot(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, pair)| DenseLayer {
                weight: Matrix::glorot(pair[1], pair[0], rng),
                bias: vec![0.0; pair[1]],
                activation: if i + 2 == dims.len() { Activation::Identity } else { Activation::Relu },
            })
            .collect();
        DenseNet { layers }
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Self {
        assert!(!layers.is_empty());
        DenseNet { layers }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut pre = vec![0.0; layer.weight.rows];
            layer.weight.matvec(&x, &mut pre);
            for (p, b) in pre.iter_mut().zip(&layer.bias) {
                *p = layer.activation.apply(*p + b);
            }
            x = pre;
        }
        x
    }

    /// Forward pass retaining the intermediate values needed by `backward`.
    pub fn forward_trace(&self, input: &[f64]) -> NetTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut pre = vec![0.0; layer.weight.rows];
            layer.weight.matvec(&x, &mut pre);
            for (p, b) in pre.iter_mut().zip(&layer.bias) {
                *p += b;
            }
            inputs.push(x);
            x = pre.iter().map(|&p| layer.activation.apply(p)).collect();
            pres.push(pre);
        }
        NetTrace { inputs, pre: pres }
    }

    /// Accumulates parameter gradients for one traced forward pass and
    /// returns the gradient with respect to the network input.
    pub fn backward(&self, trace: &NetTrace, output_grad: &[f64], grads: &mut NetGrads) -> Vec<f64> {
        assert_eq!(output_grad.len(), self.output_dim(), "output gradient dimension mismatch");
        let mut delta = output_grad.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre[idx];
            let input = &trace.inputs[idx];
            for (d, &p) in delta.iter_mut().zip(pre) {
                *d *= layer.activation.derivative(p);
            }
            let (dw, db) = &mut grads.layers[idx];
            for r in 0..layer.weight.rows {
                db[r] += delta[r];
                for c in 0..layer.weight.cols {
                    *dw.at_mut(r, c) += delta[r] * input[c];
                }
            }
            let mut prev = vec![0.0; layer.weight.cols];
            for c in 0..layer.weight.cols {
                let mut acc = 0.0;
                for r in 0..layer.weight.rows {
                    acc += layer.weight.at(r, c) * delta[r];
                }
                prev[c] = acc;
            }
            delta = prev;
        }
        delta
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data.len() + l.bias.len()).sum()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(&layer.weight.data);
            out.extend_from_slice(&layer.bias);
        }
    }

    pub fn assign_from_flat(&mut self, flat: &mut std::slice::Iter<f64>) {
        for layer in &mut self.layers {
            for w in layer.weight.data.iter_mut() {
                *w = *flat.next().expect("flat parameter vector too short");
            }
            for b in layer.bias.iter_mut() {
                *b = *flat.next().expect("flat parameter vector too short");
            }
        }
    }
}

impl NetGrads {
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (dw, db) in &self.layers {
            out.extend_from_slice(dw.data());
            out.extend_from_slice(db);
        }
    }
}

/// Scales `grads` in place so their global L2 norm is at most `clip`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [f64], clip: f64) -> f64 {
    assert!(clip > 0.0, "clip norm must be positive");
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > clip {
        let scale = clip / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update applied in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_hand_computation() {
        let net = DenseNet::from_layers(vec![DenseLayer {
            weight: Matrix::from_rows(vec![vec![1.0, 2.0], vec![-1.0, 0.5]]),
            bias: vec![0.1, -0.2],
            activation: Activation::Identity,
        }]);
        let y = net.forward(&[3.0, -1.0]);
        assert_eq!(y, vec![3.0 - 2.0 + 0.1, -3.0 - 0.5 - 0.2]);
    }

    #[test]
    fn relu_zeroes_negative_preactivations_and_their_gradients() {
        let net = DenseNet::from_layers(vec![DenseLayer {
            weight: Matrix::from_rows(vec![vec![1.0]]),
            bias: vec![0.0],
            activation: Activation::Relu,
        }]);
        assert_eq!(net.forward(&[-2.0]), vec![0.0]);
        let trace = net.forward_trace(&[-2.0]);
        let mut grads = NetGrads::zeros_like(&net);
        let dx = net.backward(&trace, &[1.0], &mut grads);
        assert_eq!(dx, vec![0.0]);
        assert_eq!(grads.layers[0].0.at(0, 0), 0.0);
    }

    fn fd_check(net: &DenseNet, input: &[f64], target: &[f64]) {
        // loss = 0.5 * |f(x) - target|^2
        let loss = |n: &DenseNet| -> f64 {
            n.forward(input).iter().zip(target).map(|(y, t)| 0.5 * (y - t) * (y - t)).sum()
        };
        let trace = net.forward_trace(input);
        let out_grad: Vec<f64> =
            trace.output(net).iter().zip(target).map(|(y, t)| y - t).collect();
        let mut grads = NetGrads::zeros_like(net);
        net.backward(&trace, &out_grad, &mut grads);
        let mut flat_grads = Vec::new();
        grads.flatten_into(&mut flat_grads);

        let mut flat_params = Vec::new();
        net.flatten_into(&mut flat_params);
        let h = 1e-5;
        for i in 0..flat_params.len() {
            let mut probe = net.clone();
            let mut plus = flat_params.clone();
            plus[i] += h;
            probe.assign_from_flat(&mut plus.iter());
            let up = loss(&probe);
            let mut minus = flat_params.clone();
            minus[i] -= h;
            probe.assign_from_flat(&mut minus.iter());
            let down = loss(&probe);
            let fd = (up - down) / (2.0 * h);
            let an = flat_grads[i];
            assert!(
                (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1.0),
                "param {i}: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = DenseNet::glorot(&[4, 6, 3], &mut rng);
            let input: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            fd_check(&net, &input, &target);
        }
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut g = vec![0.3, -0.4];
        let norm = clip_global_norm(&mut g, 1.0);
        assert!((norm - 0.5).abs() < 1e-12);
        assert_eq!(g, vec![0.3, -0.4]);
    }

    #[test]
    fn clip_rescales_to_the_bound_preserving_direction() {
        let mut g = vec![3.0, -4.0];
        let norm = clip_global_norm(&mut g, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((g[0] - 0.6).abs() < 1e-12);
        assert!((g[1] + 0.8).abs() < 1e-12);
        // idempotent: a second clip is a no-op
        let again = clip_global_norm(&mut g.clone(), 1.0);
        assert!((again - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_matches_closed_form() {
        let mut state = AdamState::new(2, 0.001);
        let mut params = vec![1.0, -2.0];
        let grads = vec![0.5, -0.25];
        state.step(&mut params, &grads);
        for (i, &g) in grads.iter().enumerate() {
            let expected = [1.0, -2.0][i] - 0.001 * g / (g.abs() + 1e-8);
            assert!((params[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_with_zero_gradient_is_a_no_op() {
        let mut state = AdamState::new(3, 0.01);
        let mut params = vec![0.5, -0.5, 2.0];
        state.step(&mut params, &[0.0, 0.0, 0.0]);
        assert_eq!(params, vec![0.5, -0.5, 2.0]);
    }
}
