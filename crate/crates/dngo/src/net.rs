//! The feed-forward network that produces the basis functions.
//!
//! A small MLP is trained to a point estimate by SGD with momentum; its last
//! hidden layer is the feature map used by the Bayesian output layer. During
//! training a linear (or logistic, for the constraint surrogate) head is fit
//! jointly with the hidden stack and discarded afterwards.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Nonlinearity layout over the hidden stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// tanh on every hidden layer (default; keeps the basis bounded).
    TanhAll,
    /// ReLU on all hidden layers except the last, which is tanh.
    ReluThenTanh,
    /// ReLU everywhere; unbounded basis.
    ReluAll,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub l2_penalty: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            layer_widths: vec![50, 50, 50],
            activation: Activation::TanhAll,
            l2_penalty: 1e-4,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 1000,
            batch_size: 64,
        }
    }
}

impl NetworkConfig {
    fn validate(&self) -> Result<()> {
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(Error::InvalidParameter(
                "layer widths must be non-empty and positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter("momentum must be in [0, 1)".into()));
        }
        if self.l2_penalty < 0.0 {
            return Err(Error::InvalidParameter("l2 penalty must be nonnegative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "epochs and batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Above this many rows the trainer switches from full-batch steps to
/// mini-batches with a compute-equivalent step budget.
const FULL_BATCH_LIMIT: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// (out × in) weight matrix.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            w: DMatrix::zeros(self.w.nrows(), self.w.ncols()),
            b: DVector::zeros(self.b.nrows()),
        }
    }
}

/// Objective for the training head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadLoss {
    /// Mean squared error of the linear head (regression basis).
    SquaredError,
    /// Mean cross-entropy of a sigmoid head (constraint basis).
    Logistic,
}

/// Hidden stack plus the scalar training head.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisNetwork {
    hidden: Vec<Layer>,
    head: Layer,
    pub config: NetworkConfig,
    input_dim: usize,
}

/// Per-parameter quantity with the same shape as the network.
pub struct Gradients {
    pub hidden: Vec<Layer>,
    pub head: Layer,
}

/// Classical momentum: v <- momentum*v - lr*g; w <- w + v.
pub fn momentum_step(params: &mut [f64], velocity: &mut [f64], grads: &[f64], lr: f64, momentum: f64) {
    for ((w, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = momentum * *v - lr * *g;
        *w += *v;
    }
}

/// Draw initial parameters: weights i.i.d. zero-mean Gaussian with standard
/// deviation 1/sqrt(fan-in), biases zero. Deterministic given the seed.
pub fn init_params(config: &NetworkConfig, input_dim: usize, seed: u64) -> Result<BasisNetwork> {
    config.validate()?;
    if input_dim == 0 {
        return Err(Error::InvalidParameter("input dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(config.layer_widths.len());
    let mut fan_in = input_dim;
    for &width in &config.layer_widths {
        layers.push(gaussian_layer(width, fan_in, &mut rng));
        fan_in = width;
    }
    let head = gaussian_layer(1, fan_in, &mut rng);
    Ok(BasisNetwork {
        hidden: layers,
        head,
        config: config.clone(),
        input_dim,
    })
}

fn gaussian_layer<R: Rng>(out: usize, fan_in: usize, rng: &mut R) -> Layer {
    let scale = 1.0 / (fan_in as f64).sqrt();
    Layer {
        w: DMatrix::from_fn(out, fan_in, |_, _| {
            let z: f64 = rng.sample(StandardNormal);
            z * scale
        }),
        b: DVector::zeros(out),
    }
}

impl BasisNetwork {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Basis dimensionality D (width of the last hidden layer).
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().map(|l| l.b.nrows()).unwrap_or(0)
    }

    fn activation_at(&self, layer: usize) -> fn(f64) -> f64 {
        let last = self.hidden.len() - 1;
        match self.config.activation {
            Activation::TanhAll => f64::tanh,
            Activation::ReluAll => relu,
            Activation::ReluThenTanh => {
                if layer == last {
                    f64::tanh
                } else {
                    relu
                }
            }
        }
    }

    fn activation_deriv_at(&self, layer: usize) -> fn(f64) -> f64 {
        let last = self.hidden.len() - 1;
        match self.config.activation {
            Activation::TanhAll => tanh_deriv,
            Activation::ReluAll => relu_deriv,
            Activation::ReluThenTanh => {
                if layer == last {
                    tanh_deriv
                } else {
                    relu_deriv
                }
            }
        }
    }

    /// φ(x): activations of the last hidden layer.
    pub fn forward_features(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut a = DVector::from_column_slice(x);
        for (l, layer) in self.hidden.iter().enumerate() {
            let act = self.activation_at(l);
            a = (&layer.w * a + &layer.b).map(act);
        }
        Ok(a)
    }

    /// φ for every row of `xs`, stacked as an (N × D) matrix.
    pub fn features_matrix(&self, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let n = xs.len();
        let mut phi = DMatrix::zeros(n, self.feature_dim());
        for (i, x) in xs.iter().enumerate() {
            let f = self.forward_features(x)?;
            phi.row_mut(i).copy_from(&f.transpose());
        }
        Ok(phi)
    }

    /// Training-head output for a single input.
    pub fn forward_head(&self, x: &[f64]) -> Result<f64> {
        let phi = self.forward_features(x)?;
        Ok((&self.head.w * phi)[(0, 0)] + self.head.b[0])
    }

    /// Batch forward pass keeping pre-activations and activations for backprop.
    fn forward_batch(&self, x: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DVector<f64>) {
        let n = x.nrows();
        let mut pre = Vec::with_capacity(self.hidden.len());
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);
        acts.push(x.clone());
        for (l, layer) in self.hidden.iter().enumerate() {
            let mut z = acts.last().unwrap() * layer.w.transpose();
            for mut row in z.row_iter_mut() {
                row += layer.b.transpose();
            }
            let act = self.activation_at(l);
            let a = z.map(act);
            pre.push(z);
            acts.push(a);
        }
        let mut out = acts.last().unwrap() * self.head.w.transpose();
        for mut row in out.row_iter_mut() {
            row += self.head.b.transpose();
        }
        (pre, acts, DVector::from_column_slice(&out.as_slice()[..n]))
    }

    /// Loss and full parameter gradient on one batch.
    ///
    /// For `SquaredError` the loss is mean squared error of the head plus
    /// `l2 * sum(w^2)` over all weight matrices (biases unpenalized); for
    /// `Logistic` the data term is mean cross-entropy of the sigmoid head.
    pub fn loss_and_gradient(
        &self,
        xs: &DMatrix<f64>,
        targets: &[f64],
        l2: f64,
        head_loss: HeadLoss,
    ) -> Result<(f64, Gradients)> {
        let n = xs.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        if xs.ncols() != self.input_dim || targets.len() != n {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: xs.ncols(),
            });
        }
        if xs.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training batch"));
        }

        let (pre, acts, out) = self.forward_batch(xs);
        let inv_n = 1.0 / n as f64;

        let mut data_loss = 0.0;
        let mut dout = DVector::zeros(n);
        match head_loss {
            HeadLoss::SquaredError => {
                for i in 0..n {
                    let r = out[i] - targets[i];
                    data_loss += r * r * inv_n;
                    dout[i] = 2.0 * r * inv_n;
                }
            }
            HeadLoss::Logistic => {
                for i in 0..n {
                    let a = out[i];
                    let c = targets[i];
                    // -[c ln σ(a) + (1-c) ln(1-σ(a))] = softplus(-a) + (1-c) a
                    data_loss += (softplus(-a) + (1.0 - c) * a) * inv_n;
                    dout[i] = (sigmoid(a) - c) * inv_n;
                }
            }
        }

        let mut grads = Gradients {
            hidden: self.hidden.iter().map(Layer::zeros_like).collect(),
            head: self.head.zeros_like(),
        };

        // head
        let a_last = &acts[acts.len() - 1];
        grads.head.w = (a_last.transpose() * &dout).transpose();
        grads.head.b[0] = dout.sum();
        let mut da = &dout * &self.head.w; // (n × D)

        // hidden stack, last to first
        for l in (0..self.hidden.len()).rev() {
            let deriv = self.activation_deriv_at(l);
            let dz = da.zip_map(&pre[l], |d, z| d * deriv(z));
            grads.hidden[l].w = dz.transpose() * &acts[l];
            for (j, col) in dz.column_iter().enumerate() {
                grads.hidden[l].b[j] = col.sum();
            }
            if l > 0 {
                da = &dz * &self.hidden[l].w;
            }
        }

        // l2 penalty on weights
        let mut l2_loss = 0.0;
        if l2 > 0.0 {
            for (layer, grad) in self.hidden.iter().zip(&mut grads.hidden) {
                l2_loss += l2 * layer.w.iter().map(|w| w * w).sum::<f64>();
                grad.w += 2.0 * l2 * &layer.w;
            }
            l2_loss += l2 * self.head.w.iter().map(|w| w * w).sum::<f64>();
            grads.head.w += 2.0 * l2 * &self.head.w;
        }

        Ok((data_loss + l2_loss, grads))
    }

    /// Flattened copy of all parameters (for gradient checking).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in self.hidden.iter().chain(std::iter::once(&self.head)) {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(l.b.as_slice());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut off = 0;
        for l in self.hidden.iter_mut().chain(std::iter::once(&mut self.head)) {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        assert_eq!(off, flat.len());
    }

    pub fn n_params(&self) -> usize {
        self.hidden
            .iter()
            .chain(std::iter::once(&self.head))
            .map(|l| l.w.len() + l.b.len())
            .sum()
    }
}

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

fn relu_deriv(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn tanh_deriv(z: f64) -> f64 {
    let t = z.tanh();
    1.0 - t * t
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

fn softplus(a: f64) -> f64 {
    if a > 30.0 {
        a
    } else {
        a.exp().ln_1p()
    }
}

/// A trained basis with its final full-data training loss.
#[derive(Debug, Clone)]
pub struct TrainedBasis {
    pub net: BasisNetwork,
    pub final_loss: f64,
}

/// Fit the network to a point estimate by SGD with momentum.
///
/// Targets are expected on the standardized scale. Full-batch steps for up
/// to `FULL_BATCH_LIMIT` rows; above that, mini-batches with a step budget
/// equivalent to the full-batch regime at the crossover size.
pub fn train_map(
    config: &NetworkConfig,
    xs: &[Vec<f64>],
    targets: &[f64],
    seed: u64,
) -> Result<TrainedBasis> {
    train_with_loss(config, xs, targets, seed, HeadLoss::SquaredError)
}

/// Same trainer with a sigmoid cross-entropy head, for 0/1 labels.
pub fn train_classifier(
    config: &NetworkConfig,
    xs: &[Vec<f64>],
    labels: &[f64],
    seed: u64,
) -> Result<TrainedBasis> {
    train_with_loss(config, xs, labels, seed, HeadLoss::Logistic)
}

fn train_with_loss(
    config: &NetworkConfig,
    xs: &[Vec<f64>],
    targets: &[f64],
    seed: u64,
    head_loss: HeadLoss,
) -> Result<TrainedBasis> {
    let n = xs.len();
    if n == 0 {
        return Err(Error::NoValidObservations);
    }
    if targets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: targets.len(),
        });
    }
    let input_dim = xs[0].len();
    let mut net = init_params(config, input_dim, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));

    let x_all = DMatrix::from_fn(n, input_dim, |i, j| xs[i][j]);

    let mut velocity = Gradients {
        hidden: net.hidden.iter().map(Layer::zeros_like).collect(),
        head: net.head.zeros_like(),
    };

    if n <= FULL_BATCH_LIMIT {
        for _ in 0..config.epochs {
            let (_, grads) = net.loss_and_gradient(&x_all, targets, config.l2_penalty, head_loss)?;
            apply_update(&mut net, &mut velocity, &grads, config);
        }
    } else {
        let total_steps = (config.epochs * FULL_BATCH_LIMIT).div_ceil(config.batch_size);
        let mut order: Vec<usize> = (0..n).collect();
        let mut cursor = n; // force an initial shuffle
        let mut bx = DMatrix::zeros(config.batch_size, input_dim);
        let mut by = vec![0.0; config.batch_size];
        for _ in 0..total_steps {
            for slot in 0..config.batch_size {
                if cursor >= n {
                    shuffle(&mut order, &mut rng);
                    cursor = 0;
                }
                let idx = order[cursor];
                cursor += 1;
                bx.row_mut(slot).copy_from_slice(&xs[idx]);
                by[slot] = targets[idx];
            }
            let (_, grads) = net.loss_and_gradient(&bx, &by, config.l2_penalty, head_loss)?;
            apply_update(&mut net, &mut velocity, &grads, config);
        }
    }

    let (final_loss, _) = net.loss_and_gradient(&x_all, targets, 0.0, head_loss)?;
    Ok(TrainedBasis { net, final_loss })
}

fn apply_update(net: &mut BasisNetwork, velocity: &mut Gradients, grads: &Gradients, config: &NetworkConfig) {
    let lr = config.learning_rate;
    let m = config.momentum;
    for ((layer, vel), grad) in net
        .hidden
        .iter_mut()
        .zip(&mut velocity.hidden)
        .zip(&grads.hidden)
    {
        momentum_step(layer.w.as_mut_slice(), vel.w.as_mut_slice(), grad.w.as_slice(), lr, m);
        momentum_step(layer.b.as_mut_slice(), vel.b.as_mut_slice(), grad.b.as_slice(), lr, m);
    }
    momentum_step(
        net.head.w.as_mut_slice(),
        velocity.head.w.as_mut_slice(),
        grads.head.w.as_slice(),
        lr,
        m,
    );
    momentum_step(
        net.head.b.as_mut_slice(),
        velocity.head.b.as_mut_slice(),
        grads.head.b.as_slice(),
        lr,
        m,
    );
}

fn shuffle<R: Rng>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_config(widths: Vec<usize>, activation: Activation) -> NetworkConfig {
        NetworkConfig {
            layer_widths: widths,
            activation,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = NetworkConfig::default();
        let a = init_params(&cfg, 2, 7).unwrap();
        let b = init_params(&cfg, 2, 7).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        assert_eq!(a.feature_dim(), 50);
        for layer in &a.hidden {
            assert!(layer.b.iter().all(|&v| v == 0.0));
        }
        assert!(a.head.b.iter().all(|&v| v == 0.0));
        let c = init_params(&cfg, 2, 8).unwrap();
        assert_ne!(a.flat_params(), c.flat_params());
    }

    #[test]
    fn zero_width_layer_rejected() {
        let cfg = tiny_config(vec![4, 0], Activation::TanhAll);
        assert!(init_params(&cfg, 2, 0).is_err());
    }

    #[test]
    fn zero_net_maps_everything_to_zero() {
        let cfg = tiny_config(vec![3, 3], Activation::TanhAll);
        let mut net = init_params(&cfg, 2, 0).unwrap();
        let zeros = vec![0.0; net.n_params()];
        net.set_flat_params(&zeros);
        let phi = net.forward_features(&[0.3, 0.9]).unwrap();
        assert!(phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tanh_features_stay_bounded_by_one() {
        let cfg = tiny_config(vec![8, 8], Activation::TanhAll);
        let net = init_params(&cfg, 3, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut sup: f64 = 0.0;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let phi = net.forward_features(&x).unwrap();
            sup = sup.max(phi.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        assert!(sup <= 1.0, "tanh basis exceeded 1: {sup}");
    }

    #[test]
    fn single_unit_tanh_value() {
        let cfg = tiny_config(vec![1], Activation::TanhAll);
        let mut net = init_params(&cfg, 1, 0).unwrap();
        // params: w1=1, b1=0, head w=anything, head b
        net.set_flat_params(&[1.0, 0.0, 0.0, 0.0]);
        let phi = net.forward_features(&[0.5]).unwrap();
        assert_relative_eq!(phi[0], 0.5f64.tanh(), epsilon = 1e-15);
        assert_relative_eq!(phi[0], 0.46211715726000974, epsilon = 1e-12);
    }

    #[test]
    fn exact_fit_has_zero_loss_and_gradient() {
        let cfg = tiny_config(vec![2], Activation::TanhAll);
        let net = init_params(&cfg, 1, 3).unwrap();
        let xs = DMatrix::from_row_slice(3, 1, &[0.1, 0.5, 0.9]);
        let targets: Vec<f64> = (0..3)
            .map(|i| net.forward_head(&[xs[(i, 0)]]).unwrap())
            .collect();
        let (loss, grads) = net
            .loss_and_gradient(&xs, &targets, 0.0, HeadLoss::SquaredError)
            .unwrap();
        assert!(loss < 1e-28);
        let max_g = grads
            .hidden
            .iter()
            .chain(std::iter::once(&grads.head))
            .flat_map(|l| l.w.iter().chain(l.b.iter()))
            .fold(0.0f64, |m, g| m.max(g.abs()));
        assert!(max_g < 1e-13);
    }

    #[test]
    fn l2_gradient_is_analytic_on_zero_data() {
        let cfg = tiny_config(vec![2], Activation::TanhAll);
        let net = init_params(&cfg, 1, 5).unwrap();
        let xs = DMatrix::from_row_slice(1, 1, &[0.0]);
        let l2 = 0.3;
        let (_, grads) = net
            .loss_and_gradient(&xs, &[0.0], l2, HeadLoss::SquaredError)
            .unwrap();
        // x=0 and target=0: data gradient on first-layer weights vanishes,
        // leaving exactly 2*l2*w there.
        for (g, w) in grads.hidden[0].w.iter().zip(net.hidden[0].w.iter()) {
            assert_relative_eq!(*g, 2.0 * l2 * w, epsilon = 1e-12);
        }
    }

    fn finite_difference_check(activation: Activation, head_loss: HeadLoss, seed: u64) -> f64 {
        let cfg = tiny_config(vec![4, 3], activation);
        let net = init_params(&cfg, 2, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let n = 5;
        let xs = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let targets: Vec<f64> = (0..n)
            .map(|_| match head_loss {
                HeadLoss::SquaredError => rng.random::<f64>() * 2.0 - 1.0,
                HeadLoss::Logistic => f64::from(rng.random::<bool>()),
            })
            .collect();
        let l2 = 1e-3;
        let (_, grads) = net.loss_and_gradient(&xs, &targets, l2, head_loss).unwrap();
        let analytic: Vec<f64> = {
            let g = Gradients {
                hidden: grads.hidden,
                head: grads.head,
            };
            let mut v = Vec::new();
            for l in g.hidden.iter().chain(std::iter::once(&g.head)) {
                v.extend_from_slice(l.w.as_slice());
                v.extend_from_slice(l.b.as_slice());
            }
            v
        };
        let base = net.flat_params();
        let mut worst: f64 = 0.0;
        let h = 1e-5;
        for i in 0..base.len() {
            let mut plus = net.clone();
            let mut p = base.clone();
            p[i] += h;
            plus.set_flat_params(&p);
            let (lp, _) = plus.loss_and_gradient(&xs, &targets, l2, head_loss).unwrap();
            let mut minus = net.clone();
            p[i] -= 2.0 * h;
            minus.set_flat_params(&p);
            let (lm, _) = minus.loss_and_gradient(&xs, &targets, l2, head_loss).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-8);
            worst = worst.max((analytic[i] - fd).abs() / denom);
        }
        worst
    }

    #[test]
    fn backprop_matches_central_differences() {
        for (i, act) in [Activation::TanhAll, Activation::ReluThenTanh].iter().enumerate() {
            let worst = finite_difference_check(*act, HeadLoss::SquaredError, 11 + i as u64);
            assert!(worst < 1e-6, "relative error {worst} for {act:?}");
        }
        let worst = finite_difference_check(Activation::TanhAll, HeadLoss::Logistic, 23);
        assert!(worst < 1e-6, "logistic head relative error {worst}");
    }

    #[test]
    fn momentum_matches_hand_stepped_oracle_on_quadratic() {
        // minimize f(w) = (w - 3)^2 from w = 0
        let (lr, m) = (0.1, 0.9);
        let mut w = [0.0];
        let mut v = [0.0];
        let (mut w_ref, mut v_ref) = (0.0f64, 0.0f64);
        for _ in 0..25 {
            let g = [2.0 * (w[0] - 3.0)];
            momentum_step(&mut w, &mut v, &g, lr, m);
            let g_ref = 2.0 * (w_ref - 3.0);
            v_ref = m * v_ref - lr * g_ref;
            w_ref += v_ref;
            assert_relative_eq!(w[0], w_ref, epsilon = 1e-15);
            assert_relative_eq!(v[0], v_ref, epsilon = 1e-15);
        }
    }

    #[test]
    fn trains_a_line_to_small_mse() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 49.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] - 1.0).collect();
        let cfg = NetworkConfig::default();
        let fit = train_map(&cfg, &xs, &ys, 0).unwrap();
        assert!(fit.final_loss < 1e-3, "training MSE {}", fit.final_loss);
    }

    #[test]
    fn single_observation_is_fit_exactly() {
        let cfg = NetworkConfig::default();
        let fit = train_map(&cfg, &[vec![0.4, 0.6]], &[0.37], 1).unwrap();
        let out = fit.net.forward_head(&[0.4, 0.6]).unwrap();
        assert!((out - 0.37).abs() < 1e-4, "head output {out}");
    }

    #[test]
    fn training_is_deterministic() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x[0] * 6.0).sin()).collect();
        let cfg = tiny_config(vec![10, 10], Activation::TanhAll);
        let a = train_map(&cfg, &xs, &ys, 9).unwrap();
        let b = train_map(&cfg, &xs, &ys, 9).unwrap();
        assert_eq!(a.net.flat_params(), b.net.flat_params());
    }
}
