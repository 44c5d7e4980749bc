//! Small dense networks with hand-written reverse-mode gradients.
//!
//! Every network is an [`Mlp`]: tanh on hidden layers, identity on the output.
//! A layer stores its weight as a `(fan_in, fan_out)` matrix so a batch of
//! row vectors is propagated as `x · W + b`.
//!
//! Flat parameter order (used by genomes, checkpoints and the optimizer):
//! layer by layer, the weight entries in row-major `(fan_in, fan_out)` order,
//! then the bias.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer activations recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `inputs[l]` is the input of layer `l` (so `inputs[0]` is the batch).
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Gradient with the same shape as an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<Dense>,
}

impl MlpGrad {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn add_assign(&mut self, other: &MlpGrad) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn check_finite(&self, tensor: &'static str) -> Result<()> {
        crate::error::check_finite(tensor, self.params().copied())
    }
}

impl Mlp {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(widths);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weight.nrows() as f64).sqrt();
            for p in layer.params_mut() {
                *p = rng.random_range(-bound..=bound);
            }
        }
        net
    }

    pub fn zeros(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "an Mlp needs input and output widths");
        Self {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weight.nrows()];
        w.extend(self.layers.iter().map(|l| l.weight.ncols()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    /// `sum (in + 1) * out` over layers.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::params_mut)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(Error::Dimension {
                what: "flat parameter vector",
                expected,
                got: flat.len(),
            });
        }
        for (p, v) in self.params_mut().zip(flat) {
            *p = *v;
        }
        Ok(())
    }

    /// Single-input forward pass.
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let mut act = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = layer.bias.to_vec();
            for (xi, row) in act.iter().zip(layer.weight.rows()) {
                for (o, w) in out.iter_mut().zip(row.iter()) {
                    *o += xi * w;
                }
            }
            if l != last {
                out.iter_mut().for_each(|o| *o = hidden_tanh(*o));
            }
            act = out;
        }
        act
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).output
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> MlpCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = act.dot(&layer.weight);
            z += &layer.bias;
            if l != last {
                z.mapv_inplace(hidden_tanh);
            }
            inputs.push(act);
            act = z;
        }
        MlpCache { inputs, output: act }
    }

    /// Back-propagates `grad_out = dL/d(output)` through a cached forward pass.
    /// Returns the parameter gradient and `dL/d(input)`.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> (MlpGrad, Array2<f64>) {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[l];
            grads.push(Dense {
                weight: input.t().dot(&g),
                bias: g.sum_axis(Axis(0)),
            });
            let mut g_in = g.dot(&layer.weight.t());
            if l > 0 {
                // input of layer l is tanh output of layer l-1
                g_in.zip_mut_with(input, |gi, a| *gi *= 1.0 - a * a);
            }
            g = g_in;
        }
        grads.reverse();
        (MlpGrad { layers: grads }, g)
    }

    /// `self <- (1 - tau) * self + tau * source`, coordinate-wise.
    pub fn blend_from(&mut self, source: &Mlp, tau: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            dst.weight.zip_mut_with(&src.weight, |p, &s| *p = (1.0 - tau) * *p + tau * s);
            dst.bias.zip_mut_with(&src.bias, |p, &s| *p = (1.0 - tau) * *p + tau * s);
        }
    }
}

/// Hidden-layer activation. libm's `tanh` goes through `expm1` and dominated
/// update time; one `exp` is enough away from zero, and a short series covers
/// the cancellation region near it.
#[inline]
pub fn hidden_tanh(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 / 32.0 {
        let x2 = x * x;
        return x * (1.0 - x2 * (1.0 / 3.0 - x2 * (2.0 / 15.0 - x2 * (17.0 / 315.0))));
    }
    let e = (2.0 * a).exp();
    (1.0 - 2.0 / (e + 1.0)).copysign(x)
}

/// Numerically stable `log(1 - tanh(u)^2)`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Tanh-squashed diagonal Gaussian policy.
///
/// The output layer has `2 * act_dim` units: the first `act_dim` are the mean
/// and the rest the (unclamped) log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub mlp: Mlp,
    pub act_dim: usize,
}

/// A flat parameter vector of a [`PolicyNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Genome(pub Vec<f64>);

impl Genome {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Batched policy outputs with everything needed for the backward pass.
#[derive(Debug, Clone)]
pub struct PolicyBatch {
    pub cache: MlpCache,
    pub mean: Array2<f64>,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Array2<f64>,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(&Self::widths_for(obs_dim, hidden, act_dim), rng),
            act_dim,
        }
    }

    pub fn zeros(obs_dim: usize, hidden: &[usize], act_dim: usize) -> Self {
        Self {
            mlp: Mlp::zeros(&Self::widths_for(obs_dim, hidden, act_dim)),
            act_dim,
        }
    }

    fn widths_for(obs_dim: usize, hidden: &[usize], act_dim: usize) -> Vec<usize> {
        let mut w = vec![obs_dim];
        w.extend_from_slice(hidden);
        w.push(2 * act_dim);
        w
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if obs.len() != self.obs_dim() {
            return Err(Error::Dimension {
                what: "observation",
                expected: self.obs_dim(),
                got: obs.len(),
            });
        }
        let out = self.mlp.forward_one(obs);
        let (mean, raw) = out.split_at(self.act_dim);
        let log_std = raw.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Ok((mean.to_vec(), log_std))
    }

    /// Deterministic action `tanh(mean)`.
    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        let out = self.mlp.forward_one(obs);
        out[..self.act_dim].iter().map(|m| m.tanh()).collect()
    }

    /// Reparameterized sample `tanh(mean + exp(log_std) * noise)` and its log-density.
    pub fn sample_action(&self, obs: &[f64], noise: &[f64]) -> Result<(Vec<f64>, f64)> {
        if noise.len() != self.act_dim {
            return Err(Error::Dimension {
                what: "noise",
                expected: self.act_dim,
                got: noise.len(),
            });
        }
        let (mean, log_std) = self.forward(obs)?;
        let mut action = Vec::with_capacity(self.act_dim);
        let mut log_prob = 0.0;
        for i in 0..self.act_dim {
            let u = mean[i] + log_std[i].exp() * noise[i];
            action.push(u.tanh());
            log_prob += -0.5 * noise[i] * noise[i] - log_std[i] - HALF_LN_2PI - log_one_minus_tanh_sq(u);
        }
        Ok((action, log_prob))
    }

    pub fn forward_batch(&self, obs: &Array2<f64>) -> PolicyBatch {
        let cache = self.mlp.forward_cached(obs);
        let a = self.act_dim;
        let mean = cache.output.slice(ndarray::s![.., ..a]).to_owned();
        let log_std = cache
            .output
            .slice(ndarray::s![.., a..])
            .mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        PolicyBatch {
            cache,
            mean,
            log_std,
        }
    }

    /// Back-propagates gradients w.r.t. mean and clamped log-std.
    /// Log-std entries pinned at a clamp bound receive no gradient.
    pub fn backward(&self, batch: &PolicyBatch, d_mean: &Array2<f64>, d_log_std: &Array2<f64>) -> MlpGrad {
        let a = self.act_dim;
        let rows = d_mean.nrows();
        let mut g = Array2::zeros((rows, 2 * a));
        g.slice_mut(ndarray::s![.., ..a]).assign(d_mean);
        let raw = batch.cache.output.slice(ndarray::s![.., a..]);
        let mut g_ls = g.slice_mut(ndarray::s![.., a..]);
        ndarray::Zip::from(&mut g_ls)
            .and(d_log_std)
            .and(&raw)
            .for_each(|o, &d, &r| {
                *o = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&r) { d } else { 0.0 };
            });
        self.mlp.backward(&batch.cache, &g).0
    }

    pub fn flatten(&self) -> Genome {
        Genome(self.mlp.to_flat())
    }

    /// Copy of this network with parameters taken from `genome`.
    pub fn unflatten(&self, genome: &Genome) -> Result<PolicyNet> {
        let mut net = self.clone();
        net.load_genome(genome)?;
        Ok(net)
    }

    pub fn load_genome(&mut self, genome: &Genome) -> Result<()> {
        if genome.len() != self.mlp.param_count() {
            return Err(Error::Dimension {
                what: "genome",
                expected: self.mlp.param_count(),
                got: genome.len(),
            });
        }
        self.mlp.set_flat(genome.as_slice())
    }
}

/// State-action value network.
#[derive(Debug, Clone, PartialEq)]
pub struct QNet {
    pub mlp: Mlp,
}

impl QNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut w = vec![obs_dim + act_dim];
        w.extend_from_slice(hidden);
        w.push(1);
        Self { mlp: Mlp::new(&w, rng) }
    }

    pub fn value(&self, obs: &[f64], action: &[f64]) -> f64 {
        let mut x = obs.to_vec();
        x.extend_from_slice(action);
        self.mlp.forward_one(&x)[0]
    }
}

/// Concatenates observations and actions column-wise.
pub fn concat_columns(obs: &Array2<f64>, actions: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[obs.view(), actions.view()]).expect("equal row counts")
}

/// Per-parameter adaptive step without momentum: the gradient is divided by
/// the root of a bias-corrected running mean of its square.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsScaler {
    pub lr: f64,
    pub beta: f64,
    pub eps: f64,
    pub second_moment: Vec<f64>,
    pub steps: u64,
}

impl RmsScaler {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Self {
            lr,
            beta: 0.999,
            eps: 1e-8,
            second_moment: vec![0.0; param_count],
            steps: 0,
        }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, net: &mut Mlp, grad: &MlpGrad) {
        self.steps += 1;
        let correction = 1.0 - self.beta.powi(self.steps.min(i32::MAX as u64) as i32);
        let (beta, lr, eps) = (self.beta, self.lr, self.eps);
        let mut moments = self.second_moment.iter_mut();
        for (layer, g_layer) in net.layers.iter_mut().zip(&grad.layers) {
            let pairs = layer
                .weight
                .iter_mut()
                .zip(g_layer.weight.iter())
                .chain(layer.bias.iter_mut().zip(g_layer.bias.iter()));
            for ((p, g), v) in pairs.zip(&mut moments) {
                *v = beta * *v + (1.0 - beta) * g * g;
                *p -= lr * g / ((*v / correction).sqrt() + eps);
            }
        }
    }
}
