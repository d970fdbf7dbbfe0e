//! Dense networks with hand-written reverse-mode gradients, categorical
//! distributions, and Adam.
//!
//! Batches are row-major `B x features` matrices; a layer maps
//! `y = act(x W^T + b)` with `W` stored `out x in`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: &mut Array2<f64>) {
        if self == Activation::Relu {
            x.mapv_inplace(|v| v.max(0.0));
        }
    }

    fn apply_vec(self, x: &mut Array1<f64>) {
        if self == Activation::Relu {
            x.mapv_inplace(|v| v.max(0.0));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &Dense) -> Self {
        Self {
            w: Array2::zeros(layer.w.raw_dim()),
            b: Array1::zeros(layer.b.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &DenseGrad) {
        self.w += &other.w;
        self.b += &other.b;
    }

    pub fn sum_sq(&self) -> f64 {
        self.w.iter().chain(self.b.iter()).map(|g| g * g).sum()
    }
}

impl Dense {
    /// Orthogonal weights scaled by `gain`, zero bias.
    pub fn orthogonal<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, act: Activation, rng: &mut R) -> Self {
        let (rows, cols) = (outputs.max(inputs), outputs.min(inputs));
        let a = DMatrix::<f64>::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
        let qr = a.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..cols {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let w = if outputs >= inputs {
            Array2::from_shape_fn((outputs, inputs), |(i, j)| gain * q[(i, j)])
        } else {
            Array2::from_shape_fn((outputs, inputs), |(i, j)| gain * q[(j, i)])
        };
        Self {
            w,
            b: Array1::zeros(outputs),
            act,
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// Returns `(pre_activation, output)`.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut pre = x.dot(&self.w.t());
        pre += &self.b;
        let mut out = pre.clone();
        self.act.apply(&mut out);
        (pre, out)
    }

    pub fn forward_one(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut y = self.w.dot(&x);
        y += &self.b;
        self.act.apply_vec(&mut y);
        y
    }

    /// Gradients given the layer input, its cached pre-activation and the
    /// gradient w.r.t. the output. The input gradient is skipped when
    /// `want_input_grad` is false.
    pub fn backward(
        &self,
        input: &Array2<f64>,
        pre: &Array2<f64>,
        mut d_out: Array2<f64>,
        want_input_grad: bool,
    ) -> (DenseGrad, Option<Array2<f64>>) {
        if self.act == Activation::Relu {
            d_out.zip_mut_with(pre, |g, &p| {
                if p <= 0.0 {
                    *g = 0.0;
                }
            });
        }
        let grad = DenseGrad {
            w: d_out.t().dot(input),
            b: d_out.sum_axis(Axis(0)),
        };
        let d_in = want_input_grad.then(|| d_out.dot(&self.w));
        (grad, d_in)
    }
}

/// Values cached by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpTape {
    inputs: Vec<Array2<f64>>,
    pres: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Hidden layers get ReLU and `hidden_gain`; the last layer uses
    /// `out_act` and `out_gain`.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden_gain: f64,
        out_gain: f64,
        out_act: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                if i == last {
                    Dense::orthogonal(w[0], w[1], out_gain, out_act, rng)
                } else {
                    Dense::orthogonal(w[0], w[1], hidden_gain, Activation::Relu, rng)
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn forward(&self, x: Array2<f64>) -> Result<MlpTape> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for layer in &self.layers {
            let (pre, out) = layer.forward(&h);
            inputs.push(h);
            pres.push(pre);
            h = out;
        }
        Ok(MlpTape {
            inputs,
            pres,
            output: h,
        })
    }

    pub fn forward_one(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut h = self.layers[0].forward_one(x);
        for layer in &self.layers[1..] {
            h = layer.forward_one(h.view());
        }
        Ok(h)
    }

    pub fn backward(&self, tape: &MlpTape, d_out: Array2<f64>, want_input_grad: bool) -> (Vec<DenseGrad>, Option<Array2<f64>>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = d_out;
        let mut d_in = None;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let need = i > 0 || want_input_grad;
            let (g, dx) = layer.backward(&tape.inputs[i], &tape.pres[i], d, need);
            grads.push(g);
            match dx {
                Some(dx) if i > 0 => d = dx,
                dx => {
                    d_in = dx;
                    break;
                }
            }
        }
        grads.reverse();
        (grads, d_in)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Categorical distribution over a head's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Self {
        let log_probs = log_softmax(logits);
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self { probs, log_probs }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left a sliver above the cumulative sum.
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn mode(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn log_prob(&self, index: usize) -> f64 {
        self.log_probs[index]
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, l)| if *p > 0.0 { p * l } else { 0.0 })
            .sum::<f64>()
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm gradient clip applied before the moment update.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: Some(0.5),
        }
    }
}

/// Adam state for an ordered list of layers.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<DenseGrad>,
    v: Vec<DenseGrad>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Scale applied to the gradient by clipping (1 when inactive).
    pub clip_scale: f64,
}

impl Adam {
    pub fn new<'a>(layers: impl IntoIterator<Item = &'a Dense>, cfg: AdamConfig) -> Self {
        let m: Vec<DenseGrad> = layers.into_iter().map(DenseGrad::zeros_like).collect();
        Self {
            cfg,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn apply(&mut self, layers: &mut [&mut Dense], grads: &[DenseGrad]) -> Result<StepStats> {
        if layers.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("optimizer, layer and gradient counts differ".into()));
        }
        let sum_sq: f64 = grads.iter().map(DenseGrad::sum_sq).sum();
        if !sum_sq.is_finite() {
            return Err(Error::Training(format!(
                "non-finite gradient at optimizer step {}",
                self.step + 1
            )));
        }
        let grad_norm = sum_sq.sqrt();
        let clip_scale = match self.cfg.max_grad_norm {
            Some(max) if grad_norm > max => max / grad_norm,
            _ => 1.0,
        };
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            ..
        } = self.cfg;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            let g = g * clip_scale;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, g), m), v) in layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut layer.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(StepStats { grad_norm, clip_scale })
    }
}

/// Flattens parameters layer by layer (weights row-major, then bias).
pub fn flatten_params<'a>(layers: impl IntoIterator<Item = &'a Dense>) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.w.iter());
        out.extend(l.b.iter());
    }
    out
}

/// Inverse of [`flatten_params`]; returns the number of values consumed.
pub fn load_params<'a>(layers: impl IntoIterator<Item = &'a mut Dense>, values: &[f64]) -> Result<usize> {
    let mut pos = 0;
    for l in layers {
        let need = l.num_params();
        if pos + need > values.len() {
            return Err(Error::Shape("parameter vector too short".into()));
        }
        for (p, v) in l.w.iter_mut().chain(l.b.iter_mut()).zip(&values[pos..pos + need]) {
            *p = *v;
        }
        pos += need;
    }
    Ok(pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input() {
        let layer = Dense {
            w: Array2::eye(3),
            b: Array1::zeros(3),
            act: Activation::Identity,
        };
        let x = ndarray::array![[1.0, -2.0, 3.0]];
        assert_eq!(layer.forward(&x).1, x);
    }

    #[test]
    fn relu_blocks_gradient_of_negative_unit() {
        let layer = Dense {
            w: ndarray::array![[1.0], [-1.0]],
            b: Array1::zeros(2),
            act: Activation::Relu,
        };
        let x = ndarray::array![[2.0]];
        let (pre, _) = layer.forward(&x);
        let (g, dx) = layer.backward(&x, &pre, ndarray::array![[1.0, 1.0]], true);
        assert_eq!(g.w, ndarray::array![[2.0], [0.0]]);
        assert_eq!(dx.unwrap(), ndarray::array![[1.0]]);
    }

    #[test]
    fn orthogonal_init_has_orthonormal_rows_or_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tall = Dense::orthogonal(4, 9, 1.0, Activation::Relu, &mut rng);
        let gram = tall.w.t().dot(&tall.w);
        let wide = Dense::orthogonal(9, 4, 2.0, Activation::Relu, &mut rng);
        let gram2 = wide.w.dot(&wide.w.t());
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - e).abs() < 1e-10);
                assert!((gram2[[i, j]] - 4.0 * e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_logits() {
        let c = Categorical::from_logits(&[0.3; 4]);
        for p in &c.probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert!((c.entropy() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let c = Categorical::from_logits(&[1000.0, 0.0]);
        assert!((c.probs[0] - 1.0).abs() < 1e-15);
        assert!(c.probs[1] < 1e-300);
        assert!(c.log_prob(1).is_finite());
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    fn scalar_layer(w: f64) -> Dense {
        Dense {
            w: Array2::from_elem((1, 1), w),
            b: Array1::zeros(1),
            act: Activation::Identity,
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut layer = scalar_layer(0.7);
        let mut opt = Adam::new([&layer], AdamConfig::default());
        let g = DenseGrad::zeros_like(&layer);
        opt.apply(&mut [&mut layer], &[g]).unwrap();
        assert_eq!(layer.w[[0, 0]], 0.7);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut layer = scalar_layer(0.0);
        let cfg = AdamConfig {
            lr: 1e-3,
            max_grad_norm: None,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new([&layer], cfg);
        let mut g = DenseGrad::zeros_like(&layer);
        g.w[[0, 0]] = 1.0;
        opt.apply(&mut [&mut layer], &[g]).unwrap();
        assert!((layer.w[[0, 0]] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn adam_clips_global_norm() {
        let mut layer = Dense {
            w: Array2::zeros((1, 2)),
            b: Array1::zeros(1),
            act: Activation::Identity,
        };
        let mut opt = Adam::new([&layer], AdamConfig::default());
        let g = DenseGrad {
            w: ndarray::array![[3.0, 4.0]],
            b: Array1::zeros(1),
        };
        let stats = opt.apply(&mut [&mut layer], std::slice::from_ref(&g)).unwrap();
        assert!((stats.grad_norm - 5.0).abs() < 1e-12);
        assert!((stats.clip_scale * stats.grad_norm - 0.5).abs() < 1e-9);
        let mut bad = g;
        bad.b[0] = f64::NAN;
        assert!(matches!(opt.apply(&mut [&mut layer], &[bad]), Err(Error::Training(_))));
    }

    #[test]
    fn params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[3, 5, 2], 2f64.sqrt(), 1.0, Activation::Identity, &mut rng);
        let flat = flatten_params(&net.layers);
        let mut other = Mlp::new(&[3, 5, 2], 1.0, 1.0, Activation::Identity, &mut rng);
        assert_eq!(load_params(other.layers.iter_mut(), &flat).unwrap(), flat.len());
        assert_eq!(other, net);
    }
}
