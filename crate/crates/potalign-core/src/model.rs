//! The trainable head: a dense projection with length normalization
//! feeding a dense softmax classifier. Forward, cross-entropy, an
//! analytic backward pass for the full training objective (with the
//! coupling and admissibility weights held fixed), and Adam updates.
//! Inputs are precomputed embeddings; the extractor that produced them
//! is frozen and never represented here.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::mat::Mat;
use crate::math;
use crate::ot::{Coupling, EPS_STAB};
use crate::pot::WeightMatrix;
use crate::{Error, Result, RngState};

/// Guard inside the length-normalization square root; a zero activation
/// row normalizes to the zero vector instead of dividing by zero.
pub const EPS_NORM: f64 = 1e-12;

/// Probabilities are clipped here before the log in the cross-entropy.
pub const CE_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptModel {
    w_proj: Mat,      // k x d
    b_proj: Vec<f64>, // k
    w_cls: Mat,       // C x k
    b_cls: Vec<f64>,  // C
}

impl AdaptModel {
    /// Xavier-style init: zero-mean normal with sd `sqrt(2/(fan_in+fan_out))`,
    /// zero biases, fully determined by the seed.
    pub fn init(d: usize, k: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if d < 1 || k < 2 || n_classes < 2 {
            return Err(Error::InvalidParam {
                context: "model dims require d >= 1, k >= 2, C >= 2",
            });
        }
        let mut rng = RngState::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize, sd: f64| {
            let mut m = Mat::zeros(rows, cols);
            for w in m.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *w = sd * g;
            }
            m
        };
        let w_proj = draw(k, d, math::sqrt(2.0 / (d + k) as f64));
        let w_cls = draw(n_classes, k, math::sqrt(2.0 / (k + n_classes) as f64));
        Ok(AdaptModel {
            w_proj,
            b_proj: vec![0.0; k],
            w_cls,
            b_cls: vec![0.0; n_classes],
        })
    }

    pub fn from_parts(w_proj: Mat, b_proj: Vec<f64>, w_cls: Mat, b_cls: Vec<f64>) -> Result<Self> {
        if w_proj.n_rows() != b_proj.len() {
            return Err(Error::DimMismatch {
                context: "projection bias",
                expected: w_proj.n_rows(),
                found: b_proj.len(),
            });
        }
        if w_cls.n_rows() != b_cls.len() {
            return Err(Error::DimMismatch {
                context: "classifier bias",
                expected: w_cls.n_rows(),
                found: b_cls.len(),
            });
        }
        if w_cls.n_cols() != w_proj.n_rows() {
            return Err(Error::DimMismatch {
                context: "classifier input",
                expected: w_proj.n_rows(),
                found: w_cls.n_cols(),
            });
        }
        let model = AdaptModel {
            w_proj,
            b_proj,
            w_cls,
            b_cls,
        };
        if !model.is_finite() {
            return Err(Error::InvalidParam {
                context: "model parameters must be finite",
            });
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.w_proj.n_cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_proj.n_rows()
    }

    pub fn n_classes(&self) -> usize {
        self.w_cls.n_rows()
    }

    pub fn w_proj(&self) -> &Mat {
        &self.w_proj
    }

    pub fn b_proj(&self) -> &[f64] {
        &self.b_proj
    }

    pub fn w_cls(&self) -> &Mat {
        &self.w_cls
    }

    pub fn b_cls(&self) -> &[f64] {
        &self.b_cls
    }

    pub fn is_finite(&self) -> bool {
        self.w_proj.is_finite()
            && self.w_cls.is_finite()
            && self.b_proj.iter().all(|x| x.is_finite())
            && self.b_cls.iter().all(|x| x.is_finite())
    }

    /// Latent features: `z = (W x + b) / sqrt(||W x + b||^2 + eps)`.
    pub fn project(&self, x: &Mat) -> Result<Mat> {
        let (a, r) = self.pre_normalize(x)?;
        Ok(normalize_rows(&a, &r))
    }

    /// Class posteriors: stabilized row-wise softmax of `W z + b`.
    pub fn classify(&self, z: &Mat) -> Result<Mat> {
        if z.n_cols() != self.latent_dim() {
            return Err(Error::DimMismatch {
                context: "classify input",
                expected: self.latent_dim(),
                found: z.n_cols(),
            });
        }
        let logits = affine(z, &self.w_cls, &self.b_cls);
        Ok(softmax_rows(&logits))
    }

    /// Full forward pass with every intermediate the backward pass needs.
    pub fn forward(&self, x: &Mat) -> Result<ForwardCache> {
        let (a, r) = self.pre_normalize(x)?;
        let z = normalize_rows(&a, &r);
        let logits = affine(&z, &self.w_cls, &self.b_cls);
        let probs = softmax_rows(&logits);
        Ok(ForwardCache {
            x: x.clone(),
            a,
            r,
            z,
            probs,
        })
    }

    fn pre_normalize(&self, x: &Mat) -> Result<(Mat, Vec<f64>)> {
        if x.n_cols() != self.input_dim() {
            return Err(Error::DimMismatch {
                context: "project input",
                expected: self.input_dim(),
                found: x.n_cols(),
            });
        }
        if !x.is_finite() {
            return Err(Error::InvalidParam {
                context: "project input must be finite",
            });
        }
        let a = affine(x, &self.w_proj, &self.b_proj);
        let mut r = vec![0.0; a.n_rows()];
        for i in 0..a.n_rows() {
            let mut sq = 0.0;
            for &v in a.row(i) {
                sq += v * v;
            }
            r[i] = math::sqrt(sq + EPS_NORM);
        }
        Ok((a, r))
    }
}

/// Intermediates of one batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub x: Mat,
    pub a: Mat,
    /// Row norms `sqrt(||a_i||^2 + eps)`.
    pub r: Vec<f64>,
    pub z: Mat,
    pub probs: Mat,
}

/// `rows(out) = W * rows(x) + b`, i.e. `out = x W^T + b`.
fn affine(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    let n = x.n_rows();
    let out_dim = w.n_rows();
    let mut out = Mat::zeros(n, out_dim);
    for i in 0..n {
        let xi = x.row(i);
        let oi = out.row_mut(i);
        for (o, (wr, &bias)) in oi.iter_mut().zip((0..out_dim).map(|r| (w.row(r), &b[r]))) {
            let mut s = bias;
            for (wv, xv) in wr.iter().zip(xi) {
                s += wv * xv;
            }
            *o = s;
        }
    }
    out
}

fn normalize_rows(a: &Mat, r: &[f64]) -> Mat {
    let mut z = a.clone();
    for i in 0..z.n_rows() {
        let inv = 1.0 / r[i];
        for v in z.row_mut(i) {
            *v *= inv;
        }
    }
    z
}

fn softmax_rows(logits: &Mat) -> Mat {
    let mut p = logits.clone();
    for i in 0..p.n_rows() {
        let row = p.row_mut(i);
        let mut max = f64::NEG_INFINITY;
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        let inv = 1.0 / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    p
}

/// Mean over the batch of `-sum_j y_ij ln(max(p_ij, clip))`.
pub fn cross_entropy(y_true: &Mat, y_pred: &Mat) -> Result<f64> {
    if y_true.shape() != y_pred.shape() {
        return Err(Error::DimMismatch {
            context: "cross_entropy",
            expected: y_true.n_rows() * y_true.n_cols(),
            found: y_pred.n_rows() * y_pred.n_cols(),
        });
    }
    if y_true.n_rows() == 0 {
        return Err(Error::InvalidParam {
            context: "cross_entropy requires a non-empty batch",
        });
    }
    let mut total = 0.0;
    for (y, p) in y_true.iter().zip(y_pred.iter()) {
        if *y != 0.0 {
            let clipped = if *p > CE_CLIP { *p } else { CE_CLIP };
            total -= y * math::ln(clipped);
        }
    }
    Ok(total / y_true.n_rows() as f64)
}

/// One-hot encode labels into an `n x n_classes` matrix.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Mat> {
    let mut m = Mat::zeros(labels.len(), n_classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::LabelOutOfRange {
                label: l,
                n_classes,
            });
        }
        m[(i, l)] = 1.0;
    }
    Ok(m)
}

/// Gradients for the four parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_proj: Mat,
    pub b_proj: Vec<f64>,
    pub w_cls: Mat,
    pub b_cls: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &AdaptModel) -> Self {
        Gradients {
            w_proj: Mat::zeros(model.latent_dim(), model.input_dim()),
            b_proj: vec![0.0; model.latent_dim()],
            w_cls: Mat::zeros(model.n_classes(), model.latent_dim()),
            b_cls: vec![0.0; model.n_classes()],
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for &v in self
            .w_proj
            .iter()
            .chain(self.w_cls.iter())
            .chain(self.b_proj.iter())
            .chain(self.b_cls.iter())
        {
            if v.abs() > m {
                m = v.abs();
            }
        }
        m
    }
}

/// What to differentiate: the classification term weight, the adaptation
/// term weight and mixing coefficients, and the frozen coupling /
/// admissibility weights. `gamma` and `weights` receive no gradient; the
/// target posteriors inside the label distance do.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    pub ce_weight: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Option<&'a Coupling>,
    pub pot_weights: Option<&'a WeightMatrix>,
}

impl<'a> LossSpec<'a> {
    pub fn ce_only() -> Self {
        LossSpec {
            ce_weight: 1.0,
            lambda: 0.0,
            alpha: 0.0,
            beta: 0.0,
            gamma: None,
            pot_weights: None,
        }
    }
}

/// Analytic gradient of
/// `ce_weight * CE(source) + lambda * sum_ij C_ij(theta) gamma_ij w_ij`
/// with `C_ij = alpha*dist(z_i^s, z_j^t) + beta*dist(y_i^s, yhat_j^t)`.
pub fn backward(
    model: &AdaptModel,
    source: &ForwardCache,
    y_source: &Mat,
    target: Option<&ForwardCache>,
    spec: &LossSpec<'_>,
) -> Result<Gradients> {
    if y_source.n_rows() != source.x.n_rows() || y_source.n_cols() != model.n_classes() {
        return Err(Error::DimMismatch {
            context: "backward labels",
            expected: source.x.n_rows() * model.n_classes(),
            found: y_source.n_rows() * y_source.n_cols(),
        });
    }
    let n_s = source.x.n_rows();
    let mut grads = Gradients::zeros_like(model);

    // d loss / d probs for the source batch: cross-entropy only.
    let mut d_probs_s = Mat::zeros(n_s, model.n_classes());
    if spec.ce_weight != 0.0 {
        let scale = spec.ce_weight / n_s as f64;
        for i in 0..n_s {
            for j in 0..model.n_classes() {
                let y = y_source[(i, j)];
                if y != 0.0 {
                    let p = source.probs[(i, j)];
                    if p > CE_CLIP {
                        d_probs_s[(i, j)] -= scale * y / p;
                    }
                    // Below the clip the loss is constant in p.
                }
            }
        }
    }

    let use_adapt = spec.lambda > 0.0 && spec.gamma.is_some() && target.is_some();
    let mut d_z_s = Mat::zeros(n_s, model.latent_dim());

    if use_adapt {
        let tgt = target.unwrap();
        let gamma = spec.gamma.unwrap();
        let n_t = tgt.x.n_rows();
        if gamma.plan().shape() != (n_s, n_t) {
            return Err(Error::DimMismatch {
                context: "backward coupling",
                expected: n_s * n_t,
                found: gamma.plan().n_rows() * gamma.plan().n_cols(),
            });
        }
        if let Some(w) = spec.pot_weights {
            if w.shape() != (n_s, n_t) {
                return Err(Error::DimMismatch {
                    context: "backward pot weights",
                    expected: n_s * n_t,
                    found: w.weights().n_rows() * w.weights().n_cols(),
                });
            }
        }

        let mut d_z_t = Mat::zeros(n_t, model.latent_dim());
        let mut d_probs_t = Mat::zeros(n_t, model.n_classes());

        for i in 0..n_s {
            let zs = source.z.row(i);
            let ys = y_source.row(i);
            for j in 0..n_t {
                let mut s = spec.lambda * gamma.plan()[(i, j)];
                if let Some(w) = spec.pot_weights {
                    s *= w.weights()[(i, j)];
                }
                if s == 0.0 {
                    continue;
                }
                let zt = tgt.z.row(j);
                let yt = tgt.probs.row(j);

                if spec.alpha != 0.0 {
                    let mut sq = 0.0;
                    for k in 0..zs.len() {
                        let d = zs[k] - zt[k];
                        sq += d * d;
                    }
                    let dist = math::sqrt(sq + EPS_STAB);
                    let coef = s * spec.alpha / dist;
                    for k in 0..zs.len() {
                        let d = zs[k] - zt[k];
                        d_z_s[(i, k)] += coef * d;
                        d_z_t[(j, k)] -= coef * d;
                    }
                }
                if spec.beta != 0.0 {
                    let mut sq = 0.0;
                    for k in 0..yt.len() {
                        let d = yt[k] - ys[k];
                        sq += d * d;
                    }
                    let dist = math::sqrt(sq + EPS_STAB);
                    let coef = s * spec.beta / dist;
                    for k in 0..yt.len() {
                        d_probs_t[(j, k)] += coef * (yt[k] - ys[k]);
                    }
                }
            }
        }

        accumulate_batch(model, tgt, &d_probs_t, &d_z_t, &mut grads);
    }

    accumulate_batch(model, source, &d_probs_s, &d_z_s, &mut grads);
    Ok(grads)
}

/// Push `d_probs` (through the softmax and classifier) and `d_z_extra`
/// (direct latent gradient) down to the four parameter tensors.
fn accumulate_batch(
    model: &AdaptModel,
    cache: &ForwardCache,
    d_probs: &Mat,
    d_z_extra: &Mat,
    grads: &mut Gradients,
) {
    let n = cache.x.n_rows();
    let k = model.latent_dim();
    let c = model.n_classes();

    // Softmax Jacobian: dl = p .* (dp - <dp, p>).
    let mut d_logits = Mat::zeros(n, c);
    for i in 0..n {
        let p = cache.probs.row(i);
        let dp = d_probs.row(i);
        let mut dot = 0.0;
        for j in 0..c {
            dot += dp[j] * p[j];
        }
        let out = d_logits.row_mut(i);
        for j in 0..c {
            out[j] = p[j] * (dp[j] - dot);
        }
    }

    // Classifier parameters and the latent gradient.
    let mut d_z = d_z_extra.clone();
    for i in 0..n {
        let dl = d_logits.row(i);
        let z = cache.z.row(i);
        for j in 0..c {
            let g = dl[j];
            if g == 0.0 {
                continue;
            }
            grads.b_cls[j] += g;
            let wr = model.w_cls.row(j);
            let w_row = grads.w_cls.row_mut(j);
            let dz = d_z.row_mut(i);
            for t in 0..k {
                w_row[t] += g * z[t];
                dz[t] += g * wr[t];
            }
        }
    }

    // Length normalization: da = dz/r - a (a . dz) / r^3.
    let mut d_a = Mat::zeros(n, k);
    for i in 0..n {
        let a = cache.a.row(i);
        let dz = d_z.row(i);
        let r = cache.r[i];
        let mut dot = 0.0;
        for t in 0..k {
            dot += a[t] * dz[t];
        }
        let inv_r = 1.0 / r;
        let inv_r3 = inv_r * inv_r * inv_r;
        let da = d_a.row_mut(i);
        for t in 0..k {
            da[t] = dz[t] * inv_r - a[t] * dot * inv_r3;
        }
    }

    // Projection parameters.
    for i in 0..n {
        let da = d_a.row(i);
        let x = cache.x.row(i);
        for t in 0..k {
            let g = da[t];
            if g == 0.0 {
                continue;
            }
            grads.b_proj[t] += g;
            let w_row = grads.w_proj.row_mut(t);
            for (w, xv) in w_row.iter_mut().zip(x) {
                *w += g * xv;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second-moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    params: AdamParams,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(model: &AdaptModel, params: AdamParams) -> Self {
        AdamState {
            params,
            t: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn params(&self) -> &AdamParams {
        &self.params
    }
}

/// Bias-corrected Adam update of all four tensors in place.
pub fn adam_step(model: &mut AdaptModel, grads: &Gradients, state: &mut AdamState) {
    state.t += 1;
    let p = state.params;
    let bc1 = 1.0 - math::pow(p.beta1, state.t as f64);
    let bc2 = 1.0 - math::pow(p.beta2, state.t as f64);

    let update = |param: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = p.beta1 * *m + (1.0 - p.beta1) * g;
        *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *param -= p.learning_rate * m_hat / (math::sqrt(v_hat) + p.eps);
    };

    for ((param, &g), (m, v)) in model
        .w_proj
        .iter_mut()
        .zip(grads.w_proj.iter())
        .zip(state.m.w_proj.iter_mut().zip(state.v.w_proj.iter_mut()))
    {
        update(param, g, m, v);
    }
    for ((param, &g), (m, v)) in model
        .b_proj
        .iter_mut()
        .zip(grads.b_proj.iter())
        .zip(state.m.b_proj.iter_mut().zip(state.v.b_proj.iter_mut()))
    {
        update(param, g, m, v);
    }
    for ((param, &g), (m, v)) in model
        .w_cls
        .iter_mut()
        .zip(grads.w_cls.iter())
        .zip(state.m.w_cls.iter_mut().zip(state.v.w_cls.iter_mut()))
    {
        update(param, g, m, v);
    }
    for ((param, &g), (m, v)) in model
        .b_cls
        .iter_mut()
        .zip(grads.b_cls.iter())
        .zip(state.m.b_cls.iter_mut().zip(state.v.b_cls.iter_mut()))
    {
        update(param, g, m, v);
    }
}
