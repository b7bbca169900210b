//! Stable invertible classifier.
//!
//! A stack of equidimensional layers `φ^ℓ = g(W_ℓᵀ φ^{ℓ−1})` with a
//! two-slope leaky-ReLU `g`, followed by a softmax head whose first two
//! columns are the real class logits (the rest are padding outputs). The
//! trunk is a bijection as long as every `W_ℓ` is invertible; training keeps
//! each `W_ℓ` close to orthonormal through a Frobenius penalty
//! `λ · ‖W_ℓᵀW_ℓ − I‖_F` so the map and its inverse stay near 1-Lipschitz.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::dataio::{Label, LabeledSample};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, RngStream};

pub const DEFAULT_SLOPE_POS: f64 = 0.99;
pub const DEFAULT_SLOPE_NEG: f64 = 0.95;
pub const DEFAULT_DEPTH: usize = 4;

/// Head column holding the "no-change" logit.
pub const NO_CHANGE_OUTPUT: usize = 0;
/// Head column holding the "change" logit.
pub const CHANGE_OUTPUT: usize = 1;

const DIVERGENCE_LIMIT: f64 = 1e6;
const SPECTRAL_ITERS: usize = 1000;
const SPECTRAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Matrix,
    pub slope_pos: f64,
    pub slope_neg: f64,
}

impl LayerParams {
    pub fn new(weight: Matrix) -> Self {
        LayerParams {
            weight,
            slope_pos: DEFAULT_SLOPE_POS,
            slope_neg: DEFAULT_SLOPE_NEG,
        }
    }

    #[inline]
    fn activate(&self, u: f64) -> f64 {
        if u >= 0.0 {
            self.slope_pos * u
        } else {
            self.slope_neg * u
        }
    }

    #[inline]
    fn derivative(&self, u: f64) -> f64 {
        if u >= 0.0 {
            self.slope_pos
        } else {
            self.slope_neg
        }
    }

    /// Both slopes are positive, so the sign of the output equals the sign
    /// of the pre-activation and the inverse is exact.
    #[inline]
    fn deactivate(&self, v: f64) -> f64 {
        if v >= 0.0 {
            v / self.slope_pos
        } else {
            v / self.slope_neg
        }
    }
}

/// How `(W_ℓᵀ)⁻¹` is realized when inverting the trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InverseMode {
    /// LU inverse, cached on first use.
    #[default]
    Exact,
    /// `W_ℓ` itself; only accurate when `W_ℓ` is near orthonormal.
    Transpose,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvertibleNet {
    layers: Vec<LayerParams>,
    head: Matrix,
    lambda: f64,
    #[serde(skip)]
    inverse_cache: OnceLock<Vec<std::result::Result<Matrix, f64>>>,
}

impl PartialEq for InvertibleNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.head == other.head && self.lambda == other.lambda
    }
}

/// Per-layer activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `W_ℓᵀ φ^{ℓ−1}` for ℓ = 1..L.
    pub pre: Vec<Vec<f64>>,
    /// `φ^0 = x` through `φ^L = z`.
    pub post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn latent(&self) -> &[f64] {
        self.post.last().expect("trace holds at least the input")
    }

    pub fn into_latent(mut self) -> Vec<f64> {
        self.post.pop().expect("trace holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Matrix>,
    pub head: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 300,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "training needs a positive finite learning rate and at least one epoch".into(),
            ));
        }
        Ok(())
    }
}

impl InvertibleNet {
    /// Builds a net with default slopes and `λ = 1/d`.
    pub fn new(weights: Vec<Matrix>, head: Matrix) -> Result<Self> {
        let d = head.rows();
        if d == 0 {
            return Err(Error::InvalidDimension("network dimension must be >= 1".into()));
        }
        if head.cols() < 2 {
            return Err(Error::Shape("softmax head needs at least two outputs".into()));
        }
        for (i, w) in weights.iter().enumerate() {
            if w.rows() != d || w.cols() != d {
                return Err(Error::Shape(format!(
                    "layer {} is {}x{}, expected {d}x{d}",
                    i + 1,
                    w.rows(),
                    w.cols()
                )));
            }
        }
        Ok(InvertibleNet {
            layers: weights.into_iter().map(LayerParams::new).collect(),
            head,
            lambda: 1.0 / d as f64,
            inverse_cache: OnceLock::new(),
        })
    }

    /// Orthonormal layers and head drawn from QR of Gaussian matrices.
    pub fn random(d: usize, depth: usize, rng: &mut RngStream) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(format!(
                "network dimension must be >= 2 to hold both class outputs, got {d}"
            )));
        }
        let weights = (0..depth)
            .map(|_| linalg::random_orthonormal(d, rng))
            .collect::<Result<Vec<_>>>()?;
        let head = linalg::random_orthonormal(d, rng)?;
        InvertibleNet::new(weights, head)
    }

    pub fn with_slopes(mut self, slope_pos: f64, slope_neg: f64) -> Result<Self> {
        if !(0.0 < slope_neg && slope_neg <= slope_pos && slope_pos < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "slopes must satisfy 0 < neg <= pos < 1, got pos={slope_pos} neg={slope_neg}"
            )));
        }
        for layer in &mut self.layers {
            layer.slope_pos = slope_pos;
            layer.slope_neg = slope_neg;
        }
        self.inverse_cache = OnceLock::new();
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.head.rows()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn head(&self) -> &Matrix {
        &self.head
    }

    /// Mutable access to every trainable matrix: layers first, head last.
    /// Drops the cached inverses.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.inverse_cache = OnceLock::new();
        self.layers
            .iter_mut()
            .map(|l| &mut l.weight)
            .chain(std::iter::once(&mut self.head))
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Shape(format!(
                "vector of length {} for a {}-dimensional network",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_dim(x)?;
        let mut pre = Vec::with_capacity(self.depth());
        let mut post = Vec::with_capacity(self.depth() + 1);
        post.push(x.to_vec());
        for layer in &self.layers {
            let u = layer.weight.tr_mul_vec(post.last().unwrap());
            post.push(u.iter().map(|&v| layer.activate(v)).collect());
            pre.push(u);
        }
        Ok(ForwardTrace { pre, post })
    }

    /// `z = f(x)` without keeping intermediate activations.
    pub fn latent(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut phi = x.to_vec();
        for layer in &self.layers {
            phi = layer.weight.tr_mul_vec(&phi);
            phi.iter_mut().for_each(|v| *v = layer.activate(*v));
        }
        Ok(phi)
    }

    fn inverses(&self) -> &[std::result::Result<Matrix, f64>] {
        self.inverse_cache.get_or_init(|| {
            self.layers
                .iter()
                .map(|l| match linalg::invert_matrix(&l.weight.transpose()) {
                    Ok(m) => Ok(m),
                    Err(Error::Singular { condition, .. }) => Err(condition),
                    Err(_) => Err(f64::INFINITY),
                })
                .collect()
        })
    }

    /// Fails if any layer would be rejected by the inversion guard.
    pub fn check_invertible(&self) -> Result<()> {
        for (i, inv) in self.inverses().iter().enumerate() {
            if let Err(condition) = inv {
                return Err(Error::Singular {
                    condition: *condition,
                    layer: Some(i + 1),
                });
            }
        }
        Ok(())
    }

    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.inverse_with(z, InverseMode::Exact)
    }

    pub fn inverse_with(&self, z: &[f64], mode: InverseMode) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        let mut phi = z.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let u: Vec<f64> = phi.iter().map(|&v| layer.deactivate(v)).collect();
            phi = match mode {
                InverseMode::Exact => match &self.inverses()[idx] {
                    Ok(inv) => inv.mul_vec(&u),
                    Err(condition) => {
                        return Err(Error::Singular {
                            condition: *condition,
                            layer: Some(idx + 1),
                        })
                    }
                },
                InverseMode::Transpose => layer.weight.mul_vec(&u),
            };
        }
        Ok(phi)
    }

    fn logit_margin(&self, z: &[f64]) -> f64 {
        let mut change = 0.0;
        let mut no_change = 0.0;
        for (row, &zi) in z.iter().enumerate() {
            change += self.head[(row, CHANGE_OUTPUT)] * zi;
            no_change += self.head[(row, NO_CHANGE_OUTPUT)] * zi;
        }
        change - no_change
    }

    /// Probability of "change", renormalized over the two real outputs.
    ///
    /// Padding outputs share the softmax denominator but cancel out of the
    /// ratio, so this equals `σ(logit_change − logit_no_change)`.
    pub fn classify(&self, x: &[f64]) -> Result<f64> {
        let z = self.latent(x)?;
        Ok(sigmoid(self.logit_margin(&z)))
    }

    pub fn classify_batch<'a>(&self, xs: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
        xs.into_iter().map(|x| self.classify(x)).collect()
    }

    /// Sum of orthonormality residuals over layers and head.
    pub fn penalty(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| linalg::gram_residual(&l.weight))
            .sum::<f64>()
            + linalg::gram_residual(&self.head)
    }

    /// Mean binary cross entropy plus `λ · Σ ‖WᵀW − I‖_F`.
    pub fn loss(&self, batch: &[LabeledSample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("loss over an empty batch".into()));
        }
        let mut ce = 0.0;
        for s in batch {
            let z = self.latent(&s.features)?;
            ce += cross_entropy(self.logit_margin(&z), s.label);
        }
        Ok(ce / batch.len() as f64 + self.lambda * self.penalty())
    }

    /// Loss and its gradient by reverse-mode accumulation.
    pub fn loss_and_gradient(&self, batch: &[LabeledSample]) -> Result<(f64, Gradient)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("gradient over an empty batch".into()));
        }
        let d = self.dim();
        let depth = self.depth();
        let mut grad_layers = vec![Matrix::zeros(d, d); depth];
        let mut grad_head = Matrix::zeros(d, self.head.cols());
        let mut ce = 0.0;
        let mut delta = vec![0.0; d];
        let mut back = vec![0.0; d];

        for s in batch {
            let trace = self.forward(&s.features)?;
            let z = trace.latent();
            let margin = self.logit_margin(z);
            ce += cross_entropy(margin, s.label);
            // dCE/dmargin
            let g = sigmoid(margin) - s.label.target();

            // Head: logits = Hᵀ z
            for (row, &zi) in z.iter().enumerate() {
                grad_head[(row, CHANGE_OUTPUT)] += zi * g;
                grad_head[(row, NO_CHANGE_OUTPUT)] -= zi * g;
            }
            for (row, slot) in delta.iter_mut().enumerate() {
                *slot = g * (self.head[(row, CHANGE_OUTPUT)] - self.head[(row, NO_CHANGE_OUTPUT)]);
            }

            for idx in (0..depth).rev() {
                let layer = &self.layers[idx];
                // delta now holds dCE/dφ^ℓ; move it to dCE/du.
                for (dv, &u) in delta.iter_mut().zip(&trace.pre[idx]) {
                    *dv *= layer.derivative(u);
                }
                let input = &trace.post[idx];
                let gw = grad_layers[idx].as_mut_slice();
                for (row, &xi) in gw.chunks_exact_mut(d).zip(input) {
                    if xi == 0.0 {
                        continue;
                    }
                    for (gij, &dj) in row.iter_mut().zip(&delta) {
                        *gij += xi * dj;
                    }
                }
                if idx > 0 {
                    let w = layer.weight.as_slice();
                    for (b, row) in back.iter_mut().zip(w.chunks_exact(d)) {
                        *b = fast_dot(row, &delta);
                    }
                    std::mem::swap(&mut delta, &mut back);
                }
            }
        }

        let inv_n = 1.0 / batch.len() as f64;
        for gm in grad_layers.iter_mut().chain(std::iter::once(&mut grad_head)) {
            gm.as_mut_slice().iter_mut().for_each(|v| *v *= inv_n);
        }

        let mut penalty = 0.0;
        for (gm, w) in grad_layers
            .iter_mut()
            .zip(self.layers.iter().map(|l| &l.weight))
            .chain(std::iter::once((&mut grad_head, &self.head)))
        {
            penalty += add_residual_gradient(gm, w, self.lambda);
        }

        let loss = ce * inv_n + self.lambda * penalty;
        Ok((
            loss,
            Gradient {
                layers: grad_layers,
                head: grad_head,
            },
        ))
    }

    /// `∏_ℓ ‖W_ℓ‖₂ · slope_pos_ℓ`, an upper bound on the trunk's Lipschitz
    /// constant.
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                linalg::spectral_norm(&l.weight, SPECTRAL_ITERS, SPECTRAL_TOL).unwrap_or(f64::NAN)
                    * l.slope_pos
            })
            .product()
    }

    /// `∏_ℓ ‖W_ℓ⁻¹‖₂ / slope_neg_ℓ`, the matching bound for the inverse map.
    pub fn inverse_lipschitz_bound(&self) -> Result<f64> {
        self.check_invertible()?;
        Ok(self
            .inverses()
            .iter()
            .zip(&self.layers)
            .map(|(inv, l)| {
                let inv = inv.as_ref().expect("checked above");
                linalg::spectral_norm(inv, SPECTRAL_ITERS, SPECTRAL_TOL).unwrap_or(f64::NAN)
                    / l.slope_neg
            })
            .product())
    }

    pub fn layer_residuals(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|l| linalg::gram_residual(&l.weight))
            .collect()
    }
}

/// Full-batch gradient descent on [`InvertibleNet::loss`], starting from
/// `net`. Returns the lowest-loss iterate, which is never worse than `net`.
pub fn train(net: &InvertibleNet, data: &[LabeledSample], config: &TrainConfig) -> Result<InvertibleNet> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training on an empty set".into()));
    }
    let mut current = net.clone();
    let mut best: Option<(f64, InvertibleNet)> = None;

    for epoch in 0..=config.epochs {
        let (loss, grad) = current.loss_and_gradient(data)?;
        if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        if best.as_ref().is_none_or(|(b, _)| loss <= *b) {
            best = Some((loss, current.clone()));
        }
        if epoch == config.epochs {
            break;
        }
        for (param, g) in current
            .params_mut()
            .zip(grad.layers.iter().chain(std::iter::once(&grad.head)))
        {
            for (p, gv) in param.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *p -= config.learning_rate * gv;
            }
        }
    }
    let (_, net) = best.expect("at least one epoch evaluated");
    Ok(net)
}

/// Fresh orthonormal initialization followed by [`train`].
pub fn train_from_scratch(
    d: usize,
    depth: usize,
    data: &[LabeledSample],
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<InvertibleNet> {
    let init = InvertibleNet::random(d, depth, rng)?;
    train(&init, data, config)
}

/// Adds `λ · ∂‖WᵀW − I‖_F/∂W = λ · 2 W A / ‖A‖_F` to `grad`; returns the
/// residual. At the non-differentiable point `A = 0` the zero subgradient is
/// used.
fn add_residual_gradient(grad: &mut Matrix, w: &Matrix, lambda: f64) -> f64 {
    let mut a = w.gram();
    for i in 0..a.rows() {
        a[(i, i)] -= 1.0;
    }
    let r = a.frobenius_norm();
    if r > 1e-300 {
        let wa = w.matmul(&a).expect("gram is cols x cols");
        let s = 2.0 * lambda / r;
        for (g, v) in grad.as_mut_slice().iter_mut().zip(wa.as_slice()) {
            *g += s * v;
        }
    }
    r
}

#[inline]
fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(m: f64) -> f64 {
    m.max(0.0) + (-m.abs()).exp().ln_1p()
}

#[inline]
fn cross_entropy(margin: f64, label: Label) -> f64 {
    match label {
        Label::Change => softplus(-margin),
        Label::NoChange => softplus(margin),
    }
}

#[inline]
fn fast_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4 * 4;
    for (ca, cb) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in a[chunks..].iter().zip(&b[chunks..]) {
        s += x * y;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_net(d: usize, depth: usize) -> InvertibleNet {
        InvertibleNet::new(vec![Matrix::identity(d); depth], Matrix::identity(d)).unwrap()
    }

    fn zero_head_net(d: usize, depth: usize, pad_cols: usize) -> InvertibleNet {
        let mut rng = RngStream::new(3);
        let ws = (0..depth)
            .map(|_| linalg::random_orthonormal(d, &mut rng).unwrap())
            .collect();
        InvertibleNet::new(ws, Matrix::zeros(d, 2 + pad_cols)).unwrap()
    }

    #[test]
    fn forward_examples() {
        let z = identity_net(2, 1).forward(&[1.0, -1.0]).unwrap();
        assert_eq!(z.latent(), &[0.99, -0.95]);
        let z = identity_net(2, 2).latent(&[1.0, 0.0]).unwrap();
        assert!((z[0] - 0.9801).abs() < 1e-15 && z[1] == 0.0);
        let net = InvertibleNet::random(6, 3, &mut RngStream::new(1)).unwrap();
        assert!(net.latent(&[0.0; 6]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        assert!(matches!(identity_net(3, 1).forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn trace_is_reconstructible() {
        let net = InvertibleNet::random(5, 3, &mut RngStream::new(2)).unwrap();
        let x = [0.3, -1.2, 0.8, 2.0, -0.1];
        let t = net.forward(&x).unwrap();
        assert_eq!(t.pre.len(), 3);
        assert_eq!(t.post.len(), 4);
        for (l, layer) in net.layers().iter().enumerate() {
            let u = layer.weight.tr_mul_vec(&t.post[l]);
            assert_eq!(u, t.pre[l]);
            let phi: Vec<f64> = u.iter().map(|&v| layer.activate(v)).collect();
            assert_eq!(phi, t.post[l + 1]);
        }
    }

    #[test]
    fn inverse_examples() {
        let x = identity_net(2, 1).inverse(&[0.99, -0.95]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] + 1.0).abs() < 1e-15);
        let net = InvertibleNet::random(4, 2, &mut RngStream::new(4)).unwrap();
        assert!(net.inverse(&[0.0; 4]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverse_reports_singular_layer() {
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let net = InvertibleNet::new(vec![Matrix::identity(2), bad], Matrix::identity(2)).unwrap();
        match net.inverse(&[1.0, 1.0]) {
            Err(Error::Singular { layer, .. }) => assert_eq!(layer, Some(2)),
            other => panic!("expected singular layer error, got {other:?}"),
        }
    }

    #[test]
    fn classify_examples() {
        let net = zero_head_net(4, 2, 2);
        assert_eq!(net.classify(&[1.0, 2.0, -3.0, 0.5]).unwrap(), 0.5);

        // Logits (change, no-change) = (ln 3, 0) with an identity trunk.
        let mut head = Matrix::zeros(2, 2);
        head[(0, CHANGE_OUTPUT)] = 3f64.ln();
        let net = InvertibleNet::new(vec![], head).unwrap();
        assert!((net.classify(&[1.0, 0.0]).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn classify_ignores_padding_width() {
        let mut rng = RngStream::new(8);
        let ws: Vec<Matrix> = (0..2)
            .map(|_| linalg::random_orthonormal(6, &mut rng).unwrap())
            .collect();
        let real = linalg::random_orthonormal(6, &mut rng).unwrap();
        let mut narrow = Matrix::zeros(6, 6);
        let mut wide = Matrix::zeros(6, 14);
        for r in 0..6 {
            for c in 0..2 {
                narrow[(r, c)] = real[(r, c)];
                wide[(r, c)] = real[(r, c)];
            }
        }
        let a = InvertibleNet::new(ws.clone(), narrow).unwrap();
        let b = InvertibleNet::new(ws, wide).unwrap();
        let x = linalg::gaussian_vector(6, &mut rng).unwrap();
        assert_eq!(a.classify(&x).unwrap(), b.classify(&x).unwrap());
    }

    #[test]
    fn loss_examples() {
        let net = zero_head_net(4, 1, 2);
        let batch = vec![LabeledSample::new(vec![1.0, 0.0, 0.0, 0.0], Label::Change)];
        // Zero head: prediction 0.5; trunk orthonormal, head penalty = ‖−I‖_F = 2.
        let loss = net.loss(&batch).unwrap();
        let expected = 2f64.ln() + net.lambda() * 2.0;
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");

        let ortho = InvertibleNet::random(4, 2, &mut RngStream::new(5)).unwrap();
        let l = ortho.loss(&batch).unwrap();
        let p = ortho.classify(&batch[0].features).unwrap();
        assert!((l + p.ln()).abs() < 1e-10);
        assert!(matches!(ortho.loss(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn confident_classifier_loss_tends_to_penalty() {
        let mut head = Matrix::identity(2);
        head[(0, CHANGE_OUTPUT)] = 50.0;
        let net = InvertibleNet::new(vec![Matrix::identity(2)], head).unwrap();
        let batch = vec![LabeledSample::new(vec![1.0, 0.0], Label::Change)];
        let loss = net.loss(&batch).unwrap();
        assert!((loss - net.lambda() * net.penalty()).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_examples() {
        let mut rng = RngStream::new(6);
        let ws = (0..2).map(|_| linalg::random_orthonormal(5, &mut rng).unwrap()).collect();
        let net = InvertibleNet::new(ws, Matrix::identity(5)).unwrap();
        assert!((net.lipschitz_bound() - 0.9801).abs() < 1e-9);
        let net = InvertibleNet::new(vec![Matrix::identity(3).scale(2.0)], Matrix::identity(3)).unwrap();
        assert!((net.lipschitz_bound() - 1.98).abs() < 1e-9);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let net = identity_net(2, 1);
        assert!(train(&net, &[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let net = identity_net(2, 1);
        let data = vec![LabeledSample::new(vec![1e4, -1e4], Label::Change)];
        let cfg = TrainConfig {
            learning_rate: 10.0,
            epochs: 50,
        };
        assert!(matches!(train(&net, &data, &cfg), Err(Error::TrainingDiverged { .. })));
    }

    #[test]
    fn serde_roundtrip_rebuilds_inverses() {
        let net = InvertibleNet::random(5, 2, &mut RngStream::new(10)).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: InvertibleNet = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
        let z = [0.1, 0.2, -0.3, 0.4, 0.5];
        assert_eq!(net.inverse(&z).unwrap(), back.inverse(&z).unwrap());
    }
}
