//! Reference implementations the library is checked against. They share no
//! code with the crate beyond its public types.
#![allow(dead_code)]

use std::sync::Arc;

use frugal_cd::alloop::{init_session, prepare_dataset, GroundTruthOracle, Oracle, SessionConfig};
use frugal_cd::dataio::{synth_generate, Dataset, Label, LabeledSample, SynthConfig};
use frugal_cd::invnet::InvertibleNet;
use frugal_cd::linalg::{Matrix, RngStream};

/// EER by brute force over every midpoint between consecutive distinct
/// scores, plus both infinities. Flags `score >= t` and keeps the first
/// (lowest) threshold with the smallest `|FPR − FNR|`.
pub fn exhaustive_eer(scores: &[f64], labels: &[Label]) -> f64 {
    let mut distinct = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    thresholds.push(f64::INFINITY);

    let p = labels.iter().filter(|&&l| l == Label::Change).count() as f64;
    let n = labels.len() as f64 - p;
    let mut best: Option<(f64, f64)> = None;
    for t in thresholds {
        let mut fa = 0usize;
        let mut miss = 0usize;
        for (&s, &l) in scores.iter().zip(labels) {
            match l {
                Label::NoChange if s >= t => fa += 1,
                Label::Change if s < t => miss += 1,
                _ => {}
            }
        }
        let (fpr, fnr) = (fa as f64 / n, miss as f64 / p);
        let gap = (fpr - fnr).abs();
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, (fpr + fnr) / 2.0 * 100.0));
        }
    }
    best.unwrap().1
}

/// Singular values by one-sided Jacobi rotations, largest first.
pub fn jacobi_singular_values(m: &Matrix) -> Vec<f64> {
    let (rows, cols) = (m.rows(), m.cols());
    let mut a: Vec<Vec<f64>> = (0..cols).map(|c| m.column(c)).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let alpha: f64 = a[i].iter().map(|v| v * v).sum();
                let beta: f64 = a[j].iter().map(|v| v * v).sum();
                let gamma: f64 = a[i].iter().zip(&a[j]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let (x, y) = (a[i][r], a[j][r]);
                    a[i][r] = c * x - s * y;
                    a[j][r] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = a.iter().map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Central differences of `net.loss(batch)` with respect to every parameter,
/// in `params_mut` order.
pub fn finite_difference_gradient(net: &InvertibleNet, batch: &[LabeledSample], h: f64) -> Vec<Matrix> {
    let shapes: Vec<(usize, usize)> = net
        .clone()
        .params_mut()
        .map(|m| (m.rows(), m.cols()))
        .collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (k, &(rows, cols)) in shapes.iter().enumerate() {
        let mut g = Matrix::zeros(rows, cols);
        for idx in 0..rows * cols {
            let shifted = |step: f64| {
                let mut n = net.clone();
                n.params_mut().nth(k).unwrap().as_mut_slice()[idx] += step;
                n.loss(batch).unwrap()
            };
            g.as_mut_slice()[idx] = (shifted(h) - shifted(-h)) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.next_normal_pair().0).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Orthonormal matrix plus a small perturbation whose Gram residual stays
/// below `max_residual`.
pub fn near_orthonormal(d: usize, max_residual: f64, rng: &mut RngStream) -> Matrix {
    let q = frugal_cd::linalg::random_orthonormal(d, rng).unwrap();
    let mut scale = max_residual / (2.0 * d as f64).sqrt();
    loop {
        let e = gaussian_matrix(d, d, rng).scale(scale);
        let w = Matrix::from_vec(
            d,
            d,
            q.as_slice().iter().zip(e.as_slice()).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let r = frugal_cd::linalg::orthonormality_residual(&w).unwrap();
        if r < max_residual && r > 0.0 {
            return w;
        }
        scale /= 2.0;
    }
}

pub fn random_vector(d: usize, rng: &mut RngStream) -> Vec<f64> {
    frugal_cd::linalg::gaussian_vector(d, rng).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Default synthetic dataset for `seed`, already split.
pub fn synthetic(seed: u64) -> Arc<Dataset> {
    let ds = synth_generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    prepare_dataset(Arc::new(ds), seed).unwrap()
}

/// Networks retrained during a ground-truth session, one per iteration.
pub fn session_nets(dataset: Arc<Dataset>, config: SessionConfig) -> Vec<InvertibleNet> {
    let mut session = init_session(dataset.clone(), config).unwrap();
    let mut oracle = GroundTruthOracle::new(&dataset);
    let mut nets = Vec::new();
    while let Some(display) = session.state().current_display() {
        let display = display.to_vec();
        let labels = oracle.answer(&display).unwrap();
        let answers: Vec<(u32, Label)> = display.into_iter().zip(labels).collect();
        session.submit_labels(&answers).unwrap();
        nets.push(session.net().clone());
    }
    nets
}
