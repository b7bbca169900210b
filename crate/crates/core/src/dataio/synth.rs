//! Synthetic change-detection data with heavy class imbalance.
//!
//! Negatives lie on a low-dimensional sine-warped sheet in `R^d`; positives
//! form a cluster floating above the sheet. Every sample also carries a
//! constant `baseline` level on one extra axis (image features are not
//! centred on the origin, and the bias-free classifier relies on it), plus
//! isotropic noise on the remaining axes. A random rotation hides all of this
//! from the coordinate axes. Features are rounded to `f32` so a dataset
//! survives an FCD1 round trip unchanged.

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, Label, PatchGeometry, PatchPair, Sample};
use crate::error::{Error, Result};
use crate::linalg::{self, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub n_pos: usize,
    pub d: usize,
    /// Intrinsic dimension of the no-change sheet.
    pub sheet_dim: usize,
    /// Gaussian noise (standard deviation) on the sheet normal and on every
    /// axis outside the sheet.
    pub noise: f64,
    /// Amplitude of the sine warp along the sheet normal.
    pub warp_amplitude: f64,
    /// Angular frequency of the warp.
    pub warp_frequency: f64,
    /// Constant feature level shared by every sample, along an axis
    /// orthogonal to the sheet and its normal.
    pub baseline: f64,
    /// Height of the positive cluster above the sheet.
    pub offset: f64,
    /// In-sheet radius of the positive cluster.
    pub cluster_radius: f64,
    /// Global multiplier applied to every feature.
    pub scale: f64,
    pub seed: u64,
    /// Renders before/after RGB patches when set.
    pub patches: Option<PatchGeometry>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 2200,
            n_pos: 39,
            d: 32,
            sheet_dim: 2,
            noise: 0.3,
            warp_amplitude: 1.0,
            warp_frequency: 1.5,
            baseline: 2.0,
            offset: 4.0,
            cluster_radius: 1.0,
            scale: 9.0,
            seed: 0,
            patches: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pos == 0 || self.n_pos >= self.n {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= n_pos < n, got n_pos={} n={}",
                self.n_pos, self.n
            )));
        }
        if self.sheet_dim == 0 || self.sheet_dim + 2 > self.d {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= sheet_dim <= d - 2, got sheet_dim={} d={}",
                self.sheet_dim, self.d
            )));
        }
        let finite = [
            self.noise,
            self.warp_amplitude,
            self.warp_frequency,
            self.baseline,
            self.offset,
            self.cluster_radius,
            self.scale,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) || self.scale == 0.0 {
            return Err(Error::InvalidConfig("shape parameters must be finite and non-negative".into()));
        }
        if let Some(g) = self.patches {
            if g.byte_len() == 0 || !(g.channels == 1 || g.channels == 3 || g.channels == 4) {
                return Err(Error::InvalidConfig("patch geometry must be non-empty with 1, 3 or 4 channels".into()));
            }
        }
        Ok(())
    }

    fn warp(&self, u: &[f64]) -> f64 {
        let w = self.warp_frequency;
        self.warp_amplitude * ((w * u[0]).sin() + 0.5 * (w * u[1.min(u.len() - 1)]).sin())
    }
}

/// Generates `n − n_pos` negatives and `n_pos` positives in shuffled order.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let d = config.d;
    let sheet_dim = config.sheet_dim;
    let mut rng = RngStream::new(config.seed);
    let rotation = linalg::random_orthonormal(d, &mut rng)?;

    // Cluster centre: an in-sheet point one unit out along a random direction.
    let mut center = linalg::gaussian_vector(sheet_dim, &mut rng)?;
    let cn = linalg::norm(&center);
    center.iter_mut().for_each(|c| *c /= cn);

    let mut labels: Vec<Label> = (0..config.n)
        .map(|i| if i < config.n_pos { Label::Change } else { Label::NoChange })
        .collect();
    rng.shuffle(&mut labels);

    let mut patch_rng = rng.split();
    let mut samples = Vec::with_capacity(config.n);
    for (i, &label) in labels.iter().enumerate() {
        let g = linalg::gaussian_vector(d, &mut rng)?;
        let (sheet, rest) = g.split_at(sheet_dim);
        let u: Vec<f64> = match label {
            Label::NoChange => sheet.to_vec(),
            Label::Change => center
                .iter()
                .zip(sheet)
                .map(|(c, s)| c + config.cluster_radius * s)
                .collect(),
        };
        let mut height = config.warp(&u) + config.noise * rest[0];
        if label == Label::Change {
            height += config.offset;
        }
        let mut local = u;
        local.push(height);
        local.push(config.baseline);
        local.extend(rest[2..].iter().map(|v| config.noise * v));
        let features: Vec<f64> = rotation
            .mul_vec(&local)
            .into_iter()
            .map(|v| (v * config.scale) as f32 as f64)
            .collect();
        let patches = config
            .patches
            .map(|geom| render_patches(geom, label, &mut patch_rng));
        samples.push(Sample {
            id: i as u32,
            features,
            label: Some(label),
            patches,
        });
    }
    Dataset::new(samples, d, config.patches)
}

/// Textured "before" patch; the "after" patch carries a global illumination
/// shift and, for changes, a bright rectangular structure.
fn render_patches(geom: PatchGeometry, label: Label, rng: &mut RngStream) -> PatchPair {
    let (w, h, c) = (geom.width as usize, geom.height as usize, geom.channels as usize);
    let base: Vec<f64> = (0..c).map(|_| 60.0 + 100.0 * rng.next_uniform()).collect();
    let fx = 0.2 + 0.6 * rng.next_uniform();
    let fy = 0.2 + 0.6 * rng.next_uniform();
    let shift = 25.0 * (rng.next_uniform() - 0.5);
    let (bx, by) = (rng.next_below(w.max(1)), rng.next_below(h.max(1)));
    let (bw, bh) = ((w / 3).max(1), (h / 3).max(1));

    let mut before = Vec::with_capacity(w * h * c);
    let mut after = Vec::with_capacity(w * h * c);
    for y in 0..h {
        for x in 0..w {
            let texture = 20.0 * ((fx * x as f64).sin() * (fy * y as f64).cos());
            let in_blob = label == Label::Change && x >= bx && x < bx + bw && y >= by && y < by + bh;
            for &b in &base {
                let grain = 8.0 * (rng.next_uniform() - 0.5);
                let v0 = b + texture + grain;
                let v1 = if in_blob { 245.0 } else { v0 + shift };
                before.push(v0.clamp(0.0, 255.0) as u8);
                after.push(v1.clamp(0.0, 255.0) as u8);
            }
        }
    }
    PatchPair { before, after }
}
