//! Display augmentation in the latent space of an [`InvertibleNet`].
//!
//! Unary: `x̂ = f⁻¹(f(x) + δ·v)`. Binary: an entrywise convex combination of
//! two same-label latent codes mapped back through `f⁻¹`, with weights
//! `|v₁| ⊘ (|v₁| + |v₂|)` that are optionally quantized to `{0, 1}`.
//! The ambient variant applies the same formulas with `f` = identity.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dataio::{Label, LabeledSample};
use crate::error::{Error, Result};
use crate::invnet::InvertibleNet;
use crate::linalg::{gaussian_vector, RngStream};

/// Noise amplitude used when a binary draw has no same-label partner.
pub const FALLBACK_DELTA: f64 = 1.0;
const WEIGHT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentKind {
    None,
    Unary,
    BinarySoft,
    BinaryCrisp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentSpace {
    Latent,
    Ambient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub kind: AugmentKind,
    pub delta: f64,
    pub per_sample: usize,
    pub space: AugmentSpace,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            kind: AugmentKind::Unary,
            delta: 1.0,
            per_sample: 4,
            space: AugmentSpace::Latent,
        }
    }
}

impl AugmentPolicy {
    pub fn none() -> Self {
        AugmentPolicy {
            kind: AugmentKind::None,
            ..AugmentPolicy::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }
}

/// The map augmentations are expressed through.
#[derive(Debug, Clone, Copy)]
enum Map<'a> {
    Net(&'a InvertibleNet),
    Identity,
}

impl Map<'_> {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Map::Net(net) => net.latent(x),
            Map::Identity => Ok(x.to_vec()),
        }
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            Map::Net(net) => net.inverse(z),
            Map::Identity => Ok(z.to_vec()),
        }
    }
}

fn unary_with(map: Map<'_>, x: &[f64], delta: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be >= 0, got {delta}")));
    }
    let mut z = map.forward(x)?;
    let v = gaussian_vector(z.len(), rng)?;
    for (zi, vi) in z.iter_mut().zip(&v) {
        *zi += delta * vi;
    }
    map.inverse(&z)
}

/// `(f⁻¹(f(x) + δ·v), y)` with `v ~ N(0, I)`.
pub fn unary_augment(
    net: &InvertibleNet,
    x: &[f64],
    y: Label,
    delta: f64,
    rng: &mut RngStream,
) -> Result<LabeledSample> {
    Ok(LabeledSample::new(unary_with(Map::Net(net), x, delta, rng)?, y))
}

/// Unary augmentation with a caller-supplied latent perturbation `δ·v`.
pub fn unary_augment_with_noise(net: &InvertibleNet, x: &[f64], perturbation: &[f64]) -> Result<Vec<f64>> {
    let mut z = net.latent(x)?;
    if perturbation.len() != z.len() {
        return Err(Error::Shape("perturbation length differs from network dimension".into()));
    }
    z.iter_mut().zip(perturbation).for_each(|(zi, p)| *zi += p);
    net.inverse(&z)
}

/// Entrywise weights `|v₁| ⊘ (|v₁| + |v₂|)` in `[0, 1]`.
pub fn draw_binary_weights(d: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let v1 = gaussian_vector(d, rng)?;
    let v2 = gaussian_vector(d, rng)?;
    Ok(v1
        .iter()
        .zip(&v2)
        .map(|(a, b)| a.abs() / (a.abs() + b.abs()).max(WEIGHT_FLOOR))
        .collect())
}

fn combine_with(map: Map<'_>, x1: &[f64], x2: &[f64], weights: &[f64], crisp: bool) -> Result<Vec<f64>> {
    if x1.len() != x2.len() || weights.len() != x1.len() {
        return Err(Error::Shape("binary augmentation inputs differ in length".into()));
    }
    let z1 = map.forward(x1)?;
    let z2 = map.forward(x2)?;
    let z: Vec<f64> = z1
        .iter()
        .zip(&z2)
        .zip(weights)
        .map(|((a, b), &w)| {
            let w = if crisp {
                if w > 0.5 {
                    1.0
                } else {
                    0.0
                }
            } else {
                w
            };
            w * a + (1.0 - w) * b
        })
        .collect();
    map.inverse(&z)
}

/// Binary augmentation with explicit weights on `f(x₁)` (and `1 − w` on
/// `f(x₂)`).
pub fn binary_combine(
    net: &InvertibleNet,
    x1: &[f64],
    x2: &[f64],
    weights: &[f64],
    crisp: bool,
) -> Result<Vec<f64>> {
    combine_with(Map::Net(net), x1, x2, weights, crisp)
}

/// Convex latent combination of two samples sharing label `y`.
pub fn binary_augment(
    net: &InvertibleNet,
    x1: &LabeledSample,
    x2: &LabeledSample,
    crisp: bool,
    rng: &mut RngStream,
) -> Result<LabeledSample> {
    if x1.label != x2.label {
        return Err(Error::InvalidPair(format!(
            "cannot combine labels {:?} and {:?}",
            x1.label, x2.label
        )));
    }
    let w = draw_binary_weights(net.dim(), rng)?;
    Ok(LabeledSample::new(
        binary_combine(net, &x1.features, &x2.features, &w, crisp)?,
        x1.label,
    ))
}

/// Originals followed by `per_sample` generated samples for each original.
pub fn augment_display(
    net: &InvertibleNet,
    labeled: &[LabeledSample],
    policy: &AugmentPolicy,
    rng: &mut RngStream,
) -> Result<Vec<LabeledSample>> {
    policy.validate()?;
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("nothing to augment".into()));
    }
    let mut out = labeled.to_vec();
    if policy.kind == AugmentKind::None || policy.per_sample == 0 {
        return Ok(out);
    }
    let map = match policy.space {
        AugmentSpace::Latent => Map::Net(net),
        AugmentSpace::Ambient => Map::Identity,
    };

    let mut by_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, s) in labeled.iter().enumerate() {
        by_label.entry(s.label).or_default().push(i);
    }

    out.reserve(labeled.len() * policy.per_sample);
    for (i, s) in labeled.iter().enumerate() {
        let mates = &by_label[&s.label];
        for _ in 0..policy.per_sample {
            let x = match policy.kind {
                AugmentKind::Unary => unary_with(map, &s.features, policy.delta, rng)?,
                AugmentKind::BinarySoft | AugmentKind::BinaryCrisp if mates.len() < 2 => {
                    unary_with(map, &s.features, FALLBACK_DELTA, rng)?
                }
                AugmentKind::BinarySoft | AugmentKind::BinaryCrisp => {
                    // Uniform over the other members of the class.
                    let k = rng.next_below(mates.len() - 1);
                    let own = mates.iter().position(|&m| m == i).expect("sample is in its class");
                    let partner = mates[if k >= own { k + 1 } else { k }];
                    let w = draw_binary_weights(s.features.len(), rng)?;
                    combine_with(
                        map,
                        &s.features,
                        &labeled[partner].features,
                        &w,
                        policy.kind == AugmentKind::BinaryCrisp,
                    )?
                }
                AugmentKind::None => unreachable!(),
            };
            out.push(LabeledSample::new(x, s.label));
        }
    }
    Ok(out)
}
