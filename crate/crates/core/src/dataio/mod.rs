//! Samples, datasets, splits and the equal error rate.

mod eer;
mod format;
mod synth;

pub use eer::compute_eer;
pub use format::{load_dataset, load_split, save_dataset, save_split, split_sidecar_path};
pub use synth::{synth_generate, SynthConfig};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::linalg::RngStream;

/// Oracle answer for one patch pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Label {
    NoChange,
    Change,
}

impl Label {
    pub fn as_i8(self) -> i8 {
        match self {
            Label::NoChange => -1,
            Label::Change => 1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Label> {
        match v {
            -1 => Some(Label::NoChange),
            1 => Some(Label::Change),
            _ => None,
        }
    }

    /// Cross-entropy target: 1 for change, 0 otherwise.
    pub fn target(self) -> f64 {
        match self {
            Label::Change => 1.0,
            Label::NoChange => 0.0,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        Label::from_i8(v).ok_or_else(|| format!("label must be -1 or +1, got {v}"))
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.as_i8()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: Label,
}

impl LabeledSample {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        LabeledSample { features, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub width: u16,
    pub height: u16,
    pub channels: u16,
}

impl PatchGeometry {
    pub fn byte_len(&self) -> usize {
        self.width as usize * self.height as usize * self.channels as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub before: Vec<u8>,
    pub after: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u32,
    pub features: Vec<f64>,
    pub label: Option<Label>,
    pub patches: Option<PatchPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSide {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    patch_geometry: Option<PatchGeometry>,
    eval_ids: Option<BTreeSet<u32>>,
    index: HashMap<u32, usize>,
}

impl Dataset {
    /// Validates ids, dimensions, finiteness and patch sizes.
    pub fn new(samples: Vec<Sample>, dim: usize, patch_geometry: Option<PatchGeometry>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("dataset feature dimension is 0".into()));
        }
        let mut index = HashMap::with_capacity(samples.len());
        for (pos, s) in samples.iter().enumerate() {
            if index.insert(s.id, pos).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate sample id {}", s.id)));
            }
            if s.features.len() != dim {
                return Err(Error::Shape(format!(
                    "sample {} has {} features, expected {dim}",
                    s.id,
                    s.features.len()
                )));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("sample {} has non-finite features", s.id)));
            }
            match (&s.patches, patch_geometry) {
                (Some(p), Some(g)) if p.before.len() != g.byte_len() || p.after.len() != g.byte_len() => {
                    return Err(Error::Shape(format!("sample {} patch size mismatch", s.id)));
                }
                (Some(_), None) => {
                    return Err(Error::Shape(format!(
                        "sample {} carries patches but the dataset declares none",
                        s.id
                    )));
                }
                _ => {}
            }
        }
        Ok(Dataset {
            samples,
            dim,
            patch_geometry,
            eval_ids: None,
            index,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn patch_geometry(&self) -> Option<PatchGeometry> {
        self.patch_geometry
    }

    pub fn has_labels(&self) -> bool {
        self.samples.iter().any(|s| s.label.is_some())
    }

    pub fn has_patches(&self) -> bool {
        self.patch_geometry.is_some() && self.samples.iter().all(|s| s.patches.is_some())
    }

    pub fn get(&self, id: u32) -> Option<&Sample> {
        self.index.get(&id).map(|&i| &self.samples[i])
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == Some(label)).count()
    }

    pub fn is_split(&self) -> bool {
        self.eval_ids.is_some()
    }

    pub fn side(&self, id: u32) -> Option<SplitSide> {
        let eval = self.eval_ids.as_ref()?;
        self.index.get(&id)?;
        Some(if eval.contains(&id) {
            SplitSide::Eval
        } else {
            SplitSide::Train
        })
    }

    /// Training ids in dataset order; every id when no split is set.
    pub fn train_ids(&self) -> Vec<u32> {
        self.samples
            .iter()
            .filter(|s| self.eval_ids.as_ref().is_none_or(|e| !e.contains(&s.id)))
            .map(|s| s.id)
            .collect()
    }

    /// Evaluation ids in dataset order; empty when no split is set.
    pub fn eval_ids(&self) -> Vec<u32> {
        match &self.eval_ids {
            Some(e) => self.samples.iter().filter(|s| e.contains(&s.id)).map(|s| s.id).collect(),
            None => Vec::new(),
        }
    }

    pub fn with_eval_ids(mut self, eval: impl IntoIterator<Item = u32>) -> Result<Self> {
        let eval: BTreeSet<u32> = eval.into_iter().collect();
        if let Some(missing) = eval.iter().find(|id| !self.index.contains_key(id)) {
            return Err(Error::InvalidArgument(format!("split names unknown id {missing}")));
        }
        self.eval_ids = Some(eval);
        Ok(self)
    }

    pub fn labeled(&self, ids: &[u32]) -> Result<Vec<LabeledSample>> {
        ids.iter()
            .map(|&id| {
                let s = self.get(id).ok_or_else(|| Error::NotFound(format!("sample {id}")))?;
                let label = s
                    .label
                    .ok_or_else(|| Error::InvalidArgument(format!("sample {id} has no label")))?;
                Ok(LabeledSample::new(s.features.clone(), label))
            })
            .collect()
    }
}

/// Random half/half split, stratified on labels.
///
/// The training half receives `⌊n/2⌋` samples. Positives are divided
/// `⌊p/2⌋` to training and the rest to evaluation, so each half holds at
/// least one when `p ≥ 2`. Without any positive the split is unstratified.
pub fn split_half(dataset: Dataset, rng: &mut RngStream) -> Result<Dataset> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {n} samples in half")));
    }
    let n_train = n / 2;
    let mut positives: Vec<u32> = Vec::new();
    let mut others: Vec<u32> = Vec::new();
    for s in dataset.samples() {
        if s.label == Some(Label::Change) {
            positives.push(s.id);
        } else {
            others.push(s.id);
        }
    }

    let mut eval = Vec::with_capacity(n - n_train);
    if positives.is_empty() {
        log::info!("no positive samples; falling back to an unstratified split");
        rng.shuffle(&mut others);
        eval.extend_from_slice(&others[n_train..]);
    } else {
        rng.shuffle(&mut positives);
        rng.shuffle(&mut others);
        let n_eval = n - n_train;
        let pos_train = (positives.len() / 2)
            .min(n_train)
            .max(positives.len().saturating_sub(n_eval));
        let other_train = n_train - pos_train;
        eval.extend_from_slice(&positives[pos_train..]);
        eval.extend_from_slice(&others[other_train..]);
    }
    dataset.with_eval_ids(eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, n_pos: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample {
                id: i as u32,
                features: vec![i as f64],
                label: Some(if i < n_pos { Label::Change } else { Label::NoChange }),
                patches: None,
            })
            .collect();
        Dataset::new(samples, 1, None).unwrap()
    }

    #[test]
    fn duplicate_ids_rejected() {
        let s = Sample {
            id: 3,
            features: vec![0.0],
            label: None,
            patches: None,
        };
        assert!(Dataset::new(vec![s.clone(), s], 1, None).is_err());
    }

    #[test]
    fn nan_features_rejected() {
        let s = Sample {
            id: 0,
            features: vec![f64::NAN],
            label: None,
            patches: None,
        };
        assert!(Dataset::new(vec![s], 1, None).is_err());
    }

    #[test]
    fn split_sizes() {
        let ds = split_half(toy(2200, 39), &mut RngStream::new(1)).unwrap();
        assert_eq!(ds.train_ids().len(), 1100);
        assert_eq!(ds.eval_ids().len(), 1100);

        let ds = split_half(toy(3, 1), &mut RngStream::new(1)).unwrap();
        assert_eq!(ds.train_ids().len(), 1);
        assert_eq!(ds.eval_ids().len(), 2);
    }

    #[test]
    fn split_is_stratified() {
        for seed in 0..50 {
            let ds = split_half(toy(40, 2), &mut RngStream::new(seed)).unwrap();
            let count = |ids: Vec<u32>| ids.iter().filter(|&&i| i < 2).count();
            assert_eq!(count(ds.train_ids()), 1);
            assert_eq!(count(ds.eval_ids()), 1);
        }
    }

    #[test]
    fn split_without_positives_falls_back() {
        let ds = split_half(toy(10, 0), &mut RngStream::new(4)).unwrap();
        assert_eq!(ds.train_ids().len(), 5);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let a = split_half(toy(101, 7), &mut RngStream::new(9)).unwrap();
        let b = split_half(toy(101, 7), &mut RngStream::new(9)).unwrap();
        assert_eq!(a.eval_ids(), b.eval_ids());
        let train: BTreeSet<u32> = a.train_ids().into_iter().collect();
        assert!(a.eval_ids().iter().all(|id| !train.contains(id)));
        assert_eq!(train.len() + a.eval_ids().len(), 101);
    }
}
