//! Question-and-answer active learning loop.
//!
//! Starting from a random display, each round collects the oracle's labels
//! for the current display, augments the cumulative labeled set, retrains the
//! invertible classifier from scratch, evaluates it on the held-out half and
//! picks the next display from the still-unlabeled training pool.
//!
//! Iterations are counted as in the reference tables: "iteration n" is the
//! model trained on n displays. Iteration 1 is recorded but left out of the
//! AUC summary.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::Arc;

use crate::augment::{augment_display, AugmentKind, AugmentPolicy};
use crate::dataio::{compute_eer, split_half, Dataset, Label, LabeledSample};
use crate::error::{Error, Result};
use crate::invnet::{self, InvertibleNet, TrainConfig, DEFAULT_DEPTH};
use crate::linalg::RngStream;
use crate::selection::{self, Candidate, StrategyKind};

/// First iteration that enters the AUC average.
pub const FIRST_REPORTED_ITERATION: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Display size `b`.
    pub display_size: usize,
    /// Iteration budget `T` (number of displays to label).
    pub iterations: usize,
    pub strategy: StrategyKind,
    pub policy: AugmentPolicy,
    /// Number of invertible layers; the width is the dataset dimension.
    pub depth: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            display_size: 16,
            iterations: 10,
            strategy: StrategyKind::optimized(),
            policy: AugmentPolicy::default(),
            depth: DEFAULT_DEPTH,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.display_size == 0 || self.iterations == 0 {
            return Err(Error::InvalidConfig("display size and iteration budget must be >= 1".into()));
        }
        self.strategy.validate()?;
        self.policy.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    AwaitingLabels,
    /// Retrained, next display not chosen yet.
    Ready,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub samp_pct: f64,
    /// Missing when the evaluation half has no ground truth for both classes.
    pub eer_pct: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsHistory {
    pub records: Vec<IterationRecord>,
}

impl MetricsHistory {
    /// Mean EER over the reported iterations (2 onward).
    pub fn auc(&self) -> Result<f64> {
        let eers: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.iter >= FIRST_REPORTED_ITERATION)
            .filter_map(|r| r.eer_pct)
            .collect();
        auc_of_eers(&eers)
    }

    pub fn final_eer(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.eer_pct)
    }
}

/// Average of per-iteration EERs.
pub fn auc_of_eers(eers: &[f64]) -> Result<f64> {
    if eers.is_empty() {
        return Err(Error::InvalidArgument("no EERs to average".into()));
    }
    Ok(eers.iter().sum::<f64>() / eers.len() as f64)
}

/// Labeled count over half the dataset, as a percentage.
pub fn sampling_rate(labeled: usize, dataset_size: usize) -> f64 {
    labeled as f64 / (dataset_size as f64 / 2.0) * 100.0
}

/// Everything needed to resume a session, given its dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub config: SessionConfig,
    pub displays: Vec<Vec<u32>>,
    pub answers: Vec<Vec<Label>>,
    pub net: InvertibleNet,
    pub rng: RngStream,
    pub history: MetricsHistory,
    pub phase: Phase,
}

impl SessionState {
    /// Number of the display currently shown (1-based), or of the last one
    /// once finished.
    pub fn iteration(&self) -> usize {
        self.displays.len()
    }

    pub fn current_display(&self) -> Option<&[u32]> {
        match self.phase {
            Phase::AwaitingLabels => self.displays.last().map(Vec::as_slice),
            _ => None,
        }
    }

    pub fn labeled_count(&self) -> usize {
        self.answers.iter().map(Vec::len).sum()
    }
}

/// Labeling authority for a display.
pub trait Oracle {
    fn answer(&mut self, ids: &[u32]) -> Result<Vec<Label>>;
}

/// Answers from dataset ground truth.
pub struct GroundTruthOracle<'a> {
    dataset: &'a Dataset,
}

impl<'a> GroundTruthOracle<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        GroundTruthOracle { dataset }
    }
}

impl Oracle for GroundTruthOracle<'_> {
    fn answer(&mut self, ids: &[u32]) -> Result<Vec<Label>> {
        ids.iter()
            .map(|&id| {
                self.dataset
                    .get(id)
                    .and_then(|s| s.label)
                    .ok_or_else(|| Error::InvalidArgument(format!("no ground truth for sample {id}")))
            })
            .collect()
    }
}

/// A session bound to its dataset.
#[derive(Debug, Clone)]
pub struct Session {
    state: SessionState,
    dataset: Arc<Dataset>,
}

/// Splits the dataset in half when no split is attached, deterministically
/// from `seed`.
pub fn prepare_dataset(dataset: Arc<Dataset>, seed: u64) -> Result<Arc<Dataset>> {
    if dataset.is_split() {
        return Ok(dataset);
    }
    let mut rng = RngStream::new(seed ^ 0x5711_7A11);
    Ok(Arc::new(split_half((*dataset).clone(), &mut rng)?))
}

/// Starts a session: draws the first display uniformly from the training
/// half.
pub fn init_session(dataset: Arc<Dataset>, config: SessionConfig) -> Result<Session> {
    config.validate()?;
    let dataset = prepare_dataset(dataset, config.seed)?;
    let pool = dataset.train_ids();
    if pool.len() < config.display_size {
        return Err(Error::InsufficientPool {
            requested: config.display_size,
            available: pool.len(),
        });
    }
    let mut rng = RngStream::new(config.seed);
    let net = InvertibleNet::random(dataset.dim(), config.depth, &mut rng.split())?;
    let first = selection::select_random(&pool, config.display_size, &mut rng.split())?;
    Ok(Session {
        state: SessionState {
            config,
            displays: vec![first],
            answers: Vec::new(),
            net,
            rng,
            history: MetricsHistory::default(),
            phase: Phase::AwaitingLabels,
        },
        dataset,
    })
}

impl Session {
    /// Rebinds a persisted state to its dataset.
    pub fn resume(state: SessionState, dataset: Arc<Dataset>) -> Result<Session> {
        let dataset = prepare_dataset(dataset, state.config.seed)?;
        if state.net.dim() != dataset.dim() {
            return Err(Error::Shape("persisted network does not match dataset dimension".into()));
        }
        for id in state.displays.iter().flatten() {
            if dataset.get(*id).is_none() {
                return Err(Error::InvalidArgument(format!("persisted display names unknown sample {id}")));
            }
        }
        Ok(Session { state, dataset })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn into_state(self) -> SessionState {
        self.state
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn net(&self) -> &InvertibleNet {
        &self.state.net
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn history(&self) -> &MetricsHistory {
        &self.state.history
    }

    pub fn sampling_rate(&self) -> f64 {
        sampling_rate(self.state.labeled_count(), self.dataset.len())
    }

    /// Records answers for the current display and advances one round.
    ///
    /// On error the session is left untouched.
    pub fn submit_labels(&mut self, answers: &[(u32, Label)]) -> Result<&IterationRecord> {
        if self.state.phase != Phase::AwaitingLabels {
            return Err(Error::Phase(format!(
                "session is {:?}, not awaiting labels",
                self.state.phase
            )));
        }
        let display = self.state.displays.last().expect("awaiting a display");
        if answers.len() != display.len() {
            return Err(Error::LabelMismatch(format!(
                "{} answers for a display of {}",
                answers.len(),
                display.len()
            )));
        }
        let mut ordered = Vec::with_capacity(display.len());
        for &id in display {
            let mut hits = answers.iter().filter(|(a, _)| *a == id);
            match (hits.next(), hits.next()) {
                (Some(&(_, label)), None) => ordered.push(label),
                (None, _) => return Err(Error::LabelMismatch(format!("no answer for sample {id}"))),
                (Some(_), Some(_)) => {
                    return Err(Error::LabelMismatch(format!("duplicate answers for sample {id}")))
                }
            }
        }

        let mut next = self.state.clone();
        next.answers.push(ordered);
        self.retrain(&mut next)?;
        next.phase = Phase::Ready;
        if next.displays.len() < next.config.iterations {
            self.select_next(&mut next)?;
        } else {
            next.phase = Phase::Finished;
        }
        self.state = next;
        Ok(self.state.history.records.last().expect("just recorded"))
    }

    fn labeled_set(&self, state: &SessionState) -> Result<Vec<LabeledSample>> {
        let mut out = Vec::with_capacity(state.labeled_count());
        for (ids, labels) in state.displays.iter().zip(&state.answers) {
            for (&id, &label) in ids.iter().zip(labels) {
                let s = self
                    .dataset
                    .get(id)
                    .ok_or_else(|| Error::NotFound(format!("sample {id}")))?;
                out.push(LabeledSample::new(s.features.clone(), label));
            }
        }
        Ok(out)
    }

    fn retrain(&self, state: &mut SessionState) -> Result<()> {
        let labeled = self.labeled_set(state)?;
        let mut aug_rng = state.rng.split();
        let mut init_rng = state.rng.split();
        let training = if state.config.policy.kind == AugmentKind::None {
            labeled
        } else {
            augment_display(&state.net, &labeled, &state.config.policy, &mut aug_rng)?
        };
        state.net = invnet::train_from_scratch(
            self.dataset.dim(),
            state.config.depth,
            &training,
            &state.config.train,
            &mut init_rng,
        )?;
        let record = IterationRecord {
            iter: state.displays.len(),
            samp_pct: sampling_rate(state.labeled_count(), self.dataset.len()),
            eer_pct: evaluate(&state.net, &self.dataset)?,
        };
        state.history.records.push(record);
        Ok(())
    }

    fn select_next(&self, state: &mut SessionState) -> Result<()> {
        let used: HashSet<u32> = state.displays.iter().flatten().copied().collect();
        let remaining: Vec<u32> = self
            .dataset
            .train_ids()
            .into_iter()
            .filter(|id| !used.contains(id))
            .collect();
        if remaining.is_empty() {
            state.phase = Phase::Finished;
            return Ok(());
        }
        let b = state.config.display_size.min(remaining.len());
        let mut sel_rng = state.rng.split();
        let feats = |id: &u32| self.dataset.get(*id).expect("known id").features.as_slice();
        let pool: Vec<Candidate<'_>> = remaining
            .iter()
            .map(|id| Candidate {
                id: *id,
                features: feats(id),
            })
            .collect();
        let anchored: Vec<&[f64]> = state.displays.iter().flatten().map(feats).collect();
        let display = match &state.config.strategy {
            StrategyKind::Random => selection::select_random(&remaining, b, &mut sel_rng)?,
            StrategyKind::Maxmin => selection::select_maxmin(&pool, &anchored, b)?,
            StrategyKind::Uncertainty => selection::select_uncertainty(&state.net, &pool, b)?,
            kind @ StrategyKind::Optimized { .. } => {
                selection::select_optimized(&state.net, &pool, &anchored, b, kind, &mut sel_rng)?
            }
        };
        state.displays.push(display);
        state.phase = Phase::AwaitingLabels;
        Ok(())
    }
}

/// EER on the evaluation half, when it holds ground truth of both classes.
pub fn evaluate(net: &InvertibleNet, dataset: &Dataset) -> Result<Option<f64>> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for id in dataset.eval_ids() {
        let s = dataset.get(id).expect("split ids are known");
        if let Some(l) = s.label {
            scores.push(net.classify(&s.features)?);
            labels.push(l);
        }
    }
    match compute_eer(&scores, &labels) {
        Ok(e) => Ok(Some(e)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs a whole session against `oracle`.
pub fn run_simulated(dataset: Arc<Dataset>, config: SessionConfig, oracle: &mut dyn Oracle) -> Result<MetricsHistory> {
    let mut session = init_session(dataset, config)?;
    while let Some(display) = session.state.current_display() {
        let display = display.to_vec();
        let labels = oracle.answer(&display)?;
        let answers: Vec<(u32, Label)> = display.into_iter().zip(labels).collect();
        session.submit_labels(&answers)?;
    }
    Ok(session.state.history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_generate, SynthConfig};

    fn small_dataset(n: usize) -> Arc<Dataset> {
        Arc::new(
            synth_generate(&SynthConfig {
                n,
                n_pos: n / 10,
                d: 6,
                seed: 1,
                ..SynthConfig::default()
            })
            .unwrap(),
        )
    }

    fn fast_config() -> SessionConfig {
        SessionConfig {
            display_size: 4,
            iterations: 3,
            depth: 2,
            train: TrainConfig {
                learning_rate: 0.01,
                epochs: 20,
            },
            ..SessionConfig::default()
        }
    }

    #[test]
    fn sampling_rate_examples() {
        assert!((sampling_rate(32, 2200) - 2.909_090).abs() < 1e-5);
        assert!((sampling_rate(160, 2200) - 14.545_454).abs() < 1e-5);
        assert!((sampling_rate(16, 2200) - 1.454_545).abs() < 1e-5);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_of_eers(&[5.0, 5.0, 5.0]).unwrap(), 5.0);
        assert!(auc_of_eers(&[]).is_err());
    }

    #[test]
    fn init_checks_pool() {
        let ds = small_dataset(10);
        let cfg = SessionConfig {
            display_size: 16,
            ..fast_config()
        };
        assert!(matches!(init_session(ds, cfg), Err(Error::InsufficientPool { .. })));
    }

    #[test]
    fn init_is_deterministic() {
        let ds = small_dataset(60);
        let a = init_session(ds.clone(), fast_config()).unwrap();
        let b = init_session(ds, fast_config()).unwrap();
        assert_eq!(a.state(), b.state());
        assert_eq!(a.phase(), Phase::AwaitingLabels);
        assert_eq!(a.state().current_display().unwrap().len(), 4);
    }

    #[test]
    fn wrong_answers_rejected_without_side_effects() {
        let ds = small_dataset(60);
        let mut s = init_session(ds, fast_config()).unwrap();
        let before = s.state().clone();
        let display = s.state().current_display().unwrap().to_vec();
        let short: Vec<(u32, Label)> = display[..3].iter().map(|&id| (id, Label::NoChange)).collect();
        assert!(matches!(s.submit_labels(&short), Err(Error::LabelMismatch(_))));
        let mut wrong: Vec<(u32, Label)> = display.iter().map(|&id| (id, Label::NoChange)).collect();
        wrong[0].0 = u32::MAX;
        assert!(matches!(s.submit_labels(&wrong), Err(Error::LabelMismatch(_))));
        assert_eq!(s.state(), &before);
    }

    #[test]
    fn single_class_answers_still_train() {
        let ds = small_dataset(60);
        let mut s = init_session(ds, fast_config()).unwrap();
        let display = s.state().current_display().unwrap().to_vec();
        let answers: Vec<(u32, Label)> = display.iter().map(|&id| (id, Label::NoChange)).collect();
        let rec = s.submit_labels(&answers).unwrap().clone();
        assert_eq!(rec.iter, 1);
        assert!(rec.eer_pct.is_some());
    }

    #[test]
    fn full_session_finishes_with_disjoint_displays() {
        let ds = small_dataset(80);
        let mut s = init_session(ds, fast_config()).unwrap();
        let oracle_ds = s.dataset().clone();
        let mut oracle = GroundTruthOracle::new(&oracle_ds);
        while let Some(d) = s.state().current_display() {
            let d = d.to_vec();
            let labels = oracle.answer(&d).unwrap();
            s.submit_labels(&d.iter().copied().zip(labels).collect::<Vec<_>>()).unwrap();
        }
        assert_eq!(s.phase(), Phase::Finished);
        let all: Vec<u32> = s.state().displays.iter().flatten().copied().collect();
        let unique: HashSet<u32> = all.iter().copied().collect();
        assert_eq!(all.len(), unique.len());
        assert_eq!(all.len(), 12);
        let eval: HashSet<u32> = s.dataset().eval_ids().into_iter().collect();
        assert!(all.iter().all(|id| !eval.contains(id)));
        let samp: Vec<f64> = s.history().records.iter().map(|r| r.samp_pct).collect();
        assert!(samp.windows(2).all(|w| w[1] > w[0]));
        assert!(matches!(s.submit_labels(&[]), Err(Error::Phase(_))));
    }
}
