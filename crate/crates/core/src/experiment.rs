//! Headless experiment harness: grids of simulated sessions and the CSV
//! they produce.

use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::sync::Arc;

use crate::alloop::{self, run_simulated, GroundTruthOracle, MetricsHistory, SessionConfig};
use crate::augment::{AugmentKind, AugmentPolicy, AugmentSpace};
use crate::dataio::{synth_generate, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::invnet::{self, TrainConfig};
use crate::linalg::RngStream;
use crate::selection::StrategyKind;

pub const CSV_HEADER: &str = "seed,strategy,space,aug,delta,iter,samp_pct,eer_pct";

/// One arm of a grid: display strategy and augmentation policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm {
    pub strategy: StrategyKind,
    pub policy: AugmentPolicy,
}

impl Arm {
    pub fn new(strategy: StrategyKind, kind: AugmentKind, space: AugmentSpace, delta: f64) -> Self {
        Arm {
            strategy,
            policy: AugmentPolicy {
                kind,
                delta,
                space,
                ..AugmentPolicy::default()
            },
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.strategy.name(),
            space_name(self.policy.space),
            kind_name(self.policy.kind),
            self.policy.delta
        )
    }
}

pub fn kind_name(kind: AugmentKind) -> &'static str {
    match kind {
        AugmentKind::None => "none",
        AugmentKind::Unary => "unary",
        AugmentKind::BinarySoft => "binary-soft",
        AugmentKind::BinaryCrisp => "binary-crisp",
    }
}

pub fn space_name(space: AugmentSpace) -> &'static str {
    match space {
        AugmentSpace::Latent => "latent",
        AugmentSpace::Ambient => "ambient",
    }
}

/// Augmentation settings compared at fixed display strategy.
pub fn augmentation_grid() -> Vec<Arm> {
    let opt = StrategyKind::optimized();
    let mut arms: Vec<Arm> = [0.01, 0.10, 1.00]
        .into_iter()
        .map(|d| Arm::new(opt, AugmentKind::Unary, AugmentSpace::Latent, d))
        .collect();
    arms.push(Arm::new(opt, AugmentKind::BinarySoft, AugmentSpace::Latent, 1.0));
    arms.push(Arm::new(opt, AugmentKind::BinaryCrisp, AugmentSpace::Latent, 1.0));
    arms
}

/// Display strategy × augmentation space, unary with δ = 1.
pub fn ablation_grid() -> Vec<Arm> {
    let mut arms = Vec::new();
    for strategy in [StrategyKind::Random, StrategyKind::optimized()] {
        for space in [AugmentSpace::Ambient, AugmentSpace::Latent] {
            arms.push(Arm::new(strategy, AugmentKind::Unary, space, 1.0));
        }
    }
    arms
}

/// Selection strategies without augmentation, plus the augmented method.
pub fn comparison_grid() -> Vec<Arm> {
    let mut arms: Vec<Arm> = [
        StrategyKind::Random,
        StrategyKind::Maxmin,
        StrategyKind::Uncertainty,
        StrategyKind::optimized(),
    ]
    .into_iter()
    .map(|s| Arm::new(s, AugmentKind::None, AugmentSpace::Latent, 0.0))
    .collect();
    arms.push(Arm::new(
        StrategyKind::optimized(),
        AugmentKind::Unary,
        AugmentSpace::Latent,
        1.0,
    ));
    arms
}

/// Where each seed's data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// One synthetic dataset per seed, generated with that seed.
    Synthetic(SynthConfig),
    /// The same dataset for every seed.
    Fixed(Arc<Dataset>),
}

impl DataSource {
    pub fn dataset(&self, seed: u64) -> Result<Arc<Dataset>> {
        match self {
            DataSource::Synthetic(cfg) => Ok(Arc::new(synth_generate(&SynthConfig {
                seed,
                ..cfg.clone()
            })?)),
            DataSource::Fixed(ds) => Ok(ds.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub arm: Arm,
    pub history: MetricsHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub seed: u64,
    pub strategy: String,
    pub space: String,
    pub aug: String,
    pub delta: f64,
    pub iter: usize,
    pub samp_pct: f64,
    pub eer_pct: Option<f64>,
}

impl RunResult {
    pub fn rows(&self) -> Vec<CsvRow> {
        self.history
            .records
            .iter()
            .map(|r| CsvRow {
                seed: self.seed,
                strategy: self.arm.strategy.name().to_string(),
                space: space_name(self.arm.policy.space).to_string(),
                aug: kind_name(self.arm.policy.kind).to_string(),
                delta: self.arm.policy.delta,
                iter: r.iter,
                samp_pct: r.samp_pct,
                eer_pct: r.eer_pct,
            })
            .collect()
    }

    pub fn auc(&self) -> Result<f64> {
        self.history.auc()
    }
}

/// Runs every `(seed, arm)` pair with a ground-truth oracle. Runs are
/// independent and execute in parallel; each is deterministic on its own.
pub fn run_grid(source: &DataSource, base: &SessionConfig, seeds: &[u64], arms: &[Arm]) -> Result<Vec<RunResult>> {
    let datasets: Vec<(u64, Arc<Dataset>)> = seeds
        .iter()
        .map(|&s| Ok((s, alloop::prepare_dataset(source.dataset(s)?, s)?)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(u64, Arc<Dataset>, Arm)> = datasets
        .iter()
        .flat_map(|(s, ds)| arms.iter().map(move |a| (*s, ds.clone(), *a)))
        .collect();
    jobs.into_par_iter()
        .map(|(seed, ds, arm)| {
            let config = SessionConfig {
                strategy: arm.strategy,
                policy: arm.policy,
                seed,
                ..base.clone()
            };
            let mut oracle = GroundTruthOracle::new(&ds);
            let history = run_simulated(ds.clone(), config, &mut oracle)?;
            log::info!("seed {seed} {}: AUC {:?}", arm.label(), history.auc().ok());
            Ok(RunResult { seed, arm, history })
        })
        .collect()
}

/// Trains on every labeled sample of the training half (no augmentation)
/// and reports the evaluation EER.
pub fn supervised_eer(dataset: Arc<Dataset>, depth: usize, train: &TrainConfig, seed: u64) -> Result<Option<f64>> {
    let dataset = alloop::prepare_dataset(dataset, seed)?;
    let ids: Vec<u32> = dataset
        .train_ids()
        .into_iter()
        .filter(|id| dataset.get(*id).is_some_and(|s| s.label.is_some()))
        .collect();
    if ids.is_empty() {
        return Err(Error::InvalidArgument("no labeled training samples".into()));
    }
    let data = dataset.labeled(&ids)?;
    let mut rng = RngStream::new(seed);
    let net = invnet::train_from_scratch(dataset.dim(), depth, &data, train, &mut rng)?;
    alloop::evaluate(&net, &dataset)
}

/// Seed-averaged curve of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: Arm,
    pub seeds: usize,
    /// `(iteration, samp_pct, mean EER)` for every iteration where all seeds
    /// have an EER.
    pub curve: Vec<(usize, f64, f64)>,
    /// Mean over seeds of each run's AUC.
    pub auc: Option<f64>,
}

/// Groups results by arm (first-seen order) and averages over seeds.
pub fn summarize(results: &[RunResult]) -> Vec<ArmSummary> {
    let mut arms: Vec<Arm> = Vec::new();
    for r in results {
        if !arms.contains(&r.arm) {
            arms.push(r.arm);
        }
    }
    arms.into_iter()
        .map(|arm| {
            let runs: Vec<&RunResult> = results.iter().filter(|r| r.arm == arm).collect();
            let iters = runs.iter().map(|r| r.history.records.len()).min().unwrap_or(0);
            let curve = (0..iters)
                .filter_map(|i| {
                    let eers: Option<Vec<f64>> = runs.iter().map(|r| r.history.records[i].eer_pct).collect();
                    let rec = &runs[0].history.records[i];
                    eers.map(|e| (rec.iter, rec.samp_pct, e.iter().sum::<f64>() / e.len() as f64))
                })
                .collect();
            let aucs: Option<Vec<f64>> = runs.iter().map(|r| r.auc().ok()).collect();
            ArmSummary {
                arm,
                seeds: runs.len(),
                curve,
                auc: aucs.map(|a| a.iter().sum::<f64>() / a.len() as f64),
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for r in results {
        for row in r.rows() {
            w.serialize(&row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
    }
    w.flush()?;
    Ok(())
}
