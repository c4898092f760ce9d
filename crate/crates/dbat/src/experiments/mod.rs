//! Experiments. Each one turns a [`RunConfig`] into a [`Report`]: metric
//! records plus named files. Nothing here touches the filesystem except the
//! IDX reads of the dominoes experiment.

mod data;
mod ensemble;
pub mod interpolation;
mod sweep;
pub mod theorem;

use dbat_core::autodiff::Tensor;
use dbat_core::datasets::LabeledDataset;
use dbat_core::evaluation::{
    accuracy, aggregate_ensemble, disagreement_mask, entropy, fraction_above, max_probabilities, Ensemble,
    MetricsRecord, ModelIndex, Split,
};
use dbat_core::models::{Classifier, ClassifierSpec};
use dbat_core::rng::derive_seed;
use dbat_core::training::{
    select_best, train_dbat_next, train_dbat_simultaneous, train_erm, EnsembleState, TrainConfig, TrainMode,
};

pub use data::{prepare, Prepared};
pub use sweep::{sweep_csv, SweepRow};
pub use theorem::TheoremOutcome;

use crate::config::{Experiment, RunConfig};
use crate::error::Result;
use crate::io::Artifact;

/// Confidence level used for the "mass above" summary of OOD histograms.
pub const CONFIDENT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub run_id: String,
    pub metrics: Vec<MetricsRecord>,
    pub artifacts: Vec<Artifact>,
    pub theorem: Option<TheoremOutcome>,
    pub sweep: Vec<SweepRow>,
}

impl Report {
    fn new(run_id: String) -> Self {
        Self {
            run_id,
            metrics: Vec::new(),
            artifacts: Vec::new(),
            theorem: None,
            sweep: Vec::new(),
        }
    }

    /// Value of the last record matching all fields.
    pub fn metric(&self, run_id: &str, model: ModelIndex, split: Split, metric: &str) -> Option<f64> {
        self.metrics
            .iter()
            .rev()
            .find(|r| r.run_id == run_id && r.model == model && r.split == split && r.metric == metric)
            .map(|r| r.value)
    }
}

pub fn run_experiment(cfg: &RunConfig) -> Result<Report> {
    match cfg.experiment {
        Experiment::Toy2d | Experiment::Shortcut | Experiment::DominoesIdx => ensemble::run(cfg),
        Experiment::Interpolation => interpolation::run(cfg),
        Experiment::Theorem => theorem::run(cfg),
        Experiment::AlphaSweep => sweep::run(cfg, cfg.sweep.dataset, &cfg.sweep.alphas),
    }
}

/// Sweep over `alphas` on the dataset of `cfg` (`cfg.sweep.dataset` for
/// `alpha-sweep` configs).
pub fn run_sweep(cfg: &RunConfig, alphas: &[f64]) -> Result<Report> {
    let dataset = match cfg.experiment {
        Experiment::AlphaSweep => cfg.sweep.dataset,
        Experiment::Toy2d | Experiment::Shortcut | Experiment::DominoesIdx => cfg.experiment,
        other => {
            return Err(crate::error::RunError::config(
                None,
                format!("experiment `{}` cannot be swept", other.as_str()),
            ))
        }
    };
    sweep::run(cfg, dataset, alphas)
}

/// Records sharing one run id and evaluation epoch.
struct Metrics<'a> {
    run_id: String,
    epoch: usize,
    out: &'a mut Vec<MetricsRecord>,
}

impl Metrics<'_> {
    fn push(&mut self, model: ModelIndex, split: Split, metric: &str, value: f64) -> Result<()> {
        self.out.push(MetricsRecord::new(
            &self.run_id,
            model,
            split,
            metric,
            value,
            self.epoch,
        )?);
        Ok(())
    }
}

fn member_config(cfg: &RunConfig, i: usize, mode: TrainMode, alpha: f64) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(cfg.seed, i as u64),
        alpha,
        mode,
        ..cfg.train
    }
}

fn spec_for(cfg: &RunConfig, train: &LabeledDataset) -> Result<ClassifierSpec> {
    Ok(ClassifierSpec::new(
        train.dim(),
        cfg.hidden_dims.clone(),
        train.num_classes(),
    )?)
}

/// Trains `cfg.ensemble_size` members in `mode`. Member `i` uses seed
/// `derive_seed(cfg.seed, i)`; in sequential mode member 0 is plain ERM.
fn train_ensemble(cfg: &RunConfig, p: &Prepared, mode: TrainMode, alpha: f64) -> Result<EnsembleState> {
    let spec = spec_for(cfg, &p.train)?;
    let k = cfg.ensemble_size;
    match mode {
        TrainMode::DbatSimultaneous => {
            let tc = TrainConfig {
                alpha,
                mode,
                ..cfg.train
            };
            Ok(train_dbat_simultaneous(&spec, &p.train, &p.ood, &tc, k)?)
        }
        TrainMode::Erm => {
            let mut ens = EnsembleState::new(spec.clone());
            for i in 0..k {
                let tc = member_config(cfg, i, TrainMode::Erm, 0.0);
                ens.push(train_erm(&spec, &p.train, &tc)?, tc)?;
            }
            Ok(ens)
        }
        TrainMode::DbatSequential => {
            let mut ens = EnsembleState::new(spec.clone());
            let first = member_config(cfg, 0, TrainMode::Erm, 0.0);
            ens.push(train_erm(&spec, &p.train, &first)?, first)?;
            extend_sequential(cfg, p, &mut ens, alpha)?;
            Ok(ens)
        }
    }
}

/// Adds sequential members until the ensemble has `cfg.ensemble_size`.
fn extend_sequential(cfg: &RunConfig, p: &Prepared, ens: &mut EnsembleState, alpha: f64) -> Result<()> {
    for i in ens.len()..cfg.ensemble_size {
        let tc = member_config(cfg, i, TrainMode::DbatSequential, alpha);
        let trained = train_dbat_next(ens, &p.train, &p.ood, &tc)?;
        ens.push(trained, tc)?;
    }
    Ok(())
}

/// Per-epoch training curves, epochs counted from 1.
fn history_records(m: &mut Metrics<'_>, ens: &EnsembleState) -> Result<()> {
    let final_epoch = m.epoch;
    for (i, h) in ens.histories().iter().enumerate() {
        for e in &h.epochs {
            m.epoch = e.epoch + 1;
            let idx = ModelIndex::Member(i);
            m.push(idx, Split::Train, "objective", e.objective)?;
            m.push(idx, Split::Train, "task_loss", e.task_loss)?;
            m.push(idx, Split::Train, "agreement", e.agreement)?;
            m.push(idx, Split::Train, "accuracy", e.train_accuracy)?;
        }
    }
    m.epoch = final_epoch;
    Ok(())
}

fn accuracy_records(m: &mut Metrics<'_>, models: &[Classifier], split: Split, data: &LabeledDataset) -> Result<()> {
    for (i, model) in models.iter().enumerate() {
        m.push(ModelIndex::Member(i), split, "accuracy", accuracy(model, data)?)?;
    }
    m.push(
        ModelIndex::Ensemble,
        split,
        "accuracy",
        accuracy(&Ensemble(models), data)?,
    )
}

/// Summary of the ensemble on unlabelled inputs: pairwise disagreement,
/// entropy overall and where some pair disagrees, and confident mass.
fn ood_records(m: &mut Metrics<'_>, models: &[Classifier], x: &Tensor) -> Result<()> {
    let probs: Vec<Tensor> = models.iter().map(|h| h.predict(x)).collect::<dbat_core::Result<_>>()?;
    let agg = aggregate_ensemble(models, x)?;
    let ent = entropy(&agg);
    let n = ent.len() as f64;
    let mut any = vec![false; ent.len()];
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            let mask = disagreement_mask(&probs[i], &probs[j])?;
            let rate = mask.iter().filter(|&&d| d).count() as f64 / n;
            m.push(ModelIndex::Ensemble, Split::Ood, &format!("disagreement_{i}_{j}"), rate)?;
            for (a, d) in any.iter_mut().zip(mask) {
                *a |= d;
            }
        }
    }
    let disagreeing: Vec<f64> = ent.iter().zip(&any).filter(|(_, &d)| d).map(|(e, _)| *e).collect();
    m.push(
        ModelIndex::Ensemble,
        Split::Ood,
        "any_disagreement",
        disagreeing.len() as f64 / n,
    )?;
    if !disagreeing.is_empty() {
        let mean = disagreeing.iter().sum::<f64>() / disagreeing.len() as f64;
        m.push(ModelIndex::Ensemble, Split::Ood, "entropy_on_disagreement", mean)?;
    }
    m.push(
        ModelIndex::Ensemble,
        Split::Ood,
        "mean_entropy",
        ent.iter().sum::<f64>() / n,
    )?;
    let conf = max_probabilities(&agg);
    m.push(
        ModelIndex::Ensemble,
        Split::Ood,
        "mass_above_0.9",
        fraction_above(&conf, CONFIDENT),
    )
}

/// Accuracy on every labelled split, OOD summaries and the member chosen on
/// validation data.
fn evaluate(m: &mut Metrics<'_>, models: &[Classifier], p: &Prepared) -> Result<()> {
    accuracy_records(m, models, Split::Train, &p.train)?;
    accuracy_records(m, models, Split::Val, &p.val)?;
    accuracy_records(m, models, Split::TestComplex, &p.test_complex)?;
    if let Some(iid) = &p.test_iid {
        accuracy_records(m, models, Split::TestIid, iid)?;
    }
    ood_records(m, models, p.ood_eval.features())?;
    let best = select_best(models, &p.val)?;
    m.push(ModelIndex::Ensemble, Split::Val, "selected_member", best as f64)
}

fn model_artifacts(prefix: &str, models: &[Classifier]) -> Vec<Artifact> {
    models
        .iter()
        .enumerate()
        .map(|(i, h)| Artifact {
            name: format!("models/{prefix}member_{i}.dbat"),
            bytes: h.to_bytes(),
        })
        .collect()
}
