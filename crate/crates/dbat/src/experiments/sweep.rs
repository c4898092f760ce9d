use dbat_core::evaluation::accuracy;
use dbat_core::training::{best_index, select_best, EnsembleState, TrainMode};

use super::{evaluate, extend_sequential, history_records, model_artifacts, prepare, train_ensemble, Metrics, Report};
use crate::config::{Experiment, RunConfig};
use crate::error::{Result, RunError};
use crate::io::{Artifact, CsvText};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    /// Validation accuracy averaged over the members.
    pub val_accuracy: f64,
    /// Test accuracy of the member chosen on validation data.
    pub test_accuracy: f64,
    pub selected: bool,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut csv = CsvText::new("alpha,val_accuracy,test_accuracy,selected");
    for r in rows {
        csv.row([
            r.alpha.to_string(),
            r.val_accuracy.to_string(),
            r.test_accuracy.to_string(),
            u8::from(r.selected).to_string(),
        ]);
    }
    csv.finish()
}

/// Sequential training once per alpha, largest alpha first. The first
/// (plain) member is trained once and shared by every alpha. Per-alpha
/// metrics carry the run id `<run>-alpha<alpha>`.
pub(super) fn run(cfg: &RunConfig, dataset: Experiment, alphas: &[f64]) -> Result<Report> {
    if alphas.is_empty() {
        return Err(RunError::config(None, "a sweep needs at least one alpha"));
    }
    if let Some(bad) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(RunError::config(
            None,
            format!("alpha must be finite and non-negative, got {bad}"),
        ));
    }
    let mut alphas = alphas.to_vec();
    alphas.sort_by(|a, b| b.total_cmp(a));
    alphas.dedup();

    let mut sweep_cfg = cfg.clone();
    sweep_cfg.ensemble_size = cfg.ensemble_size.max(2);
    let p = prepare(&sweep_cfg, dataset)?;
    let mut first = sweep_cfg.clone();
    first.ensemble_size = 1;
    let base = train_ensemble(&first, &p, TrainMode::DbatSequential, 0.0)?;

    let mut report = Report::new(cfg.run_id());
    let mut ensembles: Vec<EnsembleState> = Vec::new();
    let mut rows = Vec::new();
    for &alpha in &alphas {
        let mut ens = base.clone();
        extend_sequential(&sweep_cfg, &p, &mut ens, alpha)?;
        let mut m = Metrics {
            run_id: format!("{}-alpha{alpha}", report.run_id),
            epoch: cfg.train.epochs,
            out: &mut report.metrics,
        };
        history_records(&mut m, &ens)?;
        evaluate(&mut m, ens.models(), &p)?;
        let val: Vec<f64> = ens
            .models()
            .iter()
            .map(|h| accuracy(h, &p.val))
            .collect::<dbat_core::Result<_>>()?;
        let best = select_best(ens.models(), &p.val)?;
        rows.push(SweepRow {
            alpha,
            val_accuracy: val.iter().sum::<f64>() / val.len() as f64,
            test_accuracy: accuracy(&ens.models()[best], &p.test_complex)?,
            selected: false,
        });
        ensembles.push(ens);
    }
    let vals: Vec<f64> = rows.iter().map(|r| r.val_accuracy).collect();
    let chosen = best_index(&vals);
    rows[chosen].selected = true;

    report.artifacts.push(Artifact::text("sweep.csv", sweep_csv(&rows)));
    report
        .artifacts
        .extend(model_artifacts("selected_", ensembles[chosen].models()));
    report.sweep = rows;
    Ok(report)
}
