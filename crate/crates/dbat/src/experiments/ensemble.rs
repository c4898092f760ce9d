use dbat_core::datasets::toy2d_grid;
use dbat_core::evaluation::{aggregate_ensemble, confidence_histogram};
use dbat_core::models::Classifier;
use dbat_core::training::TrainMode;

use super::{evaluate, history_records, model_artifacts, prepare, train_ensemble, Metrics, Prepared, Report};
use crate::config::{Experiment, RunConfig};
use crate::error::Result;
use crate::io::{dataset_csv, histogram_csv, Artifact, CsvText};

/// Trains the configured ensemble (and the ERM baseline when asked), then
/// evaluates both and exports models, OOD confidence histograms, the
/// training set and, for toy2d, the decision boundaries.
pub(super) fn run(cfg: &RunConfig) -> Result<Report> {
    let p = prepare(cfg, cfg.experiment)?;
    let mut report = Report::new(cfg.run_id());
    let ens = train_ensemble(cfg, &p, cfg.train.mode, cfg.train.alpha)?;
    let run_id = report.run_id.clone();
    record(&mut report, &run_id, cfg, &ens, &p)?;
    report.artifacts.extend(model_artifacts("", ens.models()));
    report.artifacts.push(Artifact::text(
        "histogram.csv",
        histogram_csv(&confidence_histogram(ens.models(), &p.ood_eval)?),
    ));
    if cfg.experiment == Experiment::Toy2d {
        report.artifacts.push(Artifact::text(
            "boundary.csv",
            boundary_csv(ens.models(), cfg.data.toy.grid_resolution)?,
        ));
    }
    if cfg.compare_erm && cfg.train.mode != TrainMode::Erm {
        let erm = train_ensemble(cfg, &p, TrainMode::Erm, 0.0)?;
        record(&mut report, &format!("{run_id}-erm"), cfg, &erm, &p)?;
        report.artifacts.extend(model_artifacts("erm_", erm.models()));
        report.artifacts.push(Artifact::text(
            "histogram_erm.csv",
            histogram_csv(&confidence_histogram(erm.models(), &p.ood_eval)?),
        ));
    }
    report
        .artifacts
        .push(Artifact::text("data/train.csv", dataset_csv(&p.train)));
    Ok(report)
}

fn record(
    report: &mut Report,
    run_id: &str,
    cfg: &RunConfig,
    ens: &dbat_core::training::EnsembleState,
    p: &Prepared,
) -> Result<()> {
    let mut m = Metrics {
        run_id: run_id.to_string(),
        epoch: cfg.train.epochs,
        out: &mut report.metrics,
    };
    history_records(&mut m, ens)?;
    evaluate(&mut m, ens.models(), p)
}

/// `P(y = 1)` of every member and of the ensemble on the toy2d lattice.
fn boundary_csv(models: &[Classifier], resolution: usize) -> Result<String> {
    let grid = toy2d_grid(resolution)?;
    let x = grid.features();
    let mut csv = CsvText::new("x1,x2,model_index,p1");
    let mut columns: Vec<(String, dbat_core::autodiff::Tensor)> = Vec::new();
    for (i, h) in models.iter().enumerate() {
        columns.push((i.to_string(), h.predict(x)?));
    }
    columns.push(("ensemble".into(), aggregate_ensemble(models, x)?));
    for (name, probs) in &columns {
        for r in 0..x.rows() {
            let pt = x.row(r);
            csv.row([
                pt[0].to_string(),
                pt[1].to_string(),
                name.clone(),
                probs.row(r)[1].to_string(),
            ]);
        }
    }
    Ok(csv.finish())
}
