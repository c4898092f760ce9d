use dbat_core::datasets::{gen_interpolation_path, linspace};
use dbat_core::evaluation::{path_entropy_profile, ModelIndex, Split};
use dbat_core::training::TrainMode;

use super::{accuracy_records, history_records, model_artifacts, prepare, train_ensemble, Metrics, Report};
use crate::config::{Experiment, RunConfig};
use crate::error::{Result, RunError};
use crate::io::{Artifact, CsvText};

/// Path positions counted as far from both endpoints.
pub const FAR_BELOW: f64 = -0.5;
pub const FAR_ABOVE: f64 = 1.5;
const T_TOL: f64 = 1e-9;

fn is_far(t: f64) -> bool {
    t <= FAR_BELOW + T_TOL || t >= FAR_ABOVE - T_TOL
}

/// Ensemble entropy along a straight path through toy2d input space for the
/// configured ensemble and for an ERM ensemble with the same member seeds.
pub(super) fn run(cfg: &RunConfig) -> Result<Report> {
    let path_cfg = &cfg.data.path;
    if path_cfg.start.len() != 2 {
        return Err(RunError::config(
            None,
            format!(
                "`data.path_start` needs 2 coordinates for toy2d, got {}",
                path_cfg.start.len()
            ),
        ));
    }
    let p = prepare(cfg, Experiment::Toy2d)?;
    let ts = linspace(path_cfg.t_min, path_cfg.t_max, path_cfg.t_points);
    let path = gen_interpolation_path(&path_cfg.start, &path_cfg.end, &ts)?;
    let mut report = Report::new(cfg.run_id());
    let mut csv = CsvText::new("t,ensemble,entropy");

    let runs = [
        (report.run_id.clone(), cfg.train.mode, cfg.train.alpha, ""),
        (format!("{}-erm", report.run_id), TrainMode::Erm, 0.0, "erm_"),
    ];
    for (run_id, mode, alpha, prefix) in runs {
        let ens = train_ensemble(cfg, &p, mode, alpha)?;
        let profile = path_entropy_profile(ens.models(), &path)?;
        let mut m = Metrics {
            run_id,
            epoch: cfg.train.epochs,
            out: &mut report.metrics,
        };
        history_records(&mut m, &ens)?;
        accuracy_records(&mut m, ens.models(), Split::Train, &p.train)?;
        accuracy_records(&mut m, ens.models(), Split::TestComplex, &p.test_complex)?;
        let far: Vec<f64> = profile.iter().filter(|(t, _)| is_far(*t)).map(|x| x.1).collect();
        if !far.is_empty() {
            let mean = far.iter().sum::<f64>() / far.len() as f64;
            m.push(ModelIndex::Ensemble, Split::Path, "mean_entropy_far", mean)?;
        }
        for (anchor, name) in [(0.0, "entropy_t0"), (1.0, "entropy_t1")] {
            if let Some((_, e)) = profile.iter().find(|(t, _)| (t - anchor).abs() < T_TOL) {
                m.push(ModelIndex::Ensemble, Split::Path, name, *e)?;
            }
        }
        for (t, e) in &profile {
            csv.row([t.to_string(), mode.as_str().to_string(), e.to_string()]);
        }
        report.artifacts.extend(model_artifacts(prefix, ens.models()));
    }
    report
        .artifacts
        .push(Artifact::text("entropy_profile.csv", csv.finish()));
    Ok(report)
}
