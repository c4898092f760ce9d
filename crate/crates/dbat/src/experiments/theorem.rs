use dbat_core::evaluation::{ModelIndex, Split};
use dbat_core::oodgen::{theorem_oracle_bruteforce, theorem_oracle_gradient, PosteriorTable};

use super::{Metrics, Report};
use crate::config::{RunConfig, TheoremConfig};
use crate::error::Result;
use crate::io::{Artifact, CsvText};

/// Bounds on the free entries of the brute-force minimiser and the allowed
/// gap to the gradient solution.
pub const HIGH: f64 = 0.99;
pub const LOW: f64 = 0.01;
pub const ORACLE_GAP: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremOutcome {
    pub bruteforce: PosteriorTable,
    pub gradient: PosteriorTable,
    pub trace: Vec<f64>,
    pub passed: bool,
}

/// The predicted second model follows the second feature alone:
/// `P(Y = 1 | c, s) = s`.
pub fn predicted() -> PosteriorTable {
    PosteriorTable {
        p: [[0.0, 1.0], [0.0, 1.0]],
    }
}

pub fn solve(t: &TheoremConfig) -> Result<TheoremOutcome> {
    let bruteforce = theorem_oracle_bruteforce(t.grid)?;
    let oracle = theorem_oracle_gradient(t.iterations, t.learning_rate)?;
    let gap = [(0, 1), (1, 0)]
        .iter()
        .map(|&(c, s)| (bruteforce.get(c, s) - oracle.table.get(c, s)).abs())
        .fold(0.0, f64::max);
    let passed = bruteforce.get(0, 1) >= HIGH && bruteforce.get(1, 0) <= LOW && gap <= ORACLE_GAP;
    Ok(TheoremOutcome {
        bruteforce,
        gradient: oracle.table,
        trace: oracle.trace,
        passed,
    })
}

pub fn posterior_csv(o: &TheoremOutcome) -> String {
    let mut csv = CsvText::new("c,s,bruteforce,gradient,predicted");
    let pred = predicted();
    for c in 0..2 {
        for s in 0..2 {
            csv.row([
                c.to_string(),
                s.to_string(),
                o.bruteforce.get(c, s).to_string(),
                o.gradient.get(c, s).to_string(),
                pred.get(c, s).to_string(),
            ]);
        }
    }
    csv.finish()
}

/// Human-readable table of the free entries.
pub fn table(o: &TheoremOutcome) -> String {
    let pred = predicted();
    let mut out = String::from("entry      bruteforce  gradient  predicted\n");
    for (c, s) in [(0, 1), (1, 0)] {
        out.push_str(&format!(
            "p(c={c},s={s})  {:>9.4}  {:>8.4}  {:>9.1}\n",
            o.bruteforce.get(c, s),
            o.gradient.get(c, s),
            pred.get(c, s)
        ));
    }
    out
}

pub(super) fn run(cfg: &RunConfig) -> Result<Report> {
    let o = solve(&cfg.theorem)?;
    let mut report = Report::new(cfg.run_id());
    let mut m = Metrics {
        run_id: report.run_id.clone(),
        epoch: cfg.theorem.iterations,
        out: &mut report.metrics,
    };
    let second = ModelIndex::Member(1);
    for (c, s) in [(0, 1), (1, 0)] {
        m.push(
            second,
            Split::Ood,
            &format!("bruteforce_p{c}{s}"),
            o.bruteforce.get(c, s),
        )?;
        m.push(second, Split::Ood, &format!("gradient_p{c}{s}"), o.gradient.get(c, s))?;
    }
    if let Some(&last) = o.trace.last() {
        m.push(second, Split::Ood, "gradient_objective", last)?;
    }
    m.push(second, Split::Ood, "pass", if o.passed { 1.0 } else { 0.0 })?;

    let mut trace = CsvText::new("iteration,objective");
    for (i, v) in o.trace.iter().enumerate() {
        trace.row([i.to_string(), v.to_string()]);
    }
    report
        .artifacts
        .push(Artifact::text("posterior.csv", posterior_csv(&o)));
    report
        .artifacts
        .push(Artifact::text("gradient_trace.csv", trace.finish()));
    report.artifacts.push(Artifact::text(
        "theorem.txt",
        format!("{}\n", if o.passed { "PASS" } else { "FAIL" }),
    ));
    report.theorem = Some(o);
    Ok(report)
}
