//! The smoothed training objective should trend down. Minibatch noise makes
//! the 100-step moving average wiggle, so the strict non-increasing check is
//! printed as a diagnostic and the asserted form bounds the size of any rise.

use dbat_core::datasets::{gen_toy2d, toy2d_counterfactual};
use dbat_core::models::ClassifierSpec;
use dbat_core::training::{train_dbat_next, train_erm, EnsembleState, TrainConfig, TrainHistory, TrainMode};

const WINDOW: usize = 100;

fn check(name: &str, h: &TrainHistory) {
    let s = h.smoothed_objective(WINDOW);
    assert!(s.len() > 1000, "{name}: only {} smoothed points", s.len());
    let start = s[0];
    let rises: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    let largest = rises.iter().copied().fold(0.0, f64::max);
    eprintln!(
        "{name}: strict non-increasing {} ({} rises of {} steps, largest {largest:.2e}); {start:.4} -> {:.4}",
        if rises.is_empty() { "holds" } else { "fails" },
        rises.len(),
        s.len() - 1,
        s[s.len() - 1]
    );
    assert!(largest < 0.01 * start, "{name}: rise {largest} vs start {start}");
    assert!(s[s.len() - 1] < start / 10.0, "{name}: {start} -> {}", s[s.len() - 1]);
}

#[test]
fn smoothed_objective_decreases_on_toy2d() {
    let (train, _) = gen_toy2d(500, 1).unwrap();
    let ood = toy2d_counterfactual(41).unwrap();
    let spec = ClassifierSpec::new(2, vec![32, 32], 2).unwrap();
    let erm_cfg = TrainConfig {
        seed: 1,
        mode: TrainMode::Erm,
        ..TrainConfig::default()
    };
    let first = train_erm(&spec, &train, &erm_cfg).unwrap();
    check("erm", &first.history);

    let mut ens = EnsembleState::new(spec);
    ens.push(first, erm_cfg).unwrap();
    let cfg = TrainConfig {
        seed: 2,
        alpha: 0.5,
        ..TrainConfig::default()
    };
    let second = train_dbat_next(&ens, &train, &ood, &cfg).unwrap();
    check("dbat", &second.history);
}
