use dbat_core::datasets::{
    gen_shortcut, gen_toy2d, make_dominoes, toy2d_counterfactual, toy2d_randomized, DominoMode, LabeledDataset,
    UnlabeledDataset,
};
use dbat_core::rng::derive_seed;

use crate::config::{DominoOod, Experiment, RunConfig};
use crate::error::{Result, RunError};
use crate::io::load_idx;

const VAL_STREAM: u64 = 0x7661_6c00;
const TEST_STREAM: u64 = 0x7465_7374;
const SPLIT_STREAM: u64 = 0x7370_6c74;
const PAIR_STREAM: u64 = 0x7061_6972;

/// Datasets of one run. `test_complex` resamples the simple feature;
/// `ood` drives training and `ood_eval` is where OOD summaries are measured.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test_complex: LabeledDataset,
    pub test_iid: Option<LabeledDataset>,
    pub ood: UnlabeledDataset,
    pub ood_eval: UnlabeledDataset,
}

/// Builds the splits of `dataset` (toy2d, shortcut or dominoes-idx) from the
/// data settings and seed of `cfg`.
pub fn prepare(cfg: &RunConfig, dataset: Experiment) -> Result<Prepared> {
    match dataset {
        Experiment::Toy2d | Experiment::Interpolation => toy2d(cfg),
        Experiment::Shortcut => shortcut(cfg),
        Experiment::DominoesIdx => dominoes(cfg),
        other => Err(RunError::config(
            None,
            format!("experiment `{}` has no training data", other.as_str()),
        )),
    }
}

/// Validation and test sets both resample x1, from separate streams.
fn toy2d(cfg: &RunConfig) -> Result<Prepared> {
    let t = &cfg.data.toy;
    let (train, _) = gen_toy2d(t.n_per_class, cfg.seed)?;
    let ood = toy2d_counterfactual(t.grid_resolution)?;
    Ok(Prepared {
        val: toy2d_randomized(t.eval_n_per_class, derive_seed(cfg.seed, VAL_STREAM))?,
        test_complex: toy2d_randomized(t.eval_n_per_class, derive_seed(cfg.seed, TEST_STREAM))?,
        test_iid: None,
        train,
        ood_eval: ood.clone(),
        ood,
    })
}

fn shortcut(cfg: &RunConfig) -> Result<Prepared> {
    let s = gen_shortcut(&cfg.data.shortcut)?;
    Ok(Prepared {
        train: s.train,
        val: s.val,
        test_complex: s.test_complex,
        test_iid: Some(s.test_iid),
        ood: s.ood,
        ood_eval: s.ood_eval,
    })
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a std::path::Path> {
    p.as_deref()
        .ok_or_else(|| RunError::config(None, format!("missing required key `{key}`")))
}

/// Each image pool is cut into disjoint parts: half for training, a tenth
/// for validation, a fifth each for the test and unlabelled sets.
fn pool_parts(d: &LabeledDataset, seed: u64) -> Result<Vec<LabeledDataset>> {
    let n = d.len();
    let (train, val, test) = (n / 2, n / 10, n / 5);
    let parts = [train, val, test, n - train - val - test];
    if parts.contains(&0) {
        return Err(RunError::Data(format!(
            "{}: {n} images are too few to split into train, val, test and ood parts",
            d.name()
        )));
    }
    Ok(d.split_disjoint(&parts, seed)?)
}

fn labeled(d: dbat_core::datasets::Dominoes) -> Result<LabeledDataset> {
    d.labeled()
        .ok_or_else(|| RunError::Internal("expected labelled dominoes".into()))
}

fn dominoes(cfg: &RunConfig) -> Result<Prepared> {
    let d = &cfg.data.dominoes;
    let top_images = required(&d.top_images, "data.top_images")?;
    let top_labels = required(&d.top_labels, "data.top_labels")?;
    let bottom_images = required(&d.bottom_images, "data.bottom_images")?;
    let bottom_labels = required(&d.bottom_labels, "data.bottom_labels")?;
    let top = load_idx(top_images, top_labels, &d.top_classes, "top")?;
    let bottom = load_idx(bottom_images, bottom_labels, &d.bottom_classes, "bottom")?;
    let tops = pool_parts(&top, derive_seed(cfg.seed, SPLIT_STREAM))?;
    let bottoms = pool_parts(&bottom, derive_seed(cfg.seed, SPLIT_STREAM + 1))?;
    let pair = |i: u64| derive_seed(cfg.seed, PAIR_STREAM + i);

    let train = labeled(make_dominoes(&tops[0], &bottoms[0], DominoMode::Aligned, pair(0))?)?;
    let val = labeled(make_dominoes(
        &tops[1],
        &bottoms[1],
        DominoMode::RandomizedTop,
        pair(1),
    )?)?;
    let test_complex = labeled(make_dominoes(
        &tops[2],
        &bottoms[2],
        DominoMode::RandomizedTop,
        pair(2),
    )?)?;
    let test_iid = labeled(make_dominoes(&tops[2], &bottoms[2], DominoMode::Aligned, pair(3))?)?;
    let ood = match d.ood {
        DominoOod::RandomizedTop => make_dominoes(&tops[3], &bottoms[3], DominoMode::RandomizedTop, pair(4))?,
        DominoOod::HeldOutBottom => {
            let held = load_idx(bottom_images, bottom_labels, &d.ood_bottom_classes, "bottom-held-out")?;
            make_dominoes(&tops[3], &held, DominoMode::HeldOutBottom, pair(4))?
        }
    }
    .unlabeled();
    Ok(Prepared {
        train,
        val,
        test_complex,
        test_iid: Some(test_iid),
        ood_eval: ood.clone(),
        ood,
    })
}
