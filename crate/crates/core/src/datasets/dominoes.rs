//! Domino composition: each sample is a `top` row concatenated with a
//! `bottom` row.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{LabeledDataset, Recipe, UnlabeledDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DominoMode {
    /// Top and bottom share the class; the label is that class.
    Aligned,
    /// Label from the bottom; the top comes from a uniformly drawn class.
    RandomizedTop,
    /// Unlabelled; bottoms come from classes kept out of training.
    HeldOutBottom,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dominoes {
    Labeled(LabeledDataset),
    Unlabeled(UnlabeledDataset),
}

impl Dominoes {
    pub fn labeled(self) -> Option<LabeledDataset> {
        match self {
            Self::Labeled(d) => Some(d),
            Self::Unlabeled(_) => None,
        }
    }

    pub fn unlabeled(self) -> UnlabeledDataset {
        match self {
            Self::Labeled(d) => d.unlabeled(),
            Self::Unlabeled(d) => d,
        }
    }
}

fn concat(top: &[f64], bottom: &[f64], out: &mut Vec<f64>) {
    out.extend_from_slice(top);
    out.extend_from_slice(bottom);
}

/// Top row for every bottom row. Within each bottom class the top classes
/// are dealt in equal shares and shuffled, so the top class is uniform and
/// uncorrelated with the label in every sample, not just in expectation.
fn stratified_tops(
    bottom: &LabeledDataset,
    order: &[usize],
    top_classes: &[Vec<usize>],
    rng: &mut crate::rng::Prng,
) -> Vec<usize> {
    let pools: Vec<&Vec<usize>> = top_classes.iter().filter(|c| !c.is_empty()).collect();
    let mut deals: Vec<Vec<usize>> = Vec::new();
    for class in 0..bottom.num_classes() {
        let count = order.iter().filter(|&&b| bottom.labels()[b] == class).count();
        let mut deal: Vec<usize> = (0..count).map(|i| i % pools.len()).collect();
        deal.shuffle(rng);
        deals.push(deal);
    }
    order
        .iter()
        .map(|&b| {
            let pool = pools[deals[bottom.labels()[b]].pop().unwrap()];
            pool[rng.gen_range(0..pool.len())]
        })
        .collect()
}

/// Pairs top and bottom rows. In aligned mode class `c` contributes
/// `min(#top_c, #bottom_c)` pairs, and both inputs must be binary. The
/// result is shuffled with `seed`.
pub fn make_dominoes(top: &LabeledDataset, bottom: &LabeledDataset, mode: DominoMode, seed: u64) -> Result<Dominoes> {
    let mut rng = seeded(seed);
    let dim = top.dim() + bottom.dim();
    let top_classes = top.class_indices();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    match mode {
        DominoMode::Aligned => {
            if top.num_classes() != 2 || bottom.num_classes() != 2 {
                return Err(Error::Data(format!(
                    "aligned dominoes need binary labels, got {} and {} classes",
                    top.num_classes(),
                    bottom.num_classes()
                )));
            }
            let bottom_classes = bottom.class_indices();
            let mut pairs = Vec::new();
            for c in 0..2 {
                for (&t, &b) in top_classes[c].iter().zip(&bottom_classes[c]) {
                    pairs.push((t, b, c));
                }
            }
            pairs.shuffle(&mut rng);
            for (t, b, c) in pairs {
                concat(top.features().row(t), bottom.features().row(b), &mut data);
                labels.push(c);
            }
        }
        DominoMode::RandomizedTop | DominoMode::HeldOutBottom => {
            let mut order: Vec<usize> = (0..bottom.len()).collect();
            order.shuffle(&mut rng);
            let tops = stratified_tops(bottom, &order, &top_classes, &mut rng);
            for (b, t) in order.into_iter().zip(tops) {
                concat(top.features().row(t), bottom.features().row(b), &mut data);
                labels.push(bottom.labels()[b]);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Data("no domino pairs could be formed".into()));
    }
    let name = match mode {
        DominoMode::Aligned => "dominoes-aligned",
        DominoMode::RandomizedTop => "dominoes-randomized-top",
        DominoMode::HeldOutBottom => "dominoes-held-out-bottom",
    };
    let recipe = Recipe::new("dominoes")
        .with("mode", name)
        .with("top", top.name())
        .with("bottom", bottom.name())
        .with("seed", seed);
    let features = Tensor::new(alloc::vec![labels.len(), dim], data)?;
    Ok(match mode {
        DominoMode::HeldOutBottom => Dominoes::Unlabeled(UnlabeledDataset::new(features, name, recipe)?),
        _ => Dominoes::Labeled(LabeledDataset::new(
            features,
            labels,
            bottom.num_classes(),
            name,
            recipe,
        )?),
    })
}
