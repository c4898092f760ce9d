//! Dataset containers and generators.
//!
//! Every generator is a pure function of its arguments (seed included):
//! randomness comes from [`crate::rng`] streams, one per split, so the
//! samples of different splits never coincide.

mod dominoes;
mod idx;
mod shortcut;
mod toy2d;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Display;

use rand::seq::SliceRandom;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::seeded;

pub use dominoes::{make_dominoes, DominoMode, Dominoes};
pub use idx::{idx_dataset, parse_idx_images, parse_idx_labels, IdxImages, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use shortcut::{gen_shortcut, OodKind, ShortcutRecipe, ShortcutSplits, COMPLEX_BITS};
pub use toy2d::{
    complex_label, gen_toy2d, on_slab_edge, simple_label, slab_index, toy2d_counterfactual, toy2d_grid,
    toy2d_randomized, TOY2D_GRID_RESOLUTION, TOY2D_MARGIN, TOY2D_SLABS, TOY2D_SLAB_WIDTH,
};

/// Generation parameters, kept alongside the data for manifests and CSV
/// provenance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Recipe {
    pub generator: String,
    pub params: Vec<(String, String)>,
}

impl Recipe {
    pub fn new(generator: &str) -> Self {
        Self {
            generator: generator.to_string(),
            params: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Display) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    name: String,
    recipe: Recipe,
}

impl LabeledDataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize, name: &str, recipe: Recipe) -> Result<Self> {
        if features.rank() != 2 {
            return Err(Error::Data(format!(
                "features must be a matrix, got shape {:?}",
                features.shape()
            )));
        }
        if features.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            name: name.to_string(),
            recipe,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn recipe(&self) -> &Recipe {
        &self.recipe
    }

    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn unlabeled(&self) -> UnlabeledDataset {
        UnlabeledDataset {
            features: self.features.clone(),
            name: self.name.clone(),
            recipe: self.recipe.clone(),
        }
    }

    /// Keeps the listed classes and relabels them `0..k` in ascending order
    /// of the original class.
    pub fn filter_classes(&self, keep: &[usize]) -> Result<Self> {
        let mut keep: Vec<usize> = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.len() < 2 {
            return Err(Error::Data("at least two classes must be kept".into()));
        }
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep.contains(&self.labels[i])).collect();
        if rows.is_empty() {
            return Err(Error::Data(format!("no samples of classes {keep:?}")));
        }
        let labels = rows
            .iter()
            .map(|&i| keep.iter().position(|&c| c == self.labels[i]).unwrap())
            .collect();
        let keep_desc = keep.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
        Self::new(
            self.features.select_rows(&rows),
            labels,
            keep.len(),
            &self.name,
            self.recipe.clone().with("keep_classes", keep_desc),
        )
    }

    /// Shuffles the sample indices once and cuts them into consecutive,
    /// disjoint parts of the requested sizes.
    pub fn split_disjoint(&self, sizes: &[usize], seed: u64) -> Result<Vec<Self>> {
        let total: usize = sizes.iter().sum();
        if total > self.len() || sizes.contains(&0) {
            return Err(Error::Data(format!(
                "cannot cut {} samples into parts {sizes:?}",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut seeded(seed));
        let mut parts = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for (p, &size) in sizes.iter().enumerate() {
            let idx = &order[at..at + size];
            let (x, y) = self.batch(idx);
            parts.push(Self::new(
                x,
                y,
                self.num_classes,
                &format!("{}[part{p}]", self.name),
                self.recipe.clone().with("split_seed", seed).with("part", p),
            )?);
            at += size;
        }
        Ok(parts)
    }

    /// Per-class row indices.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDataset {
    features: Tensor,
    name: String,
    recipe: Recipe,
}

impl UnlabeledDataset {
    pub fn new(features: Tensor, name: &str, recipe: Recipe) -> Result<Self> {
        if features.rank() != 2 {
            return Err(Error::Data(format!(
                "features must be a matrix, got shape {:?}",
                features.shape()
            )));
        }
        Ok(Self {
            features,
            name: name.to_string(),
            recipe,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn recipe(&self) -> &Recipe {
        &self.recipe
    }

    pub fn batch(&self, indices: &[usize]) -> Tensor {
        self.features.select_rows(indices)
    }
}

/// Points `t * x1 + (1 - t) * x0` in the order of `ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationPath {
    pub ts: Vec<f64>,
    pub points: UnlabeledDataset,
}

pub fn gen_interpolation_path(x0: &[f64], x1: &[f64], ts: &[f64]) -> Result<InterpolationPath> {
    if ts.is_empty() {
        return Err(Error::Data("interpolation grid is empty".into()));
    }
    if x0.len() != x1.len() || x0.is_empty() {
        return Err(Error::Data(format!(
            "endpoints have dimensions {} and {}",
            x0.len(),
            x1.len()
        )));
    }
    let mut data = Vec::with_capacity(ts.len() * x0.len());
    for &t in ts {
        data.extend(x0.iter().zip(x1).map(|(&a, &b)| t * b + (1.0 - t) * a));
    }
    let features = Tensor::new(alloc::vec![ts.len(), x0.len()], data)?;
    let recipe = Recipe::new("interpolation")
        .with("points", ts.len())
        .with("t_min", ts[0])
        .with("t_max", ts[ts.len() - 1]);
    Ok(InterpolationPath {
        ts: ts.to_vec(),
        points: UnlabeledDataset::new(features, "interpolation", recipe)?,
    })
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// 121 evenly spaced points over `[-1, 2]`.
pub fn default_t_grid() -> Vec<f64> {
    linspace(-1.0, 2.0, 121)
}

/// Labelled triplet `(c, s, y)` with its probability mass.
pub type TripletMass = ([u8; 3], f64);
/// Input pair `(c, s)` with its probability mass.
pub type PairMass = ([u8; 2], f64);

/// The two-feature source law (`c = s = y`, mass 1/2 each) and the OOD law
/// on the two counterfactual input pairs.
pub fn gen_counterfactual_pmf() -> (Vec<TripletMass>, Vec<PairMass>) {
    let source = alloc::vec![([0, 0, 0], 0.5), ([1, 1, 1], 0.5)];
    let ood = alloc::vec![([0, 1], 0.5), ([1, 0], 0.5)];
    (source, ood)
}
