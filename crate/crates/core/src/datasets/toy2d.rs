//! Two-feature toy problem with a simple and a complex predictive feature.
//!
//! `x1` separates the classes with a margin (`x1 < -0.1` is class 0,
//! `x1 > 0.1` is class 1). `x2` is cut into five horizontal slabs of width
//! 0.4 over `[-1, 1]` whose labels alternate `0, 1, 0, 1, 0`. In the training
//! data both features agree; the randomised set keeps the slab label and
//! draws `x1` independently of it.

use alloc::vec::Vec;

use rand::Rng;

use super::{LabeledDataset, Recipe, UnlabeledDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Prng};

pub const TOY2D_MARGIN: f64 = 0.1;
pub const TOY2D_SLABS: usize = 5;
pub const TOY2D_SLAB_WIDTH: f64 = 0.4;
pub const TOY2D_GRID_RESOLUTION: usize = 41;

const TRAIN_STREAM: u64 = 0x7459_0001;
const RANDOMIZED_STREAM: u64 = 0x7459_0002;

pub fn slab_index(x2: f64) -> usize {
    let raw = libm::floor((x2 + 1.0) / TOY2D_SLAB_WIDTH);
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(TOY2D_SLABS - 1)
    }
}

pub fn simple_label(x1: f64) -> usize {
    usize::from(x1 > 0.0)
}

pub fn complex_label(x2: f64) -> usize {
    slab_index(x2) % 2
}

fn sample_x2(rng: &mut Prng, class: usize) -> f64 {
    let slabs: Vec<usize> = (0..TOY2D_SLABS).filter(|s| s % 2 == class).collect();
    let slab = slabs[rng.gen_range(0..slabs.len())];
    let lo = -1.0 + slab as f64 * TOY2D_SLAB_WIDTH;
    rng.gen_range(lo..lo + TOY2D_SLAB_WIDTH)
}

fn sample_x1(rng: &mut Prng, class: usize) -> f64 {
    let magnitude = rng.gen_range(TOY2D_MARGIN..=1.0);
    if class == 1 {
        magnitude
    } else {
        -magnitude
    }
}

fn check_size(n_per_class: usize) -> Result<()> {
    if n_per_class < 10 {
        return Err(Error::InvalidConfig(alloc::format!(
            "toy2d needs at least 10 samples per class, got {n_per_class}"
        )));
    }
    Ok(())
}

/// Training samples (labels alternate, so classes are exactly balanced) and
/// the full lattice over `[-1, 1]^2`.
pub fn gen_toy2d(n_per_class: usize, seed: u64) -> Result<(LabeledDataset, UnlabeledDataset)> {
    check_size(n_per_class)?;
    let mut rng = seeded(derive_seed(seed, TRAIN_STREAM));
    let n = 2 * n_per_class;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        data.push(sample_x1(&mut rng, class));
        data.push(sample_x2(&mut rng, class));
        labels.push(class);
    }
    let recipe = Recipe::new("toy2d").with("n_per_class", n_per_class).with("seed", seed);
    let train = LabeledDataset::new(Tensor::new(alloc::vec![n, 2], data)?, labels, 2, "toy2d", recipe)?;
    Ok((train, toy2d_grid(TOY2D_GRID_RESOLUTION)?))
}

/// Slab-labelled samples whose `x1` is independent of the label.
pub fn toy2d_randomized(n_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    check_size(n_per_class)?;
    let mut rng = seeded(derive_seed(seed, RANDOMIZED_STREAM));
    let n = 2 * n_per_class;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let side = usize::from(rng.gen::<bool>());
        data.push(sample_x1(&mut rng, side));
        data.push(sample_x2(&mut rng, class));
        labels.push(class);
    }
    let recipe = Recipe::new("toy2d-randomized")
        .with("n_per_class", n_per_class)
        .with("seed", seed);
    LabeledDataset::new(
        Tensor::new(alloc::vec![n, 2], data)?,
        labels,
        2,
        "toy2d-randomized",
        recipe,
    )
}

fn lattice(resolution: usize) -> Result<Vec<[f64; 2]>> {
    if resolution < 2 {
        return Err(Error::InvalidConfig("grid resolution must be at least 2".into()));
    }
    let axis = super::linspace(-1.0, 1.0, resolution);
    let mut points = Vec::with_capacity(resolution * resolution);
    for &x2 in &axis {
        for &x1 in &axis {
            points.push([x1, x2]);
        }
    }
    Ok(points)
}

fn to_unlabeled(points: &[[f64; 2]], name: &str, recipe: Recipe) -> Result<UnlabeledDataset> {
    let data = points.iter().flat_map(|p| p.iter().copied()).collect();
    UnlabeledDataset::new(Tensor::new(alloc::vec![points.len(), 2], data)?, name, recipe)
}

/// `resolution x resolution` lattice over `[-1, 1]^2`, row-major in `x2`.
pub fn toy2d_grid(resolution: usize) -> Result<UnlabeledDataset> {
    let points = lattice(resolution)?;
    to_unlabeled(
        &points,
        "toy2d-grid",
        Recipe::new("toy2d-grid").with("resolution", resolution),
    )
}

/// True when `x2` sits on the boundary between two slabs, where the slab
/// label is decided by rounding alone.
pub fn on_slab_edge(x2: f64) -> bool {
    let u = (x2 + 1.0) / TOY2D_SLAB_WIDTH;
    let nearest = libm::round(u);
    nearest >= 1.0 && nearest <= (TOY2D_SLABS - 1) as f64 && libm::fabs(u - nearest) < 1e-9
}

/// Lattice points outside the margin where the two features disagree: the
/// regions never seen in training. Points on a slab edge are left out.
pub fn toy2d_counterfactual(resolution: usize) -> Result<UnlabeledDataset> {
    let points: Vec<[f64; 2]> = lattice(resolution)?
        .into_iter()
        .filter(|p| {
            libm::fabs(p[0]) >= TOY2D_MARGIN && !on_slab_edge(p[1]) && simple_label(p[0]) != complex_label(p[1])
        })
        .collect();
    to_unlabeled(
        &points,
        "toy2d-ood",
        Recipe::new("toy2d-counterfactual").with("resolution", resolution),
    )
}
