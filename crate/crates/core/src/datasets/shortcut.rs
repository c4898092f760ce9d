//! Two-block shortcut data.
//!
//! Features are `[simple block | complex block]`. The simple block is one of
//! two orthogonal 0/1 templates (coordinate `j` is lit for class `j % 2`),
//! readable by a single linear unit. The complex block carries four bits;
//! coordinate `j` holds bit `j % 4` as `±1` flipped by a fixed random sign
//! mask, and the class is the parity of the four bits, so no single
//! coordinate and no linear rule predicts it.
//!
//! The sixteen bit patterns are split once per seed: twelve (six of each
//! parity) appear in training and the four others are reserved for the
//! held-out OOD kind.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{LabeledDataset, Recipe, UnlabeledDataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, standard_normal};

pub const COMPLEX_BITS: usize = 4;
const PATTERNS: usize = 1 << COMPLEX_BITS;
const HELD_OUT_PER_PARITY: usize = 2;

const PATTERN_STREAM: u64 = 0x5c00;
const TRAIN_STREAM: u64 = 0x5c01;
const TEST_STREAM: u64 = 0x5c02;
const VAL_STREAM: u64 = 0x5c03;
const IID_STREAM: u64 = 0x5c04;
const OOD_STREAM: u64 = 0x5c05;
const OOD_EVAL_STREAM: u64 = 0x5c06;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodKind {
    /// Same law as the complex test split, unlabelled.
    TargetLike,
    /// Complex blocks built from patterns never used in training.
    HeldOutPatterns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutRecipe {
    pub n_train: usize,
    pub n_test: usize,
    pub n_val: usize,
    pub n_ood: usize,
    pub simple_dim: usize,
    pub complex_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub ood_kind: OodKind,
}

impl Default for ShortcutRecipe {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_test: 1000,
            n_val: 500,
            n_ood: 1000,
            simple_dim: 4,
            complex_dim: 8,
            noise_sigma: 0.05,
            seed: 0,
            ood_kind: OodKind::TargetLike,
        }
    }
}

impl ShortcutRecipe {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("n_val", self.n_val),
            ("n_ood", self.n_ood),
        ] {
            if n == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.simple_dim < 4 || self.complex_dim < 4 {
            return Err(Error::InvalidConfig(format!(
                "block dimensions must be at least 4, got simple {} and complex {}",
                self.simple_dim, self.complex_dim
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be a nonnegative number, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.simple_dim + self.complex_dim
    }

    fn describe(&self, split: &str) -> Recipe {
        Recipe::new("shortcut")
            .with("split", split)
            .with("n_train", self.n_train)
            .with("n_test", self.n_test)
            .with("n_val", self.n_val)
            .with("n_ood", self.n_ood)
            .with("simple_dim", self.simple_dim)
            .with("complex_dim", self.complex_dim)
            .with("noise_sigma", self.noise_sigma)
            .with("seed", self.seed)
            .with(
                "ood_kind",
                match self.ood_kind {
                    OodKind::TargetLike => "target-like",
                    OodKind::HeldOutPatterns => "held-out-patterns",
                },
            )
    }
}

/// All splits of one recipe. `test_iid` is a fresh aligned sample and
/// `ood_eval` a fresh draw from the OOD law, kept apart from the `ood` set
/// used in training.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutSplits {
    pub train: LabeledDataset,
    pub test_complex: LabeledDataset,
    pub val: LabeledDataset,
    pub test_iid: LabeledDataset,
    pub ood: UnlabeledDataset,
    pub ood_eval: UnlabeledDataset,
}

struct Layout {
    mask: Vec<f64>,
    /// Training patterns by parity.
    train: [Vec<usize>; 2],
    /// Held-out patterns by parity.
    held_out: [Vec<usize>; 2],
}

fn parity(pattern: usize) -> usize {
    (pattern.count_ones() % 2) as usize
}

fn layout(recipe: &ShortcutRecipe) -> Layout {
    let mut rng = seeded(derive_seed(recipe.seed, PATTERN_STREAM));
    let mask = (0..recipe.complex_dim)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut train = [Vec::new(), Vec::new()];
    let mut held_out = [Vec::new(), Vec::new()];
    for p in 0..2 {
        let mut group: Vec<usize> = (0..PATTERNS).filter(|&x| parity(x) == p).collect();
        group.shuffle(&mut rng);
        held_out[p] = group[..HELD_OUT_PER_PARITY].to_vec();
        train[p] = group[HELD_OUT_PER_PARITY..].to_vec();
    }
    Layout { mask, train, held_out }
}

#[derive(Clone, Copy)]
enum Simple {
    Aligned,
    Random,
}

struct Draw<'a> {
    recipe: &'a ShortcutRecipe,
    layout: &'a Layout,
    simple: Simple,
    held_out: bool,
}

impl Draw<'_> {
    fn sample(&self, n: usize, stream: u64) -> Result<(Tensor, Vec<usize>)> {
        let r = self.recipe;
        let mut rng = seeded(derive_seed(r.seed, stream));
        let d = r.dim();
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let template = match self.simple {
                Simple::Aligned => class,
                Simple::Random => usize::from(rng.gen::<bool>()),
            };
            data.extend((0..r.simple_dim).map(|j| f64::from(u8::from(j % 2 == template))));
            let pool = if self.held_out {
                &self.layout.held_out[class]
            } else {
                &self.layout.train[class]
            };
            let pattern = pool[rng.gen_range(0..pool.len())];
            data.extend((0..r.complex_dim).map(|j| {
                let bit = (pattern >> (j % COMPLEX_BITS)) & 1;
                let sign = if bit == 1 { 1.0 } else { -1.0 };
                sign * self.layout.mask[j]
            }));
            labels.push(class);
        }
        if r.noise_sigma > 0.0 {
            for v in &mut data {
                *v += r.noise_sigma * standard_normal(&mut rng);
            }
        }
        Ok((Tensor::new(alloc::vec![n, d], data)?, labels))
    }

    fn labeled(&self, n: usize, stream: u64, name: &str) -> Result<LabeledDataset> {
        let (x, y) = self.sample(n, stream)?;
        LabeledDataset::new(x, y, 2, name, self.recipe.describe(name))
    }

    fn unlabeled(&self, n: usize, stream: u64, name: &str) -> Result<UnlabeledDataset> {
        let (x, _) = self.sample(n, stream)?;
        UnlabeledDataset::new(x, name, self.recipe.describe(name))
    }
}

pub fn gen_shortcut(recipe: &ShortcutRecipe) -> Result<ShortcutSplits> {
    recipe.validate()?;
    let layout = layout(recipe);
    let draw = |simple, held_out| Draw {
        recipe,
        layout: &layout,
        simple,
        held_out,
    };
    let aligned = draw(Simple::Aligned, false);
    let randomized = draw(Simple::Random, false);
    let ood = match recipe.ood_kind {
        OodKind::TargetLike => draw(Simple::Random, false),
        OodKind::HeldOutPatterns => draw(Simple::Random, true),
    };
    Ok(ShortcutSplits {
        train: aligned.labeled(recipe.n_train, TRAIN_STREAM, "train")?,
        test_complex: randomized.labeled(recipe.n_test, TEST_STREAM, "test-complex")?,
        val: randomized.labeled(recipe.n_val, VAL_STREAM, "val")?,
        test_iid: aligned.labeled(recipe.n_test, IID_STREAM, "test-iid")?,
        ood: ood.unlabeled(recipe.n_ood, OOD_STREAM, "ood")?,
        ood_eval: ood.unlabeled(recipe.n_ood, OOD_EVAL_STREAM, "ood-eval")?,
    })
}
