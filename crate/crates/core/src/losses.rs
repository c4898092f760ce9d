//! Classification loss, agreement penalties and the combined objective.
//!
//! The binary agreement between two predictive distributions `p`, `q` over
//! `{0, 1}` is `-log(p0 q1 + p1 q0)`: the log-probability that two
//! independent draws disagree. It vanishes when the models confidently
//! disagree and grows without bound when they confidently agree, so the
//! inner term is clamped from below.
//!
//! All losses are batch means.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{argmax, Graph, Tensor, Var};
use crate::error::{shape_err, Error, Result};

pub const DEFAULT_CLAMP_EPSILON: f64 = 1e-12;

/// Which model's predicted class defines the two bins of a k-class
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinarizationAnchor {
    /// argmax of the model being trained
    CurrentModel,
    /// argmax of the first (oldest) previous model
    FirstModel,
}

/// Divisor applied to the sum over previous models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreviousNormalization {
    /// divide by the number of previous models `m`
    Count,
    /// divide by `m - 1`; undefined for a single previous model
    CountMinusOne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementConfig {
    pub alpha: f64,
    pub anchor: BinarizationAnchor,
    pub clamp_epsilon: f64,
    pub normalization: PreviousNormalization,
}

impl Default for AgreementConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            anchor: BinarizationAnchor::CurrentModel,
            clamp_epsilon: DEFAULT_CLAMP_EPSILON,
            normalization: PreviousNormalization::Count,
        }
    }
}

impl AgreementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        if !(self.clamp_epsilon > 0.0 && self.clamp_epsilon < 1e-3) {
            return Err(Error::InvalidConfig(format!(
                "clamp epsilon must lie in (0, 1e-3), got {}",
                self.clamp_epsilon
            )));
        }
        Ok(())
    }
}

fn two_dim(graph: &Graph, v: Var, op: &'static str) -> Result<(usize, usize)> {
    let s = graph.value(v).shape();
    if s.len() != 2 {
        return Err(shape_err(op, &[s]));
    }
    Ok((s[0], s[1]))
}

/// `[n, k]` mask with a one at `(i, classes[i])`.
fn one_hot(classes: &[usize], k: usize) -> Result<Tensor> {
    let mut data = vec![0.0; classes.len() * k];
    for (i, &c) in classes.iter().enumerate() {
        data[i * k + c] = 1.0;
    }
    Tensor::new(vec![classes.len(), k], data)
}

/// Mean of `-log(max(probs[i, labels[i]], eps))`.
pub fn cross_entropy(graph: &mut Graph, probs: Var, labels: &[usize], eps: f64) -> Result<Var> {
    let (n, k) = two_dim(graph, probs, "cross_entropy")?;
    if labels.len() != n {
        return Err(shape_err("cross_entropy", &[&[n, k], &[labels.len()]]));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Data(format!("label {bad} out of range for {k} classes")));
    }
    let mask = graph.constant(one_hot(labels, k)?);
    let picked = graph.mul(probs, mask)?;
    let picked = graph.sum_axis(picked, 1)?;
    neg_mean_log(graph, picked, eps)
}

fn neg_mean_log(graph: &mut Graph, inner: Var, eps: f64) -> Result<Var> {
    let clamped = graph.clamp_min(inner, eps)?;
    let logs = graph.log(clamped)?;
    let m = graph.mean(logs)?;
    graph.scale(m, -1.0)
}

/// Per-sample disagreement probability `p1[0] p2[1] + p1[1] p2[0]` for two
/// `[n, 2]` batches, before clamping.
pub fn disagreement_mass_binary(graph: &mut Graph, p1: Var, p2: Var) -> Result<Var> {
    let a = two_dim(graph, p1, "agreement_binary")?;
    let b = two_dim(graph, p2, "agreement_binary")?;
    if a != b || a.1 != 2 {
        return Err(shape_err(
            "agreement_binary",
            &[graph.value(p1).shape(), graph.value(p2).shape()],
        ));
    }
    let p1_0 = graph.slice(p1, 1, 0, 1)?;
    let p1_1 = graph.slice(p1, 1, 1, 2)?;
    let p2_0 = graph.slice(p2, 1, 0, 1)?;
    let p2_1 = graph.slice(p2, 1, 1, 2)?;
    let left = graph.mul(p1_0, p2_1)?;
    let right = graph.mul(p1_1, p2_0)?;
    let inner = graph.add(left, right)?;
    graph.sum_axis(inner, 1)
}

/// Binary agreement penalty; gradients flow into both arguments.
pub fn agreement_binary(graph: &mut Graph, p1: Var, p2: Var, eps: f64) -> Result<Var> {
    let inner = disagreement_mass_binary(graph, p1, p2)?;
    neg_mean_log(graph, inner, eps)
}

/// Binarized disagreement mass between `other` and `current` with bins
/// `{anchor class, everything else}`.
fn binarized_mass(graph: &mut Graph, other: Var, current: Var, anchor: &[usize]) -> Result<Var> {
    let (n, k) = two_dim(graph, current, "agreement_multiclass")?;
    let mask = one_hot(anchor, k)?;
    let complement: Vec<f64> = mask.data().iter().map(|v| 1.0 - v).collect();
    let pos = graph.constant(mask);
    let neg = graph.constant(Tensor::new(vec![n, k], complement)?);
    let bin = |graph: &mut Graph, p: Var, m: Var| -> Result<Var> {
        let masked = graph.mul(p, m)?;
        graph.sum_axis(masked, 1)
    };
    let other_pos = bin(graph, other, pos)?;
    let other_neg = bin(graph, other, neg)?;
    let cur_pos = bin(graph, current, pos)?;
    let cur_neg = bin(graph, current, neg)?;
    let left = graph.mul(other_pos, cur_neg)?;
    let right = graph.mul(other_neg, cur_pos)?;
    graph.add(left, right)
}

/// Multi-class agreement of `current` with the frozen `previous` models.
///
/// Each distribution is reduced to `(p[y], 1 - p[y])` where `y` is the argmax
/// of the anchor model, the per-model penalties are summed and scaled per
/// `cfg.normalization`, then averaged over the batch. Previous outputs are
/// detached, so only `current` receives gradients.
pub fn agreement_multiclass(graph: &mut Graph, current: Var, previous: &[Var], cfg: &AgreementConfig) -> Result<Var> {
    if previous.is_empty() {
        return Err(Error::Contract(
            "agreement_multiclass needs at least one previous model".into(),
        ));
    }
    let (n, k) = two_dim(graph, current, "agreement_multiclass")?;
    for &p in previous {
        if graph.value(p).shape() != [n, k] {
            return Err(shape_err("agreement_multiclass", &[&[n, k], graph.value(p).shape()]));
        }
    }
    let divisor = match cfg.normalization {
        PreviousNormalization::Count => previous.len(),
        PreviousNormalization::CountMinusOne => {
            if previous.len() < 2 {
                return Err(Error::InvalidConfig(
                    "count-minus-one normalization needs at least two previous models".into(),
                ));
            }
            previous.len() - 1
        }
    };
    let anchor_source = match cfg.anchor {
        BinarizationAnchor::CurrentModel => current,
        BinarizationAnchor::FirstModel => previous[0],
    };
    let anchor = graph.value(anchor_source).argmax_rows();
    let mut total: Option<Var> = None;
    for &p in previous {
        let frozen = graph.detach(p);
        let mass = binarized_mass(graph, frozen, current, &anchor)?;
        let clamped = graph.clamp_min(mass, cfg.clamp_epsilon)?;
        let logs = graph.log(clamped)?;
        total = Some(match total {
            None => logs,
            Some(t) => graph.add(t, logs)?,
        });
    }
    let total = total.expect("previous is non-empty");
    let m = graph.mean(total)?;
    graph.scale(m, -1.0 / divisor as f64)
}

/// Agreement between two models that both receive gradients; used by
/// simultaneous training. Binary inputs use the exact two-class formula,
/// wider ones are binarized on the argmax of `b`.
pub fn agreement_pair(graph: &mut Graph, a: Var, b: Var, eps: f64) -> Result<Var> {
    let (_, k) = two_dim(graph, b, "agreement_pair")?;
    if k == 2 {
        return agreement_binary(graph, a, b, eps);
    }
    let anchor = graph.value(b).argmax_rows();
    let mass = binarized_mass(graph, a, b, &anchor)?;
    neg_mean_log(graph, mass, eps)
}

/// `task + alpha * agreement`. With `alpha == 0` the task node itself is
/// returned, so the objective is bit-identical to plain risk minimisation.
pub fn dbat_objective(graph: &mut Graph, task: Var, agreement: Var, alpha: f64) -> Result<Var> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(task);
    }
    let weighted = graph.scale(agreement, alpha)?;
    graph.add(task, weighted)
}

/// Scalar inner term of the binary agreement, for plain slices.
pub fn disagreement_probability(p1: &[f64], p2: &[f64]) -> f64 {
    p1[0] * p2[1] + p1[1] * p2[0]
}

/// Anchor class of a single row, as used by the multi-class penalty.
pub fn anchor_class(row: &[f64]) -> usize {
    argmax(row)
}
