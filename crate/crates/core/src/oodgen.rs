//! Synthetic OOD inputs and the two-feature posterior oracle.
//!
//! [`pgd_disagreement`] perturbs an input inside a norm ball to lower the
//! agreement of two frozen models. It is meant for low-dimensional inputs;
//! in high dimensions the perturbations it finds are rarely meaningful.
//!
//! The posterior oracle works on binary features `c`, `s` and label `y`.
//! Training data has `c = s = y`; the OOD law puts equal mass on the two
//! counterfactual inputs `(0, 1)` and `(1, 0)`. With the first model fixed at
//! `P(Y=1 | c, s) = c`, the second model must agree on the training inputs
//! and minimise its agreement on the OOD inputs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Tensor};
use crate::datasets::gen_counterfactual_pmf;
use crate::error::{shape_err, Error, Result};
use crate::losses::{agreement_binary, agreement_pair, DEFAULT_CLAMP_EPSILON};
use crate::models::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    LInf,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub norm: Norm,
}

impl PgdConfig {
    /// 40 sign steps of size `epsilon / 10` in the l-infinity ball.
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            steps: 40,
            step_size: epsilon / 10.0,
            norm: Norm::LInf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        if !(self.step_size >= 0.0 && self.step_size <= self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "step size {} must lie in [0, epsilon = {}]",
                self.step_size, self.epsilon
            )));
        }
        Ok(())
    }
}

/// Agreement of the two models at a single input, and its gradient with
/// respect to the input.
fn agreement_at(h1: &Classifier, h2: &Classifier, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let xv = g.param(Tensor::new(vec![1, x.len()], x.to_vec())?);
    let p1 = h1.attach_frozen(&mut g);
    let p2 = h2.attach_frozen(&mut g);
    let o1 = h1.forward(&mut g, &p1, xv)?;
    let o2 = h2.forward(&mut g, &p2, xv)?;
    let a = if h1.spec().num_classes == 2 {
        agreement_binary(&mut g, o1, o2, DEFAULT_CLAMP_EPSILON)?
    } else {
        agreement_pair(&mut g, o2, o1, DEFAULT_CLAMP_EPSILON)?
    };
    let grads = g.backward(a)?;
    let grad = grads
        .get(xv)
        .map(|t| t.data().to_vec())
        .unwrap_or_else(|| vec![0.0; x.len()]);
    Ok((g.value(a).data()[0], grad))
}

/// Projected descent on the agreement of `h1` and `h2` over `x + delta`,
/// `|delta| <= epsilon`. Returns the visited point with the lowest agreement
/// (so never worse than `x` itself). The models are only read.
pub fn pgd_disagreement(h1: &Classifier, h2: &Classifier, x: &[f64], cfg: &PgdConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let d = h1.spec().input_dim;
    if x.len() != d || h2.spec().input_dim != d || h2.spec().num_classes != h1.spec().num_classes {
        return Err(shape_err(
            "pgd_disagreement",
            &[&[x.len()], &[d], &[h2.spec().input_dim]],
        ));
    }
    let mut delta = vec![0.0; d];
    let point = |delta: &[f64]| -> Vec<f64> { x.iter().zip(delta).map(|(a, b)| a + b).collect() };
    let (mut best_value, mut grad) = agreement_at(h1, h2, x)?;
    let mut best = x.to_vec();
    if cfg.epsilon == 0.0 || cfg.step_size == 0.0 {
        return Ok(best);
    }
    for _ in 0..cfg.steps {
        match cfg.norm {
            Norm::LInf => {
                for (di, gi) in delta.iter_mut().zip(&grad) {
                    let step = if *gi > 0.0 {
                        cfg.step_size
                    } else if *gi < 0.0 {
                        -cfg.step_size
                    } else {
                        0.0
                    };
                    *di = (*di - step).clamp(-cfg.epsilon, cfg.epsilon);
                }
            }
            Norm::L2 => {
                let gn = libm::sqrt(grad.iter().map(|v| v * v).sum::<f64>());
                if gn == 0.0 {
                    break;
                }
                for (di, gi) in delta.iter_mut().zip(&grad) {
                    *di -= cfg.step_size * gi / gn;
                }
                let dn = libm::sqrt(delta.iter().map(|v| v * v).sum::<f64>());
                if dn > cfg.epsilon {
                    let s = cfg.epsilon / dn;
                    for di in &mut delta {
                        *di *= s;
                    }
                }
            }
        }
        let candidate = point(&delta);
        let (value, g) = agreement_at(h1, h2, &candidate)?;
        if value < best_value {
            best_value = value;
            best = candidate;
        }
        grad = g;
    }
    Ok(best)
}

/// `p[c][s] = P(Y = 1 | C = c, S = s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorTable {
    pub p: [[f64; 2]; 2],
}

impl PosteriorTable {
    pub fn new(p: [[f64; 2]; 2]) -> Result<Self> {
        if p.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain {
                op: "posterior_table",
                detail: format!("entries must lie in [0, 1], got {p:?}"),
            });
        }
        Ok(Self { p })
    }

    /// The first model: relies on `c` alone.
    pub fn reference() -> Self {
        Self {
            p: [[0.0, 0.0], [1.0, 1.0]],
        }
    }

    pub fn get(&self, c: usize, s: usize) -> f64 {
        self.p[c][s]
    }
}

/// Expected agreement of `p1` and `p2` under the OOD law, with the inner
/// disagreement probability clamped at `eps`.
pub fn theorem_objective(p1: &PosteriorTable, p2: &PosteriorTable, eps: f64) -> f64 {
    let (_, ood) = gen_counterfactual_pmf();
    ood.iter()
        .map(|&([c, s], mass)| {
            let (c, s) = (usize::from(c), usize::from(s));
            let a = p1.get(c, s);
            let b = p2.get(c, s);
            let disagree = (1.0 - a) * b + a * (1.0 - b);
            -mass * libm::log(disagree.max(eps))
        })
        .sum()
}

/// The second model agreeing with [`PosteriorTable::reference`] on the
/// training inputs, with free entries `(0, 1) -> a` and `(1, 0) -> b`.
fn constrained(a: f64, b: f64) -> PosteriorTable {
    let r = PosteriorTable::reference();
    PosteriorTable {
        p: [[r.p[0][0], a], [b, r.p[1][1]]],
    }
}

/// Grid search of the two free entries over `resolution` evenly spaced
/// values in `[0, 1]`. Ties keep the first grid point visited.
pub fn theorem_oracle_bruteforce(resolution: usize) -> Result<PosteriorTable> {
    if resolution < 101 {
        return Err(Error::InvalidConfig(format!(
            "grid resolution must be at least 101, got {resolution}"
        )));
    }
    let reference = PosteriorTable::reference();
    let values: Vec<f64> = (0..resolution).map(|i| i as f64 / (resolution - 1) as f64).collect();
    let mut best = (f64::INFINITY, constrained(0.0, 0.0));
    for &a in &values {
        for &b in &values {
            let table = constrained(a, b);
            let v = theorem_objective(&reference, &table, DEFAULT_CLAMP_EPSILON);
            if v < best.0 {
                best = (v, table);
            }
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOracle {
    pub table: PosteriorTable,
    /// Objective before each update, then after the last one.
    pub trace: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Gradient descent on the same objective with the free entries written as
/// `sigmoid(u)`, `sigmoid(v)`, starting from `u = v = 0` (both 0.5).
pub fn theorem_oracle_gradient(iterations: usize, learning_rate: f64) -> Result<GradientOracle> {
    if iterations == 0 || !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "need iterations >= 1 and a positive learning rate, got {iterations} and {learning_rate}"
        )));
    }
    let reference = PosteriorTable::reference();
    let (mut u, mut v) = (0.0f64, 0.0f64);
    let mut trace = Vec::with_capacity(iterations + 1);
    for step in 0..=iterations {
        let (a, b) = (sigmoid(u), sigmoid(v));
        let value = theorem_objective(&reference, &constrained(a, b), DEFAULT_CLAMP_EPSILON);
        if !value.is_finite() {
            return Err(Error::NonFinite { step, value });
        }
        trace.push(value);
        if step == iterations {
            break;
        }
        // objective = -(ln a + ln(1 - b)) / 2 away from the clamp;
        // d/du = -(1 - a) / 2 and d/dv = b / 2
        let du = if a > DEFAULT_CLAMP_EPSILON {
            -(1.0 - a) / 2.0
        } else {
            0.0
        };
        let dv = if 1.0 - b > DEFAULT_CLAMP_EPSILON { b / 2.0 } else { 0.0 };
        u -= learning_rate * du;
        v -= learning_rate * dv;
    }
    Ok(GradientOracle {
        table: constrained(sigmoid(u), sigmoid(v)),
        trace,
    })
}
