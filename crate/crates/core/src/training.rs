//! SGD with momentum and the three training loops: plain risk minimisation,
//! sequential D-BAT (each new member against frozen predecessors) and
//! simultaneous D-BAT (all members updated jointly).
//!
//! Training runs for `epochs * ceil(n / batch_size)` steps. Labelled batches
//! come from a per-epoch shuffle; unlabelled OOD batches come from a second,
//! independent stream that reshuffles whenever it runs out.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::autodiff::{Graph, Tensor, Var};
use crate::datasets::{LabeledDataset, UnlabeledDataset};
use crate::error::{shape_err, Error, Result};
use crate::evaluation::accuracy;
use crate::losses::{
    agreement_binary, agreement_multiclass, agreement_pair, cross_entropy, dbat_objective, AgreementConfig,
    PreviousNormalization,
};
use crate::models::{Classifier, ClassifierSpec};
use crate::rng::{derive_seed, seeded, Prng};

const TRAIN_STREAM: u64 = 0x7261_696e;
const OOD_STREAM: u64 = 0x6f6f_6400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Erm,
    DbatSequential,
    DbatSimultaneous,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Erm => "erm",
            Self::DbatSequential => "dbat-sequential",
            Self::DbatSimultaneous => "dbat-simultaneous",
        }
    }
}

/// Optimisation settings. `alpha` weighs the agreement penalty; the `alpha`
/// field inside `agreement` is not read by the trainers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub alpha: f64,
    pub seed: u64,
    pub mode: TrainMode,
    pub agreement: AgreementConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            alpha: 0.0,
            seed: 0,
            mode: TrainMode::DbatSequential,
            agreement: AgreementConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        AgreementConfig {
            alpha: self.alpha,
            ..self.agreement
        }
        .validate()
    }

    pub fn with_mode(self, mode: TrainMode) -> Self {
        Self { mode, ..self }
    }

    fn expect_mode(&self, mode: TrainMode) -> Result<()> {
        self.validate()?;
        if self.mode != mode {
            return Err(Error::InvalidConfig(format!(
                "expected mode {}, got {}",
                mode.as_str(),
                self.mode.as_str()
            )));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            velocity: params
                .iter()
                .map(|p| Tensor::from_parts(p.shape().to_vec(), vec![0.0; p.len()]))
                .collect(),
        }
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }
}

/// `v <- momentum * v + g + weight_decay * p`, then `p <- p - lr * v`.
pub fn sgd_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut SgdState,
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::Contract(format!(
            "{} parameters, {} gradients, {} velocity buffers",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(shape_err("sgd_step", &[p.shape(), g.shape(), v.shape()]));
        }
        for ((pi, gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = momentum * *vi + gi + weight_decay * *pi;
            *pi -= learning_rate * *vi;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    pub task_loss: f64,
    /// Mean agreement penalty (before weighting); zero without OOD data.
    pub agreement: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub step_objectives: Vec<f64>,
}

impl TrainHistory {
    /// Trailing moving average of the per-step objective.
    pub fn smoothed_objective(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        let xs = &self.step_objectives;
        let mut out = Vec::with_capacity(xs.len().saturating_sub(w - 1));
        let mut sum: f64 = xs.iter().take(w).sum();
        if xs.len() < w {
            return out;
        }
        out.push(sum / w as f64);
        for i in w..xs.len() {
            sum += xs[i] - xs[i - w];
            out.push(sum / w as f64);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: Classifier,
    pub history: TrainHistory,
}

/// Members in training order; member 0 is the plain risk-minimisation anchor
/// in sequential runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    spec: ClassifierSpec,
    models: Vec<Classifier>,
    histories: Vec<TrainHistory>,
    configs: Vec<TrainConfig>,
}

impl EnsembleState {
    pub fn new(spec: ClassifierSpec) -> Self {
        Self {
            spec,
            models: Vec::new(),
            histories: Vec::new(),
            configs: Vec::new(),
        }
    }

    pub fn push(&mut self, trained: Trained, cfg: TrainConfig) -> Result<()> {
        if trained.model.spec() != &self.spec {
            return Err(Error::Contract(
                "ensemble members must share one classifier spec".into(),
            ));
        }
        self.models.push(trained.model);
        self.histories.push(trained.history);
        self.configs.push(cfg);
        Ok(())
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn models(&self) -> &[Classifier] {
        &self.models
    }

    pub fn histories(&self) -> &[TrainHistory] {
        &self.histories
    }

    pub fn configs(&self) -> &[TrainConfig] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Cycles through a shuffled index order, reshuffling when exhausted.
struct OodStream {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: Prng,
}

impl OodStream {
    fn new(len: usize, batch: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            pos: 0,
            batch: batch.min(len),
            rng,
        }
    }

    fn next(&mut self) -> &[usize] {
        if self.pos + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = &self.order[self.pos..self.pos + self.batch];
        self.pos += self.batch;
        out
    }
}

fn check_ood(train: &LabeledDataset, ood: &UnlabeledDataset) -> Result<()> {
    if ood.dim() != train.dim() {
        return Err(Error::Data(format!(
            "OOD features have dimension {}, training features {}",
            ood.dim(),
            train.dim()
        )));
    }
    Ok(())
}

fn check_spec(spec: &ClassifierSpec, train: &LabeledDataset) -> Result<()> {
    if spec.input_dim != train.dim() || spec.num_classes != train.num_classes() {
        return Err(Error::Data(format!(
            "classifier expects {} features and {} classes, data has {} and {}",
            spec.input_dim,
            spec.num_classes,
            train.dim(),
            train.num_classes()
        )));
    }
    Ok(())
}

/// Per-step outputs of an objective builder.
struct StepTerms {
    objective: Var,
    /// value reported in the history (may differ from the optimised root by a
    /// constant factor)
    reported: f64,
    task: f64,
    agreement: f64,
}

/// Shared minibatch loop. `build` receives the graph, the attached parameters
/// of every trained model, the labelled batch and (if any) the OOD batch.
fn run_loop<F>(
    models: &mut [Classifier],
    train: &LabeledDataset,
    ood: Option<&UnlabeledDataset>,
    cfg: &TrainConfig,
    mut build: F,
) -> Result<Vec<TrainHistory>>
where
    F: FnMut(&mut Graph, &[Vec<Var>], Var, &[usize], Option<(Var, &Tensor)>) -> Result<StepTerms>,
{
    let mut states: Vec<SgdState> = models.iter().map(|m| SgdState::new(m.params())).collect();
    let mut train_rng = seeded(derive_seed(cfg.seed, TRAIN_STREAM));
    let mut ood_stream = ood.map(|o| OodStream::new(o.len(), cfg.batch_size, derive_seed(cfg.seed, OOD_STREAM)));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();
    let mut step = 0usize;
    let mut per_model: Vec<TrainHistory> = vec![TrainHistory::default(); models.len()];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut train_rng);
        let (mut obj_sum, mut task_sum, mut agr_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = train.batch(chunk);
            let mut g = Graph::new();
            let params: Vec<Vec<Var>> = models.iter().map(|m| m.attach(&mut g)).collect();
            let xv = g.constant(x);
            let ood_batch = match (&mut ood_stream, ood) {
                (Some(s), Some(o)) => {
                    let xo = o.batch(s.next());
                    let v = g.constant(xo.clone());
                    Some((v, xo))
                }
                _ => None,
            };
            let terms = build(&mut g, &params, xv, &y, ood_batch.as_ref().map(|(v, t)| (*v, t)))?;
            if !terms.reported.is_finite() || !g.value(terms.objective).is_finite() {
                return Err(Error::NonFinite {
                    step,
                    value: g.value(terms.objective).data()[0],
                });
            }
            let grads = g.backward(terms.objective)?;
            for ((m, state), vars) in models.iter_mut().zip(&mut states).zip(&params) {
                let gs: Vec<Tensor> = vars
                    .iter()
                    .zip(m.params())
                    .map(|(&v, p)| grads.get_or_zeros(v, p))
                    .collect();
                sgd_step(
                    m.params_mut(),
                    &gs,
                    state,
                    cfg.learning_rate,
                    cfg.momentum,
                    cfg.weight_decay,
                )?;
                // the clamp inside the losses maps NaN to epsilon, so a
                // diverged model can still report a finite objective
                if let Some(&bad) = m.params().iter().flat_map(|p| p.data()).find(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { step, value: bad });
                }
            }
            history.step_objectives.push(terms.reported);
            obj_sum += terms.reported;
            task_sum += terms.task;
            agr_sum += terms.agreement;
            batches += 1;
            step += 1;
        }
        let b = batches as f64;
        for (m, h) in models.iter().zip(&mut per_model) {
            h.epochs.push(EpochRecord {
                epoch,
                objective: obj_sum / b,
                task_loss: task_sum / b,
                agreement: agr_sum / b,
                train_accuracy: accuracy(m, train)?,
            });
        }
    }
    for h in &mut per_model {
        h.step_objectives.clone_from(&history.step_objectives);
    }
    Ok(per_model)
}

fn scalar(g: &Graph, v: Var) -> f64 {
    g.value(v).data()[0]
}

/// Plain minibatch cross-entropy training of a fresh model seeded with
/// `cfg.seed`.
pub fn train_erm(spec: &ClassifierSpec, train: &LabeledDataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.expect_mode(TrainMode::Erm)?;
    check_spec(spec, train)?;
    let mut models = [Classifier::init(spec.clone(), cfg.seed)?];
    let eps = cfg.agreement.clamp_epsilon;
    let mut histories = run_loop(&mut models, train, None, cfg, |g, params, x, y, _| {
        let probs = models_forward(g, spec, &params[0], x)?;
        let task = cross_entropy(g, probs, y, eps)?;
        let v = scalar(g, task);
        Ok(StepTerms {
            objective: task,
            reported: v,
            task: v,
            agreement: 0.0,
        })
    })?;
    let [model] = models;
    Ok(Trained {
        model,
        history: histories.remove(0),
    })
}

fn models_forward(g: &mut Graph, spec: &ClassifierSpec, params: &[Var], x: Var) -> Result<Var> {
    spec.forward(g, params, x)
}

/// Penalty of `current` against the frozen predictions `previous` on one OOD
/// batch: the exact two-class formula when `k == 2`, the binarised form
/// otherwise.
fn sequential_agreement(g: &mut Graph, current: Var, previous: &[Var], cfg: &AgreementConfig) -> Result<Var> {
    let k = g.value(current).cols();
    if k != 2 {
        return agreement_multiclass(g, current, previous, cfg);
    }
    let divisor = match cfg.normalization {
        PreviousNormalization::Count => previous.len(),
        PreviousNormalization::CountMinusOne if previous.len() >= 2 => previous.len() - 1,
        PreviousNormalization::CountMinusOne => {
            return Err(Error::InvalidConfig(
                "count-minus-one normalization needs at least two previous models".into(),
            ))
        }
    };
    let mut total: Option<Var> = None;
    for &p in previous {
        let frozen = g.detach(p);
        let a = agreement_binary(g, frozen, current, cfg.clamp_epsilon)?;
        total = Some(match total {
            None => a,
            Some(t) => g.add(t, a)?,
        });
    }
    let total = total.ok_or_else(|| Error::Contract("no previous models".into()))?;
    if divisor == 1 {
        Ok(total)
    } else {
        g.scale(total, 1.0 / divisor as f64)
    }
}

/// Trains the next sequential member: cross-entropy on `train` plus
/// `cfg.alpha` times its agreement with every existing member on `ood`.
/// Existing members are read-only. The returned model is not appended.
pub fn train_dbat_next(
    ensemble: &EnsembleState,
    train: &LabeledDataset,
    ood: &UnlabeledDataset,
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.expect_mode(TrainMode::DbatSequential)?;
    if ensemble.is_empty() {
        return Err(Error::Contract(
            "sequential training needs at least one existing member".into(),
        ));
    }
    let spec = ensemble.spec();
    check_spec(spec, train)?;
    check_ood(train, ood)?;
    let previous = ensemble.models();
    let mut models = [Classifier::init(spec.clone(), cfg.seed)?];
    let eps = cfg.agreement.clamp_epsilon;
    let agreement_cfg = cfg.agreement;
    let alpha = cfg.alpha;
    let mut histories = run_loop(&mut models, train, Some(ood), cfg, |g, params, x, y, ood_batch| {
        let probs = models_forward(g, spec, &params[0], x)?;
        let task = cross_entropy(g, probs, y, eps)?;
        let (xo, xo_value) = ood_batch.ok_or_else(|| Error::Contract("missing OOD batch".into()))?;
        let current = models_forward(g, spec, &params[0], xo)?;
        let mut prev_vars = Vec::with_capacity(previous.len());
        for m in previous {
            let p = m.predict(xo_value)?;
            prev_vars.push(g.constant(p));
        }
        let agreement = sequential_agreement(g, current, &prev_vars, &agreement_cfg)?;
        let objective = dbat_objective(g, task, agreement, alpha)?;
        Ok(StepTerms {
            objective,
            reported: scalar(g, objective),
            task: scalar(g, task),
            agreement: scalar(g, agreement),
        })
    })?;
    let [model] = models;
    Ok(Trained {
        model,
        history: histories.remove(0),
    })
}

/// Jointly trains `k` members seeded `derive_seed(cfg.seed, i)`.
///
/// The reported objective is the mean task loss plus `alpha` times the mean
/// pairwise agreement. The optimised root is that objective times `k`, so each
/// member's own task gradient keeps unit weight and `alpha = 0` runs `k`
/// independent plain trainings sharing one batch order.
pub fn train_dbat_simultaneous(
    spec: &ClassifierSpec,
    train: &LabeledDataset,
    ood: &UnlabeledDataset,
    cfg: &TrainConfig,
    k: usize,
) -> Result<EnsembleState> {
    cfg.expect_mode(TrainMode::DbatSimultaneous)?;
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "simultaneous training needs at least two members, got {k}"
        )));
    }
    check_spec(spec, train)?;
    check_ood(train, ood)?;
    let mut models: Vec<Classifier> = (0..k)
        .map(|i| Classifier::init(spec.clone(), derive_seed(cfg.seed, i as u64)))
        .collect::<Result<_>>()?;
    let eps = cfg.agreement.clamp_epsilon;
    let alpha = cfg.alpha;
    let pairs = (k * (k - 1) / 2) as f64;
    let histories = run_loop(&mut models, train, Some(ood), cfg, |g, params, x, y, ood_batch| {
        let mut task_total: Option<Var> = None;
        for p in params {
            let probs = models_forward(g, spec, p, x)?;
            let t = cross_entropy(g, probs, y, eps)?;
            task_total = Some(match task_total {
                None => t,
                Some(acc) => g.add(acc, t)?,
            });
        }
        let task_total = task_total.expect("k >= 2");
        let (xo, _) = ood_batch.ok_or_else(|| Error::Contract("missing OOD batch".into()))?;
        let outs: Vec<Var> = params
            .iter()
            .map(|p| models_forward(g, spec, p, xo))
            .collect::<Result<_>>()?;
        let mut agr_total: Option<Var> = None;
        for i in 0..k {
            for j in i + 1..k {
                let a = agreement_pair(g, outs[i], outs[j], eps)?;
                agr_total = Some(match agr_total {
                    None => a,
                    Some(acc) => g.add(acc, a)?,
                });
            }
        }
        let agr_total = agr_total.expect("k >= 2");
        let agr_mean = scalar(g, agr_total) / pairs;
        let task_mean = scalar(g, task_total) / k as f64;
        let objective = if alpha == 0.0 {
            task_total
        } else {
            let weighted = g.scale(agr_total, alpha * k as f64 / pairs)?;
            g.add(task_total, weighted)?
        };
        Ok(StepTerms {
            objective,
            reported: task_mean + alpha * agr_mean,
            task: task_mean,
            agreement: agr_mean,
        })
    })?;
    let mut state = EnsembleState::new(spec.clone());
    for (model, history) in models.into_iter().zip(histories) {
        state.push(Trained { model, history }, *cfg)?;
    }
    Ok(state)
}

/// Index of the most accurate model on `val`; ties go to the lower index.
pub fn select_best(models: &[Classifier], val: &LabeledDataset) -> Result<usize> {
    if models.is_empty() {
        return Err(Error::Contract("select_best needs at least one model".into()));
    }
    let accs = models.iter().map(|m| accuracy(m, val)).collect::<Result<Vec<_>>>()?;
    Ok(best_index(&accs))
}

/// First index of the maximum.
pub fn best_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
