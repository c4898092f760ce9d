//! `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, keys are the field names of
//! [`RunConfig`] with dots for nesting (`train.alpha = 0.2`). Lists are
//! comma separated. Unknown and repeated keys are errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use dbat_core::datasets::{OodKind, ShortcutRecipe};
use dbat_core::losses::{BinarizationAnchor, PreviousNormalization};
use dbat_core::training::{TrainConfig, TrainMode};

use crate::error::{Result, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Toy2d,
    Shortcut,
    DominoesIdx,
    Interpolation,
    Theorem,
    AlphaSweep,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Toy2d => "toy2d",
            Self::Shortcut => "shortcut",
            Self::DominoesIdx => "dominoes-idx",
            Self::Interpolation => "interpolation",
            Self::Theorem => "theorem",
            Self::AlphaSweep => "alpha-sweep",
        }
    }

    fn trains(self) -> bool {
        !matches!(self, Self::Theorem)
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "toy2d" => Self::Toy2d,
            "shortcut" => Self::Shortcut,
            "dominoes-idx" => Self::DominoesIdx,
            "interpolation" => Self::Interpolation,
            "theorem" => Self::Theorem,
            "alpha-sweep" => Self::AlphaSweep,
            _ => {
                return Err(format!(
                    "unknown experiment `{s}` (expected toy2d, shortcut, dominoes-idx, interpolation, theorem or alpha-sweep)"
                ))
            }
        })
    }
}

/// How the unlabelled set of the dominoes experiment is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DominoOod {
    RandomizedTop,
    HeldOutBottom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    pub n_per_class: usize,
    /// Per-class size of the randomized validation and test samples.
    pub eval_n_per_class: usize,
    pub grid_resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathData {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominoData {
    pub top_images: Option<PathBuf>,
    pub top_labels: Option<PathBuf>,
    pub bottom_images: Option<PathBuf>,
    pub bottom_labels: Option<PathBuf>,
    pub top_classes: Vec<usize>,
    pub bottom_classes: Vec<usize>,
    pub ood: DominoOod,
    pub ood_bottom_classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub toy: ToyData,
    /// Sizes, block dims, noise and OOD kind; the seed is the run seed.
    pub shortcut: ShortcutRecipe,
    pub path: PathData,
    pub dominoes: DominoData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremConfig {
    pub grid: usize,
    pub iterations: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub dataset: Experiment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub ensemble_size: usize,
    pub hidden_dims: Vec<usize>,
    /// `train.seed` mirrors `seed`.
    pub train: TrainConfig,
    pub data: DataConfig,
    /// Also train an ERM ensemble with the same member seeds.
    pub compare_erm: bool,
    pub theorem: TheoremConfig,
    pub sweep: SweepConfig,
}

/// One `key = value` entry and the line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: Option<usize>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key.split('.').all(|seg| {
            !seg.is_empty()
                && seg
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        })
}

/// Splits config text into entries, rejecting malformed lines and repeats.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| RunError::config(Some(line), format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        if !valid_key(key) {
            return Err(RunError::config(Some(line), format!("malformed key `{key}`")));
        }
        if let Some(first) = seen.insert(key.to_string(), line) {
            return Err(RunError::config(
                Some(line),
                format!("duplicate key `{key}` (first set at line {first})"),
            ));
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: Some(line),
        });
    }
    Ok(out)
}

/// Typed access to entries; remembers which keys were read.
struct Fields {
    entries: BTreeMap<String, (String, Option<usize>)>,
    used: BTreeSet<String>,
}

impl Fields {
    fn new(entries: Vec<Entry>) -> Self {
        Self {
            entries: entries.into_iter().map(|e| (e.key, (e.value, e.line))).collect(),
            used: BTreeSet::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<(String, Option<usize>)> {
        self.used.insert(key.to_string());
        self.entries.get(key).cloned()
    }

    fn parse_with<T>(&mut self, key: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => f(&v)
                .map(Some)
                .map_err(|m| RunError::config(line, format!("`{key}`: {m}"))),
        }
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.parse_with(key, |v| {
            if v.is_empty() {
                return Err("empty value".into());
            }
            v.parse::<T>().map_err(|e| format!("cannot parse `{v}`: {e}"))
        })
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| RunError::config(None, format!("missing required key `{key}`")))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.parse_with(key, parse_list)
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).and_then(|e| e.1)
    }

    fn reject_unknown(&self) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !self.used.contains(*k)) {
            Some((k, (_, line))) => Err(RunError::config(*line, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

/// Comma-separated values; an empty string is the empty list.
pub fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<T>().map_err(|e| format!("cannot parse list item `{s}`: {e}"))
        })
        .collect()
}

fn parse_mode(v: &str) -> std::result::Result<TrainMode, String> {
    Ok(match v {
        "erm" => TrainMode::Erm,
        "dbat-sequential" => TrainMode::DbatSequential,
        "dbat-simultaneous" => TrainMode::DbatSimultaneous,
        _ => {
            return Err(format!(
                "unknown mode `{v}` (expected erm, dbat-sequential or dbat-simultaneous)"
            ))
        }
    })
}

fn parse_anchor(v: &str) -> std::result::Result<BinarizationAnchor, String> {
    match v {
        "current-model" => Ok(BinarizationAnchor::CurrentModel),
        "first-model" => Ok(BinarizationAnchor::FirstModel),
        _ => Err(format!("unknown anchor `{v}` (expected current-model or first-model)")),
    }
}

fn parse_normalization(v: &str) -> std::result::Result<PreviousNormalization, String> {
    match v {
        "count" => Ok(PreviousNormalization::Count),
        "count-minus-one" => Ok(PreviousNormalization::CountMinusOne),
        _ => Err(format!(
            "unknown normalization `{v}` (expected count or count-minus-one)"
        )),
    }
}

fn parse_ood_kind(v: &str) -> std::result::Result<OodKind, String> {
    match v {
        "target-like" => Ok(OodKind::TargetLike),
        "held-out-patterns" => Ok(OodKind::HeldOutPatterns),
        _ => Err(format!(
            "unknown ood kind `{v}` (expected target-like or held-out-patterns)"
        )),
    }
}

fn parse_domino_ood(v: &str) -> std::result::Result<DominoOod, String> {
    match v {
        "randomized-top" => Ok(DominoOod::RandomizedTop),
        "held-out-bottom" => Ok(DominoOod::HeldOutBottom),
        _ => Err(format!(
            "unknown ood kind `{v}` (expected randomized-top or held-out-bottom)"
        )),
    }
}

fn anchor_str(a: BinarizationAnchor) -> &'static str {
    match a {
        BinarizationAnchor::CurrentModel => "current-model",
        BinarizationAnchor::FirstModel => "first-model",
    }
}

fn normalization_str(n: PreviousNormalization) -> &'static str {
    match n {
        PreviousNormalization::Count => "count",
        PreviousNormalization::CountMinusOne => "count-minus-one",
    }
}

fn ood_kind_str(k: OodKind) -> &'static str {
    match k {
        OodKind::TargetLike => "target-like",
        OodKind::HeldOutPatterns => "held-out-patterns",
    }
}

fn domino_ood_str(k: DominoOod) -> &'static str {
    match k {
        DominoOod::RandomizedTop => "randomized-top",
        DominoOod::HeldOutBottom => "held-out-bottom",
    }
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_entries(parse_entries(text)?)
    }

    /// Builds a config from a flat key map, as stored in a manifest.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        Self::from_entries(
            map.iter()
                .map(|(k, v)| Entry {
                    key: k.clone(),
                    value: v.clone(),
                    line: None,
                })
                .collect(),
        )
    }

    pub fn from_entries(entries: Vec<Entry>) -> Result<Self> {
        let mut f = Fields::new(entries);
        let experiment: Experiment = f.require("experiment")?;
        let output_dir: PathBuf = f.require("output_dir")?;
        let seed: u64 = f.or("seed", 0)?;
        let ensemble_size: usize = f.or("ensemble_size", 2)?;
        let hidden_dims = f.list("model.hidden_dims")?.unwrap_or_else(|| vec![32, 32]);

        let d = TrainConfig::default();
        let mode = f.parse_with("train.mode", parse_mode)?.unwrap_or(d.mode);
        let alpha = match f.get::<f64>("train.alpha")? {
            Some(a) => a,
            None if mode != TrainMode::Erm && experiment.trains() && experiment != Experiment::AlphaSweep => {
                return Err(RunError::config(None, "missing required key `train.alpha`"))
            }
            None => 0.0,
        };
        let agreement = dbat_core::losses::AgreementConfig {
            alpha,
            anchor: f
                .parse_with("train.agreement.anchor", parse_anchor)?
                .unwrap_or(d.agreement.anchor),
            clamp_epsilon: f.or("train.agreement.clamp_epsilon", d.agreement.clamp_epsilon)?,
            normalization: f
                .parse_with("train.agreement.normalization", parse_normalization)?
                .unwrap_or(d.agreement.normalization),
        };
        let train = TrainConfig {
            epochs: f.or("train.epochs", d.epochs)?,
            batch_size: f.or("train.batch_size", d.batch_size)?,
            learning_rate: f.or("train.learning_rate", d.learning_rate)?,
            momentum: f.or("train.momentum", d.momentum)?,
            weight_decay: f.or("train.weight_decay", d.weight_decay)?,
            alpha,
            seed,
            mode,
            agreement,
        };

        let s = ShortcutRecipe::default();
        let shortcut = ShortcutRecipe {
            n_train: f.or("data.n_train", s.n_train)?,
            n_test: f.or("data.n_test", s.n_test)?,
            n_val: f.or("data.n_val", s.n_val)?,
            n_ood: f.or("data.n_ood", s.n_ood)?,
            simple_dim: f.or("data.simple_dim", s.simple_dim)?,
            complex_dim: f.or("data.complex_dim", s.complex_dim)?,
            noise_sigma: f.or("data.noise_sigma", s.noise_sigma)?,
            seed,
            ood_kind: f.parse_with("data.ood_kind", parse_ood_kind)?.unwrap_or(s.ood_kind),
        };
        let toy = ToyData {
            n_per_class: f.or("data.n_per_class", 500)?,
            eval_n_per_class: f.or("data.eval_n_per_class", 500)?,
            grid_resolution: f.or("data.grid_resolution", dbat_core::datasets::TOY2D_GRID_RESOLUTION)?,
        };
        let path = PathData {
            start: f.list("data.path_start")?.unwrap_or_else(|| vec![-0.3, 0.0]),
            end: f.list("data.path_end")?.unwrap_or_else(|| vec![0.3, 0.45]),
            t_min: f.or("data.t_min", -1.0)?,
            t_max: f.or("data.t_max", 2.0)?,
            t_points: f.or("data.t_points", 121)?,
        };
        let dominoes = DominoData {
            top_images: f.get("data.top_images")?,
            top_labels: f.get("data.top_labels")?,
            bottom_images: f.get("data.bottom_images")?,
            bottom_labels: f.get("data.bottom_labels")?,
            top_classes: f.list("data.top_classes")?.unwrap_or_else(|| vec![0, 1]),
            bottom_classes: f.list("data.bottom_classes")?.unwrap_or_else(|| vec![3, 4]),
            ood: f
                .parse_with("data.domino_ood", parse_domino_ood)?
                .unwrap_or(DominoOod::RandomizedTop),
            ood_bottom_classes: f
                .list("data.ood_bottom_classes")?
                .unwrap_or_else(|| vec![0, 1, 2, 5, 6, 7, 8, 9]),
        };

        let theorem = TheoremConfig {
            grid: f.or("theorem.grid", 1001)?,
            iterations: f.or("theorem.iterations", 2000)?,
            learning_rate: f.or("theorem.learning_rate", 1.0)?,
        };
        let sweep_line = f.line_of("sweep.dataset");
        let sweep = SweepConfig {
            alphas: f.list("sweep.alphas")?.unwrap_or_default(),
            dataset: f.or("sweep.dataset", Experiment::Toy2d)?,
        };
        let compare_erm = f.or("eval.compare_erm", true)?;
        f.reject_unknown()?;

        if !matches!(
            sweep.dataset,
            Experiment::Toy2d | Experiment::Shortcut | Experiment::DominoesIdx
        ) {
            return Err(RunError::config(
                sweep_line,
                format!("`sweep.dataset`: cannot sweep `{}`", sweep.dataset.as_str()),
            ));
        }
        let cfg = Self {
            experiment,
            output_dir,
            seed,
            ensemble_size,
            hidden_dims,
            train,
            data: DataConfig {
                toy,
                shortcut,
                path,
                dominoes,
            },
            compare_erm,
            theorem,
            sweep,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks value ranges that do not depend on any input data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RunError::config(None, m));
        if self.ensemble_size == 0 {
            return bad("`ensemble_size` must be at least 1".into());
        }
        if self.hidden_dims.contains(&0) {
            return bad("`model.hidden_dims` entries must be positive".into());
        }
        self.train.validate()?;
        if self.train.mode == TrainMode::DbatSimultaneous && self.ensemble_size < 2 {
            return bad("dbat-simultaneous needs `ensemble_size` >= 2".into());
        }
        self.data.shortcut.validate()?;
        let p = &self.data.path;
        if p.start.len() != p.end.len() || p.start.is_empty() {
            return bad("`data.path_start` and `data.path_end` must be non-empty and of equal length".into());
        }
        if p.t_points == 0 || !(p.t_min.is_finite() && p.t_max.is_finite()) {
            return bad("the t-grid needs at least one point and finite ends".into());
        }
        if self.sweep.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad("`sweep.alphas` must be finite and non-negative".into());
        }
        if self.experiment == Experiment::AlphaSweep && self.sweep.alphas.is_empty() {
            return bad("missing required key `sweep.alphas`".into());
        }
        if self.experiment == Experiment::DominoesIdx
            || (self.experiment == Experiment::AlphaSweep && self.sweep.dataset == Experiment::DominoesIdx)
        {
            let d = &self.data.dominoes;
            for (key, path) in [
                ("data.top_images", &d.top_images),
                ("data.top_labels", &d.top_labels),
                ("data.bottom_images", &d.bottom_images),
                ("data.bottom_labels", &d.bottom_labels),
            ] {
                if path.is_none() {
                    return bad(format!("missing required key `{key}`"));
                }
            }
        }
        Ok(())
    }

    /// Every setting, defaults included, as strings that parse back to the
    /// same config.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let t = &self.train;
        let d = &self.data;
        put("experiment", self.experiment.as_str().into());
        put("output_dir", self.output_dir.display().to_string());
        put("seed", self.seed.to_string());
        put("ensemble_size", self.ensemble_size.to_string());
        put("model.hidden_dims", join(&self.hidden_dims));
        put("train.epochs", t.epochs.to_string());
        put("train.batch_size", t.batch_size.to_string());
        put("train.learning_rate", t.learning_rate.to_string());
        put("train.momentum", t.momentum.to_string());
        put("train.weight_decay", t.weight_decay.to_string());
        put("train.alpha", t.alpha.to_string());
        put("train.mode", t.mode.as_str().into());
        put("train.agreement.anchor", anchor_str(t.agreement.anchor).into());
        put("train.agreement.clamp_epsilon", t.agreement.clamp_epsilon.to_string());
        put(
            "train.agreement.normalization",
            normalization_str(t.agreement.normalization).into(),
        );
        put("data.n_per_class", d.toy.n_per_class.to_string());
        put("data.eval_n_per_class", d.toy.eval_n_per_class.to_string());
        put("data.grid_resolution", d.toy.grid_resolution.to_string());
        put("data.n_train", d.shortcut.n_train.to_string());
        put("data.n_test", d.shortcut.n_test.to_string());
        put("data.n_val", d.shortcut.n_val.to_string());
        put("data.n_ood", d.shortcut.n_ood.to_string());
        put("data.simple_dim", d.shortcut.simple_dim.to_string());
        put("data.complex_dim", d.shortcut.complex_dim.to_string());
        put("data.noise_sigma", d.shortcut.noise_sigma.to_string());
        put("data.ood_kind", ood_kind_str(d.shortcut.ood_kind).into());
        put("data.path_start", join(&d.path.start));
        put("data.path_end", join(&d.path.end));
        put("data.t_min", d.path.t_min.to_string());
        put("data.t_max", d.path.t_max.to_string());
        put("data.t_points", d.path.t_points.to_string());
        let dm = &d.dominoes;
        for (k, p) in [
            ("data.top_images", &dm.top_images),
            ("data.top_labels", &dm.top_labels),
            ("data.bottom_images", &dm.bottom_images),
            ("data.bottom_labels", &dm.bottom_labels),
        ] {
            if let Some(p) = p {
                put(k, p.display().to_string());
            }
        }
        put("data.top_classes", join(&dm.top_classes));
        put("data.bottom_classes", join(&dm.bottom_classes));
        put("data.domino_ood", domino_ood_str(dm.ood).into());
        put("data.ood_bottom_classes", join(&dm.ood_bottom_classes));
        put("eval.compare_erm", self.compare_erm.to_string());
        put("theorem.grid", self.theorem.grid.to_string());
        put("theorem.iterations", self.theorem.iterations.to_string());
        put("theorem.learning_rate", self.theorem.learning_rate.to_string());
        put("sweep.alphas", join(&self.sweep.alphas));
        put("sweep.dataset", self.sweep.dataset.as_str().into());
        m
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self.data.shortcut.seed = seed;
        self
    }

    pub fn run_id(&self) -> String {
        format!("{}-seed{}", self.experiment.as_str(), self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "experiment = toy2d\noutput_dir = out\ntrain.alpha = 0.5\n";

    fn line_of(e: RunError) -> Option<usize> {
        match e {
            RunError::Config { line, .. } => line,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn parses_minimal_config_with_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.experiment, Experiment::Toy2d);
        assert_eq!(c.train.alpha, 0.5);
        assert_eq!(c.train.mode, TrainMode::DbatSequential);
        assert_eq!(c.hidden_dims, vec![32, 32]);
        assert_eq!(c.ensemble_size, 2);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# header\n\nexperiment = theorem # trailing\n  output_dir=o\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.experiment, Experiment::Theorem);
        assert_eq!(c.output_dir, PathBuf::from("o"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let e = RunConfig::parse("experiment = toy2d\n\nthis is not a pair\n").unwrap_err();
        assert_eq!(line_of(e), Some(3));
    }

    #[test]
    fn bad_value_reports_line_number() {
        let e = RunConfig::parse(&format!("{MINIMAL}train.epochs = many\n")).unwrap_err();
        assert_eq!(line_of(e), Some(4));
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let e = RunConfig::parse(&format!("{MINIMAL}train.alpah = 1\n")).unwrap_err();
        assert!(e.to_string().contains("train.alpah"));
        assert_eq!(line_of(e), Some(4));
        let e = RunConfig::parse(&format!("{MINIMAL}seed = 1\nseed = 2\n")).unwrap_err();
        assert_eq!(line_of(e), Some(5));
    }

    #[test]
    fn missing_required_key_is_named() {
        let e = RunConfig::parse("output_dir = o\n").unwrap_err();
        assert!(e.to_string().contains("`experiment`"), "{e}");
        let e = RunConfig::parse("experiment = shortcut\noutput_dir = o\n").unwrap_err();
        assert!(e.to_string().contains("`train.alpha`"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn erm_mode_needs_no_alpha() {
        let c = RunConfig::parse("experiment = shortcut\noutput_dir = o\ntrain.mode = erm\n").unwrap();
        assert_eq!(c.train.alpha, 0.0);
    }

    #[test]
    fn range_checks() {
        for extra in [
            "ensemble_size = 0",
            "train.momentum = 1",
            "train.learning_rate = -1",
            "model.hidden_dims = 4,0",
            "data.simple_dim = 2",
        ] {
            let e = RunConfig::parse(&format!("{MINIMAL}{extra}\n")).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{extra}");
        }
    }

    #[test]
    fn dominoes_requires_files() {
        let e = RunConfig::parse("experiment = dominoes-idx\noutput_dir = o\ntrain.alpha = 1\n").unwrap_err();
        assert!(e.to_string().contains("data.top_images"), "{e}");
    }

    #[test]
    fn map_round_trip() {
        let text = format!(
            "{MINIMAL}model.hidden_dims = 8\ntrain.learning_rate = 0.1\ndata.path_start = -0.25,0.1\n\
             data.top_images = a/b.idx\nsweep.alphas = 1,0.5\n"
        );
        let c = RunConfig::parse(&text).unwrap();
        let back = RunConfig::from_map(&c.to_map()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn empty_hidden_list_is_a_linear_model() {
        let c = RunConfig::parse(&format!("{MINIMAL}model.hidden_dims =\n")).unwrap();
        assert!(c.hidden_dims.is_empty());
    }
}
