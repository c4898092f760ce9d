//! Accuracy, entropy, ensemble aggregation, disagreement and confidence
//! histograms. Entropies are in nats. Ensembles average member softmax
//! outputs with equal weights.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::autodiff::{argmax, Tensor};
use crate::datasets::{InterpolationPath, LabeledDataset, UnlabeledDataset};
use crate::error::{shape_err, Error, Result};
use crate::models::Classifier;

pub const HISTOGRAM_BINS: usize = 10;
pub const METRICS_CSV_HEADER: &str = "run_id,model_index,split,metric,value,epoch";
pub const HISTOGRAM_CSV_HEADER: &str = "bin_lo,bin_hi,count";

/// Anything mapping a feature batch to class probabilities.
pub trait Predictor {
    fn predict_proba(&self, batch: &Tensor) -> Result<Tensor>;
}

impl Predictor for Classifier {
    fn predict_proba(&self, batch: &Tensor) -> Result<Tensor> {
        self.predict(batch)
    }
}

/// Uniform-weight ensemble over borrowed members.
#[derive(Debug, Clone, Copy)]
pub struct Ensemble<'a>(pub &'a [Classifier]);

impl Predictor for Ensemble<'_> {
    fn predict_proba(&self, batch: &Tensor) -> Result<Tensor> {
        aggregate_ensemble(self.0, batch)
    }
}

/// Mean of the members' softmax outputs.
pub fn aggregate_ensemble(models: &[Classifier], batch: &Tensor) -> Result<Tensor> {
    let (first, rest) = models
        .split_first()
        .ok_or_else(|| Error::Contract("an ensemble needs at least one model".into()))?;
    let mut acc = first.predict(batch)?;
    if rest.is_empty() {
        return Ok(acc);
    }
    for m in rest {
        let p = m.predict(batch)?;
        if p.shape() != acc.shape() {
            return Err(shape_err("aggregate_ensemble", &[acc.shape(), p.shape()]));
        }
        for (a, b) in acc.data_mut().iter_mut().zip(p.data()) {
            *a += b;
        }
    }
    let k = models.len() as f64;
    for a in acc.data_mut() {
        *a /= k;
    }
    Ok(acc)
}

pub fn accuracy(predictor: &impl Predictor, data: &LabeledDataset) -> Result<f64> {
    let probs = predictor.predict_proba(data.features())?;
    let hits = probs
        .argmax_rows()
        .iter()
        .zip(data.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn entropy_row(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * libm::log(v)).sum::<f64>()
}

pub fn entropy(probs: &Tensor) -> Vec<f64> {
    (0..probs.rows()).map(|i| entropy_row(probs.row(i))).collect()
}

/// Largest class probability per row.
pub fn max_probabilities(probs: &Tensor) -> Vec<f64> {
    (0..probs.rows())
        .map(|i| probs.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

fn argmax_set(row: &[f64]) -> impl Iterator<Item = usize> + '_ {
    let top = row[argmax(row)];
    row.iter().enumerate().filter(move |(_, &v)| v == top).map(|(i, _)| i)
}

/// True where the two rows predict different classes. Rows whose top classes
/// tie count as agreeing when their sets of top classes overlap.
pub fn disagreement_mask(p1: &Tensor, p2: &Tensor) -> Result<Vec<bool>> {
    if p1.shape() != p2.shape() {
        return Err(shape_err("disagreement_rate", &[p1.shape(), p2.shape()]));
    }
    Ok((0..p1.rows())
        .map(|i| {
            let b = p2.row(i);
            let top_b = b[argmax(b)];
            !argmax_set(p1.row(i)).any(|c| b[c] == top_b)
        })
        .collect())
}

pub fn disagreement_rate(h1: &impl Predictor, h2: &impl Predictor, data: &UnlabeledDataset) -> Result<f64> {
    let mask = disagreement_mask(&h1.predict_proba(data.features())?, &h2.predict_proba(data.features())?)?;
    Ok(mask.iter().filter(|&&d| d).count() as f64 / mask.len() as f64)
}

/// Ensemble entropy at each `t` of the path, in path order.
pub fn path_entropy_profile(models: &[Classifier], path: &InterpolationPath) -> Result<Vec<(f64, f64)>> {
    let probs = aggregate_ensemble(models, path.points.features())?;
    Ok(path.ts.iter().copied().zip(entropy(&probs)).collect())
}

/// Ten equal bins over `[0, 1]`; the last bin also holds 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for &v in values {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain {
                    op: "histogram",
                    detail: format!("value {v} outside [0, 1]"),
                });
            }
            let bin = libm::floor(v * HISTOGRAM_BINS as f64) as usize;
            counts[bin.min(HISTOGRAM_BINS - 1)] += 1;
        }
        let edges = (0..=HISTOGRAM_BINS).map(|i| i as f64 / HISTOGRAM_BINS as f64).collect();
        Ok(Self { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.edges.windows(2).zip(&self.counts).map(|(e, &c)| (e[0], e[1], c))
    }
}

/// Histogram of the ensemble's top-class probability on each sample.
pub fn confidence_histogram(models: &[Classifier], ood: &UnlabeledDataset) -> Result<Histogram> {
    let probs = aggregate_ensemble(models, ood.features())?;
    Histogram::from_values(&max_probabilities(&probs))
}

/// Fraction of values strictly above `threshold`.
pub fn fraction_above(values: &[f64], threshold: f64) -> f64 {
    values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelIndex {
    Member(usize),
    Ensemble,
}

impl fmt::Display for ModelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Member(i) => write!(f, "{i}"),
            Self::Ensemble => f.write_str("ensemble"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    TestComplex,
    TestIid,
    Ood,
    Path,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::TestComplex => "test-complex",
            Self::TestIid => "test-iid",
            Self::Ood => "ood",
            Self::Path => "path",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub run_id: String,
    pub model: ModelIndex,
    pub split: Split,
    pub metric: String,
    pub value: f64,
    pub epoch: usize,
}

fn csv_safe(field: &str, what: &str) -> Result<()> {
    if field.is_empty() || field.contains([',', '\n', '\r', '"']) {
        return Err(Error::InvalidConfig(format!(
            "{what} {field:?} is not a plain CSV field"
        )));
    }
    Ok(())
}

impl MetricsRecord {
    pub fn new(run_id: &str, model: ModelIndex, split: Split, metric: &str, value: f64, epoch: usize) -> Result<Self> {
        csv_safe(run_id, "run id")?;
        csv_safe(metric, "metric name")?;
        if !value.is_finite() {
            return Err(Error::NonFinite { step: epoch, value });
        }
        Ok(Self {
            run_id: run_id.to_string(),
            model,
            split,
            metric: metric.to_string(),
            value,
            epoch,
        })
    }

    /// One CSV line without terminator. Floats use the shortest
    /// round-tripping decimal form.
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.run_id, self.model, self.split, self.metric, self.value, self.epoch
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_interpolation_path, Recipe};
    use crate::models::ClassifierSpec;
    use crate::testutil::rng;
    use proptest::prelude::*;
    use rand::Rng;

    /// Linear 2-class model whose logits are `(0, w . x)`.
    fn linear(w: &[f64]) -> Classifier {
        let d = w.len();
        let spec = ClassifierSpec::new(d, vec![], 2).unwrap();
        let mut weights = vec![0.0; d * 2];
        for (i, &wi) in w.iter().enumerate() {
            weights[i * 2 + 1] = wi;
        }
        Classifier::from_parts(
            spec,
            vec![
                Tensor::new(vec![d, 2], weights).unwrap(),
                Tensor::new(vec![2], vec![0.0, 0.0]).unwrap(),
            ],
            0,
        )
        .unwrap()
    }

    fn fixture() -> LabeledDataset {
        let x = Tensor::new(vec![4, 1], vec![-2.0, -1.0, 1.0, 3.0]).unwrap();
        LabeledDataset::new(x, vec![0, 1, 1, 0], 2, "fixture", Recipe::new("t")).unwrap()
    }

    #[test]
    fn accuracy_cases() {
        // predicts class 1 exactly where x > 0: right on samples 0 and 2
        assert_eq!(accuracy(&linear(&[5.0]), &fixture()).unwrap(), 0.5);
        // predicts class 0 where x > 0: right on samples 1 and 3
        assert_eq!(accuracy(&linear(&[-5.0]), &fixture()).unwrap(), 0.5);
        let x = Tensor::new(vec![4, 1], vec![-2.0, -1.0, 1.0, 3.0]).unwrap();
        let d = LabeledDataset::new(x, vec![0, 0, 1, 1], 2, "f", Recipe::new("t")).unwrap();
        assert_eq!(accuracy(&linear(&[50.0]), &d).unwrap(), 1.0);
        // constant predictor on balanced data
        assert_eq!(accuracy(&linear(&[0.0]), &d).unwrap(), 0.5);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_row(&[1.0, 0.0]), 0.0);
        assert!((entropy_row(&[0.5, 0.5]) - core::f64::consts::LN_2).abs() < 1e-15);
        let oracle = -(0.7 * libm::log(0.7) + 0.3 * libm::log(0.3));
        assert!((entropy_row(&[0.7, 0.3]) - 0.610864).abs() < 1e-6);
        assert_eq!(entropy_row(&[0.7, 0.3]), oracle);
    }

    #[test]
    fn aggregation() {
        let a = linear(&[100.0]);
        let b = linear(&[-100.0]);
        let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let single = aggregate_ensemble(core::slice::from_ref(&a), &x).unwrap();
        assert_eq!(single, a.predict(&x).unwrap());
        let both = aggregate_ensemble(&[a, b], &x).unwrap();
        assert!((both.data()[0] - 0.5).abs() < 1e-12);
        assert!((both.data()[1] - 0.5).abs() < 1e-12);
        assert!(aggregate_ensemble(&[], &x).is_err());
    }

    #[test]
    fn disagreement_fixture() {
        let x = Tensor::new(vec![3, 1], vec![-1.0, 0.5, 2.0]).unwrap();
        let data = UnlabeledDataset::new(x, "u", Recipe::new("t")).unwrap();
        let h1 = linear(&[1.0]);
        assert_eq!(disagreement_rate(&h1, &h1, &data).unwrap(), 0.0);
        assert_eq!(disagreement_rate(&h1, &linear(&[-1.0]), &data).unwrap(), 1.0);
        // threshold at 1: differs from h1 only on x = 0.5
        let shifted = Classifier::from_parts(
            ClassifierSpec::new(1, vec![], 2).unwrap(),
            vec![
                Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap(),
                Tensor::new(vec![2], vec![0.0, -1.0]).unwrap(),
            ],
            0,
        )
        .unwrap();
        let rate = disagreement_rate(&h1, &shifted, &data).unwrap();
        assert!((rate - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_count_as_agreement() {
        let p1 = Tensor::new(vec![2, 3], vec![0.4, 0.4, 0.2, 0.4, 0.4, 0.2]).unwrap();
        let p2 = Tensor::new(vec![2, 3], vec![0.1, 0.6, 0.3, 0.1, 0.2, 0.7]).unwrap();
        assert_eq!(disagreement_mask(&p1, &p2).unwrap(), vec![false, true]);
    }

    #[test]
    fn histogram_bins() {
        let h = Histogram::from_values(&[0.5, 0.55, 0.59, 1.0, 0.95, 0.0]).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 0, 0, 3, 0, 0, 0, 2]);
        assert_eq!(h.total(), 6);
        assert!(Histogram::from_values(&[1.5]).is_err());
        let uniform = linear(&[0.0]);
        let x = Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let ood = UnlabeledDataset::new(x, "u", Recipe::new("t")).unwrap();
        let h = confidence_histogram(&[uniform], &ood).unwrap();
        assert_eq!(h.counts[5], 3);
        assert_eq!(fraction_above(&[0.95, 0.9, 0.2, 0.91], 0.9), 0.5);
    }

    #[test]
    fn path_profile_length() {
        let path = gen_interpolation_path(&[0.0], &[1.0], &crate::datasets::default_t_grid()).unwrap();
        let profile = path_entropy_profile(&[linear(&[2.0])], &path).unwrap();
        assert_eq!(profile.len(), 121);
        assert_eq!(profile[0].0, -1.0);
    }

    #[test]
    fn metrics_records() {
        let r = MetricsRecord::new("r1", ModelIndex::Ensemble, Split::TestComplex, "accuracy", 0.25, 3).unwrap();
        assert_eq!(r.to_csv_line(), "r1,ensemble,test-complex,accuracy,0.25,3");
        let r = MetricsRecord::new("r1", ModelIndex::Member(1), Split::Ood, "entropy", 1.0, 0).unwrap();
        assert_eq!(r.to_csv_line(), "r1,1,ood,entropy,1,0");
        assert!(MetricsRecord::new("a,b", ModelIndex::Member(0), Split::Val, "m", 0.0, 0).is_err());
        assert!(MetricsRecord::new("r", ModelIndex::Member(0), Split::Val, "m", f64::NAN, 0).is_err());
    }

    fn random_distribution(r: &mut crate::rng::Prng, k: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..k).map(|_| r.gen::<f64>() + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn jensen_on_random_pairs() {
        let mut r = rng(77);
        for _ in 0..1000 {
            let k = r.gen_range(2..6);
            let p = random_distribution(&mut r, k);
            let q = random_distribution(&mut r, k);
            let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a + b) / 2.0).collect();
            let lhs = entropy_row(&mix);
            let rhs = (entropy_row(&p) + entropy_row(&q)) / 2.0;
            assert!(lhs >= rhs - 1e-9);
        }
    }

    proptest! {
        #[test]
        fn entropy_is_bounded(seed in any::<u64>(), k in 2usize..8) {
            let p = random_distribution(&mut rng(seed), k);
            let h = entropy_row(&p);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= libm::log(k as f64) + 1e-12);
        }

        #[test]
        fn ensemble_entropy_dominates_members(seed in any::<u64>(), members in 1usize..5) {
            let mut r = rng(seed);
            let spec = ClassifierSpec::new(3, vec![4], 3).unwrap();
            let models: Vec<Classifier> = (0..members)
                .map(|i| Classifier::init(spec.clone(), seed.wrapping_add(i as u64)).unwrap())
                .collect();
            let x = crate::testutil::random_tensor(&mut r, &[6, 3], 3.0);
            let agg = aggregate_ensemble(&models, &x).unwrap();
            let ens = entropy(&agg);
            let member: Vec<Vec<f64>> = models.iter().map(|m| entropy(&m.predict(&x).unwrap())).collect();
            for i in 0..6 {
                let mean = member.iter().map(|e| e[i]).sum::<f64>() / members as f64;
                prop_assert!(ens[i] >= mean - 1e-9);
                let s: f64 = agg.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn mean_and_sum_share_argmax(seed in any::<u64>()) {
            let mut r = rng(seed);
            let spec = ClassifierSpec::new(2, vec![3], 4).unwrap();
            let models: Vec<Classifier> = (0..3)
                .map(|i| Classifier::init(spec.clone(), seed ^ i).unwrap())
                .collect();
            let x = crate::testutil::random_tensor(&mut r, &[5, 2], 2.0);
            let agg = aggregate_ensemble(&models, &x).unwrap();
            let mut sum = models[0].predict(&x).unwrap();
            for m in &models[1..] {
                let p = m.predict(&x).unwrap();
                for (a, b) in sum.data_mut().iter_mut().zip(p.data()) {
                    *a += b;
                }
            }
            prop_assert_eq!(agg.argmax_rows(), sum.argmax_rows());
        }

        #[test]
        fn identical_members_keep_accuracy(seed in any::<u64>()) {
            let spec = ClassifierSpec::new(2, vec![3], 2).unwrap();
            let m = Classifier::init(spec, seed).unwrap();
            let mut r = rng(seed);
            let x = crate::testutil::random_tensor(&mut r, &[20, 2], 2.0);
            let labels = (0..20).map(|_| r.gen_range(0..2)).collect();
            let d = LabeledDataset::new(x, labels, 2, "d", Recipe::new("t")).unwrap();
            let models = [m.clone(), m.clone()];
            prop_assert_eq!(accuracy(&Ensemble(&models), &d).unwrap(), accuracy(&m, &d).unwrap());
        }
    }
}
