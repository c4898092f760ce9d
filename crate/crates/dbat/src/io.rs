//! File formats: CSV exports, model files and IDX loading.

use std::fmt::Write as _;
use std::fs;
use std::path::{Component, Path, PathBuf};

use dbat_core::datasets::{idx_dataset, parse_idx_images, parse_idx_labels, LabeledDataset};
use dbat_core::evaluation::{Histogram, MetricsRecord, HISTOGRAM_CSV_HEADER, METRICS_CSV_HEADER};
use dbat_core::models::Classifier;

use crate::error::{Result, RunError};

/// A file produced by an experiment, named relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn text(name: impl Into<String>, text: String) -> Self {
        Self {
            name: name.into(),
            bytes: text.into_bytes(),
        }
    }
}

/// Builds CSV text with a header and `\n` line endings.
#[derive(Debug, Clone)]
pub struct CsvText(String);

impl CsvText {
    pub fn new(header: &str) -> Self {
        Self(format!("{header}\n"))
    }

    pub fn row<T: std::fmt::Display>(&mut self, fields: impl IntoIterator<Item = T>) {
        let mut first = true;
        for f in fields {
            if !first {
                self.0.push(',');
            }
            first = false;
            let _ = write!(self.0, "{f}");
        }
        self.0.push('\n');
    }

    pub fn finish(self) -> String {
        self.0
    }
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = format!("{METRICS_CSV_HEADER}\n");
    for r in records {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut csv = CsvText::new(HISTOGRAM_CSV_HEADER);
    for (lo, hi, count) in h.bins() {
        csv.row([lo.to_string(), hi.to_string(), count.to_string()]);
    }
    csv.finish()
}

/// `f0,...,f{d-1},label`.
pub fn dataset_csv(data: &LabeledDataset) -> String {
    let header: Vec<String> = (0..data.dim())
        .map(|j| format!("f{j}"))
        .chain(["label".into()])
        .collect();
    let mut csv = CsvText::new(&header.join(","));
    for i in 0..data.len() {
        let row = data.features().row(i);
        csv.row(row.iter().map(|v| v.to_string()).chain([data.labels()[i].to_string()]));
    }
    csv.finish()
}

pub fn save_model(path: &Path, model: &Classifier) -> Result<()> {
    fs::write(path, model.to_bytes()).map_err(|e| RunError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Classifier> {
    let bytes = fs::read(path).map_err(|e| RunError::io(path, e))?;
    Classifier::from_bytes(&bytes).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| RunError::Data(format!("cannot read {}: {e}", path.display())))
}

/// Loads an IDX image/label pair, keeps `keep` classes and relabels them.
pub fn load_idx(images: &Path, labels: &Path, keep: &[usize], name: &str) -> Result<LabeledDataset> {
    let with_path = |p: &Path, e: dbat_core::Error| RunError::Data(format!("{}: {e}", p.display()));
    let imgs = parse_idx_images(&read_input(images)?).map_err(|e| with_path(images, e))?;
    let labs = parse_idx_labels(&read_input(labels)?).map_err(|e| with_path(labels, e))?;
    Ok(idx_dataset(&imgs, &labs, keep, name)?)
}

/// Rejects names that could leave the output directory.
fn contained(dir: &Path, name: &str) -> Result<PathBuf> {
    let rel = Path::new(name);
    if name.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(RunError::Internal(format!(
            "artifact name `{name}` escapes the output directory"
        )));
    }
    Ok(dir.join(rel))
}

/// Writes every artifact below `dir`, creating subdirectories as needed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    for a in artifacts {
        let path = contained(dir, &a.name)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| RunError::io(parent, e))?;
        }
        fs::write(&path, &a.bytes).map_err(|e| RunError::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dbat_core::autodiff::Tensor;
    use dbat_core::datasets::Recipe;
    use dbat_core::evaluation::{ModelIndex, Split};
    use dbat_core::models::ClassifierSpec;

    #[test]
    fn metrics_csv_layout() {
        let r = MetricsRecord::new("r", ModelIndex::Member(1), Split::Train, "accuracy", 0.5, 3).unwrap();
        assert_eq!(
            metrics_csv(&[r]),
            "run_id,model_index,split,metric,value,epoch\nr,1,train,accuracy,0.5,3\n"
        );
    }

    #[test]
    fn histogram_csv_layout() {
        let h = Histogram::from_values(&[0.05, 0.95, 1.0]).unwrap();
        let text = histogram_csv(&h);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], "bin_lo,bin_hi,count");
        assert_eq!(lines[1], "0,0.1,1");
        assert_eq!(lines[10], "0.9,1,2");
    }

    #[test]
    fn dataset_csv_layout() {
        let d = LabeledDataset::new(
            Tensor::new(vec![2, 2], vec![0.5, -1.0, 2.0, 0.25]).unwrap(),
            vec![1, 0],
            2,
            "t",
            Recipe::new("t"),
        )
        .unwrap();
        assert_eq!(dataset_csv(&d), "f0,f1,label\n0.5,-1,1\n2,0.25,0\n");
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Classifier::init(ClassifierSpec::new(3, vec![4], 2).unwrap(), 9).unwrap();
        let path = dir.path().join("m.dbat");
        save_model(&path, &m).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DBAT");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(load_model(&path).unwrap(), m);
    }

    #[test]
    fn artifacts_stay_inside() {
        let dir = tempfile::tempdir().unwrap();
        for bad in ["../x.csv", "/tmp/x.csv", "a/../../x", ""] {
            assert!(
                write_artifacts(dir.path(), &[Artifact::text(bad, String::new())]).is_err(),
                "{bad}"
            );
        }
        write_artifacts(dir.path(), &[Artifact::text("models/a.txt", "hi".into())]).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("models/a.txt")).unwrap(), "hi");
    }
}
