use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dbat::manifest::Manifest;

fn dbat(dir: &Path, args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dbat"));
    cmd.args(args).current_dir(dir).env_remove("DBAT_SEED");
    if let Some(s) = seed {
        cmd.env("DBAT_SEED", s);
    }
    cmd.output().expect("spawn dbat")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_TOY: &str = "experiment = toy2d\ntrain.alpha = 0.5\ntrain.epochs = 8\ndata.n_per_class = 40\n\
                         data.eval_n_per_class = 40\ndata.grid_resolution = 21\n";

fn files_under(dir: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out
}

#[test]
fn toy2d_run_writes_expected_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.cfg", &format!("{SMALL_TOY}output_dir = out\n"));
    let o = dbat(tmp.path(), &["run", "c.cfg"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("out");
    for f in [
        "metrics.csv",
        "manifest.json",
        "boundary.csv",
        "histogram.csv",
        "histogram_erm.csv",
        "data/train.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(out.join("models/member_1.dbat").is_file());
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("run_id,model_index,split,metric,value,epoch\n"));
    assert!(!metrics.contains('\r'));
    let boundary = fs::read_to_string(out.join("boundary.csv")).unwrap();
    // 21x21 lattice for two members and the ensemble, plus the header
    assert_eq!(boundary.lines().count(), 3 * 21 * 21 + 1);
    let train = fs::read_to_string(out.join("data/train.csv")).unwrap();
    assert!(train.starts_with("f0,f1,label\n"));
    assert_eq!(train.lines().count(), 81);

    let model = dbat::io::load_model(&out.join("models/member_0.dbat")).unwrap();
    assert_eq!(model.spec().input_dim, 2);
}

#[test]
fn only_the_output_dir_is_written() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.cfg", &format!("{SMALL_TOY}output_dir = nested/out\n"));
    let o = dbat(tmp.path(), &["run", "c.cfg"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let all = files_under(tmp.path());
    assert!(
        all.iter()
            .all(|p| p == Path::new("c.cfg") || p.starts_with("nested/out")),
        "{all:?}"
    );
}

#[test]
fn manifest_rerun_reproduces_every_csv() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "c.cfg",
        &format!("{SMALL_TOY}output_dir = out\nseed = 4\ntrain.mode = dbat-simultaneous\nensemble_size = 3\n"),
    );
    assert!(dbat(tmp.path(), &["run", "c.cfg"], None).status.success());
    let out = tmp.path().join("out");
    let before: Vec<(PathBuf, Vec<u8>)> = files_under(&out)
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.clone(), fs::read(out.join(&p)).unwrap()))
        .collect();
    assert!(before.len() >= 4);
    fs::copy(out.join("manifest.json"), tmp.path().join("m.json")).unwrap();
    fs::remove_dir_all(&out).unwrap();
    let o = dbat(tmp.path(), &["run", "m.json"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    for (p, bytes) in before {
        assert_eq!(fs::read(out.join(&p)).unwrap(), bytes, "{}", p.display());
    }
}

#[test]
fn manifest_records_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.cfg", &format!("{SMALL_TOY}output_dir = out\n"));
    assert!(dbat(tmp.path(), &["run", "c.cfg"], None).status.success());
    let m = Manifest::from_json(&fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m.config["train.alpha"], "0.5");
    assert_eq!(m.config["train.learning_rate"], "0.01");
    assert_eq!(m.config["experiment"], "toy2d");
    assert_eq!(m.artifact_versions["model_format"], "1");
    assert!(m.outputs.contains(&"metrics.csv".to_string()));
    assert!(m.wall_time_seconds >= 0.0);
}

#[test]
fn seed_env_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "a.cfg", &format!("{SMALL_TOY}output_dir = a\nseed = 1\n"));
    write(tmp.path(), "b.cfg", &format!("{SMALL_TOY}output_dir = b\nseed = 9\n"));
    assert!(dbat(tmp.path(), &["run", "a.cfg"], Some("9")).status.success());
    assert!(dbat(tmp.path(), &["run", "b.cfg"], None).status.success());
    let m = Manifest::from_json(&fs::read_to_string(tmp.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(m.seed, 9);
    let strip = |dir: &str| {
        fs::read_to_string(tmp.path().join(dir).join("metrics.csv"))
            .unwrap()
            .replace("seed9", "")
    };
    assert_eq!(strip("a"), strip("b"));
    let o = dbat(tmp.path(), &["run", "a.cfg"], Some("nine"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2_with_line_or_key() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "bad.cfg",
        "experiment = toy2d\noutput_dir = o\n\ntrain.alpha 0.5\n",
    );
    let o = dbat(tmp.path(), &["run", "bad.cfg"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    write(tmp.path(), "missing.cfg", "experiment = shortcut\noutput_dir = o\n");
    let o = dbat(tmp.path(), &["run", "missing.cfg"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.alpha"), "{}", stderr(&o));

    let o = dbat(tmp.path(), &["run", "does-not-exist.cfg"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn numeric_failure_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "c.cfg",
        &format!("{SMALL_TOY}output_dir = out\ntrain.learning_rate = 1e300\ntrain.momentum = 0\n"),
    );
    let o = dbat(tmp.path(), &["run", "c.cfg"], None);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

// --- IDX fixture -----------------------------------------------------------

const SIDE: usize = 4;

/// Ten classes of 4x4 images: class `c` lights pixels `c` and `c + 6`;
/// the rest carry low deterministic noise.
fn idx_pair(per_class: usize, salt: usize) -> (Vec<u8>, Vec<u8>) {
    let n = per_class * 10;
    let mut images = Vec::new();
    images.extend_from_slice(&0x0803u32.to_be_bytes());
    images.extend_from_slice(&(n as u32).to_be_bytes());
    images.extend_from_slice(&(SIDE as u32).to_be_bytes());
    images.extend_from_slice(&(SIDE as u32).to_be_bytes());
    let mut labels = Vec::new();
    labels.extend_from_slice(&0x0801u32.to_be_bytes());
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for i in 0..n {
        let c = i % 10;
        labels.push(c as u8);
        for j in 0..SIDE * SIDE {
            let lit = j == c || j == c + 6;
            images.push(if lit {
                230
            } else {
                ((i * 31 + j * 17 + salt) % 40) as u8
            });
        }
    }
    (images, labels)
}

fn write_idx(dir: &Path) {
    let (ti, tl) = idx_pair(60, 0);
    let (bi, bl) = idx_pair(60, 7);
    fs::write(dir.join("top-images.idx"), ti).unwrap();
    fs::write(dir.join("top-labels.idx"), tl).unwrap();
    fs::write(dir.join("bottom-images.idx"), bi).unwrap();
    fs::write(dir.join("bottom-labels.idx"), bl).unwrap();
}

const DOMINOES: &str = "experiment = dominoes-idx\ntrain.alpha = 1\ntrain.epochs = 20\nmodel.hidden_dims = 16\n\
                        data.top_images = top-images.idx\ndata.top_labels = top-labels.idx\n\
                        data.bottom_images = bottom-images.idx\ndata.bottom_labels = bottom-labels.idx\n";

#[test]
fn dominoes_from_idx_files() {
    let tmp = tempfile::tempdir().unwrap();
    write_idx(tmp.path());
    for (name, extra) in [("rand", ""), ("held", "data.domino_ood = held-out-bottom\n")] {
        write(tmp.path(), "d.cfg", &format!("{DOMINOES}{extra}output_dir = {name}\n"));
        let o = dbat(tmp.path(), &["run", "d.cfg"], None);
        assert!(o.status.success(), "{}", stderr(&o));
        let metrics = fs::read_to_string(tmp.path().join(name).join("metrics.csv")).unwrap();
        assert!(metrics.contains(",test-complex,accuracy,"));
        assert!(metrics.contains(",test-iid,accuracy,"));
        let train = fs::read_to_string(tmp.path().join(name).join("data/train.csv")).unwrap();
        // two 16-pixel halves plus the label
        assert!(train.lines().next().unwrap().ends_with("f31,label"));
    }
}

#[test]
fn corrupt_idx_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    write_idx(tmp.path());
    let mut bytes = fs::read(tmp.path().join("top-images.idx")).unwrap();
    bytes[3] = 0x04;
    fs::write(tmp.path().join("top-images.idx"), bytes).unwrap();
    write(tmp.path(), "d.cfg", &format!("{DOMINOES}output_dir = out\n"));
    let o = dbat(tmp.path(), &["run", "d.cfg"], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("0x00000804"), "{}", stderr(&o));

    fs::remove_file(tmp.path().join("top-images.idx")).unwrap();
    let o = dbat(tmp.path(), &["run", "d.cfg"], None);
    assert_eq!(o.status.code(), Some(3));
}

// --- sweep and theorem -----------------------------------------------------

#[test]
fn sweep_rows_sorted_by_alpha_descending() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.cfg", &format!("{SMALL_TOY}output_dir = out\n"));
    let o = dbat(tmp.path(), &["sweep", "c.cfg", "--alphas", "0.1,1,0.5"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("out/sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,val_accuracy,test_accuracy,selected");
    let alphas: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(alphas, vec![1.0, 0.5, 0.1]);
    let selected = lines[1..].iter().filter(|l| l.ends_with(",1")).count();
    assert_eq!(selected, 1);

    // the manifest remembers the sweep and its alphas
    fs::copy(tmp.path().join("out/sweep.csv"), tmp.path().join("first.csv")).unwrap();
    let o = dbat(tmp.path(), &["run", "out/manifest.json"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(tmp.path().join("out/sweep.csv")).unwrap(),
        fs::read(tmp.path().join("first.csv")).unwrap()
    );
}

#[test]
fn single_alpha_gives_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.cfg", &format!("{SMALL_TOY}output_dir = out\n"));
    let o = dbat(tmp.path(), &["sweep", "c.cfg", "--alphas", "0.3"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("out/sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0.3,"));
}

#[test]
fn sweep_without_alphas_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.cfg", &format!("{SMALL_TOY}output_dir = out\n"));
    assert_eq!(dbat(tmp.path(), &["sweep", "c.cfg"], None).status.code(), Some(2));
}

#[test]
fn theorem_command_and_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dbat(tmp.path(), &["theorem", "--grid", "201"], None);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));

    write(
        tmp.path(),
        "t.cfg",
        "experiment = theorem\noutput_dir = out\ntheorem.grid = 301\n",
    );
    let o = dbat(tmp.path(), &["run", "t.cfg"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let posterior = fs::read_to_string(tmp.path().join("out/posterior.csv")).unwrap();
    assert_eq!(posterior.lines().next(), Some("c,s,bruteforce,gradient,predicted"));
    assert!(posterior.contains("\n0,1,1,"));
    assert!(posterior.contains("\n1,0,0,"));
    assert_eq!(
        fs::read_to_string(tmp.path().join("out/theorem.txt")).unwrap(),
        "PASS\n"
    );
}

#[test]
fn interpolation_profile_layout() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "i.cfg",
        "experiment = interpolation\noutput_dir = out\ntrain.alpha = 1\ntrain.epochs = 5\ndata.n_per_class = 30\n",
    );
    let o = dbat(tmp.path(), &["run", "i.cfg"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("out/entropy_profile.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,ensemble,entropy");
    assert_eq!(lines.len(), 1 + 2 * 121);
    assert!(lines[1].starts_with("-1,dbat-sequential,"));
    assert!(lines[122].starts_with("-1,erm,"));
}

#[test]
fn output_dir_flag_redirects() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.cfg", &format!("{SMALL_TOY}output_dir = configured\n"));
    let o = dbat(tmp.path(), &["run", "c.cfg", "--output-dir", "elsewhere"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("elsewhere/metrics.csv").is_file());
    assert!(!tmp.path().join("configured").exists());
}
