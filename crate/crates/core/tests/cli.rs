use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modgate::cli::{Manifest, RunConfig};

fn modgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modgate"))
        .args(args)
        .output()
        .expect("spawn modgate")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn gen(&self, name: &str, config: &str) -> PathBuf {
        let cfg = self.config(&format!("{name}.cfg"), config);
        let out = self.path(name);
        let o = modgate(&["gen-data", "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    }

    fn train(&self, name: &str, config: &str, data: &Path, extra: &[&str]) -> (Output, PathBuf) {
        let cfg = self.config(&format!("{name}.cfg"), config);
        let out = self.path(name);
        let mut args = vec!["train", "--config", s(&cfg), "--data", s(data), "--out", s(&out)];
        args.extend_from_slice(extra);
        (modgate(&args), out)
    }
}

const SMALL: &str = "size = 60\nd = 4\nbatch_size = 16\n";

fn small(extra: &str) -> String {
    format!("{SMALL}{extra}")
}

#[test]
fn gen_data_writes_requested_size_deterministically() {
    let w = Work::new();
    let a = w.gen("a.jsonl", "size = 37\nseed = 4\n");
    let b = w.gen("b.jsonl", "size = 37\nseed = 4\n");
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 37);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let m = Manifest::read(&w.path("a.jsonl.manifest.json")).unwrap();
    assert_eq!(m.command, "gen-data");
    assert_eq!(m.seed, 4);
}

#[test]
fn gen_data_seed_flag_overrides_config() {
    let w = Work::new();
    let cfg = w.config("c.cfg", "size = 10\nseed = 1\n");
    let (x, y) = (w.path("x.jsonl"), w.path("y.jsonl"));
    assert_eq!(
        code(&modgate(&[
            "gen-data",
            "--config",
            s(&cfg),
            "--out",
            s(&x),
            "--seed",
            "2"
        ])),
        0
    );
    assert_eq!(code(&modgate(&["gen-data", "--config", s(&cfg), "--out", s(&y)])), 0);
    assert_ne!(fs::read(&x).unwrap(), fs::read(&y).unwrap());
}

#[test]
fn gen_data_all_noise_acoustic_flags() {
    let w = Work::new();
    let p = w.gen("n.jsonl", "size = 50\nnoise_prob = 0,1,0\n");
    let ds = modgate::data::load_jsonl(&p).unwrap();
    assert!(ds.iter().all(|u| u.noise_flags.unwrap()[1]));
}

#[test]
fn exit_codes() {
    let w = Work::new();
    // Unknown key.
    let bad = w.config("bad.cfg", "sizes = 10\n");
    let o = modgate(&["gen-data", "--config", s(&bad), "--out", s(&w.path("o.jsonl"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sizes"));
    // Missing config file and unwritable output.
    let o = modgate(&[
        "gen-data",
        "--config",
        s(&w.path("nope.cfg")),
        "--out",
        s(&w.path("o.jsonl")),
    ]);
    assert_eq!(code(&o), 1);
    let o = modgate(&["gen-data", "--out", s(&w.path("no/such/dir/o.jsonl"))]);
    assert_eq!(code(&o), 1);
    // Bad flags.
    assert_eq!(code(&modgate(&["train"])), 2);
    assert_eq!(code(&modgate(&["frobnicate"])), 2);
    let data = w.gen("d.jsonl", SMALL);
    let (o, _) = w.train("t", SMALL, &data, &["--ablation", "no-xyz"]);
    assert_eq!(code(&o), 2);
    // Schema error in the dataset.
    let broken = w.path("broken.jsonl");
    fs::write(&broken, "{\"id\":\"a\"}\n").unwrap();
    let (o, _) = w.train("t2", SMALL, &broken, &[]);
    assert_eq!(code(&o), 2);
    // Diverging training.
    let (o, _) = w.train("nan", &small("learning_rate = 1e300\nepochs = 3\n"), &data, &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}

#[test]
fn zero_epochs_writes_initialized_model() {
    let w = Work::new();
    let data = w.gen("d.jsonl", SMALL);
    let (o, dir) = w.train("t", &small("epochs = 0\n"), &data, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join("model.bin").exists());
    let m = Manifest::read(&dir.join("manifest.json")).unwrap();
    assert!(m.metrics.is_some());
    assert_eq!(fs::read_to_string(dir.join("train.log")).unwrap(), "");
}

#[test]
fn train_log_reports_keep_fractions_every_epoch() {
    let w = Work::new();
    let data = w.gen("d.jsonl", SMALL);
    let (o, dir) = w.train("t", &small("epochs = 3\nfilter = soft\nmodulation = on\n"), &data, &[]);
    assert_eq!(code(&o), 0);
    let log = fs::read_to_string(dir.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 3);
    for line in log.lines() {
        for key in ["keep_l=", "keep_a=", "keep_v="] {
            assert!(line.contains(key), "{line}");
        }
    }
}

#[test]
fn ablations_produce_distinct_named_manifests() {
    let w = Work::new();
    let data = w.gen("d.jsonl", SMALL);
    let mut configs = Vec::new();
    for ab in ["full", "no-ml", "no-mfm", "no-be"] {
        let (o, dir) = w.train(ab, &small("epochs = 1\n"), &data, &["--ablation", ab]);
        assert_eq!(code(&o), 0, "{ab}: {}", String::from_utf8_lossy(&o.stderr));
        let m = Manifest::read(&dir.join("manifest.json")).unwrap();
        assert_eq!(m.ablation, ab);
        assert_eq!(m.config.ablation.as_str(), ab);
        configs.push(m.config.resolved());
    }
    for i in 0..configs.len() {
        for j in i + 1..configs.len() {
            assert_ne!(configs[i], configs[j]);
        }
    }
}

#[test]
fn manifest_reproduces_metrics() {
    let w = Work::new();
    let data = w.gen("d.jsonl", SMALL);
    let (o, dir) = w.train("first", &small("epochs = 2\n"), &data, &["--seed", "11"]);
    assert_eq!(code(&o), 0);
    let m = Manifest::read(&dir.join("manifest.json")).unwrap();
    assert_eq!(
        m.dataset_hash,
        modgate::cli::manifest::content_hash(&fs::read(&data).unwrap())
    );
    assert_eq!(m.seed, 11);
    let (o, again) = w.train("second", &m.config.to_text(), &data, &[]);
    assert_eq!(code(&o), 0);
    let m2 = Manifest::read(&again.join("manifest.json")).unwrap();
    assert_eq!(m.metrics, m2.metrics);
    assert_eq!(
        fs::read(dir.join("model.bin")).unwrap(),
        fs::read(again.join("model.bin")).unwrap()
    );
    assert_eq!(RunConfig::parse(&m.config.to_text()).unwrap(), m.config);
}

#[test]
fn eval_is_repeatable_and_checks_dims() {
    let w = Work::new();
    let data = w.gen("d.jsonl", SMALL);
    let (o, dir) = w.train("t", &small("epochs = 1\n"), &data, &[]);
    assert_eq!(code(&o), 0);
    let model = dir.join("model.bin");
    let a = modgate(&["eval", "--model", s(&model), "--data", s(&data)]);
    let b = modgate(&["eval", "--model", s(&model), "--data", s(&data)]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    for key in ["acc7=", "acc2=", "f1=", "mae=", "corr="] {
        assert_eq!(text.lines().filter(|l| l.starts_with(key)).count(), 1, "{key}");
    }

    let other = w.gen("other.jsonl", "size = 20\nfeature_dims = 8,4,5\n");
    let o = modgate(&["eval", "--model", s(&model), "--data", s(&other)]);
    assert_eq!(code(&o), 2);
    let o = modgate(&["eval", "--model", s(&w.path("missing.bin")), "--data", s(&data)]);
    assert_eq!(code(&o), 1);
    let garbage = w.path("garbage.bin");
    fs::write(&garbage, b"not a model").unwrap();
    let o = modgate(&["eval", "--model", s(&garbage), "--data", s(&data)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn hard_model_reports_binary_keep_rates() {
    let w = Work::new();
    let data = w.gen("d.jsonl", SMALL);
    let (o, dir) = w.train("t", &small("epochs = 1\nfilter = hard\n"), &data, &[]);
    assert_eq!(code(&o), 0);
    let out = modgate(&["eval", "--model", s(&dir.join("model.bin")), "--data", s(&data)]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for tag in ["l", "a", "v"] {
        let line = text
            .lines()
            .find(|l| l.starts_with(&format!("keep_{tag}=")))
            .unwrap_or_else(|| panic!("no keep_{tag} in {text}"));
        let rate: f64 = line.split('=').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&rate));
    }
    let csv = w.path("m.csv");
    assert_eq!(
        code(&modgate(&[
            "inspect-masks",
            "--model",
            s(&dir.join("model.bin")),
            "--data",
            s(&data),
            "--out",
            s(&csv)
        ])),
        0
    );
    for row in fs::read_to_string(&csv).unwrap().lines().skip(1) {
        let keep: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(keep == 0.0 || keep == 1.0, "{row}");
    }
}

#[test]
fn inspect_masks_csv() {
    let w = Work::new();
    let data = w.gen("d.jsonl", SMALL);
    let (o, dir) = w.train("t", &small("epochs = 1\n"), &data, &[]);
    assert_eq!(code(&o), 0);
    let csv = w.path("masks.csv");
    let o = modgate(&[
        "inspect-masks",
        "--model",
        s(&dir.join("model.bin")),
        "--data",
        s(&data),
        "--out",
        s(&csv),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("mean_keep language="));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("utterance_id,modality,keep,replace,penalty"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3 * 60);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert!(["language", "acoustic", "visual"].contains(&f[1]));
        let keep: f64 = f[2].parse().unwrap();
        let replace: f64 = f[3].parse().unwrap();
        let penalty: f64 = f[4].parse().unwrap();
        assert!((keep + replace - 1.0).abs() <= 1e-9, "{row}");
        assert!((0.0..=1.0).contains(&penalty));
    }
}

#[test]
fn inspect_masks_rejects_unfiltered_model() {
    let w = Work::new();
    let data = w.gen("d.jsonl", SMALL);
    let (o, dir) = w.train("t", &small("epochs = 1\n"), &data, &["--ablation", "no-mfm"]);
    assert_eq!(code(&o), 0);
    let o = modgate(&[
        "inspect-masks",
        "--model",
        s(&dir.join("model.bin")),
        "--data",
        s(&data),
        "--out",
        s(&w.path("m.csv")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model has no filter"));
}

#[test]
fn trained_model_fits_noise_free_data() {
    let w = Work::new();
    let cfg = "size = 600\nsigma = 0\nepochs = 30\nfilter = none\n";
    let data = w.gen("d.jsonl", cfg);
    let (o, dir) = w.train("t", cfg, &data, &[]);
    assert_eq!(code(&o), 0);
    let out = stdout(&modgate(&[
        "eval",
        "--model",
        s(&dir.join("model.bin")),
        "--data",
        s(&data),
    ]));
    let mae: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("mae="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(mae < 0.05, "mae {mae}");
}
