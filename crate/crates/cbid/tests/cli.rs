use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cbid::commands::gradcheck_with;
use cbid::formats::{format_db, format_model, read_db, read_model, Model};
use cbid::CliError;
use cbid_core::data::Mode;
use cbid_core::hashfn::{CodeBook, HashFunction};
use cbid_core::trainer::gradcheck::GradCheckConfig;
use cbid_core::trainer::{weak_gradient, WeightMatrix};
use tempfile::TempDir;

fn cbid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbid")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cbid(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    cbid(args).status.code().unwrap()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn file(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        s(&p)
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// Deterministic pseudo-random numbers in [0, 1).
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Two 3-D blobs, `n` samples per class, labels alternating 1, 2.
fn blobs(n: usize, seed: u64) -> (String, String) {
    let mut rng = Lcg(seed);
    let (mut x, mut y) = (String::new(), String::new());
    for i in 0..2 * n {
        let c = i % 2;
        let center = if c == 0 { -2.0 } else { 2.0 };
        let row: Vec<String> = (0..3)
            .map(|j| {
                let offset = if j == 0 { center } else { 0.0 };
                format!("{}", offset + rng.next() - 0.5)
            })
            .collect();
        x.push_str(&row.join(","));
        x.push('\n');
        y.push_str(&format!("{}\n", c + 1));
    }
    (x, y)
}

const SMALL: &str = "bits=4\nrestarts=10\nhits=2\nmisses=2\nnu=1e-3\n";

fn trained(w: &Work) -> (String, String, String) {
    let (x, y) = blobs(10, 1);
    let f = w.file("x.csv", &x);
    let l = w.file("y.txt", &y);
    let c = w.file("cfg.txt", SMALL);
    let t = s(&w.path("t.csv"));
    let m = s(&w.path("model.txt"));
    ok(&["mine", "--features", &f, "--labels", &l, "--config", &c, "--out", &t]);
    ok(&["train", "--features", &f, "--labels", &l, "--triplets", &t, "--config", &c, "--out", &m]);
    (f, l, m)
}

#[test]
fn mine_four_point_toy() {
    let w = Work::new();
    let f = w.file("x.csv", "0,0\n0.1,0\n5,5\n5.1,5\n");
    let l = w.file("y.txt", "1\n1\n2\n2\n");
    let c = w.file("c.txt", "hits=1\nmisses=1\n");
    let out = s(&w.path("t.csv"));
    let msg = ok(&["mine", "--features", &f, "--labels", &l, "--config", &c, "--out", &out]);
    assert!(msg.contains("mined 4 triplets"), "{msg}");
    assert_eq!(
        w.read("t.csv"),
        "anchor,hit,miss,miss_class\n0,1,2,2\n1,0,2,2\n2,3,1,1\n3,2,1,1\n"
    );
}

#[test]
fn mine_rejects_bad_inputs() {
    let w = Work::new();
    let empty = w.file("empty.csv", "");
    let l = w.file("y.txt", "1\n1\n2\n2\n");
    let out = s(&w.path("t.csv"));
    assert_eq!(code(&["mine", "--features", &empty, "--labels", &l, "--out", &out]), 3);
    let three = w.file("x.csv", "0,0\n1,1\n2,2\n");
    assert_eq!(code(&["mine", "--features", &three, "--labels", &l, "--out", &out]), 3);
    let ragged = w.file("r.csv", "0,0\n1\n");
    let err = cbid(&["mine", "--features", &ragged, "--labels", &l, "--out", &out]);
    assert_eq!(err.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&err.stderr).contains("r.csv:2"));
    assert_eq!(code(&["mine", "--labels", &l, "--out", &out]), 2);
    assert_eq!(code(&["bogus"]), 2);
}

#[test]
fn train_is_deterministic_and_trace_monotone() {
    let w = Work::new();
    let (f, l, _) = trained(&w);
    let first = w.read("model.txt");
    let trace = w.read("model.txt.trace.csv");
    let t = s(&w.path("t.csv"));
    let c = s(&w.path("cfg.txt"));
    let m2 = s(&w.path("again.txt"));
    ok(&["train", "--features", &f, "--labels", &l, "--triplets", &t, "--config", &c, "--out", &m2]);
    assert_eq!(first, w.read("again.txt"));
    assert_eq!(trace, w.read("again.txt.trace.csv"));

    assert!(first.starts_with("cbid-model v1\nmode image\nd 3\n"));
    let rows: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(!rows.is_empty());
    for p in rows.windows(2) {
        assert!(p[1] <= p[0] + 1e-8, "{trace}");
    }

    // a different seed changes the model
    let m3 = s(&w.path("other.txt"));
    ok(&["train", "--features", &f, "--labels", &l, "--triplets", &t, "--config", &c, "--seed", "99", "--out", &m3]);
    assert_ne!(first, w.read("other.txt"));
}

#[test]
fn train_exit_codes() {
    let w = Work::new();
    let (x, y) = blobs(10, 2);
    let f = w.file("x.csv", &x);
    let l = w.file("y.txt", &y);
    let t = s(&w.path("t.csv"));
    ok(&["mine", "--features", &f, "--labels", &l, "--config", &w.file("m.txt", "hits=2\nmisses=2\n"), "--out", &t]);
    let m = s(&w.path("m.txt"));
    let zero = w.file("zero.txt", "bits=0\n");
    assert_eq!(code(&["train", "--features", &f, "--labels", &l, "--triplets", &t, "--config", &zero, "--out", &m]), 2);
    let stuck = w.file("stuck.txt", "bits=2\nrestarts=5\nmax_iterations=1\ntolerance=1e-14\n");
    assert_eq!(code(&["train", "--features", &f, "--labels", &l, "--triplets", &t, "--config", &stuck, "--out", &m]), 4);
    let bad = w.file("bad.csv", "anchor,hit,miss,miss_class\n0,1,2,2\n");
    assert_eq!(code(&["train", "--features", &f, "--labels", &l, "--triplets", &bad, "--out", &m]), 3);
}

#[test]
fn model_and_db_round_trip() {
    let w = Work::new();
    let (f, l, m) = trained(&w);
    let text = w.read("model.txt");
    let model = read_model(&w.path("model.txt")).unwrap();
    assert_eq!(format_model(&model), text);

    let db = s(&w.path("db.txt"));
    let msg = ok(&["encode", "--model", &m, "--features", &f, "--labels", &l, "--out", &db]);
    assert!(msg.contains("encoded 20 codes of 4 bits"), "{msg}");
    let loaded = read_db(&w.path("db.txt")).unwrap();
    assert_eq!(format_db(&loaded), w.read("db.txt"));
    let x = cbid::formats::read_features(Path::new(&f)).unwrap();
    let codes = model.codebook.encode(&x).unwrap();
    for (e, c) in loaded.entries().iter().zip(&codes) {
        assert_eq!(&e.code, c);
    }

    let empty = w.file("empty.csv", "");
    let db2 = s(&w.path("db2.txt"));
    ok(&["encode", "--model", &m, "--features", &empty, "--out", &db2]);
    assert_eq!(w.read("db2.txt"), "4\n");
    let narrow = w.file("narrow.csv", "1,2\n");
    assert_eq!(code(&["encode", "--model", &m, "--features", &narrow, "--out", &db2]), 3);
    assert_eq!(code(&["encode", "--model", &m, "--features", &f, "--mode", "patch", "--out", &db2]), 2);
}

#[test]
fn lossless_model_floats() {
    let h = HashFunction::new(vec![0.1 + 0.2, -1e-300, std::f64::consts::PI], 1.0 / 3.0).unwrap();
    let model = Model {
        mode: Mode::Image,
        codebook: CodeBook::from_functions(3, vec![h]).unwrap(),
        weights: WeightMatrix::from_rows(1, 2, vec![5e-324, 1.7976931348623157e308]).unwrap(),
    };
    let w = Work::new();
    let p = w.file("m.txt", &format_model(&model));
    assert_eq!(read_model(Path::new(&p)).unwrap(), model);
}

#[test]
fn self_retrieval_and_eval() {
    let w = Work::new();
    let (f, l, m) = trained(&w);
    let db = s(&w.path("db.txt"));
    ok(&["encode", "--model", &m, "--features", &f, "--labels", &l, "--out", &db]);
    let report = ok(&["eval", "--model", &m, "--db", &db, "--features", &f, "--labels", &l, "--k", "1"]);
    assert!(report.contains("precision@1,1\n"), "{report}");
    assert!(report.contains("accuracy,1\n"), "{report}");

    let r = s(&w.path("r.csv"));
    ok(&["retrieve", "--model", &m, "--db", &db, "--features", &f, "--k", "3", "--out", &r]);
    let text = w.read("r.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "query_id,rank,id,label,distance");
    assert_eq!(lines.len(), 1 + 20 * 3);
    assert!(lines[1].starts_with("0,1,") && lines[1].ends_with(",0"));

    let p = s(&w.path("p.csv"));
    ok(&["classify", "--model", &m, "--db", &db, "--features", &f, "--k", "3", "--out", &p]);
    let preds = w.read("p.csv");
    assert!(preds.starts_with("query_id,predicted_label,score\n"));
    assert_eq!(preds.lines().count(), 21);
    ok(&["classify", "--model", &m, "--db", &db, "--features", &f, "--rule", "i2c", "--out", &p]);
    ok(&["classify", "--model", &m, "--db", &db, "--features", &f, "--metric", "weighted", "--out", &p]);

    let wrong = w.file("wrong.txt", &"3\n".repeat(20));
    assert_eq!(code(&["eval", "--model", &m, "--db", &db, "--features", &f, "--labels", &wrong]), 3);
    let unlabeled = s(&w.path("u.txt"));
    ok(&["encode", "--model", &m, "--features", &f, "--out", &unlabeled]);
    assert_eq!(code(&["eval", "--model", &m, "--db", &unlabeled, "--features", &f, "--labels", &l]), 3);
}

#[test]
fn random_labels_give_chance_precision() {
    let w = Work::new();
    let mut rng = Lcg(17);
    let mut model = String::from("cbid-model v1\nmode image\nd 4\nt 16\nk 2\n");
    for _ in 0..16 {
        let v: Vec<String> = (0..5).map(|_| format!("{}", rng.next() - 0.5)).collect();
        model.push_str(&v.join(","));
        model.push('\n');
    }
    model.push_str(&"1,1\n".repeat(16));
    let m = w.file("model.txt", &model);
    let sample = |rng: &mut Lcg, n: usize| {
        let (mut x, mut y) = (String::new(), String::new());
        for i in 0..n {
            let v: Vec<String> = (0..4).map(|_| format!("{}", rng.next() - 0.5)).collect();
            x.push_str(&v.join(","));
            x.push('\n');
            let label = if rng.next() < 0.5 { 1 } else { 2 };
            // keep the classes exactly balanced
            let label = if i % 2 == 0 { label } else { 3 - label };
            y.push_str(&format!("{label}\n"));
        }
        (x, y)
    };
    let (dx, dy) = sample(&mut rng, 2000);
    let (qx, qy) = sample(&mut rng, 400);
    let db = s(&w.path("db.txt"));
    ok(&["encode", "--model", &m, "--features", &w.file("dx.csv", &dx), "--labels", &w.file("dy.txt", &dy), "--out", &db]);
    let report = ok(&[
        "eval", "--model", &m, "--db", &db, "--features", &w.file("qx.csv", &qx), "--labels", &w.file("qy.txt", &qy), "--k", "10",
    ]);
    let p: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("precision@10,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((p - 0.5).abs() <= 0.05, "{report}");
}

#[test]
fn patch_mode_pipeline() {
    let w = Work::new();
    let mut rng = Lcg(5);
    // six images, three patches each; class 1 near the origin, class 2 near (3, 3)
    let mut x = String::new();
    for img in 0..6 {
        let c = if img % 2 == 0 { 0.0 } else { 3.0 };
        for _ in 0..3 {
            x.push_str(&format!("{img},{},{}\n", c + rng.next() - 0.5, c + rng.next() - 0.5));
        }
    }
    let f = w.file("p.csv", &x);
    let l = w.file("y.txt", "1\n2\n1\n2\n1\n2\n");
    let c = w.file("c.txt", "bits=3\nrestarts=10\nnu=1e-3\n");
    let t = s(&w.path("t.csv"));
    let msg = ok(&["mine", "--mode", "patch", "--features", &f, "--labels", &l, "--out", &t]);
    assert!(msg.contains("mined 18 triplets"), "{msg}");
    let m = s(&w.path("m.txt"));
    ok(&["train", "--mode", "patch", "--features", &f, "--labels", &l, "--triplets", &t, "--config", &c, "--out", &m]);
    assert!(w.read("m.txt").contains("mode patch\n"));
    let db = s(&w.path("db.txt"));
    ok(&["encode", "--model", &m, "--features", &f, "--labels", &l, "--out", &db]);
    let p = s(&w.path("pred.csv"));
    ok(&["classify", "--model", &m, "--db", &db, "--features", &f, "--out", &p]);
    let preds = w.read("pred.csv");
    assert_eq!(preds.lines().count(), 7);
    assert!(preds.lines().nth(1).unwrap().starts_with("0,1,"));
    let report = ok(&["eval", "--model", &m, "--db", &db, "--features", &f, "--labels", &l, "--k", "1"]);
    assert!(report.contains("queries,6\n"), "{report}");
    assert_eq!(code(&["classify", "--model", &m, "--db", &db, "--features", &f, "--rule", "i2c", "--out", &p]), 2);
}

#[test]
fn gradcheck_reports() {
    let w = Work::new();
    let msg = ok(&["gradcheck", "--config", &w.file("g.txt", "trials=20\n")]);
    assert!(msg.starts_with("gradcheck passed: 20 trials"), "{msg}");
    let strict = w.file("s.txt", "trials=5\ngradcheck_tolerance=0\n");
    assert_eq!(code(&["gradcheck", "--config", &strict]), 1);

    let cfg = GradCheckConfig { trials: 10, ..Default::default() };
    let injected = gradcheck_with(&cfg, |p, h, u, r| {
        let (mut g, b) = weak_gradient(p, h, u, r)?;
        g[0] *= -1.0;
        Ok((g, b))
    });
    assert!(matches!(injected, Err(CliError::CheckFailed { .. })));
    assert!(gradcheck_with(&cfg, weak_gradient).is_ok());
}
