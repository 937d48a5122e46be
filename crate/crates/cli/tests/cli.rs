use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sl_lab::io::{read_function, read_tree};

const T2: &str = r#"{"depth": 1, "atoms": [
  {"id": 0, "parent": null, "prob": 1.0},
  {"id": 1, "parent": 0, "prob": 0.5},
  {"id": 2, "parent": 0, "prob": 0.5}
]}"#;

fn sl_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sl-lab"))
        .args(args)
        .env_remove("SL_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn t2(&self, f: [f64; 2]) -> (PathBuf, PathBuf) {
        let tree = self.write("t2.json", T2);
        let f = self.write("f.csv", &format!("atom,value\n1,{}\n2,{}\n", f[0], f[1]));
        (tree, f)
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_dyadic_writes_eight_leaves() {
    let dir = Dir::new();
    let out = dir.path("d.json");
    let run = sl_lab(&["gen", "dyadic", "--depth", "3", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(read_tree(&out).unwrap().leaf_count(), 8);
    assert!(!dir.path("d.f.json").exists());
}

#[test]
fn gen_walk_has_square_function_two() {
    let dir = Dir::new();
    let out = dir.path("w.json");
    let f_path = dir.path("w.csv");
    let run = sl_lab(&[
        "gen",
        "walk",
        "--depth",
        "64",
        "--out",
        s(&out),
        "--f",
        s(&f_path),
    ]);
    assert_eq!(code(&run), 0);
    let tree = read_tree(&out).unwrap();
    let f = read_function(&tree, &f_path).unwrap();
    assert_eq!(f.square_function().sup_norm(), 2.0);
}

#[test]
fn gen_random_is_reproducible() {
    let dir = Dir::new();
    let mut files = Vec::new();
    for k in 0..2 {
        let tree = dir.path(&format!("r{k}.json"));
        let f = dir.path(&format!("r{k}.f.json"));
        let args = [
            "gen",
            "random",
            "--depth",
            "6",
            "--branch-max",
            "4",
            "--seed",
            "7",
        ];
        let run = sl_lab(&[&args[..], &["--out", s(&tree), "--f", s(&f)]].concat());
        assert_eq!(code(&run), 0);
        files.push((fs::read(&tree).unwrap(), fs::read_to_string(&f).unwrap()));
    }
    assert_eq!(files[0].0, files[1].0);
    // the function files name their own tree file, so compare values only
    let values = |text: &str| json_values(text);
    assert_eq!(values(&files[0].1), values(&files[1].1));
}

fn json_values(text: &str) -> Vec<Value> {
    let v: Value = serde_json::from_str(text).unwrap();
    v["values"].as_array().unwrap().clone()
}

#[test]
fn gen_rejects_bad_specs() {
    let dir = Dir::new();
    let out = dir.path("x.json");
    let cases: [&[&str]; 4] = [
        &["gen", "random", "--depth", "3", "--out", s(&out)],
        &["gen", "nope", "--depth", "3", "--out", s(&out)],
        &["gen", "dyadic", "--depth", "0", "--out", s(&out)],
        &[
            "gen",
            "walk",
            "--depth",
            "3",
            "--delta",
            "0.9",
            "--out",
            s(&out),
        ],
    ];
    for args in cases {
        assert_eq!(code(&sl_lab(args)), 2, "{args:?}");
    }
}

#[test]
fn construct_two_point_sigma() {
    let dir = Dir::new();
    let (tree, f) = dir.t2([1.0, 0.0]);
    let cert = dir.path("c.json");
    let run = sl_lab(&[
        "construct",
        "--tree",
        s(&tree),
        "--f",
        s(&f),
        "--method",
        "sigma",
        "--out",
        s(&cert),
    ]);
    assert_eq!(code(&run), 0);
    let record = json(&cert);
    // mf = (e^{-1/2}, 0), so sigma(mf)^2 = (e^{-1/2}/2)^2
    let want = (-1.0f64).exp() / 4.0;
    let got = record["sigma_sq_max"].as_f64().unwrap();
    assert!((got - want).abs() < 1e-15);
    assert!((got - 0.09197).abs() < 1e-5);
    assert_eq!(record["pass"], Value::Bool(true));
}

#[test]
fn construct_two_point_s_and_verify() {
    let dir = Dir::new();
    let (tree, f) = dir.t2([1.0, 0.0]);
    let cert = dir.path("c.json");
    let run = sl_lab(&[
        "construct",
        "--tree",
        s(&tree),
        "--f",
        s(&f),
        "--method",
        "s",
        "--out",
        s(&cert),
    ]);
    assert_eq!(code(&run), 0);
    let betas = &json(&cert)["betas"][0]["atoms"];
    assert_eq!(betas[0]["beta"].as_f64(), Some(2.0));
    assert_eq!(betas[1]["beta"].as_f64(), Some(0.4));
    assert_eq!(code(&sl_lab(&["verify", s(&cert)])), 0);
}

#[test]
fn constant_function_gets_unit_multiplier() {
    let dir = Dir::new();
    let (tree, f) = dir.t2([0.3, 0.3]);
    for method in ["sigma", "s"] {
        let cert = dir.path(&format!("{method}.json"));
        let run = sl_lab(&[
            "construct",
            "--tree",
            s(&tree),
            "--f",
            s(&f),
            "--method",
            method,
            "--out",
            s(&cert),
        ]);
        assert_eq!(code(&run), 0);
        for entry in json(&cert)["multiplier"].as_array().unwrap() {
            assert_eq!(entry["value"].as_f64(), Some(1.0));
        }
    }
}

#[test]
fn construct_rejects_bad_input() {
    let dir = Dir::new();
    let (tree, f) = dir.t2([1.5, 0.0]);
    let cert = dir.path("c.json");
    let base = ["construct", "--tree", s(&tree), "--out", s(&cert)];
    let run = sl_lab(&[&base[..], &["--f", s(&f), "--method", "sigma"]].concat());
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("outside [0, 1]"));
    assert!(!cert.exists());

    let (_, good) = dir.t2([1.0, 0.0]);
    assert_eq!(
        code(&sl_lab(
            &[&base[..], &["--f", s(&good), "--method", "x"]].concat()
        )),
        2
    );
    let garbage = dir.write("g.json", "{not json");
    assert_eq!(
        code(&sl_lab(
            &[&base[..], &["--f", s(&garbage), "--method", "s"]].concat()
        )),
        2
    );
    let missing = dir.path("missing.csv");
    let run = sl_lab(&[&base[..], &["--f", s(&missing), "--method", "s"]].concat());
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("missing.csv"));
}

fn random_certificate(dir: &Dir, method: &str, depth: &str) -> PathBuf {
    let tree = dir.path("r.json");
    let f = dir.path("r.f.json");
    let gen = [
        "gen",
        "random",
        "--depth",
        depth,
        "--branch-max",
        "3",
        "--seed",
        "11",
    ];
    assert_eq!(
        code(&sl_lab(
            &[&gen[..], &["--out", s(&tree), "--f", s(&f)]].concat()
        )),
        0
    );
    let cert = dir.path(&format!("{method}.cert.json"));
    let run = sl_lab(&[
        "construct",
        "--tree",
        s(&tree),
        "--f",
        s(&f),
        "--method",
        method,
        "--out",
        s(&cert),
    ]);
    assert_eq!(code(&run), 0);
    cert
}

#[test]
fn verify_accepts_fresh_and_rejects_tampered() {
    let dir = Dir::new();
    for method in ["sigma", "s"] {
        let cert = random_certificate(&dir, method, "5");
        assert_eq!(code(&sl_lab(&["verify", s(&cert)])), 0);

        let mut record = json(&cert);
        let v = record["multiplier"][0]["value"].as_f64().unwrap();
        record["multiplier"][0]["value"] = Value::from(v * 0.9);
        let tampered = dir.write("tampered.json", &record.to_string());
        let run = sl_lab(&["verify", s(&tampered)]);
        assert_eq!(code(&run), 1, "{method}");
        assert!(String::from_utf8_lossy(&run.stdout).contains("FAIL"));
    }
}

#[test]
fn verify_resolves_inputs_beside_the_certificate() {
    let dir = Dir::new();
    let (_, _) = dir.t2([0.8, 0.1]);
    // relative paths, valid only from the certificate's directory
    let run = Command::new(env!("CARGO_BIN_EXE_sl-lab"))
        .current_dir(dir.0.path())
        .args([
            "construct",
            "--tree",
            "t2.json",
            "--f",
            "f.csv",
            "--method",
            "sigma",
            "--out",
            "c.json",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&run), 0);
    assert_eq!(code(&sl_lab(&["verify", s(&dir.path("c.json"))])), 0);
}

#[test]
fn verify_tolerance_override() {
    let dir = Dir::new();
    let cert = random_certificate(&dir, "s", "8");
    // an over-tight tolerance is allowed to fail on rounding, but never reports bad input
    let tight = code(&sl_lab(&["verify", s(&cert), "--tol", "1e-15"]));
    assert!(tight == 0 || tight == 1);
    assert_eq!(code(&sl_lab(&["verify", s(&cert), "--tol", "1e-6"])), 0);
    assert_eq!(code(&sl_lab(&["verify", s(&cert), "--tol", "-1"])), 2);
}

#[test]
fn verify_rejects_malformed_certificates() {
    let dir = Dir::new();
    assert_eq!(code(&sl_lab(&["verify", s(&dir.path("none.json"))])), 2);
    let garbage = dir.write("g.json", "[1, 2");
    assert_eq!(code(&sl_lab(&["verify", s(&garbage)])), 2);

    let cert = random_certificate(&dir, "sigma", "4");
    let mut record = json(&cert);
    record["alphas"] = Value::Array(vec![]);
    let stripped = dir.write("stripped.json", &record.to_string());
    assert_eq!(code(&sl_lab(&["verify", s(&stripped)])), 2);

    let mut record = json(&cert);
    record["method"] = Value::from("unknown");
    let renamed = dir.write("renamed.json", &record.to_string());
    assert_eq!(code(&sl_lab(&["verify", s(&renamed)])), 2);
}

#[test]
fn sweep_constant_single_trial() {
    let run = sl_lab(&["sweep", "--trials", "1", "--constant", "0.5", "--no-lemmas"]);
    assert_eq!(code(&run), 0);
    let text = String::from_utf8(run.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "trial,seed,depth,branch,method,max_sq,bound,identity_resid,mass_margin,pass"
    );
    let trial_rows: Vec<&&str> = lines[1..].iter().filter(|l| l.starts_with("0,")).collect();
    assert_eq!(trial_rows.len(), 2);
    assert!(lines[1..].iter().all(|l| l.ends_with(",true")));
}

#[test]
fn sweep_is_deterministic_across_threads() {
    let dir = Dir::new();
    let mut reports = Vec::new();
    for (k, threads) in ["1", "8", "8"].iter().enumerate() {
        let report = dir.path(&format!("sweep{k}.csv"));
        let run = Command::new(env!("CARGO_BIN_EXE_sl-lab"))
            .env("SL_LAB_THREADS", threads)
            .args([
                "sweep",
                "--trials",
                "60",
                "--seed",
                "5",
                "--report",
                s(&report),
            ])
            .output()
            .unwrap();
        assert_eq!(code(&run), 0);
        reports.push(fs::read(&report).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[1], reports[2]);
}

#[test]
fn sweep_rejects_bad_thread_count() {
    let run = Command::new(env!("CARGO_BIN_EXE_sl-lab"))
        .env("SL_LAB_THREADS", "zero")
        .args(["sweep", "--trials", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&run), 2);
}

#[test]
fn sweep_help_documents_columns() {
    let run = sl_lab(&["sweep", "--help"]);
    assert_eq!(code(&run), 0);
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text
        .contains("trial,seed,depth,branch,method,max_sq,bound,identity_resid,mass_margin,pass"));
    assert!(text.contains("SL_LAB_THREADS"));
}

#[test]
fn iterate_two_point() {
    let dir = Dir::new();
    let (tree, f) = dir.t2([1.0, 0.0]);
    let report = dir.path("it.json");
    let run = sl_lab(&[
        "iterate",
        "--tree",
        s(&tree),
        "--f",
        s(&f),
        "--eps",
        "0.3",
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&run), 0);
    let doc = json(&report);
    assert_eq!(doc["iterations"].as_u64(), Some(2));
    assert_eq!(doc["log"].as_array().unwrap().len(), 2);
    assert_eq!(doc["pass"], Value::Bool(true));

    let run = sl_lab(&["iterate", "--tree", s(&tree), "--f", s(&f), "--eps", "1"]);
    assert_eq!(code(&run), 0);
    let doc: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert!(doc["iterations"].as_u64().unwrap() <= 1);

    for eps in ["0", "1.5", "nan"] {
        assert_eq!(
            code(&sl_lab(&[
                "iterate",
                "--tree",
                s(&tree),
                "--f",
                s(&f),
                "--eps",
                eps
            ])),
            2
        );
    }
}

#[test]
fn iterate_deep_random_within_bound() {
    let dir = Dir::new();
    let tree = dir.path("r.json");
    let f = dir.path("r.f.json");
    let gen = [
        "gen",
        "random",
        "--depth",
        "8",
        "--branch-max",
        "3",
        "--seed",
        "2",
    ];
    assert_eq!(
        code(&sl_lab(
            &[&gen[..], &["--out", s(&tree), "--f", s(&f)]].concat()
        )),
        0
    );
    let run = sl_lab(&["iterate", "--tree", s(&tree), "--f", s(&f), "--eps", "0.01"]);
    assert_eq!(code(&run), 0);
    let doc: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert!(doc["iterations"].as_u64().unwrap() <= doc["iteration_bound"].as_u64().unwrap());
}
