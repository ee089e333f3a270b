use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rdpg_oos::io::{read_edge_list, read_embedding, write_embedding};
use rdpg_oos::spectral::lse;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rdpg-oos"));
    c.env_remove("RDPG_OOS_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Dir(TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn write(&self, name: &str, content: &str) -> String {
        let p = self.path(name);
        fs::write(&p, content).unwrap();
        s(&p)
    }
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

const SECTION4: &str = r#"{"dim": 2, "atoms": [[0.2, 0.7], [0.65, 0.3]], "weights": [0.4, 0.6]}"#;

#[test]
fn generate_complete_graph() {
    let d = Dir::new();
    let dist = d.write("d.json", r#"{"dim": 1, "atoms": [[1.0]], "weights": [1.0]}"#);
    let g = s(&d.path("g.txt"));
    let l = s(&d.path("l.json"));
    let out = run(&["generate", "--dist", &dist, "--n", "4", "--graph", &g, "--latent", &l]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let a = read_edge_list(Path::new(&g)).unwrap();
    assert_eq!(a.edge_count(), 6);
    assert_eq!(fs::read_to_string(&g).unwrap().lines().next(), Some("n 4"));
}

#[test]
fn generate_is_reproducible() {
    let d = Dir::new();
    let dist = d.write("d.json", SECTION4);
    let mut files = Vec::new();
    for k in 0..2 {
        let g = s(&d.path(&format!("g{k}.txt")));
        let l = s(&d.path(&format!("l{k}.json")));
        let o = s(&d.path(&format!("o{k}.json")));
        let out = run(&[
            "--seed", "17", "generate", "--dist", &dist, "--n", "60", "--graph", &g, "--latent", &l,
            "--oos", &o,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        files.push([fs::read(&g).unwrap(), fs::read(&l).unwrap(), fs::read(&o).unwrap()]);
    }
    assert_eq!(files[0], files[1]);

    let g = s(&d.path("g_other.txt"));
    let l = s(&d.path("l_other.json"));
    let out = run(&["--seed", "18", "generate", "--dist", &dist, "--n", "60", "--graph", &g, "--latent", &l]);
    assert_eq!(code(&out), 0);
    assert_ne!(fs::read(&g).unwrap(), files[0][0]);
}

#[test]
fn generate_edge_density() {
    let d = Dir::new();
    let dist = d.write("d.json", SECTION4);
    let g = s(&d.path("g.txt"));
    let l = s(&d.path("l.json"));
    let out = run(&["--seed", "3", "generate", "--dist", &dist, "--n", "500", "--graph", &g, "--latent", &l]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let edges = read_edge_list(Path::new(&g)).unwrap().edge_count() as f64;

    // Mean edge probability and standard deviation of the edge count,
    // combining Bernoulli noise with the spread of the block sizes.
    let n = 500.0f64;
    let pairs = n * (n - 1.0) / 2.0;
    let (b11, b12, b22): (f64, f64, f64) = (0.53, 0.34, 0.5125);
    let pbar = 0.16 * b11 + 0.48 * b12 + 0.36 * b22;
    assert!((pbar - 0.4325).abs() < 1e-12);
    let k = 0.4 * n;
    let slope = (k - 0.5) * b11 + (n - 2.0 * k) * b12 - (n - k - 0.5) * b22;
    let var = pairs * pbar * (1.0 - pbar) + slope * slope * n * 0.4 * 0.6;
    assert!((edges - pairs * pbar).abs() <= 4.0 * var.sqrt(), "edges {edges}");
}

#[test]
fn generate_rejects_bad_inputs() {
    let d = Dir::new();
    let bad = d.write("bad.json", r#"{"dim": 1, "atoms": [[1.5]], "weights": [1.0]}"#);
    let g = s(&d.path("g.txt"));
    let l = s(&d.path("l.json"));
    let out = run(&["generate", "--dist", &bad, "--n", "4", "--graph", &g, "--latent", &l]);
    assert_eq!(code(&out), 1);
    let broken = d.write("broken.json", "{\"dim\": 1,\n\"atoms\": [[0.5]]\n\"weights\": [1.0]}");
    let out = run(&["generate", "--dist", &broken, "--n", "4", "--graph", &g, "--latent", &l]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("broken.json:3:"), "{}", stderr(&out));
    let good = d.write("d.json", SECTION4);
    let o = s(&d.path("o.json"));
    let out = run(&[
        "generate", "--dist", &good, "--n", "4", "--graph", &g, "--latent", &l, "--oos", &o, "--oos-atom", "5",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn embed_k4() {
    let d = Dir::new();
    let g = d.write("k4.txt", "n 4\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n");
    let e = s(&d.path("e.json"));
    let out = run(&["embed", "--graph", &g, "--method", "ase", "--d", "1", "--out", &e]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let emb = read_embedding(Path::new(&e)).unwrap();
    for v in emb.positions().iter() {
        assert!((v - 0.86603).abs() < 1e-5, "{v}");
    }
    let text = fs::read_to_string(&e).unwrap();
    assert!(text.contains("\"kind\": \"ase\"") && !text.contains("degrees"));
}

#[test]
fn embed_lse_matches_library() {
    let d = Dir::new();
    let g = d.write("path.txt", "n 4\n0 1\n1 2\n2 3\n");
    let e = s(&d.path("e.json"));
    let out = run(&["embed", "--graph", &g, "--method", "lse", "--d", "1", "--out", &e]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let a = read_edge_list(Path::new(&g)).unwrap();
    let direct = d.path("direct.json");
    write_embedding(&direct, &lse::<f64>(&a, 1).unwrap()).unwrap();
    assert_eq!(fs::read(&e).unwrap(), fs::read(&direct).unwrap());
}

#[test]
fn embed_usage_errors() {
    let d = Dir::new();
    let g = d.write("g.txt", "n 3\n0 1\n");
    let e = s(&d.path("e.json"));
    assert_eq!(code(&run(&["embed", "--graph", &g, "--method", "ase", "--d", "4", "--out", &e])), 2);
    assert_eq!(code(&run(&["embed", "--graph", &g, "--method", "ase", "--d", "0", "--out", &e])), 2);
    assert_eq!(code(&run(&["embed", "--graph", &g, "--method", "xse", "--d", "1", "--out", &e])), 2);
    assert_eq!(code(&run(&["embed", "--graph", &g])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&[])), 2);
}

#[test]
fn embed_malformed_graph() {
    let d = Dir::new();
    let g = d.write("g.txt", "n 3\n0 1\n1 zz\n");
    let e = s(&d.path("e.json"));
    let out = run(&["embed", "--graph", &g, "--method", "ase", "--d", "1", "--out", &e]);
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(msg.contains("g.txt:3:") && msg.contains("vertex index"), "{msg}");
    let missing = s(&d.path("missing.txt"));
    let out = run(&["embed", "--graph", &missing, "--method", "ase", "--d", "1", "--out", &e]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing.txt"));
}

#[test]
fn oos_identity_design() {
    let d = Dir::new();
    let e = d.write(
        "e.json",
        r#"{"kind": "ase", "d": 2, "eigenvalues": [1.0, 1.0], "positions": [[1.0, 0.0], [0.0, 1.0]]}"#,
    );
    let c = d.write("c.json", r#"{"a": [1, 0]}"#);
    let o = s(&d.path("o.json"));
    let out = run(&["oos", "--embedding", &e, "--connectivity", &c, "--method", "lls-ase", "--out", &o]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&o).unwrap()).unwrap();
    assert_eq!(v["method"], "lls-ase");
    assert_eq!(v["w"], serde_json::json!([1.0, 0.0]));
    assert_eq!(v["diagnostics"]["iterations"], 0);
}

#[test]
fn oos_ml_toy_and_infeasible() {
    let d = Dir::new();
    let positions = vec!["[0.5]"; 10].join(", ");
    let e = d.write(
        "e.json",
        &format!(r#"{{"kind": "ase", "d": 1, "eigenvalues": [2.5], "positions": [{positions}]}}"#),
    );
    let c = d.write("c.json", r#"{"a": [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]}"#);
    let o = s(&d.path("o.json"));
    let out = run(&["oos", "--embedding", &e, "--connectivity", &c, "--method", "ml-ase", "--out", &o]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&o).unwrap()).unwrap();
    assert!((v["w"][0].as_f64().unwrap() - 0.8).abs() < 1e-6);

    let e2 = d.write(
        "e2.json",
        r#"{"kind": "ase", "d": 1, "eigenvalues": [0.5], "positions": [[0.5], [-0.5]]}"#,
    );
    let c2 = d.write("c2.json", r#"{"a": [1, 0]}"#);
    let out = run(&[
        "oos", "--embedding", &e2, "--connectivity", &c2, "--method", "ml-ase", "--epsilon", "0.4", "--out", &o,
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no feasible"), "{}", stderr(&out));
    let out = run(&[
        "oos", "--embedding", &e2, "--connectivity", &c2, "--method", "ml-ase", "--epsilon", "0.7", "--out", &o,
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn oos_laplacian_errors() {
    let d = Dir::new();
    let g = d.write("g.txt", "n 4\n0 1\n1 2\n2 3\n0 3\n");
    let e = s(&d.path("e.json"));
    assert_eq!(code(&run(&["embed", "--graph", &g, "--method", "lse", "--d", "1", "--out", &e])), 0);
    let zero = d.write("zero.json", r#"{"a": [0, 0, 0, 0]}"#);
    let o = s(&d.path("o.json"));
    let out = run(&["oos", "--embedding", &e, "--connectivity", &zero, "--method", "lls-lse", "--out", &o]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no edges"));

    let ase_file = s(&d.path("ase.json"));
    assert_eq!(code(&run(&["embed", "--graph", &g, "--method", "ase", "--d", "1", "--out", &ase_file])), 0);
    let one = d.write("one.json", r#"{"a": [1, 0, 0, 0]}"#);
    let out = run(&["oos", "--embedding", &ase_file, "--connectivity", &one, "--method", "lls-lse", "--out", &o]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("needs a lse embedding"), "{}", stderr(&out));
    let out = run(&["oos", "--embedding", &e, "--connectivity", &one, "--method", "lls-lse", "--out", &o]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let bad = d.write("bad.json", r#"{"a": [1, 2, 0, 0]}"#);
    let out = run(&["oos", "--embedding", &e, "--connectivity", &bad, "--method", "lls-lse", "--out", &o]);
    assert_eq!(code(&out), 1);
}

#[test]
fn tradeoff_table() {
    let d = Dir::new();
    let o = s(&d.path("t.csv"));
    let out = run(&[
        "tradeoff", "--lambda", "0.4", "--p", "0.6", "--q", "0.61", "--n", "1000", "--m", "1,10,100,1000,10000", "--out", &o,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(&o).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        vec!["n", "m", "lambda", "p", "q", "eta_in", "eta_oos", "ratio"]
    );
    let ratios: Vec<f64> = rdr.records().map(|r| r.unwrap()[7].parse().unwrap()).collect();
    assert_eq!(ratios[0], 1.0);
    assert!(ratios.windows(2).all(|w| w[1] <= w[0]), "{ratios:?}");

    let out = run(&["tradeoff", "--lambda", "0.4", "--p", "0.7", "--q", "0.6", "--n", "10", "--m", "1", "--out", &o]);
    assert_eq!(code(&out), 1);
    let out = run(&["tradeoff", "--lambda", "0.4", "--p", "0.6", "--q", "0.7", "--n", "0", "--m", "1", "--out", &o]);
    assert_eq!(code(&out), 2);
}

fn config(d: &Dir, n_values: &str, trials: usize) -> String {
    d.write(
        "cfg.json",
        &format!(
            r#"{{"distribution": {SECTION4}, "n_values": {n_values}, "trials": {trials},
                "methods": ["lls-ase", "ml-ase", "lls-lse"], "master_seed": 11}}"#
        ),
    )
}

#[test]
fn clt_is_deterministic_across_runs_and_workers() {
    let d = Dir::new();
    let cfg = config(&d, "[80]", 2);
    let mut outputs = Vec::new();
    for (k, w) in ["1", "1", "3"].iter().enumerate() {
        let r = s(&d.path(&format!("r{k}.csv")));
        let m = s(&d.path(&format!("s{k}.json")));
        let out = run(&["--workers", w, "clt", "--config", &cfg, "--records", &r, "--summary", &m]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        outputs.push((fs::read(&r).unwrap(), fs::read(&m).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(text.starts_with("trial,n,method,atom,est_1,est_2,target_1,target_2,error,failed\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);

    let summary: serde_json::Value = serde_json::from_slice(&outputs[0].1).unwrap();
    assert_eq!(summary["master_seed"], 11);
    assert!(summary["groups"].as_array().unwrap().len() >= 3);
}

#[test]
fn seed_flag_overrides_config() {
    let d = Dir::new();
    let cfg = config(&d, "[60]", 2);
    let r1 = s(&d.path("r1.csv"));
    let r2 = s(&d.path("r2.csv"));
    let m = s(&d.path("m.json"));
    assert_eq!(code(&run(&["clt", "--config", &cfg, "--records", &r1, "--summary", &m])), 0);
    assert_eq!(code(&run(&["--seed", "12", "clt", "--config", &cfg, "--records", &r2, "--summary", &m])), 0);
    assert_ne!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
}

#[test]
fn workers_environment_variable() {
    let d = Dir::new();
    let cfg = config(&d, "[60]", 2);
    let r1 = s(&d.path("r1.csv"));
    let r2 = s(&d.path("r2.csv"));
    let m = s(&d.path("m.json"));
    let out = bin()
        .args(["clt", "--config", &cfg, "--records", &r1, "--summary", &m])
        .env("RDPG_OOS_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(code(&run(&["--workers", "1", "clt", "--config", &cfg, "--records", &r2, "--summary", &m])), 0);
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    let out = bin()
        .args(["clt", "--config", &cfg, "--records", &r1, "--summary", &m])
        .env("RDPG_OOS_WORKERS", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert_eq!(code(&run(&["--workers", "0", "clt", "--config", &cfg, "--records", &r1, "--summary", &m])), 2);
}

#[test]
fn rates_table_and_grid_check() {
    let d = Dir::new();
    let cfg = config(&d, "[60, 120]", 3);
    let o = s(&d.path("rates.csv"));
    let r = s(&d.path("records.csv"));
    let out = run(&["rates", "--config", &cfg, "--out", &o, "--records", &r]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&o).unwrap();
    assert!(text.starts_with("n,method,trials,failures,median_error,q90_error\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(fs::read_to_string(&r).unwrap().lines().count() == 1 + 2 * 3 * 3);

    let single = d.write(
        "single.json",
        &format!(r#"{{"distribution": {SECTION4}, "n_values": [60], "trials": 2}}"#),
    );
    let out = run(&["rates", "--config", &single, "--out", &o]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("at least two"), "{}", stderr(&out));
}

#[test]
fn pipeline_generate_embed_oos() {
    let d = Dir::new();
    let dist = d.write("d.json", SECTION4);
    let mut results = Vec::new();
    for k in 0..2 {
        let g = s(&d.path(&format!("g{k}.txt")));
        let l = s(&d.path(&format!("l{k}.json")));
        let c = s(&d.path(&format!("c{k}.json")));
        let e = s(&d.path(&format!("e{k}.json")));
        let o = s(&d.path(&format!("o{k}.json")));
        assert_eq!(
            code(&run(&["--seed", "5", "generate", "--dist", &dist, "--n", "300", "--graph", &g, "--latent", &l, "--oos", &c, "--oos-atom", "1"])),
            0
        );
        assert_eq!(code(&run(&["embed", "--graph", &g, "--method", "ase", "--d", "2", "--out", &e])), 0);
        let out = run(&["oos", "--embedding", &e, "--connectivity", &c, "--method", "ml-ase", "--out", &o]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        results.push(fs::read(&o).unwrap());
    }
    assert_eq!(results[0], results[1]);
    let v: serde_json::Value = serde_json::from_slice(&results[0]).unwrap();
    assert_eq!(v["method"], "ml-ase");
    assert!(v["diagnostics"]["final_projected_gradient_norm"].as_f64().unwrap() <= 1e-8);
}
