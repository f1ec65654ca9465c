use std::path::Path;
use std::process::{Command, Output};

fn elf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elf")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn gen_data(dir: &Path, n: usize) {
    let cfg = write(dir, "gen.json", &format!(r#"{{"n": {n}}}"#));
    let data = dir.join("data.csv");
    let out = elf(&["gen-data", "--config", &cfg, "--out", data.to_str().unwrap(), "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("data.csv.beta.json").exists());
}

const RUN: &str = r#"{
  "data": "data.csv",
  "behavior": "data.csv.beta.json",
  "constraints": [
    {"predicate": {"group_equals": 0}, "tau": TAU, "delta": 0.1},
    {"predicate": {"group_equals": 1}, "tau": TAU, "delta": 0.1}
  ],
  "elf": {"search": {"generations": 30}}
}"#;

#[test]
fn run_writes_a_model_when_constraints_are_loose() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 500);
    let cfg = write(dir.path(), "run.json", &RUN.replace("TAU", "-1e6"));
    let model = dir.path().join("model.json");
    let out = elf(&["run", "--config", &cfg, "--out", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), model.to_str().unwrap());
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(saved["theta"].as_array().unwrap().len(), 12);

    let eval = write(dir.path(), "eval.json", r#"{"model": "model.json", "taus": [0, 0], "population_size": 2000}"#);
    let out = elf(&["eval", "--config", &eval]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["expected_impact"].as_array().unwrap().len(), 2);
    assert!(report["accuracy"].as_f64().unwrap() > 0.0);
}

#[test]
fn run_prints_nsf_on_tiny_data() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 16);
    let run = RUN.replace(r#""tau": TAU, "#, "");
    let cfg = write(dir.path(), "run.json", &run);
    let model = dir.path().join("model.json");
    let out = elf(&["run", "--config", &cfg, "--out", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "NSF");
    assert!(!model.exists());
}

#[test]
fn sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.json",
        r#"{"alphas": [0.9], "ns": [64, 128], "trials": 3, "eval_population_size": 1000,
            "elf": {"search": {"generations": 10}}}"#,
    );
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = elf(&["sweep", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--jobs", "2"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let records = std::fs::read(out_dir.join("records.csv")).unwrap();
        let agg = std::fs::read(out_dir.join("aggregate.csv")).unwrap();
        outputs.push((records, agg));
    }
    assert_eq!(outputs[0], outputs[1]);
    let agg = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert!(agg.starts_with("alpha,n,trials,failrate_g0,se_g0,failrate_g1,se_g1,solution_rate,se_sol,mean_acc,se_acc"));
    assert_eq!(agg.lines().count(), 3);
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"trials": 0}"#);
    let out = elf(&["sweep", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = elf(&["run", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = elf(&["bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn documented_run_config_parses() {
    let text = r#"{
      "data": "data.csv",
      "behavior": "data.csv.beta.json",
      "constraints": [
        {"predicate": {"group_equals": 0}, "delta": 0.1},
        {"predicate": {"group_equals": 1}, "tau": 1.0, "delta": 0.1,
         "bound": {"hoeffding": {"a": -10, "b": 10}}},
        {"objective": "accuracy", "predicate": "true", "tau": 0.75, "delta": 0.1}
      ],
      "elf": {
        "candidate_fraction": 0.6,
        "xi": 0.01,
        "lambda": 2.0,
        "loss": "expected01",
        "search": {"generations": 150, "initial_step": 0.5},
        "seed": 0
      }
    }"#;
    let cfg: elf_core::cli::RunConfig = serde_json::from_str(text).unwrap();
    assert_eq!(cfg.constraints.len(), 3);
    assert_eq!(cfg.constraints[2].objective, elf_core::Objective::Accuracy);
    assert_eq!(cfg.constraints[1].bound, Some(elf_core::BoundMethod::Hoeffding { a: -10.0, b: 10.0 }));
}
