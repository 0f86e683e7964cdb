use std::path::Path;
use std::process::{Command, Output};

fn neurodeploy(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurodeploy"))
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn solve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sat = neurodeploy(
        d,
        &[
            "solve",
            "--problem",
            "secure-web",
            "--offers",
            "cloud20",
            "--out",
            "sol.json",
            "--script",
            "s.smt2",
        ],
    );
    assert_eq!(code(&sat), 0, "{sat:?}");
    assert!(stdout(&sat).starts_with("sat 1.609"), "{}", stdout(&sat));
    let sol: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("sol.json")).unwrap()).unwrap();
    assert_eq!(sol["price_total"], serde_json::json!(1.609));
    assert!(std::fs::read_to_string(d.join("s.smt2"))
        .unwrap()
        .contains("(set-option :opt.priority lex)"));

    let unsat = neurodeploy(d, &["solve", "--problem", "oryx2", "--offers", "droplet27"]);
    assert_eq!(code(&unsat), 1);
    assert!(stdout(&unsat).starts_with("unsat"));

    let timeout = neurodeploy(d, &["solve", "--problem", "wordpress", "--deadline", "0.001"]);
    assert_eq!(code(&timeout), 2);
}

#[test]
fn usage_and_internal_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&neurodeploy(d, &["solve", "--problem", "nope"])), 3);
    assert_eq!(code(&neurodeploy(d, &["solve"])), 3);
    assert_eq!(code(&neurodeploy(d, &["frobnicate"])), 3);
    assert_eq!(
        code(&neurodeploy(
            d,
            &["solve", "--problem", "secure-web", "--offers", "synthetic:x"]
        )),
        3
    );
    assert_eq!(
        code(&neurodeploy(
            d,
            &["eval", "--dataset", "missing.jsonl", "--model", "m.json"]
        )),
        3
    );
    assert_eq!(code(&neurodeploy(d, &["--help"])), 0);

    std::fs::write(d.join("bad.toml"), "[solver]\nbogus = 1\n").unwrap();
    let bad = neurodeploy(d, &["--config", "bad.toml", "solve", "--problem", "secure-web"]);
    assert_eq!(code(&bad), 3);

    let missing = Command::new(env!("CARGO_BIN_EXE_neurodeploy"))
        .current_dir(d)
        .env("NEURODEPLOY_SOLVER", "/nonexistent/solver")
        .args(["solve", "--problem", "secure-web"])
        .output()
        .unwrap();
    assert_eq!(code(&missing), 4);
}

#[test]
fn offers_and_problem_from_json_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("app.json"),
        r#"{"name": "pair", "vm_budget": 2,
            "components": [
              {"id": 1, "name": "a", "requirements": {"cpu": 1, "mem": 512, "sto": 10}},
              {"id": 2, "name": "b", "requirements": {"cpu": 1, "mem": 512, "sto": 10}}],
            "constraints": [{"kind": "conflict", "i": 1, "j": 2}]}"#,
    )
    .unwrap();
    std::fs::write(
        d.join("offers.json"),
        r#"[{"id": 1, "cpu": 2, "mem": 1024, "sto": 100, "price": "0.500"},
            {"id": 2, "cpu": 1, "mem": 512, "sto": 10, "price": 0.2}]"#,
    )
    .unwrap();
    let out = neurodeploy(d, &["solve", "--problem", "app.json", "--offers", "offers.json"]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(stdout(&out).starts_with("sat 0.400"), "{}", stdout(&out));
}

#[test]
fn dataset_to_model_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "seed = 5\n[train]\nepochs = 3\nbatch_size = 8\n").unwrap();
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "run.toml"];
        full.extend_from_slice(args);
        let out = neurodeploy(d, &full);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&[
        "gen-dataset",
        "--problem",
        "secure-web",
        "--k",
        "7",
        "--count",
        "30",
        "--backend",
        "oracle",
        "--out",
        "d.jsonl",
    ]);
    assert!(d.join("d.manifest.json").is_file());
    run(&["curate", "--dataset", "d.jsonl", "--out", "c.jsonl"]);
    run(&[
        "train",
        "--dataset",
        "c.jsonl",
        "--history",
        "h.csv",
        "--out",
        "m1.json",
    ]);
    run(&["train", "--dataset", "c.jsonl", "--out", "m2.json"]);
    assert_eq!(
        std::fs::read(d.join("m1.json")).unwrap(),
        std::fs::read(d.join("m2.json")).unwrap()
    );
    let history = std::fs::read_to_string(d.join("h.csv")).unwrap();
    assert!(history.starts_with("epoch,loss,accuracy,predicted_t,predicted_f"));
    assert_eq!(history.lines().count(), 4);

    let eval: serde_json::Value =
        serde_json::from_str(&stdout(&run(&["eval", "--dataset", "d.jsonl", "--model", "m1.json"]))).unwrap();
    assert!(eval["accuracy"].as_f64().unwrap() > 0.0);

    let predicted = stdout(&run(&[
        "predict",
        "--problem",
        "secure-web",
        "--model",
        "m1.json",
        "--out",
        "p.json",
    ]));
    assert_eq!(
        predicted.lines().filter(|l| l.starts_with("(assert-soft (= a")).count(),
        30
    );
    let neuro = run(&[
        "neuro-solve",
        "--problem",
        "secure-web",
        "--model",
        "m1.json",
        "--deadline",
        "120",
    ]);
    assert!(stdout(&neuro).starts_with("sat "));

    // A model trained for 6 slots does not fit a 3-slot problem.
    let wrong = neurodeploy(
        d,
        &["predict", "--problem", "secure-web", "--vms", "3", "--model", "m1.json"],
    );
    assert_eq!(code(&wrong), 3);
}

#[test]
fn bench_writes_grid_with_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = neurodeploy(
        d,
        &[
            "--seed",
            "1",
            "bench",
            "--problem",
            "secure-billing",
            "--offers",
            "synthetic:30:1",
            "--subsets",
            "2",
            "--subset-size",
            "10",
            "--out",
            "grid.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let grid = std::fs::read_to_string(d.join("grid.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(
        lines.next().unwrap(),
        "offer_set,model,status,wall_time,price,n_soft,valid,baseline_status,baseline_wall_time,baseline_price"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("s00,plain,") && rows[1].starts_with("s01,plain,"));
}
