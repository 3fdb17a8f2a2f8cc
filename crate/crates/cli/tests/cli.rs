use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn lasiq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lasiq"))
        .current_dir(dir)
        .env_remove("LASIQ_SEED")
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(o: Output) -> Output {
    assert_eq!(
        code(&o),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

const SMOKE: &str = r#"{"stages": [
  {"stage": "lattice", "preset": "falcon", "synth": true},
  {"stage": "fit", "chip": "chip.json"},
  {"stage": "plan", "chip": "chip.json", "model": "model.json"},
  {"stage": "yield", "chip": "chip.json", "targets": "plan.csv", "sigma_grid": "0:20:5", "trials": 2000}
]}"#;

#[test]
fn lattice_fit_plan_yield_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "p.json", SMOKE);
    ok(lasiq(
        dir.path(),
        &[
            "pipeline", "--config", "p.json", "--seed", "11", "--out", "work",
        ],
    ));
    let work = dir.path().join("work");
    let names: Vec<String> = read_dir_sorted(&work).into_iter().map(|(n, _)| n).collect();
    assert_eq!(
        names,
        [
            "chip.json",
            "manifest.json",
            "model.json",
            "model_residuals.csv",
            "plan.csv",
            "yield.csv"
        ]
    );
    let m: Value = serde_json::from_slice(&fs::read(work.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 11);
    let stages: Vec<&str> = m["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["lattice", "fit", "plan", "yield"]);
    // Output digests match the files byte for byte.
    for o in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(work.join(o["path"].as_str().unwrap())).unwrap();
        let out = lasiq_digest(&bytes);
        assert_eq!(o["sha256"].as_str().unwrap(), out);
    }
    let yield_csv = fs::read_to_string(work.join("yield.csv")).unwrap();
    let mut lines = yield_csv.lines();
    assert_eq!(lines.next(), Some("sigma_mhz,yield,ci,mean_collisions"));
    assert_eq!(lines.next().unwrap().split(',').nth(1), Some("1.0"));
    let plan = fs::read_to_string(work.join("plan.csv")).unwrap();
    assert!(plan.starts_with("qubit_id,f_target_mhz,r_target_ohm,df_mhz,dr_rel,status\n"));
    assert_eq!(plan.lines().count(), 28);
}

fn lasiq_digest(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[test]
fn reruns_are_byte_identical_at_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let full = r#"{"stages": [
      {"stage": "lattice", "preset": "falcon", "synth": true},
      {"stage": "fit", "chip": "chip.json"},
      {"stage": "plan", "chip": "chip.json", "model": "model.json"},
      {"stage": "collisions", "chip": "chip.json", "freqs": "plan.csv"},
      {"stage": "anneal", "chip": "chip.json", "targets": "plan.csv"},
      {"stage": "yield", "chip": "chip.json", "targets": "plan.csv", "sigma_grid": "0:40:10", "trials": 3000},
      {"stage": "zz", "pair": "../pair.json"},
      {"stage": "gate-error", "pair": "../pair.json", "sweep": "90:110:10", "no_rotary": true}
    ]}"#;
    write(dir.path(), "p.json", full);
    write(
        dir.path(),
        "pair.json",
        r#"{"f_c_mhz": 5100, "f_t_mhz": 5000, "j_coupling_mhz": 1.75}"#,
    );
    let mut runs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "4"), ("c", "4")] {
        ok(lasiq(
            dir.path(),
            &[
                "pipeline",
                "--config",
                "p.json",
                "--seed",
                "3",
                "--threads",
                threads,
                "--out",
                name,
            ],
        ));
        runs.push(read_dir_sorted(&dir.path().join(name)));
    }
    assert_eq!(runs[0].len(), 10);
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    ok(lasiq(
        dir.path(),
        &[
            "lattice",
            "--preset",
            "falcon",
            "--synth",
            "--seed",
            "9",
            "--out",
            "flag.json",
        ],
    ));
    let o = Command::new(env!("CARGO_BIN_EXE_lasiq"))
        .current_dir(dir.path())
        .env("LASIQ_SEED", "9")
        .args([
            "-q", "lattice", "--preset", "falcon", "--synth", "--out", "env.json",
        ])
        .output()
        .unwrap();
    assert!(o.status.success());
    let a = fs::read(dir.path().join("flag.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("env.json")).unwrap());
    ok(lasiq(
        dir.path(),
        &[
            "lattice",
            "--preset",
            "falcon",
            "--synth",
            "--seed",
            "10",
            "--out",
            "other.json",
        ],
    ));
    assert_ne!(a, fs::read(dir.path().join("other.json")).unwrap());
}

#[test]
fn single_stage_matches_pipeline_stage() {
    let dir = tempfile::tempdir().unwrap();
    ok(lasiq(
        dir.path(),
        &[
            "lattice",
            "--preset",
            "falcon",
            "--synth",
            "--seed",
            "4",
            "--out",
            "chip.json",
        ],
    ));
    write(
        dir.path(),
        "p.json",
        r#"{"stages": [{"stage": "lattice", "preset": "falcon", "synth": true}]}"#,
    );
    ok(lasiq(
        dir.path(),
        &[
            "pipeline", "--config", "p.json", "--seed", "4", "--out", "w",
        ],
    ));
    assert_eq!(
        fs::read(dir.path().join("chip.json")).unwrap(),
        fs::read(dir.path().join("w/chip.json")).unwrap()
    );
    let m: Value =
        serde_json::from_slice(&fs::read(dir.path().join("chip.json.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["command"], "lattice");
    assert_eq!(m["outputs"][0]["path"], "chip.json");
}

#[test]
fn stdout_results_write_no_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "pair.json",
        r#"{"f_c_mhz": 5100, "f_t_mhz": 5000, "j_coupling_mhz": 2.25}"#,
    );
    let o = ok(lasiq(dir.path(), &["zz", "--pair", "pair.json"]));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let zz = v["zz_khz"].as_f64().unwrap();
    assert!((60.0..75.0).contains(&zz.abs()), "{zz}");
    assert_eq!(v["ambiguous"], false);
    assert_eq!(read_dir_sorted(dir.path()).len(), 1);
    // A pole of the perturbative form is reported as null.
    write(
        dir.path(),
        "pole.json",
        r#"{"f_c_mhz": 5330, "f_t_mhz": 5000, "j_coupling_mhz": 2.25}"#,
    );
    let o = ok(lasiq(dir.path(), &["zz", "--pair", "pole.json"]));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["zz_perturbative_khz"], Value::Null);
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(lasiq(
        d,
        &[
            "lattice",
            "--preset",
            "falcon",
            "--synth",
            "--out",
            "chip.json",
        ],
    ));

    assert_eq!(code(&lasiq(d, &["fit"])), 2);
    assert_eq!(
        code(&lasiq(
            d,
            &["lattice", "--preset", "falcon", "--rows", "2", "--cols", "2"]
        )),
        2
    );

    write(
        d,
        "unknown.json",
        r#"{"stages": [{"stage": "fit", "chip": "chip.json"}, {"stage": "optimize"}]}"#,
    );
    assert_eq!(
        code(&lasiq(
            d,
            &["pipeline", "--config", "unknown.json", "--out", "u"]
        )),
        3
    );
    assert!(!d.join("u/model.json").exists());

    write(
        d,
        "missing.json",
        r#"{"stages": [{"stage": "fit", "chip": "absent.json"}]}"#,
    );
    assert_eq!(
        code(&lasiq(d, &["pipeline", "--config", "missing.json"])),
        4
    );
    assert!(!d.join("model.json").exists());
    assert_eq!(
        code(&lasiq(
            d,
            &["fit", "--chip", "absent.json", "--out", "m.json"]
        )),
        4
    );
    assert!(!d.join("m.json").exists());
    assert_eq!(
        code(&lasiq(
            d,
            &["pipeline", "--config", "no-such-pipeline.json"]
        )),
        4
    );

    write(
        d,
        "schema.json",
        r#"{"stages": [{"stage": "fit", "chip": "chip.json", "exponent": -0.5}]}"#,
    );
    assert_eq!(code(&lasiq(d, &["pipeline", "--config", "schema.json"])), 5);
    write(d, "notjson.json", "stages: []");
    assert_eq!(
        code(&lasiq(d, &["pipeline", "--config", "notjson.json"])),
        5
    );
    write(
        d,
        "badchip.json",
        r#"{"name": "x", "qubits": [], "edges": [], "extra": 1}"#,
    );
    assert_eq!(code(&lasiq(d, &["fit", "--chip", "badchip.json"])), 5);

    write(d, "empty.json", r#"{"stages": []}"#);
    ok(lasiq(
        d,
        &["pipeline", "--config", "empty.json", "--out", "e"],
    ));
    assert_eq!(read_dir_sorted(&d.join("e")).len(), 1);
}

#[test]
fn failing_stage_aborts_with_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // One qubit sits far above the Purcell ceiling: no allowed resistance
    // increase can bring it down, so the plan is infeasible.
    write(
        d,
        "chip.json",
        r#"{"name": "hot", "qubits": [
            {"id": 0, "r_n_ohm": 6900, "f01_ghz": 6.0, "anharmonicity_mhz": -330},
            {"id": 1, "r_n_ohm": 9800, "f01_ghz": 5.05, "anharmonicity_mhz": -330}],
            "edges": [[0, 1]]}"#,
    );
    write(
        d,
        "model.json",
        r#"{"a": 500000, "p": -0.5, "sigma_f_mhz": 0}"#,
    );
    write(
        d,
        "p.json",
        r#"{"stages": [
          {"stage": "plan", "chip": "chip.json", "model": "model.json"},
          {"stage": "anneal", "chip": "chip.json", "targets": "plan.csv"}
        ]}"#,
    );
    let o = lasiq(d, &["pipeline", "--config", "p.json"]);
    assert_eq!(code(&o), 1);
    // The best-effort plan is kept; the dependent stage never ran.
    let plan = fs::read_to_string(d.join("plan.csv")).unwrap();
    assert!(plan.contains(",blocked"), "{plan}");
    assert!(!d.join("outcomes.csv").exists());
    let m: Value = serde_json::from_slice(&fs::read(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "failed");
    assert_eq!(m["stages"].as_array().unwrap().len(), 1);
    assert_eq!(m["stages"][0]["status"], "failed");

    assert_eq!(
        code(&lasiq(
            d,
            &[
                "plan",
                "--chip",
                "chip.json",
                "--model",
                "model.json",
                "--out",
                "solo.csv"
            ]
        )),
        1
    );
    let m: Value =
        serde_json::from_slice(&fs::read(d.join("solo.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "failed");
}

#[test]
fn gate_error_single_point_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "pair.json",
        r#"{"f_c_mhz": 5100, "f_t_mhz": 5000, "j_coupling_mhz": 1.75}"#,
    );
    ok(lasiq(
        d,
        &["gate-error", "--pair", "pair.json", "--out", "one.csv"],
    ));
    let one = fs::read_to_string(d.join("one.csv")).unwrap();
    let mut lines = one.lines();
    assert_eq!(lines.next(), Some("detuning_mhz,error,zz_khz,status"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "100.0");
    assert!(row[1].parse::<f64>().unwrap() < 1e-2);
    assert_eq!(row[3], "ok");

    ok(lasiq(
        d,
        &[
            "gate-error",
            "--pair",
            "pair.json",
            "--sweep",
            "-10:10:10",
            "--no-rotary",
            "--out",
            "s.csv",
        ],
    ));
    let s = fs::read_to_string(d.join("s.csv")).unwrap();
    let zero = s.lines().find(|l| l.starts_with("0.0,")).unwrap();
    // Degenerate qubits cannot be calibrated; the error column is empty.
    assert!(zero.ends_with(",calibration_failed"), "{zero}");
    assert_eq!(zero.split(',').nth(1), Some(""));
}
