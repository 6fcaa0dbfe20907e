//! End-to-end tests of the binary: exit codes, diagnostics, file outputs.

use std::path::Path;
use std::process::{Command, Output};

fn estalg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_estalg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json_of(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

#[test]
fn closure_qubit_decay_preset_reports_dimension_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = estalg(&["closure", "--preset", "qubit-decay"], dir.path());
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["estimation_algebra"]["dimension"], 2);
    assert_eq!(v["operator_algebra"]["dimension"], 2);
    assert_eq!(v["theorem_main"]["pass"], true);
    assert_eq!(v["theorem_main"]["kernel_dim"], 0);
}

#[test]
fn closure_shifted_preset_has_kernel_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = estalg(&["closure", "--preset", "qubit-shifted"], dir.path());
    assert_eq!(code(&out), 0);
    let v = json_of(&out);
    assert_eq!(v["theorem_main"]["kernel_dim"], 1);
    assert_eq!(v["theorem_main"]["pass"], true);
}

#[test]
fn closure_oscillator_truncations_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut dims = Vec::new();
    for preset in ["oscillator-trunc-10", "oscillator-trunc-16"] {
        let out = estalg(&["closure", "--preset", preset], dir.path());
        assert_eq!(code(&out), 0);
        dims.push(json_of(&out)["operator_algebra"]["dimension"].as_u64().unwrap());
    }
    assert_eq!(dims[0], dims[1]);
}

#[test]
fn closure_cap_one_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = estalg(&["closure", "--preset", "qubit-decay", "--cap", "1"], dir.path());
    assert_eq!(code(&out), 2, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_model_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.json");
    std::fs::write(
        &model,
        r#"{"dim": 2, "L": [], "H": [[[0.0,0.0],[1.0,0.0]],[[0.0,0.0],[0.0,0.0]]]}"#,
    )
    .unwrap();
    let scheme = dir.path().join("scheme.json");
    std::fs::write(&scheme, r#"{"observed": [], "theta": []}"#).unwrap();
    let out = estalg(
        &["closure", "--model", "bad.json", "--scheme", "scheme.json"],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("self-adjoint"), "stderr: {err}");

    // scheme index out of range also names the field
    std::fs::write(
        &model,
        r#"{"dim": 2, "L": [], "H": [[[0.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0]]]}"#,
    )
    .unwrap();
    std::fs::write(&scheme, r#"{"observed": [3], "theta": [0.0]}"#).unwrap();
    let out = estalg(
        &["closure", "--model", "bad.json", "--scheme", "scheme.json"],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("observed"), "stderr: {err}");
}

#[test]
fn simulate_replay_reproduces_filter_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = estalg(
        &["simulate", "--preset", "qubit-decay", "--seed", "5", "--dt", "1e-3", "--horizon", "0.2", "--out", "a"],
        dir.path(),
    );
    assert_eq!(code(&run), 0, "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let replay = estalg(
        &["simulate", "--preset", "qubit-decay", "--record", "a.record.csv", "--out", "b"],
        dir.path(),
    );
    assert_eq!(code(&replay), 0, "stderr: {}", String::from_utf8_lossy(&replay.stderr));
    let a = std::fs::read(dir.path().join("a.filter.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.filter.csv")).unwrap();
    assert_eq!(a, b, "replayed filter output differs");
}

#[test]
fn simulate_form_both_emits_discrepancy_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = estalg(
        &["simulate", "--preset", "qubit-decay", "--seed", "2", "--horizon", "0.1", "--form", "both", "--out", "sim"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("sim.filter.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.ends_with("pi_discrepancy"), "header: {header}");
    assert!(header.contains("Re_pi_pop0_ito") && header.contains("Re_pi_pop0_strat"));
}

#[test]
fn simulate_pure_picture_runs_on_pure_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = estalg(
        &["simulate", "--preset", "qubit-decay", "--picture", "pure", "--form", "strat", "--horizon", "0.1", "--out", "p"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("p.filter.csv").exists());
}

#[test]
fn simulate_ensemble_writes_mean_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = estalg(
        &["simulate", "--preset", "qubit-decay", "--ensemble", "16", "--horizon", "0.2", "--out", "e"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("e.ensemble.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("mean_pi_pop0"));
    assert_eq!(csv.lines().count(), 12); // header + 11 sample rows
}

#[test]
fn verify_defaults_pass_and_sweep_flags_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = estalg(
        &["verify", "--dims", "2,3,4", "--seeds", "20", "--out", "verify.json"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 8);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap())
            .unwrap();
    assert_eq!(json.as_array().unwrap().len(), 8);
}

#[test]
fn classical_presets_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = estalg(&["classical", "--preset", "kalman-1d"], dir.path());
    assert_eq!(code(&out), 0);
    let v = json_of(&out);
    assert_eq!(v["closure"]["dimension"], 4);
    assert_eq!(v["benes"]["is_benes"], true);

    let out = estalg(&["classical", "--preset", "cubic-sensor"], dir.path());
    assert_eq!(code(&out), 2, "cap-exceeded closure is exit 2");

    let out = estalg(&["classical", "--preset", "rotational-2d"], dir.path());
    assert_eq!(code(&out), 0);
    let v = json_of(&out);
    assert_eq!(v["is_exact"], false);
    assert_eq!(v["gauge_field"][0][1], "-2");
}

#[test]
fn classical_degree_guard_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("steep.json");
    // h = x^25 drives bracket degrees past the guard within two sweeps
    std::fs::write(
        &model,
        r#"{"n_vars": 1, "v": [[]], "h": [[{"coeff": [1, 1], "powers": [25]}]], "gamma0": [1, 1]}"#,
    )
    .unwrap();
    let out = estalg(&["classical", "--model", "steep.json", "--cap", "1000"], dir.path());
    assert_eq!(code(&out), 4, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degree guard"));
}

#[test]
fn degenerate_record_exits_three() {
    // a violent off-diagonal kick followed by a mismatched increment takes
    // sigma_t(I) negative, which the filter must refuse to normalize
    let dir = tempfile::tempdir().unwrap();
    let csv = "t,dY_1,dW_1\n0.0,-1e3,0.0\n1e-3,2.0,0.0\n2e-3,0.0,0.0\n";
    std::fs::write(dir.path().join("bad.record.csv"), csv).unwrap();
    std::fs::write(
        dir.path().join("bad.record.json"),
        r#"{"seed": 0, "dt": 1e-3, "T": 3e-3, "model_hash": ""}"#,
    )
    .unwrap();
    let out = estalg(
        &["simulate", "--preset", "qubit-decay", "--record", "bad.record.csv", "--out", "x"],
        dir.path(),
    );
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("step"), "degeneracy must report the step: {err}");
}

#[test]
fn unknown_preset_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = estalg(&["closure", "--preset", "nonesuch"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("qubit-decay"));
}
