//! End-to-end checks of the command-line interface: exit codes, CSV
//! shape, determinism and the protocol file path.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vibronic(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vibronic"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn modes_two_ions_has_sqrt3() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(&["modes", "-n", "2"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let csv = fs::read_to_string(dir.path().join("modes_n2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "mode,frequency,b0,b1");
    let row0: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row0[0], "0");
    assert_eq!(row0[1].parse::<f64>().unwrap(), 1.0);
    let row1: Vec<&str> = lines.next().unwrap().split(',').collect();
    let freq: f64 = row1[1].parse().unwrap();
    assert!((freq - 3f64.sqrt()).abs() < 1e-12);
    // Manifest written beside the CSV.
    let manifest = fs::read_to_string(dir.path().join("modes_n2.manifest.txt")).unwrap();
    assert!(manifest.contains("command: modes"));
    assert!(manifest.contains("n_ions: 2"));
}

#[test]
fn modes_rejects_zero_ions() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(&["modes", "-n", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn figure_three_is_deterministic_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(&["figure", "3", "-o", "a.csv"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let out2 = vibronic(&["figure", "3", "-o", "b.csv"], dir.path());
    assert!(out2.status.success());
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b, "CSV must be byte-identical across runs");

    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,p_m-2_n2,p_m-1_n1,p_m0_n0");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 600);
    // Populations sum to 1 on every row; the edge column peaks near 48/49.
    let mut edge_max = 0.0f64;
    for row in &rows {
        let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        let total: f64 = cols[1..].iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        edge_max = edge_max.max(cols[3]);
    }
    assert!((edge_max - 48.0 / 49.0).abs() < 1e-3, "edge max {edge_max}");
}

#[test]
fn figure_one_row_sums_and_column_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(&["figure", "1", "--steps", "80"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let text = fs::read_to_string(dir.path().join("fig1.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split(',').count(), 42, "t plus 41 slot columns");
    for row in lines {
        let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        let total: f64 = cols[1..].iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}

#[test]
fn figure_honours_tmax_and_steps_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(
        &["figure", "4", "--tmax", "1.5", "--steps", "10"],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let text = fs::read_to_string(dir.path().join("fig4.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    let last_t: f64 = rows.last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((last_t - 1.5).abs() < 1e-12);
}

#[test]
fn figure_two_entropy_nonnegative() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(&["figure", "2", "--steps", "60"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let text = fs::read_to_string(dir.path().join("fig2.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,entropy_bits");
    for row in lines {
        let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(cols[1] >= 0.0);
    }
}

#[test]
fn figure_unknown_id_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(&["figure", "9"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(
        &["figure", "3", "-o", "/nonexistent-dir/x.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn protocol_w1_reports_unit_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(&["protocol", "w1", "-n", "8"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let fid = extract_field(&text, "target fidelity: ");
    assert!(fid >= 1.0 - 1e-9, "fidelity {fid}");
    assert!(text.contains("status: ok"));
}

#[test]
fn protocol_postselect_fig4_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(&["protocol", "wk-postselect", "-n", "10", "-k", "5"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let fid = extract_field(&text, "target fidelity: ");
    assert!((fid - 1.0).abs() < 1e-10, "conditional fidelity {fid}");
    let prob = extract_field(&text, "success probability: ");
    assert!((prob - 0.960281975853).abs() < 1e-6, "probability {prob}");
}

#[test]
fn protocol_requires_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(&["protocol", "w1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = vibronic(&["protocol", "wk-postselect", "-n", "4"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn protocol_unknown_name_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(&["protocol", "warp-core"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn protocol_file_runs_and_saves_state() {
    let dir = tempfile::tempdir().unwrap();
    let proto = dir.path().join("w.proto");
    fs::write(&proto, "# W state\ninject 0\npulse red 0 auto\n").unwrap();
    let out = vibronic(
        &[
            "protocol",
            proto.to_str().unwrap(),
            "-n",
            "4",
            "--save",
            "final.state",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("target fidelity: n/a"));

    let saved = fs::read_to_string(dir.path().join("final.state")).unwrap();
    assert!(saved.starts_with("vibronic-state v1"));
    let reloaded =
        vibronic::statespace::QuantumState::load_text(&mut saved.as_bytes()).unwrap();
    // The saved state is the W state (x) |0> up to a global phase.
    let w = vibronic::statespace::dicke_state(4, 1).unwrap();
    let basis = reloaded.basis().as_full().unwrap().clone();
    let target = vibronic::protocols::spin_with_vacuum_phonons(&w, &basis).unwrap();
    let fid = vibronic::observables::fidelity(&reloaded, &target).unwrap();
    assert!(fid > 1.0 - 1e-9, "fidelity {fid}");
}

#[test]
fn malformed_protocol_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let proto = dir.path().join("bad.proto");
    fs::write(&proto, "inject 0\nfrobnicate 3\n").unwrap();
    let out = vibronic(&["protocol", proto.to_str().unwrap(), "-n", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn oversized_ladder_save_is_domain_error() {
    // wk-postselect for a long chain runs in the ladder representation;
    // serializing that would need the full product space.
    let dir = tempfile::tempdir().unwrap();
    let out = vibronic(
        &[
            "protocol",
            "wk-postselect",
            "-n",
            "23",
            "-k",
            "2",
            "--save",
            "state.txt",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn protocol_failed_branch_exit_zero_but_flagged() {
    // A zero-probability branch is a result, not a process failure.
    let dir = tempfile::tempdir().unwrap();
    let proto = dir.path().join("never.proto");
    fs::write(&proto, "measure-phonon 0 2\n").unwrap();
    let out = vibronic(&["protocol", proto.to_str().unwrap(), "-n", "2"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("status: FAILED"));
    assert!(text.contains("success probability: 0"));
}

fn extract_field(text: &str, prefix: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("missing `{prefix}` in output:\n{text}"))
        .trim()
        .parse()
        .expect("numeric field")
}
