use std::fs;
use std::path::Path;
use std::process::Command;

use gcflow::cli_io::{execute, parse_config, parse_config_str, sweep, ConfigError, InitialData, EXIT_CONFIG, EXIT_FLOW};
use gcflow::verification::{EstimateReport, CSV_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gcflow"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p
}

const RADIAL: &str = "[domain]\nn = 2\nrho = 0.7854\nnr = 32\n\n[flow]\nalpha = 0.5\nt_end = 1\n\n[initial]\nkind = constant\nvalue = 0\n\n[output]\nreport = report.csv\n";

#[test]
fn radial_run_exits_cleanly_with_flat_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RADIAL);
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("checks passed 5/5"), "{stdout}");
    let report = EstimateReport::read_csv(fs::read_to_string(dir.path().join("report.csv")).unwrap().as_bytes()).unwrap();
    assert!(report.last().unwrap().osc_phitilde <= 1e-12);
    // Snapshot cadence 0: report only.
    let files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 2, "{files:?}");
}

#[test]
fn report_header_is_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), RADIAL);
    execute(&parse_config(&cfg).unwrap()).unwrap();
    let text = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(
        CSV_HEADER,
        "t,s,theta,sup_grad_phi,m_min,m_max,detw_min,detw_max,mineig_w,osc_phitilde,sup_grad_phitilde,bdry_ortho_residual"
    );
}

#[test]
fn inadmissible_bump_is_a_flow_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = RADIAL.replace("kind = constant\nvalue = 0", "kind = bump\namplitude = 1.0");
    let cfg = write_config(dir.path(), &body);
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_FLOW));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not admissible"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &RADIAL.replace("alpha = 0.5", "alpha = 1.2"));
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0<alpha<1"));

    let cfg = write_config(dir.path(), &RADIAL.replace("alpha = 0.5", "aplha = 0.5"));
    assert_eq!(parse_config(&cfg).unwrap_err(), ConfigError::UnknownKey("flow.aplha".into()));
}

#[test]
fn snapshots_and_mesh_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let body = RADIAL.replace("t_end = 1", "t_end = 0.05") + "snapshot_every = 2\nmesh = true\n";
    let cfg = write_config(dir.path(), &body);
    let art = execute(&parse_config(&cfg).unwrap()).unwrap();
    let snaps: Vec<_> = art.files.iter().filter(|p| p.extension().is_some_and(|e| e == "txt")).collect();
    let meshes: Vec<_> = art.files.iter().filter(|p| p.extension().is_some_and(|e| e == "obj")).collect();
    assert!(!snaps.is_empty() && snaps.len() == meshes.len());
    let table = fs::read_to_string(snaps[0]).unwrap();
    assert_eq!(table.lines().nth(1).unwrap(), "r theta u K x y z");
    assert_eq!(table.lines().count(), 2 + 32);
    let obj = fs::read_to_string(meshes[0]).unwrap();
    let verts = obj.lines().filter(|l| l.starts_with("v ")).count();
    let faces = obj.lines().filter(|l| l.starts_with("f ")).count();
    // Pole + 31 rings of 62 vertices; one fan plus two triangles per quad.
    assert_eq!(verts, 1 + 31 * 62);
    assert_eq!(faces, 62 + 2 * 30 * 62);
}

#[test]
fn file_and_in_memory_runs_are_bitwise_equal() {
    let dir = tempfile::tempdir().unwrap();
    let body = RADIAL.replace("kind = constant\nvalue = 0", "kind = bump\namplitude = 0.05")
        .replace("t_end = 1", "s_end = 0.3");
    let cfg_path = write_config(dir.path(), &body);
    let from_file = parse_config(&cfg_path).unwrap();
    let mut in_memory = from_file.clone();
    in_memory.output.report = None;
    let a = execute(&from_file).unwrap();
    let b = execute(&in_memory).unwrap();
    assert_eq!(a.outcome.report.to_csv(), b.outcome.report.to_csv());
    let saved = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(saved, b.outcome.report.to_csv());
    // Writing the config back out gives the same configuration.
    assert_eq!(parse_config_str(&from_file.to_config_string(), dir.path()).unwrap(), from_file);
}

#[test]
fn radial_file_and_table_initial_data() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("profile.txt"), "# r phi\n0 0.1\n1 0.1\n").unwrap();
    let body = RADIAL.replace("kind = constant\nvalue = 0", "kind = radial_file\npath = profile.txt");
    let cfg = parse_config(&write_config(dir.path(), &body)).unwrap();
    assert!(matches!(cfg.initial, InitialData::RadialFile(_)));
    let a = execute(&cfg).unwrap();
    let exact = gcflow::radial_solution(1.0, 0.5, 0.1);
    assert!(a.outcome.state.phi.nodal().iter().all(|p| (p - exact).abs() < 1e-3));

    let vals = vec!["0.1"; 32].join(", ");
    let body = RADIAL.replace("kind = constant\nvalue = 0", &format!("kind = table\nvalues = {vals}"));
    let b = execute(&parse_config(&write_config(dir.path(), &body)).unwrap()).unwrap();
    assert_eq!(a.outcome.state.phi.nodal(), b.outcome.state.phi.nodal());
}

#[test]
fn sweep_rejects_alpha_one_and_runs_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let body = RADIAL.replace("kind = constant\nvalue = 0", "kind = bump\namplitude = 0.05")
        .replace("t_end = 1", "s_end = 2");
    let cfg_path = write_config(dir.path(), &body);
    let base = parse_config(&cfg_path).unwrap();
    assert!(matches!(sweep(&[0.5, 1.0], &base), Err(ConfigError::OutOfRange { .. })));

    let out = bin().args(["sweep", "--alphas", "0.25,0.5,0.75"]).arg(&cfg_path).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    for line in summary.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3], "ok");
        let lambda: f64 = cols[1].parse().unwrap();
        assert!(lambda > 0.0);
    }
    for tag in ["0p25", "0p5", "0p75"] {
        assert!(dir.path().join(format!("report_alpha{tag}.csv")).exists());
    }
    let out = bin().args(["sweep", "--alphas", "0.5,1.0"]).arg(&cfg_path).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn verify_exit_codes() {
    let ok = bin().args(["verify", "--alpha", "0.25"]).env("GCFLOW_THREADS", "2").output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = bin().args(["verify", "--mutate", "h-sign"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
    let bad_alpha = bin().args(["verify", "--alpha", "1.0"]).output().unwrap();
    assert_eq!(bad_alpha.status.code(), Some(EXIT_CONFIG));
}
