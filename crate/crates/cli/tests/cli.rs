use std::path::Path;
use std::process::{Command as Process, Output};

use halfspace_cli::{
    run, AnalyzeReport, CheckBcReport, Command, DemoReport, Format, ProbeReport, RunConfig,
    SolveReport, SourceReport, EXIT_ILL_POSED, EXIT_OK, EXIT_USAGE,
};
use halfspace_core::grid::SampledVec;
use halfspace_core::ExpPolyVec;

fn halfspace(args: &[&str]) -> Output {
    Process::new(env!("CARGO_BIN_EXE_halfspace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_source(dir: &Path, dim: usize) -> String {
    let coeffs: Vec<Vec<f64>> = (0..dim).map(|i| vec![0.1 * (i + 1) as f64, 0.05]).collect();
    let doc = serde_json::json!({ "dim": dim, "terms": [{ "rate": 1.5, "coeffs": coeffs }] });
    let path = dir.join("h.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn demo_reproduces_kramers_profile() {
    let out = run(&RunConfig::new(Command::Demo {
        name: "kramers3".into(),
    }))
    .unwrap();
    assert_eq!(out.exit_code, EXIT_OK);
    let r: DemoReport = serde_json::from_str(&out.text).unwrap();
    assert!(r.reproduced);
    assert!((r.coefficients[0] + std::f64::consts::SQRT_2).abs() <= 1e-12);
    assert_eq!(r.coefficients[2], 0.0);
}

#[test]
fn analyze_kramers_counts() {
    let o = halfspace(&["analyze", "--system", "kramers3:nu=1"]);
    assert_eq!(code(&o), EXIT_OK);
    let r: AnalyzeReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((r.analysis.n_plus, r.analysis.n_zero), (0, 1));
}

#[test]
fn analyze_csv_lists_eigenvalues() {
    let mut cfg = RunConfig::new(Command::Analyze);
    cfg.system = "full3d:M=3".into();
    cfg.format = Format::Csv;
    let out = run(&cfg).unwrap();
    let lines: Vec<&str> = out.text.lines().collect();
    assert_eq!(lines[0], "index,lambda,margin");
    assert_eq!(lines.len(), 1 + 12);
}

#[test]
fn grad_condition_is_ill_posed_at_m5() {
    let o = halfspace(&["check-bc", "--system", "full3d:M=5", "--bc", "grad:chi=1"]);
    assert_eq!(code(&o), EXIT_ILL_POSED);
    let r: CheckBcReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r.verdict.solvable && !r.verdict.stable);

    let o = halfspace(&[
        "check-bc",
        "--system",
        "full3d:M=5",
        "--bc",
        "modified:chi=1,H=identity",
    ]);
    assert_eq!(code(&o), EXIT_OK);
    let r: CheckBcReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r.verdict.solvable && r.verdict.stable);
}

#[test]
fn usage_and_io_errors_exit_one() {
    for args in [
        vec!["analyze", "--tol-eig", "1e-3"],
        vec!["analyze", "--system", "nosuch:M=3"],
        vec!["analyze", "--system", "full3d:K=3"],
        vec!["solve", "--source", "/nonexistent/h.json"],
        vec!["solve", "--weight", "-1"],
        vec!["frobnicate"],
        vec!["demo", "unknown"],
    ] {
        let o = halfspace(&args);
        assert_eq!(code(&o), EXIT_USAGE, "{args:?}");
    }
    let o = halfspace(&["analyze", "--tol-eig", "1e-3"]);
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "usage");
    assert_eq!(err["exit_code"], 1);
}

#[test]
fn solve_report_roundtrips_norms() {
    let dir = tempfile::tempdir().unwrap();
    let src = write_source(dir.path(), 20);
    let out = dir.path().join("sol.json");
    let o = halfspace(&[
        "solve",
        "--system",
        "full3d:M=3",
        "--bc",
        "modified:chi=1,H=flux",
        "--source",
        &src,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_OK);
    assert!(o.stdout.is_empty());
    let r: SolveReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(r.residual_sup <= 1e-8 * (1.0 + r.h_sup));
    assert!(r.boundary_residual.unwrap() <= 1e-9);
    // default weight 0.9·min(1/λ_max, 1.5)
    assert!(r.a > 0.0 && r.a <= 0.9 * 1.5);
    let w = ExpPolyVec::from_document(&r.solution).unwrap();
    assert_eq!(w.weighted_norm(r.a).unwrap(), r.norms.w_a);
    let h = ExpPolyVec::from_json(&std::fs::read_to_string(&src).unwrap()).unwrap();
    assert_eq!(h.weighted_norm(r.a).unwrap(), r.norms.h_a);
    // re-serializing the parsed report gives the same document
    let again: SolveReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(again, r);
}

#[test]
fn solve_csv_samples_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Command::Solve);
    cfg.system = "full3d:M=3".into();
    cfg.bc = Some("modified:chi=1".into());
    cfg.source = Some(write_source(dir.path(), 20).into());
    cfg.format = Format::Csv;
    cfg.grid_points = 7;
    let out = run(&cfg).unwrap();
    let s = SampledVec::from_csv(out.text.as_bytes()).unwrap();
    assert_eq!(s.abscissae().len(), 7);
    assert_eq!(s.dim(), 20);
}

#[test]
fn probe_finds_witness_only_for_grad() {
    let o = halfspace(&[
        "probe",
        "--system",
        "full3d:M=5",
        "--bc",
        "grad:chi=1",
        "--weight",
        "0.25",
    ]);
    assert_eq!(code(&o), EXIT_ILL_POSED);
    let r: ProbeReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r.witness_found);
    assert!((r.h_norm.unwrap() - 1.0).abs() < 1e-9);
    assert!(r.z_plus0_norm.unwrap() >= 1e3 * (1.0 - 1e-9));

    let o = halfspace(&[
        "probe",
        "--system",
        "full3d:M=5",
        "--bc",
        "modified:chi=1",
        "--weight",
        "0.25",
    ]);
    assert_eq!(code(&o), EXIT_OK);
    let r: ProbeReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(!r.witness_found && r.samples.is_empty());
}

#[test]
fn explicit_system_and_custom_bc_files() {
    let dir = tempfile::tempdir().unwrap();
    let sys = halfspace_core::MomentSystem::kramers3(1.0).unwrap();
    let sys_path = dir.path().join("sys.json");
    std::fs::write(&sys_path, sys.to_json().unwrap()).unwrap();
    let bc_path = dir.path().join("bc.json");
    std::fs::write(&bc_path, r#"{"kind": "custom", "B3": []}"#).unwrap();
    let o = halfspace(&[
        "check-bc",
        "--system",
        sys_path.to_str().unwrap(),
        "--bc",
        bc_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_OK);
    let r: CheckBcReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r.verdict.rows, 0);

    // an extra row on a system with n+ = 0 leaves nothing to certify
    std::fs::write(&bc_path, r#"{"kind": "custom", "B3": [[1.0]], "g": [0.0]}"#).unwrap();
    let o = halfspace(&[
        "check-bc",
        "--system",
        sys_path.to_str().unwrap(),
        "--bc",
        bc_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_OK);
}

#[test]
fn sampled_source_reports_norm_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    let f = ExpPolyVec::outer(
        &nalgebra::DVector::from_vec(vec![0.0, 1.0, 0.0]),
        1.0,
        &[1.0],
    )
    .unwrap();
    let y: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.01).collect();
    let mut buf = Vec::new();
    SampledVec::from_exppoly(&f, &y)
        .unwrap()
        .to_csv(&mut buf)
        .unwrap();
    std::fs::write(&path, buf).unwrap();
    let mut cfg = RunConfig::new(Command::Solve);
    cfg.source = Some(path);
    cfg.weight = Some(0.5);
    let out = run(&cfg).unwrap();
    let r: SourceReport = serde_json::from_str(&out.text).unwrap();
    assert!((r.h_norm - f.weighted_norm(0.5).unwrap()).abs() < 1e-3);
    assert_eq!(r.trace.unwrap(), vec![0.0, 1.0, 0.0]);
}
