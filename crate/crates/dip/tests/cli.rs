use std::path::PathBuf;
use std::process::Command;

use clap::Parser;
use dip::cli::{run, Cli};
use dip::report::CSV_HEADER;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn dip(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("dip").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn empty_argv_prints_usage_and_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_dip")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_exits_2() {
    let (code, _, err) = dip(&["solve-pnlp", "--case", "x.json", "--frobnicate"]);
    assert_eq!(code, 2);
    assert!(err.contains("--frobnicate"));
}

#[test]
fn copies_without_ties_names_the_flag() {
    let (code, _, err) = dip(&["solve-opf", "--case", "c.m", "--copies", "6"]);
    assert_eq!(code, 2);
    assert!(err.contains("--ties"), "{err}");
}

#[test]
fn partition_conflicts_with_copies() {
    let (code, _, _) = dip(&["solve-opf", "--case", "c.m", "--partition", "p.json", "--copies", "2", "--ties", "t.json"]);
    assert_eq!(code, 2);
}

#[test]
fn solver_flags_reach_options() {
    let cli = Cli::parse_from([
        "dip", "solve-pnlp", "--case", "a.json", "--tol", "1e-6", "--delta0", "0.5", "--sigma", "0.2", "--tau", "0.99",
        "--max-outer", "7", "--kappa-eta", "0.25", "--theta-eta", "0.5",
    ]);
    let dip::cli::Command::SolvePnlp(a) = cli.command else {
        panic!("wrong subcommand");
    };
    let o = a.options();
    assert_eq!(o.tol, 1e-6);
    assert_eq!(o.delta0, 0.5);
    assert_eq!(o.sigma, 0.2);
    assert_eq!(o.tau, 0.99);
    assert_eq!(o.max_outer, 7);
    assert_eq!(o.kappa_eta, 0.25);
    assert_eq!(o.theta_eta, 0.5);
}

#[test]
fn invalid_option_value_fails() {
    let (code, _, err) = dip(&["solve-pnlp", "--case", &fixture("eq_qp.json"), "--tau", "1.5"]);
    assert_eq!(code, 1);
    assert!(err.contains("invalid options"), "{err}");
}

#[test]
fn solve_pnlp_equality_qp() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let summary = dir.path().join("run.json");
    let transcript = dir.path().join("run.jsonl");
    let (code, out, err) = dip(&[
        "solve-pnlp",
        "--case",
        &fixture("eq_qp.json"),
        "--out",
        csv.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
        "--reference",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("converged"));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert!((2..=6).contains(&lines.len()), "{} rows", lines.len() - 1);
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["status"], "converged");
    assert_eq!(s["iterations"].as_u64().unwrap() as usize, lines.len() - 1);
    assert!((s["final"]["objective"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(s["final"]["objective_rel_error"].as_f64().unwrap() < 1e-6);
    let t = std::fs::read_to_string(&transcript).unwrap();
    let first: serde_json::Value = serde_json::from_str(t.lines().next().unwrap()).unwrap();
    assert_eq!(first["round"], 0);
    assert_eq!(first["sender"], 0);
    assert_eq!(s["comm"]["rounds"].as_u64().unwrap(), t.lines().count() as u64 / 2);
}

#[test]
fn oracle_on_bounded_qp() {
    let (code, out, err) = dip(&["oracle", "--case", &fixture("bounded_qp.json")]);
    assert_eq!(code, 0, "{err}");
    let f: f64 = out.trim().rsplit("f = ").next().unwrap().parse().unwrap();
    assert!((f - 1.04).abs() < 1e-6, "{out}");
}

#[test]
fn iteration_limit_exits_1() {
    let (code, _, err) = dip(&["solve-pnlp", "--case", &fixture("bounded_qp.json"), "--max-outer", "1"]);
    assert_eq!(code, 1);
    assert!(err.contains("iteration_limit"), "{err}");
}

#[test]
fn missing_input_reports_path() {
    let (code, _, err) = dip(&["solve-pnlp", "--case", "/nonexistent/q.json"]);
    assert_eq!(code, 1);
    assert!(err.contains("/nonexistent/q.json"));
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.m");
    std::fs::write(&path, "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 230 1 1.1 oops;\n];\n").unwrap();
    let (code, _, err) = dip(&["check-derivatives", "--case", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn check_derivatives_on_case118() {
    let (code, out, err) = dip(&["check-derivatives", "--case", &fixture("case118.m")]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 1);
    assert!(out.contains("pass"));
}

#[test]
fn make_interconnected_writes_case_regions_and_structure() {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("joined.m");
    let regions = dir.path().join("regions.json");
    let structure = dir.path().join("structure.json");
    let (code, out, err) = dip(&[
        "make-interconnected",
        "--case",
        &fixture("case118.m"),
        "--copies",
        "2",
        "--ties",
        &fixture("ties_2x118.json"),
        "--out",
        case.to_str().unwrap(),
        "--regions",
        regions.to_str().unwrap(),
        "--structure",
        structure.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("236 buses, 374 branches, 108 generators in 2 regions"), "{out}");
    let joined = dip::opf::parse_matpower_case(&std::fs::read_to_string(&case).unwrap()).unwrap();
    assert_eq!(joined.buses.len(), 236);
    let s = dip::pnlp::parse_pnlp(&std::fs::read_to_string(&structure).unwrap()).unwrap();
    assert_eq!(s.n_c(), 8);
    assert_eq!(s.subsystems[0].n_x, 348);

    // the written case and regions reproduce the same partition
    let (code, out, err) = dip(&[
        "check-derivatives",
        "--case",
        case.to_str().unwrap(),
        "--partition",
        regions.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn golden_csv_header() {
    let golden = std::fs::read_to_string(fixture("golden_header.csv")).unwrap();
    assert_eq!(golden.trim_end(), CSV_HEADER);
}

#[test]
fn csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let path = dir.path().join(format!("{i}.csv"));
            let (code, _, _) = dip(&["solve-pnlp", "--case", &fixture("bounded_qp.json"), "--out", path.to_str().unwrap()]);
            assert_eq!(code, 0);
            std::fs::read(path).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}
