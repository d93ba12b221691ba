use std::process::ExitCode;

use srcond::cli::main_with_args;

fn exit(args: &[&str]) -> ExitCode {
    main_with_args(std::iter::once("srcond").chain(args.iter().copied()))
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(exit(&["run"]), ExitCode::from(2));
    assert_eq!(exit(&["run", "--instance", "pagie", "--population", "0"]), ExitCode::from(2));
    assert_eq!(exit(&["run", "--instance", "pagie", "--function-set", "huge"]), ExitCode::from(2));
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(exit(&["run", "--instance", missing.to_str().unwrap()]), ExitCode::from(2));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let out = file.path().to_str().unwrap();
    let args = ["run", "--instance", "pagie", "--population", "4", "--generations", "1", "--out", out];
    assert_eq!(exit(&args), ExitCode::from(1));
}

#[test]
fn run_writes_expected_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "run", "--instance", "pagie", "--max-size", "15", "--population", "20", "--generations", "3", "--reps", "2",
        "--out", out,
    ];
    assert_eq!(exit(&args), ExitCode::SUCCESS);
    let root = dir.path().join("Pagie-15-Small");
    for f in ["finals.csv", "summary.csv", "rep0/candidates.csv", "rep0/generations.csv", "rep1/k.svg"] {
        assert!(root.join(f).is_file(), "{f} missing");
    }
    let finals = srcond::telemetry::read_finals_csv(root.join("finals.csv")).unwrap();
    assert_eq!(finals.len(), 2);
    assert!(finals.iter().all(|r| r.k >= 1 && r.redundant <= r.k));
}
