use std::fs;
use std::path::Path;
use std::process::Command;

fn treeloc(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_treeloc")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# kernel settings\ngrid_n = 2000\ndisorder = uniform\nK = 2\n").unwrap();
    let argv = ["treeloc", "threshold", "--config", path_str(&conf), "--method", "A", "--grid-n", "4000"];
    let cfg = treeloc_cli::parse_config(argv).unwrap();
    assert_eq!(cfg.grid_n, Some(4000));
    let argv = ["treeloc", "threshold", "--config", path_str(&conf), "--method", "A"];
    assert_eq!(treeloc_cli::parse_config(argv).unwrap().grid_n, Some(2000));
}

#[test]
fn usage_errors_name_each_violation() {
    let (code, err) = treeloc(&["threshold", "--method", "B", "--disorder", "uniform", "--K", "1", "--grid-n", "10"]);
    assert_eq!(code, 2);
    assert!(err.contains("K must be ≥ 2"), "{err}");
    assert!(err.contains("grid_n"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("typo.conf");
    fs::write(&conf, "grdi_n = 100\n").unwrap();
    let (code, err) = treeloc(&["table", "--config", path_str(&conf), "--disorder", "uniform"]);
    assert_eq!(code, 2);
    assert!(err.contains("grdi_n"), "{err}");

    let (code, err) = treeloc(&["threshold", "--disorder", "uniform", "--K", "2"]);
    assert_eq!(code, 2);
    assert!(err.contains("missing required field: method"), "{err}");
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(treeloc(&["--help"]).0, 0);
}

#[test]
fn failed_reference_comparison_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    // The closed form gives 0.161 where the table prints 0.154.
    let (code, _) = treeloc(&["table", "--disorder", "uniform", "--K", "2", "--methods", "D", "--out", path_str(&out)]);
    assert_eq!(code, 3);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("fail"), "{text}");
    let (code, _) = treeloc(&["table", "--disorder", "uniform", "--K", "2..4", "--methods", "E", "--out", path_str(&out)]);
    assert_eq!(code, 0);
}

#[test]
fn runtime_failure_leaves_an_incomplete_trailer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("th.csv");
    // Uniform disorder has no states at E = 2.
    let (code, _) = treeloc(&["threshold", "--method", "A", "--disorder", "uniform", "--K", "2", "--E", "2", "--out", path_str(&out)]);
    assert_eq!(code, 1);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# INCOMPLETE"), "{text}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["eigen", "--disorder", "cauchy", "--K", "2", "--g", "0.3", "--grid-n", "200", "--x-max", "100"],
        &["rde-diag", "--disorder", "uniform", "--K", "2", "--t", "0.11", "--pool-size", "2e4", "--samples", "1e5"],
        &["cavity", "--disorder", "uniform", "--K", "2", "--g", "0.15", "--pool-size", "1e4", "--sweeps", "50,100", "--seeds", "2"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("r{i}_{rep}.csv"));
            let mut full: Vec<&str> = args.to_vec();
            full.extend(["--threads", "1", "--out", path_str(&out)]);
            let (code, err) = treeloc(&full);
            assert!(code == 0 || code == 3, "{args:?}: {err}");
            outputs.push(fs::read(&out).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{args:?}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("c{threads}.csv"));
        let args = ["cavity", "--disorder", "cauchy", "--K", "3", "--g", "0.3", "--pool-size", "2e4", "--sweeps", "40,80", "--seeds", "2"];
        let mut full = args.to_vec();
        full.extend(["--threads", threads, "--out", path_str(&out)]);
        assert_eq!(treeloc(&full).0, 0);
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn profile_writes_kernel_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let dump = dir.path().join("k.bin");
    let args = ["profile", "--disorder", "uniform", "--K", "2", "--t", "0.11", "--grid-n", "100", "--x-max", "100"];
    let mut full = args.to_vec();
    full.extend(["--out", path_str(&out), "--dump-kernel", path_str(&dump)]);
    assert_eq!(treeloc(&full).0, 0);
    let bytes = fs::read(&dump).unwrap();
    let rows = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    assert_eq!((rows, cols), (200, 200));
    assert_eq!(bytes.len(), 16 + 8 * 200 * 200);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("x,x_abs_a"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 201);
}
