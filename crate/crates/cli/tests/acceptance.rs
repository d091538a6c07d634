//! CLI acceptance suite: golden determinism over the fixture scenarios and
//! the documented exit codes. Run with `--nocapture` to see the `[PASS]`
//! line.

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_subcash")
}

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn scratch(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("subcash_golden_{name}.csv"))
}

struct RunOutput {
    code: i32,
    stdout: String,
    stderr: String,
    csv: Option<String>,
}

fn run_once(args: &[&str], csv_path: Option<&PathBuf>) -> RunOutput {
    if let Some(p) = csv_path {
        let _ = std::fs::remove_file(p);
    }
    let out = Command::new(bin())
        .args(args)
        .current_dir(fixtures_dir())
        .output()
        .expect("spawn subcash");
    let csv = csv_path.map(|p| std::fs::read_to_string(p).expect("csv output exists"));
    RunOutput {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).expect("utf8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf8 stderr"),
        csv,
    }
}

/// Runs the command twice and asserts byte-identical report and CSV.
fn run_golden(args: &[&str], csv_path: Option<&PathBuf>, expect_code: i32) -> RunOutput {
    let first = run_once(args, csv_path);
    assert_eq!(
        first.code, expect_code,
        "unexpected exit code for {args:?}\nstdout: {}\nstderr: {}",
        first.stdout, first.stderr
    );
    let second = run_once(args, csv_path);
    assert_eq!(second.code, expect_code);
    assert_eq!(first.stdout, second.stdout, "report differs across runs for {args:?}");
    assert_eq!(first.csv, second.csv, "csv differs across runs for {args:?}");
    first
}

#[test]
fn criterion_9_cli_golden() {
    let start = Instant::now();

    // fixture 1: two_atom -- reserve with CSV, the pinned -4 value
    let csv = scratch("reserve_two_atom");
    let out = run_golden(
        &[
            "reserve",
            "--scenario",
            "two_atom.scn",
            "--measure",
            "linP",
            "--envelope",
            "e09_10",
            "--position",
            "X",
            "--out",
            csv.to_str().unwrap(),
        ],
        Some(&csv),
        0,
    );
    assert!(out.stdout.contains("reserve = -4.000000000000"), "{}", out.stdout);
    assert!(out.csv.as_ref().unwrap().starts_with("atom,x,d_low,d_high,d_star\n"));

    // two_atom put premium: the pinned print
    let out = run_golden(
        &["reserve", "--scenario", "two_atom.scn", "--position", "X", "--put-rate", "1.05"],
        None,
        0,
    );
    assert!(out.stdout.contains("reserve = 4.761904761905"), "{}", out.stdout);

    // two_atom dual with table export and the scale sweep
    let csv = scratch("dual_two_atom");
    let out = run_golden(
        &[
            "dual",
            "--scenario",
            "two_atom.scn",
            "--measure",
            "linP",
            "--envelope",
            "e09_10",
            "--position",
            "X",
            "--mu-res",
            "21",
            "--c-grid",
            "0.9:1.0:11",
            "--out",
            csv.to_str().unwrap(),
        ],
        Some(&csv),
        0,
    );
    assert!(out.stdout.contains("dual = -4.000000000000"));
    assert!(out.stdout.contains("exact_dual = -4.000000000000"));
    assert!(out.stdout.contains("worst_forward = -4.000000000000"));
    assert!(out.csv.as_ref().unwrap().starts_with("index,mass,alpha,w_up,w_down\n"));

    // two_atom bridge: calibrated passes, the stale bond fails with exit 1
    let out = run_golden(
        &[
            "bridge",
            "--scenario",
            "two_atom.scn",
            "--measure",
            "linP",
            "--discount",
            "d09",
            "--bond",
            "b09",
            "--position",
            "Y",
        ],
        None,
        0,
    );
    assert!(out.stdout.contains("calibration = PASS"));
    let out = run_golden(
        &[
            "bridge",
            "--scenario",
            "two_atom.scn",
            "--measure",
            "linP",
            "--discount",
            "d09",
            "--bond",
            "b08",
            "--position",
            "Y",
        ],
        None,
        1,
    );
    assert!(out.stdout.contains("calibration = FAIL"));

    // two_atom sub-additivity check
    let out = run_golden(
        &[
            "check",
            "subadd",
            "--scenario",
            "two_atom.scn",
            "--measure",
            "linP",
            "--envelope",
            "e09_10",
            "--position",
            "X",
            "--m-grid",
            "-5:5:11",
        ],
        None,
        0,
    );
    assert!(out.stdout.contains("status: PASS"));

    // fixture 2: three_atom -- transfer with CSV
    let csv = scratch("transfer_three_atom");
    let out = run_golden(
        &[
            "transfer",
            "--scenario",
            "three_atom.scn",
            "--measure-a",
            "wc",
            "--measure-b",
            "linQ",
            "--exposure-a",
            "XA",
            "--exposure-b",
            "XB",
            "--out",
            csv.to_str().unwrap(),
        ],
        Some(&csv),
        0,
    );
    // worst case against a linear measure prices at the linear base
    assert!(out.stdout.contains("residual = 4.000000000000"), "{}", out.stdout);
    assert!(out.csv.as_ref().unwrap().starts_with("atom,psi,f_star,h_star\n"));

    // three_atom dual on the robust measure (grid penalty path)
    let csv = scratch("dual_three_atom");
    run_golden(
        &[
            "dual",
            "--scenario",
            "three_atom.scn",
            "--measure",
            "baseQ",
            "--envelope",
            "wide",
            "--position",
            "XA",
            "--mu-res",
            "6",
            "--out",
            csv.to_str().unwrap(),
        ],
        Some(&csv),
        0,
    );

    // fixture 3: skewed -- compose-route reserve and dual export
    let out = run_golden(
        &[
            "reserve",
            "--scenario",
            "skewed.scn",
            "--measure",
            "linS",
            "--envelope",
            "band",
            "--position",
            "P",
            "--compose",
        ],
        None,
        0,
    );
    assert!(out.stdout.contains("mode = compose"));
    let csv = scratch("dual_skewed");
    run_golden(
        &[
            "dual",
            "--scenario",
            "skewed.scn",
            "--measure",
            "linS",
            "--envelope",
            "band",
            "--position",
            "P",
            "--mu-res",
            "21",
            "--out",
            csv.to_str().unwrap(),
        ],
        Some(&csv),
        0,
    );

    // dynamic lattice solve with CSV; the linear-rate oracle value
    let csv = scratch("dynamic");
    let out = run_golden(
        &[
            "dynamic",
            "--steps",
            "200",
            "--horizon",
            "1",
            "--rate-low",
            "0.05",
            "--rate-high",
            "0.05",
            "--terminal-const",
            "100",
            "--out",
            csv.to_str().unwrap(),
        ],
        Some(&csv),
        0,
    );
    let y_root: f64 = out
        .stdout
        .lines()
        .find_map(|l| l.strip_prefix("y_root = "))
        .expect("y_root line")
        .parse()
        .unwrap();
    assert!((y_root + 95.1229).abs() <= 0.5, "y_root {y_root}");
    assert!(out.csv.as_ref().unwrap().starts_with("step,node,w,y,z\n"));

    // dual recovery adds the control column
    let csv = scratch("dynamic_dual");
    let out = run_golden(
        &[
            "dynamic",
            "--steps",
            "100",
            "--horizon",
            "1",
            "--rate-low",
            "0.01",
            "--rate-high",
            "0.10",
            "--terminal-linear",
            "0:5",
            "--dual",
            "--out",
            csv.to_str().unwrap(),
        ],
        Some(&csv),
        0,
    );
    assert!(out.stdout.contains("dual = PASS"));
    assert!(out.csv.as_ref().unwrap().starts_with("step,node,w,y,z,beta_bar\n"));

    // exit code sweep: 2 parse, 3 validation, 4 numeric, 5 capacity
    let out = run_once(
        &["reserve", "--scenario", "malformed.scn", "--position", "X", "--put-rate", "1.0"],
        None,
    );
    assert_eq!(out.code, 2, "stderr: {}", out.stderr);
    assert!(out.stdout.is_empty(), "no partial report on error paths");

    let out = run_once(
        &["reserve", "--scenario", "bad_prob.scn", "--position", "X", "--put-rate", "1.0"],
        None,
    );
    assert_eq!(out.code, 3, "stderr: {}", out.stderr);
    assert!(out.stdout.is_empty());

    let out = run_once(
        &[
            "reserve",
            "--scenario",
            "two_atom.scn",
            "--position",
            "X",
            "--measure",
            "linP",
            "--envelope",
            "missing",
        ],
        None,
    );
    assert_eq!(out.code, 3);

    let out = run_once(
        &["dynamic", "--steps", "2", "--horizon", "1", "--rate", "3.0", "--terminal-const", "1"],
        None,
    );
    assert_eq!(out.code, 4, "stderr: {}", out.stderr);
    assert!(out.stdout.is_empty());

    let out = run_once(
        &[
            "dual",
            "--scenario",
            "three_atom.scn",
            "--measure",
            "linQ",
            "--envelope",
            "wide",
            "--position",
            "XA",
            "--mu-res",
            "300",
        ],
        None,
    );
    assert_eq!(out.code, 5, "stderr: {}", out.stderr);
    assert!(out.stdout.is_empty());

    let secs = start.elapsed().as_secs_f64();
    println!("[PASS] criterion 9: CLI golden tests ({secs:.2}s, limit 5s)");
    assert!(secs < 5.0, "criterion 9 exceeded its runtime budget");
}
