use std::fs;
use std::process::{Command, Output};

use orcs_core::bench::CSV_HEADER;

fn orcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orcs"))
        .args(args)
        .env("ORCS_THREADS", "1")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &[
    "--n",
    "100",
    "--box",
    "60",
    "--radius-dist",
    "const:4",
    "--seed",
    "3",
];

fn with(extra: &[&'static str]) -> Vec<&'static str> {
    SMALL.iter().chain(extra).copied().collect()
}

#[test]
fn simulate_writes_one_row_per_step() {
    let mut args = vec!["simulate"];
    args.extend(with(&["--steps", "12"]));
    let out = orcs(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 14);
    assert!(
        lines[13].starts_with("# summary steps=12 "),
        "{}",
        lines[13]
    );
    assert!(lines[13].ends_with("status=ok"));
    for (k, line) in lines[1..13].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 9);
        assert_eq!(fields[0], k.to_string());
    }
    // Step 0 always builds.
    assert_eq!(lines[1].split(',').nth(4), Some("1"));
    assert!(stderr(&out).contains("# summary steps=12 "));
}

#[test]
fn zero_steps_gives_header_and_summary_only() {
    let mut args = vec!["simulate"];
    args.extend(with(&["--steps", "0"]));
    let out = orcs(&args);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].starts_with("# summary steps=0 "));
}

#[test]
fn simulate_to_file_and_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# small run\nn = 50\nbox = 40\nradius-dist = const:3\nsteps = 9\nengine = cell\n",
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    let out = orcs(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text
        .lines()
        .last()
        .unwrap()
        .starts_with("# summary steps=4 "));
}

#[test]
fn unknown_key_is_a_config_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "n = 10\nwarp = 9\n").unwrap();
    let out = orcs(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("error kind=config key=warp"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn bad_values_exit_with_code_two() {
    for (arg, key) in [
        ("--bc=twisted", "bc"),
        ("--n=-4", "n"),
        ("--policy=fixed:x", "policy"),
        ("--radius-dist=uniform:5:1", "radius-dist"),
    ] {
        let out = orcs(&["simulate", arg, "--steps", "1"]);
        assert_eq!(out.status.code(), Some(2), "{arg}: {}", stderr(&out));
        assert!(
            stderr(&out).contains(&format!("key={key}")),
            "{}",
            stderr(&out)
        );
    }
}

#[test]
fn perse_with_mixed_radii_is_refused() {
    let out = orcs(&[
        "simulate",
        "--mode",
        "perse",
        "--radius-dist",
        "uniform:1:3",
        "--n",
        "10",
        "--steps",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error kind=config key=mode"));
}

#[test]
fn brute_over_the_oracle_limit_is_refused() {
    let out = orcs(&[
        "simulate", "--engine", "brute", "--n", "6000", "--steps", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("key=engine"));
}

#[test]
fn too_many_particles_is_a_capacity_error() {
    let out = orcs(&[
        "simulate",
        "--n",
        "100",
        "--max-particles",
        "10",
        "--steps",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("error kind=capacity requested=100 limit=10"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn list_overflow_reports_the_particle_and_exits_one() {
    let out = orcs(&[
        "simulate",
        "--n",
        "200",
        "--box",
        "10",
        "--radius-dist",
        "const:4",
        "--mode",
        "list",
        "--kmax",
        "2",
        "--steps",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(
        err.contains("error kind=neighbor_list_overflow particle="),
        "{err}"
    );
    assert!(err.contains("capacity=2"), "{err}");
    assert!(err.contains("status=failed"), "{err}");
}

#[test]
fn dump_writes_header_and_one_line_per_particle() {
    let mut args = vec!["dump", "--after", "2"];
    args.extend(SMALL);
    let out = orcs(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("100 60"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 100);
    for r in rows {
        assert_eq!(r.len(), 4);
        assert!(r[..3].iter().all(|v| (0.0..=60.0).contains(v)));
        assert_eq!(r[3], 4.0);
    }
}

#[test]
fn dump_is_deterministic_for_a_seed() {
    let mut args = vec!["dump", "--after", "3", "--deterministic"];
    args.extend(SMALL);
    let a = orcs(&args);
    let b = orcs(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn bench_runs_every_matrix_cell() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.cfg");
    fs::write(
        &matrix,
        "n = 60\nbox = 40\nsteps = 3\npdist = lattice, disordered\nradius-dist = const:3\nbc = wall, periodic\nengines = bvh, cell\npolicy = gradient\n",
    )
    .unwrap();
    let results = dir.path().join("results");
    let out = orcs(&[
        "bench",
        "--matrix",
        matrix.to_str().unwrap(),
        "--out-dir",
        results.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for pd in ["lattice", "disordered"] {
        for bc in ["wall", "periodic"] {
            // A BVH cell is named after its query mode.
            for engine in ["forces", "cell"] {
                let name = format!("{pd}-const3-{bc}-{engine}-gradient-n60.csv");
                let text = fs::read_to_string(results.join(&name))
                    .unwrap_or_else(|e| panic!("{name}: {e}"));
                assert_eq!(text.lines().count(), 5, "{name}");
            }
        }
    }
    let summary = fs::read_to_string(results.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 8);
    assert!(stderr(&out).contains("8 cells: 8 ok, 0 failed, 0 skipped"));
}

#[test]
fn validate_passes_every_property() {
    let out = orcs(&["validate", "--seed", "5"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("PASS ")).count(),
        5,
        "{text}"
    );
    assert!(text.ends_with("5/5 properties passed\n"));
}
