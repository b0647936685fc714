use std::path::Path;
use std::process::{Command, Output};

const COARSE: [&str; 4] = ["--n-radial", "12", "--n-angular-minus", "6"];

fn signflip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_signflip"))
        .args(args)
        .env_remove("SIGNFLIP_THREADS")
        .output()
        .expect("binary runs")
}

fn with_out<'a>(args: &[&'a str], out: &'a str) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(COARSE);
    v.extend(["--out", out]);
    v
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn mu_prints_period() {
    let o = signflip(&["mu"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("class = critical"));
    let period: f64 = s
        .lines()
        .find_map(|l| l.strip_prefix("period = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((period - 0.4983).abs() < 1e-3, "{period}");
}

#[test]
fn forbidden_and_noncritical_contrasts_exit_2() {
    assert_eq!(signflip(&["mu", "--sigma-minus", "-1"]).status.code(), Some(2));
    assert_eq!(signflip(&["delta-n", "--sigma-minus", "-0.1"]).status.code(), Some(2));
    assert_eq!(signflip(&["spectrum", "--sigma-minus", "0.5"]).status.code(), Some(2));
}

#[test]
fn bad_grids_and_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cases: [&[&str]; 4] = [
        &["sweep", "--grid-points", "0"],
        &["sweep", "--delta-min", "0.9", "--delta-max", "0.5"],
        &["sweep", "--delta-max", "1.5"],
        &["spectrum", "--k", "0"],
    ];
    for args in cases {
        let o = signflip(&with_out(args, out));
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    assert_eq!(signflip(&["spectrum", "--bogus"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain_file");
    std::fs::write(&file, "x").unwrap();
    let out = file.join("sub");
    let o = signflip(&with_out(&["spectrum"], out.to_str().unwrap()));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn delta_n_follows_ratio_law() {
    let o = signflip(&["delta-n", "--n", "4"]);
    assert!(o.status.success());
    let vals: Vec<f64> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals.len(), 4);
    for w in vals.windows(2) {
        assert!((w[1] / w[0] - vals[0]).abs() < 1e-12);
    }
}

#[test]
fn lattice_window_lists_four_points() {
    // kappa = -1/2: the real points +-2 and the imaginary pair +-i mu.
    let o = signflip(&["lattice", "--sigma-minus", "-0.5", "--window", "3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count() - 1, 4);
}

#[test]
fn solver_failure_exits_3_and_keeps_meta() {
    let dir = tempfile::tempdir().unwrap();
    let o = signflip(&[
        "spectrum", "--tol", "1e-30", "--n-radial", "4", "--n-angular-minus", "2", "--k", "3",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(read(dir.path(), "run.meta").contains("# status = failed"));
}

#[test]
fn one_point_sweep_matches_spectrum() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = signflip(&with_out(&["spectrum", "--delta", "0.4"], a.path().to_str().unwrap()));
    assert!(oa.status.success());
    let ob = signflip(&with_out(
        &["sweep", "--grid-points", "1", "--delta-max", "0.4"],
        b.path().to_str().unwrap(),
    ));
    assert!(ob.status.success());
    assert_eq!(read(a.path(), "spectrum.csv"), read(b.path(), "spectrum.csv"));
}

#[test]
fn reruns_are_byte_identical_and_thread_independent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let base = ["sweep", "--grid-points", "6", "--delta-min", "0.2", "--delta-max", "0.8"];
    let mut one = base.to_vec();
    one.extend(["--threads", "1"]);
    let mut two = base.to_vec();
    two.extend(["--threads", "2"]);
    assert!(signflip(&with_out(&one, a.path().to_str().unwrap())).status.success());
    assert!(signflip(&with_out(&two, b.path().to_str().unwrap())).status.success());
    for f in ["spectrum.csv", "spectrum_critical.dat", "first_positive.dat", "first_negative.dat"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn run_meta_round_trips_as_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = signflip(&with_out(
        &["sweep", "--grid-points", "3", "--delta-min", "0.3", "--delta-max", "0.6", "--k", "4"],
        a.path().to_str().unwrap(),
    ));
    assert!(o.status.success());
    let meta = a.path().join("run.meta");
    let o = signflip(&[
        "sweep",
        "--config",
        meta.to_str().unwrap(),
        "--out",
        b.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(a.path(), "spectrum.csv"), read(b.path(), "spectrum.csv"));
    let strip = |s: String| -> String {
        s.lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("out ="))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(read(a.path(), "run.meta")), strip(read(b.path(), "run.meta")));
}

#[test]
fn crossings_reports_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = signflip(&with_out(&["crossings", "--n-max", "3"], dir.path().to_str().unwrap()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path(), "crossings.csv");
    assert_eq!(csv.lines().count(), 4, "{csv}");
    for line in csv.lines().skip(1) {
        assert!(!line.contains("nan"), "{line}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    std::fs::write(&cfg, "sigma_minus = -0.5\n").unwrap();
    let from_file = stdout(&signflip(&["mu", "--config", cfg.to_str().unwrap()]));
    assert!(from_file.contains("kappa = -5.0"), "{from_file}");
    let flag = stdout(&signflip(&["mu", "--config", cfg.to_str().unwrap(), "--sigma-minus", "-0.25"]));
    assert!(flag.contains("kappa = -2.5"), "{flag}");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(signflip(&["mu", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}
