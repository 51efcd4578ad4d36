use std::path::Path;
use std::process::{Command, Output};

use csm_ieom::cli::csvio::{load_series, parse_series, write_series, HEADER, HEADER_STDERR};
use csm_ieom::reference::s_frozen;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_csm-ieom"));
    c.env("RUST_LOG", "warn");
    c
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn frozen_curve_to_stdout() {
    let out = run_ok(&["frozen", "--t-max", "20", "--dt", "0.1", "--stride", "5"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let s = parse_series(&text).unwrap();
    assert_eq!(s.len(), 41);
    for (t, v) in s.times.iter().zip(&s.values) {
        assert_eq!(v.re, s_frozen(*t, 1.0));
        assert_eq!(v.im, 0.0);
    }
    assert_eq!(s.meta("engine"), Some("frozen"));
    assert_eq!(s.meta("t_max"), Some("20.0"));
}

#[test]
fn every_engine_writes_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str], &str); 4] = [
        ("frozen", &["--t-max", "2"], HEADER),
        (
            "ieom",
            &["--gamma", "0.1", "--n-bath", "inf", "--n-max", "5,2", "--t-max", "1"],
            HEADER,
        ),
        (
            "classical",
            &["--gamma", "0.2", "--n-bath", "6", "--samples", "64", "--t-max", "1"],
            HEADER_STDERR,
        ),
        (
            "exact",
            &["--gamma", "0.2", "--n-bath", "4", "--t-max", "1"],
            HEADER_STDERR,
        ),
    ];
    for (engine, extra, header) in cases {
        let path = dir.path().join(format!("{engine}.csv"));
        let mut args = vec![engine, "--out", path_str(&path)];
        args.extend_from_slice(extra);
        run_ok(&args);
        let text = std::fs::read_to_string(&path).unwrap();
        let first_data = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(first_data, header, "{engine}");
        let s = load_series(&path).unwrap();
        assert!((s.values[0].re - 0.25).abs() < 1e-12, "{engine}: S(0) = {}", s.values[0]);
        assert_eq!(s.meta("engine"), Some(engine));
        for key in [
            "dt",
            "t_max",
            "stride",
            "h",
            "z_nuclear",
            "enable_nuclear_zeeman",
            "representation",
            "samples",
            "seed",
        ] {
            assert!(s.meta(key).is_some(), "{engine}: missing {key}");
        }
        if engine != "frozen" {
            for key in ["gamma", "n_bath", "coefficients"] {
                assert!(s.meta(key).is_some(), "{engine}: missing {key}");
            }
        }
    }
}

#[test]
fn written_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    run_ok(&[
        "classical",
        "--gamma",
        "1/18",
        "--n-bath",
        "18",
        "--samples",
        "100",
        "--t-max",
        "3",
        "--out",
        path_str(&path),
    ]);
    let original = std::fs::read_to_string(&path).unwrap();
    let s = parse_series(&original).unwrap();
    let mut again = Vec::new();
    write_series(&mut again, &s).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), original);
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# zero-field run\ngamma = 0.1\nn_bath = inf\nn_max = 4,2\nt_max = 5\ndt = 0.05\n",
    )
    .unwrap();
    let out = run_ok(&[
        "ieom",
        "--config",
        path_str(&cfg),
        "--t-max",
        "1",
        "--set",
        "stride=2",
    ]);
    let s = parse_series(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(s.meta("t_max"), Some("1.0"));
    assert_eq!(s.meta("stride"), Some("2"));
    assert_eq!(s.meta("n_max"), Some("4,2"));
    assert_eq!(s.meta("coefficients"), Some("analytic"));
    assert_eq!(s.len(), 11);
}

#[test]
fn invalid_configuration_names_the_field() {
    let msg = run_err(&["ieom", "--n-bath", "inf", "--n-max", "4,2"]);
    assert!(msg.contains("gamma"), "{msg}");
    let msg = run_err(&["ieom", "--gamma", "0.1", "--n-bath", "inf", "--n-max", "4,x"]);
    assert!(msg.contains("n_max"), "{msg}");
    let msg = run_err(&["classical", "--gamma", "0.1", "--n-bath", "inf"]);
    assert!(msg.contains("n_bath"), "{msg}");
    let msg = run_err(&["frozen", "--dt=-1"]);
    assert!(msg.contains("dt"), "{msg}");
    let msg = run_err(&["frozen", "--set", "colour=blue"]);
    assert!(msg.contains("colour"), "{msg}");
}

#[test]
fn capacity_errors_come_first() {
    let start = std::time::Instant::now();
    let msg = run_err(&[
        "ieom", "--gamma", "1/18", "--n-bath", "18", "--n-max", "181,8,1",
    ]);
    assert!(msg.contains("capacity"), "{msg}");
    let msg = run_err(&["exact", "--gamma", "1/36", "--n-bath", "36"]);
    assert!(msg.contains("capacity"), "{msg}");
    assert!(start.elapsed().as_secs() < 30);
}

#[test]
fn compare_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    run_ok(&["frozen", "--t-max", "10", "--out", path_str(&a)]);
    let out = run_ok(&["compare", path_str(&a), path_str(&a), "--t-max", "8"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("max_abs_diff=0.0000000000e0"), "{text}");
    assert!(text.contains("rms=0.0000000000e0"), "{text}");
    let dip_line = text.lines().find(|l| l.starts_with("dip_a=")).unwrap();
    let t: f64 = dip_line[6..].split(',').next().unwrap().parse().unwrap();
    assert!((t - 12f64.sqrt()).abs() < 1e-3, "{dip_line}");
}

#[test]
fn compare_rejects_disjoint_windows() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    run_ok(&["frozen", "--t-max", "2", "--out", path_str(&a)]);
    run_err(&["compare", path_str(&a), path_str(&a), "--t-min", "5", "--t-max", "9"]);
}

#[test]
fn coefficient_table() {
    let out = run_ok(&["coeffs", "--gamma", "1/18", "--n-bath", "18", "--n-tr", "4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "j,alpha,beta,epsilon,q1");
    assert_eq!(rows.len(), 5);
    let q: f64 = (1..5)
        .map(|k| rows[k].split(',').nth(4).unwrap().parse::<f64>().unwrap().powi(2))
        .sum();
    assert!((q - 1.0).abs() < 1e-12);
    let last_beta: f64 = rows[4].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(last_beta, 0.0);
}

#[test]
fn basis_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("basis.bin");
    let args = |out: &str| {
        vec![
            "ieom".to_string(),
            "--gamma".into(),
            "0.1".into(),
            "--n-bath".into(),
            "30".into(),
            "--n-max".into(),
            "6,3".into(),
            "--basis".into(),
            "reachable".into(),
            "--basis-cache".into(),
            path_str(&cache).into(),
            "--t-max".into(),
            "1".into(),
            "--out".into(),
            out.into(),
        ]
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run_ok(&args(path_str(&a)).iter().map(String::as_str).collect::<Vec<_>>());
    assert!(cache.exists());
    run_ok(&args(path_str(&b)).iter().map(String::as_str).collect::<Vec<_>>());
    let (sa, sb) = (load_series(&a).unwrap(), load_series(&b).unwrap());
    assert_eq!(sa.values, sb.values);
    assert_eq!(sa.meta("basis_states"), sb.meta("basis_states"));

    let mut other = args(path_str(&b));
    other[6] = "7,3".into();
    let msg = run_err(&other.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(msg.contains("basis_cache"), "{msg}");

    // a field adds terms, so the zero-field reachable set is not closed
    let mut field = args(path_str(&b));
    field.extend(["--h".into(), "0.5,0,0".into()]);
    let msg = run_err(&field.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(msg.contains("closed"), "{msg}");
}
