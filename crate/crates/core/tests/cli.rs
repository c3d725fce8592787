use std::process::{Command, Output};

fn levy_libor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levy-libor")).args(args).output().expect("binary runs")
}

#[test]
fn validate_accepts_bundled_setup() {
    let out = levy_libor(&["validate"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("LR1.vol_sum,pass"));
    assert!(text.contains("overall,pass"));
}

#[test]
fn validate_rejects_excessive_vols_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loud.toml");
    std::fs::write(
        &path,
        r#"
        tenor_dates = [0.0, 0.5, 1.0, 1.5]
        bond_prices = [0.98, 0.96, 0.94]
        vols = [0.9, 0.9]
        nig = { alpha = 1.5, beta = 0.0, delta_bar = 1.5, mu = 0.0 }
        em = { M = 1.5, epsilon = 0.01 }
        "#,
    )
    .unwrap();
    let out = levy_libor(&["--setup", path.to_str().unwrap(), "validate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("LR1.vol_sum,FAIL"));
}

#[test]
fn compare_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = levy_libor(&["compare", "--paths", "10", "--seed", "1", "--out", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(path).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(levy_libor::pricing::CSV_HEADER));
    // 9 maturities x 7 strikes x 3 schemes.
    assert_eq!(text.lines().count(), 1 + 9 * 7 * 3);
}

#[test]
fn compare_thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let path = dir.path().join(format!("t{threads}.csv"));
        let out = levy_libor(&[
            "compare", "--paths", "3000", "--seed", "4", "--threads", threads, "--product", "swaptions",
            "--multipliers", "0.8,1.2", "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn zero_strike_caplet_is_the_discounted_forward() {
    let out = levy_libor(&["price-caplets", "--scheme", "full", "--strike", "0", "--rate", "9", "--paths", "50000"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let (price, se): (f64, f64) = (row[5].parse().unwrap(), row[6].parse().unwrap());
    let setup = levy_libor::setup_file::eur_feb2002_setup();
    let forward = 0.5 * setup.curve.terminal_bond() * setup.initial_libor().unwrap()[8];
    assert!((price - forward).abs() <= 3.0 * se, "{price} vs {forward} (se {se})");
}

#[test]
fn surface_file_has_a_block_per_maturity() {
    let dir = tempfile::tempdir().unwrap();
    let surface = dir.path().join("iv.dat");
    let out = levy_libor(&[
        "compare", "--paths", "2000", "--multipliers", "0.9,1.1", "--surface", surface.to_str().unwrap(),
        "--out", dir.path().join("c.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&surface).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).collect();
    assert_eq!(data.len(), 2 * 9 * 2);
}

#[test]
fn bad_arguments_exit_nonzero() {
    for args in [
        &["price-caplets", "--rate", "10", "--paths", "5"][..],
        &["price-caplets", "--paths", "0"],
        &["compare", "--scheme", "sideways"],
        &["--setup", "/no/such/file.toml", "validate"],
        &["price-swaptions", "--expiries", "4.5", "--paths", "5"],
    ] {
        let out = levy_libor(args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty());
    }
}
