use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chase-escape"));
    cmd.env_remove("CHASE_ESCAPE_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn records(out: &Output) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let header = rdr.headers().unwrap().clone();
    let rows = rdr.records().map(|r| r.unwrap()).collect();
    (header, rows)
}

fn column(header: &csv::StringRecord, name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

#[test]
fn simulate_rows_conserve_population() {
    for sampler in ["jump", "clocks", "poisson"] {
        let out = run(&["simulate", "--lambda", "1.3", "--n", "40", "--replicas", "200", "--seed", "9", "--sampler", sampler]);
        assert!(out.status.success(), "{sampler}: {}", String::from_utf8_lossy(&out.stderr));
        let (h, rows) = records(&out);
        assert_eq!(rows.len(), 200);
        let (s, i, r, cause) = (column(&h, "final_s"), column(&h, "final_i"), column(&h, "final_r"), column(&h, "cause"));
        for row in &rows {
            let total: u64 = [s, i, r].iter().map(|&c| row[c].parse::<u64>().unwrap()).sum();
            assert_eq!(total, 42);
            let absorbed = row[s] == *"0" || row[i] == *"0";
            assert!(absorbed);
            assert!(row[cause] == *"SusceptibleExtinct" || row[cause] == *"InfectedExtinct");
        }
    }
}

#[test]
fn simulate_is_deterministic_given_seed() {
    let args = ["simulate", "--lambda", "0.8", "--n", "300", "--replicas", "2500", "--seed", "77", "--sampler", "clocks"];
    let a = run(&args);
    let b = bin().args(args).args(["--workers", "3"]).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn jump_chain_rows_have_no_time() {
    let out = run(&["simulate", "--lambda", "1", "--n", "10", "--replicas", "5", "--seed", "1"]);
    let (h, rows) = records(&out);
    let t = column(&h, "time");
    assert!(rows.iter().all(|r| r[t].is_empty()));
}

#[test]
fn poisson_sampler_infected_extinction_shape() {
    let n = 25u64;
    let out = run(&["simulate", "--lambda", "0.7", "--n", "25", "--replicas", "500", "--seed", "3", "--sampler", "poisson"]);
    let (h, rows) = records(&out);
    let (s, i, r, cause) = (column(&h, "final_s"), column(&h, "final_i"), column(&h, "final_r"), column(&h, "cause"));
    for row in rows.iter().filter(|row| row[cause] == *"InfectedExtinct") {
        let fs: u64 = row[s].parse().unwrap();
        assert_eq!(row[i].parse::<u64>().unwrap(), 0);
        assert_eq!(row[r].parse::<u64>().unwrap(), n + 2 - fs);
    }
}

#[test]
fn simulate_json_has_rows_and_summary() {
    let out = run(&["simulate", "--lambda", "2", "--n", "15", "--replicas", "50", "--seed", "4", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 50);
    assert_eq!(v["summary"]["replicas"], 50);
    let ext = v["summary"]["susceptible_extinct"].as_u64().unwrap() + v["summary"]["infected_extinct"].as_u64().unwrap();
    assert_eq!(ext, 50);
}

#[test]
fn missing_seed_is_reported_on_stderr() {
    let out = run(&["simulate", "--lambda", "1", "--n", "3", "--replicas", "1"]);
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    let seed = err.lines().find_map(|l| l.strip_prefix("seed: ")).expect("seed line");
    let replay = run(&["simulate", "--lambda", "1", "--n", "3", "--replicas", "1", "--seed", seed]);
    assert_eq!(out.stdout, replay.stdout);
}

#[test]
fn exact_small_case() {
    let out = run(&["exact", "--lambda", "1", "--n", "2"]);
    assert!(out.status.success());
    let (h, rows) = records(&out);
    let (kind, p) = (column(&h, "kind"), column(&h, "probability"));
    let last = rows.last().unwrap();
    assert_eq!(&last[kind], "extinction_probability");
    let ext: f64 = last[p].parse().unwrap();
    assert!((ext - 4.0 / 9.0).abs() < 1e-12);
    let mass: f64 = rows.iter().filter(|r| r[kind] == *"state").map(|r| r[p].parse::<f64>().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn exact_first_jump_recovery_mass() {
    let (lambda, n) = (1.7, 50u64);
    let out = run(&["exact", "--lambda", "1.7", "--n", "50"]);
    let (h, rows) = records(&out);
    let (s, i, r, p) = (column(&h, "s"), column(&h, "i"), column(&h, "r"), column(&h, "probability"));
    let row = rows.iter().find(|row| row[s] == *"50" && row[i] == *"0" && row[r] == *"2").unwrap();
    let value: f64 = row[p].parse().unwrap();
    assert!((value - 1.0 / (lambda * n as f64 + 1.0)).abs() < 1e-12);
}

#[test]
fn exact_cap_violation_exits_2() {
    let out = run(&["exact", "--lambda", "1", "--n", "20001"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

fn limit_value(args: &[&str]) -> f64 {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = records(&out);
    assert_eq!(rows.len(), 1);
    rows[0][column(&h, "value")].parse().unwrap()
}

#[test]
fn limits_examples() {
    let cdf = limit_value(&["limits", "--law", "powered-exp", "--lambda", "0.5", "--op", "cdf", "--at", "1"]);
    assert!((cdf - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    let q = limit_value(&["limits", "--law", "powered-exp", "--lambda", "0.5", "--op", "quantile", "--at", "0.5"]);
    assert!((q - 2f64.ln().sqrt()).abs() < 1e-12);
    let g = limit_value(&["limits", "--law", "geometric", "--op", "pdf", "--at", "0"]);
    assert!((g - 0.5).abs() < 1e-15);
    let ci = limit_value(&["limits", "--law", "critical-i", "--op", "cdf", "--at", "0.5"]);
    assert!((ci - 2.0 / 3.0).abs() < 1e-12);
    let cr = limit_value(&["limits", "--law", "critical-r", "--op", "cdf", "--at", "0.5"]);
    assert!((cr - 1.0 / 3.0).abs() < 1e-12);
    // First moment of the compound law at rate 2 is Gamma(1/2) = sqrt(pi).
    let m = limit_value(&["limits", "--law", "compound", "--lambda", "2", "--op", "moment", "--s", "1"]);
    assert!((m - std::f64::consts::PI.sqrt()).abs() < 1e-9);
}

#[test]
fn limits_unsupported_pair_exits_2() {
    let out = run(&["limits", "--law", "geometric", "--op", "moment", "--s", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["limits", "--law", "compound", "--op", "cdf", "--at", "1"]);
    assert_eq!(out.status.code(), Some(2), "lambda is required");
}

#[test]
fn invalid_flags_exit_2() {
    for args in [
        vec!["simulate", "--lambda", "0", "--n", "5", "--replicas", "1", "--seed", "1"],
        vec!["simulate", "--lambda", "-1", "--n", "5", "--replicas", "1", "--seed", "1"],
        vec!["simulate", "--lambda", "1", "--n", "5", "--replicas", "1", "--sampler", "bogus"],
        vec!["limits", "--law", "powered-exp", "--lambda", "1", "--op", "quantile", "--at", "1.5"],
        vec!["simulate", "--lambda", "1", "--n", "5", "--replicas", "1", "--workers", "0"],
        vec!["frobnicate"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn thread_count_falls_back_to_environment() {
    let args = ["simulate", "--lambda", "1", "--n", "5", "--replicas", "1", "--seed", "1"];
    let bad = bin().args(args).env("CHASE_ESCAPE_THREADS", "0").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let good = bin().args(args).env("CHASE_ESCAPE_THREADS", "2").output().unwrap();
    assert!(good.status.success());
}

#[test]
fn sweep_reports_asymptotes() {
    let out = run(&["sweep", "--lambda-list", "1,0.5", "--n-list", "20,40", "--replicas", "200", "--seed", "8", "--race-draws", "200"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = records(&out);
    assert_eq!(rows.len(), 4);
    let (l, n, er, race, status) = (
        column(&h, "lambda"),
        column(&h, "n"),
        column(&h, "asymptote_E_R"),
        column(&h, "race_frequency"),
        column(&h, "status"),
    );
    for row in &rows {
        assert_eq!(&row[status], "ok");
        let freq: f64 = row[race].parse().unwrap();
        assert!((0.0..=1.0).contains(&freq));
        let n: f64 = row[n].parse().unwrap();
        if row[l] == *"1" {
            let value: f64 = row[er].parse().unwrap();
            assert!((value - 2f64.ln() * n).abs() < 1e-9);
        } else {
            assert!(row[er].is_empty(), "undefined for lambda < 1");
        }
    }
}

#[test]
fn csv_round_trips_through_a_file() {
    let dir = std::env::temp_dir().join(format!("chase-escape-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("exact.csv");
    let out = run(&["exact", "--lambda", "0.9", "--n", "12", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(&header).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        // Every float must parse back and print identically.
        let p: f64 = rec[4].parse().unwrap();
        assert_eq!(p.to_string(), &rec[4]);
        w.write_record(&rec).unwrap();
    }
    assert_eq!(String::from_utf8(w.into_inner().unwrap()).unwrap(), text);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_quick_passes() {
    let out = run(&["verify", "--level", "quick", "--seed", "20240601", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let checks = v["rows"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["status"] == "pass"));
}
