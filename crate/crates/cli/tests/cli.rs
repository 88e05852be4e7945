use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stagewise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const MC_HEADER: &str = "sampler,mu,a,h_spec,reps,seed,mean_excess_time,se_excess_time,mean_stages,se_stages,risk,se_risk,mean_overshoot";
const SEQ_HEADER: &str = "procedure,d_over_c,d,k_or_mstar,truth,reps,EN,se_EN,EM,se_EM,err_rate,r,se_r";

#[test]
fn simulate_is_byte_identical_across_runs_and_workers() {
    let base = ["simulate", "--sampler", "geometric", "--z", "0", "--a", "100", "--reps", "1e4", "--seed", "7"];
    let first = run(&base);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let again = run(&base);
    assert_eq!(first.stdout, again.stdout);
    for workers in ["1", "8"] {
        let mut args = base.to_vec();
        args.extend(["--workers", workers]);
        assert_eq!(run(&args).stdout, first.stdout, "workers = {workers}");
    }
    let text = stdout(&first);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(MC_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "geometric(z=0)");
    assert_eq!(row[4], "10000");
    // E M = 1/Phi(0) = 2
    let m: f64 = row[8].parse().unwrap();
    let se: f64 = row[9].parse().unwrap();
    assert!((m - 2.0).abs() < 4.0 * se);
}

#[test]
fn one_row_per_boundary() {
    let o = run(&["simulate", "--sampler", "fixed_group", "--group", "5", "--a", "10,20,40", "--reps", "200"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 4);
}

#[test]
fn no_finite_band_is_a_configuration_error() {
    let o = run(&["simulate", "--sampler", "interior", "--h", "1*x^1.2*log^0", "--a", "100"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("no finite band"), "{err}");
    assert!(err.contains("--h"));
    assert!(o.stdout.is_empty());
}

#[test]
fn band_mismatch_and_bad_fields_name_the_field() {
    let o = run(&["simulate", "--sampler", "interior", "--h", "1*x^0.3*log^0", "--m", "3", "--a", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--m"));
    let o = run(&["simulate", "--sampler", "interior", "--h", "x^0.3", "--a", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--h"));
    let o = run(&["simulate", "--sampler", "geometric", "--a", "100,10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--a"));
}

#[test]
fn boundary_sampler_reports_solved_z_star() {
    let o = run(&["simulate", "--sampler", "boundary", "--h", "5*x^0.5*log^0", "--a", "100", "--reps", "100"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let label = text.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    let z: f64 = label
        .strip_prefix("boundary(m=1;z=")
        .and_then(|s| s.strip_suffix(')'))
        .unwrap()
        .parse()
        .unwrap();
    // hazard(z*) = kappa_1 / 5 = 0.2 with kappa_1 = 1 at mu = 1
    let oracle = -1.2643271552836761;
    assert!((z - oracle).abs() < 1e-10, "{z}");
}

#[test]
fn bands_json() {
    let o = run(&["bands", "--h", "1*x^0.5*log^0", "--a", "100"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["m"], 1);
    assert_eq!(v["kind"], "boundary");
    assert_eq!(v["Q"], 1.0);

    let v: serde_json::Value =
        serde_json::from_slice(&run(&["bands", "--h", "1*x^0.3*log^0", "--a", "100"]).stdout).unwrap();
    assert_eq!(v["m"], 2);
    assert_eq!(v["kind"], "interior");
    assert!(v.get("Q").is_none());

    let v: serde_json::Value =
        serde_json::from_slice(&run(&["bands", "--h", "5*x^0.5*log^0", "--mu", "1", "--a", "1e4"]).stdout).unwrap();
    let z = v["z_star"].as_f64().unwrap();
    let hazard = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() / (0.5 * erfc_series(z / 2f64.sqrt()));
    assert!((hazard - 0.2).abs() < 1e-9, "{hazard}");

    let o = run(&["bands", "--h", "1*x^0*log^0", "--a", "100"]);
    assert_eq!(o.status.code(), Some(2));
}

// Maclaurin series, fine for |x| < 3
fn erfc_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = x;
    let mut n = 0.0;
    while term.abs() > 1e-18 {
        sum += term / (2.0 * n + 1.0);
        n += 1.0;
        term *= -x * x / n;
    }
    1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
}

#[test]
fn config_file_with_flag_override() {
    let dir = std::env::temp_dir().join(format!("stagewise-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cfg.json");
    std::fs::write(&path, r#"{"sampler":"geometric","z":1.0,"a":[50],"reps":"1e3","seed":3}"#).unwrap();
    let p = path.to_str().unwrap();
    let from_file = run(&["simulate", "--config", p]);
    assert!(from_file.status.success());
    let explicit = run(&["simulate", "--sampler", "geometric", "--z", "1", "--a", "50", "--reps", "1000", "--seed", "3"]);
    assert_eq!(from_file.stdout, explicit.stdout);
    let overridden = run(&["simulate", "--config", p, "--seed", "4"]);
    assert!(stdout(&overridden).contains(",1000,4,"));

    std::fs::write(&path, r#"{"sampler":"geometric","a":[50],"colour":"red"}"#).unwrap();
    let bad = run(&["simulate", "--config", p]);
    assert_eq!(bad.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn json_mirrors_csv() {
    let args = ["simulate", "--sampler", "geometric", "--a", "30", "--reps", "500"];
    let csv = stdout(&run(&args));
    let mut with_json = args.to_vec();
    with_json.extend(["--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&run(&with_json).stdout).unwrap();
    let obj = v[0].as_object().unwrap();
    let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    let mut header: Vec<&str> = MC_HEADER.split(',').collect();
    header.sort();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(sorted, header);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(obj["mean_stages"].as_f64().unwrap(), row[8].parse::<f64>().unwrap());
}

#[test]
fn table1_small_run() {
    let args = ["table1", "--reps", "400", "--k-max", "12", "--d-over-c", "5", "--seed", "2"];
    let a = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let mut w8 = args.to_vec();
    w8.extend(["--workers", "8"]);
    assert_eq!(run(&w8).stdout, a.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().next(), Some(SEQ_HEADER));
    // four procedures, two truths each
    assert_eq!(text.lines().count(), 9);
    assert!(text.lines().nth(1).unwrap().starts_with("delta,5.0,0.001,8,0,400,"));

    let mut t = args.to_vec();
    t.extend(["--format", "text"]);
    let table = stdout(&run(&t));
    let delta = table.lines().find(|l| l.starts_with("delta ")).unwrap();
    assert!(delta.trim_end().ends_with("100.0"));
}

#[test]
fn bad_arguments_exit_2() {
    assert_eq!(run(&["simulate"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--sampler", "geometric", "--a", "10", "--reps", "1"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}
