use serde_json::Value;
use stagewise_web::{bands_json, risk_curve_json, simulate_json};

#[test]
fn bands_export() {
    let v: Value = serde_json::from_str(&bands_json("1*x^0.5*log^0", 1.0, 100.0, None).unwrap()).unwrap();
    assert_eq!(v["kind"], "boundary");
    assert_eq!(v["m"], 1);
    let err = bands_json("1*x^2*log^0", 1.0, 100.0, None).unwrap_err();
    assert!(err.contains("no finite band"));
    assert!(bands_json("nonsense", 1.0, 100.0, None).is_err());
}

#[test]
fn simulate_export() {
    let spec = r#"{"family":"geometric","z":0.0,"mu":1.0}"#;
    let out = simulate_json(spec, 50.0, "1*x^0*log^0", 4000, 1).unwrap();
    assert_eq!(out, simulate_json(spec, 50.0, "1*x^0*log^0", 4000, 1).unwrap());
    let v: Value = serde_json::from_str(&out).unwrap();
    let m = v["mean_stages"].as_f64().unwrap();
    assert!((m - 2.0).abs() < 4.0 * v["se_stages"].as_f64().unwrap());
    assert!(simulate_json(r#"{"family":"geometric","z":0.0,"mu":-1.0}"#, 50.0, "1*x^0*log^0", 100, 1).is_err());
    assert!(simulate_json(spec, 50.0, "1*x^0*log^0", 1, 1).is_err());
}

#[test]
fn risk_curve_export() {
    let v: Value = serde_json::from_str(&risk_curve_json(5.0, 6, 300, 0).unwrap()).unwrap();
    assert_eq!(v["m_star"], "8");
    let curve = v["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 6);
    assert_eq!(curve[0]["k"], 1);
    // k = 1 samples one observation per stage
    assert_eq!(curve[0]["en"], curve[0]["em"]);
    assert!(risk_curve_json(5.0, 0, 300, 0).is_err());
}
