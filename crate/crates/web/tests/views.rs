use serde_json::Value;
use warpcert_web::{profile_json, spectrum_json, sphere_index_json};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn default_profile_passes() {
    let v = parse(profile_json(2.2, 0.9, 0.01));
    assert_eq!(v["verdict"], "pass");
    let n = v["t"].as_array().unwrap().len();
    assert!(n > 100);
    for key in ["f", "h", "ric_tt", "ric_circle", "ric_sphere"] {
        assert_eq!(v[key].as_array().unwrap().len(), n, "{key}");
    }
    assert!(v["r1_realized"].as_f64().unwrap() > 0.0);
}

#[test]
fn window_violation_reports_an_error() {
    let v = parse(profile_json(2.0, 0.9, 0.01));
    assert_eq!(v["verdict"], "fail");
    assert!(v["error"].as_str().unwrap().starts_with("validate"));
    assert!(v["t"].as_array().unwrap().is_empty());
}

#[test]
fn neck_spectrum_has_index_one_at_small_eps() {
    let v = parse(spectrum_json(2.2, 0.9, 0.01, 0.1, 600));
    assert_eq!(v["morse_index"], 1);
    let w = v["window"].as_array().unwrap();
    assert!(w[0].as_f64().unwrap() <= 0.1 && w[1].as_f64().unwrap() > 0.1);
}

#[test]
fn sphere_index_counts_multiplicities() {
    let v = parse(sphere_index_json(3, 2.9));
    assert_eq!(v["morse_index"], 1);
    let v = parse(sphere_index_json(3, 3.5));
    assert_eq!(v["morse_index"], 5);
    assert!(parse(sphere_index_json(3, 3.0))["error"].is_string());
}
