use gpushare_demo::{list_partitions_json, run_sweep_json, run_telemetry_json};
use serde_json::Value;

#[test]
fn sweep_returns_one_row_per_point() {
    let req = r#"{"device":"a100","regime":"mig","model":"resnet18","fixed_ims":60,"inferences_per_point":60}"#;
    let v: Value = serde_json::from_str(&run_sweep_json(req).unwrap()).unwrap();
    assert_eq!(v["fixed_ims"], 60);
    assert_eq!(v["rows"].as_array().unwrap().len(), 60);
}

#[test]
fn telemetry_of_saturated_nano_throttles() {
    let req = r#"{"device":"orin-nano","regime":"gc","model":"convnext-large","fixed_ims":18,"seed":3}"#;
    let v: Value = serde_json::from_str(&run_telemetry_json(req, 18).unwrap()).unwrap();
    assert!(!v["throttle_events"].as_array().unwrap().is_empty());
    assert!(v["samples"].as_array().unwrap().len() > 100);
}

#[test]
fn partitions_match_the_cli() {
    let v: Value = serde_json::from_str(&list_partitions_json("orin-nano", "gc").unwrap()).unwrap();
    let sizes: Vec<u64> = v.as_array().unwrap().iter().map(|o| o["size"].as_u64().unwrap()).collect();
    assert_eq!(sizes, [4, 6, 8]);
    assert_eq!(v[0]["max_concurrent"], 2);
    assert!(list_partitions_json("orin-nano", "mig").is_err());
    assert!(run_sweep_json(r#"{"device":"nope","regime":"mps","model":"resnet18"}"#).is_err());
    assert!(run_sweep_json(r#"{"device":"a100","regime":"mps","model":"resnet18","extra":1}"#).is_err());
}
