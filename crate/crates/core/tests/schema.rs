use std::path::Path;

use adaptive_rmst::inference::{analyze, AnalysisConfig, Method};
use adaptive_rmst::sim::{generate_trial, run_study, StudyConfig, StudyMethod};
use adaptive_rmst::truth::ScenarioSpec;
use serde_json::Value;

fn validator(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&doc).unwrap()
}

fn errors(v: &jsonschema::Validator, doc: &Value) -> Vec<String> {
    v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path())).collect()
}

fn result_doc(method: Method) -> Value {
    let ds = generate_trial(&ScenarioSpec::named("ph").unwrap(), 300, 1).unwrap();
    let mut cfg = AnalysisConfig::new(method, 3);
    cfg.bootstrap_resamples = 100;
    serde_json::from_str(&analyze(&ds, &cfg).unwrap().to_json()).unwrap()
}

#[test]
fn analysis_results_validate() {
    let v = validator("result.json");
    for method in [Method::Ct, Method::Dt, Method::Hulc] {
        let doc = result_doc(method);
        assert_eq!(errors(&v, &doc), Vec::<String>::new(), "{method}");
    }
    let mut conservative = AnalysisConfig::new(Method::Hulc, 3);
    conservative.anti_conservative = false;
    let ds = generate_trial(&ScenarioSpec::named("ph").unwrap(), 300, 1).unwrap();
    let doc: Value = serde_json::from_str(&analyze(&ds, &conservative).unwrap().to_json()).unwrap();
    assert!(errors(&v, &doc).is_empty());
    assert_eq!(doc["ci_method"], "hulc");
}

#[test]
fn result_schema_rejects_malformed_documents() {
    let v = validator("result.json");
    let good = result_doc(Method::Dt);
    let mut missing = good.clone();
    missing.as_object_mut().unwrap().remove("L_hat");
    let mut extra = good.clone();
    extra["surprise"] = Value::from(1);
    let mut wrong_enum = good.clone();
    wrong_enum["ci_method"] = Value::from("profile");
    let mut wrong_type = good;
    wrong_type["reject"] = Value::from("yes");
    for bad in [missing, extra, wrong_enum, wrong_type] {
        assert!(!errors(&v, &bad).is_empty(), "{bad}");
    }
}

#[test]
fn simulation_report_validates() {
    let mut cfg = StudyConfig::new(vec!["null".into(), "tran".into()], vec![600], StudyMethod::ALL.to_vec(), 5);
    cfg.reps = 4;
    cfg.bootstrap_resamples = 100;
    cfg.timing = true;
    let report = run_study(&cfg).unwrap();
    let doc: Value = serde_json::from_str(&report.to_json()).unwrap();
    let v = validator("report.json");
    assert_eq!(errors(&v, &doc), Vec::<String>::new());
    assert_eq!(doc["cells"].as_array().unwrap().len(), 2 * StudyMethod::ALL.len());

    let mut broken = doc.clone();
    broken["cells"][0]["method"] = Value::from("bonferroni");
    assert!(!errors(&v, &broken).is_empty());
}
