use std::fs;
use std::path::PathBuf;

use archflow_core::adl::{load_model, ArchitectureModel, Defect, LoadError, ModelError};
use archflow_core::model::LabelSet;
use archflow_core::oracle::random_small_document;
use proptest::prelude::*;

fn shop(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models/online-shop")
        .join(file)
}

const MINIMAL: &str = r#"{
  "dictionary": {"labelTypes": [{"name": "A", "values": ["x", "y"]}]},
  "signatures": [{"id": "op", "parameters": ["p"]}],
  "components": [{"id": "C", "provides": ["op"],
                  "seffs": [{"signature": "op", "actions": [
                    {"kind": "variable", "id": "touch", "assignments": ["p.A.x := TRUE"]}]}]}],
  "assembly": {"instances": [{"id": "c", "component": "C"}]},
  "deployment": {"containers": [{"id": "box"}], "allocation": {"c": "box"}},
  "usageScenarios": [{"id": "s", "actions": [
    {"kind": "variable", "id": "init", "assignments": ["v.A.y := TRUE"]},
    {"kind": "call", "id": "go", "instance": "c", "signature": "op", "bindings": {"p": "v"}}]}]
}"#;

fn labels(model: &ArchitectureModel, names: &[&str]) -> LabelSet {
    names
        .iter()
        .map(|n| model.dictionary().parse_label(n).unwrap())
        .collect()
}

#[test]
fn running_example_loads() {
    let m = load_model(shop("model.json")).unwrap();
    assert_eq!(m.components().len(), 2);
    assert_eq!(m.usage_scenarios().len(), 1);
    assert_eq!(m.dictionary().label_types().len(), 3);
    assert!(m.warnings().is_empty());
}

#[test]
fn minimal_model_loads() {
    let m = ArchitectureModel::from_json_str(MINIMAL).unwrap();
    assert_eq!(m.components().len(), 1);
    assert_eq!(m.signatures().len(), 1);
}

#[test]
fn missing_container_is_named() {
    let text = MINIMAL.replace(
        r#""allocation": {"c": "box"}"#,
        r#""allocation": {"c": "c9"}"#,
    );
    let err = ArchitectureModel::from_json_str(&text).unwrap_err();
    assert!(err
        .defects()
        .iter()
        .any(|d| matches!(d, Defect::UnknownReference { id, .. } if id == "c9")));
    assert!(err.to_string().contains("c9"));
}

#[test]
fn malformed_document_reports_position() {
    let err = ArchitectureModel::from_json_str(
        "{\n  \"dictionary\": {\"labelTypes\": []},\n  \"components\": [,]\n}",
    )
    .unwrap_err();
    match err {
        LoadError::Parse { line, column, .. } => {
            assert_eq!(line, 3);
            assert!(column >= 1);
        }
        other => panic!("expected parse error, got {other}"),
    }
}

#[test]
fn missing_file_names_the_path() {
    let err = load_model("/nonexistent/model.json").unwrap_err();
    assert!(matches!(err, LoadError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/model.json"));
}

#[test]
fn branches_and_loops_are_rejected() {
    for kind in ["branch", "loop"] {
        let text = MINIMAL.replace(
            r#"{"kind": "variable", "id": "touch", "assignments": ["p.A.x := TRUE"]}"#,
            &format!(r#"{{"kind": "{kind}", "id": "choice"}}"#),
        );
        let err = ArchitectureModel::from_json_str(&text).unwrap_err();
        assert!(
            err.defects()
                .iter()
                .any(|d| matches!(d, Defect::Invariant { element, .. } if element == "choice")),
            "{kind}: {err}"
        );
    }
}

#[test]
fn unknown_labels_and_ids_are_reported_together() {
    let text = MINIMAL
        .replace("p.A.x := TRUE", "p.B.x := TRUE")
        .replace(r#""component": "C""#, r#""component": "Nope""#);
    let err = ArchitectureModel::from_json_str(&text).unwrap_err();
    let all = err.to_string();
    assert!(all.contains("Nope"), "{all}");
    assert!(all.contains('B'), "{all}");
    assert!(err.defects().len() >= 2);
}

#[test]
fn binding_must_reference_defined_variable() {
    let text = MINIMAL.replace(
        r#""bindings": {"p": "v"}"#,
        r#""bindings": {"p": "undefined"}"#,
    );
    let err = ArchitectureModel::from_json_str(&text).unwrap_err();
    assert!(err.to_string().contains("undefined"), "{err}");
}

#[test]
fn result_variable_requires_a_return() {
    let text = MINIMAL.replace(
        r#""bindings": {"p": "v"}"#,
        r#""bindings": {"p": "v"}, "result": "r""#,
    );
    assert!(ArchitectureModel::from_json_str(&text).is_err());
}

#[test]
fn overlapping_targets_warn() {
    let text = MINIMAL.replace(r#""p.A.x := TRUE""#, r#""p.A.x := TRUE", "p.A.* := FALSE""#);
    let m = ArchitectureModel::from_json_str(&text).unwrap();
    assert_eq!(m.warnings().len(), 1, "{:?}", m.warnings());
}

#[test]
fn node_labels_union_component_and_container() {
    let m = load_model(shop("model.json")).unwrap();
    assert_eq!(
        m.node_labels_for_instance("db").unwrap(),
        &labels(&m, &["ServerLocation.nonEU"])
    );
    assert_eq!(
        m.node_labels_for_instance("db"),
        m.node_labels_for_instance("db")
    );
    assert_eq!(
        m.node_labels_for_instance("nobody"),
        Err(ModelError::UnknownInstance("nobody".into()))
    );

    let empty = ArchitectureModel::from_json_str(MINIMAL).unwrap();
    assert!(empty.node_labels_for_instance("c").unwrap().is_empty());

    let both = MINIMAL
        .replace(
            r#""provides": ["op"],"#,
            r#""provides": ["op"], "nodeLabels": ["A.x"],"#,
        )
        .replace(
            r#"{"id": "box"}"#,
            r#"{"id": "box", "nodeLabels": ["A.x"]}"#,
        );
    let m = ArchitectureModel::from_json_str(&both).unwrap();
    assert_eq!(
        m.node_labels_for_instance("c").unwrap(),
        &labels(&m, &["A.x"])
    );

    let split = MINIMAL
        .replace(
            r#""provides": ["op"],"#,
            r#""provides": ["op"], "nodeLabels": ["A.x"],"#,
        )
        .replace(
            r#"{"id": "box"}"#,
            r#"{"id": "box", "nodeLabels": ["A.y"]}"#,
        );
    let m = ArchitectureModel::from_json_str(&split).unwrap();
    assert_eq!(
        m.node_labels_for_instance("c").unwrap(),
        &labels(&m, &["A.x", "A.y"])
    );
}

#[test]
fn running_example_round_trips() {
    let m = load_model(shop("model.json")).unwrap();
    let again = ArchitectureModel::from_json_str(&m.to_json()).unwrap();
    assert_eq!(m, again);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.json");
    fs::write(&path, m.to_json()).unwrap();
    assert_eq!(load_model(&path).unwrap(), m);
}

proptest! {
    #[test]
    fn serialization_round_trips(seed in any::<u64>()) {
        let doc = random_small_document(seed);
        let m = ArchitectureModel::from_document(&doc).unwrap();
        let again = ArchitectureModel::from_json_str(&m.to_json()).unwrap();
        prop_assert_eq!(&m, &again);
        prop_assert_eq!(again.to_json(), m.to_json());
    }
}
