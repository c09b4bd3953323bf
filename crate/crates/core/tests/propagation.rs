use std::path::PathBuf;

use archflow_core::adl::{load_model, ArchitectureModel, Assignment};
use archflow_core::extraction::{find_all_sequences, ActionSequence};
use archflow_core::model::{DataDictionary, LabelSet, LabelType};
use archflow_core::oracle::{oracle_propagate, random_small_model};
use archflow_core::propagation::{evaluate_all, evaluate_assignments, propagate, Scope};
use proptest::prelude::*;

fn shop(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models/online-shop")
        .join(file)
}

fn dict() -> DataDictionary {
    DataDictionary::new(vec![
        LabelType::new("DataSensitivity", ["Personal"]),
        LabelType::new("Encryption", ["Encrypted"]),
        LabelType::new("T", ["x", "y"]),
    ])
}

fn set(d: &DataDictionary, labels: &[&str]) -> LabelSet {
    labels.iter().map(|l| d.parse_label(l).unwrap()).collect()
}

fn scope(d: &DataDictionary, vars: &[(&str, &[&str])]) -> Scope {
    vars.iter()
        .map(|(n, l)| (n.to_string(), set(d, l)))
        .collect()
}

fn assign(d: &DataDictionary, texts: &[&str]) -> Vec<Assignment> {
    texts
        .iter()
        .map(|t| Assignment::parse(t, d).unwrap())
        .collect()
}

#[test]
fn forwarding_copies_all_labels() {
    let d = dict();
    let out = evaluate_assignments(
        &d,
        &assign(&d, &["out.*.* := in.*.*"]),
        &scope(&d, &[("in", &["DataSensitivity.Personal"])]),
    )
    .unwrap();
    assert_eq!(
        out,
        scope(
            &d,
            &[
                ("in", &["DataSensitivity.Personal"]),
                ("out", &["DataSensitivity.Personal"])
            ]
        )
    );
}

#[test]
fn encryption_adds_a_label() {
    let d = dict();
    let out = evaluate_assignments(
        &d,
        &assign(&d, &["d.Encryption.Encrypted := TRUE"]),
        &scope(&d, &[("d", &["DataSensitivity.Personal"])]),
    )
    .unwrap();
    assert_eq!(
        out,
        scope(
            &d,
            &[("d", &["DataSensitivity.Personal", "Encryption.Encrypted"])]
        )
    );
}

#[test]
fn and_not_truth_table() {
    let d = dict();
    let a = assign(&d, &["a.T.x := b.T.x & !c.T.y"]);
    for b_has in [false, true] {
        for c_has in [false, true] {
            let mut s = Scope::new();
            s.insert(
                "b".into(),
                if b_has {
                    set(&d, &["T.x"])
                } else {
                    LabelSet::new()
                },
            );
            s.insert(
                "c".into(),
                if c_has {
                    set(&d, &["T.y"])
                } else {
                    LabelSet::new()
                },
            );
            let out = evaluate_assignments(&d, &a, &s).unwrap();
            let expected = b_has && !c_has;
            assert_eq!(out["a"].has("T", "x"), expected, "b={b_has} c={c_has}");
            assert_eq!(out["b"], s["b"]);
            assert_eq!(out["c"], s["c"]);
        }
    }
}

#[test]
fn false_removes_and_absent_variables_read_false() {
    let d = dict();
    let s = scope(&d, &[("v", &["T.x", "T.y"])]);
    let out = evaluate_assignments(
        &d,
        &assign(&d, &["v.T.x := ghost.T.x", "w.T.y := !ghost.T.y"]),
        &s,
    )
    .unwrap();
    assert_eq!(out, scope(&d, &[("v", &["T.y"]), ("w", &["T.y"])]));
}

#[test]
fn assignments_read_the_pre_state() {
    let d = dict();
    let s = scope(&d, &[("a", &["T.x"]), ("b", &[])]);
    let out =
        evaluate_assignments(&d, &assign(&d, &["a.T.x := b.T.x", "b.T.x := a.T.x"]), &s).unwrap();
    assert_eq!(out, scope(&d, &[("a", &[]), ("b", &["T.x"])]));
}

#[test]
fn last_writer_wins() {
    let d = dict();
    let out = evaluate_assignments(
        &d,
        &assign(&d, &["a.T.x := TRUE", "a.T.* := FALSE"]),
        &Scope::new(),
    )
    .unwrap();
    assert!(out["a"].is_empty());
    let out = evaluate_assignments(
        &d,
        &assign(&d, &["a.T.* := FALSE", "a.T.x := TRUE"]),
        &Scope::new(),
    )
    .unwrap();
    assert_eq!(out["a"], set(&d, &["T.x"]));
}

#[test]
fn typed_wildcard_only_touches_its_type() {
    let d = dict();
    let s = scope(
        &d,
        &[("a", &["T.x", "DataSensitivity.Personal"]), ("b", &["T.y"])],
    );
    let out = evaluate_assignments(&d, &assign(&d, &["a.T.* := b.T.*"]), &s).unwrap();
    assert_eq!(out["a"], set(&d, &["T.y", "DataSensitivity.Personal"]));
}

#[test]
fn negated_wildcard_ranges_over_the_dictionary() {
    let d = dict();
    let s = scope(&d, &[("b", &["T.y"])]);
    let out = evaluate_assignments(&d, &assign(&d, &["a.*.* := !b.*.*"]), &s).unwrap();
    assert_eq!(
        out["a"],
        set(
            &d,
            &["DataSensitivity.Personal", "Encryption.Encrypted", "T.x"]
        )
    );
}

#[test]
fn foreign_labels_are_rejected() {
    let d = dict();
    let other = DataDictionary::new(vec![LabelType::new("Z", ["z"])]);
    let a = assign(&other, &["v.Z.z := TRUE"]);
    assert!(evaluate_assignments(&d, &a, &Scope::new()).is_err());
}

fn running(file: &str) -> (ArchitectureModel, ActionSequence) {
    let m = load_model(shop(file)).unwrap();
    let s = find_all_sequences(&m).unwrap().remove(0);
    (m, s)
}

#[test]
fn running_example_with_encryption() {
    let (m, s) = running("model.json");
    let p = propagate(&m, &s).unwrap();
    let calling_store = &p.results()[4];
    assert_eq!(calling_store.element().kind().name(), "CallingSeffNode");
    let record = calling_store.variable("record").unwrap();
    assert!(record.has_data_characteristic("DataSensitivity", "Personal"));
    assert!(record.has_data_characteristic("Encryption", "Encrypted"));
    assert!(calling_store.has_node_characteristic("ServerLocation", "nonEU"));
}

#[test]
fn running_example_without_encryption() {
    let (m, s) = running("model-no-encrypt.json");
    let p = propagate(&m, &s).unwrap();
    let db_side: Vec<_> = p
        .results()
        .iter()
        .filter(|r| r.element().instance() == Some("db"))
        .collect();
    assert_eq!(db_side.len(), 2);
    for r in db_side {
        assert_eq!(
            r.variable("record").unwrap().labels(),
            &set(m.dictionary(), &["DataSensitivity.Personal"])
        );
    }
}

#[test]
fn user_side_nodes_carry_user_labels() {
    let m = ArchitectureModel::from_json_str(
        r#"{"dictionary": {"labelTypes": [{"name": "Role", "values": ["Customer"]}]},
            "usageScenarios": [{"id": "s", "userLabels": ["Role.Customer"],
                                "actions": [{"kind": "variable", "id": "nothing"}]}]}"#,
    )
    .unwrap();
    let s = &find_all_sequences(&m).unwrap()[0];
    let p = propagate(&m, s).unwrap();
    assert_eq!(p.len(), 2);
    for r in p.results() {
        assert!(r.all_data_flow_variables().is_empty());
        assert_eq!(r.node_labels(), &set(m.dictionary(), &["Role.Customer"]));
    }
}

const SCOPING: &str = r#"{
  "dictionary": {"labelTypes": [{"name": "S", "values": ["Secret", "Public"]}]},
  "signatures": [{"id": "handle", "parameters": ["arg"], "hasReturn": true}],
  "components": [{"id": "H", "provides": ["handle"], "seffs": [{"signature": "handle", "actions": [
      {"kind": "variable", "id": "copy", "assignments": ["local.*.* := secret.*.*", "arg.S.Public := TRUE"]},
      {"kind": "return", "id": "done", "assignments": ["RETURN.*.* := arg.*.*"]}]}]}],
  "assembly": {"instances": [{"id": "h", "component": "H"}]},
  "deployment": {"containers": [{"id": "box"}], "allocation": {"h": "box"}},
  "usageScenarios": [{"id": "s", "actions": [
      {"kind": "variable", "id": "init", "assignments": ["secret.S.Secret := TRUE", "open.S.Public := TRUE"]},
      {"kind": "call", "id": "invoke", "instance": "h", "signature": "handle", "bindings": {"arg": "open"},
       "result": "answer", "resultAssignments": ["answer.S.Secret := secret.S.Secret"]}]}]
}"#;

#[test]
fn unbound_caller_variables_are_invisible_in_callees() {
    let m = ArchitectureModel::from_json_str(SCOPING).unwrap();
    let s = &find_all_sequences(&m).unwrap()[0];
    let p = propagate(&m, s).unwrap();
    let callee_side: Vec<_> = p
        .results()
        .iter()
        .filter(|r| r.element().instance().is_some())
        .collect();
    assert_eq!(callee_side.len(), 3);
    for r in &callee_side {
        assert!(r.variable("secret").is_none(), "{}", r.element().id());
        assert!(r.variable("open").is_none());
        // reading `secret` inside the callee sees nothing
        if let Some(local) = r.variable("local") {
            assert!(local.labels().is_empty());
        }
    }
    let last = p.results().last().unwrap();
    assert!(last
        .variable("secret")
        .unwrap()
        .has_data_characteristic("S", "Secret"));
    let answer = last.variable("answer").unwrap();
    assert!(answer.has_data_characteristic("S", "Public"));
    assert!(answer.has_data_characteristic("S", "Secret"));
    // the caller's own variable is untouched by the callee's write to `arg`
    assert!(last
        .variable("open")
        .unwrap()
        .has_data_characteristic("S", "Public"));
    assert!(last.variable("RETURN").is_none());
}

#[test]
fn snapshots_do_not_change_after_later_elements() {
    let (m, s) = running("model.json");
    let full = propagate(&m, &s).unwrap();
    for i in 1..=s.len() {
        let prefix = ActionSequence::new(s.index(), s.scenario(), s.elements()[..i].to_vec());
        // prefixes that stop inside a call are still valid inputs
        let partial = propagate(&m, &prefix).unwrap();
        assert_eq!(partial.results(), &full.results()[..i]);
    }
}

#[test]
fn propagation_is_deterministic() {
    let (m, s) = running("model.json");
    assert_eq!(propagate(&m, &s).unwrap(), propagate(&m, &s).unwrap());
}

#[test]
fn evaluate_all_is_independent_of_order_and_threads() {
    let m = random_small_model(7);
    let mut seqs = Vec::new();
    for seed in [1, 2, 3] {
        let other = random_small_model(seed);
        seqs.extend(
            find_all_sequences(&other)
                .unwrap()
                .into_iter()
                .map(|s| (other.clone(), s)),
        );
    }
    let own = find_all_sequences(&m).unwrap();
    let forward = evaluate_all(&m, &own, 1).unwrap();
    let mut reversed_input = own.clone();
    reversed_input.reverse();
    let mut backward = evaluate_all(&m, &reversed_input, 4).unwrap();
    backward.reverse();
    assert_eq!(forward, backward);
    for (p, s) in forward.iter().zip(&own) {
        assert_eq!(p, &propagate(&m, s).unwrap());
    }
    assert!(evaluate_all(&m, &[], 2).unwrap().is_empty());
    for (model, s) in &seqs {
        assert_eq!(
            evaluate_all(model, std::slice::from_ref(s), 1).unwrap()[0],
            propagate(model, s).unwrap()
        );
    }
}

#[test]
fn shipped_models_match_the_oracle() {
    for file in ["model.json", "model-no-encrypt.json"] {
        let (m, s) = running(file);
        assert_eq!(
            propagate(&m, &s).unwrap(),
            oracle_propagate(&m, &s).unwrap(),
            "{file}"
        );
    }
    let m = ArchitectureModel::from_json_str(SCOPING).unwrap();
    let s = &find_all_sequences(&m).unwrap()[0];
    assert_eq!(propagate(&m, s).unwrap(), oracle_propagate(&m, s).unwrap());
}

fn forwarding_chain(k: usize, initial: &[&str]) -> ArchitectureModel {
    let actions: Vec<String> = (0..k)
        .map(|i| {
            format!(r#"{{"kind": "variable", "id": "fwd{i}", "assignments": ["d.*.* := d.*.*"]}}"#)
        })
        .collect();
    let mut init = vec![r#""d.*.* := FALSE""#.to_string()];
    init.extend(initial.iter().map(|l| format!(r#""d.{l} := TRUE""#)));
    ArchitectureModel::from_json_str(&format!(
        r#"{{"dictionary": {{"labelTypes": [{{"name": "T", "values": ["x", "y", "z"]}}, {{"name": "U", "values": ["u"]}}]}},
            "signatures": [{{"id": "run", "parameters": ["d"]}}],
            "components": [{{"id": "C", "provides": ["run"], "seffs": [{{"signature": "run", "actions": [{}]}}]}}],
            "assembly": {{"instances": [{{"id": "c", "component": "C"}}]}},
            "deployment": {{"containers": [{{"id": "box"}}], "allocation": {{"c": "box"}}}},
            "usageScenarios": [{{"id": "s", "actions": [
              {{"kind": "variable", "id": "init", "assignments": [{}]}},
              {{"kind": "call", "id": "go", "instance": "c", "signature": "run", "bindings": {{"d": "d"}}}}]}}]}}"#,
        actions.join(","),
        init.join(",")
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn forwarding_preserves_labels(k in 1usize..=1000, mask in 0u8..16) {
        let all = ["T.x", "T.y", "T.z", "U.u"];
        let initial: Vec<&str> = all.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, l)| *l).collect();
        let m = forwarding_chain(k, &initial);
        let s = &find_all_sequences(&m).unwrap()[0];
        let p = propagate(&m, s).unwrap();
        let expected = set(m.dictionary(), &initial);
        for r in &p.results()[2..] {
            prop_assert_eq!(r.variable("d").unwrap().labels(), &expected);
        }
    }
}
