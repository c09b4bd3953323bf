//! Brute-force reference semantics for differential testing.
//!
//! [`oracle_propagate`] recomputes every node's snapshot from scratch by
//! replaying the whole prefix of the sequence, expands wildcards eagerly over
//! the declared label types and evaluates each assignment by substituting
//! label presence into the term. It shares no evaluation code with
//! [`crate::propagation`] and is quadratic in the sequence length, so it is
//! only meant for small models such as those from [`random_small_model`].

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adl::document::*;
use crate::adl::{ArchitectureModel, Assignment, LabelPattern, VarRef, RETURN_VARIABLE};
use crate::constraints::{ConstraintExpr, ConstraintRef, RefScope};
use crate::expr::Term;
use crate::extraction::{ActionSequence, ActionSequenceElement, ElementKind, Owner};
use crate::model::{DataDictionary, LabelSet, LabelType};
use crate::propagation::{DataFlowVariable, ElementResult, PropagatedSequence, PropagationError};

type Pair = (String, String);
type Frame = BTreeMap<String, BTreeSet<Pair>>;

fn truth(term: &Term<VarRef>, frame: &Frame, bound: Option<&Pair>) -> bool {
    match term {
        Term::True => true,
        Term::False => false,
        Term::Not(t) => !truth(t, frame, bound),
        Term::And(a, b) => {
            let (x, y) = (truth(a, frame, bound), truth(b, frame, bound));
            x && y
        }
        Term::Or(a, b) => {
            let (x, y) = (truth(a, frame, bound), truth(b, frame, bound));
            x || y
        }
        Term::Ref(r) => {
            let pair = match &r.pattern {
                LabelPattern::Exact(l) => (l.label_type().to_string(), l.value().to_string()),
                _ => bound
                    .cloned()
                    .expect("wildcard reference outside a wildcard assignment"),
            };
            frame
                .get(&r.variable)
                .is_some_and(|labels| labels.contains(&pair))
        }
    }
}

fn expand_target(types: &[LabelType], pattern: &LabelPattern) -> Vec<Pair> {
    let mut out = Vec::new();
    for t in types {
        for v in &t.values {
            let keep = match pattern {
                LabelPattern::Any => true,
                LabelPattern::AnyValue(name) => t.name == **name,
                LabelPattern::Exact(l) => l.label_type() == t.name && l.value() == v,
            };
            if keep {
                out.push((t.name.clone(), v.clone()));
            }
        }
    }
    out
}

fn apply(types: &[LabelType], assignments: &[Assignment], frame: &mut Frame) {
    let before = frame.clone();
    let mut writes: Vec<(String, Pair, bool)> = Vec::new();
    for a in assignments {
        let wildcard = !matches!(a.target.pattern, LabelPattern::Exact(_));
        for pair in expand_target(types, &a.target.pattern) {
            let value = truth(&a.rhs, &before, wildcard.then_some(&pair));
            writes.push((a.target.variable.clone(), pair, value));
        }
        frame.entry(a.target.variable.clone()).or_default();
    }
    for (var, pair, value) in writes {
        let labels = frame.get_mut(&var).expect("created above");
        if value {
            labels.insert(pair);
        } else {
            labels.remove(&pair);
        }
    }
}

fn replay(
    model: &ArchitectureModel,
    prefix: &[ActionSequenceElement],
) -> Result<Vec<Frame>, PropagationError> {
    let types = model.dictionary().label_types();
    let mut stack: Vec<Frame> = Vec::new();
    for (index, e) in prefix.iter().enumerate() {
        let underflow = || PropagationError::FrameUnderflow {
            index,
            element: e.id().to_string(),
        };
        match e.kind() {
            ElementKind::UserStart => stack.push(Frame::new()),
            ElementKind::UserVariable { assignments }
            | ElementKind::SeffVariable { assignments }
            | ElementKind::SeffReturn { assignments } => {
                apply(types, assignments, stack.last_mut().ok_or_else(underflow)?);
            }
            ElementKind::CallingUser { bindings } | ElementKind::CallingSeff { bindings } => {
                let caller = stack.last().ok_or_else(underflow)?;
                let mut callee = Frame::new();
                for b in bindings {
                    match caller.get(&b.variable) {
                        Some(labels) => {
                            callee.insert(b.parameter.clone(), labels.clone());
                        }
                        None => {
                            return Err(PropagationError::UnboundVariable {
                                index,
                                element: e.id().to_string(),
                                variable: b.variable.clone(),
                            })
                        }
                    }
                }
                stack.push(callee);
            }
            ElementKind::ReturningUser {
                result_variable,
                result_assignments,
            }
            | ElementKind::ReturningSeff {
                result_variable,
                result_assignments,
            } => {
                let callee = stack.pop().ok_or_else(underflow)?;
                let caller = stack.last_mut().ok_or_else(underflow)?;
                if let Some(var) = result_variable {
                    caller.insert(
                        var.clone(),
                        callee.get(RETURN_VARIABLE).cloned().unwrap_or_default(),
                    );
                }
                apply(types, result_assignments, caller);
            }
        }
    }
    Ok(stack)
}

fn to_label_set(dict: &DataDictionary, pairs: &BTreeSet<Pair>) -> LabelSet {
    pairs
        .iter()
        .map(|(t, v)| {
            dict.label(t, v)
                .expect("oracle only produces dictionary labels")
        })
        .collect()
}

fn oracle_node_labels(model: &ArchitectureModel, owner: &Owner) -> BTreeSet<Pair> {
    let pairs = |set: &LabelSet| -> Vec<Pair> {
        set.iter()
            .map(|l| (l.label_type().to_string(), l.value().to_string()))
            .collect()
    };
    let mut out = BTreeSet::new();
    match owner {
        Owner::Scenario(id) => {
            for s in model.usage_scenarios().iter().filter(|s| &s.id == id) {
                out.extend(pairs(&s.user_labels));
            }
        }
        Owner::Instance(id) => {
            for inst in model.assembly().instances.iter().filter(|i| &i.id == id) {
                for c in model.components().iter().filter(|c| c.id == inst.component) {
                    out.extend(pairs(&c.node_labels));
                }
            }
            if let Some(container) = model.deployment().allocation.get(id) {
                for c in model
                    .deployment()
                    .containers
                    .iter()
                    .filter(|c| &c.id == container)
                {
                    out.extend(pairs(&c.node_labels));
                }
            }
        }
    }
    out
}

/// Reference propagation: every snapshot is rebuilt by replaying its prefix.
pub fn oracle_propagate(
    model: &ArchitectureModel,
    sequence: &ActionSequence,
) -> Result<PropagatedSequence, PropagationError> {
    let dict = model.dictionary();
    let elements = sequence.elements();
    let mut results = Vec::with_capacity(elements.len());
    for i in 0..elements.len() {
        let stack = replay(model, &elements[..=i])?;
        let top = stack
            .last()
            .ok_or_else(|| PropagationError::FrameUnderflow {
                index: i,
                element: elements[i].id().to_string(),
            })?;
        let variables = top
            .iter()
            .map(|(name, pairs)| DataFlowVariable::new(name.clone(), to_label_set(dict, pairs)))
            .collect();
        let node = to_label_set(dict, &oracle_node_labels(model, elements[i].owner()));
        results.push(ElementResult::new(elements[i].clone(), node, variables));
    }
    Ok(PropagatedSequence::new(sequence.index(), results))
}

fn constraint_truth(term: &Term<ConstraintRef>, node: &LabelSet, data: Option<&LabelSet>) -> bool {
    match term {
        Term::True => true,
        Term::False => false,
        Term::Not(t) => !constraint_truth(t, node, data),
        Term::And(a, b) => constraint_truth(a, node, data) & constraint_truth(b, node, data),
        Term::Or(a, b) => constraint_truth(a, node, data) | constraint_truth(b, node, data),
        Term::Ref(r) => match r.scope {
            RefScope::Node => node.iter().any(|l| l == &r.label),
            RefScope::Data => data.is_some_and(|d| d.iter().any(|l| l == &r.label)),
        },
    }
}

/// Reference constraint check: `(element index, matched variables)` for each
/// violating node, by direct substitution of label presence.
pub fn oracle_violations(
    propagated: &PropagatedSequence,
    expr: &ConstraintExpr,
) -> Vec<(usize, Vec<String>)> {
    let mut uses_data = false;
    expr.data
        .for_each_ref(&mut |r| uses_data |= r.scope == RefScope::Data);
    let mut out = Vec::new();
    for (i, r) in propagated.results().iter().enumerate() {
        let node = r.node_labels();
        if !constraint_truth(&expr.node, node, None) {
            continue;
        }
        let vars = r.all_data_flow_variables();
        let matched: Vec<String> = if uses_data {
            vars.iter()
                .filter(|v| constraint_truth(&expr.data, node, Some(v.labels())))
                .map(|v| v.name().to_string())
                .collect()
        } else if constraint_truth(&expr.data, node, None) {
            vars.iter().map(|v| v.name().to_string()).collect()
        } else {
            continue;
        };
        if !matched.is_empty() || !uses_data {
            out.push((i, matched));
        }
    }
    out
}

/// Builds random terms for the generators below.
struct TermGen<'a> {
    rng: &'a mut ChaCha8Rng,
    types: &'a [LabelType],
}

#[derive(Clone, Copy)]
enum Shape<'a> {
    Exact,
    AnyValue(&'a str),
    Any,
}

impl TermGen<'_> {
    fn label(&mut self) -> String {
        let t = self.types.choose(self.rng).expect("at least one type");
        let v = t.values.choose(self.rng).expect("at least one value");
        format!("{}.{}", t.name, v)
    }

    fn reference(&mut self, vars: &[&str], shape: Shape) -> String {
        let var = vars.choose(self.rng).expect("at least one variable");
        let wildcard = self.rng.gen_bool(0.6);
        match shape {
            Shape::AnyValue(t) if wildcard => format!("{var}.{t}.*"),
            Shape::Any if wildcard => format!("{var}.*.*"),
            _ => format!("{var}.{}", self.label()),
        }
    }

    fn term(&mut self, depth: u32, vars: &[&str], shape: Shape) -> String {
        let pick = if depth == 0 {
            self.rng.gen_range(0..3)
        } else {
            self.rng.gen_range(0..6)
        };
        match pick {
            0 if self.rng.gen_bool(0.3) => if self.rng.gen_bool(0.5) {
                "TRUE"
            } else {
                "FALSE"
            }
            .to_string(),
            0..=2 => self.reference(vars, shape),
            3 => format!("!{}", self.term(depth - 1, vars, shape)),
            4 => format!(
                "({} & {})",
                self.term(depth - 1, vars, shape),
                self.term(depth - 1, vars, shape)
            ),
            _ => format!(
                "({} | {})",
                self.term(depth - 1, vars, shape),
                self.term(depth - 1, vars, shape)
            ),
        }
    }

    fn assignment(&mut self, target: &str, readable: &[&str]) -> String {
        let (lhs, shape) = match self.rng.gen_range(0..3) {
            0 => (format!("{target}.{}", self.label()), Shape::Exact),
            1 => {
                let t = &self.types.choose(self.rng).expect("type").name;
                (format!("{target}.{t}.*"), Shape::AnyValue(t))
            }
            _ => (format!("{target}.*.*"), Shape::Any),
        };
        format!("{lhs} := {}", self.term(2, readable, shape))
    }

    fn assignments(&mut self, targets: &[&str], readable: &[&str]) -> Vec<String> {
        let n = self.rng.gen_range(1..=2);
        (0..n)
            .map(|_| {
                let target = targets.choose(self.rng).expect("target");
                self.assignment(target, readable)
            })
            .collect()
    }

    fn labels(&mut self, max: usize) -> Vec<String> {
        let n = self.rng.gen_range(0..=max);
        let mut out: Vec<String> = (0..n).map(|_| self.label()).collect();
        out.sort();
        out.dedup();
        out
    }
}

/// A seeded random model document: at most 3 label types with at most 3
/// values each, and at most 10 nodes per extracted sequence.
pub fn random_small_document(seed: u64) -> ModelDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types: Vec<LabelType> = (0..rng.gen_range(1..=3))
        .map(|t| {
            LabelType::new(
                format!("T{t}"),
                (0..rng.gen_range(1..=3)).map(|v| format!("v{v}")),
            )
        })
        .collect();

    let two_params = rng.gen_bool(0.5);
    let a_returns = rng.gen_bool(0.5);
    let b_returns = rng.gen_bool(0.5);
    let a_calls_b = rng.gen_bool(0.6);
    // keeps every sequence at 10 nodes or fewer
    let a_vars = rng.gen_range(0..=if a_calls_b { 1 } else { 2 });
    let b_vars = usize::from(!b_returns);
    let scenarios = rng.gen_range(1..=2usize);

    let mut g = TermGen {
        rng: &mut rng,
        types: &types,
    };

    let a_params: Vec<String> = if two_params {
        vec!["pa".into(), "pb".into()]
    } else {
        vec!["pa".into()]
    };
    let signatures = vec![
        SignatureDoc {
            id: "svcA".into(),
            name: "svcA".into(),
            parameters: a_params.clone(),
            has_return: a_returns,
        },
        SignatureDoc {
            id: "svcB".into(),
            name: "svcB".into(),
            parameters: vec!["q".into()],
            has_return: b_returns,
        },
    ];

    // SEFF of A; "u0" and "secret" are caller names and must read as absent.
    let mut a_actions = Vec::new();
    let mut a_defined: Vec<String> = a_params.clone();
    let a_var_count = if a_vars == 0 && !a_calls_b && !a_returns {
        1
    } else {
        a_vars
    };
    for i in 0..a_var_count {
        let defined: Vec<&str> = a_defined.iter().map(String::as_str).collect();
        let mut readable = defined.clone();
        readable.push("secret");
        let mut targets = defined.clone();
        targets.push("local");
        let assignments = g.assignments(&targets, &readable);
        a_defined.extend(
            assignments
                .iter()
                .filter_map(|a| a.split('.').next())
                .map(String::from),
        );
        a_defined.sort();
        a_defined.dedup();
        a_actions.push(SeffActionDoc::Variable {
            id: format!("a_set{i}"),
            assignments,
        });
    }
    if a_calls_b {
        let arg = a_defined.choose(g.rng).expect("parameter").clone();
        let result = b_returns.then(|| "fromB".to_string());
        let mut result_assignments = Vec::new();
        if result.is_some() && g.rng.gen_bool(0.5) {
            let defined: Vec<&str> = a_defined
                .iter()
                .map(String::as_str)
                .chain(["fromB"])
                .collect();
            result_assignments = g.assignments(&defined, &defined);
        }
        a_actions.push(SeffActionDoc::Call {
            id: "a_callB".into(),
            role: "next".into(),
            signature: "svcB".into(),
            bindings: [("q".to_string(), arg)].into_iter().collect(),
            result: result.clone(),
            result_assignments,
        });
        if let Some(r) = result {
            a_defined.push(r);
        }
    }
    if a_returns {
        let readable: Vec<&str> = a_defined.iter().map(String::as_str).collect();
        a_actions.push(SeffActionDoc::Return {
            id: "a_return".into(),
            assignments: g.assignments(&[RETURN_VARIABLE], &readable),
        });
    }

    let mut b_actions = Vec::new();
    for i in 0..b_vars {
        b_actions.push(SeffActionDoc::Variable {
            id: format!("b_set{i}"),
            assignments: g.assignments(&["q", "tmp"], &["q", "tmp", "pa"]),
        });
    }
    if b_returns {
        b_actions.push(SeffActionDoc::Return {
            id: "b_return".into(),
            assignments: g.assignments(&[RETURN_VARIABLE], &["q", "tmp"]),
        });
    }

    let components = vec![
        ComponentDoc {
            id: "CompA".into(),
            name: "A".into(),
            provides: vec!["svcA".into()],
            requires: if a_calls_b {
                vec![RoleDoc {
                    role: "next".into(),
                    signatures: vec!["svcB".into()],
                }]
            } else {
                Vec::new()
            },
            node_labels: g.labels(2),
            seffs: vec![SeffDoc {
                signature: "svcA".into(),
                actions: a_actions,
            }],
        },
        ComponentDoc {
            id: "CompB".into(),
            name: "B".into(),
            provides: vec!["svcB".into()],
            requires: Vec::new(),
            node_labels: g.labels(2),
            seffs: vec![SeffDoc {
                signature: "svcB".into(),
                actions: b_actions,
            }],
        },
    ];

    let mut usage = Vec::new();
    for s in 0..scenarios {
        let mut actions = Vec::new();
        let user_vars = if a_vars == 0 && g.rng.gen_bool(0.5) {
            2
        } else {
            1
        };
        for i in 0..user_vars {
            let assignments = if i == 0 {
                // define the variables the call binds
                let mut a = vec![format!("u0.{} := TRUE", g.label())];
                a.extend(g.assignments(&["u0", "secret"], &["u0", "secret"]));
                a
            } else {
                g.assignments(&["u0", "secret"], &["u0", "secret"])
            };
            actions.push(UsageActionDoc::Variable {
                id: format!("s{s}_set{i}"),
                assignments,
            });
        }
        let bindings = a_params
            .iter()
            .map(|p| (p.clone(), "u0".to_string()))
            .collect();
        let result = (a_returns && g.rng.gen_bool(0.7)).then(|| "answer".to_string());
        let result_assignments = if result.is_some() && g.rng.gen_bool(0.5) {
            g.assignments(&["answer", "u0"], &["answer", "u0", "secret"])
        } else {
            Vec::new()
        };
        actions.push(UsageActionDoc::Call {
            id: format!("s{s}_call"),
            instance: "a".into(),
            signature: "svcA".into(),
            bindings,
            result,
            result_assignments,
        });
        usage.push(ScenarioDoc {
            id: format!("scenario{s}"),
            name: format!("scenario {s}"),
            user_labels: g.labels(1),
            actions,
        });
    }

    let containers = vec![
        ContainerDoc {
            id: "c0".into(),
            name: "c0".into(),
            node_labels: g.labels(2),
        },
        ContainerDoc {
            id: "c1".into(),
            name: "c1".into(),
            node_labels: g.labels(2),
        },
    ];

    ModelDocument {
        dictionary: DataDictionary::new(types.clone()),
        signatures,
        components,
        assembly: AssemblyDoc {
            instances: vec![
                InstanceDoc {
                    id: "a".into(),
                    component: "CompA".into(),
                },
                InstanceDoc {
                    id: "b".into(),
                    component: "CompB".into(),
                },
            ],
            connectors: if a_calls_b {
                vec![ConnectorDoc {
                    from: "a".into(),
                    role: "next".into(),
                    to: "b".into(),
                }]
            } else {
                Vec::new()
            },
        },
        deployment: DeploymentDoc {
            containers,
            allocation: [
                ("a".to_string(), "c0".to_string()),
                ("b".to_string(), "c1".to_string()),
            ]
            .into_iter()
            .collect(),
        },
        usage_scenarios: usage,
    }
}

/// Resolved form of [`random_small_document`].
pub fn random_small_model(seed: u64) -> ArchitectureModel {
    let doc = random_small_document(seed);
    ArchitectureModel::from_document(&doc)
        .unwrap_or_else(|e| panic!("generated model {seed} is invalid: {e}"))
}

/// A seeded random constraint over the labels of `dict`.
pub fn random_constraint_text(seed: u64, dict: &DataDictionary) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let types = dict.label_types();
    let mut g = TermGen {
        rng: &mut rng,
        types,
    };
    let node = if g.rng.gen_bool(0.3) {
        "TRUE".to_string()
    } else {
        g.term(1, &["node"], Shape::Exact)
    };
    let data = match g.rng.gen_range(0..4) {
        0 => "TRUE".to_string(),
        1 => g.term(1, &["node"], Shape::Exact),
        _ => g.term(2, &["data", "data", "node"], Shape::Exact),
    };
    format!("VIOLATION c{seed} WHERE {node} AND DATA {data}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adl::document::ModelDocument;
    use crate::extraction::find_all_sequences;

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(random_small_document(0), random_small_document(0));
        assert_eq!(random_small_model(0), random_small_model(0));
        assert_ne!(random_small_document(0), random_small_document(1));
    }

    #[test]
    fn generated_models_are_valid_and_small() {
        for seed in 0..100 {
            let doc: ModelDocument = random_small_document(seed);
            let model = ArchitectureModel::from_document(&doc)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert!(model.dictionary().label_types().len() <= 3);
            assert!(model
                .dictionary()
                .label_types()
                .iter()
                .all(|t| t.values.len() <= 3));
            let sequences = find_all_sequences(&model).unwrap();
            assert!(!sequences.is_empty());
            for s in &sequences {
                assert!(s.len() <= 10, "seed {seed}: {} elements", s.len());
            }
        }
    }

    #[test]
    fn empty_assignments_give_empty_snapshots() {
        let doc = r#"{
          "dictionary": {"labelTypes": [{"name": "T", "values": ["x"]}]},
          "usageScenarios": [{"id": "s", "actions": [{"kind": "variable", "id": "nothing"}]}]
        }"#;
        let model = ArchitectureModel::from_json_str(doc).unwrap();
        let seq = &find_all_sequences(&model).unwrap()[0];
        let p = oracle_propagate(&model, seq).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p
            .results()
            .iter()
            .all(|r| r.all_data_flow_variables().is_empty()));
    }
}
