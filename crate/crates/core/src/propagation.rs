//! Label propagation along action sequences.
//!
//! Propagation walks a sequence once, keeping a stack of variable frames. A
//! calling node opens a frame that holds only the bound parameters, so caller
//! locals are never visible inside a callee. After every node the current
//! frame and the node's labels are saved as an immutable [`ElementResult`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use rayon::ThreadPool;
use thiserror::Error;

use crate::adl::{ArchitectureModel, Assignment, LabelPattern, VarRef, RETURN_VARIABLE};
use crate::extraction::{ActionSequence, ActionSequenceElement, ElementKind, Owner};
use crate::model::{DataDictionary, Label, LabelError, LabelSet};

/// Variables of one frame, keyed by name.
pub type Scope = BTreeMap<String, LabelSet>;

/// A variable together with the labels it carries at one node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DataFlowVariable {
    name: String,
    labels: LabelSet,
}

impl DataFlowVariable {
    pub fn new(name: impl Into<String>, labels: LabelSet) -> Self {
        Self {
            name: name.into(),
            labels,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn has_data_characteristic(&self, label_type: &str, value: &str) -> bool {
        self.labels.has(label_type, value)
    }
}

/// Propagation result saved for one node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ElementResult {
    element: ActionSequenceElement,
    node_labels: LabelSet,
    variables: Vec<DataFlowVariable>,
}

impl ElementResult {
    /// `variables` must be sorted by name with distinct names.
    pub fn new(
        element: ActionSequenceElement,
        node_labels: LabelSet,
        variables: Vec<DataFlowVariable>,
    ) -> Self {
        debug_assert!(variables.windows(2).all(|w| w[0].name < w[1].name));
        Self {
            element,
            node_labels,
            variables,
        }
    }

    pub fn element(&self) -> &ActionSequenceElement {
        &self.element
    }

    pub fn node_labels(&self) -> &LabelSet {
        &self.node_labels
    }

    pub fn has_node_characteristic(&self, label_type: &str, value: &str) -> bool {
        self.node_labels.has(label_type, value)
    }

    /// Variables in scope after the node, sorted by name.
    pub fn all_data_flow_variables(&self) -> &[DataFlowVariable] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Option<&DataFlowVariable> {
        self.variables
            .binary_search_by(|v| v.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.variables[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PropagatedSequence {
    sequence_index: usize,
    results: Vec<ElementResult>,
}

impl PropagatedSequence {
    pub fn new(sequence_index: usize, results: Vec<ElementResult>) -> Self {
        Self {
            sequence_index,
            results,
        }
    }

    /// Index of the source sequence (its usage scenario position).
    pub fn sequence_index(&self) -> usize {
        self.sequence_index
    }

    pub fn results(&self) -> &[ElementResult] {
        &self.results
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PropagationError {
    #[error("element {index} ('{element}'): binding references variable '{variable}' which is not in the caller frame")]
    UnboundVariable {
        index: usize,
        element: String,
        variable: String,
    },
    #[error("element {index} ('{element}'): {source}")]
    Label {
        index: usize,
        element: String,
        source: LabelError,
    },
    #[error("element {index} ('{element}'): frame stack underflow")]
    FrameUnderflow { index: usize, element: String },
    #[error("element {index} ('{element}'): unknown owner {owner}")]
    UnknownOwner {
        index: usize,
        element: String,
        owner: String,
    },
}

/// Per-sequence failures of [`evaluate_all`], keyed by input position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct EvaluationError {
    pub failures: Vec<(usize, PropagationError)>,
}

impl fmt::Display for EvaluationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "propagation failed for {} sequence(s)",
            self.failures.len()
        )?;
        for (i, e) in &self.failures {
            write!(f, "\n  sequence {i}: {e}")?;
        }
        Ok(())
    }
}

fn check_refs(dict: &DataDictionary, assignment: &Assignment) -> Result<(), LabelError> {
    let check = |r: &VarRef| match &r.pattern {
        LabelPattern::Exact(l) if !dict.contains(l) => Err(LabelError::ForeignLabel(l.clone())),
        LabelPattern::AnyValue(t) if !dict.has_type(t) => {
            Err(LabelError::UnknownType(t.to_string()))
        }
        _ => Ok(()),
    };
    check(&assignment.target)?;
    let mut result = Ok(());
    assignment.rhs.for_each_ref(&mut |r| {
        if result.is_ok() {
            result = check(r);
        }
    });
    result
}

fn holds(scope: &Scope, r: &VarRef, instance: Option<&Label>) -> bool {
    match r.bind(instance) {
        Some(label) => scope.get(&r.variable).is_some_and(|s| s.contains(label)),
        None => false,
    }
}

fn in_domain(pattern: &LabelPattern, label: &Label) -> bool {
    match pattern {
        LabelPattern::Any => true,
        LabelPattern::AnyValue(t) => label.label_type() == &**t,
        LabelPattern::Exact(l) => l == label,
    }
}

enum Update<'a> {
    Set {
        variable: &'a str,
        label: &'a Label,
        present: bool,
    },
    Replace {
        variable: &'a str,
        pattern: &'a LabelPattern,
        labels: Vec<Label>,
    },
}

/// Labels of the wildcard target's domain for which the rhs holds.
///
/// If the rhs is false whenever every wildcard reference is absent, only
/// labels carried by some wildcard-referenced variable can make it true, so
/// the scan is limited to those. Otherwise the whole domain is scanned.
fn wildcard_labels(
    dict: &DataDictionary,
    assignment: &Assignment,
    scope: &Scope,
) -> Result<Vec<Label>, LabelError> {
    let pattern = &assignment.target.pattern;
    let rhs = &assignment.rhs;
    let absent = rhs.eval(&mut |r| !r.is_wildcard() && holds(scope, r, None));
    let candidates: Vec<Label> = if absent {
        match pattern {
            LabelPattern::AnyValue(t) => dict.labels_of(t)?.to_vec(),
            _ => dict.all_labels().to_vec(),
        }
    } else {
        let mut seen = BTreeSet::new();
        rhs.for_each_ref(&mut |r| {
            if r.is_wildcard() {
                if let Some(set) = scope.get(&r.variable) {
                    seen.extend(set.iter().filter(|l| in_domain(pattern, l)).cloned());
                }
            }
        });
        seen.into_iter().collect()
    };
    Ok(candidates
        .into_iter()
        .filter(|l| rhs.eval(&mut |r| holds(scope, r, Some(l))))
        .collect())
}

/// Applies one action's assignments to `scope`.
///
/// Every right-hand side reads the state before the action; updates are then
/// applied in declaration order, so the last writer wins on overlapping
/// targets. Variables that are not assigned pass through unchanged.
pub fn evaluate_assignments(
    dict: &DataDictionary,
    assignments: &[Assignment],
    scope: &Scope,
) -> Result<Scope, LabelError> {
    let mut updates = Vec::with_capacity(assignments.len());
    for a in assignments {
        check_refs(dict, a)?;
        let variable = a.target.variable.as_str();
        updates.push(match &a.target.pattern {
            LabelPattern::Exact(label) => Update::Set {
                variable,
                label,
                present: a.rhs.eval(&mut |r| holds(scope, r, None)),
            },
            pattern => Update::Replace {
                variable,
                pattern,
                labels: wildcard_labels(dict, a, scope)?,
            },
        });
    }
    let mut out = scope.clone();
    for update in updates {
        match update {
            Update::Set {
                variable,
                label,
                present,
            } => {
                let set = out.entry(variable.to_string()).or_default();
                if present {
                    set.insert(label.clone());
                } else {
                    set.remove(label);
                }
            }
            Update::Replace {
                variable,
                pattern,
                labels,
            } => {
                let set = out.entry(variable.to_string()).or_default();
                set.retain(|l| !in_domain(pattern, l));
                for l in labels {
                    set.insert(l);
                }
            }
        }
    }
    Ok(out)
}

fn snapshot(scope: &Scope) -> Vec<DataFlowVariable> {
    scope
        .iter()
        .map(|(name, labels)| DataFlowVariable::new(name.clone(), labels.clone()))
        .collect()
}

/// Propagates labels along one sequence of `model`.
pub fn propagate(
    model: &ArchitectureModel,
    sequence: &ActionSequence,
) -> Result<PropagatedSequence, PropagationError> {
    let dict = model.dictionary();
    let mut frames: Vec<Scope> = Vec::new();
    let mut results = Vec::with_capacity(sequence.len());

    for (index, element) in sequence.elements().iter().enumerate() {
        let label_err = |source| PropagationError::Label {
            index,
            element: element.id().to_string(),
            source,
        };
        let underflow = || PropagationError::FrameUnderflow {
            index,
            element: element.id().to_string(),
        };
        match element.kind() {
            ElementKind::UserStart => frames.push(Scope::new()),
            ElementKind::UserVariable { assignments }
            | ElementKind::SeffVariable { assignments }
            | ElementKind::SeffReturn { assignments } => {
                let top = frames.last_mut().ok_or_else(underflow)?;
                *top = evaluate_assignments(dict, assignments, top).map_err(label_err)?;
            }
            ElementKind::CallingUser { bindings } | ElementKind::CallingSeff { bindings } => {
                let caller = frames.last().ok_or_else(underflow)?;
                let mut callee = Scope::new();
                for b in bindings {
                    let labels = caller.get(&b.variable).ok_or_else(|| {
                        PropagationError::UnboundVariable {
                            index,
                            element: element.id().to_string(),
                            variable: b.variable.clone(),
                        }
                    })?;
                    callee.insert(b.parameter.clone(), labels.clone());
                }
                frames.push(callee);
            }
            ElementKind::ReturningUser {
                result_variable,
                result_assignments,
            }
            | ElementKind::ReturningSeff {
                result_variable,
                result_assignments,
            } => {
                let mut callee = frames.pop().ok_or_else(underflow)?;
                let caller = frames.last_mut().ok_or_else(underflow)?;
                if let Some(var) = result_variable {
                    let returned = callee.remove(RETURN_VARIABLE).unwrap_or_default();
                    caller.insert(var.clone(), returned);
                }
                *caller =
                    evaluate_assignments(dict, result_assignments, caller).map_err(label_err)?;
            }
        }

        let node_labels =
            node_labels(model, element).map_err(|owner| PropagationError::UnknownOwner {
                index,
                element: element.id().to_string(),
                owner,
            })?;
        let top = frames.last().ok_or_else(underflow)?;
        results.push(ElementResult::new(
            element.clone(),
            node_labels,
            snapshot(top),
        ));
    }
    Ok(PropagatedSequence::new(sequence.index(), results))
}

fn node_labels(
    model: &ArchitectureModel,
    element: &ActionSequenceElement,
) -> Result<LabelSet, String> {
    match element.owner() {
        Owner::Instance(i) => model
            .node_labels_for_instance(i)
            .cloned()
            .map_err(|_| element.owner().to_string()),
        Owner::Scenario(s) => model
            .usage_scenarios()
            .iter()
            .find(|u| &u.id == s)
            .map(|u| u.user_labels.clone())
            .ok_or_else(|| element.owner().to_string()),
    }
}

/// Propagates every sequence, fanning out over `threads` worker threads when
/// more than one is requested. Output order matches input order.
pub fn evaluate_all(
    model: &ArchitectureModel,
    sequences: &[ActionSequence],
    threads: usize,
) -> Result<Vec<PropagatedSequence>, EvaluationError> {
    if threads > 1 && sequences.len() > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        evaluate_all_in(model, sequences, Some(&pool), None)
    } else {
        evaluate_all_in(model, sequences, None, None)
    }
}

pub(crate) fn evaluate_all_in(
    model: &ArchitectureModel,
    sequences: &[ActionSequence],
    pool: Option<&ThreadPool>,
    counter: Option<&AtomicUsize>,
) -> Result<Vec<PropagatedSequence>, EvaluationError> {
    let run = |s: &ActionSequence| {
        if let Some(c) = counter {
            c.fetch_add(1, Ordering::Relaxed);
        }
        propagate(model, s)
    };
    let outcomes: Vec<_> = match pool {
        Some(pool) if sequences.len() > 1 => {
            pool.install(|| sequences.par_iter().map(run).collect())
        }
        _ => sequences.iter().map(run).collect(),
    };
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(p) => ok.push(p),
            Err(e) => failures.push((i, e)),
        }
    }
    if failures.is_empty() {
        Ok(ok)
    } else {
        Err(EvaluationError { failures })
    }
}
