//! Extraction of every possible data flow as an [`ActionSequence`].
//!
//! Each usage scenario is a starting point. Its actions are walked in order;
//! every call contributes a calling node, the callee's behavior (expanded
//! recursively) and a returning node, so calling/returning nodes are always
//! well bracketed.

use std::fmt;

use thiserror::Error;

use crate::adl::{ArchitectureModel, Assignment, SeffAction, UsageAction};

/// Maximum number of nested calls before extraction reports a call cycle.
pub const DEFAULT_RECURSION_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractionError {
    #[error(
        "call site '{call_site}': required role '{role}' of instance '{instance}' is not connected"
    )]
    UnresolvedRole {
        call_site: String,
        instance: String,
        role: String,
    },
    #[error("instance '{instance}' has no behavior for '{signature}'")]
    MissingSeff { instance: String, signature: String },
    #[error("call depth exceeds {limit} nested calls, cycle: {}", .cycle.join(" -> "))]
    RecursionLimit { limit: usize, cycle: Vec<String> },
    #[error("unknown usage scenario index {0}")]
    UnknownScenario(usize),
}

/// Whose frame and node labels an element belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Owner {
    Scenario(String),
    Instance(String),
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Scenario(s) => write!(f, "scenario:{s}"),
            Owner::Instance(i) => write!(f, "instance:{i}"),
        }
    }
}

/// Callee parameter bound to a caller variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Binding {
    pub parameter: String,
    pub variable: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ElementKind {
    UserStart,
    UserVariable {
        assignments: Vec<Assignment>,
    },
    CallingUser {
        bindings: Vec<Binding>,
    },
    ReturningUser {
        result_variable: Option<String>,
        result_assignments: Vec<Assignment>,
    },
    SeffVariable {
        assignments: Vec<Assignment>,
    },
    CallingSeff {
        bindings: Vec<Binding>,
    },
    ReturningSeff {
        result_variable: Option<String>,
        result_assignments: Vec<Assignment>,
    },
    SeffReturn {
        assignments: Vec<Assignment>,
    },
}

impl ElementKind {
    pub fn name(&self) -> &'static str {
        match self {
            ElementKind::UserStart => "UserStart",
            ElementKind::UserVariable { .. } => "UserVariableNode",
            ElementKind::CallingUser { .. } => "CallingUserNode",
            ElementKind::ReturningUser { .. } => "ReturningUserNode",
            ElementKind::SeffVariable { .. } => "SeffVariableNode",
            ElementKind::CallingSeff { .. } => "CallingSeffNode",
            ElementKind::ReturningSeff { .. } => "ReturningSeffNode",
            ElementKind::SeffReturn { .. } => "SeffReturnNode",
        }
    }

    pub fn is_calling(&self) -> bool {
        matches!(
            self,
            ElementKind::CallingUser { .. } | ElementKind::CallingSeff { .. }
        )
    }

    pub fn is_returning(&self) -> bool {
        matches!(
            self,
            ElementKind::ReturningUser { .. } | ElementKind::ReturningSeff { .. }
        )
    }
}

/// One node of a data flow.
///
/// Calling nodes are owned by the callee instance (their scope is the fresh
/// callee frame); returning nodes are owned by the caller, whose frame is
/// current again after the return.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionSequenceElement {
    id: String,
    owner: Owner,
    kind: ElementKind,
}

impl ActionSequenceElement {
    pub fn new(id: impl Into<String>, owner: Owner, kind: ElementKind) -> Self {
        Self {
            id: id.into(),
            owner,
            kind,
        }
    }

    /// Id of the model element this node was extracted from. For calling and
    /// returning nodes this is the call site id.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn owner(&self) -> &Owner {
        &self.owner
    }

    pub fn kind(&self) -> &ElementKind {
        &self.kind
    }

    /// The owning component instance, if the node is on the system side.
    pub fn instance(&self) -> Option<&str> {
        match &self.owner {
            Owner::Instance(i) => Some(i),
            Owner::Scenario(_) => None,
        }
    }
}

/// One possible data flow: an ordered, immutable list of nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionSequence {
    index: usize,
    scenario: String,
    elements: Vec<ActionSequenceElement>,
}

impl ActionSequence {
    pub fn new(
        index: usize,
        scenario: impl Into<String>,
        elements: Vec<ActionSequenceElement>,
    ) -> Self {
        Self {
            index,
            scenario: scenario.into(),
            elements,
        }
    }

    /// Position of the originating scenario in the model.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn scenario(&self) -> &str {
        &self.scenario
    }

    pub fn elements(&self) -> &[ActionSequenceElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Checks that calling/returning nodes are balanced and properly nested.
pub fn is_well_bracketed(sequence: &ActionSequence) -> bool {
    let mut open: Vec<&str> = Vec::new();
    for e in sequence.elements() {
        if e.kind().is_calling() {
            open.push(e.id());
        } else if e.kind().is_returning() && open.pop() != Some(e.id()) {
            return false;
        }
    }
    open.is_empty()
}

/// Extracts one sequence per usage scenario, in declaration order.
pub fn find_all_sequences(
    model: &ArchitectureModel,
) -> Result<Vec<ActionSequence>, ExtractionError> {
    find_all_sequences_with_limit(model, DEFAULT_RECURSION_LIMIT)
}

pub fn find_all_sequences_with_limit(
    model: &ArchitectureModel,
    recursion_limit: usize,
) -> Result<Vec<ActionSequence>, ExtractionError> {
    (0..model.usage_scenarios().len())
        .map(|i| extract_scenario(model, i, recursion_limit))
        .collect()
}

/// Extracts the sequence of the `index`-th usage scenario.
pub fn extract_scenario(
    model: &ArchitectureModel,
    index: usize,
    recursion_limit: usize,
) -> Result<ActionSequence, ExtractionError> {
    let scenario = model
        .usage_scenarios()
        .get(index)
        .ok_or(ExtractionError::UnknownScenario(index))?;
    let user = Owner::Scenario(scenario.id.clone());
    let mut ex = Extractor {
        model,
        limit: recursion_limit,
        stack: Vec::new(),
        out: vec![ActionSequenceElement::new(
            &scenario.id,
            user.clone(),
            ElementKind::UserStart,
        )],
    };
    for action in &scenario.actions {
        match action {
            UsageAction::Variable { id, assignments } => ex.out.push(ActionSequenceElement::new(
                id,
                user.clone(),
                ElementKind::UserVariable {
                    assignments: assignments.clone(),
                },
            )),
            UsageAction::SystemCall {
                id,
                instance,
                signature,
                bindings,
                result_variable,
                result_assignments,
            } => {
                ex.out.push(ActionSequenceElement::new(
                    id,
                    Owner::Instance(instance.clone()),
                    ElementKind::CallingUser {
                        bindings: ordered_bindings(model, signature, bindings),
                    },
                ));
                ex.service(instance, signature)?;
                ex.out.push(ActionSequenceElement::new(
                    id,
                    user.clone(),
                    ElementKind::ReturningUser {
                        result_variable: result_variable.clone(),
                        result_assignments: result_assignments.clone(),
                    },
                ));
            }
        }
    }
    Ok(ActionSequence::new(index, &scenario.id, ex.out))
}

fn ordered_bindings(
    model: &ArchitectureModel,
    signature: &str,
    bindings: &std::collections::BTreeMap<String, String>,
) -> Vec<Binding> {
    match model.signature(signature) {
        Some(sig) => sig
            .parameters
            .iter()
            .filter_map(|p| {
                bindings.get(p).map(|v| Binding {
                    parameter: p.clone(),
                    variable: v.clone(),
                })
            })
            .collect(),
        None => bindings
            .iter()
            .map(|(p, v)| Binding {
                parameter: p.clone(),
                variable: v.clone(),
            })
            .collect(),
    }
}

struct Extractor<'m> {
    model: &'m ArchitectureModel,
    limit: usize,
    stack: Vec<String>,
    out: Vec<ActionSequenceElement>,
}

impl Extractor<'_> {
    fn service(&mut self, instance: &str, signature: &str) -> Result<(), ExtractionError> {
        let frame = format!("{instance}.{signature}");
        if self.stack.len() >= self.limit {
            let start = self.stack.iter().position(|f| *f == frame).unwrap_or(0);
            let mut cycle = self.stack[start..].to_vec();
            cycle.push(frame);
            return Err(ExtractionError::RecursionLimit {
                limit: self.limit,
                cycle,
            });
        }
        let seff = self
            .model
            .instance_component(instance)
            .and_then(|c| c.seff(signature))
            .ok_or_else(|| ExtractionError::MissingSeff {
                instance: instance.to_string(),
                signature: signature.to_string(),
            })?;
        self.stack.push(frame);
        let owner = Owner::Instance(instance.to_string());
        for action in &seff.actions {
            match action {
                SeffAction::Variable { id, assignments } => {
                    self.out.push(ActionSequenceElement::new(
                        id,
                        owner.clone(),
                        ElementKind::SeffVariable {
                            assignments: assignments.clone(),
                        },
                    ))
                }
                SeffAction::ExternalCall {
                    id,
                    role,
                    signature: callee_sig,
                    bindings,
                    result_variable,
                    result_assignments,
                } => {
                    let callee = self
                        .model
                        .connected_instance(instance, role)
                        .ok_or_else(|| ExtractionError::UnresolvedRole {
                            call_site: id.clone(),
                            instance: instance.to_string(),
                            role: role.clone(),
                        })?
                        .to_string();
                    self.out.push(ActionSequenceElement::new(
                        id,
                        Owner::Instance(callee.clone()),
                        ElementKind::CallingSeff {
                            bindings: ordered_bindings(self.model, callee_sig, bindings),
                        },
                    ));
                    self.service(&callee, callee_sig)?;
                    self.out.push(ActionSequenceElement::new(
                        id,
                        owner.clone(),
                        ElementKind::ReturningSeff {
                            result_variable: result_variable.clone(),
                            result_assignments: result_assignments.clone(),
                        },
                    ));
                }
                SeffAction::Return { id, assignments } => {
                    self.out.push(ActionSequenceElement::new(
                        id,
                        owner.clone(),
                        ElementKind::SeffReturn {
                            assignments: assignments.clone(),
                        },
                    ))
                }
            }
        }
        self.stack.pop();
        Ok(())
    }
}
