//! A compact architecture description language covering the viewpoints the
//! analysis consumes: signatures and components with their service behavior,
//! the assembly, the deployment and the usage scenarios.
//!
//! Models are read from JSON documents (see [`document`]) and resolved into an
//! [`ArchitectureModel`] whose cross references are all known to be valid.

pub mod document;
mod resolve;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{self, RawRef, SyntaxError, Term};
use crate::model::{DataDictionary, Label, LabelError, LabelSet};

pub use document::ModelDocument;

/// Variable holding a service's return value inside the callee frame.
pub const RETURN_VARIABLE: &str = "RETURN";

/// Label part of a reference; the wildcard forms range over the dictionary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LabelPattern {
    Exact(Label),
    AnyValue(Arc<str>),
    Any,
}

/// `variable.Type.Value`, `variable.Type.*` or `variable.*.*`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub variable: String,
    pub pattern: LabelPattern,
}

impl VarRef {
    /// The concrete label this reference denotes when the wildcard parts are
    /// bound to `instance`. Exact references ignore `instance`.
    pub fn bind<'a>(&'a self, instance: Option<&'a Label>) -> Option<&'a Label> {
        match &self.pattern {
            LabelPattern::Exact(l) => Some(l),
            _ => instance,
        }
    }

    pub fn is_wildcard(&self) -> bool {
        !matches!(self.pattern, LabelPattern::Exact(_))
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.pattern {
            LabelPattern::Exact(l) => write!(f, "{}.{}", self.variable, l),
            LabelPattern::AnyValue(t) => write!(f, "{}.{}.*", self.variable, t),
            LabelPattern::Any => write!(f, "{}.*.*", self.variable),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssignmentError {
    #[error("syntax error {0}")]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("wildcard mismatch: {0}")]
    Wildcard(String),
}

/// `target := rhs`, evaluated under label presence semantics.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub target: VarRef,
    pub rhs: Term<VarRef>,
}

impl Assignment {
    /// Parses and resolves an assignment against `dict`.
    ///
    /// Wildcard references on the right-hand side must have the same shape as
    /// the target (`x.T.*` with the same `T`, or `x.*.*`); exact references are
    /// allowed everywhere.
    pub fn parse(text: &str, dict: &DataDictionary) -> Result<Self, AssignmentError> {
        let (target, rhs) = expr::parse_assignment(text)?;
        let target = resolve_ref(target, dict)?;
        let rhs = rhs.try_map(&mut |r: RawRef| {
            let resolved = resolve_ref(r, dict)?;
            match (&target.pattern, &resolved.pattern) {
                (_, LabelPattern::Exact(_)) => Ok(resolved),
                (LabelPattern::Any, LabelPattern::Any) => Ok(resolved),
                (LabelPattern::AnyValue(t), LabelPattern::AnyValue(u)) if t == u => Ok(resolved),
                _ => Err(AssignmentError::Wildcard(format!(
                    "'{resolved}' does not match the wildcard shape of target '{target}'"
                ))),
            }
        })?;
        Ok(Self { target, rhs })
    }
}

fn resolve_ref(r: RawRef, dict: &DataDictionary) -> Result<VarRef, LabelError> {
    let pattern = match (r.label_type, r.value) {
        (Some(t), Some(v)) => LabelPattern::Exact(dict.label(&t, &v)?),
        (Some(t), None) => {
            if !dict.has_type(&t) {
                return Err(LabelError::UnknownType(t));
            }
            LabelPattern::AnyValue(Arc::from(t.as_str()))
        }
        (None, _) => LabelPattern::Any,
    };
    Ok(VarRef {
        variable: r.base,
        pattern,
    })
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} := {}", self.target, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub id: String,
    pub name: String,
    pub parameters: Vec<String>,
    pub has_return: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequiredRole {
    pub id: String,
    pub signatures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeffAction {
    Variable {
        id: String,
        assignments: Vec<Assignment>,
    },
    ExternalCall {
        id: String,
        role: String,
        signature: String,
        /// callee parameter -> caller variable
        bindings: BTreeMap<String, String>,
        result_variable: Option<String>,
        result_assignments: Vec<Assignment>,
    },
    Return {
        id: String,
        assignments: Vec<Assignment>,
    },
}

impl SeffAction {
    pub fn id(&self) -> &str {
        match self {
            SeffAction::Variable { id, .. }
            | SeffAction::ExternalCall { id, .. }
            | SeffAction::Return { id, .. } => id,
        }
    }
}

/// Behavior of one provided service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seff {
    pub signature: String,
    pub actions: Vec<SeffAction>,
}

impl Seff {
    pub fn has_return(&self) -> bool {
        matches!(self.actions.last(), Some(SeffAction::Return { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: String,
    pub name: String,
    pub provides: Vec<String>,
    pub requires: Vec<RequiredRole>,
    pub node_labels: LabelSet,
    pub seffs: Vec<Seff>,
}

impl Component {
    pub fn seff(&self, signature: &str) -> Option<&Seff> {
        self.seffs.iter().find(|s| s.signature == signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssemblyContext {
    pub id: String,
    pub component: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connector {
    pub from: String,
    pub role: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assembly {
    pub instances: Vec<AssemblyContext>,
    pub connectors: Vec<Connector>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceContainer {
    pub id: String,
    pub name: String,
    pub node_labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Deployment {
    pub containers: Vec<ResourceContainer>,
    /// instance -> container
    pub allocation: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UsageAction {
    Variable {
        id: String,
        assignments: Vec<Assignment>,
    },
    SystemCall {
        id: String,
        instance: String,
        signature: String,
        bindings: BTreeMap<String, String>,
        result_variable: Option<String>,
        result_assignments: Vec<Assignment>,
    },
}

impl UsageAction {
    pub fn id(&self) -> &str {
        match self {
            UsageAction::Variable { id, .. } | UsageAction::SystemCall { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageScenario {
    pub id: String,
    pub name: String,
    pub user_labels: LabelSet,
    pub actions: Vec<UsageAction>,
}

/// A defect found while resolving a model document.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Defect {
    #[error("data dictionary: {0}")]
    Dictionary(String),
    #[error("unknown {kind} '{id}' referenced by '{referrer}'")]
    UnknownReference {
        kind: &'static str,
        id: String,
        referrer: String,
    },
    #[error("{invariant} (element '{element}')")]
    Invariant { invariant: String, element: String },
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read '{}': {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid model:\n{}", format_defects(.0))]
    Invalid(Vec<Defect>),
}

fn format_defects(defects: &[Defect]) -> String {
    defects
        .iter()
        .map(|d| format!("  - {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl LoadError {
    pub fn defects(&self) -> &[Defect] {
        match self {
            LoadError::Invalid(d) => d,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown component instance '{0}'")]
    UnknownInstance(String),
}

#[derive(Debug, Clone, Default)]
struct ModelIndex {
    signatures: HashMap<String, usize>,
    components: HashMap<String, usize>,
    /// instance -> component index
    instances: HashMap<String, usize>,
    /// (instance, role) -> providing instance
    connectors: HashMap<(String, String), String>,
    instance_labels: HashMap<String, LabelSet>,
}

/// A fully resolved, validated architecture model. Immutable once built.
#[derive(Debug, Clone)]
pub struct ArchitectureModel {
    dictionary: DataDictionary,
    signatures: Vec<Signature>,
    components: Vec<Component>,
    assembly: Assembly,
    deployment: Deployment,
    usage_scenarios: Vec<UsageScenario>,
    warnings: Vec<String>,
    index: ModelIndex,
}

impl PartialEq for ArchitectureModel {
    fn eq(&self, other: &Self) -> bool {
        self.dictionary == other.dictionary
            && self.signatures == other.signatures
            && self.components == other.components
            && self.assembly == other.assembly
            && self.deployment == other.deployment
            && self.usage_scenarios == other.usage_scenarios
    }
}

impl ArchitectureModel {
    /// Resolves and validates a document. All defects are collected.
    pub fn from_document(doc: &ModelDocument) -> Result<Self, LoadError> {
        resolve::resolve(doc)
    }

    /// Parses a self-contained JSON model (no file references).
    pub fn from_json_str(text: &str) -> Result<Self, LoadError> {
        let doc = document::parse_inline(text, Path::new("<memory>"))?;
        Self::from_document(&doc)
    }

    pub fn to_document(&self) -> ModelDocument {
        document::from_model(self)
    }

    /// Serializes to a self-contained JSON document.
    pub fn to_json(&self) -> String {
        self.to_document().to_json()
    }

    pub fn dictionary(&self) -> &DataDictionary {
        &self.dictionary
    }

    pub fn signatures(&self) -> &[Signature] {
        &self.signatures
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn assembly(&self) -> &Assembly {
        &self.assembly
    }

    pub fn deployment(&self) -> &Deployment {
        &self.deployment
    }

    pub fn usage_scenarios(&self) -> &[UsageScenario] {
        &self.usage_scenarios
    }

    /// Non-fatal findings, e.g. conflicting assignment targets.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn signature(&self, id: &str) -> Option<&Signature> {
        self.index.signatures.get(id).map(|&i| &self.signatures[i])
    }

    pub fn component(&self, id: &str) -> Option<&Component> {
        self.index.components.get(id).map(|&i| &self.components[i])
    }

    /// The component assembled as `instance`.
    pub fn instance_component(&self, instance: &str) -> Option<&Component> {
        self.index
            .instances
            .get(instance)
            .map(|&i| &self.components[i])
    }

    /// The instance that serves `role` of `instance`.
    pub fn connected_instance(&self, instance: &str, role: &str) -> Option<&str> {
        self.index
            .connectors
            .get(&(instance.to_string(), role.to_string()))
            .map(String::as_str)
    }

    /// Node labels of an instance: its component's labels united with those
    /// of the resource container it is allocated to.
    pub fn node_labels_for_instance(&self, instance: &str) -> Result<&LabelSet, ModelError> {
        self.index
            .instance_labels
            .get(instance)
            .ok_or_else(|| ModelError::UnknownInstance(instance.to_string()))
    }
}

/// Loads a model manifest, following relative file references.
pub fn load_model(path: impl AsRef<Path>) -> Result<ArchitectureModel, LoadError> {
    let doc = document::load_document(path.as_ref())?;
    ArchitectureModel::from_document(&doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabelType;

    fn dict() -> DataDictionary {
        DataDictionary::new(vec![
            LabelType::new("T", ["x", "y"]),
            LabelType::new("U", ["z"]),
        ])
    }

    #[test]
    fn assignment_display_round_trips() {
        let d = dict();
        for text in [
            "out.*.* := in.*.*",
            "a.T.x := b.T.x & !c.T.y",
            "a.T.* := b.T.* | c.U.z",
            "RETURN.*.* := TRUE",
        ] {
            let a = Assignment::parse(text, &d).unwrap();
            assert_eq!(a.to_string(), text);
            assert_eq!(Assignment::parse(&a.to_string(), &d).unwrap(), a);
        }
    }

    #[test]
    fn wildcard_shapes_must_match() {
        let d = dict();
        assert!(matches!(
            Assignment::parse("a.T.x := b.T.*", &d),
            Err(AssignmentError::Wildcard(_))
        ));
        assert!(matches!(
            Assignment::parse("a.T.* := b.U.*", &d),
            Err(AssignmentError::Wildcard(_))
        ));
        assert!(matches!(
            Assignment::parse("a.*.* := b.T.*", &d),
            Err(AssignmentError::Wildcard(_))
        ));
        assert!(Assignment::parse("a.T.* := b.T.* & !c.U.z", &d).is_ok());
    }

    #[test]
    fn unknown_labels_in_assignments() {
        let d = dict();
        assert!(matches!(
            Assignment::parse("a.Missing.x := TRUE", &d),
            Err(AssignmentError::Label(LabelError::UnknownType(_)))
        ));
        assert!(matches!(
            Assignment::parse("a.T.q := TRUE", &d),
            Err(AssignmentError::Label(LabelError::UnknownValue { .. }))
        ));
        assert!(matches!(
            Assignment::parse("a.Missing.* := TRUE", &d),
            Err(AssignmentError::Label(LabelError::UnknownType(_)))
        ));
    }
}
