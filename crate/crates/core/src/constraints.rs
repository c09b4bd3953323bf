//! Data flow constraints and their evaluation over propagated sequences.
//!
//! A constraint is a node-level predicate; it is violated at every node where
//! it holds. Constraints come either from a closure (see
//! [`Constraint::from_predicate`]) or from the textual form
//!
//! ```text
//! VIOLATION <name> WHERE <node term> AND DATA <data term>
//! ```
//!
//! where the node term references `node.Type.Value` and the data term may
//! reference both `node.Type.Value` and `data.Type.Value`. A data term with
//! data references holds if at least one in-scope variable satisfies it; a
//! data term without data references is evaluated once for the node.

use std::fmt;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::expr::{Parser, RawRef, SyntaxError, Term};
use crate::model::{DataDictionary, Label, LabelError};
use crate::propagation::{ElementResult, PropagatedSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RefScope {
    Node,
    Data,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConstraintRef {
    pub scope: RefScope,
    pub label: Label,
}

impl fmt::Display for ConstraintRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scope {
            RefScope::Node => write!(f, "node.{}", self.label),
            RefScope::Data => write!(f, "data.{}", self.label),
        }
    }
}

/// Parsed body of a textual constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConstraintExpr {
    pub node: Term<ConstraintRef>,
    pub data: Term<ConstraintRef>,
}

impl ConstraintExpr {
    pub fn quantifies_data(&self) -> bool {
        self.data.refs().iter().any(|r| r.scope == RefScope::Data)
    }
}

pub type Predicate = dyn Fn(&ElementResult) -> bool + Send + Sync;

#[derive(Clone)]
enum Body {
    Expr(ConstraintExpr),
    Predicate(Arc<Predicate>),
}

/// A named node predicate; `true` marks a violation.
#[derive(Clone)]
pub struct Constraint {
    name: String,
    body: Body,
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.body {
            Body::Expr(_) => write!(f, "Constraint({self})"),
            Body::Predicate(_) => write!(f, "Constraint({}, <predicate>)", self.name),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.body {
            Body::Expr(e) => write!(
                f,
                "VIOLATION {} WHERE {} AND DATA {}",
                self.name, e.node, e.data
            ),
            Body::Predicate(_) => write!(f, "VIOLATION {} <predicate>", self.name),
        }
    }
}

impl Constraint {
    /// Wraps a closure. The closure must be pure; violations it reports carry
    /// no matched variable names.
    pub fn from_predicate(
        name: impl Into<String>,
        predicate: impl Fn(&ElementResult) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            body: Body::Predicate(Arc::new(predicate)),
        }
    }

    pub fn from_expr(name: impl Into<String>, expr: ConstraintExpr) -> Self {
        Self {
            name: name.into(),
            body: Body::Expr(expr),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn expr(&self) -> Option<&ConstraintExpr> {
        match &self.body {
            Body::Expr(e) => Some(e),
            Body::Predicate(_) => None,
        }
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            body: self.body.clone(),
        }
    }

    /// Names of the matched variables if the constraint is violated at `result`.
    fn check(&self, result: &ElementResult) -> Result<Option<Vec<String>>, String> {
        match &self.body {
            Body::Expr(e) => Ok(check_expr(e, result)),
            Body::Predicate(p) => match panic::catch_unwind(AssertUnwindSafe(|| p(result))) {
                Ok(true) => Ok(Some(Vec::new())),
                Ok(false) => Ok(None),
                Err(payload) => Err(payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "predicate panicked".to_string())),
            },
        }
    }
}

fn check_expr(e: &ConstraintExpr, result: &ElementResult) -> Option<Vec<String>> {
    let node_labels = result.node_labels();
    let node_holds = e.node.eval(&mut |r| node_labels.contains(&r.label));
    if !node_holds {
        return None;
    }
    let vars = result.all_data_flow_variables();
    if e.quantifies_data() {
        let matched: Vec<String> = vars
            .iter()
            .filter(|v| {
                e.data.eval(&mut |r| match r.scope {
                    RefScope::Node => node_labels.contains(&r.label),
                    RefScope::Data => v.labels().contains(&r.label),
                })
            })
            .map(|v| v.name().to_string())
            .collect();
        (!matched.is_empty()).then_some(matched)
    } else {
        e.data
            .eval(&mut |r| node_labels.contains(&r.label))
            .then(|| vars.iter().map(|v| v.name().to_string()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error("syntax error {0}")]
    Syntax(#[from] SyntaxError),
    #[error("at column {column}: {source}")]
    Label { column: usize, source: LabelError },
    #[error("at column {column}: {message}")]
    Reference { column: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintFileError {
    #[error("cannot read '{path}': {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: ConstraintError,
    },
    #[error("line {line}: duplicate constraint name '{name}'")]
    DuplicateName { line: usize, name: String },
}

fn resolve_ref(
    r: RawRef,
    dict: &DataDictionary,
    allow_data: bool,
) -> Result<ConstraintRef, ConstraintError> {
    let scope = match r.base.as_str() {
        "node" => RefScope::Node,
        "data" if allow_data => RefScope::Data,
        "data" => {
            return Err(ConstraintError::Reference {
                column: r.column,
                message: "data references are not allowed in the node term".into(),
            })
        }
        other => {
            return Err(ConstraintError::Reference {
                column: r.column,
                message: format!("references must start with 'node' or 'data', found '{other}'"),
            })
        }
    };
    let (Some(label_type), Some(value)) = (&r.label_type, &r.value) else {
        return Err(ConstraintError::Reference {
            column: r.column,
            message: format!("wildcards are not allowed in constraints: '{r}'"),
        });
    };
    let label = dict
        .label(label_type, value)
        .map_err(|source| ConstraintError::Label {
            column: r.column,
            source,
        })?;
    Ok(ConstraintRef { scope, label })
}

/// Parses `VIOLATION <name> WHERE <node term> AND DATA <data term>`.
pub fn parse_constraint(text: &str, dict: &DataDictionary) -> Result<Constraint, ConstraintError> {
    let mut p = Parser::new(text)?;
    p.keyword("VIOLATION")?;
    let (name, _) = p.ident("constraint name")?;
    p.keyword("WHERE")?;
    let node = p.term()?;
    p.keyword("AND")?;
    p.keyword("DATA")?;
    let data = p.term()?;
    p.finish()?;
    let node = node.try_map(&mut |r| resolve_ref(r, dict, false))?;
    let data = data.try_map(&mut |r| resolve_ref(r, dict, true))?;
    Ok(Constraint::from_expr(name, ConstraintExpr { node, data }))
}

/// Parses a constraint file: one constraint per line, `#` starts a comment.
pub fn parse_constraint_file(
    text: &str,
    dict: &DataDictionary,
) -> Result<Vec<Constraint>, ConstraintFileError> {
    let mut out: Vec<Constraint> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let c = parse_constraint(line, dict).map_err(|source| ConstraintFileError::Parse {
            line: i + 1,
            source,
        })?;
        if out.iter().any(|o| o.name() == c.name()) {
            return Err(ConstraintFileError::DuplicateName {
                line: i + 1,
                name: c.name().to_string(),
            });
        }
        out.push(c);
    }
    Ok(out)
}

pub fn load_constraints(
    path: impl AsRef<Path>,
    dict: &DataDictionary,
) -> Result<Vec<Constraint>, ConstraintFileError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ConstraintFileError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_constraint_file(&text, dict)
}

/// A node at which a constraint holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Violation {
    pub constraint: String,
    pub sequence_index: usize,
    pub element_index: usize,
    pub element_id: String,
    pub variables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("constraint '{constraint}' failed at sequence {sequence_index}, element {element_index}: {message}")]
    PredicateFailed {
        constraint: String,
        sequence_index: usize,
        element_index: usize,
        message: String,
    },
    #[error("constraint name '{0}' used more than once")]
    DuplicateName(String),
}

/// Failures collected by [`query_many`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} constraint evaluation(s) failed; first: {}", .0.len(), .0[0])]
pub struct QueryFailures(pub Vec<QueryError>);

/// Evaluates `constraint` at every node of `propagated`, in node order.
pub fn query(
    propagated: &PropagatedSequence,
    constraint: &Constraint,
) -> Result<Vec<Violation>, QueryError> {
    let mut out = Vec::new();
    for (element_index, result) in propagated.results().iter().enumerate() {
        let matched = constraint
            .check(result)
            .map_err(|message| QueryError::PredicateFailed {
                constraint: constraint.name().to_string(),
                sequence_index: propagated.sequence_index(),
                element_index,
                message,
            })?;
        if let Some(variables) = matched {
            out.push(Violation {
                constraint: constraint.name().to_string(),
                sequence_index: propagated.sequence_index(),
                element_index,
                element_id: result.element().id().to_string(),
                variables,
            });
        }
    }
    Ok(out)
}

/// Evaluates every constraint over every propagated sequence, reusing the
/// given propagation results. Keys follow the constraint order.
pub fn query_many(
    propagated: &[PropagatedSequence],
    constraints: &[Constraint],
) -> Result<IndexMap<String, Vec<Violation>>, QueryFailures> {
    let mut out: IndexMap<String, Vec<Violation>> = IndexMap::with_capacity(constraints.len());
    let mut errors = Vec::new();
    for c in constraints {
        if out.contains_key(c.name()) {
            errors.push(QueryError::DuplicateName(c.name().to_string()));
            continue;
        }
        let mut violations = Vec::new();
        for p in propagated {
            match query(p, c) {
                Ok(v) => violations.extend(v),
                Err(e) => errors.push(e),
            }
        }
        out.insert(c.name().to_string(), violations);
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(QueryFailures(errors))
    }
}
