//! Plain-text renderings used by the command-line tool.
//!
//! All output is deterministic: sequences in scenario order, variables sorted
//! by name, labels by type then value.

use std::fmt::Write;

use indexmap::IndexMap;

use crate::constraints::Violation;
use crate::extraction::ActionSequence;
use crate::model::LabelSet;
use crate::propagation::PropagatedSequence;

/// `SEQUENCE <i>` headers followed by `<index> <kind> <model-element-id>` lines.
pub fn format_sequences(sequences: &[ActionSequence]) -> String {
    let mut out = String::new();
    for s in sequences {
        writeln!(out, "SEQUENCE {}", s.index()).unwrap();
        for (i, e) in s.elements().iter().enumerate() {
            writeln!(out, "{i} {} {}", e.kind().name(), e.id()).unwrap();
        }
    }
    out
}

fn labels(set: &LabelSet) -> String {
    if set.is_empty() {
        return "-".to_string();
    }
    set.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// One `ELEM` line per node with its node labels, then one `VAR` line per
/// in-scope variable.
pub fn format_propagation(propagated: &[PropagatedSequence]) -> String {
    let mut out = String::new();
    for p in propagated {
        writeln!(out, "SEQUENCE {}", p.sequence_index()).unwrap();
        for (i, r) in p.results().iter().enumerate() {
            let e = r.element();
            writeln!(
                out,
                "ELEM {i} {} {} NODE {}",
                e.kind().name(),
                e.id(),
                labels(r.node_labels())
            )
            .unwrap();
            for v in r.all_data_flow_variables() {
                writeln!(out, "  VAR {} {}", v.name(), labels(v.labels())).unwrap();
            }
        }
    }
    out
}

/// Violation lines followed by `TOTAL <n> violations`.
pub fn format_report(results: &IndexMap<String, Vec<Violation>>) -> String {
    let mut out = String::new();
    let mut total = 0;
    for violations in results.values() {
        for v in violations {
            let vars = if v.variables.is_empty() {
                "-".to_string()
            } else {
                v.variables.join(",")
            };
            writeln!(
                out,
                "CONSTRAINT {} SEQ {} ELEM {} NODE {} VARS {}",
                v.constraint, v.sequence_index, v.element_index, v.element_id, vars
            )
            .unwrap();
            total += 1;
        }
    }
    writeln!(out, "TOTAL {total} violations").unwrap();
    out
}
