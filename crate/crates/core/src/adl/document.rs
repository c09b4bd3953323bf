//! JSON document format for models.
//!
//! A manifest has the members `dictionary`, `signatures`, `components`,
//! `assembly`, `deployment` and `usageScenarios`. Each member is either given
//! inline or as a string holding a file path relative to the manifest.
//!
//! ```json
//! {
//!   "dictionary": "dictionary.json",
//!   "signatures": [{"id": "buy", "name": "buy", "parameters": ["data"]}],
//!   "components": [{"id": "Shop", "name": "Shop", "provides": ["buy"],
//!                   "seffs": [{"signature": "buy", "actions": [
//!                     {"kind": "variable", "id": "encrypt",
//!                      "assignments": ["data.Encryption.Encrypted := TRUE"]}]}]}],
//!   "assembly": {"instances": [{"id": "shop", "component": "Shop"}]},
//!   "deployment": {"containers": [{"id": "eu", "name": "EU server"}],
//!                  "allocation": {"shop": "eu"}},
//!   "usageScenarios": [...]
//! }
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::value::{MapAccessDeserializer, SeqAccessDeserializer};
use serde::de::{DeserializeOwned, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::{ArchitectureModel, LoadError, SeffAction, UsageAction};
use crate::model::{DataDictionary, LabelSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SignatureDoc {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub parameters: Vec<String>,
    #[serde(default)]
    pub has_return: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RoleDoc {
    pub role: String,
    pub signatures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ComponentDoc {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub provides: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requires: Vec<RoleDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_labels: Vec<String>,
    #[serde(default)]
    pub seffs: Vec<SeffDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SeffDoc {
    pub signature: String,
    pub actions: Vec<SeffActionDoc>,
}

/// SEFF actions. `branch` and `loop` are recognized so they can be rejected
/// with a precise message; their semantics are not supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum SeffActionDoc {
    Variable {
        id: String,
        #[serde(default)]
        assignments: Vec<String>,
    },
    #[serde(rename_all = "camelCase")]
    Call {
        id: String,
        role: String,
        signature: String,
        #[serde(default)]
        bindings: BTreeMap<String, String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        result: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        result_assignments: Vec<String>,
    },
    Return {
        id: String,
        #[serde(default)]
        assignments: Vec<String>,
    },
    Branch {
        id: String,
    },
    Loop {
        id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum UsageActionDoc {
    Variable {
        id: String,
        #[serde(default)]
        assignments: Vec<String>,
    },
    #[serde(rename_all = "camelCase")]
    Call {
        id: String,
        instance: String,
        signature: String,
        #[serde(default)]
        bindings: BTreeMap<String, String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        result: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        result_assignments: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InstanceDoc {
    pub id: String,
    pub component: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConnectorDoc {
    pub from: String,
    pub role: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AssemblyDoc {
    pub instances: Vec<InstanceDoc>,
    #[serde(default)]
    pub connectors: Vec<ConnectorDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ContainerDoc {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DeploymentDoc {
    pub containers: Vec<ContainerDoc>,
    /// instance -> container
    pub allocation: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioDoc {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub user_labels: Vec<String>,
    pub actions: Vec<UsageActionDoc>,
}

/// A self-contained model document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ModelDocument {
    pub dictionary: DataDictionary,
    #[serde(default)]
    pub signatures: Vec<SignatureDoc>,
    #[serde(default)]
    pub components: Vec<ComponentDoc>,
    #[serde(default)]
    pub assembly: AssemblyDoc,
    #[serde(default)]
    pub deployment: DeploymentDoc,
    #[serde(default)]
    pub usage_scenarios: Vec<ScenarioDoc>,
}

impl ModelDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents always serialize")
    }
}

/// A manifest member: inline value or relative file reference.
#[derive(Debug, Clone, PartialEq)]
enum Part<T> {
    Inline(T),
    File(PathBuf),
}

impl<T: Default> Default for Part<T> {
    fn default() -> Self {
        Part::Inline(T::default())
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Part<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct PartVisitor<T>(PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for PartVisitor<T> {
            type Value = Part<T>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an inline value or a relative file path")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Self::Value, E> {
                Ok(Part::File(PathBuf::from(v)))
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Self::Value, A::Error> {
                T::deserialize(MapAccessDeserializer::new(map)).map(Part::Inline)
            }

            fn visit_seq<A: SeqAccess<'de>>(self, seq: A) -> Result<Self::Value, A::Error> {
                T::deserialize(SeqAccessDeserializer::new(seq)).map(Part::Inline)
            }
        }

        d.deserialize_any(PartVisitor(PhantomData))
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Manifest {
    dictionary: Part<DataDictionary>,
    #[serde(default)]
    signatures: Part<Vec<SignatureDoc>>,
    #[serde(default)]
    components: Part<Vec<ComponentDoc>>,
    #[serde(default)]
    assembly: Part<AssemblyDoc>,
    #[serde(default)]
    deployment: Part<DeploymentDoc>,
    #[serde(default)]
    usage_scenarios: Part<Vec<ScenarioDoc>>,
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, LoadError> {
    serde_json::from_str(text).map_err(|e| LoadError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn materialize<T: DeserializeOwned>(part: Part<T>, base: &Path) -> Result<T, LoadError> {
    match part {
        Part::Inline(v) => Ok(v),
        Part::File(rel) => {
            let path = base.join(rel);
            let text = read(&path)?;
            parse_json(&text, &path)
        }
    }
}

/// Reads a manifest and every file it references.
pub fn load_document(path: &Path) -> Result<ModelDocument, LoadError> {
    let text = read(path)?;
    let manifest: Manifest = parse_json(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(ModelDocument {
        dictionary: materialize(manifest.dictionary, base)?,
        signatures: materialize(manifest.signatures, base)?,
        components: materialize(manifest.components, base)?,
        assembly: materialize(manifest.assembly, base)?,
        deployment: materialize(manifest.deployment, base)?,
        usage_scenarios: materialize(manifest.usage_scenarios, base)?,
    })
}

/// Parses a document whose members are all inline.
pub fn parse_inline(text: &str, origin: &Path) -> Result<ModelDocument, LoadError> {
    parse_json(text, origin)
}

fn labels(set: &LabelSet) -> Vec<String> {
    set.iter().map(ToString::to_string).collect()
}

fn strings<T: ToString>(items: &[T]) -> Vec<String> {
    items.iter().map(ToString::to_string).collect()
}

pub(super) fn from_model(model: &ArchitectureModel) -> ModelDocument {
    ModelDocument {
        dictionary: model.dictionary.clone(),
        signatures: model
            .signatures
            .iter()
            .map(|s| SignatureDoc {
                id: s.id.clone(),
                name: s.name.clone(),
                parameters: s.parameters.clone(),
                has_return: s.has_return,
            })
            .collect(),
        components: model
            .components
            .iter()
            .map(|c| ComponentDoc {
                id: c.id.clone(),
                name: c.name.clone(),
                provides: c.provides.clone(),
                requires: c
                    .requires
                    .iter()
                    .map(|r| RoleDoc {
                        role: r.id.clone(),
                        signatures: r.signatures.clone(),
                    })
                    .collect(),
                node_labels: labels(&c.node_labels),
                seffs: c
                    .seffs
                    .iter()
                    .map(|s| SeffDoc {
                        signature: s.signature.clone(),
                        actions: s.actions.iter().map(seff_action_doc).collect(),
                    })
                    .collect(),
            })
            .collect(),
        assembly: AssemblyDoc {
            instances: model
                .assembly
                .instances
                .iter()
                .map(|i| InstanceDoc {
                    id: i.id.clone(),
                    component: i.component.clone(),
                })
                .collect(),
            connectors: model
                .assembly
                .connectors
                .iter()
                .map(|c| ConnectorDoc {
                    from: c.from.clone(),
                    role: c.role.clone(),
                    to: c.to.clone(),
                })
                .collect(),
        },
        deployment: DeploymentDoc {
            containers: model
                .deployment
                .containers
                .iter()
                .map(|c| ContainerDoc {
                    id: c.id.clone(),
                    name: c.name.clone(),
                    node_labels: labels(&c.node_labels),
                })
                .collect(),
            allocation: model.deployment.allocation.clone(),
        },
        usage_scenarios: model
            .usage_scenarios
            .iter()
            .map(|s| ScenarioDoc {
                id: s.id.clone(),
                name: s.name.clone(),
                user_labels: labels(&s.user_labels),
                actions: s.actions.iter().map(usage_action_doc).collect(),
            })
            .collect(),
    }
}

fn seff_action_doc(action: &SeffAction) -> SeffActionDoc {
    match action {
        SeffAction::Variable { id, assignments } => SeffActionDoc::Variable {
            id: id.clone(),
            assignments: strings(assignments),
        },
        SeffAction::ExternalCall {
            id,
            role,
            signature,
            bindings,
            result_variable,
            result_assignments,
        } => SeffActionDoc::Call {
            id: id.clone(),
            role: role.clone(),
            signature: signature.clone(),
            bindings: bindings.clone(),
            result: result_variable.clone(),
            result_assignments: strings(result_assignments),
        },
        SeffAction::Return { id, assignments } => SeffActionDoc::Return {
            id: id.clone(),
            assignments: strings(assignments),
        },
    }
}

fn usage_action_doc(action: &UsageAction) -> UsageActionDoc {
    match action {
        UsageAction::Variable { id, assignments } => UsageActionDoc::Variable {
            id: id.clone(),
            assignments: strings(assignments),
        },
        UsageAction::SystemCall {
            id,
            instance,
            signature,
            bindings,
            result_variable,
            result_assignments,
        } => UsageActionDoc::Call {
            id: id.clone(),
            instance: instance.clone(),
            signature: signature.clone(),
            bindings: bindings.clone(),
            result: result_variable.clone(),
            result_assignments: strings(result_assignments),
        },
    }
}
