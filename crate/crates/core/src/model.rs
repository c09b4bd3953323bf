//! Characteristic vocabulary: label types, the data dictionary and label sets.
//!
//! A [`Label`] is a `(type, value)` pair with presence semantics. Labels can
//! only be obtained from a [`DataDictionary`], so every label in circulation
//! names a pair that exists in some dictionary.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("unknown label type '{0}'")]
    UnknownType(String),
    #[error("unknown label value '{value}' for type '{label_type}'")]
    UnknownValue { label_type: String, value: String },
    #[error("malformed label '{0}', expected Type.Value")]
    Malformed(String),
    #[error("label {0} does not belong to the active dictionary")]
    ForeignLabel(Label),
}

/// Returns true if `s` matches `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A named characteristic with its admissible values, e.g. `Encryption: [Encrypted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelType {
    pub name: String,
    pub values: Vec<String>,
}

impl LabelType {
    pub fn new(
        name: impl Into<String>,
        values: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }
}

/// A `(type, value)` characteristic. Ordered by type name, then value.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    label_type: Arc<str>,
    value: Arc<str>,
}

impl Label {
    pub fn label_type(&self) -> &str {
        &self.label_type
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn is(&self, label_type: &str, value: &str) -> bool {
        &*self.label_type == label_type && &*self.value == value
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.label_type, self.value)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Debug, Clone)]
struct TypeEntry {
    labels: Vec<Label>,
    by_value: HashMap<String, usize>,
}

/// The universe of label types available to a model.
///
/// Lookups are indexed; for a dictionary with duplicate defects the first
/// declaration wins, and [`validate_dictionary`] reports the rest.
#[derive(Clone, Serialize, Deserialize)]
#[serde(from = "DictionaryDocument", into = "DictionaryDocument")]
pub struct DataDictionary {
    label_types: Vec<LabelType>,
    index: HashMap<String, TypeEntry>,
    all: Vec<Label>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct DictionaryDocument {
    label_types: Vec<LabelType>,
}

impl From<DictionaryDocument> for DataDictionary {
    fn from(doc: DictionaryDocument) -> Self {
        DataDictionary::new(doc.label_types)
    }
}

impl From<DataDictionary> for DictionaryDocument {
    fn from(dict: DataDictionary) -> Self {
        DictionaryDocument {
            label_types: dict.label_types,
        }
    }
}

impl PartialEq for DataDictionary {
    fn eq(&self, other: &Self) -> bool {
        self.label_types == other.label_types
    }
}

impl Eq for DataDictionary {}

impl fmt::Debug for DataDictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DataDictionary")
            .field("label_types", &self.label_types)
            .finish()
    }
}

impl Default for DataDictionary {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl DataDictionary {
    pub fn new(label_types: Vec<LabelType>) -> Self {
        let mut index: HashMap<String, TypeEntry> = HashMap::new();
        let mut all = Vec::new();
        for ty in &label_types {
            if index.contains_key(&ty.name) {
                continue;
            }
            let type_name: Arc<str> = Arc::from(ty.name.as_str());
            let mut entry = TypeEntry {
                labels: Vec::with_capacity(ty.values.len()),
                by_value: HashMap::with_capacity(ty.values.len()),
            };
            for value in &ty.values {
                if entry.by_value.contains_key(value) {
                    continue;
                }
                let label = Label {
                    label_type: type_name.clone(),
                    value: Arc::from(value.as_str()),
                };
                entry.by_value.insert(value.clone(), entry.labels.len());
                entry.labels.push(label.clone());
                all.push(label);
            }
            index.insert(ty.name.clone(), entry);
        }
        Self {
            label_types,
            index,
            all,
        }
    }

    pub fn label_types(&self) -> &[LabelType] {
        &self.label_types
    }

    pub fn has_type(&self, label_type: &str) -> bool {
        self.index.contains_key(label_type)
    }

    /// Looks up the label `(label_type, value)`.
    pub fn label(&self, label_type: &str, value: &str) -> Result<Label, LabelError> {
        let entry = self
            .index
            .get(label_type)
            .ok_or_else(|| LabelError::UnknownType(label_type.to_string()))?;
        entry
            .by_value
            .get(value)
            .map(|&i| entry.labels[i].clone())
            .ok_or_else(|| LabelError::UnknownValue {
                label_type: label_type.to_string(),
                value: value.to_string(),
            })
    }

    /// Parses `Type.Value` into a label of this dictionary.
    pub fn parse_label(&self, text: &str) -> Result<Label, LabelError> {
        let (ty, value) = text
            .split_once('.')
            .filter(|(t, v)| is_identifier(t) && is_identifier(v))
            .ok_or_else(|| LabelError::Malformed(text.to_string()))?;
        self.label(ty, value)
    }

    /// All labels of one type, in declaration order.
    pub fn labels_of(&self, label_type: &str) -> Result<&[Label], LabelError> {
        self.index
            .get(label_type)
            .map(|e| e.labels.as_slice())
            .ok_or_else(|| LabelError::UnknownType(label_type.to_string()))
    }

    /// Every label of the dictionary, in declaration order.
    pub fn all_labels(&self) -> &[Label] {
        &self.all
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.index
            .get(label.label_type())
            .is_some_and(|e| e.by_value.contains_key(label.value()))
    }

    /// Rejects any set holding a label this dictionary does not declare.
    pub fn check_set(&self, set: &LabelSet) -> Result<(), LabelError> {
        match set.iter().find(|l| !self.contains(l)) {
            Some(l) => Err(LabelError::ForeignLabel(l.clone())),
            None => Ok(()),
        }
    }

    /// Union of two sets that must both be valid against this dictionary.
    pub fn union(&self, a: &LabelSet, b: &LabelSet) -> Result<LabelSet, LabelError> {
        self.check_set(a)?;
        self.check_set(b)?;
        Ok(a.union(b))
    }

    /// Membership test for a label that must be valid against this dictionary.
    pub fn set_contains(&self, set: &LabelSet, label: &Label) -> Result<bool, LabelError> {
        if !self.contains(label) {
            return Err(LabelError::ForeignLabel(label.clone()));
        }
        self.check_set(set)?;
        Ok(set.contains(label))
    }
}

/// Checks the dictionary invariants and returns one line per defect.
/// An empty dictionary is legal.
pub fn validate_dictionary(dict: &DataDictionary) -> Vec<String> {
    let mut defects = Vec::new();
    let mut seen_types = HashSet::new();
    for ty in dict.label_types() {
        if ty.name.is_empty() {
            defects.push("label type with empty name".to_string());
        } else if !is_identifier(&ty.name) {
            defects.push(format!(
                "label type name '{}' is not an identifier",
                ty.name
            ));
        }
        if !seen_types.insert(ty.name.as_str()) {
            defects.push(format!("duplicate label type name '{}'", ty.name));
        }
        if ty.values.is_empty() {
            defects.push(format!("label type '{}' has no values", ty.name));
        }
        let mut seen_values = HashSet::new();
        for value in &ty.values {
            if !is_identifier(value) {
                defects.push(format!(
                    "value '{}' of label type '{}' is not an identifier",
                    value, ty.name
                ));
            }
            if !seen_values.insert(value.as_str()) {
                defects.push(format!(
                    "duplicate value '{}' in label type '{}'",
                    value, ty.name
                ));
            }
        }
    }
    defects
}

/// A set of labels. Values are immutable; operations return new sets.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct LabelSet(BTreeSet<Label>);

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        let mut out = self.0.clone();
        out.extend(other.0.iter().cloned());
        LabelSet(out)
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.0.contains(label)
    }

    /// Membership by name, without needing a dictionary.
    pub fn has(&self, label_type: &str, value: &str) -> bool {
        self.0.iter().any(|l| l.is(label_type, value))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Iterates in `(type, value)` order.
    pub fn iter(&self) -> impl Iterator<Item = &Label> + '_ {
        self.0.iter()
    }

    pub(crate) fn insert(&mut self, label: Label) {
        self.0.insert(label);
    }

    pub(crate) fn remove(&mut self, label: &Label) {
        self.0.remove(label);
    }

    pub(crate) fn retain(&mut self, f: impl FnMut(&Label) -> bool) {
        self.0.retain(f);
    }
}

impl FromIterator<Label> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        LabelSet(iter.into_iter().collect())
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, label) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{label}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shop_dictionary() -> DataDictionary {
        DataDictionary::new(vec![
            LabelType::new("Encryption", ["Encrypted"]),
            LabelType::new("DataSensitivity", ["Personal"]),
            LabelType::new("ServerLocation", ["EU", "nonEU"]),
        ])
    }

    #[test]
    fn running_example_dictionary_is_valid() {
        assert!(validate_dictionary(&shop_dictionary()).is_empty());
    }

    #[test]
    fn empty_dictionary_is_valid() {
        let dict = DataDictionary::default();
        assert!(validate_dictionary(&dict).is_empty());
        assert!(dict.all_labels().is_empty());
    }

    #[test]
    fn duplicate_type_name_is_one_defect() {
        let dict = DataDictionary::new(vec![
            LabelType::new("Encryption", ["Encrypted"]),
            LabelType::new("Encryption", ["Plain"]),
        ]);
        let report = validate_dictionary(&dict);
        assert_eq!(report.len(), 1);
        assert!(report[0].contains("duplicate label type name"));
    }

    #[test]
    fn other_dictionary_defects() {
        let dict = DataDictionary::new(vec![
            LabelType::new("", ["x"]),
            LabelType::new("Empty", Vec::<String>::new()),
            LabelType::new("Dup", ["a", "a"]),
            LabelType::new("Bad", ["1x"]),
        ]);
        let report = validate_dictionary(&dict);
        assert_eq!(report.len(), 4, "{report:?}");
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("nonEU"));
        assert!(is_identifier("_x9"));
        assert!(!is_identifier("9x"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("a-b"));
    }

    #[test]
    fn unknown_labels_are_rejected() {
        let dict = shop_dictionary();
        assert_eq!(
            dict.label("Missing", "x"),
            Err(LabelError::UnknownType("Missing".into()))
        );
        assert!(matches!(
            dict.label("Encryption", "Plain"),
            Err(LabelError::UnknownValue { .. })
        ));
        assert!(matches!(
            dict.parse_label("Encryption"),
            Err(LabelError::Malformed(_))
        ));
        assert_eq!(
            dict.parse_label("ServerLocation.nonEU")
                .unwrap()
                .to_string(),
            "ServerLocation.nonEU"
        );
    }

    #[test]
    fn union_and_contains() {
        let dict = shop_dictionary();
        let personal = dict.label("DataSensitivity", "Personal").unwrap();
        let encrypted = dict.label("Encryption", "Encrypted").unwrap();
        let a: LabelSet = [personal.clone()].into_iter().collect();
        let b: LabelSet = [encrypted.clone()].into_iter().collect();

        let both = dict.union(&a, &b).unwrap();
        assert_eq!(both.len(), 2);
        assert!(both.contains(&personal) && both.contains(&encrypted));
        assert_eq!(a.len(), 1, "inputs are left untouched");
        assert_eq!(dict.union(&a, &a).unwrap(), a);
        assert!(dict.set_contains(&both, &encrypted).unwrap());
    }

    #[test]
    fn mismatched_dictionary_is_rejected() {
        let dict = shop_dictionary();
        let other = DataDictionary::new(vec![LabelType::new("Role", ["Admin"])]);
        let admin: LabelSet = [other.label("Role", "Admin").unwrap()]
            .into_iter()
            .collect();
        assert!(matches!(
            dict.union(&admin, &LabelSet::new()),
            Err(LabelError::ForeignLabel(_))
        ));
        let personal = dict.label("DataSensitivity", "Personal").unwrap();
        assert!(other.set_contains(&admin, &personal).is_err());
    }

    #[test]
    fn dictionary_json_shape() {
        let json = r#"{"labelTypes":[{"name":"Encryption","values":["Encrypted"]}]}"#;
        let dict: DataDictionary = serde_json::from_str(json).unwrap();
        assert!(dict.label("Encryption", "Encrypted").is_ok());
        assert_eq!(serde_json::to_string(&dict).unwrap(), json);
    }

    fn arb_set() -> impl Strategy<Value = LabelSet> {
        let dict = DataDictionary::new(vec![
            LabelType::new("A", ["x", "y", "z"]),
            LabelType::new("B", ["x", "y"]),
        ]);
        let labels = dict.all_labels().to_vec();
        proptest::sample::subsequence(labels.clone(), 0..=labels.len())
            .prop_map(|ls| ls.into_iter().collect())
    }

    proptest! {
        #[test]
        fn union_is_commutative_associative_idempotent(a in arb_set(), b in arb_set(), c in arb_set()) {
            prop_assert_eq!(a.union(&b), b.union(&a));
            prop_assert_eq!(a.union(&b).union(&c), a.union(&b.union(&c)));
            prop_assert_eq!(a.union(&a), a.clone());
        }
    }
}
