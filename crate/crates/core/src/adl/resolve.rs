//! Reference resolution and invariant checks for model documents.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use super::document::*;
use super::*;
use crate::model::{is_identifier, validate_dictionary, DataDictionary, LabelError, LabelSet};

struct Resolver<'a> {
    dict: &'a DataDictionary,
    defects: Vec<Defect>,
    warnings: Vec<String>,
    behavior_ids: HashSet<&'a str>,
    signatures: HashMap<&'a str, &'a SignatureDoc>,
}

fn invariant(invariant: impl Into<String>, element: impl Into<String>) -> Defect {
    Defect::Invariant {
        invariant: invariant.into(),
        element: element.into(),
    }
}

fn unknown(kind: &'static str, id: impl Into<String>, referrer: impl Into<String>) -> Defect {
    Defect::UnknownReference {
        kind,
        id: id.into(),
        referrer: referrer.into(),
    }
}

fn overlaps(a: &LabelPattern, b: &LabelPattern) -> bool {
    match (a, b) {
        (LabelPattern::Any, _) | (_, LabelPattern::Any) => true,
        (LabelPattern::AnyValue(t), LabelPattern::AnyValue(u)) => t == u,
        (LabelPattern::AnyValue(t), LabelPattern::Exact(l))
        | (LabelPattern::Exact(l), LabelPattern::AnyValue(t)) => l.label_type() == &**t,
        (LabelPattern::Exact(l), LabelPattern::Exact(m)) => l == m,
    }
}

impl<'a> Resolver<'a> {
    fn push(&mut self, d: Defect) {
        self.defects.push(d);
    }

    fn check_id(&mut self, id: &str, what: &str) {
        if !is_identifier(id) {
            self.push(invariant(
                format!("{what} id must match [A-Za-z_][A-Za-z0-9_]*"),
                id,
            ));
        }
    }

    fn behavior_id(&mut self, id: &'a str) {
        self.check_id(id, "behavior element");
        if !self.behavior_ids.insert(id) {
            self.push(invariant("duplicate behavior element id", id));
        }
    }

    fn labels(&mut self, texts: &[String], referrer: &str) -> LabelSet {
        let mut set = LabelSet::new();
        for text in texts {
            match self.dict.parse_label(text) {
                Ok(l) => set.insert(l),
                Err(LabelError::Malformed(_)) => {
                    self.push(invariant(format!("malformed label '{text}'"), referrer))
                }
                Err(_) => self.push(unknown("label", text.clone(), referrer)),
            }
        }
        set
    }

    fn assignment(&mut self, text: &str, element: &str) -> Option<Assignment> {
        match Assignment::parse(text, self.dict) {
            Ok(a) => Some(a),
            Err(AssignmentError::Label(LabelError::UnknownType(t))) => {
                self.push(unknown("label type", t, element));
                None
            }
            Err(AssignmentError::Label(LabelError::UnknownValue { label_type, value })) => {
                self.push(unknown("label", format!("{label_type}.{value}"), element));
                None
            }
            Err(e) => {
                self.push(invariant(
                    format!("invalid assignment '{text}': {e}"),
                    element,
                ));
                None
            }
        }
    }

    /// Parses an action's assignments and adds their targets to `defined`.
    fn assignments(
        &mut self,
        texts: &[String],
        element: &str,
        returning: bool,
        defined: &mut HashSet<String>,
    ) -> Vec<Assignment> {
        let parsed: Vec<Assignment> = texts
            .iter()
            .filter_map(|t| self.assignment(t, element))
            .collect();
        for a in &parsed {
            let is_return = a.target.variable == RETURN_VARIABLE;
            if returning && !is_return {
                self.push(invariant(
                    format!(
                        "return actions may only assign '{RETURN_VARIABLE}', found '{}'",
                        a.target
                    ),
                    element,
                ));
            } else if !returning && is_return {
                self.push(invariant(
                    format!("'{RETURN_VARIABLE}' may only be assigned by a return action"),
                    element,
                ));
            }
            defined.insert(a.target.variable.clone());
        }
        self.warn_conflicts(&parsed, element);
        parsed
    }

    fn warn_conflicts(&mut self, assignments: &[Assignment], element: &str) {
        let mut by_var: HashMap<&str, Vec<(usize, &LabelPattern)>> = HashMap::new();
        for (i, a) in assignments.iter().enumerate() {
            by_var
                .entry(a.target.variable.as_str())
                .or_default()
                .push((i, &a.target.pattern));
        }
        let mut found = Vec::new();
        for group in by_var.values() {
            for (x, (i, p)) in group.iter().enumerate() {
                for (j, q) in &group[x + 1..] {
                    if overlaps(p, q) {
                        found.push((*i, *j));
                    }
                }
            }
        }
        found.sort_unstable();
        for (i, j) in found {
            self.warnings.push(format!(
                "action '{element}': assignments {i} and {j} write overlapping targets, the later one wins"
            ));
        }
    }

    fn bindings(
        &mut self,
        bindings: &BTreeMap<String, String>,
        signature: &SignatureDoc,
        defined: &HashSet<String>,
        element: &str,
    ) {
        let params: HashSet<&str> = signature.parameters.iter().map(String::as_str).collect();
        for p in &signature.parameters {
            if !bindings.contains_key(p) {
                self.push(invariant(
                    format!("parameter '{p}' of '{}' is not bound", signature.id),
                    element,
                ));
            }
        }
        for (param, var) in bindings {
            if !params.contains(param.as_str()) {
                self.push(invariant(
                    format!("'{param}' is not a parameter of '{}'", signature.id),
                    element,
                ));
            }
            if !defined.contains(var) {
                self.push(invariant(
                    format!("binding '{param}' references undefined variable '{var}'"),
                    element,
                ));
            }
        }
    }

    fn result_variable(
        &mut self,
        result: &Option<String>,
        signature: Option<&SignatureDoc>,
        element: &str,
        defined: &mut HashSet<String>,
    ) {
        if let Some(var) = result {
            if !is_identifier(var) || var == RETURN_VARIABLE {
                self.push(invariant(
                    format!("invalid result variable '{var}'"),
                    element,
                ));
            }
            if signature.is_some_and(|s| !s.has_return) {
                self.push(invariant(
                    "result variable declared but the called service returns nothing",
                    element,
                ));
            }
            defined.insert(var.clone());
        }
    }

    fn seff(
        &mut self,
        component: &'a ComponentDoc,
        seff: &'a SeffDoc,
        roles: &HashMap<&'a str, &'a RoleDoc>,
    ) -> Seff {
        let owner = format!("{}.{}", component.id, seff.signature);
        let signature = self.signatures.get(seff.signature.as_str()).copied();
        let mut defined: HashSet<String> = signature
            .map(|s| s.parameters.iter().cloned().collect())
            .unwrap_or_default();
        if seff.actions.is_empty() {
            self.push(invariant("SEFF has no actions", owner.clone()));
        }
        let mut actions = Vec::with_capacity(seff.actions.len());
        let last = seff.actions.len().saturating_sub(1);
        for (pos, action) in seff.actions.iter().enumerate() {
            match action {
                SeffActionDoc::Variable { id, assignments } => {
                    self.behavior_id(id);
                    let assignments = self.assignments(assignments, id, false, &mut defined);
                    actions.push(SeffAction::Variable {
                        id: id.clone(),
                        assignments,
                    });
                }
                SeffActionDoc::Call {
                    id,
                    role,
                    signature: callee,
                    bindings,
                    result,
                    result_assignments,
                } => {
                    self.behavior_id(id);
                    match roles.get(role.as_str()) {
                        None => self.push(unknown("required role", role.clone(), id.clone())),
                        Some(r) if !r.signatures.contains(callee) => self.push(invariant(
                            format!("role '{role}' does not offer signature '{callee}'"),
                            id.clone(),
                        )),
                        Some(_) => {}
                    }
                    let callee_sig = self.signatures.get(callee.as_str()).copied();
                    match callee_sig {
                        Some(sig) => self.bindings(bindings, sig, &defined, id),
                        None => self.push(unknown("signature", callee.clone(), id.clone())),
                    }
                    self.result_variable(result, callee_sig, id, &mut defined);
                    let result_assignments =
                        self.assignments(result_assignments, id, false, &mut defined);
                    actions.push(SeffAction::ExternalCall {
                        id: id.clone(),
                        role: role.clone(),
                        signature: callee.clone(),
                        bindings: bindings.clone(),
                        result_variable: result.clone(),
                        result_assignments,
                    });
                }
                SeffActionDoc::Return { id, assignments } => {
                    self.behavior_id(id);
                    if pos != last {
                        self.push(invariant(
                            "return must be the last action of a SEFF",
                            id.clone(),
                        ));
                    }
                    let assignments = self.assignments(assignments, id, true, &mut defined);
                    actions.push(SeffAction::Return {
                        id: id.clone(),
                        assignments,
                    });
                }
                SeffActionDoc::Branch { id } => {
                    self.push(invariant("unsupported action kind 'branch'", id.clone()))
                }
                SeffActionDoc::Loop { id } => {
                    self.push(invariant("unsupported action kind 'loop'", id.clone()))
                }
            }
        }
        let resolved = Seff {
            signature: seff.signature.clone(),
            actions,
        };
        if let Some(sig) = signature {
            if sig.has_return && !resolved.has_return() {
                self.push(invariant(
                    "signature declares a return value but the SEFF has no return action",
                    owner,
                ));
            } else if !sig.has_return && resolved.has_return() {
                self.push(invariant(
                    "SEFF returns a value but its signature declares none",
                    owner,
                ));
            }
        }
        resolved
    }

    fn component(&mut self, c: &'a ComponentDoc) -> Component {
        self.check_id(&c.id, "component");
        let mut provided = HashSet::new();
        for sig in &c.provides {
            if !self.signatures.contains_key(sig.as_str()) {
                self.push(unknown("signature", sig.clone(), c.id.clone()));
            }
            if !provided.insert(sig.as_str()) {
                self.push(invariant(
                    format!("signature '{sig}' provided twice"),
                    c.id.clone(),
                ));
            }
        }
        let mut roles = HashMap::new();
        for role in &c.requires {
            self.check_id(&role.role, "role");
            if roles.insert(role.role.as_str(), role).is_some() {
                self.push(invariant(
                    format!("duplicate required role '{}'", role.role),
                    c.id.clone(),
                ));
            }
            for sig in &role.signatures {
                if !self.signatures.contains_key(sig.as_str()) {
                    self.push(unknown(
                        "signature",
                        sig.clone(),
                        format!("{}.{}", c.id, role.role),
                    ));
                }
            }
        }
        let node_labels = self.labels(&c.node_labels, &c.id);
        let mut seen = HashSet::new();
        let mut seffs = Vec::with_capacity(c.seffs.len());
        for seff in &c.seffs {
            if !provided.contains(seff.signature.as_str()) {
                self.push(invariant(
                    format!(
                        "SEFF for signature '{}' which the component does not provide",
                        seff.signature
                    ),
                    c.id.clone(),
                ));
            }
            if !seen.insert(seff.signature.as_str()) {
                self.push(invariant(
                    format!(
                        "provided signature '{}' has more than one SEFF",
                        seff.signature
                    ),
                    c.id.clone(),
                ));
            }
            seffs.push(self.seff(c, seff, &roles));
        }
        for sig in &c.provides {
            if !seen.contains(sig.as_str()) {
                self.push(invariant(
                    format!("provided signature '{sig}' has no SEFF"),
                    c.id.clone(),
                ));
            }
        }
        Component {
            id: c.id.clone(),
            name: c.name.clone(),
            provides: c.provides.clone(),
            requires: c
                .requires
                .iter()
                .map(|r| RequiredRole {
                    id: r.role.clone(),
                    signatures: r.signatures.clone(),
                })
                .collect(),
            node_labels,
            seffs,
        }
    }

    fn scenario(
        &mut self,
        s: &'a ScenarioDoc,
        instances: &HashMap<&str, &'a ComponentDoc>,
    ) -> UsageScenario {
        self.behavior_id(&s.id);
        let user_labels = self.labels(&s.user_labels, &s.id);
        let mut defined = HashSet::new();
        let mut actions = Vec::with_capacity(s.actions.len());
        for action in &s.actions {
            match action {
                UsageActionDoc::Variable { id, assignments } => {
                    self.behavior_id(id);
                    let assignments = self.assignments(assignments, id, false, &mut defined);
                    actions.push(UsageAction::Variable {
                        id: id.clone(),
                        assignments,
                    });
                }
                UsageActionDoc::Call {
                    id,
                    instance,
                    signature,
                    bindings,
                    result,
                    result_assignments,
                } => {
                    self.behavior_id(id);
                    match instances.get(instance.as_str()) {
                        None => self.push(unknown("instance", instance.clone(), id.clone())),
                        Some(c) if !c.provides.contains(signature) => self.push(invariant(
                            format!("instance '{instance}' does not provide '{signature}'"),
                            id.clone(),
                        )),
                        Some(_) => {}
                    }
                    let sig = self.signatures.get(signature.as_str()).copied();
                    match sig {
                        Some(sig) => self.bindings(bindings, sig, &defined, id),
                        None => self.push(unknown("signature", signature.clone(), id.clone())),
                    }
                    self.result_variable(result, sig, id, &mut defined);
                    let result_assignments =
                        self.assignments(result_assignments, id, false, &mut defined);
                    actions.push(UsageAction::SystemCall {
                        id: id.clone(),
                        instance: instance.clone(),
                        signature: signature.clone(),
                        bindings: bindings.clone(),
                        result_variable: result.clone(),
                        result_assignments,
                    });
                }
            }
        }
        UsageScenario {
            id: s.id.clone(),
            name: s.name.clone(),
            user_labels,
            actions,
        }
    }
}

pub(super) fn resolve(doc: &ModelDocument) -> Result<ArchitectureModel, LoadError> {
    let mut r = Resolver {
        dict: &doc.dictionary,
        defects: validate_dictionary(&doc.dictionary)
            .into_iter()
            .map(Defect::Dictionary)
            .collect(),
        warnings: Vec::new(),
        behavior_ids: HashSet::new(),
        signatures: HashMap::new(),
    };

    // signatures
    for s in &doc.signatures {
        r.check_id(&s.id, "signature");
        if r.signatures.insert(&s.id, s).is_some() {
            r.push(invariant("duplicate signature id", s.id.clone()));
        }
        let mut params = HashSet::new();
        for p in &s.parameters {
            if !is_identifier(p) || p == RETURN_VARIABLE {
                r.push(invariant(
                    format!("invalid parameter name '{p}'"),
                    s.id.clone(),
                ));
            }
            if !params.insert(p.as_str()) {
                r.push(invariant(
                    format!("duplicate parameter '{p}'"),
                    s.id.clone(),
                ));
            }
        }
    }
    let signatures: Vec<Signature> = doc
        .signatures
        .iter()
        .map(|s| Signature {
            id: s.id.clone(),
            name: s.name.clone(),
            parameters: s.parameters.clone(),
            has_return: s.has_return,
        })
        .collect();

    // components
    let mut component_docs: HashMap<&str, &ComponentDoc> = HashMap::new();
    for c in &doc.components {
        if component_docs.insert(&c.id, c).is_some() {
            r.push(invariant("duplicate component id", c.id.clone()));
        }
    }
    let components: Vec<Component> = doc.components.iter().map(|c| r.component(c)).collect();

    // assembly
    let mut instances: HashMap<&str, &ComponentDoc> = HashMap::new();
    for inst in &doc.assembly.instances {
        r.check_id(&inst.id, "instance");
        match component_docs.get(inst.component.as_str()) {
            Some(c) => {
                if instances.insert(&inst.id, c).is_some() {
                    r.push(invariant("duplicate instance id", inst.id.clone()));
                }
            }
            None => r.push(unknown(
                "component",
                inst.component.clone(),
                inst.id.clone(),
            )),
        }
    }
    let mut connectors: HashMap<(String, String), String> = HashMap::new();
    for conn in &doc.assembly.connectors {
        let referrer = format!("connector {}.{}", conn.from, conn.role);
        let from = instances.get(conn.from.as_str());
        let to = instances.get(conn.to.as_str());
        if from.is_none() {
            r.push(unknown("instance", conn.from.clone(), referrer.clone()));
        }
        if to.is_none() {
            r.push(unknown("instance", conn.to.clone(), referrer.clone()));
        }
        if let Some(from) = from {
            match from.requires.iter().find(|x| x.role == conn.role) {
                None => r.push(unknown(
                    "required role",
                    conn.role.clone(),
                    referrer.clone(),
                )),
                Some(role) => {
                    if let Some(to) = to {
                        for sig in &role.signatures {
                            if !to.provides.contains(sig) {
                                r.push(invariant(
                                    format!(
                                        "instance '{}' does not provide signature '{sig}'",
                                        conn.to
                                    ),
                                    referrer.clone(),
                                ));
                            }
                        }
                    }
                }
            }
        }
        if connectors
            .insert((conn.from.clone(), conn.role.clone()), conn.to.clone())
            .is_some()
        {
            r.push(invariant("required role connected twice", referrer));
        }
    }

    // deployment
    let mut containers: HashMap<&str, LabelSet> = HashMap::new();
    let mut resolved_containers = Vec::with_capacity(doc.deployment.containers.len());
    for c in &doc.deployment.containers {
        r.check_id(&c.id, "container");
        let node_labels = r.labels(&c.node_labels, &c.id);
        if containers.insert(&c.id, node_labels.clone()).is_some() {
            r.push(invariant("duplicate container id", c.id.clone()));
        }
        resolved_containers.push(ResourceContainer {
            id: c.id.clone(),
            name: c.name.clone(),
            node_labels,
        });
    }
    for (instance, container) in &doc.deployment.allocation {
        let referrer = format!("allocation of '{instance}'");
        if !instances.contains_key(instance.as_str()) {
            r.push(unknown("instance", instance.clone(), referrer.clone()));
        }
        if !containers.contains_key(container.as_str()) {
            r.push(unknown("container", container.clone(), referrer));
        }
    }
    for inst in &doc.assembly.instances {
        if !doc.deployment.allocation.contains_key(&inst.id) {
            r.push(invariant(
                "instance is not allocated to a resource container",
                inst.id.clone(),
            ));
        }
    }

    // usage
    let usage_scenarios: Vec<UsageScenario> = doc
        .usage_scenarios
        .iter()
        .map(|s| r.scenario(s, &instances))
        .collect();

    // every required role of every reachable instance is connected
    let mut queue: VecDeque<&str> = VecDeque::new();
    let mut reachable: HashSet<&str> = HashSet::new();
    for s in &doc.usage_scenarios {
        for a in &s.actions {
            if let UsageActionDoc::Call { instance, .. } = a {
                if instances.contains_key(instance.as_str()) && reachable.insert(instance) {
                    queue.push_back(instance);
                }
            }
        }
    }
    while let Some(inst) = queue.pop_front() {
        for role in &instances[inst].requires {
            match connectors.get(&(inst.to_string(), role.role.clone())) {
                None => r.push(invariant(
                    format!("required role '{}' is not connected", role.role),
                    inst,
                )),
                Some(to) => {
                    if let Some((to, _)) = instances.get_key_value(to.as_str()) {
                        if reachable.insert(to) {
                            queue.push_back(to);
                        }
                    }
                }
            }
        }
    }

    if !r.defects.is_empty() {
        return Err(LoadError::Invalid(r.defects));
    }

    let component_index: HashMap<String, usize> = components
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.clone(), i))
        .collect();
    let mut index = ModelIndex {
        signatures: signatures
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect(),
        instances: doc
            .assembly
            .instances
            .iter()
            .map(|i| (i.id.clone(), component_index[&i.component]))
            .collect(),
        components: component_index,
        connectors,
        instance_labels: HashMap::new(),
    };
    for inst in &doc.assembly.instances {
        let component = &components[index.instances[&inst.id]];
        let container = &containers[doc.deployment.allocation[&inst.id].as_str()];
        index
            .instance_labels
            .insert(inst.id.clone(), component.node_labels.union(container));
    }

    Ok(ArchitectureModel {
        dictionary: doc.dictionary.clone(),
        signatures,
        components,
        assembly: Assembly {
            instances: doc
                .assembly
                .instances
                .iter()
                .map(|i| AssemblyContext {
                    id: i.id.clone(),
                    component: i.component.clone(),
                })
                .collect(),
            connectors: doc
                .assembly
                .connectors
                .iter()
                .map(|c| Connector {
                    from: c.from.clone(),
                    role: c.role.clone(),
                    to: c.to.clone(),
                })
                .collect(),
        },
        deployment: Deployment {
            containers: resolved_containers,
            allocation: doc.deployment.allocation.clone(),
        },
        usage_scenarios,
        warnings: r.warnings,
        index,
    })
}
