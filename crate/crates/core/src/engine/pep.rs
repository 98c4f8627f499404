use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;

use crate::ruledsl::{RuleAst, Value};

/// Every enforcement point the engine fires.
pub const PEP_CATALOG: [&str; 16] = [
    "pep.data.put.pre",
    "pep.data.put.post",
    "pep.data.get.pre",
    "pep.data.get.post",
    "pep.data.remove.pre",
    "pep.data.remove.post",
    "pep.data.replicate.pre",
    "pep.data.replicate.post",
    "pep.collection.create.pre",
    "pep.collection.create.post",
    "pep.meta.add.pre",
    "pep.meta.add.post",
    "pep.stream.ingest.pre",
    "pep.stream.ingest.post",
    "pep.workflow.run.pre",
    "pep.workflow.run.post",
];

pub fn is_known_pep(name: &str) -> bool {
    PEP_CATALOG.contains(&name)
}

/// Read-only system bindings for one firing.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PepContext {
    bindings: BTreeMap<String, Value>,
}

impl PepContext {
    pub fn new(user: &str, role: &str, op: &str) -> Self {
        let mut ctx = PepContext::default();
        ctx.set("user.name", user);
        ctx.set("user.role", role);
        ctx.set("op", op);
        ctx
    }

    fn set(&mut self, k: &str, v: &str) {
        self.bindings.insert(k.to_string(), Value::Str(v.to_string()));
    }

    pub fn obj(mut self, path: &str, owner: &str) -> Self {
        self.set("obj.path", path);
        self.set("obj.owner", owner);
        self
    }

    pub fn coll(mut self, path: &str) -> Self {
        self.set("coll.path", path);
        self
    }

    pub fn resc(mut self, name: &str) -> Self {
        self.set("resc.name", name);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn is_system(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn bindings(&self) -> &BTreeMap<String, Value> {
        &self.bindings
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "detail", rename_all = "lowercase")]
pub enum Verdict {
    Allow,
    Deny(String),
    Error(String),
}

impl Verdict {
    pub fn tag(&self) -> &'static str {
        match self {
            Verdict::Allow => "allow",
            Verdict::Deny(_) => "deny",
            Verdict::Error(_) => "error",
        }
    }
}

/// Compiled rules grouped by enforcement point, each group ordered by
/// priority (high first) then name.
#[derive(Debug, Default)]
pub struct RuleBase {
    pub version: u64,
    by_pep: HashMap<String, Vec<Arc<RuleAst>>>,
}

impl RuleBase {
    pub fn new(version: u64, rules: impl IntoIterator<Item = RuleAst>) -> Self {
        let mut by_pep: HashMap<String, Vec<Arc<RuleAst>>> = HashMap::new();
        for r in rules {
            by_pep.entry(r.pep.clone()).or_default().push(Arc::new(r));
        }
        for group in by_pep.values_mut() {
            group.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.name.cmp(&b.name)));
        }
        RuleBase { version, by_pep }
    }

    pub fn rules_for(&self, pep: &str) -> &[Arc<RuleAst>] {
        self.by_pep.get(pep).map_or(&[], Vec::as_slice)
    }
}
