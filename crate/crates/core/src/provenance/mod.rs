//! Workflow collections: content-addressed procedures, captured runs,
//! re-execution against pinned inputs, and run comparison.

mod gate;
mod types;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

pub(crate) use gate::RunGate;
pub use types::{RunRecord, RunStatus, WorkflowVersion};

use crate::catalog::{CollectionKind, Mutation, Perm, ReplicaStatus};
use crate::checksum::sha256_hex;
use crate::engine::{IoTracker, Zone};
use crate::error::{Error, Result};
use crate::path;
use crate::ruledsl::{parse_procedure, print_procedure, Action, Call, Expr, ProcedureAst, Rhs, Value};

/// Comparison of one path between two runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PathDiff {
    Identical { checksum: String },
    Differing { a: String, b: String },
    OnlyInA { checksum: String },
    OnlyInB { checksum: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BindingDiff {
    pub a: Option<Value>,
    pub b: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiffReport {
    pub run_a: String,
    pub run_b: String,
    pub workflow_mismatch: bool,
    pub inputs: BTreeMap<String, PathDiff>,
    pub outputs: BTreeMap<String, PathDiff>,
    /// Only bindings whose values differ.
    pub bindings: BTreeMap<String, BindingDiff>,
}

impl DiffReport {
    /// Paths (inputs or outputs) that are not identical in both runs.
    pub fn differing_paths(&self) -> BTreeSet<String> {
        self.inputs
            .iter()
            .chain(self.outputs.iter())
            .filter(|(_, d)| !matches!(d, PathDiff::Identical { .. }))
            .map(|(p, _)| p.clone())
            .collect()
    }
}

fn diff_maps(a: &BTreeMap<String, String>, b: &BTreeMap<String, String>) -> BTreeMap<String, PathDiff> {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| {
            let d = match (a.get(k), b.get(k)) {
                (Some(x), Some(y)) if x == y => PathDiff::Identical { checksum: x.clone() },
                (Some(x), Some(y)) => PathDiff::Differing { a: x.clone(), b: y.clone() },
                (Some(x), None) => PathDiff::OnlyInA { checksum: x.clone() },
                (None, Some(y)) => PathDiff::OnlyInB { checksum: y.clone() },
                (None, None) => unreachable!("key drawn from one of the maps"),
            };
            (k.clone(), d)
        })
        .collect()
}

/// Paths named by literal (or bound-parameter) arguments in read and write
/// positions of the procedure's micro-service calls.
pub fn static_paths(
    zone: &Zone,
    p: &ProcedureAst,
    base: &str,
    bindings: &BTreeMap<String, Value>,
) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut reads = BTreeSet::new();
    let mut writes = BTreeSet::new();
    let mut visit_call = |c: &Call| {
        let Some(ms) = zone.microservice(&c.name) else { return };
        for (positions, out) in [(&ms.reads, &mut reads), (&ms.writes, &mut writes)] {
            for &i in positions.iter() {
                let lit = match c.args.get(i) {
                    Some(Expr::Str(s)) => Some(s.clone()),
                    Some(Expr::Var(v)) => match bindings.get(v) {
                        Some(Value::Str(s)) => Some(s.clone()),
                        _ => None,
                    },
                    _ => None,
                };
                if let Some(p) = lit {
                    let abs = path::resolve(base, &p);
                    if path::validate(&abs).is_ok() {
                        out.insert(abs);
                    }
                }
            }
        }
    };
    fn walk(chain: &[Action], f: &mut dyn FnMut(&Call)) {
        for a in chain {
            match a {
                Action::Call(c) | Action::Assign { value: Rhs::Call(c), .. } => f(c),
                Action::If { then, otherwise, .. } => {
                    walk(then, f);
                    if let Some(o) = otherwise {
                        walk(o, f);
                    }
                }
                Action::Foreach { body, .. } => walk(body, f),
                _ => {}
            }
        }
    }
    walk(&p.body, &mut visit_call);
    (reads, writes)
}

impl Zone {
    /// Registers the procedure in `source` with the workflow collection
    /// `coll`. Identical procedures share one id.
    pub fn attach_workflow(&self, actor: &str, coll: &str, source: &str) -> Result<WorkflowVersion> {
        match self.catalog.collection(coll) {
            Some(c) if c.kind == CollectionKind::Workflow => {}
            _ => return Err(Error::NotAWorkflowCollection(coll.to_string())),
        }
        let proc = parse_procedure(source)?;
        self.catalog.require(coll, actor, Perm::Write)?;
        let canonical = print_procedure(&proc);
        let workflow_id = sha256_hex(canonical.as_bytes());
        if let Some(existing) = self.catalog.read().workflows.get(&workflow_id) {
            return Ok(existing.clone());
        }
        let version = WorkflowVersion {
            workflow_id: workflow_id.clone(),
            name: proc.name.clone(),
            params: proc.params.clone(),
            source: canonical,
            collection: coll.to_string(),
            attached_us: crate::now_us(),
        };
        self.commit(Mutation::AttachWorkflow { version: version.clone() })?;
        self.audit(actor, "workflow.attach", format!("{coll} {} {workflow_id}", proc.name));
        Ok(version)
    }

    pub fn workflow(&self, workflow_id: &str) -> Option<WorkflowVersion> {
        self.catalog.read().workflows.get(workflow_id).cloned()
    }

    /// Versions attached to `coll`, oldest first.
    pub fn workflows_in(&self, coll: &str) -> Vec<WorkflowVersion> {
        let mut v: Vec<_> = self.catalog.read().workflows.values().filter(|w| w.collection == coll).cloned().collect();
        v.sort_by(|a, b| a.attached_us.cmp(&b.attached_us).then_with(|| a.workflow_id.cmp(&b.workflow_id)));
        v
    }

    pub fn run(&self, actor: &str, run_id: &str) -> Result<RunRecord> {
        let run = self.catalog.read().runs.get(run_id).cloned().ok_or_else(|| Error::NoSuchRun(run_id.to_string()))?;
        self.catalog.require(&run.collection, actor, Perm::Read)?;
        Ok(run)
    }

    pub fn run_workflow(&self, actor: &str, workflow_id: &str, bindings: BTreeMap<String, Value>) -> Result<RunRecord> {
        self.execute(actor, workflow_id, bindings, None)
    }

    /// Re-executes a run after checking its inputs are unchanged. Bindings
    /// are the original ones overlaid with `overrides`.
    pub fn rerun(&self, actor: &str, run_id: &str, overrides: BTreeMap<String, Value>) -> Result<RunRecord> {
        let orig = self.run(actor, run_id)?;
        let stale: Vec<String> = {
            let st = self.catalog.read();
            orig.inputs
                .iter()
                .filter(|(p, sum)| st.objects.get(*p).and_then(|o| o.checksum()) != Some(sum.as_str()))
                .map(|(p, _)| p.clone())
                .collect()
        };
        if !stale.is_empty() {
            return Err(Error::StaleInputs(stale));
        }
        let mut bindings = orig.bindings.clone();
        bindings.extend(overrides);
        self.execute(actor, &orig.workflow_id, bindings, Some(orig.run_id))
    }

    pub fn diff_runs(&self, actor: &str, a: &str, b: &str) -> Result<DiffReport> {
        let ra = self.run(actor, a)?;
        let rb = self.run(actor, b)?;
        let names: BTreeSet<&String> = ra.bindings.keys().chain(rb.bindings.keys()).collect();
        let bindings = names
            .into_iter()
            .filter(|k| ra.bindings.get(*k) != rb.bindings.get(*k))
            .map(|k| (k.clone(), BindingDiff { a: ra.bindings.get(k).cloned(), b: rb.bindings.get(k).cloned() }))
            .collect();
        Ok(DiffReport {
            run_a: ra.run_id.clone(),
            run_b: rb.run_id.clone(),
            workflow_mismatch: ra.workflow_id != rb.workflow_id,
            inputs: diff_maps(&ra.inputs, &rb.inputs),
            outputs: diff_maps(&ra.outputs, &rb.outputs),
            bindings,
        })
    }

    fn execute(
        &self,
        actor: &str,
        workflow_id: &str,
        bindings: BTreeMap<String, Value>,
        rerun_of: Option<String>,
    ) -> Result<RunRecord> {
        let wf = self.workflow(workflow_id).ok_or_else(|| Error::NoSuchWorkflow(workflow_id.to_string()))?;
        let params: BTreeSet<&String> = wf.params.iter().collect();
        let given: BTreeSet<&String> = bindings.keys().collect();
        if params != given {
            let missing: Vec<_> = params.difference(&given).map(|s| format!("${s}")).collect();
            let unknown: Vec<_> = given.difference(&params).map(|s| format!("${s}")).collect();
            return Err(Error::BadBindings(format!(
                "missing [{}], unknown [{}]",
                missing.join(", "),
                unknown.join(", ")
            )));
        }
        let proc = parse_procedure(&wf.source).map_err(|e| Error::CorruptJournal(format!("stored workflow: {e}")))?;
        self.catalog.require(&wf.collection, actor, Perm::Read)?;
        let ctx = self.context(actor, "workflow.run")?.coll(&wf.collection);
        self.pre("pep.workflow.run.pre", &ctx)?;

        let (reads, writes) = static_paths(self, &proc, &wf.collection, &bindings);
        let _slot = self.runs.enter(reads.iter().chain(writes.iter()).cloned().collect());
        let t_start = crate::now_us();
        let mut inputs = BTreeMap::new();
        {
            let st = self.catalog.read();
            for p in &reads {
                let sum = st.objects.get(p).and_then(|o| o.checksum()).ok_or_else(|| Error::MissingInput(p.clone()))?;
                inputs.insert(p.clone(), sum.to_string());
            }
        }
        let tracker = IoTracker::default();
        let outcome = self.run_procedure(&proc, &ctx, &wf.collection, bindings.clone(), &tracker);
        for (p, sum) in tracker.reads() {
            inputs.entry(p).or_insert(sum);
        }
        let written = tracker.writes();
        let (status, outputs) = match outcome {
            Ok(()) => {
                let st = self.catalog.read();
                let outputs = written
                    .keys()
                    .filter_map(|p| st.objects.get(p).and_then(|o| o.checksum()).map(|s| (p.clone(), s.to_string())))
                    .collect();
                (RunStatus::Ok, outputs)
            }
            Err(detail) => {
                for p in written.keys() {
                    self.flag_suspect(p);
                }
                (RunStatus::Failed { detail }, BTreeMap::new())
            }
        };
        let run = RunRecord {
            run_id: uuid::Uuid::new_v4().simple().to_string(),
            workflow_id: workflow_id.to_string(),
            collection: wf.collection.clone(),
            actor: actor.to_string(),
            bindings,
            inputs,
            outputs,
            status,
            t_start,
            t_end: crate::now_us(),
            rerun_of,
        };
        self.commit(Mutation::RecordRun { run: run.clone() })?;
        let state = match &run.status {
            RunStatus::Ok => "ok".to_string(),
            RunStatus::Failed { detail } => format!("failed: {detail}"),
        };
        self.audit(actor, "workflow.run", format!("{workflow_id} run={} {state}", run.run_id));
        self.export_run(&wf, &run);
        drop(_slot);
        self.post("pep.workflow.run.post", &ctx);
        Ok(run)
    }

    fn run_procedure(
        &self,
        proc: &ProcedureAst,
        ctx: &crate::engine::PepContext,
        base: &str,
        mut locals: BTreeMap<String, Value>,
        tracker: &IoTracker,
    ) -> std::result::Result<(), String> {
        use crate::engine::Flow;
        match self.exec_chain(&proc.body, ctx, base, &mut locals, Some(tracker)) {
            Ok(Flow::Continue | Flow::Allow) => Ok(()),
            Ok(Flow::Deny(reason)) => Err(format!("denied: {reason}")),
            Err(e) => Err(e.to_string()),
        }
    }

    fn flag_suspect(&self, p: &str) {
        let Some(obj) = self.catalog.object(p) else { return };
        for r in obj.replicas.iter().filter(|r| r.status == ReplicaStatus::Good) {
            let _ = self.commit(Mutation::SetReplicaStatus {
                path: p.to_string(),
                resource: r.resource.clone(),
                status: ReplicaStatus::Suspect,
            });
        }
    }

    /// Stores the run as `<collection>/runs/<run_id>.json`, owned by the
    /// collection owner. Failures are audited; the journaled record stands.
    fn export_run(&self, wf: &WorkflowVersion, run: &RunRecord) {
        let result = (|| -> Result<()> {
            let owner = self
                .catalog
                .collection(&wf.collection)
                .map(|c| c.owner)
                .ok_or_else(|| Error::NotAWorkflowCollection(wf.collection.clone()))?;
            let runs = path::join(&wf.collection, "runs");
            if self.catalog.collection(&runs).is_none() {
                match self.catalog.make_collection(&owner, &runs, None, CollectionKind::Plain) {
                    Ok(()) | Err(Error::Duplicate(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            let json = serde_json::to_vec_pretty(run).map_err(|e| Error::Invalid(e.to_string()))?;
            let resc = self.require_default_resource()?;
            self.put(&owner, &path::join(&runs, &format!("{}.json", run.run_id)), &json, Some(&resc))?;
            Ok(())
        })();
        if let Err(e) = result {
            self.audit(&run.actor, "workflow.export_failed", format!("{}: {e}", run.run_id));
        }
    }
}
