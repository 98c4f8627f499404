use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ruledsl::Value;

/// One attached version of a workflow procedure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowVersion {
    /// SHA-256 of the canonical printed procedure.
    pub workflow_id: String,
    pub name: String,
    pub params: Vec<String>,
    pub source: String,
    pub collection: String,
    pub attached_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed { detail: String },
}

/// Immutable record of one workflow execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub workflow_id: String,
    pub collection: String,
    pub actor: String,
    pub bindings: BTreeMap<String, Value>,
    /// Logical path → checksum captured before the body ran.
    pub inputs: BTreeMap<String, String>,
    /// Logical path → checksum after completion; empty unless `status` is ok.
    pub outputs: BTreeMap<String, String>,
    pub status: RunStatus,
    pub t_start: u64,
    pub t_end: u64,
    pub rerun_of: Option<String>,
}
