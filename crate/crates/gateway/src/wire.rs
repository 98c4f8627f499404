//! JSON bodies exchanged between the server and its clients.

use std::collections::BTreeMap;

use pgzone_core::ruledsl::Value;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub user: String,
    pub secret: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub user: String,
    pub expires_us: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRequest {
    pub resource: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectionRequest {
    pub path: String,
    #[serde(default = "plain")]
    pub kind: String,
    pub owner: Option<String>,
}

fn plain() -> String {
    "plain".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AclRequest {
    pub path: String,
    pub principal: String,
    /// `read`, `write`, `own`, or absent to revoke.
    pub perm: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaRequest {
    pub path: String,
    pub name: String,
    pub value: String,
    #[serde(default)]
    pub comment: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RulesRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RulesAdded {
    pub added: Vec<String>,
    pub version: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MicroServiceRequest {
    pub name: String,
    /// Value every call returns.
    pub result: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkflowRequest {
    pub collection: String,
    pub source: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRequest {
    pub workflow_id: String,
    #[serde(default)]
    pub bindings: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RerunRequest {
    #[serde(default)]
    pub overrides: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserRequest {
    pub name: String,
    #[serde(default = "user_role")]
    pub role: String,
    pub secret: String,
}

fn user_role() -> String {
    "user".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceRequest {
    pub name: String,
    pub driver: String,
    pub root: String,
    #[serde(default = "cache")]
    pub kind: String,
    #[serde(default)]
    pub default: bool,
}

fn cache() -> String {
    "cache".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriverRequest {
    pub name: String,
    /// One of the built-in driver kinds: `mem`, `localfs`, `archive`.
    pub kind: String,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Coarse class: unauthenticated, denied, not_found, conflict,
    /// bad_request or internal.
    pub error: String,
    /// Specific error, e.g. `Denied` or `StaleInputs`.
    pub kind: String,
    pub message: String,
    pub request_id: String,
}
