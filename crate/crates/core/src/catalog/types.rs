use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::drivers::PhysicalRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Admin,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::User => "user",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "admin" => Some(Role::Admin),
            "user" => Some(Role::User),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub name: String,
    pub role: Role,
    /// `sha256$<salt hex>$<digest hex>`; the clear secret is never kept.
    pub secret_hash: String,
    pub groups: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Cache,
    Archive,
}

impl ResourceKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cache" => Some(ResourceKind::Cache),
            "archive" => Some(ResourceKind::Archive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub name: String,
    pub driver: String,
    pub root: String,
    pub kind: ResourceKind,
}

/// Access levels, ordered `read < write < own`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perm {
    Read,
    Write,
    Own,
}

impl Perm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "read" => Some(Perm::Read),
            "write" => Some(Perm::Write),
            "own" => Some(Perm::Own),
            _ => None,
        }
    }
}

pub type Acl = BTreeMap<String, Perm>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectionKind {
    Plain,
    Stream,
    Workflow,
}

impl CollectionKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plain" => Some(CollectionKind::Plain),
            "stream" => Some(CollectionKind::Stream),
            "workflow" => Some(CollectionKind::Workflow),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collection {
    pub path: String,
    pub owner: String,
    pub acl: Acl,
    pub kind: CollectionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplicaStatus {
    Good,
    Stale,
    Suspect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replica {
    pub resource: String,
    pub physical_ref: PhysicalRef,
    pub checksum: String,
    pub size: u64,
    pub status: ReplicaStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataObject {
    pub path: String,
    pub owner: String,
    pub acl: Acl,
    pub replicas: Vec<Replica>,
    pub version: u64,
}

impl DataObject {
    pub fn good_replicas(&self) -> impl Iterator<Item = &Replica> {
        self.replicas.iter().filter(|r| r.status == ReplicaStatus::Good)
    }

    /// Checksum shared by the good replicas, if any.
    pub fn checksum(&self) -> Option<&str> {
        self.good_replicas().next().map(|r| r.checksum.as_str())
    }

    pub fn replica_on(&self, resource: &str) -> Option<&Replica> {
        self.replicas.iter().find(|r| r.resource == resource)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AvuTriple {
    pub attr_name: String,
    pub attr_value: String,
    #[serde(default)]
    pub attr_comment: String,
}

impl AvuTriple {
    pub fn new(name: impl Into<String>, value: impl Into<String>, comment: impl Into<String>) -> Self {
        AvuTriple { attr_name: name.into(), attr_value: value.into(), attr_comment: comment.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub when: u64,
    pub actor: String,
    pub event: String,
    pub detail: String,
}

/// A physical replica the catalog no longer references but the driver
/// refused to unlink; left for operator action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrphanReplica {
    pub resource: String,
    pub physical_ref: PhysicalRef,
    pub former_path: String,
    pub checksum: String,
    pub when: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub name: String,
    pub pep: String,
    pub priority: i64,
    /// Canonical printed form of the rule.
    pub source: String,
    /// Rule-base version at which the rule was added.
    pub added_in: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchEntry {
    pub url: String,
    pub path: String,
    pub checksum: String,
}
