use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::avu::AvuStore;
use super::types::*;
use crate::checksum::is_checksum;
use crate::drivers::{DriverKind, PhysicalRef};
use crate::error::{Error, Result};
use crate::path;
use crate::provenance::{RunRecord, WorkflowVersion};
use crate::streams::SegmentMeta;

/// Everything the zone knows, across all name spaces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogState {
    pub last_seq: u64,
    pub users: BTreeMap<String, User>,
    /// Drivers registered after boot; `None` for host-provided code.
    pub drivers: BTreeMap<String, Option<DriverKind>>,
    pub resources: BTreeMap<String, Resource>,
    pub collections: BTreeMap<String, Collection>,
    pub objects: BTreeMap<String, DataObject>,
    pub avus: AvuStore,
    pub orphans: Vec<OrphanReplica>,
    pub rules: BTreeMap<String, RuleRecord>,
    pub rule_version: u64,
    pub workflows: BTreeMap<String, WorkflowVersion>,
    pub runs: BTreeMap<String, RunRecord>,
    pub segments: BTreeMap<String, Vec<SegmentMeta>>,
    pub fetch_cache: BTreeMap<String, FetchEntry>,
    pub audit: Vec<AuditEntry>,
}

/// One journaled change. Every nondeterministic input (ids, salts,
/// checksums, timestamps) is carried in the mutation so replay is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "args", rename_all = "snake_case")]
pub enum Mutation {
    CreateUser { name: String, role: Role, secret_hash: String },
    AddGroupMember { user: String, group: String },
    RegisterDriver { name: String, kind: Option<DriverKind> },
    RegisterResource { name: String, driver: String, root: String, kind: ResourceKind },
    MakeCollection { path: String, owner: String, kind: CollectionKind },
    SetAcl { path: String, principal: String, perm: Option<Perm> },
    PutObject { path: String, owner: String, replica: Replica },
    AddReplica { path: String, replica: Replica },
    SetReplicaStatus { path: String, resource: String, status: ReplicaStatus },
    DropReplica { path: String, resource: String },
    RemoveObject { path: String },
    AddOrphan { resource: String, physical_ref: PhysicalRef, former_path: String, checksum: String },
    AddAvu { path: String, triple: AvuTriple },
    AddRule { name: String, pep: String, priority: i64, source: String },
    RemoveRule { name: String },
    AttachWorkflow { version: WorkflowVersion },
    RecordRun { run: RunRecord },
    AddSegment { collection: String, segment: SegmentMeta },
    RecordFetch { entry: FetchEntry },
    Audit { actor: String, event: String, detail: String },
}

impl Mutation {
    pub fn op_name(&self) -> String {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(m)) => m.get("op").and_then(|v| v.as_str()).unwrap_or("").to_string(),
            _ => String::new(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

impl CatalogState {
    pub fn path_exists(&self, p: &str) -> bool {
        p == "/" || self.collections.contains_key(p) || self.objects.contains_key(p)
    }

    pub fn collection_exists(&self, p: &str) -> bool {
        p == "/" || self.collections.contains_key(p)
    }

    /// Known ACL principals: user names and group names.
    pub fn principal_exists(&self, name: &str) -> bool {
        self.users.contains_key(name) || self.users.values().any(|u| u.groups.contains(name))
    }

    fn check_replica(&self, r: &Replica) -> Result<()> {
        if !self.resources.contains_key(&r.resource) {
            return Err(Error::NoSuchResource(r.resource.clone()));
        }
        if !is_checksum(&r.checksum) {
            return Err(invalid(format!("bad checksum {:?}", r.checksum)));
        }
        Ok(())
    }

    /// Validates and applies one mutation. On error the state is unchanged.
    pub fn apply(&mut self, m: &Mutation, seq: u64, when: u64) -> Result<()> {
        self.apply_inner(m, when)?;
        self.last_seq = seq;
        Ok(())
    }

    fn apply_inner(&mut self, m: &Mutation, when: u64) -> Result<()> {
        match m {
            Mutation::CreateUser { name, role, secret_hash } => {
                if name.is_empty() || self.users.contains_key(name) {
                    return Err(Error::DuplicateName(name.clone()));
                }
                self.users.insert(
                    name.clone(),
                    User { name: name.clone(), role: *role, secret_hash: secret_hash.clone(), groups: BTreeSet::new() },
                );
            }
            Mutation::AddGroupMember { user, group } => {
                let u = self.users.get_mut(user).ok_or_else(|| Error::NoSuchUser(user.clone()))?;
                if group.is_empty() {
                    return Err(invalid("empty group name"));
                }
                u.groups.insert(group.clone());
            }
            Mutation::RegisterDriver { name, kind } => {
                if self.drivers.contains_key(name) {
                    return Err(Error::DuplicateName(name.clone()));
                }
                self.drivers.insert(name.clone(), *kind);
            }
            Mutation::RegisterResource { name, driver, root, kind } => {
                if name.is_empty() || self.resources.contains_key(name) {
                    return Err(Error::DuplicateName(name.clone()));
                }
                self.resources.insert(
                    name.clone(),
                    Resource { name: name.clone(), driver: driver.clone(), root: root.clone(), kind: *kind },
                );
            }
            Mutation::MakeCollection { path: p, owner, kind } => {
                path::validate(p)?;
                if self.path_exists(p) {
                    return Err(Error::Duplicate(p.clone()));
                }
                let parent = path::parent(p).ok_or_else(|| Error::Duplicate(p.clone()))?;
                if !self.collection_exists(parent) {
                    return Err(Error::NoParent(p.clone()));
                }
                if !self.users.contains_key(owner) {
                    return Err(Error::NoSuchUser(owner.clone()));
                }
                let acl = BTreeMap::from([(owner.clone(), Perm::Own)]);
                self.collections
                    .insert(p.clone(), Collection { path: p.clone(), owner: owner.clone(), acl, kind: *kind });
            }
            Mutation::SetAcl { path: p, principal, perm } => {
                if !self.principal_exists(principal) {
                    return Err(Error::NoSuchUser(principal.clone()));
                }
                let acl = if let Some(c) = self.collections.get_mut(p) {
                    &mut c.acl
                } else if let Some(o) = self.objects.get_mut(p) {
                    &mut o.acl
                } else {
                    return Err(Error::NoSuchPath(p.clone()));
                };
                match perm {
                    Some(perm) => {
                        acl.insert(principal.clone(), *perm);
                    }
                    None => {
                        acl.remove(principal);
                    }
                }
            }
            Mutation::PutObject { path: p, owner, replica } => {
                path::validate(p)?;
                self.check_replica(replica)?;
                if self.collections.contains_key(p) {
                    return Err(Error::Duplicate(p.clone()));
                }
                let parent = path::parent(p).ok_or_else(|| invalid("cannot put at /"))?;
                if !self.collection_exists(parent) {
                    return Err(Error::NoParent(p.clone()));
                }
                if replica.status != ReplicaStatus::Good {
                    return Err(invalid("new replica must be good"));
                }
                match self.objects.get_mut(p) {
                    Some(obj) => {
                        obj.replicas.retain(|r| r.resource != replica.resource);
                        for r in &mut obj.replicas {
                            r.status = ReplicaStatus::Stale;
                        }
                        obj.replicas.insert(0, replica.clone());
                        obj.version += 1;
                    }
                    None => {
                        if !self.users.contains_key(owner) {
                            return Err(Error::NoSuchUser(owner.clone()));
                        }
                        self.objects.insert(
                            p.clone(),
                            DataObject {
                                path: p.clone(),
                                owner: owner.clone(),
                                acl: BTreeMap::from([(owner.clone(), Perm::Own)]),
                                replicas: vec![replica.clone()],
                                version: 1,
                            },
                        );
                    }
                }
            }
            Mutation::AddReplica { path: p, replica } => {
                self.check_replica(replica)?;
                let obj = self.objects.get_mut(p).ok_or_else(|| Error::NoSuchObject(p.clone()))?;
                if obj.replica_on(&replica.resource).is_some() {
                    return Err(invalid(format!("{p} already has a replica on {}", replica.resource)));
                }
                if replica.status == ReplicaStatus::Good {
                    if let Some(existing) = obj.checksum() {
                        if existing != replica.checksum {
                            return Err(Error::ChecksumMismatch {
                                expected: existing.to_string(),
                                actual: replica.checksum.clone(),
                            });
                        }
                    }
                }
                obj.replicas.push(replica.clone());
            }
            Mutation::SetReplicaStatus { path: p, resource, status } => {
                let obj = self.objects.get_mut(p).ok_or_else(|| Error::NoSuchObject(p.clone()))?;
                let mut others =
                    obj.replicas.iter().filter(|r| r.resource != *resource && r.status == ReplicaStatus::Good);
                let other_sum = others.next().map(|r| r.checksum.clone());
                let r = obj
                    .replicas
                    .iter_mut()
                    .find(|r| r.resource == *resource)
                    .ok_or_else(|| Error::NoSuchReplica { path: p.clone(), resource: resource.clone() })?;
                if *status == ReplicaStatus::Good {
                    if let Some(sum) = other_sum {
                        if sum != r.checksum {
                            return Err(Error::ChecksumMismatch { expected: sum, actual: r.checksum.clone() });
                        }
                    }
                }
                r.status = *status;
            }
            Mutation::DropReplica { path: p, resource } => {
                let obj = self.objects.get_mut(p).ok_or_else(|| Error::NoSuchObject(p.clone()))?;
                if obj.replica_on(resource).is_none() {
                    return Err(Error::NoSuchReplica { path: p.clone(), resource: resource.clone() });
                }
                if obj.replicas.len() == 1 {
                    return Err(invalid("cannot drop the last replica; remove the object instead"));
                }
                obj.replicas.retain(|r| r.resource != *resource);
            }
            Mutation::RemoveObject { path: p } => {
                if self.objects.remove(p).is_none() {
                    return Err(Error::NoSuchObject(p.clone()));
                }
                self.avus.remove_path(p);
            }
            Mutation::AddOrphan { resource, physical_ref, former_path, checksum } => {
                self.orphans.push(OrphanReplica {
                    resource: resource.clone(),
                    physical_ref: physical_ref.clone(),
                    former_path: former_path.clone(),
                    checksum: checksum.clone(),
                    when,
                });
            }
            Mutation::AddAvu { path: p, triple } => {
                if triple.attr_name.is_empty() {
                    return Err(invalid("empty attribute name"));
                }
                if !self.path_exists(p) || p == "/" {
                    return Err(Error::NoSuchPath(p.clone()));
                }
                self.avus.insert(p, triple.clone());
            }
            Mutation::AddRule { name, pep, priority, source } => {
                if self.rules.contains_key(name) {
                    return Err(Error::DuplicateRuleName(name.clone()));
                }
                self.rule_version += 1;
                self.rules.insert(
                    name.clone(),
                    RuleRecord {
                        name: name.clone(),
                        pep: pep.clone(),
                        priority: *priority,
                        source: source.clone(),
                        added_in: self.rule_version,
                    },
                );
            }
            Mutation::RemoveRule { name } => {
                if self.rules.remove(name).is_none() {
                    return Err(Error::NoSuchRule(name.clone()));
                }
                self.rule_version += 1;
            }
            Mutation::AttachWorkflow { version } => {
                match self.collections.get(&version.collection) {
                    Some(c) if c.kind == CollectionKind::Workflow => {}
                    _ => return Err(Error::NotAWorkflowCollection(version.collection.clone())),
                }
                self.workflows.entry(version.workflow_id.clone()).or_insert_with(|| version.clone());
            }
            Mutation::RecordRun { run } => {
                if self.runs.contains_key(&run.run_id) {
                    return Err(Error::Duplicate(format!("run {}", run.run_id)));
                }
                if !self.workflows.contains_key(&run.workflow_id) {
                    return Err(Error::NoSuchWorkflow(run.workflow_id.clone()));
                }
                self.runs.insert(run.run_id.clone(), run.clone());
            }
            Mutation::AddSegment { collection, segment } => {
                match self.collections.get(collection) {
                    Some(c) if c.kind == CollectionKind::Stream => {}
                    _ => return Err(Error::NotAStreamCollection(collection.clone())),
                }
                if !self.objects.contains_key(&segment.object_path) {
                    return Err(Error::NoSuchObject(segment.object_path.clone()));
                }
                let segs = self.segments.entry(collection.clone()).or_default();
                if segs.last().is_some_and(|s| s.segment_id >= segment.segment_id) {
                    return Err(invalid("segment ids must increase"));
                }
                segs.push(segment.clone());
            }
            Mutation::RecordFetch { entry } => {
                if !self.objects.contains_key(&entry.path) {
                    return Err(Error::NoSuchObject(entry.path.clone()));
                }
                self.fetch_cache.insert(entry.url.clone(), entry.clone());
            }
            Mutation::Audit { actor, event, detail } => {
                let seq = self.audit.last().map_or(1, |e| e.seq + 1);
                self.audit.push(AuditEntry {
                    seq,
                    when,
                    actor: actor.clone(),
                    event: event.clone(),
                    detail: detail.clone(),
                });
            }
        }
        Ok(())
    }
}
