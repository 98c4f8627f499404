use serde::Serialize;

use super::Zone;
use crate::catalog::{
    AvuPredicate, AvuTriple, CollectionKind, DataObject, Mutation, Perm, Replica, ReplicaStatus, Resource, ResourceKind,
};
use crate::checksum::sha256_hex;
use crate::drivers::{read_all, write_new, DriverError, StorageDriver};
use crate::error::{Error, Result};
use crate::path;
use std::sync::Arc;

/// Outcome of re-reading one replica.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplicaCheck {
    pub resource: String,
    pub status: ReplicaStatus,
    /// Whether the stored bytes hash to the recorded checksum.
    pub intact: bool,
}

impl Zone {
    fn resource_driver(&self, name: &str) -> Result<(Resource, Arc<dyn StorageDriver>)> {
        let resc = self.catalog.resource(name).ok_or_else(|| Error::NoSuchResource(name.to_string()))?;
        let driver = self.drivers.get(&resc.driver).ok_or_else(|| Error::UnknownDriver(resc.driver.clone()))?;
        Ok((resc, driver))
    }

    fn read_replica(&self, rep: &Replica) -> Result<Vec<u8>> {
        let (resc, driver) = self.resource_driver(&rep.resource)?;
        Ok(read_all(driver.as_ref(), &resc.root, &rep.physical_ref)?)
    }

    fn set_status(&self, path: &str, resource: &str, status: ReplicaStatus) -> Result<()> {
        self.commit(Mutation::SetReplicaStatus { path: path.into(), resource: resource.into(), status })?;
        Ok(())
    }

    /// Reads the bytes of some good replica, demoting any that fail to
    /// read back with their recorded checksum.
    fn read_good(&self, obj: &DataObject) -> Result<(Replica, Vec<u8>)> {
        for rep in obj.good_replicas() {
            match self.read_replica(rep) {
                Ok(bytes) if sha256_hex(&bytes) == rep.checksum => return Ok((rep.clone(), bytes)),
                _ => {
                    self.set_status(&obj.path, &rep.resource, ReplicaStatus::Suspect)?;
                    self.audit("-", "replica.suspect", format!("{} on {}", obj.path, rep.resource));
                }
            }
        }
        Err(Error::AllReplicasSuspect(obj.path.clone()))
    }

    /// Reads an object without firing enforcement points; callers check
    /// access themselves.
    pub(crate) fn read_object(&self, path: &str) -> Result<Vec<u8>> {
        let _guard = self.lock_path(path);
        let obj = self.catalog.object(path).ok_or_else(|| Error::NoSuchObject(path.to_string()))?;
        Ok(self.read_good(&obj)?.1)
    }

    /// Releases a physical copy the catalog no longer references. Copies
    /// the driver refuses to delete are recorded as orphans.
    fn discard(&self, path: &str, rep: &Replica) -> Result<()> {
        let (resc, driver) = self.resource_driver(&rep.resource)?;
        self.trace(|| format!("driver:unlink {}", rep.resource));
        if driver.unlink(&resc.root, &rep.physical_ref).is_err() {
            self.commit(Mutation::AddOrphan {
                resource: rep.resource.clone(),
                physical_ref: rep.physical_ref.clone(),
                former_path: path.to_string(),
                checksum: rep.checksum.clone(),
            })?;
        }
        Ok(())
    }

    fn object_context(&self, actor: &str, op: &str, obj_path: &str, owner: &str) -> Result<super::PepContext> {
        let parent = path::parent(obj_path).unwrap_or("/");
        Ok(self.context(actor, op)?.obj(obj_path, owner).coll(parent))
    }

    /// Stores `bytes` at `path`, creating the object or adding a version.
    /// `resource` defaults to the zone default.
    pub fn put(&self, actor: &str, path: &str, bytes: &[u8], resource: Option<&str>) -> Result<DataObject> {
        self.put_inner(actor, path, bytes, resource, false)
    }

    pub(crate) fn put_inner(
        &self,
        actor: &str,
        path: &str,
        bytes: &[u8],
        resource: Option<&str>,
        into_stream: bool,
    ) -> Result<DataObject> {
        path::validate(path)?;
        let parent = path::parent(path).ok_or_else(|| Error::Invalid("cannot store data at /".into()))?;
        let resource = match resource {
            Some(r) => r.to_string(),
            None => self.require_default_resource()?,
        };
        let guard = self.lock_path(path);
        let existing = {
            let st = self.catalog.read();
            if st.collections.contains_key(path) {
                return Err(Error::Duplicate(path.to_string()));
            }
            if !st.collection_exists(parent) {
                return Err(Error::NoParent(path.to_string()));
            }
            let is_stream = st.collections.get(parent).is_some_and(|c| c.kind == CollectionKind::Stream);
            if is_stream != into_stream {
                return Err(Error::WrongCollectionKind {
                    path: parent.to_string(),
                    expected: if into_stream { "stream" } else { "plain or workflow" },
                });
            }
            st.objects.get(path).cloned()
        };
        match &existing {
            Some(_) => self.catalog.require(path, actor, Perm::Write)?,
            None => self.catalog.require(parent, actor, Perm::Write)?,
        }
        let (resc, driver) = self.resource_driver(&resource)?;
        let owner = existing.as_ref().map_or(actor, |o| o.owner.as_str());
        let ctx = self.object_context(actor, "put", path, owner)?.resc(&resource);
        self.pre("pep.data.put.pre", &ctx)?;

        self.trace(|| format!("driver:write {resource}"));
        let physical_ref = write_new(driver.as_ref(), &resc.root, bytes)?;
        let replica = Replica {
            resource: resource.clone(),
            physical_ref,
            checksum: sha256_hex(bytes),
            size: bytes.len() as u64,
            status: ReplicaStatus::Good,
        };
        let put = Mutation::PutObject { path: path.into(), owner: actor.into(), replica: replica.clone() };
        if let Err(e) = self.commit(put) {
            let _ = driver.unlink(&resc.root, &replica.physical_ref);
            return Err(e);
        }
        if let Some(old) = existing.as_ref().and_then(|o| o.replica_on(&resource)) {
            self.discard(path, old)?;
        }
        let obj = self.catalog.object(path).ok_or_else(|| Error::NoSuchObject(path.to_string()))?;
        self.audit(actor, "data.put", format!("{path} v{} {}", obj.version, replica.checksum));
        drop(guard);
        self.post("pep.data.put.post", &ctx);
        Ok(obj)
    }

    /// Returns the bytes of a good replica, falling back across replicas.
    pub fn get(&self, actor: &str, path: &str) -> Result<Vec<u8>> {
        let guard = self.lock_path(path);
        let obj = self.catalog.object(path).ok_or_else(|| Error::NoSuchObject(path.to_string()))?;
        self.catalog.require(path, actor, Perm::Read)?;
        let ctx = self.object_context(actor, "get", path, &obj.owner)?;
        self.pre("pep.data.get.pre", &ctx)?;
        let (_, bytes) = self.read_good(&obj)?;
        drop(guard);
        self.post("pep.data.get.post", &ctx);
        Ok(bytes)
    }

    /// Unlinks every replica and drops the catalog entry.
    pub fn remove(&self, actor: &str, path: &str) -> Result<()> {
        let guard = self.lock_path(path);
        let obj = self.catalog.object(path).ok_or_else(|| Error::NoSuchObject(path.to_string()))?;
        let parent = path::parent(path).unwrap_or("/");
        if self.catalog.collection(parent).is_some_and(|c| c.kind == CollectionKind::Stream) {
            return Err(Error::WrongCollectionKind { path: parent.to_string(), expected: "plain or workflow" });
        }
        self.catalog.require(path, actor, Perm::Write)?;
        let ctx = self.object_context(actor, "remove", path, &obj.owner)?;
        self.pre("pep.data.remove.pre", &ctx)?;

        let mut unlinked = Vec::new();
        let mut refused = Vec::new();
        let mut failed = Vec::new();
        for rep in &obj.replicas {
            let (resc, driver) = self.resource_driver(&rep.resource)?;
            self.trace(|| format!("driver:unlink {}", rep.resource));
            match driver.unlink(&resc.root, &rep.physical_ref) {
                Ok(()) | Err(DriverError::NotFound) => unlinked.push(rep),
                Err(DriverError::Unsupported(_)) => refused.push(rep),
                Err(e) => failed.push((rep, e)),
            }
        }
        if let Some((_, first)) = failed.first() {
            let detail = first.to_string();
            for rep in &unlinked {
                self.commit(Mutation::DropReplica { path: path.into(), resource: rep.resource.clone() })?;
            }
            for (rep, _) in &failed {
                self.set_status(path, &rep.resource, ReplicaStatus::Suspect)?;
            }
            self.audit(actor, "data.remove.partial", format!("{path}: {detail}"));
            return Err(Error::Driver(DriverError::Other(format!("partial unlink of {path}: {detail}"))));
        }
        for rep in refused {
            self.commit(Mutation::AddOrphan {
                resource: rep.resource.clone(),
                physical_ref: rep.physical_ref.clone(),
                former_path: path.to_string(),
                checksum: rep.checksum.clone(),
            })?;
        }
        self.commit(Mutation::RemoveObject { path: path.into() })?;
        self.audit(actor, "data.remove", path);
        drop(guard);
        self.post("pep.data.remove.post", &ctx);
        Ok(())
    }

    /// Copies the object to `dest` and registers the verified copy.
    pub fn replicate(&self, actor: &str, path: &str, dest: &str) -> Result<Replica> {
        self.copy_op(actor, path, dest, None, None, "replicate")
    }

    /// Copies the replica on `from` to the cache-class resource `to`.
    pub fn stage(&self, actor: &str, path: &str, from: &str, to: &str) -> Result<Replica> {
        self.copy_op(actor, path, to, Some(from), Some(ResourceKind::Cache), "stage")
    }

    /// Copies the object to the archive-class resource `to`.
    pub fn archive(&self, actor: &str, path: &str, to: &str) -> Result<Replica> {
        self.copy_op(actor, path, to, None, Some(ResourceKind::Archive), "archive")
    }

    fn copy_op(
        &self,
        actor: &str,
        path: &str,
        dest: &str,
        source: Option<&str>,
        need: Option<ResourceKind>,
        op: &str,
    ) -> Result<Replica> {
        let guard = self.lock_path(path);
        let obj = self.catalog.object(path).ok_or_else(|| Error::NoSuchObject(path.to_string()))?;
        let (resc, driver) = self.resource_driver(dest)?;
        match need {
            Some(ResourceKind::Cache) if resc.kind != ResourceKind::Cache => {
                return Err(Error::WrongResourceKind { resource: dest.to_string(), expected: "cache" })
            }
            Some(ResourceKind::Archive) if resc.kind != ResourceKind::Archive => {
                return Err(Error::WrongResourceKind { resource: dest.to_string(), expected: "archive" })
            }
            _ => {}
        }
        if obj.replica_on(dest).is_some() {
            return Err(Error::Invalid(format!("{path} already has a replica on {dest}")));
        }
        let src = match source {
            Some(from) => Some(
                obj.replica_on(from)
                    .filter(|r| r.status == ReplicaStatus::Good)
                    .cloned()
                    .ok_or_else(|| Error::NoSuchReplica { path: path.to_string(), resource: from.to_string() })?,
            ),
            None => None,
        };
        self.catalog.require(path, actor, Perm::Write)?;
        let ctx = self.object_context(actor, op, path, &obj.owner)?.resc(dest);
        self.pre("pep.data.replicate.pre", &ctx)?;

        let (src, bytes) = match src {
            Some(rep) => {
                let bytes = self.read_replica(&rep)?;
                if sha256_hex(&bytes) != rep.checksum {
                    self.set_status(path, &rep.resource, ReplicaStatus::Suspect)?;
                    return Err(Error::ChecksumMismatch { expected: rep.checksum.clone(), actual: sha256_hex(&bytes) });
                }
                (rep, bytes)
            }
            None => self.read_good(&obj)?,
        };
        self.trace(|| format!("driver:write {dest}"));
        let physical_ref = write_new(driver.as_ref(), &resc.root, &bytes)?;
        let stored = read_all(driver.as_ref(), &resc.root, &physical_ref);
        let actual = stored.as_deref().map(sha256_hex).unwrap_or_default();
        if actual != src.checksum {
            let _ = driver.unlink(&resc.root, &physical_ref);
            self.audit(actor, "replica.mismatch", format!("{path} on {dest}"));
            return Err(Error::ChecksumMismatch { expected: src.checksum.clone(), actual });
        }
        let replica = Replica {
            resource: dest.to_string(),
            physical_ref,
            checksum: src.checksum.clone(),
            size: bytes.len() as u64,
            status: ReplicaStatus::Good,
        };
        if let Err(e) = self.commit(Mutation::AddReplica { path: path.into(), replica: replica.clone() }) {
            let _ = driver.unlink(&resc.root, &replica.physical_ref);
            return Err(e);
        }
        self.audit(actor, &format!("data.{op}"), format!("{path} -> {dest}"));
        drop(guard);
        self.post("pep.data.replicate.post", &ctx);
        Ok(replica)
    }

    /// Re-reads every non-stale replica. Mismatching copies become suspect;
    /// suspect copies that verify again are restored.
    pub fn verify_replicas(&self, actor: &str, path: &str) -> Result<Vec<ReplicaCheck>> {
        let _guard = self.lock_path(path);
        let obj = self.catalog.object(path).ok_or_else(|| Error::NoSuchObject(path.to_string()))?;
        self.catalog.require(path, actor, Perm::Read)?;
        let mut out = Vec::new();
        for rep in &obj.replicas {
            if rep.status == ReplicaStatus::Stale {
                out.push(ReplicaCheck { resource: rep.resource.clone(), status: rep.status, intact: false });
                continue;
            }
            let intact = self.read_replica(rep).is_ok_and(|b| sha256_hex(&b) == rep.checksum);
            let status = match (intact, rep.status) {
                (false, ReplicaStatus::Good) => {
                    self.set_status(path, &rep.resource, ReplicaStatus::Suspect)?;
                    ReplicaStatus::Suspect
                }
                (true, ReplicaStatus::Suspect) => match self.set_status(path, &rep.resource, ReplicaStatus::Good) {
                    Ok(()) => ReplicaStatus::Good,
                    Err(_) => ReplicaStatus::Suspect,
                },
                (_, s) => s,
            };
            out.push(ReplicaCheck { resource: rep.resource.clone(), status, intact });
        }
        let bad: Vec<_> =
            out.iter().filter(|c| c.status == ReplicaStatus::Suspect).map(|c| c.resource.as_str()).collect();
        self.audit(actor, "data.verify", format!("{path} suspect=[{}]", bad.join(",")));
        Ok(out)
    }

    /// Administrative override of a replica's status.
    pub fn set_replica_status(&self, actor: &str, path: &str, resource: &str, status: ReplicaStatus) -> Result<()> {
        self.require_admin(actor)?;
        let _guard = self.lock_path(path);
        self.set_status(path, resource, status)?;
        self.audit(actor, "replica.status", format!("{path} on {resource} -> {status:?}").to_lowercase());
        Ok(())
    }

    /// Creates a collection under the collection-create enforcement points.
    pub fn make_collection(&self, actor: &str, path: &str, kind: CollectionKind, owner: Option<&str>) -> Result<()> {
        path::validate(path)?;
        let guard = self.lock_path(path);
        let parent = path::parent(path).ok_or_else(|| Error::Duplicate(path.to_string()))?;
        {
            let st = self.catalog.read();
            if st.path_exists(path) {
                return Err(Error::Duplicate(path.to_string()));
            }
            if !st.collection_exists(parent) {
                return Err(Error::NoParent(path.to_string()));
            }
        }
        self.catalog.require(parent, actor, Perm::Write)?;
        if owner.is_some_and(|o| o != actor) {
            self.require_admin(actor)?;
        }
        let ctx = self.context(actor, "mkcoll")?.coll(path);
        self.pre("pep.collection.create.pre", &ctx)?;
        self.trace(|| "catalog:make_collection".to_string());
        self.catalog.make_collection(actor, path, owner, kind)?;
        self.audit(actor, "collection.create", path);
        drop(guard);
        self.post("pep.collection.create.post", &ctx);
        Ok(())
    }

    /// Attaches a metadata triple under the meta-add enforcement points.
    pub fn add_avu(&self, actor: &str, path: &str, triple: AvuTriple) -> Result<()> {
        let guard = self.lock_path(path);
        let (owner, is_object) = {
            let st = self.catalog.read();
            if path == "/" || !st.path_exists(path) {
                return Err(Error::NoSuchPath(path.to_string()));
            }
            match st.objects.get(path) {
                Some(o) => (o.owner.clone(), true),
                None => (st.collections[path].owner.clone(), false),
            }
        };
        if triple.attr_name.is_empty() {
            return Err(Error::Invalid("empty attribute name".into()));
        }
        self.catalog.require(path, actor, Perm::Write)?;
        let ctx = if is_object {
            self.object_context(actor, "meta.add", path, &owner)?
        } else {
            self.context(actor, "meta.add")?.coll(path)
        };
        self.pre("pep.meta.add.pre", &ctx)?;
        self.trace(|| "catalog:add_avu".to_string());
        self.catalog.add_avu(actor, path, triple)?;
        drop(guard);
        self.post("pep.meta.add.post", &ctx);
        Ok(())
    }

    /// Paths matching an AVU predicate that `actor` may read.
    pub fn query_meta(&self, actor: &str, predicate: &str) -> Result<Vec<String>> {
        let pred = AvuPredicate::parse(predicate)?;
        if self.catalog.user(actor).is_none() {
            return Err(Error::NoSuchUser(actor.to_string()));
        }
        let mut out = Vec::new();
        for p in self.catalog.query_avu(&pred) {
            if self.catalog.check_access(&p, actor, Perm::Read)? {
                out.push(p);
            }
        }
        Ok(out)
    }

    pub fn set_acl(&self, actor: &str, path: &str, principal: &str, perm: Option<Perm>) -> Result<()> {
        let _guard = self.lock_path(path);
        self.catalog.set_acl(actor, path, principal, perm)
    }
}
