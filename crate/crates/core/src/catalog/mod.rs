//! The zone catalog: users, resources, files, collections, metadata,
//! policies and procedures, plus the audit trail.
//!
//! All changes go through [`Catalog::commit`], which serializes writers,
//! applies a [`Mutation`] to the in-memory state and appends it to the
//! journal. Methods here check identity and ACLs but fire no policy
//! enforcement points; the engine wraps the governed ones.

mod avu;
mod journal;
mod state;
mod types;

use std::path::Path;

use parking_lot::{Mutex, RwLock, RwLockReadGuard};
use rand::RngCore;
use subtle::ConstantTimeEq;

pub use avu::{AvuCondition, AvuField, AvuOp, AvuPredicate, AvuStore};
pub use journal::{
    journal_replay, parse_journal, read_journal, read_snapshot, replay_onto, snapshot_name, write_snapshot, Journal,
    JournalRecord, DEFAULT_SNAPSHOT_EVERY, JOURNAL_FILE,
};
pub use state::{CatalogState, Mutation};
pub use types::*;

use crate::checksum::sha256_hex;
use crate::error::{Error, Result};
use crate::path;

/// Audit trail filter. The time range is half-open `[from_us, to_us)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditQuery {
    pub from_us: Option<u64>,
    pub to_us: Option<u64>,
    pub event: Option<String>,
    pub actor: Option<String>,
}

impl AuditQuery {
    pub fn event(event: &str) -> Self {
        AuditQuery { event: Some(event.to_string()), ..Default::default() }
    }

    fn matches(&self, e: &AuditEntry) -> bool {
        self.from_us.is_none_or(|f| e.when >= f)
            && self.to_us.is_none_or(|t| e.when < t)
            && self.event.as_ref().is_none_or(|ev| *ev == e.event)
            && self.actor.as_ref().is_none_or(|a| *a == e.actor)
    }
}

pub fn hash_secret(secret: &str) -> String {
    let mut salt = [0u8; 16];
    rand::rng().fill_bytes(&mut salt);
    hash_with_salt(&salt, secret)
}

fn hash_with_salt(salt: &[u8], secret: &str) -> String {
    let mut buf = salt.to_vec();
    buf.extend_from_slice(secret.as_bytes());
    format!("sha256${}${}", hex::encode(salt), sha256_hex(&buf))
}

pub fn verify_secret_hash(stored: &str, secret: &str) -> bool {
    let mut parts = stored.split('$');
    let (Some("sha256"), Some(salt), Some(_), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return false;
    };
    let Ok(salt) = hex::decode(salt) else { return false };
    hash_with_salt(&salt, secret).as_bytes().ct_eq(stored.as_bytes()).into()
}

pub struct Catalog {
    state: RwLock<CatalogState>,
    // Single-writer lock; also owns the journal when persistent.
    writer: Mutex<Option<Journal>>,
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog::in_memory()
    }
}

impl Catalog {
    /// Volatile catalog with no journal.
    pub fn in_memory() -> Self {
        Catalog { state: RwLock::new(CatalogState::default()), writer: Mutex::new(None) }
    }

    /// Opens (recovering if present) the journal directory `dir`.
    pub fn open(dir: &Path) -> Result<Self> {
        Catalog::open_with(dir, DEFAULT_SNAPSHOT_EVERY)
    }

    pub fn open_with(dir: &Path, snapshot_every: u64) -> Result<Self> {
        let (state, journal) = Journal::recover(dir, snapshot_every)?;
        Ok(Catalog { state: RwLock::new(state), writer: Mutex::new(Some(journal)) })
    }

    /// Builds a volatile catalog from existing state.
    pub fn from_state(state: CatalogState) -> Self {
        Catalog { state: RwLock::new(state), writer: Mutex::new(None) }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, CatalogState> {
        self.state.read()
    }

    pub fn snapshot_state(&self) -> CatalogState {
        self.state.read().clone()
    }

    pub fn is_persistent(&self) -> bool {
        self.writer.lock().is_some()
    }

    /// Applies and journals one mutation; returns its sequence number.
    pub fn commit(&self, m: Mutation) -> Result<u64> {
        let mut writer = self.writer.lock();
        let mut state = self.state.write();
        let seq = state.last_seq + 1;
        let when = crate::now_us();
        state.apply(&m, seq, when)?;
        if let Some(journal) = writer.as_mut() {
            journal.append(&JournalRecord::new(seq, &m, when))?;
            if journal.snapshot_due() {
                journal.snapshot(&state)?;
            }
        }
        Ok(seq)
    }

    /// Forces a snapshot and syncs the journal.
    pub fn checkpoint(&self) -> Result<()> {
        let mut writer = self.writer.lock();
        if let Some(journal) = writer.as_mut() {
            let state = self.state.read();
            journal.snapshot(&state)?;
            journal.sync()?;
        }
        Ok(())
    }

    pub fn is_admin(&self, user: &str) -> bool {
        self.state.read().users.get(user).is_some_and(|u| u.role == Role::Admin)
    }

    fn require_admin(&self, caller: &str) -> Result<()> {
        if self.is_admin(caller) {
            Ok(())
        } else {
            Err(Error::PermissionDenied(format!("{caller} is not an administrator")))
        }
    }

    pub(crate) fn audit(&self, actor: &str, event: &str, detail: impl Into<String>) -> Result<()> {
        self.commit(Mutation::Audit { actor: actor.to_string(), event: event.to_string(), detail: detail.into() })?;
        Ok(())
    }

    /// Creates the first administrator of an empty zone.
    pub fn bootstrap_admin(&self, name: &str, secret: &str) -> Result<()> {
        if !self.state.read().users.is_empty() {
            return Err(Error::PermissionDenied("zone already has users".into()));
        }
        self.commit(Mutation::CreateUser { name: name.into(), role: Role::Admin, secret_hash: hash_secret(secret) })?;
        self.audit(name, "user.create", format!("bootstrap admin {name}"))
    }

    pub fn create_user(&self, caller: &str, name: &str, role: Role, secret: &str) -> Result<()> {
        self.require_admin(caller)?;
        self.commit(Mutation::CreateUser { name: name.into(), role, secret_hash: hash_secret(secret) })?;
        self.audit(caller, "user.create", format!("{name} role={}", role.as_str()))
    }

    pub fn add_group_member(&self, caller: &str, user: &str, group: &str) -> Result<()> {
        self.require_admin(caller)?;
        self.commit(Mutation::AddGroupMember { user: user.into(), group: group.into() })?;
        self.audit(caller, "group.add", format!("{user} -> {group}"))
    }

    pub fn user(&self, name: &str) -> Option<User> {
        self.state.read().users.get(name).cloned()
    }

    /// Checks a login. Unknown users and wrong secrets fail identically.
    pub fn verify_secret(&self, name: &str, secret: &str) -> Result<User> {
        let user = self.user(name);
        // Hash against a dummy so both failure paths do the same work.
        let stored = user.as_ref().map_or("sha256$00$00", |u| u.secret_hash.as_str());
        let ok = verify_secret_hash(stored, secret);
        match user {
            Some(u) if ok => Ok(u),
            _ => Err(Error::BadCredentials),
        }
    }

    /// Registers a resource. The caller checks that `driver` is loaded.
    pub(crate) fn register_resource(
        &self,
        caller: &str,
        name: &str,
        driver: &str,
        root: &str,
        kind: ResourceKind,
    ) -> Result<()> {
        self.require_admin(caller)?;
        self.commit(Mutation::RegisterResource { name: name.into(), driver: driver.into(), root: root.into(), kind })?;
        self.audit(caller, "resource.register", format!("{name} driver={driver}"))
    }

    pub fn resource(&self, name: &str) -> Option<Resource> {
        self.state.read().resources.get(name).cloned()
    }

    /// Effective permission of `user` on `path`; `None` means no access.
    pub fn effective_perm(&self, path: &str, user: &str) -> Result<Option<Perm>> {
        let st = self.state.read();
        effective_perm(&st, path, user)
    }

    /// True iff `user` holds at least `need` on `path`.
    pub fn check_access(&self, path: &str, user: &str, need: Perm) -> Result<bool> {
        Ok(self.effective_perm(path, user)?.is_some_and(|p| p >= need))
    }

    pub(crate) fn require(&self, path: &str, user: &str, need: Perm) -> Result<()> {
        if self.check_access(path, user, need)? {
            Ok(())
        } else {
            Err(Error::PermissionDenied(format!("{user} lacks {need:?} on {path}").to_lowercase()))
        }
    }

    /// Grants (or with `None` revokes) `perm` for a user or group.
    pub fn set_acl(&self, caller: &str, path: &str, principal: &str, perm: Option<Perm>) -> Result<()> {
        self.require(path, caller, Perm::Own)?;
        self.commit(Mutation::SetAcl { path: path.into(), principal: principal.into(), perm })?;
        self.audit(caller, "acl.set", format!("{path} {principal}={perm:?}"))
    }

    /// Creates a collection without firing policy. `owner` defaults to the
    /// caller; naming someone else requires admin.
    pub fn make_collection(&self, caller: &str, path: &str, owner: Option<&str>, kind: CollectionKind) -> Result<()> {
        path::validate(path)?;
        let parent = path::parent(path).ok_or_else(|| Error::Duplicate(path.to_string()))?;
        {
            let st = self.state.read();
            if st.path_exists(path) {
                return Err(Error::Duplicate(path.to_string()));
            }
            if !st.collection_exists(parent) {
                return Err(Error::NoParent(path.to_string()));
            }
        }
        self.require(parent, caller, Perm::Write)?;
        let owner = owner.unwrap_or(caller);
        if owner != caller {
            self.require_admin(caller)?;
        }
        self.commit(Mutation::MakeCollection { path: path.into(), owner: owner.into(), kind })?;
        Ok(())
    }

    pub fn collection(&self, path: &str) -> Option<Collection> {
        self.state.read().collections.get(path).cloned()
    }

    pub fn object(&self, path: &str) -> Option<DataObject> {
        self.state.read().objects.get(path).cloned()
    }

    /// Attaches a triple without firing policy; duplicates are no-ops.
    pub fn add_avu(&self, caller: &str, path: &str, triple: AvuTriple) -> Result<()> {
        if !self.state.read().path_exists(path) || path == "/" {
            return Err(Error::NoSuchPath(path.to_string()));
        }
        self.require(path, caller, Perm::Write)?;
        if self.state.read().avus.get(path).any(|t| *t == triple) {
            return Ok(());
        }
        self.commit(Mutation::AddAvu { path: path.into(), triple })?;
        Ok(())
    }

    pub fn avus(&self, path: &str) -> Vec<AvuTriple> {
        self.state.read().avus.get(path).cloned().collect()
    }

    /// Paths satisfying `pred`, in lexicographic order.
    pub fn query_avu(&self, pred: &AvuPredicate) -> Vec<String> {
        self.state.read().avus.query(pred).into_iter().collect()
    }

    pub fn audit_query(&self, caller: &str, q: &AuditQuery) -> Result<Vec<AuditEntry>> {
        self.require_admin(caller)?;
        Ok(self.state.read().audit.iter().filter(|e| q.matches(e)).cloned().collect())
    }

    pub fn rule_version(&self) -> u64 {
        self.state.read().rule_version
    }
}

pub(crate) fn effective_perm(st: &CatalogState, path: &str, user: &str) -> Result<Option<Perm>> {
    let Some(u) = st.users.get(user) else {
        return if st.path_exists(path) { Ok(None) } else { Err(Error::NoSuchPath(path.to_string())) };
    };
    let (owner, acl) = if path == "/" {
        // The virtual root is readable by all and writable by admins only.
        return Ok(Some(if u.role == Role::Admin { Perm::Own } else { Perm::Read }));
    } else if let Some(c) = st.collections.get(path) {
        (&c.owner, &c.acl)
    } else if let Some(o) = st.objects.get(path) {
        (&o.owner, &o.acl)
    } else {
        return Err(Error::NoSuchPath(path.to_string()));
    };
    if u.role == Role::Admin || *owner == u.name {
        return Ok(Some(Perm::Own));
    }
    let direct = acl.get(&u.name).copied();
    let via_groups = u.groups.iter().filter_map(|g| acl.get(g).copied()).max();
    Ok(direct.max(via_groups))
}
