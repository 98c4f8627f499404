//! The policy engine. A [`Zone`] owns the catalog, the driver registry, the
//! micro-service registry and the compiled rule base, and exposes the
//! governed operations, each bracketed by its pre and post enforcement
//! points.

mod data;
mod fetch;
mod interp;
mod pep;
mod service;

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RawMutex, RawThreadId, ReentrantMutex, RwLock};
use serde::Serialize;

pub use data::ReplicaCheck;
pub use fetch::{Fetcher, HttpFetcher};
pub(crate) use interp::Flow;
pub use pep::{is_known_pep, PepContext, RuleBase, Verdict, PEP_CATALOG};
pub use service::{IoTracker, MicroService, ServiceCall, ServiceFn};

use crate::catalog::{Catalog, Mutation, ResourceKind, RuleRecord, User};
use crate::drivers::{DriverKind, DriverRegistry, StorageDriver};
use crate::error::{Error, Result};
use crate::provenance::RunGate;
use crate::ruledsl::{parse_rules, print_rule};
use crate::streams::StreamIndexes;

/// Nested firings (a rule action triggering another governed operation)
/// deeper than this fail with an error verdict.
pub const MAX_FIRING_DEPTH: u32 = 16;

thread_local! {
    static DEPTH: Cell<u32> = const { Cell::new(0) };
}

type PathGuard = parking_lot::lock_api::ArcReentrantMutexGuard<RawMutex, RawThreadId, ()>;

/// Per-path reentrant locks: operations on one logical path are serialized,
/// and a rule acting on the path it is guarding does not deadlock.
#[derive(Default)]
struct PathLocks {
    locks: Mutex<HashMap<String, Arc<ReentrantMutex<()>>>>,
}

impl PathLocks {
    fn lock(&self, path: &str) -> PathGuard {
        let m = self.locks.lock().entry(path.to_string()).or_default().clone();
        m.lock_arc()
    }
}

/// Dump of the live rule base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleBaseView {
    pub version: u64,
    pub rules: Vec<RuleRecord>,
}

pub struct Zone {
    pub(crate) catalog: Catalog,
    pub(crate) drivers: DriverRegistry,
    services: RwLock<Arc<BTreeMap<String, Arc<MicroService>>>>,
    rules: RwLock<Arc<RuleBase>>,
    rule_writer: Mutex<()>,
    locks: PathLocks,
    default_resource: RwLock<Option<String>>,
    fetcher: RwLock<Arc<dyn Fetcher>>,
    fetches: AtomicU64,
    pub(crate) streams: StreamIndexes,
    pub(crate) runs: RunGate,
    #[cfg_attr(not(feature = "test-hooks"), allow(dead_code))]
    trace: Mutex<Vec<String>>,
}

impl Zone {
    /// A zone with a volatile catalog.
    pub fn in_memory() -> Zone {
        Zone::with_catalog(Catalog::in_memory()).expect("empty catalog compiles")
    }

    /// Opens a journaled zone, recovering state from `dir`.
    pub fn open(dir: &Path) -> Result<Zone> {
        Zone::with_catalog(Catalog::open(dir)?)
    }

    /// Wraps a catalog: compiles its rules and re-instantiates the driver
    /// kinds it records. Host-provided drivers must be registered again.
    pub fn with_catalog(catalog: Catalog) -> Result<Zone> {
        let drivers = DriverRegistry::with_builtins();
        for (name, kind) in catalog.read().drivers.iter() {
            if let Some(kind) = kind {
                drivers.register(name, kind.instantiate()).map_err(|e| Error::CorruptJournal(e.to_string()))?;
            }
        }
        let rules = compile(&catalog)?;
        let zone = Zone {
            catalog,
            drivers,
            services: RwLock::new(Arc::new(BTreeMap::new())),
            rules: RwLock::new(Arc::new(rules)),
            rule_writer: Mutex::new(()),
            locks: PathLocks::default(),
            default_resource: RwLock::new(None),
            fetcher: RwLock::new(Arc::new(HttpFetcher::default())),
            fetches: AtomicU64::new(0),
            streams: StreamIndexes::default(),
            runs: RunGate::default(),
            trace: Mutex::new(Vec::new()),
        };
        for ms in service::builtins() {
            zone.insert_service(ms)?;
        }
        zone.streams.load(&zone.catalog);
        Ok(zone)
    }

    /// Checks a login and audits the attempt either way.
    pub fn authenticate(&self, user: &str, secret: &str) -> Result<User> {
        match self.catalog.verify_secret(user, secret) {
            Ok(u) => {
                self.audit(user, "auth.login", "ok");
                Ok(u)
            }
            Err(e) => {
                self.audit(user, "auth.fail", "bad credentials");
                Err(e)
            }
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn drivers(&self) -> &DriverRegistry {
        &self.drivers
    }

    fn role_of(&self, user: &str) -> Result<&'static str> {
        self.catalog
            .user(user)
            .map(|u| u.role.as_str())
            .ok_or_else(|| Error::PermissionDenied(format!("unknown user {user}")))
    }

    pub(crate) fn context(&self, actor: &str, op: &str) -> Result<PepContext> {
        Ok(PepContext::new(actor, self.role_of(actor)?, op))
    }

    pub(crate) fn require_admin(&self, actor: &str) -> Result<()> {
        if self.catalog.is_admin(actor) {
            Ok(())
        } else {
            Err(Error::PermissionDenied(format!("{actor} is not an administrator")))
        }
    }

    pub(crate) fn lock_path(&self, path: &str) -> PathGuard {
        self.locks.lock(path)
    }

    /// Journals an effect; every engine-side catalog change goes through here.
    pub(crate) fn commit(&self, m: Mutation) -> Result<u64> {
        self.trace(|| format!("catalog:{}", m.op_name()));
        self.catalog.commit(m)
    }

    pub(crate) fn audit(&self, actor: &str, event: &str, detail: impl Into<String>) {
        // The effect already happened; a failed audit write must not mask it.
        let _ = self.catalog.audit(actor, event, detail);
    }

    #[cfg(feature = "test-hooks")]
    pub(crate) fn trace(&self, event: impl FnOnce() -> String) {
        self.trace.lock().push(event());
    }

    #[cfg(not(feature = "test-hooks"))]
    #[inline]
    pub(crate) fn trace(&self, _event: impl FnOnce() -> String) {}

    /// Ordered log of PEP firings, driver writes/unlinks and catalog
    /// commits since the last call.
    #[cfg(feature = "test-hooks")]
    pub fn take_trace(&self) -> Vec<String> {
        std::mem::take(&mut *self.trace.lock())
    }

    /// Number of network fetches performed.
    #[cfg(feature = "test-hooks")]
    pub fn fetch_requests(&self) -> u64 {
        self.fetches.load(Ordering::SeqCst)
    }

    // ---- policy ------------------------------------------------------

    /// Fires `pep`: runs the chain of the first matching rule (priority
    /// descending, then name) and audits the outcome.
    pub fn fire_pep(&self, pep: &str, ctx: &PepContext) -> Result<Verdict> {
        if !is_known_pep(pep) {
            return Err(Error::UnknownPep(pep.to_string()));
        }
        self.trace(|| format!("pep:{pep}"));
        let rules = self.rules.read().clone();
        let services = self.services.read().clone();
        let depth = DEPTH.with(|d| {
            d.set(d.get() + 1);
            d.get()
        });
        let (rule, verdict) = if depth > MAX_FIRING_DEPTH {
            (None, Verdict::Error("rule recursion limit reached".into()))
        } else {
            interp::select_and_run(self, &services, &rules, pep, ctx)
        };
        DEPTH.with(|d| d.set(d.get() - 1));
        let actor = ctx.get("user.name").map(|v| v.to_string()).unwrap_or_default();
        let rule = rule.unwrap_or_else(|| "-".to_string());
        let detail = match &verdict {
            Verdict::Allow => format!("{pep} rule={rule}"),
            Verdict::Deny(r) | Verdict::Error(r) => format!("{pep} rule={rule}: {r}"),
        };
        self.audit(&actor, &format!("pep.{}", verdict.tag()), detail);
        Ok(verdict)
    }

    /// Fires a pre-PEP; anything but Allow aborts the operation.
    pub(crate) fn pre(&self, pep: &str, ctx: &PepContext) -> Result<()> {
        match self.fire_pep(pep, ctx)? {
            Verdict::Allow => Ok(()),
            Verdict::Deny(reason) => Err(Error::Denied(reason)),
            Verdict::Error(detail) => Err(Error::PolicyFailed(detail)),
        }
    }

    /// Fires a post-PEP; its verdict is audited but cannot undo anything.
    pub(crate) fn post(&self, pep: &str, ctx: &PepContext) {
        let _ = self.fire_pep(pep, ctx);
    }

    /// Parses `text` and installs every rule in it. All rules are checked
    /// before any is installed.
    pub fn add_rule(&self, actor: &str, text: &str) -> Result<Vec<String>> {
        self.require_admin(actor)?;
        let parsed = parse_rules(text)?;
        let _w = self.rule_writer.lock();
        {
            let st = self.catalog.read();
            let mut seen = std::collections::BTreeSet::new();
            for r in &parsed {
                if !is_known_pep(&r.pep) {
                    return Err(Error::UnknownPep(r.pep.clone()));
                }
                if st.rules.contains_key(&r.name) || !seen.insert(r.name.as_str()) {
                    return Err(Error::DuplicateRuleName(r.name.clone()));
                }
            }
        }
        let mut names = Vec::new();
        for r in &parsed {
            self.commit(Mutation::AddRule {
                name: r.name.clone(),
                pep: r.pep.clone(),
                priority: r.priority,
                source: print_rule(r),
            })?;
            names.push(r.name.clone());
        }
        *self.rules.write() = Arc::new(compile(&self.catalog)?);
        self.audit(actor, "rule.add", names.join(","));
        Ok(names)
    }

    pub fn remove_rule(&self, actor: &str, name: &str) -> Result<()> {
        self.require_admin(actor)?;
        let _w = self.rule_writer.lock();
        self.commit(Mutation::RemoveRule { name: name.to_string() })?;
        *self.rules.write() = Arc::new(compile(&self.catalog)?);
        self.audit(actor, "rule.remove", name);
        Ok(())
    }

    pub fn list_rules(&self) -> RuleBaseView {
        let st = self.catalog.read();
        RuleBaseView { version: st.rule_version, rules: st.rules.values().cloned().collect() }
    }

    /// Version of the rule base that the next firing will see.
    pub fn rule_base_version(&self) -> u64 {
        self.rules.read().version
    }

    /// Runs an action chain outside any rule, as workflow bodies do.
    pub(crate) fn exec_chain(
        &self,
        chain: &[crate::ruledsl::Action],
        ctx: &PepContext,
        base: &str,
        locals: &mut BTreeMap<String, crate::ruledsl::Value>,
        tracker: Option<&IoTracker>,
    ) -> Result<Flow> {
        let services = self.services.read().clone();
        let exec = interp::Exec { zone: self, services: &services, ctx, base: base.to_string(), tracker };
        exec.run(chain, locals)
    }

    // ---- registries --------------------------------------------------

    fn insert_service(&self, ms: MicroService) -> Result<()> {
        let mut guard = self.services.write();
        if guard.contains_key(&ms.name) {
            return Err(Error::DuplicateName(ms.name.clone()));
        }
        let mut next = (**guard).clone();
        next.insert(ms.name.clone(), Arc::new(ms));
        *guard = Arc::new(next);
        Ok(())
    }

    /// Makes a micro-service callable from every firing that starts after
    /// this returns.
    pub fn register_microservice(&self, actor: &str, ms: MicroService) -> Result<()> {
        self.require_admin(actor)?;
        let name = ms.name.clone();
        self.insert_service(ms)?;
        self.audit(actor, "microservice.register", name);
        Ok(())
    }

    pub fn microservice(&self, name: &str) -> Option<Arc<MicroService>> {
        self.services.read().get(name).cloned()
    }

    pub fn microservice_names(&self) -> Vec<String> {
        self.services.read().keys().cloned().collect()
    }

    /// Loads host-provided driver code. After a restart the same name may
    /// be loaded again without a new catalog entry.
    pub fn register_driver(&self, actor: &str, name: &str, driver: Arc<dyn StorageDriver>) -> Result<()> {
        self.require_admin(actor)?;
        let known = self.catalog.read().drivers.get(name).copied();
        match known {
            Some(Some(_)) => return Err(Error::DuplicateName(name.to_string())),
            Some(None) => {}
            None => {
                if self.drivers.contains(name) {
                    return Err(Error::DuplicateName(name.to_string()));
                }
            }
        }
        self.drivers.register(name, driver).map_err(|e| Error::DuplicateName(e.0))?;
        if known.is_none() {
            self.commit(Mutation::RegisterDriver { name: name.to_string(), kind: None })?;
        }
        self.audit(actor, "driver.register", name);
        Ok(())
    }

    /// Instantiates a built-in driver kind under a new name; recorded so it
    /// is re-created on recovery.
    pub fn register_driver_kind(&self, actor: &str, name: &str, kind: DriverKind) -> Result<()> {
        self.require_admin(actor)?;
        if self.drivers.contains(name) || self.catalog.read().drivers.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        self.drivers.register(name, kind.instantiate()).map_err(|e| Error::DuplicateName(e.0))?;
        self.commit(Mutation::RegisterDriver { name: name.to_string(), kind: Some(kind) })?;
        self.audit(actor, "driver.register", format!("{name} kind={kind:?}").to_lowercase());
        Ok(())
    }

    pub fn register_resource(
        &self,
        actor: &str,
        name: &str,
        driver: &str,
        root: &str,
        kind: ResourceKind,
    ) -> Result<()> {
        if !self.drivers.contains(driver) {
            return Err(Error::UnknownDriver(driver.to_string()));
        }
        self.catalog.register_resource(actor, name, driver, root, kind)
    }

    /// Resource used when an operation names none (fetches, workflow
    /// outputs, stream segments, run exports).
    pub fn set_default_resource(&self, name: &str) -> Result<()> {
        if self.catalog.resource(name).is_none() {
            return Err(Error::NoSuchResource(name.to_string()));
        }
        *self.default_resource.write() = Some(name.to_string());
        Ok(())
    }

    pub fn default_resource(&self) -> Option<String> {
        self.default_resource.read().clone()
    }

    pub(crate) fn require_default_resource(&self) -> Result<String> {
        self.default_resource().ok_or(Error::NoDefaultResource)
    }

    /// Replaces the network client used by `http_fetch`.
    pub fn set_fetcher(&self, f: Arc<dyn Fetcher>) {
        *self.fetcher.write() = f;
    }

    pub(crate) fn network_fetch(&self, url: &str) -> Result<Vec<u8>> {
        self.fetches.fetch_add(1, Ordering::SeqCst);
        let f = self.fetcher.read().clone();
        f.fetch(url)
    }
}

fn compile(catalog: &Catalog) -> Result<RuleBase> {
    let st = catalog.read();
    let mut rules = Vec::with_capacity(st.rules.len());
    for rec in st.rules.values() {
        let mut parsed =
            parse_rules(&rec.source).map_err(|e| Error::CorruptJournal(format!("stored rule {}: {e}", rec.name)))?;
        match parsed.pop() {
            Some(r) if parsed.is_empty() => rules.push(r),
            _ => return Err(Error::CorruptJournal(format!("stored rule {} is not a single rule", rec.name))),
        }
    }
    Ok(RuleBase::new(st.rule_version, rules))
}
