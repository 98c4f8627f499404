//! Storage driver capability interface, the built-in drivers and the
//! runtime driver registry.
//!
//! A driver owns the meaning of a [`PhysicalRef`]; nothing outside this
//! module looks inside one. Every operation takes the resource root so one
//! driver instance can serve many resources.

mod archive;
pub mod conformance;
#[cfg(feature = "test-hooks")]
mod faulty;
mod localfs;
mod mem;

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use archive::ArchiveDriver;
#[cfg(feature = "test-hooks")]
pub use faulty::FaultyDriver;
pub use localfs::LocalFsDriver;
pub use mem::MemDriver;

/// Driver-specific locator of one stored byte sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhysicalRef(String);

impl PhysicalRef {
    pub(crate) fn new(s: impl Into<String>) -> Self {
        PhysicalRef(s.into())
    }

    pub(crate) fn as_str(&self) -> &str {
        &self.0
    }
}

/// An open handle. Single use: obtained from `open`, consumed by `close`.
#[derive(Debug, PartialEq, Eq)]
pub struct Handle {
    id: u64,
}

impl Handle {
    pub(crate) fn new(id: u64) -> Self {
        Handle { id }
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    /// Existing bytes may be overwritten after the creating handle closed.
    pub supports_update: bool,
    pub supports_unlink: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub size: u64,
    pub exists: bool,
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("no such physical object")]
    NotFound,
    #[error("unknown or already closed handle")]
    BadHandle,
    #[error("operation not supported by this driver: {0}")]
    Unsupported(&'static str),
    #[error("bad resource root {0:?}")]
    BadRoot(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

pub type DriverResult<T> = Result<T, DriverError>;

/// POSIX-like byte storage at one kind of location.
///
/// Reads past end of file return the available bytes (possibly none).
/// Writes past end of file zero-fill the gap.
pub trait StorageDriver: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    /// Allocates a fresh, empty object and returns its locator.
    fn create(&self, root: &str) -> DriverResult<PhysicalRef>;

    fn open(&self, root: &str, r: &PhysicalRef) -> DriverResult<Handle>;

    fn read(&self, h: &Handle, offset: u64, len: usize) -> DriverResult<Vec<u8>>;

    fn write(&self, h: &Handle, offset: u64, data: &[u8]) -> DriverResult<()>;

    fn close(&self, h: Handle) -> DriverResult<()>;

    fn unlink(&self, root: &str, r: &PhysicalRef) -> DriverResult<()>;

    /// Never fails for an unknown ref; reports `exists: false` instead.
    fn stat(&self, root: &str, r: &PhysicalRef) -> DriverResult<Stat>;
}

/// Creates a new object holding `bytes`.
pub fn write_new(d: &dyn StorageDriver, root: &str, bytes: &[u8]) -> DriverResult<PhysicalRef> {
    let r = d.create(root)?;
    let h = d.open(root, &r)?;
    let written = d.write(&h, 0, bytes);
    let closed = d.close(h);
    if let Err(e) = written.and(closed) {
        let _ = d.unlink(root, &r);
        return Err(e);
    }
    Ok(r)
}

/// Reads an object in full.
pub fn read_all(d: &dyn StorageDriver, root: &str, r: &PhysicalRef) -> DriverResult<Vec<u8>> {
    const CHUNK: usize = 1 << 20;
    let h = d.open(root, r)?;
    let mut out = Vec::new();
    let result = loop {
        match d.read(&h, out.len() as u64, CHUNK) {
            Ok(chunk) if chunk.is_empty() => break Ok(()),
            Ok(chunk) => out.extend_from_slice(&chunk),
            Err(e) => break Err(e),
        }
    };
    let closed = d.close(h);
    result.and(closed)?;
    Ok(out)
}

/// Built-in driver kinds that can be instantiated by name at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverKind {
    Mem,
    Localfs,
    Archive,
}

impl DriverKind {
    pub fn instantiate(self) -> Arc<dyn StorageDriver> {
        match self {
            DriverKind::Mem => Arc::new(MemDriver::default()),
            DriverKind::Localfs => Arc::new(LocalFsDriver::default()),
            DriverKind::Archive => Arc::new(ArchiveDriver::default()),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mem" => Some(DriverKind::Mem),
            "localfs" => Some(DriverKind::Localfs),
            "archive" => Some(DriverKind::Archive),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("driver {0:?} already registered")]
pub struct DuplicateDriver(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegistryEvent {
    pub name: String,
    pub when_us: u64,
}

/// Name → driver map, replaced wholesale on registration so each lookup
/// sees one consistent version.
pub struct DriverRegistry {
    drivers: RwLock<Arc<BTreeMap<String, Arc<dyn StorageDriver>>>>,
    log: RwLock<Vec<RegistryEvent>>,
}

impl Default for DriverRegistry {
    fn default() -> Self {
        DriverRegistry { drivers: RwLock::new(Arc::new(BTreeMap::new())), log: RwLock::new(Vec::new()) }
    }
}

impl DriverRegistry {
    /// Registry holding `localfs`, `mem` and `archive`.
    pub fn with_builtins() -> Self {
        let reg = DriverRegistry::default();
        for (name, kind) in
            [("localfs", DriverKind::Localfs), ("mem", DriverKind::Mem), ("archive", DriverKind::Archive)]
        {
            reg.register(name, kind.instantiate()).expect("fresh registry");
        }
        reg
    }

    pub fn register(&self, name: &str, driver: Arc<dyn StorageDriver>) -> Result<(), DuplicateDriver> {
        let mut guard = self.drivers.write();
        if guard.contains_key(name) {
            return Err(DuplicateDriver(name.to_string()));
        }
        let mut next = (**guard).clone();
        next.insert(name.to_string(), driver);
        *guard = Arc::new(next);
        self.log.write().push(RegistryEvent { name: name.to_string(), when_us: crate::now_us() });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn StorageDriver>> {
        self.drivers.read().get(name).cloned()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.drivers.read().contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.drivers.read().keys().cloned().collect()
    }

    pub fn log(&self) -> Vec<RegistryEvent> {
        self.log.read().clone()
    }
}
