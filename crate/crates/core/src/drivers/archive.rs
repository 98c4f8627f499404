use std::collections::{HashMap, HashSet};

use parking_lot::Mutex;

use super::{Capabilities, DriverError, DriverResult, Handle, LocalFsDriver, PhysicalRef, Stat, StorageDriver};

/// Write-once storage on top of the local filesystem layout.
///
/// An object may be written only through the handle opened right after
/// `create`; closing that handle seals it. Sealed objects can be read but
/// never updated or unlinked.
#[derive(Default)]
pub struct ArchiveDriver {
    inner: LocalFsDriver,
    unsealed: Mutex<HashSet<(String, PhysicalRef)>>,
    // handle id -> object it may still fill, if any
    filling: Mutex<HashMap<u64, Option<(String, PhysicalRef)>>>,
}

impl StorageDriver for ArchiveDriver {
    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_update: false, supports_unlink: false }
    }

    fn create(&self, root: &str) -> DriverResult<PhysicalRef> {
        let r = self.inner.create(root)?;
        self.unsealed.lock().insert((root.to_string(), r.clone()));
        Ok(r)
    }

    fn open(&self, root: &str, r: &PhysicalRef) -> DriverResult<Handle> {
        let h = self.inner.open(root, r)?;
        let key = (root.to_string(), r.clone());
        // Only the first open after create may write.
        let fill = self.unsealed.lock().remove(&key).then_some(key);
        self.filling.lock().insert(h.id(), fill);
        Ok(h)
    }

    fn read(&self, h: &Handle, offset: u64, len: usize) -> DriverResult<Vec<u8>> {
        self.inner.read(h, offset, len)
    }

    fn write(&self, h: &Handle, offset: u64, data: &[u8]) -> DriverResult<()> {
        match self.filling.lock().get(&h.id()) {
            None => return Err(DriverError::BadHandle),
            Some(None) => return Err(DriverError::Unsupported("update of archived object")),
            Some(Some(_)) => {}
        }
        self.inner.write(h, offset, data)
    }

    fn close(&self, h: Handle) -> DriverResult<()> {
        self.filling.lock().remove(&h.id());
        self.inner.close(h)
    }

    fn unlink(&self, _root: &str, _r: &PhysicalRef) -> DriverResult<()> {
        Err(DriverError::Unsupported("unlink of archived object"))
    }

    fn stat(&self, root: &str, r: &PhysicalRef) -> DriverResult<Stat> {
        self.inner.stat(root, r)
    }
}
