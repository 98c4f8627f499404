use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

use super::{Capabilities, DriverError, DriverResult, Handle, PhysicalRef, Stat, StorageDriver};

type Key = (String, PhysicalRef);

/// Volatile in-process storage. The resource root is only a namespace.
#[derive(Default)]
pub struct MemDriver {
    objects: Mutex<HashMap<Key, Vec<u8>>>,
    handles: Mutex<HashMap<u64, Key>>,
    next: AtomicU64,
}

impl MemDriver {
    fn key_of(&self, h: &Handle) -> DriverResult<Key> {
        self.handles.lock().get(&h.id()).cloned().ok_or(DriverError::BadHandle)
    }

    /// Applies `f` to the stored bytes; used to simulate media corruption.
    #[cfg_attr(not(feature = "test-hooks"), allow(dead_code))]
    pub(crate) fn mutate(&self, root: &str, r: &PhysicalRef, f: impl FnOnce(&mut Vec<u8>)) -> DriverResult<()> {
        let mut objs = self.objects.lock();
        let bytes = objs.get_mut(&(root.to_string(), r.clone())).ok_or(DriverError::NotFound)?;
        f(bytes);
        Ok(())
    }
}

impl StorageDriver for MemDriver {
    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_update: true, supports_unlink: true }
    }

    fn create(&self, root: &str) -> DriverResult<PhysicalRef> {
        let r = PhysicalRef::new(uuid::Uuid::new_v4().simple().to_string());
        self.objects.lock().insert((root.to_string(), r.clone()), Vec::new());
        Ok(r)
    }

    fn open(&self, root: &str, r: &PhysicalRef) -> DriverResult<Handle> {
        let key = (root.to_string(), r.clone());
        if !self.objects.lock().contains_key(&key) {
            return Err(DriverError::NotFound);
        }
        let id = self.next.fetch_add(1, Ordering::Relaxed);
        self.handles.lock().insert(id, key);
        Ok(Handle::new(id))
    }

    fn read(&self, h: &Handle, offset: u64, len: usize) -> DriverResult<Vec<u8>> {
        let key = self.key_of(h)?;
        let objs = self.objects.lock();
        let bytes = objs.get(&key).ok_or(DriverError::NotFound)?;
        let start = usize::try_from(offset).unwrap_or(usize::MAX).min(bytes.len());
        let end = start.saturating_add(len).min(bytes.len());
        Ok(bytes[start..end].to_vec())
    }

    fn write(&self, h: &Handle, offset: u64, data: &[u8]) -> DriverResult<()> {
        let key = self.key_of(h)?;
        if data.is_empty() {
            return Ok(());
        }
        let mut objs = self.objects.lock();
        let bytes = objs.get_mut(&key).ok_or(DriverError::NotFound)?;
        let start = usize::try_from(offset).map_err(|_| DriverError::Other("offset too large".into()))?;
        let end = start + data.len();
        if bytes.len() < end {
            bytes.resize(end, 0);
        }
        bytes[start..end].copy_from_slice(data);
        Ok(())
    }

    fn close(&self, h: Handle) -> DriverResult<()> {
        self.handles.lock().remove(&h.id()).map(|_| ()).ok_or(DriverError::BadHandle)
    }

    fn unlink(&self, root: &str, r: &PhysicalRef) -> DriverResult<()> {
        self.objects.lock().remove(&(root.to_string(), r.clone())).map(|_| ()).ok_or(DriverError::NotFound)
    }

    fn stat(&self, root: &str, r: &PhysicalRef) -> DriverResult<Stat> {
        Ok(self
            .objects
            .lock()
            .get(&(root.to_string(), r.clone()))
            .map(|b| Stat { size: b.len() as u64, exists: true })
            .unwrap_or_default())
    }
}
