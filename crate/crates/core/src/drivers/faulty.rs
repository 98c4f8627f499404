use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use super::{Capabilities, DriverError, DriverResult, Handle, MemDriver, PhysicalRef, Stat, StorageDriver};

/// In-memory driver with switchable faults, for tests.
#[derive(Default)]
pub struct FaultyDriver {
    inner: MemDriver,
    corrupt_writes: AtomicBool,
    fail_unlink: AtomicBool,
    writes: AtomicU64,
}

impl FaultyDriver {
    /// Flip the first byte of every subsequent write.
    pub fn corrupt_writes(&self, on: bool) {
        self.corrupt_writes.store(on, Ordering::SeqCst);
    }

    pub fn fail_unlink(&self, on: bool) {
        self.fail_unlink.store(on, Ordering::SeqCst);
    }

    /// Flip the first byte of an already stored object.
    pub fn corrupt_stored(&self, root: &str, r: &PhysicalRef) -> DriverResult<()> {
        self.inner.mutate(root, r, |b| match b.first_mut() {
            Some(x) => *x ^= 0xff,
            None => b.push(0xff),
        })
    }

    pub fn write_count(&self) -> u64 {
        self.writes.load(Ordering::SeqCst)
    }
}

impl StorageDriver for FaultyDriver {
    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn create(&self, root: &str) -> DriverResult<PhysicalRef> {
        self.inner.create(root)
    }

    fn open(&self, root: &str, r: &PhysicalRef) -> DriverResult<Handle> {
        self.inner.open(root, r)
    }

    fn read(&self, h: &Handle, offset: u64, len: usize) -> DriverResult<Vec<u8>> {
        self.inner.read(h, offset, len)
    }

    fn write(&self, h: &Handle, offset: u64, data: &[u8]) -> DriverResult<()> {
        self.writes.fetch_add(1, Ordering::SeqCst);
        if self.corrupt_writes.load(Ordering::SeqCst) {
            let mut bad = data.to_vec();
            match bad.first_mut() {
                Some(x) => *x ^= 0xff,
                None => bad.push(0xff),
            }
            return self.inner.write(h, offset, &bad);
        }
        self.inner.write(h, offset, data)
    }

    fn close(&self, h: Handle) -> DriverResult<()> {
        self.inner.close(h)
    }

    fn unlink(&self, root: &str, r: &PhysicalRef) -> DriverResult<()> {
        if self.fail_unlink.load(Ordering::SeqCst) {
            return Err(DriverError::Other("injected unlink failure".into()));
        }
        self.inner.unlink(root, r)
    }

    fn stat(&self, root: &str, r: &PhysicalRef) -> DriverResult<Stat> {
        self.inner.stat(root, r)
    }
}
