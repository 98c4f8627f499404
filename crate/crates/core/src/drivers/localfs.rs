use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::ErrorKind;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

use super::{Capabilities, DriverError, DriverResult, Handle, PhysicalRef, Stat, StorageDriver};

/// POSIX files under `<root>/<two-hex-shard>/<uuid>`. Only the bytes are
/// stored; all metadata lives in the catalog.
#[derive(Default)]
pub struct LocalFsDriver {
    handles: Mutex<HashMap<u64, File>>,
    next: AtomicU64,
}

/// Maps a ref to its file, rejecting anything that is not `xx/<32 hex>`.
fn file_path(root: &str, r: &PhysicalRef) -> DriverResult<PathBuf> {
    let s = r.as_str();
    let valid = s.len() == 35
        && s.as_bytes()[2] == b'/'
        && s[..2] == s[3..5]
        && s.bytes().enumerate().all(|(i, b)| i == 2 || b.is_ascii_hexdigit() && !b.is_ascii_uppercase());
    if !valid {
        return Err(DriverError::NotFound);
    }
    if root.is_empty() {
        return Err(DriverError::BadRoot(root.to_string()));
    }
    Ok(Path::new(root).join(s))
}

fn not_found_as(e: std::io::Error) -> DriverError {
    if e.kind() == ErrorKind::NotFound {
        DriverError::NotFound
    } else {
        DriverError::Io(e)
    }
}

impl LocalFsDriver {
    fn with_file<T>(&self, h: &Handle, f: impl FnOnce(&File) -> std::io::Result<T>) -> DriverResult<T> {
        let handles = self.handles.lock();
        let file = handles.get(&h.id()).ok_or(DriverError::BadHandle)?;
        Ok(f(file)?)
    }
}

impl StorageDriver for LocalFsDriver {
    fn capabilities(&self) -> Capabilities {
        Capabilities { supports_update: true, supports_unlink: true }
    }

    fn create(&self, root: &str) -> DriverResult<PhysicalRef> {
        if root.is_empty() {
            return Err(DriverError::BadRoot(root.to_string()));
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let r = PhysicalRef::new(format!("{}/{}", &id[..2], id));
        let path = file_path(root, &r)?;
        fs::create_dir_all(path.parent().expect("sharded path"))?;
        OpenOptions::new().write(true).create_new(true).open(&path)?;
        Ok(r)
    }

    fn open(&self, root: &str, r: &PhysicalRef) -> DriverResult<Handle> {
        let file = OpenOptions::new().read(true).write(true).open(file_path(root, r)?).map_err(not_found_as)?;
        let id = self.next.fetch_add(1, Ordering::Relaxed);
        self.handles.lock().insert(id, file);
        Ok(Handle::new(id))
    }

    fn read(&self, h: &Handle, offset: u64, len: usize) -> DriverResult<Vec<u8>> {
        self.with_file(h, |file| {
            let mut buf = vec![0u8; len];
            let mut filled = 0;
            while filled < len {
                match file.read_at(&mut buf[filled..], offset + filled as u64) {
                    Ok(0) => break,
                    Ok(n) => filled += n,
                    Err(e) if e.kind() == ErrorKind::Interrupted => {}
                    Err(e) => return Err(e),
                }
            }
            buf.truncate(filled);
            Ok(buf)
        })
    }

    fn write(&self, h: &Handle, offset: u64, data: &[u8]) -> DriverResult<()> {
        self.with_file(h, |file| file.write_all_at(data, offset))
    }

    fn close(&self, h: Handle) -> DriverResult<()> {
        let file = self.handles.lock().remove(&h.id()).ok_or(DriverError::BadHandle)?;
        file.sync_data()?;
        Ok(())
    }

    fn unlink(&self, root: &str, r: &PhysicalRef) -> DriverResult<()> {
        fs::remove_file(file_path(root, r)?).map_err(not_found_as)
    }

    fn stat(&self, root: &str, r: &PhysicalRef) -> DriverResult<Stat> {
        let Ok(path) = file_path(root, r) else {
            return Ok(Stat::default());
        };
        match fs::metadata(path) {
            Ok(m) if m.is_file() => Ok(Stat { size: m.len(), exists: true }),
            Ok(_) => Ok(Stat::default()),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(Stat::default()),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_sharded_uuid() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_str().unwrap();
        let d = LocalFsDriver::default();
        let r = d.create(root).unwrap();
        let s = r.as_str();
        assert_eq!(&s[..2], &s[3..5]);
        assert!(dir.path().join(s).is_file());
    }

    #[test]
    fn rejects_foreign_refs() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_str().unwrap();
        let d = LocalFsDriver::default();
        let evil = PhysicalRef::new("../../etc/passwd");
        assert!(matches!(d.open(root, &evil), Err(DriverError::NotFound)));
        assert_eq!(d.stat(root, &evil).unwrap(), Stat::default());
    }
}
