#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use pgzone_core::catalog::{CatalogState, CollectionKind, ResourceKind, Role};
use pgzone_core::Zone;

pub const ADMIN: &str = "root";

/// Zone with users root (admin), alice and bob, a localfs resource `disk1`
/// rooted at `dir` (the default), a mem resource `mem1`, and collections
/// /home, /home/alice and /home/bob owned by their users.
pub fn zone(dir: &Path) -> Zone {
    let z = Zone::in_memory();
    populate(&z, dir);
    z
}

pub fn populate(z: &Zone, dir: &Path) {
    let c = z.catalog();
    c.bootstrap_admin(ADMIN, "rootpw").unwrap();
    c.create_user(ADMIN, "alice", Role::User, "alicepw").unwrap();
    c.create_user(ADMIN, "bob", Role::User, "bobpw").unwrap();
    z.register_resource(ADMIN, "disk1", "localfs", dir.to_str().unwrap(), ResourceKind::Cache).unwrap();
    z.register_resource(ADMIN, "mem1", "mem", "m1", ResourceKind::Cache).unwrap();
    z.set_default_resource("disk1").unwrap();
    z.make_collection(ADMIN, "/home", CollectionKind::Plain, None).unwrap();
    z.make_collection(ADMIN, "/home/alice", CollectionKind::Plain, Some("alice")).unwrap();
    z.make_collection(ADMIN, "/home/bob", CollectionKind::Plain, Some("bob")).unwrap();
}

/// Catalog state without the audit trail and sequence counter.
pub fn state_sans_audit(z: &Zone) -> CatalogState {
    let mut s = z.catalog().snapshot_state();
    s.audit.clear();
    s.last_seq = 0;
    s
}

/// Every file under `dir` with its contents.
pub fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&d) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// SHA-256 computed by the system `sha256sum` tool.
pub fn sha256_oracle(bytes: &[u8]) -> String {
    use std::io::Write;
    use std::process::{Command, Stdio};
    let mut child = Command::new("sha256sum").stdin(Stdio::piped()).stdout(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(bytes).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap().split_whitespace().next().unwrap().to_string()
}
pub mod session;
