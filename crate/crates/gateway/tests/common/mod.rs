#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use pgzone_core::catalog::{CollectionKind, ResourceKind, Role};
use pgzone_core::Zone;
use pgzone_gateway::{spawn, Client, ServerHandle};

pub const ADMIN: &str = "root";

/// Users root (admin), alice and bob; localfs `disk1` under `dir` as the
/// default resource, mem `mem1`; /home/{alice,bob} owned by their users.
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

pub fn zone(dir: &Path) -> Arc<Zone> {
    let z = Zone::in_memory();
    populate(&z, dir);
    Arc::new(z)
}

pub fn server(dir: &Path) -> (ServerHandle, Arc<Zone>) {
    let z = zone(dir);
    (spawn(z.clone(), "127.0.0.1:0").unwrap(), z)
}

pub fn secret(user: &str) -> String {
    format!("{user}pw")
}

pub fn login(h: &ServerHandle, user: &str) -> Client {
    let mut c = Client::new(&h.url()).unwrap();
    c.login(user, &secret(user)).unwrap();
    c
}

pub fn sha256_oracle(bytes: &[u8]) -> String {
    use std::io::Write;
    use std::process::{Command, Stdio};
    let mut child = Command::new("sha256sum").stdin(Stdio::piped()).stdout(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(bytes).unwrap();
    let out = child.wait_with_output().unwrap();
    String::from_utf8(out.stdout).unwrap().split_whitespace().next().unwrap().to_string()
}
