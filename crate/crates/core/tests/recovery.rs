mod common;

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use common::session::{run_session, sha256_tool, Shadow};
use common::ADMIN;
use pgzone_core::catalog::{Catalog, CatalogState, ResourceKind};
use pgzone_core::Zone;

const CHILD_ENV: &str = "PGZONE_CRASH_CHILD";
const SNAPSHOT_EVERY: u64 = 64;

fn open(jdir: &Path) -> Zone {
    Zone::with_catalog(Catalog::open_with(jdir, SNAPSHOT_EVERY).unwrap()).unwrap()
}

fn setup(z: &Zone, data: &Path) {
    common::populate(z, &data.join("d1"));
    z.register_resource(ADMIN, "disk2", "localfs", data.join("d2").to_str().unwrap(), ResourceKind::Cache).unwrap();
}

/// Body of the child process: runs a session, writes what the parent should
/// find, then dies without unwinding or flushing anything.
#[test]
fn crash_child() {
    let Ok(root) = std::env::var(CHILD_ENV) else { return };
    let root = Path::new(&root);
    let z = open(&root.join("journal"));
    setup(&z, &root.join("data"));
    let mut shadow = Shadow::project(&z.catalog().snapshot_state());
    let ok = run_session(&z, &mut shadow, 0x5eed, 500);
    assert!(ok > 100, "only {ok} operations succeeded");
    let state = z.catalog().snapshot_state();
    std::fs::write(root.join("state.json"), serde_json::to_vec(&state).unwrap()).unwrap();
    std::fs::write(root.join("shadow.json"), serde_json::to_vec(&shadow).unwrap()).unwrap();
    std::process::abort();
}

#[test]
fn recovers_after_hard_kill() {
    let started = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let status = Command::new(std::env::current_exe().unwrap())
        .args(["--exact", "crash_child", "--test-threads=1", "--nocapture"])
        .env(CHILD_ENV, root.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), None, "child should die from abort, got {status}");
    let expected: CatalogState =
        serde_json::from_slice(&std::fs::read(root.path().join("state.json")).unwrap()).unwrap();
    let shadow: Shadow = serde_json::from_slice(&std::fs::read(root.path().join("shadow.json")).unwrap()).unwrap();

    let z = open(&root.path().join("journal"));
    let got = z.catalog().snapshot_state();
    assert_eq!(got, expected);
    assert_eq!(Shadow::project(&got), shadow);
    assert!(shadow.objects.len() > 10);

    for (path, obj) in &shadow.objects {
        let bytes = z.get(ADMIN, path).unwrap();
        assert_eq!(sha256_tool(&bytes), obj.checksum, "{path}");
    }
    assert!(started.elapsed().as_secs() < 10, "took {:?}", started.elapsed());
}

#[test]
fn torn_tail_is_dropped() {
    let root = tempfile::tempdir().unwrap();
    let jdir = root.path().join("journal");
    let before = {
        let z = open(&jdir);
        setup(&z, &root.path().join("data"));
        z.put("alice", "/home/alice/a", b"one", Some("disk1")).unwrap();
        z.catalog().snapshot_state()
    };
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().append(true).open(jdir.join("journal.log")).unwrap();
    f.write_all(br#"{"seq":99999,"op":"create_us"#).unwrap();
    drop(f);
    let z = open(&jdir);
    assert_eq!(z.catalog().snapshot_state(), before);
    z.put("alice", "/home/alice/b", b"two", Some("disk1")).unwrap();
    drop(z);
    let z = open(&jdir);
    assert!(z.catalog().object("/home/alice/b").is_some());
}

#[test]
fn replay_is_deterministic() {
    let root = tempfile::tempdir().unwrap();
    let jdir = root.path().join("journal");
    let live = {
        let z = open(&jdir);
        setup(&z, &root.path().join("data"));
        let mut shadow = Shadow::project(&z.catalog().snapshot_state());
        run_session(&z, &mut shadow, 99, 150);
        assert_eq!(Shadow::project(&z.catalog().snapshot_state()), shadow);
        z.catalog().snapshot_state()
    };
    let a = open(&jdir).catalog().snapshot_state();
    let b = open(&jdir).catalog().snapshot_state();
    assert_eq!(a, live);
    assert_eq!(b, live);
}
