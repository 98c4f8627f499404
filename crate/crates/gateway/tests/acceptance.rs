//! End-to-end acceptance scenarios. Runs without the libtest harness so each
//! scenario reports exactly one PASS/FAIL line, in order, with its time
//! budget.

mod common;
#[path = "../../core/tests/common/session.rs"]
mod session;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use common::{login, secret, sha256_oracle, ADMIN};
use pgzone_core::catalog::{
    AuditQuery, AvuTriple, Catalog, CatalogState, CollectionKind, Perm, ReplicaStatus, ResourceKind,
};
use pgzone_core::drivers::FaultyDriver;
use pgzone_core::ruledsl::{parse_expr, parse_procedure, parse_rules, print_rules, Value};
use pgzone_core::{Error, ErrorClass, Zone};
use pgzone_gateway::{spawn, Client, ClientError};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use session::{run_session, sha256_tool, Shadow};

const CRASH_ENV: &str = "PGZONE_ACCEPTANCE_CRASH_CHILD";
const CORPUS: &str = include_str!("../../core/tests/data/policies.rule");

type Scenario = fn();

fn main() {
    if let Ok(root) = std::env::var(CRASH_ENV) {
        crash_child(Path::new(&root));
    }
    let scenarios: [(&str, Duration, Scenario); 10] = [
        ("deletion-policy matrix", secs(1.0), deletion_matrix),
        ("live policy change over the network", secs(1.0), live_policy_change),
        ("stream oracle equivalence", secs(10.0), stream_oracle),
        ("AVU query equivalence", secs(10.0), avu_queries),
        ("provenance reproducibility", secs(5.0), provenance),
        ("hot pluggability", secs(30.0), hot_pluggability),
        ("replica agreement and fault detection", secs(5.0), replica_faults),
        ("fetch caching", secs(2.0), fetch_caching),
        ("parser robustness", secs(60.0), parser_robustness),
        ("crash recovery", secs(10.0), crash_recovery),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, budget, f)) in scenarios.into_iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(f);
        let took = started.elapsed();
        let verdict = match outcome {
            Ok(()) if took < budget => "PASS",
            _ => "FAIL",
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        let over = if outcome.is_ok() && took >= budget { " over budget" } else { "" };
        let line = format!(
            "{verdict} {:>2} {name}: {:.3} s (budget {} s){over}\n",
            i + 1,
            took.as_secs_f64(),
            budget.as_secs_f64()
        );
        std::io::stdout().write_all(line.as_bytes()).unwrap();
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn secs(s: f64) -> Duration {
    Duration::from_secs_f64(s)
}

fn populate_zone() -> (Arc<Zone>, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let z = common::zone(dir.path());
    (z, dir)
}

/// Catalog state without the audit trail and sequence counter.
fn state_sans_audit(z: &Zone) -> CatalogState {
    let mut s = z.catalog().snapshot_state();
    s.audit.clear();
    s.last_seq = 0;
    s
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
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

fn api_status<T: std::fmt::Debug>(r: Result<T, ClientError>) -> (u16, String) {
    match r {
        Err(ClientError::Api { status, body }) => (status, body.kind),
        other => panic!("expected an API error, got {other:?}"),
    }
}

// ---- 1 ---------------------------------------------------------------

const DELETION_RULES: &str = r#"
rule archive_forever priority 30 on pep.data.remove.pre when $obj.path matches "/archive/*" do deny("no deletion allowed")
rule curated_admin_only priority 20 on pep.data.remove.pre
    when $obj.path matches "/curated/*" && $user.role != "admin" do deny("deletion by administrator")
rule home_owner_only priority 10 on pep.data.remove.pre
    when $obj.path matches "/home/*" && $user.name != $obj.owner do deny("deletion by file owner")
"#;

/// Runs the 3 × 3 matrix against `remove`, returning which calls were
/// allowed in (collection, actor) order.
fn run_matrix(z: &Zone, dir: &Path, remove: &dyn Fn(&str, &str) -> Result<(), ErrorClass>) -> Vec<bool> {
    for c in ["/archive", "/curated"] {
        z.make_collection(ADMIN, c, CollectionKind::Plain, None).unwrap();
        z.set_acl(ADMIN, c, "alice", Some(Perm::Write)).unwrap();
    }
    assert_eq!(z.add_rule(ADMIN, DELETION_RULES).unwrap().len(), 3);
    let mut allowed = Vec::new();
    for coll in ["/archive", "/curated", "/home/alice"] {
        for actor in [ADMIN, "alice", "bob"] {
            let p = format!("{coll}/f");
            z.put("alice", &p, b"data", None).unwrap();
            let before = state_sans_audit(z);
            let disk = dir_contents(dir);
            match remove(actor, &p) {
                Ok(()) => {
                    allowed.push(true);
                    assert!(z.catalog().object(&p).is_none());
                }
                Err(class) => {
                    allowed.push(false);
                    assert_eq!(class, ErrorClass::Denied, "{actor} removing {p}");
                    assert_eq!(state_sans_audit(z), before, "{actor} removing {p} changed the catalog");
                    assert_eq!(dir_contents(dir), disk, "{actor} removing {p} changed storage");
                }
            }
        }
    }
    allowed
}

fn deletion_matrix() {
    #[rustfmt::skip]
    let expected = vec![
        false, false, false, // archive: nobody
        true, false, false,  // curated: admin only
        false, true, false,  // home: owner only
    ];

    let (z, dir) = populate_zone();
    let direct = run_matrix(&z, dir.path(), &|actor, p| z.remove(actor, p).map_err(|e| e.class()));
    assert_eq!(direct, expected);

    // Same matrix through the gateway.
    let (z, dir) = populate_zone();
    let h = spawn(z.clone(), "127.0.0.1:0").unwrap();
    let clients: BTreeMap<&str, Client> = [ADMIN, "alice", "bob"].into_iter().map(|u| (u, login(&h, u))).collect();
    let wire = run_matrix(&z, dir.path(), &|actor, p| match clients[actor].remove(p) {
        Ok(()) => Ok(()),
        Err(ClientError::Api { status: 403, body }) if body.error == "denied" => Err(ErrorClass::Denied),
        Err(e) => panic!("{actor} removing {p}: {e}"),
    });
    assert_eq!(wire, direct);
}

// ---- 2 ---------------------------------------------------------------

fn live_policy_change() {
    let (z, _dir) = populate_zone();
    let h = spawn(z.clone(), "127.0.0.1:0").unwrap();
    let root = login(&h, ADMIN);
    let alice = login(&h, "alice");
    alice.put("/home/alice/f", b"x".to_vec(), None).unwrap();
    root.rule_add(r#"rule freeze on pep.data.remove.pre when $obj.path matches "/home/alice/*" do deny("frozen")"#)
        .unwrap();

    assert_eq!(api_status(alice.remove("/home/alice/f")), (403, "Denied".to_string()));
    assert!(alice.info("/home/alice/f").is_ok());
    root.rule_remove("freeze").unwrap();
    alice.remove("/home/alice/f").unwrap();
    assert_eq!(api_status(alice.get("/home/alice/f")).0, 404);

    let deny = root.audit(Some("pep.deny"), Some("alice")).unwrap();
    let allow = root.audit(Some("pep.allow"), Some("alice")).unwrap();
    let on_remove = |entries: &serde_json::Value, needle: &str| {
        entries.as_array().unwrap().iter().any(|e| {
            let d = e["detail"].as_str().unwrap();
            d.starts_with("pep.data.remove.pre") && d.contains(needle)
        })
    };
    assert!(on_remove(&deny, "rule=freeze: frozen"));
    assert!(on_remove(&allow, "rule=-"));
}

// ---- 3 ---------------------------------------------------------------

/// Frames records by hand: big-endian u64 time, u32 length, payload.
fn frame(records: &[(u64, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    for (t, payload) in records {
        out.extend_from_slice(&t.to_be_bytes());
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(payload);
    }
    out
}

fn stream_oracle() {
    const COLL: &str = "/home/alice/sensor";
    let (z, _dir) = populate_zone();
    let h = spawn(z.clone(), "127.0.0.1:0").unwrap();
    let alice = login(&h, "alice");
    alice.mkdir(COLL, "stream", None).unwrap();

    let mut rng = StdRng::seed_from_u64(3);
    // (t, segment id, position in segment, payload)
    let mut all: Vec<(u64, u64, usize, Vec<u8>)> = Vec::new();
    let mut budget = 1000usize;
    for seg in 0..100 {
        let n = rng.random_range(1..=(budget - (99 - seg)).min(19));
        budget -= n;
        let mut t = rng.random_range(0..5_000u64);
        let mut records = Vec::new();
        for _ in 0..n {
            t += rng.random_range(0..40u64);
            let len = rng.random_range(0..16);
            records.push((t, (0..len).map(|_| rng.random()).collect::<Vec<u8>>()));
        }
        let meta = alice.stream_ingest(COLL, frame(&records)).unwrap();
        let id = meta["segment_id"].as_u64().unwrap();
        all.extend(records.into_iter().enumerate().map(|(i, (t, p))| (t, id, i, p)));
    }
    assert!(all.len() <= 1000);
    all.sort_by_key(|(t, s, i, _)| (*t, *s, *i));
    let oracle = |a: u64, b: u64| {
        let hits: Vec<(u64, Vec<u8>)> =
            all.iter().filter(|r| a <= r.0 && r.0 < b).map(|r| (r.0, r.3.clone())).collect();
        frame(&hits)
    };

    let max = all.last().unwrap().0;
    for _ in 0..200 {
        let a = rng.random_range(0..max + 10);
        let b = rng.random_range(a..max + 20);
        let wire = alice.stream_read(COLL, Some(a), Some(b)).unwrap();
        assert_eq!(wire, oracle(a, b), "[{a}, {b})");
        assert_eq!(z.stream_read("alice", COLL, a, b).unwrap(), wire);
    }
    for _ in 0..50 {
        let a = rng.random_range(0..max);
        let b = rng.random_range(a..max + 1);
        let c = rng.random_range(b..max + 2);
        let mut joined = alice.stream_read(COLL, Some(a), Some(b)).unwrap();
        joined.extend(alice.stream_read(COLL, Some(b), Some(c)).unwrap());
        assert_eq!(joined, alice.stream_read(COLL, Some(a), Some(c)).unwrap(), "[{a}, {b}, {c})");
    }
}

// ---- 4 ---------------------------------------------------------------

/// Plain recursive glob: `*` any run, `?` one character.
fn glob_oracle(p: &[char], t: &[char]) -> bool {
    match p.first() {
        None => t.is_empty(),
        Some('*') => (0..=t.len()).any(|k| glob_oracle(&p[1..], &t[k..])),
        Some('?') => !t.is_empty() && glob_oracle(&p[1..], &t[1..]),
        Some(c) => t.first() == Some(c) && glob_oracle(&p[1..], &t[1..]),
    }
}

#[derive(Debug, Clone)]
struct Cond {
    field: usize,
    op: &'static str,
    literal: String,
}

impl Cond {
    fn holds(&self, t: &(String, String, String)) -> bool {
        let subject = [&t.0, &t.1, &t.2][self.field];
        match self.op {
            "=" => *subject == self.literal,
            "!=" => *subject != self.literal,
            _ => glob_oracle(&self.literal.chars().collect::<Vec<_>>(), &subject.chars().collect::<Vec<_>>()),
        }
    }
}

fn render(pred: &[Vec<Cond>]) -> String {
    pred.iter()
        .map(|clause| {
            clause
                .iter()
                .map(|c| format!("{} {} \"{}\"", ["name", "value", "comment"][c.field], c.op, c.literal))
                .collect::<Vec<_>>()
                .join(" and ")
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn random_atom(rng: &mut StdRng, field: usize) -> String {
    match field {
        0 => format!("attr{}", rng.random_range(0..12)),
        1 => format!("v{}", rng.random_range(0..40)),
        _ => ["", "raw", "derived", "qc ok", "qc fail"].choose(rng).unwrap().to_string(),
    }
}

fn random_literal(rng: &mut StdRng, field: usize, op: &str) -> String {
    let atom = random_atom(rng, field);
    if op != "like" {
        return atom;
    }
    match rng.random_range(0..5) {
        0 => "*".into(),
        1 => format!("{}*", &atom[..atom.len().min(2)]),
        2 => atom.chars().map(|c| if c.is_ascii_digit() { '?' } else { c }).collect(),
        3 => format!("*{}", &atom[atom.len().saturating_sub(1)..]),
        _ => atom,
    }
}

fn avu_queries() {
    let (z, _dir) = populate_zone();
    let h = spawn(z.clone(), "127.0.0.1:0").unwrap();
    let root = login(&h, ADMIN);
    let mut rng = StdRng::seed_from_u64(4);

    let paths: Vec<String> = (0..300).map(|i| format!("/home/alice/m{i}")).collect();
    for p in &paths {
        z.put("alice", p, b"m", Some("mem1")).unwrap();
    }
    let mut triples: HashSet<(String, (String, String, String))> = HashSet::new();
    while triples.len() < 10_000 {
        let p = paths.choose(&mut rng).unwrap().clone();
        let t = (random_atom(&mut rng, 0), random_atom(&mut rng, 1), random_atom(&mut rng, 2));
        if triples.insert((p.clone(), t.clone())) {
            z.add_avu("alice", &p, AvuTriple::new(&t.0, &t.1, &t.2)).unwrap();
        }
    }
    let mut by_path: BTreeMap<&str, Vec<&(String, String, String)>> = BTreeMap::new();
    for (p, t) in &triples {
        by_path.entry(p.as_str()).or_default().push(t);
    }

    let mut nonempty = 0;
    for _ in 0..100 {
        let pred: Vec<Vec<Cond>> = (0..rng.random_range(1..=2))
            .map(|_| {
                (0..rng.random_range(1..=3))
                    .map(|_| {
                        let field = rng.random_range(0..3);
                        let op = *["=", "!=", "like"].choose(&mut rng).unwrap();
                        Cond { field, op, literal: random_literal(&mut rng, field, op) }
                    })
                    .collect()
            })
            .collect();
        let expected: Vec<String> = by_path
            .iter()
            .filter(|(_, ts)| pred.iter().all(|clause| ts.iter().any(|t| clause.iter().all(|c| c.holds(t)))))
            .map(|(p, _)| p.to_string())
            .collect();
        let text = render(&pred);
        let mut got = z.query_meta(ADMIN, &text).unwrap();
        got.sort();
        assert_eq!(got, expected, "{text}");
        let mut wire = root.meta_query(&text).unwrap();
        wire.sort();
        assert_eq!(wire, expected, "{text} over the wire");
        if !expected.is_empty() {
            nonempty += 1;
        }
    }
    // The generator must exercise both outcomes.
    assert!((10..100).contains(&nonempty), "{nonempty} predicates matched something");
}

// ---- 5 ---------------------------------------------------------------

fn bind(pairs: &[(&str, i64)]) -> BTreeMap<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), Value::Int(*v))).collect()
}

/// Procedure source, bindings, and expected contents of each output.
type WorkflowCase = (&'static str, Vec<(&'static str, i64)>, Vec<(&'static str, &'static str)>);

fn provenance() {
    const WF: &str = "/home/alice/wf";
    let (z, _dir) = populate_zone();
    z.make_collection("alice", WF, CollectionKind::Workflow, None).unwrap();
    z.put("alice", &format!("{WF}/in"), b"10", None).unwrap();
    let at = |rel: &str| format!("{WF}/{rel}");

    let corpus: [WorkflowCase; 5] = [
        (r#"procedure double($n) { put_int("d", $n * 2) }"#, vec![("n", 21)], vec![("d", "42")]),
        (r#"procedure scale($k) { $v = get_int("in"); put_int("s", $v * $k) }"#, vec![("k", 3)], vec![("s", "30")]),
        (r#"procedure label($x) { $s = to_str($x); put_str("l", $s) }"#, vec![("x", 7)], vec![("l", "7")]),
        (
            r#"procedure chain() { $a = get_int("in"); $b = $a + 1; put_int("c1", $b); put_int("c2", $b * $b) }"#,
            vec![],
            vec![("c1", "11"), ("c2", "121")],
        ),
        (
            r#"procedure spread($m) { $v = get_int("in"); put_int("f1", $v - $m); put_int("f2", $v + $m) }"#,
            vec![("m", 4)],
            vec![("f1", "6"), ("f2", "14")],
        ),
    ];

    let mut firsts = Vec::new();
    for (src, bindings, outputs) in &corpus {
        let wf = z.attach_workflow("alice", WF, src).unwrap();
        let run = z.run_workflow("alice", &wf.workflow_id, bind(bindings)).unwrap();
        let expected: BTreeMap<String, String> =
            outputs.iter().map(|(rel, body)| (at(rel), sha256_oracle(body.as_bytes()))).collect();
        assert_eq!(run.outputs, expected, "{src}");
        let again = z.rerun("alice", &run.run_id, BTreeMap::new()).unwrap();
        assert_eq!(again.outputs, run.outputs, "{src}");
        assert_eq!(again.rerun_of.as_deref(), Some(run.run_id.as_str()));
        firsts.push(run);
    }

    let over = z.rerun("alice", &firsts[4].run_id, bind(&[("m", 5)])).unwrap();
    let diff = z.diff_runs("alice", &firsts[4].run_id, &over.run_id).unwrap();
    assert_eq!(diff.differing_paths(), BTreeSet::from([at("f1"), at("f2")]));
    assert_eq!(diff.bindings.keys().collect::<Vec<_>>(), ["m"]);
    assert!(!diff.workflow_mismatch);

    let over = z.rerun("alice", &firsts[0].run_id, bind(&[("n", 5)])).unwrap();
    let diff = z.diff_runs("alice", &firsts[0].run_id, &over.run_id).unwrap();
    assert_eq!(diff.differing_paths(), BTreeSet::from([at("d")]));

    z.put("alice", &at("in"), b"11", None).unwrap();
    for run in [&firsts[1], &firsts[3], &firsts[4]] {
        let stale = match z.rerun("alice", &run.run_id, BTreeMap::new()) {
            Err(Error::StaleInputs(p)) => p,
            other => panic!("expected stale inputs, got {other:?}"),
        };
        assert_eq!(stale, [at("in")]);
    }
    // Runs without inputs stay reproducible.
    for run in [&firsts[0], &firsts[2]] {
        assert!(run.inputs.is_empty());
        let again = z.rerun("alice", &run.run_id, BTreeMap::new()).unwrap();
        assert_eq!(again.outputs, run.outputs);
    }
}

// ---- 6 ---------------------------------------------------------------

fn hot_pluggability() {
    let (z, _dir) = populate_zone();
    let h = spawn(z.clone(), "127.0.0.1:0").unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let done = Arc::new(AtomicU64::new(0));

    let workers: Vec<_> = (0..10)
        .map(|w| {
            let url = h.url();
            let stop = stop.clone();
            let done = done.clone();
            thread::spawn(move || {
                let mut c = Client::new(&url).unwrap();
                c.login("alice", &secret("alice")).unwrap();
                let mut failures = Vec::new();
                let mut i = 0u64;
                while !stop.load(Ordering::SeqCst) {
                    let p = format!("/home/alice/w{w}_{}", i % 8);
                    let body = format!("{w}:{i}").into_bytes();
                    match c.put(&p, body.clone(), None).and_then(|_| c.get(&p)) {
                        Ok(got) if got == body => {}
                        Ok(got) => failures.push(format!("{p}: read back {got:?}")),
                        Err(e) => failures.push(format!("{p}: {e}")),
                    }
                    i += 1;
                    done.fetch_add(1, Ordering::SeqCst);
                }
                (i, failures)
            })
        })
        .collect();

    let wait_for = |n: u64| {
        let until = Instant::now() + Duration::from_secs(10);
        while done.load(Ordering::SeqCst) < n && Instant::now() < until {
            thread::sleep(Duration::from_millis(2));
        }
        assert!(done.load(Ordering::SeqCst) >= n, "workers stalled");
    };
    wait_for(50);

    let root = login(&h, ADMIN);
    let alice = login(&h, "alice");
    root.add_driver("ram", "mem").unwrap();
    root.add_resource("hot", "ram", "h1", "cache", false).unwrap();
    alice.put("/home/alice/on_hot", b"fresh".to_vec(), Some("hot")).unwrap();
    assert_eq!(z.catalog().object("/home/alice/on_hot").unwrap().replicas[0].resource, "hot");
    assert_eq!(alice.get("/home/alice/on_hot").unwrap(), b"fresh");

    let before = done.load(Ordering::SeqCst);
    root.microservice_add("site_name", Value::Str("north".into())).unwrap();
    root.rule_add(
        r#"rule hot_tag on pep.data.put.post when $obj.path matches "/home/alice/tagged*" do $s = site_name(); set_avu($obj.path, "site", $s)"#,
    )
    .unwrap();
    alice.put("/home/alice/tagged", b"t".to_vec(), Some("hot")).unwrap();
    assert!(z.catalog().avus("/home/alice/tagged").contains(&AvuTriple::new("site", "north", "")));
    assert_eq!(alice.meta_query(r#"name = "site" and value = "north""#).unwrap(), ["/home/alice/tagged"]);

    // Some in-flight work must have overlapped the registrations.
    wait_for(before + 50);
    stop.store(true, Ordering::SeqCst);
    for w in workers {
        let (ops, failures) = w.join().unwrap();
        assert!(ops > 0);
        assert!(failures.is_empty(), "{failures:?}");
    }
}

// ---- 7 ---------------------------------------------------------------

fn replica_faults() {
    let (z, _dir) = populate_zone();
    let faulty = Arc::new(FaultyDriver::default());
    z.register_driver(ADMIN, "faulty", faulty.clone()).unwrap();
    z.register_resource(ADMIN, "flaky", "faulty", "f", ResourceKind::Cache).unwrap();
    z.register_resource(ADMIN, "mem2", "mem", "m2", ResourceKind::Cache).unwrap();
    let h = spawn(z.clone(), "127.0.0.1:0").unwrap();
    let alice = login(&h, "alice");

    let body: Vec<u8> = (0..4096u32).map(|i| (i * 31 % 251) as u8).collect();
    let want = sha256_oracle(&body);
    alice.put("/home/alice/r", body.clone(), Some("disk1")).unwrap();
    for dest in ["mem1", "flaky", "mem2"] {
        let r = alice.replicate("/home/alice/r", dest).unwrap();
        assert_eq!(r["checksum"], want.as_str());
    }
    let obj = z.catalog().object("/home/alice/r").unwrap();
    assert_eq!(obj.replicas.len(), 4);
    assert!(obj.replicas.iter().all(|r| r.checksum == want && r.status == ReplicaStatus::Good));

    let victim = obj.replicas.iter().find(|r| r.resource == "flaky").unwrap();
    faulty.corrupt_stored("f", &victim.physical_ref).unwrap();
    let checks = alice.verify("/home/alice/r").unwrap();
    let suspect: Vec<&str> = checks
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "suspect")
        .map(|c| c["resource"].as_str().unwrap())
        .collect();
    assert_eq!(suspect, ["flaky"]);
    let now = z.catalog().object("/home/alice/r").unwrap();
    for r in &now.replicas {
        let expect = if r.resource == "flaky" { ReplicaStatus::Suspect } else { ReplicaStatus::Good };
        assert_eq!(r.status, expect, "{}", r.resource);
    }
    assert_eq!(alice.get("/home/alice/r").unwrap(), body);
    assert_eq!(z.get("alice", "/home/alice/r").unwrap(), body);
}

// ---- 8 ---------------------------------------------------------------

fn fetch_caching() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicU64::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut s) = stream else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(s.try_clone().unwrap());
            let mut line = String::new();
            while reader.read_line(&mut line).map(|n| n > 0).unwrap_or(false) && line != "\r\n" {
                line.clear();
            }
            let body = b"remote observation 17\n";
            let head = format!("HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len());
            let _ = s.write_all(head.as_bytes()).and_then(|_| s.write_all(body));
            let _ = s.read(&mut [0u8; 1]);
        }
    });

    let (z, _dir) = populate_zone();
    let url = format!("http://{addr}/obs");
    let a = z.http_fetch("alice", &url, "/home/alice/obs").unwrap();
    let b = z.http_fetch("alice", &url, "/home/alice/obs").unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    assert_eq!(a.checksum(), b.checksum());
    assert_eq!(a.checksum().unwrap(), sha256_oracle(b"remote observation 17\n"));
    assert_eq!(z.get("alice", "/home/alice/obs").unwrap(), b"remote observation 17\n");
}

// ---- 9 ---------------------------------------------------------------

const FUZZ_WORDS: &[&str] = &[
    "rule",
    "on",
    "when",
    "do",
    "priority",
    "procedure",
    "foreach",
    "in",
    "allow",
    "deny",
    "true",
    "false",
    "pep.data.put.pre",
    "pep.data.remove.pre",
    "pep.bogus",
    "$obj.path",
    "$user.name",
    "$x",
    "matches",
    "(",
    ")",
    "{",
    "}",
    ";",
    ",",
    "=",
    "==",
    "!=",
    "<",
    ">=",
    "&&",
    "||",
    "!",
    "+",
    "-",
    "*",
    "/",
    "%",
    "\"s\"",
    "\"",
    "\\",
    "0",
    "-9223372036854775808",
    "99999999999999999999",
    "#",
    "\n",
    " ",
    "é",
    "\u{0}",
];

fn fuzz_input(rng: &mut StdRng, corpus: &[char]) -> String {
    match rng.random_range(0..3) {
        0 => {
            // A window of the corpus with a few character edits.
            let start = rng.random_range(0..corpus.len());
            let end = (start + rng.random_range(1..400)).min(corpus.len());
            let mut s: Vec<char> = corpus[start..end].to_vec();
            for _ in 0..rng.random_range(0..6) {
                let at = rng.random_range(0..=s.len());
                match rng.random_range(0..3) {
                    0 if at < s.len() => {
                        s.remove(at);
                    }
                    1 => s.insert(at, *corpus.choose(rng).unwrap()),
                    _ => s.insert(at, char::from(rng.random_range(0x20u8..0x7f))),
                }
            }
            s.into_iter().collect()
        }
        1 => (0..rng.random_range(0..40)).map(|_| *FUZZ_WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" "),
        _ => (0..rng.random_range(0..64)).map(|_| rng.random::<char>()).collect(),
    }
}

fn parser_robustness() {
    let rules = parse_rules(CORPUS).unwrap();
    assert!(rules.len() >= 20, "{} rules", rules.len());
    let printed = print_rules(&rules);
    let reparsed = parse_rules(&printed).unwrap();
    assert_eq!(reparsed, rules);
    assert_eq!(print_rules(&reparsed), printed);

    let corpus: Vec<char> = CORPUS.chars().collect();
    let mut rng = StdRng::seed_from_u64(9);
    let quiet = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut crashes = Vec::new();
    let mut accepted = 0;
    for _ in 0..100_000 {
        let input = fuzz_input(&mut rng, &corpus);
        let r = catch_unwind(AssertUnwindSafe(|| {
            let ok = parse_rules(&input).is_ok();
            let _ = parse_expr(&input);
            let _ = parse_procedure(&input);
            let _ = pgzone_core::catalog::AvuPredicate::parse(&input);
            ok
        }));
        match r {
            Ok(ok) => accepted += ok as usize,
            Err(_) => crashes.push(input),
        }
    }
    std::panic::set_hook(quiet);
    assert!(crashes.is_empty(), "{} inputs crashed the parser, first: {:?}", crashes.len(), crashes[0]);
    // Mutated windows must sometimes still parse, or the fuzzer is only
    // testing the first token.
    assert!(accepted > 100, "{accepted} inputs parsed");
}

// ---- 10 --------------------------------------------------------------

fn open_journaled(jdir: &Path) -> Zone {
    Zone::with_catalog(Catalog::open_with(jdir, 64).unwrap()).unwrap()
}

fn crash_setup(z: &Zone, data: &Path) {
    common::populate(z, &data.join("d1"));
    z.register_resource(ADMIN, "disk2", "localfs", data.join("d2").to_str().unwrap(), ResourceKind::Cache).unwrap();
}

fn crash_child(root: &Path) -> ! {
    let z = open_journaled(&root.join("journal"));
    crash_setup(&z, &root.join("data"));
    let mut shadow = Shadow::project(&z.catalog().snapshot_state());
    run_session(&z, &mut shadow, 0xacce, 500);
    std::fs::write(root.join("state.json"), serde_json::to_vec(&z.catalog().snapshot_state()).unwrap()).unwrap();
    std::fs::write(root.join("shadow.json"), serde_json::to_vec(&shadow).unwrap()).unwrap();
    std::process::abort();
}

fn crash_recovery() {
    let root = tempfile::tempdir().unwrap();
    let status = Command::new(std::env::current_exe().unwrap())
        .env(CRASH_ENV, root.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), None, "child should die from abort, got {status}");
    let before: CatalogState = serde_json::from_slice(&std::fs::read(root.path().join("state.json")).unwrap()).unwrap();
    let shadow: Shadow = serde_json::from_slice(&std::fs::read(root.path().join("shadow.json")).unwrap()).unwrap();

    let z = open_journaled(&root.path().join("journal"));
    let after = z.catalog().snapshot_state();
    assert_eq!(after, before);
    assert_eq!(Shadow::project(&after), shadow);
    assert!(shadow.objects.len() > 10, "session left only {} objects", shadow.objects.len());
    assert!(!z.catalog().audit_query(ADMIN, &AuditQuery::event("data.put")).unwrap().is_empty());
    for (path, obj) in &shadow.objects {
        assert_eq!(sha256_tool(&z.get(ADMIN, path).unwrap()), obj.checksum, "{path}");
    }
}
