//! Random operation sessions with an independently maintained model of
//! what the catalog should hold afterwards.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::process::{Command, Stdio};

use pgzone_core::catalog::{AvuTriple, CatalogState, CollectionKind, Perm, Role};
use pgzone_core::Zone;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowObject {
    pub owner: String,
    pub version: u64,
    pub checksum: String,
    pub resources: BTreeSet<String>,
    pub acl: BTreeMap<String, Perm>,
}

/// Expected catalog contents, updated only from successful operations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shadow {
    pub users: BTreeSet<String>,
    pub collections: BTreeMap<String, (String, BTreeMap<String, Perm>)>,
    pub objects: BTreeMap<String, ShadowObject>,
    pub avus: BTreeMap<String, BTreeSet<(String, String, String)>>,
    pub rules: BTreeSet<String>,
    pub rule_version: u64,
}

impl Shadow {
    /// Same projection taken from a real catalog state.
    pub fn project(st: &CatalogState) -> Shadow {
        Shadow {
            users: st.users.keys().cloned().collect(),
            collections: st.collections.iter().map(|(p, c)| (p.clone(), (c.owner.clone(), c.acl.clone()))).collect(),
            objects: st
                .objects
                .iter()
                .map(|(p, o)| {
                    let obj = ShadowObject {
                        owner: o.owner.clone(),
                        version: o.version,
                        checksum: o.checksum().unwrap_or_default().to_string(),
                        resources: o.replicas.iter().map(|r| r.resource.clone()).collect(),
                        acl: o.acl.clone(),
                    };
                    (p.clone(), obj)
                })
                .collect(),
            avus: st
                .collections
                .keys()
                .chain(st.objects.keys())
                .filter_map(|p| {
                    let set: BTreeSet<_> = st
                        .avus
                        .get(p)
                        .map(|t| (t.attr_name.clone(), t.attr_value.clone(), t.attr_comment.clone()))
                        .collect();
                    (!set.is_empty()).then(|| (p.clone(), set))
                })
                .collect(),
            rules: st.rules.keys().cloned().collect(),
            rule_version: st.rule_version,
        }
    }
}

pub fn sha256_tool(bytes: &[u8]) -> String {
    use std::io::Write;
    let mut child = Command::new("sha256sum").stdin(Stdio::piped()).stdout(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(bytes).unwrap();
    let out = child.wait_with_output().unwrap();
    String::from_utf8(out.stdout).unwrap().split_whitespace().next().unwrap().to_string()
}

const RESOURCES: [&str; 2] = ["disk1", "disk2"];

/// Runs `ops` random operations against `z`, whose users and collections
/// must already match `shadow`. Returns the number that succeeded.
pub fn run_session(z: &Zone, shadow: &mut Shadow, seed: u64, ops: usize) -> usize {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut ok = 0;
    for i in 0..ops {
        let mut actors: Vec<String> = shadow.users.iter().cloned().collect();
        actors.sort();
        let actor = actors.choose(&mut rng).unwrap().clone();
        let colls: Vec<String> = shadow.collections.keys().cloned().collect();
        let objs: Vec<String> = shadow.objects.keys().cloned().collect();
        let done = match rng.random_range(0..12) {
            0 => {
                let parent = colls.choose(&mut rng).unwrap();
                let p = format!("{parent}/c{i}");
                let r = z.make_collection(&actor, &p, CollectionKind::Plain, None).is_ok();
                if r {
                    shadow.collections.insert(p, (actor.clone(), BTreeMap::from([(actor.clone(), Perm::Own)])));
                }
                r
            }
            1..=3 => {
                let parent = colls.choose(&mut rng).unwrap();
                let p = format!("{parent}/f{}", rng.random_range(0..6));
                let len = rng.random_range(0..300);
                let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
                let resc = *RESOURCES.choose(&mut rng).unwrap();
                let r = z.put(&actor, &p, &bytes, Some(resc)).is_ok();
                if r {
                    let sum = sha256_tool(&bytes);
                    match shadow.objects.get_mut(&p) {
                        Some(o) => {
                            o.version += 1;
                            o.checksum = sum;
                            o.resources.insert(resc.to_string());
                        }
                        None => {
                            shadow.objects.insert(
                                p,
                                ShadowObject {
                                    owner: actor.clone(),
                                    version: 1,
                                    checksum: sum,
                                    resources: BTreeSet::from([resc.to_string()]),
                                    acl: BTreeMap::from([(actor.clone(), Perm::Own)]),
                                },
                            );
                        }
                    }
                }
                r
            }
            4 if !objs.is_empty() => {
                let p = objs.choose(&mut rng).unwrap();
                let dest = *RESOURCES.choose(&mut rng).unwrap();
                let r = z.replicate(&actor, p, dest).is_ok();
                if r {
                    shadow.objects.get_mut(p).unwrap().resources.insert(dest.to_string());
                }
                r
            }
            5 if !objs.is_empty() => {
                let p = objs.choose(&mut rng).unwrap();
                let r = z.remove(&actor, p).is_ok();
                if r {
                    shadow.objects.remove(p);
                    shadow.avus.remove(p);
                }
                r
            }
            6 => {
                let all: Vec<&String> = colls.iter().chain(objs.iter()).collect();
                let p = (*all.choose(&mut rng).unwrap()).clone();
                let t = (
                    ["kind", "site", "owner"].choose(&mut rng).unwrap().to_string(),
                    format!("v{}", rng.random_range(0..4)),
                    ["", "note"].choose(&mut rng).unwrap().to_string(),
                );
                let r = z.add_avu(&actor, &p, AvuTriple::new(&t.0, &t.1, &t.2)).is_ok();
                if r {
                    shadow.avus.entry(p).or_default().insert(t);
                }
                r
            }
            7 => {
                let name = format!("r{}", rng.random_range(0..5));
                let r = if shadow.rules.contains(&name) && rng.random_bool(0.5) {
                    let r = z.remove_rule("root", &name).is_ok();
                    if r {
                        shadow.rules.remove(&name);
                    }
                    r
                } else {
                    let text = format!(
                        r#"rule {name} priority {i} on pep.data.get.pre when $obj.path matches "/zz/*" do deny("x")"#
                    );
                    let r = z.add_rule("root", &text).is_ok();
                    if r {
                        shadow.rules.insert(name);
                    }
                    r
                };
                if r {
                    shadow.rule_version += 1;
                }
                r
            }
            8 => {
                let all: Vec<&String> = colls.iter().chain(objs.iter()).collect();
                let p = (*all.choose(&mut rng).unwrap()).clone();
                let who = actors.choose(&mut rng).unwrap().clone();
                let perm = *[Perm::Read, Perm::Write].choose(&mut rng).unwrap();
                let r = z.set_acl(&actor, &p, &who, Some(perm)).is_ok();
                if r {
                    let acl = match shadow.objects.get_mut(&p) {
                        Some(o) => &mut o.acl,
                        None => &mut shadow.collections.get_mut(&p).unwrap().1,
                    };
                    acl.insert(who, perm);
                }
                r
            }
            9 => {
                let name = format!("u{i}");
                let r = z.catalog().create_user(&actor, &name, Role::User, "pw").is_ok();
                if r {
                    shadow.users.insert(name);
                }
                r
            }
            _ if !objs.is_empty() => {
                let p = objs.choose(&mut rng).unwrap();
                match z.get(&actor, p) {
                    Ok(bytes) => {
                        assert_eq!(sha256_tool(&bytes), shadow.objects[p].checksum, "{p}");
                        true
                    }
                    Err(_) => false,
                }
            }
            _ => false,
        };
        ok += done as usize;
    }
    ok
}

/// Shadow matching the zone built by `populate` plus `disk2`.
pub fn initial_shadow(z: &Zone) -> Shadow {
    Shadow::project(&z.catalog().snapshot_state())
}
