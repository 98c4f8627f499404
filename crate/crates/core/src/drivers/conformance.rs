//! Model-based driver conformance suite.
//!
//! Random create/write/read/stat/unlink sequences run against a driver and
//! against an in-memory model; the first observable divergence fails the
//! run. Expectations are restricted to the driver's capability flags.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{DriverError, PhysicalRef, Stat, StorageDriver};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub step: usize,
    pub op: String,
    pub expected: String,
    pub actual: String,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {} `{}`: expected {}, got {}", self.step, self.op, self.expected, self.actual)
    }
}

impl std::error::Error for Divergence {}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub steps: usize,
    pub creates: usize,
    pub writes: usize,
    pub reads: usize,
    pub stats: usize,
    pub unlinks: usize,
    pub refused: usize,
}

struct ModelObject {
    r: PhysicalRef,
    bytes: Vec<u8>,
    live: bool,
}

fn model_read(bytes: &[u8], offset: u64, len: usize) -> Vec<u8> {
    let start = (offset as usize).min(bytes.len());
    let end = (start + len).min(bytes.len());
    bytes[start..end].to_vec()
}

fn model_write(bytes: &mut Vec<u8>, offset: u64, data: &[u8]) {
    // An empty write never extends the object.
    if data.is_empty() {
        return;
    }
    let start = offset as usize;
    if bytes.len() < start + data.len() {
        bytes.resize(start + data.len(), 0);
    }
    bytes[start..start + data.len()].copy_from_slice(data);
}

fn random_bytes(rng: &mut StdRng, max: usize) -> Vec<u8> {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| rng.random()).collect()
}

fn describe<T: std::fmt::Debug>(r: &Result<T, DriverError>) -> String {
    match r {
        Ok(v) => format!("Ok({v:?})"),
        Err(e) => format!("Err({e})"),
    }
}

/// Runs `ops` random operations with the given seed.
pub fn run(driver: &dyn StorageDriver, root: &str, ops: usize, seed: u64) -> Result<Report, Divergence> {
    let caps = driver.capabilities();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut model: Vec<ModelObject> = Vec::new();
    let mut report = Report::default();
    let unknown = PhysicalRef::new("conformance-unknown-ref");

    for step in 0..ops {
        report.steps += 1;
        let fail = |op: String, expected: String, actual: String| Divergence { step, op, expected, actual };
        let choice = if model.is_empty() { 0 } else { rng.random_range(0..10) };
        let idx = if model.is_empty() { 0 } else { rng.random_range(0..model.len()) };
        match choice {
            // create, filling it through the creating handle
            0 | 1 => {
                report.creates += 1;
                let r = driver.create(root).map_err(|e| fail("create".into(), "Ok".into(), e.to_string()))?;
                let data = random_bytes(&mut rng, 48);
                let h = driver.open(root, &r).map_err(|e| fail("open new".into(), "Ok".into(), e.to_string()))?;
                let w = driver.write(&h, 0, &data);
                let c = driver.close(h);
                if w.is_err() || c.is_err() {
                    return Err(fail("initial write".into(), "Ok".into(), format!("{w:?} / {c:?}")));
                }
                model.push(ModelObject { r, bytes: data, live: true });
            }
            // update in place
            2 | 3 => {
                report.writes += 1;
                let offset = rng.random_range(0..64u64);
                let data = random_bytes(&mut rng, 24);
                let obj = &mut model[idx];
                let op = format!("write #{idx} @{offset} len {}", data.len());
                let opened = driver.open(root, &obj.r);
                if !obj.live {
                    if !matches!(opened, Err(DriverError::NotFound)) {
                        return Err(fail(op, "Err(NotFound)".into(), describe(&opened)));
                    }
                    continue;
                }
                let h = opened.map_err(|e| fail(op.clone(), "Ok".into(), e.to_string()))?;
                let w = driver.write(&h, offset, &data);
                driver.close(h).map_err(|e| fail(op.clone(), "close Ok".into(), e.to_string()))?;
                if caps.supports_update {
                    w.map_err(|e| fail(op, "Ok".into(), e.to_string()))?;
                    model_write(&mut obj.bytes, offset, &data);
                } else {
                    report.refused += 1;
                    if !matches!(w, Err(DriverError::Unsupported(_))) {
                        return Err(fail(op, "Err(Unsupported)".into(), describe(&w)));
                    }
                }
            }
            4..=6 => {
                report.reads += 1;
                let offset = rng.random_range(0..80u64);
                let len = rng.random_range(0..40usize);
                let obj = &model[idx];
                let op = format!("read #{idx} @{offset} len {len}");
                let opened = driver.open(root, &obj.r);
                if !obj.live {
                    if !matches!(opened, Err(DriverError::NotFound)) {
                        return Err(fail(op, "Err(NotFound)".into(), describe(&opened)));
                    }
                    continue;
                }
                let h = opened.map_err(|e| fail(op.clone(), "Ok".into(), e.to_string()))?;
                let got = driver.read(&h, offset, len);
                driver.close(h).map_err(|e| fail(op.clone(), "close Ok".into(), e.to_string()))?;
                let want = model_read(&obj.bytes, offset, len);
                match got {
                    Ok(bytes) if bytes == want => {}
                    other => return Err(fail(op, format!("Ok({want:?})"), describe(&other))),
                }
            }
            7 | 8 => {
                report.stats += 1;
                let (r, want) = if rng.random_range(0..5) == 0 {
                    (unknown.clone(), Stat::default())
                } else {
                    let obj = &model[idx];
                    let want =
                        if obj.live { Stat { size: obj.bytes.len() as u64, exists: true } } else { Stat::default() };
                    (obj.r.clone(), want)
                };
                let got = driver.stat(root, &r);
                match got {
                    Ok(s) if s == want => {}
                    other => return Err(fail(format!("stat #{idx}"), format!("Ok({want:?})"), describe(&other))),
                }
            }
            _ => {
                report.unlinks += 1;
                let obj = &mut model[idx];
                let op = format!("unlink #{idx}");
                let got = driver.unlink(root, &obj.r);
                if !obj.live {
                    if !matches!(got, Err(DriverError::NotFound) | Err(DriverError::Unsupported(_))) {
                        return Err(fail(op, "Err(NotFound)".into(), describe(&got)));
                    }
                } else if caps.supports_unlink {
                    got.map_err(|e| fail(op, "Ok".into(), e.to_string()))?;
                    obj.live = false;
                } else {
                    report.refused += 1;
                    if !matches!(got, Err(DriverError::Unsupported(_))) {
                        return Err(fail(op, "Err(Unsupported)".into(), describe(&got)));
                    }
                }
            }
        }
    }

    // Unknown refs fail cleanly.
    if !matches!(driver.open(root, &unknown), Err(DriverError::NotFound)) {
        return Err(Divergence {
            step: ops,
            op: "open unknown".into(),
            expected: "Err(NotFound)".into(),
            actual: "something else".into(),
        });
    }
    Ok(report)
}
