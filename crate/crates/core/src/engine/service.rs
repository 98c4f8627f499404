use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::Mutex;

use super::pep::PepContext;
use super::Zone;
use crate::catalog::{AvuTriple, DataObject, Perm};
use crate::checksum::sha256_hex;
use crate::error::{Error, Result};
use crate::path;
use crate::ruledsl::Value;

pub type ServiceFn = dyn Fn(&ServiceCall<'_>, &[Value]) -> Result<Value> + Send + Sync;

/// A named host function callable from rule and workflow action chains.
#[derive(Clone)]
pub struct MicroService {
    pub name: String,
    pub min_args: usize,
    pub max_args: usize,
    /// Argument positions holding logical paths the service reads.
    pub reads: Vec<usize>,
    /// Argument positions holding logical paths the service writes.
    pub writes: Vec<usize>,
    pub(crate) body: Arc<ServiceFn>,
}

impl fmt::Debug for MicroService {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MicroService")
            .field("name", &self.name)
            .field("min_args", &self.min_args)
            .field("max_args", &self.max_args)
            .finish_non_exhaustive()
    }
}

impl MicroService {
    pub fn new(
        name: &str,
        arity: usize,
        body: impl Fn(&ServiceCall<'_>, &[Value]) -> Result<Value> + Send + Sync + 'static,
    ) -> Self {
        MicroService {
            name: name.to_string(),
            min_args: arity,
            max_args: arity,
            reads: Vec::new(),
            writes: Vec::new(),
            body: Arc::new(body),
        }
    }

    /// Accepts up to `extra` trailing optional arguments.
    pub fn optional_args(mut self, extra: usize) -> Self {
        self.max_args = self.min_args + extra;
        self
    }

    pub fn reads(mut self, positions: &[usize]) -> Self {
        self.reads = positions.to_vec();
        self
    }

    pub fn writes(mut self, positions: &[usize]) -> Self {
        self.writes = positions.to_vec();
        self
    }

    pub(crate) fn arity_text(&self) -> String {
        if self.min_args == self.max_args {
            self.min_args.to_string()
        } else {
            format!("{}..={}", self.min_args, self.max_args)
        }
    }
}

/// Object reads and writes observed during one workflow execution.
#[derive(Debug, Default)]
pub struct IoTracker {
    reads: Mutex<BTreeMap<String, String>>,
    writes: Mutex<BTreeMap<String, String>>,
}

impl IoTracker {
    /// Records a read; data the run wrote itself is not an input.
    pub fn record_read(&self, path: &str, checksum: &str) {
        if self.writes.lock().contains_key(path) {
            return;
        }
        self.reads.lock().entry(path.to_string()).or_insert_with(|| checksum.to_string());
    }

    pub fn record_write(&self, path: &str, checksum: &str) {
        self.writes.lock().insert(path.to_string(), checksum.to_string());
    }

    pub fn reads(&self) -> BTreeMap<String, String> {
        self.reads.lock().clone()
    }

    pub fn writes(&self) -> BTreeMap<String, String> {
        self.writes.lock().clone()
    }
}

/// What a micro-service body sees: the zone, the acting user, the firing
/// context and the collection relative paths resolve against.
pub struct ServiceCall<'a> {
    pub zone: &'a Zone,
    pub actor: &'a str,
    pub ctx: &'a PepContext,
    pub base: &'a str,
    pub(crate) tracker: Option<&'a IoTracker>,
}

impl ServiceCall<'_> {
    pub fn resolve(&self, p: &str) -> Result<String> {
        let abs = path::resolve(self.base, p);
        path::validate(&abs)?;
        Ok(abs)
    }

    /// Reads an object through the governed `get`.
    pub fn read(&self, p: &str) -> Result<Vec<u8>> {
        let abs = self.resolve(p)?;
        let bytes = self.zone.get(self.actor, &abs)?;
        if let Some(t) = self.tracker {
            t.record_read(&abs, &sha256_hex(&bytes));
        }
        Ok(bytes)
    }

    /// Writes an object on the default resource through the governed `put`.
    pub fn write(&self, p: &str, bytes: &[u8]) -> Result<DataObject> {
        let abs = self.resolve(p)?;
        let resc = self.zone.require_default_resource()?;
        let obj = self.zone.put(self.actor, &abs, bytes, Some(&resc))?;
        self.note_write(&obj);
        Ok(obj)
    }

    pub(crate) fn note_write(&self, obj: &DataObject) {
        if let (Some(t), Some(sum)) = (self.tracker, obj.checksum()) {
            t.record_write(&obj.path, sum);
        }
    }

    pub fn checksum(&self, p: &str) -> Result<String> {
        let abs = self.resolve(p)?;
        self.zone.catalog.require(&abs, self.actor, Perm::Read)?;
        let obj = self.zone.catalog.object(&abs).ok_or_else(|| Error::NoSuchObject(abs.clone()))?;
        let sum = obj.checksum().ok_or_else(|| Error::AllReplicasSuspect(abs.clone()))?.to_string();
        if let Some(t) = self.tracker {
            t.record_read(&abs, &sum);
        }
        Ok(sum)
    }
}

fn str_arg(args: &[Value], i: usize) -> Result<&str> {
    match args.get(i) {
        Some(Value::Str(s)) => Ok(s),
        Some(other) => Err(Error::Invalid(format!("argument {} must be a string, got {}", i + 1, other.type_name()))),
        None => Err(Error::Invalid(format!("missing argument {}", i + 1))),
    }
}

fn int_arg(args: &[Value], i: usize) -> Result<i64> {
    match args.get(i) {
        Some(Value::Int(n)) => Ok(*n),
        Some(other) => Err(Error::Invalid(format!("argument {} must be an int, got {}", i + 1, other.type_name()))),
        None => Err(Error::Invalid(format!("missing argument {}", i + 1))),
    }
}

fn parse_int(text: &str) -> Result<i64> {
    text.trim().parse().map_err(|_| Error::Invalid(format!("{text:?} is not an integer")))
}

/// Micro-services present at boot.
pub(crate) fn builtins() -> Vec<MicroService> {
    vec![
        MicroService::new("set_avu", 3, |c, a| {
            let p = c.resolve(str_arg(a, 0)?)?;
            let comment = if a.len() > 3 { str_arg(a, 3)? } else { "" };
            c.zone.add_avu(c.actor, &p, AvuTriple::new(str_arg(a, 1)?, str_arg(a, 2)?, comment))?;
            Ok(Value::Bool(true))
        })
        .optional_args(1),
        MicroService::new("checksum", 1, |c, a| Ok(Value::Str(c.checksum(str_arg(a, 0)?)?))).reads(&[0]),
        MicroService::new("replicate_to", 2, |c, a| {
            let p = c.resolve(str_arg(a, 0)?)?;
            Ok(Value::Str(c.zone.replicate(c.actor, &p, str_arg(a, 1)?)?.checksum))
        }),
        MicroService::new("audit_msg", 1, |c, a| {
            c.zone.audit(c.actor, "msg", str_arg(a, 0)?);
            Ok(Value::Bool(true))
        }),
        MicroService::new("http_fetch", 2, |c, a| {
            let dest = c.resolve(str_arg(a, 1)?)?;
            let obj = c.zone.http_fetch(c.actor, str_arg(a, 0)?, &dest)?;
            c.note_write(&obj);
            Ok(Value::Str(obj.checksum().unwrap_or_default().to_string()))
        })
        .writes(&[1]),
        MicroService::new("put_int", 2, |c, a| {
            let obj = c.write(str_arg(a, 0)?, int_arg(a, 1)?.to_string().as_bytes())?;
            Ok(Value::Str(obj.checksum().unwrap_or_default().to_string()))
        })
        .writes(&[0]),
        MicroService::new("put_str", 2, |c, a| {
            let obj = c.write(str_arg(a, 0)?, str_arg(a, 1)?.as_bytes())?;
            Ok(Value::Str(obj.checksum().unwrap_or_default().to_string()))
        })
        .writes(&[0]),
        MicroService::new("get_int", 1, |c, a| {
            let bytes = c.read(str_arg(a, 0)?)?;
            Ok(Value::Int(parse_int(&String::from_utf8_lossy(&bytes))?))
        })
        .reads(&[0]),
        MicroService::new("get_str", 1, |c, a| {
            let bytes = c.read(str_arg(a, 0)?)?;
            String::from_utf8(bytes).map(Value::Str).map_err(|_| Error::Invalid("object is not UTF-8 text".into()))
        })
        .reads(&[0]),
        MicroService::new("list_objects", 1, |c, a| {
            let coll = c.resolve(str_arg(a, 0)?)?;
            c.zone.catalog.require(&coll, c.actor, Perm::Read)?;
            let st = c.zone.catalog.read();
            let items = st.objects.keys().filter(|p| path::parent(p) == Some(coll.as_str())).cloned().collect();
            Ok(Value::List(items))
        }),
        MicroService::new("to_str", 1, |_, a| Ok(Value::Str(a[0].to_string()))),
        MicroService::new("to_int", 1, |_, a| match &a[0] {
            Value::Int(n) => Ok(Value::Int(*n)),
            Value::Str(s) => Ok(Value::Int(parse_int(s)?)),
            other => Err(Error::Invalid(format!("cannot convert {} to int", other.type_name()))),
        }),
    ]
}
