//! Append-only journal (`journal.log`, one JSON record per line) plus
//! periodic full-state snapshots (`snapshot-<seq>.json`).

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::state::{CatalogState, Mutation};
use crate::checksum::sha256_hex;
use crate::error::{Error, Result};

pub const JOURNAL_FILE: &str = "journal.log";
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub seq: u64,
    pub op: String,
    pub args: serde_json::Value,
    pub when: u64,
}

impl JournalRecord {
    pub fn new(seq: u64, m: &Mutation, when: u64) -> Self {
        let mut v = serde_json::to_value(m).expect("mutations serialize");
        let obj = v.as_object_mut().expect("adjacently tagged");
        let op = obj.remove("op").and_then(|o| o.as_str().map(str::to_string)).unwrap_or_default();
        let args = obj.remove("args").unwrap_or(serde_json::Value::Null);
        JournalRecord { seq, op, args, when }
    }

    pub fn mutation(&self) -> Result<Mutation> {
        let v = serde_json::json!({ "op": self.op, "args": self.args });
        serde_json::from_value(v).map_err(|e| Error::CorruptJournal(format!("record {}: {e}", self.seq)))
    }
}

/// Rebuilds catalog state from records that start at seq 1.
pub fn journal_replay<'a>(records: impl IntoIterator<Item = &'a JournalRecord>) -> Result<CatalogState> {
    replay_onto(CatalogState::default(), records)
}

/// Applies records that continue `state` without gaps.
pub fn replay_onto<'a>(
    mut state: CatalogState,
    records: impl IntoIterator<Item = &'a JournalRecord>,
) -> Result<CatalogState> {
    for rec in records {
        let expected = state.last_seq + 1;
        if rec.seq != expected {
            return Err(Error::CorruptJournal(format!("expected seq {expected}, found {}", rec.seq)));
        }
        let m = rec.mutation()?;
        state
            .apply(&m, rec.seq, rec.when)
            .map_err(|e| Error::CorruptJournal(format!("record {} ({}) does not apply: {e}", rec.seq, rec.op)))?;
    }
    Ok(state)
}

/// Parses journal text. A final line without a newline is a torn write and
/// is ignored; its byte offset is returned so the file can be truncated.
pub fn parse_journal(text: &str) -> Result<(Vec<JournalRecord>, usize)> {
    let mut records = Vec::new();
    let mut offset = 0usize;
    for (lineno, chunk) in text.split_inclusive('\n').enumerate() {
        if !chunk.ends_with('\n') {
            break;
        }
        let line = chunk.trim_end_matches('\n');
        if !line.trim().is_empty() {
            let rec: JournalRecord =
                serde_json::from_str(line).map_err(|e| Error::CorruptJournal(format!("line {}: {e}", lineno + 1)))?;
            records.push(rec);
        }
        offset += chunk.len();
    }
    Ok((records, offset))
}

pub fn read_journal(path: &Path) -> Result<Vec<JournalRecord>> {
    let text = fs::read_to_string(path)?;
    Ok(parse_journal(&text)?.0)
}

#[derive(Serialize)]
struct SnapshotOut<'a> {
    seq: u64,
    sha256: String,
    state: &'a RawValue,
}

#[derive(Deserialize)]
struct SnapshotIn {
    seq: u64,
    sha256: String,
    state: Box<RawValue>,
}

pub fn snapshot_name(seq: u64) -> String {
    format!("snapshot-{seq}.json")
}

pub fn write_snapshot(dir: &Path, state: &CatalogState) -> Result<PathBuf> {
    let body = serde_json::to_string(state).map_err(|e| Error::Invalid(e.to_string()))?;
    let raw = RawValue::from_string(body).map_err(|e| Error::Invalid(e.to_string()))?;
    let doc = SnapshotOut { seq: state.last_seq, sha256: sha256_hex(raw.get().as_bytes()), state: &raw };
    let final_path = dir.join(snapshot_name(state.last_seq));
    let tmp = dir.join(format!(".{}.tmp", snapshot_name(state.last_seq)));
    {
        let mut f = File::create(&tmp)?;
        serde_json::to_writer(&mut f, &doc).map_err(|e| Error::Invalid(e.to_string()))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &final_path)?;
    Ok(final_path)
}

pub fn read_snapshot(path: &Path) -> Result<CatalogState> {
    let text = fs::read_to_string(path)?;
    let doc: SnapshotIn =
        serde_json::from_str(&text).map_err(|e| Error::CorruptJournal(format!("{}: {e}", path.display())))?;
    if sha256_hex(doc.state.get().as_bytes()) != doc.sha256 {
        return Err(Error::CorruptJournal(format!("{}: bad hash", path.display())));
    }
    let state: CatalogState =
        serde_json::from_str(doc.state.get()).map_err(|e| Error::CorruptJournal(format!("{}: {e}", path.display())))?;
    if state.last_seq != doc.seq {
        return Err(Error::CorruptJournal(format!("{}: seq mismatch", path.display())));
    }
    Ok(state)
}

/// Snapshot files in `dir`, newest first.
fn snapshots(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(seq) = name.strip_prefix("snapshot-").and_then(|s| s.strip_suffix(".json")) {
            if let Ok(seq) = seq.parse::<u64>() {
                out.push((seq, entry.path()));
            }
        }
    }
    out.sort_by_key(|e| std::cmp::Reverse(e.0));
    Ok(out)
}

/// Open journal directory positioned for appending.
pub struct Journal {
    dir: PathBuf,
    file: File,
    since_snapshot: u64,
    snapshot_every: u64,
}

impl Journal {
    /// Recovers state from `dir` (latest snapshot plus journal tail),
    /// creating the directory if needed.
    pub fn recover(dir: &Path, snapshot_every: u64) -> Result<(CatalogState, Journal)> {
        fs::create_dir_all(dir)?;
        let jpath = dir.join(JOURNAL_FILE);
        let mut text = String::new();
        if jpath.exists() {
            File::open(&jpath)?.read_to_string(&mut text)?;
        }
        let (records, good_len) = parse_journal(&text)?;
        if good_len < text.len() {
            OpenOptions::new().write(true).open(&jpath)?.set_len(good_len as u64)?;
        }
        for (i, r) in records.iter().enumerate() {
            if r.seq != i as u64 + 1 {
                return Err(Error::CorruptJournal(format!("expected seq {}, found {}", i + 1, r.seq)));
            }
        }
        let base = match snapshots(dir)?.into_iter().find(|(seq, _)| *seq <= records.len() as u64) {
            Some((_, path)) => read_snapshot(&path)?,
            None => CatalogState::default(),
        };
        let skip = base.last_seq as usize;
        let state = replay_onto(base, &records[skip..])?;
        let file = OpenOptions::new().create(true).append(true).open(&jpath)?;
        let since_snapshot = (records.len() - skip) as u64;
        Ok((state, Journal { dir: dir.to_path_buf(), file, since_snapshot, snapshot_every: snapshot_every.max(1) }))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, rec: &JournalRecord) -> Result<()> {
        let mut line = serde_json::to_vec(rec).map_err(|e| Error::Invalid(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        self.since_snapshot += 1;
        Ok(())
    }

    pub fn snapshot_due(&self) -> bool {
        self.since_snapshot >= self.snapshot_every
    }

    pub fn snapshot(&mut self, state: &CatalogState) -> Result<()> {
        self.file.sync_data()?;
        write_snapshot(&self.dir, state)?;
        self.since_snapshot = 0;
        // Keep the two newest snapshots.
        for (_, old) in snapshots(&self.dir)?.into_iter().skip(2) {
            let _ = fs::remove_file(old);
        }
        Ok(())
    }

    pub fn sync(&mut self) -> Result<()> {
        self.file.sync_data()?;
        Ok(())
    }
}
