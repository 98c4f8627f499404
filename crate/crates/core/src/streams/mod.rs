//! Time-indexed stream collections. Segments of framed, timestamped
//! records are stored as ordinary objects; reads compose every record in a
//! half-open interval into one framed stream.

mod framing;
mod index;
mod meta;

use serde::Serialize;

pub use framing::{decode, encode, encode_record, StreamRecord, HEADER_LEN};
pub use index::StreamIndex;
pub(crate) use index::StreamIndexes;
pub use meta::SegmentMeta;

use crate::catalog::{AvuTriple, CollectionKind, Mutation, Perm};
use crate::engine::Zone;
use crate::error::{Error, Result};
use crate::path;

pub const T_MIN_ATTR: &str = "stream.t_min";
pub const T_MAX_ATTR: &str = "stream.t_max";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StreamStat {
    pub record_count: u64,
    pub t_min: Option<u64>,
    pub t_max: Option<u64>,
    pub segment_count: u64,
}

/// Returns the position of the first record whose timestamp is lower than
/// its predecessor's.
pub fn first_decrease(records: &[StreamRecord]) -> Option<usize> {
    records.windows(2).position(|w| w[1].t < w[0].t).map(|i| i + 1)
}

impl Zone {
    fn require_stream(&self, coll: &str) -> Result<()> {
        match self.catalog.collection(coll) {
            Some(c) if c.kind == CollectionKind::Stream => Ok(()),
            _ => Err(Error::NotAStreamCollection(coll.to_string())),
        }
    }

    /// Stores one framed segment and indexes it.
    pub fn stream_ingest(&self, actor: &str, coll: &str, bytes: &[u8]) -> Result<SegmentMeta> {
        self.require_stream(coll)?;
        let records = decode(bytes)?;
        if records.is_empty() {
            return Err(Error::BadFraming("segment holds no records".into()));
        }
        if let Some(i) = first_decrease(&records) {
            return Err(Error::TimestampsDecreasing(i));
        }
        self.catalog.require(coll, actor, Perm::Write)?;
        let resc = self.require_default_resource()?;
        let ctx = self.context(actor, "stream.ingest")?.coll(coll).resc(&resc);
        self.pre("pep.stream.ingest.pre", &ctx)?;

        // Ingests into one collection are serialized by its path lock.
        let guard = self.lock_path(coll);
        let segment_id = self.catalog.read().segments.get(coll).and_then(|s| s.last()).map_or(1, |s| s.segment_id + 1);
        let object_path = path::join(coll, &format!("seg-{segment_id}.tsz"));
        let seg = SegmentMeta {
            segment_id,
            object_path: object_path.clone(),
            t_min: records[0].t,
            t_max: records[records.len() - 1].t,
            record_count: records.len() as u64,
        };
        self.put_inner(actor, &object_path, bytes, Some(&resc), true)?;
        for (attr, value) in [(T_MIN_ATTR, seg.t_min), (T_MAX_ATTR, seg.t_max)] {
            self.commit(Mutation::AddAvu {
                path: object_path.clone(),
                triple: AvuTriple::new(attr, value.to_string(), "µs"),
            })?;
        }
        // Recording the segment last keeps a failed ingest invisible to reads.
        self.commit(Mutation::AddSegment { collection: coll.to_string(), segment: seg.clone() })?;
        self.streams.insert(coll, seg.clone());
        self.audit(actor, "stream.ingest", format!("{coll} seg={segment_id} n={}", seg.record_count));
        drop(guard);
        self.post("pep.stream.ingest.post", &ctx);
        Ok(seg)
    }

    /// Every record with `lo <= t < hi`, ordered by (t, segment, position)
    /// and re-framed.
    pub fn stream_read(&self, actor: &str, coll: &str, lo: u64, hi: u64) -> Result<Vec<u8>> {
        if lo >= hi {
            return Err(Error::BadInterval { lo, hi });
        }
        Ok(encode(&self.stream_records(actor, coll, lo, hi)?))
    }

    pub fn stream_records(&self, actor: &str, coll: &str, lo: u64, hi: u64) -> Result<Vec<StreamRecord>> {
        if lo >= hi {
            return Err(Error::BadInterval { lo, hi });
        }
        self.require_stream(coll)?;
        self.catalog.require(coll, actor, Perm::Read)?;
        let mut keyed = Vec::new();
        for seg in self.streams.get(coll).overlapping(lo, hi) {
            let records = decode(&self.read_object(&seg.object_path)?)?;
            let whole = seg.t_min >= lo && seg.t_max < hi;
            for (i, r) in records.into_iter().enumerate() {
                if whole || (lo..hi).contains(&r.t) {
                    keyed.push((r.t, seg.segment_id, i, r));
                }
            }
        }
        keyed.sort_by_key(|k| (k.0, k.1, k.2));
        Ok(keyed.into_iter().map(|k| k.3).collect())
    }

    pub fn stream_stat(&self, actor: &str, coll: &str) -> Result<StreamStat> {
        self.require_stream(coll)?;
        self.catalog.require(coll, actor, Perm::Read)?;
        let idx = self.streams.get(coll);
        let mut stat = StreamStat::default();
        for s in idx.segments() {
            stat.record_count += s.record_count;
            stat.segment_count += 1;
            stat.t_min = Some(stat.t_min.map_or(s.t_min, |t| t.min(s.t_min)));
            stat.t_max = Some(stat.t_max.map_or(s.t_max, |t| t.max(s.t_max)));
        }
        Ok(stat)
    }

    /// Live index of `coll`.
    pub fn stream_index(&self, coll: &str) -> StreamIndex {
        self.streams.get(coll)
    }

    /// Discards the cached index of `coll` and rebuilds it by reading the
    /// stored segments.
    pub fn rebuild_stream_index(&self, coll: &str) -> Result<StreamIndex> {
        self.require_stream(coll)?;
        self.streams.drop_collection(coll);
        let recorded = self.catalog.read().segments.get(coll).cloned().unwrap_or_default();
        let mut idx = StreamIndex::default();
        for seg in recorded {
            let records = decode(&self.read_object(&seg.object_path)?)?;
            let (Some(first), Some(last)) = (records.first(), records.last()) else {
                return Err(Error::BadFraming(format!("{} holds no records", seg.object_path)));
            };
            idx.insert(SegmentMeta {
                segment_id: seg.segment_id,
                object_path: seg.object_path.clone(),
                t_min: first.t,
                t_max: last.t,
                record_count: records.len() as u64,
            });
        }
        self.streams.replace(coll, idx.clone());
        Ok(idx)
    }
}
