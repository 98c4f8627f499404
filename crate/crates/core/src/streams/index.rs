use std::collections::{BTreeMap, HashMap};

use parking_lot::RwLock;

use super::SegmentMeta;
use crate::catalog::Catalog;

/// Segments of one stream collection keyed by their first timestamp.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamIndex {
    by_t_min: BTreeMap<u64, Vec<SegmentMeta>>,
}

impl StreamIndex {
    pub fn from_segments<'a>(segs: impl IntoIterator<Item = &'a SegmentMeta>) -> Self {
        let mut idx = StreamIndex::default();
        for s in segs {
            idx.insert(s.clone());
        }
        idx
    }

    pub fn insert(&mut self, seg: SegmentMeta) {
        let group = self.by_t_min.entry(seg.t_min).or_default();
        let at = group.partition_point(|s| s.segment_id < seg.segment_id);
        group.insert(at, seg);
    }

    /// Segments holding at least one timestamp in `[lo, hi)` candidates:
    /// those starting before `hi` and ending at or after `lo`.
    pub fn overlapping(&self, lo: u64, hi: u64) -> Vec<SegmentMeta> {
        self.by_t_min.range(..hi).flat_map(|(_, group)| group.iter()).filter(|s| s.t_max >= lo).cloned().collect()
    }

    pub fn segments(&self) -> impl Iterator<Item = &SegmentMeta> {
        self.by_t_min.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.by_t_min.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_t_min.is_empty()
    }
}

/// Live indexes of every stream collection. A cache over the catalog.
#[derive(Default)]
pub(crate) struct StreamIndexes {
    inner: RwLock<HashMap<String, StreamIndex>>,
}

impl StreamIndexes {
    pub fn load(&self, catalog: &Catalog) {
        let st = catalog.read();
        let mut map = self.inner.write();
        map.clear();
        for (coll, segs) in &st.segments {
            map.insert(coll.clone(), StreamIndex::from_segments(segs));
        }
    }

    pub fn get(&self, coll: &str) -> StreamIndex {
        self.inner.read().get(coll).cloned().unwrap_or_default()
    }

    pub fn insert(&self, coll: &str, seg: SegmentMeta) {
        self.inner.write().entry(coll.to_string()).or_default().insert(seg);
    }

    pub fn replace(&self, coll: &str, idx: StreamIndex) {
        self.inner.write().insert(coll.to_string(), idx);
    }

    pub fn drop_collection(&self, coll: &str) {
        self.inner.write().remove(coll);
    }
}
