use serde::{Deserialize, Serialize};

/// Catalog entry for one ingested segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub segment_id: u64,
    pub object_path: String,
    pub t_min: u64,
    pub t_max: u64,
    pub record_count: u64,
}
