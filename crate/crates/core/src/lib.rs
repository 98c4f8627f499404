pub mod catalog;
pub mod checksum;
pub mod drivers;
pub mod engine;
mod error;
pub mod glob;
pub mod path;
pub mod provenance;
pub mod ruledsl;
pub mod streams;

pub use engine::Zone;
pub use error::{Error, ErrorClass, Result};

/// Microseconds since the Unix epoch.
pub fn now_us() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0)
}
