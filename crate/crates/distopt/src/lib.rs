//! Optimal content distribution for a single consumer and media source.
//!
//! Grows a preferred sequence of content increments until potential
//! participation meets available volume, classifies extensions past that
//! point, and builds carveouts that keep both sides no worse off.

pub mod distribution;
pub mod error;
pub mod optimizer;
pub mod oracle;
pub mod participation;
pub mod registry;
pub mod sequence;
pub mod transform;
pub mod thresholds;
pub mod valuation;

pub use distribution::{Distribution, Entry, Point, PointIncrement};
pub use error::{Error, Result};
pub use participation::{ModelSpec, Participation};
pub use transform::{ProducerTransform, TransformSpec};
