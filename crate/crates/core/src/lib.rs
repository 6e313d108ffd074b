pub mod bench;
pub mod elimination;
pub mod error;
pub mod forest;
pub mod oracle;
mod serde_pairs;
pub mod stats;
pub mod stream;
pub mod stump;
