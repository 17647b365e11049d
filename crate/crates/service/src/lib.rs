//! Live case tracking over HTTP.
//!
//! Models are registered once under a content-derived id. Each case keeps
//! an append-only journal of everything it has accepted, and its state is
//! rebuilt from that journal when the service starts.

pub mod api;
pub mod journal;
pub mod store;

pub use api::router;
pub use store::Store;

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "escalate-data";
