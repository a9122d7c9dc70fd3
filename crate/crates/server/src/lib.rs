//! HTTP/JSON service over workflow design spaces.
//!
//! Every read endpoint returns the canonical JSON serialization of the
//! matching library call, so responses can be compared byte for byte.

pub mod config;
pub mod error;
pub mod routes;
pub mod state;

pub use config::ServerConfig;
pub use error::ApiError;
pub use routes::router;
pub use state::{AppState, Project};
