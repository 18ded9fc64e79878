//! Streaming gesture-classification service over WebSockets.

pub mod protocol;
pub mod registry;
pub mod server;

pub use protocol::{ErrorCode, WireMessage};
pub use registry::{Connection, SessionRegistry, CANVAS_SIDE};
pub use server::{run_service, Service, ServiceConfig, ServiceError, DEFAULT_PORT};
