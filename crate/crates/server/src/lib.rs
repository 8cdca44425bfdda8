//! WebSocket session server: one connection is one coordinated session
//! over a shared database.

pub mod predicate;
pub mod protocol;
pub mod server;
pub mod session;

pub use server::{router, start, AppState, ServerConfig};
pub use session::{Session, SessionOptions};
