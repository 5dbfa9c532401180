//! Process boundary for external reconstructors and metrics.
//!
//! A plugin is any executable speaking the framed protocol in [`wire`] over its
//! stdin/stdout. The harness drives it strictly request/response:
//!
//! | request | reply        | valid in             |
//! |---------|--------------|----------------------|
//! | `INIT`  | `IRES`       | Init                 |
//! | `RSET`  | none         | Ready, InSequence    |
//! | `TENS`  | `IMGR`       | InSequence           |
//! | `METQ`  | `METR`       | Ready, InSequence    |
//! | `QUIT`  | none (exit)  | any but Closed       |
//!
//! Any request may instead be answered with `ERRS` carrying a UTF-8 diagnostic.

pub mod session;
pub mod wire;

use std::io;
use std::time::Duration;

use thiserror::Error;

pub use session::{init_session, PluginInfo, PluginKind, PluginSession, SessionOptions, SessionState};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("failed to spawn plugin `{cmd}`: {source}")]
    Spawn {
        cmd: String,
        #[source]
        source: io::Error,
    },

    #[error("plugin did not answer within {0:?}; child killed")]
    Timeout(Duration),

    #[error("protocol version mismatch: harness speaks {expected}, plugin replied {got}")]
    VersionMismatch { expected: u32, got: String },

    #[error("plugin session is closed")]
    Closed,

    #[error("plugin exited unexpectedly")]
    ChildExited,

    #[error("plugin error: {0}")]
    Remote(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid in state {state:?}: {message}")]
    State { state: SessionState, message: String },

    #[error("plugin i/o: {0}")]
    Io(#[source] io::Error),
}
