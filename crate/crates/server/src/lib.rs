//! Live host for the formation world: an 80 Hz loop streaming state and
//! tactile frames to websocket clients and taking hand input back.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{decode_input, encode_state, InputMessage, ProtocolError, ServerMessage, StateMessage};
pub use server::{start, ServerConfig, ServerHandle, DEFAULT_PORT, DEFAULT_RATE_DIV, PORT_ENV};
pub use session::{LiveSession, SessionError, SessionInput, Step};
