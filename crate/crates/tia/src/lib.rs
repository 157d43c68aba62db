//! TiA 1.0 (TOBI interface A) signal streaming protocol.
//!
//! The crate is split along the protocol's own seams:
//!
//! - [`signal`] — signal-type identifiers, flag values, and mask handling
//! - [`datapacket`] — the version-3 binary data packet codec
//! - [`control`] — line-structured control and server-state messages
//! - [`metainfo`] — the `tiaMetaInfo` XML document
//! - [`server`] — a multi-client server with synthetic signal sources
//! - [`client`] — a client for the full command sequence and data reception

pub mod client;
pub mod control;
pub mod datapacket;
pub mod metainfo;
pub mod server;
pub mod signal;

pub use control::{ControlMessage, TiaError, Transport};
pub use datapacket::{DataPacket, FixedHeader, SignalBlock};
pub use signal::{SignalMask, SignalType};
