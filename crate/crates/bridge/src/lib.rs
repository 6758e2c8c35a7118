//! rosbridge v2 style JSON-over-WebSocket bridge for the simulated robot:
//! the shared topic [`hub`], a [`Host`] that steps the simulator and runs
//! bound programs in lockstep with it, the HTTP/WebSocket server, and a
//! blocking [`Client`].

pub mod client;
pub mod gate;
mod host;
pub mod hub;
mod local;
pub mod protocol;
mod server;
pub mod trace;

pub use client::{Client, ClientError, ClientEvent, ProgramEvent, WsLink};
pub use host::{Host, HostConfig, HostError, HostReport, ProgramRun};
pub use hub::{Effect, Hub, SessionId};
pub use server::INDEX_HTML;

pub(crate) use host::Shared;
