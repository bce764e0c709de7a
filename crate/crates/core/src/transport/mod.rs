//! Outbound OSC publishing and the console WebSocket protocol.

mod osc;
mod ui;

pub use osc::{ChangeTracker, OscArg, OscError, OscMessage, OscPublisher, SYNC_ADDRESS};
pub use ui::{
    announce_payload, values_payload, CommandHandler, Envelope, LiveState, TableView, UiOptions,
    UiServer, COMMAND_TIMEOUT,
};
