//! Real-time audio feature extraction with expression-mapped scene outputs.

pub mod features;
pub mod ingest;
pub mod mapping;
pub mod model;
pub mod subbands;
pub mod engine;
pub mod session;
pub mod transport;
pub mod live;
pub mod render;
