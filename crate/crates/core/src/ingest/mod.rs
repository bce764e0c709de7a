//! Audio input: WAV decoding, framing and the processing clock.

mod clock;
mod framing;
mod wav;

pub use clock::{Clock, ClockMode, DropOldestQueue, Tick, FRAME_QUEUE_CAPACITY};
pub use framing::{frame_stream, AudioFrame, Framer, FramingError, StreamConfig, FRAME_SIZES};
pub use wav::{decode_wav, encode_wav, DecodedAudio, WavEncoding, WavError};
