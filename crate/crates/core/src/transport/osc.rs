//! OSC 1.0 messages (int32, float32 and string arguments) and the UDP
//! destination publisher.

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};

use thiserror::Error;

use crate::model::{Direction, Snapshot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OscError {
    #[error("malformed OSC packet: {0}")]
    MalformedPacket(&'static str),
    #[error("unsupported OSC type tag `{0}`")]
    UnsupportedType(char),
    #[error("invalid OSC address `{0}`")]
    InvalidAddress(String),
    #[error("OSC string contains a NUL byte")]
    NulInString,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OscArg {
    Int(i32),
    Float(f32),
    Str(String),
}

impl OscArg {
    fn tag(&self) -> u8 {
        match self {
            OscArg::Int(_) => b'i',
            OscArg::Float(_) => b'f',
            OscArg::Str(_) => b's',
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OscMessage {
    pub address: String,
    pub args: Vec<OscArg>,
}

fn pad4(n: usize) -> usize {
    (n + 4) & !3
}

fn push_string(out: &mut Vec<u8>, s: &[u8]) {
    let start = out.len();
    out.extend_from_slice(s);
    out.resize(start + pad4(s.len()), 0);
}

impl OscMessage {
    pub fn new(address: impl Into<String>, args: Vec<OscArg>) -> Self {
        OscMessage {
            address: address.into(),
            args,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, OscError> {
        if !self.address.starts_with('/') {
            return Err(OscError::InvalidAddress(self.address.clone()));
        }
        if self.address.contains('\0') {
            return Err(OscError::NulInString);
        }
        let mut out = Vec::with_capacity(pad4(self.address.len()) + 8 + 4 * self.args.len());
        push_string(&mut out, self.address.as_bytes());
        let mut tags = Vec::with_capacity(self.args.len() + 1);
        tags.push(b',');
        tags.extend(self.args.iter().map(OscArg::tag));
        push_string(&mut out, &tags);
        for arg in &self.args {
            match arg {
                OscArg::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
                OscArg::Float(v) => out.extend_from_slice(&v.to_be_bytes()),
                OscArg::Str(s) => {
                    if s.contains('\0') {
                        return Err(OscError::NulInString);
                    }
                    push_string(&mut out, s.as_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<OscMessage, OscError> {
        if bytes.len() % 4 != 0 {
            return Err(OscError::MalformedPacket("length is not a multiple of 4"));
        }
        let mut reader = Reader { bytes, pos: 0 };
        let address = reader.string()?;
        if !address.starts_with('/') {
            return Err(OscError::MalformedPacket("address must start with '/'"));
        }
        if reader.pos == bytes.len() {
            // Type tag string is optional in old senders.
            return Ok(OscMessage { address, args: Vec::new() });
        }
        let tags = reader.string()?;
        let tags = tags
            .strip_prefix(',')
            .ok_or(OscError::MalformedPacket("type tags must start with ','"))?;
        let mut args = Vec::with_capacity(tags.len());
        for tag in tags.chars() {
            args.push(match tag {
                'i' => OscArg::Int(i32::from_be_bytes(reader.word()?)),
                'f' => OscArg::Float(f32::from_be_bytes(reader.word()?)),
                's' => OscArg::Str(reader.string()?),
                other => return Err(OscError::UnsupportedType(other)),
            });
        }
        if reader.pos != bytes.len() {
            return Err(OscError::MalformedPacket("trailing bytes"));
        }
        Ok(OscMessage { address, args })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn word(&mut self) -> Result<[u8; 4], OscError> {
        let word = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or(OscError::MalformedPacket("truncated argument"))?;
        self.pos += 4;
        Ok(word.try_into().expect("4 bytes"))
    }

    fn string(&mut self) -> Result<String, OscError> {
        let rest = &self.bytes[self.pos..];
        let len = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or(OscError::MalformedPacket("unterminated string"))?;
        let padded = pad4(len);
        if padded > rest.len() {
            return Err(OscError::MalformedPacket("truncated string padding"));
        }
        if rest[len..padded].iter().any(|&b| b != 0) {
            return Err(OscError::MalformedPacket("nonzero string padding"));
        }
        let s = std::str::from_utf8(&rest[..len])
            .map_err(|_| OscError::MalformedPacket("string is not UTF-8"))?;
        self.pos += padded;
        Ok(s.to_string())
    }
}

pub const SYNC_ADDRESS: &str = "/sync";

/// Turns snapshots into the per-frame message list: changed destinations in
/// catalog order, then `/sync` with the frame index and table revision.
#[derive(Debug, Default)]
pub struct ChangeTracker {
    last: Vec<Option<f32>>,
}

impl ChangeTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn messages(&mut self, snapshot: &Snapshot) -> Vec<OscMessage> {
        let catalog = &snapshot.catalog;
        if self.last.len() != catalog.len() {
            self.last = vec![None; catalog.len()];
        }
        let mut out = Vec::new();
        for id in catalog.ids_with_direction(Direction::Destination) {
            let value = snapshot.value(id) as f32;
            if self.last[id.0].map(f32::to_bits) != Some(value.to_bits()) {
                self.last[id.0] = Some(value);
                out.push(OscMessage::new(
                    catalog.descriptor(id).id.osc_address(),
                    vec![OscArg::Float(value)],
                ));
            }
        }
        out.push(OscMessage::new(
            SYNC_ADDRESS,
            vec![
                OscArg::Int(snapshot.frame_index as i32),
                OscArg::Int(snapshot.revision as i32),
            ],
        ));
        out
    }
}

/// Sends destination updates as individual UDP datagrams.
pub struct OscPublisher {
    socket: UdpSocket,
    dest: SocketAddr,
    tracker: ChangeTracker,
    errors: u64,
}

impl OscPublisher {
    pub fn new(dest: impl ToSocketAddrs) -> std::io::Result<Self> {
        let dest = dest.to_socket_addrs()?.next().ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "no address for OSC destination")
        })?;
        let bind: SocketAddr = if dest.is_ipv4() {
            "0.0.0.0:0".parse().unwrap()
        } else {
            "[::]:0".parse().unwrap()
        };
        Ok(OscPublisher {
            socket: UdpSocket::bind(bind)?,
            dest,
            tracker: ChangeTracker::new(),
            errors: 0,
        })
    }

    pub fn dest(&self) -> SocketAddr {
        self.dest
    }

    /// Socket errors are counted and logged; they never stop publishing.
    pub fn publish(&mut self, snapshot: &Snapshot) -> usize {
        let messages = self.tracker.messages(snapshot);
        for message in &messages {
            let packet = match message.encode() {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("dropping OSC message {}: {e}", message.address);
                    continue;
                }
            };
            if let Err(e) = self.socket.send_to(&packet, self.dest) {
                self.errors += 1;
                if self.errors.is_power_of_two() {
                    log::warn!("OSC send to {} failed ({} total): {e}", self.dest, self.errors);
                }
            }
        }
        messages.len()
    }

    pub fn send_errors(&self) -> u64 {
        self.errors
    }
}
