#![allow(dead_code)]

use std::f64::consts::PI;
use std::net::{SocketAddr, TcpStream, UdpSocket};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use sonomap::transport::{Envelope, OscMessage};
use tungstenite::{Message, WebSocket};

pub const FS: f64 = 44100.0;

pub fn testdata(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata").join(name)
}

pub fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / FS).sin()).collect()
}

pub struct UiClient {
    ws: WebSocket<TcpStream>,
    next_seq: i64,
    /// Server-pushed envelopes seen while waiting for replies.
    pub pushed: Vec<Envelope>,
}

impl UiClient {
    pub fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).expect("connect UI");
        stream.set_read_timeout(Some(Duration::from_millis(50))).unwrap();
        let (ws, _) = tungstenite::client(format!("ws://{addr}/"), stream).expect("handshake");
        UiClient {
            ws,
            next_seq: 1,
            pushed: Vec::new(),
        }
    }

    /// Next envelope from the server, or None after `timeout`.
    pub fn recv(&mut self, timeout: Duration) -> Option<Envelope> {
        let deadline = Instant::now() + timeout;
        while Instant::now() < deadline {
            match self.ws.read() {
                Ok(Message::Text(t)) => return Some(serde_json::from_str(t.as_str()).expect("envelope")),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                Err(e) => panic!("websocket error: {e}"),
            }
        }
        None
    }

    pub fn recv_kind(&mut self, kind: &str, timeout: Duration) -> Option<Envelope> {
        let deadline = Instant::now() + timeout;
        while let Some(e) = self.recv(deadline.saturating_duration_since(Instant::now())) {
            if e.kind == kind {
                return Some(e);
            }
            self.pushed.push(e);
        }
        None
    }

    pub fn send(&mut self, kind: &str, payload: Value) -> i64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.send_raw(&Envelope::new(kind, Some(seq), payload).to_text());
        seq
    }

    pub fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::text(text.to_string())).expect("send");
    }

    /// Sends one command and returns its reply; pushes seen meanwhile are kept.
    pub fn request(&mut self, kind: &str, payload: Value) -> Envelope {
        let seq = self.send(kind, payload);
        self.reply_to(seq)
    }

    pub fn reply_to(&mut self, seq: i64) -> Envelope {
        let deadline = Instant::now() + Duration::from_secs(10);
        while let Some(e) = self.recv(deadline.saturating_duration_since(Instant::now())) {
            if matches!(e.kind.as_str(), "ack" | "error") {
                assert_eq!(e.seq, Some(seq), "reply out of order: {e:?}");
                return e;
            }
            self.pushed.push(e);
        }
        panic!("no reply to seq {seq}");
    }

    pub fn add_map(&mut self, sources: &[&str], destination: &str, expression: &str) -> Envelope {
        self.request(
            "add_map",
            json!({"sources": sources, "destination": destination, "expression": expression}),
        )
    }
}

pub struct OscSink {
    pub socket: UdpSocket,
}

impl OscSink {
    pub fn bind() -> Self {
        let socket = UdpSocket::bind("127.0.0.1:0").unwrap();
        socket.set_read_timeout(Some(Duration::from_millis(100))).unwrap();
        OscSink { socket }
    }

    pub fn addr(&self) -> SocketAddr {
        self.socket.local_addr().unwrap()
    }

    pub fn recv(&self) -> Option<OscMessage> {
        let mut buf = [0u8; 2048];
        match self.socket.recv(&mut buf) {
            Ok(n) => Some(OscMessage::decode(&buf[..n]).expect("valid OSC")),
            Err(_) => None,
        }
    }
}
