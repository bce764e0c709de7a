//! JSON-over-WebSocket protocol for consoles.
//!
//! Every message is an envelope `{"kind", "seq", "payload"}`. The server
//! sends `announce` on connect and after any table revision change, and
//! `values` at a throttled rate. Client commands (`add_map`, `remove_map`,
//! `set_expr`, `set_enabled`, `set_auto`, `save`) are answered by exactly one
//! `ack` or `error` carrying the same `seq`.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tungstenite::{Message, WebSocket};

use crate::engine::{Command, EngineError, EngineHandle, Outcome};
use crate::mapping::{Expression, MappingError, MappingRequest};
use crate::model::{ModelError, Snapshot};
use crate::session::{save_session, SessionConfig};

/// How long a connection waits for the engine to apply a command.
pub const COMMAND_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<i64>,
    #[serde(default = "empty_object")]
    pub payload: Value,
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

impl Envelope {
    pub fn new(kind: &str, seq: Option<i64>, payload: Value) -> Self {
        Envelope {
            kind: kind.to_string(),
            seq,
            payload,
        }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }
}

/// Mapping table as last published by the engine thread.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableView {
    pub revision: u64,
    pub mappings: Vec<(u64, MappingRequest)>,
}

/// Latest-wins exchange between the engine thread and transport threads.
#[derive(Default)]
pub struct LiveState {
    snapshot: Mutex<Option<Arc<Snapshot>>>,
    table: Mutex<Arc<TableView>>,
}

impl LiveState {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Called by the engine thread after each frame.
    pub fn publish(&self, snapshot: Snapshot, table: impl FnOnce() -> TableView) {
        if self.table.lock().unwrap().revision != snapshot.revision
            || self.snapshot.lock().unwrap().is_none()
        {
            *self.table.lock().unwrap() = Arc::new(table());
        }
        *self.snapshot.lock().unwrap() = Some(Arc::new(snapshot));
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.lock().unwrap().clone()
    }

    pub fn table(&self) -> Arc<TableView> {
        self.table.lock().unwrap().clone()
    }
}

pub fn announce_payload(snapshot: &Snapshot, table: &TableView) -> Value {
    let mappings: Vec<Value> = table
        .mappings
        .iter()
        .map(|(id, request)| {
            let mut v = serde_json::to_value(request).expect("request serializes");
            v["id"] = json!(id);
            v
        })
        .collect();
    json!({
        "revision": table.revision,
        "frame_index": snapshot.frame_index,
        "signals": snapshot.catalog.descriptors(),
        "mappings": mappings,
    })
}

pub fn values_payload(snapshot: &Snapshot) -> Value {
    let values: Map<String, Value> = snapshot
        .iter()
        .map(|(d, v)| (d.id.to_string(), json!(v)))
        .collect();
    json!({
        "frame_index": snapshot.frame_index,
        "time_s": snapshot.time_s,
        "revision": snapshot.revision,
        "values": values,
    })
}

/// Error envelope payload with a short machine-readable code.
fn error_payload(code: &str, message: impl ToString) -> Value {
    json!({ "code": code, "message": message.to_string() })
}

fn mapping_error_payload(err: &MappingError) -> Value {
    let code = match err {
        MappingError::UnknownSignal(_) => "unknown_signal",
        MappingError::NotASource(_) | MappingError::NotADestination(_) => "wrong_direction",
        MappingError::DestinationBusy { .. } => "destination_busy",
        MappingError::UnknownMapping(_) => "unknown_mapping",
        MappingError::SourceCount(_) | MappingError::InvalidSmoothing(_) => "invalid_mapping",
        MappingError::Expression(_) => "expression",
    };
    let mut payload = error_payload(code, err);
    if let MappingError::Expression(e) = err {
        payload["position"] = json!(e.position());
    }
    payload
}

fn engine_error_payload(err: &EngineError) -> Value {
    match err {
        EngineError::Mapping(e) | EngineError::MappingAt { error: e, .. } => mapping_error_payload(e),
        EngineError::Model(ModelError::UnknownSignal(_)) => error_payload("unknown_signal", err),
        EngineError::Model(ModelError::NotAnAutomatable(_)) => error_payload("not_automatable", err),
        EngineError::Disconnected => error_payload("engine_stopped", err),
        _ => error_payload("rejected", err),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdPayload {
    id: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetExprPayload {
    id: u64,
    expression: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetEnabledPayload {
    id: u64,
    enabled: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetAutoPayload {
    id: String,
    value: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SavePayload {
    #[serde(default)]
    path: Option<PathBuf>,
}

#[derive(Clone)]
pub struct UiOptions {
    pub rate_hz: f64,
    /// Session the running engine was built from; `save` writes this with
    /// the live mapping table and automatable values.
    pub session: SessionConfig,
    pub save_path: Option<PathBuf>,
}

impl Default for UiOptions {
    fn default() -> Self {
        UiOptions {
            rate_hz: 30.0,
            session: SessionConfig::default(),
            save_path: None,
        }
    }
}

/// Turns client envelopes into engine commands and replies.
#[derive(Clone)]
pub struct CommandHandler {
    engine: EngineHandle,
    state: Arc<LiveState>,
    options: Arc<UiOptions>,
}

fn parse_payload<T: for<'de> Deserialize<'de>>(payload: &Value) -> Result<T, Value> {
    T::deserialize(payload).map_err(|e| error_payload("bad_payload", e))
}

impl CommandHandler {
    pub fn new(engine: EngineHandle, state: Arc<LiveState>, options: UiOptions) -> Self {
        CommandHandler {
            engine,
            state,
            options: Arc::new(options),
        }
    }

    /// Parses one text frame and produces exactly one `ack` or `error`.
    pub fn handle_text(&self, text: &str) -> Envelope {
        let envelope: Envelope = match serde_json::from_str(text) {
            Ok(e) => e,
            Err(e) => {
                // Echo the seq if the text is at least a JSON object with one.
                let seq = serde_json::from_str::<Value>(text)
                    .ok()
                    .and_then(|v| v.get("seq").and_then(Value::as_i64));
                return Envelope::new("error", seq, error_payload("bad_envelope", e));
            }
        };
        let seq = envelope.seq;
        match self.handle(&envelope) {
            Ok(payload) => Envelope::new("ack", seq, payload),
            Err(payload) => Envelope::new("error", seq, payload),
        }
    }

    fn handle(&self, envelope: &Envelope) -> Result<Value, Value> {
        let payload = &envelope.payload;
        let command = match envelope.kind.as_str() {
            "add_map" => {
                let request: MappingRequest = parse_payload(payload)?;
                Command::add_mapping(&request).map_err(|e| mapping_error_payload(&e))?
            }
            "remove_map" => Command::RemoveMapping(parse_payload::<IdPayload>(payload)?.id),
            "set_expr" => {
                let p: SetExprPayload = parse_payload(payload)?;
                let table = self.state.table();
                let n_sources = table
                    .mappings
                    .iter()
                    .find(|(id, _)| *id == p.id)
                    .map(|(_, r)| r.sources.len())
                    .ok_or_else(|| mapping_error_payload(&MappingError::UnknownMapping(p.id)))?;
                let expression = Expression::parse(&p.expression, n_sources)
                    .map_err(|e| mapping_error_payload(&MappingError::Expression(e)))?;
                Command::SetExpression(p.id, expression)
            }
            "set_enabled" => {
                let p: SetEnabledPayload = parse_payload(payload)?;
                Command::SetEnabled(p.id, p.enabled)
            }
            "set_auto" => {
                let p: SetAutoPayload = parse_payload(payload)?;
                if !p.value.is_finite() {
                    return Err(error_payload("bad_payload", "value must be finite"));
                }
                Command::SetAutomatable(p.id, p.value)
            }
            "save" => {
                let p: SavePayload = if payload.is_null() {
                    SavePayload::default()
                } else {
                    parse_payload(payload)?
                };
                return self.save(p.path);
            }
            "announce" | "values" | "ack" | "error" => {
                return Err(error_payload(
                    "bad_kind",
                    format!("`{}` is sent by the server only", envelope.kind),
                ))
            }
            other => return Err(error_payload("bad_kind", format!("unknown kind `{other}`"))),
        };
        let reply = self.engine.submit(command);
        match reply.recv_timeout(COMMAND_TIMEOUT) {
            Ok(Ok(outcome)) => Ok(match outcome {
                Outcome::MappingAdded { id, revision } => json!({ "revision": revision, "id": id }),
                Outcome::Revision(revision) => json!({ "revision": revision }),
                Outcome::AutomatableSet { value, revision } => {
                    json!({ "revision": revision, "value": value })
                }
            }),
            Ok(Err(e)) => Err(engine_error_payload(&e)),
            Err(_) => Err(error_payload("timeout", "engine did not apply the command in time")),
        }
    }

    fn save(&self, path: Option<PathBuf>) -> Result<Value, Value> {
        let path = path
            .or_else(|| self.options.save_path.clone())
            .ok_or_else(|| error_payload("bad_payload", "no session path to save to"))?;
        let table = self.state.table();
        let mut session = self.options.session.clone();
        session.mappings = table.mappings.iter().map(|(_, r)| r.clone()).collect();
        if let Some(snapshot) = self.state.snapshot() {
            for auto in &mut session.automatables {
                if let Some(v) = snapshot.get(auto.id.as_str()) {
                    auto.value = v;
                }
            }
        }
        save_session(&session, &path).map_err(|e| error_payload("io", e))?;
        Ok(json!({ "revision": table.revision, "path": path.display().to_string() }))
    }
}

/// Blocking WebSocket server; one thread per connection.
pub struct UiServer {
    listener: TcpListener,
    handler: CommandHandler,
}

impl UiServer {
    pub fn bind(
        addr: impl ToSocketAddrs,
        engine: EngineHandle,
        state: Arc<LiveState>,
        options: UiOptions,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(UiServer {
            listener,
            handler: CommandHandler::new(engine, state, options),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener")
    }

    /// Accepts connections until `shutdown` is set.
    pub fn spawn(self, shutdown: Arc<AtomicBool>) -> JoinHandle<()> {
        std::thread::Builder::new()
            .name("ui-accept".into())
            .spawn(move || {
                let mut workers = Vec::new();
                while !shutdown.load(Ordering::Relaxed) {
                    match self.listener.accept() {
                        Ok((stream, peer)) => {
                            let handler = self.handler.clone();
                            let shutdown = shutdown.clone();
                            log::info!("UI client connected from {peer}");
                            let worker = std::thread::Builder::new()
                                .name(format!("ui-{peer}"))
                                .spawn(move || {
                                    if let Err(e) = serve_connection(stream, handler, &shutdown) {
                                        log::info!("UI client {peer} closed: {e}");
                                    }
                                })
                                .expect("spawn UI worker");
                            workers.push(worker);
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(10));
                        }
                        Err(e) => {
                            log::warn!("UI accept failed: {e}");
                            std::thread::sleep(Duration::from_millis(50));
                        }
                    }
                    workers.retain(|w: &JoinHandle<()>| !w.is_finished());
                }
                for w in workers {
                    let _ = w.join();
                }
            })
            .expect("spawn UI accept thread")
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io)
        if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut))
}

fn serve_connection(
    stream: TcpStream,
    handler: CommandHandler,
    shutdown: &AtomicBool,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => {
            tungstenite::Error::Io(std::io::ErrorKind::WouldBlock.into())
        }
    })?;
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(5)))?;

    let state = handler.state.clone();
    let period = Duration::from_secs_f64(1.0 / handler.options.rate_hz.max(0.1));
    let mut announced: Option<u64> = None;
    let mut last_values: Option<u64> = None;
    let mut next_values = Instant::now();
    // After an ack, hold values back until a frame processed after the
    // command is visible, so the client never sees pre-command values.
    let mut values_from = 0;

    while !shutdown.load(Ordering::Relaxed) {
        if let Some(snapshot) = state.snapshot() {
            let table = state.table();
            if announced != Some(table.revision) {
                let payload = announce_payload(&snapshot, &table);
                ws.send(Message::text(Envelope::new("announce", None, payload).to_text()))?;
                announced = Some(table.revision);
            }
            let now = Instant::now();
            if now >= next_values
                && last_values != Some(snapshot.frame_index)
                && snapshot.frame_index >= values_from
            {
                let payload = values_payload(&snapshot);
                ws.send(Message::text(Envelope::new("values", None, payload).to_text()))?;
                last_values = Some(snapshot.frame_index);
                next_values = now + period;
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = handler.handle_text(text.as_str());
                if reply.kind == "ack" {
                    values_from = state.snapshot().map_or(0, |s| s.frame_index + 1);
                }
                ws.send(Message::text(reply.to_text()))?;
            }
            Ok(Message::Binary(_)) => {
                let reply = Envelope::new(
                    "error",
                    None,
                    error_payload("bad_envelope", "binary frames are not supported"),
                );
                ws.send(Message::text(reply.to_text()))?;
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}
