//! C ABI for the sonomap engine.
//!
//! Every function returns a [`SonomapStatus`]; on failure a message is kept
//! per thread and can be fetched with [`sonomap_last_error`]. Engines are
//! opaque handles created by [`sonomap_engine_new`] and released with
//! [`sonomap_engine_free`]. A handle must not be used from two threads at
//! once. Edits are applied between pushes, so they always land on a frame
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sonomap::engine::{Command, Engine, EngineError, Outcome};
use sonomap::ingest::Framer;
use sonomap::mapping::{Expression, MappingError, MappingRequest};
use sonomap::model::{ModelError, Snapshot};
use sonomap::session::SessionConfig;
use sonomap::transport::{OscArg, OscMessage};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SonomapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Session JSON failed to parse or validate.
    Config = 4,
    UnknownSignal = 5,
    /// Mapping rejected: wrong direction, destination busy, unknown id.
    Mapping = 6,
    Expression = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl ToString) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(SonomapStatus, String);

impl Failure {
    fn new(status: SonomapStatus, message: impl ToString) -> Self {
        Failure(status, message.to_string())
    }
}

impl From<MappingError> for Failure {
    fn from(e: MappingError) -> Self {
        let status = match e {
            MappingError::UnknownSignal(_) => SonomapStatus::UnknownSignal,
            MappingError::Expression(_) => SonomapStatus::Expression,
            _ => SonomapStatus::Mapping,
        };
        Failure(status, e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Mapping(m) | EngineError::MappingAt { error: m, .. } => m.into(),
            EngineError::Model(ModelError::UnknownSignal(_)) => {
                Failure(SonomapStatus::UnknownSignal, e.to_string())
            }
            EngineError::Model(ModelError::NotAnAutomatable(_)) => {
                Failure(SonomapStatus::InvalidArgument, e.to_string())
            }
            _ => Failure(SonomapStatus::Config, e.to_string()),
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SonomapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SonomapStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SonomapStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(SonomapStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(SonomapStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(SonomapStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(SonomapStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Opaque engine handle.
pub struct SonomapEngine {
    engine: Engine,
    framer: Framer,
    ids: Vec<CString>,
    last: Option<Snapshot>,
}

unsafe fn engine_arg<'a>(p: *mut SonomapEngine) -> Result<&'a mut SonomapEngine, Failure> {
    out_arg(p, "engine")
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sonomap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates an engine from session JSON, or from defaults when
/// `session_json` is NULL.
///
/// # Safety
/// `session_json` must be NULL or a NUL-terminated string; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_new(
    session_json: *const c_char,
    out: *mut *mut SonomapEngine,
) -> SonomapStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let config = if session_json.is_null() {
            SessionConfig::default()
        } else {
            SessionConfig::from_json(str_arg(session_json, "session_json")?)
                .map_err(|e| Failure::new(SonomapStatus::Config, e))?
        };
        let engine = Engine::new(&config)?;
        let framer = Framer::new(config.stream).map_err(|e| Failure::new(SonomapStatus::Config, e))?;
        let ids = engine
            .registry()
            .catalog()
            .descriptors()
            .iter()
            .map(|d| CString::new(d.id.as_str()).expect("signal ids have no NUL"))
            .collect();
        *out = Box::into_raw(Box::new(SonomapEngine {
            engine,
            framer,
            ids,
            last: None,
        }));
        Ok(())
    })
}

/// Releases an engine. NULL is ignored.
///
/// # Safety
/// `engine` must come from [`sonomap_engine_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_free(engine: *mut SonomapEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Feeds mono samples; every completed frame is processed. The number of
/// frames processed by this call is written to `frames` when non-NULL.
///
/// # Safety
/// `samples` must point to `len` readable values.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_push(
    engine: *mut SonomapEngine,
    samples: *const f32,
    len: usize,
    frames: *mut usize,
) -> SonomapStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        let input: Vec<f64> = slice_arg(samples, len, "samples")?.iter().map(|&s| s as f64).collect();
        let mut count = 0;
        for frame in e.framer.push(&input) {
            e.last = Some(e.engine.process_frame(&frame).snapshot);
            count += 1;
        }
        if let Some(frames) = frames.as_mut() {
            *frames = count;
        }
        Ok(())
    })
}

/// Number of registered signals.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_signal_count(engine: *const SonomapEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.ids.len())
}

/// Signal id at `index` in catalog order, or NULL when out of range. Owned
/// by the engine.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_signal_id(
    engine: *const SonomapEngine,
    index: usize,
) -> *const c_char {
    engine
        .as_ref()
        .and_then(|e| e.ids.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Current value of one signal.
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_value(
    engine: *const SonomapEngine,
    id: *const c_char,
    out: *mut f64,
) -> SonomapStatus {
    guard(|| {
        let e = engine
            .as_ref()
            .ok_or_else(|| Failure::new(SonomapStatus::NullPointer, "engine is null"))?;
        let id = str_arg(id, "id")?;
        let out = out_arg(out, "out")?;
        let handle = e
            .engine
            .registry()
            .lookup(id)
            .ok_or_else(|| Failure::new(SonomapStatus::UnknownSignal, format!("unknown signal `{id}`")))?;
        *out = e.engine.registry().value(handle);
        Ok(())
    })
}

/// Copies all values in catalog order into `out`, which must hold at least
/// `sonomap_engine_signal_count` entries.
///
/// # Safety
/// `out` must point to `capacity` writable values.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_values(
    engine: *const SonomapEngine,
    out: *mut f64,
    capacity: usize,
) -> SonomapStatus {
    guard(|| {
        let e = engine
            .as_ref()
            .ok_or_else(|| Failure::new(SonomapStatus::NullPointer, "engine is null"))?;
        let values = e.engine.registry().values();
        if capacity < values.len() {
            return Err(Failure::new(
                SonomapStatus::BufferTooSmall,
                format!("need {} values, got room for {capacity}", values.len()),
            ));
        }
        if out.is_null() {
            return Err(Failure::new(SonomapStatus::NullPointer, "out is null"));
        }
        std::slice::from_raw_parts_mut(out, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// Index of the last processed frame, or -1 before the first.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_frame_index(engine: *const SonomapEngine) -> i64 {
    engine
        .as_ref()
        .and_then(|e| e.last.as_ref())
        .map_or(-1, |s| s.frame_index as i64)
}

/// Mapping table revision.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_revision(engine: *const SonomapEngine) -> u64 {
    engine.as_ref().map_or(0, |e| e.engine.revision())
}

/// Sets an automatable; the clamped value is written to `accepted` when
/// non-NULL.
///
/// # Safety
/// `id` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_set_automatable(
    engine: *mut SonomapEngine,
    id: *const c_char,
    value: f64,
    accepted: *mut f64,
) -> SonomapStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        let id = str_arg(id, "id")?.to_string();
        if !value.is_finite() {
            return Err(Failure::new(SonomapStatus::InvalidArgument, "value must be finite"));
        }
        match e.engine.apply(Command::SetAutomatable(id, value))? {
            Outcome::AutomatableSet { value, .. } => {
                if let Some(accepted) = accepted.as_mut() {
                    *accepted = value;
                }
                Ok(())
            }
            other => unreachable!("unexpected outcome {other:?}"),
        }
    })
}

/// Adds a mapping from `n_sources` source ids to `destination`.
///
/// # Safety
/// `sources` must point to `n_sources` NUL-terminated strings; the other
/// pointers must be NUL-terminated strings or writable as documented.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_add_mapping(
    engine: *mut SonomapEngine,
    sources: *const *const c_char,
    n_sources: usize,
    destination: *const c_char,
    expression: *const c_char,
    id: *mut u64,
) -> SonomapStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        let sources = slice_arg(sources, n_sources, "sources")?
            .iter()
            .map(|&s| str_arg(s, "source"))
            .collect::<Result<Vec<_>, _>>()?;
        let request = MappingRequest::new(&sources, str_arg(destination, "destination")?, str_arg(expression, "expression")?);
        let out = out_arg(id, "id")?;
        let command = Command::add_mapping(&request)?;
        match e.engine.apply(command)? {
            Outcome::MappingAdded { id, .. } => {
                *out = id;
                Ok(())
            }
            other => unreachable!("unexpected outcome {other:?}"),
        }
    })
}

/// Removes mapping `id`.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sonomap_engine_remove_mapping(engine: *mut SonomapEngine, id: u64) -> SonomapStatus {
    guard(|| {
        engine_arg(engine)?.engine.apply(Command::RemoveMapping(id))?;
        Ok(())
    })
}

/// Parses and evaluates an expression over `n_inputs` variables.
///
/// # Safety
/// `text` must be a NUL-terminated string, `inputs` must point to
/// `n_inputs` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sonomap_expression_eval(
    text: *const c_char,
    inputs: *const f64,
    n_inputs: usize,
    out: *mut f64,
) -> SonomapStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let inputs = slice_arg(inputs, n_inputs, "inputs")?;
        let out = out_arg(out, "out")?;
        let expression = Expression::parse(text, n_inputs)
            .map_err(|e| Failure::new(SonomapStatus::Expression, e))?;
        *out = expression.eval(inputs);
        Ok(())
    })
}

/// Encodes an OSC message with one float32 argument. The packet length is
/// written to `len`; if it exceeds `capacity`, nothing is copied and
/// `BufferTooSmall` is returned.
///
/// # Safety
/// `address` must be a NUL-terminated string, `buf` must point to
/// `capacity` writable bytes and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sonomap_osc_encode_float(
    address: *const c_char,
    value: f32,
    buf: *mut u8,
    capacity: usize,
    len: *mut usize,
) -> SonomapStatus {
    guard(|| {
        let address = str_arg(address, "address")?;
        let len = out_arg(len, "len")?;
        let packet = OscMessage::new(address, vec![OscArg::Float(value)])
            .encode()
            .map_err(|e| Failure::new(SonomapStatus::InvalidArgument, e))?;
        *len = packet.len();
        if packet.len() > capacity {
            return Err(Failure::new(
                SonomapStatus::BufferTooSmall,
                format!("packet needs {} bytes", packet.len()),
            ));
        }
        if buf.is_null() {
            return Err(Failure::new(SonomapStatus::NullPointer, "buf is null"));
        }
        std::slice::from_raw_parts_mut(buf, packet.len()).copy_from_slice(&packet);
        Ok(())
    })
}
