//! Real-time run: paced ingest, engine thread, OSC publisher and UI server.
//!
//! ```text
//! ingest (clock) ─DropOldestQueue→ engine ─┬→ OSC thread → UDP
//!                                          └→ LiveState ← UI connections
//!            UI commands ─EngineHandle────→ engine (at frame boundaries)
//! ```

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam::channel;
use thiserror::Error;

use crate::engine::{Engine, EngineError, EngineHandle};
use crate::ingest::{frame_stream, AudioFrame, Clock, ClockMode, DropOldestQueue, FRAME_QUEUE_CAPACITY};
use crate::model::Snapshot;
use crate::session::SessionConfig;
use crate::transport::{LiveState, OscPublisher, TableView, UiOptions, UiServer};

/// Snapshots buffered for the OSC thread before the newest are dropped.
const OSC_BACKLOG: usize = 256;

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("port {addr} is in use")]
    PortInUse { addr: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Debug)]
pub struct LiveOptions {
    pub osc_dest: String,
    pub ui_addr: String,
    pub ui_rate_hz: f64,
    pub loop_input: bool,
    /// Default target of the UI `save` command.
    pub session_path: Option<PathBuf>,
}

impl LiveOptions {
    pub fn from_session(config: &SessionConfig) -> Self {
        LiveOptions {
            osc_dest: config.transports.osc_dest.clone(),
            ui_addr: format!("127.0.0.1:{}", config.transports.ui_port),
            ui_rate_hz: config.transports.ui_rate_hz,
            loop_input: false,
            session_path: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LiveReport {
    pub frames: u64,
    pub dropped_frames: u64,
    pub dropped_snapshots: u64,
    pub osc_send_errors: u64,
}

pub struct LiveRun {
    ui_addr: SocketAddr,
    osc_dest: SocketAddr,
    handle: EngineHandle,
    state: Arc<LiveState>,
    shutdown: Arc<AtomicBool>,
    finished: Arc<AtomicBool>,
    ingest: JoinHandle<u64>,
    engine: JoinHandle<(u64, u64)>,
    osc: JoinHandle<u64>,
    ui: JoinHandle<()>,
}

impl LiveRun {
    /// Binds the transports and starts processing `samples` in real time.
    pub fn start(
        config: &SessionConfig,
        samples: Vec<f64>,
        options: LiveOptions,
    ) -> Result<LiveRun, LiveError> {
        let mut engine = Engine::new(config)?;
        let stream = *engine.stream();
        let handle = engine.handle();
        let state = LiveState::new();
        let shutdown = Arc::new(AtomicBool::new(false));
        let finished = Arc::new(AtomicBool::new(false));

        let ui = UiServer::bind(
            &options.ui_addr,
            handle.clone(),
            state.clone(),
            UiOptions {
                rate_hz: options.ui_rate_hz,
                session: config.clone(),
                save_path: options.session_path.clone(),
            },
        )
        .map_err(|source| match source.kind() {
            std::io::ErrorKind::AddrInUse => LiveError::PortInUse {
                addr: options.ui_addr.clone(),
            },
            _ => LiveError::Io {
                context: format!("cannot bind UI port {}", options.ui_addr),
                source,
            },
        })?;
        let ui_addr = ui.local_addr();
        let mut publisher = OscPublisher::new(&options.osc_dest).map_err(|source| LiveError::Io {
            context: format!("cannot open OSC socket for {}", options.osc_dest),
            source,
        })?;
        let osc_dest = publisher.dest();

        let frames: Vec<AudioFrame> = frame_stream(&samples, &stream)
            .map_err(EngineError::from)?
            .collect();
        let queue = Arc::new(DropOldestQueue::<AudioFrame>::new(FRAME_QUEUE_CAPACITY));
        let input_done = Arc::new(AtomicBool::new(false));

        let ingest = {
            let queue = queue.clone();
            let shutdown = shutdown.clone();
            let input_done = input_done.clone();
            let loop_input = options.loop_input;
            spawn("ingest", move || {
                let clock = Clock::for_hop(ClockMode::Realtime, stream.hop_size, stream.sample_rate);
                let mut emitted = 0;
                for tick in clock {
                    if shutdown.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = tick.index as usize;
                    let source = if loop_input {
                        &frames[i % frames.len()]
                    } else if let Some(f) = frames.get(i) {
                        f
                    } else {
                        break;
                    };
                    queue.push(AudioFrame {
                        samples: source.samples.clone(),
                        frame_index: tick.index,
                        start_time: stream.frame_time(tick.index),
                    });
                    emitted += 1;
                }
                input_done.store(true, Ordering::Release);
                emitted
            })
        };

        let (osc_tx, osc_rx) = channel::bounded::<Snapshot>(OSC_BACKLOG);
        let engine_thread = {
            let state = state.clone();
            let shutdown = shutdown.clone();
            let finished = finished.clone();
            let queue = queue.clone();
            spawn("engine", move || {
                let mut processed = 0;
                let mut dropped_snapshots = 0;
                loop {
                    if shutdown.load(Ordering::Relaxed) {
                        break;
                    }
                    let Some(frame) = queue.pop() else {
                        if input_done.load(Ordering::Acquire) && queue.is_empty() {
                            break;
                        }
                        std::thread::sleep(Duration::from_micros(200));
                        continue;
                    };
                    let out = engine.process_frame(&frame);
                    processed += 1;
                    let table = || TableView {
                        revision: engine.revision(),
                        mappings: engine.mapping_requests(),
                    };
                    state.publish(out.snapshot.clone(), table);
                    if osc_tx.try_send(out.snapshot).is_err() {
                        dropped_snapshots += 1;
                    }
                }
                finished.store(true, Ordering::Release);
                (processed, dropped_snapshots)
            })
        };

        let osc = spawn("osc", move || {
            for snapshot in osc_rx {
                publisher.publish(&snapshot);
            }
            publisher.send_errors()
        });

        let ui = ui.spawn(shutdown.clone());
        log::info!("live: UI on ws://{ui_addr}, OSC to {osc_dest}");
        Ok(LiveRun {
            ui_addr,
            osc_dest,
            handle,
            state,
            shutdown,
            finished,
            ingest,
            engine: engine_thread,
            osc,
            ui,
        })
    }

    pub fn ui_addr(&self) -> SocketAddr {
        self.ui_addr
    }

    pub fn osc_dest(&self) -> SocketAddr {
        self.osc_dest
    }

    pub fn engine_handle(&self) -> EngineHandle {
        self.handle.clone()
    }

    pub fn state(&self) -> Arc<LiveState> {
        self.state.clone()
    }

    /// Setting this flag stops every thread.
    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    /// True once the input is exhausted (never with looping) or after shutdown.
    pub fn is_finished(&self) -> bool {
        self.finished.load(Ordering::Acquire)
    }

    /// Blocks until the input ends or the shutdown flag is set, then stops.
    pub fn wait(self) -> LiveReport {
        while !self.is_finished() && !self.shutdown.load(Ordering::Relaxed) {
            std::thread::sleep(Duration::from_millis(10));
        }
        self.stop()
    }

    pub fn stop(self) -> LiveReport {
        self.shutdown.store(true, Ordering::Relaxed);
        let emitted = self.ingest.join().expect("ingest thread");
        let (frames, dropped_snapshots) = self.engine.join().expect("engine thread");
        let osc_send_errors = self.osc.join().expect("osc thread");
        let _ = self.ui.join();
        LiveReport {
            frames,
            dropped_frames: emitted.saturating_sub(frames),
            dropped_snapshots,
            osc_send_errors,
        }
    }
}

fn spawn<T: Send + 'static>(name: &str, f: impl FnOnce() -> T + Send + 'static) -> JoinHandle<T> {
    std::thread::Builder::new()
        .name(name.into())
        .spawn(f)
        .expect("spawn thread")
}
