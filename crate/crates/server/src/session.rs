//! Viewing sessions: one pipeline thread per session pulls frames from the
//! source, records the untouched frame to history, runs the activation chain
//! and fans JPEG frames out to every stream viewer.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use bytes::Bytes;
use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;
use rerender_core::intervention::{ActivationSet, ChainRunner};
use rerender_core::source::{self, SourceDescriptor};
use rerender_core::Frame;
use tokio::sync::broadcast;

use crate::AppState;

pub const BOUNDARY: &str = "frame";

/// Encoded frames buffered per viewer; a slow viewer skips ahead.
const FANOUT_CAPACITY: usize = 2;
const IDLE_POLL: Duration = Duration::from_millis(20);
const PUSH_POLL: Duration = Duration::from_millis(5);

pub struct Session {
    pub id: String,
    pub user: String,
    pub source: SourceDescriptor,
    activation: RwLock<ActivationSet>,
    tx: Mutex<Option<broadcast::Sender<Bytes>>>,
    started: AtomicBool,
    stopped: AtomicBool,
}

impl Session {
    pub fn new(id: String, user: String, source: SourceDescriptor, activation: ActivationSet) -> Arc<Self> {
        let (tx, _) = broadcast::channel(FANOUT_CAPACITY);
        Arc::new(Session {
            id,
            user,
            source,
            activation: RwLock::new(activation),
            tx: Mutex::new(Some(tx)),
            started: AtomicBool::new(false),
            stopped: AtomicBool::new(false),
        })
    }

    pub fn activation(&self) -> ActivationSet {
        self.activation.read().expect("activation lock").clone()
    }

    /// Takes effect from the next frame the pipeline pulls.
    pub fn set_activation(&self, set: ActivationSet) {
        *self.activation.write().expect("activation lock") = set;
    }

    /// A receiver of encoded frames, starting the pipeline on first use.
    /// `None` once the source has ended or the session was stopped.
    pub fn subscribe(self: &Arc<Self>, state: &Arc<AppState>) -> Option<broadcast::Receiver<Bytes>> {
        let tx = self.tx.lock().expect("fanout lock").clone()?;
        let rx = tx.subscribe();
        if !self.started.swap(true, Ordering::SeqCst) {
            let (state, session) = (state.clone(), self.clone());
            let spawned = std::thread::Builder::new()
                .name(format!("pipeline-{}", self.id))
                .spawn(move || run_pipeline(&state, &session, tx));
            if let Err(e) = spawned {
                tracing::error!(session = %self.id, error = %e, "cannot start pipeline");
                self.close();
                return None;
            }
        }
        Some(rx)
    }

    pub fn stop(&self) {
        self.stopped.store(true, Ordering::SeqCst);
        self.close();
    }

    fn close(&self) {
        self.tx.lock().expect("fanout lock").take();
    }
}

fn run_pipeline(state: &AppState, session: &Session, tx: broadcast::Sender<Bytes>) {
    let seq_base = state.history.lock().expect("history lock").next_seq(&session.user, &session.source.source_id);
    let mut src = match source::open(&session.source, &state.hub, rerender_core::now_ms(), seq_base) {
        Ok(s) => s,
        Err(e) => {
            tracing::warn!(session = %session.id, error = %e, "cannot open source");
            session.close();
            return;
        }
    };
    let interval = src.interval();
    let mut runner = ChainRunner::new();
    let mut deadline = Instant::now();
    tracing::info!(session = %session.id, source = %session.source.source_id, "pipeline started");
    while !session.stopped.load(Ordering::SeqCst) {
        if tx.receiver_count() == 0 {
            std::thread::sleep(IDLE_POLL);
            deadline = Instant::now();
            continue;
        }
        let frame = match src.next_frame() {
            Ok(Some(f)) => f,
            Ok(None) if interval.is_none() => {
                std::thread::sleep(PUSH_POLL);
                continue;
            }
            Ok(None) => break,
            Err(e) => {
                tracing::warn!(session = %session.id, error = %e, "source failed");
                break;
            }
        };
        let jpeg = process(state, session, &mut runner, &frame);
        match jpeg {
            Ok(bytes) => {
                let _ = tx.send(mjpeg_part(&bytes));
            }
            Err(e) => tracing::warn!(session = %session.id, error = %e, "jpeg encoding failed"),
        }
        if let Some(iv) = interval {
            deadline += iv;
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            } else {
                deadline = now;
            }
        }
    }
    session.close();
    tracing::info!(session = %session.id, "pipeline finished");
}

fn process(state: &AppState, session: &Session, runner: &mut ChainRunner, frame: &Frame) -> image::ImageResult<Vec<u8>> {
    let recorded = state.history.lock().expect("history lock").record(&session.user, frame, state.config.capture_fps);
    if let Err(e) = recorded {
        tracing::warn!(session = %session.id, seq = frame.seq_no, error = %e, "history record failed");
    }
    let active = session.activation();
    let out = {
        let reg = state.registry.read().expect("registry lock");
        runner.apply(frame, &active, &reg)
    };
    encode_jpeg(&out, state.config.jpeg_quality)
}

pub fn encode_jpeg(f: &Frame, quality: u8) -> image::ImageResult<Vec<u8>> {
    let mut out = Vec::new();
    JpegEncoder::new_with_quality(&mut out, quality).encode(&f.pixels, f.width, f.height, ExtendedColorType::Rgb8)?;
    Ok(out)
}

/// One `multipart/x-mixed-replace` part.
pub fn mjpeg_part(jpeg: &[u8]) -> Bytes {
    let mut part = format!("--{BOUNDARY}\r\nContent-Type: image/jpeg\r\nContent-Length: {}\r\n\r\n", jpeg.len()).into_bytes();
    part.extend_from_slice(jpeg);
    part.extend_from_slice(b"\r\n");
    Bytes::from(part)
}
