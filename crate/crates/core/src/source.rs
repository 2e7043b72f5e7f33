//! Frame sources: directory replay, synthetic skins and client push.
//!
//! Sources are pull-based. A consumer calls [`FrameSource::next_frame`] and
//! paces itself with [`FrameSource::interval`]; push sources have no pace and
//! hand out whatever the client uploaded most recently.

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Frame;
use crate::skin::{device_of, synth_skin_scrolled, ScrollScript};

/// Frames kept per push source before the oldest is dropped.
pub const PUSH_QUEUE_LIMIT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceConfig {
    Replay {
        directory: PathBuf,
        #[serde(rename = "loop", default)]
        looping: bool,
        fps: f64,
    },
    Synthetic {
        skin: String,
        #[serde(default)]
        scroll: ScrollScript,
        #[serde(default)]
        seed: u64,
        fps: f64,
    },
    Push {
        token: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub source_id: String,
    pub config: SourceConfig,
    pub registered_user: String,
}

impl SourceDescriptor {
    pub fn kind(&self) -> &'static str {
        match self.config {
            SourceConfig::Replay { .. } => "replay",
            SourceConfig::Synthetic { .. } => "synthetic",
            SourceConfig::Push { .. } => "push",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !is_slug(&self.source_id) {
            return Err(Error::invalid(format!("source id {:?} must match [a-z0-9-]+", self.source_id)));
        }
        match &self.config {
            SourceConfig::Replay { directory, fps, .. } => {
                check_fps(*fps)?;
                if !directory.is_dir() {
                    return Err(Error::NotFound(format!("replay directory {}", directory.display())));
                }
            }
            SourceConfig::Synthetic { skin, fps, .. } => {
                check_fps(*fps)?;
                device_of(skin)?;
            }
            SourceConfig::Push { token } => {
                if token.is_empty() {
                    return Err(Error::invalid("push token must not be empty"));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn is_slug(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

fn check_fps(fps: f64) -> Result<()> {
    if fps.is_finite() && fps > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("fps must be positive, got {fps}")))
    }
}

pub trait FrameSource: Send {
    /// `Ok(None)` is end of stream for replay sources and "nothing new yet"
    /// for push sources.
    fn next_frame(&mut self) -> Result<Option<Frame>>;

    /// Target spacing between frames; `None` when the producer sets the pace.
    fn interval(&self) -> Option<Duration>;
}

/// Opens a source. Paced sources number their frames from `seq_base` and
/// stamp the first one `base_ms`, later ones one frame interval apart. Push
/// sources keep the client's numbering.
pub fn open(desc: &SourceDescriptor, hub: &PushHub, base_ms: u64, seq_base: u64) -> Result<Box<dyn FrameSource>> {
    desc.validate()?;
    Ok(match &desc.config {
        SourceConfig::Replay { directory, looping, fps } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(directory)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
                .collect();
            files.sort();
            Box::new(Replay {
                source_id: desc.source_id.clone(),
                files,
                looping: *looping,
                clock: Clock::new(base_ms, *fps),
                seq_base,
                next: 0,
            })
        }
        SourceConfig::Synthetic { skin, scroll, seed, fps } => Box::new(Synthetic {
            source_id: desc.source_id.clone(),
            skin: skin.clone(),
            scroll: scroll.clone(),
            seed: *seed,
            clock: Clock::new(base_ms, *fps),
            seq_base,
            t: 0,
        }),
        SourceConfig::Push { token } => Box::new(PushSource(hub.channel(&desc.registered_user, &desc.source_id, token))),
    })
}

struct Clock {
    base_ms: u64,
    fps: f64,
}

impl Clock {
    fn new(base_ms: u64, fps: f64) -> Self {
        Clock { base_ms, fps }
    }

    fn at(&self, seq: u64) -> u64 {
        self.base_ms + (seq as f64 * 1000.0 / self.fps).round() as u64
    }

    fn interval(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.fps)
    }
}

struct Replay {
    source_id: String,
    files: Vec<PathBuf>,
    looping: bool,
    clock: Clock,
    seq_base: u64,
    next: u64,
}

impl FrameSource for Replay {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let n = self.files.len() as u64;
        if n == 0 || (!self.looping && self.next >= n) {
            return Ok(None);
        }
        let i = self.next;
        let frame = Frame::read_png(&self.files[(i % n) as usize])?;
        self.next += 1;
        Ok(Some(frame.with_meta(self.source_id.clone(), self.seq_base + i, self.clock.at(i))))
    }

    fn interval(&self) -> Option<Duration> {
        Some(self.clock.interval())
    }
}

struct Synthetic {
    source_id: String,
    skin: String,
    scroll: ScrollScript,
    seed: u64,
    clock: Clock,
    seq_base: u64,
    t: u64,
}

impl FrameSource for Synthetic {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let t = self.t;
        let s = synth_skin_scrolled(&self.skin, self.seed, t, &self.scroll)?;
        self.t += 1;
        Ok(Some(s.frame.with_meta(self.source_id.clone(), self.seq_base + t, self.clock.at(t))))
    }

    fn interval(&self) -> Option<Duration> {
        Some(self.clock.interval())
    }
}

struct PushSource(Arc<PushChannel>);

impl FrameSource for PushSource {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        Ok(self.0.pop())
    }

    fn interval(&self) -> Option<Duration> {
        None
    }
}

/// Bounded latest-wins queue fed by client uploads.
pub struct PushChannel {
    token: String,
    state: Mutex<PushState>,
}

#[derive(Default)]
struct PushState {
    queue: VecDeque<Frame>,
    last_seq: Option<u64>,
    last_ts: u64,
    dropped: u64,
}

impl PushChannel {
    pub fn new(token: impl Into<String>) -> Self {
        PushChannel { token: token.into(), state: Mutex::new(PushState::default()) }
    }

    pub fn check_token(&self, presented: &str) -> Result<()> {
        let a = self.token.as_bytes();
        let b = presented.as_bytes();
        let same = a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0;
        if same {
            Ok(())
        } else {
            Err(Error::PermissionDenied("bad push token".into()))
        }
    }

    /// Enqueues a frame whose `seq_no` must exceed every earlier one and whose
    /// timestamp must not go backwards. Returns the number of frames dropped
    /// to make room.
    pub fn push(&self, frame: Frame) -> Result<usize> {
        let mut st = self.state.lock().expect("push state lock");
        if st.last_seq.is_some_and(|s| frame.seq_no <= s) {
            return Err(Error::Conflict(format!(
                "seq {} not after {}",
                frame.seq_no,
                st.last_seq.unwrap_or_default()
            )));
        }
        if st.last_seq.is_some() && frame.timestamp_ms < st.last_ts {
            return Err(Error::Conflict(format!("timestamp {} before {}", frame.timestamp_ms, st.last_ts)));
        }
        st.last_seq = Some(frame.seq_no);
        st.last_ts = frame.timestamp_ms;
        st.queue.push_back(frame);
        let mut dropped = 0;
        while st.queue.len() > PUSH_QUEUE_LIMIT {
            st.queue.pop_front();
            dropped += 1;
        }
        st.dropped += dropped as u64;
        Ok(dropped)
    }

    pub fn pop(&self) -> Option<Frame> {
        self.state.lock().expect("push state lock").queue.pop_front()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("push state lock").queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.state.lock().expect("push state lock").dropped
    }
}

/// Push channels keyed by (user, source id); a channel outlives the sessions
/// reading from it.
#[derive(Default)]
pub struct PushHub {
    channels: Mutex<HashMap<(String, String), Arc<PushChannel>>>,
}

impl PushHub {
    pub fn new() -> Self {
        Self::default()
    }

    /// The channel for a push source, created on first use. A changed token
    /// replaces the channel.
    pub fn channel(&self, user: &str, source_id: &str, token: &str) -> Arc<PushChannel> {
        let mut map = self.channels.lock().expect("push hub lock");
        let key = (user.to_string(), source_id.to_string());
        match map.get(&key) {
            Some(c) if c.token == token => c.clone(),
            _ => {
                let c = Arc::new(PushChannel::new(token));
                map.insert(key, c.clone());
                c
            }
        }
    }
}
