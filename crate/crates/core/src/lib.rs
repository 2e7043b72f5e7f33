//! Core of the re-rendering service: pixel primitives, detection hooks
//! (mask templates, text, trained classifiers), renderers, the intervention
//! registry with its sequential apply chain, view history and frame sources.

pub mod error;
pub mod font;
pub mod image;
pub mod intervention;
pub mod mask;
pub mod model;
pub mod render;
pub mod skin;
pub mod source;
pub mod text;
pub mod history;

pub use crate::error::{Error, Result};
pub use crate::image::{Frame, GrayImage, Region};
pub use crate::mask::{Detection, HookKind, MaskTemplate, MatchMode};

/// User names: 1 to 64 ASCII letters, digits, `_` or `-`.
pub fn is_valid_user(name: &str) -> bool {
    !name.is_empty() && name.len() <= 64 && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Milliseconds since the Unix epoch.
pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
