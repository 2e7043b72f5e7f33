//! Deterministic synthetic GUI skins with ground-truth element regions.
//!
//! Four skins share one element set. The `mobile` and `desktop` skins lay the
//! elements out differently (the stories bar exists only on mobile). The `a`
//! and `b` themes differ in palette and element scale (`b` is 10% larger).
//! The seed only changes the feed post content, never the element art, and
//! `t` only moves the scrollable feed.

use ::image::imageops::{self, FilterType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::font::{draw_text, text_width};
use crate::image::{Frame, Region};

pub const SKIN_IDS: [&str; 4] = ["mobile-a", "mobile-b", "desktop-a", "desktop-b"];
pub const SKIN_WIDTH: u32 = 640;
pub const SKIN_HEIGHT: u32 = 480;

pub const ELEMENTS: [&str; 10] = [
    "stories-bar",
    "metrics-bar",
    "like-button",
    "share-button",
    "follow-button",
    "search-bar",
    "notification-badge",
    "ad-banner",
    "recommended-items",
    "trending-panel",
];

/// Elements drawn only on mobile skins.
pub const MOBILE_ONLY: [&str; 1] = ["stories-bar"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Device {
    Mobile,
    Desktop,
}

#[derive(Debug, Clone, Copy)]
struct Theme {
    scale: f64,
    page: [u8; 3],
    panel: [u8; 3],
    ink: [u8; 3],
    muted: [u8; 3],
    accent: [u8; 3],
    accent2: [u8; 3],
    warn: [u8; 3],
}

const THEME_A: Theme = Theme {
    scale: 1.0,
    page: [236, 238, 242],
    panel: [255, 255, 255],
    ink: [24, 26, 32],
    muted: [130, 136, 148],
    accent: [40, 110, 220],
    accent2: [230, 90, 40],
    warn: [220, 30, 60],
};

const THEME_B: Theme = Theme {
    scale: 1.1,
    page: [28, 30, 36],
    panel: [48, 52, 62],
    ink: [236, 236, 240],
    muted: [150, 156, 170],
    accent: [60, 190, 140],
    accent2: [200, 160, 40],
    warn: [250, 80, 120],
};

/// Vertical scroll of the feed as linear keyframes `(t, offset_px)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrollScript {
    pub keyframes: Vec<(u64, u32)>,
}

impl ScrollScript {
    /// Offset at frame `t`: linear between keyframes, held outside them.
    pub fn offset_at(&self, t: u64) -> u32 {
        let mut keys = self.keyframes.clone();
        keys.sort_by_key(|k| k.0);
        match keys.as_slice() {
            [] => 0,
            [first, ..] if t <= first.0 => first.1,
            [.., last] if t >= last.0 => last.1,
            _ => {
                let i = keys.iter().position(|k| k.0 > t).expect("t is inside the keyframe range");
                let (t0, o0) = keys[i - 1];
                let (t1, o1) = keys[i];
                let f = (t - t0) as f64 / (t1 - t0) as f64;
                (o0 as f64 + f * (o1 as f64 - o0 as f64)).round() as u32
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementTruth {
    pub element: String,
    /// Visible part of the element.
    pub region: Region,
    /// False when scrolling hid part of the element.
    pub complete: bool,
}

#[derive(Debug, Clone)]
pub struct SkinFrame {
    pub frame: Frame,
    pub elements: Vec<ElementTruth>,
}

impl SkinFrame {
    pub fn truth(&self, element: &str) -> Option<&ElementTruth> {
        self.elements.iter().find(|e| e.element == element)
    }
}

pub fn device_of(skin_id: &str) -> Result<Device> {
    match skin_id {
        "mobile-a" | "mobile-b" => Ok(Device::Mobile),
        "desktop-a" | "desktop-b" => Ok(Device::Desktop),
        other => Err(Error::invalid(format!("unknown skin {other:?}; expected one of {SKIN_IDS:?}"))),
    }
}

/// Whether `element` is drawn on `skin_id`.
pub fn appears_on(skin_id: &str, element: &str) -> Result<bool> {
    let device = device_of(skin_id)?;
    Ok(ELEMENTS.contains(&element) && (device == Device::Mobile || !MOBILE_ONLY.contains(&element)))
}

pub fn synth_skin(skin_id: &str, seed: u64, t: u64) -> Result<SkinFrame> {
    synth_skin_scrolled(skin_id, seed, t, &ScrollScript::default())
}

pub fn synth_skin_scrolled(skin_id: &str, seed: u64, t: u64, scroll: &ScrollScript) -> Result<SkinFrame> {
    let device = device_of(skin_id)?;
    let theme = if skin_id.ends_with("-a") { THEME_A } else { THEME_B };
    let mut canvas = Canvas::new(theme.page);
    let offset = scroll.offset_at(t) as i64;
    match device {
        Device::Mobile => layout_mobile(&mut canvas, &theme, seed, offset),
        Device::Desktop => layout_desktop(&mut canvas, &theme, seed, offset),
    }
    Ok(SkinFrame { frame: canvas.frame.with_meta(skin_id, t, 0), elements: canvas.truth })
}

/// One element sprite in theme `a` or `b` (already scaled).
pub fn element_sprite(skin_id: &str, element: &str) -> Result<Frame> {
    device_of(skin_id)?;
    let theme = if skin_id.ends_with("-a") { THEME_A } else { THEME_B };
    sprite(&theme, element).ok_or_else(|| Error::invalid(format!("unknown element {element:?}")))
}

struct Canvas {
    frame: Frame,
    truth: Vec<ElementTruth>,
}

impl Canvas {
    fn new(page: [u8; 3]) -> Self {
        Canvas { frame: Frame::filled(SKIN_WIDTH, SKIN_HEIGHT, page), truth: Vec::new() }
    }

    /// Blits `src` at (x, y) keeping only rows at or below `clip_top`.
    fn blit(&mut self, src: &Frame, x: i64, y: i64, clip_top: i64) -> Option<Region> {
        let x0 = x.max(0);
        let y0 = y.max(clip_top).max(0);
        let x1 = (x + src.width as i64).min(self.frame.width as i64);
        let y1 = (y + src.height as i64).min(self.frame.height as i64);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        for ty in y0..y1 {
            for tx in x0..x1 {
                let px = src.pixel((tx - x) as u32, (ty - y) as u32);
                self.frame.set_pixel(tx as u32, ty as u32, px);
            }
        }
        Some(Region { x: x0 as u32, y: y0 as u32, w: (x1 - x0) as u32, h: (y1 - y0) as u32 })
    }

    fn element(&mut self, theme: &Theme, name: &str, x: i64, y: i64, clip_top: i64) -> (u32, u32) {
        let s = sprite(theme, name).expect("layout only names known elements");
        let dims = (s.width, s.height);
        if let Some(region) = self.blit(&s, x, y, clip_top) {
            let complete = region.w == s.width && region.h == s.height;
            self.truth.push(ElementTruth { element: name.to_string(), region, complete });
        }
        dims
    }
}

fn sized(theme: &Theme, name: &str) -> (u32, u32) {
    let s = sprite(theme, name).expect("known element");
    (s.width, s.height)
}

const GAP: i64 = 8;

fn layout_mobile(c: &mut Canvas, theme: &Theme, seed: u64, offset: i64) {
    let col_w = (320.0 * theme.scale).round() as i64;
    let col_x = (SKIN_WIDTH as i64 - col_w) / 2;
    let header_h = (34.0 * theme.scale).round() as i64;
    fill(&mut c.frame, col_x, 0, col_w, SKIN_HEIGHT as i64, theme.panel);
    fill(&mut c.frame, col_x, header_h - 1, col_w, 1, theme.muted);

    let (_, sh) = sized(theme, "search-bar");
    c.element(theme, "search-bar", col_x + GAP, (header_h - sh as i64) / 2, 0);
    let (bw, bh) = sized(theme, "notification-badge");
    c.element(theme, "notification-badge", col_x + col_w - GAP - bw as i64, (header_h - bh as i64) / 2, 0);

    let clip = header_h;
    let mut y = header_h + GAP - offset;
    let x = col_x + GAP;
    let (_, h) = c.element(theme, "stories-bar", x, y, clip);
    y += h as i64 + GAP;
    let post_h = (60.0 * theme.scale).round() as i64;
    feed_post(&mut c.frame, theme, seed, x, y, col_w - 2 * GAP, post_h, clip);
    y += post_h + GAP;
    let (_, h) = c.element(theme, "metrics-bar", x, y, clip);
    y += h as i64 + GAP;
    let mut bx = x;
    let mut row_h = 0;
    for name in ["like-button", "share-button", "follow-button"] {
        let (w, h) = c.element(theme, name, bx, y, clip);
        bx += w as i64 + GAP;
        row_h = row_h.max(h as i64);
    }
    y += row_h + GAP;
    let (_, h) = c.element(theme, "ad-banner", x, y, clip);
    y += h as i64 + GAP;
    let (w, _) = c.element(theme, "recommended-items", x, y, clip);
    c.element(theme, "trending-panel", x + w as i64 + GAP, y, clip);
}

fn layout_desktop(c: &mut Canvas, theme: &Theme, seed: u64, offset: i64) {
    let header_h = (40.0 * theme.scale).round() as i64;
    fill(&mut c.frame, 0, 0, SKIN_WIDTH as i64, header_h, theme.panel);
    fill(&mut c.frame, 0, header_h, SKIN_WIDTH as i64, 1, theme.muted);
    let (_, sh) = sized(theme, "search-bar");
    c.element(theme, "search-bar", 180, (header_h - sh as i64) / 2, 0);
    let (bw, bh) = sized(theme, "notification-badge");
    c.element(theme, "notification-badge", SKIN_WIDTH as i64 - 16 - bw as i64, (header_h - bh as i64) / 2, 0);

    let clip = header_h + 1;
    // Left rail.
    let mut y = clip + GAP - offset;
    let (_, h) = c.element(theme, "follow-button", 12, y, clip);
    y += h as i64 + GAP;
    c.element(theme, "trending-panel", 12, y, clip);

    // Centre feed.
    let x = 160;
    let feed_w = (300.0 * theme.scale).round() as i64;
    let mut y = clip + GAP - offset;
    let post_h = (90.0 * theme.scale).round() as i64;
    feed_post(&mut c.frame, theme, seed, x, y, feed_w, post_h, clip);
    y += post_h + GAP;
    let (_, h) = c.element(theme, "metrics-bar", x, y, clip);
    y += h as i64 + GAP;
    let mut bx = x;
    let mut row_h = 0;
    for name in ["like-button", "share-button"] {
        let (w, h) = c.element(theme, name, bx, y, clip);
        bx += w as i64 + GAP;
        row_h = row_h.max(h as i64);
    }
    y += row_h + GAP;
    c.element(theme, "ad-banner", x, y, clip);

    // Right column, held below the header.
    let (rw, _) = sized(theme, "recommended-items");
    c.element(theme, "recommended-items", SKIN_WIDTH as i64 - 12 - rw as i64, clip + GAP - offset / 2, clip);
}

/// Seeded filler post: random blocks and words, clipped above `clip_top`.
#[allow(clippy::too_many_arguments)]
fn feed_post(f: &mut Frame, theme: &Theme, seed: u64, x: i64, y: i64, w: i64, h: i64, clip_top: i64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut post = Frame::filled(w.max(1) as u32, h.max(1) as u32, theme.page);
    for _ in 0..6 {
        let bw = rng.random_range(10..(w / 2).max(11));
        let bh = rng.random_range(6..(h / 2).max(7));
        let bx = rng.random_range(0..(w - bw).max(1));
        let by = rng.random_range(0..(h - bh).max(1));
        let shade: [u8; 3] = [rng.random_range(90..200), rng.random_range(90..200), rng.random_range(90..200)];
        fill(&mut post, bx, by, bw, bh, shade);
    }
    const WORDS: [&str; 8] = ["sunset", "lunch", "weekend", "city", "friends", "garden", "trip", "coffee"];
    let caption = format!("{} {}", WORDS[rng.random_range(0..WORDS.len())], WORDS[rng.random_range(0..WORDS.len())]);
    draw_text(&mut post, 4, (h - 12).max(0) as u32, &caption, 1, theme.ink);
    let mut c = Canvas { frame: std::mem::replace(f, Frame::filled(1, 1, [0, 0, 0])), truth: Vec::new() };
    c.blit(&post, x, y, clip_top);
    *f = c.frame;
}

/// Fills a rectangle given in signed coordinates, clipped to the frame.
fn fill(f: &mut Frame, x: i64, y: i64, w: i64, h: i64, rgb: [u8; 3]) {
    let x0 = x.max(0);
    let y0 = y.max(0);
    let x1 = (x + w).min(f.width as i64);
    let y1 = (y + h).min(f.height as i64);
    if x0 < x1 && y0 < y1 {
        f.fill_region(&Region { x: x0 as u32, y: y0 as u32, w: (x1 - x0) as u32, h: (y1 - y0) as u32 }, rgb);
    }
}

fn disc(f: &mut Frame, cx: f64, cy: f64, r: f64, rgb: [u8; 3]) {
    for y in 0..f.height {
        for x in 0..f.width {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= r * r {
                f.set_pixel(x, y, rgb);
            }
        }
    }
}

fn rounded(f: &mut Frame, x: i64, y: i64, w: i64, h: i64, r: i64, rgb: [u8; 3]) {
    for py in y.max(0)..(y + h).min(f.height as i64) {
        for px in x.max(0)..(x + w).min(f.width as i64) {
            let cx = px.clamp(x + r, x + w - 1 - r);
            let cy = py.clamp(y + r, y + h - 1 - r);
            let (dx, dy) = (px - cx, py - cy);
            if dx * dx + dy * dy <= r * r {
                f.set_pixel(px as u32, py as u32, rgb);
            }
        }
    }
}

fn outline(f: &mut Frame, w: i64, h: i64, rgb: [u8; 3]) {
    fill(f, 0, 0, w, 1, rgb);
    fill(f, 0, h - 1, w, 1, rgb);
    fill(f, 0, 0, 1, h, rgb);
    fill(f, w - 1, 0, 1, h, rgb);
}

fn label(f: &mut Frame, x: u32, y: u32, text: &str, scale: u32, rgb: [u8; 3]) {
    draw_text(f, x, y, text, scale, rgb);
}

fn heart(f: &mut Frame, x: f64, y: f64, s: f64, rgb: [u8; 3]) {
    disc(f, x + s * 0.3, y + s * 0.35, s * 0.27, rgb);
    disc(f, x + s * 0.7, y + s * 0.35, s * 0.27, rgb);
    for py in 0..f.height {
        for px in 0..f.width {
            let (u, v) = ((px as f64 + 0.5 - x) / s, (py as f64 + 0.5 - y) / s);
            if (0.35..=0.95).contains(&v) && (u - 0.5).abs() <= 0.47 * (0.95 - v) / 0.6 {
                f.set_pixel(px, py, rgb);
            }
        }
    }
}

/// Renders the element at theme-`a` geometry, then scales to the theme.
fn sprite(theme: &Theme, name: &str) -> Option<Frame> {
    let base = base_sprite(theme, name)?;
    if theme.scale == 1.0 {
        return Some(base);
    }
    let w = (base.width as f64 * theme.scale).round() as u32;
    let h = (base.height as f64 * theme.scale).round() as u32;
    let resized = imageops::resize(&base.to_rgb_image(), w, h, FilterType::Triangle);
    Some(Frame::new(w, h, resized.into_raw(), 0, "", 0).expect("resize keeps buffer length"))
}

fn base_sprite(t: &Theme, name: &str) -> Option<Frame> {
    let f = match name {
        "stories-bar" => {
            let mut f = Frame::filled(280, 52, t.panel);
            let ring = [t.accent2, t.warn, t.accent, t.accent2, t.warn];
            for (i, initial) in ["A", "J", "M", "R", "S"].iter().enumerate() {
                let cx = 28.0 + i as f64 * 56.0;
                disc(&mut f, cx, 22.0, 20.0, ring[i]);
                disc(&mut f, cx, 22.0, 16.0, t.panel);
                disc(&mut f, cx, 22.0, 13.0, t.muted);
                label(&mut f, cx as u32 - 5, 15, initial, 2, t.panel);
                fill(&mut f, cx as i64 - 12, 46, 24, 3, t.muted);
            }
            f
        }
        "metrics-bar" => {
            let mut f = Frame::filled(220, 20, t.panel);
            heart(&mut f, 2.0, 3.0, 14.0, t.warn);
            label(&mut f, 22, 6, "1.2k likes  87 comments", 1, t.ink);
            fill(&mut f, 0, 19, 220, 1, t.muted);
            f
        }
        "like-button" => {
            let mut f = Frame::filled(64, 26, t.panel);
            rounded(&mut f, 0, 0, 64, 26, 8, t.warn);
            heart(&mut f, 6.0, 6.0, 14.0, t.panel);
            label(&mut f, 26, 6, "Like", 1, t.panel);
            f
        }
        "share-button" => {
            let mut f = Frame::filled(72, 26, t.panel);
            rounded(&mut f, 0, 0, 72, 26, 4, t.accent);
            fill(&mut f, 6, 12, 12, 3, t.panel);
            for k in 0..6 {
                fill(&mut f, 12 + k, 7 + k, 2, 13 - 2 * k, t.panel);
            }
            label(&mut f, 24, 9, "Share", 1, t.panel);
            f
        }
        "follow-button" => {
            let mut f = Frame::filled(80, 26, t.panel);
            rounded(&mut f, 0, 0, 80, 26, 12, t.accent2);
            rounded(&mut f, 2, 2, 76, 22, 10, t.panel);
            label(&mut f, 10, 6, "+", 2, t.accent2);
            label(&mut f, 28, 9, "Follow", 1, t.accent2);
            f
        }
        "search-bar" => {
            let mut f = Frame::filled(200, 24, t.panel);
            rounded(&mut f, 0, 0, 200, 24, 6, t.muted);
            rounded(&mut f, 1, 1, 198, 22, 5, t.page);
            disc(&mut f, 12.0, 11.0, 6.0, t.ink);
            disc(&mut f, 12.0, 11.0, 4.0, t.page);
            fill(&mut f, 16, 15, 2, 5, t.ink);
            fill(&mut f, 17, 17, 2, 4, t.ink);
            label(&mut f, 26, 8, "Search people, tags", 1, t.muted);
            f
        }
        "notification-badge" => {
            let mut f = Frame::filled(24, 24, t.panel);
            disc(&mut f, 12.0, 12.0, 11.5, t.warn);
            let w = text_width("9+", 1) as i64;
            label(&mut f, ((24 - w) / 2) as u32, 8, "9+", 1, t.panel);
            f
        }
        "ad-banner" => {
            let mut f = Frame::filled(280, 44, t.accent2);
            for k in 0..14 {
                fill(&mut f, 200 + k * 6, 0, 3, 44, t.warn);
            }
            fill(&mut f, 4, 4, 56, 12, t.ink);
            label(&mut f, 6, 6, "Sponsored", 1, t.accent2);
            label(&mut f, 6, 22, "Sale: 50 off", 2, t.ink);
            outline(&mut f, 280, 44, t.ink);
            f
        }
        "recommended-items" => {
            let mut f = Frame::filled(180, 72, t.panel);
            outline(&mut f, 180, 72, t.muted);
            label(&mut f, 6, 5, "Suggested for you", 1, t.ink);
            let tiles = [t.accent, t.accent2, t.warn];
            for (i, c) in tiles.iter().enumerate() {
                let x = 8 + i as i64 * 56;
                fill(&mut f, x, 20, 50, 34, *c);
                fill(&mut f, x + 8, 28, 34, 6, t.panel);
                fill(&mut f, x, 58, 36, 6, t.muted);
            }
            f
        }
        "trending-panel" => {
            let mut f = Frame::filled(124, 72, t.panel);
            outline(&mut f, 124, 72, t.muted);
            fill(&mut f, 1, 1, 122, 14, t.accent);
            label(&mut f, 6, 4, "Trending", 1, t.panel);
            for (i, tag) in ["rust", "summer", "music"].iter().enumerate() {
                let y = 22 + i as u32 * 16;
                label(&mut f, 8, y, &format!("{}. {tag}", i + 1), 1, t.ink);
                fill(&mut f, 96, y as i64, 20, 7, t.muted);
            }
            f
        }
        _ => return None,
    };
    Some(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_skin_rejected() {
        assert!(matches!(synth_skin("tablet-a", 1, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn deterministic_and_seeded() {
        let a = synth_skin("mobile-a", 7, 3).unwrap();
        let b = synth_skin("mobile-a", 7, 3).unwrap();
        assert_eq!(a.frame, b.frame);
        let c = synth_skin("mobile-a", 8, 3).unwrap();
        assert_ne!(a.frame.pixels, c.frame.pixels);
        assert_eq!(a.elements, c.elements);
    }

    #[test]
    fn element_sets() {
        for skin in SKIN_IDS {
            let s = synth_skin(skin, 1, 0).unwrap();
            for e in ELEMENTS {
                let present = s.truth(e).is_some();
                assert_eq!(present, appears_on(skin, e).unwrap(), "{skin} {e}");
                if present {
                    assert!(s.truth(e).unwrap().complete, "{skin} {e} clipped at t=0");
                }
            }
            for (i, p) in s.elements.iter().enumerate() {
                for q in &s.elements[i + 1..] {
                    assert!(p.region.intersect(&q.region).is_none(), "{skin}: {} overlaps {}", p.element, q.element);
                }
            }
        }
        assert!(synth_skin("desktop-a", 3, 9).unwrap().truth("stories-bar").is_none());
    }

    #[test]
    fn themes_scale_and_recolor() {
        let a = synth_skin("mobile-a", 1, 0).unwrap();
        let b = synth_skin("mobile-b", 1, 0).unwrap();
        let ra = a.truth("metrics-bar").unwrap().region;
        let rb = b.truth("metrics-bar").unwrap().region;
        assert_eq!(rb.w, (ra.w as f64 * 1.1).round() as u32);
        assert_eq!(rb.h, (ra.h as f64 * 1.1).round() as u32);
        assert_ne!(a.frame.pixel(ra.x, ra.y), b.frame.pixel(rb.x, rb.y));
        let da = synth_skin("desktop-a", 1, 0).unwrap();
        let sa = da.truth("metrics-bar").unwrap().region;
        assert_eq!(da.frame.crop(&sa).unwrap().pixels, a.frame.crop(&ra).unwrap().pixels);
    }

    #[test]
    fn scroll_moves_feed_only() {
        let script = ScrollScript { keyframes: vec![(0, 0), (10, 40)] };
        assert_eq!(script.offset_at(5), 20);
        assert_eq!(script.offset_at(99), 40);
        let s0 = synth_skin_scrolled("mobile-a", 1, 0, &script).unwrap();
        let s5 = synth_skin_scrolled("mobile-a", 1, 5, &script).unwrap();
        assert_eq!(s0.truth("search-bar"), s5.truth("search-bar"));
        let a = s0.truth("ad-banner").unwrap().region;
        let b = s5.truth("ad-banner").unwrap().region;
        assert_eq!(b.y + 20, a.y);
        let stories = s5.truth("stories-bar").unwrap();
        assert!(!stories.complete);
    }
}
