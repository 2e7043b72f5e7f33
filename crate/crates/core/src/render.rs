//! Pixel edits applied to detections: solid occlusion, blur, highlight,
//! inpaint.
//!
//! Regions are clipped to the frame and never rejected; a region entirely
//! outside the frame leaves it untouched. Pixels outside the clipped region
//! are never modified.

use serde::{Deserialize, Serialize};

use crate::font::{draw_text, line_height, text_width};
use crate::image::{gaussian_blur, luminance, Frame, Region};

pub const LABEL_SCALE: u32 = 2;
/// Padding around a highlight label inside its strip.
pub const LABEL_PAD: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "params", rename_all = "lowercase")]
pub enum RenderAction {
    Solid {
        rgb: [u8; 3],
    },
    Blur {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    Highlight {
        rgb: [u8; 3],
        #[serde(default = "default_thickness")]
        thickness: u32,
        #[serde(default)]
        label: String,
    },
    Inpaint {},
}

fn default_thickness() -> u32 {
    2
}

impl Default for RenderAction {
    fn default() -> Self {
        RenderAction::Solid { rgb: [0, 0, 0] }
    }
}

impl RenderAction {
    /// Applies the action to `r` in place.
    pub fn apply(&self, f: &mut Frame, r: &Region) {
        match self {
            RenderAction::Solid { rgb } => f.fill_region(r, *rgb),
            RenderAction::Blur { sigma } => blur_in_place(f, r, *sigma),
            RenderAction::Highlight { rgb, thickness, label } => highlight_in_place(f, r, *rgb, *thickness, label),
            RenderAction::Inpaint {} => inpaint_in_place(f, r),
        }
    }
}

pub fn occlude_solid(f: &Frame, r: &Region, rgb: [u8; 3]) -> Frame {
    let mut out = f.clone();
    out.fill_region(r, rgb);
    out
}

/// `max(2, min(w, h) / 8)`.
pub fn default_blur_sigma(r: &Region) -> f64 {
    (r.w.min(r.h) as f64 / 8.0).max(2.0)
}

/// Gaussian blur of the clipped region; `None` picks [`default_blur_sigma`]
/// of the clipped region.
pub fn occlude_blur(f: &Frame, r: &Region, sigma: Option<f64>) -> Frame {
    let mut out = f.clone();
    blur_in_place(&mut out, r, sigma);
    out
}

fn blur_in_place(f: &mut Frame, r: &Region, sigma: Option<f64>) {
    let Some(r) = r.clip(f.width, f.height) else {
        return;
    };
    let sigma = sigma.filter(|s| *s >= 0.0).unwrap_or_else(|| default_blur_sigma(&r));
    if let Ok(blurred) = gaussian_blur(f, &r, sigma) {
        *f = blurred;
    }
}

/// Border of `thickness` pixels along the inside of `r`, plus an optional
/// label strip sitting directly above `r`. Both are clipped to the frame.
pub fn highlight(f: &Frame, r: &Region, rgb: [u8; 3], thickness: u32, label: &str) -> Frame {
    let mut out = f.clone();
    highlight_in_place(&mut out, r, rgb, thickness, label);
    out
}

fn highlight_in_place(f: &mut Frame, r: &Region, rgb: [u8; 3], thickness: u32, label: &str) {
    let t = thickness.max(1);
    if let Some(c) = r.clip(f.width, f.height) {
        for y in c.y..c.y + c.h {
            for x in c.x..c.x + c.w {
                let dx = (x - r.x).min(r.w - 1 - (x - r.x));
                let dy = (y - r.y).min(r.h - 1 - (y - r.y));
                if dx < t || dy < t {
                    f.set_pixel(x, y, rgb);
                }
            }
        }
    }
    if !label.is_empty() {
        let strip = label_strip(label, rgb);
        blit(f, &strip, r.x as i64, r.y as i64 - strip.height as i64);
    }
}

/// The label as drawn by [`highlight`]: text in black or white (whichever
/// contrasts with `rgb`) on an `rgb` strip.
pub fn label_strip(label: &str, rgb: [u8; 3]) -> Frame {
    let w = text_width(label, LABEL_SCALE).max(1) + 2 * LABEL_PAD;
    let h = line_height(LABEL_SCALE) + 2 * LABEL_PAD;
    let mut strip = Frame::filled(w, h, rgb);
    let ink = if luminance(rgb) >= 128.0 { [0, 0, 0] } else { [255, 255, 255] };
    draw_text(&mut strip, LABEL_PAD, LABEL_PAD, label, LABEL_SCALE, ink);
    strip
}

/// Copies `src` with its top-left at (`x`, `y`), which may lie off-frame.
fn blit(dst: &mut Frame, src: &Frame, x: i64, y: i64) {
    for sy in 0..src.height {
        let ty = y + sy as i64;
        if ty < 0 || ty >= dst.height as i64 {
            continue;
        }
        for sx in 0..src.width {
            let tx = x + sx as i64;
            if tx >= 0 && tx < dst.width as i64 {
                dst.set_pixel(tx as u32, ty as u32, src.pixel(sx, sy));
            }
        }
    }
}

/// Fills `r` from the one-pixel ring just outside it: each pixel becomes
/// the `1/d`-weighted mean of the ring pixels (`d` = Euclidean distance),
/// per channel, rounded. Ring pixels outside the frame are left out; with
/// no ring at all the region is filled with the frame's mean color.
pub fn inpaint_simple(f: &Frame, r: &Region) -> Frame {
    let mut out = f.clone();
    inpaint_in_place(&mut out, r);
    out
}

/// Ring coordinates in raster order.
pub fn border_ring(r: &Region, width: u32, height: u32) -> Vec<(u32, u32)> {
    let (x0, y0) = (r.x as i64 - 1, r.y as i64 - 1);
    let (x1, y1) = (r.right() as i64, r.bottom() as i64);
    let mut ring = Vec::new();
    for y in y0..=y1 {
        if y < 0 || y >= height as i64 {
            continue;
        }
        let edge_row = y == y0 || y == y1;
        for x in x0..=x1 {
            if x < 0 || x >= width as i64 {
                continue;
            }
            if edge_row || x == x0 || x == x1 {
                ring.push((x as u32, y as u32));
            }
        }
    }
    ring
}

fn inpaint_in_place(f: &mut Frame, r: &Region) {
    let Some(c) = r.clip(f.width, f.height) else {
        return;
    };
    let ring: Vec<((u32, u32), [u8; 3])> =
        border_ring(&c, f.width, f.height).into_iter().map(|(x, y)| ((x, y), f.pixel(x, y))).collect();
    if ring.is_empty() {
        let mean = f.mean_color();
        f.fill_region(&c, mean);
        return;
    }
    for y in c.y..c.y + c.h {
        for x in c.x..c.x + c.w {
            let mut acc = [0.0f64; 3];
            let mut total = 0.0;
            for &((rx, ry), px) in &ring {
                let dx = rx as f64 - x as f64;
                let dy = ry as f64 - y as f64;
                let w = 1.0 / (dx * dx + dy * dy).sqrt();
                total += w;
                for ch in 0..3 {
                    acc[ch] += w * px[ch] as f64;
                }
            }
            f.set_pixel(x, y, acc.map(|a| (a / total).round().clamp(0.0, 255.0) as u8));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(w: u32, h: u32) -> Frame {
        let mut f = Frame::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                if (x + y) % 2 == 0 {
                    f.set_pixel(x, y, [250, 250, 250]);
                }
            }
        }
        f
    }

    #[test]
    fn solid_cases() {
        let f = checker(12, 10);
        assert!(occlude_solid(&f, &f.bounds(), [0, 0, 0]).pixels.iter().all(|&p| p == 0));
        assert_eq!(occlude_solid(&f, &Region { x: 40, y: 40, w: 3, h: 3 }, [9, 9, 9]), f);
        let r = Region { x: 3, y: 2, w: 5, h: 4 };
        let out = occlude_solid(&f, &r, [255, 0, 0]);
        for y in 0..10 {
            for x in 0..12 {
                let want = if r.contains(x, y) { [255, 0, 0] } else { f.pixel(x, y) };
                assert_eq!(out.pixel(x, y), want);
            }
        }
    }

    #[test]
    fn blur_defaults_and_clip() {
        assert_eq!(default_blur_sigma(&Region { x: 0, y: 0, w: 32, h: 32 }), 4.0);
        assert_eq!(default_blur_sigma(&Region { x: 0, y: 0, w: 8, h: 100 }), 2.0);
        let f = Frame::filled(10, 10, [40, 50, 60]);
        assert_eq!(occlude_blur(&f, &Region { x: 5, y: 5, w: 50, h: 50 }, None), f);
        let c = checker(10, 10);
        let out = occlude_blur(&c, &Region { x: 5, y: 5, w: 50, h: 50 }, Some(1.0));
        assert_eq!(out.pixel(4, 4), c.pixel(4, 4));
        assert_ne!(out.pixel(7, 7), c.pixel(7, 7));
    }

    #[test]
    fn highlight_border_and_interior() {
        let f = checker(20, 20);
        let r = Region { x: 4, y: 4, w: 10, h: 8 };
        let out = highlight(&f, &r, [0, 255, 0], 2, "");
        assert_eq!(out.pixel(4, 4), [0, 255, 0]);
        assert_eq!(out.pixel(13, 11), [0, 255, 0]);
        assert_eq!(out.pixel(5, 9), [0, 255, 0]);
        assert_eq!(out.pixel(6, 6), f.pixel(6, 6));
        assert_eq!(out.pixel(3, 3), f.pixel(3, 3));
        let full = highlight(&f, &r, [1, 2, 3], 4, "");
        for y in 4..12 {
            for x in 4..14 {
                assert_eq!(full.pixel(x, y), [1, 2, 3]);
            }
        }
    }

    #[test]
    fn inpaint_cases() {
        let f = Frame::filled(12, 12, [90, 90, 90]);
        let r = Region { x: 3, y: 3, w: 5, h: 4 };
        let mut g = f.clone();
        g.fill_region(&r, [255, 0, 0]);
        assert_eq!(inpaint_simple(&g, &r), f);
        let full = inpaint_simple(&g, &g.bounds());
        let mean = g.mean_color();
        assert!(full.pixels.chunks(3).all(|p| p == mean));
    }

    #[test]
    fn action_json_shape() {
        let a = RenderAction::Highlight { rgb: [255, 0, 0], thickness: 3, label: "ad".into() };
        let v = serde_json::to_value(&a).unwrap();
        assert_eq!(v["action"], "highlight");
        assert_eq!(v["params"]["thickness"], 3);
        let back: RenderAction = serde_json::from_str(r#"{"action":"inpaint","params":{}}"#).unwrap();
        assert_eq!(back, RenderAction::Inpaint {});
        let blur: RenderAction = serde_json::from_str(r#"{"action":"blur","params":{}}"#).unwrap();
        assert_eq!(blur, RenderAction::Blur { sigma: None });
    }
}
