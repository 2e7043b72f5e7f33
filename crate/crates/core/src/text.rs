//! Text hook: find lines of text, read their characters, hand strings to a
//! classifier.
//!
//! The built-in detector binarizes with Otsu, labels 8-connected components
//! and groups them into lines. Characters are read by matching each glyph
//! group against the built-in bitmap font at its implied integer scale.
//! External engines plug in through [`TextDetector`]; see [`ProcessDetector`]
//! for the stdin/stdout contract.

use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::font::{self, Glyph};
use crate::image::{ncc_score, resize_bilinear, to_grayscale, Frame, GrayImage, Region};

pub const BUILTIN_DETECTOR_ID: &str = "builtin-bitmap";
/// Components with a side in this range count as plausible glyphs.
pub const GLYPH_MIN_PX: u32 = 4;
pub const GLYPH_MAX_PX: u32 = 64;
/// Glyph groups scoring below this against every glyph read as `?`.
pub const MIN_GLYPH_SCORE: f64 = 0.5;
pub const UNKNOWN_CHAR: char = '?';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharBox {
    pub ch: char,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextBox {
    pub region: Region,
    pub text: String,
    pub char_boxes: Vec<CharBox>,
    pub detector_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub regions: bool,
    pub characters: bool,
}

/// A text engine. Must at least find regions; engines without character
/// support get the built-in reader applied to their regions.
pub trait TextDetector: Send + Sync {
    fn detector_id(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn detect_regions(&self, f: &Frame) -> Result<Vec<Region>>;

    /// Regions plus characters. The default reads each region with the
    /// built-in glyph matcher.
    fn scan(&self, f: &Frame) -> Result<Vec<TextBox>> {
        let g = to_grayscale(f);
        let mut boxes = Vec::new();
        for r in self.detect_regions(f)? {
            let r = r.clip(f.width, f.height).ok_or_else(|| {
                Error::HookUnavailable(format!("{} returned a region outside the frame", self.detector_id()))
            })?;
            let mut tb = extract_chars(&g, &r)?;
            tb.detector_id = self.detector_id().to_string();
            boxes.push(tb);
        }
        Ok(boxes)
    }
}

/// The deterministic connected-component baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinDetector;

impl TextDetector for BuiltinDetector {
    fn detector_id(&self) -> &str {
        BUILTIN_DETECTOR_ID
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { regions: true, characters: true }
    }

    fn detect_regions(&self, f: &Frame) -> Result<Vec<Region>> {
        Ok(detect_text_regions(&to_grayscale(f)))
    }

    fn scan(&self, f: &Frame) -> Result<Vec<TextBox>> {
        let g = to_grayscale(f);
        let Some((threshold, dark)) = choose_polarity(&g) else {
            return Ok(Vec::new());
        };
        let mask = binarize(&g, threshold, dark);
        let lines = group_lines(&mask, g.width, g.height);
        lines.iter().map(|r| read_region(&mask, g.width, r)).collect()
    }
}

/// Runs an external program per frame: PNG bytes on stdin, JSON
/// `{"boxes":[{"x","y","w","h","text","chars":[{"c","x","y","w","h"}]}]}` on
/// stdout. Calls are serialized since engines may not be reentrant.
pub struct ProcessDetector {
    id: String,
    program: String,
    args: Vec<String>,
    lock: Mutex<()>,
}

#[derive(Deserialize)]
struct WireResponse {
    boxes: Vec<WireBox>,
}

#[derive(Deserialize)]
struct WireBox {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    #[serde(default)]
    text: String,
    #[serde(default)]
    chars: Vec<WireChar>,
}

#[derive(Deserialize)]
struct WireChar {
    c: char,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

impl ProcessDetector {
    pub fn new(id: impl Into<String>, program: impl Into<String>, args: Vec<String>) -> Self {
        ProcessDetector { id: id.into(), program: program.into(), args, lock: Mutex::new(()) }
    }

    fn call(&self, f: &Frame) -> Result<WireResponse> {
        let unavailable = |what: String| Error::HookUnavailable(format!("{}: {what}", self.id));
        let png = f.encode_png()?;
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| unavailable(format!("spawn failed: {e}")))?;
        if let Some(mut stdin) = child.stdin.take() {
            // A process that exits without reading is reported through its status below.
            let _ = stdin.write_all(&png);
        }
        let out = child.wait_with_output().map_err(|e| unavailable(e.to_string()))?;
        if !out.status.success() {
            return Err(unavailable(format!("exited with {}", out.status)));
        }
        serde_json::from_slice(&out.stdout).map_err(|e| unavailable(format!("bad response: {e}")))
    }
}

impl TextDetector for ProcessDetector {
    fn detector_id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { regions: true, characters: true }
    }

    fn detect_regions(&self, f: &Frame) -> Result<Vec<Region>> {
        Ok(self.scan(f)?.into_iter().map(|b| b.region).collect())
    }

    fn scan(&self, f: &Frame) -> Result<Vec<TextBox>> {
        let resp = self.call(f)?;
        let bad = |msg: &str| Error::HookUnavailable(format!("{}: {msg}", self.id));
        let mut boxes = Vec::with_capacity(resp.boxes.len());
        for b in resp.boxes {
            let region = Region::new(b.x, b.y, b.w, b.h)
                .ok()
                .and_then(|r| r.clip(f.width, f.height))
                .ok_or_else(|| bad("box outside the frame"))?;
            let mut char_boxes = Vec::with_capacity(b.chars.len());
            for c in b.chars {
                let r = Region::new(c.x, c.y, c.w, c.h)
                    .ok()
                    .and_then(|r| r.intersect(&region))
                    .ok_or_else(|| bad("character outside its box"))?;
                char_boxes.push(CharBox { ch: c.c, region: r });
            }
            if char_boxes.len() != b.text.chars().count() {
                return Err(bad("character count does not match text"));
            }
            boxes.push(TextBox { region, text: b.text, char_boxes, detector_id: self.id.clone() });
        }
        boxes.sort_by_key(|b| (b.region.y, b.region.x));
        Ok(boxes)
    }
}

/// Text boxes of a frame via `adapter`. Adapter failures surface as
/// [`Error::HookUnavailable`].
pub fn scan_text(f: &Frame, adapter: &dyn TextDetector) -> Result<Vec<TextBox>> {
    adapter.scan(f).map_err(|e| match e {
        Error::HookUnavailable(_) => e,
        other => Error::HookUnavailable(format!("{}: {other}", adapter.detector_id())),
    })
}

/// Otsu threshold over 256 luminance bins: pixels in bins `<= t` form the
/// dark class. `None` for single-level images.
pub fn otsu_threshold(g: &GrayImage) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in &g.values {
        hist[bin(v)] += 1;
    }
    let total = g.values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best: Option<(f64, u8)> = None;
    for t in 0..255usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, t as u8));
        }
    }
    best.map(|(_, t)| t)
}

#[inline]
fn bin(v: f64) -> usize {
    v.round().clamp(0.0, 255.0) as usize
}

fn binarize(g: &GrayImage, threshold: u8, dark: bool) -> Vec<bool> {
    g.values.iter().map(|&v| (bin(v) <= threshold as usize) == dark).collect()
}

struct Component {
    bbox: Region,
    pixels: Vec<u32>,
}

/// 8-connected components of `mask`, in raster order of their first pixel.
fn components(mask: &[bool], w: u32, h: u32) -> Vec<Component> {
    let (wu, hu) = (w as usize, h as usize);
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(p) = stack.pop() {
            pixels.push(p as u32);
            let (x, y) = (p % wu, p / wu);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(hu - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(wu - 1) {
                    let q = ny * wu + nx;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        let bbox = Region { x: x0 as u32, y: y0 as u32, w: (x1 - x0 + 1) as u32, h: (y1 - y0 + 1) as u32 };
        out.push(Component { bbox, pixels });
    }
    out
}

fn plausible(r: &Region) -> bool {
    let side = r.w.max(r.h);
    (GLYPH_MIN_PX..=GLYPH_MAX_PX).contains(&side)
}

fn touches_border(r: &Region, w: u32, h: u32) -> bool {
    r.x == 0 || r.y == 0 || r.right() == w as u64 || r.bottom() == h as u64
}

fn strictly_inside(inner: &Region, outer: &Region) -> bool {
    inner.x > outer.x && inner.y > outer.y && inner.right() < outer.right() && inner.bottom() < outer.bottom()
}

/// Otsu threshold and polarity (`true` = dark text). The polarity with more
/// plausible glyph components wins; components sitting inside a glyph of the
/// other polarity (letter counters) do not count. Ties go to the polarity
/// with less foreground, then to dark text.
fn choose_polarity(g: &GrayImage) -> Option<(u8, bool)> {
    let t = otsu_threshold(g)?;
    let (w, h) = (g.width, g.height);
    let boxes = |dark: bool| -> (Vec<Region>, usize) {
        let mask = binarize(g, t, dark);
        let fg = mask.iter().filter(|&&m| m).count();
        let rs = components(&mask, w, h).into_iter().map(|c| c.bbox).filter(plausible).collect();
        (rs, fg)
    };
    let (dark_boxes, dark_fg) = boxes(true);
    let (light_boxes, light_fg) = boxes(false);
    let count = |mine: &[Region], other: &[Region]| {
        mine.iter()
            .filter(|r| !other.iter().any(|o| !touches_border(o, w, h) && strictly_inside(r, o)))
            .count()
    };
    let dark_n = count(&dark_boxes, &light_boxes);
    let light_n = count(&light_boxes, &dark_boxes);
    let dark = match dark_n.cmp(&light_n) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => dark_fg <= light_fg,
    };
    Some((t, dark))
}

/// Whether two boxes belong on one text line: they overlap vertically by at
/// least half the shorter height, or the shorter is at most half the taller
/// and sits within its own height above or below it (apostrophes over
/// lowercase). Their horizontal gap must not exceed `max_gap` or the taller
/// height, whichever is larger.
fn same_line(a: &Region, b: &Region, max_gap: f64) -> bool {
    let hgap = a.x.max(b.x) as i64 - a.right().min(b.right()) as i64;
    if hgap as f64 > max_gap.max(a.h.max(b.h) as f64) {
        return false;
    }
    let top = a.y.max(b.y) as i64;
    let bottom = a.bottom().min(b.bottom()) as i64;
    let (short, tall) = if a.h <= b.h { (a, b) } else { (b, a) };
    if (bottom - top) as f64 >= 0.5 * short.h as f64 {
        return true;
    }
    2 * short.h <= tall.h && top - bottom <= short.h as i64
}

/// Groups foreground components into lines: each glyph joins the line it
/// overlaps most (see [`same_line`], with gaps up to 1.5 median glyph
/// widths), then lines that qualify are merged until stable.
fn group_lines(mask: &[bool], w: u32, h: u32) -> Vec<Region> {
    let comps: Vec<Region> = components(mask, w, h)
        .into_iter()
        .map(|c| c.bbox)
        .filter(|r| r.w <= GLYPH_MAX_PX && r.h <= GLYPH_MAX_PX)
        .collect();
    if comps.is_empty() {
        return Vec::new();
    }
    let mut comps = merge_stacked(comps);
    let mut widths: Vec<u32> = comps.iter().map(|r| r.w).collect();
    widths.sort_unstable();
    let max_gap = 1.5 * widths[widths.len() / 2] as f64;
    comps.sort_by_key(|r| (r.x, r.y));
    let mut lines: Vec<Region> = Vec::new();
    for c in comps {
        let mut best: Option<(i64, usize)> = None;
        for (i, line) in lines.iter().enumerate() {
            if !same_line(&c, line, max_gap) {
                continue;
            }
            let overlap = c.bottom().min(line.bottom()) as i64 - c.y.max(line.y) as i64;
            if best.is_none_or(|(b, _)| overlap > b) {
                best = Some((overlap, i));
            }
        }
        match best {
            Some((_, i)) => lines[i] = lines[i].union(&c),
            None => lines.push(c),
        }
    }
    'merge: loop {
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                if same_line(&lines[i], &lines[j], max_gap) {
                    let other = lines.swap_remove(j);
                    lines[i] = lines[i].union(&other);
                    continue 'merge;
                }
            }
        }
        break;
    }
    lines.sort_by_key(|r| (r.y, r.x));
    lines
}

/// Joins the separate strokes of one glyph (the dot of `i`, `!`, `?`, the
/// halves of `:` and `;`): components that overlap horizontally, where the
/// smaller is at most half the taller (or both are equal squares under a third
/// of the median component height) and the vertical gap is at most three
/// times the smaller height.
fn merge_stacked(mut comps: Vec<Region>) -> Vec<Region> {
    comps.sort_by_key(|r| (r.x, r.y));
    let n = comps.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let max_w = comps.iter().map(|r| r.w).max().unwrap_or(0);
    let mut heights: Vec<u32> = comps.iter().map(|r| r.h).collect();
    heights.sort_unstable();
    let median_h = heights.get(n / 2).copied().unwrap_or(0);
    for i in 0..n {
        let a = comps[i];
        for j in i + 1..n {
            let b = comps[j];
            if b.x as u64 >= a.right() {
                if b.x > a.x + max_w {
                    break;
                }
                continue;
            }
            if (b.right() as u32) <= a.x {
                continue;
            }
            let (small, tall) = if a.h <= b.h { (a, b) } else { (b, a) };
            let gap = if a.y < b.y { b.y as i64 - a.bottom() as i64 } else { a.y as i64 - b.bottom() as i64 };
            let dots = small.w == small.h && small.w == tall.w && small.h == tall.h && 3 * small.h <= median_h;
            let shaped = 2 * small.h <= tall.h || dots;
            if shaped && gap >= 0 && gap <= 3 * small.h as i64 {
                let (ra, rb) = (root(&mut parent, i), root(&mut parent, j));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut merged: Vec<Option<Region>> = vec![None; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        merged[r] = Some(match merged[r] {
            Some(m) => m.union(&comps[i]),
            None => comps[i],
        });
    }
    merged.into_iter().flatten().collect()
}

/// Text line regions of `g`, top-to-bottom then left-to-right.
pub fn detect_text_regions(g: &GrayImage) -> Vec<Region> {
    match choose_polarity(g) {
        Some((t, dark)) => group_lines(&binarize(g, t, dark), g.width, g.height),
        None => Vec::new(),
    }
}

/// Reads the characters inside `r`. Foreground is whichever side of the
/// region's Otsu split is away from the surrounding background (the ring of
/// pixels just outside `r`, or the region's own border at frame edges).
pub fn extract_chars(g: &GrayImage, r: &Region) -> Result<TextBox> {
    if !r.fits(g.width, g.height) {
        return Err(Error::invalid(format!("region {r:?} outside {}x{} image", g.width, g.height)));
    }
    let crop = g.crop(r)?;
    let Some(t) = otsu_threshold(&crop) else {
        return Ok(TextBox { region: *r, text: String::new(), char_boxes: Vec::new(), detector_id: BUILTIN_DETECTOR_ID.into() });
    };
    let dark = background_level(g, r) > t as f64;
    let local = binarize(&crop, t, dark);
    let mut tb = read_region(&local, crop.width, &crop.bounds())?;
    tb.region = *r;
    for cb in &mut tb.char_boxes {
        cb.region.x += r.x;
        cb.region.y += r.y;
    }
    Ok(tb)
}

fn background_level(g: &GrayImage, r: &Region) -> f64 {
    let mut ring = Vec::new();
    let (x0, y0) = (r.x as i64 - 1, r.y as i64 - 1);
    let (x1, y1) = (r.right() as i64, r.bottom() as i64);
    let take = |x: i64, y: i64, out: &mut Vec<f64>| {
        if x >= 0 && y >= 0 && x < g.width as i64 && y < g.height as i64 {
            out.push(g.get(x as u32, y as u32));
        }
    };
    for x in x0..=x1 {
        take(x, y0, &mut ring);
        take(x, y1, &mut ring);
    }
    for y in y0 + 1..y1 {
        take(x0, y, &mut ring);
        take(x1, y, &mut ring);
    }
    if ring.is_empty() {
        for x in r.x..r.right() as u32 {
            ring.push(g.get(x, r.y));
            ring.push(g.get(x, r.bottom() as u32 - 1));
        }
        for y in r.y..r.bottom() as u32 {
            ring.push(g.get(r.x, y));
            ring.push(g.get(r.right() as u32 - 1, y));
        }
    }
    ring.sort_by(|a, b| a.total_cmp(b));
    ring[ring.len() / 2]
}

struct GlyphGroup {
    bbox: Region,
    pixels: Vec<u32>,
}

/// Reads the foreground of `mask` (row stride `stride`) inside `r`.
fn read_region(mask: &[bool], stride: u32, r: &Region) -> Result<TextBox> {
    let (w, h) = (r.w, r.h);
    let sub: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| mask[((r.y + y) * stride + r.x + x) as usize])
        .collect();
    let mut comps = components(&sub, w, h);
    comps.sort_by_key(|c| (c.bbox.x, c.bbox.y));
    let mut groups: Vec<GlyphGroup> = Vec::new();
    for c in comps {
        match groups.last_mut() {
            Some(g) if (c.bbox.x as u64) < g.bbox.right() => {
                g.bbox = g.bbox.union(&c.bbox);
                g.pixels.extend(c.pixels);
            }
            _ => groups.push(GlyphGroup { bbox: c.bbox, pixels: c.pixels }),
        }
    }
    let reads: Vec<(char, Option<f64>)> = groups.iter().map(|g| classify(g, w)).collect();
    let mut scales: Vec<f64> = reads.iter().filter_map(|(_, k)| *k).collect();
    scales.sort_by(|a, b| a.total_cmp(b));
    let space_gap = match scales.get(scales.len() / 2) {
        Some(k) => 2.0 * k,
        None => 0.4 * groups.iter().map(|g| g.bbox.h).max().unwrap_or(0) as f64,
    };
    let mut text = String::new();
    let mut char_boxes = Vec::new();
    for (i, (g, (ch, _))) in groups.iter().zip(&reads).enumerate() {
        if i > 0 {
            let prev = groups[i - 1].bbox.right() as u32;
            let gap = g.bbox.x.saturating_sub(prev);
            if gap as f64 > space_gap {
                text.push(' ');
                char_boxes.push(CharBox { ch: ' ', region: Region { x: prev + r.x, y: r.y, w: gap, h } });
            }
        }
        text.push(*ch);
        char_boxes.push(CharBox { ch: *ch, region: g.bbox.translate(r.x as i64, r.y as i64).expect("inside r") });
    }
    Ok(TextBox { region: *r, text, char_boxes, detector_id: BUILTIN_DETECTOR_ID.into() })
}

/// Best glyph for a group and the scale it was read at. A coarse glyph can
/// match a finer one downsampled (`.` vs `,` at twice the size), so among
/// equal scores the reading at the smallest scale wins.
fn classify(group: &GlyphGroup, stride: u32) -> (char, Option<f64>) {
    let b = group.bbox;
    let mut cands: Vec<(f64, char, f64)> = Vec::new();
    for g in font::glyphs() {
        let kx = b.w as f64 / g.width as f64;
        let ky = b.h as f64 / g.height as f64;
        if (kx - ky).abs() > 0.2 * kx.max(ky) {
            continue;
        }
        let k = ky.max(kx).max(0.5);
        let score = glyph_score(group, stride, g, k);
        if score >= MIN_GLYPH_SCORE {
            cands.push((score, g.ch, k));
        }
    }
    let top = cands.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let pick = cands
        .iter()
        .filter(|c| c.0 >= top - 1e-6)
        .min_by(|a, b| a.2.total_cmp(&b.2));
    match pick {
        Some(&(_, ch, k)) => (ch, Some(k)),
        None => (UNKNOWN_CHAR, None),
    }
}

/// NCC between the group's ink (with a `k`-pixel margin) resampled to the
/// glyph's padded footprint and that footprint.
fn glyph_score(group: &GlyphGroup, stride: u32, g: &Glyph, k: f64) -> f64 {
    let b = group.bbox;
    let m = k.round().max(1.0) as u32;
    let mut ink = GrayImage::filled(b.w + 2 * m, b.h + 2 * m, 0.0);
    for &p in &group.pixels {
        let (x, y) = (p % stride, p / stride);
        ink.set(x - b.x + m, y - b.y + m, 255.0);
    }
    let target = g.padded();
    let Ok(sampled) = resize_bilinear(&ink, target.width, target.height) else {
        return 0.0;
    };
    ncc_score(&sampled, &target, &target.bounds()).unwrap_or(0.0)
}
