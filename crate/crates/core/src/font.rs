//! Built-in 8x8 bitmap font.
//!
//! Glyphs use rows 0..=6 of the cell (lowercase x-height on rows 2..=6) and
//! are laid out proportionally: each glyph advances by its ink width plus one
//! unit, a space by three units. Text is drawn at an integer `scale`, so a
//! glyph at scale `k` is its bitmap with every bit blown up to `k x k`.

use std::sync::OnceLock;

use crate::image::{Frame, GrayImage, Region};

pub const CELL: u32 = 8;
/// Advance of a space, in font units.
pub const SPACE_ADVANCE: u32 = 3;

#[rustfmt::skip]
const ART: &[(char, [&str; 7])] = &[
    ('A', [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('B', ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."]),
    ('C', [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."]),
    ('D', ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."]),
    ('E', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
    ('F', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
    ('G', [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".###."]),
    ('H', ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('I', ["###", ".#.", ".#.", ".#.", ".#.", ".#.", "###"]),
    ('J', ["..###", "...#.", "...#.", "...#.", "#..#.", "#..#.", ".##.."]),
    ('K', ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"]),
    ('L', ["#....", "#....", "#....", "#....", "#....", "#....", "#####"]),
    ('M', ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"]),
    ('N', ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"]),
    ('O', [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('P', ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."]),
    ('Q', [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"]),
    ('R', ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"]),
    ('S', [".####", "#....", "#....", ".###.", "....#", "....#", "####."]),
    ('T', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."]),
    ('U', ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('V', ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."]),
    ('W', ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."]),
    ('X', ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"]),
    ('Y', ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."]),
    ('Z', ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"]),
    ('a', [".....", ".....", ".###.", "....#", ".####", "#...#", ".####"]),
    ('b', ["#....", "#....", "####.", "#...#", "#...#", "#...#", "####."]),
    ('c', ["....", "....", ".###", "#...", "#...", "#...", ".###"]),
    ('d', ["....#", "....#", ".####", "#...#", "#...#", "#...#", ".####"]),
    ('e', [".....", ".....", ".###.", "#...#", "#####", "#....", ".###."]),
    ('f', ["..##", ".#..", "####", ".#..", ".#..", ".#..", ".#.."]),
    ('g', [".....", ".....", ".####", "#...#", ".####", "....#", ".###."]),
    ('h', ["#....", "#....", "####.", "#...#", "#...#", "#...#", "#...#"]),
    ('i', [".", "#", ".", "#", "#", "#", "#"]),
    ('j', ["..#", "...", "..#", "..#", "..#", "#.#", ".#."]),
    ('k', ["#...", "#...", "#..#", "#.#.", "##..", "#.#.", "#..#"]),
    ('l', ["##", ".#", ".#", ".#", ".#", ".#", ".#"]),
    ('m', [".....", ".....", "##.#.", "#.#.#", "#.#.#", "#.#.#", "#.#.#"]),
    ('n', [".....", ".....", "####.", "#...#", "#...#", "#...#", "#...#"]),
    ('o', [".....", ".....", ".###.", "#...#", "#...#", "#...#", ".###."]),
    ('p', [".....", ".....", "####.", "#...#", "####.", "#....", "#...."]),
    ('q', [".....", ".....", ".####", "#...#", ".####", "....#", "....#"]),
    ('r', ["....", "....", "#.##", "##..", "#...", "#...", "#..."]),
    ('s', [".....", ".....", ".####", "#....", ".###.", "....#", "####."]),
    ('t', [".#..", ".#..", "####", ".#..", ".#..", ".#..", "..##"]),
    ('u', [".....", ".....", "#...#", "#...#", "#...#", "#...#", ".####"]),
    ('v', [".....", ".....", "#...#", "#...#", "#...#", ".#.#.", "..#.."]),
    ('w', [".....", ".....", "#...#", "#...#", "#.#.#", "#.#.#", ".#.#."]),
    ('x', [".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#"]),
    ('y', [".....", ".....", "#...#", "#...#", ".####", "....#", ".###."]),
    ('z', [".....", ".....", "#####", "...#.", "..#..", ".#...", "#####"]),
    ('0', [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."]),
    ('1', ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('2', [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"]),
    ('3', ["####.", "....#", "....#", ".###.", "....#", "....#", "####."]),
    ('4', ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."]),
    ('5', ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."]),
    ('6', ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."]),
    ('7', ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."]),
    ('8', [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."]),
    ('9', [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."]),
    ('.', [".", ".", ".", ".", ".", ".", "#"]),
    (',', ["..", "..", "..", "..", "..", ".#", "#."]),
    ('!', ["#", "#", "#", "#", "#", ".", "#"]),
    ('?', [".###.", "#...#", "....#", "...#.", "..#..", ".....", "..#.."]),
    (':', [".", ".", "#", ".", ".", ".", "#"]),
    (';', ["..", "..", ".#", "..", "..", ".#", "#."]),
    ('\'', ["#", "#", ".", ".", ".", ".", "."]),
    ('-', ["...", "...", "...", "###", "...", "...", "..."]),
    ('(', ["..#", ".#.", "#..", "#..", "#..", ".#.", "..#"]),
    (')', ["#..", ".#.", "..#", "..#", "..#", ".#.", "#.."]),
    ('+', [".....", "..#..", "..#..", "#####", "..#..", "..#..", "....."]),
    ('/', ["....#", "...#.", "...#.", "..#..", ".#...", ".#...", "#...."]),
];

/// A glyph's ink, cropped to its bounding box inside the cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    pub ch: char,
    /// Top row of the ink inside the 8x8 cell.
    pub top: u32,
    pub width: u32,
    pub height: u32,
    /// Row-major ink bits, `width * height` entries.
    pub bits: Vec<bool>,
}

impl Glyph {
    pub fn ink(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    /// Ink with a one-unit empty border, as 0/255 luminance.
    pub fn padded(&self) -> GrayImage {
        GrayImage::from_fn(self.width + 2, self.height + 2, |x, y| {
            let inside = x >= 1 && y >= 1 && x <= self.width && y <= self.height;
            if inside && self.ink(x - 1, y - 1) {
                255.0
            } else {
                0.0
            }
        })
    }
}

pub fn glyphs() -> &'static [Glyph] {
    static GLYPHS: OnceLock<Vec<Glyph>> = OnceLock::new();
    GLYPHS.get_or_init(|| ART.iter().map(|(ch, rows)| parse_glyph(*ch, rows)).collect())
}

fn parse_glyph(ch: char, rows: &[&str; 7]) -> Glyph {
    let inked: Vec<usize> = (0..7).filter(|&r| rows[r].contains('#')).collect();
    let top = *inked.first().expect("glyph art has ink") as u32;
    let bottom = *inked.last().expect("glyph art has ink") as u32;
    let cols = || rows.iter().flat_map(|r| r.bytes().enumerate().filter(|&(_, b)| b == b'#').map(|(c, _)| c));
    let left = cols().min().expect("glyph art has ink");
    let right = cols().max().expect("glyph art has ink");
    let width = (right - left + 1) as u32;
    let height = bottom - top + 1;
    let mut bits = Vec::with_capacity((width * height) as usize);
    for r in top..=bottom {
        let row = rows[r as usize].as_bytes();
        for c in left..=right {
            bits.push(row.get(c) == Some(&b'#'));
        }
    }
    Glyph { ch, top, width, height, bits }
}

pub fn glyph(ch: char) -> Option<&'static Glyph> {
    glyphs().iter().find(|g| g.ch == ch)
}

pub fn is_supported(ch: char) -> bool {
    ch == ' ' || glyph(ch).is_some()
}

fn advance(ch: char) -> u32 {
    match ch {
        ' ' => SPACE_ADVANCE,
        c => glyph(c).or_else(|| glyph('?')).map_or(SPACE_ADVANCE, |g| g.width + 1),
    }
}

/// Pixel width of `text` at `scale` (no trailing spacing).
pub fn text_width(text: &str, scale: u32) -> u32 {
    let units: u32 = text.chars().map(advance).sum();
    let trailing = match text.chars().last() {
        Some(' ') | None => 0,
        Some(_) => 1,
    };
    units.saturating_sub(trailing) * scale
}

pub fn line_height(scale: u32) -> u32 {
    CELL * scale
}

/// Draws `text` with the top of its cell at (`x`, `y`), clipped to the frame.
/// Characters outside the set are drawn as `?`. Returns each glyph's ink box
/// (unclipped) in drawing order; spaces get no box.
pub fn draw_text(frame: &mut Frame, x: u32, y: u32, text: &str, scale: u32, rgb: [u8; 3]) -> Vec<(char, Region)> {
    let scale = scale.max(1);
    let mut pen = x as u64;
    let mut boxes = Vec::new();
    for ch in text.chars() {
        if ch == ' ' {
            pen += (SPACE_ADVANCE * scale) as u64;
            continue;
        }
        let g = glyph(ch).or_else(|| glyph('?')).expect("'?' is in the font");
        let top = y as u64 + (g.top * scale) as u64;
        for gy in 0..g.height {
            for gx in 0..g.width {
                if !g.ink(gx, gy) {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let px = pen + (gx * scale + dx) as u64;
                        let py = top + (gy * scale + dy) as u64;
                        if px < frame.width as u64 && py < frame.height as u64 {
                            frame.set_pixel(px as u32, py as u32, rgb);
                        }
                    }
                }
            }
        }
        if pen <= u32::MAX as u64 && top <= u32::MAX as u64 {
            boxes.push((ch, Region { x: pen as u32, y: top as u32, w: g.width * scale, h: g.height * scale }));
        }
        pen += ((g.width + 1) * scale) as u64;
    }
    boxes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn font_covers_alphanumerics() {
        for c in ('A'..='Z').chain('a'..='z').chain('0'..='9') {
            assert!(glyph(c).is_some(), "missing {c}");
        }
        for g in glyphs() {
            assert!(g.width <= CELL && g.top + g.height <= 7, "{} overflows", g.ch);
        }
    }

    #[test]
    fn glyphs_are_distinct() {
        let gs = glyphs();
        for (i, a) in gs.iter().enumerate() {
            for b in &gs[i + 1..] {
                let same = a.width == b.width && a.height == b.height && a.bits == b.bits;
                assert!(!same, "{} and {} share a bitmap", a.ch, b.ch);
            }
        }
    }

    #[test]
    fn width_and_boxes() {
        // "Hi": H is 5 wide, i is 1 wide, one unit between.
        assert_eq!(text_width("Hi", 1), 7);
        assert_eq!(text_width("Hi", 3), 21);
        assert_eq!(text_width("a b", 1), 5 + 1 + 3 + 5);
        let mut f = Frame::filled(40, 20, [0, 0, 0]);
        let boxes = draw_text(&mut f, 2, 3, "Hi", 2, [255, 255, 255]);
        assert_eq!(boxes[0], ('H', Region { x: 2, y: 3, w: 10, h: 14 }));
        assert_eq!(boxes[1], ('i', Region { x: 14, y: 5, w: 2, h: 12 }));
        assert_eq!(f.pixel(2, 3), [255, 255, 255]);
        assert_eq!(f.pixel(4, 3), [0, 0, 0]);
    }
}
