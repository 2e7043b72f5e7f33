//! Pixel-level primitives shared by hooks and renderers.
//!
//! Everything here is a pure function of its inputs. Grayscale values are
//! kept as `f64` so that correlation scores and blur results can be compared
//! against reference computations without quantization noise; frames stay
//! 8-bit RGB.

use std::io::Cursor;

use ::image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-pixel variance at or below which a correlation window counts as flat.
pub const FLAT_VARIANCE: f64 = 1e-4;

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Region {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::invalid(format!("region extent must be >= 1, got {w}x{h}")));
        }
        Ok(Region { x, y, w, h })
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    /// True when the region lies entirely inside a `width` x `height` image.
    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= width as u64 && self.bottom() <= height as u64
    }

    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && py >= self.y && (px as u64) < self.right() && (py as u64) < self.bottom()
    }

    /// Whether `inner` lies inside this region.
    pub fn encloses(&self, inner: &Region) -> bool {
        inner.x >= self.x
            && inner.y >= self.y
            && inner.right() <= self.right()
            && inner.bottom() <= self.bottom()
    }

    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 as u64 || y1 <= y0 as u64 {
            return None;
        }
        Some(Region { x: x0, y: y0, w: (x1 - x0 as u64) as u32, h: (y1 - y0 as u64) as u32 })
    }

    /// Part of the region inside a `width` x `height` image, if any.
    pub fn clip(&self, width: u32, height: u32) -> Option<Region> {
        if width == 0 || height == 0 {
            return None;
        }
        self.intersect(&Region { x: 0, y: 0, w: width, h: height })
    }

    pub fn iou(&self, other: &Region) -> f64 {
        let inter = self.intersect(other).map_or(0, |r| r.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Smallest region covering both.
    pub fn union(&self, other: &Region) -> Region {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        Region { x: x0, y: y0, w: (x1 - x0 as u64) as u32, h: (y1 - y0 as u64) as u32 }
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Option<Region> {
        let x = self.x as i64 + dx;
        let y = self.y as i64 + dy;
        if x < 0 || y < 0 {
            return None;
        }
        Some(Region { x: x as u32, y: y as u32, w: self.w, h: self.h })
    }
}

/// Row-major luminance image, one real value per pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("gray image dimensions must be >= 1"));
        }
        if values.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "gray buffer has {} values, expected {}",
                values.len(),
                width as usize * height as usize
            )));
        }
        Ok(GrayImage { width, height, values })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        GrayImage { width, height, values: vec![value; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f64) -> Self {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        GrayImage { width, height, values }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f64) {
        let w = self.width as usize;
        self.values[y as usize * w + x as usize] = v;
    }

    pub fn bounds(&self) -> Region {
        Region { x: 0, y: 0, w: self.width, h: self.height }
    }

    pub fn crop(&self, r: &Region) -> Result<GrayImage> {
        if !r.fits(self.width, self.height) {
            return Err(Error::invalid(format!(
                "crop {r:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(GrayImage::from_fn(r.w, r.h, |x, y| self.get(r.x + x, r.y + y)))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Quantizes to 8 bits, replicated into an RGB frame.
    pub fn to_frame(&self) -> Frame {
        let mut pixels = Vec::with_capacity(self.values.len() * 3);
        for &v in &self.values {
            let q = v.round().clamp(0.0, 255.0) as u8;
            pixels.extend_from_slice(&[q, q, q]);
        }
        Frame {
            width: self.width,
            height: self.height,
            pixels,
            timestamp_ms: 0,
            source_id: String::new(),
            seq_no: 0,
        }
    }
}

/// One timestamped RGB image from a reality source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB, 3 bytes per pixel.
    pub pixels: Vec<u8>,
    pub timestamp_ms: u64,
    pub source_id: String,
    pub seq_no: u64,
}

impl Frame {
    pub fn new(
        width: u32,
        height: u32,
        pixels: Vec<u8>,
        timestamp_ms: u64,
        source_id: impl Into<String>,
        seq_no: u64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be >= 1"));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "frame buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Frame { width, height, pixels, timestamp_ms, source_id: source_id.into(), seq_no })
    }

    /// Untagged solid frame, mostly for tests and synthetic sources.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            pixels.extend_from_slice(&rgb);
        }
        Frame { width, height, pixels, timestamp_ms: 0, source_id: String::new(), seq_no: 0 }
    }

    pub fn with_meta(mut self, source_id: impl Into<String>, seq_no: u64, timestamp_ms: u64) -> Self {
        self.source_id = source_id.into();
        self.seq_no = seq_no;
        self.timestamp_ms = timestamp_ms;
        self
    }

    pub fn bounds(&self) -> Region {
        Region { x: 0, y: 0, w: self.width, h: self.height }
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn fill_region(&mut self, r: &Region, rgb: [u8; 3]) {
        if let Some(r) = r.clip(self.width, self.height) {
            for y in r.y..r.y + r.h {
                for x in r.x..r.x + r.w {
                    self.set_pixel(x, y, rgb);
                }
            }
        }
    }

    /// Copies `src` into this frame with its top-left at (`x`, `y`), clipped.
    pub fn paste(&mut self, src: &Frame, x: u32, y: u32) {
        for sy in 0..src.height {
            let ty = y as u64 + sy as u64;
            if ty >= self.height as u64 {
                break;
            }
            for sx in 0..src.width {
                let tx = x as u64 + sx as u64;
                if tx >= self.width as u64 {
                    break;
                }
                self.set_pixel(tx as u32, ty as u32, src.pixel(sx, sy));
            }
        }
    }

    pub fn crop(&self, r: &Region) -> Result<Frame> {
        if !r.fits(self.width, self.height) {
            return Err(Error::invalid(format!(
                "crop {r:?} outside {}x{} frame",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(r.area() as usize * 3);
        for y in r.y..r.y + r.h {
            let start = self.offset(r.x, y);
            pixels.extend_from_slice(&self.pixels[start..start + r.w as usize * 3]);
        }
        Ok(Frame {
            width: r.w,
            height: r.h,
            pixels,
            timestamp_ms: self.timestamp_ms,
            source_id: self.source_id.clone(),
            seq_no: self.seq_no,
        })
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("frame buffer length is checked at construction")
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.to_rgb_image().write_to(&mut Cursor::new(&mut out), ImageFormat::Png)?;
        Ok(out)
    }

    /// Decodes any supported image (PNG, JPEG) into an RGB frame.
    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        let img = ::image::load_from_memory(bytes)?.to_rgb8();
        let (w, h) = img.dimensions();
        Frame::new(w, h, img.into_raw(), 0, "", 0)
    }

    pub fn read_png(path: &std::path::Path) -> Result<Frame> {
        let bytes = std::fs::read(path)?;
        Frame::decode(&bytes)
    }

    pub fn write_png(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    pub fn mean_color(&self) -> [u8; 3] {
        let n = (self.width as u64 * self.height as u64).max(1);
        let mut acc = [0u64; 3];
        for px in self.pixels.chunks_exact(3) {
            for c in 0..3 {
                acc[c] += px[c] as u64;
            }
        }
        [0, 1, 2].map(|c| ((acc[c] as f64) / n as f64).round() as u8)
    }
}

/// ITU-R 601 luminance. Computed on integer weights so the result is the
/// correctly rounded value of `0.299R + 0.587G + 0.114B`.
#[inline]
pub fn luminance(rgb: [u8; 3]) -> f64 {
    (299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32) as f64 / 1000.0
}

pub fn to_grayscale(f: &Frame) -> GrayImage {
    let values = f.pixels.chunks_exact(3).map(|p| luminance([p[0], p[1], p[2]])).collect();
    GrayImage { width: f.width, height: f.height, values }
}

/// Bilinear resize with pixel-center alignment: output pixel `i` samples the
/// source at `(i + 0.5) * src / dst - 0.5`, clamped to the source extent.
pub fn resize_bilinear(img: &GrayImage, new_w: u32, new_h: u32) -> Result<GrayImage> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::invalid(format!("resize target must be >= 1x1, got {new_w}x{new_h}")));
    }
    if new_w == img.width && new_h == img.height {
        return Ok(img.clone());
    }
    let xs = sample_axis(img.width, new_w);
    let ys = sample_axis(img.height, new_h);
    let w = img.width as usize;
    let mut values = Vec::with_capacity(new_w as usize * new_h as usize);
    for &(y0, y1, fy) in &ys {
        let r0 = &img.values[y0 * w..(y0 + 1) * w];
        let r1 = &img.values[y1 * w..(y1 + 1) * w];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
            values.push(top + (bot - top) * fy);
        }
    }
    Ok(GrayImage { width: new_w, height: new_h, values })
}

fn sample_axis(src: u32, dst: u32) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    let max = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, max);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src as usize - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Zero-normalized cross-correlation of `tmpl` against the window of `img`
/// at `at`. Flat windows (on either side) score 0.
pub fn ncc_score(img: &GrayImage, tmpl: &GrayImage, at: &Region) -> Result<f64> {
    if at.w != tmpl.width || at.h != tmpl.height {
        return Err(Error::invalid(format!(
            "region {}x{} does not match template {}x{}",
            at.w, at.h, tmpl.width, tmpl.height
        )));
    }
    if !at.fits(img.width, img.height) {
        return Err(Error::invalid(format!(
            "region {at:?} outside {}x{} image",
            img.width, img.height
        )));
    }
    Ok(ncc_unchecked(img, tmpl, at.x, at.y))
}

pub(crate) fn ncc_unchecked(img: &GrayImage, tmpl: &GrayImage, x: u32, y: u32) -> f64 {
    let tw = tmpl.width as usize;
    let th = tmpl.height as usize;
    let iw = img.width as usize;
    let n = (tw * th) as f64;
    let mut sum_i = 0.0;
    for row in 0..th {
        let start = (y as usize + row) * iw + x as usize;
        sum_i += img.values[start..start + tw].iter().sum::<f64>();
    }
    let mean_i = sum_i / n;
    let mean_t = tmpl.mean();
    let (mut num, mut st, mut si) = (0.0, 0.0, 0.0);
    for row in 0..th {
        let start = (y as usize + row) * iw + x as usize;
        let irow = &img.values[start..start + tw];
        let trow = &tmpl.values[row * tw..(row + 1) * tw];
        for (a, b) in trow.iter().zip(irow) {
            let dt = a - mean_t;
            let di = b - mean_i;
            num += dt * di;
            st += dt * dt;
            si += di * di;
        }
    }
    if st <= FLAT_VARIANCE * n || si <= FLAT_VARIANCE * n {
        return 0.0;
    }
    (num / (st * si).sqrt()).clamp(-1.0, 1.0)
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> =
        (-radius..=radius).map(|k| (-((k * k) as f64) / denom).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Separable Gaussian blur of the pixels inside `r`. Samples are clamped to
/// the region border so nothing outside `r` leaks in; pixels outside `r` are
/// copied unchanged.
pub fn gaussian_blur_gray(img: &GrayImage, r: &Region, sigma: f64) -> Result<GrayImage> {
    if !r.fits(img.width, img.height) {
        return Err(Error::invalid(format!(
            "blur region {r:?} outside {}x{} image",
            img.width, img.height
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut out = img.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let plane = img.crop(r)?;
    let blurred = blur_plane(&plane.values, r.w as usize, r.h as usize, &gaussian_kernel(sigma));
    for y in 0..r.h {
        for x in 0..r.w {
            out.set(r.x + x, r.y + y, blurred[(y * r.w + x) as usize]);
        }
    }
    Ok(out)
}

fn blur_plane(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let sx = (x as i64 + k as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += t * row[sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let sy = (y as i64 + k as i64 - radius).clamp(0, h as i64 - 1) as usize;
                acc += t * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Frame form of [`gaussian_blur_gray`], applied per channel and rounded.
pub fn gaussian_blur(f: &Frame, r: &Region, sigma: f64) -> Result<Frame> {
    if !r.fits(f.width, f.height) {
        return Err(Error::invalid(format!(
            "blur region {r:?} outside {}x{} frame",
            f.width, f.height
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut out = f.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let taps = gaussian_kernel(sigma);
    let (w, h) = (r.w as usize, r.h as usize);
    for c in 0..3 {
        let mut plane = Vec::with_capacity(w * h);
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                plane.push(f.pixel(x, y)[c] as f64);
            }
        }
        let blurred = blur_plane(&plane, w, h, &taps);
        for y in 0..h {
            for x in 0..w {
                let o = out.offset(r.x + x as u32, r.y + y as u32);
                out.pixels[o + c] = blurred[y * w + x].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}

/// Binarized Sobel gradient magnitude: 255 where the magnitude reaches
/// `threshold`, 0 elsewhere. Borders replicate the edge pixel.
pub fn contourize(img: &GrayImage, threshold: f64) -> GrayImage {
    let w = img.width as i64;
    let h = img.height as i64;
    let at = |x: i64, y: i64| img.get(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32);
    GrayImage::from_fn(img.width, img.height, |x, y| {
        let (x, y) = (x as i64, y as i64);
        let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
        let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        if (gx * gx + gy * gy).sqrt() >= threshold {
            255.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: u32, h: u32) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| (x * 7 + y * 13) as f64 % 251.0)
    }

    #[test]
    fn grayscale_extremes() {
        let white = to_grayscale(&Frame::filled(3, 2, [255, 255, 255]));
        assert!(white.values.iter().all(|&v| v == 255.0));
        let black = to_grayscale(&Frame::filled(3, 2, [0, 0, 0]));
        assert!(black.values.iter().all(|&v| v == 0.0));
        let red = to_grayscale(&Frame::filled(2, 2, [255, 0, 0]));
        for v in red.values {
            assert!((v - 0.299 * 255.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn frame_rejects_bad_buffer() {
        assert!(Frame::new(2, 2, vec![0; 11], 0, "s", 0).is_err());
        assert!(Frame::new(0, 2, vec![], 0, "s", 0).is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = ramp(5, 4);
        assert_eq!(resize_bilinear(&img, 5, 4).unwrap(), img);
        let c = GrayImage::filled(2, 2, 42.5);
        let big = resize_bilinear(&c, 7, 3).unwrap();
        assert!(big.values.iter().all(|&v| v == 42.5));
        assert!(resize_bilinear(&img, 0, 3).is_err());
    }

    #[test]
    fn resize_two_pixel_row() {
        // Sample positions -0.25, 0.25, 0.75, 1.25 clamp to [0, 1].
        let img = GrayImage::new(2, 1, vec![0.0, 100.0]).unwrap();
        let out = resize_bilinear(&img, 4, 1).unwrap();
        assert_eq!(out.values, vec![0.0, 25.0, 75.0, 100.0]);
    }

    #[test]
    fn ncc_self_and_flat() {
        let img = ramp(12, 10);
        let r = Region::new(3, 2, 5, 4).unwrap();
        let t = img.crop(&r).unwrap();
        assert!((ncc_score(&img, &t, &r).unwrap() - 1.0).abs() < 1e-12);
        let flat = GrayImage::filled(5, 4, 9.0);
        assert_eq!(ncc_score(&img, &flat, &r).unwrap(), 0.0);
        let out = Region::new(9, 8, 5, 4).unwrap();
        assert!(matches!(ncc_score(&img, &t, &out), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ncc_is_local() {
        let img = ramp(16, 16);
        let t = GrayImage::from_fn(4, 3, |x, y| ((x * 31 + y * 17) % 23) as f64);
        let r = Region::new(6, 9, 4, 3).unwrap();
        let window = img.crop(&r).unwrap();
        let a = ncc_score(&img, &t, &r).unwrap();
        let b = ncc_score(&window, &t, &window.bounds()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blur_zero_sigma_and_uniform() {
        let f = Frame::filled(9, 9, [10, 20, 30]);
        let r = Region::new(2, 2, 5, 5).unwrap();
        assert_eq!(gaussian_blur(&f, &r, 0.0).unwrap(), f);
        assert_eq!(gaussian_blur(&f, &r, 2.0).unwrap(), f);
    }

    #[test]
    fn blur_keeps_outside_pixels() {
        let mut f = Frame::filled(12, 10, [0, 0, 0]);
        for y in 0..10 {
            for x in 0..12 {
                f.set_pixel(x, y, [(x * 20) as u8, (y * 25) as u8, ((x + y) * 9) as u8]);
            }
        }
        let r = Region::new(3, 2, 5, 6).unwrap();
        let out = gaussian_blur(&f, &r, 1.5).unwrap();
        for y in 0..10 {
            for x in 0..12 {
                if !r.contains(x, y) {
                    assert_eq!(out.pixel(x, y), f.pixel(x, y));
                }
            }
        }
        assert_ne!(out, f);
    }

    #[test]
    fn contour_cases() {
        let flat = GrayImage::filled(6, 6, 80.0);
        assert!(contourize(&flat, 1.0).values.iter().all(|&v| v == 0.0));
        assert!(contourize(&flat, 0.0).values.iter().all(|&v| v == 255.0));
        // Step between columns 3 and 4: Sobel responds at columns 3 and 4 only.
        let step = GrayImage::from_fn(8, 5, |x, _| if x < 4 { 0.0 } else { 100.0 });
        let c = contourize(&step, 50.0);
        for y in 0..5 {
            for x in 0..8 {
                let expect = if x == 3 || x == 4 { 255.0 } else { 0.0 };
                assert_eq!(c.get(x, y), expect, "({x},{y})");
            }
        }
    }

    #[test]
    fn region_geometry() {
        let a = Region::new(0, 0, 10, 10).unwrap();
        let b = Region::new(5, 5, 10, 10).unwrap();
        assert_eq!(a.intersect(&b), Some(Region { x: 5, y: 5, w: 5, h: 5 }));
        assert!((a.iou(&b) - 25.0 / 175.0).abs() < 1e-12);
        assert_eq!(b.clip(12, 12), Some(Region { x: 5, y: 5, w: 7, h: 7 }));
        assert_eq!(Region::new(20, 20, 3, 3).unwrap().clip(12, 12), None);
        assert!(Region::new(1, 1, 0, 2).is_err());
    }

    #[test]
    fn png_round_trip() {
        let mut f = Frame::filled(4, 3, [1, 2, 3]);
        f.set_pixel(2, 1, [200, 100, 50]);
        let back = Frame::decode(&f.encode_png().unwrap()).unwrap();
        assert_eq!(back.pixels, f.pixels);
    }
}
