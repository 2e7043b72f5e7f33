//! One-shot GUI element detection by multi-scale, multi-template matching.
//!
//! A [`MaskTemplate`] is a crop of an element taken from some frame. At match
//! time the template (not the frame) is resized over a fixed quarter-octave
//! pyramid, every position is scored with zero-normalized cross-correlation
//! and the hits are thinned with greedy non-maximum suppression.

mod correlate;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{contourize, Frame, GrayImage, Region};

pub use correlate::{Matcher, PreparedFrame};

/// Smallest template side accepted at creation.
pub const MIN_TEMPLATE_SIDE: u32 = 4;
pub const DEFAULT_INTENSITY_THRESHOLD: f64 = 0.85;
pub const DEFAULT_CONTOUR_THRESHOLD: f64 = 0.70;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;
/// Sobel magnitude used to binarize templates and frames in contour mode.
pub const DEFAULT_CONTOUR_EDGE: f64 = 60.0;
/// Pyramid: `0.5 * 2^(k/4)` for `k = 0..=8`.
pub const PYRAMID_LEVELS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Intensity,
    Contour,
}

impl MatchMode {
    pub fn default_threshold(self) -> f64 {
        match self {
            MatchMode::Intensity => DEFAULT_INTENSITY_THRESHOLD,
            MatchMode::Contour => DEFAULT_CONTOUR_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HookKind {
    Mask,
    Text,
    Model,
}

/// A scored region produced by any hook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub region: Region,
    /// In `[0, 1]`.
    pub score: f64,
    pub scale: f64,
    /// Template id for mask hits, model id for classifier hits.
    pub label: String,
    pub hook: HookKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskTemplate {
    pub template_id: String,
    pub name: String,
    pub image: GrayImage,
    pub contour: GrayImage,
    pub mode: MatchMode,
    pub contour_edge: f64,
    /// Annotation the crop came from, if any.
    pub origin: Option<String>,
}

impl MaskTemplate {
    pub fn new(
        template_id: impl Into<String>,
        name: impl Into<String>,
        image: GrayImage,
        mode: MatchMode,
        origin: Option<String>,
    ) -> Result<Self> {
        if image.width < MIN_TEMPLATE_SIDE || image.height < MIN_TEMPLATE_SIDE {
            return Err(Error::invalid(format!(
                "mask template must be at least {MIN_TEMPLATE_SIDE}x{MIN_TEMPLATE_SIDE}, got {}x{}",
                image.width, image.height
            )));
        }
        let contour = contourize(&image, DEFAULT_CONTOUR_EDGE);
        Ok(MaskTemplate {
            template_id: template_id.into(),
            name: name.into(),
            image,
            contour,
            mode,
            contour_edge: DEFAULT_CONTOUR_EDGE,
            origin,
        })
    }

    /// The image matched in this template's mode.
    pub fn pattern(&self) -> &GrayImage {
        match self.mode {
            MatchMode::Intensity => &self.image,
            MatchMode::Contour => &self.contour,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub threshold: f64,
    pub iou_threshold: f64,
}

impl MatchParams {
    pub fn new(threshold: f64) -> Self {
        MatchParams { threshold, iou_threshold: DEFAULT_IOU_THRESHOLD }
    }
}

pub fn pyramid_scale(level: usize) -> f64 {
    0.5 * 2f64.powf(level as f64 / 4.0)
}

/// Template extent at `scale`, never below one pixel.
pub fn scaled_dims(w: u32, h: u32, scale: f64) -> (u32, u32) {
    let sw = (w as f64 * scale).round().max(1.0) as u32;
    let sh = (h as f64 * scale).round().max(1.0) as u32;
    (sw, sh)
}

/// Pyramid levels whose scaled template fits inside the frame.
pub fn fitting_levels(base_w: u32, base_h: u32, frame_w: u32, frame_h: u32) -> Vec<usize> {
    (0..PYRAMID_LEVELS)
        .filter(|&k| {
            let (sw, sh) = scaled_dims(base_w, base_h, pyramid_scale(k));
            sw <= frame_w && sh <= frame_h
        })
        .collect()
}

/// Scales at which a `base_w` x `base_h` template fits a frame.
pub fn scale_pyramid(base_w: u32, base_h: u32, frame_w: u32, frame_h: u32) -> Vec<f64> {
    fitting_levels(base_w, base_h, frame_w, frame_h).into_iter().map(pyramid_scale).collect()
}

/// Descending score, then `(y, x, scale)` ascending.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.region.y.cmp(&b.region.y))
        .then(a.region.x.cmp(&b.region.x))
        .then(a.scale.partial_cmp(&b.scale).unwrap_or(Ordering::Equal))
}

/// Greedy non-maximum suppression: walk detections best-first and keep one
/// only if its IoU with every kept detection is below `iou_threshold`.
pub fn nms(mut dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    dets.sort_by(detection_order);
    let mut kept: Vec<Detection> = Vec::with_capacity(dets.len().min(64));
    for d in dets {
        if kept.iter().all(|k| k.region.iou(&d.region) < iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

pub fn match_multiscale(f: &Frame, t: &MaskTemplate, threshold: f64) -> Vec<Detection> {
    Matcher::new().match_template(f, t, &MatchParams::new(threshold))
}

pub fn detect_all(f: &Frame, templates: &[MaskTemplate], threshold: f64) -> Vec<Detection> {
    let refs: Vec<&MaskTemplate> = templates.iter().collect();
    Matcher::new().detect(f, &refs, &MatchParams::new(threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::to_grayscale;

    fn det(x: u32, y: u32, w: u32, h: u32, score: f64) -> Detection {
        Detection {
            region: Region { x, y, w, h },
            score,
            scale: 1.0,
            label: "t".into(),
            hook: HookKind::Mask,
        }
    }

    fn textured(w: u32, h: u32, seed: u32) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let v = (x.wrapping_mul(73) ^ y.wrapping_mul(151) ^ seed.wrapping_mul(2654435761)) % 256;
            v as f64
        })
    }

    #[test]
    fn pyramid_cases() {
        assert_eq!(scale_pyramid(8, 8, 64, 64).len(), 9);
        assert_eq!(pyramid_scale(0), 0.5);
        assert_eq!(pyramid_scale(4), 1.0);
        assert_eq!(pyramid_scale(8), 2.0);
        // 40 * s <= 64 keeps s <= 1.6: levels 0..=6 (1.414 -> 57 px), 1.682 -> 67 px.
        let s = scale_pyramid(40, 40, 64, 64);
        assert_eq!(s.len(), 7);
        assert!(s.iter().all(|&v| v <= 1.6));
        assert!(scale_pyramid(100, 100, 32, 32).is_empty());
    }

    #[test]
    fn template_minimum_size() {
        let small = GrayImage::filled(3, 8, 1.0);
        assert!(MaskTemplate::new("t", "mask-x", small, MatchMode::Intensity, None).is_err());
        let ok = MaskTemplate::new("t", "mask-x", textured(4, 4, 1), MatchMode::Contour, None).unwrap();
        assert_eq!((ok.contour.width, ok.contour.height), (4, 4));
    }

    #[test]
    fn nms_basic() {
        let one = vec![det(1, 1, 5, 5, 0.5)];
        assert_eq!(nms(one.clone(), 0.3), one);
        let kept = nms(vec![det(0, 0, 10, 10, 0.8), det(0, 0, 10, 10, 0.9)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
    }

    #[test]
    fn nms_tie_order() {
        let kept = nms(vec![det(5, 0, 4, 4, 0.7), det(0, 3, 4, 4, 0.7), det(0, 0, 4, 4, 0.7)], 0.3);
        let order: Vec<(u32, u32)> = kept.iter().map(|d| (d.region.x, d.region.y)).collect();
        assert_eq!(order, vec![(0, 0), (5, 0), (0, 3)]);
    }

    #[test]
    fn exact_plant_found() {
        let tmpl_img = textured(12, 9, 3);
        let mut frame = Frame::filled(64, 48, [255, 255, 255]);
        frame.paste(&tmpl_img.to_frame(), 10, 20);
        let t = MaskTemplate::new("t1", "mask-a", to_grayscale(&tmpl_img.to_frame()), MatchMode::Intensity, None).unwrap();
        let dets = match_multiscale(&frame, &t, 0.85);
        assert_eq!(dets.len(), 1, "{dets:?}");
        assert_eq!((dets[0].region.x, dets[0].region.y), (10, 20));
        assert!(dets[0].score >= 0.999);
        assert_eq!(dets[0].scale, 1.0);
    }

    #[test]
    fn blank_frame_no_hits() {
        let frame = Frame::filled(40, 30, [200, 200, 200]);
        let t = MaskTemplate::new("t", "mask-a", textured(8, 8, 9), MatchMode::Intensity, None).unwrap();
        assert!(match_multiscale(&frame, &t, 0.9).is_empty());
        assert!(detect_all(&frame, &[], 0.9).is_empty());
    }
}
