//! Exhaustive stride-1 NCC scanning.
//!
//! Small problems are scanned directly. Large ones are screened with an
//! FFT cross-correlation in `f32`: two real templates are packed into one
//! complex kernel so a single inverse transform yields both correlation
//! surfaces. A position survives screening only if its correlation plus a
//! rigorous rounding margin could still reach the threshold; survivors are
//! rescored exactly in `f64` with the direct formula, so the output equals a
//! full direct scan.

use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{
    fitting_levels, nms, pyramid_scale, scaled_dims, Detection, HookKind, MaskTemplate,
    MatchMode, MatchParams,
};
use crate::image::{contourize, ncc_unchecked, resize_bilinear, to_grayscale, Frame, GrayImage, Region, FLAT_VARIANCE};

type C32 = Complex<f32>;

/// Rounding allowance of the screening correlation, in units of
/// `eps * log2(N) * |frame| * |kernel|`.
const MARGIN_FACTOR: f64 = 16.0;
const CACHE_LIMIT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum ContextKey {
    Intensity,
    Contour(u64),
}

/// A frame prepared for matching: grayscale plus lazily built per-mode
/// integral images and spectra. Reuse it while the frame is unchanged.
pub struct PreparedFrame {
    gray: GrayImage,
    contexts: HashMap<ContextKey, FrameContext>,
}

impl PreparedFrame {
    pub fn new(f: &Frame) -> Self {
        PreparedFrame { gray: to_grayscale(f), contexts: HashMap::new() }
    }

    pub fn from_gray(gray: GrayImage) -> Self {
        PreparedFrame { gray, contexts: HashMap::new() }
    }

    pub fn gray(&self) -> &GrayImage {
        &self.gray
    }

    fn context(&mut self, key: ContextKey) -> &mut FrameContext {
        let gray = &self.gray;
        self.contexts.entry(key).or_insert_with(|| match key {
            ContextKey::Intensity => FrameContext::new(gray.clone()),
            ContextKey::Contour(bits) => FrameContext::new(contourize(gray, f64::from_bits(bits))),
        })
    }
}

struct FrameContext {
    image: GrayImage,
    isum: Vec<f64>,
    isq: Vec<f64>,
    mean: f64,
    norm: f64,
    spectrum: Option<Vec<C32>>,
}

impl FrameContext {
    fn new(image: GrayImage) -> Self {
        let w = image.width as usize;
        let h = image.height as usize;
        let mean = image.mean();
        let stride = w + 1;
        let mut isum = vec![0.0; stride * (h + 1)];
        let mut isq = vec![0.0; stride * (h + 1)];
        let mut norm2 = 0.0;
        for y in 0..h {
            let (mut rs, mut rq) = (0.0, 0.0);
            for x in 0..w {
                let v = image.values[y * w + x] - mean;
                rs += v;
                rq += v * v;
                isum[(y + 1) * stride + x + 1] = isum[y * stride + x + 1] + rs;
                isq[(y + 1) * stride + x + 1] = isq[y * stride + x + 1] + rq;
            }
            norm2 += rq;
        }
        FrameContext { image, isum, isq, mean, norm: norm2.sqrt(), spectrum: None }
    }
}

/// One pyramid level of a template, ready for scanning.
struct Scaled {
    level: usize,
    image: GrayImage,
    centered: Vec<f64>,
    norm: f64,
}

struct Plans {
    w: usize,
    h: usize,
    row_fwd: Arc<dyn Fft<f32>>,
    row_inv: Arc<dyn Fft<f32>>,
    col_fwd: Arc<dyn Fft<f32>>,
    col_inv: Arc<dyn Fft<f32>>,
    scratch: Vec<C32>,
}

impl Plans {
    fn new(planner: &mut FftPlanner<f32>, w: usize, h: usize) -> Self {
        let row_fwd = planner.plan_fft_forward(w);
        let row_inv = planner.plan_fft_inverse(w);
        let col_fwd = planner.plan_fft_forward(h);
        let col_inv = planner.plan_fft_inverse(h);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Plans { w, h, row_fwd, row_inv, col_fwd, col_inv, scratch: vec![C32::default(); scratch_len] }
    }

    /// Row-major `h x w` input; the spectrum comes back column-major.
    fn forward(&mut self, mut buf: Vec<C32>) -> Vec<C32> {
        self.row_fwd.process_with_scratch(&mut buf, &mut self.scratch);
        let mut t = vec![C32::default(); buf.len()];
        transpose::transpose(&buf, &mut t, self.w, self.h);
        self.col_fwd.process_with_scratch(&mut t, &mut self.scratch);
        t
    }

    /// Inverse of [`Plans::forward`] (unnormalized); only the first `rows`
    /// output rows are finished.
    fn inverse(&mut self, spec: &mut [C32], out: &mut [C32], rows: usize) {
        self.col_inv.process_with_scratch(spec, &mut self.scratch);
        transpose::transpose(spec, out, self.h, self.w);
        self.row_inv.process_with_scratch(&mut out[..rows * self.w], &mut self.scratch);
    }
}

type LevelKey = (String, MatchMode, u32, u32);
type PairKey = (LevelKey, usize, Option<(LevelKey, usize)>, usize, usize);

/// Template matcher with caches for resized templates, FFT plans and kernel
/// spectra. Results never depend on cache state.
pub struct Matcher {
    planner: FftPlanner<f32>,
    plans: HashMap<(usize, usize), Plans>,
    levels: HashMap<LevelKey, Arc<Vec<Option<Scaled>>>>,
    spectra: HashMap<PairKey, Arc<Vec<C32>>>,
    product: Vec<C32>,
    corr: Vec<C32>,
    flags: Vec<bool>,
}

impl Default for Matcher {
    fn default() -> Self {
        Self::new()
    }
}

struct Unit {
    template: usize,
    levels: Arc<Vec<Option<Scaled>>>,
    level: usize,
    key: LevelKey,
}

impl Unit {
    fn scaled(&self) -> &Scaled {
        self.levels[self.level].as_ref().expect("unit built from a fitting level")
    }
}

impl Matcher {
    pub fn new() -> Self {
        Matcher {
            planner: FftPlanner::new(),
            plans: HashMap::new(),
            levels: HashMap::new(),
            spectra: HashMap::new(),
            product: Vec::new(),
            corr: Vec::new(),
            flags: Vec::new(),
        }
    }

    /// Detections of one template after per-template NMS.
    pub fn match_template(&mut self, f: &Frame, t: &MaskTemplate, params: &MatchParams) -> Vec<Detection> {
        self.detect(f, &[t], params)
    }

    /// Union of per-template matches followed by one global NMS pass.
    pub fn detect(&mut self, f: &Frame, templates: &[&MaskTemplate], params: &MatchParams) -> Vec<Detection> {
        if templates.is_empty() {
            return Vec::new();
        }
        let mut prepared = PreparedFrame::new(f);
        self.detect_prepared(&mut prepared, templates, params)
    }

    pub fn detect_prepared(
        &mut self,
        frame: &mut PreparedFrame,
        templates: &[&MaskTemplate],
        params: &MatchParams,
    ) -> Vec<Detection> {
        let mut per_template: Vec<Vec<Detection>> = vec![Vec::new(); templates.len()];
        let mut by_mode: Vec<(ContextKey, Vec<usize>)> = Vec::new();
        for (i, t) in templates.iter().enumerate() {
            let key = match t.mode {
                MatchMode::Intensity => ContextKey::Intensity,
                MatchMode::Contour => ContextKey::Contour(t.contour_edge.to_bits()),
            };
            match by_mode.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(i),
                None => by_mode.push((key, vec![i])),
            }
        }
        for (key, idxs) in by_mode {
            let ctx = frame.context(key);
            let subset: Vec<(usize, &MaskTemplate)> = idxs.iter().map(|&i| (i, templates[i])).collect();
            self.scan_context(ctx, &subset, params, &mut per_template);
        }
        let mut all = Vec::new();
        for hits in per_template {
            all.extend(nms(hits, params.iou_threshold));
        }
        nms(all, params.iou_threshold)
    }

    fn scaled_levels(&mut self, t: &MaskTemplate) -> (LevelKey, Arc<Vec<Option<Scaled>>>) {
        let pattern = t.pattern();
        let key = (t.template_id.clone(), t.mode, pattern.width, pattern.height);
        if self.levels.len() > CACHE_LIMIT {
            self.levels.clear();
        }
        let levels = self
            .levels
            .entry(key.clone())
            .or_insert_with(|| {
                Arc::new(
                    (0..super::PYRAMID_LEVELS)
                        .map(|level| {
                            let (sw, sh) = scaled_dims(pattern.width, pattern.height, pyramid_scale(level));
                            let image = resize_bilinear(pattern, sw, sh).ok()?;
                            let mean = image.mean();
                            let centered: Vec<f64> = image.values.iter().map(|v| v - mean).collect();
                            let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
                            Some(Scaled { level, image, centered, norm })
                        })
                        .collect(),
                )
            })
            .clone();
        (key, levels)
    }

    fn scan_context(
        &mut self,
        ctx: &mut FrameContext,
        templates: &[(usize, &MaskTemplate)],
        params: &MatchParams,
        out: &mut [Vec<Detection>],
    ) {
        let fw = ctx.image.width;
        let fh = ctx.image.height;
        let total = fw as f64 * fh as f64;
        let fft_cost = total * total.log2().max(1.0) * 0.5;
        let mut fft_units = Vec::new();
        for &(ti, t) in templates {
            let pattern = t.pattern();
            let (key, levels) = self.scaled_levels(t);
            for level in fitting_levels(pattern.width, pattern.height, fw, fh) {
                let unit = Unit { template: ti, levels: levels.clone(), level, key: key.clone() };
                let s = unit.scaled();
                let (w, h) = (s.image.width as f64, s.image.height as f64);
                let direct_cost = (fw as f64 - w + 1.0) * (fh as f64 - h + 1.0) * w * h;
                if params.threshold <= 0.0 || direct_cost <= fft_cost {
                    direct_scan(ctx, &unit, params.threshold, &t.template_id, &mut out[ti]);
                } else {
                    fft_units.push(unit);
                }
            }
        }
        for pair in fft_units.chunks(2) {
            self.fft_scan(ctx, pair, templates, params.threshold, out);
        }
    }

    fn fft_scan(
        &mut self,
        ctx: &mut FrameContext,
        pair: &[Unit],
        templates: &[(usize, &MaskTemplate)],
        threshold: f64,
        out: &mut [Vec<Detection>],
    ) {
        let w = ctx.image.width as usize;
        let h = ctx.image.height as usize;
        let Matcher { planner, plans, spectra, product, corr, flags, .. } = self;
        let plans = plans.entry((w, h)).or_insert_with(|| Plans::new(planner, w, h));
        if ctx.spectrum.is_none() {
            let buf: Vec<C32> =
                ctx.image.values.iter().map(|&v| C32::new((v - ctx.mean) as f32, 0.0)).collect();
            ctx.spectrum = Some(plans.forward(buf));
        }
        let pair_key: PairKey = (
            pair[0].key.clone(),
            pair[0].level,
            pair.get(1).map(|u| (u.key.clone(), u.level)),
            w,
            h,
        );
        if spectra.len() > CACHE_LIMIT {
            spectra.clear();
        }
        let kernel = spectra
            .entry(pair_key)
            .or_insert_with(|| {
                let mut buf = vec![C32::default(); w * h];
                for (slot, unit) in pair.iter().enumerate() {
                    let s = unit.scaled();
                    let sw = s.image.width as usize;
                    for (i, &v) in s.centered.iter().enumerate() {
                        let cell = &mut buf[(i / sw) * w + i % sw];
                        if slot == 0 {
                            cell.re = v as f32;
                        } else {
                            cell.im = v as f32;
                        }
                    }
                }
                Arc::new(plans.forward(buf))
            })
            .clone();
        let spectrum = ctx.spectrum.as_ref().expect("spectrum built above");
        product.clear();
        product.extend(spectrum.iter().zip(kernel.iter()).map(|(a, b)| a * b.conj()));
        corr.resize(w * h, C32::default());
        let rows = pair.iter().map(|u| h - u.scaled().image.height as usize + 1).max().unwrap_or(0);
        plans.inverse(product, corr, rows);

        let n_total = (w * h) as f64;
        let kernel_norm = pair.iter().map(|u| u.scaled().norm.powi(2)).sum::<f64>().sqrt();
        let margin =
            MARGIN_FACTOR * f32::EPSILON as f64 * n_total.log2().max(1.0) * ctx.norm * kernel_norm;
        let stride = w + 1;
        for (slot, unit) in pair.iter().enumerate() {
            let s = unit.scaled();
            if s.norm * s.norm <= FLAT_VARIANCE * s.centered.len() as f64 {
                continue;
            }
            let label = &templates.iter().find(|(i, _)| *i == unit.template).expect("unit template").1.template_id;
            let (tw, th) = (s.image.width as usize, s.image.height as usize);
            let n = (tw * th) as f64;
            let k = ScreenConsts {
                inv_total: 1.0 / n_total,
                inv_n: 1.0 / n,
                margin,
                flat: 0.5 * FLAT_VARIANCE * n,
                need: threshold * threshold * s.norm * s.norm,
                // Slot 0 lives in the real part, slot 1 in the negated imaginary part.
                weights: if slot == 0 { (1.0, 0.0) } else { (0.0, -1.0) },
            };
            let nx = w - tw + 1;
            flags.resize(nx, false);
            for y in 0..=h - th {
                let top = y * stride;
                let bot = (y + th) * stride;
                let sums = [
                    &ctx.isum[top..top + nx],
                    &ctx.isum[top + tw..top + tw + nx],
                    &ctx.isum[bot..bot + nx],
                    &ctx.isum[bot + tw..bot + tw + nx],
                ];
                let sqs = [
                    &ctx.isq[top..top + nx],
                    &ctx.isq[top + tw..top + tw + nx],
                    &ctx.isq[bot..bot + nx],
                    &ctx.isq[bot + tw..bot + tw + nx],
                ];
                if !screen_row(&corr[y * w..y * w + nx], sums, sqs, &k, flags) {
                    continue;
                }
                for (x, _) in flags.iter().enumerate().filter(|(_, f)| **f) {
                    push_if_hit(ctx, s, x as u32, y as u32, threshold, label, &mut out[unit.template]);
                }
            }
        }
    }
}

struct ScreenConsts {
    inv_total: f64,
    inv_n: f64,
    margin: f64,
    flat: f64,
    need: f64,
    weights: (f32, f32),
}

/// Flags positions of one row that may reach the threshold and reports
/// whether any was flagged. Conservative: the f32 correlation is widened by
/// `margin` before the test.
fn screen_row(row: &[C32], sums: [&[f64]; 4], sqs: [&[f64]; 4], k: &ScreenConsts, flags: &mut [bool]) -> bool {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { screen_row_avx2(row, sums, sqs, k, flags) };
    }
    screen_row_body(row, sums, sqs, k, flags)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn screen_row_avx2(row: &[C32], sums: [&[f64]; 4], sqs: [&[f64]; 4], k: &ScreenConsts, flags: &mut [bool]) -> bool {
    screen_row_body(row, sums, sqs, k, flags)
}

#[inline(always)]
fn screen_row_body(row: &[C32], sums: [&[f64]; 4], sqs: [&[f64]; 4], k: &ScreenConsts, flags: &mut [bool]) -> bool {
    let n = flags.len();
    let row = &row[..n];
    let [tl, tr, bl, br] = sums.map(|v| &v[..n]);
    let [ql, qr, pl, pr] = sqs.map(|v| &v[..n]);
    let (wr, wi) = k.weights;
    let mut any = false;
    for x in 0..n {
        let raw = row[x].re * wr + row[x].im * wi;
        let c = raw as f64 * k.inv_total + k.margin;
        let s1 = br[x] - tr[x] - bl[x] + tl[x];
        let s2 = pr[x] - qr[x] - pl[x] + ql[x];
        let var = s2 - s1 * s1 * k.inv_n;
        let hit = (c > 0.0) & (var > k.flat) & (c * c >= k.need * var);
        flags[x] = hit;
        any |= hit;
    }
    any
}

fn direct_scan(ctx: &FrameContext, unit: &Unit, threshold: f64, label: &str, out: &mut Vec<Detection>) {
    let s = unit.scaled();
    for y in 0..=ctx.image.height - s.image.height {
        for x in 0..=ctx.image.width - s.image.width {
            push_if_hit(ctx, s, x, y, threshold, label, out);
        }
    }
}

#[inline]
fn push_if_hit(ctx: &FrameContext, s: &Scaled, x: u32, y: u32, threshold: f64, label: &str, out: &mut Vec<Detection>) {
    let score = ncc_unchecked(&ctx.image, &s.image, x, y).max(0.0);
    if score >= threshold {
        out.push(Detection {
            region: Region { x, y, w: s.image.width, h: s.image.height },
            score,
            scale: pyramid_scale(s.level),
            label: label.to_string(),
            hook: HookKind::Mask,
        });
    }
}
