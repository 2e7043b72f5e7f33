//! Brute-force reference implementations and the suites that compare them
//! with the fast paths. Shared by the core tests and the acceptance run.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rerender_core::image::{contourize, gaussian_blur, gaussian_blur_gray, resize_bilinear, to_grayscale};
use rerender_core::mask::{detect_all, pyramid_scale, scaled_dims, Detection, MaskTemplate, MatchMode, PYRAMID_LEVELS};
use rerender_core::render::inpaint_simple;
use rerender_core::{Frame, GrayImage, Region};

const FLAT: f64 = 1e-4;

/// Two-pass zero-normalized cross-correlation, clamped at 0.
fn ncc_reference(img: &GrayImage, t: &GrayImage, x: u32, y: u32) -> f64 {
    let n = (t.width * t.height) as f64;
    let window: Vec<f64> = (0..t.height)
        .flat_map(|j| (0..t.width).map(move |i| (i, j)))
        .map(|(i, j)| img.get(x + i, y + j))
        .collect();
    let mi = window.iter().sum::<f64>() / n;
    let mt = t.values.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut vi = 0.0;
    let mut vt = 0.0;
    for (a, b) in window.iter().zip(&t.values) {
        num += (a - mi) * (b - mt);
        vi += (a - mi).powi(2);
        vt += (b - mt).powi(2);
    }
    if vi <= FLAT * n || vt <= FLAT * n {
        return 0.0;
    }
    (num / (vi * vt).sqrt()).clamp(-1.0, 1.0).max(0.0)
}

fn rank(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    let key = |d: &Detection| (d.region.y, d.region.x);
    b.score
        .total_cmp(&a.score)
        .then(key(a).cmp(&key(b)))
        .then(a.scale.total_cmp(&b.scale))
}

/// Greedy suppression written as "keep unless overlapped by an earlier keeper".
fn nms_reference(dets: &[Detection], iou: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(rank);
    let mut keep = vec![false; sorted.len()];
    for i in 0..sorted.len() {
        keep[i] = (0..i).all(|j| !keep[j] || sorted[j].region.iou(&sorted[i].region) < iou);
    }
    sorted.into_iter().zip(keep).filter(|(_, k)| *k).map(|(d, _)| d).collect()
}

fn brute_force_detect(frame: &Frame, templates: &[MaskTemplate], threshold: f64, iou: f64) -> Vec<Detection> {
    let gray = to_grayscale(frame);
    let mut all = Vec::new();
    for t in templates {
        let (img, pattern) = match t.mode {
            MatchMode::Intensity => (gray.clone(), &t.image),
            MatchMode::Contour => (contourize(&gray, t.contour_edge), &t.contour),
        };
        let mut hits = Vec::new();
        for level in 0..PYRAMID_LEVELS {
            let scale = pyramid_scale(level);
            let (sw, sh) = scaled_dims(pattern.width, pattern.height, scale);
            if sw > img.width || sh > img.height {
                continue;
            }
            let scaled = resize_bilinear(pattern, sw, sh).unwrap();
            for y in 0..=img.height - sh {
                for x in 0..=img.width - sw {
                    let score = ncc_reference(&img, &scaled, x, y);
                    if score >= threshold {
                        hits.push(Detection {
                            region: Region { x, y, w: sw, h: sh },
                            score,
                            scale,
                            label: t.template_id.clone(),
                            hook: rerender_core::HookKind::Mask,
                        });
                    }
                }
            }
        }
        all.extend(nms_reference(&hits, iou));
    }
    nms_reference(&all, iou)
}

fn random_texture(rng: &mut StdRng, w: u32, h: u32) -> Frame {
    let blocks = rng.random_range(2..5u32);
    let mut f = Frame::filled(w, h, [rng.random(), rng.random(), rng.random()]);
    for _ in 0..blocks * blocks {
        let (bw, bh) = (rng.random_range(1..=w.div_ceil(2)), rng.random_range(1..=h.div_ceil(2)));
        let (x, y) = (rng.random_range(0..=w - bw), rng.random_range(0..=h - bh));
        f.fill_region(&Region { x, y, w: bw, h: bh }, [rng.random(), rng.random(), rng.random()]);
    }
    f
}

fn background(rng: &mut StdRng, w: u32, h: u32) -> Frame {
    let base: [u8; 3] = [rng.random_range(60..200), rng.random_range(60..200), rng.random_range(60..200)];
    let mut f = Frame::filled(w, h, base);
    for y in 0..h {
        for x in 0..w {
            let n = rng.random_range(0..24u8);
            f.set_pixel(x, y, base.map(|c| c.saturating_add(n)));
        }
    }
    f
}

/// Matcher vs exhaustive scan on `plants` random plants; returns the number
/// of detections compared.
pub fn matcher_suite(plants: usize, seed: u64) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut compared = 0;
    for plant in 0..plants {
        let (fw, fh) = (rng.random_range(56..80u32), rng.random_range(44..64u32));
        let mut frame = background(&mut rng, fw, fh);
        let mut templates = Vec::new();
        for k in 0..rng.random_range(1..=2) {
            let (tw, th) = (rng.random_range(6..14u32), rng.random_range(6..14u32));
            let sprite = random_texture(&mut rng, tw, th);
            let scale = pyramid_scale(rng.random_range(2..7));
            let (sw, sh) = scaled_dims(tw, th, scale);
            let planted = resize_bilinear(&to_grayscale(&sprite), sw, sh).unwrap().to_frame();
            let (x, y) = (rng.random_range(0..=fw - sw), rng.random_range(0..=fh - sh));
            frame.paste(&planted, x, y);
            let mode = if rng.random_bool(0.25) { MatchMode::Contour } else { MatchMode::Intensity };
            let t = MaskTemplate::new(format!("p{plant}-t{k}"), "mask-x", to_grayscale(&sprite), mode, None).unwrap();
            templates.push(t);
        }
        let threshold = rng.random_range(0.6..0.95);
        let fast = detect_all(&frame, &templates, threshold);
        let slow = brute_force_detect(&frame, &templates, threshold, rerender_core::mask::DEFAULT_IOU_THRESHOLD);
        if fast.len() != slow.len() {
            return Err(format!("plant {plant}: {} detections vs {} from the exhaustive scan", fast.len(), slow.len()));
        }
        for (a, b) in fast.iter().zip(&slow) {
            let same = a.region == b.region && a.label == b.label && a.scale == b.scale;
            if !same || (a.score - b.score).abs() > 1e-9 {
                return Err(format!("plant {plant}: {a:?} vs {b:?}"));
            }
        }
        compared += slow.len();
    }
    Ok(compared)
}

fn random_detection(rng: &mut StdRng) -> Detection {
    let (w, h) = (rng.random_range(1..30u32), rng.random_range(1..30u32));
    Detection {
        region: Region { x: rng.random_range(0..60), y: rng.random_range(0..60), w, h },
        score: f64::from(rng.random_range(0..20u32)) / 20.0,
        scale: pyramid_scale(rng.random_range(0..PYRAMID_LEVELS)),
        label: "t".into(),
        hook: rerender_core::HookKind::Mask,
    }
}

pub fn nms_suite(sets: usize, seed: u64) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for case in 0..sets {
        let n = rng.random_range(0..40);
        let dets: Vec<Detection> = (0..n).map(|_| random_detection(&mut rng)).collect();
        let iou = rng.random_range(0.05..0.9);
        if rerender_core::mask::nms(dets.clone(), iou) != nms_reference(&dets, iou) {
            return Err(format!("set {case} differs"));
        }
    }
    Ok(sets)
}

fn dense_blur_reference(img: &GrayImage, r: &Region, sigma: f64) -> GrayImage {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut weights = Vec::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            weights.push((dx, dy, (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let total: f64 = weights.iter().map(|w| w.2).sum();
    let mut out = img.clone();
    for y in r.y..r.y + r.h {
        for x in r.x..r.x + r.w {
            let mut acc = 0.0;
            for &(dx, dy, w) in &weights {
                let sx = (x as i64 + dx).clamp(r.x as i64, r.x as i64 + r.w as i64 - 1) as u32;
                let sy = (y as i64 + dy).clamp(r.y as i64, r.y as i64 + r.h as i64 - 1) as u32;
                acc += w * img.get(sx, sy);
            }
            out.set(x, y, acc / total);
        }
    }
    out
}

/// Largest deviation of the separable blur from the dense convolution.
pub fn blur_suite(cases: usize, seed: u64) -> Result<f64, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst_all: f64 = 0.0;
    for case in 0..cases {
        let (w, h) = (rng.random_range(8..40u32), rng.random_range(8..40u32));
        let img = GrayImage::from_fn(w, h, |_, _| rng.random_range(0.0..255.0));
        let (rw, rh) = (rng.random_range(1..=w), rng.random_range(1..=h));
        let r = Region { x: rng.random_range(0..=w - rw), y: rng.random_range(0..=h - rh), w: rw, h: rh };
        let sigma = rng.random_range(0.3..4.0);
        let fast = gaussian_blur_gray(&img, &r, sigma).unwrap();
        let slow = dense_blur_reference(&img, &r, sigma);
        let worst = fast.values.iter().zip(&slow.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if worst > 1e-6 {
            return Err(format!("case {case}: max error {worst:e}"));
        }
        worst_all = worst_all.max(worst);

        let frame = img.to_frame();
        let blurred = gaussian_blur(&frame, &r, sigma).unwrap();
        let expected = dense_blur_reference(&to_grayscale(&frame), &r, sigma);
        for y in 0..h {
            for x in 0..w {
                let want = expected.get(x, y).round().clamp(0.0, 255.0);
                if (f64::from(blurred.pixel(x, y)[0]) - want).abs() > 1.0 {
                    return Err(format!("case {case}: frame blur at ({x},{y})"));
                }
            }
        }
    }
    Ok(worst_all)
}

/// Ring pixels found by scanning the whole frame for 8-neighbours of `r`.
fn inpaint_reference(f: &Frame, r: &Region) -> Frame {
    let inside = |x: i64, y: i64| x >= r.x as i64 && x < r.right() as i64 && y >= r.y as i64 && y < r.bottom() as i64;
    let mut ring = Vec::new();
    for y in 0..f.height as i64 {
        for x in 0..f.width as i64 {
            let near = x >= r.x as i64 - 1 && x <= r.right() as i64 && y >= r.y as i64 - 1 && y <= r.bottom() as i64;
            if near && !inside(x, y) {
                ring.push((x as f64, y as f64, f.pixel(x as u32, y as u32)));
            }
        }
    }
    let mut out = f.clone();
    for y in r.y..r.y + r.h {
        for x in r.x..r.x + r.w {
            let mut acc = [0.0; 3];
            let mut total = 0.0;
            for &(rx, ry, px) in &ring {
                let w = 1.0 / ((rx - x as f64).powi(2) + (ry - y as f64).powi(2)).sqrt();
                total += w;
                for c in 0..3 {
                    acc[c] += w * f64::from(px[c]);
                }
            }
            out.set_pixel(x, y, acc.map(|a| (a / total).round() as u8));
        }
    }
    out
}

pub fn inpaint_suite(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for case in 0..cases {
        let (w, h) = (rng.random_range(4..36u32), rng.random_range(4..36u32));
        let f = random_texture(&mut rng, w, h);
        let (rw, rh) = (rng.random_range(1..w), rng.random_range(1..h));
        let r = Region { x: rng.random_range(0..=w - rw), y: rng.random_range(0..=h - rh), w: rw, h: rh };
        if inpaint_simple(&f, &r) != inpaint_reference(&f, &r) {
            return Err(format!("case {case} differs"));
        }
    }
    Ok(cases)
}
