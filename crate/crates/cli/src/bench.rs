use std::time::{Duration, Instant};

use rerender_core::history::Annotation;
use rerender_core::intervention::{ActivationSet, ChainRunner, Registry};
use rerender_core::mask::PYRAMID_LEVELS;
use rerender_core::skin::{appears_on, device_of, synth_skin, synth_skin_scrolled, Device, ScrollScript, ELEMENTS};
use rerender_core::Frame;
use rerender_server::session::encode_jpeg;
use serde::Serialize;

use crate::Failure;

pub const TEMPLATES_PER_MASK: usize = 2;
const BENCH_USER: &str = "bench";

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub skin: String,
    pub masks: usize,
    pub templates_per_mask: usize,
    pub scales: usize,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub jpeg_quality: u8,
    /// Frames per second through apply_chain plus JPEG encoding.
    pub fps: f64,
    pub chain_fps: f64,
    pub chain_ms_mean: f64,
    pub encode_ms_mean: f64,
    pub detections_per_frame: f64,
}

/// `k` mask interventions for elements of `skin`, each with one template
/// cut from the `a` and one from the `b` theme of the same device.
pub fn mask_registry(skin: &str, k: usize) -> Result<(Registry, ActivationSet), Failure> {
    let device = device_of(skin).map_err(|e| Failure::usage(e.to_string()))?;
    let prefix = match device {
        Device::Mobile => "mobile",
        Device::Desktop => "desktop",
    };
    let elements: Vec<&str> = ELEMENTS.iter().copied().filter(|e| appears_on(skin, e).unwrap_or(false)).collect();
    if k > elements.len() {
        return Err(Failure::usage(format!("{skin} has only {} elements to mask", elements.len())));
    }
    let mut reg = Registry::in_memory();
    let mut ids = Vec::new();
    for (i, element) in elements.iter().take(k).enumerate() {
        let mut id = String::new();
        for (j, theme) in ["a", "b"].iter().enumerate() {
            let source = synth_skin(&format!("{prefix}-{theme}"), 1, 0).map_err(|e| Failure::domain(e.to_string()))?;
            let truth = source.truth(element).expect("element appears on both themes of a device");
            let a = Annotation {
                annotation_id: format!("bench-{i}-{j}"),
                record_id: "bench".into(),
                region: truth.region,
                label: format!("mask-{element}"),
                annotator: BENCH_USER.into(),
                created_ms: 0,
            };
            id = reg.compile_annotation(&a, &source.frame).map_err(|e| Failure::domain(e.to_string()))?.intervention_id;
        }
        ids.push(id);
    }
    let set = ActivationSet::new(BENCH_USER, ids).expect("distinct element names");
    Ok((reg, set))
}

/// Scrolling frames of `skin`, one pixel per frame.
pub fn bench_frames(skin: &str, frames: usize) -> Result<Vec<Frame>, Failure> {
    let script = ScrollScript { keyframes: vec![(0, 0), (frames as u64, frames as u32)] };
    (0..frames as u64)
        .map(|t| synth_skin_scrolled(skin, 2, t, &script).map(|s| s.frame).map_err(|e| Failure::usage(e.to_string())))
        .collect()
}

pub fn run(skin: &str, masks: usize, frames: usize, jpeg_quality: u8) -> Result<BenchReport, Failure> {
    if frames == 0 {
        return Err(Failure::usage("--frames must be at least 1"));
    }
    let (reg, set) = mask_registry(skin, masks)?;
    let input = bench_frames(skin, frames)?;
    let mut runner = ChainRunner::new();
    runner.apply(&input[0], &set, &reg);
    let (mut chain, mut encode) = (Duration::ZERO, Duration::ZERO);
    let mut detections = 0usize;
    for f in &input {
        let t0 = Instant::now();
        let (out, report) = runner.apply_reported(f, &set, &reg);
        let t1 = Instant::now();
        let jpeg = encode_jpeg(&out, jpeg_quality).map_err(|e| Failure::domain(e.to_string()))?;
        encode += t1.elapsed();
        chain += t1 - t0;
        std::hint::black_box(jpeg);
        detections += report.applied.iter().map(|s| s.detections.len()).sum::<usize>();
    }
    let n = frames as f64;
    let total = (chain + encode).as_secs_f64();
    Ok(BenchReport {
        skin: skin.to_string(),
        masks,
        templates_per_mask: TEMPLATES_PER_MASK,
        scales: PYRAMID_LEVELS,
        frames,
        width: input[0].width,
        height: input[0].height,
        jpeg_quality,
        fps: n / total,
        chain_fps: n / chain.as_secs_f64().max(f64::MIN_POSITIVE),
        chain_ms_mean: chain.as_secs_f64() * 1000.0 / n,
        encode_ms_mean: encode.as_secs_f64() * 1000.0 / n,
        detections_per_frame: detections as f64 / n,
    })
}
