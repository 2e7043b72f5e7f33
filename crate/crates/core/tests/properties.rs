use proptest::prelude::*;
use rerender_core::history::{Annotation, HistoryQuery, HistoryStore};
use rerender_core::image::{ncc_score, resize_bilinear, to_grayscale};
use rerender_core::intervention::{apply_chain, ActivationSet, Registry};
use rerender_core::mask::{detect_all, nms, Detection, HookKind, MaskTemplate, MatchMode};
use rerender_core::render::{occlude_solid, RenderAction};
use rerender_core::{Frame, GrayImage, Region};

fn frame_strategy(max: u32) -> impl Strategy<Value = Frame> {
    (4..max, 4..max).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), (w * h * 3) as usize).prop_map(move |px| {
            let mut f = Frame::filled(w, h, [0, 0, 0]);
            f.pixels.copy_from_slice(&px);
            f
        })
    })
}

/// Regions that may hang off any edge of a `max`-sized frame.
fn loose_region(max: u32) -> impl Strategy<Value = Region> {
    (0..max + 8, 0..max + 8, 0..max, 0..max).prop_map(|(x, y, w, h)| Region { x, y, w, h })
}

fn action_strategy() -> impl Strategy<Value = RenderAction> {
    prop_oneof![
        any::<[u8; 3]>().prop_map(|rgb| RenderAction::Solid { rgb }),
        proptest::option::of(0.5f64..5.0).prop_map(|sigma| RenderAction::Blur { sigma }),
        (any::<[u8; 3]>(), 1u32..4).prop_map(|(rgb, thickness)| RenderAction::Highlight {
            rgb,
            thickness,
            label: String::new()
        }),
        Just(RenderAction::Inpaint {}),
    ]
}

fn textured(w: u32, h: u32, seed: u32) -> Frame {
    GrayImage::from_fn(w, h, |x, y| {
        let v = (x.wrapping_mul(73) ^ y.wrapping_mul(151) ^ seed.wrapping_mul(2654435761)).wrapping_mul(40503) >> 8;
        f64::from(v % 200 + 20)
    })
    .to_frame()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn render_never_touches_outside_pixels(f in frame_strategy(40), r in loose_region(40), action in action_strategy()) {
        let mut out = f.clone();
        action.apply(&mut out, &r);
        prop_assert_eq!((out.width, out.height), (f.width, f.height));
        let clipped = r.clip(f.width, f.height);
        for y in 0..f.height {
            for x in 0..f.width {
                if !clipped.is_some_and(|c| c.contains(x, y)) {
                    prop_assert_eq!(out.pixel(x, y), f.pixel(x, y), "({}, {})", x, y);
                }
            }
        }
    }

    #[test]
    fn solid_is_idempotent(f in frame_strategy(32), r in loose_region(32), rgb in any::<[u8; 3]>()) {
        let once = occlude_solid(&f, &r, rgb);
        prop_assert_eq!(occlude_solid(&once, &r, rgb), once);
    }

    #[test]
    fn inpaint_with_constant_ring_is_idempotent(
        rgb in any::<[u8; 3]>(),
        w in 4u32..30,
        h in 4u32..30,
        r in loose_region(30),
    ) {
        let f = Frame::filled(w, h, rgb);
        let mut once = f.clone();
        RenderAction::Inpaint {}.apply(&mut once, &r);
        let mut twice = once.clone();
        RenderAction::Inpaint {}.apply(&mut twice, &r);
        prop_assert_eq!(&once, &f);
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn nms_output_is_sorted_sparse_subset(
        raw in proptest::collection::vec((0u32..50, 0u32..50, 1u32..25, 1u32..25, 0u32..10), 0..30),
        iou in 0.05f64..0.95,
    ) {
        let dets: Vec<Detection> = raw
            .iter()
            .map(|&(x, y, w, h, s)| Detection {
                region: Region { x, y, w, h },
                score: f64::from(s) / 10.0,
                scale: 1.0,
                label: "t".into(),
                hook: HookKind::Mask,
            })
            .collect();
        let kept = nms(dets.clone(), iou);
        prop_assert!(kept.iter().all(|k| dets.contains(k)));
        prop_assert!(kept.windows(2).all(|p| p[0].score >= p[1].score));
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(a.region.iou(&b.region) < iou);
            }
        }
    }

    #[test]
    fn ncc_is_local(seed in any::<u32>(), x in 0u32..20, y in 0u32..20, tw in 4u32..12, th in 4u32..12) {
        let img = to_grayscale(&textured(40, 40, seed));
        let t = to_grayscale(&textured(tw, th, seed ^ 7));
        let at = Region { x, y, w: tw, h: th };
        let window = img.crop(&at).unwrap();
        let whole = ncc_score(&img, &t, &at).unwrap();
        let alone = ncc_score(&window, &t, &Region { x: 0, y: 0, w: tw, h: th }).unwrap();
        prop_assert!((whole - alone).abs() <= 1e-12);
    }

    #[test]
    fn resize_round_trip_is_close_on_smooth_images(w in 4u32..40, h in 4u32..40, ax in -3.0f64..3.0, ay in -3.0f64..3.0, c in 50.0f64..200.0) {
        let img = GrayImage::from_fn(w, h, |x, y| c + ax * f64::from(x) + ay * f64::from(y) + 10.0 * (f64::from(x + y) / 7.0).sin());
        let back = resize_bilinear(&resize_bilinear(&img, 2 * w, 2 * h).unwrap(), w, h).unwrap();
        let mae = img.values.iter().zip(&back.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / img.values.len() as f64;
        prop_assert!(mae < 2.0, "mae {}", mae);
    }
}

fn plant(bg: [u8; 3], sprite: &Frame, x: u32, y: u32) -> Frame {
    let mut f = Frame::filled(72, 56, bg);
    f.paste(sprite, x, y);
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn top_detection_follows_translation(
        seed in any::<u32>(),
        x in 0u32..30,
        y in 0u32..20,
        dx in 0u32..20,
        dy in 0u32..16,
    ) {
        let sprite = textured(14, 12, seed);
        let t = MaskTemplate::new("t", "mask-x", to_grayscale(&sprite), MatchMode::Intensity, None).unwrap();
        let a = detect_all(&plant([240, 240, 240], &sprite, x, y), std::slice::from_ref(&t), 0.85);
        let b = detect_all(&plant([240, 240, 240], &sprite, x + dx, y + dy), std::slice::from_ref(&t), 0.85);
        prop_assert_eq!(a[0].scale, 1.0);
        prop_assert_eq!(b[0].scale, 1.0);
        prop_assert_eq!(b[0].region, a[0].region.translate(i64::from(dx), i64::from(dy)).unwrap());
    }

    #[test]
    fn intensity_matching_ignores_affine_brightness(seed in any::<u32>(), x in 0u32..50, y in 0u32..40, gain in 1u8..3, offset in 0u8..40) {
        let sprite = textured(14, 12, seed);
        let t = MaskTemplate::new("t", "mask-x", to_grayscale(&sprite), MatchMode::Intensity, None).unwrap();
        let mut f = plant([30, 30, 30], &sprite, x, y);
        for p in f.pixels.iter_mut() {
            *p /= 3;
        }
        let mut g = f.clone();
        for p in g.pixels.iter_mut() {
            *p = *p * gain + offset;
        }
        let a = detect_all(&f, std::slice::from_ref(&t), 0.85);
        let b = detect_all(&g, std::slice::from_ref(&t), 0.85);
        prop_assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            prop_assert_eq!(p.region, q.region);
            prop_assert!((p.score - q.score).abs() <= 1e-9);
        }
    }
}

fn annotation(id: &str, region: Region, label: &str) -> Annotation {
    Annotation {
        annotation_id: id.into(),
        record_id: "r".into(),
        region,
        label: label.into(),
        annotator: "alice".into(),
        created_ms: 0,
    }
}

/// Two mask interventions built from sprites planted into one source frame.
fn two_masks(reg: &mut Registry, seed: u32) -> (Frame, Vec<String>) {
    let s1 = textured(12, 10, seed);
    let s2 = textured(10, 12, seed ^ 0x55);
    let mut src = Frame::filled(80, 60, [250, 250, 250]);
    src.paste(&s1, 5, 5);
    src.paste(&s2, 40, 30);
    reg.add_user("alice");
    let a = reg.compile_annotation(&annotation("a1", Region { x: 5, y: 5, w: 12, h: 10 }, "mask-one"), &src).unwrap();
    let b = reg.compile_annotation(&annotation("a2", Region { x: 40, y: 30, w: 10, h: 12 }, "mask-two"), &src).unwrap();
    reg.set_render_action("alice", &b.intervention_id, RenderAction::Solid { rgb: [255, 0, 255] }).unwrap();
    (src, vec![a.intervention_id, b.intervention_id])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chain_skips_failing_interventions(seed in any::<u32>(), junk in proptest::collection::vec("[a-z]{3,8}", 0..3), pos in 0usize..3) {
        let mut reg = Registry::in_memory();
        let (src, ids) = two_masks(&mut reg, seed);
        let mut with_junk = ids.clone();
        for (i, j) in junk.iter().enumerate() {
            with_junk.insert((pos + i).min(with_junk.len()), format!("missing/{j}-{i}"));
        }
        let clean = apply_chain(&src, &ActivationSet::new("alice", ids).unwrap(), &reg);
        let noisy = apply_chain(&src, &ActivationSet::new("alice", with_junk).unwrap(), &reg);
        prop_assert_eq!(noisy, clean);
    }

    #[test]
    fn registry_round_trip_preserves_outputs(seed in any::<u32>(), reversed in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let mut reg = Registry::open(dir.path()).unwrap();
        let (src, mut ids) = two_masks(&mut reg, seed);
        if reversed {
            ids.reverse();
        }
        let set = ActivationSet::new("alice", ids).unwrap();
        let before = apply_chain(&src, &set, &reg);
        let reloaded = Registry::open(dir.path()).unwrap();
        prop_assert_eq!(apply_chain(&src, &set, &reloaded), before);
    }

    #[test]
    fn history_is_append_only_and_rate_limited(
        gaps in proptest::collection::vec(0u64..60, 1..40),
        fps in prop_oneof![Just(30.0f64), Just(60.0), Just(24.0)],
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = HistoryStore::open(dir.path()).unwrap();
        store.ensure_user("alice");
        let mut ts = 1_000u64;
        let mut snapshots = Vec::new();
        for (seq, gap) in gaps.iter().enumerate() {
            ts += gap;
            let f = Frame::filled(8, 8, [seq as u8, 0, 0]).with_meta("cam", seq as u64 + 1, ts);
            store.record("alice", &f, fps).unwrap();
            let page = store.list("alice", &HistoryQuery::default()).unwrap();
            snapshots.push(page.records);
        }
        for pair in snapshots.windows(2) {
            prop_assert_eq!(&pair[1][..pair[0].len()], &pair[0][..]);
        }
        let last = snapshots.last().unwrap();
        for pair in last.windows(2) {
            let spacing = (pair[1].timestamp_ms - pair[0].timestamp_ms) as f64;
            prop_assert!(spacing >= 1000.0 / fps - 1.0);
        }
        let reopened = HistoryStore::open(dir.path()).unwrap();
        prop_assert_eq!(&reopened.list("alice", &HistoryQuery::default()).unwrap().records, last);
    }
}
