use maskdiff::formats::{
    decode_pgm, encode_pgm, heatmap, parse_amap, parse_metrics, parse_regions, parse_scen, parse_verdicts,
    render_mask, render_metrics, render_regions, render_scen, render_state, render_verdicts, Amap, MetricsRow,
    RegionBlock, Solver,
};
use maskdiff::harness::{Archetype, BlobSpec, Finding, ScenarioSpec, Subject, Verdict};
use maskdiff::{masked_softmax, AttentionKind, AttentionMask, AttentionState, GridShape, Matrix, PixelSet};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
    ]
}

fn logits() -> impl Strategy<Value = AttentionState<f64>> {
    (1usize..5, 1usize..5, 1usize..5).prop_flat_map(|(h, w, l)| {
        prop::collection::vec(finite(), h * w * l).prop_map(move |v| {
            AttentionState::new(GridShape::new(h, w).unwrap(), AttentionKind::Logits, Matrix::from_vec(h * w, l, v).unwrap())
                .unwrap()
        })
    })
}

fn bits(m: &Matrix<f64>) -> Vec<u64> {
    m.as_slice().iter().map(|v| v.to_bits()).collect()
}

fn pixel_set(n: usize) -> impl Strategy<Value = PixelSet> {
    prop::collection::btree_set(0..n, 0..n.min(12))
}

proptest! {
    #[test]
    fn amap_logits_round_trip(state in logits()) {
        let back = parse_amap::<f64>(&render_state(&state).unwrap()).unwrap().into_state().unwrap();
        prop_assert_eq!(back.kind(), AttentionKind::Logits);
        prop_assert_eq!(back.shape(), state.shape());
        prop_assert_eq!(bits(back.values()), bits(state.values()));
    }

    #[test]
    fn amap_probs_round_trip(state in logits()) {
        let clipped = state.values().map(|v| v.clamp(-700.0, 700.0));
        let probs = masked_softmax(&AttentionState::new(state.shape(), AttentionKind::Logits, clipped).unwrap(), None).unwrap();
        let parsed = parse_amap::<f64>(&render_state(&probs).unwrap()).unwrap();
        prop_assert_eq!(parsed, Amap::State(probs));
    }

    #[test]
    fn amap_mask_round_trip((h, w, l) in (1usize..5, 1usize..5, 1usize..4), w0 in 0.1f64..20.0, seed in any::<u64>()) {
        let values: Vec<f64> = (0..h * w * l).map(|i| if (seed >> (i % 64)) & 1 == 1 { w0 } else { 0.0 }).collect();
        let shape = GridShape::new(h, w).unwrap();
        let mask = AttentionMask::from_values(shape, Matrix::from_vec(h * w, l, values).unwrap()).unwrap();
        prop_assert_eq!(parse_amap::<f64>(&render_mask(&mask)).unwrap(), Amap::Mask(mask));
    }

    #[test]
    fn amap_f32_round_trip(state in logits()) {
        let v32: Vec<f32> = state.values().as_slice().iter().map(|&v| v as f32).filter(|v| v.is_finite()).collect();
        prop_assume!(v32.len() == state.values().as_slice().len());
        let m = Matrix::from_vec(state.values().rows(), state.values().cols(), v32).unwrap();
        let s32 = AttentionState::new(state.shape(), AttentionKind::Logits, m).unwrap();
        prop_assert_eq!(parse_amap::<f32>(&render_state(&s32).unwrap()).unwrap(), Amap::State(s32));
    }

    #[test]
    fn scen_round_trip(
        (h, w) in (1usize..20, 1usize..20),
        steps in 1usize..100,
        seed in any::<u64>(),
        noise in 0.0f64..2.0,
        bg in -5.0f64..10.0,
        archetype in prop::sample::select(Archetype::ALL.to_vec()),
        tokens in prop::collection::vec(("[a-z]{1,8}", 0.0f64..1.0, 0.0f64..1.0, 0.1f64..20.0, 0.1f64..5.0, -1.0f64..1.0, any::<bool>()), 1..4),
    ) {
        let shape = GridShape::new(h, w).unwrap();
        let tokens = tokens
            .into_iter()
            .map(|(label, r, c, amp, sigma, drift, zoned)| {
                let mut t = BlobSpec::<f64>::new(&label, (r * (h - 1) as f64, c * (w - 1) as f64), amp, sigma).with_drift((drift, -drift));
                if zoned {
                    t = t.with_zone((0..shape.num_pixels()).step_by(3).collect());
                }
                t
            })
            .collect();
        let spec = ScenarioSpec { shape, num_steps: steps, tokens, noise_sigma: noise, seed, archetype, background_logit: bg };
        prop_assert_eq!(parse_scen::<f64>(&render_scen(&spec)).unwrap(), spec);
    }

    #[test]
    fn region_round_trip(
        blocks in prop::collection::vec((any::<bool>(), prop::collection::vec(pixel_set(64), 0..4), prop::collection::vec(finite(), 0..3)), 1..4),
    ) {
        let blocks: Vec<RegionBlock<f64>> = blocks
            .into_iter()
            .map(|(exact, regions, values)| RegionBlock {
                solver: if exact { Solver::Exact } else { Solver::Approx },
                regions: regions.into_iter().enumerate().map(|(i, r)| (i * 2 + 1, r)).collect(),
                objectives: values.into_iter().enumerate().map(|(i, v)| (format!("obj{i}"), v)).collect(),
            })
            .collect();
        prop_assert_eq!(parse_regions::<f64>(&render_regions(&blocks)).unwrap(), blocks);
    }

    #[test]
    fn metrics_round_trip(rows in prop::collection::vec((0usize..100, 0usize..8, finite(), 0usize..300, 0usize..300), 0..20)) {
        let rows: Vec<MetricsRow<f64>> = rows
            .into_iter()
            .map(|(step, token, score, region_size, mask_nonzeros)| MetricsRow { step, token, score, region_size, mask_nonzeros })
            .collect();
        prop_assert_eq!(parse_metrics::<f64>(&render_metrics(&rows)).unwrap(), rows);
    }

    #[test]
    fn verdicts_round_trip(pairs in prop::collection::vec((0usize..5, 0usize..5, 0.0f64..1.0, 0.001f64..100.0, 0u8..4), 0..6)) {
        let all = [Verdict::Overlapping, Verdict::Preempted, Verdict::WrongRegion];
        let findings: Vec<Finding<f64>> = pairs
            .into_iter()
            .map(|(i, j, overlap, gap, mask)| {
                let verdicts = all.iter().copied().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, v)| v).collect();
                if i == j {
                    Finding { subject: Subject::Token(i), verdicts, overlap: None, gap: None, misplacement: (mask & 1 == 1).then_some(overlap) }
                } else {
                    Finding { subject: Subject::Pair(i, j), verdicts, overlap: Some(overlap), gap: Some(gap), misplacement: None }
                }
            })
            .collect();
        prop_assert_eq!(parse_verdicts::<f64>(&render_verdicts(&findings)).unwrap(), findings);
    }

    #[test]
    fn pgm_round_trip((h, w) in (1usize..12, 1usize..12), seed in any::<u64>()) {
        let values: Vec<f64> = (0..h * w).map(|i| ((seed.rotate_left(i as u32) % 1000) as f64) / 7.0).collect();
        let map = Matrix::from_vec(h, w, values).unwrap();
        let img = heatmap(&map);
        let bytes = encode_pgm(&img);
        let header = format!("P5\n{w} {h}\n255\n");
        prop_assert!(bytes.starts_with(header.as_bytes()));
        prop_assert_eq!(decode_pgm(&bytes).unwrap(), img.clone());
        let max = map.max_value().unwrap();
        if max > 0.0 {
            let argmax = map.as_slice().iter().position(|&v| v == max).unwrap();
            prop_assert_eq!(img.pixels[argmax], 255);
        } else {
            prop_assert!(img.pixels.iter().all(|&p| p == 0));
        }
    }
}
