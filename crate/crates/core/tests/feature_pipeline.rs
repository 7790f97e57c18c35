mod common;

use common::{random_tensor, rng};
use proptest::prelude::*;
use rand::Rng;
use stcx_core::features::{
    build_context_maps, extract_actor_features, filter_proposals, roi_align, spatial_pool, temporal_pool, ActorBox,
    PathwayFeatures, ROI_SIZE,
};
use stcx_core::tensor::Tensor;

/// Tent-kernel form of bilinear interpolation: every cell contributes
/// `max(0, 1-|y-i|)·max(0, 1-|x-j|)` of its value.
fn tent_sample(fmap: &Tensor, y: f64, x: f64, channel: usize) -> f64 {
    let (h, w) = (fmap.shape()[0], fmap.shape()[1]);
    let mut acc = 0.0;
    for i in 0..h {
        for j in 0..w {
            let wy = (1.0 - (y - i as f64).abs()).max(0.0);
            let wx = (1.0 - (x - j as f64).abs()).max(0.0);
            acc += wy * wx * fmap.get(&[i, j, channel]);
        }
    }
    acc
}

/// Bin-center sample coordinates of a normalized box on an `h×w` map whose
/// corner cells sit at normalized 0 and 1.
fn bin_centers(b: &ActorBox, h: usize, w: usize) -> Vec<(f64, f64)> {
    let n = ROI_SIZE as f64;
    let (x1, x2) = (b.x1 * (w - 1) as f64, b.x2 * (w - 1) as f64);
    let (y1, y2) = (b.y1 * (h - 1) as f64, b.y2 * (h - 1) as f64);
    let mut out = Vec::new();
    for i in 0..ROI_SIZE {
        for j in 0..ROI_SIZE {
            out.push((y1 + (i as f64 + 0.5) * (y2 - y1) / n, x1 + (j as f64 + 0.5) * (x2 - x1) / n));
        }
    }
    out
}

fn random_box(r: &mut impl Rng) -> ActorBox {
    let (a, b) = (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0));
    let (c, d) = (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0));
    let (x1, x2) = (f64::min(a, b), f64::max(a, b) + 1e-3);
    let (y1, y2) = (f64::min(c, d), f64::max(c, d) + 1e-3);
    ActorBox::new(x1.min(0.99), y1.min(0.99), x2.min(1.0), y2.min(1.0), r.gen_range(0.0..1.0)).unwrap()
}

#[test]
fn temporal_pool_matches_loop() {
    let f = random_tensor(&mut rng(1), &[4, 3, 3, 2]);
    let pooled = temporal_pool(&f).unwrap();
    assert_eq!(pooled.shape(), &[3, 3, 2]);
    for i in 0..3 {
        for j in 0..3 {
            for c in 0..2 {
                let mean = (0..4).map(|t| f.get(&[t, i, j, c])).sum::<f64>() / 4.0;
                assert!((pooled.get(&[i, j, c]) - mean).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn spatial_pool_matches_loop() {
    let f = random_tensor(&mut rng(2), &[5, 2, 3, 4]);
    let pooled = spatial_pool(&f).unwrap();
    assert_eq!(pooled.shape(), &[5, 4]);
    for t in 0..5 {
        for c in 0..4 {
            let mut acc = 0.0;
            for i in 0..2 {
                for j in 0..3 {
                    acc += f.get(&[t, i, j, c]);
                }
            }
            assert!((pooled.get(&[t, c]) - acc / 6.0).abs() < 1e-12);
        }
    }
}

#[test]
fn pools_commute() {
    let f = random_tensor(&mut rng(3), &[6, 4, 5, 3]);
    let a = spatial_pool(&temporal_pool(&f).unwrap().reshape([1, 4, 5, 3]).unwrap()).unwrap();
    let b = temporal_pool(&spatial_pool(&f).unwrap().reshape([6, 1, 1, 3]).unwrap()).unwrap();
    assert!(a.reshape([3]).unwrap().max_abs_diff(&b.reshape([3]).unwrap()) < 1e-12);
}

#[test]
fn context_maps_compose_the_pools() {
    let slow = random_tensor(&mut rng(4), &[2, 4, 4, 3]);
    let fast = random_tensor(&mut rng(5), &[8, 4, 4, 2]);
    let pf = PathwayFeatures::new(slow.clone(), fast.clone()).unwrap();
    let maps = build_context_maps(&pf).unwrap();
    let ps = temporal_pool(&slow).unwrap();
    let pfast = temporal_pool(&fast).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            for c in 0..5 {
                let expect = if c < 3 { ps.get(&[i, j, c]) } else { pfast.get(&[i, j, c - 3]) };
                assert!((maps.pooled_concat.get(&[i, j, c]) - expect).abs() < 1e-12);
            }
            for c in 0..3 {
                assert_eq!(maps.slow_tokens.get(&[i * 4 + j, c]), ps.get(&[i, j, c]));
            }
        }
    }
    assert!(maps.fast_tokens.max_abs_diff(&spatial_pool(&fast).unwrap()) < 1e-12);
    assert_eq!(maps.concat_tokens().shape(), &[16, 5]);
}

#[test]
fn pathway_contract_is_enforced() {
    let slow = random_tensor(&mut rng(6), &[2, 4, 4, 3]);
    assert!(PathwayFeatures::new(slow.clone(), random_tensor(&mut rng(7), &[2, 4, 4, 1])).is_err());
    assert!(PathwayFeatures::new(slow, random_tensor(&mut rng(8), &[8, 4, 3, 1])).is_err());
}

#[test]
fn roi_on_linear_ramp_reads_bin_centers() {
    let (h, w) = (6, 9);
    let ramp = Tensor::from_fn([h, w, 1], |idx| idx[1] as f64).unwrap();
    let b = ActorBox::new(0.1, 0.2, 0.7, 0.9, 0.9).unwrap();
    let out = roi_align(&ramp, &b, ROI_SIZE).unwrap();
    let x1 = 0.1 * (w - 1) as f64;
    let bin = (0.7 - 0.1) * (w - 1) as f64 / ROI_SIZE as f64;
    for i in 0..ROI_SIZE {
        for j in 0..ROI_SIZE {
            let expect = x1 + (j as f64 + 0.5) * bin;
            assert!((out.get(&[i, j, 0]) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn full_image_box_on_grid_sized_map() {
    let fmap = random_tensor(&mut rng(9), &[7, 7, 2]);
    let b = ActorBox::new(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
    let out = roi_align(&fmap, &b, ROI_SIZE).unwrap();
    for (k, (y, x)) in bin_centers(&b, 7, 7).into_iter().enumerate() {
        for c in 0..2 {
            assert!((out.data()[k * 2 + c] - tent_sample(&fmap, y, x, c)).abs() < 1e-10);
        }
    }
}

#[test]
fn roi_matches_bilinear_oracle_on_random_pairs() {
    let mut r = rng(10);
    for _ in 0..200 {
        let (h, w, c) = (r.gen_range(2..10), r.gen_range(2..10), r.gen_range(1..4));
        let fmap = random_tensor(&mut r, &[h, w, c]);
        let b = random_box(&mut r);
        let out = roi_align(&fmap, &b, ROI_SIZE).unwrap();
        for (k, (y, x)) in bin_centers(&b, h, w).into_iter().enumerate() {
            for ch in 0..c {
                let diff = (out.data()[k * c + ch] - tent_sample(&fmap, y, x, ch)).abs();
                assert!(diff < 1e-10, "{h}x{w} box {b:?}: {diff}");
            }
        }
    }
}

#[test]
fn roi_is_translation_consistent() {
    let (h, w) = (12, 12);
    let pattern = random_tensor(&mut rng(11), &[4, 4, 2]);
    let place = |dy: usize, dx: usize| {
        Tensor::from_fn([h, w, 2], |idx| {
            let (i, j) = (idx[0] as isize - dy as isize, idx[1] as isize - dx as isize);
            if (0..4).contains(&i) && (0..4).contains(&j) {
                pattern.get(&[i as usize, j as usize, idx[2]])
            } else {
                0.0
            }
        })
        .unwrap()
    };
    let scale = (w - 1) as f64;
    let boxed = |dy: f64, dx: f64| ActorBox::new((2.3 + dx) / scale, (2.1 + dy) / scale, (5.4 + dx) / scale, (5.8 + dy) / scale, 0.9).unwrap();
    let base = roi_align(&place(2, 2), &boxed(0.0, 0.0), ROI_SIZE).unwrap();
    let shifted = roi_align(&place(5, 3), &boxed(3.0, 1.0), ROI_SIZE).unwrap();
    assert!(base.max_abs_diff(&shifted) < 1e-10);
}

#[test]
fn filter_matches_direct_rule() {
    let mut r = rng(12);
    let boxes: Vec<ActorBox> = (0..50)
        .map(|k| {
            let mut b = random_box(&mut r);
            b.ground_truth = k % 7 == 0;
            b
        })
        .collect();
    for threshold in [0.0, 0.3, 0.8, 1.0] {
        let mut expect = Vec::new();
        for b in &boxes {
            if b.ground_truth || b.confidence > threshold {
                expect.push(*b);
            }
        }
        assert_eq!(filter_proposals(&boxes, threshold), expect);
    }
}

#[test]
fn actor_tokens_are_reshaped_grids() {
    let slow = random_tensor(&mut rng(13), &[2, 5, 5, 3]);
    let fast = random_tensor(&mut rng(14), &[4, 5, 5, 1]);
    let pf = PathwayFeatures::new(slow, fast).unwrap();
    let boxes = [random_box(&mut rng(15)), random_box(&mut rng(16))];
    let actors = extract_actor_features(&pf, &boxes).unwrap();
    assert_eq!(actors.len(), 2);
    for a in &actors {
        assert_eq!(a.grid.shape(), &[ROI_SIZE, ROI_SIZE, 4]);
        assert_eq!(a.tokens.shape(), &[ROI_SIZE * ROI_SIZE, 4]);
        assert_eq!(a.grid.data(), a.tokens.data());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn roi_output_is_bounded_by_map(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (h, w, c) = (r.gen_range(2..9), r.gen_range(2..9), r.gen_range(1..4));
        let fmap = random_tensor(&mut r, &[h, w, c]);
        let out = roi_align(&fmap, &random_box(&mut r), ROI_SIZE).unwrap();
        for ch in 0..c {
            let channel: Vec<f64> = fmap.data().iter().skip(ch).step_by(c).copied().collect();
            let lo = channel.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = channel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in out.data().iter().skip(ch).step_by(c) {
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }
    }
}
