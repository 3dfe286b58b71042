mod common;

use grn_ppg::adasyn::{adasyn_detailed, largest_remainder, AdasynConfig};
use grn_ppg::rng::seeded;
use grn_ppg::signal::{
    design_bandpass, filtfilt, normalize_pulse, preprocess, resample_to_256, segment_pulses, BandpassSpec, SignalFrame,
};
use grn_ppg::synth::{generate_frame, GeneratorConfig};
use grn_ppg::tensor::{AdamState, Tape, Tensor};
use proptest::prelude::*;

fn rows(d: usize, max_rows: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1..=max_rows).prop_flat_map(move |r| (Just(r), prop::collection::vec(-5.0f64..5.0, r * d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts((r, x) in rows(7, 5), shift in -50.0f64..50.0) {
        let mut tape = Tape::new();
        let a = tape.constant(&[r, 7], x.clone()).unwrap();
        let s = tape.softmax(a);
        let shifted = tape.constant(&[r, 7], x.iter().map(|v| v + shift).collect()).unwrap();
        let s2 = tape.softmax(shifted);
        for row in tape.value(s).chunks(7) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(common::max_abs_diff(tape.value(s), tape.value(s2)) < 1e-12);
    }

    #[test]
    // row variance large enough that eps is negligible after scaling by alpha
    fn layer_norm_ignores_positive_affine_maps((r, x) in rows(6, 4), alpha in 0.5f64..2.0, beta in -3.0f64..3.0) {
        let x: Vec<f64> = x.iter().map(|v| 20.0 * v).collect();
        prop_assume!(x.chunks(6).all(|row| {
            let m = row.iter().sum::<f64>() / 6.0;
            row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 6.0 > 100.0
        }));
        let mut tape = Tape::new();
        let g = tape.constant(&[6], vec![1.0; 6]).unwrap();
        let b = tape.constant(&[6], vec![0.0; 6]).unwrap();
        let a = tape.constant(&[r, 6], x.clone()).unwrap();
        let a2 = tape.constant(&[r, 6], x.iter().map(|v| alpha * v + beta).collect()).unwrap();
        let y = tape.layer_norm(a, g, b, 1e-5).unwrap();
        let y2 = tape.layer_norm(a2, g, b, 1e-5).unwrap();
        prop_assert!(common::max_abs_diff(tape.value(y), tape.value(y2)) < 1e-6);
    }

    #[test]
    fn tensor_shape_matches_data(dims in prop::collection::vec(1usize..5, 1..4)) {
        let n: usize = dims.iter().product();
        prop_assert!(Tensor::new(&dims, vec![0.0; n]).is_ok());
        prop_assert!(Tensor::new(&dims, vec![0.0; n + 1]).is_err());
    }

    #[test]
    fn adam_counts_steps_and_keeps_shapes(steps in 1usize..20, lr in 1e-4f64..1e-1) {
        let mut params = vec![Tensor::new(&[2, 3], vec![1.0; 6]).unwrap().with_grad()];
        let mut adam = AdamState::new(lr, &params);
        for s in 0..steps {
            let mut tape = Tape::new();
            let v = tape.leaf(&params[0]);
            let sq = tape.mul(v, v).unwrap();
            let l = tape.sum(sq);
            tape.backward(l).unwrap();
            params[0].zero_grad();
            tape.accumulate_grad(v, &mut params[0]);
            adam.step(&mut params).unwrap();
            prop_assert_eq!(adam.t, s as u64 + 1);
        }
        prop_assert_eq!(params[0].shape(), &[2, 3]);
        prop_assert!(params[0].is_finite());
    }

    #[test]
    // near the 30 s frame length, where the edge pads absorb the transients
    fn filtfilt_commutes_with_time_reversal(x in prop::collection::vec(-1.0f64..1.0, 2800..=3840)) {
        let cascade = design_bandpass(&BandpassSpec::default(), 128.0).unwrap();
        let fwd = filtfilt(&SignalFrame::new(x.clone(), 128.0, 0.0).unwrap(), &cascade).unwrap().samples;
        let rev: Vec<f64> = x.iter().rev().cloned().collect();
        let back = filtfilt(&SignalFrame::new(rev, 128.0, 0.0).unwrap(), &cascade).unwrap().samples;
        let back: Vec<f64> = back.into_iter().rev().collect();
        prop_assert!(common::max_abs_diff(&fwd, &back) < 1e-9);
    }

    #[test]
    fn segmentation_ignores_scale_and_offset(seed in 0u64..1000, alpha in 0.1f64..10.0, beta in -5.0f64..5.0) {
        let frame = generate_frame(&GeneratorConfig { seed, ..Default::default() }).unwrap().frame;
        let scaled = SignalFrame::new(frame.samples.iter().map(|v| alpha * v + beta).collect(), 128.0, 0.0).unwrap();
        let a: Vec<_> = segment_pulses(&frame).pulses.iter().map(|p| (p.start_index, p.end_index())).collect();
        let b: Vec<_> = segment_pulses(&scaled).pulses.iter().map(|p| (p.start_index, p.end_index())).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn resample_is_idempotent_on_256(x in prop::collection::vec(-3.0f64..3.0, 256)) {
        prop_assert_eq!(resample_to_256(&x).unwrap(), x);
    }

    #[test]
    fn canonical_pulses_are_256_in_unit_range(seed in 0u64..500, rate in 0.0f64..0.5) {
        let f = generate_frame(&GeneratorConfig { seed, artifact_rate: rate, ..Default::default() }).unwrap();
        let pre = preprocess(&f.frame, &BandpassSpec::default(), "p").unwrap();
        for p in &pre.pulses {
            prop_assert_eq!(p.samples.len(), 256);
            prop_assert!(p.samples.iter().all(|v| (0.0..=1.0).contains(v)));
            let n = normalize_pulse(&p.samples).unwrap();
            prop_assert!(n.degenerate || (n.samples.iter().cloned().fold(f64::INFINITY, f64::min) == 0.0
                && n.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max) == 1.0));
        }
        for iv in &f.intervals {
            prop_assert!(iv.start_s >= 0.0 && iv.end_s >= iv.start_s && iv.end_s <= 30.0);
        }
    }

    #[test]
    fn largest_remainder_hits_total(w in prop::collection::vec(0.0f64..5.0, 1..40), total in 0usize..3000) {
        let g = largest_remainder(&w, total);
        prop_assert_eq!(g.iter().sum::<usize>(), total);
    }
}

#[test]
fn generator_is_deterministic_per_seed() {
    let cfg = GeneratorConfig { seed: 42, ..Default::default() };
    assert_eq!(generate_frame(&cfg).unwrap(), generate_frame(&cfg).unwrap());
    let other = GeneratorConfig { seed: 43, ..Default::default() };
    assert_ne!(generate_frame(&cfg).unwrap().frame, generate_frame(&other).unwrap().frame);
}

#[test]
fn adasyn_minority_count_is_exact_and_deterministic() {
    use grn_ppg::dataset::PulseDataset;
    use grn_ppg::signal::Label;
    use rand::Rng;
    let mut rng = seeded(9);
    let mut ds = PulseDataset::new();
    for i in 0..260 {
        let label = if i < 37 { Label::Artifact } else { Label::Normal };
        let row: Vec<f64> = (0..256).map(|_| rng.gen::<f64>()).collect();
        ds.push(&row, Some(label), format!("r{i}"), false, 1.0).unwrap();
    }
    let cfg = AdasynConfig { seed: 4, ..Default::default() };
    let a = adasyn_detailed(&ds, &cfg).unwrap();
    let b = adasyn_detailed(&ds, &cfg).unwrap();
    assert_eq!(a.dataset.count(Label::Artifact), 37 + (223 - 37));
    assert_eq!(a.dataset.data(), b.dataset.data());
    assert!((0..ds.len()).all(|i| a.dataset.row(i) == ds.row(i)));
}
