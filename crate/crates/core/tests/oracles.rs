// SPDX-License-Identifier: MIT OR Apache-2.0

//! Library outputs checked against brute-force reimplementations.

use kmm_core::*;
use nalgebra::{DMatrix, DVector};

fn k(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d / (2.0 * sigma * sigma)).exp()
}

fn sample(d: usize, n_m: usize, n_r: usize, seed: u64) -> ShiftSample {
    generate_shift(&SyntheticShiftSpec::isotropic(d, (0.0, 1.0), (0.5, 1.0), n_m, n_r, seed)).unwrap()
}

#[test]
fn kernel_matrix_matches_elementwise_loop() {
    let s = sample(3, 9, 14, 1);
    let cfg = KernelConfig::fixed(1.3).unwrap();
    let km = kernel_matrix(&s.matching, &s.reference, &cfg).unwrap();
    for i in 0..9 {
        for j in 0..14 {
            assert!((km[(i, j)] - k(s.matching.row(i), s.reference.row(j), 1.3)).abs() <= 1e-15);
        }
    }
}

#[test]
fn mmd_matches_triple_loop() {
    let s = sample(2, 11, 17, 2);
    let sigma = 0.9;
    let cfg = KernelConfig::fixed(sigma).unwrap();
    let w: Vec<f64> = (0..11).map(|i| 0.3 + 0.1 * i as f64).collect();
    let (m, r) = (&s.matching, &s.reference);
    let mut mm = 0.0;
    let mut mr = 0.0;
    let mut rr = 0.0;
    for i in 0..11 {
        for j in 0..11 {
            mm += w[i] * w[j] * k(m.row(i), m.row(j), sigma);
        }
        for j in 0..17 {
            mr += w[i] * k(m.row(i), r.row(j), sigma);
        }
    }
    for i in 0..17 {
        for j in 0..17 {
            rr += k(r.row(i), r.row(j), sigma);
        }
    }
    let oracle = mm / 121.0 - 2.0 * mr / (11.0 * 17.0) + rr / 289.0;
    assert!((mmd_squared(&w, m, r, &cfg).unwrap() - oracle).abs() <= 1e-12);
}

#[test]
fn prediction_matches_kernel_expansion() {
    let s = sample(2, 20, 60, 3);
    let cfg = KernelConfig::fixed(1.1).unwrap();
    let model = kmm_standard(&s.matching, &s.reference, &cfg, 1e-3).unwrap();
    let eval = sample(2, 7, 1, 99).matching;
    let got = predict_importance(&model, &eval).unwrap();
    for (e, g) in eval.rows().zip(&got) {
        let oracle: f64 = (0..20).map(|j| model.alpha[j] * k(e, s.matching.row(j), 1.1)).sum();
        assert!((g - oracle).abs() <= 1e-12);
    }
}

#[test]
fn pinv_residual_and_ridge_agreement() {
    let s = sample(2, 15, 1, 4);
    let cfg = KernelConfig::fixed(1.0).unwrap();
    let km = kernel_matrix(&s.matching, &s.matching, &cfg).unwrap();
    let b = DMatrix::from_fn(15, 1, |i, _| 1.0 + i as f64 / 15.0);
    let x = pinv_solve(&km, &b, 1e-12).unwrap();
    let kb = &km * &b;
    let x2 = pinv_solve(&km, &kb, 1e-12).unwrap();
    assert!((&km * &x2 - &kb).norm() <= 1e-8 * kb.norm());
    assert!(x.iter().all(|v| v.is_finite()));

    let lambda = 0.5;
    let reg = &km + DMatrix::identity(15, 15) * lambda;
    let bv = DVector::from_column_slice(b.as_slice());
    let via_pinv = pinv_solve(&reg, &b, 1e-12).unwrap();
    let via_ridge = ridge_solve(&km, &bv, lambda).unwrap();
    assert!((via_ridge - via_pinv.column(0)).amax() <= 1e-10);
}

#[test]
fn glokmm_drops_an_outlier() {
    // 99 clustered rows and one far away; the outlier has the lowest
    // self-importance and must not be among the kept rows.
    let mut rows: Vec<Vec<f64>> = (0..99).map(|i| vec![(i as f64 / 99.0) - 0.5]).collect();
    rows.push(vec![25.0]);
    let reference = Dataset::from_rows(&rows, "r").unwrap();
    let matching = Dataset::from_rows(&[vec![0.0], vec![0.2], vec![-0.3]], "m").unwrap();
    let cfg = KernelConfig::fixed(0.5).unwrap();
    let params = MatchParams { n_h: 50, ..MatchParams::default() };
    let m = glokmm(&matching, &reference, &params, &cfg).unwrap();
    let kept = m.reference_indices.unwrap();
    assert_eq!(kept.len(), 50);
    assert!(!kept.contains(&99));
}

#[test]
fn enskmm_mmd_close_to_kmm() {
    let s = sample(2, 200, 1000, 5);
    let cfg = KernelConfig::median_pooled(&s.matching, &s.reference, 1000).unwrap();
    let base = kmm_standard(&s.matching, &s.reference, &cfg, 1e-3).unwrap();
    let params = MatchParams { partitions: 5, seed: 11, ..MatchParams::default() };
    let ens = enskmm(&s.matching, &s.reference, &params, &cfg).unwrap();
    let mmd = |a: &DVector<f64>| mmd_squared(a.as_slice(), &s.matching, &s.reference, &cfg).unwrap();
    let (b, e) = (mmd(&base.alpha), mmd(&ens.alpha));
    assert!((e - b).abs() <= 0.1 * b.max(1e-12), "ens {e} vs kmm {b}");
}

#[test]
fn append_with_copied_batch_keeps_accuracy() {
    let s = sample(1, 150, 600, 6);
    let cfg = KernelConfig::median_pooled(&s.matching, &s.reference, 1000).unwrap();
    let params = MatchParams { t: 4, n: 100, n_s: 100, seed: 3, ..MatchParams::default() };
    let model = amkm(&s.matching, &s.reference, &params, &cfg).unwrap();
    let batch = s.reference.select(&(0..200).collect::<Vec<_>>()).unwrap();
    let grown = amkm_append(&model, &s.matching, &batch, &params, &cfg).unwrap();
    assert_eq!(grown.repetitions(), 5);
    let before = nmse(model.combined_alpha.as_slice(), &s.true_weights).unwrap();
    let after = nmse(grown.combined_alpha.as_slice(), &s.true_weights).unwrap();
    assert!(after <= 1.1 * before, "{after} vs {before}");
}

#[test]
fn synthetic_ratio_has_unit_mean() {
    let s = sample(2, 10_000, 1, 7);
    let mean: f64 = s.true_weights.iter().sum::<f64>() / 10_000.0;
    assert!((mean - 1.0).abs() <= 0.1, "mean {mean}");
}
