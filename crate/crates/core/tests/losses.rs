mod common;

use proptest::prelude::*;

use common::{gaussian, infonce_oracle, rng, unit_rows};
use vorvq::gradcore::Tape;
use vorvq::losses::{
    alignment_terms_tape, append_ones, frame_l2, infonce, infonce_tape, l2_normalize, ordered_terms, semantic_l2,
    stack_bias, total_loss, LossComponents, LossWeights, SyntheticTeacher,
};
use vorvq::quantizer::{residual_forward, Codebook, Projections};
use vorvq::Matrix;

#[test]
fn infonce_matches_oracle_for_k_up_to_16() {
    for k in 1..=16 {
        for seed in 0..5 {
            let mut r = rng(100 * k as u64 + seed);
            let d = 1 + (seed as usize % 5);
            let fake = unit_rows(k, d, &mut r);
            let real = unit_rows(k, d, &mut r);
            for tau in [0.07, 0.5, 1.0] {
                let got = infonce(&fake, &real, tau).unwrap();
                let want = infonce_oracle(&fake, &real, tau);
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "k={k} tau={tau}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn infonce_single_row_is_exactly_zero() {
    let mut r = rng(1);
    let f = unit_rows(1, 4, &mut r);
    let g = unit_rows(1, 4, &mut r);
    assert_eq!(infonce(&f, &g, 0.07).unwrap(), 0.0);
}

#[test]
fn infonce_orthonormal_pair() {
    let e = Matrix::identity(2, 2);
    let want = (1.0 + (-1.0f64).exp()).ln();
    assert!((infonce(&e, &e, 1.0).unwrap() - want).abs() <= 1e-12);
}

#[test]
fn infonce_rejects_bad_input() {
    let e = Matrix::identity(2, 2);
    assert!(infonce(&(&e * 2.0), &e, 1.0).is_err());
    assert!(infonce(&e, &e, 0.0).is_err());
    assert!(infonce(&e, &Matrix::identity(3, 3), 1.0).is_err());
    assert!(l2_normalize(&Matrix::zeros(2, 3)).is_err());
}

#[test]
fn total_loss_weights() {
    let c = LossComponents {
        ord: 1.0,
        stft: 2.0,
        adv: None,
        nce: 3.0,
        sem: 4.0,
    };
    let w = LossWeights::default();
    assert_eq!(total_loss(&c, &w).unwrap(), 1.0 + 2.0 + 3.0 + 4.0);
    let w2 = LossWeights {
        lambda_adv: 1.0,
        ..w
    };
    assert!(total_loss(&c, &w2).is_err());
    let c2 = LossComponents { adv: Some(5.0), ..c };
    assert_eq!(total_loss(&c2, &w2).unwrap(), 15.0);
}

#[test]
fn ordered_terms_match_hand_computation() {
    let mut r = rng(2);
    let y = gaussian(5, 3, &mut r);
    let proj = Projections::identity(3, 3);
    let cb = Codebook::new(1, gaussian(4, 2, &mut r)).unwrap();
    let trace = residual_forward(&y, &proj, &[cb], 1).unwrap();
    let target = gaussian(5, 3, &mut r);
    let terms = ordered_terms(&trace.y_q, &target, &trace).unwrap();
    let s = &trace.stages[0];
    let q = (&s.zc_hat - &s.zq_hat).norm_squared() / 5.0;
    assert!((terms.codebook - q).abs() < 1e-14);
    assert!((terms.commitment - q).abs() < 1e-14);
    assert!((terms.recon - (&trace.y_q - &target).norm_squared() / 5.0).abs() < 1e-14);
    assert!((terms.total(0.25) - (terms.recon + 1.25 * q)).abs() < 1e-14);
}

#[test]
fn frame_l2_averages_over_frames() {
    let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    assert_eq!(frame_l2(&a, &Matrix::zeros(2, 2)).unwrap(), 0.5);
}

#[test]
fn teacher_is_seeded() {
    let a = SyntheticTeacher::new(4, 16, 3).unwrap();
    assert_eq!(a, SyntheticTeacher::new(4, 16, 3).unwrap());
    assert_ne!(a, SyntheticTeacher::new(4, 16, 4).unwrap());
    assert_eq!(a.embed(&Matrix::zeros(2, 4)).unwrap().features.row(0).iter().copied().collect::<Vec<_>>(), a.bias);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tape_infonce_matches(seed in any::<u64>(), k in 1usize..10, d in 1usize..6) {
        let mut r = rng(seed);
        let fake = unit_rows(k, d, &mut r);
        let real = unit_rows(k, d, &mut r);
        let mut t = Tape::new();
        let f = t.constant(fake.clone());
        let g = t.constant(real.clone());
        let n = infonce_tape(&mut t, f, g, 0.3).unwrap();
        let want = infonce(&fake, &real, 0.3).unwrap();
        prop_assert!((t.scalar(n).unwrap() - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn infonce_positive_for_two_or_more(seed in any::<u64>(), k in 2usize..12) {
        let mut r = rng(seed);
        let fake = unit_rows(k, 3, &mut r);
        let real = unit_rows(k, 3, &mut r);
        prop_assert!(infonce(&fake, &real, 0.5).unwrap() > 0.0);
    }

    #[test]
    fn factorized_alignment_matches_direct(seed in any::<u64>(), k in 2usize..8) {
        let mut r = rng(seed);
        let y_q = gaussian(k, 3, &mut r);
        let w = gaussian(3, 12, &mut r);
        let b: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
        let teacher = SyntheticTeacher::new(3, 12, seed).unwrap().embed(&gaussian(k, 3, &mut r)).unwrap();
        let p = &y_q * &w + Matrix::from_fn(k, 12, |_, c| b[c]);
        let nce = infonce(&l2_normalize(&p).unwrap(), &l2_normalize(&teacher.features).unwrap(), 0.2).unwrap();
        let sem = semantic_l2(&y_q, &w, &b, &teacher).unwrap();
        let mut t = Tape::new();
        let ya = t.constant(append_ones(&y_q));
        let wa = t.param(stack_bias(&w, &b).unwrap());
        let (n, s) = alignment_terms_tape(&mut t, ya, wa, &teacher, 0.2).unwrap();
        prop_assert!((t.scalar(n).unwrap() - nce).abs() <= 1e-10 * nce.abs().max(1.0));
        prop_assert!((t.scalar(s).unwrap() - sem).abs() <= 1e-10 * sem.abs().max(1.0));
    }

    #[test]
    fn total_loss_is_linear_in_each_weight(
        ord in 0.0f64..5.0, stft in 0.0f64..5.0, nce in 0.0f64..5.0, sem in 0.0f64..5.0,
        l1 in 0.0f64..3.0, l2 in 0.0f64..3.0,
    ) {
        let c = LossComponents { ord, stft, adv: None, nce, sem };
        let base = LossWeights::default();
        let at = |lambda_ord: f64, lambda_align: f64| {
            total_loss(&c, &LossWeights { lambda_ord, lambda_align, ..base }).unwrap()
        };
        let tol = 1e-12 * (1.0 + at(l1 + l2, 1.0).abs());
        prop_assert!((at(l1 + l2, 1.0) - (at(l1, 1.0) + at(l2, 1.0) - at(0.0, 1.0))).abs() <= tol);
        let tol = 1e-12 * (1.0 + at(1.0, l1 + l2).abs());
        prop_assert!((at(1.0, l1 + l2) - (at(1.0, l1) + at(1.0, l2) - at(1.0, 0.0))).abs() <= tol);
    }
}
