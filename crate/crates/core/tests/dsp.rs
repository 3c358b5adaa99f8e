mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use common::rng;
use rand::Rng;
use vorvq::dsp::{
    frame_indices, hann_window, hz_to_mel, mel_filterbank, mel_l2_loss, mel_to_hz, stft_magnitude, MelConfig,
};

fn small_mel() -> MelConfig {
    MelConfig {
        sample_rate: 8000.0,
        n_fft: 128,
        hop: 32,
        n_mels: 16,
        f_min: 0.0,
        f_max: 4000.0,
    }
}

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Direct windowed DFT magnitude of one frame.
fn dft_oracle(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in frame.iter().enumerate() {
                let a = 2.0 * PI * (i * k) as f64 / n as f64;
                re += w[i] * x * a.cos();
                im -= w[i] * x * a.sin();
            }
            re.hypot(im)
        })
        .collect()
}

#[test]
fn zero_signal_gives_zero_magnitude() {
    let s = stft_magnitude(&vec![0.0; 300], 64, 16).unwrap();
    assert!(s.iter().all(|&v| v == 0.0));
    assert_eq!(s.nrows(), 33);
    assert_eq!(s.ncols(), 1 + 300 / 16);
}

#[test]
fn too_short_is_an_error() {
    assert!(stft_magnitude(&[1.0; 10], 64, 16).is_err());
}

#[test]
fn dc_signal_bins() {
    // the periodic Hann window is a DC term plus one cosine, so a constant
    // input also leaks into bin 1 with half the DC height
    let n = 64;
    let s = stft_magnitude(&vec![1.0; 400], n, 16).unwrap();
    let window_sum: f64 = hann_window(n).iter().sum();
    assert!((window_sum - n as f64 / 2.0).abs() < 1e-12);
    for f in 0..s.ncols() {
        assert!((s[(0, f)] - window_sum).abs() < 1e-9);
        assert!((s[(1, f)] - n as f64 / 4.0).abs() < 1e-9);
        for k in 2..s.nrows() {
            assert!(s[(k, f)] < 1e-9, "bin {k} frame {f}: {}", s[(k, f)]);
        }
    }
}

#[test]
fn sine_at_bin_concentrates_there() {
    let n = 256;
    for k in [3usize, 10, 40, 100] {
        let wave: Vec<f64> = (0..2048).map(|i| (2.0 * PI * (k * i) as f64 / n as f64).sin()).collect();
        let s = stft_magnitude(&wave, n, 64).unwrap();
        for f in 2..s.ncols() - 2 {
            let col: Vec<f64> = s.column(f).iter().copied().collect();
            let argmax = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            assert_eq!(argmax, k);
            assert!((col[k] - n as f64 / 4.0).abs() < 1e-8);
            let off: f64 = col.iter().enumerate().filter(|(b, _)| b.abs_diff(k) > 1).map(|(_, v)| v).sum();
            assert!(off < 1e-8, "leakage {off}");
        }
    }
}

#[test]
fn interior_frames_match_direct_dft() {
    let wave = noise(600, 1);
    let (n, hop) = (64, 16);
    let s = stft_magnitude(&wave, n, hop).unwrap();
    for f in 2..s.ncols() - 3 {
        let start = f * hop - n / 2;
        let want = dft_oracle(&wave[start..start + n]);
        for (k, w) in want.iter().enumerate() {
            assert!((s[(k, f)] - w).abs() < 1e-9);
        }
    }
}

#[test]
fn reflect_framing_indices() {
    let (idx, frames) = frame_indices(10, 4, 2).unwrap();
    assert_eq!(frames, 6);
    assert_eq!(&idx[..4], &[2, 1, 0, 1]);
    assert_eq!(&idx[idx.len() - 4..], &[8, 9, 8, 7]);
}

#[test]
fn mel_scale_values() {
    assert_eq!(hz_to_mel(0.0), 0.0);
    assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-9);
    assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
    for f in [10.0, 440.0, 7999.0] {
        assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
    }
}

#[test]
fn filterbank_rows_are_unimodal_triangles() {
    let cfg = MelConfig::default();
    let fb = mel_filterbank(&cfg).unwrap();
    assert_eq!(fb.shape(), (cfg.n_mels, cfg.n_fft / 2 + 1));
    for r in 0..fb.nrows() {
        let row: Vec<f64> = fb.row(r).iter().copied().collect();
        assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert!(row[peak] > 0.0);
        assert!(row[..=peak].windows(2).all(|w| w[0] <= w[1]));
        assert!(row[peak..].windows(2).all(|w| w[0] >= w[1]));
    }
    let too_many = MelConfig {
        n_mels: 200,
        n_fft: 64,
        ..cfg
    };
    assert!(mel_filterbank(&too_many).is_err());
}

#[test]
fn mel_loss_contract() {
    let cfg = small_mel();
    let a = noise(800, 2);
    let b = noise(800, 3);
    assert_eq!(mel_l2_loss(&a, &a, &cfg).unwrap(), 0.0);
    let ab = mel_l2_loss(&a, &b, &cfg).unwrap();
    assert!(ab > 0.0);
    assert_eq!(ab, mel_l2_loss(&b, &a, &cfg).unwrap());
    assert!(mel_l2_loss(&a, &b[..700], &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loss_scales_quadratically(seed in any::<u64>(), c in 0.1f64..10.0) {
        let cfg = small_mel();
        let a = noise(512, seed);
        let b = noise(512, seed.wrapping_add(1));
        let base = mel_l2_loss(&a, &b, &cfg).unwrap();
        let ca: Vec<f64> = a.iter().map(|v| c * v).collect();
        let cb: Vec<f64> = b.iter().map(|v| c * v).collect();
        let scaled = mel_l2_loss(&ca, &cb, &cfg).unwrap();
        prop_assert!((scaled - c * c * base).abs() <= 1e-10 * scaled.abs().max(1e-300));
    }

    #[test]
    fn magnitude_ignores_sign(seed in any::<u64>()) {
        let a = noise(300, seed);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        prop_assert_eq!(stft_magnitude(&a, 64, 16).unwrap(), stft_magnitude(&neg, 64, 16).unwrap());
    }

    #[test]
    fn mel_loss_non_negative_and_symmetric(seed in any::<u64>()) {
        let cfg = small_mel();
        let a = noise(400, seed);
        let b = noise(400, !seed);
        let ab = mel_l2_loss(&a, &b, &cfg).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, mel_l2_loss(&b, &a, &cfg).unwrap());
    }
}
