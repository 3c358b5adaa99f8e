#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vorvq::quantizer::{Codebook, Projections, VoRvqConfig};
use vorvq::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A small random VO-RVQ problem: config, projections with nonzero biases,
/// codebooks and an input sequence.
pub struct Instance {
    pub cfg: VoRvqConfig,
    pub proj: Projections,
    pub codebooks: Vec<Codebook>,
    pub y_c: Matrix,
}

pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_frames: usize,
    max_full: usize,
    max_k: usize,
    max_stages: usize,
) -> Instance {
    let t = rng.random_range(1..=max_frames);
    let full = rng.random_range(1..=max_full);
    let latent = rng.random_range(1..=max_full);
    let n = rng.random_range(0..=max_stages);
    let n_e = rng.random_range(0..=n);
    let k = rng.random_range(1..=max_k);
    let cfg = VoRvqConfig::new(n, n_e, latent, full, k, rng.random()).expect("valid config");
    let mut proj = Projections::random(latent, full, rng);
    proj.in_bias = (0..full).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1).collect();
    proj.out_bias = (0..latent).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1).collect();
    let codebooks = cfg
        .stage_dims
        .iter()
        .enumerate()
        .map(|(i, &d)| Codebook::new(i + 1, gaussian(k, d, rng)).expect("valid codebook"))
        .collect();
    let y_c = gaussian(t, latent, rng);
    Instance {
        cfg,
        proj,
        codebooks,
        y_c,
    }
}

pub struct OracleResult {
    pub codes: Vec<Vec<usize>>,
    pub outputs: Vec<Vec<Vec<f64>>>,
    pub residuals: Vec<Vec<Vec<f64>>>,
    pub y_q: Vec<Vec<f64>>,
}

fn affine(x: &[f64], w: &Matrix, b: &[f64]) -> Vec<f64> {
    (0..w.ncols())
        .map(|c| {
            let mut acc = 0.0;
            for (k, xk) in x.iter().enumerate() {
                acc += xk * w[(k, c)];
            }
            acc + b[c]
        })
        .collect()
}

/// Frame-by-frame residual cascade with an exhaustive search over every
/// code of every stage.
pub fn brute_force(
    y_c: &Matrix,
    dims: &[usize],
    accumulate: usize,
    proj: &Projections,
    books: &[Matrix],
) -> OracleResult {
    let t = y_c.nrows();
    let latent = y_c.ncols();
    let full = proj.in_weight.ncols();
    let mut codes = vec![Vec::new(); dims.len()];
    let mut outputs = vec![Vec::new(); dims.len()];
    let mut residuals = vec![Vec::new(); dims.len()];
    let mut y_q = Vec::new();
    for f in 0..t {
        let mut r: Vec<f64> = (0..latent).map(|c| y_c[(f, c)]).collect();
        let mut acc = vec![0.0; latent];
        for (i, (&d, book)) in dims.iter().zip(books).enumerate() {
            let z = affine(&r, &proj.in_weight, &proj.in_bias);
            let mut best = (f64::INFINITY, 0);
            for k in 0..book.nrows() {
                let mut dist = 0.0;
                for c in 0..d {
                    let e = z[c] - book[(k, c)];
                    dist += e * e;
                }
                if dist < best.0 {
                    best = (dist, k);
                }
            }
            let mut padded = vec![0.0; full];
            for c in 0..d {
                padded[c] = book[(best.1, c)];
            }
            let out = affine(&padded, &proj.out_weight, &proj.out_bias);
            for c in 0..latent {
                r[c] -= out[c];
                if i < accumulate {
                    acc[c] += out[c];
                }
            }
            codes[i].push(best.1);
            outputs[i].push(out);
            residuals[i].push(r.clone());
        }
        y_q.push(acc);
    }
    OracleResult {
        codes,
        outputs,
        residuals,
        y_q,
    }
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Brute-force normalized cut over every nontrivial bipartition.
pub fn ncut_brute_force(w: &Matrix) -> f64 {
    let m = w.nrows();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << (m - 1)) {
        let labels: Vec<usize> = (0..m).map(|i| ((mask >> i) & 1) as usize).collect();
        best = best.min(ncut(w, &labels));
    }
    best
}

pub fn ncut(w: &Matrix, labels: &[usize]) -> f64 {
    let m = w.nrows();
    let (mut cut, mut vol) = (0.0, [0.0, 0.0]);
    for i in 0..m {
        for j in 0..m {
            vol[labels[i]] += w[(i, j)];
            if labels[i] != labels[j] {
                cut += w[(i, j)];
            }
        }
    }
    cut /= 2.0;
    cut / vol[0] + cut / vol[1]
}

/// `-(1/K) Σ_i log(exp(s_ii/τ) / Σ_j exp(s_ij/τ))` with explicit loops.
pub fn infonce_oracle(fake: &Matrix, real: &Matrix, tau: f64) -> f64 {
    let k = fake.nrows();
    let mut total = 0.0;
    for i in 0..k {
        let dot = |j: usize| (0..fake.ncols()).map(|c| fake[(i, c)] * real[(j, c)]).sum::<f64>() / tau;
        let max = (0..k).map(dot).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..k).map(|j| (dot(j) - max).exp()).sum();
        total += -(dot(i) - max - denom.ln());
    }
    total / k as f64
}

pub fn unit_rows(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = gaussian(rows, cols, rng);
    for r in 0..rows {
        let n = m.row(r).norm();
        m.row_mut(r).scale_mut(1.0 / n);
    }
    m
}

pub struct PartitionReport {
    /// With `β = 0` only the codebook term remains.
    pub codebook_term_reaches_encoder: bool,
    pub codebook_term_reaches_codebook: bool,
    /// Max deviation of the full-loss gradients from the hand-derived ones:
    /// the encoder sees only `2β(ẑ_c − ẑ_q)/T`, the codebook only `2(ẑ_q − ẑ_c)/T`.
    pub encoder_error: f64,
    pub codebook_error: f64,
}

/// One-stage graph: encoder `x W`, masked slice, straight-through snap and
/// codebook lookup, scored by the codebook and commitment terms.
pub fn stop_gradient_partition(seed: u64) -> PartitionReport {
    use vorvq::gradcore::Tape;
    use vorvq::losses::{quantization_terms_tape, StageNodes};

    let mut r = rng(seed);
    let (t_frames, d_in, full, d, k) = (6, 4, 3, 2, 3);
    let x = gaussian(t_frames, d_in, &mut r);
    let w = gaussian(d_in, full, &mut r);
    let book = gaussian(k, d, &mut r);
    let beta = 0.25;
    let run = |beta: f64| {
        let mut t = Tape::new();
        let xin = t.constant(x.clone());
        let w_enc = t.param(w.clone());
        let table = t.param(book.clone());
        let z = t.matmul(xin, w_enc).unwrap();
        let zc = t.slice_cols(z, 0, d).unwrap();
        let (_, codes) = t.ste_quantize(zc, &book).unwrap();
        let zq = t.gather_rows(table, &codes).unwrap();
        let loss = quantization_terms_tape(&mut t, &[StageNodes { zc, zq }], beta).unwrap().unwrap();
        let g = t.backward(loss).unwrap();
        (g.wrt(w_enc), g.wrt(table), t.value(zc).clone(), t.value(zq).clone(), codes)
    };
    let (g_enc0, g_tab0, ..) = run(0.0);
    let (g_enc, g_tab, zc, zq, codes) = run(beta);
    let diff = &zc - &zq;
    let mut dz = Matrix::zeros(t_frames, full);
    dz.columns_mut(0, d).copy_from(&(&diff * (2.0 * beta / t_frames as f64)));
    let want_enc = x.transpose() * dz;
    let mut want_tab = Matrix::zeros(k, d);
    for (f, &c) in codes.iter().enumerate() {
        for j in 0..d {
            want_tab[(c, j)] -= 2.0 * diff[(f, j)] / t_frames as f64;
        }
    }
    PartitionReport {
        codebook_term_reaches_encoder: g_enc0.iter().any(|&v| v != 0.0),
        codebook_term_reaches_codebook: g_tab0.iter().any(|&v| v != 0.0),
        encoder_error: (g_enc - want_enc).amax(),
        codebook_error: (g_tab - want_tab).amax(),
    }
}

/// Straight-through check: `z` (T × full) sliced to `d` columns, snapped,
/// padded back and weighted by a random `U`. Returns the gradient on `z` and `U`.
pub fn ste_gradient(seed: u64, d: usize) -> (Matrix, Matrix) {
    use vorvq::gradcore::Tape;

    let mut r = rng(seed);
    let (t_frames, full) = (5, 4);
    let z0 = gaussian(t_frames, full, &mut r);
    let book = gaussian(3, d, &mut r);
    let u = gaussian(t_frames, full, &mut r);
    let mut t = Tape::new();
    let z = t.param(z0);
    let zc = t.slice_cols(z, 0, d).unwrap();
    let (zq, _) = t.ste_quantize(zc, &book).unwrap();
    let padded = t.pad_cols(zq, full).unwrap();
    let uc = t.constant(u.clone());
    let p = t.mul(padded, uc).unwrap();
    let loss = t.sum(p).unwrap();
    (t.backward(loss).unwrap().wrt(z), u)
}
