use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dsp::{mel_l2_loss_tape, stft_magnitude_tape, MelConfig};
use crate::error::Result;
use crate::gradcore::{fd_check, NodeId, ScalarFunction, Tape, TapeFunction};
use crate::linalg::Matrix;
use crate::losses::{
    alignment_terms_tape, frame_l2_tape, infonce_tape, ordered_objective_tape, StageNodes, TeacherEmbedding,
};

/// Relative error at or above which a check fails.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

type Sampler = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<f64>>;

/// One differentiable operation to be checked at random points.
pub struct GradCheck {
    pub name: String,
    pub function: Box<dyn ScalarFunction>,
    pub sampler: Sampler,
}

impl GradCheck {
    pub fn new(name: &str, function: impl ScalarFunction + 'static, sampler: Sampler) -> Self {
        Self {
            name: name.into(),
            function: Box::new(function),
            sampler,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub op: String,
    pub max_rel_error: f64,
    pub points: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.entries.iter().filter(|e| !e.passed).map(|e| e.op.as_str()).collect()
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(
                f,
                "{:<22} {:>4} pts  max rel err {:.3e}  {}",
                e.op,
                e.points,
                e.max_rel_error,
                if e.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Stop-gradient objectives have values that depend on inputs the gradient
/// ignores; they are checked against a surrogate with the stopped paths
/// replaced by constants.
struct Surrogate {
    value: TapeFunction,
    gradient: TapeFunction,
}

impl ScalarFunction for Surrogate {
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.value.value(x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.gradient.gradient(x)
    }
}

fn gaussian(n: usize) -> Sampler {
    Box::new(move |rng| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Entries bounded away from zero, random sign.
fn away_from_zero(n: usize) -> Sampler {
    Box::new(move |rng| {
        (0..n)
            .map(|_| {
                let m = rng.random_range(0.2..2.0);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            })
            .collect()
    })
}

fn positive(n: usize) -> Sampler {
    Box::new(move |rng| (0..n).map(|_| rng.random_range(0.2..3.0)).collect())
}

fn fixed(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Reduces a matrix node to a scalar with fixed random weights so every
/// output entry contributes a distinct upstream gradient.
fn weighted_sum(t: &mut Tape, node: NodeId, seed: u64) -> Result<NodeId> {
    let (r, c) = t.value(node).shape();
    let w = t.constant(fixed(r, c, seed));
    let p = t.mul(node, w)?;
    t.sum(p)
}

fn unary(
    name: &str,
    rows: usize,
    cols: usize,
    sampler: Sampler,
    op: impl Fn(&mut Tape, NodeId) -> Result<NodeId> + 'static,
) -> GradCheck {
    GradCheck::new(
        name,
        TapeFunction::new(rows, cols, move |t, x| {
            let y = op(t, x)?;
            weighted_sum(t, y, 99)
        }),
        sampler,
    )
}

fn gradcheck_mel() -> MelConfig {
    MelConfig {
        sample_rate: 8000.0,
        n_fft: 64,
        hop: 16,
        n_mels: 8,
        f_min: 0.0,
        f_max: 4000.0,
    }
}

/// Every differentiable tape primitive plus the composite losses.
pub fn standard_checks() -> Vec<GradCheck> {
    let mut checks = vec![
        unary("matmul", 3, 4, gaussian(12), |t, x| {
            let b = t.constant(fixed(4, 2, 1));
            let l = t.matmul(x, b)?;
            let a = t.constant(fixed(2, 3, 2));
            let r = t.matmul(a, x)?;
            let s = t.sum(r)?;
            let ls = t.sum(l)?;
            t.add(ls, s)
        }),
        unary("affine", 3, 4, gaussian(12), |t, x| {
            let w = t.constant(fixed(4, 2, 3));
            let b = t.constant(fixed(1, 2, 4));
            let y = t.affine(x, w, b)?;
            let xt = t.transpose(x)?;
            let w2 = t.slice_rows(xt, 0, 3)?;
            let c = t.constant(fixed(1, 3, 5));
            let x2 = t.constant(fixed(2, 3, 6));
            let z = t.affine(x2, w2, c)?;
            let ys = t.sum(y)?;
            let zs = t.sum(z)?;
            t.add(ys, zs)
        }),
        unary("affine_bias", 1, 3, gaussian(3), |t, b| {
            let x = t.constant(fixed(4, 2, 7));
            let w = t.constant(fixed(2, 3, 8));
            t.affine(x, w, b)
        }),
        unary("add", 2, 3, gaussian(6), |t, x| {
            let c = t.constant(fixed(2, 3, 9));
            t.add(x, c)
        }),
        unary("sub", 2, 3, gaussian(6), |t, x| {
            let c = t.constant(fixed(2, 3, 10));
            t.sub(c, x)
        }),
        unary("mul", 2, 3, gaussian(6), |t, x| {
            let c = t.constant(fixed(2, 3, 11));
            let y = t.mul(x, c)?;
            t.mul(y, x)
        }),
        unary("scale", 2, 3, gaussian(6), |t, x| t.scale(x, -1.7)),
        unary("square", 2, 3, gaussian(6), |t, x| t.square(x)),
        unary("sqrt", 2, 3, positive(6), |t, x| t.sqrt(x)),
        unary("abs", 2, 3, away_from_zero(6), |t, x| t.abs(x)),
        unary("sum", 2, 3, gaussian(6), |t, x| {
            let s = t.square(x)?;
            t.sum(s)
        }),
        unary("mean", 2, 3, gaussian(6), |t, x| {
            let s = t.square(x)?;
            t.mean(s)
        }),
        unary("sum_rows", 3, 4, gaussian(12), |t, x| t.sum_rows(x)),
        unary("transpose", 2, 3, gaussian(6), |t, x| t.transpose(x)),
        unary("row_norms", 3, 4, gaussian(12), |t, x| t.row_norms(x)),
        unary("div_rows", 3, 4, away_from_zero(12), |t, x| {
            let n = t.slice_cols(x, 0, 1)?;
            let rest = t.slice_cols(x, 1, 3)?;
            t.div_rows(rest, n)
        }),
        unary("l2_normalize_rows", 3, 4, gaussian(12), |t, x| t.l2_normalize_rows(x)),
        unary("log_sum_exp_rows", 3, 4, gaussian(12), |t, x| t.log_sum_exp_rows(x)),
        unary("diag", 3, 3, gaussian(9), |t, x| t.diag(x)),
        unary("gather_rows", 3, 2, gaussian(6), |t, x| t.gather_rows(x, &[2, 0, 2, 1])),
        unary("slice_cols", 2, 4, gaussian(8), |t, x| t.slice_cols(x, 1, 2)),
        unary("slice_rows", 4, 2, gaussian(8), |t, x| t.slice_rows(x, 1, 2)),
        unary("pad_cols", 2, 2, gaussian(4), |t, x| t.pad_cols(x, 5)),
        unary("concat", 2, 3, gaussian(6), |t, x| {
            let c = t.constant(fixed(2, 1, 12));
            let h = t.concat_cols(x, c)?;
            let r = t.constant(fixed(1, 4, 13));
            t.concat_rows(h, r)
        }),
        unary("flatten", 2, 3, gaussian(6), |t, x| t.flatten(x)),
        unary("frame", 1, 20, gaussian(20), |t, x| t.frame(x, 8, 4)),
    ];
    checks.push(GradCheck::new(
        "infonce",
        TapeFunction::new(4, 3, |t, x| {
            let fake = t.l2_normalize_rows(x)?;
            let real = t.constant(crate::losses::l2_normalize(&fixed(4, 3, 14))?);
            infonce_tape(t, fake, real, 0.5)
        }),
        gaussian(12),
    ));
    checks.push(GradCheck::new(
        "alignment_terms",
        TapeFunction::new(3, 4, |t, w| {
            let y = t.constant(crate::losses::append_ones(&fixed(5, 2, 15)));
            let teacher = TeacherEmbedding {
                features: fixed(5, 4, 16),
            };
            let (nce, sem) = alignment_terms_tape(t, y, w, &teacher, 0.5)?;
            t.add(nce, sem)
        }),
        gaussian(12),
    ));
    checks.push(GradCheck::new(
        "ordered_objective_zc",
        Surrogate {
            value: TapeFunction::new(4, 3, |t, x| {
                let target = t.constant(fixed(4, 3, 17));
                let zq = t.constant(fixed(4, 2, 18));
                let recon = frame_l2_tape(t, x, target)?;
                let zc = t.slice_cols(x, 0, 2)?;
                let commit = frame_l2_tape(t, zc, zq)?;
                let commit = t.scale(commit, 0.25)?;
                t.add(recon, commit)
            }),
            gradient: TapeFunction::new(4, 3, |t, x| {
                let target = t.constant(fixed(4, 3, 17));
                let zq = t.constant(fixed(4, 2, 18));
                let zc = t.slice_cols(x, 0, 2)?;
                ordered_objective_tape(t, x, target, &[StageNodes { zc, zq }], 0.25)
            }),
        },
        gaussian(12),
    ));
    checks.push(GradCheck::new(
        "ordered_objective_zq",
        Surrogate {
            value: TapeFunction::new(3, 2, |t, table| {
                let zc = t.constant(fixed(4, 2, 21));
                let zq = t.gather_rows(table, &[0, 2, 1, 0])?;
                frame_l2_tape(t, zc, zq)
            }),
            gradient: TapeFunction::new(3, 2, |t, table| {
                let decoded = t.constant(fixed(4, 3, 22));
                let target = t.constant(fixed(4, 3, 17));
                let zc = t.constant(fixed(4, 2, 21));
                let zq = t.gather_rows(table, &[0, 2, 1, 0])?;
                ordered_objective_tape(t, decoded, target, &[StageNodes { zc, zq }], 0.25)
            }),
        },
        gaussian(6),
    ));
    checks.push(GradCheck::new(
        "stft_magnitude",
        TapeFunction::new(1, 96, |t, x| {
            let m = stft_magnitude_tape(t, x, 32, 8)?;
            weighted_sum(t, m, 19)
        }),
        gaussian(96),
    ));
    checks.push(GradCheck::new(
        "mel_l2_loss",
        TapeFunction::new(1, 128, |t, x| {
            let target = t.constant(fixed(1, 128, 20));
            mel_l2_loss_tape(t, x, target, &gradcheck_mel())
        }),
        gaussian(128),
    ));
    checks
}

/// Runs every check at `points` random points drawn from `seed`.
pub fn run_gradchecks(checks: &[GradCheck], points: usize, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(checks.len());
    for c in checks {
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            let x = (c.sampler)(&mut rng);
            worst = worst.max(fd_check(c.function.as_ref(), &x, 1e-6)?);
        }
        entries.push(GradCheckEntry {
            op: c.name.clone(),
            max_rel_error: worst,
            points,
            passed: worst < tolerance,
        });
    }
    Ok(GradCheckReport { entries, tolerance })
}

/// [`standard_checks`] at `points` random points each.
pub fn gradcheck_all(points: usize, seed: u64) -> Result<GradCheckReport> {
    run_gradchecks(&standard_checks(), points, seed, GRADCHECK_TOLERANCE)
}
