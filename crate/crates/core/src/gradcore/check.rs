use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::tape::{NodeId, Tape};

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait ScalarFunction {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
}

type Builder = dyn Fn(&mut Tape, NodeId) -> Result<NodeId>;

/// Wraps a tape-building closure over a single `rows × cols` parameter.
///
/// The flat point is read in row-major order.
pub struct TapeFunction {
    rows: usize,
    cols: usize,
    build: Box<Builder>,
}

impl TapeFunction {
    pub fn new(
        rows: usize,
        cols: usize,
        build: impl Fn(&mut Tape, NodeId) -> Result<NodeId> + 'static,
    ) -> Self {
        Self {
            rows,
            cols,
            build: Box::new(build),
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.rows * self.cols
    }

    fn run(&self, x: &[f64]) -> Result<(Tape, NodeId, NodeId)> {
        if x.len() != self.num_inputs() {
            return Err(Error::DimensionMismatch {
                context: "tape function input",
                expected: self.num_inputs(),
                got: x.len(),
            });
        }
        let mut tape = Tape::new();
        let p = tape.param(Matrix::from_row_slice(self.rows, self.cols, x));
        let out = (self.build)(&mut tape, p)?;
        Ok((tape, p, out))
    }
}

impl ScalarFunction for TapeFunction {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let (tape, _, out) = self.run(x)?;
        tape.scalar(out)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (tape, p, out) = self.run(x)?;
        let g = tape.backward(out)?.wrt(p);
        Ok(g.transpose().as_slice().to_vec())
    }
}

/// Relative error used by [`fd_check`]: `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Largest relative error between the analytic gradient and central
/// differences `(f(x + h) - f(x - h)) / 2h` over all coordinates.
pub fn fd_check<F: ScalarFunction + ?Sized>(f: &F, point: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidConfig(format!("fd_check eps must be positive, got {eps}")));
    }
    let analytic = f.gradient(point)?;
    if analytic.len() != point.len() {
        return Err(Error::DimensionMismatch {
            context: "fd_check gradient length",
            expected: point.len(),
            got: analytic.len(),
        });
    }
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let x0 = point[i];
        let (xp, xm) = (x0 + eps, x0 - eps);
        x[i] = xp;
        let fp = f.value(&x)?;
        x[i] = xm;
        let fm = f.value(&x)?;
        x[i] = x0;
        let numeric = (fp - fm) / (xp - xm);
        let err = relative_error(analytic[i], numeric);
        if !err.is_finite() {
            return Err(Error::NonFinite("fd_check"));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Plain gradient descent `θ ← θ − lr · g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
}

impl Default for Sgd {
    fn default() -> Self {
        Self { lr: 0.05 }
    }
}

impl Sgd {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate must be ≥ 0, got {lr}")));
        }
        Ok(Self { lr })
    }

    pub fn step(&self, param: &mut Matrix, grad: &Matrix) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(Error::Tape(format!(
                "sgd step: parameter {:?} vs gradient {:?}",
                param.shape(),
                grad.shape()
            )));
        }
        if self.lr != 0.0 {
            param.zip_apply(grad, |p, g| *p -= self.lr * g);
        }
        Ok(())
    }
}
