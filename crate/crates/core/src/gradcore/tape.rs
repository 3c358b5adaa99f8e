use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Affine(NodeId, NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Square(NodeId),
    Sqrt(NodeId),
    Abs(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    SumRows(NodeId),
    Transpose(NodeId),
    RowNorms(NodeId),
    DivRows(NodeId, NodeId),
    L2NormalizeRows(NodeId),
    LogSumExpRows(NodeId),
    Diag(NodeId),
    StopGradient,
    SteQuantize(NodeId),
    GatherRows(NodeId, Vec<usize>),
    SliceCols(NodeId, usize),
    SliceRows(NodeId, usize),
    Flatten(NodeId),
    PadCols(NodeId),
    ConcatCols(NodeId, NodeId),
    ConcatRows(NodeId, NodeId),
    Gather(NodeId, Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Linear record of matrix-valued operations for reverse-mode differentiation.
///
/// Every value is a dense `f64` matrix; scalars are `1 × 1`. Leaves created
/// with [`Tape::param`] receive gradients, leaves from [`Tape::constant`] and
/// everything downstream of [`Tape::stop_gradient`] do not.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every node on the tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// `None` when no gradient reached the node.
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of `id`, zeros when nothing reached it.
    pub fn wrt(&self, id: NodeId) -> Matrix {
        match self.get(id) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                Matrix::zeros(r, c)
            }
        }
    }

    /// True when some entry of the node's gradient is non-zero.
    pub fn is_nonzero(&self, id: NodeId) -> bool {
        self.get(id).is_some_and(|g| g.iter().any(|&v| v != 0.0))
    }
}

fn shape_err(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Tape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        let v = &self.nodes[id.0].value;
        (v.nrows(), v.ncols())
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Tape(format!("node {} does not belong to this tape", id.0)))
        }
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        self.check(id)?;
        let v = self.value(id);
        if v.shape() != (1, 1) {
            return Err(Error::Tape(format!("expected a scalar, found {:?}", v.shape())));
        }
        Ok(v[(0, 0)])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(shape_err("matmul", sa, sb));
        }
        let v = self.value(a) * self.value(b);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    /// `x · w + 1 bᵀ` with `b` a `1 × n` row.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        for id in [x, w, b] {
            self.check(id)?;
        }
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.1 != sw.0 {
            return Err(shape_err("affine", sx, sw));
        }
        if sb != (1, sw.1) {
            return Err(shape_err("affine bias", sb, (1, sw.1)));
        }
        let mut v = self.value(x) * self.value(w);
        let bias = self.value(b).clone();
        for mut row in v.row_iter_mut() {
            row += &bias;
        }
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(v, Op::Affine(x, w, b), rg))
    }

    fn same_shape(&self, op: &str, a: NodeId, b: NodeId) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.value(a) + self.value(b);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a) - self.value(b);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).component_mul(self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a) * c;
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Scale(a, c), rg))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).map(|x| x * x);
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Square(a), rg))
    }

    /// Elementwise square root; the gradient is taken as zero where the output is zero.
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        if self.value(a).iter().any(|&x| x < 0.0) {
            return Err(Error::Tape("sqrt of a negative entry".into()));
        }
        let v = self.value(a).map(f64::sqrt);
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Sqrt(a), rg))
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).map(f64::abs);
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Abs(a), rg))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = Matrix::from_element(1, 1, self.value(a).sum());
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Sum(a), rg))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::Tape("mean of an empty matrix".into()));
        }
        let v = Matrix::from_element(1, 1, self.value(a).sum() / n as f64);
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Mean(a), rg))
    }

    /// Row sums as a column (`T × 1`).
    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let m = self.value(a);
        let v = Matrix::from_fn(m.nrows(), 1, |r, _| m.row(r).sum());
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::SumRows(a), rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).transpose();
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Transpose(a), rg))
    }

    /// Euclidean norm of each row (`T × 1`).
    pub fn row_norms(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let m = self.value(a);
        let v = Matrix::from_fn(m.nrows(), 1, |r, _| m.row(r).norm());
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::RowNorms(a), rg))
    }

    /// Divides row `i` of `a` by `n[i]` (`n` is `T × 1`, entries non-zero).
    pub fn div_rows(&mut self, a: NodeId, n: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(n)?;
        let (sa, sn) = (self.shape(a), self.shape(n));
        if sn != (sa.0, 1) {
            return Err(shape_err("div_rows", sa, sn));
        }
        if self.value(n).iter().any(|&x| x == 0.0) {
            return Err(Error::Tape("div_rows by zero".into()));
        }
        let m = self.value(a);
        let d = self.value(n);
        let v = Matrix::from_fn(sa.0, sa.1, |r, c| m[(r, c)] / d[(r, 0)]);
        let rg = self.rg(&[a, n]);
        Ok(self.push(v, Op::DivRows(a, n), rg))
    }

    /// Scales every row to unit Euclidean norm; errors on an all-zero row.
    pub fn l2_normalize_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let m = self.value(a);
        let mut v = m.clone();
        for (r, mut row) in v.row_iter_mut().enumerate() {
            let n = m.row(r).norm();
            if n == 0.0 {
                return Err(Error::Tape(format!("l2_normalize_rows: row {r} is zero")));
            }
            row /= n;
        }
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::L2NormalizeRows(a), rg))
    }

    /// Stabilized `log Σ_j exp(a_ij)` per row (`T × 1`).
    pub fn log_sum_exp_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let m = self.value(a);
        if m.ncols() == 0 {
            return Err(Error::Tape("log_sum_exp_rows over zero columns".into()));
        }
        let v = Matrix::from_fn(m.nrows(), 1, |r, _| log_sum_exp(m.row(r).iter().copied()));
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::LogSumExpRows(a), rg))
    }

    /// Diagonal of a square matrix as a column.
    pub fn diag(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let (r, c) = self.shape(a);
        if r != c {
            return Err(shape_err("diag", (r, c), (r, r)));
        }
        let m = self.value(a);
        let v = Matrix::from_fn(r, 1, |i, _| m[(i, i)]);
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Diag(a), rg))
    }

    /// Same value, no gradient flows back through it.
    pub fn stop_gradient(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let v = self.value(a).clone();
        Ok(self.push(v, Op::StopGradient, false))
    }

    /// Forward: each row snapped to its nearest codebook row (lowest index on
    /// ties). Backward: identity into `zc`. The codebook is read as a constant.
    pub fn ste_quantize(&mut self, zc: NodeId, codebook: &Matrix) -> Result<(NodeId, Vec<usize>)> {
        self.check(zc)?;
        let m = self.value(zc);
        if codebook.ncols() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "ste_quantize width",
                expected: codebook.ncols(),
                got: m.ncols(),
            });
        }
        if codebook.nrows() == 0 {
            return Err(Error::Tape("ste_quantize with an empty codebook".into()));
        }
        let codes = nearest_rows(m, codebook);
        let v = Matrix::from_fn(m.nrows(), m.ncols(), |r, c| codebook[(codes[r], c)]);
        let rg = self.rg(&[zc]);
        Ok((self.push(v, Op::SteQuantize(zc), rg), codes))
    }

    /// Row `r` of the output is row `indices[r]` of `table`.
    pub fn gather_rows(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        self.check(table)?;
        let m = self.value(table);
        if let Some(&bad) = indices.iter().find(|&&i| i >= m.nrows()) {
            return Err(Error::Tape(format!("gather_rows index {bad} out of {}", m.nrows())));
        }
        let v = Matrix::from_fn(indices.len(), m.ncols(), |r, c| m[(indices[r], c)]);
        let rg = self.rg(&[table]);
        Ok(self.push(v, Op::GatherRows(table, indices.to_vec()), rg))
    }

    /// Columns `start .. start + len`.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.check(a)?;
        let c = self.shape(a).1;
        if start + len > c {
            return Err(Error::Tape(format!("slice_cols {start}+{len} exceeds {c} columns")));
        }
        let v = self.value(a).columns(start, len).into_owned();
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::SliceCols(a, start), rg))
    }

    /// Rows `start .. start + len`.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.check(a)?;
        let r = self.shape(a).0;
        if start + len > r {
            return Err(Error::Tape(format!("slice_rows {start}+{len} exceeds {r} rows")));
        }
        let v = self.value(a).rows(start, len).into_owned();
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::SliceRows(a, start), rg))
    }

    /// Row-major flattening into a single `1 × (rows · cols)` row.
    pub fn flatten(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let m = self.value(a);
        let v = Matrix::from_row_slice(1, m.len(), m.transpose().as_slice());
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::Flatten(a), rg))
    }

    /// Appends zero columns up to `total` columns.
    pub fn pad_cols(&mut self, a: NodeId, total: usize) -> Result<NodeId> {
        self.check(a)?;
        let (r, c) = self.shape(a);
        if total < c {
            return Err(Error::Tape(format!("pad_cols to {total} < {c} columns")));
        }
        let mut v = Matrix::zeros(r, total);
        v.columns_mut(0, c).copy_from(self.value(a));
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::PadCols(a), rg))
    }

    /// `[a | b]`.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.0 != sb.0 {
            return Err(shape_err("concat_cols", sa, sb));
        }
        let mut v = Matrix::zeros(sa.0, sa.1 + sb.1);
        v.columns_mut(0, sa.1).copy_from(self.value(a));
        v.columns_mut(sa.1, sb.1).copy_from(self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::ConcatCols(a, b), rg))
    }

    /// `a` stacked above `b`.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(shape_err("concat_rows", sa, sb));
        }
        let mut v = Matrix::zeros(sa.0 + sb.0, sa.1);
        v.rows_mut(0, sa.0).copy_from(self.value(a));
        v.rows_mut(sa.0, sb.0).copy_from(self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::ConcatRows(a, b), rg))
    }

    /// Slices a `1 × L` signal into overlapping frames with reflect padding of
    /// `n_fft / 2` on both sides (`F × n_fft`, `F = 1 + L / hop`).
    pub fn frame(&mut self, wave: NodeId, n_fft: usize, hop: usize) -> Result<NodeId> {
        self.check(wave)?;
        let (r, len) = self.shape(wave);
        if r != 1 {
            return Err(Error::Tape(format!("frame expects a 1 × L row, got {r} rows")));
        }
        let (index, frames) = crate::dsp::frame_indices(len, n_fft, hop)?;
        let w = self.value(wave);
        let v = Matrix::from_fn(frames, n_fft, |f, k| w[(0, index[f * n_fft + k])]);
        let rg = self.rg(&[wave]);
        Ok(self.push(v, Op::Gather(wave, index), rg))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        self.check(output)?;
        let shape = self.shape(output);
        if shape != (1, 1) {
            return Err(Error::Tape(format!(
                "backward needs a scalar output, got {shape:?}"
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::from_element(1, 1, 1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(&node.op, &node.value, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |id: NodeId, delta: Matrix| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => *existing += delta,
                slot => *slot = Some(delta),
            }
        };
        let val = |id: NodeId| &self.nodes[id.0].value;
        match op {
            Op::Leaf | Op::StopGradient => {}
            Op::MatMul(a, b) => {
                acc(*a, g * val(*b).transpose());
                acc(*b, val(*a).transpose() * g);
            }
            Op::Affine(x, w, b) => {
                acc(*x, g * val(*w).transpose());
                acc(*w, val(*x).transpose() * g);
                acc(*b, Matrix::from_fn(1, g.ncols(), |_, c| g.column(c).sum()));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                acc(*a, g.component_mul(val(*b)));
                acc(*b, g.component_mul(val(*a)));
            }
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::Square(a) => acc(*a, g.component_mul(val(*a)) * 2.0),
            Op::Sqrt(a) => acc(
                *a,
                g.zip_map(out, |gi, y| if y == 0.0 { 0.0 } else { gi / (2.0 * y) }),
            ),
            Op::Abs(a) => acc(*a, g.zip_map(val(*a), |gi, x| gi * sign(x))),
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::from_element(r, c, g[(0, 0)]));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::from_element(r, c, g[(0, 0)] / (r * c) as f64));
            }
            Op::SumRows(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::from_fn(r, c, |i, _| g[(i, 0)]));
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::RowNorms(a) => {
                let x = val(*a);
                acc(
                    *a,
                    Matrix::from_fn(x.nrows(), x.ncols(), |r, c| {
                        let n = out[(r, 0)];
                        if n == 0.0 {
                            0.0
                        } else {
                            g[(r, 0)] * x[(r, c)] / n
                        }
                    }),
                );
            }
            Op::DivRows(a, n) => {
                let x = val(*a);
                let d = val(*n);
                acc(*a, Matrix::from_fn(x.nrows(), x.ncols(), |r, c| g[(r, c)] / d[(r, 0)]));
                acc(
                    *n,
                    Matrix::from_fn(x.nrows(), 1, |r, _| {
                        let dot: f64 = (0..x.ncols()).map(|c| g[(r, c)] * x[(r, c)]).sum();
                        -dot / (d[(r, 0)] * d[(r, 0)])
                    }),
                );
            }
            Op::L2NormalizeRows(a) => {
                let x = val(*a);
                let mut d = Matrix::zeros(x.nrows(), x.ncols());
                for r in 0..x.nrows() {
                    let n = x.row(r).norm();
                    let dot = g.row(r).dot(&out.row(r));
                    for c in 0..x.ncols() {
                        d[(r, c)] = (g[(r, c)] - dot * out[(r, c)]) / n;
                    }
                }
                acc(*a, d);
            }
            Op::LogSumExpRows(a) => {
                let x = val(*a);
                acc(
                    *a,
                    Matrix::from_fn(x.nrows(), x.ncols(), |r, c| {
                        g[(r, 0)] * (x[(r, c)] - out[(r, 0)]).exp()
                    }),
                );
            }
            Op::Diag(a) => {
                let n = val(*a).nrows();
                let mut d = Matrix::zeros(n, n);
                for i in 0..n {
                    d[(i, i)] = g[(i, 0)];
                }
                acc(*a, d);
            }
            Op::SteQuantize(zc) => acc(*zc, g.clone()),
            Op::GatherRows(table, indices) => {
                let t = val(*table);
                let mut d = Matrix::zeros(t.nrows(), t.ncols());
                for (r, &i) in indices.iter().enumerate() {
                    let mut row = d.row_mut(i);
                    row += g.row(r);
                }
                acc(*table, d);
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                d.columns_mut(*start, g.ncols()).copy_from(g);
                acc(*a, d);
            }
            Op::SliceRows(a, start) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                d.rows_mut(*start, g.nrows()).copy_from(g);
                acc(*a, d);
            }
            Op::Flatten(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::from_row_slice(r, c, g.as_slice()));
            }
            Op::PadCols(a) => {
                let c = val(*a).ncols();
                acc(*a, g.columns(0, c).into_owned());
            }
            Op::ConcatCols(a, b) => {
                let ca = val(*a).ncols();
                acc(*a, g.columns(0, ca).into_owned());
                acc(*b, g.columns(ca, g.ncols() - ca).into_owned());
            }
            Op::ConcatRows(a, b) => {
                let ra = val(*a).nrows();
                acc(*a, g.rows(0, ra).into_owned());
                acc(*b, g.rows(ra, g.nrows() - ra).into_owned());
            }
            Op::Gather(src, index) => {
                let s = val(*src);
                let mut d = Matrix::zeros(s.nrows(), s.ncols());
                let cols = g.ncols();
                for (k, &i) in index.iter().enumerate() {
                    d[(0, i)] += g[(k / cols, k % cols)];
                }
                acc(*src, d);
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Stabilized `log Σ exp(x)`; `-inf` for an empty input.
pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Row-wise argmin of `‖c‖² − 2 q·c` via one matrix product.
fn nearest_rows(queries: &Matrix, codebook: &Matrix) -> Vec<usize> {
    let norms: Vec<f64> = codebook.row_iter().map(|c| c.norm_squared()).collect();
    let dots = queries * codebook.transpose();
    (0..queries.nrows())
        .map(|r| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, n) in norms.iter().enumerate() {
                let d = n - 2.0 * dots[(r, k)];
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}
