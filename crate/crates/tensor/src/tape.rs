//! Dynamic reverse-mode tape.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each op appends one node
//! holding its output value and enough bookkeeping to replay the local
//! vector-Jacobian product. [`Tape::backward`] walks the nodes in reverse
//! insertion order, which is a valid reverse topological order because an
//! op can only reference nodes that already exist.
//!
//! Most ops work on the 2-D view of a tensor: all leading dimensions are
//! folded into rows and the last dimension is the column count. Binary
//! elementwise ops broadcast their right operand when it is `[1, n]`,
//! `[m, 1]` or `[1, 1]`.

use crate::error::{shape_err, Result, TensorError};
use crate::tensor::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    Row,
    Col,
    Scalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param { store: u64, id: ParamId },
    MatMul(Var, Var),
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Abs(Var),
    Softmax(Var),
    LogSoftmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    SumAll(Var),
    MeanAll(Var),
    SumCols(Var),
    Embedding { table: Var, ids: Vec<usize> },
    Pick { x: Var, idx: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    SegmentSum { x: Var, segments: Vec<usize>, weights: Vec<f64> },
    Unfold { x: Var, batch: usize, seq: usize, width: usize },
    SegmentMax { x: Var, argmax: Vec<usize> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param { .. } => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Abs(..) => "abs",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::SumAll(..) => "sum",
            Op::MeanAll(..) => "mean",
            Op::SumCols(..) => "sum_cols",
            Op::Embedding { .. } => "embedding",
            Op::Pick { .. } => "pick",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::SegmentSum { .. } => "segment_sum",
            Op::Unfold { .. } => "unfold",
            Op::SegmentMax { .. } => "segment_max",
        }
    }
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

impl Node {
    fn rows(&self) -> usize {
        fold_rows(&self.shape)
    }

    fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }
}

fn fold_rows(shape: &[usize]) -> usize {
    if shape.len() <= 1 {
        1
    } else {
        shape[..shape.len() - 1].iter().product()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass.
///
/// Only leaf and parameter nodes keep their gradient; intermediate
/// buffers are released as soon as they have been propagated.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(u64, ParamId, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Add every gradient that belongs to `store` into the store's tensors.
    /// Returns the number of parameter leaves that received a gradient.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<usize> {
        let mut n = 0;
        for &(uid, id, node) in &self.params {
            if uid != store.uid() {
                continue;
            }
            if let Some(g) = &self.grads[node] {
                store.get_mut(id).accumulate_grad(g)?;
                n += 1;
            }
        }
        Ok(n)
    }
}

fn gemm(
    (m, k, n): (usize, usize, usize),
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.0.len() >= m * k && b.0.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides describe row-major or transposed views that stay
    // inside the slices, whose lengths are checked above by callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            sum += *d;
        }
        dst.iter_mut().for_each(|d| *d /= sum);
    }
    out
}

fn log_softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + src.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = s - lse;
        }
    }
    out
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

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.0].rows()
    }

    pub fn cols(&self, v: Var) -> usize {
        self.nodes[v.0].cols()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).unwrap_or_else(|_| {
            let mut t = Tensor::zeros(&n.shape);
            t.data_mut().copy_from_slice(&n.value);
            t
        })
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Result<Var> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        if cfg!(debug_assertions) && value.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes
            .get(v.0)
            .ok_or_else(|| TensorError::Contract(format!("variable {} is not on this tape", v.0)))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ---- leaves ---------------------------------------------------------

    /// Leaf holding a copy of `t`. It records gradients iff
    /// `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Result<Var> {
        let rg = t.requires_grad;
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, rg)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(shape_err("constant", format!("{shape:?} vs {} values", data.len())));
        }
        self.push(shape.to_vec(), data, Op::Leaf, false)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Result<Var> {
        self.push(vec![1, 1], vec![value], Op::Leaf, false)
    }

    /// Bring a stored parameter onto the tape. Frozen parameters enter as
    /// constants and never receive gradients.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        let t = store.get(id);
        let rg = !store.is_frozen(id);
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Param {
                store: store.uid(),
                id,
            },
            rg,
        )
    }

    // ---- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        if na.shape.len() != 2 || nb.shape.len() != 2 || na.shape[1] != nb.shape[0] {
            return Err(shape_err("matmul", format!("{:?} x {:?}", na.shape, nb.shape)));
        }
        let (m, k, n) = (na.shape[0], na.shape[1], nb.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            (m, k, n),
            (&na.value, k as isize, 1),
            (&nb.value, n as isize, 1),
            0.0,
            &mut out,
        );
        let rg = self.rg(&[a, b]);
        self.push(vec![m, n], out, Op::MatMul(a, b), rg)
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        let (ra, ca, rb, cb) = (na.rows(), na.cols(), nb.rows(), nb.cols());
        if na.shape == nb.shape || (ra == rb && ca == cb) {
            Ok(Bcast::Same)
        } else if rb == 1 && cb == 1 {
            Ok(Bcast::Scalar)
        } else if rb == 1 && cb == ca {
            Ok(Bcast::Row)
        } else if cb == 1 && rb == ra {
            Ok(Bcast::Col)
        } else {
            Err(shape_err(op, format!("{:?} with {:?}", na.shape, nb.shape)))
        }
    }

    fn binary(&mut self, a: Var, b: Var, kind: u8) -> Result<Var> {
        let name = ["add", "sub", "mul"][kind as usize];
        let bc = self.bcast(name, a, b)?;
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        let cols = na.cols();
        let f: fn(f64, f64) -> f64 = match kind {
            0 => |x, y| x + y,
            1 => |x, y| x - y,
            _ => |x, y| x * y,
        };
        let out: Vec<f64> = na
            .value
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match bc {
                    Bcast::Same => nb.value[i],
                    Bcast::Row => nb.value[i % cols],
                    Bcast::Col => nb.value[i / cols],
                    Bcast::Scalar => nb.value[0],
                };
                f(x, y)
            })
            .collect();
        let shape = na.shape.clone();
        let rg = self.rg(&[a, b]);
        let op = match kind {
            0 => Op::Add(a, b, bc),
            1 => Op::Sub(a, b, bc),
            _ => Op::Mul(a, b, bc),
        };
        self.push(shape, out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 1)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 2)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let n = self.node(a)?;
        let out = n.value.iter().map(|&x| f(x)).collect();
        let shape = n.shape.clone();
        let rg = n.requires_grad;
        self.push(shape, out, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let neg = self.scale(a, -1.0)?;
        self.add_scalar(neg, 1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    /// Softmax over the last dimension, computed with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a)?;
        let out = softmax_rows(&n.value, n.cols());
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, out, Op::Softmax(a), rg)
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a)?;
        let out = log_softmax_rows(&n.value, n.cols());
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, out, Op::LogSoftmax(a), rg)
    }

    // ---- structure ------------------------------------------------------

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat_cols", "no inputs"))?;
        let rows = self.node(*first)?.rows();
        let mut total = 0;
        for &p in parts {
            let n = self.node(p)?;
            if n.rows() != rows {
                return Err(shape_err("concat_cols", format!("rows {} vs {}", n.rows(), rows)));
            }
            total += n.cols();
        }
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for &p in parts {
            let n = &self.nodes[p.0];
            let c = n.cols();
            for r in 0..rows {
                out[r * total + off..r * total + off + c].copy_from_slice(&n.value[r * c..(r + 1) * c]);
            }
            off += c;
        }
        let rg = self.rg(parts);
        self.push(vec![rows, total], out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat_rows", "no inputs"))?;
        let cols = self.node(*first)?.cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let n = self.node(p)?;
            if n.cols() != cols {
                return Err(shape_err("concat_rows", format!("cols {} vs {}", n.cols(), cols)));
            }
            rows += n.rows();
            out.extend_from_slice(&n.value);
        }
        let rg = self.rg(parts);
        self.push(vec![rows, cols], out, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.node(a)?;
        let (rows, cols) = (n.rows(), n.cols());
        if len == 0 || start + len > rows {
            return Err(shape_err("slice_rows", format!("{start}+{len} of {rows}")));
        }
        let out = n.value[start * cols..(start + len) * cols].to_vec();
        let rg = n.requires_grad;
        self.push(vec![len, cols], out, Op::SliceRows(a, start), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.node(a)?;
        let (rows, cols) = (n.rows(), n.cols());
        if len == 0 || start + len > cols {
            return Err(shape_err("slice_cols", format!("{start}+{len} of {cols}")));
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&n.value[r * cols + start..r * cols + start + len]);
        }
        let rg = n.requires_grad;
        self.push(vec![rows, len], out, Op::SliceCols(a, start), rg)
    }

    // ---- reductions -----------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a)?;
        let s = n.value.iter().sum();
        let rg = n.requires_grad;
        self.push(vec![1, 1], vec![s], Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a)?;
        let s = n.value.iter().sum::<f64>() / n.value.len() as f64;
        let rg = n.requires_grad;
        self.push(vec![1, 1], vec![s], Op::MeanAll(a), rg)
    }

    /// Row sums: `[m, n] -> [m, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a)?;
        let out: Vec<f64> = n.value.chunks_exact(n.cols()).map(|r| r.iter().sum()).collect();
        let rows = out.len();
        let rg = n.requires_grad;
        self.push(vec![rows, 1], out, Op::SumCols(a), rg)
    }

    /// Weighted scatter-sum of rows into `n_segments` output rows:
    /// `out[segments[r]] += weights[r] * x[r]`.
    pub fn segment_sum(
        &mut self,
        x: Var,
        segments: &[usize],
        weights: &[f64],
        n_segments: usize,
    ) -> Result<Var> {
        let n = self.node(x)?;
        let (rows, cols) = (n.rows(), n.cols());
        if segments.len() != rows || weights.len() != rows {
            return Err(shape_err("segment_sum", format!("{} rows, {} segment ids", rows, segments.len())));
        }
        let mut out = vec![0.0; n_segments * cols];
        for (r, (&s, &w)) in segments.iter().zip(weights).enumerate() {
            if s >= n_segments {
                return Err(TensorError::Index {
                    op: "segment_sum",
                    index: s,
                    size: n_segments,
                });
            }
            let src = &n.value[r * cols..(r + 1) * cols];
            for (o, &v) in out[s * cols..(s + 1) * cols].iter_mut().zip(src) {
                *o += w * v;
            }
        }
        let rg = n.requires_grad;
        self.push(
            vec![n_segments, cols],
            out,
            Op::SegmentSum {
                x,
                segments: segments.to_vec(),
                weights: weights.to_vec(),
            },
            rg,
        )
    }

    /// Column-wise max over contiguous row ranges `(start, len)`.
    pub fn segment_max(&mut self, x: Var, ranges: &[(usize, usize)]) -> Result<Var> {
        let n = self.node(x)?;
        let (rows, cols) = (n.rows(), n.cols());
        let mut out = vec![0.0; ranges.len() * cols];
        let mut argmax = vec![0usize; ranges.len() * cols];
        for (s, &(start, len)) in ranges.iter().enumerate() {
            if len == 0 || start + len > rows {
                return Err(shape_err("segment_max", format!("range {start}+{len} of {rows}")));
            }
            for c in 0..cols {
                let mut best = start;
                for r in start + 1..start + len {
                    if n.value[r * cols + c] > n.value[best * cols + c] {
                        best = r;
                    }
                }
                out[s * cols + c] = n.value[best * cols + c];
                argmax[s * cols + c] = best;
            }
        }
        let rg = n.requires_grad;
        self.push(vec![ranges.len(), cols], out, Op::SegmentMax { x, argmax }, rg)
    }

    // ---- indexing -------------------------------------------------------

    /// Gather rows of `table` (`[V, d]`) at `ids`, giving `[ids.len(), d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let n = self.node(table)?;
        let (vocab, dim) = (n.rows(), n.cols());
        if ids.is_empty() {
            return Err(shape_err("embedding", "empty id list"));
        }
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(TensorError::Index {
                    op: "embedding",
                    index: id,
                    size: vocab,
                });
            }
            out.extend_from_slice(&n.value[id * dim..(id + 1) * dim]);
        }
        let rg = n.requires_grad;
        self.push(
            vec![ids.len(), dim],
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    /// `out[i] = x[i, idx[i]]`, shape `[m, 1]`.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let n = self.node(x)?;
        let (rows, cols) = (n.rows(), n.cols());
        if idx.len() != rows {
            return Err(shape_err("pick", format!("{} indices for {} rows", idx.len(), rows)));
        }
        let mut out = Vec::with_capacity(rows);
        for (r, &j) in idx.iter().enumerate() {
            if j >= cols {
                return Err(TensorError::Index {
                    op: "pick",
                    index: j,
                    size: cols,
                });
            }
            out.push(n.value[r * cols + j]);
        }
        let rg = n.requires_grad;
        self.push(vec![rows, 1], out, Op::Pick { x, idx: idx.to_vec() }, rg)
    }

    /// Per-row `-log softmax(logits)[target]`, shape `[m, 1]`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let n = self.node(logits)?;
        let (rows, cols) = (n.rows(), n.cols());
        if targets.len() != rows {
            return Err(shape_err(
                "cross_entropy",
                format!("{} targets for {} rows", targets.len(), rows),
            ));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= cols) {
            return Err(TensorError::Index {
                op: "cross_entropy",
                index: t,
                size: cols,
            });
        }
        let logp = log_softmax_rows(&n.value, cols);
        let out: Vec<f64> = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -logp[r * cols + t])
            .collect();
        let probs = logp.iter().map(|v| v.exp()).collect();
        let rg = n.requires_grad;
        self.push(
            vec![rows, 1],
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        )
    }

    /// Batch-mean cross entropy, a scalar.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let rows = self.cross_entropy_rows(logits, targets)?;
        self.mean(rows)
    }

    /// Sliding windows over batch-major sequences: `x` is `[batch*seq, d]`,
    /// the result is `[batch*(seq-width+1), width*d]` where each row is the
    /// concatenation of `width` consecutive rows of one sequence.
    pub fn unfold(&mut self, x: Var, batch: usize, seq: usize, width: usize) -> Result<Var> {
        let n = self.node(x)?;
        let (rows, d) = (n.rows(), n.cols());
        if rows != batch * seq || width == 0 || width > seq {
            return Err(shape_err(
                "unfold",
                format!("{rows} rows as {batch}x{seq}, width {width}"),
            ));
        }
        let nw = seq - width + 1;
        let mut out = Vec::with_capacity(batch * nw * width * d);
        for b in 0..batch {
            for t in 0..nw {
                let start = (b * seq + t) * d;
                out.extend_from_slice(&n.value[start..start + width * d]);
            }
        }
        let rg = n.requires_grad;
        self.push(
            vec![batch * nw, width * d],
            out,
            Op::Unfold { x, batch, seq, width },
            rg,
        )
    }

    // ---- backward -------------------------------------------------------

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let ln = self.node(loss)?;
        if ln.value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                ln.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut params = Vec::new();
        if ln.requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match node.op {
                Op::Leaf => continue,
                Op::Param { store, id } => {
                    params.push((store, id, i));
                    continue;
                }
                _ => {}
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        params.reverse();
        Ok(Gradients { grads, params })
    }

    /// Backward followed by accumulation into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let g = self.backward(loss)?;
        g.accumulate_into(store)?;
        Ok(g)
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        // Lazily allocated gradient buffer for an input, or None when the
        // input does not need one.
        macro_rules! buf {
            ($v:expr) => {{
                let j = $v.0;
                if nodes[j].requires_grad {
                    Some(grads[j].get_or_insert_with(|| vec![0.0; nodes[j].value.len()]))
                } else {
                    None
                }
            }};
        }
        match &node.op {
            Op::Leaf | Op::Param { .. } => {}
            Op::MatMul(a, b) => {
                let (na, nb) = (&nodes[a.0], &nodes[b.0]);
                let (m, k, n) = (na.shape[0], na.shape[1], nb.shape[1]);
                if let Some(da) = buf!(a) {
                    // dA += dC · Bᵀ
                    gemm((m, n, k), (g, n as isize, 1), (&nb.value, 1, n as isize), 1.0, da);
                }
                if let Some(db) = buf!(b) {
                    // dB += Aᵀ · dC
                    gemm((k, m, n), (&na.value, 1, k as isize), (g, n as isize, 1), 1.0, db);
                }
            }
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(da) = buf!(a) {
                    da.iter_mut().zip(g).for_each(|(d, &x)| *d += x);
                }
                let cols = node.cols();
                if let Some(db) = buf!(b) {
                    reduce_bcast(db, g, *bc, cols, sign, |_| 1.0);
                }
            }
            Op::Mul(a, b, bc) => {
                let cols = node.cols();
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(da) = buf!(a) {
                    for (idx, d) in da.iter_mut().enumerate() {
                        let y = match bc {
                            Bcast::Same => vb[idx],
                            Bcast::Row => vb[idx % cols],
                            Bcast::Col => vb[idx / cols],
                            Bcast::Scalar => vb[0],
                        };
                        *d += g[idx] * y;
                    }
                }
                if let Some(db) = buf!(b) {
                    reduce_bcast(db, g, *bc, cols, 1.0, |idx| va[idx]);
                }
            }
            Op::Scale(a, c) => {
                if let Some(da) = buf!(a) {
                    da.iter_mut().zip(g).for_each(|(d, &x)| *d += c * x);
                }
            }
            Op::AddScalar(a) => {
                if let Some(da) = buf!(a) {
                    da.iter_mut().zip(g).for_each(|(d, &x)| *d += x);
                }
            }
            Op::Tanh(a) => {
                let y = &node.value;
                if let Some(da) = buf!(a) {
                    for ((d, &gy), &yy) in da.iter_mut().zip(g).zip(y) {
                        *d += gy * (1.0 - yy * yy);
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                if let Some(da) = buf!(a) {
                    for ((d, &gy), &yy) in da.iter_mut().zip(g).zip(y) {
                        *d += gy * yy * (1.0 - yy);
                    }
                }
            }
            Op::Relu(a) => {
                let y = &node.value;
                if let Some(da) = buf!(a) {
                    for ((d, &gy), &yy) in da.iter_mut().zip(g).zip(y) {
                        if yy > 0.0 {
                            *d += gy;
                        }
                    }
                }
            }
            Op::Exp(a) => {
                let y = &node.value;
                if let Some(da) = buf!(a) {
                    for ((d, &gy), &yy) in da.iter_mut().zip(g).zip(y) {
                        *d += gy * yy;
                    }
                }
            }
            Op::Abs(a) => {
                let x = &nodes[a.0].value;
                if let Some(da) = buf!(a) {
                    for ((d, &gy), &xx) in da.iter_mut().zip(g).zip(x) {
                        if xx > 0.0 {
                            *d += gy;
                        } else if xx < 0.0 {
                            *d -= gy;
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let cols = node.cols();
                let y = &node.value;
                if let Some(da) = buf!(a) {
                    for ((d, gr), yr) in da
                        .chunks_exact_mut(cols)
                        .zip(g.chunks_exact(cols))
                        .zip(y.chunks_exact(cols))
                    {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((dd, &gg), &yy) in d.iter_mut().zip(gr).zip(yr) {
                            *dd += yy * (gg - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let cols = node.cols();
                let y = &node.value;
                if let Some(da) = buf!(a) {
                    for ((d, gr), yr) in da
                        .chunks_exact_mut(cols)
                        .zip(g.chunks_exact(cols))
                        .zip(y.chunks_exact(cols))
                    {
                        let total: f64 = gr.iter().sum();
                        for ((dd, &gg), &yy) in d.iter_mut().zip(gr).zip(yr) {
                            *dd += gg - yy.exp() * total;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = (node.rows(), node.cols());
                let mut off = 0;
                for p in parts {
                    let c = nodes[p.0].cols();
                    if let Some(dp) = buf!(p) {
                        for r in 0..rows {
                            let src = &g[r * total + off..r * total + off + c];
                            for (d, &s) in dp[r * c..(r + 1) * c].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    if let Some(dp) = buf!(p) {
                        for (d, &s) in dp.iter_mut().zip(&g[off..off + len]) {
                            *d += s;
                        }
                    }
                    off += len;
                }
            }
            Op::SliceRows(a, start) => {
                let cols = node.cols();
                if let Some(da) = buf!(a) {
                    for (d, &s) in da[start * cols..start * cols + g.len()].iter_mut().zip(g) {
                        *d += s;
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, len) = (node.rows(), node.cols());
                let cols = nodes[a.0].cols();
                if let Some(da) = buf!(a) {
                    for r in 0..rows {
                        let dst = &mut da[r * cols + start..r * cols + start + len];
                        for (d, &s) in dst.iter_mut().zip(&g[r * len..(r + 1) * len]) {
                            *d += s;
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if let Some(da) = buf!(a) {
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::MeanAll(a) => {
                let n = nodes[a.0].value.len() as f64;
                if let Some(da) = buf!(a) {
                    da.iter_mut().for_each(|d| *d += g[0] / n);
                }
            }
            Op::SumCols(a) => {
                let cols = nodes[a.0].cols();
                if let Some(da) = buf!(a) {
                    for (r, row) in da.chunks_exact_mut(cols).enumerate() {
                        row.iter_mut().for_each(|d| *d += g[r]);
                    }
                }
            }
            Op::SegmentSum { x, segments, weights } => {
                let cols = node.cols();
                if let Some(dx) = buf!(x) {
                    for (r, (&s, &w)) in segments.iter().zip(weights).enumerate() {
                        let src = &g[s * cols..(s + 1) * cols];
                        for (d, &v) in dx[r * cols..(r + 1) * cols].iter_mut().zip(src) {
                            *d += w * v;
                        }
                    }
                }
            }
            Op::SegmentMax { x, argmax } => {
                let cols = node.cols();
                if let Some(dx) = buf!(x) {
                    for (k, &r) in argmax.iter().enumerate() {
                        dx[r * cols + k % cols] += g[k];
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let dim = node.cols();
                if let Some(dt) = buf!(table) {
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &g[r * dim..(r + 1) * dim];
                        for (d, &s) in dt[id * dim..(id + 1) * dim].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Pick { x, idx } => {
                let cols = nodes[x.0].cols();
                if let Some(dx) = buf!(x) {
                    for (r, &j) in idx.iter().enumerate() {
                        dx[r * cols + j] += g[r];
                    }
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let cols = nodes[logits.0].cols();
                if let Some(dl) = buf!(logits) {
                    for (r, &t) in targets.iter().enumerate() {
                        let row = &mut dl[r * cols..(r + 1) * cols];
                        for (d, &p) in row.iter_mut().zip(&probs[r * cols..(r + 1) * cols]) {
                            *d += g[r] * p;
                        }
                        row[t] -= g[r];
                    }
                }
            }
            Op::Unfold { x, batch, seq, width } => {
                let d = nodes[x.0].cols();
                let nw = seq - width + 1;
                let span = width * d;
                if let Some(dx) = buf!(x) {
                    for b in 0..*batch {
                        for t in 0..nw {
                            let src = &g[(b * nw + t) * span..(b * nw + t + 1) * span];
                            let start = (b * seq + t) * d;
                            for (dd, &s) in dx[start..start + span].iter_mut().zip(src) {
                                *dd += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Reduce an output gradient onto a broadcast right operand.
fn reduce_bcast(db: &mut [f64], g: &[f64], bc: Bcast, cols: usize, sign: f64, other: impl Fn(usize) -> f64) {
    for (idx, &gv) in g.iter().enumerate() {
        let v = sign * gv * other(idx);
        match bc {
            Bcast::Same => db[idx] += v,
            Bcast::Row => db[idx % cols] += v,
            Bcast::Col => db[idx / cols] += v,
            Bcast::Scalar => db[0] += v,
        }
    }
}
