use std::rc::Rc;

use super::{AutodiffError, Gradients, ParamId, ParamStore, Tensor};

type Res<T> = Result<T, AutodiffError>;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
struct Attention {
    q: Var,
    k: Var,
    v: Var,
    delta: Var,
    nbr: Rc<[usize]>,
    kk: usize,
    scale: f64,
    weights: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Linear(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Minimum(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Abs(Var),
    Ln(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    SumRows(Var),
    SumCols(Var),
    SumAll(Var),
    MeanAll(Var),
    SumGroups(Var, usize),
    GatherRows(Var, Rc<[usize]>),
    ConcatCols(Vec<Var>),
    L2NormRows(Var),
    NormalizeRows(Var),
    Reshape(Var),
    LocalAttention(Box<Attention>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Define-by-run tape. Nodes are appended in evaluation order, so the node
/// list is always topologically sorted.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    adjoints: Vec<Option<Tensor>>,
}

const NORMALIZE_EPS: f64 = 1e-12;

fn mismatch(op: &str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch(format!("{op}: {:?} vs {:?}", a.shape(), b.shape()))
}

/// `c = op(a)·op(b) + beta·c` where `op(a)` is `m×k` and `op(b)` is `k×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked by the callers against m, k, n and the
    // strides above address exactly those row-major layouts.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|&x| f(x)).collect();
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// Adjoint cached by the last backward pass, if the node was reached.
    pub fn adjoint(&self, v: Var) -> Option<&Tensor> {
        self.adjoints.get(v.0).and_then(|a| a.as_ref())
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Res<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite(name));
        }
        let shape = value.shape().to_vec();
        let value = if shape.len() == 2 { value } else { value.with_shape(vec![1, shape.iter().product()]) };
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, t: Tensor) -> Res<Var> {
        let (r, c) = (t.rows(), t.cols());
        self.push(t.with_shape(vec![r, c]), Op::Leaf, "constant")
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Res<Var> {
        let t = store.value(id).clone();
        let (r, c) = (t.rows(), t.cols());
        self.push(t.with_shape(vec![r, c]), Op::Param(id.index()), "param")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Res<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = Tensor::zeros(m, n);
        gemm(m, k, n, ta.data(), false, tb.data(), false, out.data_mut(), 0.0);
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    /// `x·w + b` with `b` a single row.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Res<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if tx.cols() != tw.rows() {
            return Err(mismatch("linear", tx, tw));
        }
        if tb.rows() != 1 || tb.cols() != tw.cols() {
            return Err(mismatch("linear bias", tw, tb));
        }
        let (m, k, n) = (tx.rows(), tx.cols(), tw.cols());
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m {
            data.extend_from_slice(tb.data());
        }
        let mut out = Tensor::matrix(m, n, data)?;
        gemm(m, k, n, tx.data(), false, tw.data(), false, out.data_mut(), 1.0);
        self.push(out, Op::Linear(x, w, b), "linear")
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Res<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let out = zip(ta, tb, f);
        self.push(out, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Res<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Res<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Res<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Res<Var> {
        self.binary(a, b, "minimum", |x, y| if y < x { y } else { x }, Op::Minimum(a, b))
    }

    /// Adds a `[1, C]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Res<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(mismatch("add_row", ta, tr));
        }
        let c = ta.cols();
        let data = ta.data().iter().enumerate().map(|(i, &x)| x + tr.data()[i % c]).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, Op::AddRow(a, row), "add_row")
    }

    /// Scales each row of `a` by the matching entry of the `[R, 1]` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Res<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        if tc.cols() != 1 || tc.rows() != ta.rows() {
            return Err(mismatch("mul_col", ta, tc));
        }
        let c = ta.cols();
        let data = ta.data().iter().enumerate().map(|(i, &x)| x * tc.data()[i / c]).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, Op::MulCol(a, col), "mul_col")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Res<Var> {
        let out = map(self.value(a), |x| x * s);
        self.push(out, Op::Scale(a, s), "scale")
    }

    pub fn offset(&mut self, a: Var, s: f64) -> Res<Var> {
        let out = map(self.value(a), |x| x + s);
        self.push(out, Op::Offset(a), "offset")
    }

    pub fn tanh(&mut self, a: Var) -> Res<Var> {
        let out = map(self.value(a), f64::tanh);
        self.push(out, Op::Tanh(a), "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Res<Var> {
        let out = map(self.value(a), |x| x.max(0.0));
        self.push(out, Op::Relu(a), "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Res<Var> {
        let out = map(self.value(a), sigmoid);
        self.push(out, Op::Sigmoid(a), "sigmoid")
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&mut self, a: Var) -> Res<Var> {
        let out = map(self.value(a), |x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        self.push(out, Op::Softplus(a), "softplus")
    }

    pub fn abs(&mut self, a: Var) -> Res<Var> {
        let out = map(self.value(a), f64::abs);
        self.push(out, Op::Abs(a), "abs")
    }

    pub fn ln(&mut self, a: Var) -> Res<Var> {
        let out = map(self.value(a), f64::ln);
        self.push(out, Op::Ln(a), "ln")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Res<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, Op::SoftmaxRows(a), "softmax_rows")
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Res<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, Op::LogSoftmaxRows(a), "log_softmax_rows")
    }

    /// Row sums, `[R, C] -> [R, 1]`.
    pub fn sum_rows(&mut self, a: Var) -> Res<Var> {
        let ta = self.value(a);
        let c = ta.cols().max(1);
        let data: Vec<f64> = ta.data().chunks(c).map(|r| r.iter().sum()).collect();
        let out = Tensor::matrix(ta.rows(), 1, data)?;
        self.push(out, Op::SumRows(a), "sum_rows")
    }

    /// Column sums, `[R, C] -> [1, C]`.
    pub fn sum_cols(&mut self, a: Var) -> Res<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        let mut data = vec![0.0; c];
        for row in ta.data().chunks(c.max(1)) {
            for (d, x) in data.iter_mut().zip(row) {
                *d += x;
            }
        }
        let out = Tensor::matrix(1, c, data)?;
        self.push(out, Op::SumCols(a), "sum_cols")
    }

    pub fn sum_all(&mut self, a: Var) -> Res<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a), "sum_all")
    }

    pub fn mean_all(&mut self, a: Var) -> Res<Var> {
        let ta = self.value(a);
        if ta.is_empty() {
            return Err(AutodiffError::ShapeMismatch("mean of empty tensor".into()));
        }
        let s = ta.data().iter().sum::<f64>() / ta.len() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(a), "mean_all")
    }

    /// Sums consecutive blocks of `group` rows, `[G·g, C] -> [G, C]`.
    pub fn sum_groups(&mut self, a: Var, group: usize) -> Res<Var> {
        let ta = self.value(a);
        if group == 0 || ta.rows() % group != 0 {
            return Err(AutodiffError::ShapeMismatch(format!("sum_groups: {} rows by {group}", ta.rows())));
        }
        let c = ta.cols();
        let g = ta.rows() / group;
        let mut data = vec![0.0; g * c];
        for (r, row) in ta.data().chunks(c.max(1)).enumerate() {
            let dst = &mut data[(r / group) * c..(r / group + 1) * c];
            for (d, x) in dst.iter_mut().zip(row) {
                *d += x;
            }
        }
        let out = Tensor::matrix(g, c, data)?;
        self.push(out, Op::SumGroups(a, group), "sum_groups")
    }

    /// Selects rows by index; repeated indices accumulate on the way back.
    pub fn gather_rows(&mut self, a: Var, idx: Rc<[usize]>) -> Res<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            if i >= ta.rows() {
                return Err(AutodiffError::ShapeMismatch(format!("gather_rows: index {i} of {} rows", ta.rows())));
            }
            data.extend_from_slice(ta.row(i));
        }
        let out = Tensor::matrix(idx.len(), c, data)?;
        self.push(out, Op::GatherRows(a, idx), "gather_rows")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Res<Var> {
        let Some(&first) = parts.first() else {
            return Err(AutodiffError::ShapeMismatch("concat of nothing".into()));
        };
        let r = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != r {
                return Err(mismatch("concat_cols", self.value(first), t));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::matrix(r, total, data)?;
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    /// Euclidean norm of each row, `[R, C] -> [R, 1]`.
    pub fn l2norm_rows(&mut self, a: Var) -> Res<Var> {
        let ta = self.value(a);
        let c = ta.cols().max(1);
        let data: Vec<f64> = ta.data().chunks(c).map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let out = Tensor::matrix(ta.rows(), 1, data)?;
        self.push(out, Op::L2NormRows(a), "l2norm_rows")
    }

    /// Each row divided by its norm; rows shorter than 1e-12 are divided by 1e-12.
    pub fn normalize_rows(&mut self, a: Var) -> Res<Var> {
        let ta = self.value(a);
        let c = ta.cols().max(1);
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(c) {
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORMALIZE_EPS);
            for x in row.iter_mut() {
                *x /= n;
            }
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, Op::NormalizeRows(a), "normalize_rows")
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Res<Var> {
        let ta = self.value(a);
        if rows * cols != ta.len() {
            return Err(AutodiffError::ShapeMismatch(format!("reshape {:?} to [{rows}, {cols}]", ta.shape())));
        }
        let out = ta.clone().with_shape(vec![rows, cols]);
        self.push(out, Op::Reshape(a), "reshape")
    }

    /// Vector attention over fixed neighbourhoods.
    ///
    /// Row `i` of `q` attends to the `kk` rows of `k`/`v` listed at
    /// `nbr[i·kk..(i+1)·kk]`, with a per-pair positional term `delta` (one
    /// row per pair) added to both keys and values:
    /// `out_i = Σ_j softmax_j(scale·⟨q_i, k_j + δ_ij⟩)·(v_j + δ_ij)`.
    pub fn local_attention(&mut self, q: Var, k: Var, v: Var, delta: Var, nbr: Rc<[usize]>, kk: usize, scale: f64) -> Res<Var> {
        let (tq, tk, tv, td) = (self.value(q), self.value(k), self.value(v), self.value(delta));
        let (n, d) = (tq.rows(), tq.cols());
        if tk.shape() != tv.shape() || tk.cols() != d || td.cols() != d || td.rows() != n * kk || nbr.len() != n * kk || kk == 0 {
            return Err(AutodiffError::ShapeMismatch(format!(
                "local_attention: q {:?} k {:?} v {:?} delta {:?} nbr {} kk {kk}",
                tq.shape(),
                tk.shape(),
                tv.shape(),
                td.shape(),
                nbr.len()
            )));
        }
        if let Some(&bad) = nbr.iter().find(|&&j| j >= tk.rows()) {
            return Err(AutodiffError::ShapeMismatch(format!("local_attention: neighbour {bad} of {}", tk.rows())));
        }
        let (qd, kd, vd, dd) = (tq.data(), tk.data(), tv.data(), td.data());
        let mut weights = vec![0.0; n * kk];
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let qi = &qd[i * d..(i + 1) * d];
            let w = &mut weights[i * kk..(i + 1) * kk];
            for (jj, wj) in w.iter_mut().enumerate() {
                let r = i * kk + jj;
                let kj = &kd[nbr[r] * d..(nbr[r] + 1) * d];
                let dj = &dd[r * d..(r + 1) * d];
                *wj = scale * (0..d).map(|c| qi[c] * (kj[c] + dj[c])).sum::<f64>();
            }
            let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for wj in w.iter_mut() {
                *wj = (*wj - m).exp();
                s += *wj;
            }
            let o = &mut out[i * d..(i + 1) * d];
            for (jj, wj) in w.iter_mut().enumerate() {
                *wj /= s;
                let r = i * kk + jj;
                let vj = &vd[nbr[r] * d..(nbr[r] + 1) * d];
                let dj = &dd[r * d..(r + 1) * d];
                for c in 0..d {
                    o[c] += *wj * (vj[c] + dj[c]);
                }
            }
        }
        let out = Tensor::matrix(n, d, out)?;
        let att = Attention { q, k, v, delta, nbr, kk, scale, weights };
        self.push(out, Op::LocalAttention(Box::new(att)), "local_attention")
    }

    /// Backward pass from a scalar root; adjoints are cached on the graph.
    pub fn backward(&mut self, root: Var) -> Res<()> {
        let rt = self.value(root);
        if rt.len() != 1 {
            return Err(AutodiffError::NonScalarRoot(rt.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(Tensor::scalar(1.0).with_shape(rt.shape().to_vec()));
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }
        self.adjoints = adj;
        Ok(())
    }

    /// Runs [`Graph::backward`] and collects parameter adjoints in store order.
    /// Parameters that never entered the graph get zero gradients.
    pub fn gradients(&mut self, root: Var, store: &ParamStore) -> Res<Gradients> {
        self.backward(root)?;
        let mut grads = store.zero_grads();
        for (node, a) in self.nodes.iter().zip(&self.adjoints) {
            if let (Op::Param(p), Some(a)) = (&node.op, a) {
                let dst = &mut grads.0[*p];
                if dst.len() != a.len() {
                    return Err(mismatch("param gradient", dst, a));
                }
                for (d, x) in dst.data_mut().iter_mut().zip(a.data()) {
                    *d += x;
                }
            }
        }
        Ok(grads)
    }

    fn propagate(&self, i: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor| match &mut adj[v.0] {
            Some(a) => a.add_assign(&t),
            slot @ None => *slot = Some(t.with_shape(self.nodes[v.0].value.shape().to_vec())),
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let mut da = Tensor::zeros(m, k);
                gemm(m, n, k, g.data(), false, tb.data(), true, da.data_mut(), 0.0);
                let mut db = Tensor::zeros(k, n);
                gemm(k, m, n, ta.data(), true, g.data(), false, db.data_mut(), 0.0);
                acc(*a, da);
                acc(*b, db);
            }
            Op::Linear(x, w, b) => {
                let (tx, tw) = (val(*x), val(*w));
                let (m, k, n) = (tx.rows(), tx.cols(), tw.cols());
                let mut dx = Tensor::zeros(m, k);
                gemm(m, n, k, g.data(), false, tw.data(), true, dx.data_mut(), 0.0);
                let mut dw = Tensor::zeros(k, n);
                gemm(k, m, n, tx.data(), true, g.data(), false, dw.data_mut(), 0.0);
                let mut db = Tensor::zeros(1, n);
                for row in g.data().chunks(n.max(1)) {
                    for (d, x) in db.data_mut().iter_mut().zip(row) {
                        *d += x;
                    }
                }
                acc(*x, dx);
                acc(*w, dw);
                acc(*b, db);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, map(g, |x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                acc(*a, zip(g, tb, |g, y| g * y));
                acc(*b, zip(g, ta, |g, x| g * x));
            }
            Op::Minimum(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let take_b: Vec<bool> = ta.data().iter().zip(tb.data()).map(|(x, y)| y < x).collect();
                let mut da = g.clone();
                let mut db = g.clone();
                for (idx, &tbk) in take_b.iter().enumerate() {
                    if tbk {
                        da.data_mut()[idx] = 0.0;
                    } else {
                        db.data_mut()[idx] = 0.0;
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::AddRow(a, row) => {
                let c = g.cols();
                let mut dr = Tensor::zeros(1, c);
                for r in g.data().chunks(c.max(1)) {
                    for (d, x) in dr.data_mut().iter_mut().zip(r) {
                        *d += x;
                    }
                }
                acc(*a, g.clone());
                acc(*row, dr);
            }
            Op::MulCol(a, col) => {
                let (ta, tc) = (val(*a), val(*col));
                let c = ta.cols();
                let da = Tensor::new(ta.shape().to_vec(), g.data().iter().enumerate().map(|(k, &x)| x * tc.data()[k / c]).collect()).unwrap();
                let dc: Vec<f64> = g
                    .data()
                    .chunks(c.max(1))
                    .zip(ta.data().chunks(c.max(1)))
                    .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                    .collect();
                acc(*a, da);
                acc(*col, Tensor::matrix(ta.rows(), 1, dc).unwrap());
            }
            Op::Scale(a, s) => acc(*a, map(g, |x| x * s)),
            Op::Offset(a) => acc(*a, g.clone()),
            Op::Tanh(a) => acc(*a, zip(g, y, |g, t| g * (1.0 - t * t))),
            Op::Relu(a) => acc(*a, zip(g, val(*a), |g, x| if x > 0.0 { g } else { 0.0 })),
            Op::Sigmoid(a) => acc(*a, zip(g, y, |g, s| g * s * (1.0 - s))),
            Op::Softplus(a) => acc(*a, zip(g, val(*a), |g, x| g * sigmoid(x))),
            Op::Abs(a) => acc(*a, zip(g, val(*a), |g, x| g * if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })),
            Op::Ln(a) => acc(*a, zip(g, val(*a), |g, x| g / x)),
            Op::SoftmaxRows(a) => {
                let c = y.cols().max(1);
                let mut d = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    d.extend(yr.iter().zip(gr).map(|(yv, gv)| yv * (gv - dot)));
                }
                acc(*a, Tensor::new(y.shape().to_vec(), d).unwrap());
            }
            Op::LogSoftmaxRows(a) => {
                let c = y.cols().max(1);
                let mut d = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                    let s: f64 = gr.iter().sum();
                    d.extend(yr.iter().zip(gr).map(|(yv, gv)| gv - yv.exp() * s));
                }
                acc(*a, Tensor::new(y.shape().to_vec(), d).unwrap());
            }
            Op::SumRows(a) => {
                let ta = val(*a);
                let c = ta.cols();
                let d = (0..ta.len()).map(|k| g.data()[k / c.max(1)]).collect();
                acc(*a, Tensor::new(ta.shape().to_vec(), d).unwrap());
            }
            Op::SumCols(a) => {
                let ta = val(*a);
                let c = ta.cols();
                let d = (0..ta.len()).map(|k| g.data()[k % c.max(1)]).collect();
                acc(*a, Tensor::new(ta.shape().to_vec(), d).unwrap());
            }
            Op::SumAll(a) => {
                let ta = val(*a);
                acc(*a, Tensor::new(ta.shape().to_vec(), vec![g.item(); ta.len()]).unwrap());
            }
            Op::MeanAll(a) => {
                let ta = val(*a);
                let s = g.item() / ta.len() as f64;
                acc(*a, Tensor::new(ta.shape().to_vec(), vec![s; ta.len()]).unwrap());
            }
            Op::SumGroups(a, group) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = Vec::with_capacity(ta.len());
                for r in 0..ta.rows() {
                    d.extend_from_slice(g.row(r / group));
                }
                let _ = c;
                acc(*a, Tensor::new(ta.shape().to_vec(), d).unwrap());
            }
            Op::GatherRows(a, idx) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = Tensor::zeros(ta.rows(), c);
                let dd = d.data_mut();
                for (r, &src) in idx.iter().enumerate() {
                    for (x, gv) in dd[src * c..(src + 1) * c].iter_mut().zip(g.row(r)) {
                        *x += gv;
                    }
                }
                acc(*a, d);
            }
            Op::ConcatCols(parts) => {
                let r = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let c = val(p).cols();
                    let mut d = Vec::with_capacity(r * c);
                    for i in 0..r {
                        d.extend_from_slice(&g.row(i)[offset..offset + c]);
                    }
                    offset += c;
                    acc(p, Tensor::matrix(r, c, d).unwrap());
                }
            }
            Op::L2NormRows(a) => {
                let ta = val(*a);
                let c = ta.cols().max(1);
                let mut d = Vec::with_capacity(ta.len());
                for (r, xr) in ta.data().chunks(c).enumerate() {
                    let n = y.data()[r];
                    let s = if n > 0.0 { g.data()[r] / n } else { 0.0 };
                    d.extend(xr.iter().map(|x| x * s));
                }
                acc(*a, Tensor::new(ta.shape().to_vec(), d).unwrap());
            }
            Op::NormalizeRows(a) => {
                let ta = val(*a);
                let c = ta.cols().max(1);
                let mut d = Vec::with_capacity(ta.len());
                for ((xr, yr), gr) in ta.data().chunks(c).zip(y.data().chunks(c)).zip(g.data().chunks(c)) {
                    let n = xr.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n > NORMALIZE_EPS {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        d.extend(yr.iter().zip(gr).map(|(yv, gv)| (gv - yv * dot) / n));
                    } else {
                        d.extend(gr.iter().map(|gv| gv / NORMALIZE_EPS));
                    }
                }
                acc(*a, Tensor::new(ta.shape().to_vec(), d).unwrap());
            }
            Op::Reshape(a) => {
                let ta = val(*a);
                acc(*a, g.clone().with_shape(ta.shape().to_vec()));
            }
            Op::LocalAttention(att) => {
                let (tq, tk, tv, td) = (val(att.q), val(att.k), val(att.v), val(att.delta));
                let (n, d, kk) = (tq.rows(), tq.cols(), att.kk);
                let (qd, kd, vd, ddl) = (tq.data(), tk.data(), tv.data(), td.data());
                let mut dq = Tensor::zeros(n, d);
                let mut dk = Tensor::zeros(tk.rows(), d);
                let mut dv = Tensor::zeros(tv.rows(), d);
                let mut ddelta = Tensor::zeros(n * kk, d);
                let mut u = vec![0.0; kk];
                for i in 0..n {
                    let gi = g.row(i);
                    let qi = &qd[i * d..(i + 1) * d];
                    let w = &att.weights[i * kk..(i + 1) * kk];
                    for (jj, uj) in u.iter_mut().enumerate() {
                        let r = i * kk + jj;
                        let vj = &vd[att.nbr[r] * d..(att.nbr[r] + 1) * d];
                        let dj = &ddl[r * d..(r + 1) * d];
                        *uj = (0..d).map(|c| gi[c] * (vj[c] + dj[c])).sum();
                    }
                    let ubar: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
                    for jj in 0..kk {
                        let r = i * kk + jj;
                        let src = att.nbr[r];
                        let dl = w[jj] * (u[jj] - ubar) * att.scale;
                        let kj = &kd[src * d..(src + 1) * d];
                        let dj = &ddl[r * d..(r + 1) * d];
                        let dqi = &mut dq.data_mut()[i * d..(i + 1) * d];
                        for c in 0..d {
                            dqi[c] += dl * (kj[c] + dj[c]);
                        }
                        let dkj = &mut dk.data_mut()[src * d..(src + 1) * d];
                        for c in 0..d {
                            dkj[c] += dl * qi[c];
                        }
                        let dvj = &mut dv.data_mut()[src * d..(src + 1) * d];
                        for c in 0..d {
                            dvj[c] += w[jj] * gi[c];
                        }
                        let ddr = &mut ddelta.data_mut()[r * d..(r + 1) * d];
                        for c in 0..d {
                            ddr[c] += w[jj] * gi[c] + dl * qi[c];
                        }
                    }
                }
                acc(att.q, dq);
                acc(att.k, dk);
                acc(att.v, dv);
                acc(att.delta, ddelta);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
    }

    /// Checks analytic gradients of `f` against central differences for each
    /// parameter entry.
    fn check_grad(store: &ParamStore, f: &dyn Fn(&mut Graph, &ParamStore) -> Res<Var>) {
        let mut g = Graph::new();
        let root = f(&mut g, store).unwrap();
        let grads = g.gradients(root, store).unwrap();
        let h = 1e-5;
        for p in 0..store.len() {
            let id = store.ids()[p];
            for e in 0..store.value(id).len() {
                let mut plus = store.clone();
                plus.value_mut(id).data_mut()[e] += h;
                let mut minus = store.clone();
                minus.value_mut(id).data_mut()[e] -= h;
                let mut gp = Graph::new();
                let rp = f(&mut gp, &plus).unwrap();
                let fp = gp.value(rp).item();
                let mut gm = Graph::new();
                let rm = f(&mut gm, &minus).unwrap();
                let fm = gm.value(rm).item();
                let fd = (fp - fm) / (2.0 * h);
                let an = grads.0[p].data()[e];
                let tol = 1e-4 * fd.abs().max(an.abs()) + 1e-7;
                assert!((fd - an).abs() <= tol, "param {} entry {e}: fd {fd} analytic {an}", store.name(id));
            }
        }
    }

    #[test]
    fn tanh_of_zero() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(0.0)).unwrap();
        let y = g.tanh(x).unwrap();
        assert_eq!(g.value(y).item(), 0.0);
    }

    #[test]
    fn softmax_of_constant_row_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(1, 4, vec![3.0; 4]).unwrap()).unwrap();
        let y = g.softmax_rows(x).unwrap();
        assert!(g.value(y).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_tensor(&mut rng, 2, 3);
        let b = rand_tensor(&mut rng, 3, 2);
        let mut g = Graph::new();
        let (va, vb) = (g.constant(a.clone()).unwrap(), g.constant(b.clone()).unwrap());
        let c = g.matmul(va, vb).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a.get(i, k) * b.get(k, j);
                }
                assert!((g.value(c).get(i, j) - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn square_sum_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let v = g.param(&store, w).unwrap();
        let sq = g.mul(v, v).unwrap();
        let root = g.sum_all(sq).unwrap();
        let grads = g.gradients(root, &store).unwrap();
        assert_eq!(grads.0[0].data(), &[2.0, 4.0]);
    }

    #[test]
    fn disconnected_parameter_has_zero_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
        store.add("unused", Tensor::matrix(2, 2, vec![5.0; 4]).unwrap()).unwrap();
        let mut g = Graph::new();
        let v = g.param(&store, w).unwrap();
        let root = g.sum_all(v).unwrap();
        let grads = g.gradients(root, &store).unwrap();
        assert_eq!(grads.0[1].data(), &[0.0; 4]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(2, 2)).unwrap();
        assert!(matches!(g.backward(x), Err(AutodiffError::NonScalarRoot(_))));
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(0.0)).unwrap();
        assert!(matches!(g.ln(x), Err(AutodiffError::NonFinite("ln"))));
        assert!(matches!(g.constant(Tensor::scalar(f64::NAN)), Err(AutodiffError::NonFinite(_))));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3)).unwrap();
        let b = g.constant(Tensor::zeros(2, 3)).unwrap();
        assert!(matches!(g.matmul(a, b), Err(AutodiffError::ShapeMismatch(_))));
        let c = g.constant(Tensor::zeros(3, 2)).unwrap();
        assert!(matches!(g.add(a, c), Err(AutodiffError::ShapeMismatch(_))));
    }

    #[test]
    fn three_layer_perceptron_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let dims = [4, 6, 5, 2];
        let mut layers = Vec::new();
        for l in 0..3 {
            let w = store.add(&format!("w{l}"), rand_tensor(&mut rng, dims[l], dims[l + 1])).unwrap();
            let b = store.add(&format!("b{l}"), rand_tensor(&mut rng, 1, dims[l + 1])).unwrap();
            layers.push((w, b));
        }
        let x = rand_tensor(&mut rng, 7, 4);
        check_grad(&store, &|g, s| {
            let mut h = g.constant(x.clone())?;
            for (l, &(w, b)) in layers.iter().enumerate() {
                let (vw, vb) = (g.param(s, w)?, g.param(s, b)?);
                h = g.linear(h, vw, vb)?;
                if l < 2 {
                    h = g.tanh(h)?;
                }
            }
            let sq = g.mul(h, h)?;
            g.mean_all(sq)
        });
    }

    #[test]
    fn backward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::new();
        let w = store.add("w", rand_tensor(&mut rng, 3, 3)).unwrap();
        let x = rand_tensor(&mut rng, 4, 3);
        let run = || {
            let mut g = Graph::new();
            let vx = g.constant(x.clone()).unwrap();
            let vw = g.param(&store, w).unwrap();
            let y = g.matmul(vx, vw).unwrap();
            let y = g.softmax_rows(y).unwrap();
            let r = g.sum_all(y).unwrap();
            let r = g.mul(r, r).unwrap();
            g.gradients(r, &store).unwrap()
        };
        assert_eq!(run().0, run().0);
    }

    /// Random composite expressions exercising every differentiable op.
    #[test]
    fn every_op_matches_finite_differences() {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let r = rng.random_range(2..5usize);
            let c = rng.random_range(2..5usize);
            let mut store = ParamStore::new();
            let a = store.add("a", rand_tensor(&mut rng, r, c)).unwrap();
            let b = store.add("b", rand_tensor(&mut rng, r, c)).unwrap();
            let w = store.add("w", rand_tensor(&mut rng, c, c)).unwrap();
            let row = store.add("row", rand_tensor(&mut rng, 1, c)).unwrap();
            let col = store.add("col", rand_tensor(&mut rng, r, 1)).unwrap();
            let pos = store.add("pos", map(&rand_tensor(&mut rng, r, c), |x| x.abs() + 0.5)).unwrap();
            let idx: Rc<[usize]> = (0..r + 2).map(|_| rng.random_range(0..r)).collect();
            let variant = seed % 5;
            check_grad(&store, &|g, s| {
                let va = g.param(s, a)?;
                let vb = g.param(s, b)?;
                let vw = g.param(s, w)?;
                let vrow = g.param(s, row)?;
                let vcol = g.param(s, col)?;
                let vpos = g.param(s, pos)?;
                let t = match variant {
                    0 => {
                        let m = g.matmul(va, vw)?;
                        let t = g.tanh(m)?;
                        let u = g.sub(t, vb)?;
                        let u = g.mul(u, vb)?;
                        let s = g.softmax_rows(u)?;
                        g.mul_col(s, vcol)?
                    }
                    1 => {
                        let l = g.linear(va, vw, vrow)?;
                        let s = g.sigmoid(l)?;
                        let ls = g.log_softmax_rows(vb)?;
                        let m = g.add(s, ls)?;
                        let ab = g.abs(m)?;
                        g.scale(ab, 0.7)?
                    }
                    2 => {
                        let gth = g.gather_rows(va, idx.clone())?;
                        let n = g.normalize_rows(gth)?;
                        let nr = g.l2norm_rows(gth)?;
                        let cat = g.concat_cols(&[n, nr])?;
                        let sq = g.mul(cat, cat)?;
                        g.sum_cols(sq)?
                    }
                    3 => {
                        let l = g.ln(vpos)?;
                        let sp = g.softplus(va)?;
                        let mn = g.minimum(l, sp)?;
                        let sr = g.add_row(mn, vrow)?;
                        let sr = g.relu(sr)?;
                        let o = g.offset(sr, 0.3)?;
                        let o = g.mul(o, vb)?;
                        g.sum_rows(o)?
                    }
                    _ => {
                        let cat = g.concat_cols(&[va, vb])?;
                        let rs = g.reshape(cat, 2 * r, c)?;
                        let sg = g.sum_groups(rs, 2)?;
                        let t = g.tanh(sg)?;
                        g.mul(t, vb)?
                    }
                };
                let sq = g.mul(t, t)?;
                g.mean_all(sq)
            });
        }
    }

    #[test]
    fn local_attention_matches_finite_differences() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let (n, m, d, kk) = (3, 4, 3, 2);
            let mut store = ParamStore::new();
            let q = store.add("q", rand_tensor(&mut rng, n, d)).unwrap();
            let k = store.add("k", rand_tensor(&mut rng, m, d)).unwrap();
            let v = store.add("v", rand_tensor(&mut rng, m, d)).unwrap();
            let de = store.add("delta", rand_tensor(&mut rng, n * kk, d)).unwrap();
            let nbr: Rc<[usize]> = (0..n * kk).map(|_| rng.random_range(0..m)).collect();
            let target = rand_tensor(&mut rng, n, d);
            check_grad(&store, &|g, s| {
                let (vq, vk, vv, vd) = (g.param(s, q)?, g.param(s, k)?, g.param(s, v)?, g.param(s, de)?);
                let o = g.local_attention(vq, vk, vv, vd, nbr.clone(), kk, 0.8)?;
                let t = g.constant(target.clone())?;
                let o = g.mul(o, t)?;
                let o = g.tanh(o)?;
                g.sum_all(o)
            });
        }
    }

    #[test]
    fn local_attention_uniform_on_zero_queries() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::zeros(1, 2)).unwrap();
        let kv = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let d = g.constant(Tensor::zeros(2, 2)).unwrap();
        let o = g.local_attention(q, kv, kv, d, Rc::from(vec![0, 1]), 2, 1.0).unwrap();
        assert_eq!(g.value(o).data(), &[0.5, 0.5]);
    }
}
