//! Reverse-mode differentiation over a recorded list of matrix operations.
//!
//! A [`Tape`] owns every intermediate value. Operations append a node and
//! return a [`Var`] handle; [`Tape::backward`] walks the nodes in reverse
//! and accumulates parameter gradients into a [`ParamStore`].

use std::sync::Arc;

use super::gemm::gemm;
use super::tensor::{leaky_relu, log_sigmoid, sigmoid};
use super::{Csr, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    /// `leaky(x * w^T)`, only recorded for slopes `>= 0` so the output sign
    /// identifies the active branch.
    LinearLeaky(Var, Var, f64),
    /// `[a | b] * w^T` without materializing the concatenation.
    LinearCat(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    ConcatCols(Var, Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    LogSigmoid(Var, f64),
    Softmax(Var),
    SpMean(Arc<Csr>, Var),
    Gather(Var, Arc<[u32]>),
    RowDot {
        a: Var,
        ia: Arc<[u32]>,
        b: Var,
        ib: Arc<[u32]>,
    },
    SegmentSoftmax(Var, Arc<[usize]>),
    SegmentWeightedSum {
        w: Var,
        x: Var,
        ix: Arc<[u32]>,
        offsets: Arc<[usize]>,
    },
    MeanRows(Var),
    Sum(Var),
    Mean(Var),
    MaskMul(Var, Arc<Tensor>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::LinearLeaky(..) => "linear_leaky",
            Op::LinearCat(..) => "linear_cat",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddScalar(..) => "add_scalar",
            Op::Scale(..) => "scale",
            Op::ConcatCols(..) => "concat",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Log(..) => "log",
            Op::LogSigmoid(..) => "log_sigmoid",
            Op::Softmax(..) => "softmax",
            Op::SpMean(..) => "sparse_mean",
            Op::Gather(..) => "gather",
            Op::RowDot { .. } => "row_dot",
            Op::SegmentSoftmax(..) => "segment_softmax",
            Op::SegmentWeightedSum { .. } => "segment_weighted_sum",
            Op::MeanRows(..) => "mean_rows",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MaskMul(..) => "dropout",
        }
    }

    fn inputs(&self) -> [Option<Var>; 3] {
        match *self {
            Op::Leaf | Op::Param(_) => [None, None, None],
            Op::LinearCat(a, b, w) => [Some(a), Some(b), Some(w)],
            Op::MatMul(a, b)
            | Op::MatMulT(a, b)
            | Op::LinearLeaky(a, b, _)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ConcatCols(a, b) => [Some(a), Some(b), None],
            Op::RowDot { a, b, .. } => [Some(a), Some(b), None],
            Op::SegmentWeightedSum { w, x, .. } => [Some(w), Some(x), None],
            Op::AddScalar(a)
            | Op::Scale(a, _)
            | Op::LeakyRelu(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::LogSigmoid(a, _)
            | Op::Softmax(a)
            | Op::SpMean(_, a)
            | Op::Gather(a, _)
            | Op::SegmentSoftmax(a, _)
            | Op::MeanRows(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::MaskMul(a, _) => [Some(a), None, None],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    /// Whether any parameter feeds into this node.
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    nonfinite: Option<&'static str>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// First operation that produced a non-finite value, if any.
    pub fn first_nonfinite(&self) -> Option<&'static str> {
        self.nonfinite
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        if self.nonfinite.is_none() && !value.all_finite() {
            self.nonfinite = Some(op.name());
        }
        let needs_grad = matches!(op, Op::Param(_)) || op.inputs().iter().flatten().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Records a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records the current value of a parameter; gradients flow back to it.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// `a * b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.val(a).matmul(self.val(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a * b^T`; with `b` a `out x in` weight this applies `b` to every row
    /// of `a`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.val(a).matmul_t(self.val(b));
        self.push(out, Op::MatMulT(a, b))
    }

    /// `leaky(x * w^T)` in one node.
    pub fn linear_leaky(&mut self, x: Var, w: Var, slope: f64) -> Var {
        if slope < 0.0 {
            let lin = self.matmul_t(x, w);
            return self.leaky_relu(lin, slope);
        }
        let mut out = self.val(x).matmul_t(self.val(w));
        out.data_mut().iter_mut().for_each(|z| *z = leaky_relu(*z, slope));
        self.push(out, Op::LinearLeaky(x, w, slope))
    }

    /// `[a | b] * w^T`.
    pub fn linear_cat(&mut self, a: Var, b: Var, w: Var) -> Var {
        let (av, bv, wv) = (self.val(a), self.val(b), self.val(w));
        let (n, da, db) = (av.rows(), av.cols(), bv.cols());
        assert_eq!(bv.rows(), n, "linear_cat row mismatch");
        assert_eq!(wv.cols(), da + db, "linear_cat weight width mismatch");
        let (o, ldw) = (wv.rows(), wv.cols());
        let mut out = Tensor::zeros(n, o);
        gemm(
            n,
            da,
            o,
            av.data(),
            (da, 1),
            wv.data(),
            (1, ldw),
            0.0,
            out.data_mut(),
            (o, 1),
        );
        gemm(
            n,
            db,
            o,
            bv.data(),
            (db, 1),
            &wv.data()[da..],
            (1, ldw),
            1.0,
            out.data_mut(),
            (o, 1),
        );
        self.push(out, Op::LinearCat(a, b, w))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.val(a).zip_map(self.val(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.val(a).zip_map(self.val(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.val(a).zip_map(self.val(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.val(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.val(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    /// `[a | b]` along columns.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let out = self.val(a).concat_cols(self.val(b));
        self.push(out, Op::ConcatCols(a, b))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.val(a).map(|x| leaky_relu(x, slope));
        self.push(out, Op::LeakyRelu(a, slope))
    }

    /// `max(x, 0)`, the hinge `[x]_+`.
    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.val(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.val(a).map(f64::ln);
        self.push(out, Op::Log(a))
    }

    /// `ln(sigmoid(x))` with `x` clamped to `[-clamp, clamp]`; the gradient is
    /// zero outside the clamp window.
    pub fn log_sigmoid(&mut self, a: Var, clamp: f64) -> Var {
        let out = self.val(a).map(|x| log_sigmoid(x.clamp(-clamp, clamp)));
        self.push(out, Op::LogSigmoid(a, clamp))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let mut out = x.clone();
        for i in 0..out.rows() {
            softmax_in_place(out.row_mut(i));
        }
        self.push(out, Op::Softmax(a))
    }

    /// Row `i` of the result is the mean of the rows of `x` listed in
    /// `adj.row(i)`; an empty row yields zeros.
    pub fn sparse_mean(&mut self, adj: &Arc<Csr>, x: Var) -> Var {
        let xv = self.val(x);
        assert_eq!(adj.cols(), xv.rows(), "sparse_mean: adjacency columns != input rows");
        let d = xv.cols();
        let mut out = Tensor::zeros(adj.rows(), d);
        for i in 0..adj.rows() {
            let nbrs = adj.row(i);
            if nbrs.is_empty() {
                continue;
            }
            let row = out.row_mut(i);
            for &j in nbrs {
                for (o, v) in row.iter_mut().zip(xv.row(j as usize)) {
                    *o += v;
                }
            }
            let inv = 1.0 / nbrs.len() as f64;
            row.iter_mut().for_each(|o| *o *= inv);
        }
        self.push(out, Op::SpMean(Arc::clone(adj), x))
    }

    pub fn gather(&mut self, x: Var, idx: Arc<[u32]>) -> Var {
        let out = self.val(x).gather_rows(&idx);
        self.push(out, Op::Gather(x, idx))
    }

    /// `out[p] = a[ia[p]] . b[ib[p]]` as a `p x 1` column.
    pub fn row_dot(&mut self, a: Var, ia: Arc<[u32]>, b: Var, ib: Arc<[u32]>) -> Var {
        assert_eq!(ia.len(), ib.len());
        let (av, bv) = (self.val(a), self.val(b));
        assert_eq!(av.cols(), bv.cols(), "row_dot width mismatch");
        let data = ia
            .iter()
            .zip(ib.iter())
            .map(|(&i, &j)| dot(av.row(i as usize), bv.row(j as usize)))
            .collect();
        let out = Tensor::from_vec(ia.len(), 1, data);
        self.push(out, Op::RowDot { a, ia, b, ib })
    }

    /// Softmax of a `p x 1` column within each segment
    /// `offsets[s]..offsets[s + 1]`.
    pub fn segment_softmax(&mut self, x: Var, offsets: Arc<[usize]>) -> Var {
        let mut out = self.val(x).clone();
        assert_eq!(out.cols(), 1);
        for s in 0..offsets.len() - 1 {
            softmax_in_place(&mut out.data_mut()[offsets[s]..offsets[s + 1]]);
        }
        self.push(out, Op::SegmentSoftmax(x, offsets))
    }

    /// `out[s] = sum_{p in segment s} w[p] * x[ix[p]]`.
    pub fn segment_weighted_sum(&mut self, w: Var, x: Var, ix: Arc<[u32]>, offsets: Arc<[usize]>) -> Var {
        let (wv, xv) = (self.val(w), self.val(x));
        assert_eq!(wv.rows(), ix.len());
        let nseg = offsets.len() - 1;
        let mut out = Tensor::zeros(nseg, xv.cols());
        for s in 0..nseg {
            let row = out.row_mut(s);
            for p in offsets[s]..offsets[s + 1] {
                let wp = wv.data()[p];
                for (o, v) in row.iter_mut().zip(xv.row(ix[p] as usize)) {
                    *o += wp * v;
                }
            }
        }
        self.push(out, Op::SegmentWeightedSum { w, x, ix, offsets })
    }

    /// Column means, `1 x cols`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let out = self.val(a).mean_rows();
        self.push(out, Op::MeanRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.val(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.val(a);
        let out = Tensor::scalar(v.sum() / v.len().max(1) as f64);
        self.push(out, Op::Mean(a))
    }

    /// Elementwise product with a fixed mask (inverted dropout).
    pub fn mask_mul(&mut self, a: Var, mask: Arc<Tensor>) -> Var {
        let out = self.val(a).zip_map(&mask, |x, m| x * m);
        self.push(out, Op::MaskMul(a, mask))
    }

    /// Row-wise bilinear form `x_i^T W y` for `x: n x p`, `w: p x q`,
    /// `y: 1 x q`; returns `n x 1`.
    pub fn bilinear(&mut self, x: Var, w: Var, y: Var) -> Var {
        let wy = self.matmul_t(y, w);
        self.matmul_t(x, wy)
    }

    /// Back-propagates from the scalar `loss`, adding `d loss / d param` into
    /// the gradient accumulators of `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if let Some(op) = self.nonfinite {
            return Err(Error::Numeric { op });
        }
        if self.val(loss).shape() != [1, 1] {
            let [r, c] = self.val(loss).shape();
            return Err(Error::usage(format!("backward needs a scalar loss, got {r}x{c}")));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let needs = |v: Var| self.nodes[v.0].needs_grad;

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let out = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    if !g.all_finite() {
                        return Err(Error::Numeric { op: "backward" });
                    }
                    store.accumulate(*id, &g);
                }
                Op::MatMul(a, b) => {
                    if needs(*a) {
                        acc(&mut grads, *a, g.matmul_t(self.val(*b)));
                    }
                    if needs(*b) {
                        acc(&mut grads, *b, self.val(*a).t_matmul(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    if needs(*a) {
                        acc(&mut grads, *a, g.matmul(self.val(*b)));
                    }
                    if needs(*b) {
                        acc(&mut grads, *b, g.t_matmul(self.val(*a)));
                    }
                }
                Op::LinearLeaky(x, w, slope) => {
                    let gz = g.zip_map(out, |gx, y| if y > 0.0 { gx } else { gx * slope });
                    if needs(*x) {
                        acc(&mut grads, *x, gz.matmul(self.val(*w)));
                    }
                    if needs(*w) {
                        acc(&mut grads, *w, gz.t_matmul(self.val(*x)));
                    }
                }
                Op::LinearCat(a, b, w) => {
                    let (av, bv, wv) = (self.val(*a), self.val(*b), self.val(*w));
                    let (n, o, da, db) = (g.rows(), g.cols(), av.cols(), bv.cols());
                    let ldw = da + db;
                    if needs(*a) {
                        let ga = slot(&mut grads, *a, n, da);
                        gemm(
                            n,
                            o,
                            da,
                            g.data(),
                            (o, 1),
                            wv.data(),
                            (ldw, 1),
                            1.0,
                            ga.data_mut(),
                            (da, 1),
                        );
                    }
                    if needs(*b) {
                        let gb = slot(&mut grads, *b, n, db);
                        gemm(
                            n,
                            o,
                            db,
                            g.data(),
                            (o, 1),
                            &wv.data()[da..],
                            (ldw, 1),
                            1.0,
                            gb.data_mut(),
                            (db, 1),
                        );
                    }
                    if needs(*w) {
                        let gw = slot(&mut grads, *w, o, ldw);
                        gemm(
                            o,
                            n,
                            da,
                            g.data(),
                            (1, o),
                            av.data(),
                            (da, 1),
                            1.0,
                            gw.data_mut(),
                            (ldw, 1),
                        );
                        gemm(
                            o,
                            n,
                            db,
                            g.data(),
                            (1, o),
                            bv.data(),
                            (db, 1),
                            1.0,
                            &mut gw.data_mut()[da..],
                            (ldw, 1),
                        );
                    }
                }
                Op::Add(a, b) => {
                    if needs(*b) {
                        acc(&mut grads, *b, g.clone());
                    }
                    if needs(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if needs(*b) {
                        acc(&mut grads, *b, g.map(|x| -x));
                    }
                    if needs(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if needs(*a) {
                        acc(&mut grads, *a, g.zip_map(self.val(*b), |x, y| x * y));
                    }
                    if needs(*b) {
                        acc(&mut grads, *b, g.zip_map(self.val(*a), |x, y| x * y));
                    }
                }
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|x| x * c)),
                Op::ConcatCols(a, b) => {
                    let wa = self.val(*a).cols();
                    for (v, range) in [(*a, 0..wa), (*b, wa..g.cols())] {
                        if !needs(v) {
                            continue;
                        }
                        let gv = slot(&mut grads, v, g.rows(), range.len());
                        for i in 0..g.rows() {
                            for (o, x) in gv.row_mut(i).iter_mut().zip(&g.row(i)[range.clone()]) {
                                *o += x;
                            }
                        }
                    }
                }
                Op::LeakyRelu(a, slope) => {
                    let ga = g.zip_map(self.val(*a), |gx, x| if x > 0.0 { gx } else { gx * slope });
                    acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.val(*a), |gx, x| if x > 0.0 { gx } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(out, |gx, s| gx * s * (1.0 - s));
                    acc(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip_map(self.val(*a), |gx, x| gx / x);
                    acc(&mut grads, *a, ga);
                }
                Op::LogSigmoid(a, clamp) => {
                    let ga = g.zip_map(self.val(*a), |gx, x| {
                        if x.abs() > *clamp {
                            0.0
                        } else {
                            gx * (1.0 - sigmoid(x))
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let mut ga = Tensor::zeros(g.rows(), g.cols());
                    for i in 0..g.rows() {
                        softmax_backward(out.row(i), g.row(i), ga.row_mut(i));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SpMean(adj, x) => {
                    let [r, c] = self.val(*x).shape();
                    let gx = slot(&mut grads, *x, r, c);
                    for i in 0..adj.rows() {
                        let nbrs = adj.row(i);
                        if nbrs.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / nbrs.len() as f64;
                        let gi = g.row(i);
                        for &j in nbrs {
                            for (o, v) in gx.row_mut(j as usize).iter_mut().zip(gi) {
                                *o += inv * v;
                            }
                        }
                    }
                }
                Op::Gather(x, idx) => {
                    let [r, c] = self.val(*x).shape();
                    let gx = slot(&mut grads, *x, r, c);
                    for (p, &i) in idx.iter().enumerate() {
                        for (o, v) in gx.row_mut(i as usize).iter_mut().zip(g.row(p)) {
                            *o += v;
                        }
                    }
                }
                Op::RowDot { a, ia, b, ib } => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    if needs(*a) {
                        let ga = slot(&mut grads, *a, av.rows(), av.cols());
                        for (p, (&i, &j)) in ia.iter().zip(ib.iter()).enumerate() {
                            let gp = g.data()[p];
                            for (o, v) in ga.row_mut(i as usize).iter_mut().zip(bv.row(j as usize)) {
                                *o += gp * v;
                            }
                        }
                    }
                    if needs(*b) {
                        let gb = slot(&mut grads, *b, bv.rows(), bv.cols());
                        for (p, (&i, &j)) in ia.iter().zip(ib.iter()).enumerate() {
                            let gp = g.data()[p];
                            for (o, v) in gb.row_mut(j as usize).iter_mut().zip(av.row(i as usize)) {
                                *o += gp * v;
                            }
                        }
                    }
                }
                Op::SegmentSoftmax(x, offsets) => {
                    let mut gx = Tensor::zeros(g.rows(), 1);
                    for s in 0..offsets.len() - 1 {
                        let r = offsets[s]..offsets[s + 1];
                        softmax_backward(&out.data()[r.clone()], &g.data()[r.clone()], &mut gx.data_mut()[r]);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::SegmentWeightedSum { w, x, ix, offsets } => {
                    let (wv, xv) = (self.val(*w), self.val(*x));
                    if needs(*w) {
                        let mut gw = Tensor::zeros(wv.rows(), 1);
                        for s in 0..offsets.len() - 1 {
                            for p in offsets[s]..offsets[s + 1] {
                                gw.data_mut()[p] = dot(g.row(s), xv.row(ix[p] as usize));
                            }
                        }
                        acc(&mut grads, *w, gw);
                    }
                    if needs(*x) {
                        let gx = slot(&mut grads, *x, xv.rows(), xv.cols());
                        for s in 0..offsets.len() - 1 {
                            let gs = g.row(s);
                            for p in offsets[s]..offsets[s + 1] {
                                let wp = wv.data()[p];
                                for (o, v) in gx.row_mut(ix[p] as usize).iter_mut().zip(gs) {
                                    *o += wp * v;
                                }
                            }
                        }
                    }
                }
                Op::MeanRows(a) => {
                    let [r, c] = self.val(*a).shape();
                    let inv = 1.0 / r.max(1) as f64;
                    let ga = slot(&mut grads, *a, r, c);
                    for i in 0..r {
                        for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(0)) {
                            *o += v * inv;
                        }
                    }
                }
                Op::Sum(a) => {
                    let [r, c] = self.val(*a).shape();
                    acc(&mut grads, *a, Tensor::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let [r, c] = self.val(*a).shape();
                    acc(&mut grads, *a, Tensor::filled(r, c, g.item() / (r * c).max(1) as f64));
                }
                Op::MaskMul(a, mask) => {
                    let ga = g.zip_map(mask, |x, m| x * m);
                    acc(&mut grads, *a, ga);
                }
            }
        }
        Ok(())
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// The gradient accumulator of `v`, created as zeros on first use.
fn slot(grads: &mut [Option<Tensor>], v: Var, rows: usize, cols: usize) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(rows, cols))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    xs.iter_mut().for_each(|x| *x /= total);
}

/// `dx_i = y_i * (g_i - sum_j g_j y_j)`.
fn softmax_backward(y: &[f64], g: &[f64], dx: &mut [f64]) {
    let inner = dot(y, g);
    for ((d, &yi), &gi) in dx.iter_mut().zip(y).zip(g) {
        *d = yi * (gi - inner);
    }
}
