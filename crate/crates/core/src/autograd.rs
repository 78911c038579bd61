//! Reverse-mode automatic differentiation on a dynamic tape.
//!
//! Every tensor is a row-major matrix; a scalar is `1 x 1`. A [`Tape`] is
//! recorded per forward pass and consumed by one [`Tape::backward`] call.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                left: vec![rows, cols],
                right: vec![data.len()],
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a `1 x 1` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a non-scalar tensor");
        self.data[0]
    }

    fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows { x: Var, idx: Vec<usize> },
    MaxOverGroups { x: Var, argmax: Vec<usize> },
    MeanOverGroups { x: Var, offsets: Vec<usize> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Square(Var),
    Scale(Var, f64),
    ReduceMean(Var),
    ReduceSum(Var),
    Replicate { x: Var, r: usize },
    Interpolate { x: Var, idx: Vec<[usize; 3]>, w: Vec<[f64; 3]> },
    Custom { inputs: Vec<Var>, backward: BackwardFn },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
    visits: usize,
}

/// Gradients produced by one backward pass, indexed by leaf.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf created with [`Tape::param`]. Leaves the root does
    /// not depend on get zeros.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

/// `c = op(a) * op(b)` via matrixmultiply, with optional transposes given
/// as strides. `a` is `m x k`, `b` is `k x n` after transposition.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], accumulate: bool) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths are m*k, k*n and m*n by construction of every
    // caller; strides describe row-major layouts within those bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
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

    /// Number of backward rules run by the last backward pass.
    pub fn backward_visits(&self) -> usize {
        self.visits
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            requires_grad: true,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            requires_grad: false,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// `x W + b` with `x: n x i`, `W: i x o`, `b: 1 x o`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols != wv.rows {
            return Err(mismatch("linear", xv, wv));
        }
        if bv.rows != 1 || bv.cols != wv.cols {
            return Err(mismatch("linear bias", wv, bv));
        }
        let (n, i, o) = (xv.rows, xv.cols, wv.cols);
        let mut out = Tensor::zeros(n, o);
        for row in out.data.chunks_exact_mut(o.max(1)).take(n) {
            row.copy_from_slice(&bv.data);
        }
        gemm(n, i, o, &xv.data, false, &wv.data, false, &mut out.data, true);
        Ok(self.push(out, Op::Linear { x, w, b }, &[x, w, b]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = Tensor {
            rows: xv.rows,
            cols: xv.cols,
            data: xv.data.iter().map(|&a| a.max(0.0)).collect(),
        };
        self.push(out, Op::Relu(x), &[x])
    }

    /// `relu(x W + b)`.
    pub fn linear_relu(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.linear(x, w, b)?;
        Ok(self.relu(y))
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.value(xs[0]);
        let rows = first.rows;
        for &v in &xs[1..] {
            if self.value(v).rows != rows {
                return Err(mismatch("concat_cols", first, self.value(v)));
            }
        }
        let cols: usize = xs.iter().map(|&v| self.value(v).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &v in xs {
                data.extend_from_slice(self.value(v).row(r));
            }
        }
        Ok(self.push(Tensor { rows, cols, data }, Op::ConcatCols(xs.to_vec()), xs))
    }

    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.value(xs[0]);
        let cols = first.cols;
        for &v in &xs[1..] {
            if self.value(v).cols != cols {
                return Err(mismatch("concat_rows", first, self.value(v)));
            }
        }
        let mut data = Vec::new();
        for &v in xs {
            data.extend_from_slice(&self.value(v).data);
        }
        let rows = data.len() / cols.max(1);
        Ok(self.push(Tensor { rows, cols, data }, Op::ConcatRows(xs.to_vec()), xs))
    }

    /// Rows of `x` in the order given by `idx` (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= xv.rows) {
            return Err(Error::ShapeMismatch {
                op: "gather_rows",
                left: xv.shape(),
                right: vec![bad],
            });
        }
        let mut data = Vec::with_capacity(idx.len() * xv.cols);
        for &i in idx {
            data.extend_from_slice(xv.row(i));
        }
        let out = Tensor {
            rows: idx.len(),
            cols: xv.cols,
            data,
        };
        Ok(self.push(out, Op::GatherRows { x, idx: idx.to_vec() }, &[x]))
    }

    fn check_offsets(&self, op: &'static str, x: Var, offsets: &[usize]) -> Result<()> {
        let xv = self.value(x);
        let ok = offsets.first() == Some(&0)
            && offsets.last() == Some(&xv.rows)
            && offsets.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                op,
                left: xv.shape(),
                right: offsets.to_vec(),
            })
        }
    }

    /// Column-wise max over consecutive row groups `offsets[g]..offsets[g+1]`.
    /// Ties credit the lowest row.
    pub fn max_over_groups(&mut self, x: Var, offsets: &[usize]) -> Result<Var> {
        self.check_offsets("max_over_groups", x, offsets)?;
        let xv = self.value(x);
        let (g, c) = (offsets.len() - 1, xv.cols);
        let mut data = vec![f64::NEG_INFINITY; g * c];
        let mut argmax = vec![0usize; g * c];
        for k in 0..g {
            for r in offsets[k]..offsets[k + 1] {
                let row = xv.row(r);
                for j in 0..c {
                    if row[j] > data[k * c + j] {
                        data[k * c + j] = row[j];
                        argmax[k * c + j] = r;
                    }
                }
            }
        }
        let out = Tensor { rows: g, cols: c, data };
        Ok(self.push(out, Op::MaxOverGroups { x, argmax }, &[x]))
    }

    pub fn mean_over_groups(&mut self, x: Var, offsets: &[usize]) -> Result<Var> {
        self.check_offsets("mean_over_groups", x, offsets)?;
        let xv = self.value(x);
        let (g, c) = (offsets.len() - 1, xv.cols);
        let mut data = vec![0.0; g * c];
        for k in 0..g {
            let n = (offsets[k + 1] - offsets[k]) as f64;
            for r in offsets[k]..offsets[k + 1] {
                for (d, s) in data[k * c..(k + 1) * c].iter_mut().zip(xv.row(r)) {
                    *d += s / n;
                }
            }
        }
        let out = Tensor { rows: g, cols: c, data };
        Ok(self.push(
            out,
            Op::MeanOverGroups {
                x,
                offsets: offsets.to_vec(),
            },
            &[x],
        ))
    }

    fn elementwise(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(mismatch(op, av, bv));
        }
        Ok(Tensor {
            rows: av.rows,
            cols: av.cols,
            data: av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect(),
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.elementwise("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.elementwise("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.elementwise("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let t = Tensor {
            rows: xv.rows,
            cols: xv.cols,
            data: xv.data.iter().map(|a| a * a).collect(),
        };
        self.push(t, Op::Square(x), &[x])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let xv = self.value(x);
        let t = Tensor {
            rows: xv.rows,
            cols: xv.cols,
            data: xv.data.iter().map(|a| a * s).collect(),
        };
        self.push(t, Op::Scale(x, s), &[x])
    }

    pub fn reduce_mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::EmptyInput("reduce_mean"));
        }
        let m = xv.data.iter().sum::<f64>() / xv.len() as f64;
        Ok(self.push(Tensor::scalar(m), Op::ReduceMean(x), &[x]))
    }

    pub fn reduce_sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::ReduceSum(x), &[x])
    }

    /// `r` stacked copies: row `j` of the result is row `j % n` of `x`.
    pub fn replicate(&mut self, x: Var, r: usize) -> Var {
        let xv = self.value(x);
        let data = xv.data.repeat(r);
        let t = Tensor {
            rows: xv.rows * r,
            cols: xv.cols,
            data,
        };
        self.push(t, Op::Replicate { x, r }, &[x])
    }

    /// Row `i` of the result is `sum_k w[i][k] * x[idx[i][k]]`.
    pub fn interpolate(&mut self, x: Var, idx: &[[usize; 3]], w: &[[f64; 3]]) -> Result<Var> {
        let xv = self.value(x);
        if idx.len() != w.len() || idx.iter().flatten().any(|&i| i >= xv.rows) {
            return Err(Error::ShapeMismatch {
                op: "interpolate",
                left: xv.shape(),
                right: vec![idx.len(), w.len()],
            });
        }
        let c = xv.cols;
        let mut data = vec![0.0; idx.len() * c];
        for (i, (ids, ws)) in idx.iter().zip(w).enumerate() {
            let out = &mut data[i * c..(i + 1) * c];
            for k in 0..3 {
                for (o, s) in out.iter_mut().zip(xv.row(ids[k])) {
                    *o += ws[k] * s;
                }
            }
        }
        let t = Tensor {
            rows: idx.len(),
            cols: c,
            data,
        };
        Ok(self.push(
            t,
            Op::Interpolate {
                x,
                idx: idx.to_vec(),
                w: w.to_vec(),
            },
            &[x],
        ))
    }

    /// A node whose value is computed by the caller and whose backward rule
    /// maps the output gradient to one gradient per input, each shaped like
    /// that input.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, backward: impl Fn(&Tensor) -> Vec<Tensor> + 'static) -> Var {
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward: Box::new(backward),
            },
            inputs,
        )
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return Ok(());
        }
        if !node.value.same_shape(&g) {
            return Err(mismatch("gradient", &node.value, &g));
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradients of the scalar `root` with respect to every [`Tape::param`]
    /// leaf. A tape supports one backward pass.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::StaleTape);
        }
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(Error::NonScalarRoot(rv.shape()));
        }
        self.consumed = true;
        self.visits = 0;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.wants(root) {
            grads[root.0] = Some(Tensor::scalar(1.0));
        }
        for i in (0..=root.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.visits += 1;
            self.backward_node(i, &g, &mut grads)?;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.rows, node.value.cols));
            }
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(x), self.value(w));
                let (n, inp, o) = (xv.rows, xv.cols, wv.cols);
                if self.wants(x) {
                    let mut dx = Tensor::zeros(n, inp);
                    gemm(n, o, inp, &g.data, false, &wv.data, true, &mut dx.data, false);
                    self.accumulate(grads, x, dx)?;
                }
                if self.wants(w) {
                    let mut dw = Tensor::zeros(inp, o);
                    gemm(inp, n, o, &xv.data, true, &g.data, false, &mut dw.data, false);
                    self.accumulate(grads, w, dw)?;
                }
                if self.wants(b) {
                    let mut db = Tensor::zeros(1, o);
                    for row in g.data.chunks_exact(o.max(1)) {
                        for (d, s) in db.data.iter_mut().zip(row) {
                            *d += s;
                        }
                    }
                    self.accumulate(grads, b, db)?;
                }
            }
            &Op::Relu(x) => {
                let xv = self.value(x);
                let data = g
                    .data
                    .iter()
                    .zip(&xv.data)
                    .map(|(&d, &a)| if a > 0.0 { d } else { 0.0 })
                    .collect();
                self.accumulate(grads, x, Tensor { rows: g.rows, cols: g.cols, data })?;
            }
            Op::ConcatCols(xs) => {
                let mut start = 0;
                for &v in xs {
                    let c = self.value(v).cols;
                    if self.wants(v) {
                        let mut data = Vec::with_capacity(g.rows * c);
                        for r in 0..g.rows {
                            data.extend_from_slice(&g.row(r)[start..start + c]);
                        }
                        self.accumulate(grads, v, Tensor { rows: g.rows, cols: c, data })?;
                    }
                    start += c;
                }
            }
            Op::ConcatRows(xs) => {
                let mut start = 0;
                for &v in xs {
                    let n = self.value(v).len();
                    if self.wants(v) {
                        let vv = self.value(v);
                        let t = Tensor {
                            rows: vv.rows,
                            cols: vv.cols,
                            data: g.data[start..start + n].to_vec(),
                        };
                        self.accumulate(grads, v, t)?;
                    }
                    start += n;
                }
            }
            Op::GatherRows { x, idx } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let mut dx = Tensor::zeros(xv.rows, xv.cols);
                    let c = xv.cols;
                    for (r, &src) in idx.iter().enumerate() {
                        for (d, s) in dx.data[src * c..(src + 1) * c].iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                    self.accumulate(grads, *x, dx)?;
                }
            }
            Op::MaxOverGroups { x, argmax } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let c = xv.cols;
                    let mut dx = Tensor::zeros(xv.rows, c);
                    for (k, &src) in argmax.iter().enumerate() {
                        dx.data[src * c + k % c] += g.data[k];
                    }
                    self.accumulate(grads, *x, dx)?;
                }
            }
            Op::MeanOverGroups { x, offsets } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let c = xv.cols;
                    let mut dx = Tensor::zeros(xv.rows, c);
                    for k in 0..offsets.len() - 1 {
                        let n = (offsets[k + 1] - offsets[k]) as f64;
                        for r in offsets[k]..offsets[k + 1] {
                            for (d, s) in dx.data[r * c..(r + 1) * c].iter_mut().zip(g.row(k)) {
                                *d = s / n;
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx)?;
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone())?;
                self.accumulate(grads, b, g.clone())?;
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone())?;
                if self.wants(b) {
                    let data = g.data.iter().map(|d| -d).collect();
                    self.accumulate(grads, b, Tensor { rows: g.rows, cols: g.cols, data })?;
                }
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.wants(a) {
                    let data = g.data.iter().zip(&bv.data).map(|(d, y)| d * y).collect();
                    self.accumulate(grads, a, Tensor { rows: g.rows, cols: g.cols, data })?;
                }
                if self.wants(b) {
                    let data = g.data.iter().zip(&av.data).map(|(d, x)| d * x).collect();
                    self.accumulate(grads, b, Tensor { rows: g.rows, cols: g.cols, data })?;
                }
            }
            &Op::Square(x) => {
                let xv = self.value(x);
                let data = g.data.iter().zip(&xv.data).map(|(d, a)| 2.0 * a * d).collect();
                self.accumulate(grads, x, Tensor { rows: g.rows, cols: g.cols, data })?;
            }
            &Op::Scale(x, s) => {
                let data = g.data.iter().map(|d| d * s).collect();
                self.accumulate(grads, x, Tensor { rows: g.rows, cols: g.cols, data })?;
            }
            &Op::ReduceMean(x) => {
                let xv = self.value(x);
                let v = g.item() / xv.len() as f64;
                self.accumulate(grads, x, Tensor { rows: xv.rows, cols: xv.cols, data: vec![v; xv.len()] })?;
            }
            &Op::ReduceSum(x) => {
                let xv = self.value(x);
                self.accumulate(grads, x, Tensor { rows: xv.rows, cols: xv.cols, data: vec![g.item(); xv.len()] })?;
            }
            &Op::Replicate { x, r } => {
                let xv = self.value(x);
                let mut dx = Tensor::zeros(xv.rows, xv.cols);
                for copy in g.data.chunks_exact(xv.len().max(1)).take(r) {
                    dx.add_assign(&Tensor { rows: xv.rows, cols: xv.cols, data: copy.to_vec() });
                }
                self.accumulate(grads, x, dx)?;
            }
            Op::Interpolate { x, idx, w } => {
                if self.wants(*x) {
                    let xv = self.value(*x);
                    let c = xv.cols;
                    let mut dx = Tensor::zeros(xv.rows, c);
                    for (i, (ids, ws)) in idx.iter().zip(w).enumerate() {
                        for k in 0..3 {
                            for (d, s) in dx.data[ids[k] * c..(ids[k] + 1) * c].iter_mut().zip(g.row(i)) {
                                *d += ws[k] * s;
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx)?;
                }
            }
            Op::Custom { inputs, backward } => {
                let gs = backward(g);
                if gs.len() != inputs.len() {
                    return Err(Error::ShapeMismatch {
                        op: "custom backward",
                        left: vec![inputs.len()],
                        right: vec![gs.len()],
                    });
                }
                for (&v, gi) in inputs.iter().zip(gs) {
                    self.accumulate(grads, v, gi)?;
                }
            }
        }
        Ok(())
    }
}
