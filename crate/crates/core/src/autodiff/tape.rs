use alloc::vec;
use alloc::vec::Vec;

use super::{sigmoid, AutodiffError, Gradients, ParamId, ParamStore, Tensor};

/// Node handle on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

/// Zero padding of a stride-1 convolution. `Same` pads `(k-1)/2` on both
/// sides; `Causal` pads `k-1` on the left so position `t` only sees
/// positions `<= t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Same,
    Causal,
}

#[derive(Clone, Debug)]
enum Op {
    Param(ParamId),
    Const,
    Embedding { table: Var, ids: Vec<usize> },
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Conv1d { x: Var, kernel: Var, bias: Var, offset: usize },
    Glu(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    Concat(Vec<Var>),
    SliceRows(Var, usize),
    Dot(Var, Var),
}

struct Node {
    op: Op,
    value: Option<Tensor>,
}

/// Records operations for one forward pass over a fixed parameter snapshot.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    /// Node for a registered parameter (one per parameter per tape).
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node { op: Op::Param(id), value: None });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn param_named(&mut self, name: &str) -> Result<Var, AutodiffError> {
        let id = self.params.id(name)?;
        Ok(self.param(id))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Const, t)
    }

    /// Rows of `table` selected by `ids`: `[ids.len(), cols]`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.value(table);
        let (rows, cols) = (t.rows(), t.cols());
        if ids.is_empty() {
            return Err(AutodiffError::IndexOutOfRange { index: 0, len: 0 });
        }
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            if i >= rows {
                return Err(AutodiffError::IndexOutOfRange { index: i, len: rows });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(ids.len(), cols, data);
        Ok(self.push(Op::Embedding { table, ids: ids.to_vec() }, out))
    }

    fn zip_with(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Ok(Tensor::new(ta.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), out))
    }

    /// Adds the vector `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if tb.len() != ta.cols() {
            return Err(mismatch("add_row", ta, tb));
        }
        let c = ta.cols();
        let data = ta.data().iter().enumerate().map(|(i, x)| x + tb.data()[i % c]).collect();
        let out = Tensor::new(ta.shape().to_vec(), data);
        Ok(self.push(Op::AddRow(a, b), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = self.value(a);
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x * s).collect());
        self.push(Op::Scale(a, s), out)
    }

    /// `[n,k] × [k,m] → [n,m]`; leading axes of `a` are flattened into rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; n * m];
        let (ad, bd) = (ta.data(), tb.data());
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let x = ad[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, y) in orow.iter_mut().zip(&bd[p * m..(p + 1) * m]) {
                    *o += x * y;
                }
            }
        }
        let out = Tensor::matrix(n, m, out);
        Ok(self.push(Op::MatMul(a, b), out))
    }

    /// `a · bᵀ`: `[n,k] × [m,k] → [n,m]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k, m) = (ta.rows(), ta.cols(), tb.rows());
        if tb.cols() != k {
            return Err(mismatch("matmul_nt", ta, tb));
        }
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let ar = ta.row(i);
            for j in 0..m {
                out.push(ar.iter().zip(tb.row(j)).map(|(x, y)| x * y).sum());
            }
        }
        let out = Tensor::matrix(n, m, out);
        Ok(self.push(Op::MatMulNT(a, b), out))
    }

    /// Stride-1 convolution of `x: [T, d_in]` with `kernel: [k, d_in, d_out]`
    /// plus `bias: [d_out]`, output `[T, d_out]`.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Var, padding: Padding) -> Result<Var, AutodiffError> {
        let (tx, tk, tb) = (self.value(x), self.value(kernel), self.value(bias));
        let ks = tk.shape();
        if ks.len() != 3 || ks[1] != tx.cols() {
            return Err(mismatch("conv1d", tx, tk));
        }
        let (k, din, dout) = (ks[0], ks[1], ks[2]);
        if tb.len() != dout {
            return Err(mismatch("conv1d bias", tk, tb));
        }
        let offset = match padding {
            Padding::Same if k % 2 == 0 => return Err(AutodiffError::EvenKernel(k)),
            Padding::Same => (k - 1) / 2,
            Padding::Causal => k - 1,
        };
        let t_len = tx.rows();
        let mut out = Vec::with_capacity(t_len * dout);
        for _ in 0..t_len {
            out.extend_from_slice(tb.data());
        }
        let (xd, kd) = (tx.data(), tk.data());
        for t in 0..t_len {
            let orow = &mut out[t * dout..(t + 1) * dout];
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(offset).filter(|&s| s < t_len) else {
                    continue;
                };
                for i in 0..din {
                    let xv = xd[src * din + i];
                    if xv == 0.0 {
                        continue;
                    }
                    let krow = &kd[(j * din + i) * dout..(j * din + i + 1) * dout];
                    for (o, w) in orow.iter_mut().zip(krow) {
                        *o += xv * w;
                    }
                }
            }
        }
        let out = Tensor::matrix(t_len, dout, out);
        Ok(self.push(Op::Conv1d { x, kernel, bias, offset }, out))
    }

    /// Gated linear unit over the last axis: `a ⊙ σ(b)` for halves `[a | b]`.
    pub fn glu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ta = self.value(a);
        let c = ta.cols();
        if c % 2 != 0 {
            return Err(AutodiffError::OddDim { op: "glu", dim: c });
        }
        let h = c / 2;
        let mut out = Vec::with_capacity(ta.len() / 2);
        for r in 0..ta.rows() {
            let row = ta.row(r);
            for i in 0..h {
                out.push(row[i] * sigmoid(row[h + i]));
            }
        }
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().expect("non-empty shape") = h;
        let out = Tensor::new(shape, out);
        Ok(self.push(Op::Glu(a), out))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let mut out = Vec::with_capacity(ta.len());
        for r in 0..ta.rows() {
            let row = ta.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            out.extend(row.iter().map(|x| libm::exp(x - max)));
            let z: f64 = out[start..].iter().sum();
            out[start..].iter_mut().for_each(|x| *x /= z);
        }
        let out = Tensor::new(ta.shape().to_vec(), out);
        self.push(Op::Softmax(a), out)
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let mut out = Vec::with_capacity(ta.len());
        for r in 0..ta.rows() {
            let row = ta.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|x| libm::exp(x - max)).sum::<f64>());
            out.extend(row.iter().map(|x| x - lse));
        }
        let out = Tensor::new(ta.shape().to_vec(), out);
        self.push(Op::LogSoftmax(a), out)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| libm::log(*x)).collect());
        self.push(Op::Log(a), out)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let s = ta.data().iter().sum::<f64>() / ta.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(s))
    }

    /// Column means: `[n, d] → [1, d]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let (n, d) = (ta.rows(), ta.cols());
        let mut out = vec![0.0; d];
        for r in 0..n {
            for (o, x) in out.iter_mut().zip(ta.row(r)) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        self.push(Op::MeanRows(a), Tensor::matrix(1, d, out))
    }

    /// Stacks row blocks with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = self.value(*parts.first().ok_or(AutodiffError::IndexOutOfRange { index: 0, len: 0 })?);
        let c = first.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != c {
                return Err(mismatch("concat_rows", first, t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows, c, data);
        Ok(self.push(Op::Concat(parts.to_vec()), out))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let ta = self.value(a);
        if start >= end || end > ta.rows() {
            return Err(AutodiffError::IndexOutOfRange { index: end, len: ta.rows() });
        }
        let c = ta.cols();
        let out = Tensor::matrix(end - start, c, ta.data()[start * c..end * c].to_vec());
        Ok(self.push(Op::SliceRows(a, start), out))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(mismatch("dot", ta, tb));
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(s)))
    }

    /// Reverse pass from a scalar node. Every registered parameter gets a
    /// gradient; parameters the loss does not touch get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let y = self.value(Var(idx));
            match &self.nodes[idx].op {
                Op::Param(id) => {
                    for (o, x) in out.get_mut(*id).data_mut().iter_mut().zip(&g) {
                        *o += x;
                    }
                }
                Op::Const => {}
                Op::Embedding { table, ids } => {
                    let tt = self.value(*table);
                    let c = tt.cols();
                    let dt = slot(&mut grads, *table, tt.len());
                    for (r, &i) in ids.iter().enumerate() {
                        for (o, x) in dt[i * c..(i + 1) * c].iter_mut().zip(&g[r * c..(r + 1) * c]) {
                            *o += x;
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(slot(&mut grads, *a, g.len()), &g);
                    accumulate(slot(&mut grads, *b, g.len()), &g);
                }
                Op::AddRow(a, b) => {
                    accumulate(slot(&mut grads, *a, g.len()), &g);
                    let c = y.cols();
                    let db = slot(&mut grads, *b, c);
                    for (i, x) in g.iter().enumerate() {
                        db[i % c] += x;
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                    let da = slot(&mut grads, *a, g.len());
                    for ((o, x), y) in da.iter_mut().zip(&g).zip(tb) {
                        *o += x * y;
                    }
                    let db = slot(&mut grads, *b, g.len());
                    for ((o, x), y) in db.iter_mut().zip(&g).zip(ta) {
                        *o += x * y;
                    }
                }
                Op::Scale(a, s) => {
                    let da = slot(&mut grads, *a, g.len());
                    for (o, x) in da.iter_mut().zip(&g) {
                        *o += x * s;
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                    let (ad, bd) = (ta.data(), tb.data());
                    let da = slot(&mut grads, *a, n * k);
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            da[i * k + p] += grow.iter().zip(&bd[p * m..(p + 1) * m]).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                    let db = slot(&mut grads, *b, k * m);
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let x = ad[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, gy) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *o += x * gy;
                            }
                        }
                    }
                }
                Op::MatMulNT(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (ta.rows(), ta.cols(), tb.rows());
                    let da = slot(&mut grads, *a, n * k);
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for (o, y) in da[i * k..(i + 1) * k].iter_mut().zip(tb.row(j)) {
                                *o += gij * y;
                            }
                        }
                    }
                    let db = slot(&mut grads, *b, m * k);
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for (o, x) in db[j * k..(j + 1) * k].iter_mut().zip(ta.row(i)) {
                                *o += gij * x;
                            }
                        }
                    }
                }
                Op::Conv1d { x, kernel, bias, offset } => {
                    let (tx, tk) = (self.value(*x), self.value(*kernel));
                    let ks = tk.shape();
                    let (k, din, dout) = (ks[0], ks[1], ks[2]);
                    let t_len = tx.rows();
                    let (xd, kd) = (tx.data(), tk.data());
                    let db = slot(&mut grads, *bias, dout);
                    for t in 0..t_len {
                        for (o, gy) in db.iter_mut().zip(&g[t * dout..(t + 1) * dout]) {
                            *o += gy;
                        }
                    }
                    let dk = slot(&mut grads, *kernel, k * din * dout);
                    for t in 0..t_len {
                        let grow = &g[t * dout..(t + 1) * dout];
                        for j in 0..k {
                            let Some(src) = (t + j).checked_sub(*offset).filter(|&s| s < t_len) else {
                                continue;
                            };
                            for i in 0..din {
                                let xv = xd[src * din + i];
                                if xv == 0.0 {
                                    continue;
                                }
                                let base = (j * din + i) * dout;
                                for (o, gy) in dk[base..base + dout].iter_mut().zip(grow) {
                                    *o += xv * gy;
                                }
                            }
                        }
                    }
                    let dx = slot(&mut grads, *x, t_len * din);
                    for t in 0..t_len {
                        let grow = &g[t * dout..(t + 1) * dout];
                        for j in 0..k {
                            let Some(src) = (t + j).checked_sub(*offset).filter(|&s| s < t_len) else {
                                continue;
                            };
                            for i in 0..din {
                                let base = (j * din + i) * dout;
                                dx[src * din + i] += kd[base..base + dout].iter().zip(grow).map(|(w, gy)| w * gy).sum::<f64>();
                            }
                        }
                    }
                }
                Op::Glu(a) => {
                    let ta = self.value(*a);
                    let c = ta.cols();
                    let h = c / 2;
                    let da = slot(&mut grads, *a, ta.len());
                    for r in 0..ta.rows() {
                        let row = ta.row(r);
                        for i in 0..h {
                            let s = sigmoid(row[h + i]);
                            let gy = g[r * h + i];
                            da[r * c + i] += gy * s;
                            da[r * c + h + i] += gy * row[i] * s * (1.0 - s);
                        }
                    }
                }
                Op::Softmax(a) => {
                    let c = y.cols();
                    let da = slot(&mut grads, *a, y.len());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = &g[r * c..(r + 1) * c];
                        let inner: f64 = yr.iter().zip(gr).map(|(p, gy)| p * gy).sum();
                        for ((o, p), gy) in da[r * c..(r + 1) * c].iter_mut().zip(yr).zip(gr) {
                            *o += p * (gy - inner);
                        }
                    }
                }
                Op::LogSoftmax(a) => {
                    let c = y.cols();
                    let da = slot(&mut grads, *a, y.len());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = &g[r * c..(r + 1) * c];
                        let total: f64 = gr.iter().sum();
                        for ((o, ly), gy) in da[r * c..(r + 1) * c].iter_mut().zip(yr).zip(gr) {
                            *o += gy - libm::exp(*ly) * total;
                        }
                    }
                }
                Op::Log(a) => {
                    let ta = self.value(*a).data();
                    let da = slot(&mut grads, *a, g.len());
                    for ((o, gy), x) in da.iter_mut().zip(&g).zip(ta) {
                        *o += gy / x;
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    slot(&mut grads, *a, n).iter_mut().for_each(|o| *o += g[0]);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    let v = g[0] / n as f64;
                    slot(&mut grads, *a, n).iter_mut().for_each(|o| *o += v);
                }
                Op::MeanRows(a) => {
                    let ta = self.value(*a);
                    let (n, d) = (ta.rows(), ta.cols());
                    let da = slot(&mut grads, *a, n * d);
                    for r in 0..n {
                        for (o, gy) in da[r * d..(r + 1) * d].iter_mut().zip(&g) {
                            *o += gy / n as f64;
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        accumulate(slot(&mut grads, *p, n), &g[at..at + n]);
                        at += n;
                    }
                }
                Op::SliceRows(a, start) => {
                    let ta = self.value(*a);
                    let at = start * ta.cols();
                    let da = slot(&mut grads, *a, ta.len());
                    accumulate(&mut da[at..at + g.len()], &g);
                }
                Op::Dot(a, b) => {
                    let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                    let da = slot(&mut grads, *a, ta.len());
                    for (o, y) in da.iter_mut().zip(tb) {
                        *o += g[0] * y;
                    }
                    let db = slot(&mut grads, *b, tb.len());
                    for (o, x) in db.iter_mut().zip(ta) {
                        *o += g[0] * x;
                    }
                }
            }
        }
        Ok(out)
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (o, x) in dst.iter_mut().zip(src) {
        *o += x;
    }
}
