use alloc::vec;
use alloc::vec::Vec;

use super::{AutodiffError, Gradients, ParamId, ParamSet, Tensor};
use crate::math;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    RepeatEach(Var, usize),
    Pick(Var, usize),
    EmbedColumn(Var, usize),
    /// Gates are cached as `[i, f, g, o, tanh(c_next)]`, each of length H.
    LstmCell {
        x: Var,
        h: Var,
        c: Var,
        w: Var,
        b: Var,
        cache: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
}

/// Eager computation record. Borrowing the parameters keeps forward passes
/// read-only; gradients come back as a separate [`Gradients`] value.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, shapes: &[&[usize]]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

fn accumulate(grads: &mut [Vec<f64>], v: Var, len: usize) -> &mut [f64] {
    let g = &mut grads[v.0];
    if g.is_empty() {
        *g = vec![0.0; len];
    }
    g
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id).data(),
            _ => &self.nodes[v.0].value,
        }
    }

    /// First element of `v`; intended for scalars.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, name: &'static str) -> Result<Var, AutodiffError> {
        if !value.iter().all(|x| x.is_finite()) {
            return Err(AutodiffError::NonFinite { op: name });
        }
        self.nodes.push(Node { op, shape, value });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, &[self.shape(a), self.shape(b)]));
        }
        Ok(())
    }

    fn vector_len(&self, op: &'static str, a: Var) -> Result<usize, AutodiffError> {
        match self.shape(a) {
            [n] => Ok(*n),
            s => Err(mismatch(op, &[s])),
        }
    }

    /// Records a constant. Gradients do not flow into constants.
    pub fn constant(&mut self, t: Tensor) -> Result<Var, AutodiffError> {
        let shape = t.shape().to_vec();
        let value = t.data().to_vec();
        self.push(Op::Constant, shape, value, "constant")
    }

    pub fn constant_vec(&mut self, values: &[f64]) -> Result<Var, AutodiffError> {
        self.push(Op::Constant, vec![values.len()], values.to_vec(), "constant")
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let shape = self.params.get(id).shape().to_vec();
        self.nodes.push(Node {
            op: Op::Param(id),
            shape,
            value: Vec::new(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k, n) = match (self.shape(a), self.shape(b)) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            (sa, sb) => return Err(mismatch("matmul", &[sa, sb])),
        };
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                let row = &bv[p * n..(p + 1) * n];
                for (o, &bpj) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += aip * bpj;
                }
            }
        }
        self.push(Op::MatMul(a, b), vec![m, n], out, "matmul")
    }

    /// `w · x` for a `[m, n]` matrix and an `[n]` vector.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, AutodiffError> {
        let (m, n) = match (self.shape(w), self.shape(x)) {
            ([m, n], [n2]) if n == n2 => (*m, *n),
            (sw, sx) => return Err(mismatch("matvec", &[sw, sx])),
        };
        let (wv, xv) = (self.value(w), self.value(x));
        let out = (0..m)
            .map(|i| wv[i * n..(i + 1) * n].iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        self.push(Op::MatVec(w, x), vec![m], out, "matvec")
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, AutodiffError> {
        self.same_shape(name, a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        self.push(op, shape, out, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("min", a, b, Op::Min(a, b), f64::min)
    }

    fn unary(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var, AutodiffError> {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(op, shape, out, name)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.unary("scale", a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.unary("add_scalar", a, Op::AddScalar(a), |x| x + c)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("tanh", a, Op::Tanh(a), math::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("sigmoid", a, Op::Sigmoid(a), math::sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("relu", a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("exp", a, Op::Exp(a), math::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("log", a, Op::Log(a), math::ln)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("square", a, Op::Square(a), |x| x * x)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, AutodiffError> {
        self.unary("clamp", a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let n = self.vector_len("softmax", a)?;
        let out = softmax(self.value(a));
        self.push(Op::Softmax(a), vec![n], out, "softmax")
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let n = self.vector_len("log_softmax", a)?;
        let x = self.value(a);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + math::ln(x.iter().map(|&v| math::exp(v - max)).sum());
        let out = x.iter().map(|&v| v - lse).collect();
        self.push(Op::LogSoftmax(a), vec![n], out, "log_softmax")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let s = self.value(a).iter().sum();
        self.push(Op::Sum(a), vec![1], vec![s], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(mismatch("mean", &[self.shape(a)]));
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Op::Mean(a), vec![1], vec![m], "mean")
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let mut out = Vec::new();
        for &p in parts {
            self.vector_len("concat", p)?;
            out.extend_from_slice(self.value(p));
        }
        let n = out.len();
        self.push(Op::Concat(parts.to_vec()), vec![n], out, "concat")
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let n = self.vector_len("slice", a)?;
        if start + len > n {
            return Err(AutodiffError::IndexOutOfRange {
                op: "slice",
                index: start + len,
                len: n,
            });
        }
        let out = self.value(a)[start..start + len].to_vec();
        self.push(Op::Slice(a, start), vec![len], out, "slice")
    }

    /// Repeats every element of a vector `times` times in place:
    /// `[a, b]` becomes `[a, a, b, b]` for `times = 2`.
    pub fn repeat_each(&mut self, a: Var, times: usize) -> Result<Var, AutodiffError> {
        self.vector_len("repeat_each", a)?;
        let out: Vec<f64> = self.value(a).iter().flat_map(|&x| core::iter::repeat_n(x, times)).collect();
        let n = out.len();
        self.push(Op::RepeatEach(a, times), vec![n], out, "repeat_each")
    }

    /// Element `index` of a vector, as a scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var, AutodiffError> {
        let n = self.vector_len("pick", a)?;
        if index >= n {
            return Err(AutodiffError::IndexOutOfRange { op: "pick", index, len: n });
        }
        let out = vec![self.value(a)[index]];
        self.push(Op::Pick(a, index), vec![1], out, "pick")
    }

    /// Column `index` of a `[d, v]` table: the product with a one-hot vector.
    pub fn embed_column(&mut self, table: Var, index: usize) -> Result<Var, AutodiffError> {
        let (d, v) = match self.shape(table) {
            [d, v] => (*d, *v),
            s => return Err(mismatch("embedding", &[s])),
        };
        if index >= v {
            return Err(AutodiffError::IndexOutOfRange {
                op: "embedding",
                index,
                len: v,
            });
        }
        let t = self.value(table);
        let out = (0..d).map(|r| t[r * v + index]).collect();
        self.push(Op::EmbedColumn(table, index), vec![d], out, "embedding")
    }

    /// Standard LSTM cell. `w` is `[4H, I + H]` applied to `x ⊕ h`, `b` is
    /// `[4H]`, gate blocks ordered input, forget, candidate, output. Returns
    /// `h_next ⊕ c_next` as one `[2H]` vector.
    pub fn lstm_cell(&mut self, x: Var, h: Var, c: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
        let input = self.vector_len("lstm_cell", x)?;
        let hidden = self.vector_len("lstm_cell", h)?;
        let shapes_ok = self.shape(c) == [hidden]
            && self.shape(w) == [4 * hidden, input + hidden]
            && self.shape(b) == [4 * hidden];
        if !shapes_ok {
            return Err(mismatch(
                "lstm_cell",
                &[self.shape(x), self.shape(h), self.shape(c), self.shape(w), self.shape(b)],
            ));
        }
        let cols = input + hidden;
        let (xv, hv, cv, wv, bv) = (self.value(x), self.value(h), self.value(c), self.value(w), self.value(b));
        let mut z = bv.to_vec();
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &wv[r * cols..(r + 1) * cols];
            *zr += row[..input].iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
            *zr += row[input..].iter().zip(hv).map(|(a, b)| a * b).sum::<f64>();
        }
        let mut cache = vec![0.0; 5 * hidden];
        let mut out = vec![0.0; 2 * hidden];
        for j in 0..hidden {
            let i_g = math::sigmoid(z[j]);
            let f_g = math::sigmoid(z[hidden + j]);
            let g_g = math::tanh(z[2 * hidden + j]);
            let o_g = math::sigmoid(z[3 * hidden + j]);
            let c_next = f_g * cv[j] + i_g * g_g;
            let tc = math::tanh(c_next);
            out[j] = o_g * tc;
            out[hidden + j] = c_next;
            cache[j] = i_g;
            cache[hidden + j] = f_g;
            cache[2 * hidden + j] = g_g;
            cache[3 * hidden + j] = o_g;
            cache[4 * hidden + j] = tc;
        }
        self.push(Op::LstmCell { x, h, c, w, b, cache }, vec![2 * hidden], out, "lstm_cell")
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.shape(loss) != [1] {
            return Err(AutodiffError::NotScalar {
                shape: self.shape(loss).to_vec(),
            });
        }
        self.backward_from(loss, &[1.0])
    }

    /// Reverse pass seeded with an arbitrary upstream gradient for `output`.
    pub fn backward_from(&self, output: Var, upstream: &[f64]) -> Result<Gradients, AutodiffError> {
        let out_len = self.value(output).len();
        if upstream.len() != out_len {
            return Err(mismatch("backward", &[self.shape(output), &[upstream.len()]]));
        }
        let mut result = Gradients::zeros_like(self.params);
        let mut grads: Vec<Vec<f64>> = (0..self.nodes.len()).map(|_| Vec::new()).collect();
        grads[output.0] = upstream.to_vec();

        for idx in (0..=output.0).rev() {
            let gy = core::mem::take(&mut grads[idx]);
            if gy.is_empty() {
                continue;
            }
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    for (r, g) in result.get_mut(*id).iter_mut().zip(&gy) {
                        *r += g;
                    }
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = accumulate(&mut grads, *a, m * k);
                    for i in 0..m {
                        for p in 0..k {
                            ga[i * k + p] += (0..n).map(|j| gy[i * n + j] * bv[p * n + j]).sum::<f64>();
                        }
                    }
                    let gb = accumulate(&mut grads, *b, k * n);
                    for i in 0..m {
                        for p in 0..k {
                            let aip = av[i * k + p];
                            for j in 0..n {
                                gb[p * n + j] += aip * gy[i * n + j];
                            }
                        }
                    }
                }
                Op::MatVec(w, x) => {
                    let (m, n) = (self.shape(*w)[0], self.shape(*w)[1]);
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    if !matches!(self.nodes[x.0].op, Op::Constant) {
                        let gx = accumulate(&mut grads, *x, n);
                        for i in 0..m {
                            let gi = gy[i];
                            for (g, &wij) in gx.iter_mut().zip(&wv[i * n..(i + 1) * n]) {
                                *g += gi * wij;
                            }
                        }
                    }
                    let gw = accumulate(&mut grads, *w, m * n);
                    for i in 0..m {
                        let gi = gy[i];
                        if gi != 0.0 {
                            for (g, &xj) in gw[i * n..(i + 1) * n].iter_mut().zip(xv) {
                                *g += gi * xj;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(accumulate(&mut grads, *a, gy.len()), &gy);
                    add_into(accumulate(&mut grads, *b, gy.len()), &gy);
                }
                Op::Sub(a, b) => {
                    add_into(accumulate(&mut grads, *a, gy.len()), &gy);
                    for (g, d) in accumulate(&mut grads, *b, gy.len()).iter_mut().zip(&gy) {
                        *g -= d;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    for ((g, d), bj) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(bv) {
                        *g += d * bj;
                    }
                    for ((g, d), aj) in accumulate(&mut grads, *b, gy.len()).iter_mut().zip(&gy).zip(av) {
                        *g += d * aj;
                    }
                }
                Op::Min(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let take_a: Vec<bool> = av.iter().zip(bv).map(|(x, y)| x <= y).collect();
                    for ((g, d), &t) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(&take_a) {
                        if t {
                            *g += d;
                        }
                    }
                    for ((g, d), &t) in accumulate(&mut grads, *b, gy.len()).iter_mut().zip(&gy).zip(&take_a) {
                        if !t {
                            *g += d;
                        }
                    }
                }
                Op::Scale(a, c) => {
                    for (g, d) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy) {
                        *g += d * c;
                    }
                }
                Op::AddScalar(a) => add_into(accumulate(&mut grads, *a, gy.len()), &gy),
                Op::Tanh(a) => {
                    for ((g, d), yj) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(y) {
                        *g += d * (1.0 - yj * yj);
                    }
                }
                Op::Sigmoid(a) => {
                    for ((g, d), yj) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(y) {
                        *g += d * yj * (1.0 - yj);
                    }
                }
                Op::Relu(a) => {
                    for ((g, d), yj) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(y) {
                        if *yj > 0.0 {
                            *g += d;
                        }
                    }
                }
                Op::Exp(a) => {
                    for ((g, d), yj) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(y) {
                        *g += d * yj;
                    }
                }
                Op::Log(a) => {
                    let av = self.value(*a);
                    for ((g, d), xj) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(av) {
                        *g += d / xj;
                    }
                }
                Op::Square(a) => {
                    let av = self.value(*a);
                    for ((g, d), xj) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(av) {
                        *g += 2.0 * d * xj;
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let av = self.value(*a);
                    for ((g, d), xj) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(av) {
                        if xj >= lo && xj <= hi {
                            *g += d;
                        }
                    }
                }
                Op::Softmax(a) => {
                    let dot: f64 = gy.iter().zip(y).map(|(d, p)| d * p).sum();
                    for ((g, d), p) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(y) {
                        *g += p * (d - dot);
                    }
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = gy.iter().sum();
                    for ((g, d), ly) in accumulate(&mut grads, *a, gy.len()).iter_mut().zip(&gy).zip(y) {
                        *g += d - math::exp(*ly) * total;
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut grads, *a, n).iter_mut().for_each(|g| *g += gy[0]);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    let d = gy[0] / n as f64;
                    accumulate(&mut grads, *a, n).iter_mut().for_each(|g| *g += d);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        add_into(accumulate(&mut grads, p, n), &gy[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = self.value(*a).len();
                    add_into(&mut accumulate(&mut grads, *a, n)[*start..*start + gy.len()], &gy);
                }
                Op::RepeatEach(a, times) => {
                    let n = self.value(*a).len();
                    let ga = accumulate(&mut grads, *a, n);
                    for (g, chunk) in ga.iter_mut().zip(gy.chunks(*times)) {
                        *g += chunk.iter().sum::<f64>();
                    }
                }
                Op::Pick(a, index) => {
                    let n = self.value(*a).len();
                    accumulate(&mut grads, *a, n)[*index] += gy[0];
                }
                Op::EmbedColumn(table, index) => {
                    let (d, v) = (self.shape(*table)[0], self.shape(*table)[1]);
                    let gt = accumulate(&mut grads, *table, d * v);
                    for (r, g) in gy.iter().enumerate() {
                        gt[r * v + index] += g;
                    }
                }
                Op::LstmCell { x, h, c, w, b, cache } => {
                    let hidden = self.value(*h).len();
                    let input = self.value(*x).len();
                    let cols = input + hidden;
                    let (xv, hv, cv, wv) = (self.value(*x), self.value(*h), self.value(*c), self.value(*w));
                    let gate = |k: usize, j: usize| cache[k * hidden + j];
                    let mut dz = vec![0.0; 4 * hidden];
                    let mut dc_prev = vec![0.0; hidden];
                    for j in 0..hidden {
                        let (i_g, f_g, g_g, o_g, tc) = (gate(0, j), gate(1, j), gate(2, j), gate(3, j), gate(4, j));
                        let dh = gy[j];
                        let dc = gy[hidden + j] + dh * o_g * (1.0 - tc * tc);
                        dz[j] = dc * g_g * i_g * (1.0 - i_g);
                        dz[hidden + j] = dc * cv[j] * f_g * (1.0 - f_g);
                        dz[2 * hidden + j] = dc * i_g * (1.0 - g_g * g_g);
                        dz[3 * hidden + j] = dh * tc * o_g * (1.0 - o_g);
                        dc_prev[j] = dc * f_g;
                    }
                    let mut dxh = vec![0.0; cols];
                    for (r, &dzr) in dz.iter().enumerate() {
                        let row = &wv[r * cols..(r + 1) * cols];
                        for (d, wrc) in dxh.iter_mut().zip(row) {
                            *d += dzr * wrc;
                        }
                    }
                    let gw = accumulate(&mut grads, *w, 4 * hidden * cols);
                    for (r, &dzr) in dz.iter().enumerate() {
                        let row = &mut gw[r * cols..(r + 1) * cols];
                        for (g, xi) in row[..input].iter_mut().zip(xv) {
                            *g += dzr * xi;
                        }
                        for (g, hi) in row[input..].iter_mut().zip(hv) {
                            *g += dzr * hi;
                        }
                    }
                    add_into(accumulate(&mut grads, *b, 4 * hidden), &dz);
                    add_into(accumulate(&mut grads, *x, input), &dxh[..input]);
                    add_into(accumulate(&mut grads, *h, hidden), &dxh[input..]);
                    add_into(accumulate(&mut grads, *c, hidden), &dc_prev);
                }
            }
        }
        Ok(result)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| math::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
