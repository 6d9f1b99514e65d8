use super::kernels::{add_col_sums, gemm, Layout};
use super::ops::{layer_norm_stats, sigmoid, tanh};
use super::{NdError, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatmulAdd { x: usize, w: usize, b: usize },
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Exp(usize),
    Square(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Minimum(usize, usize),
    Affine { a: usize, scale: f64 },
    Clamp { a: usize, lo: f64, hi: f64 },
    Concat(usize, usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    LogSoftmax(usize),
    Iru {
        x: usize,
        c: usize,
        fw: usize,
        fb: usize,
        iw: usize,
        ib: usize,
        /// `[x, tanh c]`, `[B, 2H]`.
        xc: Vec<f64>,
        f: Vec<f64>,
        input: Vec<f64>,
    },
    Gather { a: usize, idx: Vec<usize> },
    SumRows(usize),
    Sum(usize),
    Mean(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records forward values in topological order so gradients can be
/// propagated back in a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradient buffers produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of length `len` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NdError {
    NdError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contribution: impl FnOnce(&mut [f64]), len: usize) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    contribution(buf);
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Tensor> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or(NdError::NoTape(v.0))
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn try_value(&self, v: Var) -> Result<&Tensor> {
        self.node(v)
    }

    pub fn matmul_add(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = super::matmul_add(self.node(x)?, self.node(w)?, self.node(b)?)?;
        Ok(self.push(
            out,
            Op::MatmulAdd {
                x: x.0,
                w: w.0,
                b: b.0,
            },
        ))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out = self.node(a)?.map(f);
        Ok(self.push(out, op))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, tanh, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |v| v.max(0.0), Op::Relu(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp(a.0))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |v| v * v, Op::Square(a.0))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary(a, |v| scale * v + shift, Op::Affine { a: a.0, scale })
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(a, |v| v.clamp(lo, hi), Op::Clamp { a: a.0, lo, hi })
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.node(a)?, self.node(b)?);
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "minimum", f64::min, Op::Minimum(a.0, b.0))
    }

    /// Column-wise concatenation of two `[B, *]` matrices.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.node(a)?, self.node(b)?);
        let (ra, ca) = ta.dims2("concat")?;
        let (rb, cb) = tb.dims2("concat")?;
        if ra != rb {
            return Err(shape_err("concat", ta, tb));
        }
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let out = Tensor::new(vec![ra, ca + cb], data)?;
        Ok(self.push(out, Op::Concat(a.0, b.0)))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.node(x)?, self.node(gamma)?, self.node(beta)?);
        let (rows, width) = tx.dims2("layer_norm")?;
        if width == 0 || tg.shape() != [width] || tb.shape() != [width] {
            return Err(shape_err("layer_norm", tx, tg));
        }
        let (xhat, rstd) = layer_norm_stats(tx.data(), width, eps);
        let mut out = vec![0.0; xhat.len()];
        for (o, h) in out.chunks_exact_mut(width).zip(xhat.chunks_exact(width)) {
            for j in 0..width {
                o[j] = h[j] * tg.data()[j] + tb.data()[j];
            }
        }
        let out = Tensor::new(vec![rows, width], out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                rstd,
            },
        ))
    }

    /// Fused IRU update on `[B, H]` inputs:
    /// `f = sigmoid([x, tanh c] Wf + bf)`, `I = tanh([x, tanh c] Wi + bi)`,
    /// `out = I + f (c - I)`. Equivalent to composing the elementary ops,
    /// with one node and one backward pass.
    pub fn iru(&mut self, x: Var, c: Var, fw: Var, fb: Var, iw: Var, ib: Var) -> Result<Var> {
        let (tx, tc) = (self.node(x)?, self.node(c)?);
        let (rows, h) = tx.dims2("iru")?;
        if tc.shape() != tx.shape() {
            return Err(shape_err("iru", tx, tc));
        }
        for (w, b) in [(fw, fb), (iw, ib)] {
            let (tw, tb) = (self.node(w)?, self.node(b)?);
            if tw.shape() != [2 * h, h] || tb.shape() != [h] {
                return Err(shape_err("iru", tx, tw));
            }
        }
        let mut xc = Vec::with_capacity(rows * 2 * h);
        for r in 0..rows {
            xc.extend_from_slice(tx.row(r));
            xc.extend(tc.row(r).iter().map(|&v| tanh(v)));
        }
        let affine = |w: Var, b: Var| -> Vec<f64> {
            let bias = self.nodes[b.0].value.data();
            let mut out = Vec::with_capacity(rows * h);
            for _ in 0..rows {
                out.extend_from_slice(bias);
            }
            gemm(rows, 2 * h, h, &xc, Layout::Plain, self.nodes[w.0].value.data(), Layout::Plain, 1.0, &mut out);
            out
        };
        let mut f = affine(fw, fb);
        let mut input = affine(iw, ib);
        f.iter_mut().for_each(|v| *v = sigmoid(*v));
        input.iter_mut().for_each(|v| *v = tanh(*v));
        let out: Vec<f64> = tc
            .data()
            .iter()
            .zip(&f)
            .zip(&input)
            .map(|((&c, &f), &i)| i + f * (c - i))
            .collect();
        let out = Tensor::new(vec![rows, h], out)?;
        Ok(self.push(
            out,
            Op::Iru {
                x: x.0,
                c: c.0,
                fw: fw.0,
                fb: fb.0,
                iw: iw.0,
                ib: ib.0,
                xc,
                f,
                input,
            },
        ))
    }

    /// Row-wise log-softmax of a `[B, K]` matrix.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.node(a)?;
        let (rows, k) = ta.dims2("log_softmax")?;
        let mut data = Vec::with_capacity(rows * k);
        for i in 0..rows {
            let row = ta.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|v| v - lse));
        }
        let out = Tensor::new(vec![rows, k], data)?;
        Ok(self.push(out, Op::LogSoftmax(a.0)))
    }

    /// Picks `a[i, idx[i]]` from each row into a `[B, 1]` column.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let ta = self.node(a)?;
        let (rows, k) = ta.dims2("gather")?;
        if idx.len() != rows || idx.iter().any(|&j| j >= k) {
            return Err(NdError::Shape {
                op: "gather",
                lhs: ta.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let data = idx.iter().enumerate().map(|(i, &j)| ta.row(i)[j]).collect();
        let out = Tensor::new(vec![rows, 1], data)?;
        Ok(self.push(
            out,
            Op::Gather {
                a: a.0,
                idx: idx.to_vec(),
            },
        ))
    }

    /// `[B, K] -> [B, 1]` row sums.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.node(a)?;
        let (rows, _) = ta.dims2("sum_rows")?;
        let data = (0..rows).map(|i| ta.row(i).iter().sum()).collect();
        let out = Tensor::new(vec![rows, 1], data)?;
        Ok(self.push(out, Op::SumRows(a.0)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a)?.data().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(a.0)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.node(a)?;
        let m = t.data().iter().sum::<f64>() / t.numel().max(1) as f64;
        Ok(self.push(Tensor::scalar(m), Op::Mean(a.0)))
    }

    /// Reverse sweep from a scalar loss. The tape is left intact, so repeated
    /// calls over the same graph return identical gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let t = self.node(loss)?;
        if t.numel() != 1 {
            return Err(NdError::NonScalarLoss(t.shape().to_vec()));
        }
        self.backward_with_seed(loss, vec![1.0])
    }

    /// Reverse sweep seeded with an arbitrary upstream gradient for `output`.
    pub fn backward_with_seed(&self, output: Var, seed: Vec<f64>) -> Result<Gradients> {
        let t = self.node(output)?;
        if seed.len() != t.numel() {
            return Err(NdError::Length {
                shape: t.shape().to_vec(),
                len: seed.len(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);
        for id in (0..=output.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        let val = |i: usize| self.nodes[i].value.data();
        let len = |i: usize| self.nodes[i].value.numel();
        match &node.op {
            Op::Leaf => {}
            Op::MatmulAdd { x, w, b } => {
                let (rows, din) = (self.nodes[*x].value.shape()[0], self.nodes[*x].value.shape()[1]);
                let dout = self.nodes[*w].value.shape()[1];
                accumulate(
                    &mut grads[*x],
                    |dx| gemm(rows, dout, din, g, Layout::Plain, val(*w), Layout::Transposed, 1.0, dx),
                    len(*x),
                );
                accumulate(
                    &mut grads[*w],
                    |dw| gemm(din, rows, dout, val(*x), Layout::Transposed, g, Layout::Plain, 1.0, dw),
                    len(*w),
                );
                accumulate(&mut grads[*b], |db| add_col_sums(db, g), len(*b));
            }
            Op::Tanh(a) => accumulate(
                &mut grads[*a],
                |d| {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(out) {
                        *d += g * (1.0 - y * y);
                    }
                },
                len(*a),
            ),
            Op::Sigmoid(a) => accumulate(
                &mut grads[*a],
                |d| {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(out) {
                        *d += g * y * (1.0 - y);
                    }
                },
                len(*a),
            ),
            Op::Relu(a) => accumulate(
                &mut grads[*a],
                |d| {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(out) {
                        if *y > 0.0 {
                            *d += g;
                        }
                    }
                },
                len(*a),
            ),
            Op::Exp(a) => accumulate(
                &mut grads[*a],
                |d| {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(out) {
                        *d += g * y;
                    }
                },
                len(*a),
            ),
            Op::Square(a) => accumulate(
                &mut grads[*a],
                |d| {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(val(*a)) {
                        *d += 2.0 * g * x;
                    }
                },
                len(*a),
            ),
            Op::Affine { a, scale } => accumulate(
                &mut grads[*a],
                |d| {
                    for (d, g) in d.iter_mut().zip(g) {
                        *d += scale * g;
                    }
                },
                len(*a),
            ),
            Op::Clamp { a, lo, hi } => accumulate(
                &mut grads[*a],
                |d| {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(val(*a)) {
                        if x >= lo && x <= hi {
                            *d += g;
                        }
                    }
                },
                len(*a),
            ),
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                accumulate(&mut grads[*a], |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g), len(*a));
                accumulate(
                    &mut grads[*b],
                    |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += sign * g),
                    len(*b),
                );
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                accumulate(
                    &mut grads[*a],
                    |d| {
                        for i in 0..d.len() {
                            d[i] += g[i] * vb[i];
                        }
                    },
                    len(*a),
                );
                accumulate(
                    &mut grads[*b],
                    |d| {
                        for i in 0..d.len() {
                            d[i] += g[i] * va[i];
                        }
                    },
                    len(*b),
                );
            }
            Op::Minimum(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                accumulate(
                    &mut grads[*a],
                    |d| {
                        for i in 0..d.len() {
                            if va[i] <= vb[i] {
                                d[i] += g[i];
                            }
                        }
                    },
                    len(*a),
                );
                accumulate(
                    &mut grads[*b],
                    |d| {
                        for i in 0..d.len() {
                            if va[i] > vb[i] {
                                d[i] += g[i];
                            }
                        }
                    },
                    len(*b),
                );
            }
            Op::Concat(a, b) => {
                let ca = self.nodes[*a].value.shape()[1];
                let cb = self.nodes[*b].value.shape()[1];
                accumulate(
                    &mut grads[*a],
                    |d| {
                        for (drow, grow) in d.chunks_exact_mut(ca).zip(g.chunks_exact(ca + cb)) {
                            drow.iter_mut().zip(&grow[..ca]).for_each(|(d, g)| *d += g);
                        }
                    },
                    len(*a),
                );
                accumulate(
                    &mut grads[*b],
                    |d| {
                        for (drow, grow) in d.chunks_exact_mut(cb).zip(g.chunks_exact(ca + cb)) {
                            drow.iter_mut().zip(&grow[ca..]).for_each(|(d, g)| *d += g);
                        }
                    },
                    len(*b),
                );
            }
            Op::Iru {
                x,
                c,
                fw,
                fb,
                iw,
                ib,
                xc,
                f,
                input,
            } => {
                let h = self.nodes[*fb].value.numel();
                let rows = g.len() / h;
                let cv = val(*c);
                let mut df = Vec::with_capacity(g.len());
                let mut di = Vec::with_capacity(g.len());
                for k in 0..g.len() {
                    df.push(g[k] * (cv[k] - input[k]) * f[k] * (1.0 - f[k]));
                    di.push(g[k] * (1.0 - f[k]) * (1.0 - input[k] * input[k]));
                }
                accumulate(
                    &mut grads[*fw],
                    |d| gemm(2 * h, rows, h, xc, Layout::Transposed, &df, Layout::Plain, 1.0, d),
                    len(*fw),
                );
                accumulate(
                    &mut grads[*iw],
                    |d| gemm(2 * h, rows, h, xc, Layout::Transposed, &di, Layout::Plain, 1.0, d),
                    len(*iw),
                );
                accumulate(&mut grads[*fb], |d| add_col_sums(d, &df), h);
                accumulate(&mut grads[*ib], |d| add_col_sums(d, &di), h);
                let mut dxc = vec![0.0; rows * 2 * h];
                gemm(rows, h, 2 * h, &df, Layout::Plain, val(*fw), Layout::Transposed, 0.0, &mut dxc);
                gemm(rows, h, 2 * h, &di, Layout::Plain, val(*iw), Layout::Transposed, 1.0, &mut dxc);
                accumulate(
                    &mut grads[*x],
                    |d| {
                        for (drow, grow) in d.chunks_exact_mut(h).zip(dxc.chunks_exact(2 * h)) {
                            drow.iter_mut().zip(&grow[..h]).for_each(|(d, g)| *d += g);
                        }
                    },
                    len(*x),
                );
                accumulate(
                    &mut grads[*c],
                    |d| {
                        for r in 0..rows {
                            for j in 0..h {
                                let k = r * h + j;
                                let t = xc[r * 2 * h + h + j];
                                d[k] += g[k] * f[k] + dxc[r * 2 * h + h + j] * (1.0 - t * t);
                            }
                        }
                    },
                    len(*c),
                );
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let width = self.nodes[*gamma].value.numel();
                let gam = val(*gamma);
                accumulate(
                    &mut grads[*gamma],
                    |d| {
                        for (grow, hrow) in g.chunks_exact(width).zip(xhat.chunks_exact(width)) {
                            for j in 0..width {
                                d[j] += grow[j] * hrow[j];
                            }
                        }
                    },
                    width,
                );
                accumulate(&mut grads[*beta], |d| add_col_sums(d, g), width);
                accumulate(
                    &mut grads[*x],
                    |d| {
                        let n = width as f64;
                        let mut dxhat = vec![0.0; width];
                        for (r, ((drow, grow), hrow)) in d
                            .chunks_exact_mut(width)
                            .zip(g.chunks_exact(width))
                            .zip(xhat.chunks_exact(width))
                            .enumerate()
                        {
                            let mut mean_d = 0.0;
                            let mut mean_dh = 0.0;
                            for j in 0..width {
                                dxhat[j] = grow[j] * gam[j];
                                mean_d += dxhat[j];
                                mean_dh += dxhat[j] * hrow[j];
                            }
                            mean_d /= n;
                            mean_dh /= n;
                            for j in 0..width {
                                drow[j] += rstd[r] * (dxhat[j] - mean_d - hrow[j] * mean_dh);
                            }
                        }
                    },
                    len(*x),
                );
            }
            Op::LogSoftmax(a) => {
                let k = self.nodes[*a].value.shape()[1];
                accumulate(
                    &mut grads[*a],
                    |d| {
                        for ((drow, grow), yrow) in
                            d.chunks_exact_mut(k).zip(g.chunks_exact(k)).zip(out.chunks_exact(k))
                        {
                            let total: f64 = grow.iter().sum();
                            for j in 0..k {
                                drow[j] += grow[j] - yrow[j].exp() * total;
                            }
                        }
                    },
                    len(*a),
                );
            }
            Op::Gather { a, idx } => {
                let k = self.nodes[*a].value.shape()[1];
                accumulate(
                    &mut grads[*a],
                    |d| {
                        for (i, &j) in idx.iter().enumerate() {
                            d[i * k + j] += g[i];
                        }
                    },
                    len(*a),
                );
            }
            Op::SumRows(a) => {
                let k = self.nodes[*a].value.shape()[1];
                accumulate(
                    &mut grads[*a],
                    |d| {
                        for (drow, gi) in d.chunks_exact_mut(k).zip(g) {
                            drow.iter_mut().for_each(|d| *d += gi);
                        }
                    },
                    len(*a),
                );
            }
            Op::Sum(a) => accumulate(&mut grads[*a], |d| d.iter_mut().for_each(|d| *d += g[0]), len(*a)),
            Op::Mean(a) => {
                let n = len(*a).max(1) as f64;
                accumulate(&mut grads[*a], |d| d.iter_mut().for_each(|d| *d += g[0] / n), len(*a));
            }
        }
    }
}
