use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    MaxRows(Var, Vec<usize>),
    Softmax(Var),
    LogSoftmax(Var),
    Pick(Var, Vec<usize>),
    Reshape(Var),
    Conv2d(Var, Var, Var),
    MaxPool2(Var, Vec<usize>),
}

/// Reverse-mode computation record.
///
/// Values are appended in evaluation order, so the node list is already a
/// topological order and backward walks it in reverse. Only nodes that
/// depend on a `requires_grad` leaf receive gradients.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Tensor>,
    grads: Vec<Option<Vec<f64>>>,
    ops: Vec<Op>,
    requires: Vec<bool>,
    backward_done: bool,
}

fn shape_err(op: &'static str, shapes: &[&[usize]]) -> Error {
    Error::Shape {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

fn matrix_dims(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [m, n] => Ok((m, n)),
        _ => Err(shape_err(op, &[t.shape()])),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires: bool) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.ops.push(op);
        self.requires.push(requires);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims(self.value(a), "matmul")?;
        let (k2, n) = matrix_dims(self.value(b), "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", &[self.value(a).shape(), self.value(b).shape()]));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let s = av[i * k + p];
                if s == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bb) in row.iter_mut().zip(brow) {
                    *o += s * bb;
                }
            }
        }
        let req = self.requires[a.0] || self.requires[b.0];
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), req))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", &[ta.shape(), tb.shape()]));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let req = self.requires[a.0] || self.requires[b.0];
        Ok(self.push(Tensor::from_parts(shape, out), Op::Add(a, b), req))
    }

    /// Adds a length-`n` row vector to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "add_row")?;
        let tb = self.value(bias);
        if tb.numel() != n || tb.shape().len() != 1 {
            return Err(shape_err("add_row", &[self.value(a).shape(), tb.shape()]));
        }
        let bv = tb.data();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(bv) {
                *o += b;
            }
        }
        let req = self.requires[a.0] || self.requires[bias.0];
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::AddRow(a, bias), req))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", &[ta.shape(), tb.shape()]));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let shape = ta.shape().to_vec();
        let req = self.requires[a.0] || self.requires[b.0];
        Ok(self.push(Tensor::from_parts(shape, out), Op::Mul(a, b), req))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let out = ta.data().iter().map(|x| x * c).collect();
        let shape = ta.shape().to_vec();
        let req = self.requires[a.0];
        self.push(Tensor::from_parts(shape, out), Op::Scale(a, c), req)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out = ta.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let shape = ta.shape().to_vec();
        let req = self.requires[a.0];
        self.push(Tensor::from_parts(shape, out), Op::Relu(a), req)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out = ta.data().iter().map(|x| x.exp()).collect();
        let shape = ta.shape().to_vec();
        let req = self.requires[a.0];
        self.push(Tensor::from_parts(shape, out), Op::Exp(a), req)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out = ta.data().iter().map(|x| x.ln()).collect();
        let shape = ta.shape().to_vec();
        let req = self.requires[a.0];
        self.push(Tensor::from_parts(shape, out), Op::Log(a), req)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let req = self.requires[a.0];
        self.push(Tensor::scalar(s), Op::Sum(a), req)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let req = self.requires[a.0];
        self.push(Tensor::scalar(s), Op::Mean(a), req)
    }

    /// Row sums of an `m x n` matrix, giving a length-`m` vector.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "sum_rows")?;
        let out = self.value(a).data().chunks(n).map(|r| r.iter().sum()).collect();
        let req = self.requires[a.0];
        Ok(self.push(Tensor::from_parts(vec![m], out), Op::SumRows(a), req))
    }

    /// Row maxima; ties resolve to the lowest column.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "max_rows")?;
        let mut arg = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m);
        for row in self.value(a).data().chunks(n) {
            let (j, v) = row
                .iter()
                .enumerate()
                .fold((0, row[0]), |(bj, bv), (j, &v)| if v > bv { (j, v) } else { (bj, bv) });
            arg.push(j);
            out.push(v);
        }
        let req = self.requires[a.0];
        Ok(self.push(Tensor::from_parts(vec![m], out), Op::MaxRows(a, arg), req))
    }

    /// Row-wise softmax with the row maximum subtracted before exponentiation.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "softmax")?;
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let req = self.requires[a.0];
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::Softmax(a), req))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "log_softmax")?;
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let req = self.requires[a.0];
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::LogSoftmax(a), req))
    }

    /// Selects column `index[i]` from row `i`.
    pub fn pick(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let (m, n) = matrix_dims(self.value(a), "pick")?;
        if index.len() != m {
            return Err(shape_err("pick", &[self.value(a).shape(), &[index.len()]]));
        }
        if let Some(&bad) = index.iter().find(|&&j| j >= n) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: n,
            });
        }
        let data = self.value(a).data();
        let out = index.iter().enumerate().map(|(i, &j)| data[i * n + j]).collect();
        let req = self.requires[a.0];
        Ok(self.push(Tensor::from_parts(vec![m], out), Op::Pick(a, index.to_vec()), req))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let req = self.requires[a.0];
        Ok(self.push(t, Op::Reshape(a), req))
    }

    /// Stride-1, unpadded 2-D convolution.
    ///
    /// `input` is `[batch, channels, height, width]`, `kernel` is
    /// `[out_channels, channels, kh, kw]`, `bias` is `[out_channels]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (ti, tk, tb) = (self.value(input), self.value(kernel), self.value(bias));
        let err = || shape_err("conv2d", &[ti.shape(), tk.shape(), tb.shape()]);
        let [bn, c, h, w] = *ti.shape() else {
            return Err(err());
        };
        let [o, c2, kh, kw] = *tk.shape() else {
            return Err(err());
        };
        if c != c2 || tb.shape() != [o] || kh > h || kw > w {
            return Err(err());
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let (x, k, b) = (ti.data(), tk.data(), tb.data());
        let mut out = vec![0.0; bn * o * oh * ow];
        for n in 0..bn {
            for oc in 0..o {
                let plane = &mut out[(n * o + oc) * oh * ow..(n * o + oc + 1) * oh * ow];
                plane.iter_mut().for_each(|v| *v = b[oc]);
                for ic in 0..c {
                    let xin = &x[(n * c + ic) * h * w..(n * c + ic + 1) * h * w];
                    let kern = &k[(oc * c + ic) * kh * kw..(oc * c + ic + 1) * kh * kw];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let kv = kern[ky * kw + kx];
                            for y in 0..oh {
                                let src = &xin[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                                let dst = &mut plane[y * ow..(y + 1) * ow];
                                for (d, s) in dst.iter_mut().zip(src) {
                                    *d += kv * s;
                                }
                            }
                        }
                    }
                }
            }
        }
        let req = self.requires[input.0] || self.requires[kernel.0] || self.requires[bias.0];
        Ok(self.push(
            Tensor::from_parts(vec![bn, o, oh, ow], out),
            Op::Conv2d(input, kernel, bias),
            req,
        ))
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let [bn, c, h, w] = *t.shape() else {
            return Err(shape_err("max_pool2", &[t.shape()]));
        };
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(shape_err("max_pool2", &[t.shape()]));
        }
        let x = t.data();
        let mut out = Vec::with_capacity(bn * c * oh * ow);
        let mut arg = Vec::with_capacity(bn * c * oh * ow);
        for plane in 0..bn * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = base + (2 * y) * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * y + dy) * w + 2 * xx + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    arg.push(best);
                }
            }
        }
        let req = self.requires[a.0];
        Ok(self.push(
            Tensor::from_parts(vec![bn, c, oh, ow], out),
            Op::MaxPool2(a, arg),
            req,
        ))
    }

    /// Clears every accumulated gradient so backward may run again.
    pub fn reset_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
        self.backward_done = false;
    }

    /// Propagates d(output)/d(node) to every node that requires gradient.
    ///
    /// Leaves that require gradient but are unreachable from `output` end
    /// with an all-zero gradient.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::DoubleBackward);
        }
        let out_val = &self.values[output.0];
        if !out_val.is_scalar() {
            return Err(Error::NonScalarOutput(out_val.shape().to_vec()));
        }
        self.backward_done = true;
        let Tape {
            values,
            grads,
            ops,
            requires,
            ..
        } = self;
        if requires[output.0] {
            grads[output.0] = Some(vec![1.0]);
        }
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            propagate(&ops[i], i, &g, values, grads, requires);
            grads[i] = Some(g);
        }
        for i in 0..=output.0 {
            if requires[i] && grads[i].is_none() && matches!(ops[i], Op::Leaf) {
                grads[i] = Some(vec![0.0; values[i].numel()]);
            }
        }
        Ok(())
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

fn buf<'a>(
    grads: &'a mut [Option<Vec<f64>>],
    requires: &[bool],
    values: &[Tensor],
    v: Var,
) -> Option<&'a mut Vec<f64>> {
    if !requires[v.0] {
        return None;
    }
    let n = values[v.0].numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn propagate(
    op: &Op,
    node: usize,
    g: &[f64],
    values: &[Tensor],
    grads: &mut [Option<Vec<f64>>],
    requires: &[bool],
) {
    let out = &values[node];
    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (ta, tb) = (&values[a.0], &values[b.0]);
            let (m, k) = (ta.shape()[0], ta.shape()[1]);
            let n = tb.shape()[1];
            if let Some(da) = buf(grads, requires, values, *a) {
                let bv = tb.data();
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &bv[p * n..(p + 1) * n];
                        da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            if let Some(db) = buf(grads, requires, values, *b) {
                let av = ta.data();
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let s = av[i * k + p];
                        if s == 0.0 {
                            continue;
                        }
                        for (d, &gg) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *d += s * gg;
                        }
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                if let Some(d) = buf(grads, requires, values, *v) {
                    d.iter_mut().zip(g).for_each(|(d, gg)| *d += gg);
                }
            }
        }
        Op::AddRow(a, bias) => {
            if let Some(d) = buf(grads, requires, values, *a) {
                d.iter_mut().zip(g).for_each(|(d, gg)| *d += gg);
            }
            let n = values[bias.0].numel();
            if let Some(d) = buf(grads, requires, values, *bias) {
                for row in g.chunks(n) {
                    d.iter_mut().zip(row).for_each(|(d, gg)| *d += gg);
                }
            }
        }
        Op::Mul(a, b) => {
            let (ta, tb) = (&values[a.0], &values[b.0]);
            if let Some(d) = buf(grads, requires, values, *a) {
                for ((d, gg), y) in d.iter_mut().zip(g).zip(tb.data()) {
                    *d += gg * y;
                }
            }
            if let Some(d) = buf(grads, requires, values, *b) {
                for ((d, gg), x) in d.iter_mut().zip(g).zip(ta.data()) {
                    *d += gg * x;
                }
            }
        }
        Op::Scale(a, c) => {
            if let Some(d) = buf(grads, requires, values, *a) {
                d.iter_mut().zip(g).for_each(|(d, gg)| *d += c * gg);
            }
        }
        Op::Relu(a) => {
            let x = &values[a.0];
            if let Some(d) = buf(grads, requires, values, *a) {
                for ((d, gg), xv) in d.iter_mut().zip(g).zip(x.data()) {
                    if *xv > 0.0 {
                        *d += gg;
                    }
                }
            }
        }
        Op::Exp(a) => {
            if let Some(d) = buf(grads, requires, values, *a) {
                for ((d, gg), y) in d.iter_mut().zip(g).zip(out.data()) {
                    *d += gg * y;
                }
            }
        }
        Op::Log(a) => {
            let x = &values[a.0];
            if let Some(d) = buf(grads, requires, values, *a) {
                for ((d, gg), xv) in d.iter_mut().zip(g).zip(x.data()) {
                    *d += gg / xv;
                }
            }
        }
        Op::Sum(a) => {
            if let Some(d) = buf(grads, requires, values, *a) {
                d.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Mean(a) => {
            let n = values[a.0].numel() as f64;
            if let Some(d) = buf(grads, requires, values, *a) {
                d.iter_mut().for_each(|d| *d += g[0] / n);
            }
        }
        Op::SumRows(a) => {
            let n = values[a.0].shape()[1];
            if let Some(d) = buf(grads, requires, values, *a) {
                for (row, gg) in d.chunks_mut(n).zip(g) {
                    row.iter_mut().for_each(|d| *d += gg);
                }
            }
        }
        Op::MaxRows(a, arg) => {
            let n = values[a.0].shape()[1];
            if let Some(d) = buf(grads, requires, values, *a) {
                for (i, (&j, gg)) in arg.iter().zip(g).enumerate() {
                    d[i * n + j] += gg;
                }
            }
        }
        Op::Softmax(a) => {
            let n = out.shape()[1];
            if let Some(d) = buf(grads, requires, values, *a) {
                for ((drow, grow), yrow) in d.chunks_mut(n).zip(g.chunks(n)).zip(out.data().chunks(n)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                    for ((d, gg), y) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += y * (gg - dot);
                    }
                }
            }
        }
        Op::LogSoftmax(a) => {
            let n = out.shape()[1];
            if let Some(d) = buf(grads, requires, values, *a) {
                for ((drow, grow), zrow) in d.chunks_mut(n).zip(g.chunks(n)).zip(out.data().chunks(n)) {
                    let total: f64 = grow.iter().sum();
                    for ((d, gg), z) in drow.iter_mut().zip(grow).zip(zrow) {
                        *d += gg - z.exp() * total;
                    }
                }
            }
        }
        Op::Pick(a, index) => {
            let n = values[a.0].shape()[1];
            if let Some(d) = buf(grads, requires, values, *a) {
                for (i, (&j, gg)) in index.iter().zip(g).enumerate() {
                    d[i * n + j] += gg;
                }
            }
        }
        Op::Reshape(a) => {
            if let Some(d) = buf(grads, requires, values, *a) {
                d.iter_mut().zip(g).for_each(|(d, gg)| *d += gg);
            }
        }
        Op::Conv2d(input, kernel, bias) => {
            let (ti, tk) = (&values[input.0], &values[kernel.0]);
            let [bn, c, h, w] = *ti.shape() else { unreachable!() };
            let [o, _, kh, kw] = *tk.shape() else { unreachable!() };
            let (oh, ow) = (out.shape()[2], out.shape()[3]);
            if let Some(db) = buf(grads, requires, values, *bias) {
                for n in 0..bn {
                    for oc in 0..o {
                        let plane = &g[(n * o + oc) * oh * ow..(n * o + oc + 1) * oh * ow];
                        db[oc] += plane.iter().sum::<f64>();
                    }
                }
            }
            if let Some(dk) = buf(grads, requires, values, *kernel) {
                let x = ti.data();
                for n in 0..bn {
                    for oc in 0..o {
                        let plane = &g[(n * o + oc) * oh * ow..(n * o + oc + 1) * oh * ow];
                        for ic in 0..c {
                            let xin = &x[(n * c + ic) * h * w..(n * c + ic + 1) * h * w];
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let mut acc = 0.0;
                                    for y in 0..oh {
                                        let src = &xin[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                                        let gr = &plane[y * ow..(y + 1) * ow];
                                        acc += src.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                                    }
                                    dk[((oc * c + ic) * kh + ky) * kw + kx] += acc;
                                }
                            }
                        }
                    }
                }
            }
            if let Some(dx) = buf(grads, requires, values, *input) {
                let k = tk.data();
                for n in 0..bn {
                    for oc in 0..o {
                        let plane = &g[(n * o + oc) * oh * ow..(n * o + oc + 1) * oh * ow];
                        for ic in 0..c {
                            let base = (n * c + ic) * h * w;
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let kv = k[((oc * c + ic) * kh + ky) * kw + kx];
                                    for y in 0..oh {
                                        let start = base + (y + ky) * w + kx;
                                        let dst = &mut dx[start..start + ow];
                                        let gr = &plane[y * ow..(y + 1) * ow];
                                        for (d, gg) in dst.iter_mut().zip(gr) {
                                            *d += kv * gg;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Op::MaxPool2(a, arg) => {
            if let Some(d) = buf(grads, requires, values, *a) {
                for (&idx, gg) in arg.iter().zip(g) {
                    d[idx] += gg;
                }
            }
        }
    }
}

/// L2 norm of the concatenated gradients of `params`.
pub fn grad_norm(tape: &Tape, params: &[Var]) -> Result<f64> {
    let mut sq = 0.0;
    for (i, &p) in params.iter().enumerate() {
        let g = tape.grad(p).ok_or(Error::MissingGrad(i))?;
        sq += g.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(sq.sqrt())
}
