//! Reverse-mode differentiation over a flat tape of 2-D double-precision
//! tensors. Forward values are computed eagerly as ops are recorded;
//! `backward` walks the tape in reverse accumulating gradients with
//! fixed-order summation, so results are bit-reproducible.

/// Index of a node on the tape.
pub type Id = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Leaf or constant; no backward.
    Input,
    MatMul(Id, Id),
    /// Elementwise add of same-shape tensors.
    Add(Id, Id),
    /// Adds a (1, cols) bias row to every row.
    AddBias(Id, Id),
    /// Elementwise product of same-shape tensors.
    Mul(Id, Id),
    Scale(Id, f64),
    Gelu(Id),
    /// Row-wise layer norm with (1, cols) gain and bias.
    LayerNorm(Id, Id, Id),
    SoftmaxRows(Id),
    Transpose(Id),
    ConcatRows(Vec<Id>),
    SliceRows(Id, usize),
    ConcatCols(Vec<Id>),
    SliceCols(Id, usize),
    /// out.data[i] = x.data[idx[i]].
    Gather(Id, Vec<usize>),
    /// out row i = x row rows[i].
    GatherRows(Id, Vec<usize>),
    /// Mean negative log-likelihood over (row, class) targets of a logits
    /// matrix; output is a 1x1 scalar.
    MeanNll(Id, Vec<(usize, usize)>),
}

const LN_EPS: f64 = 1e-5;

#[derive(Debug)]
pub struct Node {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
    op: Op,
}

impl Node {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: Id) -> &Node {
        &self.nodes[id]
    }

    pub fn data(&self, id: Id) -> &[f64] {
        &self.nodes[id].data
    }

    pub fn grad(&self, id: Id) -> &[f64] {
        &self.nodes[id].grad
    }

    pub fn scalar(&self, id: Id) -> f64 {
        debug_assert_eq!(self.nodes[id].len(), 1);
        self.nodes[id].data[0]
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<f64>, op: Op) -> Id {
        debug_assert_eq!(data.len(), rows * cols);
        let grad = vec![0.0; data.len()];
        self.nodes.push(Node {
            rows,
            cols,
            data,
            grad,
            op,
        });
        self.nodes.len() - 1
    }

    /// Records a leaf (parameter or constant input).
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Id {
        self.push(rows, cols, data, Op::Input)
    }

    pub fn matmul(&mut self, a: Id, b: Id) -> Id {
        let (m, k) = (self.nodes[a].rows, self.nodes[a].cols);
        let (k2, n) = (self.nodes[b].rows, self.nodes[b].cols);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut data = vec![0.0; m * n];
        matmul_into(&self.nodes[a].data, &self.nodes[b].data, m, k, n, &mut data);
        self.push(m, n, data, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Id, b: Id) -> Id {
        assert_eq!(self.nodes[a].rows, self.nodes[b].rows);
        assert_eq!(self.nodes[a].cols, self.nodes[b].cols);
        let data = self.nodes[a]
            .data
            .iter()
            .zip(&self.nodes[b].data)
            .map(|(x, y)| x + y)
            .collect();
        self.push(self.nodes[a].rows, self.nodes[a].cols, data, Op::Add(a, b))
    }

    pub fn add_bias(&mut self, a: Id, bias: Id) -> Id {
        let (m, n) = (self.nodes[a].rows, self.nodes[a].cols);
        assert_eq!(self.nodes[bias].rows, 1);
        assert_eq!(self.nodes[bias].cols, n);
        let mut data = self.nodes[a].data.clone();
        for row in data.chunks_exact_mut(n) {
            for (v, &b) in row.iter_mut().zip(&self.nodes[bias].data) {
                *v += b;
            }
        }
        self.push(m, n, data, Op::AddBias(a, bias))
    }

    pub fn mul(&mut self, a: Id, b: Id) -> Id {
        assert_eq!(self.nodes[a].len(), self.nodes[b].len());
        let data = self.nodes[a]
            .data
            .iter()
            .zip(&self.nodes[b].data)
            .map(|(x, y)| x * y)
            .collect();
        self.push(self.nodes[a].rows, self.nodes[a].cols, data, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Id, k: f64) -> Id {
        let data = self.nodes[a].data.iter().map(|&v| v * k).collect();
        self.push(self.nodes[a].rows, self.nodes[a].cols, data, Op::Scale(a, k))
    }

    pub fn gelu(&mut self, a: Id) -> Id {
        let data = self.nodes[a].data.iter().map(|&v| gelu(v)).collect();
        self.push(self.nodes[a].rows, self.nodes[a].cols, data, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: Id, gamma: Id, beta: Id) -> Id {
        let (m, n) = (self.nodes[x].rows, self.nodes[x].cols);
        assert_eq!(self.nodes[gamma].cols, n);
        assert_eq!(self.nodes[beta].cols, n);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &self.nodes[x].data[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for j in 0..n {
                let xhat = (row[j] - mean) * inv;
                data[i * n + j] = self.nodes[gamma].data[j] * xhat + self.nodes[beta].data[j];
            }
        }
        self.push(m, n, data, Op::LayerNorm(x, gamma, beta))
    }

    pub fn softmax_rows(&mut self, a: Id) -> Id {
        let (m, n) = (self.nodes[a].rows, self.nodes[a].cols);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            softmax_row(
                &self.nodes[a].data[i * n..(i + 1) * n],
                &mut data[i * n..(i + 1) * n],
            );
        }
        self.push(m, n, data, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Id) -> Id {
        let (m, n) = (self.nodes[a].rows, self.nodes[a].cols);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.nodes[a].data[i * n + j];
            }
        }
        self.push(n, m, data, Op::Transpose(a))
    }

    pub fn concat_rows(&mut self, parts: &[Id]) -> Id {
        assert!(!parts.is_empty());
        let cols = self.nodes[parts[0]].cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            assert_eq!(self.nodes[p].cols, cols);
            rows += self.nodes[p].rows;
            data.extend_from_slice(&self.nodes[p].data);
        }
        self.push(rows, cols, data, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Id, start: usize, len: usize) -> Id {
        let (m, n) = (self.nodes[a].rows, self.nodes[a].cols);
        assert!(start + len <= m);
        let data = self.nodes[a].data[start * n..(start + len) * n].to_vec();
        self.push(len, n, data, Op::SliceRows(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Id]) -> Id {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0]].rows;
        let total: usize = parts.iter().map(|&p| self.nodes[p].cols).sum();
        let mut data = vec![0.0; rows * total];
        let mut at = 0usize;
        for &p in parts {
            assert_eq!(self.nodes[p].rows, rows);
            let w = self.nodes[p].cols;
            for i in 0..rows {
                data[i * total + at..i * total + at + w]
                    .copy_from_slice(&self.nodes[p].data[i * w..(i + 1) * w]);
            }
            at += w;
        }
        self.push(rows, total, data, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Id, start: usize, len: usize) -> Id {
        let (m, n) = (self.nodes[a].rows, self.nodes[a].cols);
        assert!(start + len <= n);
        let mut data = vec![0.0; m * len];
        for i in 0..m {
            data[i * len..(i + 1) * len]
                .copy_from_slice(&self.nodes[a].data[i * n + start..i * n + start + len]);
        }
        self.push(m, len, data, Op::SliceCols(a, start))
    }

    pub fn gather(&mut self, a: Id, idx: Vec<usize>, rows: usize, cols: usize) -> Id {
        assert_eq!(idx.len(), rows * cols);
        let src = &self.nodes[a].data;
        let data = idx.iter().map(|&i| src[i]).collect();
        self.push(rows, cols, data, Op::Gather(a, idx))
    }

    pub fn gather_rows(&mut self, a: Id, rows: Vec<usize>) -> Id {
        let n = self.nodes[a].cols;
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in &rows {
            data.extend_from_slice(&self.nodes[a].data[r * n..(r + 1) * n]);
        }
        self.push(rows.len(), n, data, Op::GatherRows(a, rows))
    }

    /// Mean negative log-likelihood of `targets = (row, class)` under the
    /// row-wise softmax of `logits`.
    pub fn mean_nll(&mut self, logits: Id, targets: Vec<(usize, usize)>) -> Id {
        assert!(!targets.is_empty());
        let (m, n) = (self.nodes[logits].rows, self.nodes[logits].cols);
        let mut loss = 0.0;
        for &(row, cls) in &targets {
            assert!(row < m && cls < n);
            let r = &self.nodes[logits].data[row * n..(row + 1) * n];
            let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + r.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - r[cls];
        }
        loss /= targets.len() as f64;
        self.push(1, 1, vec![loss], Op::MeanNll(logits, targets))
    }

    /// Accumulates gradients of `loss` (a 1x1 node) into every node.
    pub fn backward(&mut self, loss: Id) {
        assert_eq!(self.nodes[loss].len(), 1, "loss must be scalar");
        for n in self.nodes.iter_mut() {
            n.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[loss].grad[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            if self.nodes[i].grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Input => {}
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a].rows, self.nodes[a].cols);
                    let n = self.nodes[b].cols;
                    let g = self.nodes[i].grad.clone();
                    {
                        // dA[i,p] += sum_j g[i,j] * B[p,j]
                        let bdat = &self.nodes[b].data;
                        let mut ga = vec![0.0; m * k];
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                let brow = &bdat[p * n..(p + 1) * n];
                                let mut s = 0.0;
                                for (gv, bv) in grow.iter().zip(brow) {
                                    s += gv * bv;
                                }
                                ga[r * k + p] = s;
                            }
                        }
                        for (dst, src) in self.nodes[a].grad.iter_mut().zip(&ga) {
                            *dst += src;
                        }
                    }
                    {
                        // dB[p,j] += sum_i A[i,p] * g[i,j]
                        let adat = self.nodes[a].data.clone();
                        let gb = &mut self.nodes[b].grad;
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                let av = adat[r * k + p];
                                if av != 0.0 {
                                    let dst = &mut gb[p * n..(p + 1) * n];
                                    for (d, gv) in dst.iter_mut().zip(grow) {
                                        *d += av * gv;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    let g = self.nodes[i].grad.clone();
                    for (dst, src) in self.nodes[a].grad.iter_mut().zip(&g) {
                        *dst += src;
                    }
                    for (dst, src) in self.nodes[b].grad.iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::AddBias(a, bias) => {
                    let n = self.nodes[i].cols;
                    let g = self.nodes[i].grad.clone();
                    for (dst, src) in self.nodes[a].grad.iter_mut().zip(&g) {
                        *dst += src;
                    }
                    for row in g.chunks_exact(n) {
                        for (dst, src) in self.nodes[bias].grad.iter_mut().zip(row) {
                            *dst += src;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let g = self.nodes[i].grad.clone();
                    let bdat = self.nodes[b].data.clone();
                    for ((dst, gv), bv) in self.nodes[a].grad.iter_mut().zip(&g).zip(&bdat) {
                        *dst += gv * bv;
                    }
                    let adat = self.nodes[a].data.clone();
                    for ((dst, gv), av) in self.nodes[b].grad.iter_mut().zip(&g).zip(&adat) {
                        *dst += gv * av;
                    }
                }
                Op::Scale(a, kf) => {
                    let g = self.nodes[i].grad.clone();
                    for (dst, gv) in self.nodes[a].grad.iter_mut().zip(&g) {
                        *dst += kf * gv;
                    }
                }
                Op::Gelu(a) => {
                    let g = self.nodes[i].grad.clone();
                    let x = self.nodes[a].data.clone();
                    for ((dst, gv), xv) in self.nodes[a].grad.iter_mut().zip(&g).zip(&x) {
                        *dst += gv * gelu_grad(*xv);
                    }
                }
                Op::LayerNorm(x, gamma, beta) => {
                    let (m, n) = (self.nodes[x].rows, self.nodes[x].cols);
                    let g = self.nodes[i].grad.clone();
                    let xdat = self.nodes[x].data.clone();
                    let gam = self.nodes[gamma].data.clone();
                    for r in 0..m {
                        let row = &xdat[r * n..(r + 1) * n];
                        let grow = &g[r * n..(r + 1) * n];
                        let mean = row.iter().sum::<f64>() / n as f64;
                        let var =
                            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        let gy: Vec<f64> = grow.iter().zip(&gam).map(|(g, w)| g * w).collect();
                        let mean_gy = gy.iter().sum::<f64>() / n as f64;
                        let mean_gy_xhat =
                            gy.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in 0..n {
                            self.nodes[x].grad[r * n + j] +=
                                inv * (gy[j] - mean_gy - xhat[j] * mean_gy_xhat);
                            self.nodes[gamma].grad[j] += grow[j] * xhat[j];
                            self.nodes[beta].grad[j] += grow[j];
                        }
                    }
                }
                Op::SoftmaxRows(a) => {
                    let (m, n) = (self.nodes[i].rows, self.nodes[i].cols);
                    let g = self.nodes[i].grad.clone();
                    let y = self.nodes[i].data.clone();
                    for r in 0..m {
                        let yrow = &y[r * n..(r + 1) * n];
                        let grow = &g[r * n..(r + 1) * n];
                        let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            self.nodes[a].grad[r * n + j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (m, n) = (self.nodes[i].rows, self.nodes[i].cols);
                    let g = self.nodes[i].grad.clone();
                    for r in 0..m {
                        for c in 0..n {
                            self.nodes[a].grad[c * m + r] += g[r * n + c];
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let g = self.nodes[i].grad.clone();
                    let mut at = 0usize;
                    for &p in &parts {
                        let len = self.nodes[p].len();
                        for (dst, src) in self.nodes[p].grad.iter_mut().zip(&g[at..at + len]) {
                            *dst += src;
                        }
                        at += len;
                    }
                }
                Op::SliceRows(a, start) => {
                    let n = self.nodes[i].cols;
                    let g = self.nodes[i].grad.clone();
                    let base = start * n;
                    for (off, src) in g.iter().enumerate() {
                        self.nodes[a].grad[base + off] += src;
                    }
                }
                Op::ConcatCols(parts) => {
                    let (m, total) = (self.nodes[i].rows, self.nodes[i].cols);
                    let g = self.nodes[i].grad.clone();
                    let mut at = 0usize;
                    for &p in &parts {
                        let w = self.nodes[p].cols;
                        for r in 0..m {
                            for c in 0..w {
                                self.nodes[p].grad[r * w + c] += g[r * total + at + c];
                            }
                        }
                        at += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (m, len) = (self.nodes[i].rows, self.nodes[i].cols);
                    let n = self.nodes[a].cols;
                    let g = self.nodes[i].grad.clone();
                    for r in 0..m {
                        for c in 0..len {
                            self.nodes[a].grad[r * n + start + c] += g[r * len + c];
                        }
                    }
                }
                Op::Gather(a, idx) => {
                    let g = self.nodes[i].grad.clone();
                    for (&src_idx, gv) in idx.iter().zip(&g) {
                        self.nodes[a].grad[src_idx] += gv;
                    }
                }
                Op::GatherRows(a, rows) => {
                    let n = self.nodes[i].cols;
                    let g = self.nodes[i].grad.clone();
                    for (out_r, &src_r) in rows.iter().enumerate() {
                        for c in 0..n {
                            self.nodes[a].grad[src_r * n + c] += g[out_r * n + c];
                        }
                    }
                }
                Op::MeanNll(logits, targets) => {
                    let n = self.nodes[logits].cols;
                    let gout = self.nodes[i].grad[0];
                    let scale = gout / targets.len() as f64;
                    let ldat = self.nodes[logits].data.clone();
                    for &(row, cls) in &targets {
                        let r = &ldat[row * n..(row + 1) * n];
                        let mut probs = vec![0.0; n];
                        softmax_row(r, &mut probs);
                        for j in 0..n {
                            let delta = if j == cls { 1.0 } else { 0.0 };
                            self.nodes[logits].grad[row * n + j] += scale * (probs[j] - delta);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Central finite difference of a scalar-valued tape program with
    /// respect to one input coordinate.
    fn fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize, h: f64) -> f64 {
        let mut plus = x.to_vec();
        plus[i] += h;
        let mut minus = x.to_vec();
        minus[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    #[test]
    fn linear_map_gradient_is_exact() {
        // loss = sum(W x): gradients of a purely linear map match central
        // differences to roundoff.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = rand_vec(12, &mut rng);
        let x = rand_vec(4, &mut rng);
        let eval = |wv: &[f64]| {
            let mut t = Tape::new();
            let wid = t.input(3, 4, wv.to_vec());
            let xid = t.input(4, 1, x.clone());
            let y = t.matmul(wid, xid);
            let ones = t.input(1, 3, vec![1.0; 3]);
            let s = t.matmul(ones, y);
            t.scalar(s)
        };
        let mut t = Tape::new();
        let wid = t.input(3, 4, w.clone());
        let xid = t.input(4, 1, x.clone());
        let y = t.matmul(wid, xid);
        let ones = t.input(1, 3, vec![1.0; 3]);
        let s = t.matmul(ones, y);
        t.backward(s);
        for i in 0..w.len() {
            let num = fd(eval, &w, i, 1e-4);
            let ana = t.grad(wid)[i];
            assert!(
                (num - ana).abs() / num.abs().max(1.0) < 1e-8,
                "coord {i}: {num} vs {ana}"
            );
        }
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        // A small program exercising every differentiable op.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = rand_vec(24, &mut rng);
        let gamma = rand_vec(4, &mut rng);
        let beta = rand_vec(4, &mut rng);
        let build = |pv: &[f64]| -> (Tape, Id, Id) {
            let mut t = Tape::new();
            let pid = t.input(6, 4, pv.to_vec());
            let g = t.input(1, 4, gamma.clone());
            let b = t.input(1, 4, beta.clone());
            let ln = t.layer_norm(pid, g, b);
            let act = t.gelu(ln);
            let top = t.slice_rows(act, 0, 3);
            let bottom = t.slice_rows(act, 3, 3);
            let bt = t.transpose(bottom);
            let scores = t.matmul(top, bt);
            let probs = t.softmax_rows(scores);
            let mixed = t.matmul(probs, bottom);
            let left = t.slice_cols(mixed, 0, 2);
            let right = t.slice_cols(mixed, 2, 2);
            let swapped = t.concat_cols(&[right, left]);
            let both = t.concat_rows(&[swapped, top]);
            let gathered = t.gather_rows(both, vec![0, 2, 4, 1]);
            let scaled = t.scale(gathered, 0.7);
            let prod = t.mul(scaled, scaled);
            let flat = t.gather(prod, (0..16).rev().collect(), 4, 4);
            let loss = t.mean_nll(flat, vec![(0, 1), (2, 3), (3, 0)]);
            (t, pid, loss)
        };
        let (mut t, pid, loss) = build(&p);
        t.backward(loss);
        let analytic = t.grad(pid).to_vec();
        let eval = |pv: &[f64]| {
            let (t, _, loss) = build(pv);
            t.scalar(loss)
        };
        for i in 0..p.len() {
            let num = fd(eval, &p, i, 1e-5);
            let rel = (num - analytic[i]).abs() / num.abs().max(analytic[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "coord {i}: fd {num} vs analytic {}", analytic[i]);
        }
    }

    #[test]
    fn mean_nll_uniform_logits_is_log_vocab() {
        let mut t = Tape::new();
        let logits = t.input(2, 50, vec![0.0; 100]);
        let loss = t.mean_nll(logits, vec![(0, 3), (1, 47)]);
        assert!((t.scalar(loss) - (50f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn mean_nll_decreases_with_correct_logit_margin() {
        let mut prev = f64::INFINITY;
        for margin in [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 24.0] {
            let mut t = Tape::new();
            let mut row = vec![0.0; 10];
            row[4] = margin;
            let logits = t.input(1, 10, row);
            let loss = t.mean_nll(logits, vec![(0, 4)]);
            let l = t.scalar(loss);
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn add_bias_accumulates_rowwise() {
        let mut t = Tape::new();
        let a = t.input(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t.input(1, 3, vec![0.5, -0.5, 1.0]);
        let out = t.add_bias(a, b);
        assert_eq!(t.data(out), &[1.5, 1.5, 4.0, 4.5, 4.5, 7.0]);
        let ones = t.input(3, 1, vec![1.0; 3]);
        let col = t.matmul(out, ones);
        let onesr = t.input(1, 2, vec![1.0; 2]);
        let s = t.matmul(onesr, col);
        t.backward(s);
        assert_eq!(t.grad(b), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = Tape::new();
        let a = t.input(5, 7, rand_vec(35, &mut rng));
        let s = t.softmax_rows(a);
        for row in t.data(s).chunks_exact(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
