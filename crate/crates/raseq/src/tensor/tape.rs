use super::{Real, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// LSTM weight handles: `w` projects the input, `u` the previous hidden
/// state, both into the stacked pre-activations of the four gates
/// (order: input, forget, output, candidate).
#[derive(Debug, Clone, Copy)]
pub struct LstmGates {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    /// `[m×k] · [k×n] -> [m×n]`
    MatMul {
        a: Var,
        b: Var,
    },
    /// `[r×c] · [c] -> [r]`
    MatVec {
        w: Var,
        x: Var,
    },
    /// `m^T · x`: `[r×c]`, `[r] -> [c]`
    MatVecT {
        m: Var,
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Tanh {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    /// Vectors glued end to end.
    Concat {
        parts: Vec<Var>,
    },
    /// `s` vectors of length `c` stacked into `[s×c]`.
    Stack {
        parts: Vec<Var>,
    },
    Slice {
        x: Var,
        start: usize,
    },
    /// Zero-padded slice: reads `x[start..start+len]` where indexes outside
    /// `[0, valid)` yield zero.
    Window {
        x: Var,
        start: isize,
        valid: usize,
    },
    /// Row `index` of a matrix.
    Row {
        m: Var,
        index: usize,
    },
    /// Softmax over the first `valid` entries; the rest are exactly zero.
    Softmax {
        x: Var,
        valid: usize,
    },
    /// `-ln(probs[target])`.
    Nll {
        probs: Var,
        target: usize,
    },
    Dot {
        a: Var,
        b: Var,
    },
    Sum {
        x: Var,
    },
    Scale {
        x: Var,
        factor: F,
    },
}

struct Node<F> {
    op: Op<F>,
    shape: Vec<usize>,
    val: Vec<F>,
    grad: Vec<F>,
}

/// Records operations in execution order so that one reverse sweep
/// propagates gradients from a scalar loss to every leaf. Gradients of a
/// value used several times accumulate additively.
pub struct Tape<F = f32> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<F>, shape: Vec<usize>, val: Vec<F>) -> Var {
        self.nodes.push(Node {
            op,
            shape,
            val,
            grad: Vec::new(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor<F>) -> Var {
        let Tensor { shape, data } = t;
        self.push(Op::Leaf, shape, data)
    }

    pub fn leaf_vector(&mut self, data: Vec<F>) -> Var {
        let n = data.len();
        self.push(Op::Leaf, vec![n], data)
    }

    pub fn zero_vector(&mut self, len: usize) -> Var {
        self.push(Op::Leaf, vec![len], vec![F::ZERO; len])
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.nodes[v.0].val
    }

    pub fn value_tensor(&self, v: Var) -> Tensor<F> {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].val.clone())
            .expect("node shapes are consistent by construction")
    }

    /// Gradient of the last `backward` loss w.r.t. `v`; empty before any
    /// backward pass.
    pub fn grad(&self, v: Var) -> &[F] {
        &self.nodes[v.0].grad
    }

    fn rows_cols(&self, v: Var) -> (usize, usize) {
        let s = &self.nodes[v.0].shape;
        match s.len() {
            1 => (s[0], 1),
            _ => (s[0], s[1]),
        }
    }

    fn expect_vector(&self, v: Var, what: &str) -> Result<usize> {
        let s = &self.nodes[v.0].shape;
        if s.len() != 1 {
            return Err(Error::Dimension(format!(
                "{what} must be a vector, got shape {s:?}"
            )));
        }
        Ok(s[0])
    }

    // ── forward ops ─────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.rows_cols(a);
        let (k2, n) = self.rows_cols(b);
        if self.nodes[a.0].shape.len() != 2 || self.nodes[b.0].shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "matmul expects matrices, got {:?} and {:?}",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        let av = &self.nodes[a.0].val;
        let bv = &self.nodes[b.0].val;
        let mut out = vec![F::ZERO; m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            for (p, &apv) in arow.iter().enumerate() {
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bval) in orow.iter_mut().zip(brow.iter()) {
                    *o = *o + apv * bval;
                }
            }
        }
        Ok(self.push(Op::MatMul { a, b }, vec![m, n], out))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (r, c) = self.rows_cols(w);
        let xn = self.expect_vector(x, "matvec input")?;
        if self.nodes[w.0].shape.len() != 2 || c != xn {
            return Err(Error::Dimension(format!(
                "matvec shapes disagree: {:?} x {:?}",
                self.nodes[w.0].shape, self.nodes[x.0].shape
            )));
        }
        let wv = &self.nodes[w.0].val;
        let xv = &self.nodes[x.0].val;
        let mut out = vec![F::ZERO; r];
        for (o, wrow) in out.iter_mut().zip(wv.chunks_exact(c)) {
            let mut acc = F::ZERO;
            for (&wj, &xj) in wrow.iter().zip(xv.iter()) {
                acc = acc + wj * xj;
            }
            *o = acc;
        }
        Ok(self.push(Op::MatVec { w, x }, vec![r], out))
    }

    /// `m^T x`: weighted sum of matrix rows with weights `x`.
    pub fn matvec_t(&mut self, m: Var, x: Var) -> Result<Var> {
        let (r, c) = self.rows_cols(m);
        let xn = self.expect_vector(x, "matvec_t input")?;
        if self.nodes[m.0].shape.len() != 2 || r != xn {
            return Err(Error::Dimension(format!(
                "matvec_t shapes disagree: {:?}^T x {:?}",
                self.nodes[m.0].shape, self.nodes[x.0].shape
            )));
        }
        let mv = &self.nodes[m.0].val;
        let xv = &self.nodes[x.0].val;
        let mut out = vec![F::ZERO; c];
        for (row, &xi) in mv.chunks_exact(c).zip(xv.iter()) {
            for (o, &mij) in out.iter_mut().zip(row.iter()) {
                *o = *o + xi * mij;
            }
        }
        Ok(self.push(Op::MatVecT { m, x }, vec![c], out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::Dimension(format!(
                "add shapes disagree: {:?} vs {:?}",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        let out: Vec<F> = self.nodes[a.0]
            .val
            .iter()
            .zip(self.nodes[b.0].val.iter())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(Op::Add { a, b }, shape, out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::Dimension(format!(
                "mul shapes disagree: {:?} vs {:?}",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        let out: Vec<F> = self.nodes[a.0]
            .val
            .iter()
            .zip(self.nodes[b.0].val.iter())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(Op::Mul { a, b }, shape, out))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out: Vec<F> = self.nodes[x.0].val.iter().map(|v| v.tanh()).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(Op::Tanh { x }, shape, out)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out: Vec<F> = self.nodes[x.0]
            .val
            .iter()
            .map(|&v| F::ONE / (F::ONE + (-v).exp()))
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(Op::Sigmoid { x }, shape, out)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat of zero vectors".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            self.expect_vector(p, "concat part")?;
            out.extend_from_slice(&self.nodes[p.0].val);
        }
        let n = out.len();
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            vec![n],
            out,
        ))
    }

    /// Stack equal-length vectors into a matrix, one vector per row.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Dimension("stack of zero rows".into()));
        }
        let c = self.expect_vector(parts[0], "stack row")?;
        let mut out = Vec::with_capacity(parts.len() * c);
        for &p in parts {
            let n = self.expect_vector(p, "stack row")?;
            if n != c {
                return Err(Error::Dimension(format!(
                    "stack rows disagree in length: {c} vs {n}"
                )));
            }
            out.extend_from_slice(&self.nodes[p.0].val);
        }
        Ok(self.push(
            Op::Stack {
                parts: parts.to_vec(),
            },
            vec![parts.len(), c],
            out,
        ))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.expect_vector(x, "slice input")?;
        if start + len > n {
            return Err(Error::Dimension(format!(
                "slice {start}..{} out of range for vector of length {n}",
                start + len
            )));
        }
        let out = self.nodes[x.0].val[start..start + len].to_vec();
        Ok(self.push(Op::Slice { x, start }, vec![len], out))
    }

    /// Zero-padded window: entry `p` is `x[start+p]` when `0 <= start+p <
    /// valid`, else zero. `valid` caps the readable prefix so padded tails
    /// of a batch row act like out-of-range positions.
    pub fn window(&mut self, x: Var, start: isize, len: usize, valid: usize) -> Result<Var> {
        let n = self.expect_vector(x, "window input")?;
        if valid > n {
            return Err(Error::Dimension(format!(
                "window valid prefix {valid} exceeds vector length {n}"
            )));
        }
        let xv = &self.nodes[x.0].val;
        let mut out = vec![F::ZERO; len];
        for (p, o) in out.iter_mut().enumerate() {
            let idx = start + p as isize;
            if idx >= 0 && (idx as usize) < valid {
                *o = xv[idx as usize];
            }
        }
        Ok(self.push(Op::Window { x, start, valid }, vec![len], out))
    }

    pub fn row(&mut self, m: Var, index: usize) -> Result<Var> {
        let (r, c) = self.rows_cols(m);
        if self.nodes[m.0].shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "row lookup expects a matrix, got {:?}",
                self.nodes[m.0].shape
            )));
        }
        if index >= r {
            return Err(Error::Contract(format!(
                "row index {index} out of range for {r} rows"
            )));
        }
        let out = self.nodes[m.0].val[index * c..(index + 1) * c].to_vec();
        Ok(self.push(Op::Row { m, index }, vec![c], out))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let n = self.expect_vector(x, "softmax input")?;
        self.softmax_masked(x, n)
    }

    /// Softmax over the first `valid` entries; positions `valid..` get
    /// exactly zero weight (the minus-infinity-score convention for padding).
    pub fn softmax_masked(&mut self, x: Var, valid: usize) -> Result<Var> {
        let n = self.expect_vector(x, "softmax input")?;
        if n == 0 || valid == 0 {
            return Err(Error::Dimension("softmax over an empty vector".into()));
        }
        if valid > n {
            return Err(Error::Dimension(format!(
                "softmax valid prefix {valid} exceeds vector length {n}"
            )));
        }
        let xv = &self.nodes[x.0].val;
        if xv[..valid].iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("softmax input is not finite".into()));
        }
        let mut max = xv[0];
        for &v in &xv[1..valid] {
            max = max.maximum(v);
        }
        let mut out = vec![F::ZERO; n];
        let mut denom = F::ZERO;
        for i in 0..valid {
            let e = (xv[i] - max).exp();
            out[i] = e;
            denom = denom + e;
        }
        for o in &mut out[..valid] {
            *o = *o / denom;
        }
        Ok(self.push(Op::Softmax { x, valid }, vec![n], out))
    }

    /// Negative log-likelihood of one entry of a probability vector.
    pub fn nll(&mut self, probs: Var, target: usize) -> Result<Var> {
        let n = self.expect_vector(probs, "nll probabilities")?;
        if target >= n {
            return Err(Error::Contract(format!(
                "nll target {target} out of range for {n} classes"
            )));
        }
        let p = self.nodes[probs.0].val[target];
        if !p.is_finite() || p.to_f64() <= 0.0 {
            return Err(Error::Numeric(format!(
                "nll of non-positive probability {p} at class {target}"
            )));
        }
        let loss = -p.ln();
        Ok(self.push(Op::Nll { probs, target }, vec![1], vec![loss]))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let an = self.expect_vector(a, "dot lhs")?;
        let bn = self.expect_vector(b, "dot rhs")?;
        if an != bn {
            return Err(Error::Dimension(format!(
                "dot lengths disagree: {an} vs {bn}"
            )));
        }
        let mut acc = F::ZERO;
        for (&x, &y) in self.nodes[a.0].val.iter().zip(self.nodes[b.0].val.iter()) {
            acc = acc + x * y;
        }
        Ok(self.push(Op::Dot { a, b }, vec![1], vec![acc]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let mut acc = F::ZERO;
        for &v in &self.nodes[x.0].val {
            acc = acc + v;
        }
        self.push(Op::Sum { x }, vec![1], vec![acc])
    }

    pub fn scale(&mut self, x: Var, factor: F) -> Var {
        let out: Vec<F> = self.nodes[x.0].val.iter().map(|&v| v * factor).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(Op::Scale { x, factor }, shape, out)
    }

    /// One step of a four-gate LSTM. Gate pre-activations are
    /// `w·input + u·hidden + b`, split in gate order i, f, o, g;
    /// `cell' = f∘cell + i∘g`, `hidden' = o∘tanh(cell')`.
    pub fn lstm_cell(
        &mut self,
        gates: &LstmGates,
        input: Var,
        hidden: Var,
        cell: Var,
    ) -> Result<(Var, Var)> {
        let (four_h, _) = self.rows_cols(gates.w);
        let h = four_h / 4;
        if four_h != 4 * h || self.rows_cols(gates.u) != (4 * h, h) {
            return Err(Error::Dimension(format!(
                "lstm gate weights disagree: w {:?}, u {:?}",
                self.nodes[gates.w.0].shape, self.nodes[gates.u.0].shape
            )));
        }
        if self.expect_vector(hidden, "lstm hidden")? != h
            || self.expect_vector(cell, "lstm cell")? != h
        {
            return Err(Error::Dimension(format!(
                "lstm state length must be {h}, got hidden {:?} cell {:?}",
                self.nodes[hidden.0].shape, self.nodes[cell.0].shape
            )));
        }
        let wx = self.matvec(gates.w, input)?;
        let uh = self.matvec(gates.u, hidden)?;
        let lin = self.add(wx, uh)?;
        let pre = self.add(lin, gates.b)?;
        let i_pre = self.slice(pre, 0, h)?;
        let f_pre = self.slice(pre, h, h)?;
        let o_pre = self.slice(pre, 2 * h, h)?;
        let g_pre = self.slice(pre, 3 * h, h)?;
        let i_gate = self.sigmoid(i_pre);
        let f_gate = self.sigmoid(f_pre);
        let o_gate = self.sigmoid(o_pre);
        let g_cand = self.tanh(g_pre);
        let keep = self.mul(f_gate, cell)?;
        let write = self.mul(i_gate, g_cand)?;
        let cell_new = self.add(keep, write)?;
        let cell_act = self.tanh(cell_new);
        let hidden_new = self.mul(o_gate, cell_act)?;
        Ok((hidden_new, cell_new))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Every node's gradient buffer is
    /// reset first, so repeated calls do not accumulate across losses.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].val.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        for node in &mut self.nodes {
            node.grad.clear();
            node.grad.resize(node.val.len(), F::ZERO);
        }
        self.nodes[loss.0].grad[0] = F::ONE;

        for id in (0..=loss.0).rev() {
            // Take the node's gradient out to appease the borrow checker;
            // a node never feeds into itself.
            let g = std::mem::take(&mut self.nodes[id].grad);
            match &self.nodes[id].op {
                Op::Leaf => {}
                &Op::MatMul { a, b } => {
                    let (m, k) = self.rows_cols(a);
                    let (_, n) = self.rows_cols(b);
                    let (av, bv) = (self.nodes[a.0].val.clone(), self.nodes[b.0].val.clone());
                    {
                        let ga = &mut self.nodes[a.0].grad;
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = F::ZERO;
                                for j in 0..n {
                                    acc = acc + g[i * n + j] * bv[p * n + j];
                                }
                                ga[i * k + p] = ga[i * k + p] + acc;
                            }
                        }
                    }
                    let gb = &mut self.nodes[b.0].grad;
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = F::ZERO;
                            for i in 0..m {
                                acc = acc + av[i * k + p] * g[i * n + j];
                            }
                            gb[p * n + j] = gb[p * n + j] + acc;
                        }
                    }
                }
                &Op::MatVec { w, x } => {
                    let (_, c) = self.rows_cols(w);
                    let (wv, xv) = (self.nodes[w.0].val.clone(), self.nodes[x.0].val.clone());
                    {
                        let gw = &mut self.nodes[w.0].grad;
                        for (gi, grow) in g.iter().zip(gw.chunks_exact_mut(c)) {
                            for (gwj, &xj) in grow.iter_mut().zip(xv.iter()) {
                                *gwj = *gwj + *gi * xj;
                            }
                        }
                    }
                    let gx = &mut self.nodes[x.0].grad;
                    for (gi, wrow) in g.iter().zip(wv.chunks_exact(c)) {
                        for (gxj, &wj) in gx.iter_mut().zip(wrow.iter()) {
                            *gxj = *gxj + *gi * wj;
                        }
                    }
                }
                &Op::MatVecT { m, x } => {
                    let (_, c) = self.rows_cols(m);
                    let (mv, xv) = (self.nodes[m.0].val.clone(), self.nodes[x.0].val.clone());
                    {
                        let gm = &mut self.nodes[m.0].grad;
                        for (grow, &xi) in gm.chunks_exact_mut(c).zip(xv.iter()) {
                            for (gmj, &gj) in grow.iter_mut().zip(g.iter()) {
                                *gmj = *gmj + xi * gj;
                            }
                        }
                    }
                    let gx = &mut self.nodes[x.0].grad;
                    for (gxi, mrow) in gx.iter_mut().zip(mv.chunks_exact(c)) {
                        let mut acc = F::ZERO;
                        for (&mij, &gj) in mrow.iter().zip(g.iter()) {
                            acc = acc + mij * gj;
                        }
                        *gxi = *gxi + acc;
                    }
                }
                &Op::Add { a, b } => {
                    for (ga, &gi) in self.nodes[a.0].grad.iter_mut().zip(g.iter()) {
                        *ga = *ga + gi;
                    }
                    for (gb, &gi) in self.nodes[b.0].grad.iter_mut().zip(g.iter()) {
                        *gb = *gb + gi;
                    }
                }
                &Op::Mul { a, b } => {
                    let (av, bv) = (self.nodes[a.0].val.clone(), self.nodes[b.0].val.clone());
                    for ((ga, &gi), &bvi) in
                        self.nodes[a.0].grad.iter_mut().zip(g.iter()).zip(bv.iter())
                    {
                        *ga = *ga + gi * bvi;
                    }
                    for ((gb, &gi), &avi) in
                        self.nodes[b.0].grad.iter_mut().zip(g.iter()).zip(av.iter())
                    {
                        *gb = *gb + gi * avi;
                    }
                }
                &Op::Tanh { x } => {
                    let yv = self.nodes[id].val.clone();
                    for ((gx, &gi), &y) in
                        self.nodes[x.0].grad.iter_mut().zip(g.iter()).zip(yv.iter())
                    {
                        *gx = *gx + gi * (F::ONE - y * y);
                    }
                }
                &Op::Sigmoid { x } => {
                    let yv = self.nodes[id].val.clone();
                    for ((gx, &gi), &y) in
                        self.nodes[x.0].grad.iter_mut().zip(g.iter()).zip(yv.iter())
                    {
                        *gx = *gx + gi * y * (F::ONE - y);
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].val.len();
                        for (gp, &gi) in self.nodes[p.0]
                            .grad
                            .iter_mut()
                            .zip(g[offset..offset + len].iter())
                        {
                            *gp = *gp + gi;
                        }
                        offset += len;
                    }
                }
                Op::Stack { parts } => {
                    let parts = parts.clone();
                    let c = self.nodes[parts[0].0].val.len();
                    for (r, p) in parts.into_iter().enumerate() {
                        for (gp, &gi) in self.nodes[p.0]
                            .grad
                            .iter_mut()
                            .zip(g[r * c..(r + 1) * c].iter())
                        {
                            *gp = *gp + gi;
                        }
                    }
                }
                &Op::Slice { x, start } => {
                    for (gx, &gi) in self.nodes[x.0].grad[start..start + g.len()]
                        .iter_mut()
                        .zip(g.iter())
                    {
                        *gx = *gx + gi;
                    }
                }
                &Op::Window { x, start, valid } => {
                    let gx = &mut self.nodes[x.0].grad;
                    for (p, &gi) in g.iter().enumerate() {
                        let idx = start + p as isize;
                        if idx >= 0 && (idx as usize) < valid {
                            gx[idx as usize] = gx[idx as usize] + gi;
                        }
                    }
                }
                &Op::Row { m, index } => {
                    let c = g.len();
                    for (gm, &gi) in self.nodes[m.0].grad[index * c..(index + 1) * c]
                        .iter_mut()
                        .zip(g.iter())
                    {
                        *gm = *gm + gi;
                    }
                }
                &Op::Softmax { x, valid } => {
                    let yv = self.nodes[id].val.clone();
                    let mut inner = F::ZERO;
                    for (gi, yi) in g[..valid].iter().zip(yv[..valid].iter()) {
                        inner = inner + *gi * *yi;
                    }
                    let gx = &mut self.nodes[x.0].grad;
                    for i in 0..valid {
                        gx[i] = gx[i] + yv[i] * (g[i] - inner);
                    }
                }
                &Op::Nll { probs, target } => {
                    let p = self.nodes[probs.0].val[target];
                    let gp = &mut self.nodes[probs.0].grad;
                    gp[target] = gp[target] - g[0] / p;
                }
                &Op::Dot { a, b } => {
                    let (av, bv) = (self.nodes[a.0].val.clone(), self.nodes[b.0].val.clone());
                    for (ga, &bvi) in self.nodes[a.0].grad.iter_mut().zip(bv.iter()) {
                        *ga = *ga + g[0] * bvi;
                    }
                    for (gb, &avi) in self.nodes[b.0].grad.iter_mut().zip(av.iter()) {
                        *gb = *gb + g[0] * avi;
                    }
                }
                &Op::Sum { x } => {
                    for gx in self.nodes[x.0].grad.iter_mut() {
                        *gx = *gx + g[0];
                    }
                }
                &Op::Scale { x, factor } => {
                    for (gx, &gi) in self.nodes[x.0].grad.iter_mut().zip(g.iter()) {
                        *gx = *gx + gi * factor;
                    }
                }
            }
            self.nodes[id].grad = g;
        }
        Ok(())
    }
}

/// Central finite differences: the reference oracle for gradients. Runs the
/// closure `2·len(x)` times, so keep it to desk-scale problems.
pub fn finite_difference<E>(
    mut f: impl FnMut(&[f64]) -> std::result::Result<f64, E>,
    x: &[f64],
    eps: f64,
) -> std::result::Result<Vec<f64>, E> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let hi = f(&probe)?;
        probe[i] = x[i] - eps;
        let lo = f(&probe)?;
        probe[i] = x[i];
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    Ok(grad)
}

/// Worst relative disagreement between two gradient vectors. Entries whose
/// magnitudes both fall below `floor` are compared absolutely against it.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut worst: f64 = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let scale = x.abs().max(y.abs());
        let err = if scale < floor {
            (x - y).abs() / floor
        } else {
            (x - y).abs() / scale
        };
        worst = worst.max(err);
    }
    worst
}
