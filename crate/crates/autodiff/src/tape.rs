//! The tape arena and its operation set.
//!
//! Node data and gradients live in two flat `Vec<f64>` buffers indexed by
//! per-node offsets. Parents always precede children, so forward can write a
//! node after reading its parents through `split_at_mut`, and backward can
//! scatter into parent gradients the same way. `clear` keeps the buffer
//! capacity, making per-sample graph rebuilds allocation-free in steady
//! state.

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

/// Handle to a named tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Named, flat parameter storage shared across tapes. Tensor order is the
/// registration order and is stable, which keeps optimizer state, gradient
/// buffers, and checkpoints aligned.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> ParamId {
        let len: usize = shape.iter().product();
        assert_eq!(len, values.len(), "param {name}: shape/value mismatch");
        assert!(
            !self.names.iter().any(|n| n == name),
            "param {name} registered twice"
        );
        let pid = ParamId(self.names.len());
        self.names.push(name.to_string());
        self.shapes.push(shape.to_vec());
        self.offsets.push(self.values.len());
        self.values.extend_from_slice(&values);
        pid
    }

    pub fn len_of(&self, pid: ParamId) -> usize {
        self.shapes[pid.0].iter().product()
    }

    pub fn name_of(&self, pid: ParamId) -> &str {
        &self.names[pid.0]
    }

    pub fn shape_of(&self, pid: ParamId) -> &[usize] {
        &self.shapes[pid.0]
    }

    pub fn offset_of(&self, pid: ParamId) -> usize {
        self.offsets[pid.0]
    }

    pub fn values_of(&self, pid: ParamId) -> &[f64] {
        let off = self.offsets[pid.0];
        &self.values[off..off + self.len_of(pid)]
    }

    pub fn values_of_mut(&mut self, pid: ParamId) -> &mut [f64] {
        let off = self.offsets[pid.0];
        let len = self.len_of(pid);
        &mut self.values[off..off + len]
    }

    pub fn n_tensors(&self) -> usize {
        self.names.len()
    }

    /// Total scalar parameter count.
    pub fn n_scalars(&self) -> usize {
        self.values.len()
    }

    pub fn tensor_ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    /// Name of the tensor owning flat index `i`.
    pub fn tensor_of_scalar(&self, i: usize) -> &str {
        let t = match self.offsets.binary_search(&i) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        &self.names[t]
    }

    pub fn flat_values(&self) -> &[f64] {
        &self.values
    }

    pub fn flat_values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Fresh zeroed gradient buffer aligned with the flat value layout.
    pub fn zeroed_grads(&self) -> Vec<f64> {
        vec![0.0; self.values.len()]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param,
    Add { a: ValueId, b: ValueId },
    Sub { a: ValueId, b: ValueId },
    Mul { a: ValueId, b: ValueId },
    Div { a: ValueId, b: ValueId },
    Neg { a: ValueId },
    /// scale·a + shift, elementwise with constant coefficients.
    /// The shift vanishes under differentiation; only scale is kept.
    Affine { a: ValueId, scale: f64 },
    Relu { a: ValueId },
    Sigmoid { a: ValueId },
    Tanh { a: ValueId },
    Clamp { a: ValueId, lo: f64, hi: f64 },
    MatVec { w: ValueId, x: ValueId, rows: usize, cols: usize },
    Conv1d { w: ValueId, b: ValueId, x: ValueId, c_in: usize, c_out: usize, k: usize, len: usize },
    MaxPool2 { a: ValueId, arg: Vec<u32> },
    Concat { parts: Vec<ValueId> },
    Slice { a: ValueId, start: usize },
    Sum { a: ValueId },
    Mean { a: ValueId },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    off: usize,
    len: usize,
}

/// Recording arena for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    data: Vec<f64>,
    grad: Vec<f64>,
    /// Param nodes in creation order, for gradient accumulation.
    param_nodes: Vec<(usize, ValueId)>,
    /// Memoizes one node per param per pass so repeated uses share gradient.
    param_memo: Vec<Option<ValueId>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops the recording but keeps buffer capacity.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.data.clear();
        self.grad.clear();
        self.param_nodes.clear();
        self.param_memo.clear();
    }

    pub fn len_of(&self, id: ValueId) -> usize {
        self.nodes[id.0].len
    }

    pub fn value(&self, id: ValueId) -> &[f64] {
        let n = &self.nodes[id.0];
        &self.data[n.off..n.off + n.len]
    }

    pub fn scalar_value(&self, id: ValueId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "expected scalar node");
        v[0]
    }

    pub fn grad_of(&self, id: ValueId) -> &[f64] {
        let n = &self.nodes[id.0];
        &self.grad[n.off..n.off + n.len]
    }

    fn push(&mut self, op: Op, len: usize) -> (ValueId, usize) {
        let off = self.data.len();
        self.data.resize(off + len, 0.0);
        self.grad.resize(off + len, 0.0);
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node { op, off, len });
        (id, off)
    }

    /// Records a constant input node.
    pub fn input(&mut self, values: &[f64]) -> ValueId {
        let (id, off) = self.push(Op::Input, values.len());
        self.data[off..off + values.len()].copy_from_slice(values);
        id
    }

    pub fn scalar(&mut self, v: f64) -> ValueId {
        self.input(&[v])
    }

    /// Brings a parameter tensor onto the tape. Repeated calls within one
    /// recording return the same node, so all uses accumulate one gradient.
    pub fn param(&mut self, store: &ParamStore, pid: ParamId) -> ValueId {
        if self.param_memo.len() < store.n_tensors() {
            self.param_memo.resize(store.n_tensors(), None);
        }
        if let Some(id) = self.param_memo[pid.0] {
            return id;
        }
        let values = store.values_of(pid);
        let (id, off) = self.push(Op::Param, values.len());
        self.data[off..off + values.len()].copy_from_slice(values);
        self.param_nodes.push((pid.0, id));
        self.param_memo[pid.0] = Some(id);
        id
    }

    fn binary_len(&self, a: ValueId, b: ValueId, what: &str) -> usize {
        let (la, lb) = (self.len_of(a), self.len_of(b));
        if la == lb {
            la
        } else if lb == 1 {
            la
        } else if la == 1 {
            lb
        } else {
            panic!("{what}: incompatible lengths {la} and {lb}");
        }
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let len = self.binary_len(a, b, "add");
        let (id, off) = self.push(Op::Add { a, b }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        for i in 0..len {
            out[i] = prev[na.off + i % na.len] + prev[nb.off + i % nb.len];
        }
        id
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let len = self.binary_len(a, b, "sub");
        let (id, off) = self.push(Op::Sub { a, b }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        for i in 0..len {
            out[i] = prev[na.off + i % na.len] - prev[nb.off + i % nb.len];
        }
        id
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let len = self.binary_len(a, b, "mul");
        let (id, off) = self.push(Op::Mul { a, b }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        for i in 0..len {
            out[i] = prev[na.off + i % na.len] * prev[nb.off + i % nb.len];
        }
        id
    }

    pub fn div(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let len = self.binary_len(a, b, "div");
        let (id, off) = self.push(Op::Div { a, b }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        for i in 0..len {
            out[i] = prev[na.off + i % na.len] / prev[nb.off + i % nb.len];
        }
        id
    }

    pub fn neg(&mut self, a: ValueId) -> ValueId {
        let len = self.len_of(a);
        let (id, off) = self.push(Op::Neg { a }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let na = &self.nodes[a.0];
        for i in 0..len {
            out[i] = -prev[na.off + i];
        }
        id
    }

    pub fn affine(&mut self, a: ValueId, scale: f64, shift: f64) -> ValueId {
        let len = self.len_of(a);
        let (id, off) = self.push(Op::Affine { a, scale }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let na = &self.nodes[a.0];
        for i in 0..len {
            out[i] = scale * prev[na.off + i] + shift;
        }
        id
    }

    pub fn relu(&mut self, a: ValueId) -> ValueId {
        let len = self.len_of(a);
        let (id, off) = self.push(Op::Relu { a }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let na = &self.nodes[a.0];
        for i in 0..len {
            out[i] = prev[na.off + i].max(0.0);
        }
        id
    }

    pub fn sigmoid(&mut self, a: ValueId) -> ValueId {
        let len = self.len_of(a);
        let (id, off) = self.push(Op::Sigmoid { a }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let na = &self.nodes[a.0];
        for i in 0..len {
            let x = prev[na.off + i];
            out[i] = if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            };
        }
        id
    }

    pub fn tanh(&mut self, a: ValueId) -> ValueId {
        let len = self.len_of(a);
        let (id, off) = self.push(Op::Tanh { a }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let na = &self.nodes[a.0];
        for i in 0..len {
            out[i] = prev[na.off + i].tanh();
        }
        id
    }

    /// Elementwise clamp. Subgradient is 1 inside the interval (boundary
    /// included) and 0 outside, so a state pinned at a bound still passes
    /// gradient when the bound is exactly met.
    pub fn clamp(&mut self, a: ValueId, lo: f64, hi: f64) -> ValueId {
        assert!(lo < hi, "clamp: lo {lo} must be < hi {hi}");
        let len = self.len_of(a);
        let (id, off) = self.push(Op::Clamp { a, lo, hi }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let na = &self.nodes[a.0];
        for i in 0..len {
            out[i] = prev[na.off + i].clamp(lo, hi);
        }
        id
    }

    /// Row-major `rows×cols` matrix times `cols` vector.
    pub fn matvec(&mut self, w: ValueId, x: ValueId, rows: usize, cols: usize) -> ValueId {
        assert_eq!(self.len_of(w), rows * cols, "matvec: weight length");
        assert_eq!(self.len_of(x), cols, "matvec: input length {} != cols {cols}", self.len_of(x));
        let (id, off) = self.push(Op::MatVec { w, x, rows, cols }, rows);
        let (prev, out) = self.data.split_at_mut(off);
        let (nw, nx) = (&self.nodes[w.0], &self.nodes[x.0]);
        for r in 0..rows {
            let wrow = &prev[nw.off + r * cols..nw.off + (r + 1) * cols];
            let xv = &prev[nx.off..nx.off + cols];
            out[r] = wrow.iter().zip(xv).map(|(w, x)| w * x).sum();
        }
        id
    }

    /// Same-length 1-D convolution over a channel-major `[c_in × len]`
    /// input with zero padding `k/2` (odd kernels). Weight layout is
    /// `[c_out][c_in][k]`, bias `[c_out]`; output is `[c_out × len]`.
    pub fn conv1d(
        &mut self,
        w: ValueId,
        b: ValueId,
        x: ValueId,
        c_in: usize,
        c_out: usize,
        k: usize,
    ) -> ValueId {
        assert!(k % 2 == 1, "conv1d: kernel must be odd");
        assert_eq!(self.len_of(x) % c_in, 0, "conv1d: input not divisible by channels");
        let len = self.len_of(x) / c_in;
        assert_eq!(self.len_of(w), c_out * c_in * k, "conv1d: weight length");
        assert_eq!(self.len_of(b), c_out, "conv1d: bias length");
        let pad = k / 2;
        let (id, off) = self.push(Op::Conv1d { w, b, x, c_in, c_out, k, len }, c_out * len);
        let (prev, out) = self.data.split_at_mut(off);
        let (nw, nb, nx) = (&self.nodes[w.0], &self.nodes[b.0], &self.nodes[x.0]);
        for co in 0..c_out {
            for t in 0..len {
                let mut acc = prev[nb.off + co];
                for ci in 0..c_in {
                    let wbase = nw.off + (co * c_in + ci) * k;
                    let xbase = nx.off + ci * len;
                    for j in 0..k {
                        let s = t + j;
                        if s >= pad && s - pad < len {
                            acc += prev[wbase + j] * prev[xbase + s - pad];
                        }
                    }
                }
                out[co * len + t] = acc;
            }
        }
        id
    }

    /// Width-2 max pooling per channel; input `[ch × len]` with even `len`,
    /// output `[ch × len/2]`. Ties resolve to the earlier element.
    pub fn maxpool2(&mut self, a: ValueId, ch: usize) -> ValueId {
        assert_eq!(self.len_of(a) % ch, 0, "maxpool2: input not divisible by channels");
        let len = self.len_of(a) / ch;
        assert!(len % 2 == 0, "maxpool2: odd length {len}");
        let half = len / 2;
        let na_off = self.nodes[a.0].off;
        let mut arg = Vec::with_capacity(ch * half);
        {
            let data = &self.data;
            for c in 0..ch {
                for t in 0..half {
                    let i0 = na_off + c * len + 2 * t;
                    arg.push(if data[i0] >= data[i0 + 1] { 0 } else { 1 });
                }
            }
        }
        let (id, off) = self.push(Op::MaxPool2 { a, arg }, ch * half);
        let (prev, out) = self.data.split_at_mut(off);
        let arg = match &self.nodes[id.0].op {
            Op::MaxPool2 { arg, .. } => arg,
            _ => unreachable!(),
        };
        for c in 0..ch {
            for t in 0..half {
                let i0 = na_off + c * len + 2 * t;
                out[c * half + t] = prev[i0 + arg[c * half + t] as usize];
            }
        }
        id
    }

    pub fn concat(&mut self, parts: &[ValueId]) -> ValueId {
        assert!(!parts.is_empty(), "concat: no parts");
        let len = parts.iter().map(|&p| self.len_of(p)).sum();
        let (id, off) = self.push(Op::Concat { parts: parts.to_vec() }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let mut cursor = 0;
        for &p in parts {
            let np = &self.nodes[p.0];
            out[cursor..cursor + np.len].copy_from_slice(&prev[np.off..np.off + np.len]);
            cursor += np.len;
        }
        id
    }

    pub fn slice(&mut self, a: ValueId, start: usize, len: usize) -> ValueId {
        assert!(start + len <= self.len_of(a), "slice: out of range");
        let (id, off) = self.push(Op::Slice { a, start }, len);
        let (prev, out) = self.data.split_at_mut(off);
        let na = &self.nodes[a.0];
        out.copy_from_slice(&prev[na.off + start..na.off + start + len]);
        id
    }

    pub fn sum(&mut self, a: ValueId) -> ValueId {
        let (id, off) = self.push(Op::Sum { a }, 1);
        let (prev, out) = self.data.split_at_mut(off);
        let na = &self.nodes[a.0];
        out[0] = prev[na.off..na.off + na.len].iter().sum();
        id
    }

    pub fn mean(&mut self, a: ValueId) -> ValueId {
        let (id, off) = self.push(Op::Mean { a }, 1);
        let (prev, out) = self.data.split_at_mut(off);
        let na = &self.nodes[a.0];
        out[0] = prev[na.off..na.off + na.len].iter().sum::<f64>() / na.len as f64;
        id
    }

    /// Distance from the nearest kinked-op decision boundary anywhere in the
    /// recording: ReLU/clamp inputs near their thresholds or near-tied pool
    /// pairs shrink it. Infinite when the graph has no kinks. Gradient
    /// checks reject probe points with small margins.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::Relu { a } => {
                    let na = &self.nodes[a.0];
                    for i in 0..na.len {
                        margin = margin.min(self.data[na.off + i].abs());
                    }
                }
                Op::Clamp { a, lo, hi } => {
                    let na = &self.nodes[a.0];
                    for i in 0..na.len {
                        let x = self.data[na.off + i];
                        margin = margin.min((x - lo).abs().min((x - hi).abs()));
                    }
                }
                Op::MaxPool2 { a, .. } => {
                    // pooled pairs are adjacent elements of the input
                    let na = &self.nodes[a.0];
                    let mut i = na.off;
                    while i + 1 < na.off + na.len {
                        margin = margin.min((self.data[i] - self.data[i + 1]).abs());
                        i += 2;
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Seeds the scalar loss node and propagates gradients to every
    /// ancestor. Each node is visited exactly once, in reverse creation
    /// order, which is a valid reverse topological order.
    pub fn backward(&mut self, loss: ValueId) {
        assert_eq!(self.len_of(loss), 1, "backward: loss must be scalar");
        for g in &mut self.grad {
            *g = 0.0;
        }
        self.grad[self.nodes[loss.0].off] = 1.0;
        for idx in (0..=loss.0).rev() {
            let node = self.nodes[idx].clone();
            let (off, len) = (node.off, node.len);
            match node.op {
                Op::Input | Op::Param { .. } => {}
                Op::Add { a, b } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
                    for i in 0..len {
                        gprev[na.off + i % na.len] += gout[i];
                        gprev[nb.off + i % nb.len] += gout[i];
                    }
                }
                Op::Sub { a, b } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
                    for i in 0..len {
                        gprev[na.off + i % na.len] += gout[i];
                        gprev[nb.off + i % nb.len] -= gout[i];
                    }
                }
                Op::Mul { a, b } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
                    for i in 0..len {
                        let (ia, ib) = (na.off + i % na.len, nb.off + i % nb.len);
                        gprev[ia] += gout[i] * self.data[ib];
                        gprev[ib] += gout[i] * self.data[ia];
                    }
                }
                Op::Div { a, b } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
                    for i in 0..len {
                        let (ia, ib) = (na.off + i % na.len, nb.off + i % nb.len);
                        let bv = self.data[ib];
                        gprev[ia] += gout[i] / bv;
                        gprev[ib] -= gout[i] * self.data[ia] / (bv * bv);
                    }
                }
                Op::Neg { a } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let na = &self.nodes[a.0];
                    for i in 0..len {
                        gprev[na.off + i] -= gout[i];
                    }
                }
                Op::Affine { a, scale } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let na = &self.nodes[a.0];
                    for i in 0..len {
                        gprev[na.off + i] += scale * gout[i];
                    }
                }
                Op::Relu { a } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let na = &self.nodes[a.0];
                    for i in 0..len {
                        if self.data[na.off + i] > 0.0 {
                            gprev[na.off + i] += gout[i];
                        }
                    }
                }
                Op::Sigmoid { a } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let na = &self.nodes[a.0];
                    for i in 0..len {
                        let y = self.data[off + i];
                        gprev[na.off + i] += gout[i] * y * (1.0 - y);
                    }
                }
                Op::Tanh { a } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let na = &self.nodes[a.0];
                    for i in 0..len {
                        let y = self.data[off + i];
                        gprev[na.off + i] += gout[i] * (1.0 - y * y);
                    }
                }
                Op::Clamp { a, lo, hi } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let na = &self.nodes[a.0];
                    for i in 0..len {
                        let x = self.data[na.off + i];
                        if x >= lo && x <= hi {
                            gprev[na.off + i] += gout[i];
                        }
                    }
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let (nw, nx) = (&self.nodes[w.0], &self.nodes[x.0]);
                    for r in 0..rows {
                        let go = gout[r];
                        if go == 0.0 {
                            continue;
                        }
                        for c in 0..cols {
                            gprev[nw.off + r * cols + c] += go * self.data[nx.off + c];
                            gprev[nx.off + c] += go * self.data[nw.off + r * cols + c];
                        }
                    }
                }
                Op::Conv1d { w, b, x, c_in, c_out, k, len } => {
                    let pad = k / 2;
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let (nw, nb, nx) = (&self.nodes[w.0], &self.nodes[b.0], &self.nodes[x.0]);
                    for co in 0..c_out {
                        for t in 0..len {
                            let go = gout[co * len + t];
                            if go == 0.0 {
                                continue;
                            }
                            gprev[nb.off + co] += go;
                            for ci in 0..c_in {
                                let wbase = nw.off + (co * c_in + ci) * k;
                                let xbase = nx.off + ci * len;
                                for j in 0..k {
                                    let s = t + j;
                                    if s >= pad && s - pad < len {
                                        gprev[wbase + j] += go * self.data[xbase + s - pad];
                                        gprev[xbase + s - pad] += go * self.data[wbase + j];
                                    }
                                }
                            }
                        }
                    }
                }
                Op::MaxPool2 { a, ref arg } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let na = &self.nodes[a.0];
                    let half_total = arg.len();
                    for i in 0..half_total {
                        gprev[na.off + 2 * i + arg[i] as usize] += gout[i];
                    }
                }
                Op::Concat { ref parts } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let mut cursor = 0;
                    for &p in parts {
                        let np = &self.nodes[p.0];
                        for i in 0..np.len {
                            gprev[np.off + i] += gout[cursor + i];
                        }
                        cursor += np.len;
                    }
                }
                Op::Slice { a, start } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let na = &self.nodes[a.0];
                    for i in 0..len {
                        gprev[na.off + start + i] += gout[i];
                    }
                }
                Op::Sum { a } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let na = &self.nodes[a.0];
                    for i in 0..na.len {
                        gprev[na.off + i] += gout[0];
                    }
                }
                Op::Mean { a } => {
                    let (gprev, gout) = self.grad.split_at_mut(off);
                    let na = &self.nodes[a.0];
                    let inv = 1.0 / na.len as f64;
                    for i in 0..na.len {
                        gprev[na.off + i] += gout[0] * inv;
                    }
                }
            }
        }
    }

    /// Adds this recording's parameter gradients into a flat buffer aligned
    /// with the store layout. Call after `backward`.
    pub fn accumulate_param_grads(&self, store: &ParamStore, out: &mut [f64]) {
        assert_eq!(out.len(), store.n_scalars());
        for &(pid, id) in &self.param_nodes {
            let node = &self.nodes[id.0];
            let dst = store.offsets[pid];
            for i in 0..node.len {
                out[dst + i] += self.grad[node.off + i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, values: &[f64]) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let pid = s.add(name, &[values.len()], values.to_vec());
        (s, pid)
    }

    #[test]
    fn forward_values_elementwise() {
        let mut t = Tape::new();
        let a = t.input(&[1.0, 2.0, 3.0]);
        let b = t.input(&[4.0, 5.0, 6.0]);
        let sum = t.add(a, b);
        assert_eq!(t.value(sum), &[5.0, 7.0, 9.0]);
        let c = t.scalar(2.0);
        let d = t.mul(a, c);
        assert_eq!(t.value(d), &[2.0, 4.0, 6.0]);
        let e = t.div(a, c);
        assert_eq!(t.value(e), &[0.5, 1.0, 1.5]);
        let f = t.affine(a, 10.0, 1.0);
        assert_eq!(t.value(f), &[11.0, 21.0, 31.0]);
    }

    #[test]
    fn sigmoid_grad_at_zero_is_quarter() {
        let (s, pid) = store_with("x", &[0.0]);
        let mut t = Tape::new();
        let x = t.param(&s, pid);
        let y = t.sigmoid(x);
        t.backward(y);
        let mut g = s.zeroed_grads();
        t.accumulate_param_grads(&s, &mut g);
        assert!((g[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn relu_negative_input_kills_gradient() {
        let (s, pid) = store_with("x", &[-1.0]);
        let mut t = Tape::new();
        let x = t.param(&s, pid);
        let y = t.relu(x);
        assert_eq!(t.value(y), &[0.0]);
        t.backward(y);
        let mut g = s.zeroed_grads();
        t.accumulate_param_grads(&s, &mut g);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn clamp_subgradient_boundary_inside() {
        for (x, expect) in [(0.5, 1.0), (0.0, 1.0), (1.0, 1.0), (-0.2, 0.0), (1.3, 0.0)] {
            let (s, pid) = store_with("x", &[x]);
            let mut t = Tape::new();
            let v = t.param(&s, pid);
            let y = t.clamp(v, 0.0, 1.0);
            t.backward(y);
            let mut g = s.zeroed_grads();
            t.accumulate_param_grads(&s, &mut g);
            assert_eq!(g[0], expect, "clamp grad at {x}");
        }
    }

    #[test]
    fn conv_shapes_match_encoder_arithmetic() {
        let mut t = Tape::new();
        let x = t.input(&vec![0.3; 24]);
        let w = t.input(&vec![0.1; 16 * 1 * 3]);
        let b = t.input(&vec![0.0; 16]);
        let y = t.conv1d(w, b, x, 1, 16, 3);
        assert_eq!(t.len_of(y), 16 * 24);
        let p = t.maxpool2(y, 16);
        assert_eq!(t.len_of(p), 16 * 12);
        let w2 = t.input(&vec![0.05; 32 * 16 * 3]);
        let b2 = t.input(&vec![0.0; 32]);
        let y2 = t.conv1d(w2, b2, p, 16, 32, 3);
        let p2 = t.maxpool2(y2, 32);
        assert_eq!(t.len_of(p2), 192);
    }

    #[test]
    fn conv_known_values_with_padding() {
        // single channel, kernel [1, 2, 3], bias 0.5, input [1, 2, 3, 4]
        let mut t = Tape::new();
        let x = t.input(&[1.0, 2.0, 3.0, 4.0]);
        let w = t.input(&[1.0, 2.0, 3.0]);
        let b = t.input(&[0.5]);
        let y = t.conv1d(w, b, x, 1, 1, 3);
        // t=0: 0·1 + 1·2 + 2·3 = 8 (+0.5)
        // t=1: 1·1 + 2·2 + 3·3 = 14 (+0.5)
        // t=2: 2·1 + 3·2 + 4·3 = 20 (+0.5)
        // t=3: 3·1 + 4·2 + 0·3 = 11 (+0.5)
        assert_eq!(t.value(y), &[8.5, 14.5, 20.5, 11.5]);
    }

    #[test]
    fn maxpool_picks_larger_and_routes_gradient() {
        let (s, pid) = store_with("x", &[1.0, 5.0, 7.0, 2.0]);
        let mut t = Tape::new();
        let x = t.param(&s, pid);
        let y = t.maxpool2(x, 1);
        assert_eq!(t.value(y), &[5.0, 7.0]);
        let m = t.sum(y);
        t.backward(m);
        let mut g = s.zeroed_grads();
        t.accumulate_param_grads(&s, &mut g);
        assert_eq!(g, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn matvec_known_values_and_grads() {
        let mut s = ParamStore::new();
        let w = s.add("w", &[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = s.add("x", &[3], vec![1.0, 0.0, -1.0]);
        let mut t = Tape::new();
        let wn = t.param(&s, w);
        let xn = t.param(&s, x);
        let y = t.matvec(wn, xn, 2, 3);
        assert_eq!(t.value(y), &[-2.0, -2.0]);
        let l = t.sum(y);
        t.backward(l);
        let mut g = s.zeroed_grads();
        t.accumulate_param_grads(&s, &mut g);
        // dw = outer([1,1], x), dx = wᵀ·[1,1]
        assert_eq!(&g[0..6], &[1.0, 0.0, -1.0, 1.0, 0.0, -1.0]);
        assert_eq!(&g[6..9], &[5.0, 7.0, 9.0]);
    }

    #[test]
    fn repeated_param_use_accumulates_once_per_use() {
        // f = x·x with both factors the same tape node → grad 2x
        let (s, pid) = store_with("x", &[3.0]);
        let mut t = Tape::new();
        let x = t.param(&s, pid);
        let x_again = t.param(&s, pid);
        assert_eq!(x, x_again);
        let y = t.mul(x, x_again);
        t.backward(y);
        let mut g = s.zeroed_grads();
        t.accumulate_param_grads(&s, &mut g);
        assert_eq!(g[0], 6.0);
    }

    #[test]
    fn broadcast_scalar_grad_sums_over_elements() {
        let mut s = ParamStore::new();
        let c = s.add("c", &[1], vec![2.0]);
        let mut t = Tape::new();
        let a = t.input(&[1.0, 2.0, 3.0]);
        let cv = t.param(&s, c);
        let y = t.mul(a, cv);
        let l = t.sum(y);
        t.backward(l);
        let mut g = s.zeroed_grads();
        t.accumulate_param_grads(&s, &mut g);
        assert_eq!(g[0], 6.0);
    }

    #[test]
    fn clear_reuses_buffers() {
        let mut t = Tape::new();
        let a = t.input(&[1.0; 128]);
        let _ = t.relu(a);
        let cap_data = t.data.capacity();
        t.clear();
        let b = t.input(&[2.0; 64]);
        let r = t.relu(b);
        assert_eq!(t.value(r)[0], 2.0);
        assert!(t.data.capacity() >= 64 && cap_data >= 128);
    }

    #[test]
    #[should_panic(expected = "incompatible lengths")]
    fn shape_mismatch_panics() {
        let mut t = Tape::new();
        let a = t.input(&[1.0, 2.0]);
        let b = t.input(&[1.0, 2.0, 3.0]);
        let _ = t.add(a, b);
    }

    #[test]
    fn kink_margin_reports_nearest_boundary() {
        let mut t = Tape::new();
        let a = t.input(&[0.4, -2.0]);
        let _ = t.relu(a);
        assert!((t.kink_margin() - 0.4).abs() < 1e-15);
        let mut t2 = Tape::new();
        let b = t2.input(&[0.97]);
        let _ = t2.clamp(b, 0.0, 1.0);
        assert!((t2.kink_margin() - 0.03).abs() < 1e-12);
    }
}
