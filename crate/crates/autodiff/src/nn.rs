//! Layer wrappers: each owns parameter handles and knows how to replay its
//! forward computation onto a tape.

use crate::tape::{ParamId, ParamStore, Tape, ValueId};
use rand::Rng;

/// Uniform Glorot initialization over [−a, a], a = √(6/(fan_in+fan_out)).
pub fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-a..a)).collect()
}

/// Zero-mean Gaussian draws with the given standard deviation.
pub fn gaussian<R: Rng>(rng: &mut R, std: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

/// Affine layer `y = Wx + b` with row-major `out×in` weights.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add(
            &format!("{name}.w"),
            &[out_dim, in_dim],
            glorot(rng, in_dim, out_dim, out_dim * in_dim),
        );
        let b = store.add(&format!("{name}.b"), &[out_dim], vec![0.0; out_dim]);
        Self { w, b, in_dim, out_dim }
    }

    /// Same layer with weights shrunk by `scale`; used where an output
    /// should start near zero.
    pub fn new_scaled<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut w = glorot(rng, in_dim, out_dim, out_dim * in_dim);
        for v in &mut w {
            *v *= scale;
        }
        let w = store.add(&format!("{name}.w"), &[out_dim, in_dim], w);
        let b = store.add(&format!("{name}.b"), &[out_dim], vec![0.0; out_dim]);
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: ValueId) -> ValueId {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let wx = tape.matvec(w, x, self.out_dim, self.in_dim);
        tape.add(wx, b)
    }
}

/// Same-length 1-D convolution layer (odd kernel, zero padding k/2).
#[derive(Debug, Clone)]
pub struct Conv1dLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

impl Conv1dLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in * k;
        let fan_out = c_out * k;
        let w = store.add(
            &format!("{name}.w"),
            &[c_out, c_in, k],
            glorot(rng, fan_in, fan_out, c_out * c_in * k),
        );
        let b = store.add(&format!("{name}.b"), &[c_out], vec![0.0; c_out]);
        Self { w, b, c_in, c_out, k }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: ValueId) -> ValueId {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.conv1d(w, b, x, self.c_in, self.c_out, self.k)
    }
}

/// Lookup-table embedding: one learnable row per id.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        rows: usize,
        dim: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let table = store.add(name, &[rows, dim], gaussian(rng, std, rows * dim));
        Self { table, rows, dim }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, row: usize) -> ValueId {
        assert!(row < self.rows, "embedding row {row} out of {}", self.rows);
        let t = tape.param(store, self.table);
        tape.slice(t, row * self.dim, self.dim)
    }
}

/// Recurrent cell with input/forget/output gating and a tanh candidate.
/// Gate preactivations are stacked `[i, f, g, o]` in one 4H projection.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_ih = store.add(
            &format!("{name}.w_ih"),
            &[4 * hidden, in_dim],
            glorot(rng, in_dim, hidden, 4 * hidden * in_dim),
        );
        let w_hh = store.add(
            &format!("{name}.w_hh"),
            &[4 * hidden, hidden],
            glorot(rng, hidden, hidden, 4 * hidden * hidden),
        );
        // forget-gate bias starts at 1 so early training retains state
        let mut bias = vec![0.0; 4 * hidden];
        for v in &mut bias[hidden..2 * hidden] {
            *v = 1.0;
        }
        let b = store.add(&format!("{name}.b"), &[4 * hidden], bias);
        Self { w_ih, w_hh, b, in_dim, hidden }
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: ValueId,
        h: ValueId,
        c: ValueId,
    ) -> (ValueId, ValueId) {
        let h4 = 4 * self.hidden;
        let w_ih = tape.param(store, self.w_ih);
        let w_hh = tape.param(store, self.w_hh);
        let b = tape.param(store, self.b);
        let xa = tape.matvec(w_ih, x, h4, self.in_dim);
        let ha = tape.matvec(w_hh, h, h4, self.hidden);
        let s = tape.add(xa, ha);
        let pre = tape.add(s, b);
        let i_pre = tape.slice(pre, 0, self.hidden);
        let f_pre = tape.slice(pre, self.hidden, self.hidden);
        let g_pre = tape.slice(pre, 2 * self.hidden, self.hidden);
        let o_pre = tape.slice(pre, 3 * self.hidden, self.hidden);
        let i = tape.sigmoid(i_pre);
        let f = tape.sigmoid(f_pre);
        let g = tape.tanh(g_pre);
        let o = tape.sigmoid(o_pre);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_new = tape.add(fc, ig);
        let c_act = tape.tanh(c_new);
        let h_new = tape.mul(o, c_act);
        (h_new, c_new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_shapes_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let layer = Dense::new(&mut store, "fc", 35, 64, &mut rng);
        assert_eq!(store.shape_of(layer.w), &[64, 35]);
        let mut tape = Tape::new();
        let x = tape.input(&vec![0.1; 35]);
        let y = layer.forward(&mut tape, &store, x);
        assert_eq!(tape.len_of(y), 64);

        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let mut store2 = ParamStore::new();
        let layer2 = Dense::new(&mut store2, "fc", 35, 64, &mut rng2);
        assert_eq!(store.values_of(layer.w), store2.values_of(layer2.w));
    }

    #[test]
    fn embedding_rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let emb = Embedding::new(&mut store, "id_embed", 4, 8, 0.1, &mut rng);
        let mut tape = Tape::new();
        let r0 = emb.forward(&mut tape, &store, 0);
        let r1 = emb.forward(&mut tape, &store, 1);
        assert_ne!(tape.value(r0), tape.value(r1));
        assert_eq!(tape.len_of(r0), 8);
    }

    #[test]
    fn lstm_step_preserves_shapes_and_reacts_to_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "rnn", 4, 16, &mut rng);
        let mut tape = Tape::new();
        let h0 = tape.input(&vec![0.0; 16]);
        let c0 = tape.input(&vec![0.0; 16]);
        let xa = tape.input(&[1.0, 0.0, 0.0, 0.0]);
        let xb = tape.input(&[0.0, 1.0, 0.0, 0.0]);
        let (ha, _) = cell.step(&mut tape, &store, xa, h0, c0);
        let (hb, _) = cell.step(&mut tape, &store, xb, h0, c0);
        assert_eq!(tape.len_of(ha), 16);
        assert_ne!(tape.value(ha), tape.value(hb));
    }
}
