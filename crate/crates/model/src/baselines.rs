//! Black-box reference predictors. All three consume exactly the same
//! observables as the gray-box model (context T_out/T_in/P_ac, horizon
//! T_out/P_ac, S0, window statistics, band width, unit identity) and emit
//! the 24-step SOC sequence directly. Horizon indoor temperature is not a
//! field of [`Sample`], so no architecture can leak it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vbnet_autodiff::nn::{Conv1dLayer, Dense, LstmCell};
use vbnet_autodiff::tape::{ParamStore, Tape, ValueId};
use vbnet_core::data::{NormStats, Sample};
use vbnet_core::fleet::ExperimentConfig;

/// Fixed width of the one-hot unit encoding; covers the largest fleet.
const ONE_HOT: usize = 8;
/// Static features: S0, standardized window mean/std, band width, one-hot id.
const STATIC_DIM: usize = 4 + ONE_HOT;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Dense,
    Conv,
    Recurrent,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Dense => "dense",
            BaselineKind::Conv => "conv",
            BaselineKind::Recurrent => "recurrent",
        }
    }

    pub const ALL: [BaselineKind; 3] =
        [BaselineKind::Dense, BaselineKind::Conv, BaselineKind::Recurrent];
}

#[derive(Debug)]
enum Arch {
    Dense {
        fc1: Dense,
        fc2: Dense,
        out: Dense,
    },
    Conv {
        conv1: Conv1dLayer,
        conv2: Conv1dLayer,
        head: Dense,
        out: Dense,
    },
    Recurrent {
        init: Dense,
        cell: LstmCell,
        out: Dense,
    },
}

#[derive(Debug)]
pub struct Baseline {
    pub kind: BaselineKind,
    store: ParamStore,
    arch: Arch,
    seq_len: usize,
    rollout_len: usize,
}

impl Baseline {
    pub fn new(kind: BaselineKind, cfg: &ExperimentConfig) -> Self {
        assert!(cfg.seq_len % 4 == 0, "context length must pool twice");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let (s, r) = (cfg.seq_len, cfg.rollout_len);
        let arch = match kind {
            BaselineKind::Dense => {
                let in_dim = 5 * s + STATIC_DIM;
                Arch::Dense {
                    fc1: Dense::new(&mut store, "dense.fc1", in_dim, 128, &mut rng),
                    fc2: Dense::new(&mut store, "dense.fc2", 128, 64, &mut rng),
                    out: Dense::new(&mut store, "dense.out", 64, r, &mut rng),
                }
            }
            BaselineKind::Conv => {
                let flat = 32 * (s / 4);
                Arch::Conv {
                    conv1: Conv1dLayer::new(&mut store, "conv.c1", 6, 16, 3, &mut rng),
                    conv2: Conv1dLayer::new(&mut store, "conv.c2", 16, 32, 3, &mut rng),
                    head: Dense::new(&mut store, "conv.head", flat + STATIC_DIM, 64, &mut rng),
                    out: Dense::new(&mut store, "conv.out", 64, r, &mut rng),
                }
            }
            BaselineKind::Recurrent => Arch::Recurrent {
                init: Dense::new(&mut store, "rnn.init", STATIC_DIM, 128, &mut rng),
                cell: LstmCell::new(&mut store, "rnn.cell", 4, 64, &mut rng),
                out: Dense::new(&mut store, "rnn.out", 64, r, &mut rng),
            },
        };
        Self {
            kind,
            store,
            arch,
            seq_len: s,
            rollout_len: r,
        }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    fn static_features(sample: &Sample, stats: &NormStats) -> Vec<f64> {
        assert!(sample.unit_id < ONE_HOT, "unit id beyond one-hot width");
        let mut f = vec![
            sample.s0,
            NormStats::z(sample.mu_tin, stats.mu_tin),
            NormStats::z(sample.sigma_tin, stats.sigma_tin),
            sample.dt_range,
        ];
        let mut hot = vec![0.0; ONE_HOT];
        hot[sample.unit_id] = 1.0;
        f.extend(hot);
        f
    }

    /// Raw 24-step output on the tape; training applies the loss to this,
    /// prediction clamps it to the physical range afterwards.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sample: &Sample,
        stats: &NormStats,
    ) -> ValueId {
        assert_eq!(sample.ctx_t_out.len(), self.seq_len, "context length");
        assert_eq!(sample.hor_t_out.len(), self.rollout_len, "horizon length");
        let z = NormStats::z;
        let stat = Self::static_features(sample, stats);
        match &self.arch {
            Arch::Dense { fc1, fc2, out } => {
                let mut flat = Vec::with_capacity(5 * self.seq_len + STATIC_DIM);
                flat.extend(sample.ctx_t_out.iter().map(|&x| z(x, stats.t_out)));
                flat.extend(sample.ctx_t_in.iter().map(|&x| z(x, stats.t_in)));
                flat.extend(sample.ctx_p_ac.iter().map(|&x| z(x, stats.p_ac)));
                flat.extend(sample.hor_t_out.iter().map(|&x| z(x, stats.t_out)));
                flat.extend(sample.hor_p_ac.iter().map(|&x| z(x, stats.p_ac)));
                flat.extend(stat);
                let x = tape.input(&flat);
                let h = fc1.forward(tape, store, x);
                let h = tape.relu(h);
                let h = fc2.forward(tape, store, h);
                let h = tape.relu(h);
                out.forward(tape, store, h)
            }
            Arch::Conv { conv1, conv2, head, out } => {
                // six channels over the context grid; horizon series are
                // laid onto the same 24-step axis
                let n = self.seq_len;
                let mut chans = Vec::with_capacity(6 * n);
                chans.extend(sample.ctx_t_out.iter().map(|&x| z(x, stats.t_out)));
                chans.extend(sample.ctx_t_in.iter().map(|&x| z(x, stats.t_in)));
                chans.extend(sample.ctx_p_ac.iter().map(|&x| z(x, stats.p_ac)));
                chans.extend(sample.hor_t_out.iter().map(|&x| z(x, stats.t_out)));
                chans.extend(sample.hor_p_ac.iter().map(|&x| z(x, stats.p_ac)));
                chans.extend((0..n).map(|k| k as f64 / (n - 1) as f64));
                let x = tape.input(&chans);
                let c1 = conv1.forward(tape, store, x);
                let p1 = tape.maxpool2(c1, 16);
                let a1 = tape.relu(p1);
                let c2 = conv2.forward(tape, store, a1);
                let p2 = tape.maxpool2(c2, 32);
                let a2 = tape.relu(p2);
                let st = tape.input(&stat);
                let cat = tape.concat(&[a2, st]);
                let h = head.forward(tape, store, cat);
                let h = tape.relu(h);
                out.forward(tape, store, h)
            }
            Arch::Recurrent { init, cell, out } => {
                let st = tape.input(&stat);
                let hc = init.forward(tape, store, st);
                let mut h = tape.slice(hc, 0, 64);
                let mut c = tape.slice(hc, 64, 64);
                // context steps carry indoor temperature, horizon steps a
                // zero placeholder plus a phase flag
                for i in 0..self.seq_len {
                    let x = tape.input(&[
                        z(sample.ctx_t_out[i], stats.t_out),
                        z(sample.ctx_t_in[i], stats.t_in),
                        z(sample.ctx_p_ac[i], stats.p_ac),
                        0.0,
                    ]);
                    (h, c) = cell.step(tape, store, x, h, c);
                }
                for k in 0..self.rollout_len {
                    let x = tape.input(&[
                        z(sample.hor_t_out[k], stats.t_out),
                        0.0,
                        z(sample.hor_p_ac[k], stats.p_ac),
                        1.0,
                    ]);
                    (h, c) = cell.step(tape, store, x, h, c);
                }
                out.forward(tape, store, h)
            }
        }
    }
}

impl crate::trainer::SocModel for Baseline {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn loss_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sample: &Sample,
        stats: &NormStats,
    ) -> ValueId {
        let pred = self.forward_on_tape(tape, store, sample, stats);
        let target = tape.input(&sample.s_true);
        let diff = tape.sub(pred, target);
        let sq = tape.mul(diff, diff);
        tape.mean(sq)
    }

    fn predict_soc(&self, sample: &Sample, stats: &NormStats) -> Vec<f64> {
        let mut tape = Tape::new();
        let pred = self.forward_on_tape(&mut tape, &self.store, sample, stats);
        tape.value(pred).iter().map(|x| x.clamp(0.0, 1.0)).collect()
    }
}
