//! Central-difference gradient verification.

use crate::tape::{ParamStore, Tape, ValueId};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked_components: usize,
    pub loss: f64,
    /// Distance of the probe point to the nearest kink (ReLU/clamp/pool
    /// decision boundary); finite-difference results are only trustworthy
    /// when this comfortably exceeds the probe step.
    pub kink_margin: f64,
}

/// Evaluates the scalar loss built by `build` without recording gradients.
pub fn eval_loss<B>(store: &ParamStore, build: &B) -> f64
where
    B: Fn(&mut Tape, &ParamStore) -> ValueId,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, store);
    tape.scalar_value(loss)
}

/// Compares reverse-mode gradients against central finite differences.
///
/// Every parameter tensor is probed; tensors longer than `max_per_tensor`
/// are subsampled deterministically per `seed` (0 means check everything).
/// Relative error per component is |g_ad − g_fd| / max(1e-8, |g_ad|+|g_fd|).
pub fn grad_check<B>(
    store: &mut ParamStore,
    build: B,
    eps: f64,
    max_per_tensor: usize,
    seed: u64,
) -> GradCheckReport
where
    B: Fn(&mut Tape, &ParamStore) -> ValueId,
{
    let mut tape = Tape::new();
    let loss_id = build(&mut tape, store);
    let loss = tape.scalar_value(loss_id);
    let kink_margin = tape.kink_margin();
    tape.backward(loss_id);
    let mut g_ad = store.zeroed_grads();
    tape.accumulate_param_grads(store, &mut g_ad);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets: Vec<usize> = Vec::new();
    for pid in store.tensor_ids() {
        let off = store.offset_of(pid);
        let len = store.len_of(pid);
        if max_per_tensor == 0 || len <= max_per_tensor {
            targets.extend(off..off + len);
        } else {
            let mut idx: Vec<usize> = (off..off + len).collect();
            idx.shuffle(&mut rng);
            idx.truncate(max_per_tensor);
            idx.sort_unstable();
            targets.extend(idx);
        }
    }

    let mut max_rel_err = 0.0_f64;
    for &i in &targets {
        let orig = store.flat_values()[i];
        store.flat_values_mut()[i] = orig + eps;
        let f_plus = eval_loss(store, &build);
        store.flat_values_mut()[i] = orig - eps;
        let f_minus = eval_loss(store, &build);
        store.flat_values_mut()[i] = orig;
        let g_fd = (f_plus - f_minus) / (2.0 * eps);
        let rel = (g_ad[i] - g_fd).abs() / (g_ad[i].abs() + g_fd.abs()).max(1e-8);
        if rel > max_rel_err {
            max_rel_err = rel;
        }
    }
    GradCheckReport {
        max_rel_err,
        checked_components: targets.len(),
        loss,
        kink_margin,
    }
}
