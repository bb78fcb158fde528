//! Central-difference gradient verification.

use super::params::ParameterStore;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Relative error used by [`finite_diff_check`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares backprop gradients of `loss_fn` against central differences for
/// every trainable scalar in `store`. Returns the worst relative error.
///
/// Tapes are built in training mode. `loss_fn` must be deterministic: build
/// its rngs from fixed seeds.
pub fn finite_diff_check<F>(store: &mut ParameterStore, mut loss_fn: F, epsilon: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParameterStore) -> Result<Var>,
{
    let mut tape = Tape::new(true);
    let loss = loss_fn(&mut tape, store)?;
    let grads = tape.backward(loss)?;
    store.zero_grads();
    grads.accumulate_into(&tape, store);

    let mut eval = |store: &ParameterStore| -> Result<f64> {
        let mut t = Tape::new(true);
        let l = loss_fn(&mut t, store)?;
        t.scalar(l)
    };

    let mut worst = 0.0_f64;
    let ids: Vec<_> = store.ids().filter(|&id| store.is_trainable(id)).collect();
    for id in ids {
        let analytic = store
            .grad(id)
            .map(|g| g.as_slice().to_vec())
            .unwrap_or_else(|| vec![0.0; store.value(id).len()]);
        for (i, &a) in analytic.iter().enumerate() {
            let orig = store.value(id).as_slice()[i];
            store.value_mut(id).as_mut_slice()[i] = orig + epsilon;
            let plus = eval(store)?;
            store.value_mut(id).as_mut_slice()[i] = orig - epsilon;
            let minus = eval(store)?;
            store.value_mut(id).as_mut_slice()[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(a, numeric);
            if err > worst {
                log::trace!(
                    "gradcheck {}[{i}]: analytic {a} numeric {numeric}",
                    store.name(id)
                );
            }
            worst = worst.max(err);
        }
    }
    store.zero_grads();
    Ok(worst)
}
