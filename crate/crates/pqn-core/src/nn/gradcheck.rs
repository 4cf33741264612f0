//! Central finite-difference check of tape gradients.

use super::param::{ParamId, ParamStore};
use super::tape::{Tape, Var};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Relative-error denominators are floored at this fraction of the checked
/// function's magnitude (at least 1), so that entries which are zero up to
/// finite-difference round-off do not dominate the comparison.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(analytic, numeric)` at the worst entry.
    pub worst: (f64, f64),
    /// Number of scalar parameter entries compared.
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences over every entry of `params`.
pub fn check_gradients<F>(store: &ParamStore<f64>, params: &[ParamId], step: f64, f: F) -> GradCheck
where
    F: Fn(&mut Tape<'_, f64>) -> Var,
{
    let (analytic, value) = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape);
        (tape.backward(out), tape.scalar(out))
    };
    let floor = REL_FLOOR * value.abs().max(1.0);
    let eval = |s: &ParamStore<f64>| {
        let mut tape = Tape::new(s);
        let out = f(&mut tape);
        tape.scalar(out)
    };
    let mut probe = store.clone();
    let mut max_rel_error = 0.0f64;
    let mut worst = (0.0, 0.0);
    let mut checked = 0;
    for &id in params {
        let len = store.get(id).len();
        let grads = analytic.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len]);
        for i in 0..len {
            let orig = store.get(id).values[i];
            probe.get_mut(id).values[i] = orig + step;
            let plus = eval(&probe);
            probe.get_mut(id).values[i] = orig - step;
            let minus = eval(&probe);
            probe.get_mut(id).values[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let e = relative_error(grads[i], numeric, floor);
            if e > max_rel_error {
                max_rel_error = e;
                worst = (grads[i], numeric);
            }
            checked += 1;
        }
    }
    GradCheck {
        max_rel_error,
        worst,
        checked,
    }
}
