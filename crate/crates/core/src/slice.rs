//! Univariate stepping-out slice sampler with shrinkage.

use rand::{Rng, RngExt};

/// One slice-sampling transition from `x0` for the log density `log_f`.
///
/// `width` is the initial bracket width and `max_steps` bounds the number
/// of stepping-out expansions. `log_f` may return `-inf` outside the
/// support; `x0` must have finite log density.
pub fn slice_sample<R: Rng + ?Sized>(
    rng: &mut R,
    x0: f64,
    log_f: impl Fn(f64) -> f64,
    width: f64,
    max_steps: usize,
) -> f64 {
    let f0 = log_f(x0);
    debug_assert!(f0.is_finite(), "slice sampler started outside the support");
    let level = f0 + rng.random::<f64>().ln();

    let mut lo = x0 - width * rng.random::<f64>();
    let mut hi = lo + width;
    let j = (max_steps as f64 * rng.random::<f64>()).floor() as usize;
    let mut k = max_steps.saturating_sub(1) - j.min(max_steps.saturating_sub(1));
    let mut j = j;
    while j > 0 && log_f(lo) > level {
        lo -= width;
        j -= 1;
    }
    while k > 0 && log_f(hi) > level {
        hi += width;
        k -= 1;
    }

    loop {
        let x1 = lo + (hi - lo) * rng.random::<f64>();
        if log_f(x1) > level {
            return x1;
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
        if hi - lo < 1e-14 * (1.0 + x0.abs()) {
            return x0;
        }
    }
}
