//! Univariate slice sampling with stepping out and shrinkage (Neal, 2003).

use rand::Rng;

/// Work done by one slice-sampling update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SliceCounts {
    pub evaluations: u64,
    pub step_outs: u64,
    pub shrinks: u64,
}

/// One slice-sampling move from `x0` for the log density `ln_f`.
///
/// `ln_f` must return `−∞` outside the support; stepping out is unlimited
/// and stops as soon as an end point leaves the slice, which bounded
/// supports guarantee.
pub fn slice_step<F, R>(x0: f64, ln_f: F, width: f64, rng: &mut R) -> (f64, SliceCounts)
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    let mut counts = SliceCounts::default();
    let mut eval = |x: f64| {
        counts.evaluations += 1;
        ln_f(x)
    };
    let f0 = eval(x0);
    debug_assert!(
        f0.is_finite(),
        "slice sampler started outside the support at {x0}"
    );
    let level = f0 - (-(1.0 - rng.random::<f64>()).ln());

    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    while eval(left) > level {
        left -= width;
        counts.step_outs += 1;
    }
    while eval(right) > level {
        right += width;
        counts.step_outs += 1;
    }
    loop {
        let x1 = left + (right - left) * rng.random::<f64>();
        if eval(x1) > level {
            return (x1, counts);
        }
        counts.shrinks += 1;
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
    }
}
