//! Small shared numerics: bracketed bisection.

/// Bisection on `[lo, hi]` for a root of `f`, assuming `f(lo)` and `f(hi)`
/// have opposite signs. `f_lo` is the already-computed value at `lo`. Stops
/// when the bracket width drops below `tol` (absolute) or the midpoint stops
/// moving in f64.
pub(crate) fn bisect(
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    tol: f64,
    f: impl Fn(f64) -> f64,
) -> f64 {
    debug_assert!(lo <= hi);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
