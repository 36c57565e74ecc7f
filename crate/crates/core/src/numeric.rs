//! Root bracketing and bisection.

/// Root of `f` on `[lo, hi]` given `f(lo)` and `f(hi)` of opposite signs.
///
/// Iterates until the bracket collapses to adjacent floats or 400 halvings.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = f(lo);
    let lo_positive = f_lo > 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if (v > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick the endpoint with smaller residual
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Doubles `hi` from `start` until `f(hi)` has the sign opposite to `f(lo)`.
/// Returns `None` when no sign change is found below `limit`.
pub fn expand_upper<F: Fn(f64) -> f64>(f: &F, lo: f64, start: f64, limit: f64) -> Option<f64> {
    let lo_positive = f(lo) > 0.0;
    let mut hi = start.max(lo * 2.0).max(1e-300);
    while hi < limit {
        let v = f(hi);
        if v.is_finite() && (v > 0.0) != lo_positive {
            return Some(hi);
        }
        hi *= 2.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_square_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn expands_bracket() {
        let f = |x: f64| 100.0 - x;
        let hi = expand_upper(&f, 0.0, 1.0, 1e6).unwrap();
        assert!(hi >= 100.0);
        assert!(expand_upper(&|_x: f64| 1.0, 0.0, 1.0, 1e6).is_none());
    }
}
