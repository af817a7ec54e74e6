//! One-dimensional golden-section search.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes a unimodal `f` on `[lo, hi]` until the bracket is narrower than
/// `tol`. Returns the best point seen and its value; the endpoints are not
/// evaluated.
pub fn golden_section_min<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    if hi < lo {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    // 200 iterations shrink any finite bracket below one ulp.
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximizing counterpart of [`golden_section_min`].
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let (x, neg) = golden_section_min(|x| -f(x), lo, hi, tol);
    (x, -neg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_minimum() {
        let (x, fx) = golden_section_min(|x| (x - 1.3).powi(2) + 2.0, -4.0, 5.0, 1e-12);
        assert!((x - 1.3).abs() < 1e-6);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn finds_sine_maximum() {
        let (x, fx) = golden_section_max(f64::sin, 0.0, 3.0, 1e-12);
        assert!((x - std::f64::consts::FRAC_PI_2).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_bracket() {
        let (x, _) = golden_section_min(|x| (x + 0.5).abs(), 2.0, -2.0, 1e-12);
        assert!((x + 0.5).abs() < 1e-10);
    }
}
