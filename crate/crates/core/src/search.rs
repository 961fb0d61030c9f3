//! One-dimensional maximization of concave functions on a closed interval.

/// 1/phi
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximizer of a concave (unimodal) `f` on
/// `[lo, hi]`, stopping once the bracket is narrower than `tol`. Both end
/// points are compared against the interior estimate, so a maximum sitting on
/// the boundary is returned exactly. `tol` is raised to a few ulps of the
/// bracket when it is finer than `f64` can resolve there.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    debug_assert!(lo <= hi, "empty bracket [{lo}, {hi}]");
    let tol = tol.max(4.0 * f64::EPSILON * lo.abs().max(hi.abs()));
    if hi - lo <= tol {
        let x = 0.5 * (lo + hi);
        return best_of(&mut f, &[lo, x, hi]);
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    best_of(&mut f, &[lo, 0.5 * (a + b), hi])
}

fn best_of<F: FnMut(f64) -> f64>(f: &mut F, xs: &[f64]) -> (f64, f64) {
    let mut best = (xs[0], f(xs[0]));
    for &x in &xs[1..] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}
