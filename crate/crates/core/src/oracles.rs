//! Independent reference computations used by the test suites: adaptive
//! quadrature for checking analytic compensators and central finite
//! differences for checking analytic gradients. Nothing here is called on
//! any production path.

/// Adaptive Simpson integration of `f` over `[a, b]` to the given relative
/// tolerance (with a small absolute floor for near-zero integrals).
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }

    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(fa, fm, fb, b - a);
    let tol = rel_tol * whole.abs().max(1e-12);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Central finite difference of a scalar function of one coordinate of a
/// flat parameter vector.
pub fn central_difference(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    index: usize,
    h: f64,
) -> f64 {
    let mut p = params.to_vec();
    p[index] = params[index] + h;
    let plus = f(&p);
    p[index] = params[index] - h;
    let minus = f(&p);
    (plus - minus) / (2.0 * h)
}

/// Componentwise relative error with an absolute floor, the comparison
/// used by every gradient-vs-finite-difference check.
pub fn gradient_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
