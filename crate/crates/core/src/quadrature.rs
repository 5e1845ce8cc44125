//! One-dimensional quadrature used by measure evaluation and compensators.

/// Absolute tolerance per cell for adaptive Simpson integration.
pub const SIMPSON_TOL: f64 = 1e-10;

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson rule on a finite interval.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, abs_tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
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
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || (m - a) <= f64::EPSILON * a.abs().max(1.0) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Double-exponential (tanh-sinh) rule on a finite interval. Never
/// evaluates `f` at the endpoints, so integrable endpoint singularities are
/// fine.
pub fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -tanh_sinh(f, b, a, tol);
    }
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    const T_MAX: f64 = 4.0;
    let half_pi = std::f64::consts::FRAC_PI_2;

    // contribution of the symmetric node pair at parameter t (or the centre)
    let pair = |t: f64| -> f64 {
        let u = half_pi * t.sinh();
        let cu = u.cosh();
        let w = h * half_pi * t.cosh() / (cu * cu);
        if t == 0.0 {
            return w * f(c);
        }
        // distance from the nearer endpoint, computed without cancellation
        let d = h * (-u).exp() / cu;
        let mut s = 0.0;
        let xl = a + d;
        let xr = b - d;
        if xl > a && xl < b {
            s += f(xl);
        }
        if xr < b && xr > a {
            s += f(xr);
        }
        w * s
    };

    let mut step = 0.5;
    let mut sum = 0.0;
    let mut k = 0usize;
    loop {
        let t = k as f64 * step;
        if t > T_MAX {
            break;
        }
        sum += pair(t);
        k += 1;
    }
    let mut estimate = step * sum;
    for _level in 0..12 {
        step *= 0.5;
        let mut fresh = 0.0;
        let mut k = 1usize;
        loop {
            let t = k as f64 * step;
            if t > T_MAX {
                break;
            }
            fresh += pair(t);
            k += 2;
        }
        sum += fresh;
        let next = step * sum;
        let diff = (next - estimate).abs();
        estimate = next;
        if diff <= tol * estimate.abs().max(1.0) {
            break;
        }
    }
    estimate
}

/// Integral over `[lo, hi]` where either end may be infinite.
pub fn integrate(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    if lo == hi {
        return 0.0;
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => tanh_sinh(f, lo, hi, tol),
        (true, false) => {
            let g = |s: f64| {
                let one_minus = 1.0 - s;
                f(lo + s / one_minus) / (one_minus * one_minus)
            };
            tanh_sinh(&g, 0.0, 1.0, tol)
        }
        (false, true) => {
            let g = |s: f64| {
                let one_minus = 1.0 - s;
                f(hi - s / one_minus) / (one_minus * one_minus)
            };
            tanh_sinh(&g, 0.0, 1.0, tol)
        }
        (false, false) => integrate(f, lo, 0.0, tol) + integrate(f, 0.0, hi, tol),
    }
}

/// Composite trapezoid rule with step at most `step`.
pub fn trapezoid(f: &dyn Fn(f64) -> f64, a: f64, b: f64, step: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = ((b - a) / step).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}
