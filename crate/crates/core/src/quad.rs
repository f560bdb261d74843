//! Adaptive quadrature on finite intervals, with helpers for even integrands
//! on the whole line and for principal-value integrals with one symmetric
//! singularity.
//!
//! Adaptive Simpson with the standard 1/15 Richardson error estimate is
//! enough here: every integrand in this crate is smooth on the panels we
//! feed it (removable singularities are filled analytically by the caller).

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 60;

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || (b - a).abs() < 1e-300 {
        return Ok(left + right + err / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature(format!(
            "max depth reached on [{a}, {b}], residual {:e}",
            err.abs() / 15.0
        )));
    }
    let l = adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?;
    let r = adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?;
    Ok(l + r)
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Quadrature("tolerance must be positive".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    adapt(&f, a, b, fa, fm, fb, whole, tol, 0)
}

/// Integrate `f` over `[a, b]` after splitting into `panels` equal panels.
///
/// Oscillatory integrands (the kernel transform evaluated at large lags)
/// need an initial partition finer than one period so the Simpson error
/// estimate is meaningful on every panel.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    panels: usize,
    tol: f64,
) -> Result<f64> {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let per_panel = tol / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == panels { b } else { a + (i + 1) as f64 * h };
        total += integrate(&f, lo, hi, per_panel)?;
    }
    Ok(total)
}

/// Principal value of `int g(x)/(x - c) dx` over `[c - delta, c + delta]`,
/// evaluated as `int_0^delta (g(c+u) - g(c-u))/u du`.
///
/// `g_prime_at_c` fills the `u -> 0` limit of the symmetrized integrand.
pub fn principal_value_symmetric<G: Fn(f64) -> f64>(
    g: G,
    c: f64,
    delta: f64,
    g_prime_at_c: f64,
    tol: f64,
) -> Result<f64> {
    let integrand = move |u: f64| {
        if u == 0.0 {
            2.0 * g_prime_at_c
        } else {
            (g(c + u) - g(c - u)) / u
        }
    };
    integrate(integrand, 0.0, delta, tol)
}
