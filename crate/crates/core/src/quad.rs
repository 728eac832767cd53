//! Adaptive Simpson quadrature with a hard panel budget.

use crate::{Error, Result};

/// Maximum number of panel splits before giving up on an integral.
pub(crate) const PANEL_BUDGET: usize = 1 << 20;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` by adaptive
/// Simpson with Richardson extrapolation.
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    let mut panels = 0usize;
    refine(f, a, m, b, fa, fm, fb, whole, tol, &mut panels)
}

fn simpson(fa: f64, fm: f64, fb: f64, width: f64) -> f64 {
    width * (fa + 4.0 * fm + fb) / 6.0
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    m: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    panels: &mut usize,
) -> Result<f64> {
    *panels += 2;
    if *panels > PANEL_BUDGET {
        return Err(Error::QuadratureBudget {
            tolerance: tol,
            panels: PANEL_BUDGET,
        });
    }
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (fl, fr) = (f(lm), f(rm));
    let left = simpson(fa, fl, fm, m - a);
    let right = simpson(fm, fr, fb, b - m);
    let refined = left + right;
    // Width underflow: the midpoint collides with an endpoint.
    let degenerate = lm <= a || rm >= b;
    if degenerate || (refined - whole).abs() <= 15.0 * tol {
        return Ok(refined + (refined - whole) / 15.0);
    }
    let half = 0.5 * tol;
    Ok(refine(f, a, lm, m, fa, fl, fm, left, half, panels)?
        + refine(f, m, rm, b, fm, fr, fb, right, half, panels)?)
}
