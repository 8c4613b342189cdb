//! Bracketing scalar root finders.

use crate::error::{Error, Result};

/// A root estimate with the residual at that point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Brackets the root of a decreasing function by doubling outward from 0:
/// returns `(lo, hi, f(lo), f(hi))` with `f(lo) >= 0 >= f(hi)`.
pub fn bracket_decreasing(mut f: impl FnMut(f64) -> Result<f64>, limit: f64) -> Result<(f64, f64, f64, f64)> {
    let f0 = f(0.0)?;
    if f0 == 0.0 {
        return Ok((0.0, 0.0, 0.0, 0.0));
    }
    let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
    let (mut near, mut f_near) = (0.0, f0);
    let mut step = 1.0;
    while step <= limit {
        let x = dir * step;
        let fx = f(x)?;
        if fx.is_nan() {
            break;
        }
        if fx.signum() != f0.signum() || fx == 0.0 {
            return Ok(if dir > 0.0 {
                (near, x, f_near, fx)
            } else {
                (x, near, fx, f_near)
            });
        }
        near = x;
        f_near = fx;
        step *= 2.0;
    }
    Err(Error::Range { limit })
}

/// Bisection on `[lo, hi]` given `f(lo)` and `f(hi)` of opposite signs. Stops
/// when `|f| <= ftol` or the bracket is narrower than `xtol`.
pub fn bisect(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    mut flo: f64,
    fhi: f64,
    xtol: f64,
    ftol: f64,
) -> Result<Root> {
    if flo == 0.0 {
        return Ok(Root {
            x: lo,
            fx: 0.0,
            iterations: 0,
        });
    }
    if fhi == 0.0 {
        return Ok(Root {
            x: hi,
            fx: 0.0,
            iterations: 0,
        });
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoSolution(format!(
            "no sign change on [{lo}, {hi}]: f = {flo:e}, {fhi:e}"
        )));
    }
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for it in 1..=200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() < best.1.abs() {
            best = (mid, fm);
        }
        if fm == 0.0 || fm.abs() <= ftol || (hi - lo) <= xtol {
            return Ok(Root {
                x: mid,
                fx: fm,
                iterations: it,
            });
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(Root {
        x: best.0,
        fx: best.1,
        iterations: 200,
    })
}

/// Illinois-modified regula falsi on a sign-changing bracket.
#[allow(clippy::too_many_arguments)]
pub fn illinois(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    mut flo: f64,
    mut fhi: f64,
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<Root> {
    if flo.signum() == fhi.signum() && flo != 0.0 && fhi != 0.0 {
        return Err(Error::NoSolution(format!(
            "no sign change on [{lo}, {hi}]: f = {flo:e}, {fhi:e}"
        )));
    }
    let mut side = 0i8;
    let mut last = (lo, flo);
    for it in 1..=max_iter {
        if flo == 0.0 {
            return Ok(Root {
                x: lo,
                fx: 0.0,
                iterations: it,
            });
        }
        if fhi == 0.0 {
            return Ok(Root {
                x: hi,
                fx: 0.0,
                iterations: it,
            });
        }
        let x = (lo * fhi - hi * flo) / (fhi - flo);
        let fx = f(x)?;
        last = (x, fx);
        if fx.abs() <= ftol || (hi - lo).abs() <= xtol * (1.0 + x.abs()) {
            return Ok(Root { x, fx, iterations: it });
        }
        if fx.signum() == fhi.signum() {
            hi = x;
            fhi = fx;
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        } else {
            lo = x;
            flo = fx;
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::Iteration {
        what: format!("regula falsi (last x = {})", last.0),
        iterations: max_iter,
        residual: last.1.abs(),
    })
}
