//! Scalar root finding and minimization on fallible objectives.
//!
//! The objectives in this crate are Poincaré returns and Newton solves that
//! can fail, so every routine takes `FnMut(f64) -> Result<f64, E>` and
//! propagates the first error instead of panicking.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RootError<E> {
    #[error("no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root finder did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error(transparent)]
    Eval(E),
}

#[derive(Clone, Copy, Debug)]
pub struct RootOptions {
    pub xtol: f64,
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { xtol: 1e-15, ftol: 0.0, max_iter: 200 }
    }
}

/// Root of `f` on a bracketing interval by Brent's method.
pub fn brent<E, F>(mut f: F, lo: f64, hi: f64, opts: RootOptions) -> Result<f64, RootError<E>>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let fa = f(lo).map_err(RootError::Eval)?;
    let fb = f(hi).map_err(RootError::Eval)?;
    brent_with_values(&mut f, lo, fa, hi, fb, opts)
}

/// Brent's method when `f(a)` and `f(b)` are already known.
pub fn brent_with_values<E, F>(
    f: &mut F,
    a0: f64,
    fa0: f64,
    b0: f64,
    fb0: f64,
    opts: RootOptions,
) -> Result<f64, RootError<E>>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let (mut a, mut b, mut fa, mut fb) = (a0, b0, fa0, fb0);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoBracket { lo: a0, hi: b0, f_lo: fa0, f_hi: fb0 });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..opts.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * opts.xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 || fb.abs() <= opts.ftol {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b).map_err(RootError::Eval)?;
    }
    Err(RootError::NoConvergence(opts.max_iter))
}

/// Grows an interval geometrically from `start` in direction `step` until `f`
/// changes sign. Returns `(lo, f_lo, hi, f_hi)` with `lo < hi`.
pub fn expand_bracket<E, F>(
    f: &mut F,
    start: f64,
    step: f64,
    growth: f64,
    max_expansions: usize,
) -> Result<(f64, f64, f64, f64), RootError<E>>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let f0 = f(start).map_err(RootError::Eval)?;
    let (mut x_prev, mut f_prev) = (start, f0);
    let mut h = step;
    for _ in 0..max_expansions {
        let x = x_prev + h;
        let fx = f(x).map_err(RootError::Eval)?;
        if fx == 0.0 || fx.signum() != f_prev.signum() {
            return Ok(if x < x_prev { (x, fx, x_prev, f_prev) } else { (x_prev, f_prev, x, fx) });
        }
        x_prev = x;
        f_prev = fx;
        h *= growth;
    }
    let (lo, hi) = if start < x_prev { (start, x_prev) } else { (x_prev, start) };
    Err(RootError::NoBracket { lo, hi, f_lo: f0, f_hi: f_prev })
}

/// Minimum of a unimodal function on `[lo, hi]` by Brent's parabolic /
/// golden-section search. Returns `(x_min, f_min)`.
pub fn minimize<E, F>(mut f: F, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> Result<(f64, f64), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = 1e-10 * x.abs() + 0.5 * xtol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((x, fx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn ok(f: impl Fn(f64) -> f64) -> impl FnMut(f64) -> Result<f64, Infallible> {
        move |x| Ok(f(x))
    }

    #[test]
    fn brent_finds_cube_root() {
        let r = brent(ok(|x| x * x * x - 2.0), 0.0, 2.0, RootOptions::default()).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn brent_handles_three_halves_kink() {
        // C^1 function with an x^{3/2} kink at the root, like a grazing return.
        let g = |x: f64| if x > 0.0 { x + x.powf(1.5) } else { x };
        let r = brent(ok(move |x| g(x - 0.3)), -1.0, 1.0, RootOptions::default()).unwrap();
        assert!((r - 0.3).abs() < 1e-14);
    }

    #[test]
    fn brent_reports_missing_bracket() {
        let e = brent(ok(|x| x * x + 1.0), -1.0, 1.0, RootOptions::default()).unwrap_err();
        assert!(matches!(e, RootError::NoBracket { .. }));
    }

    #[test]
    fn expansion_then_brent() {
        let mut f = ok(|x| x - 7.5);
        let (lo, flo, hi, fhi) = expand_bracket(&mut f, 0.0, 0.1, 2.0, 60).unwrap();
        assert!(lo <= 7.5 && 7.5 <= hi);
        let r = brent_with_values(&mut f, lo, flo, hi, fhi, RootOptions::default()).unwrap();
        assert!((r - 7.5).abs() < 1e-13);
        let mut g = ok(|x| x + 3.0);
        let (lo, _, hi, _) = expand_bracket(&mut g, 0.0, -0.5, 2.0, 60).unwrap();
        assert!(lo <= -3.0 && -3.0 <= hi);
    }

    #[test]
    fn minimize_parabola() {
        let (x, fx) = minimize(ok(|x| (x - 0.2).powi(2) - 1.0), -1.0, 1.0, 1e-10, 200).unwrap();
        assert!((x - 0.2).abs() < 1e-8);
        assert!((fx + 1.0).abs() < 1e-15);
    }
}
