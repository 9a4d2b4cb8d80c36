//! Equilibria of the smooth halves, their spectra, and the Hopf locus.

use rayon::prelude::*;
use thiserror::Error;

use crate::curve::{BifurcationCurve, CurveKind, CurveSample};
use crate::linalg::{Spectrum, Vec2};
use crate::roots::{self, RootError, RootOptions};
use crate::system::{NormalFormSystem, PiecewiseSystem, Side, SystemError};

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
/// Tolerance on the switching function when deciding admissibility.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;
/// `|ν|` below which a focus is reported as a numerical center.
pub const CENTER_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian at {at:?}")]
    SingularJacobian { at: Vec2 },
    #[error("ν does not change sign for η in [{lo}, {hi}] at μ = {mu}")]
    NoBracket { mu: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    FocusStable,
    FocusUnstable,
    Center,
    Node,
    Saddle,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::FocusStable => "focus-stable",
            Classification::FocusUnstable => "focus-unstable",
            Classification::Center => "center",
            Classification::Node => "node",
            Classification::Saddle => "saddle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumReport {
    pub location: Vec2,
    pub half: Side,
    pub admissible: bool,
    /// Real part of the eigenvalues (mean of the two when real).
    pub nu: f64,
    /// Imaginary part; 0 for a real spectrum.
    pub xi: f64,
    pub det: f64,
    pub classification: Classification,
    pub residual: f64,
}

impl EquilibriumReport {
    pub fn is_attracting(&self) -> bool {
        self.det > 0.0 && self.nu < 0.0
    }
}

/// Classification from the trace/determinant of a 2×2 Jacobian.
pub fn classify(nu: f64, xi: f64, det: f64) -> Classification {
    if det < 0.0 {
        Classification::Saddle
    } else if xi > 0.0 {
        if nu.abs() < CENTER_TOL {
            Classification::Center
        } else if nu < 0.0 {
            Classification::FocusStable
        } else {
            Classification::FocusUnstable
        }
    } else {
        Classification::Node
    }
}

/// Newton's method on one half-system, damped by halving whenever the
/// residual grows.
pub fn find_equilibrium(
    sys: &PiecewiseSystem,
    half: Side,
    guess: Vec2,
    params: &[f64],
) -> Result<EquilibriumReport, EquilibriumError> {
    sys.check_params(params)?;
    let mut p = guess;
    let mut f = sys.field(half, p, params);
    let mut res = f.max_abs();
    let mut iterations = 0;
    while res > NEWTON_TOL {
        if iterations >= NEWTON_MAX_ITER {
            return Err(EquilibriumError::NoConvergence { iterations, residual: res });
        }
        iterations += 1;
        let j = sys.jacobian(half, p, params);
        let step = j.solve(-f).ok_or(EquilibriumError::SingularJacobian { at: p })?;
        let mut lambda = 1.0;
        loop {
            let trial = p + step * lambda;
            let ft = sys.field(half, trial, params);
            let rt = ft.max_abs();
            if rt < res || lambda < 1e-4 {
                p = trial;
                f = ft;
                res = rt;
                break;
            }
            lambda *= 0.5;
        }
        if !res.is_finite() {
            return Err(EquilibriumError::NoConvergence { iterations, residual: res });
        }
    }
    Ok(report_at(sys, half, p, params, res))
}

fn report_at(sys: &PiecewiseSystem, half: Side, p: Vec2, params: &[f64], residual: f64) -> EquilibriumReport {
    let j = sys.jacobian(half, p, params);
    let (nu, xi) = match j.spectrum() {
        Spectrum::Complex { re, im } => (re, im),
        Spectrum::Real { lo, hi } => (0.5 * (lo + hi), 0.0),
    };
    let det = j.det();
    let h = sys.switch_value(p, params);
    let admissible = match half {
        Side::Left => h <= ADMISSIBILITY_TOL,
        Side::Right => h >= -ADMISSIBILITY_TOL,
    };
    EquilibriumReport { location: p, half, admissible, nu, xi, det, classification: classify(nu, xi, det), residual }
}

/// Continues an equilibrium along a parameter path, each solve seeded by the
/// previous solution.
pub fn admissibility_scan(
    sys: &PiecewiseSystem,
    half: Side,
    path: &[Vec<f64>],
    guess: Vec2,
) -> Result<Vec<EquilibriumReport>, EquilibriumError> {
    let mut out = Vec::with_capacity(path.len());
    let mut g = guess;
    for params in path {
        let r = find_equilibrium(sys, half, g, params)?;
        g = r.location;
        out.push(r);
    }
    Ok(out)
}

/// Indices `i` where admissibility changes between samples `i` and `i + 1`.
pub fn admissibility_changes(scan: &[EquilibriumReport]) -> Vec<usize> {
    scan.windows(2).enumerate().filter(|(_, w)| w[0].admissible != w[1].admissible).map(|(i, _)| i).collect()
}

/// First-order guess for the left equilibrium of a normal-form system.
fn nf_left_guess(nf: &NormalFormSystem, mu: f64, eta: f64) -> Vec2 {
    let delta = nf.delta_left(mu, eta);
    let x = -mu / delta;
    Vec2::new(x, -eta * x)
}

/// Left equilibrium of a normal-form system near the origin.
pub fn nf_left_equilibrium(nf: &NormalFormSystem, mu: f64, eta: f64) -> Result<EquilibriumReport, EquilibriumError> {
    find_equilibrium(nf, Side::Left, nf_left_guess(nf, mu, eta), &[mu, eta])
}

/// ν of the left equilibrium at `(μ, η)`.
pub fn left_nu(nf: &NormalFormSystem, mu: f64, eta: f64) -> Result<f64, EquilibriumError> {
    nf_left_equilibrium(nf, mu, eta).map(|r| r.nu)
}

/// `η = h₁(μ)`: root of `ν(μ, ·)` for one `μ > 0`.
pub fn hopf_eta(nf: &NormalFormSystem, mu: f64) -> Result<f64, EquilibriumError> {
    let f = |eta: f64| left_nu(nf, mu, eta);
    // Coarse slope estimate from ν near η = 0 sets the search window.
    let d = 1e-3 * mu.max(1e-4);
    let nu0 = f(0.0)?;
    let slope = (f(d)? - f(-d)?) / (2.0 * d);
    let estimate = if slope != 0.0 { -nu0 / slope } else { 0.0 };
    let mut g = f;
    let f_est = g(estimate)?;
    let step = -0.1 * mu * f_est.signum() * slope.signum();
    let (lo, flo, hi, fhi) = roots::expand_bracket(&mut g, estimate, step, 1.6, 20).map_err(|e| match e {
        RootError::Eval(e) => e,
        RootError::NoBracket { lo, hi, .. } => EquilibriumError::NoBracket { mu, lo, hi },
        RootError::NoConvergence(n) => EquilibriumError::NoConvergence { iterations: n, residual: f64::NAN },
    })?;
    roots::brent_with_values(&mut g, lo, flo, hi, fhi, RootOptions { xtol: 1e-16, ftol: 1e-14, max_iter: 200 })
        .map_err(|e| match e {
            RootError::Eval(e) => e,
            RootError::NoBracket { .. } => EquilibriumError::NoBracket { mu, lo, hi },
            RootError::NoConvergence(n) => EquilibriumError::NoConvergence { iterations: n, residual: f64::NAN },
        })
}

/// Hopf locus over a grid of `μ > 0`; grid points are solved in parallel.
pub fn trace_h1(nf: &NormalFormSystem, mu_grid: &[f64]) -> Result<BifurcationCurve, EquilibriumError> {
    let samples = mu_grid
        .par_iter()
        .map(|&mu| {
            let eta = hopf_eta(nf, mu)?;
            let r = nf_left_equilibrium(nf, mu, eta)?;
            let multiplier = if r.xi > 0.0 { (2.0 * std::f64::consts::PI * r.nu / r.xi).exp() } else { f64::NAN };
            Ok(CurveSample { mu, eta, eta2: f64::NAN, residual: r.nu, multiplier })
        })
        .collect::<Result<Vec<_>, EquilibriumError>>()?;
    Ok(BifurcationCurve::new(CurveKind::Hopf, samples))
}
