//! Periodic orbits by section shooting, and the grazing and saddle-node loci.
//!
//! The section is the ray from the left equilibrium through the origin,
//! re-anchored at every parameter value; a section point is labelled by its
//! x-coordinate `ε`. The origin itself is the section point `ε = 0`, and
//! because the left field is tangent to the manifold exactly there, an orbit
//! grazes if and only if it passes through the origin.

use rayon::prelude::*;
use thiserror::Error;

use crate::curve::{BifurcationCurve, CurveKind, CurveSample};
use crate::equilibria::{self, EquilibriumError, EquilibriumReport};
use crate::flow::{self, FieldMode, FlowError, IntegratorOptions, ReturnResult, Section, SectionCoord};
use crate::linalg::Vec2;
use crate::normalform::{InvariantSet, NormalFormError, TransformRecord};
use crate::roots::{self, RootError, RootOptions};
use crate::system::{NormalFormSystem, Side};

/// Below this μ the saddle-node gap `h₂ − h₃ = O(μ⁶)` is under integration noise.
pub const MU_MIN_SADDLE_NODE: f64 = 3e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("no sign change of the defining function for η in [{lo}, {hi}] at μ = {mu}")]
    NoBracket { mu: f64, lo: f64, hi: f64 },
    #[error("the crossing-orbit branch has no fold at μ = {mu}")]
    NoFold { mu: f64 },
    #[error("μ = {mu} is below the resolvable range {min} for the saddle-node locus")]
    MuTooSmall { mu: f64, min: f64 },
    #[error("continuation stalled at μ = {mu}")]
    ContinuationStall { mu: f64 },
    #[error("section undefined: the left equilibrium at μ = {mu} is not strictly left of the manifold")]
    NoSection { mu: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
}

fn lift<E: Into<OrbitError>>(e: RootError<E>, mu: f64, lo: f64, hi: f64) -> OrbitError {
    match e {
        RootError::Eval(e) => e.into(),
        RootError::NoBracket { .. } => OrbitError::NoBracket { mu, lo, hi },
        RootError::NoConvergence(n) => OrbitError::NoConvergence { iterations: n, residual: f64::NAN },
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitOptions {
    pub integrator: IntegratorOptions,
    /// Fixed-point residual `|P(ε) − ε|` accepted by the shooting solver.
    pub shoot_tol: f64,
    pub max_iter: usize,
    /// `|m − 1|` below which an orbit is tagged neutral.
    pub neutral_tol: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self { integrator: IntegratorOptions::default(), shoot_tol: 1e-11, max_iter: 40, neutral_tol: 1e-6 }
    }
}

impl OrbitOptions {
    /// Tighter integration for the `O(μ⁶)` saddle-node gap.
    pub fn precise() -> Self {
        let integrator = IntegratorOptions { rtol: 1e-12, atol: 1e-15, ..IntegratorOptions::default() };
        Self { integrator, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Neutral,
}

impl Stability {
    pub fn from_multiplier(m: f64, tol: f64) -> Self {
        if (m - 1.0).abs() < tol {
            Stability::Neutral
        } else if m.abs() < 1.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitRecord {
    /// x-coordinate of the orbit's point on the section.
    pub section_coord: f64,
    pub period: f64,
    pub multiplier: f64,
    /// Maximum of the switching function along the orbit.
    pub graze_measure: f64,
    pub stability: Stability,
    /// `|P(ε) − ε|` at the returned point.
    pub residual: f64,
    pub mu: f64,
    pub eta: f64,
}

impl OrbitRecord {
    pub fn start(&self, section: &Section) -> Vec2 {
        section.point(self.section_coord)
    }
}

/// Section through the left equilibrium and the origin at `(μ, η)`.
pub fn section_at(nf: &NormalFormSystem, mu: f64, eta: f64) -> Result<(Section, EquilibriumReport), OrbitError> {
    let eq = equilibria::nf_left_equilibrium(nf, mu, eta)?;
    let e = eq.location;
    if !(e.x < 0.0) {
        return Err(OrbitError::NoSection { mu });
    }
    let dir = (Vec2::ZERO - e).normalized().ok_or(OrbitError::NoSection { mu })?;
    let j = nf.jacobian(Side::Left, e, &[mu, eta]);
    let orientation = if dir.cross(j * dir) < 0.0 { -1 } else { 1 };
    let extent = (20.0 * e.norm()).max(0.5);
    let sec = Section::new(e, dir, orientation, SectionCoord::Abscissa)
        .ok_or(OrbitError::NoSection { mu })?
        .with_max_extent(extent);
    Ok((sec, eq))
}

/// One return to the section from the point with x-coordinate `eps`.
pub fn return_map(
    nf: &NormalFormSystem,
    section: &Section,
    mu: f64,
    eta: f64,
    eps: f64,
    opts: &OrbitOptions,
) -> Result<ReturnResult, OrbitError> {
    Ok(flow::poincare_return(nf, &[mu, eta], section, eps, FieldMode::Piecewise, &opts.integrator)?)
}

fn record(
    nf: &NormalFormSystem,
    section: &Section,
    mu: f64,
    eta: f64,
    eps: f64,
    opts: &OrbitOptions,
) -> Result<OrbitRecord, OrbitError> {
    let r = return_map(nf, section, mu, eta, eps, opts)?;
    let start = section.point(eps);
    let graze = flow::min_signed_distance(nf, &[mu, eta], start, r.period, &opts.integrator)?;
    Ok(OrbitRecord {
        section_coord: eps,
        period: r.period,
        multiplier: r.derivative,
        graze_measure: graze,
        stability: Stability::from_multiplier(r.derivative, opts.neutral_tol),
        residual: (r.coord - eps).abs(),
        mu,
        eta,
    })
}

/// Periodic orbit by Newton on `P(ε) − ε` from `guess_eps`, using the
/// variational derivative of the return map; steps are halved whenever the
/// residual grows.
pub fn find_orbit(
    nf: &NormalFormSystem,
    mu: f64,
    eta: f64,
    guess_eps: f64,
    opts: &OrbitOptions,
) -> Result<OrbitRecord, OrbitError> {
    let (section, eq) = section_at(nf, mu, eta)?;
    let lo = eq.location.x;
    let mut eps = guess_eps;
    let mut r = return_map(nf, &section, mu, eta, eps, opts)?;
    let mut g = r.coord - eps;
    for it in 0..opts.max_iter {
        if g.abs() <= opts.shoot_tol {
            return record(nf, &section, mu, eta, eps, opts);
        }
        let slope = r.derivative - 1.0;
        if slope == 0.0 {
            return Err(OrbitError::NoConvergence { iterations: it, residual: g.abs() });
        }
        let step = -g / slope;
        let mut lambda = 1.0;
        loop {
            let trial = eps + lambda * step;
            let ok = trial > lo;
            if ok {
                if let Ok(rt) = return_map(nf, &section, mu, eta, trial, opts) {
                    let gt = rt.coord - trial;
                    if gt.abs() < g.abs() || lambda < 1e-3 {
                        eps = trial;
                        r = rt;
                        g = gt;
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(OrbitError::NoConvergence { iterations: it, residual: g.abs() });
            }
        }
    }
    Err(OrbitError::NoConvergence { iterations: opts.max_iter, residual: g.abs() })
}

/// Periodic orbit with section coordinate bracketed in `[lo, hi]`.
pub fn find_orbit_bracketed(
    nf: &NormalFormSystem,
    mu: f64,
    eta: f64,
    lo: f64,
    hi: f64,
    opts: &OrbitOptions,
) -> Result<OrbitRecord, OrbitError> {
    let (section, _) = section_at(nf, mu, eta)?;
    let f = |e: f64| return_map(nf, &section, mu, eta, e, opts).map(|r| r.coord - e);
    let ropts = RootOptions { xtol: 1e-15, ftol: opts.shoot_tol * 0.1, max_iter: 200 };
    let eps = roots::brent(f, lo, hi, ropts).map_err(|e| lift(e, mu, lo, hi))?;
    record(nf, &section, mu, eta, eps, opts)
}

/// Hopf cycle for η on its existence side of `h₁`: the fixed point between
/// the equilibrium and the origin.
pub fn hopf_cycle(nf: &NormalFormSystem, mu: f64, eta: f64, opts: &OrbitOptions) -> Result<OrbitRecord, OrbitError> {
    let (section, eq) = section_at(nf, mu, eta)?;
    let x = eq.location.x;
    // Scan inward from the origin: near the focus the displacement is below
    // integration noise, so the bracket is taken at the first sign change.
    let g0 = displacement(nf, &section, mu, eta, 0.0, opts)?;
    let mut outer = 0.0;
    for k in 1..60 {
        let eps = x - x * 0.75f64.powi(k);
        let g = displacement(nf, &section, mu, eta, eps, opts)?;
        if g.signum() != g0.signum() {
            return find_orbit_bracketed(nf, mu, eta, eps, outer, opts);
        }
        outer = eps;
    }
    Err(OrbitError::NoBracket { mu, lo: x, hi: 0.0 })
}

/// Return-map derivative of a small orbit around the left equilibrium
/// (radius `rel·|x*|`): the linear multiplier at the Hopf point.
pub fn equilibrium_return_multiplier(
    nf: &NormalFormSystem,
    mu: f64,
    eta: f64,
    rel: f64,
    opts: &OrbitOptions,
) -> Result<f64, OrbitError> {
    let (section, eq) = section_at(nf, mu, eta)?;
    let eps = eq.location.x * (1.0 - rel);
    Ok(return_map(nf, &section, mu, eta, eps, opts)?.derivative)
}

/// `P(ε) − ε`, with trajectories that escape the section's reach counted as
/// an outward return at the edge of that reach.
fn displacement(
    nf: &NormalFormSystem,
    section: &Section,
    mu: f64,
    eta: f64,
    eps: f64,
    opts: &OrbitOptions,
) -> Result<f64, OrbitError> {
    match return_map(nf, section, mu, eta, eps, opts) {
        Ok(r) => Ok(r.coord - eps),
        Err(OrbitError::Flow(FlowError::LeftDomain { .. } | FlowError::Blowup { .. })) => {
            Ok(section.base.x + section.max_extent - eps)
        }
        Err(e) => Err(e),
    }
}

/// Return of the grazing point (the origin) at `(μ, η)`.
fn origin_return(nf: &NormalFormSystem, mu: f64, eta: f64, opts: &OrbitOptions) -> Result<f64, OrbitError> {
    let (section, _) = section_at(nf, mu, eta)?;
    displacement(nf, &section, mu, eta, 0.0, opts)
}

/// `h₂(μ)`: η at which the orbit through the origin is periodic.
/// `h1` and `predicted` (`h₂ − h₁` to leading order) seed the bracket.
pub fn grazing_eta(
    nf: &NormalFormSystem,
    mu: f64,
    h1: f64,
    predicted: f64,
    opts: &OrbitOptions,
) -> Result<f64, OrbitError> {
    let mut g = |eta: f64| origin_return(nf, mu, eta, opts);
    let centre = h1 + predicted;
    // The return of the origin grows with η: step against the sign of the residual.
    let step = -0.25 * predicted.abs().max(1e-12) * g(centre)?.signum();
    let (lo, flo, hi, fhi) =
        roots::expand_bracket(&mut g, centre, step, 1.6, 12).map_err(|e| lift(e, mu, centre, centre + 40.0 * step))?;
    let ropts = RootOptions { xtol: 1e-16, ftol: 0.0, max_iter: 200 };
    roots::brent_with_values(&mut g, lo, flo, hi, fhi, ropts).map_err(|e| lift(e, mu, lo, hi))
}

/// Grazing orbit at one μ.
pub fn grazing_point(
    nf: &NormalFormSystem,
    inv: &InvariantSet,
    mu: f64,
    opts: &OrbitOptions,
) -> Result<(f64, OrbitRecord), OrbitError> {
    let h1 = equilibria::hopf_eta(nf, mu)?;
    let h2 = grazing_eta(nf, mu, h1, inv.grazing_coefficient() * mu * mu, opts)?;
    let (section, _) = section_at(nf, mu, h2)?;
    let rec = record(nf, &section, mu, h2, 0.0, opts)?;
    Ok((h1, rec))
}

/// Grazing locus over a grid of `μ > 0`, solved in parallel.
pub fn trace_h2(
    nf: &NormalFormSystem,
    inv: &InvariantSet,
    mu_grid: &[f64],
    opts: &OrbitOptions,
) -> Result<BifurcationCurve, OrbitError> {
    let samples = mu_grid
        .par_iter()
        .map(|&mu| {
            let (_, rec) = grazing_point(nf, inv, mu, opts)?;
            Ok(CurveSample {
                mu,
                eta: rec.eta,
                eta2: 0.0,
                residual: rec.residual.max(rec.graze_measure.abs()),
                multiplier: rec.multiplier,
            })
        })
        .collect::<Result<Vec<_>, OrbitError>>()?;
    Ok(BifurcationCurve::new(CurveKind::Grazing, samples))
}

pub use crate::dmaps::predicted_fold;

/// Point of the crossing-orbit branch: `η₂ = η − h₂` such that the section
/// point `eps` is periodic.
pub fn branch_eta2(
    nf: &NormalFormSystem,
    mu: f64,
    h2: f64,
    eps: f64,
    scale: f64,
    opts: &OrbitOptions,
) -> Result<f64, OrbitError> {
    let mut g = |eta2: f64| -> Result<f64, OrbitError> {
        let eta = h2 + eta2;
        let (section, _) = section_at(nf, mu, eta)?;
        displacement(nf, &section, mu, eta, eps, opts)
    };
    let s = scale.abs().max(1e-15);
    let step = -0.5 * s * g(0.0)?.signum();
    let (lo, flo, hi, fhi) =
        roots::expand_bracket(&mut g, 0.0, step, 1.8, 30).map_err(|e| lift(e, mu, 0.0, 1e7 * step))?;
    let ropts = RootOptions { xtol: 1e-10 * s, ftol: 0.0, max_iter: 200 };
    roots::brent_with_values(&mut g, lo, flo, hi, fhi, ropts).map_err(|e| lift(e, mu, lo, hi))
}

/// A fold of the crossing-orbit branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoldPoint {
    pub mu: f64,
    pub eta: f64,
    pub eta2: f64,
    pub eps: f64,
    pub multiplier: f64,
    pub period: f64,
    /// `|P(ε) − ε|` of the fold orbit.
    pub residual: f64,
}

/// Samples `η₂(ε)` of the crossing branch on a log grid of `ε`.
pub fn branch_profile(
    nf: &NormalFormSystem,
    mu: f64,
    h2: f64,
    eps_grid: &[f64],
    scale: f64,
    opts: &OrbitOptions,
) -> Vec<Result<f64, OrbitError>> {
    eps_grid.par_iter().map(|&e| branch_eta2(nf, mu, h2, e, scale, opts)).collect()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Which extremum of `η₂(ε)` to refine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldKind {
    /// The saddle-node of the theorem: first turning point from grazing.
    Lower,
    /// The next turning point further out along the branch.
    Upper,
}

fn refine_extremum(
    nf: &NormalFormSystem,
    mu: f64,
    h2: f64,
    lo: f64,
    hi: f64,
    sign: f64,
    scale: f64,
    opts: &OrbitOptions,
) -> Result<(f64, f64), OrbitError> {
    let f = |t: f64| branch_eta2(nf, mu, h2, t.exp(), scale, opts).map(|v| sign * v);
    let (t, v) = roots::minimize(f, lo.ln(), hi.ln(), 1e-7, 100)?;
    Ok((t.exp(), sign * v))
}

/// Turning points of the crossing branch at one μ, found on an `ε` grid
/// spanning `[eps_lo, eps_hi]` and refined by Brent minimization.
pub fn branch_folds(
    nf: &NormalFormSystem,
    a0: f64,
    mu: f64,
    h2: f64,
    eps_lo: f64,
    eps_hi: f64,
    n_grid: usize,
    scale: f64,
    opts: &OrbitOptions,
) -> Result<Vec<(FoldKind, f64, f64)>, OrbitError> {
    let mut grid = log_grid(eps_lo, eps_hi, n_grid);
    let profile = branch_profile(nf, mu, h2, &grid, scale, opts);
    // The branch may end (escape, loss of bracket) before `eps_hi`: keep the
    // unbroken stretch from the grazing end.
    let mut vals = Vec::with_capacity(profile.len());
    for v in profile {
        match v {
            Ok(v) => vals.push(v),
            Err(e) if vals.is_empty() => return Err(e),
            Err(_) => break,
        }
    }
    grid.truncate(vals.len());
    if vals.len() < 3 {
        return Ok(Vec::new());
    }
    // For a₀ > 0 the branch leaves grazing towards smaller η: the first fold is a minimum.
    let first_sign = if a0 > 0.0 { 1.0 } else { -1.0 };
    let mut out = Vec::new();
    let mut sign = first_sign;
    for i in 1..grid.len() - 1 {
        let (a, b, c) = (sign * vals[i - 1], sign * vals[i], sign * vals[i + 1]);
        if b < a && b <= c {
            let (eps, eta2) = refine_extremum(nf, mu, h2, grid[i - 1], grid[i + 1], sign, scale, opts)?;
            let kind = if out.is_empty() { FoldKind::Lower } else { FoldKind::Upper };
            out.push((kind, eps, eta2));
            sign = -sign;
            if out.len() == 2 {
                break;
            }
        }
    }
    Ok(out)
}

fn fold_record(
    nf: &NormalFormSystem,
    mu: f64,
    h2: f64,
    eps: f64,
    eta2: f64,
    opts: &OrbitOptions,
) -> Result<FoldPoint, OrbitError> {
    let eta = h2 + eta2;
    let (section, _) = section_at(nf, mu, eta)?;
    let r = return_map(nf, &section, mu, eta, eps, opts)?;
    Ok(FoldPoint { mu, eta, eta2, eps, multiplier: r.derivative, period: r.period, residual: (r.coord - eps).abs() })
}

/// Saddle-node of the crossing-orbit branch at one μ (requires `a₀τ_R < 0`).
pub fn saddle_node_point(
    nf: &NormalFormSystem,
    inv: &InvariantSet,
    mu: f64,
    h2: f64,
    opts: &OrbitOptions,
) -> Result<FoldPoint, OrbitError> {
    if mu < MU_MIN_SADDLE_NODE {
        return Err(OrbitError::MuTooSmall { mu, min: MU_MIN_SADDLE_NODE });
    }
    if inv.a0 * inv.tau_r >= 0.0 {
        return Err(OrbitError::NoFold { mu });
    }
    let (eta2_pred, eps_pred) = predicted_fold(inv, mu);
    let (section, _) = section_at(nf, mu, h2)?;
    let eps_cap = 0.9 * section.base.x.abs();
    let lo = (eps_pred / 30.0).min(0.1 * eps_cap);
    let hi = (eps_pred * 30.0).min(eps_cap);
    let folds = branch_folds(nf, inv.a0, mu, h2, lo, hi, 24, eta2_pred, opts)?;
    let (_, eps, eta2) =
        *folds.iter().find(|f| f.0 == FoldKind::Lower).ok_or(OrbitError::NoFold { mu })?;
    fold_record(nf, mu, h2, eps, eta2, opts)
}

/// Saddle-node locus over a grid of μ, solved in parallel. `h2` supplies the
/// grazing η at each grid point (pass a traced grazing curve's values).
pub fn trace_h3(
    nf: &NormalFormSystem,
    inv: &InvariantSet,
    mu_grid: &[f64],
    opts: &OrbitOptions,
) -> Result<BifurcationCurve, OrbitError> {
    let samples = mu_grid
        .par_iter()
        .map(|&mu| {
            let h1 = equilibria::hopf_eta(nf, mu)?;
            let h2 = grazing_eta(nf, mu, h1, inv.grazing_coefficient() * mu * mu, opts)?;
            let fp = saddle_node_point(nf, inv, mu, h2, opts)?;
            Ok(CurveSample { mu, eta: fp.eta, eta2: fp.eta2, residual: fp.residual, multiplier: fp.multiplier })
        })
        .collect::<Result<Vec<_>, OrbitError>>()?;
    Ok(BifurcationCurve::new(CurveKind::SaddleNode, samples))
}

/// Both turning points of the crossing branch at one μ, if present.
pub fn fold_pair(
    nf: &NormalFormSystem,
    inv: &InvariantSet,
    mu: f64,
    h2: f64,
    opts: &OrbitOptions,
) -> Result<(Option<FoldPoint>, Option<FoldPoint>), OrbitError> {
    let (eta2_pred, eps_pred) = predicted_fold(inv, mu);
    let (section, _) = section_at(nf, mu, h2)?;
    let eps_cap = 0.9 * section.base.x.abs();
    let lo = (eps_pred / 30.0).min(0.05 * eps_cap);
    let folds = branch_folds(nf, inv.a0, mu, h2, lo, eps_cap, 40, eta2_pred, opts)?;
    let mut lower = None;
    let mut upper = None;
    for (kind, eps, eta2) in folds {
        let fp = fold_record(nf, mu, h2, eps, eta2, opts)?;
        match kind {
            FoldKind::Lower => lower = Some(fp),
            FoldKind::Upper => upper = Some(fp),
        }
    }
    Ok((lower, upper))
}

/// Cusp where the two fold branches of the crossing orbits merge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CuspPoint {
    pub mu: f64,
    pub eta: f64,
    pub eps: f64,
}

/// Extended saddle-node trace: lower and upper fold branches over `mu_grid`
/// (points where a branch is absent are skipped).
pub fn trace_fold_branches(
    nf: &NormalFormSystem,
    inv: &InvariantSet,
    mu_grid: &[f64],
    opts: &OrbitOptions,
) -> Result<(BifurcationCurve, BifurcationCurve), OrbitError> {
    let pairs = mu_grid
        .par_iter()
        .map(|&mu| {
            let h1 = equilibria::hopf_eta(nf, mu)?;
            let h2 = grazing_eta(nf, mu, h1, inv.grazing_coefficient() * mu * mu, opts)?;
            fold_pair(nf, inv, mu, h2, opts)
        })
        .collect::<Result<Vec<_>, OrbitError>>()?;
    let sample = |f: &FoldPoint| CurveSample {
        mu: f.mu,
        eta: f.eta,
        eta2: f.eta2,
        residual: f.residual,
        multiplier: f.multiplier,
    };
    let lower = pairs.iter().filter_map(|p| p.0.as_ref().map(sample)).collect();
    let upper = pairs.iter().filter_map(|p| p.1.as_ref().map(sample)).collect();
    Ok((BifurcationCurve::new(CurveKind::SaddleNode, lower), BifurcationCurve::new(CurveKind::SaddleNode, upper)))
}

/// Locates the cusp by bisection in μ on the presence of both fold branches,
/// starting from `mu_lo` (both present) and `mu_hi` (neither present).
pub fn locate_cusp(
    nf: &NormalFormSystem,
    inv: &InvariantSet,
    mut mu_lo: f64,
    mut mu_hi: f64,
    mu_tol: f64,
    opts: &OrbitOptions,
) -> Result<CuspPoint, OrbitError> {
    let probe = |mu: f64| -> Result<(Option<FoldPoint>, Option<FoldPoint>), OrbitError> {
        let h1 = equilibria::hopf_eta(nf, mu)?;
        let h2 = grazing_eta(nf, mu, h1, inv.grazing_coefficient() * mu * mu, opts)?;
        fold_pair(nf, inv, mu, h2, opts)
    };
    let mut last = match probe(mu_lo)? {
        (Some(l), Some(u)) => (l, u),
        _ => return Err(OrbitError::NoFold { mu: mu_lo }),
    };
    if let (Some(_), Some(_)) = probe(mu_hi)? {
        return Err(OrbitError::ContinuationStall { mu: mu_hi });
    }
    while mu_hi - mu_lo > mu_tol {
        let mid = 0.5 * (mu_lo + mu_hi);
        // An isolated section failure is retried slightly off the midpoint.
        let width = mu_hi - mu_lo;
        let mut tries = [mid, mid + 0.1 * width, mid - 0.1 * width].into_iter().map(|m| (m, probe(m)));
        let (at, found) = tries.by_ref().find(|(_, r)| r.is_ok()).unwrap_or_else(|| (mid, probe(mid)));
        match found? {
            (Some(l), Some(u)) => {
                mu_lo = at;
                last = (l, u);
            }
            _ => mu_hi = at,
        }
    }
    let (l, u) = last;
    Ok(CuspPoint { mu: 0.5 * (mu_lo + mu_hi), eta: 0.5 * (l.eta + u.eta), eps: 0.5 * (l.eps + u.eps) })
}

/// Maps normal-form curves to the raw parameter frame.
pub fn bifurcation_set_raw(
    transform: &TransformRecord,
    curves: &[BifurcationCurve],
) -> Result<Vec<BifurcationCurve>, OrbitError> {
    curves.iter().map(|c| transform.curve_to_raw(c).map_err(OrbitError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::normalform::compute_invariants;
    use std::f64::consts::PI;

    fn setup() -> (NormalFormSystem, InvariantSet) {
        let nf = fixtures::example_nf();
        let inv = compute_invariants(&nf).unwrap();
        (nf, inv)
    }

    #[test]
    fn hopf_cycle_radius_grows_like_square_root() {
        let (nf, _) = setup();
        let opts = OrbitOptions::default();
        let mu = 0.01;
        let h1 = equilibria::hopf_eta(&nf, mu).unwrap();
        let pts: Vec<(f64, f64)> = [2e-7, 6e-7, 2e-6, 6e-6, 2e-5]
            .iter()
            .map(|&d| {
                let eta = h1 - d;
                let (_, eq) = section_at(&nf, mu, eta).unwrap();
                let rec = hopf_cycle(&nf, mu, eta, &opts).unwrap();
                assert!(rec.multiplier > 1.0);
                (d.ln(), (rec.section_coord - eq.location.x).ln())
            })
            .collect();
        let n = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope - 0.5).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn multiplier_at_hopf_point_and_its_eta_derivative() {
        let (nf, inv) = setup();
        let opts = OrbitOptions::default();
        let mu = 0.01;
        let h1 = equilibria::hopf_eta(&nf, mu).unwrap();
        let m = equilibrium_return_multiplier(&nf, mu, h1, 1e-3, &opts).unwrap();
        assert!((m - 1.0).abs() < 2e-3, "m = {m}");
        let d = 1e-4;
        let mp = equilibrium_return_multiplier(&nf, mu, h1 + d, 1e-3, &opts).unwrap();
        let mm = equilibrium_return_multiplier(&nf, mu, h1 - d, 1e-3, &opts).unwrap();
        let slope = (mp - mm) / (2.0 * d);
        let expected = PI / inv.omega;
        assert!((slope / expected - 1.0).abs() < 0.05, "dm/dη = {slope}, expected {expected}");
    }

    #[test]
    fn periodic_orbit_closes_after_one_period() {
        let (nf, _) = setup();
        let opts = OrbitOptions::default();
        let (mu, eta) = (0.02, 0.0093549533 - 1e-4);
        let rec = hopf_cycle(&nf, mu, eta, &opts).unwrap();
        let (section, _) = section_at(&nf, mu, eta).unwrap();
        let p0 = rec.start(&section);
        let end = flow::integrate(&nf, &[mu, eta], p0, rec.period, &opts.integrator, false).unwrap().endpoint;
        assert!((end - p0).norm() < 1e-7, "gap {}", (end - p0).norm());
        let again = find_orbit(&nf, mu, eta, rec.section_coord * 1.01, &opts).unwrap();
        assert!((again.section_coord - rec.section_coord).abs() < 1e-7);
    }

    #[test]
    fn grazing_locus_is_quadratic_below_hopf() {
        let (nf, inv) = setup();
        let opts = OrbitOptions::default();
        for mu in [0.005, 0.01] {
            let (h1, rec) = grazing_point(&nf, &inv, mu, &opts).unwrap();
            let c = (rec.eta - h1) / (mu * mu);
            assert!((c / (-25.0 / 11.0) - 1.0).abs() < 0.02, "coefficient {c}");
            assert!(rec.graze_measure.abs() < 1e-8, "graze {}", rec.graze_measure);
            assert!(rec.residual < 1e-9);
        }
    }

    #[test]
    fn saddle_node_near_leading_order_with_unit_multiplier() {
        let (nf, inv) = setup();
        let opts = OrbitOptions::precise();
        let mu = 0.05;
        let (h1, g) = grazing_point(&nf, &inv, mu, &opts).unwrap();
        let fp = saddle_node_point(&nf, &inv, mu, g.eta, &opts).unwrap();
        assert!((fp.multiplier - 1.0).abs() < 5e-3, "m = {}", fp.multiplier);
        let predicted = inv.saddle_node_coefficient() * mu.powi(6);
        assert!((fp.eta2 / predicted - 1.0).abs() < 0.25, "η₂ = {}, predicted {predicted}", fp.eta2);
        assert!(fp.eta < g.eta && g.eta < h1);
    }

    #[test]
    fn saddle_node_errors() {
        let (nf, inv) = setup();
        let opts = OrbitOptions::precise();
        assert!(matches!(saddle_node_point(&nf, &inv, 1e-3, 0.0, &opts), Err(OrbitError::MuTooSmall { .. })));
        let mu = 0.12;
        let (_, g) = grazing_point(&nf, &inv, mu, &opts).unwrap();
        assert_eq!(saddle_node_point(&nf, &inv, mu, g.eta, &opts), Err(OrbitError::NoFold { mu }));
    }

    #[test]
    fn fold_branches_merge_in_a_cusp() {
        let (nf, inv) = setup();
        let opts = OrbitOptions::precise();
        let cusp = locate_cusp(&nf, &inv, 0.08, 0.12, 2e-4, &opts).unwrap();
        assert!(cusp.mu > 0.09 && cusp.mu < 0.1, "{cusp:?}");
        let (alpha, beta) = fixtures::example_maps::params_from_nf(cusp.mu, cusp.eta);
        assert!((alpha - 0.019).abs() < 5e-3 && (beta + 0.29).abs() < 5e-3, "({alpha}, {beta})");
    }
}
