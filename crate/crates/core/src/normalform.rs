//! Reduction to companion normal form and the invariants `ω, a₀, τ_R, δ_R`.
//!
//! A raw system with a boundary equilibrium whose left eigenvalues are purely
//! imaginary is brought into the form
//!
//! ```text
//! ẋ = τ x + y + …,   ẏ = −μ − δ x + …,   switching at x = 0,   τ_L ≡ η
//! ```
//!
//! in four numerical stages: flatten the switching manifold (`X = H`),
//! shift the first parameter by `φ` so that `μ = 0` puts the left
//! equilibrium on the manifold, shift `Y` by `ψ` so that `Ẋ` vanishes at the
//! origin, and apply the companion change `ŷ = −dX + bY` with
//! `μ ↦ −b q μ`, `η ↦ a_L + d`. Coefficients are measured per parameter
//! value and cached.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use crate::curve::{BifurcationCurve, CurveSample, Frame};
use crate::equilibria::{self, EquilibriumError};
use crate::linalg::{Mat2, Spectrum, Vec2};
use crate::numdiff;
use crate::system::{NormalFormSystem, PiecewiseSystem, Side, SystemError};

pub const LOCATE_TOL: f64 = 1e-10;
pub const GENERICITY_THRESHOLD: f64 = 1e-6;
/// Base step of the third-derivative stencils used for `a₀`.
pub const A0_STEP: f64 = 5e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalFormError {
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("left eigenvalues at the located point are real ({lo}, {hi})")]
    WrongSpectrum { lo: f64, hi: f64 },
    #[error("degenerate case: {condition} = {value:e}")]
    DegenerateCase { condition: &'static str, value: f64 },
    #[error("({mu}, {eta}) lies outside the range of the coordinate chart")]
    OutOfChartRange { mu: f64, eta: f64 },
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Boundary equilibrium with purely imaginary left eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodimTwoPoint {
    pub state: Vec2,
    pub params: [f64; 2],
    pub equilibrium_residual: f64,
    pub nu_residual: f64,
    pub switch_residual: f64,
    pub left_spectrum: Spectrum,
    pub right_spectrum: Spectrum,
}

fn codim2_residual(sys: &PiecewiseSystem, z: &[f64; 4]) -> [f64; 4] {
    let p = Vec2::new(z[0], z[1]);
    let q = [z[2], z[3]];
    let f = sys.field(Side::Left, p, &q);
    let nu = 0.5 * sys.jacobian(Side::Left, p, &q).trace();
    [f.x, f.y, sys.switch_value(p, &q), nu]
}

fn max_abs4(r: &[f64; 4]) -> f64 {
    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Solves `{f_L = 0, H = 0, ν = 0}` for the state and both parameters.
pub fn locate_codim2(
    sys: &PiecewiseSystem,
    guess_state: Vec2,
    guess_params: [f64; 2],
) -> Result<CodimTwoPoint, NormalFormError> {
    sys.check_params(&guess_params)?;
    let mut z = [guess_state.x, guess_state.y, guess_params[0], guess_params[1]];
    let mut r = codim2_residual(sys, &z);
    let mut res = max_abs4(&r);
    let max_iter = 50;
    let mut it = 0;
    while res > 1e-13 {
        if it == max_iter {
            break;
        }
        it += 1;
        let mut jac = Matrix4::zeros();
        for k in 0..4 {
            let h = 1e-7 * z[k].abs().max(1.0);
            let (mut zp, mut zm) = (z, z);
            zp[k] += h;
            zm[k] -= h;
            let (rp, rm) = (codim2_residual(sys, &zp), codim2_residual(sys, &zm));
            for i in 0..4 {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rhs = -Vector4::from_column_slice(&r);
        let step = jac.lu().solve(&rhs).ok_or(NormalFormError::NoConvergence { iterations: it, residual: res })?;
        let mut lambda = 1.0;
        loop {
            let mut trial = z;
            for k in 0..4 {
                trial[k] += lambda * step[k];
            }
            let rt = codim2_residual(sys, &trial);
            let res_t = max_abs4(&rt);
            if res_t < res || lambda < 1e-3 {
                z = trial;
                r = rt;
                res = res_t;
                break;
            }
            lambda *= 0.5;
        }
        if step.amax() < 1e-16 {
            break;
        }
    }
    if !(res <= LOCATE_TOL) {
        return Err(NormalFormError::NoConvergence { iterations: it, residual: res });
    }
    let state = Vec2::new(z[0], z[1]);
    let params = [z[2], z[3]];
    let left_spectrum = sys.jacobian(Side::Left, state, &params).spectrum();
    if let Spectrum::Real { lo, hi } = left_spectrum {
        return Err(NormalFormError::WrongSpectrum { lo, hi });
    }
    let f = sys.field(Side::Left, state, &params);
    Ok(CodimTwoPoint {
        state,
        params,
        equilibrium_residual: f.max_abs(),
        nu_residual: r[3].abs(),
        switch_residual: r[2].abs(),
        left_spectrum,
        right_spectrum: sys.jacobian(Side::Right, state, &params).spectrum(),
    })
}

/// Second and third partial derivatives of the left nonlinearity at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Partials {
    pub f_xx: f64,
    pub f_xy: f64,
    pub f_yy: f64,
    pub g_xx: f64,
    pub g_xy: f64,
    pub g_yy: f64,
    pub f_xxx: f64,
    pub f_xyy: f64,
    pub g_xxy: f64,
    pub g_yyy: f64,
}

/// First Lyapunov coefficient of a companion-form left half.
pub fn a0_from_partials(d: &Partials, omega: f64) -> f64 {
    let w2 = omega * omega;
    (d.f_xxx + d.g_xxy + w2 * d.f_xyy + w2 * d.g_yyy) / 16.0 - d.f_xy * (d.f_xx + w2 * d.f_yy) / 16.0
        + d.g_xy * (d.g_xx / w2 + d.g_yy) / 16.0
        + (d.f_xx * d.g_xx / w2 - w2 * d.f_yy * d.g_yy) / 16.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenericityFlag {
    pub name: &'static str,
    pub value: f64,
    /// `|value| − threshold`; positive when the condition holds.
    pub margin: f64,
}

impl GenericityFlag {
    fn new(name: &'static str, value: f64) -> Self {
        Self { name, value, margin: value.abs() - GENERICITY_THRESHOLD }
    }

    pub fn holds(&self) -> bool {
        self.margin > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantSet {
    pub omega: f64,
    pub a0: f64,
    pub tau_r: f64,
    pub delta_r: f64,
    pub delta_l: f64,
    pub partials: Partials,
    /// `a0`, `tau_r`, `dnu_deta`, `dxstar_dmu`.
    pub flags: Vec<GenericityFlag>,
}

impl InvariantSet {
    /// Slope of the Hopf locus at `μ = 0`.
    pub fn hopf_slope(&self) -> f64 {
        (self.partials.f_xx + self.partials.g_xy) / self.omega.powi(2)
    }

    /// Coefficient of `μ²` in `h₂ − h₁`.
    pub fn grazing_coefficient(&self) -> f64 {
        -2.0 * self.a0 / self.omega.powi(4)
    }

    /// Coefficient of `μ⁶` in `h₃ − h₂`.
    pub fn saddle_node_coefficient(&self) -> f64 {
        -8.0 * PI * PI * self.a0.powi(3) / (3.0 * self.omega.powi(12) * self.tau_r * self.tau_r)
    }

    /// `q₁ = 4π a₀ / ω⁵`, the `μ²` term of the left-half-flow multiplier.
    pub fn q1(&self) -> f64 {
        4.0 * PI * self.a0 / self.omega.powi(5)
    }

    pub fn flag(&self, name: &str) -> Option<&GenericityFlag> {
        self.flags.iter().find(|f| f.name == name)
    }
}

/// Invariants with the `a₀` stencils at base step `h`, without rejecting
/// degenerate cases.
pub fn measure_invariants(nf: &NormalFormSystem, h: f64) -> Result<InvariantSet, NormalFormError> {
    let q = [0.0, 0.0];
    let jl = nf.jacobian(Side::Left, Vec2::ZERO, &q);
    let jr = nf.jacobian(Side::Right, Vec2::ZERO, &q);
    let delta_l = jl.det();
    if !(delta_l > 0.0) {
        return Err(NormalFormError::DegenerateCase { condition: "delta_l", value: delta_l });
    }
    let omega = delta_l.sqrt();
    let f = |p: Vec2| nf.field(Side::Left, p, &q).x;
    let g = |p: Vec2| nf.field(Side::Left, p, &q).y;
    let d = |fun: &dyn Fn(Vec2) -> f64, i, j| numdiff::partial_richardson(&fun, Vec2::ZERO, i, j, h);
    let partials = Partials {
        f_xx: d(&f, 2, 0),
        f_xy: d(&f, 1, 1),
        f_yy: d(&f, 0, 2),
        g_xx: d(&g, 2, 0),
        g_xy: d(&g, 1, 1),
        g_yy: d(&g, 0, 2),
        f_xxx: d(&f, 3, 0),
        f_xyy: d(&f, 1, 2),
        g_xxy: d(&g, 2, 1),
        g_yyy: d(&g, 0, 3),
    };
    let a0 = a0_from_partials(&partials, omega);

    let de = 1e-4;
    let dnu_deta =
        (equilibria::left_nu(nf, 0.0, de)? - equilibria::left_nu(nf, 0.0, -de)?) / (2.0 * de);
    let dm = 1e-5;
    let xp = equilibria::nf_left_equilibrium(nf, dm, 0.0)?.location.x;
    let xm = equilibria::nf_left_equilibrium(nf, -dm, 0.0)?.location.x;
    let dxstar_dmu = (xp - xm) / (2.0 * dm);

    let tau_r = jr.trace();
    Ok(InvariantSet {
        omega,
        a0,
        tau_r,
        delta_r: jr.det(),
        delta_l,
        partials,
        flags: vec![
            GenericityFlag::new("a0", a0),
            GenericityFlag::new("tau_r", tau_r),
            GenericityFlag::new("dnu_deta", dnu_deta),
            GenericityFlag::new("dxstar_dmu", dxstar_dmu),
        ],
    })
}

/// [`measure_invariants`] at the default step, failing when `a₀` or `τ_R`
/// is below the genericity threshold.
pub fn compute_invariants(nf: &NormalFormSystem) -> Result<InvariantSet, NormalFormError> {
    let inv = measure_invariants(nf, A0_STEP)?;
    for name in ["a0", "tau_r"] {
        let flag = inv.flag(name).expect("flag present");
        if !flag.holds() {
            return Err(NormalFormError::DegenerateCase { condition: flag.name, value: flag.value });
        }
    }
    Ok(inv)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HopfCriticality {
    Supercritical,
    Subcritical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RightEquilibrium {
    Attracting,
    Repelling,
    Saddle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub hopf: HopfCriticality,
    /// `a₀ τ_R < 0`: the Hopf cycle grazes and then folds with a second orbit.
    pub saddle_node_branch: bool,
    /// Character of the admissible right equilibrium.
    pub right_equilibrium: RightEquilibrium,
}

pub fn criticality(inv: &InvariantSet) -> Scenario {
    let hopf = if inv.a0 < 0.0 { HopfCriticality::Supercritical } else { HopfCriticality::Subcritical };
    let right_equilibrium = if inv.delta_r < 0.0 {
        RightEquilibrium::Saddle
    } else if inv.tau_r < 0.0 {
        RightEquilibrium::Attracting
    } else {
        RightEquilibrium::Repelling
    };
    Scenario { hopf, saddle_node_branch: inv.a0 * inv.tau_r < 0.0, right_equilibrium }
}

/// Coefficients of the semi-reduced form at one raw parameter value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chart {
    pub raw: [f64; 2],
    pub mu: f64,
    pub eta: f64,
    /// Flattened `Y` at which `Ẋ(0, Y) = 0`.
    pub y_psi: f64,
    pub a_l: f64,
    pub b: f64,
    pub c_l: f64,
    pub d: f64,
}

const CACHE_LIMIT: usize = 1 << 14;

fn key(a: f64, b: f64) -> [u64; 2] {
    [a.to_bits(), b.to_bits()]
}

/// Numerical coordinate and parameter change from a raw system to its
/// companion normal form around a [`CodimTwoPoint`].
pub struct TransformRecord {
    sys: PiecewiseSystem,
    origin: CodimTwoPoint,
    /// Index of the raw state component kept as `Y`; the other is solved from `X = H`.
    keep: usize,
    /// `∂(μ, η)/∂(p₁, p₂)` at the codimension-two point.
    param_jacobian: Mat2,
    raw_cache: Mutex<HashMap<[u64; 2], Chart>>,
    nf_cache: Mutex<HashMap<[u64; 2], Chart>>,
}

impl std::fmt::Debug for TransformRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformRecord")
            .field("system", &self.sys.name())
            .field("origin", &self.origin)
            .field("param_jacobian", &self.param_jacobian)
            .finish()
    }
}

fn newton2(
    mut f: impl FnMut(Vec2) -> Result<Vec2, NormalFormError>,
    guess: Vec2,
    tol: f64,
) -> Result<Vec2, NormalFormError> {
    let mut z = guess;
    let mut r = f(z)?;
    for it in 0..40 {
        if r.max_abs() <= tol {
            return Ok(z);
        }
        let hx = 1e-7 * z.x.abs().max(1e-2);
        let hy = 1e-7 * z.y.abs().max(1e-2);
        let cx = (f(z + Vec2::new(hx, 0.0))? - f(z - Vec2::new(hx, 0.0))?) * (0.5 / hx);
        let cy = (f(z + Vec2::new(0.0, hy))? - f(z - Vec2::new(0.0, hy))?) * (0.5 / hy);
        let step = Mat2::from_cols(cx, cy)
            .solve(-r)
            .ok_or(NormalFormError::NoConvergence { iterations: it, residual: r.max_abs() })?;
        let mut lambda = 1.0;
        loop {
            let trial = z + step * lambda;
            let rt = f(trial)?;
            if rt.max_abs() < r.max_abs() || lambda < 1e-3 {
                z = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
        if step.max_abs() <= 1e-15 * z.max_abs().max(1e-12) {
            break;
        }
    }
    if r.max_abs() <= tol * 10.0 {
        Ok(z)
    } else {
        Err(NormalFormError::NoConvergence { iterations: 40, residual: r.max_abs() })
    }
}

fn d1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

impl TransformRecord {
    pub fn system(&self) -> &PiecewiseSystem {
        &self.sys
    }

    pub fn origin(&self) -> &CodimTwoPoint {
        &self.origin
    }

    /// `(X, Y)` of a raw state.
    pub fn flatten(&self, p: Vec2, raw: &[f64; 2]) -> Vec2 {
        let x = self.sys.switch_value(p, raw);
        Vec2::new(x, if self.keep == 1 { p.y } else { p.x })
    }

    /// Raw state with flattened coordinates `(X, Y)`.
    pub fn unflatten(&self, q: Vec2, raw: &[f64; 2]) -> Result<Vec2, NormalFormError> {
        let compose = |s: f64| if self.keep == 1 { Vec2::new(s, q.y) } else { Vec2::new(q.y, s) };
        let solved = 1 - self.keep;
        let mut s = if solved == 0 { self.origin.state.x } else { self.origin.state.y };
        for _ in 0..60 {
            let p = compose(s);
            let r = self.sys.switch_value(p, raw) - q.x;
            if r.abs() <= 1e-15 * q.x.abs().max(1.0) {
                return Ok(p);
            }
            let g = self.sys.switch_gradient(p, raw);
            let dh = if solved == 0 { g.x } else { g.y };
            if dh == 0.0 || !dh.is_finite() {
                break;
            }
            let ds = r / dh;
            s -= ds;
            if ds.abs() <= 1e-16 * s.abs().max(1e-300) {
                return Ok(compose(s));
            }
        }
        let p = compose(s);
        if (self.sys.switch_value(p, raw) - q.x).abs() <= 1e-12 {
            Ok(p)
        } else {
            Err(NormalFormError::NoConvergence { iterations: 60, residual: f64::NAN })
        }
    }

    /// Raw vector field in flattened coordinates: `(∇H·f, f_Y)`.
    pub fn flat_field(&self, side: Side, q: Vec2, raw: &[f64; 2]) -> Result<Vec2, NormalFormError> {
        let p = self.unflatten(q, raw)?;
        let f = self.sys.field(side, p, raw);
        let g = self.sys.switch_gradient(p, raw);
        Ok(Vec2::new(g.dot(f), if self.keep == 1 { f.y } else { f.x }))
    }

    /// `(φ(p₂), Y*)`: value of the first raw parameter placing the left
    /// equilibrium on the manifold, and that equilibrium's `Y`.
    pub fn phi(&self, p2: f64) -> Result<(f64, f64), NormalFormError> {
        let y0 = self.flatten(self.origin.state, &self.origin.params).y;
        let z = newton2(
            |z| self.flat_field(Side::Left, Vec2::new(0.0, z.x), &[z.y, p2]),
            Vec2::new(y0, self.origin.params[0]),
            1e-15,
        )?;
        Ok((z.y, z.x))
    }

    /// `ψ(p₁, p₂)`: the shift of `Y`, relative to `Y*(φ(p₂), p₂)`, that
    /// removes the constant term of `Ẋ`.
    pub fn psi(&self, raw: [f64; 2]) -> Result<f64, NormalFormError> {
        let (_, y_star) = self.phi(raw[1])?;
        Ok(self.chart(raw)?.y_psi - y_star)
    }

    fn solve_y_psi(&self, raw: &[f64; 2]) -> Result<f64, NormalFormError> {
        let mut y = self.flatten(self.origin.state, &self.origin.params).y;
        let fx = |y: f64| self.flat_field(Side::Left, Vec2::new(0.0, y), raw).map(|v| v.x);
        for _ in 0..50 {
            let r = fx(y)?;
            let h = 1e-7 * y.abs().max(1e-2);
            let slope = (fx(y + h)? - fx(y - h)?) / (2.0 * h);
            if slope == 0.0 {
                return Err(NormalFormError::DegenerateCase { condition: "b", value: 0.0 });
            }
            let dy = r / slope;
            y -= dy;
            if dy.abs() <= 1e-16 * y.abs().max(1e-12) || r == 0.0 {
                return Ok(y);
            }
        }
        if fx(y)?.abs() < 1e-13 {
            Ok(y)
        } else {
            Err(NormalFormError::NoConvergence { iterations: 50, residual: fx(y)?.abs() })
        }
    }

    fn compute_chart(&self, raw: [f64; 2]) -> Result<Chart, NormalFormError> {
        let y_psi = self.solve_y_psi(&raw)?;
        let fl = |q: Vec2| self.flat_field(Side::Left, q, &raw).unwrap_or(Vec2::new(f64::NAN, f64::NAN));
        let h = 1e-4;
        let along_x = |t: f64| fl(Vec2::new(t, y_psi));
        let along_y = |t: f64| fl(Vec2::new(0.0, y_psi + t));
        let a_l = d1(&|t| along_x(t).x, 0.0, h);
        let c_l = d1(&|t| along_x(t).y, 0.0, h);
        let b = d1(&|t| along_y(t).x, 0.0, h);
        let d = d1(&|t| along_y(t).y, 0.0, h);
        let f0 = fl(Vec2::new(0.0, y_psi));
        if !(a_l.is_finite() && b.is_finite() && c_l.is_finite() && d.is_finite() && f0.is_finite()) {
            return Err(NormalFormError::OutOfChartRange { mu: raw[0], eta: raw[1] });
        }
        Ok(Chart { raw, mu: -b * f0.y, eta: a_l + d, y_psi, a_l, b, c_l, d })
    }

    /// Chart at raw parameter value `raw`.
    pub fn chart(&self, raw: [f64; 2]) -> Result<Chart, NormalFormError> {
        let k = key(raw[0], raw[1]);
        if let Some(c) = self.raw_cache.lock().expect("cache lock").get(&k) {
            return Ok(*c);
        }
        let c = self.compute_chart(raw)?;
        let mut cache = self.raw_cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(k, c);
        Ok(c)
    }

    /// `(p₁, p₂) → (μ, η)`.
    pub fn params_to_nf(&self, raw: [f64; 2]) -> Result<(f64, f64), NormalFormError> {
        self.chart(raw).map(|c| (c.mu, c.eta))
    }

    /// Chart whose normal-form parameters are `(μ, η)`.
    pub fn chart_for_nf(&self, mu: f64, eta: f64) -> Result<Chart, NormalFormError> {
        let k = key(mu, eta);
        if let Some(c) = self.nf_cache.lock().expect("cache lock").get(&k) {
            return Ok(*c);
        }
        let inv = self.param_jacobian.inverse().ok_or(NormalFormError::DegenerateCase {
            condition: "parameter map determinant",
            value: self.param_jacobian.det(),
        })?;
        let p0 = Vec2::new(self.origin.params[0], self.origin.params[1]);
        let guess = p0 + inv * Vec2::new(mu, eta);
        let target = Vec2::new(mu, eta);
        let scale = mu.abs().max(eta.abs()).max(1e-3);
        let raw = newton2(
            |z| self.params_to_nf([z.x, z.y]).map(|(m, e)| Vec2::new(m, e) - target),
            guess,
            1e-13 * scale,
        )
        .map_err(|_| NormalFormError::OutOfChartRange { mu, eta })?;
        let c = self.chart([raw.x, raw.y])?;
        let mut cache = self.nf_cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(k, c);
        Ok(c)
    }

    /// `(μ, η) → (p₁, p₂)`.
    pub fn params_from_nf(&self, mu: f64, eta: f64) -> Result<(f64, f64), NormalFormError> {
        self.chart_for_nf(mu, eta).map(|c| (c.raw[0], c.raw[1]))
    }

    /// Raw state → normal-form state at raw parameters `raw`.
    pub fn state_to_nf(&self, p: Vec2, raw: [f64; 2]) -> Result<Vec2, NormalFormError> {
        let c = self.chart(raw)?;
        let q = self.flatten(p, &raw);
        Ok(Vec2::new(q.x, -c.d * q.x + c.b * (q.y - c.y_psi)))
    }

    /// Normal-form state → raw state at raw parameters `raw`.
    pub fn state_from_nf(&self, s: Vec2, raw: [f64; 2]) -> Result<Vec2, NormalFormError> {
        let c = self.chart(raw)?;
        self.unflatten(Self::flat_of(&c, s), &raw)
    }

    fn flat_of(c: &Chart, s: Vec2) -> Vec2 {
        Vec2::new(s.x, c.y_psi + (s.y + c.d * s.x) / c.b)
    }

    fn nf_field(&self, side: Side, s: Vec2, mu: f64, eta: f64) -> Result<Vec2, NormalFormError> {
        let c = self.chart_for_nf(mu, eta)?;
        let v = self.flat_field(side, Self::flat_of(&c, s), &c.raw)?;
        Ok(Vec2::new(v.x, -c.d * v.x + c.b * v.y))
    }

    /// The transformed system, parameterized by `(μ, η)`.
    pub fn normal_form(self: &Arc<Self>) -> Result<NormalFormSystem, NormalFormError> {
        let (l, r) = (Arc::clone(self), Arc::clone(self));
        let nan = Vec2::new(f64::NAN, f64::NAN);
        let sys = PiecewiseSystem::new(
            format!("{}-nf", self.sys.name()),
            &["mu", "eta"],
            move |p, q| l.nf_field(Side::Left, p, q[0], q[1]).unwrap_or(nan),
            move |p, q| r.nf_field(Side::Right, p, q[0], q[1]).unwrap_or(nan),
            |p, _| p.x,
        )
        .with_switch_gradient(|_, _| Vec2::new(1.0, 0.0));
        Ok(NormalFormSystem::new(sys)?)
    }

    /// Maps a normal-form curve to the raw parameter frame.
    pub fn curve_to_raw(&self, curve: &BifurcationCurve) -> Result<BifurcationCurve, NormalFormError> {
        if curve.frame == Frame::Raw {
            return Ok(curve.clone());
        }
        let samples = curve
            .samples
            .iter()
            .map(|s| {
                let (a, b) = self.params_from_nf(s.mu, s.eta)?;
                Ok(CurveSample { mu: a, eta: b, ..*s })
            })
            .collect::<Result<Vec<_>, NormalFormError>>()?;
        Ok(BifurcationCurve { kind: curve.kind, frame: Frame::Raw, samples })
    }
}

/// Builds the transformation around `pt`. The first raw parameter plays the
/// role of `μ` (moves the equilibrium across the manifold), the second that of `η`.
pub fn build_transform(sys: &PiecewiseSystem, pt: &CodimTwoPoint) -> Result<Arc<TransformRecord>, NormalFormError> {
    let g = sys.switch_gradient(pt.state, &pt.params);
    if g.max_abs() == 0.0 {
        return Err(NormalFormError::DegenerateCase { condition: "switching gradient", value: 0.0 });
    }
    let keep = if g.x.abs() >= g.y.abs() { 1 } else { 0 };
    let mut rec = TransformRecord {
        sys: sys.clone(),
        origin: *pt,
        keep,
        param_jacobian: Mat2::IDENTITY,
        raw_cache: Mutex::new(HashMap::new()),
        nf_cache: Mutex::new(HashMap::new()),
    };
    let c0 = rec.chart(pt.params)?;
    if c0.b.abs() <= GENERICITY_THRESHOLD {
        return Err(NormalFormError::DegenerateCase { condition: "b", value: c0.b });
    }
    let h = 1e-4;
    let [p1, p2] = pt.params;
    let col = |dp: Vec2| -> Result<Vec2, NormalFormError> {
        let (mp, ep) = rec.params_to_nf([p1 + dp.x, p2 + dp.y])?;
        let (mm, em) = rec.params_to_nf([p1 - dp.x, p2 - dp.y])?;
        Ok(Vec2::new(mp - mm, ep - em) * (0.5 / h))
    };
    let jm = col(Vec2::new(h, 0.0))?;
    let je = col(Vec2::new(0.0, h))?;
    if jm.x.abs() <= GENERICITY_THRESHOLD {
        return Err(NormalFormError::DegenerateCase { condition: "dmu/dp1", value: jm.x });
    }
    if je.y.abs() <= GENERICITY_THRESHOLD {
        return Err(NormalFormError::DegenerateCase { condition: "deta/dp2", value: je.y });
    }
    rec.param_jacobian = Mat2::from_cols(jm, je);
    Ok(Arc::new(rec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, example_maps};

    #[test]
    fn hand_built_cubic_recovers_a0() {
        for (a0, omega) in [(-1.0, 1.0), (0.3, 0.7), (25.0 / 88.0, 0.5f64.sqrt())] {
            let w2: f64 = omega * omega;
            let d = Partials {
                f_xx: 0.0,
                f_xy: 0.0,
                f_yy: 0.0,
                g_xx: 0.0,
                g_xy: 0.0,
                g_yy: 0.0,
                f_xxx: 6.0 * a0,
                f_xyy: 2.0 * a0 / w2,
                g_xxy: 2.0 * a0,
                g_yyy: 6.0 * a0 / w2,
            };
            assert!((a0_from_partials(&d, omega) - a0).abs() < 1e-15);
        }
    }

    #[test]
    fn example_invariants() {
        let inv = compute_invariants(&fixtures::example_nf()).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(inv.a0, 25.0 / 88.0) < 1e-5, "{}", inv.a0);
        assert!(rel(inv.omega, 0.5f64.sqrt()) < 1e-5);
        assert!(rel(inv.tau_r, -0.2) < 1e-5);
        assert!(rel(inv.delta_r, 0.25) < 1e-5);
        assert!(rel(inv.partials.f_xx, 250.0 / 1089.0) < 1e-6);
        assert!(rel(inv.partials.g_xy, 80.0 / 1089.0) < 1e-6);
        assert!(rel(inv.hopf_slope(), 20.0 / 33.0) < 1e-6);
        assert!(rel(inv.q1(), 20.19) < 1e-3);
        assert!(inv.flags.iter().all(|f| f.holds()));
        assert!((inv.flag("dnu_deta").unwrap().value - 0.5).abs() < 1e-6);
        assert!((inv.flag("dxstar_dmu").unwrap().value + 2.0).abs() < 1e-6);
    }

    #[test]
    fn a0_is_step_robust() {
        let nf = fixtures::example_nf();
        for h in [2e-3, 5e-3, 1e-2, 2e-2] {
            let a0 = measure_invariants(&nf, h).unwrap().a0;
            assert!(((a0 - 25.0 / 88.0) / (25.0 / 88.0)).abs() < 1e-5, "h = {h}: {a0}");
        }
    }

    #[test]
    fn cubic_fixture_recovers_a0() {
        let inv = compute_invariants(&fixtures::cubic_hopf(-1.0, 0.8)).unwrap();
        assert!((inv.a0 + 1.0).abs() < 1e-6, "{}", inv.a0);
        assert!((inv.omega - 0.8).abs() < 1e-10);
    }

    #[test]
    fn linear_left_half_is_degenerate() {
        let e = compute_invariants(&fixtures::linear_nf()).unwrap_err();
        assert!(matches!(e, NormalFormError::DegenerateCase { condition: "a0", .. }));
    }

    #[test]
    fn scenarios_follow_sign_table() {
        let inv = compute_invariants(&fixtures::example_nf()).unwrap();
        let s = criticality(&inv);
        assert_eq!(s.hopf, HopfCriticality::Subcritical);
        assert!(s.saddle_node_branch);
        assert_eq!(s.right_equilibrium, RightEquilibrium::Attracting);
        let other = InvariantSet { a0: -1.0, tau_r: -1.0, ..inv.clone() };
        let s = criticality(&other);
        assert_eq!(s.hopf, HopfCriticality::Supercritical);
        assert!(!s.saddle_node_branch);
        let saddle = InvariantSet { delta_r: -0.1, ..inv };
        assert_eq!(criticality(&saddle).right_equilibrium, RightEquilibrium::Saddle);
    }

    #[test]
    fn locates_raw_codim_two_point() {
        let raw = fixtures::example_raw();
        let pt = locate_codim2(&raw, Vec2::ZERO, [0.0, 0.0]).unwrap();
        assert!(pt.state.max_abs() < 1e-8 && pt.params[0].abs() < 1e-8 && pt.params[1].abs() < 1e-8);
        let pt = locate_codim2(&raw, Vec2::new(0.01, -0.02), [0.005, 0.03]).unwrap();
        assert!(pt.state.max_abs() < 1e-8 && pt.params[0].abs() < 1e-8 && pt.params[1].abs() < 1e-8);
        match pt.left_spectrum {
            Spectrum::Complex { re, im } => assert!(re.abs() < 1e-8 && (im - 0.5f64.sqrt()).abs() < 1e-8),
            s => panic!("{s:?}"),
        }
        match pt.right_spectrum {
            Spectrum::Complex { re, im } => {
                assert!((re + 0.1).abs() < 1e-8 && (im - 6f64.sqrt() / 5.0).abs() < 1e-8)
            }
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn real_spectrum_is_rejected() {
        // Left half a saddle-type focus search: eigenvalues ±1 at the origin.
        let sys = PiecewiseSystem::new(
            "saddle",
            &["a", "b"],
            |p, q| Vec2::new(p.y + q[1] * p.x, p.x - q[0]),
            |p, q| Vec2::new(p.y + q[1] * p.x, p.x - q[0]),
            |p, _| p.x,
        );
        let e = locate_codim2(&sys, Vec2::ZERO, [0.0, 0.0]).unwrap_err();
        assert!(matches!(e, NormalFormError::WrongSpectrum { .. }), "{e:?}");
    }

    fn example_transform() -> Arc<TransformRecord> {
        let raw = fixtures::example_raw();
        let pt = locate_codim2(&raw, Vec2::ZERO, [0.0, 0.0]).unwrap();
        build_transform(&raw, &pt).unwrap()
    }

    #[test]
    fn transform_matches_closed_forms() {
        let t = example_transform();
        for beta in [-0.05, 0.05] {
            let (phi, y_star) = t.phi(beta).unwrap();
            assert!((phi - 2.0 * beta / 15.0).abs() < 1e-8, "φ({beta}) = {phi}");
            assert!(y_star.abs() < 1e-10);
        }
        for (a, b) in [(0.01, 0.02), (-0.02, 0.05), (0.019, -0.29), (0.0, -0.1)] {
            assert!(t.psi([a, b]).unwrap().abs() < 1e-9);
            let (mu, eta) = t.params_to_nf([a, b]).unwrap();
            let (mu_w, eta_w) = example_maps::params_to_nf(a, b);
            assert!((mu - mu_w).abs() < 1e-8 && (eta - eta_w).abs() < 1e-8, "({mu}, {eta}) vs ({mu_w}, {eta_w})");
            let (a2, b2) = t.params_from_nf(mu, eta).unwrap();
            assert!((a2 - a).abs() < 1e-9 && (b2 - b).abs() < 1e-9);
            let p = Vec2::new(0.07, -0.03);
            let s = t.state_to_nf(p, [a, b]).unwrap();
            assert!((s - example_maps::state_to_nf(p, b)).max_abs() < 1e-8);
            assert!((t.state_from_nf(s, [a, b]).unwrap() - p).max_abs() < 1e-12);
        }
    }

    #[test]
    fn transformed_system_has_example_invariants() {
        let t = example_transform();
        let nf = t.normal_form().unwrap();
        let a = compute_invariants(&nf).unwrap();
        let b = compute_invariants(&fixtures::example_nf()).unwrap();
        assert!(((a.a0 - b.a0) / b.a0).abs() < 1e-5, "{} vs {}", a.a0, b.a0);
        assert!((a.omega - b.omega).abs() < 1e-8);
        let q = [0.01, -0.02];
        for p in [Vec2::new(-0.1, 0.05), Vec2::new(0.08, 0.02)] {
            for side in [Side::Left, Side::Right] {
                let d = nf.field(side, p, &q) - fixtures::example_nf().field(side, p, &q);
                assert!(d.max_abs() < 1e-8, "{d:?}");
            }
        }
    }
}
