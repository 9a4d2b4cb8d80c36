//! Planar piecewise-smooth continuous systems.
//!
//! A [`PiecewiseSystem`] is two smooth vector fields glued along the zero set
//! of a switching function. The left field is active where the switching
//! function is `<= 0`, the right field where it is `> 0`. Vector fields are
//! plain callables; analytic Jacobians are optional and fall back to central
//! differences.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{Mat2, Vec2};
use crate::numdiff;
use crate::roots::{self, RootOptions};

pub type FieldFn = Arc<dyn Fn(Vec2, &[f64]) -> Vec2 + Send + Sync>;
pub type SwitchFn = Arc<dyn Fn(Vec2, &[f64]) -> f64 + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(Vec2, &[f64]) -> Mat2 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(Vec2, &[f64]) -> Vec2 + Send + Sync>;

pub const DEFAULT_CONTINUITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("no sign change of the switching function inside the sampled region")]
    NoManifoldInRegion,
    #[error("parameter vector has {got} entries, system `{system}` expects {expected}")]
    ParamLength { system: String, expected: usize, got: usize },
    #[error("system is not in companion normal form: {0}")]
    NotNormalForm(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// Sign of the switching function inside this half.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Ordered parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: impl Into<Vec<f64>>) -> Self {
        Self(values.into())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn with(&self, index: usize, value: f64) -> Self {
        let mut v = self.0.clone();
        v[index] = value;
        Self(v)
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<[f64; 2]> for ParamVector {
    fn from(v: [f64; 2]) -> Self {
        Self(v.to_vec())
    }
}

/// Axis-aligned rectangle in the state plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Box2D {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Box2D {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }

    pub fn square(half_width: f64) -> Self {
        Self::new(-half_width, half_width, -half_width, half_width)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }
}

#[derive(Clone)]
pub struct PiecewiseSystem {
    name: String,
    param_names: Vec<String>,
    f_left: FieldFn,
    f_right: FieldFn,
    switch_fn: SwitchFn,
    jac_left: Option<JacobianFn>,
    jac_right: Option<JacobianFn>,
    switch_grad: Option<GradientFn>,
    continuity_tol: f64,
}

impl fmt::Debug for PiecewiseSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseSystem")
            .field("name", &self.name)
            .field("param_names", &self.param_names)
            .field("analytic_jacobians", &self.jac_left.is_some())
            .finish()
    }
}

impl PiecewiseSystem {
    pub fn new<L, R, H>(name: impl Into<String>, param_names: &[&str], f_left: L, f_right: R, switch_fn: H) -> Self
    where
        L: Fn(Vec2, &[f64]) -> Vec2 + Send + Sync + 'static,
        R: Fn(Vec2, &[f64]) -> Vec2 + Send + Sync + 'static,
        H: Fn(Vec2, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            param_names: param_names.iter().map(|s| s.to_string()).collect(),
            f_left: Arc::new(f_left),
            f_right: Arc::new(f_right),
            switch_fn: Arc::new(switch_fn),
            jac_left: None,
            jac_right: None,
            switch_grad: None,
            continuity_tol: DEFAULT_CONTINUITY_TOL,
        }
    }

    pub fn with_jacobians<JL, JR>(mut self, left: JL, right: JR) -> Self
    where
        JL: Fn(Vec2, &[f64]) -> Mat2 + Send + Sync + 'static,
        JR: Fn(Vec2, &[f64]) -> Mat2 + Send + Sync + 'static,
    {
        self.jac_left = Some(Arc::new(left));
        self.jac_right = Some(Arc::new(right));
        self
    }

    pub fn with_switch_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(Vec2, &[f64]) -> Vec2 + Send + Sync + 'static,
    {
        self.switch_grad = Some(Arc::new(grad));
        self
    }

    pub fn with_continuity_tol(mut self, tol: f64) -> Self {
        self.continuity_tol = tol;
        self
    }

    /// Drops analytic derivatives so every Jacobian is differenced.
    pub fn without_analytic_derivatives(mut self) -> Self {
        self.jac_left = None;
        self.jac_right = None;
        self.switch_grad = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn continuity_tol(&self) -> f64 {
        self.continuity_tol
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.jac_left.is_some() && self.jac_right.is_some()
    }

    pub fn check_params(&self, params: &[f64]) -> Result<(), SystemError> {
        if params.len() != self.param_names.len() {
            return Err(SystemError::ParamLength {
                system: self.name.clone(),
                expected: self.param_names.len(),
                got: params.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn field(&self, side: Side, p: Vec2, params: &[f64]) -> Vec2 {
        match side {
            Side::Left => (self.f_left)(p, params),
            Side::Right => (self.f_right)(p, params),
        }
    }

    #[inline]
    pub fn switch_value(&self, p: Vec2, params: &[f64]) -> f64 {
        (self.switch_fn)(p, params)
    }

    pub fn side_of(&self, p: Vec2, params: &[f64]) -> Side {
        if self.switch_value(p, params) <= 0.0 {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// The piecewise vector field at `p`.
    pub fn eval(&self, p: Vec2, params: &[f64]) -> Vec2 {
        self.field(self.side_of(p, params), p, params)
    }

    pub fn switch_gradient(&self, p: Vec2, params: &[f64]) -> Vec2 {
        match &self.switch_grad {
            Some(g) => g(p, params),
            None => numdiff::gradient(|q| self.switch_value(q, params), p),
        }
    }

    /// Jacobian of one half-system: analytic if supplied, else central differences.
    pub fn jacobian(&self, side: Side, p: Vec2, params: &[f64]) -> Mat2 {
        let analytic = match side {
            Side::Left => &self.jac_left,
            Side::Right => &self.jac_right,
        };
        match analytic {
            Some(j) => j(p, params),
            None => self.fd_jacobian(side, p, params),
        }
    }

    /// Central-difference Jacobian with step `max(1e-6, 1e-6·|x_i|)`.
    pub fn fd_jacobian(&self, side: Side, p: Vec2, params: &[f64]) -> Mat2 {
        numdiff::jacobian(|q| self.field(side, q, params), p)
    }

    /// Rate of change of the switching function along one half-field.
    pub fn switch_rate(&self, side: Side, p: Vec2, params: &[f64]) -> f64 {
        self.switch_gradient(p, params).dot(self.field(side, p, params))
    }
}

/// Points on the switching manifold inside `region`, found by scanning
/// horizontal (then vertical) lines for sign changes of the switching function.
pub fn manifold_samples(
    sys: &PiecewiseSystem,
    params: &[f64],
    region: Box2D,
    n_samples: usize,
) -> Result<Vec<Vec2>, SystemError> {
    const CELLS: usize = 64;
    let h = |p: Vec2| sys.switch_value(p, params);
    let mut points = Vec::with_capacity(n_samples);
    let n_lines = n_samples.max(1);
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let line_t = |i: usize| if n_lines == 1 { 0.5 } else { i as f64 / (n_lines - 1) as f64 };

    let scan = |make: &dyn Fn(f64) -> Vec2, points: &mut Vec<Vec2>| {
        let mut prev_s = 0.0;
        let mut prev_v = h(make(0.0));
        if prev_v == 0.0 {
            points.push(make(0.0));
            return true;
        }
        for k in 1..=CELLS {
            let s = k as f64 / CELLS as f64;
            let v = h(make(s));
            if v == 0.0 || v.signum() != prev_v.signum() {
                let root = roots::brent(
                    |t| Ok::<_, std::convert::Infallible>(h(make(t))),
                    prev_s,
                    s,
                    RootOptions { xtol: 1e-15, ..Default::default() },
                );
                if let Ok(t) = root {
                    points.push(make(t));
                    return true;
                }
            }
            prev_s = s;
            prev_v = v;
        }
        false
    };

    for i in 0..n_lines {
        let y = lerp(region.y_min, region.y_max, line_t(i));
        scan(&|s| Vec2::new(lerp(region.x_min, region.x_max, s), y), &mut points);
    }
    if points.len() < n_samples {
        for i in 0..n_lines {
            if points.len() >= n_samples {
                break;
            }
            let x = lerp(region.x_min, region.x_max, line_t(i));
            scan(&|s| Vec2::new(x, lerp(region.y_min, region.y_max, s)), &mut points);
        }
    }
    if points.is_empty() {
        return Err(SystemError::NoManifoldInRegion);
    }
    points.truncate(n_samples);
    Ok(points)
}

/// Maximum `|f_left − f_right|` over points of the switching manifold in `region`.
pub fn check_continuity(
    sys: &PiecewiseSystem,
    params: &[f64],
    region: Box2D,
    n_samples: usize,
) -> Result<f64, SystemError> {
    sys.check_params(params)?;
    let pts = manifold_samples(sys, params, region, n_samples)?;
    Ok(pts
        .iter()
        .map(|&p| (sys.field(Side::Left, p, params) - sys.field(Side::Right, p, params)).max_abs())
        .fold(0.0, f64::max))
}

/// A piecewise system already in companion normal form: switching function
/// `x`, constant term `(0, −μ)`, left linear part `[[η, 1], [−δ_L, 0]]`.
/// Parameters are ordered `(μ, η)`.
#[derive(Clone, Debug)]
pub struct NormalFormSystem {
    sys: PiecewiseSystem,
}

impl NormalFormSystem {
    const SAMPLE_PARAMS: [[f64; 2]; 4] = [[0.0, 0.0], [1e-3, 0.0], [0.0, 1e-3], [-2e-3, 1.5e-3]];

    pub fn new(sys: PiecewiseSystem) -> Result<Self, SystemError> {
        sys.check_params(&[0.0, 0.0])?;
        let fail = |msg: String| Err(SystemError::NotNormalForm(msg));
        for p in Self::SAMPLE_PARAMS {
            let (mu, eta) = (p[0], p[1]);
            for q in [Vec2::new(-0.05, 0.03), Vec2::new(0.02, -0.07), Vec2::new(0.0, 0.1)] {
                let s = sys.switch_value(q, &p);
                if (s - q.x).abs() > 1e-12 {
                    return fail(format!("switching function differs from x at {q:?}: {s}"));
                }
            }
            for side in [Side::Left, Side::Right] {
                let f0 = sys.field(side, Vec2::ZERO, &p);
                if f0.x.abs() > 1e-9 || (f0.y + mu).abs() > 1e-9 {
                    return fail(format!("{side} constant term at (μ, η) = ({mu}, {eta}) is {f0:?}, expected (0, −μ)"));
                }
                let j = sys.fd_jacobian(side, Vec2::ZERO, &p);
                if (j.b - 1.0).abs() > 1e-6 || j.d.abs() > 1e-6 {
                    return fail(format!("{side} linear part {j:?} is not in companion form"));
                }
                if side == Side::Left && (j.a - eta).abs() > 1e-6 {
                    return fail(format!("left trace {} differs from η = {eta}", j.a));
                }
            }
        }
        Ok(Self { sys })
    }

    pub fn system(&self) -> &PiecewiseSystem {
        &self.sys
    }

    pub fn params(mu: f64, eta: f64) -> [f64; 2] {
        [mu, eta]
    }

    /// δ^(L)(μ, η) read off the left Jacobian at the origin.
    pub fn delta_left(&self, mu: f64, eta: f64) -> f64 {
        -self.sys.jacobian(Side::Left, Vec2::ZERO, &[mu, eta]).c
    }

    /// τ^(R)(μ, η).
    pub fn tau_right(&self, mu: f64, eta: f64) -> f64 {
        self.sys.jacobian(Side::Right, Vec2::ZERO, &[mu, eta]).a
    }

    pub fn delta_right(&self, mu: f64, eta: f64) -> f64 {
        -self.sys.jacobian(Side::Right, Vec2::ZERO, &[mu, eta]).c
    }
}

impl Deref for NormalFormSystem {
    type Target = PiecewiseSystem;
    fn deref(&self) -> &PiecewiseSystem {
        &self.sys
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn raw_example_origin_is_equilibrium() {
        let sys = fixtures::example_raw();
        let f = sys.eval(Vec2::ZERO, &[0.0, 0.0]);
        assert_eq!(f, Vec2::ZERO);
        assert_eq!(sys.switch_value(Vec2::new(0.8, 1.0), &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn raw_example_is_continuous_at_manifold_point() {
        let sys = fixtures::example_raw();
        for params in [[0.0, 0.0], [0.3, -0.2], [-1.0, 2.0]] {
            let p = Vec2::new(0.4, 0.5);
            let d = sys.field(Side::Left, p, &params) - sys.field(Side::Right, p, &params);
            assert_eq!(d.max_abs(), 0.0);
        }
    }

    #[test]
    fn nf_example_linear_parts() {
        let nf = fixtures::example_nf();
        let jl = nf.jacobian(Side::Left, Vec2::ZERO, &[0.0, 0.0]);
        let jr = nf.jacobian(Side::Right, Vec2::ZERO, &[0.0, 0.0]);
        let close = |m: Mat2, e: Mat2| (m - e).max_abs() < 1e-14;
        assert!(close(jl, Mat2::new(0.0, 1.0, -0.5, 0.0)), "{jl:?}");
        assert!(close(jr, Mat2::new(-0.2, 1.0, -0.25, 0.0)), "{jr:?}");
    }

    #[test]
    fn continuity_on_fixtures() {
        let raw = fixtures::example_raw();
        let r = check_continuity(&raw, &[0.01, -0.02], Box2D::square(1.0), 100).unwrap();
        assert!(r < 1e-10, "{r}");
        let nf = fixtures::example_nf();
        let r = check_continuity(&nf, &[0.01, 0.003], Box2D::square(0.5), 100).unwrap();
        assert!(r < 1e-10, "{r}");
        // x = 0, |y| <= 0.1
        let r = check_continuity(&nf, &[0.0, 0.0], Box2D::new(-0.1, 0.1, -0.1, 0.1), 100).unwrap();
        assert!(r < 1e-12);
    }

    #[test]
    fn broken_fixture_is_flagged() {
        let broken = fixtures::broken_example();
        let r = check_continuity(&broken, &[0.0, 0.0], Box2D::square(1.0), 100).unwrap();
        assert!(r >= 0.1 - 1e-12, "{r}");
    }

    #[test]
    fn missing_manifold_is_an_error() {
        let sys = fixtures::linear_center();
        let e = check_continuity(&sys, &[], Box2D::square(1.0), 10).unwrap_err();
        assert_eq!(e, SystemError::NoManifoldInRegion);
    }

    #[test]
    fn manifold_gradient_is_nonzero() {
        for reg in fixtures::registry() {
            let pts = manifold_samples(&reg.system, &reg.default_params, reg.default_region, 20).unwrap();
            for p in pts {
                assert!(reg.system.switch_gradient(p, &reg.default_params).norm() > 1e-3);
            }
        }
    }

    #[test]
    fn param_length_is_checked() {
        let nf = fixtures::example_nf();
        assert!(matches!(nf.check_params(&[1.0]), Err(SystemError::ParamLength { .. })));
    }

    #[test]
    fn raw_system_is_not_normal_form() {
        assert!(matches!(
            NormalFormSystem::new(fixtures::example_raw()),
            Err(SystemError::NotNormalForm(_))
        ));
    }
}
