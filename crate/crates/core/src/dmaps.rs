//! Asymptotic return maps near the grazing orbit, in the scaled coordinates
//! `x̂ = x/μ`, `ŷ = y/μ`, `ε̂ = ε/μ`.
//!
//! The maps are truncated series in a state variable whose coefficients are
//! kept symbolic: exact rationals times powers of named constants. Numbers
//! enter only at evaluation, through an [`Env`], so a mismatch against the
//! flow can be traced to either a formula or a measured constant.
//!
//! Step maps of the passage through the right half-plane:
//! `P1` (left flow backwards from the section to the y-axis), `P2` (right
//! flow across the right half-plane), `P3` (left flow backwards from the
//! y-axis to the section). `Pdm = P3 ∘ P2 ∘ P1` is the discontinuity map,
//! `Plhf` the left-half-flow return map and `Pfull = Plhf ∘ Pdm`.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;
use thiserror::Error;

use crate::flow::{self, FieldMode, FlowError, IntegratorOptions, StopCondition};
use crate::linalg::Vec2;
use crate::normalform::InvariantSet;
use crate::orbits::{self, OrbitError};
use crate::scaling::{self, FitOptions, ScalingFit};
use crate::system::{NormalFormSystem, Side};

/// Smallest μ accepted by the scaled maps (the scaling divides by μ).
pub const MU_MIN: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmapError {
    #[error("μ = {mu} is below the minimum {min} for scaled coordinates")]
    MuTooSmall { mu: f64, min: f64 },
    #[error("γ = 0: the simple map has no fold")]
    ZeroGamma,
    #[error("degenerate case: {0}")]
    DegenerateCase(&'static str),
    #[error("cannot compose: {0}")]
    NotComposable(&'static str),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

/// Named constants appearing in map coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Mu,
    Eta,
    /// `η − h₂(μ)`.
    Eta2,
    /// Coefficient of `y²` in the left `ẋ` equation.
    A3,
    /// Right trace `τ^(R)(μ, η)`.
    TauR,
    Omega,
    A0,
    Pi,
    Sqrt2,
}

impl Symbol {
    pub fn name(self) -> &'static str {
        match self {
            Symbol::Mu => "μ",
            Symbol::Eta => "η",
            Symbol::Eta2 => "η₂",
            Symbol::A3 => "a₃",
            Symbol::TauR => "τ_R",
            Symbol::Omega => "ω",
            Symbol::A0 => "a₀",
            Symbol::Pi => "π",
            Symbol::Sqrt2 => "√2",
        }
    }
}

type Powers = Vec<(Symbol, i32)>;

/// Polynomial (with negative powers allowed) in the [`Symbol`]s over the rationals.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Coeff {
    terms: BTreeMap<Powers, Rational64>,
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

fn pow2(k: i32) -> Rational64 {
    if k >= 0 {
        Rational64::from_integer(1i64 << k)
    } else {
        Rational64::new(1, 1i64 << (-k))
    }
}

impl Coeff {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn rational(c: Rational64) -> Self {
        let mut out = Self::zero();
        out.insert(Vec::new(), c);
        out
    }

    pub fn int(n: i64) -> Self {
        Self::rational(Rational64::from_integer(n))
    }

    pub fn symbol(s: Symbol) -> Self {
        Self::power(s, 1)
    }

    pub fn power(s: Symbol, e: i32) -> Self {
        let mut out = Self::zero();
        out.insert(vec![(s, e)], Rational64::from_integer(1));
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Monomials as (rational, powers).
    pub fn monomials(&self) -> impl Iterator<Item = (Rational64, &[(Symbol, i32)])> {
        self.terms.iter().map(|(p, c)| (*c, p.as_slice()))
    }

    fn insert(&mut self, powers: Powers, c: Rational64) {
        let mut c = c;
        let mut norm: Powers = Vec::with_capacity(powers.len());
        for (s, e) in powers {
            let e = if s == Symbol::Sqrt2 {
                c *= pow2(e.div_euclid(2));
                e.rem_euclid(2)
            } else {
                e
            };
            if e != 0 {
                norm.push((s, e));
            }
        }
        if c == Rational64::from_integer(0) {
            return;
        }
        let slot = self.terms.entry(norm).or_insert_with(|| Rational64::from_integer(0));
        *slot += c;
        if *slot == Rational64::from_integer(0) {
            self.terms.retain(|_, v| *v != Rational64::from_integer(0));
        }
    }

    pub fn add(&self, other: &Coeff) -> Coeff {
        let mut out = self.clone();
        for (p, c) in &other.terms {
            out.insert(p.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Coeff) -> Coeff {
        self.add(&other.scale(r(-1, 1)))
    }

    pub fn scale(&self, k: Rational64) -> Coeff {
        let mut out = Coeff::zero();
        for (p, c) in &self.terms {
            out.insert(p.clone(), *c * k);
        }
        out
    }

    pub fn mul(&self, other: &Coeff) -> Coeff {
        let mut out = Coeff::zero();
        for (pa, ca) in &self.terms {
            for (pb, cb) in &other.terms {
                let mut merged: BTreeMap<Symbol, i32> = BTreeMap::new();
                for &(s, e) in pa.iter().chain(pb.iter()) {
                    *merged.entry(s).or_insert(0) += e;
                }
                out.insert(merged.into_iter().collect(), *ca * *cb);
            }
        }
        out
    }

    pub fn eval(&self, env: &Env) -> f64 {
        self.terms
            .iter()
            .map(|(p, c)| {
                let k = *c.numer() as f64 / *c.denom() as f64;
                p.iter().fold(k, |acc, &(s, e)| acc * env.value(s).powi(e))
            })
            .sum()
    }

    /// True when every monomial contains at least one of `symbols`.
    pub fn vanishes_without(&self, symbols: &[Symbol]) -> bool {
        self.terms.keys().all(|p| p.iter().any(|(s, _)| symbols.contains(s)))
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (p, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{c}")?;
            for (s, e) in p {
                if *e == 1 {
                    write!(f, "·{}", s.name())?;
                } else {
                    write!(f, "·{}^{}", s.name(), e)?;
                }
            }
        }
        Ok(())
    }
}

/// Order marker for series with no remainder.
const EXACT: i32 = i32::MAX / 4;

/// Truncated series `Σ c_k x^{k/2} + O(x^{order/2})` in half-integer powers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Series {
    terms: BTreeMap<i32, Coeff>,
    order: i32,
}

impl Series {
    pub fn new(order: i32) -> Self {
        Self { terms: BTreeMap::new(), order }
    }

    pub fn constant(c: Coeff) -> Self {
        Self::new(EXACT).with(0, c)
    }

    /// Adds `c · x^{key/2}`.
    pub fn with(mut self, key: i32, c: Coeff) -> Self {
        self.add_term(key, c);
        self
    }

    fn add_term(&mut self, key: i32, c: Coeff) {
        if key >= self.order || c.is_zero() {
            return;
        }
        let sum = self.terms.get(&key).map_or(c.clone(), |old| old.add(&c));
        if sum.is_zero() {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, sum);
        }
    }

    /// Remainder order, in half-powers of the state.
    pub fn order(&self) -> i32 {
        self.order
    }

    pub fn coefficient(&self, key: i32) -> Option<&Coeff> {
        self.terms.get(&key)
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, &Coeff)> {
        self.terms.iter().map(|(k, c)| (*k, c))
    }

    /// Smallest key with a nonzero coefficient, or the order if none.
    pub fn leading_key(&self) -> i32 {
        self.terms.keys().next().copied().unwrap_or(self.order)
    }

    pub fn has_half_powers(&self) -> bool {
        self.terms.keys().any(|k| k % 2 != 0)
    }

    pub fn add(&self, other: &Series) -> Series {
        let mut out = Series::new(self.order.min(other.order));
        for (k, c) in self.terms.iter().chain(other.terms.iter()) {
            out.add_term(*k, c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Coeff) -> Series {
        let mut out = Series::new(self.order);
        for (k, t) in &self.terms {
            out.add_term(*k, t.mul(c));
        }
        out
    }

    pub fn mul(&self, other: &Series) -> Series {
        let order = (self.order.saturating_add(other.leading_key())).min(other.order.saturating_add(self.leading_key()));
        let mut out = Series::new(order.min(EXACT));
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                out.add_term(ka + kb, ca.mul(cb));
            }
        }
        out
    }

    pub fn powi(&self, n: u32) -> Series {
        let mut out = Series::constant(Coeff::int(1));
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// `outer(inner(x))`. `outer` must have integer powers only and `inner`
    /// must vanish at zero.
    pub fn compose(outer: &Series, inner: &Series) -> Result<Series, DmapError> {
        if outer.has_half_powers() {
            return Err(DmapError::NotComposable("outer series has half-integer powers"));
        }
        let a = inner.leading_key();
        if a <= 0 || inner.terms.contains_key(&0) {
            return Err(DmapError::NotComposable("inner series does not vanish at zero"));
        }
        let remainder = if outer.order >= EXACT { EXACT } else { outer.order.saturating_mul(a) / 2 };
        let mut out = Series::new(remainder);
        for (k, c) in &outer.terms {
            let part = inner.powi((*k / 2) as u32).scale(c);
            out.order = out.order.min(part.order);
            for (kk, cc) in part.terms {
                out.add_term(kk, cc);
            }
        }
        out.terms.retain(|k, _| *k < out.order);
        Ok(out)
    }

    pub fn eval(&self, env: &Env, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|(k, c)| {
                let p = if k % 2 == 0 { x.powi(k / 2) } else { x.powf(*k as f64 / 2.0) };
                c.eval(env) * p
            })
            .sum()
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            let power = if k % 2 == 0 { format!("{}", k / 2) } else { format!("{k}/2") };
            write!(f, "[{c}]·x^{power}")?;
        }
        let order = if self.order % 2 == 0 { format!("{}", self.order / 2) } else { format!("{}/2", self.order) };
        write!(f, " + O(x^{order})")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MapKind {
    P1,
    P2,
    P3,
    Pdm,
    Plhf,
    Pfull,
}

impl MapKind {
    pub const ALL: [MapKind; 6] = [MapKind::P1, MapKind::P2, MapKind::P3, MapKind::Pdm, MapKind::Plhf, MapKind::Pfull];

    pub fn as_str(self) -> &'static str {
        match self {
            MapKind::P1 => "P1",
            MapKind::P2 => "P2",
            MapKind::P3 => "P3",
            MapKind::Pdm => "Pdm",
            MapKind::Plhf => "Plhf",
            MapKind::Pfull => "Pfull",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str().eq_ignore_ascii_case(s))
    }

    /// Name of the state variable the map acts on.
    pub fn variable(self) -> &'static str {
        match self {
            MapKind::P2 | MapKind::P3 => "ŷ",
            _ => "ε̂",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticMap {
    pub kind: MapKind,
    pub series: Series,
}

impl AsymptoticMap {
    pub fn eval(&self, env: &Env, x: f64) -> f64 {
        self.series.eval(env, x)
    }
}

fn sym(s: Symbol) -> Coeff {
    Coeff::symbol(s)
}

/// `η + a₃μ`.
fn eta_plus_a3mu() -> Coeff {
    sym(Symbol::Eta).add(&sym(Symbol::A3).mul(&sym(Symbol::Mu)))
}

/// `q₁ = 4πa₀/ω⁵`.
pub fn q1_symbolic() -> Coeff {
    Coeff::int(4).mul(&sym(Symbol::Pi)).mul(&sym(Symbol::A0)).mul(&Coeff::power(Symbol::Omega, -5))
}

fn series_for(kind: MapKind) -> Result<Series, DmapError> {
    let four_rt2_3 = sym(Symbol::Sqrt2).scale(r(4, 3));
    Ok(match kind {
        MapKind::P1 => Series::new(3).with(1, sym(Symbol::Sqrt2)).with(2, eta_plus_a3mu().scale(r(-2, 3))),
        MapKind::P2 => Series::new(6)
            .with(2, Coeff::int(-1))
            .with(4, sym(Symbol::TauR).add(&sym(Symbol::A3).mul(&sym(Symbol::Mu))).scale(r(-2, 3))),
        MapKind::P3 => Series::new(8).with(4, Coeff::rational(r(1, 2))).with(6, eta_plus_a3mu().scale(r(1, 3))),
        MapKind::Pdm => Series::new(4)
            .with(2, Coeff::int(1))
            .with(3, four_rt2_3.mul(&sym(Symbol::TauR).sub(&sym(Symbol::Eta)))),
        MapKind::Plhf => {
            let pi = sym(Symbol::Pi);
            let eta2 = sym(Symbol::Eta2);
            let omega0 = pi.mul(&Coeff::power(Symbol::Omega, -3)).mul(&eta2);
            let omega1 = Coeff::int(1)
                .add(&pi.mul(&Coeff::power(Symbol::Omega, -1)).mul(&eta2))
                .add(&q1_symbolic().mul(&Coeff::power(Symbol::Mu, 2)));
            Series::new(4).with(0, omega0).with(2, omega1)
        }
        MapKind::Pfull => Series::compose(&series_for(MapKind::Plhf)?, &series_for(MapKind::Pdm)?)?,
    })
}

/// Asymptotic map of the given kind. The table is symbolic; `inv` is checked
/// for the nondegeneracy the expansions rely on (`ω > 0`, finite constants).
pub fn build_asymptotic(inv: &InvariantSet, kind: MapKind) -> Result<AsymptoticMap, DmapError> {
    if !(inv.omega > 0.0 && inv.omega.is_finite()) {
        return Err(DmapError::DegenerateCase("ω must be positive"));
    }
    if !inv.a0.is_finite() || !inv.tau_r.is_finite() {
        return Err(DmapError::DegenerateCase("invariants must be finite"));
    }
    Ok(AsymptoticMap { kind, series: series_for(kind)? })
}

/// Numerical values of the [`Symbol`]s at one parameter point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Env {
    pub mu: f64,
    pub eta: f64,
    pub eta2: f64,
    pub a3: f64,
    pub tau_r: f64,
    pub omega: f64,
    pub a0: f64,
}

impl Env {
    /// Measures the local constants of `nf` at `(μ, η)`: `a₃ = ½ ∂²f/∂y²`
    /// and `τ^(R) = ∂f_R/∂x` at the origin. `eta2` is `η − h₂(μ)`.
    pub fn measure(nf: &NormalFormSystem, inv: &InvariantSet, mu: f64, eta: f64, eta2: f64) -> Result<Env, DmapError> {
        if !(mu >= MU_MIN) {
            return Err(DmapError::MuTooSmall { mu, min: MU_MIN });
        }
        let q = [mu, eta];
        let h = 1e-4;
        let jp = nf.jacobian(Side::Left, Vec2::new(0.0, h), &q);
        let jm = nf.jacobian(Side::Left, Vec2::new(0.0, -h), &q);
        let a3 = 0.5 * (jp.b - jm.b) / (2.0 * h);
        let tau_r = nf.jacobian(Side::Right, Vec2::ZERO, &q).a;
        Ok(Env { mu, eta, eta2, a3, tau_r, omega: inv.omega, a0: inv.a0 })
    }

    pub fn value(&self, s: Symbol) -> f64 {
        match s {
            Symbol::Mu => self.mu,
            Symbol::Eta => self.eta,
            Symbol::Eta2 => self.eta2,
            Symbol::A3 => self.a3,
            Symbol::TauR => self.tau_r,
            Symbol::Omega => self.omega,
            Symbol::A0 => self.a0,
            Symbol::Pi => std::f64::consts::PI,
            Symbol::Sqrt2 => std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationRow {
    /// Map argument (ε̂, or ŷ for `P2`/`P3`; for `P3` the row holds `|ŷ₀|`).
    pub x: f64,
    pub asymptotic: f64,
    pub exact: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationTable {
    pub kind: MapKind,
    pub mu: f64,
    pub eta: f64,
    pub rows: Vec<ValidationRow>,
    /// Power-law fit of `error` against `x` (maps whose truncation error
    /// vanishes at zero: `P1`, `P2`, `P3`, `Pdm`).
    pub decay: Option<ScalingFit>,
}

/// Flow segments replicating the step maps, in unscaled coordinates.
struct StepFlows<'a> {
    nf: &'a NormalFormSystem,
    params: [f64; 2],
    section: flow::Section,
    opts: IntegratorOptions,
}

impl StepFlows<'_> {
    fn to_axis(&self, start: Vec2, side: Side, backward: bool, direction: Option<i8>) -> Result<Vec2, DmapError> {
        let value = |p: Vec2| p.x;
        let gradient = |_: Vec2| Vec2::new(1.0, 0.0);
        let accept = |_: Vec2| true;
        let stop = StopCondition { value: &value, gradient: &gradient, direction, accept: &accept };
        let res = flow::flow_until(self.nf, &self.params, start, backward, FieldMode::Fixed(side), &stop, &self.opts, false, None)?;
        Ok(res.point)
    }

    /// `P1`: section point at x = `eps` back to the y-axis; returns y.
    fn p1(&self, eps: f64) -> Result<f64, DmapError> {
        Ok(self.to_axis(self.section.point(eps), Side::Left, true, None)?.y)
    }

    /// `P2`: right flow from `(0, y)` to its next return to the y-axis.
    fn p2(&self, y: f64) -> Result<f64, DmapError> {
        Ok(self.to_axis(Vec2::new(0.0, y), Side::Right, false, Some(-1))?.y)
    }

    /// `P3`: left flow backwards from `(0, y)` to the section line; returns x.
    fn p3(&self, y: f64) -> Result<f64, DmapError> {
        let sec = &self.section;
        let value = |p: Vec2| sec.signed_distance(p);
        let n = sec.normal();
        let gradient = move |_: Vec2| n;
        let accept = |p: Vec2| (p - sec.base).dot(sec.direction) > 0.0;
        let stop = StopCondition { value: &value, gradient: &gradient, direction: None, accept: &accept };
        let start = Vec2::new(0.0, y);
        let res =
            flow::flow_until(self.nf, &self.params, start, true, FieldMode::Fixed(Side::Left), &stop, &self.opts, false, None)?;
        Ok(res.point.x)
    }

    fn plhf(&self, eps: f64) -> Result<f64, DmapError> {
        let r = flow::poincare_return(self.nf, &self.params, &self.section, eps, FieldMode::Fixed(Side::Left), &self.opts)?;
        Ok(r.coord)
    }

    /// Exact map in scaled coordinates.
    fn exact(&self, kind: MapKind, x: f64) -> Result<f64, DmapError> {
        let mu = self.params[0];
        let corner = matches!(kind, MapKind::P1 | MapKind::P2 | MapKind::P3 | MapKind::Pdm);
        if corner && x == 0.0 {
            // The origin is a trajectory through the corner of all three steps.
            return Ok(0.0);
        }
        let dm = |e: f64| -> Result<f64, DmapError> {
            let y2 = self.p1(e)?;
            let y3 = self.p2(y2)?;
            self.p3(y3)
        };
        let v = match kind {
            MapKind::P1 => self.p1(mu * x)?,
            MapKind::P2 => self.p2(mu * x)?,
            MapKind::P3 => self.p3(mu * x)?,
            MapKind::Pdm => dm(mu * x)?,
            MapKind::Plhf => self.plhf(mu * x)?,
            MapKind::Pfull => self.plhf(dm(mu * x)?)?,
        };
        Ok(v / mu)
    }
}

/// Compares `amap` with the flow at `env`'s `(μ, η)` over `grid` (values of
/// the map's argument; for `P3` the argument is `−x`, matching the passage
/// where `ŷ₀ < 0`).
pub fn validate_against_flow(
    amap: &AsymptoticMap,
    nf: &NormalFormSystem,
    env: &Env,
    grid: &[f64],
    opts: &IntegratorOptions,
) -> Result<ValidationTable, DmapError> {
    if !(env.mu >= MU_MIN) {
        return Err(DmapError::MuTooSmall { mu: env.mu, min: MU_MIN });
    }
    let (section, _) = orbits::section_at(nf, env.mu, env.eta)?;
    let flows = StepFlows { nf, params: [env.mu, env.eta], section, opts: *opts };
    let mut rows = Vec::with_capacity(grid.len());
    for &g in grid {
        let arg = if amap.kind == MapKind::P3 { -g } else { g };
        let exact = flows.exact(amap.kind, arg)?;
        let asymptotic = amap.eval(env, arg);
        rows.push(ValidationRow { x: g, asymptotic, exact, error: (asymptotic - exact).abs() });
    }
    let decays = matches!(amap.kind, MapKind::P1 | MapKind::P2 | MapKind::P3 | MapKind::Pdm);
    let decay = if decays {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.x > 0.0 && r.error > 0.0).map(|r| (r.x, r.error)).collect();
        scaling::fit_power_law_with(&pts, 1.0, &FitOptions::default()).ok()
    } else {
        None
    };
    Ok(ValidationTable { kind: amap.kind, mu: env.mu, eta: env.eta, rows, decay })
}

/// `ε' = η₂ + Ξε + γε^{3/2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimpleMapModel {
    pub xi: f64,
    pub gamma: f64,
    pub eta2: f64,
}

impl SimpleMapModel {
    pub fn eval(&self, eps: f64) -> f64 {
        self.eta2 + self.xi * eps + self.gamma * eps.powf(1.5)
    }
}

/// Value of `η₂` at which two fixed points of the simple map merge:
/// `4(1 − Ξ)³/(27γ²)`. The fold lies at `ε > 0` only when `(Ξ − 1)γ ≤ 0`.
pub fn simplemap_fold(model: &SimpleMapModel) -> Result<f64, DmapError> {
    if model.gamma == 0.0 {
        return Err(DmapError::ZeroGamma);
    }
    if (model.xi - 1.0) * model.gamma > 0.0 {
        return Err(DmapError::DegenerateCase("simple map has no fold at positive ε"));
    }
    Ok(4.0 * (1.0 - model.xi).powi(3) / (27.0 * model.gamma * model.gamma))
}

/// Fold of the simple map located without the closed form: bisection in
/// `η₂` on whether `ε' − ε` has a zero on `[0, eps_max]`, the minimum of
/// `ε' − ε` taken on a grid and polished by golden-section search.
pub fn simplemap_fold_brute_force(xi: f64, gamma: f64, eps_max: f64, n_grid: usize) -> Result<f64, DmapError> {
    if gamma == 0.0 {
        return Err(DmapError::ZeroGamma);
    }
    // Extremum of (Ξ − 1)ε + γε^{3/2} over the grid, sign chosen so that
    // fixed points exist iff the extremum reaches −η₂.
    let s = gamma.signum();
    let h = |e: f64| s * ((xi - 1.0) * e + gamma * e.powf(1.5));
    let grid: Vec<f64> = (0..=n_grid).map(|i| eps_max * i as f64 / n_grid as f64).collect();
    let (imin, _) = grid.iter().enumerate().fold((0, f64::INFINITY), |(bi, bv), (i, &e)| {
        let v = h(e);
        if v < bv {
            (i, v)
        } else {
            (bi, bv)
        }
    });
    let lo = grid[imin.saturating_sub(1)];
    let hi = grid[(imin + 1).min(n_grid)];
    let (_, hmin) =
        crate::roots::minimize(|e| Ok::<_, std::convert::Infallible>(h(e)), lo, hi, 1e-14 * eps_max, 200).unwrap();
    let exists = |eta2: f64| s * eta2 + hmin <= 0.0;
    let (mut a, mut b) = (-1.0, 1.0);
    while exists(a) == exists(b) && b < 1e12 {
        a *= 2.0;
        b *= 2.0;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if exists(m) == exists(a) {
            a = m;
        } else {
            b = m;
        }
        if (b - a).abs() <= 1e-16 * a.abs().max(b.abs()).max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Leading-order saddle-node of the full map at `μ`, from the simple map with
/// `Ξ = 1 + q₁μ²` and `γ = (4√2/3)τ_R`. Returns `(η₂, ε)` unscaled.
pub fn predicted_fold(inv: &InvariantSet, mu: f64) -> (f64, f64) {
    let xi = 1.0 + inv.q1() * mu * mu;
    let gamma = 4.0 * std::f64::consts::SQRT_2 / 3.0 * inv.tau_r;
    let model = SimpleMapModel { xi, gamma, eta2: 0.0 };
    let omega0 = simplemap_fold(&model).unwrap_or(f64::NAN);
    let eta2 = omega0 * inv.omega.powi(3) / std::f64::consts::PI;
    let eps_hat = (2.0 * (xi - 1.0) / (3.0 * gamma)).powi(2);
    (eta2, eps_hat * mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria;
    use crate::fixtures;
    use crate::normalform::compute_invariants;

    fn setup() -> (NormalFormSystem, InvariantSet) {
        let nf = fixtures::example_nf();
        let inv = compute_invariants(&nf).unwrap();
        (nf, inv)
    }

    fn env_at(nf: &NormalFormSystem, inv: &InvariantSet, mu: f64) -> Env {
        let opts = orbits::OrbitOptions::default();
        let h1 = equilibria::hopf_eta(nf, mu).unwrap();
        let h2 = orbits::grazing_eta(nf, mu, h1, inv.grazing_coefficient() * mu * mu, &opts).unwrap();
        Env::measure(nf, inv, mu, h2, 0.0).unwrap()
    }

    #[test]
    fn sqrt2_is_normalised() {
        let c = Coeff::symbol(Symbol::Sqrt2).mul(&Coeff::symbol(Symbol::Sqrt2));
        assert_eq!(c, Coeff::int(2));
        let c = Coeff::power(Symbol::Sqrt2, -1).mul(&Coeff::power(Symbol::Sqrt2, -2));
        assert_eq!(c, Coeff::symbol(Symbol::Sqrt2).scale(r(1, 4)));
    }

    #[test]
    fn discontinuity_map_is_the_composition_of_the_step_maps() {
        let p1 = series_for(MapKind::P1).unwrap();
        let p2 = series_for(MapKind::P2).unwrap();
        let p3 = series_for(MapKind::P3).unwrap();
        let composed = Series::compose(&p3, &Series::compose(&p2, &p1).unwrap()).unwrap();
        assert_eq!(composed, series_for(MapKind::Pdm).unwrap());
        assert_eq!(composed.order(), 4);
    }

    #[test]
    fn full_map_coefficients() {
        let full = series_for(MapKind::Pfull).unwrap();
        assert_eq!(full.order(), 4);
        let plhf = series_for(MapKind::Plhf).unwrap();
        assert_eq!(full.coefficient(0), plhf.coefficient(0));
        assert_eq!(full.coefficient(2), plhf.coefficient(2));
        // Ω₂ = (4√2/3)(τ_R − η) up to terms carrying μ or η₂.
        let leading = series_for(MapKind::Pdm).unwrap().coefficient(3).unwrap().clone();
        let rest = full.coefficient(3).unwrap().sub(&leading);
        assert!(!rest.is_zero());
        assert!(rest.vanishes_without(&[Symbol::Mu, Symbol::Eta2]));
    }

    #[test]
    fn p3_after_p1_with_sign_flip_is_identity_at_leading_order() {
        let p1 = series_for(MapKind::P1).unwrap();
        let p3 = series_for(MapKind::P3).unwrap();
        let flipped = p1.scale(&Coeff::int(-1));
        let c = Series::compose(&p3, &flipped).unwrap();
        assert_eq!(c.leading_key(), 2);
        assert_eq!(c.coefficient(2), Some(&Coeff::int(1)));
    }

    #[test]
    fn pdm_is_identity_when_tau_equals_eta() {
        let (_, inv) = setup();
        let m = build_asymptotic(&inv, MapKind::Pdm).unwrap();
        let env = Env { mu: 0.01, eta: 0.3, eta2: 0.0, a3: 0.1, tau_r: 0.3, omega: 1.0, a0: 1.0 };
        for e in [0.0, 1e-3, 0.05] {
            assert!((m.eval(&env, e) - e).abs() < 1e-15);
        }
    }

    #[test]
    fn q1_of_the_example() {
        let (nf, inv) = setup();
        let env = env_at(&nf, &inv, 0.02);
        let q1 = q1_symbolic().eval(&env);
        let expected = 4.0 * std::f64::consts::PI * (25.0 / 88.0) * 2f64.sqrt().powi(5);
        assert!((q1 / expected - 1.0).abs() < 0.01, "{q1}");
        assert!((q1 - 20.19).abs() < 0.01);
    }

    #[test]
    fn half_powers_only_where_expected() {
        let (_, inv) = setup();
        for kind in MapKind::ALL {
            let m = build_asymptotic(&inv, kind).unwrap();
            let expect = matches!(kind, MapKind::P1 | MapKind::Pdm | MapKind::Pfull);
            assert_eq!(m.series.has_half_powers(), expect, "{kind:?}");
        }
    }

    #[test]
    fn maps_vanish_at_zero_and_are_monotone() {
        let (nf, inv) = setup();
        let env = env_at(&nf, &inv, 0.02);
        for kind in [MapKind::P1, MapKind::P3, MapKind::Pdm] {
            let m = build_asymptotic(&inv, kind).unwrap();
            assert_eq!(m.eval(&env, 0.0), 0.0);
        }
        for kind in [MapKind::P1, MapKind::P3, MapKind::Pdm, MapKind::Plhf, MapKind::Pfull] {
            let m = build_asymptotic(&inv, kind).unwrap();
            let vals: Vec<f64> = (0..=100).map(|i| m.eval(&env, 1e-3 * i as f64)).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]), "{kind:?} not increasing");
        }
        let p2 = build_asymptotic(&inv, MapKind::P2).unwrap();
        assert_eq!(p2.eval(&env, 0.0), 0.0);
    }

    #[test]
    fn step_map_errors_decay_at_the_truncation_order() {
        let (nf, inv) = setup();
        let env = env_at(&nf, &inv, 0.02);
        let opts = IntegratorOptions { rtol: 1e-12, atol: 1e-15, ..IntegratorOptions::default() };
        let grid: Vec<f64> = (0..8).map(|i| 0.3 * 10f64.powf(-(i as f64) / 4.0)).collect();
        for (kind, expected) in [(MapKind::P3, 4.0), (MapKind::P2, 3.0), (MapKind::Pdm, 2.0), (MapKind::P1, 1.5)] {
            let m = build_asymptotic(&inv, kind).unwrap();
            let table = validate_against_flow(&m, &nf, &env, &grid, &opts).unwrap();
            let fit = table.decay.expect("decay fit");
            assert!(fit.exponent > expected - 0.2, "{kind:?}: exponent {} rows {:?}", fit.exponent, table.rows);
        }
    }

    #[test]
    fn exact_maps_vanish_at_the_corner() {
        let (nf, inv) = setup();
        let env = env_at(&nf, &inv, 0.02);
        for kind in [MapKind::P1, MapKind::P2, MapKind::P3, MapKind::Pdm] {
            let m = build_asymptotic(&inv, kind).unwrap();
            let t = validate_against_flow(&m, &nf, &env, &[0.0], &IntegratorOptions::default()).unwrap();
            assert_eq!(t.rows[0].exact, 0.0);
            assert_eq!(t.rows[0].asymptotic, 0.0);
        }
    }

    #[test]
    fn simple_map_fold_formula() {
        assert_eq!(simplemap_fold(&SimpleMapModel { xi: 1.0, gamma: 2.0, eta2: 0.0 }).unwrap(), 0.0);
        assert_eq!(simplemap_fold(&SimpleMapModel { xi: 1.1, gamma: 0.0, eta2: 0.0 }), Err(DmapError::ZeroGamma));
        assert!(matches!(simplemap_fold(&SimpleMapModel { xi: 1.1, gamma: 1.0, eta2: 0.0 }), Err(DmapError::DegenerateCase(_))));
        let formula = simplemap_fold(&SimpleMapModel { xi: 0.9, gamma: 1.0, eta2: 0.0 }).unwrap();
        let brute = simplemap_fold_brute_force(0.9, 1.0, 0.1, 2000).unwrap();
        assert!((formula - brute).abs() < 1e-6 * formula.abs(), "{formula} vs {brute}");
        // The fold really is where fixed points appear.
        let m = |eta2: f64| SimpleMapModel { xi: 0.9, gamma: 1.0, eta2 };
        let has_fixed = |eta2: f64| (0..=10_000).any(|i| {
            let e = 0.1 * i as f64 / 10_000.0;
            m(eta2).eval(e) - e <= 0.0
        });
        assert!(has_fixed(formula * 0.99) && !has_fixed(formula * 1.01));
    }

    #[test]
    fn predicted_fold_follows_a_sixth_power_law() {
        let (_, inv) = setup();
        let (a, _) = predicted_fold(&inv, 0.01);
        let (b, _) = predicted_fold(&inv, 0.02);
        assert!(((b / a).log2() - 6.0).abs() < 1e-9);
        let coeff = a / 0.01f64.powi(6);
        assert!((coeff / inv.saddle_node_coefficient() - 1.0).abs() < 1e-9, "{coeff}");
    }
}
