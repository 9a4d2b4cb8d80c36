//! Event-aware integration of piecewise-smooth planar flows.
//!
//! Trajectories are integrated with the Dormand–Prince 5(4) pair and its
//! fourth-order continuous extension. Each step uses exactly one smooth half
//! field; crossings of the switching manifold are localized on the dense
//! output, then the step is re-taken so that it ends on the crossing.
//! Excursions across the manifold that begin and end inside one step are
//! caught by watching the sign of `dH/dt` at the step ends.
//!
//! The optional variational matrix solves `Φ' = J Φ` with the active half
//! Jacobian and is multiplied by the saltation matrix at every crossing.

use thiserror::Error;

use crate::linalg::{Mat2, Vec2};
use crate::roots::{self, RootOptions};
use crate::system::{PiecewiseSystem, Side, SystemError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Required `|H|` at a located crossing.
    pub event_tol: f64,
    /// Cap on the integration time of open-ended searches (returns, orbits).
    pub max_time: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
    /// State norm treated as blow-up.
    pub blowup_norm: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            event_tol: 1e-12,
            max_time: 200.0,
            max_step: 0.1,
            min_step: 1e-13,
            max_steps: 2_000_000,
            blowup_norm: 1e8,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("state norm {norm} exceeded the blow-up bound at t = {t}")]
    Blowup { t: f64, norm: f64 },
    #[error("trajectory did not return to the section within t = {max_time}")]
    NoReturn { max_time: f64 },
    #[error("trajectory left the analysis domain at t = {t}, point {point:?}")]
    LeftDomain { t: f64, point: Vec2 },
    #[error("start point {0:?} is not finite")]
    InvalidStart(Vec2),
    #[error("section coordinate {coord} lies outside the section")]
    OffSection { coord: f64 },
    #[error("step budget of {0} steps exhausted")]
    TooManySteps(usize),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// A crossing of (or tangency with) the switching manifold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossingEvent {
    pub time: f64,
    pub point: Vec2,
    /// Sign of `dH/dt` at the crossing; 0 for tangential contacts.
    pub direction: i8,
    pub tangential: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowResult {
    pub endpoint: Vec2,
    /// Signed elapsed time (negative for backward flow).
    pub elapsed: f64,
    /// Ordered in the direction of integration.
    pub events: Vec<CrossingEvent>,
    pub variational: Option<Mat2>,
    /// Half-system active at the endpoint.
    pub side: Side,
}

/// Which vector field drives the trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldMode {
    /// Switch halves at manifold crossings.
    Piecewise,
    /// Follow one half-system everywhere, ignoring the manifold.
    Fixed(Side),
}

/// Scalar stopping surface `g(p) = 0`.
pub struct StopCondition<'a> {
    pub value: &'a (dyn Fn(Vec2) -> f64 + Sync),
    pub gradient: &'a (dyn Fn(Vec2) -> Vec2 + Sync),
    /// Required sign of `dg/dt` in physical time; `None` accepts both.
    pub direction: Option<i8>,
    /// Extra acceptance test on the crossing point.
    pub accept: &'a (dyn Fn(Vec2) -> bool + Sync),
}

/// Read-only view of one accepted step, for observers.
pub struct StepView<'a> {
    pub t0: f64,
    pub t1: f64,
    pub side: Side,
    dense: &'a Dense,
}

impl StepView<'_> {
    pub fn state(&self, theta: f64) -> Vec2 {
        let z = self.dense.eval(theta);
        Vec2::new(z[0], z[1])
    }
}

const N: usize = 6;
type State = [f64; N];

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension (Hairer & Wanner's dopri5).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Debug)]
struct Dense {
    r: [State; 5],
}

impl Dense {
    fn eval(&self, theta: f64) -> State {
        let t1 = 1.0 - theta;
        let mut z = [0.0; N];
        for i in 0..N {
            let r = &self.r;
            z[i] = r[0][i] + theta * (r[1][i] + t1 * (r[2][i] + theta * (r[3][i] + t1 * r[4][i])));
        }
        z
    }
}

struct StepOut {
    z1: State,
    k7: State,
    err: f64,
    dense: Dense,
}

fn axpy(z: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *z;
    for i in 0..N {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

struct Engine<'a> {
    sys: &'a PiecewiseSystem,
    params: &'a [f64],
    opts: &'a IntegratorOptions,
    dir: f64,
    with_var: bool,
}

impl Engine<'_> {
    fn n_active(&self) -> usize {
        if self.with_var {
            N
        } else {
            2
        }
    }

    fn rhs(&self, side: Side, z: &State) -> State {
        let p = Vec2::new(z[0], z[1]);
        let f = self.sys.field(side, p, self.params) * self.dir;
        let mut out = [f.x, f.y, 0.0, 0.0, 0.0, 0.0];
        if self.with_var {
            let j = self.sys.jacobian(side, p, self.params) * self.dir;
            let phi = Mat2::from_array([z[2], z[3], z[4], z[5]]);
            let dphi = (j * phi).as_array();
            out[2..].copy_from_slice(&dphi);
        }
        out
    }

    fn step(&self, side: Side, z0: &State, k1: &State, h: f64) -> StepOut {
        let k2 = self.rhs(side, &axpy(z0, h, &[(A21, k1)]));
        let k3 = self.rhs(side, &axpy(z0, h, &[(A31, k1), (A32, &k2)]));
        let k4 = self.rhs(side, &axpy(z0, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
        let k5 = self.rhs(side, &axpy(z0, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = self.rhs(side, &axpy(z0, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let z1 = axpy(z0, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = self.rhs(side, &z1);
        let n = self.n_active();
        let mut acc = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.opts.atol + self.opts.rtol * z0[i].abs().max(z1[i].abs());
            acc += (e / sc).powi(2);
        }
        let err = (acc / n as f64).sqrt();
        let mut r = [[0.0; N]; 5];
        for i in 0..N {
            let ydiff = z1[i] - z0[i];
            let bspl = h * k1[i] - ydiff;
            r[0][i] = z0[i];
            r[1][i] = ydiff;
            r[2][i] = bspl;
            r[3][i] = ydiff - h * k7[i] - bspl;
            r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        StepOut { z1, k7, err, dense: Dense { r } }
    }

    fn initial_step(&self, side: Side, z0: &State, k1: &State, remaining: f64) -> f64 {
        let n = self.n_active();
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..n {
            let sc = self.opts.atol + self.opts.rtol * z0[i].abs();
            d0 += (z0[i] / sc).powi(2);
            d1 += (k1[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n as f64).sqrt(), (d1 / n as f64).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(remaining).min(self.opts.max_step);
        let z1 = axpy(z0, h0, &[(1.0, k1)]);
        let k2 = self.rhs(side, &z1);
        let mut d2 = 0.0;
        for i in 0..n {
            let sc = self.opts.atol + self.opts.rtol * z0[i].abs();
            d2 += ((k2[i] - k1[i]) / sc).powi(2);
        }
        let d2 = (d2 / n as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(remaining).min(self.opts.max_step)
    }
}

/// A scalar monitored along a trajectory (switching function or stop surface).
trait Monitor {
    fn value(&self, p: Vec2) -> f64;
    fn gradient(&self, p: Vec2) -> Vec2;
}

struct SwitchMonitor<'a> {
    sys: &'a PiecewiseSystem,
    params: &'a [f64],
}

impl Monitor for SwitchMonitor<'_> {
    fn value(&self, p: Vec2) -> f64 {
        self.sys.switch_value(p, self.params)
    }
    fn gradient(&self, p: Vec2) -> Vec2 {
        self.sys.switch_gradient(p, self.params)
    }
}

impl Monitor for StopCondition<'_> {
    fn value(&self, p: Vec2) -> f64 {
        (self.value)(p)
    }
    fn gradient(&self, p: Vec2) -> Vec2 {
        (self.gradient)(p)
    }
}

#[derive(Clone, Copy, Debug)]
enum Crossing {
    /// Root of the monitor at dense-output fraction `theta`.
    Root { theta: f64 },
    /// The monitor touches zero without changing sign.
    Tangent { theta: f64 },
}

/// Locates the first zero of a monitor inside one step from its dense output.
fn locate_in_step(
    eng: &Engine<'_>,
    side: Side,
    mon: &dyn Monitor,
    dense: &Dense,
    lo: f64,
    tol: f64,
) -> Option<Crossing> {
    let at = |theta: f64| {
        let z = dense.eval(theta);
        Vec2::new(z[0], z[1])
    };
    let g = |theta: f64| mon.value(at(theta));
    let rate = |theta: f64| {
        let p = at(theta);
        mon.gradient(p).dot(eng.sys.field(side, p, eng.params) * eng.dir)
    };
    let ropts = RootOptions { xtol: 1e-14, ftol: 0.0, max_iter: 200 };
    let root = |a: f64, b: f64| {
        roots::brent(|t| Ok::<_, std::convert::Infallible>(g(t)), a, b, ropts).ok()
    };
    let (g0, g1) = (g(lo), g(1.0));
    let (r0, r1) = (rate(lo), rate(1.0));
    if g0.abs() > tol && g1 != 0.0 && g0.signum() != g1.signum() {
        return root(lo, 1.0).map(|theta| Crossing::Root { theta });
    }
    if g1 == 0.0 && g0.abs() > tol {
        return Some(Crossing::Root { theta: 1.0 });
    }
    // Departing from (near) zero and ending on the side it departed against:
    // an excursion that came back within the step.
    if g0.abs() <= tol {
        if r0 != 0.0 && g1.abs() > tol && g1.signum() != r0.signum() && r1.signum() != r0.signum() {
            let t_ext = roots::brent(|t| Ok::<_, std::convert::Infallible>(rate(t)), lo, 1.0, ropts).ok()?;
            // Excursions that never leave the tolerance band are not crossings.
            if g(t_ext).abs() <= tol {
                return None;
            }
            return root(t_ext, 1.0).map(|theta| Crossing::Root { theta });
        }
        return None;
    }
    // Same sign at both ends: moving toward zero at the start and away at the end.
    let toward = r0 != 0.0 && r0.signum() != g0.signum();
    let away = r1 != 0.0 && r1.signum() == g1.signum();
    if toward && away {
        let t_ext = roots::brent(|t| Ok::<_, std::convert::Infallible>(rate(t)), lo, 1.0, ropts).ok()?;
        let g_ext = g(t_ext);
        if g_ext.abs() <= tol {
            return Some(Crossing::Tangent { theta: t_ext });
        }
        if g_ext.signum() != g0.signum() {
            return root(lo, t_ext).map(|theta| Crossing::Root { theta });
        }
    }
    None
}

struct Outcome {
    z: State,
    tau: f64,
    side: Side,
    events: Vec<CrossingEvent>,
    stopped: bool,
}

fn phi_of(z: &State) -> Mat2 {
    Mat2::from_array([z[2], z[3], z[4], z[5]])
}

/// Side entered from a start on the manifold. Each side's field is checked
/// with a second-order Taylor step, so tangential starts (zero first-order
/// rate) are resolved by curvature; ambiguous cases fall back to the rate.
fn start_side(eng: &Engine<'_>, sw: &SwitchMonitor<'_>, start: Vec2, rate: f64) -> Side {
    let probe = |side: Side| {
        let f = eng.sys.field(side, start, eng.params) * eng.dir;
        let jf = eng.sys.jacobian(side, start, eng.params) * eng.sys.field(side, start, eng.params);
        let dt = (1e-6 * start.norm().max(1.0) / f.norm().max(1e-12)).min(1e-2);
        sw.value(start + f * dt + jf * (0.5 * dt * dt))
    };
    match (probe(Side::Left) < 0.0, probe(Side::Right) > 0.0) {
        (true, false) => Side::Left,
        (false, true) => Side::Right,
        _ if rate > 0.0 => Side::Right,
        _ => Side::Left,
    }
}

/// Core driver. Integrates for internal time `tau_end >= 0` (physical time
/// `dir * tau`), optionally stopping at the first accepted zero of `stop`.
#[allow(clippy::too_many_arguments)]
fn drive(
    eng: &Engine<'_>,
    start: Vec2,
    mode: FieldMode,
    tau_end: f64,
    stop: Option<&StopCondition<'_>>,
    mut observer: Option<&mut dyn FnMut(&StepView<'_>)>,
    domain: Option<&dyn Fn(Vec2) -> bool>,
) -> Result<Outcome, FlowError> {
    if !start.is_finite() {
        return Err(FlowError::InvalidStart(start));
    }
    eng.sys.check_params(eng.params)?;
    let opts = eng.opts;
    let sw = SwitchMonitor { sys: eng.sys, params: eng.params };
    let mut z: State = [start.x, start.y, 1.0, 0.0, 0.0, 1.0];
    let mut events = Vec::new();

    let mut side = match mode {
        FieldMode::Fixed(s) => s,
        FieldMode::Piecewise => {
            let h0 = sw.value(start);
            if h0.abs() <= opts.event_tol {
                // On the manifold: pick the half the flow moves into.
                let rate = sw.gradient(start).dot(eng.sys.field(Side::Left, start, eng.params)) * eng.dir;
                let side = start_side(eng, &sw, start, rate);
                let into = if side == Side::Right { 1.0 } else { -1.0 };
                if rate * into > 0.0 {
                    events.push(CrossingEvent { time: 0.0, point: start, direction: into as i8, tangential: false });
                }
                side
            } else {
                eng.sys.side_of(start, eng.params)
            }
        }
    };

    let mut tau = 0.0;
    let mut k1 = eng.rhs(side, &z);
    if tau_end <= 0.0 {
        return Ok(Outcome { z, tau, side, events, stopped: false });
    }
    let mut h = eng.initial_step(side, &z, &k1, tau_end);
    let mut n_steps = 0usize;
    let mut stalled_events = 0usize;

    while tau < tau_end {
        n_steps += 1;
        if n_steps > opts.max_steps {
            return Err(FlowError::TooManySteps(opts.max_steps));
        }
        let remaining = tau_end - tau;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        let out = eng.step(side, &z, &k1, h);
        if !out.err.is_finite() || out.err > 1.0 {
            let fac = if out.err.is_finite() { (0.9 * out.err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= fac;
            if h < opts.min_step * tau.abs().max(1.0) {
                return Err(FlowError::StepSizeUnderflow { t: eng.dir * tau, h });
            }
            continue;
        }

        // Earliest of: manifold crossing, stop crossing.
        let sw_cross = match mode {
            FieldMode::Piecewise => locate_in_step(eng, side, &sw, &out.dense, 0.0, opts.event_tol),
            FieldMode::Fixed(_) => None,
        };
        let mut stop_hit: Option<f64> = None;
        if let Some(sc) = stop {
            let mut lo = 0.0;
            for _ in 0..4 {
                match locate_in_step(eng, side, sc, &out.dense, lo, opts.event_tol) {
                    Some(Crossing::Root { theta }) => {
                        let zc = out.dense.eval(theta);
                        let p = Vec2::new(zc[0], zc[1]);
                        let rate = sc.gradient(p).dot(eng.sys.field(side, p, eng.params));
                        let dir_ok = sc.direction.is_none_or(|d| (rate.signum() as i8) == d);
                        if dir_ok && (sc.accept)(p) {
                            stop_hit = Some(theta);
                            break;
                        }
                        if theta >= 1.0 {
                            break;
                        }
                        lo = theta + 1e-9;
                    }
                    _ => break,
                }
            }
        }

        let sw_theta = match sw_cross {
            Some(Crossing::Root { theta }) => Some(theta),
            _ => None,
        };
        let take_stop = match (stop_hit, sw_theta) {
            (Some(a), Some(b)) => a <= b,
            (Some(_), None) => true,
            _ => false,
        };

        if take_stop || sw_theta.is_some() {
            let theta = if take_stop { stop_hit.unwrap() } else { sw_theta.unwrap() };
            let mon: &dyn Monitor = if take_stop { stop.unwrap() } else { &sw };
            let (ze, he, dense_e) = restep_to_root(eng, side, &z, &k1, h, theta, &out.dense, mon);
            if let Some(obs) = observer.as_deref_mut() {
                obs(&StepView { t0: eng.dir * tau, t1: eng.dir * (tau + he), side, dense: &dense_e });
            }
            tau += he;
            z = ze;
            let p = Vec2::new(z[0], z[1]);
            check_state(p, eng.dir * tau, opts, domain)?;
            if take_stop {
                return Ok(Outcome { z, tau, side, events, stopped: true });
            }
            if he <= opts.min_step * tau.abs().max(1.0) {
                stalled_events += 1;
                if stalled_events > 50 {
                    return Err(FlowError::StepSizeUnderflow { t: eng.dir * tau, h: he });
                }
            } else {
                stalled_events = 0;
            }
            let new_side = side.opposite();
            let f_old = eng.sys.field(side, p, eng.params);
            let f_new = eng.sys.field(new_side, p, eng.params);
            let n = sw.gradient(p);
            let rate = n.dot(f_old);
            if eng.with_var && rate != 0.0 {
                let salt = Mat2::IDENTITY + Mat2::outer(f_new - f_old, n) * (1.0 / rate);
                let phi = (salt * phi_of(&z)).as_array();
                z[2..].copy_from_slice(&phi);
            }
            events.push(CrossingEvent {
                time: eng.dir * tau,
                point: p,
                direction: (rate * eng.dir).signum() as i8 * if eng.dir < 0.0 { -1 } else { 1 },
                tangential: false,
            });
            side = new_side;
            k1 = eng.rhs(side, &z);
            continue;
        }

        if let Some(Crossing::Tangent { theta }) = sw_cross {
            let zt = out.dense.eval(theta);
            events.push(CrossingEvent {
                time: eng.dir * (tau + theta * h),
                point: Vec2::new(zt[0], zt[1]),
                direction: 0,
                tangential: true,
            });
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(&StepView { t0: eng.dir * tau, t1: eng.dir * (tau + h), side, dense: &out.dense });
        }
        tau = if last { tau_end } else { tau + h };
        z = out.z1;
        k1 = out.k7;
        check_state(Vec2::new(z[0], z[1]), eng.dir * tau, opts, domain)?;
        let fac = if out.err == 0.0 { 5.0 } else { (0.9 * out.err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * fac).min(opts.max_step);
    }
    Ok(Outcome { z, tau, side, events, stopped: false })
}

fn check_state(
    p: Vec2,
    t: f64,
    opts: &IntegratorOptions,
    domain: Option<&dyn Fn(Vec2) -> bool>,
) -> Result<(), FlowError> {
    let norm = p.norm();
    if !norm.is_finite() || norm > opts.blowup_norm {
        return Err(FlowError::Blowup { t, norm });
    }
    if let Some(inside) = domain {
        if !inside(p) {
            return Err(FlowError::LeftDomain { t, point: p });
        }
    }
    Ok(())
}

/// Re-takes the step with length `theta·h` so that it ends on the monitor's
/// zero; Newton-corrects the length using the monitor rate.
#[allow(clippy::too_many_arguments)]
fn restep_to_root(
    eng: &Engine<'_>,
    side: Side,
    z0: &State,
    k1: &State,
    h: f64,
    theta: f64,
    dense: &Dense,
    mon: &dyn Monitor,
) -> (State, f64, Dense) {
    let tol = eng.opts.event_tol;
    let mut he = theta * h;
    if he <= 0.0 {
        return (*z0, 0.0, dense.clone());
    }
    let mut best: Option<(f64, StepOut, f64)> = None;
    for _ in 0..6 {
        let out = eng.step(side, z0, k1, he);
        let p = Vec2::new(out.z1[0], out.z1[1]);
        let g = mon.value(p);
        let better = best.as_ref().is_none_or(|(gb, _, _)| g.abs() < gb.abs());
        let rate = mon.gradient(p).dot(eng.sys.field(side, p, eng.params) * eng.dir);
        if better {
            best = Some((g, out, he));
        }
        if g.abs() <= 0.1 * tol || rate == 0.0 {
            break;
        }
        let next = he - g / rate;
        if !(next > 0.0 && next <= 1.5 * h) {
            break;
        }
        he = next;
    }
    let (g, out, he_best) = best.expect("at least one re-step");
    if g.abs() > tol {
        // Fall back on the dense-output point, which satisfies the tolerance.
        let z = dense.eval(theta);
        return (z, theta * h, dense.clone());
    }
    (out.z1, he_best, out.dense)
}

/// Integrates `sys` from `start` for signed time `t_span`.
pub fn integrate(
    sys: &PiecewiseSystem,
    params: &[f64],
    start: Vec2,
    t_span: f64,
    opts: &IntegratorOptions,
    with_variational: bool,
) -> Result<FlowResult, FlowError> {
    integrate_observed(sys, params, start, t_span, FieldMode::Piecewise, opts, with_variational, None)
}

/// [`integrate`] with a field mode and an optional per-step observer.
#[allow(clippy::too_many_arguments)]
pub fn integrate_observed(
    sys: &PiecewiseSystem,
    params: &[f64],
    start: Vec2,
    t_span: f64,
    mode: FieldMode,
    opts: &IntegratorOptions,
    with_variational: bool,
    observer: Option<&mut dyn FnMut(&StepView<'_>)>,
) -> Result<FlowResult, FlowError> {
    let dir = if t_span < 0.0 { -1.0 } else { 1.0 };
    let eng = Engine { sys, params, opts, dir, with_var: with_variational };
    let out = drive(&eng, start, mode, t_span.abs(), None, observer, None)?;
    Ok(FlowResult {
        endpoint: Vec2::new(out.z[0], out.z[1]),
        elapsed: dir * out.tau,
        events: out.events,
        variational: with_variational.then(|| phi_of(&out.z)),
        side: out.side,
    })
}

/// Result of flowing until a stop surface is hit.
#[derive(Clone, Debug)]
pub struct StopResult {
    pub point: Vec2,
    /// Signed elapsed time.
    pub time: f64,
    pub variational: Option<Mat2>,
    pub events: Vec<CrossingEvent>,
    pub side: Side,
}

/// Flows (forward if `backward` is false) until `stop` is crossed, or
/// fails with [`FlowError::NoReturn`] after `opts.max_time`.
#[allow(clippy::too_many_arguments)]
pub fn flow_until(
    sys: &PiecewiseSystem,
    params: &[f64],
    start: Vec2,
    backward: bool,
    mode: FieldMode,
    stop: &StopCondition<'_>,
    opts: &IntegratorOptions,
    with_variational: bool,
    domain: Option<&dyn Fn(Vec2) -> bool>,
) -> Result<StopResult, FlowError> {
    let dir = if backward { -1.0 } else { 1.0 };
    let eng = Engine { sys, params, opts, dir, with_var: with_variational };
    let out = drive(&eng, start, mode, opts.max_time, Some(stop), None, domain)?;
    if !out.stopped {
        return Err(FlowError::NoReturn { max_time: opts.max_time });
    }
    Ok(StopResult {
        point: Vec2::new(out.z[0], out.z[1]),
        time: dir * out.tau,
        variational: with_variational.then(|| phi_of(&out.z)),
        events: out.events,
        side: out.side,
    })
}

/// How a section point is labelled by a scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectionCoord {
    /// Signed distance from the base point along the direction.
    Arclength,
    /// The x-coordinate of the section point.
    Abscissa,
}

/// A ray `base + r·direction`, `r >= 0`, used as a Poincaré section.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Section {
    pub base: Vec2,
    pub direction: Vec2,
    /// Sign of `cross(direction, velocity)` for a counted return.
    pub orientation: i8,
    pub coord: SectionCoord,
    /// Trajectories farther than this from the base have left the domain.
    pub max_extent: f64,
}

impl Section {
    pub fn new(base: Vec2, direction: Vec2, orientation: i8, coord: SectionCoord) -> Option<Self> {
        let direction = direction.normalized()?;
        if coord == SectionCoord::Abscissa && direction.x.abs() < 1e-12 {
            return None;
        }
        Some(Self { base, direction, orientation, coord, max_extent: 10.0 })
    }

    pub fn with_max_extent(mut self, r: f64) -> Self {
        self.max_extent = r;
        self
    }

    /// Distance from the base of the point with coordinate `c`.
    pub fn radius_of(&self, c: f64) -> f64 {
        match self.coord {
            SectionCoord::Arclength => c,
            SectionCoord::Abscissa => (c - self.base.x) / self.direction.x,
        }
    }

    pub fn point(&self, c: f64) -> Vec2 {
        self.base + self.direction * self.radius_of(c)
    }

    pub fn coord_of(&self, p: Vec2) -> f64 {
        match self.coord {
            SectionCoord::Arclength => (p - self.base).dot(self.direction),
            SectionCoord::Abscissa => p.x,
        }
    }

    /// Signed distance of `p` from the section line.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        self.direction.cross(p - self.base)
    }

    pub fn normal(&self) -> Vec2 {
        Vec2::new(-self.direction.y, self.direction.x)
    }
}

#[derive(Clone, Debug)]
pub struct ReturnResult {
    pub coord: f64,
    pub point: Vec2,
    pub period: f64,
    /// State-transition matrix over the return.
    pub variational: Mat2,
    /// Derivative of the scalar return map, from the variational matrix
    /// projected onto the section.
    pub derivative: f64,
    pub events: Vec<CrossingEvent>,
}

/// First return to `section` from the section point with coordinate `start`.
pub fn poincare_return(
    sys: &PiecewiseSystem,
    params: &[f64],
    section: &Section,
    start: f64,
    mode: FieldMode,
    opts: &IntegratorOptions,
) -> Result<ReturnResult, FlowError> {
    let r0 = section.radius_of(start);
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(FlowError::OffSection { coord: start });
    }
    let p0 = section.point(start);
    let value = |p: Vec2| section.signed_distance(p);
    let normal = section.normal();
    let gradient = move |_: Vec2| normal;
    let accept = |p: Vec2| (p - section.base).dot(section.direction) > 0.0;
    let stop = StopCondition {
        value: &value,
        gradient: &gradient,
        direction: Some(section.orientation),
        accept: &accept,
    };
    let extent = section.max_extent;
    let inside = move |p: Vec2| (p - section.base).norm() <= extent;
    let res = flow_until(sys, params, p0, false, mode, &stop, opts, true, Some(&inside))?;
    let phi = res.variational.expect("variational requested");
    // Derivative of the hit point along the section, accounting for the
    // change in return time: (I − f nᵀ / (n·f)) Φ v.
    let side = res.side;
    let f = sys.field(side, res.point, params);
    let nf = normal.dot(f);
    let v0 = match section.coord {
        SectionCoord::Arclength => section.direction,
        SectionCoord::Abscissa => section.direction * (1.0 / section.direction.x),
    };
    let w = phi * v0;
    let dp = w - f * (normal.dot(w) / nf);
    let derivative = match section.coord {
        SectionCoord::Arclength => dp.dot(section.direction),
        SectionCoord::Abscissa => dp.x,
    };
    Ok(ReturnResult {
        coord: section.coord_of(res.point),
        point: res.point,
        period: res.time,
        variational: phi,
        derivative,
        events: res.events,
    })
}

/// Maximum of the switching function along the orbit through `start` over
/// one `period`: negative when the orbit stays left, zero when it grazes.
pub fn min_signed_distance(
    sys: &PiecewiseSystem,
    params: &[f64],
    start: Vec2,
    period: f64,
    opts: &IntegratorOptions,
) -> Result<f64, FlowError> {
    const SAMPLES: usize = 8;
    let mut best = f64::NEG_INFINITY;
    let mut best_step: Option<(Dense, f64)> = None;
    let mut observer = |v: &StepView<'_>| {
        for k in 0..=SAMPLES {
            let theta = k as f64 / SAMPLES as f64;
            let h = sys.switch_value(v.state(theta), params);
            if h > best {
                best = h;
                best_step = Some((v.dense.clone(), theta));
            }
        }
    };
    integrate_observed(sys, params, start, period, FieldMode::Piecewise, opts, false, Some(&mut observer))?;
    if let Some((dense, theta)) = best_step {
        let lo = (theta - 1.0 / SAMPLES as f64).max(0.0);
        let hi = (theta + 1.0 / SAMPLES as f64).min(1.0);
        let neg_h = |t: f64| {
            let z = dense.eval(t);
            Ok::<_, std::convert::Infallible>(-sys.switch_value(Vec2::new(z[0], z[1]), params))
        };
        let (_, f_min) = roots::minimize(neg_h, lo, hi, 1e-12, 200).unwrap_or((theta, -best));
        best = best.max(-f_min);
    }
    Ok(best)
}

/// Central finite-difference Jacobian of the time-`t` flow map.
pub fn fd_flow_jacobian(
    sys: &PiecewiseSystem,
    params: &[f64],
    start: Vec2,
    t: f64,
    opts: &IntegratorOptions,
    step: f64,
) -> Result<Mat2, FlowError> {
    let end = |p: Vec2| integrate(sys, params, p, t, opts, false).map(|r| r.endpoint);
    let hx = step * start.x.abs().max(1.0);
    let hy = step * start.y.abs().max(1.0);
    let cx = (end(start + Vec2::new(hx, 0.0))? - end(start - Vec2::new(hx, 0.0))?) * (0.5 / hx);
    let cy = (end(start + Vec2::new(0.0, hy))? - end(start - Vec2::new(0.0, hy))?) * (0.5 / hy);
    Ok(Mat2::from_cols(cx, cy))
}
