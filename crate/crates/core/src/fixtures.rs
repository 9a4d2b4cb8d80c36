//! Built-in systems, addressable by name.

use crate::linalg::{Mat2, Vec2};
use crate::system::{Box2D, NormalFormSystem, PiecewiseSystem};

/// The raw example in `(u, v)` with parameters `(α, β)`; switching
/// manifold `u = (4/5)v`.
pub fn example_raw() -> PiecewiseSystem {
    fn smooth(p: Vec2, q: &[f64]) -> (f64, f64, f64) {
        let (u, v) = (p.x, p.y);
        let (alpha, beta) = (q[0], q[1]);
        let udot = -alpha + 2.0 / 15.0 * beta + v + 0.2 * u * u + u * u * u;
        let vdot = -1.25 * alpha + beta / 6.0 - 0.375 * u + 0.1 * (beta - 1.0) * v;
        (udot, vdot, u / 8.0 - v / 10.0)
    }
    PiecewiseSystem::new(
        "example-raw",
        &["alpha", "beta"],
        |p, q| {
            let (udot, vdot, k) = smooth(p, q);
            Vec2::new(udot, vdot - k)
        },
        |p, q| {
            let (udot, vdot, k) = smooth(p, q);
            Vec2::new(udot, vdot + k)
        },
        |p, _| p.x - 0.8 * p.y,
    )
    .with_jacobians(
        |p, q| Mat2::new(0.4 * p.x + 3.0 * p.x * p.x, 1.0, -0.5, q[1] / 10.0),
        |p, q| Mat2::new(0.4 * p.x + 3.0 * p.x * p.x, 1.0, -0.25, q[1] / 10.0 - 0.2),
    )
    .with_switch_gradient(|_, _| Vec2::new(1.0, -0.8))
}

/// The companion-form image of [`example_raw`], parameters `(μ, η)`.
pub fn example_nf() -> NormalFormSystem {
    // Shared nonlinearity (1/5)u² + u³ with u = (25x + 20y)/(33 − 20η).
    fn nonlinear(p: Vec2, eta: f64) -> (f64, f64, f64) {
        let s = 1.0 / (33.0 - 20.0 * eta);
        let u = (25.0 * p.x + 20.0 * p.y) * s;
        let n = 0.2 * u * u + u * u * u;
        let dn = 0.4 * u + 3.0 * u * u;
        (n, dn * 25.0 * s, dn * 20.0 * s)
    }
    fn field(p: Vec2, q: &[f64], tau: f64, delta: f64) -> Vec2 {
        let (mu, eta) = (q[0], q[1]);
        let (n, _, _) = nonlinear(p, eta);
        Vec2::new(tau * p.x + p.y + n, -mu - delta * p.x + (0.4 - eta) * n)
    }
    fn jac(p: Vec2, q: &[f64], tau: f64, delta: f64) -> Mat2 {
        let eta = q[1];
        let (_, nx, ny) = nonlinear(p, eta);
        let k = 0.4 - eta;
        Mat2::new(tau + nx, 1.0 + ny, -delta + k * nx, k * ny)
    }
    let sys = PiecewiseSystem::new(
        "example-nf",
        &["mu", "eta"],
        |p, q| field(p, q, q[1], 0.5),
        |p, q| field(p, q, q[1] - 0.2, 0.25),
        |p, _| p.x,
    )
    .with_jacobians(|p, q| jac(p, q, q[1], 0.5), |p, q| jac(p, q, q[1] - 0.2, 0.25))
    .with_switch_gradient(|_, _| Vec2::new(1.0, 0.0));
    NormalFormSystem::new(sys).expect("example-nf fixture is in normal form")
}

/// Harmonic oscillator `ẋ = y, ẏ = −x` with a switching line far away at `x = 10`.
pub fn linear_center() -> PiecewiseSystem {
    let f = |p: Vec2, _: &[f64]| Vec2::new(p.y, -p.x);
    PiecewiseSystem::new("linear-center", &[], f, f, |p, _| p.x - 10.0)
        .with_jacobians(|_, _| Mat2::new(0.0, 1.0, -1.0, 0.0), |_, _| Mat2::new(0.0, 1.0, -1.0, 0.0))
        .with_switch_gradient(|_, _| Vec2::new(1.0, 0.0))
}

/// Linear normal-form system with identical halves:
/// `ẋ = ηx + y, ẏ = −μ − ω²x` where `ω²` is the third parameter.
/// The equilibrium is a focus with `ν = η/2`, `ξ = sqrt(ω² − η²/4)`.
pub fn linear_focus() -> PiecewiseSystem {
    let f = |p: Vec2, q: &[f64]| Vec2::new(q[1] * p.x + p.y, -q[0] - q[2] * p.x);
    let j = |_: Vec2, q: &[f64]| Mat2::new(q[1], 1.0, -q[2], 0.0);
    PiecewiseSystem::new("linear-focus", &["mu", "eta", "omega_sq"], f, f, |p, _| p.x)
        .with_jacobians(j, j)
        .with_switch_gradient(|_, _| Vec2::new(1.0, 0.0))
}

/// Normal-form system whose left half is the real form of
/// `w' = iωw + a₀|w|²w` (plus trace `η`); right half has `τ_R = η − 1/5`,
/// `δ_R = 1/4`. Parameters `(μ, η)`; `a₀` and `ω` fixed at construction.
pub fn cubic_hopf(a0: f64, omega: f64) -> NormalFormSystem {
    let w2 = omega * omega;
    let cubic = move |p: Vec2| {
        let r2 = p.x * p.x + p.y * p.y / w2;
        Vec2::new(a0 * r2 * p.x, a0 * r2 * p.y)
    };
    let sys = PiecewiseSystem::new(
        "cubic-hopf",
        &["mu", "eta"],
        move |p, q| Vec2::new(q[1] * p.x + p.y, -q[0] - w2 * p.x) + cubic(p),
        move |p, q| Vec2::new((q[1] - 0.2) * p.x + p.y, -q[0] - 0.25 * p.x) + cubic(p),
        |p, _| p.x,
    );
    NormalFormSystem::new(sys).expect("cubic-hopf fixture is in normal form")
}

/// Normal-form system with purely linear halves (`a₀ = 0`).
pub fn linear_nf() -> NormalFormSystem {
    let sys = PiecewiseSystem::new(
        "linear-nf",
        &["mu", "eta"],
        |p, q| Vec2::new(q[1] * p.x + p.y, -q[0] - 0.5 * p.x),
        |p, q| Vec2::new((q[1] - 0.2) * p.x + p.y, -q[0] - 0.25 * p.x),
        |p, _| p.x,
    );
    NormalFormSystem::new(sys).expect("linear-nf fixture is in normal form")
}

/// [`example_raw`] with the right field shifted by 0.1: deliberately discontinuous.
pub fn broken_example() -> PiecewiseSystem {
    let raw = example_raw();
    let (l, r) = (raw.clone(), raw);
    PiecewiseSystem::new(
        "broken-example",
        &["alpha", "beta"],
        move |p, q| l.field(crate::system::Side::Left, p, q),
        move |p, q| r.field(crate::system::Side::Right, p, q) + Vec2::new(0.1, 0.0),
        |p, _| p.x - 0.8 * p.y,
    )
}

/// Whether a registered system is already in normal form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixtureKind {
    Raw,
    NormalForm,
}

#[derive(Clone, Debug)]
pub struct RegisteredSystem {
    pub name: &'static str,
    pub kind: FixtureKind,
    pub system: PiecewiseSystem,
    pub default_params: Vec<f64>,
    pub default_region: Box2D,
}

impl RegisteredSystem {
    pub fn normal_form(&self) -> Option<NormalFormSystem> {
        match self.kind {
            FixtureKind::NormalForm => NormalFormSystem::new(self.system.clone()).ok(),
            FixtureKind::Raw => None,
        }
    }
}

pub const NAMES: [&str; 2] = ["example-raw", "example-nf"];

pub fn registry() -> Vec<RegisteredSystem> {
    NAMES.iter().filter_map(|n| by_name(n)).collect()
}

pub fn by_name(name: &str) -> Option<RegisteredSystem> {
    match name {
        "example-raw" => Some(RegisteredSystem {
            name: "example-raw",
            kind: FixtureKind::Raw,
            system: example_raw(),
            default_params: vec![0.0, 0.0],
            default_region: Box2D::square(1.0),
        }),
        "example-nf" => Some(RegisteredSystem {
            name: "example-nf",
            kind: FixtureKind::NormalForm,
            system: example_nf().system().clone(),
            default_params: vec![0.0, 0.0],
            default_region: Box2D::square(0.5),
        }),
        _ => None,
    }
}

/// Closed-form coordinate maps between the two example fixtures.
pub mod example_maps {
    use crate::linalg::Vec2;

    /// `(α, β) → (μ, η)`.
    pub fn params_to_nf(alpha: f64, beta: f64) -> (f64, f64) {
        let mu = 0.1 * (16.5 - beta) * (alpha - 2.0 / 15.0 * beta);
        (mu, beta / 10.0)
    }

    /// `(μ, η) → (α, β)`.
    pub fn params_from_nf(mu: f64, eta: f64) -> (f64, f64) {
        let beta = 10.0 * eta;
        (mu / (0.1 * (16.5 - beta)) + 2.0 / 15.0 * beta, beta)
    }

    /// `(u, v) → (x, y)` at parameter `β`.
    pub fn state_to_nf(p: Vec2, beta: f64) -> Vec2 {
        Vec2::new(p.x - 0.8 * p.y, -0.1 * (beta - 4.0) * p.x + p.y)
    }

    /// `(x, y) → (u, v)` at parameter `β`.
    pub fn state_from_nf(p: Vec2, beta: f64) -> Vec2 {
        let eta = beta / 10.0;
        let u = (25.0 * p.x + 20.0 * p.y) / (33.0 - 20.0 * eta);
        Vec2::new(u, (u - p.x) / 0.8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Side;

    #[test]
    fn registry_names_resolve() {
        for n in NAMES {
            assert_eq!(by_name(n).unwrap().name, n);
        }
        assert!(by_name("nope").is_none());
        assert!(by_name("example-nf").unwrap().normal_form().is_some());
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        let raw = example_raw();
        let nf = example_nf();
        for p in [Vec2::new(0.1, -0.3), Vec2::new(-0.2, 0.05)] {
            for side in [Side::Left, Side::Right] {
                let q = [0.02, -0.01];
                let d = raw.jacobian(side, p, &q) - raw.fd_jacobian(side, p, &q);
                assert!(d.max_abs() < 1e-8);
                let d = nf.jacobian(side, p, &q) - nf.fd_jacobian(side, p, &q);
                assert!(d.max_abs() < 1e-8);
            }
        }
    }

    #[test]
    fn example_maps_invert() {
        let (mu, eta) = example_maps::params_to_nf(0.019, -0.29);
        let (a, b) = example_maps::params_from_nf(mu, eta);
        assert!((a - 0.019).abs() < 1e-15 && (b + 0.29).abs() < 1e-15);
        let p = Vec2::new(0.3, -0.7);
        let q = example_maps::state_from_nf(example_maps::state_to_nf(p, 0.4), 0.4);
        assert!((q - p).max_abs() < 1e-14);
    }

    #[test]
    fn cubic_hopf_fixture_shape() {
        let nf = cubic_hopf(-1.0, 0.8);
        let j = nf.jacobian(Side::Left, Vec2::ZERO, &[0.0, 0.0]);
        assert!((j.c + 0.64).abs() < 1e-8);
    }
}
