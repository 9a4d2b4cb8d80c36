//! Finite-difference derivatives of planar maps.

use crate::linalg::{Mat2, Vec2};

/// Step used for first derivatives: `max(1e-6, 1e-6·|x|)`.
#[inline]
pub fn first_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

pub fn gradient(f: impl Fn(Vec2) -> f64, p: Vec2) -> Vec2 {
    let hx = first_step(p.x);
    let hy = first_step(p.y);
    Vec2::new(
        (f(Vec2::new(p.x + hx, p.y)) - f(Vec2::new(p.x - hx, p.y))) / (2.0 * hx),
        (f(Vec2::new(p.x, p.y + hy)) - f(Vec2::new(p.x, p.y - hy))) / (2.0 * hy),
    )
}

pub fn jacobian(f: impl Fn(Vec2) -> Vec2, p: Vec2) -> Mat2 {
    let hx = first_step(p.x);
    let hy = first_step(p.y);
    let cx = (f(Vec2::new(p.x + hx, p.y)) - f(Vec2::new(p.x - hx, p.y))) * (0.5 / hx);
    let cy = (f(Vec2::new(p.x, p.y + hy)) - f(Vec2::new(p.x, p.y - hy))) * (0.5 / hy);
    Mat2::from_cols(cx, cy)
}

/// Central derivative of a scalar function of one variable.
pub fn derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Fourth-order central stencils: offsets and weights (before dividing by hᵏ).
const D1: [(i32, f64); 4] = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
const D2: [(i32, f64); 5] =
    [(-2, -1.0 / 12.0), (-1, 16.0 / 12.0), (0, -30.0 / 12.0), (1, 16.0 / 12.0), (2, -1.0 / 12.0)];
const D3: [(i32, f64); 6] = [
    (-3, 1.0 / 8.0),
    (-2, -1.0),
    (-1, 13.0 / 8.0),
    (1, -13.0 / 8.0),
    (2, 1.0),
    (3, -1.0 / 8.0),
];

fn stencil(order: usize) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &D1,
        2 => &D2,
        3 => &D3,
        _ => panic!("stencil order {order} not supported"),
    }
}

/// Mixed partial `∂^{i+j} f / ∂x^i ∂y^j` at `p` (i + j <= 3) with
/// fourth-order central stencils of step `h`.
pub fn partial(f: &impl Fn(Vec2) -> f64, p: Vec2, i: usize, j: usize, h: f64) -> f64 {
    let mut acc = 0.0;
    for &(ox, wx) in stencil(i) {
        for &(oy, wy) in stencil(j) {
            acc += wx * wy * f(Vec2::new(p.x + ox as f64 * h, p.y + oy as f64 * h));
        }
    }
    acc / h.powi((i + j) as i32)
}

/// [`partial`] with one Richardson step over `{h, h/2}` (error O(h⁶)).
pub fn partial_richardson(f: &impl Fn(Vec2) -> f64, p: Vec2, i: usize, j: usize, h: f64) -> f64 {
    let coarse = partial(f, p, i, j, h);
    let fine = partial(f, p, i, j, 0.5 * h);
    (16.0 * fine - coarse) / 15.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_partials_are_exact_enough() {
        // f = 2x³ − x²y + 3xy² + y³/5 + x y
        let f = |p: Vec2| 2.0 * p.x.powi(3) - p.x * p.x * p.y + 3.0 * p.x * p.y * p.y + p.y.powi(3) / 5.0 + p.x * p.y;
        let p = Vec2::new(0.1, -0.2);
        let h = 5e-3;
        let cases = [
            ((3, 0), 12.0),
            ((2, 1), -2.0),
            ((1, 2), 6.0),
            ((0, 3), 1.2),
            ((1, 1), -2.0 * p.x + 6.0 * p.y + 1.0),
            ((2, 0), 12.0 * p.x - 2.0 * p.y),
            ((0, 2), 6.0 * p.x + 1.2 * p.y),
        ];
        for ((i, j), want) in cases {
            let got = partial_richardson(&f, p, i, j, h);
            assert!((got - want).abs() < 1e-8, "({i},{j}): {got} vs {want}");
        }
    }

    #[test]
    fn transcendental_third_partial() {
        let f = |p: Vec2| (p.x + 2.0 * p.y).sin();
        let got = partial_richardson(&f, Vec2::ZERO, 1, 2, 5e-3);
        // ∂x ∂y² sin(x + 2y) = -4 cos(x + 2y)
        assert!((got + 4.0).abs() < 1e-8, "{got}");
    }

    #[test]
    fn jacobian_matches_analytic() {
        let f = |p: Vec2| Vec2::new(p.x * p.y, p.x.exp() - p.y * p.y);
        let p = Vec2::new(0.3, -1.2);
        let j = jacobian(f, p);
        let want = Mat2::new(p.y, p.x, p.x.exp(), -2.0 * p.y);
        assert!((j - want).max_abs() < 1e-9);
    }
}
