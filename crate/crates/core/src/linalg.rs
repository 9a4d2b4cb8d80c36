//! Fixed-size 2-vectors and 2×2 matrices used throughout the planar analysis.

use std::ops::{Add, Mul, Neg, Sub};

/// A point or tangent vector in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }
}

impl From<(f64, f64)> for Vec2 {
    fn from((x, y): (f64, f64)) -> Self {
        Vec2 { x, y }
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2 { x, y }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Row-major 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Eigenvalues of a real 2×2 matrix: either a complex pair `re ± i·im`
/// (`im > 0`) or two real values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Spectrum {
    Complex { re: f64, im: f64 },
    Real { lo: f64, hi: f64 },
}

impl Spectrum {
    /// Real part of the eigenvalue with the largest real part.
    pub fn leading_re(&self) -> f64 {
        match *self {
            Spectrum::Complex { re, .. } => re,
            Spectrum::Real { hi, .. } => hi,
        }
    }

    pub fn imag(&self) -> f64 {
        match *self {
            Spectrum::Complex { im, .. } => im,
            Spectrum::Real { .. } => 0.0,
        }
    }
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_cols(c0: Vec2, c1: Vec2) -> Self {
        Self::new(c0.x, c1.x, c0.y, c1.y)
    }

    pub fn col(&self, j: usize) -> Vec2 {
        match j {
            0 => Vec2::new(self.a, self.c),
            1 => Vec2::new(self.b, self.d),
            _ => panic!("Mat2 column index {j} out of range"),
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        let scale = self.max_abs().powi(2);
        if det == 0.0 || !det.is_finite() || det.abs() <= 1e-300 * scale.max(1e-300) {
            return None;
        }
        Some(Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    /// Solves `self · x = rhs` by Cramer's rule.
    pub fn solve(&self, rhs: Vec2) -> Option<Vec2> {
        self.inverse().map(|inv| inv * rhs)
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    /// Closed-form eigenvalues from trace and determinant.
    pub fn spectrum(&self) -> Spectrum {
        let half_tr = 0.5 * self.trace();
        let disc = half_tr * half_tr - self.det();
        if disc < 0.0 {
            Spectrum::Complex { re: half_tr, im: (-disc).sqrt() }
        } else {
            let s = disc.sqrt();
            Spectrum::Real { lo: half_tr - s, hi: half_tr + s }
        }
    }

    /// Outer product `u vᵀ`.
    pub fn outer(u: Vec2, v: Vec2) -> Mat2 {
        Mat2::new(u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn from_array(v: [f64; 4]) -> Mat2 {
        Mat2::new(v[0], v[1], v[2], v[3])
    }
}

impl Mul<Vec2> for Mat2 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, m: Mat2) -> Mat2 {
        Mat2::new(
            self.a * m.a + self.b * m.c,
            self.a * m.b + self.b * m.d,
            self.c * m.a + self.d * m.c,
            self.c * m.b + self.d * m.d,
        )
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, m: Mat2) -> Mat2 {
        Mat2::new(self.a + m.a, self.b + m.b, self.c + m.c, self.d + m.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, m: Mat2) -> Mat2 {
        Mat2::new(self.a - m.a, self.b - m.b, self.c - m.c, self.d - m.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_spectrum() {
        let j = Mat2::new(0.0, 1.0, -0.5, 0.0);
        match j.spectrum() {
            Spectrum::Complex { re, im } => {
                assert_eq!(re, 0.0);
                assert!((im - 0.5f64.sqrt()).abs() < 1e-15);
            }
            s => panic!("unexpected {s:?}"),
        }
    }

    #[test]
    fn saddle_is_real() {
        let j = Mat2::new(1.0, 0.0, 0.0, -2.0);
        assert_eq!(j.spectrum(), Spectrum::Real { lo: -2.0, hi: 1.0 });
    }

    #[test]
    fn solve_and_inverse() {
        let m = Mat2::new(2.0, 1.0, -1.0, 3.0);
        let x = m.solve(Vec2::new(3.0, 2.0)).unwrap();
        let r = m * x - Vec2::new(3.0, 2.0);
        assert!(r.max_abs() < 1e-15);
        assert!(Mat2::new(1.0, 2.0, 2.0, 4.0).inverse().is_none());
        let id = m * m.inverse().unwrap();
        assert!((id - Mat2::IDENTITY).max_abs() < 1e-15);
    }
}
