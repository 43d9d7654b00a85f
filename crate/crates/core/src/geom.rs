//! Unit-disk geometry: boundary points, normals, reflections, rotations and
//! the bounce matrix `A_{v,y}`.
//!
//! Vectors are columns. Gradients of scalar functions are stored as `Vec2`
//! but act as row vectors, so `g·M` is written `M.transpose() * g`.

use crate::error::{Error, Result};
use nalgebra::{Matrix2, Vector2};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Grazing tolerance, relative to `|v|`.
pub const EPS_GRAZE: f64 = 1e-10;
/// Boundary membership tolerance on `| |p| - 1 |`.
pub const EPS_BOUNDARY: f64 = 1e-12;

/// A point of the unit circle, renormalized on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint(Vec2);

impl BoundaryPoint {
    pub fn new(p: Vec2) -> Result<Self> {
        let r = p.norm();
        if !r.is_finite() || (r - 1.0).abs() > EPS_BOUNDARY {
            return Err(Error::NotOnBoundary { radius: r });
        }
        Ok(Self(p / r))
    }

    /// Projects any nonzero point radially onto the circle.
    pub fn project(p: Vec2) -> Result<Self> {
        let r = p.norm();
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::NotOnBoundary { radius: r });
        }
        Ok(Self(p / r))
    }

    pub fn from_angle(phi: f64) -> Self {
        Self(Vec2::new(phi.cos(), phi.sin()))
    }

    pub fn point(&self) -> Vec2 {
        self.0
    }
}

/// Outward unit normal; on the unit circle it is the point itself. The
/// stored point is already normalized, and normalizing again adds rounding
/// that accumulates along long bounce sequences.
pub fn unit_normal(p: BoundaryPoint) -> Vec2 {
    p.0
}

/// `a ⊗ b = a bᵀ`.
pub fn outer(a: Vec2, b: Vec2) -> Mat2 {
    a * b.transpose()
}

/// `I - 2 n ⊗ n` for a unit vector `n`.
pub fn reflect_along(n: Vec2) -> Mat2 {
    Mat2::identity() - 2.0 * outer(n, n)
}

/// `R_p = I - 2 n(p) ⊗ n(p)`.
pub fn reflection_matrix(p: BoundaryPoint) -> Mat2 {
    reflect_along(unit_normal(p))
}

/// Counterclockwise rotation by `angle` radians.
pub fn rotation_matrix(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Counterclockwise quarter turn.
pub fn q() -> Mat2 {
    Mat2::new(0.0, -1.0, 1.0, 0.0)
}

/// Fails with `Grazing` when `|v·n| <= EPS_GRAZE |v|`.
pub fn check_nongrazing(v: Vec2, n: Vec2) -> Result<f64> {
    let vn = v.dot(&n);
    if vn.abs() <= EPS_GRAZE * v.norm() {
        return Err(Error::Grazing { vn });
    }
    Ok(vn)
}

/// `A_{v,n} = ((v·n) I + n ⊗ v)(I - v ⊗ n / (v·n))` for a unit normal `n`.
pub fn a_matrix_normal(v: Vec2, n: Vec2) -> Result<Mat2> {
    let vn = check_nongrazing(v, n)?;
    let left = vn * Mat2::identity() + outer(n, v);
    let right = Mat2::identity() - outer(v, n) / vn;
    Ok(left * right)
}

/// The bounce matrix `A_{v,p}`.
pub fn a_matrix(v: Vec2, p: BoundaryPoint) -> Result<Mat2> {
    a_matrix_normal(v, unit_normal(p))
}

/// `(Qv ⊗ Qv) / (v·n)`, which equals `R_n A_{v,n}`.
pub fn tangential_projector(v: Vec2, n: Vec2) -> Result<Mat2> {
    let vn = check_nongrazing(v, n)?;
    let qv = q() * v;
    Ok(outer(qv, qv) / vn)
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat2) -> f64 {
    m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}
