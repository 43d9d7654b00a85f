//! Boundary-derivative matrices and the C¹ / C² compatibility checks for
//! initial data at incoming boundary states.
//!
//! Gradients are handled as row vectors (`RowVector2`) here so products such
//! as `∇ᵥf₀ · M` read in the same order as the conditions. A stacked block
//! `[g M₁; g M₂]` is the 2×2 matrix whose row `i` is `g Mᵢ`.
//!
//! Each checker evaluates two algebraically equivalent forms: the
//! symmetrized condition on `f₀` at `(x, v)` and `(x, R_x v)`, and the
//! unsymmetrized column form built from `∇ₓRⁱ`, `∇ᵥ(−2Aⁱ)` and `∇ₓ(−2Aⁱ)`.
//! Disagreement between them beyond rounding is reported as
//! `Error::Inconsistent`.

use crate::error::{Error, Result};
use crate::geom::{
    a_matrix_normal, check_nongrazing, outer, reflect_along, tangential_projector, unit_normal,
    BoundaryPoint, Mat2, Vec2, EPS_GRAZE,
};
use crate::transport::data::{HessBlocks, InitialData, Provenance};
use nalgebra::RowVector2;
use serde::Serialize;

pub use crate::sample::{sample_gamma_minus, sample_gamma_minus_with};

type Row = RowVector2<f64>;

/// An incoming boundary state, `v·n(x) < −ε_graze |v|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMinusPoint {
    pub x: BoundaryPoint,
    pub v: Vec2,
}

impl GammaMinusPoint {
    pub fn new(x: BoundaryPoint, v: Vec2) -> Result<Self> {
        let vn = v.dot(&unit_normal(x));
        if !(vn < -EPS_GRAZE * v.norm()) {
            return Err(Error::Grazing { vn });
        }
        Ok(Self { x, v })
    }

    /// Accepts incoming or outgoing states; outgoing ones are mapped to
    /// `(x, R_x v)`.
    pub fn from_boundary(x: BoundaryPoint, v: Vec2) -> Result<Self> {
        let n = unit_normal(x);
        let vn = check_nongrazing(v, n)?;
        if vn > 0.0 {
            Self::new(x, reflect_along(n) * v)
        } else {
            Self::new(x, v)
        }
    }

    pub fn normal(&self) -> Vec2 {
        unit_normal(self.x)
    }

    pub fn reflected_v(&self) -> Vec2 {
        reflect_along(self.normal()) * self.v
    }
}

fn parts(n: Vec2, v: Vec2) -> (f64, f64, f64, f64) {
    (n.x, n.y, v.x, v.y)
}

/// `(∇ₓR¹, ∇ₓR²)`: derivatives of the columns of `R_{x¹(x,v)}` in `x`,
/// written in the components of `n = n(x¹)` and `v`.
#[allow(non_snake_case)]
pub fn grad_R_columns(n: Vec2, v: Vec2) -> Result<(Mat2, Mat2)> {
    let vn = check_nongrazing(v, n)?;
    let (n1, n2, v1, v2) = parts(n, v);
    let d = n2 * n2 - n1 * n1;
    let r1 = Mat2::new(-4.0 * v2 * n1 * n2, 4.0 * v1 * n1 * n2, -2.0 * v2 * d, 2.0 * v1 * d) / vn;
    let r2 = Mat2::new(-2.0 * v2 * d, 2.0 * v1 * d, 4.0 * v2 * n1 * n2, -4.0 * v1 * n1 * n2) / vn;
    Ok((r1, r2))
}

/// `(∇ᵥ(−2A¹), ∇ᵥ(−2A²))` at a fixed boundary normal `n`.
#[allow(non_snake_case)]
pub fn grad_v_neg2A_columns(n: Vec2, v: Vec2) -> Result<(Mat2, Mat2)> {
    let vn = check_nongrazing(v, n)?;
    let (n1, n2, v1, v2) = parts(n, v);
    let q = vn * vn;
    let a1 = Mat2::new(
        -2.0 * v2 * v2 * n1 / q,
        -2.0 * n2 - 2.0 * v1 * v1 * n1 * n1 * n2 / q + 4.0 * v1 * v2 * n1.powi(3) / q
            + 2.0 * v2 * v2 * n1 * n1 * n2 / q,
        -2.0 * v2 * v2 * n2 / q,
        2.0 * n1 - 2.0 * v1 * v1 * n1 * n2 * n2 / q + 4.0 * v1 * v2 * n1 * n1 * n2 / q
            + 2.0 * v2 * v2 * n1 * n2 * n2 / q,
    );
    let a2 = Mat2::new(
        2.0 * n2 + 2.0 * v1 * v1 * n1 * n1 * n2 / q + 4.0 * v1 * v2 * n1 * n2 * n2 / q
            - 2.0 * v2 * v2 * n1 * n1 * n2 / q,
        -2.0 * v1 * v1 * n1 / q,
        -2.0 * n1 - 2.0 * v2 * v2 * n1 * n2 * n2 / q + 4.0 * v1 * v2 * n2.powi(3) / q
            + 2.0 * v1 * v1 * n1 * n2 * n2 / q,
        -2.0 * v1 * v1 * n2 / q,
    );
    Ok((a1, a2))
}

/// `(∇ₓ(−2A¹), ∇ₓ(−2A²))` for `A = A_{v, x¹(x,v)}`.
#[allow(non_snake_case)]
pub fn grad_x_neg2A_columns(n: Vec2, v: Vec2) -> Result<(Mat2, Mat2)> {
    let vn = check_nongrazing(v, n)?;
    let (n1, n2, v1, v2) = parts(n, v);
    let c = vn.powi(3);
    let (p2, p3, p4) = (|z: f64| z * z, |z: f64| z.powi(3), |z: f64| z.powi(4));
    let s1 = 3.0 * p2(n1) * n2 - p3(n2);
    let s2 = 3.0 * n1 * p2(n2) + p3(n1);
    let s3 = 3.0 * n1 * p2(n2) - p3(n1);
    let s4 = 3.0 * p2(n1) * n2 + p3(n2);
    let vv = p2(v1) * p2(v2);
    let m1 = Mat2::new(
        4.0 * vv * p3(n1) + 2.0 * v1 * p3(v2) * s1 + 2.0 * p4(v2) * s2,
        -4.0 * p3(v1) * v2 * p3(n1) - 2.0 * vv * s1 - 2.0 * v1 * p3(v2) * s2,
        4.0 * p4(v2) * p3(n2) + 2.0 * v1 * p3(v2) * s3 + 2.0 * vv * s4,
        -4.0 * v1 * p3(v2) * p3(n2) - 2.0 * vv * s3 - 2.0 * p3(v1) * v2 * s4,
    ) / c;
    let m2 = Mat2::new(
        -4.0 * p3(v1) * v2 * p3(n1) - 2.0 * v1 * p3(v2) * s2 - 2.0 * vv * s1,
        4.0 * p4(v1) * p3(n1) + 2.0 * vv * s2 + 2.0 * p3(v1) * v2 * s1,
        -4.0 * v1 * p3(v2) * p3(n2) - 2.0 * p3(v1) * v2 * s4 - 2.0 * vv * s3,
        4.0 * vv * p3(n2) + 2.0 * p4(v1) * s4 + 2.0 * p3(v1) * v2 * s3,
    ) / c;
    Ok((m1, m2))
}

/// First-order correction matrices at an incoming boundary state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JkMatrices {
    pub j1: Mat2,
    pub j2: Mat2,
    pub k1: Mat2,
    pub k2: Mat2,
}

/// On the boundary `n(x) = x`, so `𝒥ᵢ` and `𝒦ᵢ` are the column derivatives
/// `∇ₓRⁱ` and `∇ₓ(−2Aⁱ)` evaluated at the point itself.
pub fn jk_matrices(p: &GammaMinusPoint) -> Result<JkMatrices> {
    let x = p.x.point();
    let (j1, j2) = grad_R_columns(x, p.v)?;
    let (k1, k2) = grad_x_neg2A_columns(x, p.v)?;
    Ok(JkMatrices { j1, j2, k1, k2 })
}

/// The column vectors `K₁..K₄` mixing `∂ₓⱼRⁱ` with `∂ᵥⱼ(−2Aⁱ)`.
pub fn k_vectors(n: Vec2, v: Vec2) -> Result<[Vec2; 4]> {
    let (r1, r2) = grad_R_columns(n, v)?;
    let (a1, a2) = grad_v_neg2A_columns(n, v)?;
    Ok([
        r1.column(0) - a1.column(0),
        r1.column(1) - a2.column(0),
        r2.column(0) - a1.column(1),
        r2.column(1) - a2.column(1),
    ])
}

/// Condition identifiers, serialized as `C1`, `C2_PARALLEL_X`, …
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Condition {
    C1,
    C2ParallelX,
    C2ParallelV,
    C2Mixed,
    C2Xx,
    C2Necessary,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::C1,
        Condition::C2ParallelX,
        Condition::C2ParallelV,
        Condition::C2Mixed,
        Condition::C2Xx,
        Condition::C2Necessary,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::C1 => "C1",
            Condition::C2ParallelX => "C2_PARALLEL_X",
            Condition::C2ParallelV => "C2_PARALLEL_V",
            Condition::C2Mixed => "C2_MIXED",
            Condition::C2Xx => "C2_XX",
            Condition::C2Necessary => "C2_NECESSARY",
        }
    }
}

/// Both sides of one condition at one boundary state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatReport {
    pub condition: Condition,
    /// `‖left − right‖∞`.
    pub residual: f64,
    /// Residual divided by the larger side's max-norm (plus `1e-30`), or the
    /// normalized perpendicular component for the parallel conditions.
    pub relative: f64,
    /// Row-major entries.
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub x: [f64; 2],
    pub v: [f64; 2],
    /// Relative gap between the symmetrized and the column form.
    pub consistency: Option<f64>,
    /// Residual with the `𝒦` coefficient as printed (`−2`), `C2_XX` only.
    pub printed_residual: Option<f64>,
    pub provenance: Provenance,
}

fn flat(m: &Mat2) -> Vec<f64> {
    vec![m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}

fn amax(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

fn report(
    condition: Condition,
    p: &GammaMinusPoint,
    left: Vec<f64>,
    right: Vec<f64>,
    provenance: Provenance,
) -> CompatReport {
    let residual = left.iter().zip(&right).fold(0.0_f64, |a, (l, r)| a.max((l - r).abs()));
    let relative = residual / (amax(&left).max(amax(&right)) + 1e-30);
    let x = p.x.point();
    CompatReport {
        condition,
        residual,
        relative,
        left,
        right,
        x: [x.x, x.y],
        v: [p.v.x, p.v.y],
        consistency: None,
        printed_residual: None,
        provenance,
    }
}

/// Ingredients shared by all checkers.
struct Frame {
    r: Mat2,
    a: Mat2,
    p: Mat2,
    p_ref: Mat2,
    gx: Row,
    gv: Row,
    gx_ref: Row,
    gv_ref: Row,
}

impl Frame {
    /// Size of the terms entering the first-order forms; rounding in
    /// either form is relative to this.
    fn scale(&self) -> f64 {
        let g = [self.gx, self.gv, self.gx_ref, self.gv_ref].iter().fold(0.0_f64, |m, g| m.max(g.amax()));
        g * (1.0 + self.a.amax()).powi(2)
    }
}

fn frame(data: &dyn InitialData, pt: &GammaMinusPoint) -> Result<Frame> {
    let x = pt.x.point();
    let n = pt.normal();
    let v = pt.v;
    let rv = pt.reflected_v();
    let (gx, gv) = data.grad(x, v)?;
    let (gx_ref, gv_ref) = data.grad(x, rv)?;
    Ok(Frame {
        r: reflect_along(n),
        a: a_matrix_normal(v, n)?,
        p: tangential_projector(v, n)?,
        p_ref: tangential_projector(rv, n)?,
        gx: gx.transpose(),
        gv: gv.transpose(),
        gx_ref: gx_ref.transpose(),
        gv_ref: gv_ref.transpose(),
    })
}

/// `[g M₁; g M₂]`.
fn stack(g: &Row, m1: &Mat2, m2: &Mat2) -> Mat2 {
    let (a, b) = (g * m1, g * m2);
    Mat2::new(a[0], a[1], b[0], b[1])
}

fn check_agreement(what: &str, a: &Mat2, b: &Mat2, scale: f64, tol: f64) -> Result<f64> {
    let gap = (a - b).amax() / (scale + 1e-300);
    if gap > tol {
        return Err(Error::Inconsistent(format!(
            "{what}: symmetrized and column forms differ by {gap:.3e} (relative)"
        )));
    }
    Ok(gap)
}

impl Second {
    fn scale(&self) -> f64 {
        let h = [&self.h, &self.hr]
            .iter()
            .flat_map(|b| [b.xx, b.xv, b.vx, b.vv])
            .fold(0.0_f64, |m, b| m.max(b.amax()));
        let jk = [self.jk.j1, self.jk.j2, self.jk.k1, self.jk.k2, self.a1, self.a2]
            .iter()
            .fold(0.0_f64, |m, b| m.max(b.amax()));
        let a = 1.0 + self.f.a.amax();
        (h * a * a + self.f.scale() * (1.0 + jk) * a).max(f64::MIN_POSITIVE)
    }
}

/// First-order condition. The residual row is
/// `[∇ₓf₀ + ∇ᵥf₀ P] R − [∇ₓf₀′ + ∇ᵥf₀′ P′]` with primes at `(x, R_x v)`,
/// `P = (Qv⊗Qv)/(v·n)`, `P′ = (QRv⊗QRv)/(Rv·n)`.
pub fn check_c1(data: &dyn InitialData, p: &GammaMinusPoint) -> Result<CompatReport> {
    let f = frame(data, p)?;
    let left = (f.gx + f.gv * f.p) * f.r;
    let right = f.gx_ref + f.gv_ref * f.p_ref;
    // column form: (∇ₓf₀ − ∇ₓf₀′R + 2∇ᵥf₀′A) R + (∇ᵥf₀ − ∇ᵥf₀′R) R A R
    let d_cv = f.gx - f.gx_ref * f.r + 2.0 * f.gv_ref * f.a;
    let d_comp = f.gv - f.gv_ref * f.r;
    let alt = d_cv * f.r + d_comp * f.r * f.a * f.r;
    let s = left - right;
    let scale = f.scale().max(f64::MIN_POSITIVE);
    let gap = (s - alt).amax() / scale;
    if gap > 1e-10 {
        return Err(Error::Inconsistent(format!("C1 forms differ by {gap:.3e} (relative)")));
    }
    let mut rep = report(Condition::C1, p, left.iter().cloned().collect(), right.iter().cloned().collect(), data.provenance(1));
    rep.consistency = Some(gap);
    Ok(rep)
}

/// The row `∇ₓf₀(x, v) − ∇ₓf₀(x, Rv) R − ∇ᵥf₀(x, Rv)(−2A)`, whose
/// contraction with a direction gives the one-sided derivative gap.
pub fn c1_column_defect(data: &dyn InitialData, p: &GammaMinusPoint) -> Result<Vec2> {
    let f = frame(data, p)?;
    Ok((f.gx - f.gx_ref * f.r + 2.0 * f.gv_ref * f.a).transpose())
}

/// `(∇ₓf₀ ∥ (Rv)ᵀ, ∇ᵥf₀ ∥ (Rv)ᵀ)` at `(x, R_x v)`.
pub fn check_c2_parallel(data: &dyn InitialData, p: &GammaMinusPoint) -> Result<(CompatReport, CompatReport)> {
    let f = frame(data, p)?;
    let rv = p.reflected_v();
    let u = rv / rv.norm();
    let one = |cond: Condition, g: Row| {
        let g = g.transpose();
        let along = u * g.dot(&u);
        let mut rep = report(cond, p, vec![g.x, g.y], vec![along.x, along.y], data.provenance(1));
        let perp = g.dot(&(crate::geom::q() * rv)).abs();
        rep.relative = perp / (g.norm() * rv.norm()).max(1e-30);
        rep
    };
    Ok((one(Condition::C2ParallelX, f.gx_ref), one(Condition::C2ParallelV, f.gv_ref)))
}

struct Second {
    f: Frame,
    h: HessBlocks,
    hr: HessBlocks,
    jk: JkMatrices,
    a1: Mat2,
    a2: Mat2,
}

fn second(data: &dyn InitialData, p: &GammaMinusPoint) -> Result<Second> {
    let f = frame(data, p)?;
    let x = p.x.point();
    let h = data.hess_blocks(x, p.v)?;
    let hr = data.hess_blocks(x, p.reflected_v())?;
    let jk = jk_matrices(p)?;
    let (a1, a2) = grad_v_neg2A_columns(p.normal(), p.v)?;
    Ok(Second { f, h, hr, jk, a1, a2 })
}

/// Mixed second-order condition:
/// `R[∇ₓᵥf₀ + ∇ᵥᵥf₀ P]R = ∇ₓᵥf₀′ + ∇ᵥᵥf₀′ P′ + R[∇ᵥf₀′𝒥]R`.
pub fn check_c2_mixed(data: &dyn InitialData, p: &GammaMinusPoint) -> Result<CompatReport> {
    let s = second(data, p)?;
    let (f, h, hr) = (&s.f, &s.h, &s.hr);
    let gj = stack(&f.gv_ref, &s.jk.j1, &s.jk.j2);
    let left = f.r * (h.xv + h.vv * f.p) * f.r;
    let right = hr.xv + hr.vv * f.p_ref + f.r * gj * f.r;
    let d1 = h.xv - f.r * hr.xv * f.r - f.r * hr.vv * (-2.0 * f.a) - gj;
    let d3 = h.vv - f.r * hr.vv * f.r;
    let alt = f.r * d1 * f.r + f.r * d3 * f.r * f.a * f.r;
    let scale = s.scale();
    let gap = check_agreement("C2 mixed", &(left - right), &alt, scale, 1e-9)?;
    let mut rep = report(Condition::C2Mixed, p, flat(&left), flat(&right), data.provenance(2));
    rep.consistency = Some(gap);
    Ok(rep)
}

/// Second-order `∇ₓₓ` condition.
///
/// The `𝒦` correction enters with coefficient `+1`; with that choice the
/// condition is an exact rearrangement of the column form below and is
/// satisfied by `v`-radial steady states. The residual with the printed
/// coefficient `−2` is reported alongside in `printed_residual`.
pub fn check_c2_xx(data: &dyn InitialData, p: &GammaMinusPoint) -> Result<CompatReport> {
    let s = second(data, p)?;
    let (f, h, hr, jk) = (&s.f, &s.h, &s.hr, &s.jk);
    let (r, a) = (f.r, f.a);
    let gj = stack(&f.gv_ref, &jk.j1, &jk.j2);
    let gk = stack(&f.gv_ref, &jk.k1, &jk.k2);
    // ∇ᵥAⁱ = −½ ∇ᵥ(−2Aⁱ)
    let g_dva = stack(&f.gv_ref, &(-0.5 * s.a1), &(-0.5 * s.a2));
    let left = r * (h.xx + h.vx * f.p + f.p * h.xv) * r;
    let base = hr.xx + hr.vx * f.p_ref + f.p_ref * hr.xv - 2.0 * r * g_dva * r * a * r + a * gj * r;
    let right = base + r * gk * r;
    let printed = base - 2.0 * r * gk * r;

    let gxj = stack(&f.gx_ref, &jk.j1, &jk.j2);
    let neg2a = -2.0 * a;
    let d1 = h.xv - r * hr.xv * r - r * hr.vv * neg2a - gj;
    let d2 = h.xx - r * hr.xx * r - r * hr.vx * neg2a - neg2a.transpose() * hr.xv * r
        - neg2a.transpose() * hr.vv * neg2a
        - gxj
        - gk;
    let d4 = h.vx - r * hr.vx * r - neg2a.transpose() * hr.vv * r - stack(&f.gv_ref, &s.a1, &s.a2);
    let alt = r * d2 * r + r * d4 * r * a * r + a * d1 * r + r * gxj * r;
    let scale = s.scale();
    let gap = check_agreement("C2 xx", &(left - right), &alt, scale, 1e-9)?;
    let mut rep = report(Condition::C2Xx, p, flat(&left), flat(&right), data.provenance(2));
    rep.consistency = Some(gap);
    rep.printed_residual = Some((left - printed).amax());
    Ok(rep)
}

/// The two scalar sandwiches `vᵀ[…]v = (Rv)ᵀ[…](Rv)` of the mixed and the
/// `xx` conditions, as one report with `left`/`right` of length 2.
pub fn check_c2_necessary(data: &dyn InitialData, p: &GammaMinusPoint) -> Result<CompatReport> {
    let s = second(data, p)?;
    let (f, h, hr) = (&s.f, &s.h, &s.hr);
    let v = p.v;
    let rv = p.reflected_v();
    let sand = |w: Vec2, m: Mat2| w.dot(&(m * w));
    let m_left = sand(v, h.xv + h.vv * f.p);
    let m_right = sand(rv, hr.xv + hr.vv * f.p_ref);
    let x_left = sand(v, h.xx + h.vx * f.p + f.p * h.xv);
    let x_right = sand(rv, hr.xx + hr.vx * f.p_ref + f.p_ref * hr.xv);
    Ok(report(
        Condition::C2Necessary,
        p,
        vec![m_left, x_left],
        vec![m_right, x_right],
        data.provenance(2),
    ))
}

/// The two scalar residuals of `check_c2_necessary`.
pub fn c2_necessary_residuals(data: &dyn InitialData, p: &GammaMinusPoint) -> Result<(f64, f64)> {
    let r = check_c2_necessary(data, p)?;
    Ok(((r.left[0] - r.right[0]).abs(), (r.left[1] - r.right[1]).abs()))
}

/// Every checker at one point, in `Condition::ALL` order.
pub fn check_all(data: &dyn InitialData, p: &GammaMinusPoint) -> Result<Vec<CompatReport>> {
    let (px, pv) = check_c2_parallel(data, p)?;
    Ok(vec![
        check_c1(data, p)?,
        px,
        pv,
        check_c2_mixed(data, p)?,
        check_c2_xx(data, p)?,
        check_c2_necessary(data, p)?,
    ])
}

/// One named identity and its relative defect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        self.checks.iter().fold(0.0, |a, c| a.max(c.relative))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.relative)
    }
}

/// Test hooks for `verify_identities`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Flip the sign of the reflected bounce matrix in the `RAR` identity.
    pub sign_flip: bool,
}

pub const IDENTITY_NAMES: [&str; 11] = [
    "ra_left",
    "ra_right",
    "a_squared",
    "a_kills_v",
    "grad_r_kills_v",
    "grad_a_kills_v",
    "jk_kill_v",
    "k_determinants",
    "k_left_annihilator",
    "rar_reflected",
    "grad_a_column_swap",
];

fn eq_rel(a: &Mat2, b: &Mat2) -> f64 {
    (a - b).amax() / (a.amax().max(b.amax()) + 1e-30)
}

fn kill_rel(m: &Mat2, v: Vec2) -> f64 {
    (m * v).amax() / (m.amax() * v.amax() + 1e-30)
}

/// Relative defects of the exact algebraic identities at one state.
pub fn verify_identities(p: &GammaMinusPoint, opts: VerifyOptions) -> Result<IdentityReport> {
    let n = p.normal();
    let v = p.v;
    let rv = p.reflected_v();
    let r = reflect_along(n);
    let a = a_matrix_normal(v, n)?;
    let vn = v.dot(&n);
    let q = crate::geom::q();
    let (qv, qrv) = (q * v, q * rv);
    let (r1, r2) = grad_R_columns(n, v)?;
    let (x1, x2) = grad_x_neg2A_columns(n, v)?;
    let jk = jk_matrices(p)?;
    let ks = k_vectors(n, v)?;

    let mut det = 0.0_f64;
    for i in 0..4 {
        for j in (i + 1)..4 {
            let d = ks[i].x * ks[j].y - ks[i].y * ks[j].x;
            det = det.max(d.abs() / (ks[i].norm() * ks[j].norm() + 1e-30));
        }
    }
    let left_ann = ks
        .iter()
        .map(|k| rv.dot(k).abs() / (rv.norm() * k.norm() + 1e-30))
        .fold(0.0, f64::max);
    let a_ref = a_matrix_normal(rv, n)?;
    let rar_rhs = if opts.sign_flip { a_ref } else { -a_ref };
    let swap_l = x1.column(1).into_owned();
    let swap_r = x2.column(0).into_owned();
    let swap = (swap_l - swap_r).amax() / (swap_l.amax().max(swap_r.amax()) + 1e-30);

    let checks = vec![
        ("ra_left", eq_rel(&(r * a), &(outer(qv, qv) / vn))),
        ("ra_right", eq_rel(&(a * r), &(-outer(qrv, qrv) / rv.dot(&n)))),
        ("a_squared", eq_rel(&(a * a), &(outer(qrv, qrv) * outer(qv, qv) / (vn * vn)))),
        ("a_kills_v", kill_rel(&a, v)),
        ("grad_r_kills_v", kill_rel(&r1, v).max(kill_rel(&r2, v))),
        ("grad_a_kills_v", kill_rel(&x1, v).max(kill_rel(&x2, v))),
        (
            "jk_kill_v",
            [jk.j1, jk.j2, jk.k1, jk.k2].iter().map(|m| kill_rel(m, v)).fold(0.0, f64::max),
        ),
        ("k_determinants", det),
        ("k_left_annihilator", left_ann),
        ("rar_reflected", eq_rel(&(r * a * r), &rar_rhs)),
        ("grad_a_column_swap", swap),
    ];
    Ok(IdentityReport {
        checks: checks.into_iter().map(|(name, relative)| IdentityCheck { name, relative }).collect(),
    })
}

/// `σ_min / σ_max` of a 2×2 matrix.
pub fn singular_ratio(m: &Mat2) -> f64 {
    let sv = m.singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}
