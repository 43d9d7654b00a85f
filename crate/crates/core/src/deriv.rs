//! First derivatives of the backward flow and of its ingredients, the
//! one-sided Jacobians at a bounce instant, finite-difference helpers, and
//! second derivatives by differencing the analytic Jacobian.
//!
//! Row/column convention: `∇ₓF` for a vector `F` is the matrix whose row `i`
//! is the gradient of `Fᵢ`. Gradients of scalars are returned as `Vec2`.

use crate::error::{Error, Result};
use crate::flow::{angle_at, exit_time, flow_map, FlowState};
use crate::geom::{
    a_matrix_normal, check_nongrazing, outer, reflect_along, rotation_matrix, unit_normal,
    BoundaryPoint, Mat2, Vec2,
};
use nalgebra::{Matrix4, SMatrix, Vector4};

/// Width of the excluded window around each bounce instant, `1e-7 (1 + t)`.
pub fn delta_bounce(t: f64) -> f64 {
    1e-7 * (1.0 + t)
}

/// Distance from `π` below which `grad_theta` refuses to answer.
pub const DELTA_THETA: f64 = 1e-6;

/// Central-difference step for a coordinate of size `c`.
pub fn fd_step(c: f64) -> f64 {
    c.abs().max(1.0) * f64::EPSILON.cbrt()
}

/// Central-difference Jacobian of `f: ℝ⁴ → ℝᴹ` at `z`.
pub fn central_jacobian<const M: usize, F>(f: F, z: [f64; 4]) -> Result<SMatrix<f64, M, 4>>
where
    F: Fn([f64; 4]) -> Result<[f64; M]>,
{
    let mut out = SMatrix::<f64, M, 4>::zeros();
    for j in 0..4 {
        let h = fd_step(z[j]);
        let (mut zp, mut zm) = (z, z);
        zp[j] += h;
        zm[j] -= h;
        let (fp, fm) = (f(zp)?, f(zm)?);
        for i in 0..M {
            out[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Packs `(x, v)` into one 4-vector.
pub fn pack(x: Vec2, v: Vec2) -> [f64; 4] {
    [x.x, x.y, v.x, v.y]
}

/// Splits a 4-vector into `(x, v)`.
pub fn unpack(z: [f64; 4]) -> (Vec2, Vec2) {
    (Vec2::new(z[0], z[1]), Vec2::new(z[2], z[3]))
}

/// Derivatives of the backward exit time and exit point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitGradients {
    pub dtb_dx: Vec2,
    pub dtb_dv: Vec2,
    pub dxb_dx: Mat2,
    pub dxb_dv: Mat2,
}

struct ExitGeometry {
    t_b: f64,
    n: Vec2,
    vn: f64,
}

fn exit_geometry(x: Vec2, v: Vec2) -> Result<ExitGeometry> {
    let t_b = exit_time(x, v)?;
    let n = unit_normal(BoundaryPoint::project(x - t_b * v)?);
    let vn = check_nongrazing(v, n)?;
    Ok(ExitGeometry { t_b, n, vn })
}

pub fn grad_exit(x: Vec2, v: Vec2) -> Result<ExitGradients> {
    let g = exit_geometry(x, v)?;
    let dtb_dx = g.n / g.vn;
    let dxb_dx = Mat2::identity() - outer(v, g.n) / g.vn;
    Ok(ExitGradients {
        dtb_dx,
        dtb_dv: -g.t_b * dtb_dx,
        dxb_dx,
        dxb_dv: -g.t_b * dxb_dx,
    })
}

/// `(∇ₓ n(x_b), ∇ᵥ n(x_b))`; on the unit circle these coincide with the
/// exit-point derivatives.
pub fn grad_normal(x: Vec2, v: Vec2) -> Result<(Mat2, Mat2)> {
    let e = grad_exit(x, v)?;
    Ok((e.dxb_dx, e.dxb_dv))
}

/// Gradients of the bounce angle without the guard near `θ = π`.
///
/// At `θ = π` itself the value is the limit taken from the `σ = +1` side;
/// `θ` has a corner there, so this is a one-sided derivative.
pub fn grad_theta_formula(x: Vec2, v: Vec2) -> Result<(Vec2, Vec2)> {
    let g = exit_geometry(x, v)?;
    Ok(theta_gradients(&g, v))
}

fn theta_gradients(g: &ExitGeometry, v: Vec2) -> (Vec2, Vec2) {
    let (theta, sigma) = angle_at(g.n, v);
    let s = (0.5 * theta).sin();
    let w = rotation_matrix(-f64::from(sigma) * 0.5 * theta) * g.n;
    let gx = -(2.0 / s) * w;
    let gv = 2.0 * (g.t_b / s - 1.0 / v.norm()) * w;
    (gx, gv)
}

/// `(∇ₓθ, ∇ᵥθ)`; fails with `DegenerateAngle` within `DELTA_THETA` of `π`.
pub fn grad_theta(x: Vec2, v: Vec2) -> Result<(Vec2, Vec2)> {
    let g = exit_geometry(x, v)?;
    let (theta, _) = angle_at(g.n, v);
    if std::f64::consts::PI - theta <= DELTA_THETA {
        return Err(Error::DegenerateAngle { theta });
    }
    Ok(theta_gradients(&g, v))
}

/// Rejects times within `delta_bounce(t)` of a bounce instant.
pub fn check_open_cell(t: f64, st: &FlowState) -> Result<()> {
    let delta = delta_bounce(t);
    let gap = if st.l == 0 {
        st.t_b - t
    } else {
        st.t_l.min(st.chord_time() - st.t_l)
    };
    if !(gap > delta) {
        return Err(Error::NotInOpenCell { gap });
    }
    Ok(())
}

/// `(∇ₓtˡ, ∇ᵥtˡ)` for the time left after the last bounce.
///
/// `cos(θ/2)∇θ` is smooth through `θ = π`, so no angle guard is applied.
pub fn grad_t_l(t: f64, x: Vec2, v: Vec2, st: &FlowState) -> Result<(Vec2, Vec2)> {
    if st.l == 0 {
        return Err(Error::InvalidInput("no bounce in [0, t]".into()));
    }
    check_open_cell(t, st)?;
    let g = exit_geometry(x, v)?;
    let (gx_th, gv_th) = theta_gradients(&g, v);
    let speed = v.norm();
    let half = 0.5 * st.theta;
    let m = (st.l - 1) as f64;
    let k = m * half.cos() / speed;
    let gx = -g.n / g.vn - k * gx_th;
    let gv = g.t_b * g.n / g.vn + 2.0 * m * half.sin() / speed.powi(3) * v - k * gv_th;
    Ok((gx, gv))
}

/// The blocks of `∂(X(0), V(0)) / ∂(x, v)` and the time derivatives.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianBundle {
    pub dX_dx: Mat2,
    pub dX_dv: Mat2,
    pub dV_dx: Mat2,
    pub dV_dv: Mat2,
    pub dX_dt: Vec2,
    pub dV_dt: Vec2,
}

impl JacobianBundle {
    /// Free streaming over a time `t` with velocity `v`.
    pub fn free(t: f64, v: Vec2) -> Self {
        Self {
            dX_dx: Mat2::identity(),
            dX_dv: -t * Mat2::identity(),
            dV_dx: Mat2::zeros(),
            dV_dv: Mat2::identity(),
            dX_dt: -v,
            dV_dt: Vec2::zeros(),
        }
    }

    /// The 4×4 matrix with rows `(X₁, X₂, V₁, V₂)` and columns `(x₁, x₂, v₁, v₂)`.
    pub fn full(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.dX_dx);
        m.fixed_view_mut::<2, 2>(0, 2).copy_from(&self.dX_dv);
        m.fixed_view_mut::<2, 2>(2, 0).copy_from(&self.dV_dx);
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(&self.dV_dv);
        m
    }

    pub fn determinant(&self) -> f64 {
        self.full().determinant()
    }

    /// Largest absolute entry over the four spatial/velocity blocks.
    pub fn max_abs(&self) -> f64 {
        self.full().amax()
    }
}

/// Analytic Jacobian of the backward flow from time `t` to time 0.
#[allow(non_snake_case)]
pub fn flow_jacobian(t: f64, x: Vec2, v: Vec2) -> Result<JacobianBundle> {
    let st = flow_map(t, x, v)?;
    flow_jacobian_of(t, x, v, &st)
}

/// `flow_jacobian` for an already computed flow state.
#[allow(non_snake_case)]
pub fn flow_jacobian_of(t: f64, x: Vec2, v: Vec2, st: &FlowState) -> Result<JacobianBundle> {
    if v == Vec2::zeros() {
        return Ok(JacobianBundle::free(t, v));
    }
    check_open_cell(t, st)?;
    if st.l == 0 {
        return Ok(JacobianBundle::free(t, v));
    }
    let g = exit_geometry(x, v)?;
    let (gx, gv) = theta_gradients(&g, v);
    let n = g.n;
    let l = st.l as f64;
    let th = st.theta;
    let sg = f64::from(st.sigma);
    let rot = |a: f64| rotation_matrix(sg * a);
    let speed = v.norm();
    let s = (0.5 * th).sin();
    let tl = st.t_l;
    let t_b = g.t_b;
    let p = Mat2::identity() - outer(v, n) / g.vn;
    let ql = rot(l * th);
    let ql1 = rot((l - 1.0) * th);
    let turn = rot(l * th - std::f64::consts::FRAC_PI_2);
    let back = rot((l - 0.5) * th - std::f64::consts::PI);
    let k = 0.5 * speed * (t - t_b - tl);
    let vn_outer = ql * outer(v, n) / (speed * s);

    let dX_dx = ql1 * p + tl * l * turn * outer(v, gx) - vn_outer - k * back * outer(n, gx);
    let dX_dv = -t_b * ql1 * p - tl * ql + tl * l * turn * outer(v, gv) + t_b * vn_outer
        - 2.0 * (l - 1.0) * s / speed.powi(3) * ql * outer(v, v)
        - k * back * outer(n, gv);
    let dV_dx = -l * turn * outer(v, gx);
    let dV_dv = ql - l * turn * outer(v, gv);
    Ok(JacobianBundle {
        dX_dx,
        dX_dv,
        dV_dx,
        dV_dv,
        dX_dt: -st.v0,
        dV_dt: Vec2::zeros(),
    })
}

/// One-sided Jacobians at a state whose first backward bounce lands exactly
/// at time 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSidedLimits {
    /// Limit from times just below `t_b` (no bounce yet).
    pub before: JacobianBundle,
    /// Limit from times just above `t_b` (one bounce).
    pub after: JacobianBundle,
}

/// Requires `t = t_b(x, v)` up to `1e-9 (1 + t)`.
pub fn one_sided_limit_jacobians(x: Vec2, v: Vec2, t: f64) -> Result<OneSidedLimits> {
    let t_b = exit_time(x, v)?;
    if (t - t_b).abs() > 1e-9 * (1.0 + t) {
        return Err(Error::InvalidInput(format!(
            "one-sided limits need t = t_b = {t_b}, got {t}"
        )));
    }
    let n = unit_normal(BoundaryPoint::project(x - t_b * v)?);
    let r = reflect_along(n);
    let a = a_matrix_normal(v, n)?;
    let before = JacobianBundle::free(t, v);
    let after = JacobianBundle {
        dX_dx: r,
        dX_dv: -t * r,
        dV_dx: -2.0 * a,
        dV_dv: r + 2.0 * t * a,
        dX_dt: -(r * v),
        dV_dt: Vec2::zeros(),
    };
    Ok(OneSidedLimits { before, after })
}

/// Second derivatives of `X₁, X₂, V₁, V₂` at time 0 in `(x₁, x₂, v₁, v₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianBundle {
    /// Symmetrized Hessians, indexed `X₁, X₂, V₁, V₂`.
    pub h: [Matrix4<f64>; 4],
    /// `max |H − Hᵀ|` before symmetrization; a truncation-error estimate.
    pub symmetry_defect: f64,
    /// Relative step used.
    pub step: f64,
}

impl HessianBundle {
    pub fn max_abs(&self) -> f64 {
        self.h.iter().fold(0.0, |a, m| a.max(m.amax()))
    }
}

/// Central differences of `flow_jacobian` with relative step `h`
/// (default `ε^{1/3}`). Every perturbed point must stay in the same open
/// cell with an extra margin of `2h`.
pub fn flow_hessian_fd(t: f64, x: Vec2, v: Vec2, h: Option<f64>) -> Result<HessianBundle> {
    let rel = h.unwrap_or(f64::EPSILON.cbrt());
    let st = flow_map(t, x, v)?;
    check_open_cell(t, &st)?;
    let z = pack(x, v);
    let steps: Vec<f64> = z.iter().map(|c| c.abs().max(1.0) * rel).collect();
    let hmax = steps.iter().cloned().fold(0.0, f64::max);
    let margin_gap = if st.l == 0 {
        st.t_b - t
    } else {
        st.t_l.min(st.chord_time() - st.t_l)
    };
    // crude bound on how far a perturbation of size 2h shifts the bounce clock
    let speed = v.norm().max(1e-300);
    if margin_gap <= 2.0 * hmax * (1.0 + 1.0 / speed) * (1.0 + t) {
        return Err(Error::NotInOpenCell { gap: margin_gap });
    }
    let mut d = [Matrix4::<f64>::zeros(); 4];
    for j in 0..4 {
        let (mut zp, mut zm) = (z, z);
        zp[j] += steps[j];
        zm[j] -= steps[j];
        let (xp, vp) = unpack(zp);
        let (xm, vm) = unpack(zm);
        let sp = flow_map(t, xp, vp)?;
        let sm = flow_map(t, xm, vm)?;
        if sp.l != st.l || sm.l != st.l {
            return Err(Error::NotInOpenCell { gap: margin_gap });
        }
        let jp = flow_jacobian_of(t, xp, vp, &sp)?.full();
        let jm = flow_jacobian_of(t, xm, vm, &sm)?.full();
        d[j] = (jp - jm) / (2.0 * steps[j]);
    }
    let mut out = [Matrix4::<f64>::zeros(); 4];
    let mut defect = 0.0_f64;
    for (c, hc) in out.iter_mut().enumerate() {
        for j in 0..4 {
            for k in 0..4 {
                hc[(j, k)] = d[j][(c, k)];
            }
        }
        defect = defect.max((*hc - hc.transpose()).amax());
        *hc = 0.5 * (*hc + hc.transpose());
    }
    Ok(HessianBundle { h: out, symmetry_defect: defect, step: rel })
}

/// Central-difference Jacobian of the flow map, for use as an oracle.
pub fn fd_flow_jacobian(t: f64, x: Vec2, v: Vec2) -> Result<Matrix4<f64>> {
    let f = |z: [f64; 4]| -> Result<[f64; 4]> {
        let (x, v) = unpack(z);
        let st = flow_map(t, x, v)?;
        Ok([st.x0.x, st.x0.y, st.v0.x, st.v0.y])
    };
    central_jacobian(f, pack(x, v))
}

/// Row `(X₁, X₂, V₁, V₂)` as a `Vector4`.
pub fn end_state(st: &FlowState) -> Vector4<f64> {
    Vector4::new(st.x0.x, st.x0.y, st.v0.x, st.v0.y)
}
