//! Mild solution `f(t, x, v) = f₀(X(0), V(0))` of the free transport
//! equation with specular reflection, and checks on it.

pub mod bounds;
pub mod data;

pub use bounds::{bound_monitor, envelope, measure, BoundReport, BoundSample};
pub use data::{builtin, HessBlocks, InitialData, Polynomial, Provenance, Term, ValueOnly, BUILTIN_NAMES};

use crate::compat::{c1_column_defect, GammaMinusPoint};
use crate::deriv::{check_open_cell, flow_jacobian_of};
use crate::error::{Error, Result};
use crate::flow::{chord_time, flow_map, flow_map_capped, DEFAULT_MAX_BOUNCES};
use crate::geom::{check_nongrazing, q, reflect_along, unit_normal, BoundaryPoint, Vec2};
use serde::Serialize;

/// `f₀(X(0), V(0))`. At `t = 0` this is `f₀(x, v)` with no reflection,
/// also at incoming boundary states.
pub fn evaluate(data: &dyn InitialData, t: f64, x: Vec2, v: Vec2) -> Result<f64> {
    evaluate_capped(data, t, x, v, DEFAULT_MAX_BOUNCES)
}

pub fn evaluate_capped(data: &dyn InitialData, t: f64, x: Vec2, v: Vec2, max_bounces: usize) -> Result<f64> {
    if t == 0.0 {
        crate::flow::PhasePoint::new(x, v)?;
        return Ok(data.value(x, v));
    }
    let st = flow_map_capped(t, x, v, max_bounces)?;
    Ok(data.value(st.x0, st.v0))
}

/// `(∂ₜf, ∇ₓf, ∇ᵥf)` with gradients stored as `Vec2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gradient {
    pub dt: f64,
    pub dx: Vec2,
    pub dv: Vec2,
}

/// Chain rule through the analytic flow Jacobian; `∂ₜf = −∇ₓf₀·V(0)`.
pub fn gradient(data: &dyn InitialData, t: f64, x: Vec2, v: Vec2) -> Result<Gradient> {
    let st = flow_map(t, x, v)?;
    let jac = flow_jacobian_of(t, x, v, &st)?;
    let (gx, gv) = data.grad(st.x0, st.v0)?;
    Ok(Gradient {
        dt: -gx.dot(&st.v0),
        dx: jac.dX_dx.transpose() * gx + jac.dV_dx.transpose() * gv,
        dv: jac.dX_dv.transpose() * gx + jac.dV_dv.transpose() * gv,
    })
}

/// Spatial and temporal clearance from bounce loci required by
/// `pde_residual`, in units of the step.
pub const PDE_CLEARANCE: f64 = 8.0;

/// `|D_t f + v·D_x f|` with fourth-order central differences of step `h`
/// in `t` and `x` (points at `±h`, `±2h`).
///
/// Requires `|x| < 1 − 2h|v|`, `t > 2h`, a gap of at least `4h(1 + |v|)` to
/// the nearest bounce instant, and the same number of bounces as `(t, x, v)`
/// at the offsets `±h, ±2h, ±4h, ±8h` along each stencil axis. The last
/// condition keeps bounce loci `PDE_CLEARANCE · h` away in space as well as
/// in time; with many bounces the loci move quickly with `x`, and the time
/// gap alone does not bound the spatial distance.
pub fn pde_residual(data: &dyn InitialData, t: f64, x: Vec2, v: Vec2, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("step h = {h} must be positive")));
    }
    if x.norm() >= 1.0 - 2.0 * h * v.norm() || x.norm() + 2.0 * h >= 1.0 {
        return Err(Error::InvalidInput(format!("|x| = {} too close to the boundary for h = {h}", x.norm())));
    }
    if t <= PDE_CLEARANCE * h {
        return Err(Error::InvalidInput(format!("t = {t} must exceed {}h", PDE_CLEARANCE)));
    }
    let st = flow_map(t, x, v)?;
    check_open_cell(t, &st)?;
    let gap = cell_gap(t, &st);
    if gap <= 4.0 * h * (1.0 + v.norm()) {
        return Err(Error::NotInOpenCell { gap });
    }
    for k in [1.0, 2.0, 4.0, PDE_CLEARANCE] {
        for e in [k * h, -k * h] {
            for (s, y) in [(t + e, x), (t, x + e * Vec2::x()), (t, x + e * Vec2::y())] {
                if y.norm() >= 1.0 || flow_map(s, y, v)?.l != st.l {
                    return Err(Error::NotInOpenCell { gap });
                }
            }
        }
    }
    pde_residual_unguarded(data, t, x, v, h)
}

/// `pde_residual` without the open-cell guard, for stencils that straddle
/// a bounce instant.
pub fn pde_residual_unguarded(data: &dyn InitialData, t: f64, x: Vec2, v: Vec2, h: f64) -> Result<f64> {
    let d = |f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        Ok((8.0 * (f(h)? - f(-h)?) - (f(2.0 * h)? - f(-2.0 * h)?)) / (12.0 * h))
    };
    let dt = d(&|e| evaluate(data, t + e, x, v))?;
    let d1 = d(&|e| evaluate(data, t, x + e * Vec2::x(), v))?;
    let d2 = d(&|e| evaluate(data, t, x + e * Vec2::y(), v))?;
    Ok((dt + v.x * d1 + v.y * d2).abs())
}

pub(crate) fn cell_gap(t: f64, st: &crate::flow::FlowState) -> f64 {
    if st.l == 0 {
        st.t_b - t
    } else {
        st.t_l.min(st.chord_time() - st.t_l)
    }
}

/// `|f(t, p, v) − f(t, p, R_p v)|`.
pub fn bc_residual(data: &dyn InitialData, t: f64, p: BoundaryPoint, v: Vec2) -> Result<f64> {
    let n = unit_normal(p);
    check_nongrazing(v, n)?;
    let x = p.point();
    let a = evaluate(data, t, x, v)?;
    let b = evaluate(data, t, x, reflect_along(n) * v)?;
    Ok((a - b).abs())
}

/// One probing direction of `jump_demo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpDirection {
    pub direction: [f64; 2],
    /// One-sided derivative from `s > 0` along the direction.
    pub d_plus: f64,
    /// One-sided derivative from `s < 0`.
    pub d_minus: f64,
    pub gap: f64,
    /// `−sign(r·n)·D r` with `D` the first-order column defect.
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpReport {
    pub t: f64,
    pub x: [f64; 2],
    pub v: [f64; 2],
    pub boundary_point: [f64; 2],
    pub step: f64,
    pub directions: Vec<JumpDirection>,
    /// Column defect rebuilt from the gaps of the two default directions.
    pub reconstructed_defect: Option<[f64; 2]>,
    pub defect: [f64; 2],
    pub max_gap: f64,
}

/// Default step of the one-sided differences.
pub const JUMP_STEP: f64 = 1e-5;

/// `(n + τ)/√2` and `(n − τ)/√2` at a boundary state, `τ = Q n`.
pub fn default_directions(p: &GammaMinusPoint) -> [Vec2; 2] {
    let n = p.normal();
    let tau = q() * n;
    [(n + tau) / 2f64.sqrt(), (n - tau) / 2f64.sqrt()]
}

/// Probes the derivative jump of `f` across the bounce locus.
///
/// The configuration is `x = p + τ v`, `t = τ`, with `τ` half the chord
/// time from `p`, so the backward characteristic reaches `p` exactly at
/// time 0. One-sided derivatives along each spatial direction `r` use the
/// second-order stencil `(−5f(ε) + 8f(2ε) − 3f(3ε)) / 2ε`, which needs no
/// value on the locus itself. With `directions = None` the two directions
/// of `default_directions` are used and the defect row is rebuilt from them.
pub fn jump_demo(
    data: &dyn InitialData,
    p: &GammaMinusPoint,
    directions: Option<&[Vec2]>,
    step: Option<f64>,
) -> Result<JumpReport> {
    let n = p.normal();
    let v = p.v;
    let vn = check_nongrazing(v, n)?;
    let theta = 2.0 * (-vn / v.norm()).clamp(-1.0, 1.0).asin();
    let tau = 0.5 * chord_time(theta, v.norm());
    let x = p.x.point() + tau * v;
    let t = tau;
    let eps = step.unwrap_or(JUMP_STEP);
    let defect = c1_column_defect(data, p)?;
    let defaults = default_directions(p);
    let dirs: Vec<Vec2> = match directions {
        Some(d) => d.to_vec(),
        None => defaults.to_vec(),
    };
    let one_sided = |r: Vec2| -> Result<f64> {
        let f = |s: f64| evaluate(data, t, x + s * r, v);
        Ok((-5.0 * f(eps)? + 8.0 * f(2.0 * eps)? - 3.0 * f(3.0 * eps)?) / (2.0 * eps))
    };
    let mut out = Vec::with_capacity(dirs.len());
    for r in &dirs {
        let r = *r;
        if !(r.norm() > 0.0) {
            return Err(Error::InvalidInput("zero probing direction".into()));
        }
        let d_plus = one_sided(r)?;
        let d_minus = -one_sided(-r)?;
        let side = if r.dot(&n) >= 0.0 { 1.0 } else { -1.0 };
        out.push(JumpDirection {
            direction: [r.x, r.y],
            d_plus,
            d_minus,
            gap: d_plus - d_minus,
            predicted: -side * defect.dot(&r),
        });
    }
    let reconstructed = directions.is_none().then(|| {
        // both default directions point outward, gapᵢ = −D rᵢ
        let rec = -(out[0].gap * defaults[0] + out[1].gap * defaults[1]);
        [rec.x, rec.y]
    });
    let max_gap = out.iter().fold(0.0_f64, |a, d| a.max(d.gap.abs()));
    Ok(JumpReport {
        t,
        x: [x.x, x.y],
        v: [v.x, v.y],
        boundary_point: [p.x.point().x, p.x.point().y],
        step: eps,
        directions: out,
        reconstructed_defect: reconstructed,
        defect: [defect.x, defect.y],
        max_gap,
    })
}
