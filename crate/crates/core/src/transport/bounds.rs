//! Sampled derivative magnitudes of the mild solution against the
//! envelopes `|v|/|v·n(x_b)|² ⟨v⟩² (1+|v|t)` (first order) and its square
//! (second order), `⟨v⟩ = 1 + |v|`.

use super::{cell_gap, gradient, InitialData};
use crate::deriv::{fd_step, pack, unpack};
use crate::error::{Error, Result};
use crate::flow::{exit_point, flow_map, PhasePoint};
use crate::geom::{unit_normal, Vec2};
use nalgebra::Matrix4;
use serde::Serialize;

/// Envelope of order 1 or 2 at `(t, x, v)`.
pub fn envelope(order: u8, t: f64, x: Vec2, v: Vec2) -> Result<f64> {
    let s = v.norm();
    let vn = v.dot(&unit_normal(exit_point(x, v)?)).abs();
    let jv = 1.0 + s;
    let e1 = s / (vn * vn) * jv * jv * (1.0 + s * t);
    match order {
        1 => Ok(e1),
        2 => Ok(e1 * e1),
        o => Err(Error::InvalidInput(format!("order must be 1 or 2, got {o}"))),
    }
}

/// Magnitudes at one `(t, x, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSample {
    pub index: usize,
    pub t: f64,
    pub x: [f64; 2],
    pub v: [f64; 2],
    /// `|v·n(x_b)| / |v|`.
    pub normal_ratio: f64,
    /// Largest entry over all derivatives of the given order.
    pub measured: f64,
    /// Largest entry involving only `x` derivatives.
    pub spatial: f64,
    pub envelope: f64,
    pub ratio: f64,
}

/// Fitted constant at one time value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantAt {
    pub t: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub order: u8,
    pub evaluated: usize,
    /// Samples dropped for lying too close to a bounce instant.
    pub skipped: usize,
    pub fitted_constant: f64,
    /// Constants over even and odd sample indices.
    pub half_constants: [f64; 2],
    pub stable: bool,
    pub max_measured: f64,
    pub max_spatial_ratio: f64,
    pub min_envelope: f64,
    pub per_t: Vec<ConstantAt>,
    pub worst: Option<BoundSample>,
}

fn first_order(data: &dyn InitialData, t: f64, x: Vec2, v: Vec2) -> Result<(f64, f64)> {
    let g = gradient(data, t, x, v)?;
    let spatial = g.dx.amax();
    Ok((spatial.max(g.dv.amax()).max(g.dt.abs()), spatial))
}

/// Central differences of the chain-rule gradient in `(x, v)`.
fn second_order(data: &dyn InitialData, t: f64, x: Vec2, v: Vec2) -> Result<(f64, f64)> {
    let st = flow_map(t, x, v)?;
    let z = pack(x, v);
    let steps: Vec<f64> = z.iter().map(|c| fd_step(*c)).collect();
    let hmax = steps.iter().cloned().fold(0.0, f64::max);
    let gap = cell_gap(t, &st);
    if gap <= 2.0 * hmax * (1.0 + 1.0 / v.norm()) * (1.0 + t) {
        return Err(Error::NotInOpenCell { gap });
    }
    let mut h = Matrix4::<f64>::zeros();
    for j in 0..4 {
        let (mut zp, mut zm) = (z, z);
        zp[j] += steps[j];
        zm[j] -= steps[j];
        let (xp, vp) = unpack(zp);
        let (xm, vm) = unpack(zm);
        if flow_map(t, xp, vp)?.l != st.l || flow_map(t, xm, vm)?.l != st.l {
            return Err(Error::NotInOpenCell { gap });
        }
        let gp = gradient(data, t, xp, vp)?;
        let gm = gradient(data, t, xm, vm)?;
        let d = [gp.dx - gm.dx, gp.dv - gm.dv];
        for i in 0..4 {
            h[(i, j)] = d[i / 2][i % 2] / (2.0 * steps[j]);
        }
    }
    let spatial = h.fixed_view::<2, 2>(0, 0).amax();
    Ok((h.amax(), spatial))
}

/// One sample, or `None` when it sits too close to a bounce instant.
pub fn measure(data: &dyn InitialData, index: usize, p: &PhasePoint, t: f64, order: u8) -> Result<Option<BoundSample>> {
    let env = envelope(order, t, p.x, p.v)?;
    let got = match order {
        1 => first_order(data, t, p.x, p.v),
        _ => second_order(data, t, p.x, p.v),
    };
    let (measured, spatial) = match got {
        Ok(m) => m,
        Err(Error::NotInOpenCell { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let vn = p.v.dot(&unit_normal(exit_point(p.x, p.v)?)).abs();
    Ok(Some(BoundSample {
        index,
        t,
        x: [p.x.x, p.x.y],
        v: [p.v.x, p.v.y],
        normal_ratio: vn / p.v.norm(),
        measured,
        spatial,
        envelope: env,
        ratio: measured / env,
    }))
}

impl BoundReport {
    /// Aggregates per-sample results; `None` entries count as skipped.
    pub fn from_samples(order: u8, t_values: &[f64], samples: &[Option<BoundSample>]) -> Result<Self> {
        let kept: Vec<&BoundSample> = samples.iter().flatten().collect();
        for s in &kept {
            if !(s.envelope > 0.0 && s.envelope.is_finite() && s.ratio.is_finite()) {
                return Err(Error::Inconsistent(format!("non-finite bound ratio at sample {}", s.index)));
            }
        }
        let cmax = |it: &mut dyn Iterator<Item = &&BoundSample>| it.fold(0.0_f64, |a, s| a.max(s.ratio));
        let fitted = cmax(&mut kept.iter());
        let half_constants = [
            cmax(&mut kept.iter().filter(|s| s.index % 2 == 0)),
            cmax(&mut kept.iter().filter(|s| s.index % 2 == 1)),
        ];
        let (lo, hi) = (half_constants[0].min(half_constants[1]), half_constants[0].max(half_constants[1]));
        let stable = fitted.is_finite() && (hi == 0.0 || (lo > 0.0 && hi / lo <= 2.0));
        let worst = kept.iter().copied().max_by(|a, b| a.ratio.total_cmp(&b.ratio)).copied();
        let per_t = t_values
            .iter()
            .map(|&t| ConstantAt { t, constant: cmax(&mut kept.iter().filter(|s| s.t == t)) })
            .collect();
        Ok(Self {
            order,
            evaluated: kept.len(),
            skipped: samples.len() - kept.len(),
            fitted_constant: fitted,
            half_constants,
            stable,
            max_measured: kept.iter().fold(0.0, |a, s| a.max(s.measured)),
            max_spatial_ratio: kept.iter().fold(0.0, |a, s| a.max(s.spatial / s.envelope)),
            min_envelope: kept.iter().fold(f64::INFINITY, |a, s| a.min(s.envelope)),
            per_t,
            worst,
        })
    }
}

/// Serial campaign over `samples × t_values`; sample `i` at time `t_j` gets
/// index `i`.
pub fn bound_monitor(data: &dyn InitialData, samples: &[PhasePoint], t_values: &[f64], order: u8) -> Result<BoundReport> {
    if order != 1 && order != 2 {
        return Err(Error::InvalidInput(format!("order must be 1 or 2, got {order}")));
    }
    let mut out = Vec::with_capacity(samples.len() * t_values.len());
    for (i, p) in samples.iter().enumerate() {
        for &t in t_values {
            out.push(measure(data, i, p, t, order)?);
        }
    }
    BoundReport::from_samples(order, t_values, &out)
}
