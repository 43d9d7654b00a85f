//! Backward specular characteristics in the unit disk.
//!
//! All times run backward: a phase point `(x, v)` at time `t` is traced back
//! to time `0`, reflecting off the circle at the bounce times
//! `t¹ > t² > … > tˡ ≥ 0`.

use crate::error::{Error, Result};
use twofloat::TwoFloat;
use crate::geom::{
    check_nongrazing, rotation_matrix, unit_normal, BoundaryPoint, Vec2,
    EPS_BOUNDARY, EPS_GRAZE,
};

/// Default cap on the number of bounces followed by a single trace.
pub const DEFAULT_MAX_BOUNCES: usize = 1_000_000;
/// Number of bounce events kept in a `FlowState`.
pub const RECORDED_EVENTS: usize = 4096;

/// A position-velocity pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x: Vec2,
    pub v: Vec2,
}

impl PhasePoint {
    /// Validates `|x| <= 1` and rejects grazing boundary states.
    pub fn new(x: Vec2, v: Vec2) -> Result<Self> {
        check_position(x)?;
        if (x.norm() - 1.0).abs() <= EPS_BOUNDARY && v != Vec2::zeros() {
            check_nongrazing(v, x.normalize())?;
        }
        Ok(Self { x, v })
    }
}

/// One backward bounce: at time `t_k` the trajectory sits at `x_k` and
/// carries the reflected velocity `v_k = R_{x_k} v_{k-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BounceEvent {
    pub k: usize,
    pub t_k: f64,
    pub x_k: BoundaryPoint,
    pub v_k: Vec2,
}

/// Result of tracing a phase point back to time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub x0: Vec2,
    pub v0: Vec2,
    /// Number of bounces in `[0, t]`.
    pub l: usize,
    /// Central angle between consecutive bounce points; 0 when `v = 0`.
    pub theta: f64,
    /// Circulation sense of the backward trajectory: `x^{k+1} = Q_{σθ} x^k`.
    pub sigma: i8,
    /// Backward exit time; infinite when `v = 0`.
    pub t_b: f64,
    /// Time left after the last bounce (`t - t_b - (l-1)·chord`), or `t` when `l = 0`.
    pub t_l: f64,
    /// First bounce point, when `l >= 1`.
    pub x1: Option<BoundaryPoint>,
    pub events: Vec<BounceEvent>,
    pub events_truncated: bool,
}

impl FlowState {
    /// Chord traversal time `2 sin(θ/2) / |v|`.
    pub fn chord_time(&self) -> f64 {
        chord_time(self.theta, self.v0.norm())
    }
}

pub fn chord_time(theta: f64, speed: f64) -> f64 {
    2.0 * (0.5 * theta).sin() / speed
}

fn check_position(x: Vec2) -> Result<()> {
    let r = x.norm();
    if !r.is_finite() || r > 1.0 + EPS_BOUNDARY {
        return Err(Error::OutsideDomain { radius: r });
    }
    Ok(())
}

/// Backward exit time `t_b = sup{s >= 0 : x - s v ∈ Ω}`.
pub fn exit_time(x: Vec2, v: Vec2) -> Result<f64> {
    let vv = v.norm_squared();
    if vv == 0.0 {
        return Err(Error::ZeroVelocity);
    }
    check_position(x)?;
    let r2 = x.norm_squared();
    let xv = x.dot(&v);
    let disc = (xv * xv - vv * (r2 - 1.0)).max(0.0);
    let sd = disc.sqrt();
    // v·n(x_b) = -sd
    if sd <= EPS_GRAZE * vv.sqrt() {
        return Err(Error::Grazing { vn: -sd });
    }
    // pick the cancellation-free form of the positive root
    let tb = if xv >= 0.0 {
        (xv + sd) / vv
    } else {
        (1.0 - r2) / (sd - xv)
    };
    Ok(tb.max(0.0))
}

/// Backward exit point `x_b = x - t_b v`.
pub fn exit_point(x: Vec2, v: Vec2) -> Result<BoundaryPoint> {
    let tb = exit_time(x, v)?;
    BoundaryPoint::project(x - tb * v)
}

/// Bounce angle `θ ∈ (0, π]` with `sin(θ/2) = -n(x_b)·v/|v|`, and the
/// circulation sign `σ`, `+1` on the radial tie.
pub fn bounce_angle(x: Vec2, v: Vec2) -> Result<(f64, i8)> {
    let n = unit_normal(exit_point(x, v)?);
    Ok(angle_at(n, v))
}

/// Angle and orientation of the chord that starts at a boundary point with
/// normal `n` and incoming velocity `v` (`v·n < 0`).
pub(crate) fn angle_at(n: Vec2, v: Vec2) -> (f64, i8) {
    let normal = -n.dot(&v);
    let cross = v.x * n.y - v.y * n.x;
    let theta = 2.0 * normal.max(0.0).atan2(cross.abs());
    let sigma = if cross >= 0.0 { 1 } else { -1 };
    (theta, sigma)
}

/// Position and velocity carried in double-double precision between
/// bounces. In plain `f64` the incidence angle random-walks by a few ulps per
/// reflection, and the resulting phase error grows like `l^1.5`.
#[derive(Clone, Copy)]
struct Wide {
    x: [TwoFloat; 2],
    v: [TwoFloat; 2],
}

impl Wide {
    fn dot(a: [TwoFloat; 2], b: [TwoFloat; 2]) -> TwoFloat {
        a[0] * b[0] + a[1] * b[1]
    }

    /// `a / b` with one correction step; the crate's quotient alone is only
    /// accurate to about `f64` precision.
    fn div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
        let q = a / b;
        q + (a - q * b).hi() / b.hi()
    }

    fn unit(p: [TwoFloat; 2]) -> [TwoFloat; 2] {
        let r = Self::dot(p, p).sqrt();
        [Self::div(p[0], r), Self::div(p[1], r)]
    }

    fn lift(p: Vec2) -> [TwoFloat; 2] {
        [TwoFloat::from(p.x), TwoFloat::from(p.y)]
    }

    fn round(p: [TwoFloat; 2]) -> Vec2 {
        Vec2::new(p[0].hi(), p[1].hi())
    }

    /// Reflects `v` at the boundary point `x`, which must be normalized.
    fn reflect(x: [TwoFloat; 2], v: [TwoFloat; 2]) -> [TwoFloat; 2] {
        let d = Self::dot(v, x) * 2.0;
        [v[0] - d * x[0], v[1] - d * x[1]]
    }

    fn start(x: BoundaryPoint, v: Vec2) -> Self {
        let x = Self::unit(Self::lift(x.point()));
        Self { x, v: Self::reflect(x, Self::lift(v)) }
    }

    /// Backward chord time `2 (x·v) / |v|²` and the next bounce state.
    fn step(self) -> Result<(TwoFloat, Self)> {
        check_nongrazing(Self::round(self.v), Self::round(self.x))?;
        let c = Self::div(Self::dot(self.x, self.v) * 2.0, Self::dot(self.v, self.v));
        let x = Self::unit([self.x[0] - c * self.v[0], self.x[1] - c * self.v[1]]);
        Ok((c, Self { x, v: Self::reflect(x, self.v) }))
    }
}

struct Trace {
    l: usize,
    events: Vec<BounceEvent>,
    truncated: bool,
    v_last: Vec2,
}

fn trace(t: f64, x: Vec2, v: Vec2, max_bounces: usize, keep: usize) -> Result<Trace> {
    let idle = Trace { l: 0, events: Vec::new(), truncated: false, v_last: v };
    if v == Vec2::zeros() {
        return Ok(idle);
    }
    let tb = exit_time(x, v)?;
    if t - tb < 0.0 {
        return Ok(idle);
    }
    let mut tk = TwoFloat::from(t) - tb;
    let mut w = Wide::start(BoundaryPoint::project(x - tb * v)?, v);
    let mut out = Trace { l: 1, events: Vec::new(), truncated: false, v_last: Wide::round(w.v) };
    let record = |out: &mut Trace, tk: TwoFloat, w: Wide| -> Result<()> {
        out.v_last = Wide::round(w.v);
        if out.events.len() < keep {
            let x_k = BoundaryPoint::project(Wide::round(w.x))?;
            out.events.push(BounceEvent { k: out.l, t_k: tk.hi(), x_k, v_k: out.v_last });
        } else {
            out.truncated = true;
        }
        Ok(())
    };
    record(&mut out, tk, w)?;
    loop {
        let (c, next_w) = w.step()?;
        let next = tk - c;
        if next.hi() < 0.0 {
            break;
        }
        if out.l >= max_bounces {
            return Err(Error::BounceCapExceeded { cap: max_bounces, partial: out.events });
        }
        tk = next;
        w = next_w;
        out.l += 1;
        record(&mut out, tk, w)?;
    }
    Ok(out)
}

/// Backward bounce events with `t_k >= 0`, in order of decreasing time.
pub fn bounce_sequence(t: f64, x: Vec2, v: Vec2, max_bounces: usize) -> Result<Vec<BounceEvent>> {
    check_time(t)?;
    Ok(trace(t, x, v, max_bounces, usize::MAX)?.events)
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput(format!("time must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

/// Traces `(x, v)` from time `t` back to time 0 with the default bounce cap.
pub fn flow_map(t: f64, x: Vec2, v: Vec2) -> Result<FlowState> {
    flow_map_capped(t, x, v, DEFAULT_MAX_BOUNCES)
}

/// `flow_map` with an explicit bounce cap.
///
/// The end state uses the rotation form `xˡ = Q_{σθ}^{l-1} x¹`,
/// `V(0) = Q_{σθ}^l v`; the reflection product `R_l⋯R_1 v` from the bounce
/// iteration must agree with it.
pub fn flow_map_capped(t: f64, x: Vec2, v: Vec2, max_bounces: usize) -> Result<FlowState> {
    check_time(t)?;
    check_position(x)?;
    if v == Vec2::zeros() {
        return Ok(FlowState {
            x0: x,
            v0: v,
            l: 0,
            theta: 0.0,
            sigma: 1,
            t_b: f64::INFINITY,
            t_l: t,
            x1: None,
            events: Vec::new(),
            events_truncated: false,
        });
    }
    let t_b = exit_time(x, v)?;
    let x1 = BoundaryPoint::project(x - t_b * v)?;
    let (theta, sigma) = angle_at(unit_normal(x1), v);
    let tr = trace(t, x, v, max_bounces, RECORDED_EVENTS)?;
    if tr.l == 0 {
        return Ok(FlowState {
            x0: x - t * v,
            v0: v,
            l: 0,
            theta,
            sigma,
            t_b,
            t_l: t,
            x1: None,
            events: Vec::new(),
            events_truncated: false,
        });
    }
    let l = tr.l;
    let speed = v.norm();
    let s = f64::from(sigma) * theta;
    let t_l = (t - t_b - (l - 1) as f64 * chord_time(theta, speed)).max(0.0);
    let xl = rotation_matrix((l - 1) as f64 * s) * x1.point();
    let vl = rotation_matrix(l as f64 * s) * v;
    let tol = 1e-10 * speed * (l as f64 * 1e-3).max(1.0);
    let gap = (vl - tr.v_last).norm();
    if gap > tol {
        return Err(Error::Inconsistent(format!(
            "rotation form and reflection product differ by {gap:.3e} after {l} bounces"
        )));
    }
    Ok(FlowState {
        x0: xl - t_l * vl,
        v0: vl,
        l,
        theta,
        sigma,
        t_b,
        t_l,
        x1: Some(x1),
        events: tr.events,
        events_truncated: tr.truncated,
    })
}

/// Position and velocity at an intermediate time `s ∈ [0, t]`.
///
/// Bounce instants belong to the earlier (post-bounce) segment, so at
/// `s = tᵏ` the reflected velocity `vᵏ` is reported.
pub fn flow_at(s: f64, t: f64, x: Vec2, v: Vec2) -> Result<(Vec2, Vec2)> {
    check_time(t)?;
    if !(s.is_finite() && (0.0..=t).contains(&s)) {
        return Err(Error::InvalidInput(format!("intermediate time {s} outside [0, {t}]")));
    }
    let st = flow_map(t - s, x, v)?;
    Ok((st.x0, st.v0))
}
