//! Seeded sampling of phase points.
//!
//! Every campaign draws from a `ChaCha8Rng` so a seed fixes the output on
//! every platform.

use crate::compat::GammaMinusPoint;
use crate::flow::{exit_point, PhasePoint};
use crate::geom::{unit_normal, BoundaryPoint, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

/// Default lower bound on `|v·n| / |v|` for sampled states.
pub const DEFAULT_MARGIN: f64 = 0.05;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn direction<R: Rng>(r: &mut R) -> Vec2 {
    let a = r.random_range(0.0..TAU);
    Vec2::new(a.cos(), a.sin())
}

fn speed<R: Rng>(r: &mut R, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        r.random_range(range.0..range.1)
    }
}

/// Incoming boundary states: uniform boundary angle, uniform direction
/// subject to `v·n < −margin |v|`, uniform speed in `speed_range`.
pub fn sample_gamma_minus_with(
    rng: &mut ChaCha8Rng,
    count: usize,
    speed_range: (f64, f64),
    margin: f64,
) -> Vec<GammaMinusPoint> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = BoundaryPoint::from_angle(rng.random_range(0.0..TAU));
        let d = direction(rng);
        let s = speed(rng, speed_range);
        if d.dot(&unit_normal(p)) < -margin {
            if let Ok(g) = GammaMinusPoint::new(p, s * d) {
                out.push(g);
            }
        }
    }
    out
}

pub fn sample_gamma_minus(count: usize, speed_range: (f64, f64), seed: u64) -> Vec<GammaMinusPoint> {
    sample_gamma_minus_with(&mut rng(seed), count, speed_range, DEFAULT_MARGIN)
}

/// Interior states, `x` uniform in the disk of radius `0.999`, with
/// `|v·n(x_b)| ≥ margin |v|`.
pub fn sample_interior_with(
    rng: &mut ChaCha8Rng,
    count: usize,
    speed_range: (f64, f64),
    margin: f64,
) -> Vec<PhasePoint> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = 0.999 * rng.random::<f64>().sqrt() * direction(rng);
        let d = direction(rng);
        let v = speed(rng, speed_range) * d;
        let Ok(xb) = exit_point(x, v) else { continue };
        if -d.dot(&unit_normal(xb)) >= margin {
            out.push(PhasePoint { x, v });
        }
    }
    out
}

pub fn sample_interior(count: usize, speed_range: (f64, f64), seed: u64, margin: f64) -> Vec<PhasePoint> {
    sample_interior_with(&mut rng(seed), count, speed_range, margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_request() {
        assert!(sample_gamma_minus(0, (0.5, 2.0), 1).is_empty());
    }

    #[test]
    fn deterministic() {
        assert_eq!(sample_gamma_minus(50, (0.5, 2.0), 9), sample_gamma_minus(50, (0.5, 2.0), 9));
        assert_ne!(sample_gamma_minus(5, (0.5, 2.0), 9), sample_gamma_minus(5, (0.5, 2.0), 10));
        assert_eq!(sample_interior(20, (0.5, 2.0), 3, 0.05), sample_interior(20, (0.5, 2.0), 3, 0.05));
    }

    #[test]
    fn margins_hold() {
        for g in sample_gamma_minus(500, (0.5, 2.0), 4) {
            let s = g.v.norm();
            assert!(g.v.dot(&g.normal()) < -0.05 * s);
            assert!((0.5..2.0).contains(&s));
        }
        for p in sample_interior(500, (0.2, 3.0), 5, 0.1) {
            let n = unit_normal(exit_point(p.x, p.v).unwrap());
            assert!(-p.v.dot(&n) >= 0.1 * p.v.norm());
            assert!(p.x.norm() < 1.0);
        }
    }
}
