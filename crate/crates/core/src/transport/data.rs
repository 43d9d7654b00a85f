//! Initial data `f₀(x, v)` with first and second derivatives.
//!
//! Hessians are 4×4 in `(x₁, x₂, v₁, v₂)`. The block accessors follow the
//! row convention used throughout: `xv[(i, j)] = ∂²f/∂vᵢ∂xⱼ`, so row `i` of
//! `∇ₓᵥf` is `∇ₓ` of the `i`-th component of `∇ᵥf`.

use crate::error::{Error, Result};
use crate::geom::{Mat2, Vec2};
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

/// Whether a derivative came from a closed form or from finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    FiniteDifference,
}

/// The four 2×2 blocks of a phase-space Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessBlocks {
    pub xx: Mat2,
    pub xv: Mat2,
    pub vx: Mat2,
    pub vv: Mat2,
}

impl HessBlocks {
    pub fn from_full(h: &Matrix4<f64>) -> Self {
        Self {
            xx: h.fixed_view::<2, 2>(0, 0).into_owned(),
            xv: h.fixed_view::<2, 2>(2, 0).into_owned(),
            vx: h.fixed_view::<2, 2>(0, 2).into_owned(),
            vv: h.fixed_view::<2, 2>(2, 2).into_owned(),
        }
    }
}

pub trait InitialData: Send + Sync {
    fn name(&self) -> String;

    fn value(&self, x: Vec2, v: Vec2) -> f64;

    /// Highest derivative order available in closed form.
    fn analytic_order(&self) -> u8 {
        0
    }

    /// `(∇ₓf₀, ∇ᵥf₀)` in closed form, if available.
    fn analytic_grad(&self, _x: Vec2, _v: Vec2) -> Option<(Vec2, Vec2)> {
        None
    }

    fn analytic_hess(&self, _x: Vec2, _v: Vec2) -> Option<Matrix4<f64>> {
        None
    }

    /// Whether missing derivatives may be served by finite differences.
    fn allows_fd(&self) -> bool {
        true
    }

    fn provenance(&self, order: u8) -> Provenance {
        if self.analytic_order() >= order {
            Provenance::Analytic
        } else {
            Provenance::FiniteDifference
        }
    }

    fn grad(&self, x: Vec2, v: Vec2) -> Result<(Vec2, Vec2)> {
        if let Some(g) = self.analytic_grad(x, v) {
            return Ok(g);
        }
        if !self.allows_fd() {
            return Err(Error::MissingDerivative { order: 1 });
        }
        Ok(fd_grad(self, x, v))
    }

    fn hess(&self, x: Vec2, v: Vec2) -> Result<Matrix4<f64>> {
        if let Some(h) = self.analytic_hess(x, v) {
            return Ok(h);
        }
        if !self.allows_fd() {
            return Err(Error::MissingDerivative { order: 2 });
        }
        Ok(fd_hess(self, x, v))
    }

    fn hess_blocks(&self, x: Vec2, v: Vec2) -> Result<HessBlocks> {
        Ok(HessBlocks::from_full(&self.hess(x, v)?))
    }
}

fn zvec(x: Vec2, v: Vec2) -> [f64; 4] {
    [x.x, x.y, v.x, v.y]
}

fn split(z: [f64; 4]) -> (Vec2, Vec2) {
    (Vec2::new(z[0], z[1]), Vec2::new(z[2], z[3]))
}

fn fd_grad<D: InitialData + ?Sized>(d: &D, x: Vec2, v: Vec2) -> (Vec2, Vec2) {
    let z = zvec(x, v);
    let mut g = [0.0; 4];
    for j in 0..4 {
        let h = crate::deriv::fd_step(z[j]);
        let (mut zp, mut zm) = (z, z);
        zp[j] += h;
        zm[j] -= h;
        let (xp, vp) = split(zp);
        let (xm, vm) = split(zm);
        g[j] = (d.value(xp, vp) - d.value(xm, vm)) / (2.0 * h);
    }
    (Vec2::new(g[0], g[1]), Vec2::new(g[2], g[3]))
}

fn fd_hess<D: InitialData + ?Sized>(d: &D, x: Vec2, v: Vec2) -> Matrix4<f64> {
    let z = zvec(x, v);
    let mut h = Matrix4::zeros();
    if d.analytic_grad(x, v).is_some() {
        // difference the closed-form gradient
        for j in 0..4 {
            let s = crate::deriv::fd_step(z[j]);
            let (mut zp, mut zm) = (z, z);
            zp[j] += s;
            zm[j] -= s;
            let (xp, vp) = split(zp);
            let (xm, vm) = split(zm);
            let (gxp, gvp) = d.analytic_grad(xp, vp).unwrap_or_default();
            let (gxm, gvm) = d.analytic_grad(xm, vm).unwrap_or_default();
            let gp = [gxp.x, gxp.y, gvp.x, gvp.y];
            let gm = [gxm.x, gxm.y, gvm.x, gvm.y];
            for i in 0..4 {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * s);
            }
        }
    } else {
        let e = f64::EPSILON.powf(0.25);
        let f = |z: [f64; 4]| {
            let (x, v) = split(z);
            d.value(x, v)
        };
        for j in 0..4 {
            for k in 0..4 {
                let (sj, sk) = (z[j].abs().max(1.0) * e, z[k].abs().max(1.0) * e);
                let mut acc = 0.0;
                for (a, b, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    let mut q = z;
                    q[j] += a * sj;
                    q[k] += b * sk;
                    acc += w * f(q);
                }
                h[(j, k)] = acc / (4.0 * sj * sk);
            }
        }
    }
    0.5 * (h + h.transpose())
}

/// One monomial `coef · x₁^a x₂^b v₁^c v₂^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub powers: [u8; 4],
}

/// A polynomial in `(x, v)`, optionally multiplied by `exp(−|v|²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    #[serde(default)]
    pub name: Option<String>,
    pub gaussian: bool,
    pub terms: Vec<Term>,
}

/// Derivative `∂^d` of `z^p` in one variable.
fn dpow(z: f64, p: u8, d: u8) -> f64 {
    if d > p {
        return 0.0;
    }
    let mut c = 1.0;
    for k in 0..d {
        c *= f64::from(p - k);
    }
    c * z.powi(i32::from(p - d))
}

impl Polynomial {
    pub fn new(gaussian: bool, terms: Vec<Term>) -> Result<Self> {
        let p = Self { name: None, gaussian, terms };
        p.validate()?;
        Ok(p)
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            let [a, b, c, d] = t.powers;
            if a + b > 4 || c + d > 4 {
                return Err(Error::InvalidInput(format!(
                    "monomial powers {:?} exceed degree 4 in x or in v",
                    t.powers
                )));
            }
            if !t.coef.is_finite() {
                return Err(Error::InvalidInput("non-finite coefficient".into()));
            }
        }
        Ok(())
    }

    /// Parses `{"gaussian": bool, "terms": [{"coef": c, "powers": [a,b,c,d]}]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("polynomial spec: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    /// Mixed partial of the polynomial part, `d` = derivative orders.
    fn poly_partial(&self, z: [f64; 4], d: [u8; 4]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * (0..4).map(|i| dpow(z[i], t.powers[i], d[i])).product::<f64>())
            .sum()
    }

    fn poly_jet(&self, z: [f64; 4]) -> (f64, [f64; 4], Matrix4<f64>) {
        let p = self.poly_partial(z, [0; 4]);
        let mut g = [0.0; 4];
        let mut h = Matrix4::zeros();
        for i in 0..4 {
            let mut d = [0u8; 4];
            d[i] = 1;
            g[i] = self.poly_partial(z, d);
            for j in i..4 {
                let mut d = [0u8; 4];
                d[i] += 1;
                d[j] += 1;
                let val = self.poly_partial(z, d);
                h[(i, j)] = val;
                h[(j, i)] = val;
            }
        }
        (p, g, h)
    }

    /// Value, gradient and Hessian of the weight `exp(−|v|²)` (or 1).
    fn weight_jet(&self, v: Vec2) -> (f64, [f64; 4], Matrix4<f64>) {
        if !self.gaussian {
            return (1.0, [0.0; 4], Matrix4::zeros());
        }
        let e = (-v.norm_squared()).exp();
        let g = [0.0, 0.0, -2.0 * v.x * e, -2.0 * v.y * e];
        let mut h = Matrix4::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let delta = if i == j { 1.0 } else { 0.0 };
                h[(i + 2, j + 2)] = (4.0 * v[i] * v[j] - 2.0 * delta) * e;
            }
        }
        (e, g, h)
    }

    fn jet(&self, x: Vec2, v: Vec2) -> (f64, [f64; 4], Matrix4<f64>) {
        let z = zvec(x, v);
        let (p, gp, hp) = self.poly_jet(z);
        let (w, gw, hw) = self.weight_jet(v);
        let mut g = [0.0; 4];
        for i in 0..4 {
            g[i] = gp[i] * w + p * gw[i];
        }
        let mut h = hp * w + hw * p;
        for i in 0..4 {
            for j in 0..4 {
                h[(i, j)] += gp[i] * gw[j] + gw[i] * gp[j];
            }
        }
        (p * w, g, h)
    }
}

impl InitialData for Polynomial {
    fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "custom_polynomial".into())
    }

    fn value(&self, x: Vec2, v: Vec2) -> f64 {
        self.jet(x, v).0
    }

    fn analytic_order(&self) -> u8 {
        2
    }

    fn analytic_grad(&self, x: Vec2, v: Vec2) -> Option<(Vec2, Vec2)> {
        let g = self.jet(x, v).1;
        Some((Vec2::new(g[0], g[1]), Vec2::new(g[2], g[3])))
    }

    fn analytic_hess(&self, x: Vec2, v: Vec2) -> Option<Matrix4<f64>> {
        Some(self.jet(x, v).2)
    }
}

/// Data known only through point values; derivatives by finite differences.
pub struct ValueOnly<F> {
    pub label: String,
    pub f: F,
    pub fd: bool,
}

impl<F: Fn(Vec2, Vec2) -> f64 + Send + Sync> InitialData for ValueOnly<F> {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn value(&self, x: Vec2, v: Vec2) -> f64 {
        (self.f)(x, v)
    }

    fn allows_fd(&self) -> bool {
        self.fd
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["radial_gauss", "bump_radial_gauss", "linear_v", "linear_x"];

fn term(coef: f64, powers: [u8; 4]) -> Term {
    Term { coef, powers }
}

/// Built-in families by name.
pub fn builtin(name: &str) -> Result<Polynomial> {
    let p = match name {
        "radial_gauss" => Polynomial::new(true, vec![term(1.0, [0; 4])])?,
        // (1 − |x|²)² = 1 − 2x₁² − 2x₂² + x₁⁴ + 2x₁²x₂² + x₂⁴
        "bump_radial_gauss" => Polynomial::new(
            true,
            vec![
                term(1.0, [0, 0, 0, 0]),
                term(-2.0, [2, 0, 0, 0]),
                term(-2.0, [0, 2, 0, 0]),
                term(1.0, [4, 0, 0, 0]),
                term(2.0, [2, 2, 0, 0]),
                term(1.0, [0, 4, 0, 0]),
            ],
        )?,
        "linear_v" => Polynomial::new(false, vec![term(1.0, [0, 0, 1, 0])])?,
        "linear_x" => Polynomial::new(false, vec![term(1.0, [1, 0, 0, 0])])?,
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    Ok(p.named(name))
}
