//! Radial second-order kernels `K(t) = Φ(‖t‖²)`, the one-dimensional
//! fourth-order kernel `G` used for derivative estimation, and kernel moments.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::quadrature::{integrate, QuadOptions};

/// Highest moment order tabulated by [`RadialKernelSpec::moments`].
pub const MAX_MOMENT_ORDER: usize = 6;

/// Radial profile `Φ` on `[0, T]`.
#[derive(Clone)]
pub enum Profile {
    /// Polynomial in `u = ‖t‖²`, coefficients in ascending powers.
    Polynomial(Polynomial),
    /// Arbitrary callable; accepted by the library but not serializable.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Polynomial(p) => f.debug_tuple("Polynomial").field(&p.coeffs()).finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Profile {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::Polynomial(p) => p.eval(u),
            Self::Custom(f) => f(u),
        }
    }

    fn derivative(&self, u: f64, order: usize) -> f64 {
        match self {
            Self::Polynomial(p) => {
                let mut q = p.clone();
                for _ in 0..order {
                    q = q.derivative();
                }
                q.eval(u)
            }
            Self::Custom(f) => {
                let h = 1e-4;
                match order {
                    0 => f(u),
                    1 => (f(u + h) - f(u - h)) / (2.0 * h),
                    _ => (f(u + h) - 2.0 * f(u) + f(u - h)) / (h * h),
                }
            }
        }
    }
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(dim: usize) -> f64 {
    2.0 * PI.powf(dim as f64 / 2.0) / half_gamma(dim)
}

/// `Γ(m / 2)` for a positive integer `m`.
pub(crate) fn half_gamma(m: usize) -> f64 {
    assert!(m > 0, "Γ(0) is undefined");
    if m % 2 == 0 {
        (1..m / 2).map(|k| k as f64).product()
    } else {
        // Γ(k + 1/2) = (2k - 1)!! / 2^k · √π
        let k = (m - 1) / 2;
        (0..k).map(|j| (j as f64) + 0.5).product::<f64>() * PI.sqrt()
    }
}

/// Same operation order as `Polynomial::eval`, unrolled for `N` terms.
#[inline(always)]
fn horner<const N: usize>(c: &[f64; 8], x: f64) -> f64 {
    c[..N].iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Compactly supported radial kernel on `R^d`.
#[derive(Debug, Clone)]
pub struct RadialKernelSpec {
    profile: Profile,
    support: f64,
    dim: usize,
    normalization: f64,
    /// `∫_0^{√T} ρ^{k+d-1} Φ(ρ²) dρ` for `k = 0..=6`, before normalization.
    radial_moments: [f64; MAX_MOMENT_ORDER + 1],
    /// Ascending coefficients of a polynomial `Φ` of degree < 8 in a fixed
    /// array, for an unrolled Horner step in the hot loop.
    horner: Option<([f64; 8], usize)>,
}

impl RadialKernelSpec {
    /// Builds and normalizes a kernel from a profile supported on `[0, support]`.
    pub fn new(profile: Profile, support: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if !(support.is_finite() && support > 0.0) {
            return Err(Error::InvalidProfile(format!("support T = {support} must be positive")));
        }
        let scan = 2000;
        let mut peak = 0.0f64;
        for i in 0..=scan {
            let u = support * i as f64 / scan as f64;
            let v = profile.eval(u);
            if !v.is_finite() {
                return Err(Error::InvalidProfile(format!("Φ({u}) is not finite")));
            }
            if v < -1e-12 {
                return Err(Error::InvalidProfile(format!("Φ({u}) = {v} is negative")));
            }
            peak = peak.max(v);
        }
        if peak == 0.0 {
            return Err(Error::InvalidProfile("Φ vanishes identically".into()));
        }
        for order in 0..2 {
            let edge = profile.derivative(support, order);
            if edge.abs() > 1e-9 * peak.max(1.0) {
                return Err(Error::InvalidProfile(format!(
                    "derivative {order} of Φ at the support edge is {edge}, expected 0"
                )));
            }
        }
        let opts = QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-13,
            max_subdivisions: 4000,
        };
        let rho_max = support.sqrt();
        let mut radial_moments = [0.0; MAX_MOMENT_ORDER + 1];
        for (k, slot) in radial_moments.iter_mut().enumerate() {
            let power = (k + dim - 1) as i32;
            *slot = integrate(|r| r.powi(power) * profile.eval(r * r), 0.0, rho_max, opts)?.value;
        }
        let mass = sphere_area(dim) * radial_moments[0];
        let horner = match &profile {
            Profile::Polynomial(p) if p.coeffs().len() <= 8 => {
                let mut h = [0.0; 8];
                h[..p.coeffs().len()].copy_from_slice(p.coeffs());
                Some((h, p.coeffs().len()))
            }
            _ => None,
        };
        Ok(Self {
            horner,
            profile,
            support,
            dim,
            normalization: 1.0 / mass,
            radial_moments,
        })
    }

    /// Polynomial profile with coefficients in ascending powers of `u`.
    pub fn polynomial(coeffs: Vec<f64>, support: f64, dim: usize) -> Result<Self> {
        Self::new(Profile::Polynomial(Polynomial::new(coeffs)), support, dim)
    }

    /// `Φ(u) ∝ (1 - u)³` on `[0, 1]`; vanishes to second order at the edge.
    pub fn default_profile(dim: usize) -> Result<Self> {
        Self::polynomial(vec![1.0, -3.0, 3.0, -1.0], 1.0, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `T`, the support of `Φ`; `K(t) = 0` once `‖t‖² > T`.
    pub fn support(&self) -> f64 {
        self.support
    }

    /// `√T`, the radius of the support ball of `K`.
    pub fn support_radius(&self) -> f64 {
        self.support.sqrt()
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Polynomial coefficients when the profile is serializable.
    pub fn profile_coeffs(&self) -> Option<&[f64]> {
        match &self.profile {
            Profile::Polynomial(p) => Some(p.coeffs()),
            Profile::Custom(_) => None,
        }
    }

    /// Short identifier recorded in estimate metadata.
    pub fn id(&self) -> String {
        match self.profile_coeffs() {
            Some(c) => format!("poly{c:?};T={};d={}", self.support, self.dim),
            None => format!("custom;T={};d={}", self.support, self.dim),
        }
    }

    /// `K` as a function of the squared norm.
    #[inline]
    pub fn eval_sq(&self, norm_sq: f64) -> f64 {
        if norm_sq > self.support {
            return 0.0;
        }
        let phi = match &self.horner {
            Some((c, len)) => match len {
                1 => horner::<1>(c, norm_sq),
                2 => horner::<2>(c, norm_sq),
                3 => horner::<3>(c, norm_sq),
                4 => horner::<4>(c, norm_sq),
                5 => horner::<5>(c, norm_sq),
                6 => horner::<6>(c, norm_sq),
                7 => horner::<7>(c, norm_sq),
                _ => horner::<8>(c, norm_sq),
            },
            None => self.profile.eval(norm_sq),
        };
        // Φ ≥ 0 holds mathematically; clamp away rounding in the expanded form.
        (self.normalization * phi).max(0.0)
    }

    /// `K(t) = c·Φ(‖t‖²)`.
    pub fn eval(&self, t: &[f64]) -> f64 {
        self.eval_sq(t.iter().map(|x| x * x).sum())
    }

    /// Moment table with every `τ_v`, `|v| <= max_order`, and scalar `τ_r`
    /// for `r ∈ {0, 2, 4, 6}`.
    pub fn moments(&self, max_order: usize) -> Result<MomentTable> {
        if max_order > MAX_MOMENT_ORDER {
            return Err(Error::UnsupportedOrder(max_order));
        }
        let d = self.dim;
        let mut multi = BTreeMap::new();
        for total in 0..=max_order {
            let mut v = vec![0; d];
            let mut all = Vec::new();
            enumerate(&mut v, 0, total, &mut all);
            for v in all {
                let value = if v.iter().any(|k| k % 2 == 1) {
                    0.0
                } else {
                    self.normalization * sphere_monomial(&v) * self.radial_moments[total]
                };
                multi.insert(v, value);
            }
        }
        let scalar = (0..=MAX_MOMENT_ORDER)
            .step_by(2)
            .map(|r| {
                (
                    r,
                    self.normalization * sphere_area(d) * self.radial_moments[r],
                )
            })
            .collect();
        Ok(MomentTable {
            dim: d,
            max_order,
            scalar,
            multi,
        })
    }
}

fn enumerate(v: &mut Vec<usize>, axis: usize, remaining: usize, out: &mut Vec<Vec<usize>>) {
    if axis + 1 == v.len() {
        v[axis] = remaining;
        out.push(v.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        v[axis] = k;
        enumerate(v, axis + 1, remaining - k, out);
    }
    v[axis] = 0;
}

/// `∫_{S^{d-1}} θ^v dσ` for a multi-index with all components even.
fn sphere_monomial(v: &[usize]) -> f64 {
    let total: usize = v.iter().sum();
    let num: f64 = v.iter().map(|&k| half_gamma(k + 1)).product();
    2.0 * num / half_gamma(total + v.len())
}

/// Kernel moments `τ_v = ∫ u^v K(u) du` and `τ_r = ∫ |u|^r K(u) du`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentTable {
    pub dim: usize,
    pub max_order: usize,
    scalar: BTreeMap<usize, f64>,
    multi: BTreeMap<Vec<usize>, f64>,
}

impl MomentTable {
    /// Scalar moment `τ_r` for even `r <= 6`.
    pub fn tau(&self, r: usize) -> Option<f64> {
        self.scalar.get(&r).copied()
    }

    pub fn tau_v(&self, v: &[usize]) -> Option<f64> {
        self.multi.get(v).copied()
    }

    pub fn multi_indices(&self) -> impl Iterator<Item = (&Vec<usize>, &f64)> {
        self.multi.iter()
    }
}

/// One-dimensional fourth-order kernel `G(z) = (A + B z²)(1 - z²)⁴` on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct FourthOrderKernelSpec {
    a: f64,
    b: f64,
    g: Polynomial,
    g1: Polynomial,
    g2: Polynomial,
    fourth_moment: f64,
}

impl FourthOrderKernelSpec {
    /// Solves `A m0 + B m2 = 1`, `A m2 + B m4 = 0` with
    /// `m_k = ∫ z^k (1 - z²)⁴ dz` computed by adaptive quadrature.
    pub fn new() -> Result<Self> {
        let weight = Polynomial::new(vec![1.0, 0.0, -4.0, 0.0, 6.0, 0.0, -4.0, 0.0, 1.0]);
        let opts = QuadOptions::relative(1e-12);
        let m = |k: i32| -> Result<f64> {
            Ok(integrate(|z| z.powi(k) * weight.eval(z), -1.0, 1.0, opts)?.value)
        };
        let (m0, m2, m4) = (m(0)?, m(2)?, m(4)?);
        let det = m0 * m4 - m2 * m2;
        if det.abs() < 1e-14 * (m0 * m4).abs() {
            return Err(Error::SingularSystem);
        }
        let a = m4 / det;
        let b = -m2 / det;
        let g = Polynomial::new(vec![a, 0.0, b]).mul(&weight);
        let g1 = g.derivative();
        let g2 = g1.derivative();
        let fourth_moment = integrate(|z| z.powi(4) * g.eval(z), -1.0, 1.0, opts)?.value;
        Ok(Self {
            a,
            b,
            g,
            g1,
            g2,
            fourth_moment,
        })
    }

    pub fn coefficients(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// `T_G`; the default kernel lives on `[-1, 1]`.
    pub fn support(&self) -> f64 {
        1.0
    }

    /// `a = ∫ z⁴ G(z) dz`.
    pub fn fourth_moment(&self) -> f64 {
        self.fourth_moment
    }

    pub fn id(&self) -> &'static str {
        "fourth-order-default"
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        if z.abs() > 1.0 {
            0.0
        } else {
            self.g.eval(z)
        }
    }

    /// `G'(z)`.
    #[inline]
    pub fn d1(&self, z: f64) -> f64 {
        if z.abs() > 1.0 {
            0.0
        } else {
            self.g1.eval(z)
        }
    }

    /// `G''(z)`.
    #[inline]
    pub fn d2(&self, z: f64) -> f64 {
        if z.abs() > 1.0 {
            0.0
        } else {
            self.g2.eval(z)
        }
    }

    /// `∫ z^j G(z) dz` by quadrature.
    pub fn moment(&self, j: i32) -> Result<f64> {
        Ok(integrate(
            |z| z.powi(j) * self.g.eval(z),
            -1.0,
            1.0,
            QuadOptions::absolute(1e-12),
        )?
        .value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(matches!(
            RadialKernelSpec::default_profile(0),
            Err(Error::InvalidDimension(0))
        ));
    }

    #[test]
    fn default_profile_edge_values() {
        let k = RadialKernelSpec::default_profile(1).unwrap();
        let p = k.profile();
        assert_eq!(p.eval(1.0), 0.0);
        assert_eq!(p.derivative(1.0, 1), 0.0);
        assert_eq!(p.derivative(1.0, 2), 0.0);
    }

    #[test]
    fn one_dimensional_normalization_is_35_over_32() {
        // ∫_{-1}^{1} (1 - x²)³ dx = 32/35
        let k = RadialKernelSpec::default_profile(1).unwrap();
        assert!((k.normalization() - 35.0 / 32.0).abs() < 1e-14);
        assert!((k.eval(&[0.0]) - 35.0 / 32.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_vanishes_on_and_beyond_edge() {
        for d in 1..=3 {
            let k = RadialKernelSpec::default_profile(d).unwrap();
            let mut t = vec![0.0; d];
            t[0] = 1.0;
            assert_eq!(k.eval(&t), 0.0);
            t[0] = 2f64.sqrt();
            assert_eq!(k.eval(&t), 0.0);
        }
    }

    #[test]
    fn negative_or_non_vanishing_profiles_rejected() {
        assert!(RadialKernelSpec::polynomial(vec![-1.0, 1.0], 1.0, 1).is_err());
        // 1 - u does not have a vanishing derivative at the edge
        assert!(RadialKernelSpec::polynomial(vec![1.0, -1.0], 1.0, 1).is_err());
        assert!(RadialKernelSpec::polynomial(vec![1.0, -3.0, 3.0, -1.0], -1.0, 1).is_err());
    }

    #[test]
    fn moments_beyond_six_are_unsupported() {
        let k = RadialKernelSpec::default_profile(2).unwrap();
        assert!(matches!(k.moments(7), Err(Error::UnsupportedOrder(7))));
    }

    #[test]
    fn moment_table_symmetry_and_mass() {
        let k = RadialKernelSpec::default_profile(2).unwrap();
        let m = k.moments(6).unwrap();
        assert!((m.tau_v(&[0, 0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.tau_v(&[1, 0]), Some(0.0));
        assert_eq!(m.tau_v(&[3, 1]), Some(0.0));
        for (v, &x) in m.multi_indices() {
            if v.iter().any(|k| k % 2 == 1) {
                assert_eq!(x.to_bits(), 0.0f64.to_bits());
            }
        }
        // radial symmetry: τ_(2,0) = τ_(0,2) = τ_2 / d
        let t20 = m.tau_v(&[2, 0]).unwrap();
        assert!((t20 - m.tau_v(&[0, 2]).unwrap()).abs() < 1e-15);
        assert!((t20 - m.tau(2).unwrap() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_scalar_moments_are_exact_fractions() {
        let m = RadialKernelSpec::default_profile(1).unwrap().moments(6).unwrap();
        assert!((m.tau(0).unwrap() - 1.0).abs() < 1e-14);
        assert!((m.tau(2).unwrap() - 1.0 / 9.0).abs() < 1e-14);
        assert!((m.tau(4).unwrap() - 1.0 / 33.0).abs() < 1e-14);
        assert!((m.tau(6).unwrap() - 5.0 / 429.0).abs() < 1e-14);
    }

    #[test]
    fn half_gamma_values() {
        assert!((half_gamma(1) - PI.sqrt()).abs() < 1e-15);
        assert_eq!(half_gamma(2), 1.0);
        assert!((half_gamma(5) - 0.75 * PI.sqrt()).abs() < 1e-15);
        assert_eq!(half_gamma(8), 6.0);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn fourth_order_coefficients_closed_form() {
        // m0 = 256/315, m2 = 256/3465, m4 = 256/15015 give A = 2079/1024, B = -9009/1024
        let g = FourthOrderKernelSpec::new().unwrap();
        let (a, b) = g.coefficients();
        assert!((a - 2079.0 / 1024.0).abs() < 1e-12);
        assert!((b + 9009.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn fourth_order_symmetry_and_edges() {
        let g = FourthOrderKernelSpec::new().unwrap();
        for z in [0.1, 0.5, 0.9] {
            assert_eq!(g.eval(z), g.eval(-z));
            assert_eq!(g.d1(z), -g.d1(-z));
        }
        assert_eq!(g.d1(0.0), 0.0);
        for f in [g.eval(1.0), g.d1(1.0), g.d2(1.0), g.eval(-1.0), g.d2(-1.0)] {
            assert!(f.abs() < 1e-12);
        }
        assert_eq!(g.eval(1.5), 0.0);
    }
}
