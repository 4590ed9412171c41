//! Deterministic bias of the ideal estimators.
//!
//! [`expected_ideal`] computes `E f̄(t) = ∫ γᵈ(s) h⁻ᵈ K((t − s)γ(s)/h) f(s) ds`
//! by adaptive quadrature, and [`bias_coefficients`] the coefficients of
//! the even powers of `h` in its small-`h` expansion,
//! `a_{2k}(t) = Σ_{|v|=2k} τ_v / v! · D_v(f / γ^{2k})(t)`.
//!
//! For the sixth-order scale `γ_h = α / (1 + h²β)` the scale itself depends
//! on `h`. Expanding `γ_h^{−2k} = α^{−2k} Σ_j C(2k, j) h^{2j} βʲ` and
//! collecting powers gives
//! `c_{2m} = Σ_{k+j=m} C(2k, j) Σ_{|v|=2k} τ_v / v! · D_v(f βʲ / α^{2k})`,
//! which is what this module reports as the coefficient of `h^{2m}`.

use rayon::prelude::*;
use serde::Serialize;

use crate::clipping::ClippingSpec;
use crate::error::{Error, Result};
use crate::estimators::Grid;
use crate::experiments::DensityModel;
use crate::jet::Jet;
use crate::kernels::{MomentTable, RadialKernelSpec};
use crate::poly::fornberg_weights;
use crate::quadrature::{integrate_box, integrate_pieces, QuadOptions};

/// The scale `γ` of an ideal estimator, evaluated with the true density.
#[derive(Debug, Clone)]
pub enum ScaleRule {
    /// `γ ≡ v`; `v = 1` is the classical estimator.
    Constant(f64),
    /// `γ = α(f)`.
    McKay(ClippingSpec),
    /// `γ_h = α(f) / (1 + h²β)` (`d = 1`).
    Jkh {
        clip: ClippingSpec,
        tau2: f64,
        tau4: f64,
    },
}

impl ScaleRule {
    pub fn jkh(clip: ClippingSpec, moments: &MomentTable) -> Result<Self> {
        let tau = |r| {
            moments
                .tau(r)
                .ok_or_else(|| Error::InvalidArgument(format!("moment table lacks tau_{r}")))
        };
        Ok(Self::Jkh {
            clip,
            tau2: tau(2)?,
            tau4: tau(4)?,
        })
    }

    pub fn id(&self) -> String {
        match self {
            Self::Constant(v) => format!("constant;v={v}"),
            Self::McKay(c) => format!("mckay;{}", c.id()),
            Self::Jkh { clip, .. } => format!("jkh;{}", clip.id()),
        }
    }

    /// A positive lower bound on `γ` over all points and admissible `h`.
    pub fn lower_bound(&self) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::McKay(c) => c.c(),
            // h²|β| < 1/2 keeps the denominator below 3/2
            Self::Jkh { clip, .. } => clip.c() * 2.0 / 3.0,
        }
    }

    /// `γ(s)` at bandwidth `h`.
    pub fn gamma(&self, density: &dyn DensityModel, s: &[f64], h: f64) -> Result<f64> {
        match self {
            Self::Constant(v) => Ok(*v),
            Self::McKay(c) => c.alpha(density.pdf(s)),
            Self::Jkh { clip, tau2, tau4 } => {
                let j = density.jet(s, 2)?;
                let (f, f1, f2) = (j.value(), j.partial(&[1]), j.partial(&[2]));
                let a = clip.alpha(f)?;
                let beta = tau4 * (f2 * f - 2.0 * f1 * f1) / (24.0 * tau2 * a.powi(6));
                let load = h * h * beta.abs();
                if load >= 0.5 {
                    return Err(Error::BandwidthTooLarge { h, value: load });
                }
                Ok(a / (1.0 + h * h * beta))
            }
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        match self {
            Self::Constant(v) if !(*v > 0.0 && v.is_finite()) => Err(Error::InvalidArgument(
                format!("constant scale {v} must be positive"),
            )),
            Self::Jkh { .. } if dim != 1 => Err(Error::Unsupported(format!(
                "the h6 scale is defined for d = 1, got d = {dim}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Quadrature and derivative settings for the oracle.
#[derive(Debug, Clone, Copy)]
pub struct BiasOptions {
    /// Absolute tolerance of [`expected_ideal`].
    pub abs_tol: f64,
    /// Fall back to finite differences when the density lacks derivatives.
    pub finite_differences: bool,
}

impl Default for BiasOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-11,
            finite_differences: true,
        }
    }
}

fn check_point(density: &dyn DensityModel, kernel: &RadialKernelSpec, t: &[f64]) -> Result<()> {
    for found in [density.dim(), t.len()] {
        if found != kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dim(),
                found,
            });
        }
    }
    Ok(())
}

/// `E f̄(t; h)` for the ideal estimator with scale `rule`.
pub fn expected_ideal(
    density: &dyn DensityModel,
    kernel: &RadialKernelSpec,
    h: f64,
    rule: &ScaleRule,
    t: &[f64],
    opts: BiasOptions,
) -> Result<f64> {
    check_point(density, kernel, t)?;
    rule.check(kernel.dim())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive")));
    }
    let d = kernel.dim();
    let root_t = kernel.support_radius();
    let reach = h * root_t / rule.lower_bound();
    let quad = QuadOptions {
        abs_tol: opts.abs_tol,
        rel_tol: 0.0,
        max_subdivisions: 20_000,
    };
    let mut integrand = |s: &[f64]| -> Result<f64> {
        let g = rule.gamma(density, s, h)?;
        let norm_sq: f64 = t
            .iter()
            .zip(s)
            .map(|(a, b)| {
                let u = (a - b) * g / h;
                u * u
            })
            .sum();
        let k = kernel.eval_sq(norm_sq);
        if k == 0.0 {
            return Ok(0.0);
        }
        Ok((g / h).powi(d as i32) * k * density.pdf(s))
    };
    if d == 1 {
        let breaks = support_breaks(&mut integrand_edge(density, rule, t[0], h, root_t), t[0], reach)?;
        return Ok(integrate_pieces(|s| integrand(&[s]), &breaks, quad)?.value);
    }
    let lower: Vec<f64> = t.iter().map(|x| x - reach).collect();
    let upper: Vec<f64> = t.iter().map(|x| x + reach).collect();
    Ok(integrate_box(&mut integrand, &lower, &upper, quad)?.value)
}

/// `|s − t| γ(s) − h √T`; the integrand vanishes where this is positive.
fn integrand_edge<'a>(
    density: &'a dyn DensityModel,
    rule: &'a ScaleRule,
    t: f64,
    h: f64,
    root_t: f64,
) -> impl FnMut(f64) -> Result<f64> + 'a {
    move |s| Ok((s - t).abs() * rule.gamma(density, &[s], h)? - h * root_t)
}

/// Breakpoints at the support edges of the one-dimensional integrand (the
/// support can be disconnected when `γ` decays in the tails).
fn support_breaks(
    edge: &mut impl FnMut(f64) -> Result<f64>,
    t: f64,
    reach: f64,
) -> Result<Vec<f64>> {
    const SCAN: usize = 4000;
    let (a, b) = (t - reach, t + reach);
    let step = (b - a) / SCAN as f64;
    let mut breaks = vec![a];
    let mut prev = edge(a)?;
    for i in 1..=SCAN {
        let x = if i == SCAN { b } else { a + i as f64 * step };
        let cur = edge(x)?;
        if (prev > 0.0) != (cur > 0.0) {
            let (mut lo, mut hi) = (x - step, x);
            let lo_positive = prev > 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (edge(mid)? > 0.0) == lo_positive {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            breaks.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    if !breaks.iter().any(|&x| x == t) && t > a && t < b {
        breaks.push(t);
    }
    breaks.push(b);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    Ok(breaks)
}

/// Taylor jet of the density at `t`, analytic when available.
fn density_jet(
    density: &dyn DensityModel,
    t: &[f64],
    order: usize,
    opts: BiasOptions,
) -> Result<Jet> {
    if order <= density.max_derivative_order() {
        return density.jet(t, order);
    }
    if !opts.finite_differences {
        return Err(Error::DerivativeUnavailable {
            requested: order,
            available: density.max_derivative_order(),
        });
    }
    Ok(Jet::from_partials(t.len(), order, |v| {
        fd_partial(|s| density.pdf(s), t, v)
    }))
}

/// `D_v f(t)` from tensor central stencils with one Richardson step.
fn fd_partial(f: impl Fn(&[f64]) -> f64, t: &[f64], v: &[usize]) -> f64 {
    let total: usize = v.iter().sum();
    if total == 0 {
        return f(t);
    }
    let step = f64::EPSILON.powf(1.0 / (total as f64 + 6.0));
    let stencils: Vec<(Vec<f64>, Vec<f64>)> = v
        .iter()
        .map(|&m| {
            let q = (m + 1) / 2 + 1;
            let nodes: Vec<f64> = (-(q as i64)..=q as i64).map(|i| i as f64).collect();
            let w = fornberg_weights(0.0, &nodes, m).swap_remove(m);
            (nodes, w)
        })
        .collect();
    let estimate = |h: f64| {
        let dim = t.len();
        let mut idx = vec![0usize; dim];
        let mut acc = 0.0;
        let mut point = t.to_vec();
        loop {
            let mut w = 1.0;
            for k in 0..dim {
                w *= stencils[k].1[idx[k]];
                point[k] = t[k] + h * stencils[k].0[idx[k]];
            }
            if w != 0.0 {
                acc += w * f(&point);
            }
            let mut k = 0;
            loop {
                if k == dim {
                    return acc / h.powi(total as i32);
                }
                idx[k] += 1;
                if idx[k] < stencils[k].0.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    };
    let (coarse, fine) = (estimate(step), estimate(step / 2.0));
    (16.0 * fine - coarse) / 15.0
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Σ_{|v|=m} τ_v · coef_v(g)`, i.e. `Σ τ_v / v! · D_v g`.
fn contract(g: &Jet, m: usize, moments: &MomentTable) -> f64 {
    g.contract_degree(m, |v| moments.tau_v(v).unwrap_or(0.0))
}

/// Jet of `α(f)` from the jet of `f`.
fn alpha_jet(clip: &ClippingSpec, f: &Jet) -> Result<Jet> {
    let c2 = clip.c() * clip.c();
    let s = f.scale(1.0 / c2);
    let x = s.value();
    if x < 0.0 {
        return Err(Error::NegativeDensity(f.value()));
    }
    let p = s.compose(&clip.p_taylor(x, f.order()));
    Ok(p.sqrt().scale(clip.c()))
}

/// Coefficients `c_0, c_2, …, c_{2 k_max}` of the expansion at `t`.
pub fn coefficients_at(
    density: &dyn DensityModel,
    kernel: &RadialKernelSpec,
    rule: &ScaleRule,
    t: &[f64],
    k_max: usize,
    opts: BiasOptions,
) -> Result<Vec<f64>> {
    check_point(density, kernel, t)?;
    rule.check(kernel.dim())?;
    if !(1..=3).contains(&k_max) {
        return Err(Error::InvalidArgument(format!("k_max = {k_max} must be 1, 2 or 3")));
    }
    let order = 2 * k_max;
    let moments = kernel.moments(order)?;
    let f = density_jet(density, t, order, opts)?;
    match rule {
        ScaleRule::Constant(v) => Ok((0..=k_max)
                .map(|m| contract(&f, 2 * m, &moments) * v.powi(-2 * m as i32))
                .collect()),
        ScaleRule::McKay(clip) => {
            let inv_sq = alpha_jet(clip, &f)?.powi(2).recip();
            let mut g = f.clone();
            let mut out = Vec::with_capacity(k_max + 1);
            for m in 0..=k_max {
                out.push(contract(&g, 2 * m, &moments));
                g = &g * &inv_sq;
            }
            Ok(out)
        }
        ScaleRule::Jkh { clip, tau2, tau4 } => {
            let inv_sq = alpha_jet(clip, &f)?.powi(2).recip();
            // β needs f″, so its jet is two orders shorter than f's.
            let low = order - 2;
            let f_low = f.truncate(low);
            let f1 = f.derivative(0).truncate(low);
            let f2 = f.derivative(0).derivative(0);
            let alpha_low = alpha_jet(clip, &f_low)?;
            let beta = (&(&f2 * &f_low) - &(&f1 * &f1).scale(2.0))
                .div(&alpha_low.powi(6))
                .scale(tau4 / (24.0 * tau2));
            let inv_sq_low = inv_sq.truncate(low);
            let mut out = Vec::with_capacity(k_max + 1);
            for m in 0..=k_max {
                let mut total = 0.0;
                for k in 0..=m {
                    let j = m - k;
                    if j > 2 * k {
                        continue;
                    }
                    let term = if j == 0 {
                        contract(&(&f * &inv_sq.powi(k as u32)), 2 * k, &moments)
                    } else {
                        let g = &(&f_low * &beta.powi(j as u32)) * &inv_sq_low.powi(k as u32);
                        contract(&g, 2 * k, &moments)
                    };
                    total += binomial(2 * k, j) * term;
                }
                out.push(total);
            }
            Ok(out)
        }
    }
}

/// Expansion coefficients over a grid; `coefficients[m][i]` multiplies
/// `h^{2m}` at grid point `i`.
#[derive(Debug, Clone, Serialize)]
pub struct BiasExpansion {
    pub rule: String,
    pub grid: Grid,
    pub coefficients: Vec<Vec<f64>>,
    pub h_grid: Vec<f64>,
    pub fitted_order: Option<f64>,
}

impl BiasExpansion {
    /// `Σ_m c_{2m}(tᵢ) h^{2m}`.
    pub fn evaluate(&self, i: usize, h: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(m, c)| c[i] * h.powi(2 * m as i32))
            .sum()
    }
}

pub fn bias_coefficients(
    density: &dyn DensityModel,
    rule: &ScaleRule,
    kernel: &RadialKernelSpec,
    grid: &Grid,
    k_max: usize,
    opts: BiasOptions,
) -> Result<BiasExpansion> {
    let per_point = (0..grid.len())
        .into_par_iter()
        .map(|i| coefficients_at(density, kernel, rule, grid.point(i), k_max, opts))
        .collect::<Result<Vec<_>>>()?;
    let coefficients = (0..=k_max)
        .map(|m| per_point.iter().map(|c| c[m]).collect())
        .collect();
    Ok(BiasExpansion {
        rule: rule.id(),
        grid: grid.clone(),
        coefficients,
        h_grid: Vec::new(),
        fitted_order: None,
    })
}

/// One `(h, E f̄ − f)` pair of a bias scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BiasPoint {
    pub h: f64,
    pub bias: f64,
}

/// Log–log fit of `|bias|` against `h`.
#[derive(Debug, Clone, Serialize)]
pub struct BiasFit {
    pub t: Vec<f64>,
    pub points: Vec<BiasPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub used: usize,
}

/// Biases below this are treated as quadrature noise and skipped.
pub const BIAS_FLOOR: f64 = 1e-12;

/// `n` logarithmically spaced bandwidths from `hi` down to `lo`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n)
        .map(|i| (hi.ln() + (lo.ln() - hi.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Least-squares slope of `log|E f̄(t; h) − f(t)|` against `log h`.
pub fn fit_bias_order(
    density: &dyn DensityModel,
    kernel: &RadialKernelSpec,
    rule: &ScaleRule,
    t: &[f64],
    h_grid: &[f64],
    opts: BiasOptions,
) -> Result<BiasFit> {
    let f = density.pdf(t);
    let points = h_grid
        .par_iter()
        .map(|&h| {
            Ok(BiasPoint {
                h,
                bias: expected_ideal(density, kernel, h, rule, t, opts)? - f,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.bias.abs() >= BIAS_FLOOR)
        .map(|p| (p.h.ln(), p.bias.abs().ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} of {} bandwidths have |bias| above {BIAS_FLOOR:e}",
            usable.len(),
            points.len()
        )));
    }
    let (slope, intercept) = least_squares(&usable);
    Ok(BiasFit {
        t: t.to_vec(),
        points,
        slope,
        intercept,
        used: usable.len(),
    })
}

/// Ordinary least-squares line through `(x, y)` pairs: `(slope, intercept)`.
pub(crate) fn least_squares(xy: &[(f64, f64)]) -> (f64, f64) {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
