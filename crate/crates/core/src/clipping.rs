//! Smooth clipping of the square-root scale.
//!
//! A clipping function `p` satisfies `p ≥ 1`, `p(s) = s` for `s ≥ t0` and is
//! nondecreasing. The clipped scale is `α(x) = c·√p(x / c²)`, so `α ≥ c`
//! everywhere and `α(x) = √x` once `x ≥ t0·c²`. The sixth-order estimator
//! additionally divides by `1 + h²β` with
//! `β = τ4 (f″f − 2f′²) / (24 τ2 α(f)⁶)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::MomentTable;
use crate::poly::{fornberg_weights, Polynomial};

/// Expanded form of the quintic clipping polynomial on `[0, 2]`:
/// `1 + 21/32 t⁶ − 15/16 t⁷ + 135/256 t⁸ − 35/256 t⁹ + 7/512 t¹⁰`.
const MCKAY_EXPANDED: [f64; 11] = [
    1.0,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    21.0 / 32.0,
    -15.0 / 16.0,
    135.0 / 256.0,
    -35.0 / 256.0,
    7.0 / 512.0,
];

/// Piecewise polynomial clipping function. Piece `i` covers
/// `[breaks[i], breaks[i+1]]` and is written in the local variable
/// `s - breaks[i]`; `p = 1` left of the first break and `p(s) = s` right of
/// the last one, which is `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySpline {
    pub breaks: Vec<f64>,
    pub pieces: Vec<Vec<f64>>,
}

impl PolySpline {
    fn validate(&self) -> Result<()> {
        if self.breaks.len() < 2 || self.pieces.len() + 1 != self.breaks.len() {
            return Err(Error::InvalidClipping(format!(
                "spline needs n + 1 breaks for n pieces, got {} breaks and {} pieces",
                self.breaks.len(),
                self.pieces.len()
            )));
        }
        if self.breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidClipping("spline breaks must increase".into()));
        }
        Ok(())
    }

    fn piece(&self, s: f64) -> (usize, Polynomial) {
        let last = self.pieces.len() - 1;
        let i = self.breaks[1..=last].partition_point(|&b| b <= s);
        (i, Polynomial::new(self.pieces[i].clone()))
    }
}

/// The function `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipFunction {
    /// Five-times differentiable quintic-in-`(t − 2)` example with `t0 = 2`.
    McKayQuintic,
    Spline(PolySpline),
}

impl ClipFunction {
    fn knots(&self) -> Vec<f64> {
        match self {
            Self::McKayQuintic => vec![0.0, 2.0],
            Self::Spline(s) => s.breaks.clone(),
        }
    }

    fn t0(&self) -> f64 {
        match self {
            Self::McKayQuintic => 2.0,
            Self::Spline(s) => *s.breaks.last().expect("validated spline"),
        }
    }

    fn lower(&self) -> f64 {
        match self {
            Self::McKayQuintic => 0.0,
            Self::Spline(s) => s.breaks[0],
        }
    }

    fn eval(&self, t: f64) -> f64 {
        if t >= self.t0() {
            return t;
        }
        if t <= self.lower() {
            return 1.0;
        }
        match self {
            Self::McKayQuintic => {
                let u = t - 2.0;
                let inner =
                    1.0 - 2.0 * u + 2.25 * u * u - 1.75 * u * u * u + 0.875 * u * u * u * u;
                1.0 + t.powi(6) / 64.0 * inner
            }
            Self::Spline(s) => {
                let (i, poly) = s.piece(t);
                poly.eval(t - s.breaks[i])
            }
        }
    }

    fn taylor(&self, t: f64, order: usize) -> Vec<f64> {
        let mut out = vec![0.0; order + 1];
        if t >= self.t0() {
            out[0] = t;
            if order >= 1 {
                out[1] = 1.0;
            }
            return out;
        }
        if t <= self.lower() {
            out[0] = 1.0;
            return out;
        }
        match self {
            Self::McKayQuintic => {
                let mut tay = Polynomial::new(MCKAY_EXPANDED.to_vec()).taylor_at(t, order);
                tay[0] = self.eval(t);
                tay
            }
            Self::Spline(s) => {
                let (i, poly) = s.piece(t);
                poly.taylor_at(t - s.breaks[i], order)
            }
        }
    }
}

/// One-sided derivative comparison at a knot.
#[derive(Debug, Clone, Serialize)]
pub struct KnotCheck {
    pub knot: f64,
    pub order: usize,
    pub left: f64,
    pub right: f64,
    pub passed: bool,
}

/// Outcome of the numerical smoothness and shape gate for `p`.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothnessReport {
    pub knots: Vec<KnotCheck>,
    pub min_value: f64,
    pub nondecreasing: bool,
}

impl SmoothnessReport {
    pub fn passed(&self) -> bool {
        self.nondecreasing && self.min_value >= 1.0 - 1e-12 && self.knots.iter().all(|k| k.passed)
    }
}

/// Constants `c`, `t0` together with the clipping function `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClippingSpec {
    c: f64,
    t0: f64,
    function: ClipFunction,
}

/// Relative tolerance for left/right derivative agreement at knots.
pub const SMOOTHNESS_TOL: f64 = 1e-4;
/// Derivative orders that must be continuous across knots.
pub const SMOOTHNESS_ORDER: usize = 5;

impl ClippingSpec {
    /// Validates the constants and runs the smoothness gate on `p`.
    pub fn new(c: f64, t0: f64, function: ClipFunction) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidClipping(format!("c = {c} must be positive")));
        }
        if let ClipFunction::Spline(s) = &function {
            s.validate()?;
        }
        if !(t0 >= 1.0) {
            return Err(Error::InvalidClipping(format!("t0 = {t0} must be at least 1")));
        }
        if (function.t0() - t0).abs() > 0.0 {
            return Err(Error::InvalidClipping(format!(
                "t0 = {t0} disagrees with the clipping function's threshold {}",
                function.t0()
            )));
        }
        let spec = Self { c, t0, function };
        let report = spec.smoothness_report(SMOOTHNESS_ORDER);
        if !report.passed() {
            let why = report
                .knots
                .iter()
                .find(|k| !k.passed)
                .map(|k| {
                    format!(
                        "derivative {} jumps at {} (left {}, right {})",
                        k.order, k.knot, k.left, k.right
                    )
                })
                .unwrap_or_else(|| "p is below 1 or decreasing".into());
            return Err(Error::InvalidClipping(why));
        }
        Ok(spec)
    }

    /// The quintic clipping function with `t0 = 2`.
    pub fn mckay(c: f64) -> Result<Self> {
        Self::new(c, 2.0, ClipFunction::McKayQuintic)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn function(&self) -> &ClipFunction {
        &self.function
    }

    /// `t0·c²`, the density level above which `α(x) = √x`.
    pub fn threshold(&self) -> f64 {
        self.t0 * self.c * self.c
    }

    pub fn id(&self) -> String {
        let name = match self.function {
            ClipFunction::McKayQuintic => "mckay-quintic",
            ClipFunction::Spline(_) => "spline",
        };
        format!("{name};c={};t0={}", self.c, self.t0)
    }

    /// `p(t)`.
    pub fn p(&self, t: f64) -> f64 {
        self.function.eval(t)
    }

    /// Taylor coefficients of `p` about `t` up to `order`.
    pub fn p_taylor(&self, t: f64, order: usize) -> Vec<f64> {
        self.function.taylor(t, order)
    }

    /// `α(x) = c·√p(x / c²)`.
    pub fn alpha(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::NegativeDensity(x));
        }
        let s = x / (self.c * self.c);
        if s >= self.t0 {
            return Ok(x.sqrt());
        }
        Ok(self.c * self.p(s).sqrt())
    }

    /// Numerical gate: one-sided derivative estimates of orders
    /// `1..=max_order` must agree at every knot, and `p` must be `≥ 1` and
    /// nondecreasing on a fine scan.
    pub fn smoothness_report(&self, max_order: usize) -> SmoothnessReport {
        let knots = self.function.knots();
        let mut checks = Vec::new();
        for (i, &knot) in knots.iter().enumerate() {
            let left_gap = if i == 0 { f64::INFINITY } else { knot - knots[i - 1] };
            let right_gap = knots.get(i + 1).map_or(f64::INFINITY, |&k| k - knot);
            let left = one_sided(|t| self.p(t), knot, -probe_step(left_gap), max_order);
            let right = one_sided(|t| self.p(t), knot, probe_step(right_gap), max_order);
            for order in 1..=max_order {
                let (l, r) = (left[order], right[order]);
                let scale = 1f64.max(l.abs()).max(r.abs());
                checks.push(KnotCheck {
                    knot,
                    order,
                    left: l,
                    right: r,
                    passed: (l - r).abs() <= SMOOTHNESS_TOL * scale,
                });
            }
        }
        let lo = self.function.lower() - 1.0;
        let hi = self.t0 + 2.0;
        let steps = 8000;
        let mut min_value = f64::INFINITY;
        let mut nondecreasing = true;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=steps {
            let v = self.p(lo + (hi - lo) * k as f64 / steps as f64);
            min_value = min_value.min(v);
            if v < prev - 1e-12 {
                nondecreasing = false;
            }
            prev = v;
        }
        SmoothnessReport {
            knots: checks,
            min_value,
            nondecreasing,
        }
    }
}

const PROBE_POINTS: usize = 11;

fn probe_step(gap: f64) -> f64 {
    (gap / (PROBE_POINTS - 1) as f64).min(0.1)
}

/// Derivatives `0..=max_order` at `x0` from the 11 nodes `x0 + j·step`.
fn one_sided(f: impl Fn(f64) -> f64, x0: f64, step: f64, max_order: usize) -> Vec<f64> {
    let xs: Vec<f64> = (0..PROBE_POINTS).map(|j| x0 + j as f64 * step).collect();
    let w = fornberg_weights(x0, &xs, max_order);
    let values: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    w.iter()
        .map(|row| row.iter().zip(&values).map(|(a, b)| a * b).sum())
        .collect()
}

/// Source of `f`, `f′`, `f″` at a point, analytic or estimated.
pub trait DerivativeAccessor: Send + Sync {
    fn derivatives(&self, x: f64) -> Result<[f64; 3]>;
}

impl<F> DerivativeAccessor for F
where
    F: Fn(f64) -> Result<[f64; 3]> + Send + Sync,
{
    fn derivatives(&self, x: f64) -> Result<[f64; 3]> {
        self(x)
    }
}

/// Ingredients of the second-order scale correction `β`.
#[derive(Clone)]
pub struct BetaSpec {
    pub tau2: f64,
    pub tau4: f64,
    accessor: Arc<dyn DerivativeAccessor>,
}

impl fmt::Debug for BetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BetaSpec")
            .field("tau2", &self.tau2)
            .field("tau4", &self.tau4)
            .finish_non_exhaustive()
    }
}

impl BetaSpec {
    pub fn new(tau2: f64, tau4: f64, accessor: Arc<dyn DerivativeAccessor>) -> Self {
        Self {
            tau2,
            tau4,
            accessor,
        }
    }

    /// Takes `τ2`, `τ4` from a one-dimensional moment table.
    pub fn from_moments(moments: &MomentTable, accessor: Arc<dyn DerivativeAccessor>) -> Result<Self> {
        if moments.dim != 1 {
            return Err(Error::Unsupported(format!(
                "the beta correction is defined for d = 1, got d = {}",
                moments.dim
            )));
        }
        let tau = |r| {
            moments
                .tau(r)
                .ok_or_else(|| Error::InvalidArgument(format!("moment table lacks tau_{r}")))
        };
        Ok(Self::new(tau(2)?, tau(4)?, accessor))
    }

    pub fn derivatives(&self, x: f64) -> Result<[f64; 3]> {
        self.accessor.derivatives(x)
    }

    /// `β` from explicit values of `f`, `f′`, `f″`.
    pub fn beta_from(&self, clip: &ClippingSpec, f: f64, f1: f64, f2: f64) -> Result<f64> {
        let a = clip.alpha(f)?;
        Ok(self.tau4 * (f2 * f - 2.0 * f1 * f1) / (24.0 * self.tau2 * a.powi(6)))
    }

    /// `β(x)`.
    pub fn beta(&self, clip: &ClippingSpec, x: f64) -> Result<f64> {
        let [f, f1, f2] = self.derivatives(x)?;
        self.beta_from(clip, f, f1, f2)
    }

    /// `γ_h(x) = α(f(x)) / (1 + h²β(x))`, requiring `h²|β(x)| < 1/2`.
    pub fn gamma(&self, clip: &ClippingSpec, x: f64, h: f64) -> Result<f64> {
        let [f, f1, f2] = self.derivatives(x)?;
        let beta = self.beta_from(clip, f, f1, f2)?;
        let load = h * h * beta.abs();
        if load >= 0.5 {
            return Err(Error::BandwidthTooLarge { h, value: load });
        }
        Ok(clip.alpha(f)? / (1.0 + h * h * beta))
    }
}
