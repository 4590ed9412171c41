//! Classical, ideal and real (plug-in) kernel density estimators.
//!
//! Every estimator here is a normalized sum
//! `(1 / (n hᵈ)) Σᵢ wᵢ K((t − Xᵢ) sᵢ / h)` for some per-term scale `sᵢ` and
//! weight `wᵢ`. When `sᵢ` depends only on `Xᵢ` and `wᵢ = sᵢᵈ`, each term
//! integrates to `1/n` and the estimate is itself a density.

mod engine;
mod field;
mod sample;
mod schedule;

use std::collections::BTreeMap;

pub use engine::Engine;
pub use field::{ideal_real_gap, EstimateField, EstimatorId, FieldMetadata};
pub use sample::{Grid, SampleSet};
pub use schedule::{schedule_for, BandwidthSchedule, Mode};

use engine::kernel_sums;

use crate::clipping::{BetaSpec, ClippingSpec};
use crate::error::{Error, Result};
use crate::kernels::{FourthOrderKernelSpec, RadialKernelSpec};

/// True density values, `t ↦ f(t)`.
pub type DensityFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Preliminary estimates at the sample points: `f̂(Xᵢ; h1)` and, for the
/// sixth-order estimator, `f_{G1}(Xᵢ; h3)` and `f_{G2}(Xᵢ; h4)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreliminaryFit {
    pub h1: f64,
    pub fhat: Vec<f64>,
    pub deriv1: Option<Vec<f64>>,
    pub deriv2: Option<Vec<f64>>,
}

/// Runs estimators with a fixed evaluation [`Engine`]. Grid points are
/// processed in parallel on the current rayon pool; output does not depend
/// on its size.
#[derive(Debug, Clone, Copy, Default)]
pub struct Evaluator {
    pub engine: Engine,
}

fn check_dims(kernel: &RadialKernelSpec, samples: &SampleSet, grid: &Grid) -> Result<()> {
    for found in [samples.dim(), grid.dim()] {
        if found != kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dim(),
                found,
            });
        }
    }
    Ok(())
}

fn require_1d(what: &str, dim: usize) -> Result<()> {
    if dim == 1 {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{what} is defined for d = 1, got d = {dim}")))
    }
}

fn check_bandwidth(name: &str, h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("bandwidth {name} = {h} must be positive")))
    }
}

#[inline]
fn scaled_norm_sq(t: &[f64], x: &[f64], factor: f64) -> f64 {
    if let ([a], [b]) = (t, x) {
        let u = (a - b) * factor;
        return u * u;
    }
    t.iter()
        .zip(x)
        .map(|(a, b)| {
            let u = (a - b) * factor;
            u * u
        })
        .sum()
}

fn bandwidth_map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

impl Evaluator {
    pub fn new(engine: Engine) -> Self {
        Self { engine }
    }

    pub fn naive() -> Self {
        Self::new(Engine::Naive)
    }

    /// `(1 / (n hᵈ)) Σ sᵢᵈ K((t − Xᵢ) sᵢ / h)` at `queries`.
    fn scaled_sum(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        h: f64,
        scales: &[f64],
        queries: &[f64],
    ) -> Result<Vec<f64>> {
        let d = kernel.dim() as i32;
        let min_scale = scales.iter().copied().fold(f64::INFINITY, f64::min);
        let radius = kernel.support_radius() * h / min_scale;
        let inv_h = 1.0 / h;
        let sums = kernel_sums(samples, queries, Some(radius), self.engine, |t, i| {
            let s = scales[i];
            let k = kernel.eval_sq(scaled_norm_sq(t, samples.point(i), s * inv_h));
            Ok(if k == 0.0 { 0.0 } else { s.powi(d) * k })
        })?;
        let norm = 1.0 / (samples.len() as f64 * h.powi(d));
        Ok(sums.into_iter().map(|s| s * norm).collect())
    }

    fn classical_at(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        h: f64,
        queries: &[f64],
    ) -> Result<Vec<f64>> {
        let d = kernel.dim() as i32;
        let inv_h = 1.0 / h;
        let sums = kernel_sums(
            samples,
            queries,
            Some(kernel.support_radius() * h),
            self.engine,
            |t, i| Ok(kernel.eval_sq(scaled_norm_sq(t, samples.point(i), inv_h))),
        )?;
        let norm = 1.0 / (samples.len() as f64 * h.powi(d));
        Ok(sums.into_iter().map(|s| s * norm).collect())
    }

    /// `f̂(t; h) = (1 / (n hᵈ)) Σ K((t − Xᵢ) / h)`.
    pub fn classical_kde(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        h: f64,
        grid: &Grid,
    ) -> Result<EstimateField> {
        check_dims(kernel, samples, grid)?;
        check_bandwidth("h", h)?;
        let values = self.classical_at(samples, kernel, h, grid.points())?;
        Ok(EstimateField {
            estimator: EstimatorId::Classical,
            grid: grid.clone(),
            values,
            metadata: FieldMetadata {
                n: samples.len(),
                bandwidths: bandwidth_map(&[("h", h)]),
                kernel: kernel.id(),
                ..Default::default()
            },
        })
    }

    fn derivative_at(
        &self,
        samples: &SampleSet,
        g: &FourthOrderKernelSpec,
        h: f64,
        order: i32,
        queries: &[f64],
    ) -> Result<Vec<f64>> {
        let inv_h = 1.0 / h;
        let sums = kernel_sums(samples, queries, Some(g.support() * h), self.engine, |t, i| {
            let z = (t[0] - samples.point(i)[0]) * inv_h;
            Ok(if order == 1 { g.d1(z) } else { g.d2(z) })
        })?;
        let norm = 1.0 / (samples.len() as f64 * h.powi(order + 1));
        Ok(sums.into_iter().map(|s| s * norm).collect())
    }

    /// `f_{G1}(x; h3) = (1 / (n h3²)) Σ G′((x − Xᵢ)/h3)` and
    /// `f_{G2}(x; h4) = (1 / (n h4³)) Σ G″((x − Xᵢ)/h4)`.
    pub fn deriv_estimates(
        &self,
        samples: &SampleSet,
        g: &FourthOrderKernelSpec,
        h3: f64,
        h4: f64,
        grid: &Grid,
    ) -> Result<(EstimateField, EstimateField)> {
        require_1d("derivative estimation", samples.dim())?;
        require_1d("derivative estimation", grid.dim())?;
        check_bandwidth("h3", h3)?;
        check_bandwidth("h4", h4)?;
        let meta = |name: &str, h: f64| FieldMetadata {
            n: samples.len(),
            bandwidths: bandwidth_map(&[(name, h)]),
            kernel: g.id().to_string(),
            ..Default::default()
        };
        let d1 = self.derivative_at(samples, g, h3, 1, grid.points())?;
        let d2 = self.derivative_at(samples, g, h4, 2, grid.points())?;
        Ok((
            EstimateField {
                estimator: EstimatorId::Deriv1,
                grid: grid.clone(),
                values: d1,
                metadata: meta("h3", h3),
            },
            EstimateField {
                estimator: EstimatorId::Deriv2,
                grid: grid.clone(),
                values: d2,
                metadata: meta("h4", h4),
            },
        ))
    }

    /// Square-root law with the hard clip `γ(t, s) = max(f(s), f(t)/10)^{1/2}`.
    /// For `d ≥ 2` the weight is `γᵈ`, mirroring the smooth-clipped form.
    pub fn ideal_abramson(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        h: f64,
        f: DensityFn<'_>,
        grid: &Grid,
    ) -> Result<EstimateField> {
        check_dims(kernel, samples, grid)?;
        check_bandwidth("h", h)?;
        let d = kernel.dim() as i32;
        let f_samples: Vec<f64> = samples.iter().map(f).collect();
        let inv_h = 1.0 / h;
        // the scale depends on t, so there is no sample-independent radius
        let sums = kernel_sums(samples, grid.points(), None, self.engine, |t, i| {
            let x = samples.point(i);
            let gamma = f_samples[i].max(f(t) / 10.0).sqrt();
            if gamma == 0.0 {
                return if t == x { Err(Error::ZeroScale) } else { Ok(0.0) };
            }
            let k = kernel.eval_sq(scaled_norm_sq(t, x, gamma * inv_h));
            Ok(if k == 0.0 { 0.0 } else { gamma.powi(d) * k })
        })?;
        let norm = 1.0 / (samples.len() as f64 * h.powi(d));
        Ok(EstimateField {
            estimator: EstimatorId::AbramsonIdeal,
            grid: grid.clone(),
            values: sums.into_iter().map(|s| s * norm).collect(),
            metadata: FieldMetadata {
                n: samples.len(),
                bandwidths: bandwidth_map(&[("h", h)]),
                kernel: kernel.id(),
                ..Default::default()
            },
        })
    }

    /// Truncated square-root law:
    /// `(1/(n h)) Σ √f(Xᵢ) K((t − Xᵢ)√f(Xᵢ)/h) · 1{|t − Xᵢ| < hB}`.
    pub fn ideal_hhm(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        h: f64,
        b: f64,
        f: DensityFn<'_>,
        grid: &Grid,
    ) -> Result<EstimateField> {
        check_dims(kernel, samples, grid)?;
        require_1d("the truncated square-root estimator", kernel.dim())?;
        check_bandwidth("h", h)?;
        if !(b > 0.0) {
            return Err(Error::InvalidArgument(format!("B = {b} must be positive")));
        }
        let roots: Vec<f64> = samples.iter().map(|x| f(x).max(0.0).sqrt()).collect();
        let inv_h = 1.0 / h;
        let reach = h * b;
        let sums = kernel_sums(samples, grid.points(), Some(reach), self.engine, |t, i| {
            let dx = t[0] - samples.point(i)[0];
            if dx.abs() >= reach || roots[i] == 0.0 {
                return Ok(0.0);
            }
            let u = dx * roots[i] * inv_h;
            let k = kernel.eval_sq(u * u);
            Ok(if k == 0.0 { 0.0 } else { roots[i] * k })
        })?;
        let norm = 1.0 / (samples.len() as f64 * h);
        Ok(EstimateField {
            estimator: EstimatorId::HhmIdeal,
            grid: grid.clone(),
            values: sums.into_iter().map(|s| s * norm).collect(),
            metadata: FieldMetadata {
                n: samples.len(),
                bandwidths: bandwidth_map(&[("h", h), ("B", b)]),
                kernel: kernel.id(),
                ..Default::default()
            },
        })
    }

    /// Clipped square-root law with the true density:
    /// `(1/(n hᵈ)) Σ αᵈ(f(Xᵢ)) K((t − Xᵢ) α(f(Xᵢ)) / h)`.
    pub fn ideal_mckay(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        h: f64,
        clip: &ClippingSpec,
        f: DensityFn<'_>,
        grid: &Grid,
    ) -> Result<EstimateField> {
        check_dims(kernel, samples, grid)?;
        check_bandwidth("h", h)?;
        let scales = samples
            .iter()
            .map(|x| clip.alpha(f(x)))
            .collect::<Result<Vec<_>>>()?;
        let values = self.scaled_sum(samples, kernel, h, &scales, grid.points())?;
        Ok(EstimateField {
            estimator: EstimatorId::MckayIdeal,
            grid: grid.clone(),
            values,
            metadata: FieldMetadata {
                n: samples.len(),
                bandwidths: bandwidth_map(&[("h2", h)]),
                kernel: kernel.id(),
                clip: Some(clip.id()),
                ..Default::default()
            },
        })
    }

    /// Stage one of the real estimators. Each `f̂(Xᵢ)` includes the `i`-th
    /// point itself.
    pub fn preliminary_fit(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        h1: f64,
        derivatives: Option<(&FourthOrderKernelSpec, f64, f64)>,
    ) -> Result<PreliminaryFit> {
        if samples.dim() != kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dim(),
                found: samples.dim(),
            });
        }
        check_bandwidth("h1", h1)?;
        let fhat = self.classical_at(samples, kernel, h1, samples.points())?;
        let (deriv1, deriv2) = match derivatives {
            None => (None, None),
            Some((g, h3, h4)) => {
                require_1d("derivative estimation", samples.dim())?;
                check_bandwidth("h3", h3)?;
                check_bandwidth("h4", h4)?;
                (
                    Some(self.derivative_at(samples, g, h3, 1, samples.points())?),
                    Some(self.derivative_at(samples, g, h4, 2, samples.points())?),
                )
            }
        };
        Ok(PreliminaryFit {
            h1,
            fhat,
            deriv1,
            deriv2,
        })
    }

    /// Two-stage estimator: the true density in [`Evaluator::ideal_mckay`]
    /// replaced by `f̂(·; h1)`.
    pub fn real_mckay(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        schedule: &BandwidthSchedule,
        clip: &ClippingSpec,
        grid: &Grid,
    ) -> Result<EstimateField> {
        schedule.require(Mode::H4)?;
        check_dims(kernel, samples, grid)?;
        let fit = self.preliminary_fit(samples, kernel, schedule.h1, None)?;
        self.real_mckay_from_fit(samples, kernel, &fit, schedule.h2, clip, grid)
    }

    /// Stage two of [`Evaluator::real_mckay`] given a stored fit.
    pub fn real_mckay_from_fit(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        fit: &PreliminaryFit,
        h2: f64,
        clip: &ClippingSpec,
        grid: &Grid,
    ) -> Result<EstimateField> {
        check_dims(kernel, samples, grid)?;
        check_bandwidth("h2", h2)?;
        if fit.fhat.len() != samples.len() {
            return Err(Error::InvalidArgument("preliminary fit does not match the sample".into()));
        }
        let scales = fit
            .fhat
            .iter()
            .map(|&v| clip.alpha(v))
            .collect::<Result<Vec<_>>>()?;
        let values = self.scaled_sum(samples, kernel, h2, &scales, grid.points())?;
        Ok(EstimateField {
            estimator: EstimatorId::MckayReal,
            grid: grid.clone(),
            values,
            metadata: FieldMetadata {
                n: samples.len(),
                bandwidths: bandwidth_map(&[("h1", fit.h1), ("h2", h2)]),
                kernel: kernel.id(),
                clip: Some(clip.id()),
                ..Default::default()
            },
        })
    }

    /// Sixth-order estimator with the true density: scales
    /// `γ_h(Xᵢ) = α(f(Xᵢ)) / (1 + h²β(Xᵢ))`.
    pub fn ideal_jkh(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        h: f64,
        clip: &ClippingSpec,
        beta: &BetaSpec,
        grid: &Grid,
    ) -> Result<EstimateField> {
        check_dims(kernel, samples, grid)?;
        require_1d("the h6 estimator", kernel.dim())?;
        check_bandwidth("h", h)?;
        let scales = samples
            .iter()
            .map(|x| beta.gamma(clip, x[0], h))
            .collect::<Result<Vec<_>>>()?;
        let values = self.scaled_sum(samples, kernel, h, &scales, grid.points())?;
        Ok(EstimateField {
            estimator: EstimatorId::JkhIdeal,
            grid: grid.clone(),
            values,
            metadata: FieldMetadata {
                n: samples.len(),
                bandwidths: bandwidth_map(&[("h2", h)]),
                kernel: kernel.id(),
                clip: Some(clip.id()),
                ..Default::default()
            },
        })
    }

    /// Four-bandwidth plug-in version of [`Evaluator::ideal_jkh`].
    pub fn real_jkh(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        g: &FourthOrderKernelSpec,
        schedule: &BandwidthSchedule,
        clip: &ClippingSpec,
        grid: &Grid,
    ) -> Result<EstimateField> {
        schedule.require(Mode::H6)?;
        self.real_jkh_with_correction(samples, kernel, g, schedule, schedule.h2, clip, grid)
    }

    /// [`Evaluator::real_jkh`] with the bandwidth inside `1 + δ²β̂` decoupled
    /// from the final `h2`; `δ = 0` switches the correction off.
    #[allow(clippy::too_many_arguments)]
    pub fn real_jkh_with_correction(
        &self,
        samples: &SampleSet,
        kernel: &RadialKernelSpec,
        g: &FourthOrderKernelSpec,
        schedule: &BandwidthSchedule,
        delta: f64,
        clip: &ClippingSpec,
        grid: &Grid,
    ) -> Result<EstimateField> {
        check_dims(kernel, samples, grid)?;
        require_1d("the h6 estimator", kernel.dim())?;
        let (h3, h4) = schedule.derivative_bandwidths()?;
        let fit = self.preliminary_fit(samples, kernel, schedule.h1, Some((g, h3, h4)))?;
        let moments = kernel.moments(4)?;
        let (tau2, tau4) = (
            moments.tau(2).expect("order 4 table"),
            moments.tau(4).expect("order 4 table"),
        );
        let alphas = fit
            .fhat
            .iter()
            .map(|&v| clip.alpha(v))
            .collect::<Result<Vec<_>>>()?;
        let (d1, d2) = (
            fit.deriv1.as_ref().expect("requested"),
            fit.deriv2.as_ref().expect("requested"),
        );
        let upper = 2.0 * alphas.iter().copied().fold(0.0, f64::max);
        let lower = clip.c() / 2.0;
        let mut clamps = 0;
        let scales: Vec<f64> = (0..samples.len())
            .map(|i| {
                let a = alphas[i];
                let beta =
                    tau4 * (d2[i] * fit.fhat[i] - 2.0 * d1[i] * d1[i]) / (24.0 * tau2 * a.powi(6));
                let denom = 1.0 + delta * delta * beta;
                let gamma = if denom > 0.0 { a / denom } else { f64::INFINITY };
                if gamma > upper {
                    clamps += 1;
                    upper
                } else if gamma < lower {
                    clamps += 1;
                    lower
                } else {
                    gamma
                }
            })
            .collect();
        let h2 = schedule.h2;
        let values = self.scaled_sum(samples, kernel, h2, &scales, grid.points())?;
        Ok(EstimateField {
            estimator: EstimatorId::JkhReal,
            grid: grid.clone(),
            values,
            metadata: FieldMetadata {
                n: samples.len(),
                bandwidths: bandwidth_map(&[
                    ("h1", schedule.h1),
                    ("h2", h2),
                    ("h3", h3),
                    ("h4", h4),
                ]),
                kernel: kernel.id(),
                clip: Some(clip.id()),
                clamp_count: clamps,
                ..Default::default()
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn k1() -> RadialKernelSpec {
        RadialKernelSpec::default_profile(1).unwrap()
    }

    fn grid1(points: &[f64]) -> Grid {
        Grid::scattered(1, points.to_vec()).unwrap()
    }

    fn brute(kernel: &RadialKernelSpec, xs: &[f64], t: f64, h: f64, scale: impl Fn(f64) -> f64) -> f64 {
        let mut s = 0.0;
        for &x in xs {
            let a = scale(x);
            let u = (t - x) * a / h;
            s += a * kernel.eval(&[u]);
        }
        s / (xs.len() as f64 * h)
    }

    #[test]
    fn classical_single_point_and_support() {
        let k = k1();
        let s = SampleSet::new(1, vec![0.3]).unwrap();
        let f = Evaluator::default()
            .classical_kde(&s, &k, 0.5, &grid1(&[0.3, 0.3 + 0.5 + 1e-12, 5.0]))
            .unwrap();
        assert_eq!(f.values[0], 35.0 / 32.0 / 0.5);
        assert_eq!(f.values[1], 0.0);
        assert_eq!(f.values[2], 0.0);
    }

    #[test]
    fn classical_three_points_by_hand() {
        let k = k1();
        let xs = [-0.5, 0.25, 0.9];
        let s = SampleSet::new(1, xs.to_vec()).unwrap();
        let v = Evaluator::default()
            .classical_kde(&s, &k, 1.0, &grid1(&[0.0]))
            .unwrap()
            .values[0];
        // (35/32)(1 − x²)³ summed over the three points, divided by n
        let hand = (35.0 / 32.0)
            * ((1.0f64 - 0.25).powi(3) + (1.0f64 - 0.0625).powi(3) + (1.0f64 - 0.81).powi(3))
            / 3.0;
        assert!((v - hand).abs() < 1e-15);
    }

    #[test]
    fn derivative_estimates_examples() {
        let g = FourthOrderKernelSpec::new().unwrap();
        let s = SampleSet::new(1, vec![0.2]).unwrap();
        let (d1, d2) = Evaluator::default()
            .deriv_estimates(&s, &g, 0.5, 0.5, &grid1(&[0.2, 2.0]))
            .unwrap();
        assert_eq!(d1.values[0], 0.0);
        assert_eq!(d1.values[1], 0.0);
        assert_eq!(d2.values[1], 0.0);
        assert!((d2.values[0] - g.d2(0.0) / 0.125).abs() < 1e-12);

        let s2 = SampleSet::new(1, vec![-0.3, 0.4]).unwrap();
        let (d1, d2) = Evaluator::default()
            .deriv_estimates(&s2, &g, 1.0, 1.0, &grid1(&[0.1]))
            .unwrap();
        assert!((d1.values[0] - (g.d1(0.4) + g.d1(-0.3)) / 2.0).abs() < 1e-14);
        assert!((d2.values[0] - (g.d2(0.4) + g.d2(-0.3)) / 2.0).abs() < 1e-14);
        let k2 = SampleSet::new(2, vec![0.0, 0.0]).unwrap();
        assert!(Evaluator::default()
            .deriv_estimates(&k2, &g, 1.0, 1.0, &grid1(&[0.0]))
            .is_err());
    }

    #[test]
    fn abramson_constant_density_is_classical() {
        let k = k1();
        let s = SampleSet::new(1, vec![-0.2, 0.1, 0.35]).unwrap();
        let grid = Grid::linspace(-1.0, 1.0, 41).unwrap();
        let v = 0.25;
        let flat = |_: &[f64]| v;
        let a = Evaluator::default().ideal_abramson(&s, &k, 0.4, &flat, &grid).unwrap();
        let c = Evaluator::default()
            .classical_kde(&s, &k, 0.4 / v.sqrt(), &grid)
            .unwrap();
        for (x, y) in a.values.iter().zip(&c.values) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn abramson_two_points_uses_the_clip_branch() {
        let k = k1();
        let xs = [0.0, 0.6];
        let s = SampleSet::new(1, xs.to_vec()).unwrap();
        // f(t) = 1 at t = 0.3, f(0) = 0.05 < 1/10 so that term uses √0.1
        let f = |t: &[f64]| if t[0] == 0.0 { 0.05 } else if t[0] == 0.6 { 0.5 } else { 1.0 };
        let v = Evaluator::default()
            .ideal_abramson(&s, &k, 0.5, &f, &grid1(&[0.3]))
            .unwrap()
            .values[0];
        let term = |g: f64, x: f64| g * k.eval(&[(0.3 - x) * g / 0.5]);
        let hand = (term(0.1f64.sqrt(), 0.0) + term(0.5f64.sqrt(), 0.6)) / (2.0 * 0.5);
        assert!((v - hand).abs() < 1e-15);
    }

    #[test]
    fn abramson_zero_scale_at_coincident_point() {
        let k = k1();
        let s = SampleSet::new(1, vec![0.0, 1.0]).unwrap();
        let zero = |_: &[f64]| 0.0;
        let err = Evaluator::default()
            .ideal_abramson(&s, &k, 0.5, &zero, &grid1(&[0.0]))
            .unwrap_err();
        assert!(matches!(err, Error::ZeroScale));
        let ok = Evaluator::default()
            .ideal_abramson(&s, &k, 0.5, &zero, &grid1(&[0.5]))
            .unwrap();
        assert_eq!(ok.values[0], 0.0);
    }

    #[test]
    fn hhm_examples() {
        let k = k1();
        let xs = [-0.1, 0.2];
        let s = SampleSet::new(1, xs.to_vec()).unwrap();
        let f = |t: &[f64]| 0.5 + 0.1 * t[0];
        let e = Evaluator::default();
        let wide = e.ideal_hhm(&s, &k, 0.3, 1e6, &f, &grid1(&[0.05])).unwrap();
        let hand = brute(&k, &xs, 0.05, 0.3, |x| (0.5 + 0.1 * x).sqrt());
        assert!((wide.values[0] - hand).abs() < 1e-15);
        let cut = e.ideal_hhm(&s, &k, 0.3, 1.0, &f, &grid1(&[0.55])).unwrap();
        assert_eq!(cut.values[0], 0.0);
    }

    #[test]
    fn mckay_ideal_examples() {
        let xs = [-0.4, 0.3];
        let s = SampleSet::new(1, xs.to_vec()).unwrap();
        let k = k1();
        let clip = ClippingSpec::mckay(0.1).unwrap();
        let f = |t: &[f64]| 0.4 - 0.1 * t[0] * t[0];
        let grid = grid1(&[-0.2, 0.0, 0.45]);
        let m = Evaluator::default().ideal_mckay(&s, &k, 0.3, &clip, &f, &grid).unwrap();
        for (i, &t) in grid.points().iter().enumerate() {
            let hand = brute(&k, &xs, t, 0.3, |x| f(&[x]).sqrt());
            assert!((m.values[i] - hand).abs() < 1e-15);
        }
        // degenerate: c = 1 and f ≡ 0 gives α = 1, the classical estimator
        let c1 = ClippingSpec::mckay(1.0).unwrap();
        let zero = |_: &[f64]| 0.0;
        let m0 = Evaluator::default().ideal_mckay(&s, &k, 0.3, &c1, &zero, &grid).unwrap();
        let cl = Evaluator::default().classical_kde(&s, &k, 0.3, &grid).unwrap();
        assert_eq!(m0.values, cl.values);
    }

    #[test]
    fn mckay_ideal_two_points_in_the_plane() {
        let k = RadialKernelSpec::default_profile(2).unwrap();
        let s = SampleSet::new(2, vec![0.0, 0.1, 0.3, -0.2]).unwrap();
        let clip = ClippingSpec::mckay(0.1).unwrap();
        let f = |t: &[f64]| 0.15 * (-0.5 * (t[0] * t[0] + t[1] * t[1])).exp();
        let t = [0.1, 0.0];
        let v = Evaluator::default()
            .ideal_mckay(&s, &k, 0.4, &clip, &f, &Grid::scattered(2, t.to_vec()).unwrap())
            .unwrap()
            .values[0];
        let mut hand = 0.0;
        for x in s.iter() {
            let a = clip.alpha(f(x)).unwrap();
            let u = [(t[0] - x[0]) * a / 0.4, (t[1] - x[1]) * a / 0.4];
            hand += a * a * k.eval(&u);
        }
        hand /= 2.0 * 0.16;
        assert!((v - hand).abs() < 1e-14);
    }

    #[test]
    fn real_mckay_single_point() {
        let k = k1();
        let clip = ClippingSpec::mckay(0.1).unwrap();
        let s = SampleSet::new(1, vec![0.7]).unwrap();
        let sched = BandwidthSchedule::custom_h4(1, 0.3, 0.5).unwrap();
        let v = Evaluator::default()
            .real_mckay(&s, &k, &sched, &clip, &grid1(&[0.7]))
            .unwrap()
            .values[0];
        let fhat = k.eval(&[0.0]) / 0.3;
        let a = clip.alpha(fhat).unwrap();
        assert!((v - a * k.eval(&[0.0]) / 0.5).abs() < 1e-15);
        let wrong = schedule_for(100, 1, Mode::H6).unwrap();
        assert!(Evaluator::default()
            .real_mckay(&s, &k, &wrong, &clip, &grid1(&[0.7]))
            .is_err());
    }

    #[test]
    fn real_mckay_identical_samples() {
        let k = k1();
        let clip = ClippingSpec::mckay(0.1).unwrap();
        let s = SampleSet::new(1, vec![1.5; 4]).unwrap();
        let fit = Evaluator::default().preliminary_fit(&s, &k, 0.2, None).unwrap();
        for v in &fit.fhat {
            assert!((v - k.eval(&[0.0]) / 0.2).abs() < 1e-14);
        }
        let est = Evaluator::default()
            .real_mckay_from_fit(&s, &k, &fit, 0.4, &clip, &grid1(&[1.5, 1.6]))
            .unwrap();
        assert!(est.values.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    fn gaussian_beta() -> BetaSpec {
        let m = RadialKernelSpec::default_profile(1).unwrap().moments(4).unwrap();
        let acc: Arc<dyn crate::clipping::DerivativeAccessor> = Arc::new(|x: f64| {
            let f = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            Ok([f, -x * f, (x * x - 1.0) * f])
        });
        BetaSpec::from_moments(&m, acc).unwrap()
    }

    #[test]
    fn jkh_ideal_with_vanishing_beta_is_mckay() {
        let k = k1();
        let clip = ClippingSpec::mckay(0.1).unwrap();
        let m = k.moments(4).unwrap();
        // f = 1/(3 + x) satisfies f″f = 2f′²; only pointwise values matter here
        let acc: Arc<dyn crate::clipping::DerivativeAccessor> = Arc::new(|x: f64| {
            let u = 3.0 + x;
            Ok([1.0 / u, -u.powi(-2), 2.0 * u.powi(-3)])
        });
        let beta = BetaSpec::from_moments(&m, acc).unwrap();
        let f = |t: &[f64]| 1.0 / (3.0 + t[0]);
        let s = SampleSet::new(1, vec![-0.5, 0.0, 0.4]).unwrap();
        let grid = Grid::linspace(-1.0, 1.0, 21).unwrap();
        let e = Evaluator::default();
        let j = e.ideal_jkh(&s, &k, 0.3, &clip, &beta, &grid).unwrap();
        let mk = e.ideal_mckay(&s, &k, 0.3, &clip, &f, &grid).unwrap();
        for (a, b) in j.values.iter().zip(&mk.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn jkh_ideal_two_points_and_h_limit() {
        let k = k1();
        let clip = ClippingSpec::mckay(0.1).unwrap();
        let beta = gaussian_beta();
        let xs = [-0.3, 0.5];
        let s = SampleSet::new(1, xs.to_vec()).unwrap();
        let h = 0.2;
        let v = Evaluator::default()
            .ideal_jkh(&s, &k, h, &clip, &beta, &grid1(&[0.1]))
            .unwrap()
            .values[0];
        let hand = brute(&k, &xs, 0.1, h, |x| beta.gamma(&clip, x, h).unwrap());
        assert!((v - hand).abs() < 1e-15);
        assert!(matches!(
            Evaluator::default().ideal_jkh(&s, &k, 10.0, &clip, &beta, &grid1(&[0.1])),
            Err(Error::BandwidthTooLarge { .. })
        ));
    }

    #[test]
    fn jkh_real_without_correction_is_real_mckay() {
        let k = k1();
        let g = FourthOrderKernelSpec::new().unwrap();
        let clip = ClippingSpec::mckay(0.1).unwrap();
        let xs: Vec<f64> = (0..40).map(|i| ((i * 37) % 40) as f64 / 10.0 - 2.0).collect();
        let s = SampleSet::new(1, xs).unwrap();
        let grid = Grid::linspace(-3.0, 3.0, 61).unwrap();
        let h6 = BandwidthSchedule::custom_h6(0.5, 0.6, 0.7, 0.6).unwrap();
        let h4 = BandwidthSchedule::custom_h4(1, 0.5, 0.6).unwrap();
        let e = Evaluator::default();
        let j = e
            .real_jkh_with_correction(&s, &k, &g, &h6, 0.0, &clip, &grid)
            .unwrap();
        let m = e.real_mckay(&s, &k, &h4, &clip, &grid).unwrap();
        assert_eq!(j.values, m.values);
        assert_eq!(j.metadata.clamp_count, 0);
    }

    #[test]
    fn jkh_real_single_point() {
        let k = k1();
        let g = FourthOrderKernelSpec::new().unwrap();
        let clip = ClippingSpec::mckay(0.1).unwrap();
        let s = SampleSet::new(1, vec![0.0]).unwrap();
        let sched = BandwidthSchedule::custom_h6(0.5, 0.4, 0.6, 0.7).unwrap();
        let v = Evaluator::default()
            .real_jkh(&s, &k, &g, &sched, &clip, &grid1(&[0.0]))
            .unwrap();
        let m = k.moments(4).unwrap();
        let fhat = k.eval(&[0.0]) / 0.5;
        let d1 = g.d1(0.0) / 0.36;
        let d2 = g.d2(0.0) / 0.7f64.powi(3);
        let a = clip.alpha(fhat).unwrap();
        let beta = m.tau(4).unwrap() * (d2 * fhat - 2.0 * d1 * d1)
            / (24.0 * m.tau(2).unwrap() * a.powi(6));
        let mut gamma = a / (1.0 + 0.16 * beta);
        gamma = gamma.clamp(0.05, 2.0 * a);
        assert!((v.values[0] - gamma * k.eval(&[0.0]) / 0.4).abs() < 1e-13);
    }
}
