use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, OrderStatistics};

use super::density::{AnalyticDerivatives, DensityModel};
use super::region::{default_grid, estimated_region, oracle_region, sup_error};
use crate::bias_oracle::least_squares;
use crate::clipping::{BetaSpec, ClippingSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    ideal_real_gap, schedule_for, Engine, EstimatorId, Evaluator, Grid, Mode, PreliminaryFit,
    SampleSet,
};
use crate::hexfloat;
use crate::kernels::{FourthOrderKernelSpec, RadialKernelSpec};

/// Everything a Monte Carlo run needs besides the density and the seeds.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub kernel: RadialKernelSpec,
    pub fourth: FourthOrderKernelSpec,
    pub clip: ClippingSpec,
    /// Density floor of the region.
    pub r: f64,
    /// Evaluation grid shared by all replications.
    pub grid: Grid,
    pub engine: Engine,
    /// Re-check `∫ = 1` of every real estimate on a padded grid.
    pub check_integral: bool,
    pub integral_tol: f64,
}

impl ExperimentSetup {
    /// `c = 0.1`, `t0 = 2` (so `t0·c² = 0.02`), `r = 0.05`, 1024 grid points
    /// for `d = 1` and 128 × 128 for `d = 2`.
    pub fn default_for(density: &dyn DensityModel) -> Result<Self> {
        let d = density.dim();
        let kernel = RadialKernelSpec::default_profile(d)?;
        let clip = ClippingSpec::mckay(0.1)?;
        let r = 0.05;
        let points = if d == 1 { 1024 } else { 128 };
        Ok(Self {
            kernel,
            fourth: FourthOrderKernelSpec::new()?,
            clip,
            r,
            grid: default_grid(density, r, points)?,
            engine: Engine::Bucketed,
            check_integral: true,
            integral_tol: if d == 1 { 1e-6 } else { 1e-4 },
        })
    }
}

/// What each replication measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Sup error over the oracle region.
    SupError(EstimatorId),
    /// Sup over the whole grid of `|real − ideal|` for the McKay pair.
    Gap,
}

impl Metric {
    pub fn label(&self) -> String {
        match self {
            Metric::SupError(e) => e.to_string(),
            Metric::Gap => "gap_mckay".into(),
        }
    }

    /// Exponent of `(log n)/n` predicted by the theory.
    pub fn target_slope(&self, dim: usize) -> f64 {
        let d = dim as f64;
        match self {
            Metric::SupError(EstimatorId::Classical) => 2.0 / (4.0 + d),
            Metric::SupError(EstimatorId::JkhReal | EstimatorId::JkhIdeal) => 6.0 / 13.0,
            _ => 4.0 / (8.0 + d),
        }
    }

    fn mode(&self) -> Mode {
        match self {
            Metric::SupError(EstimatorId::JkhReal | EstimatorId::JkhIdeal) => Mode::H6,
            _ => Mode::H4,
        }
    }
}

/// Per-`n` errors over replications with a log–log rate fit.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub metric: String,
    pub density: String,
    pub mode: Mode,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// `errors[i][rep]` for `n_values[i]`.
    pub errors: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    /// Slope of `log(median)` against `log((log n)/n)`.
    pub slope: f64,
    pub intercept: f64,
    /// 95% half-width of the slope.
    pub slope_half_width: f64,
    pub target_slope: f64,
    /// Clamped corrected scales summed over all runs (`jkh_real`).
    pub clamp_events: usize,
    /// Largest `|∫ f̂ − 1|` seen, when checked.
    pub max_integral_deviation: Option<f64>,
}

/// `log((log n)/n)`, the regressor of the rate fit.
pub fn log_rate(n: usize) -> f64 {
    let n = n as f64;
    (n.ln() / n).ln()
}

impl RateReport {
    fn from_errors(
        metric: &Metric,
        density: &dyn DensityModel,
        n_values: &[usize],
        seed: u64,
        errors: Vec<Vec<f64>>,
        clamp_events: usize,
        max_integral_deviation: Option<f64>,
    ) -> Result<Self> {
        let quantile = |v: &[f64], q: f64| Data::new(v.to_vec()).quantile(q);
        let medians: Vec<f64> = errors.iter().map(|e| quantile(e, 0.5)).collect();
        let q25 = errors.iter().map(|e| quantile(e, 0.25)).collect();
        let q75 = errors.iter().map(|e| quantile(e, 0.75)).collect();
        let xy: Vec<(f64, f64)> = n_values
            .iter()
            .zip(&medians)
            .map(|(&n, &m)| (log_rate(n), m.ln()))
            .collect();
        let (slope, intercept) = least_squares(&xy);
        let half_width = slope_half_width(&xy, slope, intercept);
        Ok(Self {
            metric: metric.label(),
            density: density.id().to_string(),
            mode: metric.mode(),
            n_values: n_values.to_vec(),
            replications: errors.first().map_or(0, Vec::len),
            seed,
            errors,
            medians,
            q25,
            q75,
            slope,
            intercept,
            slope_half_width: half_width,
            target_slope: metric.target_slope(density.dim()),
            clamp_events,
            max_integral_deviation,
        })
    }

    /// JSON with hex twins for the fitted numbers and the raw errors.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        let obj = v.as_object_mut().expect("struct serializes to an object");
        obj.insert("slope_hex".into(), hexfloat::format(self.slope).into());
        obj.insert("intercept_hex".into(), hexfloat::format(self.intercept).into());
        obj.insert("medians_hex".into(), hexfloat::format_all(&self.medians).into());
        obj.insert(
            "errors_hex".into(),
            self.errors
                .iter()
                .map(|e| hexfloat::format_all(e))
                .collect::<Vec<_>>()
                .into(),
        );
        v
    }

    /// `n,replication,error` rows.
    pub fn raw_csv(&self) -> String {
        let mut out = String::from("n,replication,error\n");
        for (n, errs) in self.n_values.iter().zip(&self.errors) {
            for (rep, e) in errs.iter().enumerate() {
                out.push_str(&format!("{n},{rep},{e:?}\n"));
            }
        }
        out
    }

    /// One row per `n`, with the fit constants repeated on every row.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "n,log_rate,median,q25,q75,fitted,slope,intercept,slope_half_width,target_slope\n",
        );
        for (i, &n) in self.n_values.iter().enumerate() {
            let x = log_rate(n);
            out.push_str(&format!(
                "{n},{x:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                self.medians[i],
                self.q25[i],
                self.q75[i],
                (self.intercept + self.slope * x).exp(),
                self.slope,
                self.intercept,
                self.slope_half_width,
                self.target_slope
            ));
        }
        out
    }

    /// Whitespace-separated columns for gnuplot:
    /// `log((log n)/n)`, `log median`, fitted line.
    pub fn plot_data(&self) -> String {
        let mut out = format!(
            "# {} on {}: slope {:.4} ± {:.4} (target {:.4})\n# log_rate log_median fitted\n",
            self.metric, self.density, self.slope, self.slope_half_width, self.target_slope
        );
        for (i, &n) in self.n_values.iter().enumerate() {
            let x = log_rate(n);
            out.push_str(&format!(
                "{x:.12e} {:.12e} {:.12e}\n",
                self.medians[i].ln(),
                self.intercept + self.slope * x
            ));
        }
        out
    }

    /// Share of adjacent `n` pairs whose medians do not increase.
    pub fn nonincreasing_fraction(&self) -> f64 {
        let pairs = self.medians.windows(2);
        let total = pairs.len();
        if total == 0 {
            return 1.0;
        }
        self.medians.windows(2).filter(|w| w[1] <= w[0]).count() as f64 / total as f64
    }
}

fn slope_half_width(xy: &[(f64, f64)], slope: f64, intercept: f64) -> f64 {
    let m = xy.len();
    if m < 3 {
        return f64::NAN;
    }
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sse: f64 = xy
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let se = (sse / (m - 2) as f64 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, (m - 2) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    t * se
}

/// Stream `replication` of the master seed. A replication always draws the
/// same sequence, so its sample for `2n` extends its sample for `n`.
pub fn replication_rng(seed: u64, replication: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

/// The sample of replication `rep`.
pub fn draw(density: &dyn DensityModel, n: usize, seed: u64, rep: usize) -> Result<SampleSet> {
    let mut rng = replication_rng(seed, rep);
    let mut points = Vec::with_capacity(n * density.dim());
    density.sample_into(n, &mut rng, &mut points);
    SampleSet::new(density.dim(), points)
}

fn check_inputs(n_values: &[usize], replications: usize) -> Result<()> {
    if n_values.len() < 3 || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "need at least three increasing sample sizes".into(),
        ));
    }
    if replications == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    Ok(())
}

struct Outcome {
    values: Vec<f64>,
    clamps: usize,
    integral_deviation: Option<f64>,
}

/// Tensor grid fine enough to integrate an estimate whose terms have
/// bandwidth `h` and scales in `[min_scale, max_scale]`: padded by the widest
/// support, with about 60 (`d = 1`) or 12 (`d ≥ 2`) points across the
/// narrowest one.
pub fn integration_grid(
    samples: &SampleSet,
    kernel: &RadialKernelSpec,
    h: f64,
    min_scale: f64,
    max_scale: f64,
) -> Result<Grid> {
    let root_t = kernel.support_radius();
    let per_width = if samples.dim() == 1 { 60.0 } else { 12.0 };
    Grid::padded(samples, h * root_t / min_scale, h * root_t / max_scale / per_width)
}

/// `|∫ − 1|` of the real McKay estimate on an [`integration_grid`].
fn integral_deviation(
    eval: &Evaluator,
    setup: &ExperimentSetup,
    samples: &SampleSet,
    fit: &PreliminaryFit,
    scales: &[f64],
    h2: f64,
) -> Result<f64> {
    let (lo, hi) = scales
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let grid = integration_grid(samples, &setup.kernel, h2, lo, hi)?;
    let field = eval.real_mckay_from_fit(samples, &setup.kernel, fit, h2, &setup.clip, &grid)?;
    Ok((field.integral()? - 1.0).abs())
}

/// One replication for every metric.
fn replicate(
    setup: &ExperimentSetup,
    density: &Arc<dyn DensityModel>,
    metrics: &[Metric],
    n: usize,
    seed: u64,
    rep: usize,
) -> Result<Outcome> {
    let eval = Evaluator::new(setup.engine);
    let samples = draw(density.as_ref(), n, seed, rep)?;
    let d = density.dim();
    let region = oracle_region(density.as_ref(), setup.r, &setup.clip, &setup.grid)?;
    let f = |t: &[f64]| density.pdf(t);
    let h4 = schedule_for(n, d, Mode::H4)?;
    let needs_fit = metrics
        .iter()
        .any(|m| matches!(m, Metric::Gap | Metric::SupError(EstimatorId::MckayReal)));
    let fit = if needs_fit {
        Some(eval.preliminary_fit(&samples, &setup.kernel, h4.h1, None)?)
    } else {
        None
    };
    let mckay_fit = || fit.as_ref().expect("fit computed for McKay metrics");
    let mut out = Outcome {
        values: Vec::with_capacity(metrics.len()),
        clamps: 0,
        integral_deviation: None,
    };
    let mut deviation: Option<f64> = None;
    for metric in metrics {
        let value = match metric {
            Metric::Gap => {
                let fit = mckay_fit();
                let real = eval.real_mckay_from_fit(
                    &samples,
                    &setup.kernel,
                    fit,
                    h4.h2,
                    &setup.clip,
                    &setup.grid,
                )?;
                let ideal =
                    eval.ideal_mckay(&samples, &setup.kernel, h4.h2, &setup.clip, &f, &setup.grid)?;
                ideal_real_gap(&ideal, &real)?
            }
            Metric::SupError(id) => {
                let field = match id {
                    EstimatorId::Classical => {
                        eval.classical_kde(&samples, &setup.kernel, h4.h1, &setup.grid)?
                    }
                    EstimatorId::MckayIdeal => eval.ideal_mckay(
                        &samples,
                        &setup.kernel,
                        h4.h2,
                        &setup.clip,
                        &f,
                        &setup.grid,
                    )?,
                    EstimatorId::MckayReal => {
                        let fit = mckay_fit();
                        if setup.check_integral {
                            let scales = fit
                                .fhat
                                .iter()
                                .map(|&v| setup.clip.alpha(v))
                                .collect::<Result<Vec<_>>>()?;
                            let dev = integral_deviation(&eval, setup, &samples, fit, &scales, h4.h2)?;
                            if dev > setup.integral_tol {
                                return Err(Error::IntegralCheck {
                                    n,
                                    deviation: dev,
                                    tolerance: setup.integral_tol,
                                });
                            }
                            deviation = Some(deviation.map_or(dev, |d: f64| d.max(dev)));
                        }
                        eval.real_mckay_from_fit(
                            &samples,
                            &setup.kernel,
                            fit,
                            h4.h2,
                            &setup.clip,
                            &setup.grid,
                        )?
                    }
                    EstimatorId::JkhIdeal => {
                        let h6 = schedule_for(n, d, Mode::H6)?;
                        let beta = BetaSpec::from_moments(
                            &setup.kernel.moments(4)?,
                            Arc::new(AnalyticDerivatives(density.clone())),
                        )?;
                        eval.ideal_jkh(&samples, &setup.kernel, h6.h2, &setup.clip, &beta, &setup.grid)?
                    }
                    EstimatorId::JkhReal => {
                        let h6 = schedule_for(n, d, Mode::H6)?;
                        let field = eval.real_jkh(
                            &samples,
                            &setup.kernel,
                            &setup.fourth,
                            &h6,
                            &setup.clip,
                            &setup.grid,
                        )?;
                        out.clamps += field.metadata.clamp_count;
                        field
                    }
                    other => {
                        return Err(Error::Unsupported(format!(
                            "rate experiments do not cover {other}"
                        )))
                    }
                };
                sup_error(&field, density.as_ref(), &region)?
            }
        };
        out.values.push(value);
    }
    out.integral_deviation = deviation;
    Ok(out)
}

/// Runs every metric on the same samples; one report per metric.
pub fn run_metrics(
    setup: &ExperimentSetup,
    density: Arc<dyn DensityModel>,
    metrics: &[Metric],
    n_values: &[usize],
    replications: usize,
    seed: u64,
) -> Result<Vec<RateReport>> {
    check_inputs(n_values, replications)?;
    if setup.grid.dim() != density.dim() || setup.kernel.dim() != density.dim() {
        return Err(Error::DimensionMismatch {
            expected: density.dim(),
            found: setup.grid.dim(),
        });
    }
    let jobs: Vec<(usize, usize)> = (0..n_values.len())
        .flat_map(|i| (0..replications).map(move |rep| (i, rep)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(i, rep)| replicate(setup, &density, metrics, n_values[i], seed, rep))
        .collect::<Result<Vec<_>>>()?;
    metrics
        .iter()
        .enumerate()
        .map(|(k, metric)| {
            let errors: Vec<Vec<f64>> = (0..n_values.len())
                .map(|i| {
                    (0..replications)
                        .map(|rep| outcomes[i * replications + rep].values[k])
                        .collect()
                })
                .collect();
            let clamps = match metric {
                Metric::SupError(EstimatorId::JkhReal) => outcomes.iter().map(|o| o.clamps).sum(),
                _ => 0,
            };
            let deviation = match metric {
                Metric::SupError(EstimatorId::MckayReal) => outcomes
                    .iter()
                    .filter_map(|o| o.integral_deviation)
                    .reduce(f64::max),
                _ => None,
            };
            RateReport::from_errors(metric, density.as_ref(), n_values, seed, errors, clamps, deviation)
        })
        .collect()
}

/// Sup-norm error rate of one estimator. `mode` must match the estimator:
/// `h6` for the sixth-order pair, `h4` otherwise (the classical estimator
/// accepts either and always uses `h1 = ((log n)/n)^{1/(4+d)}`).
pub fn rate_experiment(
    setup: &ExperimentSetup,
    estimator: EstimatorId,
    density: Arc<dyn DensityModel>,
    n_values: &[usize],
    replications: usize,
    seed: u64,
    mode: Mode,
) -> Result<RateReport> {
    let metric = Metric::SupError(estimator);
    if estimator != EstimatorId::Classical && metric.mode() != mode {
        return Err(Error::Unsupported(format!(
            "{estimator} runs with the {} schedule, not {mode}",
            metric.mode()
        )));
    }
    if mode == Mode::H6 && density.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "the h6 schedule is defined for d = 1, got d = {}",
            density.dim()
        )));
    }
    let mut reports = run_metrics(setup, density, &[metric], n_values, replications, seed)?;
    Ok(reports.remove(0))
}

/// Sup over the grid of `|real − ideal|` for the McKay estimators.
pub fn gap_experiment(
    setup: &ExperimentSetup,
    density: Arc<dyn DensityModel>,
    n_values: &[usize],
    replications: usize,
    seed: u64,
) -> Result<RateReport> {
    let mut reports = run_metrics(setup, density, &[Metric::Gap], n_values, replications, seed)?;
    Ok(reports.remove(0))
}

/// Estimated-region containment at one sample size: for each replication,
/// whether `{f̂(·; h1) > 2r}` lies inside `{f > r}` on the setup grid.
pub fn containment_experiment(
    setup: &ExperimentSetup,
    density: Arc<dyn DensityModel>,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<Vec<bool>> {
    let oracle = oracle_region(density.as_ref(), setup.r, &setup.clip, &setup.grid)?;
    let eval = Evaluator::new(setup.engine);
    let h1 = schedule_for(n, density.dim(), Mode::H4)?.h1;
    (0..replications)
        .into_par_iter()
        .map(|rep| {
            let samples = draw(density.as_ref(), n, seed, rep)?;
            let fhat = eval.classical_kde(&samples, &setup.kernel, h1, &setup.grid)?;
            estimated_region(&fhat, setup.r, &setup.clip)?.is_subset_of(&oracle)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::GaussianMixture;

    fn gaussian() -> Arc<dyn DensityModel> {
        Arc::new(GaussianMixture::standard(1))
    }

    fn small_setup(density: &dyn DensityModel) -> ExperimentSetup {
        let mut setup = ExperimentSetup::default_for(density).unwrap();
        setup.grid = default_grid(density, setup.r, 128).unwrap();
        setup
    }

    #[test]
    fn replication_streams_are_prefix_stable_and_distinct() {
        let g = gaussian();
        let short = draw(g.as_ref(), 50, 7, 3).unwrap();
        let long = draw(g.as_ref(), 100, 7, 3).unwrap();
        let other = draw(g.as_ref(), 50, 7, 4).unwrap();
        // Samples are sorted on ingestion, so compare as sets.
        let long_pts = long.points();
        assert!(short.points().iter().all(|x| long_pts.contains(x)));
        assert_ne!(short.points(), other.points());
    }

    #[test]
    fn report_shapes_and_outputs() {
        let g = gaussian();
        let setup = small_setup(g.as_ref());
        let n = [200, 400, 800];
        let rep = rate_experiment(&setup, EstimatorId::Classical, g, &n, 3, 1, Mode::H4).unwrap();
        assert_eq!(rep.errors.len(), 3);
        assert!(rep.errors.iter().all(|e| e.len() == 3));
        assert!((rep.target_slope - 0.4).abs() < 1e-15);
        assert_eq!(rep.raw_csv().lines().count(), 1 + 9);
        assert!(rep.summary_csv().starts_with("n,log_rate,median"));
        assert_eq!(rep.plot_data().lines().count(), 2 + 3);
        let json = rep.to_json();
        let hex = json["slope_hex"].as_str().unwrap();
        assert_eq!(hexfloat::parse(hex).unwrap(), rep.slope);
    }

    #[test]
    fn mckay_real_passes_integral_check() {
        let g = gaussian();
        let setup = small_setup(g.as_ref());
        let reps = run_metrics(
            &setup,
            g,
            &[Metric::SupError(EstimatorId::MckayReal), Metric::Gap],
            &[256, 512, 1024],
            2,
            5,
        )
        .unwrap();
        let dev = reps[0].max_integral_deviation.unwrap();
        assert!(dev < 1e-6, "{dev}");
        assert!(reps[1].max_integral_deviation.is_none());
        assert!(reps[1].medians.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn mode_must_match_estimator() {
        let g = gaussian();
        let setup = small_setup(g.as_ref());
        let err = rate_experiment(&setup, EstimatorId::JkhReal, g, &[10, 20, 40], 1, 0, Mode::H4);
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn too_few_sizes_rejected() {
        let g = gaussian();
        let setup = small_setup(g.as_ref());
        assert!(gap_experiment(&setup, g, &[100, 200], 2, 0).is_err());
    }

    #[test]
    fn half_width_of_exact_line_is_zero() {
        let xy: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let (s, b) = least_squares(&xy);
        assert!(slope_half_width(&xy, s, b).abs() < 1e-12);
    }
}
