use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use clipkde::bias_oracle::{fit_bias_order, log_spaced, BiasFit, BiasOptions};
use clipkde::clipping::BetaSpec;
use clipkde::estimators::{schedule_for, EstimateField, EstimatorId, Evaluator, Mode};
use clipkde::experiments::{
    check_density, draw, gap_experiment, rate_experiment, AnalyticDerivatives, DensityCatalog,
    RateReport,
};
use clipkde::kernels::{FourthOrderKernelSpec, RadialKernelSpec};
use clipkde::quadrature::{integrate, integrate_box, QuadOptions};
use clipkde::{Error, Result};

use crate::config::ExperimentConfig;
use crate::output::{Artifact, Provenance, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Parse(format!("unknown format `{s}`"))),
        }
    }
}

/// Subcommands that write files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Producer {
    Estimate,
    Rates,
    Gap,
    BiasScan,
}

impl Producer {
    pub fn name(self) -> &'static str {
        match self {
            Producer::Estimate => "estimate",
            Producer::Rates => "rates",
            Producer::Gap => "gap",
            Producer::BiasScan => "bias-scan",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        [Self::Estimate, Self::Rates, Self::Gap, Self::BiasScan]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("`{s}` does not produce output files")))
    }
}

/// Runs a producing subcommand and returns its files. `config` must already
/// be resolved.
pub fn produce(
    what: Producer,
    config: &ExperimentConfig,
    format: Format,
    catalog: &DensityCatalog,
) -> Result<Vec<Artifact>> {
    config.validate(catalog)?;
    let prov = Provenance {
        version: VERSION.into(),
        command: what.name().into(),
        format: format.to_string(),
        config: config.to_toml(),
    };
    match what {
        Producer::Estimate => {
            let field = estimate(config, catalog)?;
            Ok(vec![match format {
                Format::Csv => Artifact::text("estimate.csv", &prov, &field.to_csv()),
                Format::Json => Artifact::json("estimate.json", &prov, field.to_json()),
            }])
        }
        Producer::Rates | Producer::Gap => {
            let density = config.density_model(catalog)?;
            let setup = config.setup(density.as_ref())?;
            let report = if what == Producer::Rates {
                rate_experiment(
                    &setup,
                    config.estimator_id()?,
                    density,
                    &config.n_values,
                    config.replications,
                    config.seed,
                    config.mode,
                )?
            } else {
                gap_experiment(&setup, density, &config.n_values, config.replications, config.seed)?
            };
            Ok(report_artifacts(what.name(), &prov, format, &report))
        }
        Producer::BiasScan => {
            let fits = bias_scan(config, catalog)?;
            Ok(vec![match format {
                Format::Csv => Artifact::text("bias-scan.csv", &prov, &bias_csv(&fits)),
                Format::Json => Artifact::json(
                    "bias-scan.json",
                    &prov,
                    serde_json::to_value(&fits)?,
                ),
            }])
        }
    }
}

fn report_artifacts(stem: &str, prov: &Provenance, format: Format, r: &RateReport) -> Vec<Artifact> {
    let plot = Artifact::text(format!("{stem}.plot.dat"), prov, &r.plot_data());
    match format {
        Format::Csv => vec![
            Artifact::text(format!("{stem}.raw.csv"), prov, &r.raw_csv()),
            Artifact::text(format!("{stem}.summary.csv"), prov, &r.summary_csv()),
            plot,
        ],
        Format::Json => vec![Artifact::json(format!("{stem}.json"), prov, r.to_json()), plot],
    }
}

pub fn estimate(config: &ExperimentConfig, catalog: &DensityCatalog) -> Result<EstimateField> {
    let density = config.density_model(catalog)?;
    let setup = config.setup(density.as_ref())?;
    let d = density.dim();
    let n = config.estimate.n;
    let samples = draw(density.as_ref(), n, config.seed, config.estimate.replication)?;
    let eval = Evaluator::new(setup.engine);
    let (k, clip, grid) = (&setup.kernel, &setup.clip, &setup.grid);
    let f = |t: &[f64]| density.pdf(t);
    let h4 = schedule_for(n, d, Mode::H4)?;
    let h6 = || schedule_for(n, d, Mode::H6);
    let field = match config.estimator_id()? {
        EstimatorId::Classical => eval.classical_kde(&samples, k, h4.h1, grid)?,
        EstimatorId::AbramsonIdeal => eval.ideal_abramson(&samples, k, h4.h2, &f, grid)?,
        EstimatorId::HhmIdeal => {
            let b = k.support_radius() / clip.c();
            eval.ideal_hhm(&samples, k, h4.h2, b, &f, grid)?
        }
        EstimatorId::MckayIdeal => eval.ideal_mckay(&samples, k, h4.h2, clip, &f, grid)?,
        EstimatorId::MckayReal => eval.real_mckay(&samples, k, &h4, clip, grid)?,
        EstimatorId::JkhIdeal => {
            let beta = BetaSpec::from_moments(
                &k.moments(4)?,
                Arc::new(AnalyticDerivatives(density.clone())),
            )?;
            eval.ideal_jkh(&samples, k, h6()?.h2, clip, &beta, grid)?
        }
        EstimatorId::JkhReal => eval.real_jkh(&samples, k, &setup.fourth, &h6()?, clip, grid)?,
        id @ (EstimatorId::Deriv1 | EstimatorId::Deriv2) => {
            let s = h6()?;
            let (h3, h4) = (s.h3.expect("h6 schedule"), s.h4.expect("h6 schedule"));
            let (d1, d2) = eval.deriv_estimates(&samples, &setup.fourth, h3, h4, grid)?;
            if id == EstimatorId::Deriv1 {
                d1
            } else {
                d2
            }
        }
    };
    Ok(field.with_seed(config.seed))
}

/// One fit per configured `t`; for `d ≥ 2` each `t` is the point `(t, 0, ..)`.
pub fn bias_scan(config: &ExperimentConfig, catalog: &DensityCatalog) -> Result<Vec<BiasFit>> {
    let density = config.density_model(catalog)?;
    let kernel = config.kernel_spec(density.dim())?;
    let rule = config.scale_rule(&kernel)?;
    let b = &config.bias;
    let h = log_spaced(b.h_min, b.h_max, b.h_count);
    b.t.iter()
        .map(|&t| {
            let mut point = vec![0.0; density.dim()];
            point[0] = t;
            fit_bias_order(density.as_ref(), &kernel, &rule, &point, &h, BiasOptions::default())
        })
        .collect()
}

pub fn bias_csv(fits: &[BiasFit]) -> String {
    let mut out = String::from("t,h,bias,slope\n");
    for fit in fits {
        for p in &fit.points {
            out.push_str(&format!("{:?},{:?},{:?},{:?}\n", fit.t[0], p.h, p.bias, fit.slope));
        }
    }
    out
}

/// `τ_r` for `r = 0, 2, 4, 6`, twelve decimals.
pub fn moments_table(kernel: &RadialKernelSpec) -> Result<String> {
    let m = kernel.moments(6)?;
    let mut out = format!("kernel {} (d = {})\n", kernel.id(), kernel.dim());
    for r in [0, 2, 4, 6] {
        out.push_str(&format!("tau_{r} = {:.12}\n", m.tau(r).expect("order 6 table")));
    }
    Ok(out)
}

pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, r: Result<String>) -> Check {
    match r {
        Ok(detail) => Check {
            name: name.into(),
            passed: true,
            detail,
        },
        Err(e) => Check {
            name: name.into(),
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn gate(ok: bool, detail: String) -> Result<String> {
    if ok {
        Ok(detail)
    } else {
        Err(Error::InvalidArgument(detail))
    }
}

/// Registration, kernel and config checks.
pub fn validation_checks(config: &ExperimentConfig, catalog: &DensityCatalog) -> Vec<Check> {
    let mut out = Vec::new();
    for id in catalog.ids() {
        out.push(check(
            format!("density {id}"),
            catalog
                .get(id)
                .and_then(|m| check_density(m.as_ref()))
                .map(|_| "normalized, derivatives consistent".into()),
        ));
    }
    for d in 1..=2 {
        out.push(check(format!("kernel mass d={d}"), kernel_mass(config, d)));
    }
    out.push(check("fourth-order kernel moments", fourth_order_moments()));
    out.push(check(
        "clipping smoothness",
        config.clip_spec().map(|c| format!("{} passes the smoothness gate", c.id())),
    ));
    out.push(check(
        "config",
        config.validate(catalog).map(|_| "ids resolve, r above t0·c², schedules match".into()),
    ));
    out
}

fn kernel_mass(config: &ExperimentConfig, d: usize) -> Result<String> {
    let k = config.kernel_spec(d)?;
    let r = k.support_radius();
    let mass = if d == 1 {
        integrate(|x| k.eval(&[x]), -r, r, QuadOptions::absolute(1e-12))?.value
    } else {
        let mut f = |t: &[f64]| Ok(k.eval(t));
        integrate_box(&mut f, &vec![-r; d], &vec![r; d], QuadOptions::absolute(1e-10))?.value
    };
    gate((mass - 1.0).abs() <= 1e-8, format!("∫K = {mass:.12}"))
}

fn fourth_order_moments() -> Result<String> {
    let g = FourthOrderKernelSpec::new()?;
    let m: Vec<f64> = (0..=4).map(|j| g.moment(j)).collect::<Result<_>>()?;
    gate(
        (m[0] - 1.0).abs() <= 1e-8 && m[1..4].iter().all(|v| v.abs() <= 1e-8) && m[4].abs() > 1e-3,
        format!("∫G = {:.12}, ∫z⁴G = {:.6}", m[0], m[4]),
    )
}

pub fn checks_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for c in checks {
        let pad = width - c.name.chars().count();
        out.push_str(&format!(
            "{}{}  {}  {}\n",
            c.name,
            " ".repeat(pad),
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        ));
    }
    out
}
