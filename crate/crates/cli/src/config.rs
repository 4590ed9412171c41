//! The TOML experiment file. Every key is optional; missing keys take the
//! values of [`ExperimentConfig::default`].

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use clipkde::bias_oracle::ScaleRule;
use clipkde::clipping::{ClipFunction, ClippingSpec};
use clipkde::estimators::{Engine, EstimatorId, Mode};
use clipkde::experiments::{default_grid, DensityCatalog, DensityModel, ExperimentSetup};
use clipkde::kernels::{FourthOrderKernelSpec, RadialKernelSpec};
use clipkde::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub estimator: String,
    pub density: String,
    pub mode: Mode,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Density floor of the region; must exceed `t0·c²`.
    pub r: f64,
    /// Points per axis; 1024 for `d = 1` and 128 otherwise when absent.
    pub grid_points: Option<usize>,
    pub engine: Engine,
    pub kernel: KernelConfig,
    pub clip: ClipConfig,
    pub estimate: EstimateConfig,
    pub bias: BiasConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Coefficients of the profile polynomial in `u = ‖t‖²/T`.
    pub profile: Vec<f64>,
    /// `T`, the squared support radius.
    pub support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipConfig {
    pub c: f64,
    pub t0: f64,
}

/// Sample for the `estimate` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub n: usize,
    pub replication: usize,
}

/// Bandwidth grid for `bias-scan`; the scale rule follows `estimator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    pub t: Vec<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub h_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Used when neither `--out-dir` nor `CLIPKDE_OUT_DIR` is set.
    pub dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            estimator: "mckay_real".into(),
            density: "gaussian1d".into(),
            mode: Mode::H4,
            n_values: (12..=18).map(|k| 1usize << k).collect(),
            replications: 20,
            seed: 42,
            r: 0.05,
            grid_points: None,
            engine: Engine::Bucketed,
            kernel: KernelConfig::default(),
            clip: ClipConfig::default(),
            estimate: EstimateConfig::default(),
            bias: BiasConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            profile: vec![1.0, -3.0, 3.0, -1.0],
            support: 1.0,
        }
    }
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self { c: 0.1, t0: 2.0 }
    }
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            replication: 0,
        }
    }
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            t: vec![0.3],
            h_min: 0.05,
            h_max: 0.4,
            h_count: 8,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// The config as embedded in outputs: defaults filled in and the output
    /// location dropped, so the same run writes the same bytes anywhere.
    pub fn resolved(&self, catalog: &DensityCatalog) -> Result<Self> {
        let mut out = self.clone();
        let dim = catalog.get(&self.density)?.dim();
        out.grid_points.get_or_insert(if dim == 1 { 1024 } else { 128 });
        out.output = OutputConfig::default();
        Ok(out)
    }

    pub fn estimator_id(&self) -> Result<EstimatorId> {
        EstimatorId::from_str(&self.estimator)
    }

    pub fn density_model(&self, catalog: &DensityCatalog) -> Result<Arc<dyn DensityModel>> {
        catalog.get(&self.density)
    }

    pub fn clip_spec(&self) -> Result<ClippingSpec> {
        ClippingSpec::new(self.clip.c, self.clip.t0, ClipFunction::McKayQuintic)
    }

    pub fn kernel_spec(&self, dim: usize) -> Result<RadialKernelSpec> {
        RadialKernelSpec::polynomial(self.kernel.profile.clone(), self.kernel.support, dim)
    }

    /// Mode required by the estimator, checked against `mode`.
    pub fn check_mode(&self) -> Result<()> {
        let id = self.estimator_id()?;
        let wanted = match id {
            EstimatorId::JkhIdeal | EstimatorId::JkhReal => Some(Mode::H6),
            EstimatorId::Classical | EstimatorId::Deriv1 | EstimatorId::Deriv2 => None,
            _ => Some(Mode::H4),
        };
        match wanted {
            Some(m) if m != self.mode => Err(Error::Unsupported(format!(
                "{id} runs with mode {m}, config says {}",
                self.mode
            ))),
            _ => Ok(()),
        }
    }

    pub fn setup(&self, density: &dyn DensityModel) -> Result<ExperimentSetup> {
        let d = density.dim();
        let points = self
            .grid_points
            .unwrap_or(if d == 1 { 1024 } else { 128 });
        Ok(ExperimentSetup {
            kernel: self.kernel_spec(d)?,
            fourth: FourthOrderKernelSpec::new()?,
            clip: self.clip_spec()?,
            r: self.r,
            grid: default_grid(density, self.r, points)?,
            engine: self.engine,
            check_integral: true,
            integral_tol: if d == 1 { 1e-6 } else { 1e-4 },
        })
    }

    /// Scale rule for `bias-scan`.
    pub fn scale_rule(&self, kernel: &RadialKernelSpec) -> Result<ScaleRule> {
        match self.estimator_id()? {
            EstimatorId::Classical => Ok(ScaleRule::Constant(1.0)),
            EstimatorId::MckayIdeal | EstimatorId::MckayReal => Ok(ScaleRule::McKay(self.clip_spec()?)),
            EstimatorId::JkhIdeal | EstimatorId::JkhReal => {
                ScaleRule::jkh(self.clip_spec()?, &kernel.moments(4)?)
            }
            other => Err(Error::Unsupported(format!("bias-scan has no scale rule for {other}"))),
        }
    }

    /// Everything that can be checked without running an experiment.
    pub fn validate(&self, catalog: &DensityCatalog) -> Result<()> {
        let density = self.density_model(catalog)?;
        self.estimator_id()?;
        self.check_mode()?;
        if self.mode == Mode::H6 && density.dim() != 1 {
            return Err(Error::Unsupported(format!(
                "mode h6 needs d = 1, density {} has d = {}",
                self.density,
                density.dim()
            )));
        }
        let clip = self.clip_spec()?;
        if !(self.r > clip.threshold()) {
            return Err(Error::InvalidRegion(format!(
                "r = {} must exceed t0·c² = {}",
                self.r,
                clip.threshold()
            )));
        }
        self.kernel_spec(density.dim())?;
        if self.n_values.len() < 3 || self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "n_values must hold at least three increasing sizes".into(),
            ));
        }
        if self.replications == 0 || self.estimate.n == 0 {
            return Err(Error::InvalidArgument(
                "replications and estimate.n must be positive".into(),
            ));
        }
        let b = &self.bias;
        if !(b.h_min > 0.0 && b.h_min < b.h_max) || b.h_count < 3 || b.t.is_empty() {
            return Err(Error::InvalidArgument(
                "bias needs 0 < h_min < h_max, h_count ≥ 3 and at least one t".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml("seed = 7\n[clip]\nc = 0.15\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.clip.c, 0.15);
        assert_eq!(c.clip.t0, 2.0);
        assert_eq!(c.density, "gaussian1d");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("sede = 7\n").is_err());
    }

    #[test]
    fn awkward_floats_round_trip() {
        let mut c = ExperimentConfig::default();
        c.r = 0.1 + 0.2;
        c.clip.c = 1.0 / 3.0;
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back.r.to_bits(), c.r.to_bits());
        assert_eq!(back.clip.c.to_bits(), c.clip.c.to_bits());
    }

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default()
            .validate(&DensityCatalog::with_builtins())
            .unwrap();
    }

    #[test]
    fn region_floor_checked() {
        let mut c = ExperimentConfig::default();
        c.r = 0.01;
        assert!(matches!(
            c.validate(&DensityCatalog::with_builtins()),
            Err(Error::InvalidRegion(_))
        ));
    }
}
