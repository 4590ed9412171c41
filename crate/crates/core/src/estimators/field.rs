use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sample::Grid;
use crate::error::{Error, Result};
use crate::hexfloat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Classical,
    AbramsonIdeal,
    HhmIdeal,
    MckayIdeal,
    MckayReal,
    JkhIdeal,
    JkhReal,
    Deriv1,
    Deriv2,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 9] = [
        Self::Classical,
        Self::AbramsonIdeal,
        Self::HhmIdeal,
        Self::MckayIdeal,
        Self::MckayReal,
        Self::JkhIdeal,
        Self::JkhReal,
        Self::Deriv1,
        Self::Deriv2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Classical => "classical",
            Self::AbramsonIdeal => "abramson_ideal",
            Self::HhmIdeal => "hhm_ideal",
            Self::MckayIdeal => "mckay_ideal",
            Self::MckayReal => "mckay_real",
            Self::JkhIdeal => "jkh_ideal",
            Self::JkhReal => "jkh_real",
            Self::Deriv1 => "deriv1",
            Self::Deriv2 => "deriv2",
        }
    }

    /// Estimators whose output is itself a probability density.
    pub fn is_density(self) -> bool {
        !matches!(self, Self::Deriv1 | Self::Deriv2 | Self::HhmIdeal)
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::UnknownId {
                kind: "estimator",
                id: s.to_string(),
            })
    }
}

/// Provenance attached to every field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMetadata {
    pub n: usize,
    pub bandwidths: BTreeMap<String, f64>,
    pub kernel: String,
    #[serde(default)]
    pub clip: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Samples whose corrected scale had to be clamped (`jkh_real` only).
    #[serde(default)]
    pub clamp_count: usize,
}

/// Estimator values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateField {
    pub estimator: EstimatorId,
    pub grid: Grid,
    pub values: Vec<f64>,
    pub metadata: FieldMetadata,
}

#[derive(Serialize, Deserialize)]
struct Wire {
    estimator: EstimatorId,
    dim: usize,
    points: Vec<f64>,
    points_hex: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axes_hex: Option<Vec<Vec<String>>>,
    values: Vec<f64>,
    values_hex: Vec<String>,
    metadata: FieldMetadata,
    bandwidths_hex: BTreeMap<String, String>,
}

impl EstimateField {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.metadata.seed = Some(seed);
        self
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Trapezoid integral over the (tensor) grid.
    pub fn integral(&self) -> Result<f64> {
        self.grid.integrate(&self.values)
    }

    /// `x1,…,xd,value` rows; floats use the shortest representation that
    /// parses back to the same bits.
    pub fn to_csv(&self) -> String {
        let d = self.grid.dim();
        let mut out = String::new();
        for k in 1..=d {
            out.push_str(&format!("x{k},"));
        }
        out.push_str("value\n");
        for (i, v) in self.values.iter().enumerate() {
            for x in self.grid.point(i) {
                out.push_str(&format!("{x:?},"));
            }
            out.push_str(&format!("{v:?}\n"));
        }
        out
    }

    /// JSON with a hex-float twin for every float.
    pub fn to_json(&self) -> serde_json::Value {
        let wire = Wire {
            estimator: self.estimator,
            dim: self.grid.dim(),
            points: self.grid.points().to_vec(),
            points_hex: hexfloat::format_all(self.grid.points()),
            axes_hex: self
                .grid
                .axes()
                .map(|axes| axes.iter().map(|a| hexfloat::format_all(a)).collect()),
            values: self.values.clone(),
            values_hex: hexfloat::format_all(&self.values),
            metadata: self.metadata.clone(),
            bandwidths_hex: self
                .metadata
                .bandwidths
                .iter()
                .map(|(k, &v)| (k.clone(), hexfloat::format(v)))
                .collect(),
        };
        serde_json::to_value(wire).expect("field serializes")
    }

    /// Inverse of [`EstimateField::to_json`]; the hex twins are authoritative.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let wire: Wire = serde_json::from_value(value.clone())?;
        let grid = match wire.axes_hex {
            Some(axes) => Grid::tensor(
                axes.iter()
                    .map(|a| hexfloat::parse_all(a))
                    .collect::<Result<Vec<_>>>()?,
            )?,
            None => Grid::scattered(wire.dim, hexfloat::parse_all(&wire.points_hex)?)?,
        };
        let values = hexfloat::parse_all(&wire.values_hex)?;
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        let mut metadata = wire.metadata;
        for (k, hex) in wire.bandwidths_hex {
            metadata.bandwidths.insert(k, hexfloat::parse(&hex)?);
        }
        Ok(Self {
            estimator: wire.estimator,
            grid,
            values,
            metadata,
        })
    }
}

/// `sup` over the shared grid of `|real − ideal|`.
pub fn ideal_real_gap(ideal: &EstimateField, real: &EstimateField) -> Result<f64> {
    if !ideal.grid.same_points(&real.grid) {
        return Err(Error::GridMismatch);
    }
    Ok(ideal
        .values
        .iter()
        .zip(&real.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
