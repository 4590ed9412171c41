use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which bandwidth rule a schedule follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Two bandwidths, bias `O(h⁴)`.
    H4,
    /// Four bandwidths with the `β` correction, bias `O(h⁶)`; `d = 1` only.
    H6,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::H4 => "h4",
            Mode::H6 => "h6",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h4" => Ok(Mode::H4),
            "h6" => Ok(Mode::H6),
            _ => Err(Error::UnknownId {
                kind: "mode",
                id: s.to_string(),
            }),
        }
    }
}

/// Role-tagged bandwidths. `h1` drives the preliminary density estimate,
/// `h2` the final sum, `h3`/`h4` the first and second derivative estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSchedule {
    pub mode: Mode,
    pub n: usize,
    pub dim: usize,
    pub h1: f64,
    pub h2: f64,
    pub h3: Option<f64>,
    pub h4: Option<f64>,
}

/// Bandwidths as powers of `(log n) / n`.
pub fn schedule_for(n: usize, dim: usize, mode: Mode) -> Result<BandwidthSchedule> {
    if n < 2 {
        return Err(Error::InvalidSchedule(format!("n = {n} must be at least 2")));
    }
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let base = (n as f64).ln() / n as f64;
    let d = dim as f64;
    match mode {
        Mode::H4 => Ok(BandwidthSchedule {
            mode,
            n,
            dim,
            h1: base.powf(1.0 / (4.0 + d)),
            h2: base.powf(1.0 / (8.0 + d)),
            h3: None,
            h4: None,
        }),
        Mode::H6 if dim != 1 => Err(Error::Unsupported(format!(
            "the h6 schedule is defined for d = 1, got d = {dim}"
        ))),
        Mode::H6 => {
            let h2 = base.powf(1.0 / 13.0);
            Ok(BandwidthSchedule {
                mode,
                n,
                dim,
                h1: base.powf(1.0 / 5.0),
                h2,
                h3: Some(base.powf(1.0 / 11.0)),
                h4: Some(h2),
            })
        }
    }
}

fn check(name: &str, h: f64) -> Result<f64> {
    if h.is_finite() && h > 0.0 {
        Ok(h)
    } else {
        Err(Error::InvalidSchedule(format!("{name} = {h} must be positive")))
    }
}

impl BandwidthSchedule {
    /// Hand-picked two-bandwidth schedule.
    pub fn custom_h4(dim: usize, h1: f64, h2: f64) -> Result<Self> {
        Ok(Self {
            mode: Mode::H4,
            n: 0,
            dim,
            h1: check("h1", h1)?,
            h2: check("h2", h2)?,
            h3: None,
            h4: None,
        })
    }

    /// Hand-picked four-bandwidth schedule (`d = 1`).
    pub fn custom_h6(h1: f64, h2: f64, h3: f64, h4: f64) -> Result<Self> {
        Ok(Self {
            mode: Mode::H6,
            n: 0,
            dim: 1,
            h1: check("h1", h1)?,
            h2: check("h2", h2)?,
            h3: Some(check("h3", h3)?),
            h4: Some(check("h4", h4)?),
        })
    }

    pub(crate) fn require(&self, mode: Mode) -> Result<()> {
        if self.mode == mode {
            Ok(())
        } else {
            Err(Error::InvalidSchedule(format!(
                "estimator needs a {mode} schedule, got {}",
                self.mode
            )))
        }
    }

    pub(crate) fn derivative_bandwidths(&self) -> Result<(f64, f64)> {
        match (self.h3, self.h4) {
            (Some(h3), Some(h4)) => Ok((h3, h4)),
            _ => Err(Error::InvalidSchedule("h3 and h4 are missing".into())),
        }
    }
}
