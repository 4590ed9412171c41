use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations `X₁, …, Xₙ` in `ℝᵈ`, stored flattened and sorted
/// lexicographically so that every downstream sum has a canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    points: Vec<f64>,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl SampleSet {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::InvalidSample(format!(
                "{} coordinates do not form a nonempty set of {dim}-dimensional points",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite coordinate {bad}")));
        }
        let mut rows: Vec<&[f64]> = points.chunks_exact(dim).collect();
        rows.sort_by(|a, b| lex(a, b));
        let points = rows.concat();
        Ok(Self { dim, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    /// Per-axis `(min, max)` of the data hull.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|k| {
                self.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[k]), hi.max(p[k]))
                })
            })
            .collect()
    }
}

/// Evaluation points. Tensor grids remember their axes, which enables
/// trapezoid integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axes: Option<Vec<Vec<f64>>>,
}

impl Grid {
    pub fn linspace(lo: f64, hi: f64, m: usize) -> Result<Self> {
        Self::tensor(vec![linspace(lo, hi, m)?])
    }

    /// Cartesian product of `axes`, first axis varying slowest.
    pub fn tensor(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if axes.iter().any(|a| a.is_empty()) {
            return Err(Error::InvalidArgument("grid axis is empty".into()));
        }
        let dim = axes.len();
        let total: usize = axes.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            points.extend(idx.iter().zip(&axes).map(|(&i, a)| a[i]));
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Self {
            dim,
            points,
            axes: Some(axes),
        })
    }

    pub fn scattered(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if points.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: points.len() % dim,
            });
        }
        Ok(Self {
            dim,
            points,
            axes: None,
        })
    }

    /// Tensor grid covering the data hull plus `pad` on every side, with
    /// spacing at most `spacing`.
    pub fn padded(samples: &SampleSet, pad: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !pad.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "padded grid needs positive spacing and finite pad, got {spacing}, {pad}"
            )));
        }
        let axes = samples
            .bounds()
            .into_iter()
            .map(|(lo, hi)| {
                let (a, b) = (lo - pad, hi + pad);
                let m = ((b - a) / spacing).ceil() as usize + 1;
                linspace(a, b, m.max(2))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::tensor(axes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn axes(&self) -> Option<&[Vec<f64>]> {
        self.axes.as_deref()
    }

    /// Tensor-product trapezoid rule for `values` laid out like the grid.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        let axes = self.axes.as_ref().ok_or_else(|| {
            Error::Unsupported("integration needs a tensor grid".into())
        })?;
        if values.len() != self.len() {
            return Err(Error::GridMismatch);
        }
        let weights: Vec<Vec<f64>> = axes.iter().map(|a| trapezoid_weights(a)).collect();
        let dim = self.dim;
        let mut idx = vec![0usize; dim];
        let mut total = 0.0;
        for &v in values {
            let w: f64 = idx.iter().zip(&weights).map(|(&i, w)| w[i]).product();
            total += w * v;
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(total)
    }

    pub(crate) fn same_points(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, m: usize) -> Result<Vec<f64>> {
    if m < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "linspace needs lo < hi and at least 2 points, got [{lo}, {hi}] with {m}"
        )));
    }
    let step = (hi - lo) / (m - 1) as f64;
    Ok((0..m)
        .map(|i| if i + 1 == m { hi } else { lo + i as f64 * step })
        .collect())
}

fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let m = axis.len();
    if m == 1 {
        return vec![0.0];
    }
    (0..m)
        .map(|i| {
            let left = if i > 0 { axis[i] - axis[i - 1] } else { 0.0 };
            let right = if i + 1 < m { axis[i + 1] - axis[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}
