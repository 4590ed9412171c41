use serde::{Deserialize, Serialize};

use super::density::DensityModel;
use crate::clipping::ClippingSpec;
use crate::error::{Error, Result};
use crate::estimators::{EstimateField, EstimatorId, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    /// `f(t) > r` and `‖t‖ < 1/r`.
    Oracle,
    /// `f̂(t; h1) > 2r` and `‖t‖ < 1/r`.
    Estimated,
}

/// A boolean mask over an evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub kind: RegionKind,
    pub r: f64,
    pub grid: Grid,
    pub mask: Vec<bool>,
}

fn check_r(r: f64, clip: &ClippingSpec) -> Result<()> {
    if !(r > clip.threshold()) || !r.is_finite() {
        return Err(Error::InvalidRegion(format!(
            "r = {r} must exceed t0·c² = {}",
            clip.threshold()
        )));
    }
    Ok(())
}

fn norm(t: &[f64]) -> f64 {
    t.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The region where the true density exceeds `r`.
pub fn oracle_region(
    density: &dyn DensityModel,
    r: f64,
    clip: &ClippingSpec,
    grid: &Grid,
) -> Result<Region> {
    check_r(r, clip)?;
    if grid.dim() != density.dim() {
        return Err(Error::DimensionMismatch {
            expected: density.dim(),
            found: grid.dim(),
        });
    }
    let mask = (0..grid.len())
        .map(|i| {
            let t = grid.point(i);
            density.pdf(t) > r && norm(t) < 1.0 / r
        })
        .collect();
    Ok(Region {
        kind: RegionKind::Oracle,
        r,
        grid: grid.clone(),
        mask,
    })
}

/// The data-driven region from a classical estimate `f̂(·; h1)` on the grid.
pub fn estimated_region(fhat: &EstimateField, r: f64, clip: &ClippingSpec) -> Result<Region> {
    check_r(r, clip)?;
    if fhat.estimator != EstimatorId::Classical {
        return Err(Error::InvalidRegion(format!(
            "estimated region needs a classical estimate, got {}",
            fhat.estimator
        )));
    }
    let grid = &fhat.grid;
    let mask = (0..grid.len())
        .map(|i| fhat.values[i] > 2.0 * r && norm(grid.point(i)) < 1.0 / r)
        .collect();
    Ok(Region {
        kind: RegionKind::Estimated,
        r,
        grid: grid.clone(),
        mask,
    })
}

impl Region {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Whether every point of `self` also lies in `other` (same grid).
    pub fn is_subset_of(&self, other: &Region) -> Result<bool> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b))
    }
}

/// `max` over masked grid points of `|field − f|`.
pub fn sup_error(field: &EstimateField, density: &dyn DensityModel, region: &Region) -> Result<f64> {
    if field.grid != region.grid {
        return Err(Error::GridMismatch);
    }
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(region
        .mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| (field.values[i] - density.pdf(field.grid.point(i))).abs())
        .fold(0.0, f64::max))
}

/// Tensor grid with `points_per_axis` points per axis spanning the oracle
/// region's bounding box plus a 10% margin on each side.
pub fn default_grid(density: &dyn DensityModel, r: f64, points_per_axis: usize) -> Result<Grid> {
    let d = density.dim();
    let support = density.effective_support();
    let scan = if d == 1 { 20_001 } else { 401 };
    let axes: Vec<Vec<f64>> = support
        .iter()
        .map(|&(lo, hi)| {
            (0..scan)
                .map(|i| lo + (hi - lo) * i as f64 / (scan - 1) as f64)
                .collect()
        })
        .collect();
    let scan_grid = Grid::tensor(axes)?;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..scan_grid.len() {
        let t = scan_grid.point(i);
        if density.pdf(t) > r && norm(t) < 1.0 / r {
            for k in 0..d {
                lo[k] = lo[k].min(t[k]);
                hi[k] = hi[k].max(t[k]);
            }
        }
    }
    if lo[0] > hi[0] {
        return Err(Error::EmptyRegion);
    }
    let axes = (0..d)
        .map(|k| {
            let margin = 0.1 * (hi[k] - lo[k]).max(1e-3);
            crate::estimators::Grid::linspace(lo[k] - margin, hi[k] + margin, points_per_axis)
                .map(|g| g.points().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Grid::tensor(axes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::FieldMetadata;
    use crate::experiments::GaussianMixture;

    fn setup() -> (GaussianMixture, ClippingSpec, Grid) {
        (
            GaussianMixture::standard(1),
            ClippingSpec::mckay(0.1).unwrap(),
            Grid::linspace(-4.0, 4.0, 801).unwrap(),
        )
    }

    #[test]
    fn oracle_mask_is_the_inequality() {
        let (g, clip, grid) = setup();
        let region = oracle_region(&g, 0.1, &clip, &grid).unwrap();
        for (i, &m) in region.mask.iter().enumerate() {
            let t = grid.point(i)[0];
            assert_eq!(m, g.pdf(&[t]) > 0.1 && t.abs() < 10.0);
        }
        assert!(region.count() > 0);
    }

    #[test]
    fn region_errors() {
        let (g, clip, grid) = setup();
        assert!(matches!(
            oracle_region(&g, 0.02, &clip, &grid),
            Err(Error::InvalidRegion(_))
        ));
        let empty = oracle_region(&g, 0.5, &clip, &grid).unwrap();
        assert!(empty.is_empty());
        let field = EstimateField {
            estimator: EstimatorId::Classical,
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            metadata: FieldMetadata::default(),
        };
        assert!(matches!(sup_error(&field, &g, &empty), Err(Error::EmptyRegion)));
    }

    #[test]
    fn sup_error_examples() {
        let (g, clip, grid) = setup();
        let region = oracle_region(&g, 0.05, &clip, &grid).unwrap();
        let mut values: Vec<f64> = (0..grid.len()).map(|i| g.pdf(grid.point(i))).collect();
        let mut field = EstimateField {
            estimator: EstimatorId::MckayReal,
            grid: grid.clone(),
            values: values.clone(),
            metadata: FieldMetadata::default(),
        };
        assert_eq!(sup_error(&field, &g, &region).unwrap(), 0.0);
        values[400] += 0.01;
        field.values = values;
        assert!((sup_error(&field, &g, &region).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn default_grid_spans_region() {
        let g = GaussianMixture::standard(1);
        let grid = default_grid(&g, 0.05, 1024).unwrap();
        assert_eq!(grid.len(), 1024);
        let edge = (-2.0 * (0.05 * (2.0 * std::f64::consts::PI).sqrt()).ln()).sqrt();
        let span = grid.point(1023)[0];
        assert!((span - 1.2 * edge).abs() < 1e-2, "{span} vs {edge}");
        let g2 = GaussianMixture::standard(2);
        assert_eq!(default_grid(&g2, 0.05, 16).unwrap().len(), 256);
    }
}
