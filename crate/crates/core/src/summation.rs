//! Canonical-order summation and fixed-radius neighbour lookup.
//!
//! Every kernel sum in the crate goes through [`pairwise_sum`] over the
//! nonzero terms in ascending sample index, which makes results independent
//! of thread count and of whether candidates came from a bucketed lookup or
//! a full scan.

use std::collections::HashMap;

const BLOCK: usize = 8;

/// Pairwise (tree) summation with a sequential base block.
pub fn pairwise_sum(terms: &[f64]) -> f64 {
    if terms.len() <= BLOCK {
        let mut s = 0.0;
        for &t in terms {
            s += t;
        }
        return s;
    }
    let mid = terms.len() / 2;
    pairwise_sum(&terms[..mid]) + pairwise_sum(&terms[mid..])
}

/// Lookup structure for samples within a radius of a query point.
pub(crate) enum NeighborIndex<'a> {
    /// d = 1 samples stored in ascending order.
    Sorted { xs: &'a [f64] },
    /// Uniform hash grid with cubic cells.
    Grid {
        n: usize,
        dim: usize,
        cell: f64,
        cells: HashMap<Vec<i64>, Vec<usize>>,
    },
    /// No acceleration: every sample is a candidate.
    All { n: usize },
}

impl<'a> NeighborIndex<'a> {
    /// `points` must be sorted lexicographically (as [`SampleSet`] guarantees).
    ///
    /// [`SampleSet`]: crate::estimators::SampleSet
    pub fn build(points: &'a [f64], dim: usize, cell: f64) -> Self {
        let n = points.len() / dim;
        if !(cell.is_finite() && cell > 0.0) {
            return Self::All { n };
        }
        if dim == 1 {
            return Self::Sorted { xs: points };
        }
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let key: Vec<i64> = p.iter().map(|&x| (x / cell).floor() as i64).collect();
            cells.entry(key).or_default().push(i);
        }
        Self::Grid { n, dim, cell, cells }
    }

    pub fn all(n: usize) -> Self {
        Self::All { n }
    }

    /// The candidates as one ascending index range, when they form one.
    pub fn range(&self, t: &[f64], radius: Option<f64>) -> Option<std::ops::Range<usize>> {
        match (self, radius) {
            (Self::All { n }, _) => Some(0..*n),
            (Self::Sorted { xs }, None) => Some(0..xs.len()),
            (Self::Sorted { xs }, Some(r)) => {
                let lo = xs.partition_point(|&x| x < t[0] - r);
                let hi = xs.partition_point(|&x| x <= t[0] + r);
                Some(lo..hi)
            }
            (Self::Grid { .. }, _) => None,
        }
    }

    /// Pushes, in ascending order, every index whose sample may lie within
    /// `radius` of `t` (a superset of the exact ball).
    pub fn candidates(&self, t: &[f64], radius: Option<f64>, out: &mut Vec<usize>) {
        out.clear();
        match (self, radius) {
            (Self::All { n }, _) | (Self::Grid { n, .. }, None) => out.extend(0..*n),
            (Self::Sorted { xs }, None) => out.extend(0..xs.len()),
            (Self::Sorted { xs }, Some(r)) => {
                let lo = xs.partition_point(|&x| x < t[0] - r);
                let hi = xs.partition_point(|&x| x <= t[0] + r);
                out.extend(lo..hi);
            }
            (Self::Grid { dim, cell, cells, .. }, Some(r)) => {
                let lo: Vec<i64> = (0..*dim).map(|k| ((t[k] - r) / cell).floor() as i64).collect();
                let hi: Vec<i64> = (0..*dim).map(|k| ((t[k] + r) / cell).floor() as i64).collect();
                let mut key = lo.clone();
                loop {
                    if let Some(ids) = cells.get(&key) {
                        out.extend_from_slice(ids);
                    }
                    // odometer increment over the AABB of the ball
                    let mut k = 0;
                    loop {
                        if k == *dim {
                            out.sort_unstable();
                            return;
                        }
                        if key[k] < hi[k] {
                            key[k] += 1;
                            break;
                        }
                        key[k] = lo[k];
                        k += 1;
                    }
                }
            }
        }
    }
}
