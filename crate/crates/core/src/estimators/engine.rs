use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::SampleSet;
use crate::error::Result;
use crate::summation::{pairwise_sum, NeighborIndex};

/// How candidate samples are found for each query point. Both engines sum
/// the same nonzero terms in the same order, so results are bitwise equal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Neighbour lookup within the support radius.
    #[default]
    Bucketed,
    /// Every sample for every query.
    Naive,
}

/// For each query `t` (flattened, `samples.dim()` coordinates each), the
/// pairwise sum over ascending sample index of the nonzero `term(t, i)`.
///
/// `radius` must bound `‖t − Xᵢ‖` for every nonzero term; `None` disables
/// the lookup.
pub(crate) fn kernel_sums<T>(
    samples: &SampleSet,
    queries: &[f64],
    radius: Option<f64>,
    engine: Engine,
    term: T,
) -> Result<Vec<f64>>
where
    T: Fn(&[f64], usize) -> Result<f64> + Sync,
{
    let dim = samples.dim();
    // widen slightly so rounding in the candidate test never drops a term
    let radius = radius
        .filter(|r| r.is_finite() && engine == Engine::Bucketed)
        .map(|r| r * (1.0 + 1e-9) + 1e-300);
    let index = match radius {
        Some(r) => NeighborIndex::build(samples.points(), dim, r),
        None => NeighborIndex::all(samples.len()),
    };
    queries
        .par_chunks(dim)
        .map_init(
            || (Vec::new(), Vec::new()),
            |(candidates, terms), t| {
                terms.clear();
                let mut push = |i| -> Result<()> {
                    let v = term(t, i)?;
                    if v != 0.0 {
                        terms.push(v);
                    }
                    Ok(())
                };
                match index.range(t, radius) {
                    Some(range) => range.into_iter().try_for_each(&mut push)?,
                    None => {
                        index.candidates(t, radius, candidates);
                        candidates.iter().try_for_each(|&i| push(i))?;
                    }
                }
                Ok(pairwise_sum(terms))
            },
        )
        .collect()
}
