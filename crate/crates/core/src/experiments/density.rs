//! Test densities with exact derivatives and seeded samplers.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::clipping::DerivativeAccessor;
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::quadrature::{integrate_box, integrate_fallible, QuadOptions};

/// An analytic density on `ℝᵈ` with Taylor jets and a sampler.
pub trait DensityModel: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn pdf(&self, t: &[f64]) -> f64;
    /// Highest derivative order [`DensityModel::jet`] can produce.
    fn max_derivative_order(&self) -> usize;
    /// Taylor jet of the density at `t`, truncated at `order`.
    fn jet(&self, t: &[f64], order: usize) -> Result<Jet>;
    /// Maximal order of bounded derivatives.
    fn smoothness_class(&self) -> usize;
    /// Box holding all but a negligible (< 1e-12) share of the mass.
    fn effective_support(&self) -> Vec<(f64, f64)>;
    /// Appends `n` draws (flattened) using `rng`; draws are consumed in
    /// order, so a longer sample from the same stream extends a shorter one.
    fn sample_into(&self, n: usize, rng: &mut dyn RngCore, out: &mut Vec<f64>);

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n * self.dim());
        self.sample_into(n, &mut rng, &mut out);
        out
    }
}

impl fmt::Debug for dyn DensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityModel({})", self.id())
    }
}

/// Finite mixture of isotropic Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    id: String,
    dim: usize,
    components: Vec<Component>,
}

#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    mean: Vec<f64>,
    sigma: f64,
}

impl GaussianMixture {
    /// `components` holds `(weight, mean, sigma)`; weights must sum to 1.
    pub fn new(id: impl Into<String>, components: Vec<(f64, Vec<f64>, f64)>) -> Result<Self> {
        let id = id.into();
        let dim = components.first().map(|c| c.1.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-12
            || components
                .iter()
                .any(|c| c.0 <= 0.0 || c.2 <= 0.0 || c.1.len() != dim)
        {
            return Err(Error::DensityRejected {
                id,
                reason: "weights must be positive and sum to 1, sigmas positive".into(),
            });
        }
        let components = components
            .into_iter()
            .map(|(weight, mean, sigma)| Component {
                weight,
                mean,
                sigma,
            })
            .collect();
        Ok(Self {
            id,
            dim,
            components,
        })
    }

    pub fn standard(dim: usize) -> Self {
        Self::isotropic(format!("gaussian{dim}d"), dim, 1.0)
    }

    pub fn isotropic(id: impl Into<String>, dim: usize, sigma: f64) -> Self {
        Self::new(id, vec![(1.0, vec![0.0; dim], sigma)]).expect("valid single component")
    }

    /// `0.5·N(−1, 1) + 0.5·N(1, 1)`.
    pub fn symmetric_mixture() -> Self {
        Self::new(
            "mixture1d",
            vec![(0.5, vec![-1.0], 1.0), (0.5, vec![1.0], 1.0)],
        )
        .expect("valid mixture")
    }
}

impl DensityModel for GaussianMixture {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn pdf(&self, t: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let q: f64 = t.iter().zip(&c.mean).map(|(x, m)| (x - m) * (x - m)).sum();
                let norm = (2.0 * PI * c.sigma * c.sigma).powf(-(self.dim as f64) / 2.0);
                c.weight * norm * (-0.5 * q / (c.sigma * c.sigma)).exp()
            })
            .sum()
    }

    fn max_derivative_order(&self) -> usize {
        if self.dim == 1 {
            8
        } else {
            6
        }
    }

    fn jet(&self, t: &[f64], order: usize) -> Result<Jet> {
        let available = self.max_derivative_order();
        if order > available {
            return Err(Error::DerivativeUnavailable {
                requested: order,
                available,
            });
        }
        let mut total = Jet::constant(self.dim, order, 0.0);
        for c in &self.components {
            let mut q = Jet::constant(self.dim, order, 0.0);
            for (axis, (&x, &m)) in t.iter().zip(&c.mean).enumerate() {
                let u = Jet::variable(self.dim, order, axis, x - m);
                q = &q + &(&u * &u);
            }
            let norm = (2.0 * PI * c.sigma * c.sigma).powf(-(self.dim as f64) / 2.0);
            let g = q.scale(-0.5 / (c.sigma * c.sigma)).exp().scale(c.weight * norm);
            total = &total + &g;
        }
        Ok(total)
    }

    fn smoothness_class(&self) -> usize {
        usize::MAX
    }

    fn effective_support(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|k| {
                let lo = self
                    .components
                    .iter()
                    .map(|c| c.mean[k] - 8.0 * c.sigma)
                    .fold(f64::INFINITY, f64::min);
                let hi = self
                    .components
                    .iter()
                    .map(|c| c.mean[k] + 8.0 * c.sigma)
                    .fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect()
    }

    fn sample_into(&self, n: usize, rng: &mut dyn RngCore, out: &mut Vec<f64>) {
        out.reserve(n * self.dim);
        for _ in 0..n {
            let c = if self.components.len() == 1 {
                &self.components[0]
            } else {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = self.components.last().expect("nonempty");
                for c in &self.components {
                    acc += c.weight;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                pick
            };
            for m in &c.mean {
                let z: f64 = rng.sample(StandardNormal);
                out.push(m + c.sigma * z);
            }
        }
    }
}

/// `f`, `f′`, `f″` of a one-dimensional model, for [`crate::clipping::BetaSpec`].
pub struct AnalyticDerivatives(pub Arc<dyn DensityModel>);

impl DerivativeAccessor for AnalyticDerivatives {
    fn derivatives(&self, x: f64) -> Result<[f64; 3]> {
        if self.0.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: self.0.dim(),
            });
        }
        let j = self.0.jet(&[x], 2)?;
        Ok([j.value(), j.partial(&[1]), j.partial(&[2])])
    }
}

/// Registration gate settings.
const NORMALIZATION_TOL: f64 = 1e-8;
const DERIVATIVE_TOL: f64 = 1e-5;
const DERIVATIVE_PROBES: usize = 100;

/// Checks normalization and that every jet partial up to the model's order
/// matches a central difference of the next-lower partial.
pub fn check_density(model: &dyn DensityModel) -> Result<()> {
    let reject = |reason: String| Error::DensityRejected {
        id: model.id().to_string(),
        reason,
    };
    let d = model.dim();
    let support = model.effective_support();
    if support.len() != d {
        return Err(reject("effective support has the wrong dimension".into()));
    }
    let lower: Vec<f64> = support.iter().map(|s| s.0).collect();
    let upper: Vec<f64> = support.iter().map(|s| s.1).collect();
    let opts = QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-10,
        max_subdivisions: 4000,
    };
    let mass = if d == 1 {
        integrate_fallible(|x| Ok(model.pdf(&[x])), lower[0], upper[0], opts)?.value
    } else {
        integrate_box(&mut |t: &[f64]| Ok(model.pdf(t)), &lower, &upper, opts)?.value
    };
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        return Err(reject(format!("integrates to {mass}, not 1")));
    }

    let order = model.max_derivative_order().min(6);
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_0f_de75);
    let step = 1e-4;
    for _ in 0..DERIVATIVE_PROBES {
        // probe the central part of the support where the density matters
        let t: Vec<f64> = support
            .iter()
            .map(|&(lo, hi)| {
                let mid = 0.5 * (lo + hi);
                let half = 0.25 * (hi - lo);
                mid + half * (2.0 * rng.random::<f64>() - 1.0)
            })
            .collect();
        let jet = model.jet(&t, order)?;
        let value = model.pdf(&t);
        if value < 0.0 || (jet.value() - value).abs() > DERIVATIVE_TOL * value.abs().max(1.0) {
            return Err(reject(format!("jet value disagrees with pdf at {t:?}")));
        }
        for v in jet.layout().indices().iter().skip(1) {
            let axis = v.iter().position(|&k| k > 0).expect("nonzero index");
            let mut lower_v = v.clone();
            lower_v[axis] -= 1;
            let shifted = |delta: f64| -> Result<f64> {
                let mut s = t.clone();
                s[axis] += delta;
                if lower_v.iter().all(|&k| k == 0) {
                    Ok(model.pdf(&s))
                } else {
                    Ok(model.jet(&s, order)?.partial(&lower_v))
                }
            };
            let fd = (shifted(step)? - shifted(-step)?) / (2.0 * step);
            let exact = jet.partial(v);
            if (fd - exact).abs() > DERIVATIVE_TOL * exact.abs().max(1.0) {
                return Err(reject(format!(
                    "partial {v:?} at {t:?} is {exact}, finite differences give {fd}"
                )));
            }
        }
    }
    Ok(())
}

/// Registry of densities by id.
#[derive(Clone, Default)]
pub struct DensityCatalog {
    models: BTreeMap<String, Arc<dyn DensityModel>>,
}

impl fmt::Debug for DensityCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.models.keys()).finish()
    }
}

impl DensityCatalog {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `gaussian1d`, `gaussian2d`, `mixture1d` and `isotropic2d` (σ = 0.75).
    pub fn with_builtins() -> Self {
        let mut models: BTreeMap<String, Arc<dyn DensityModel>> = BTreeMap::new();
        let builtins: [Arc<dyn DensityModel>; 4] = [
            Arc::new(GaussianMixture::standard(1)),
            Arc::new(GaussianMixture::standard(2)),
            Arc::new(GaussianMixture::symmetric_mixture()),
            Arc::new(GaussianMixture::isotropic("isotropic2d", 2, 0.75)),
        ];
        for m in builtins {
            models.insert(m.id().to_string(), m);
        }
        Self { models }
    }

    /// Runs [`check_density`] and stores the model under its id.
    pub fn register(&mut self, model: Arc<dyn DensityModel>) -> Result<String> {
        check_density(model.as_ref())?;
        let id = model.id().to_string();
        self.models.insert(id.clone(), model);
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn DensityModel>> {
        self.models.get(id).cloned().ok_or_else(|| Error::UnknownId {
            kind: "density",
            id: id.to_string(),
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }
}
