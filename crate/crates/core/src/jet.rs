//! Truncated multivariate Taylor series ("jets").
//!
//! A jet of order `N` at a point `t` stores the Taylor coefficients
//! `D_v g(t) / v!` for every multi-index with `|v| <= N`. Arithmetic on jets
//! propagates derivatives exactly, which is how the bias oracle obtains
//! `D_v (f / gamma^{2k})` from the analytic derivatives of `f`.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Debug)]
pub struct Layout {
    dim: usize,
    order: usize,
    indices: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
    /// (i, j, k): coefficient i times coefficient j lands in k.
    products: Vec<(usize, usize, usize)>,
}

impl Layout {
    fn build(dim: usize, order: usize) -> Self {
        let mut indices = Vec::new();
        for total in 0..=order {
            let mut v = vec![0; dim];
            enumerate(&mut v, 0, total, &mut indices);
        }
        let lookup: HashMap<Vec<usize>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();
        let mut products = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                let s: Vec<usize> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if let Some(&k) = lookup.get(&s) {
                    products.push((i, j, k));
                }
            }
        }
        Self {
            dim,
            order,
            indices,
            lookup,
            products,
        }
    }

    pub fn get(dim: usize, order: usize) -> Arc<Layout> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("jet layout cache poisoned");
        map.entry((dim, order))
            .or_insert_with(|| Arc::new(Layout::build(dim, order)))
            .clone()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Multi-indices in graded order (all of total degree 0, then 1, ...).
    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn index_of(&self, v: &[usize]) -> Option<usize> {
        self.lookup.get(v).copied()
    }
}

fn enumerate(v: &mut Vec<usize>, axis: usize, remaining: usize, out: &mut Vec<Vec<usize>>) {
    if axis + 1 == v.len() {
        v[axis] = remaining;
        out.push(v.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        v[axis] = k;
        enumerate(v, axis + 1, remaining - k, out);
    }
    v[axis] = 0;
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[derive(Debug, Clone)]
pub struct Jet {
    layout: Arc<Layout>,
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn constant(dim: usize, order: usize, c: f64) -> Self {
        let layout = Layout::get(dim, order);
        let mut coeffs = vec![0.0; layout.indices.len()];
        coeffs[0] = c;
        Self { layout, coeffs }
    }

    /// The coordinate function `x_axis` expanded about `value`.
    pub fn variable(dim: usize, order: usize, axis: usize, value: f64) -> Self {
        let mut j = Self::constant(dim, order, value);
        if order >= 1 {
            let mut e = vec![0; dim];
            e[axis] = 1;
            let k = j.layout.index_of(&e).expect("unit index present");
            j.coeffs[k] = 1.0;
        }
        j
    }

    /// Builds a jet from partial derivatives `D_v g(t)` keyed by multi-index.
    pub fn from_partials(dim: usize, order: usize, partial: impl Fn(&[usize]) -> f64) -> Self {
        let layout = Layout::get(dim, order);
        let coeffs = layout
            .indices
            .iter()
            .map(|v| partial(v) / v.iter().map(|&k| factorial(k)).product::<f64>())
            .collect();
        Self { layout, coeffs }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Taylor coefficient `D_v g / v!`; zero beyond the truncation order.
    pub fn coef(&self, v: &[usize]) -> f64 {
        self.layout.index_of(v).map_or(0.0, |k| self.coeffs[k])
    }

    /// Partial derivative `D_v g`.
    pub fn partial(&self, v: &[usize]) -> f64 {
        self.coef(v) * v.iter().map(|&k| factorial(k)).product::<f64>()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn map_coeffs(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        Self {
            layout: self.layout.clone(),
            coeffs: self.coeffs.iter().enumerate().map(|(k, &c)| f(k, c)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_coeffs(|_, c| c * s)
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        self.map_coeffs(|k, c| if k == 0 { c + s } else { c })
    }

    pub fn truncate(&self, order: usize) -> Self {
        assert!(order <= self.order(), "cannot raise jet order by truncation");
        let layout = Layout::get(self.dim(), order);
        let coeffs = layout.indices.iter().map(|v| self.coef(v)).collect();
        Self { layout, coeffs }
    }

    /// `∂g/∂x_axis` as a jet of one lower order.
    pub fn derivative(&self, axis: usize) -> Self {
        assert!(self.order() >= 1, "derivative of an order-0 jet");
        let layout = Layout::get(self.dim(), self.order() - 1);
        let coeffs = layout
            .indices
            .iter()
            .map(|v| {
                let mut up = v.clone();
                up[axis] += 1;
                (v[axis] + 1) as f64 * self.coef(&up)
            })
            .collect();
        Self { layout, coeffs }
    }

    /// `g ∘ self` where `taylor[k] = g^{(k)}(self.value()) / k!`.
    pub fn compose(&self, taylor: &[f64]) -> Self {
        let n = self.order();
        let delta = self.map_coeffs(|k, c| if k == 0 { 0.0 } else { c });
        let coeff = |k: usize| taylor.get(k).copied().unwrap_or(0.0);
        let mut acc = Self::constant(self.dim(), n, coeff(n));
        for k in (0..n).rev() {
            acc = (&acc * &delta).add_scalar(coeff(k));
        }
        acc
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        let taylor: Vec<f64> = (0..=self.order()).map(|k| e / factorial(k)).collect();
        self.compose(&taylor)
    }

    /// Real power; requires a positive value unless `p` is a non-negative integer.
    pub fn powf(&self, p: f64) -> Self {
        let x = self.value();
        let mut taylor = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        for k in 0..=self.order() {
            taylor.push(binom * x.powf(p - k as f64));
            binom *= (p - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&taylor)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Self {
        self.powf(-1.0)
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut acc = Self::constant(self.dim(), self.order(), 1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    pub fn div(&self, other: &Self) -> Self {
        self * &other.recip()
    }

    /// `Σ_{|v| = m} weight(v) · D_v g / v!`.
    pub fn contract_degree(&self, m: usize, weight: impl Fn(&[usize]) -> f64) -> f64 {
        self.layout
            .indices
            .iter()
            .zip(&self.coeffs)
            .filter(|(v, _)| v.iter().sum::<usize>() == m)
            .map(|(v, &c)| weight(v) * c)
            .sum()
    }

    fn check_compatible(&self, other: &Self) {
        assert!(
            self.dim() == other.dim() && self.order() == other.order(),
            "jet layouts differ: ({}, {}) vs ({}, {})",
            self.dim(),
            self.order(),
            other.dim(),
            other.order()
        );
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.check_compatible(rhs);
        self.map_coeffs(|k, c| c + rhs.coeffs[k])
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.check_compatible(rhs);
        self.map_coeffs(|k, c| c - rhs.coeffs[k])
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.check_compatible(rhs);
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.layout.products {
            coeffs[k] += self.coeffs[i] * rhs.coeffs[j];
        }
        Jet {
            layout: self.layout.clone(),
            coeffs,
        }
    }
}
