//! Dense univariate polynomials and finite-difference weights.

use serde::{Deserialize, Serialize};

/// Polynomial with coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::new(vec![0.0]);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// Taylor coefficients `q_k = P^{(k)}(x0) / k!` for `k = 0..=order`.
    pub fn taylor_at(&self, x0: f64, order: usize) -> Vec<f64> {
        // Repeated synthetic division by (x - x0).
        let mut work = self.coeffs.clone();
        let n = work.len();
        let mut out = Vec::with_capacity(order + 1);
        for k in 0..=order {
            if k >= n {
                out.push(0.0);
                continue;
            }
            for i in (k..n - 1).rev() {
                work[i] += x0 * work[i + 1];
            }
            out.push(work[k]);
        }
        out
    }
}

/// Fornberg's weights for derivatives `0..=max_order` at `x0` from the
/// nodes `xs`. `weights[m][j]` multiplies `f(xs[j])` for the m-th derivative.
pub fn fornberg_weights(x0: f64, xs: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_shift_of_cubic() {
        // (x - 1)^3 = -1 + 3x - 3x^2 + x^3; about x0 = 1 it is just t^3.
        let p = Polynomial::new(vec![-1.0, 3.0, -3.0, 1.0]);
        let t = p.taylor_at(1.0, 5);
        assert_eq!(t, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn derivative_and_eval() {
        let p = Polynomial::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.derivative().coeffs(), &[2.0, 6.0]);
        assert_eq!(p.eval(2.0), 17.0);
        assert_eq!(p.mul(&p).eval(2.0), 289.0);
    }

    #[test]
    fn central_second_difference_weights() {
        let w = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn one_sided_weights_are_exact_on_polynomials() {
        let xs: Vec<f64> = (0..7).map(|j| j as f64 * 0.1).collect();
        let w = fornberg_weights(0.0, &xs, 3);
        // third derivative of x^3 + x^5 at 0 is 6
        let d3: f64 = xs.iter().zip(&w[3]).map(|(x, w)| w * (x.powi(3) + x.powi(5))).sum();
        assert!((d3 - 6.0).abs() < 1e-9);
    }
}
