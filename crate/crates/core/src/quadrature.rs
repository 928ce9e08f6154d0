//! Gauss quadrature rules for averaging over the thermal and intensity
//! distributions, built with the Golub-Welsch eigenvalue method.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights normalized to a probability measure (weights sum to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn golub_welsch(diag: &[f64], off: &[f64]) -> Rule {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1 / total).collect(),
    }
}

/// Generalized Gauss-Laguerre rule for the Gamma(alpha + 1, 1) density
/// `x^alpha e^-x / Gamma(alpha + 1)`.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Rule {
    assert!(n > 0 && alpha > -1.0);
    let diag: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n)
        .map(|i| (i as f64 * (i as f64 + alpha)).sqrt())
        .collect();
    golub_welsch(&diag, &off)
}

/// Gauss-Hermite rule for the standard normal density.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n > 0);
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|i| (i as f64).sqrt()).collect();
    golub_welsch(&diag, &off)
}
