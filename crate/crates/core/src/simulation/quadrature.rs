//! Gauss-Legendre rules on `[-1, 1]`.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `int_a^b f` by the affine image of the rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum();
        half * sum
    }
}

/// `(P_k(x), P_k'(x))` by the three-term recurrence.
fn legendre(k: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=k {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let pk = if k == 0 { 1.0 } else { p1 };
    let dpk = if k == 0 {
        0.0
    } else {
        k as f64 * (x * pk - p0) / (x * x - 1.0)
    };
    (pk, dpk)
}

/// `k`-point rule: Newton iteration on `P_k` from Chebyshev-like initial
/// guesses, weights `2 / ((1 - x^2) P_k'(x)^2)`. Nodes ascend.
///
/// # Panics
/// If `k` is outside `1..=64`.
pub fn gauss_legendre(k: usize) -> QuadratureRule {
    assert!((1..=64).contains(&k), "Gauss-Legendre order {k} outside 1..=64");
    if k == 1 {
        return QuadratureRule {
            nodes: vec![0.0],
            weights: vec![2.0],
        };
    }
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    let kf = k as f64;
    for i in 0..k.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (kf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(k, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(k, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[k - 1 - i] = x;
        weights[i] = w;
        weights[k - 1 - i] = w;
    }
    if k % 2 == 1 {
        nodes[k / 2] = 0.0;
    }
    QuadratureRule { nodes, weights }
}
