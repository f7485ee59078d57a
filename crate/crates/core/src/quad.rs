//! Gauss–Legendre quadrature utilities.
//!
//! Besides plain and composite rules, this module provides *cumulative*
//! integration on a panel: from the integrand values at the Gauss nodes it
//! reconstructs the degree-(order−1) interpolant in the Legendre basis and
//! integrates it up to any point of the panel. That turns one sweep of node
//! evaluations into an antiderivative usable at the nodes themselves —
//! exactly what reparametrised flow averages need (the elapsed time s(u) is
//! the running integral of 1/f along the orbit being integrated).

use crate::error::{CoreError, Result};
use std::sync::OnceLock;

/// Legendre polynomial values P_n(x) and derivative P_n'(x).
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = (n as f64) * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

fn legendre(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    p
}

/// Gauss–Legendre nodes (ascending, in (−1,1)) and weights for `order ≥ 1`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Standard initial guess for the i-th root (descending), then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        let mid = n / 2;
        nodes[mid] = 0.0;
        let (_, dp) = legendre_pair(n, 0.0);
        weights[mid] = 2.0 / (dp * dp);
    }
    (nodes, weights)
}

/// Single Gauss–Legendre panel over [a, b].
pub fn integrate_gl(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Composite rule with `panels` equal panels.
pub fn integrate_composite(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    order: usize,
    panels: usize,
) -> f64 {
    assert!(panels >= 1);
    let h = (b - a) / panels as f64;
    let mut parts = Vec::with_capacity(panels);
    for p in 0..panels {
        let pa = a + h * p as f64;
        parts.push(integrate_gl(&mut f, pa, pa + h, order));
    }
    pairwise_sum(&parts)
}

/// Composite Gauss–Legendre with panel doubling until two successive
/// refinements agree to `tol` (absolute). Starts from panels of length ≈ 1.
pub fn integrate_adaptive(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    order: usize,
    tol: f64,
) -> Result<f64> {
    let len = (b - a).abs();
    let mut panels = len.ceil().max(1.0) as usize;
    let mut prev = integrate_composite(&mut f, a, b, order, panels);
    for _ in 0..24 {
        panels *= 2;
        let cur = integrate_composite(&mut f, a, b, order, panels);
        if (cur - prev).abs() <= tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(CoreError::NumericFailure(format!(
        "adaptive quadrature on [{a}, {b}] did not reach tol {tol:.3e} \
         (last refinement {panels} panels, last value {prev:.6e})"
    )))
}

/// Deterministic pairwise summation (order-independent of accumulation
/// grouping only through the fixed recursive split).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Cumulative Gauss–Legendre integration on the reference panel [−1, 1].
///
/// From integrand values at the Gauss nodes it computes, to spectral
/// accuracy for smooth integrands:
/// * the full panel integral (ordinary quadrature),
/// * the running integral ∫_{−1}^{x_j} at every node x_j,
/// * the running integral up to an arbitrary point t ∈ [−1, 1],
/// * the inverse problem: the point t at which the running integral of a
///   positive integrand reaches a given level.
pub struct CumulativeGl {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// coeff[m][i]: Legendre coefficient m of the interpolant per unit
    /// value at node i (exact through degree order−1).
    coeff: Vec<Vec<f64>>,
    /// cum[j][i]: ∫_{−1}^{x_j} of the cardinal interpolant of node i.
    cum: Vec<Vec<f64>>,
}

impl CumulativeGl {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        // Discrete Legendre analysis: a_m = (2m+1)/2 Σ_i w_i P_m(x_i) v_i is
        // exact for polynomials of degree ≤ order−1 because the quadrature
        // is exact to degree 2·order−1.
        let mut coeff = vec![vec![0.0; order]; order];
        for (m, row) in coeff.iter_mut().enumerate() {
            for i in 0..order {
                row[i] = (2.0 * m as f64 + 1.0) / 2.0 * weights[i] * legendre(m, nodes[i]);
            }
        }
        let mut cum = vec![vec![0.0; order]; order];
        for (j, row) in cum.iter_mut().enumerate() {
            let t = nodes[j];
            for i in 0..order {
                let mut acc = 0.0;
                for (m, crow) in coeff.iter().enumerate() {
                    acc += crow[i] * legendre_antiderivative(m, t);
                }
                row[i] = acc;
            }
        }
        CumulativeGl {
            order,
            nodes,
            weights,
            coeff,
            cum,
        }
    }

    /// Shared instance of the default order (16).
    pub fn shared16() -> &'static CumulativeGl {
        static INSTANCE: OnceLock<CumulativeGl> = OnceLock::new();
        INSTANCE.get_or_init(|| CumulativeGl::new(16))
    }

    /// Panel integral Σ w_i v_i (multiply by half panel width outside).
    pub fn full(&self, values: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(values.iter())
            .map(|(w, v)| w * v)
            .collect();
        pairwise_sum(&terms)
    }

    /// Running integrals ∫_{−1}^{x_j} of the interpolant, per node.
    pub fn node_cumulative(&self, values: &[f64]) -> Vec<f64> {
        (0..self.order)
            .map(|j| {
                let terms: Vec<f64> = self.cum[j]
                    .iter()
                    .zip(values.iter())
                    .map(|(c, v)| c * v)
                    .collect();
                pairwise_sum(&terms)
            })
            .collect()
    }

    /// Running integral ∫_{−1}^{t} of the interpolant.
    pub fn partial_to(&self, values: &[f64], t: f64) -> f64 {
        let terms: Vec<f64> = self
            .coeff
            .iter()
            .enumerate()
            .map(|(m, crow)| {
                let am: f64 = crow.iter().zip(values.iter()).map(|(c, v)| c * v).sum();
                am * legendre_antiderivative(m, t)
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// For values of a (numerically) positive integrand, find t ∈ [−1, 1]
    /// with ∫_{−1}^{t} interpolant = target, by bisection on the smooth
    /// antiderivative. `target` must lie within [0, full panel integral].
    pub fn invert_cumulative(&self, values: &[f64], target: f64) -> f64 {
        let mut lo = -1.0;
        let mut hi = 1.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.partial_to(values, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// ∫_{−1}^{t} P_m(s) ds.
fn legendre_antiderivative(m: usize, t: f64) -> f64 {
    if m == 0 {
        t + 1.0
    } else {
        // (P_{m+1} − P_{m−1})/(2m+1); both vanish at −1 consistently since
        // P_k(−1) = (−1)^k and the two parities match.
        (legendre(m + 1, t) - legendre(m - 1, t)) / (2.0 * m as f64 + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl16_exact_for_degree_31() {
        // ∫_{−1}^{1} x^30 dx = 2/31.
        let val = integrate_gl(|x| x.powi(30), -1.0, 1.0, 16);
        assert!((val - 2.0 / 31.0).abs() < 1e-15);
        // Degree 31 (odd) integrates to 0.
        let odd = integrate_gl(|x| x.powi(31), -1.0, 1.0, 16);
        assert!(odd.abs() < 1e-16);
    }

    #[test]
    fn composite_matches_analytic_sine() {
        let val = integrate_composite(|x| x.sin(), 0.0, 10.0, 16, 10);
        let exact = 1.0 - (10.0f64).cos();
        assert!((val - exact).abs() < 1e-13);
    }

    #[test]
    fn adaptive_reaches_tolerance() {
        let val = integrate_adaptive(|x| (3.0 * x).cos() * (-x / 5.0).exp(), 0.0, 7.0, 16, 1e-12)
            .unwrap();
        // Oracle: ∫ e^{-x/5} cos(3x) dx with a = -1/5, b = 3:
        // e^{ax}(a cos(bx) + b sin(bx))/(a² + b²).
        let a = -0.2;
        let b = 3.0;
        let anti = |x: f64| (a * x).exp() * (a * (b * x).cos() + b * (b * x).sin()) / (a * a + b * b);
        let exact = anti(7.0) - anti(0.0);
        assert!((val - exact).abs() < 1e-12);
    }

    #[test]
    fn cumulative_constant_and_quadratic() {
        let cg = CumulativeGl::new(16);
        let ones = vec![1.0; 16];
        let cums = cg.node_cumulative(&ones);
        for (j, s) in cums.iter().enumerate() {
            assert!((s - (cg.nodes[j] + 1.0)).abs() < 1e-14);
        }
        let quad: Vec<f64> = cg.nodes.iter().map(|x| x * x).collect();
        let cums2 = cg.node_cumulative(&quad);
        for (j, s) in cums2.iter().enumerate() {
            let exact = (cg.nodes[j].powi(3) + 1.0) / 3.0;
            assert!((s - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn cumulative_analytic_function_and_inverse() {
        let cg = CumulativeGl::new(16);
        let vals: Vec<f64> = cg.nodes.iter().map(|x| (1.5 * x).exp()).collect();
        // ∫_{−1}^{t} e^{1.5 s} ds = (e^{1.5 t} − e^{−1.5})/1.5.
        for &t in &[-0.7, -0.2, 0.33, 0.9] {
            let got = cg.partial_to(&vals, t);
            let exact = ((1.5 * t).exp() - (-1.5f64).exp()) / 1.5;
            assert!((got - exact).abs() < 1e-12, "t={t}: {got} vs {exact}");
        }
        let full: f64 = cg.full(&vals);
        let target = 0.37 * full;
        let t = cg.invert_cumulative(&vals, target);
        let back = cg.partial_to(&vals, t);
        assert!((back - target).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_smooth_data() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.37).sin()).collect();
        let naive: f64 = xs.iter().sum();
        let pw = pairwise_sum(&xs);
        assert!((naive - pw).abs() < 1e-10);
    }
}
