//! One-dimensional quadrature rules shared by the mesh builders.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes are returned in increasing order. Newton iteration on the
/// three-term Legendre recurrence, accurate to a few ulps for `n` up to a
/// few hundred.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Equispaced periodic trapezoid nodes `offset + 2*pi*j/n`, each with weight `2*pi/n`.
pub fn periodic_trapezoid(n: usize, offset: f64) -> (Vec<f64>, f64) {
    let h = 2.0 * PI / n as f64;
    ((0..n).map(|j| offset + h * j as f64).collect(), h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-14, "n={n} p={p}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length_for_large_rules() {
        let (x, w) = gauss_legendre_on(257, -3.0, 5.0);
        let total: f64 = w.iter().sum();
        assert!((total - 8.0).abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert!(x[0] > -3.0 && x[256] < 5.0);
    }

    #[test]
    fn trapezoid_is_spectral_for_periodic_integrands() {
        let (t, h) = periodic_trapezoid(16, 0.3);
        let s: f64 = t.iter().map(|t| (t.cos()).powi(2) * h).sum();
        assert!((s - PI).abs() < 1e-14);
    }
}
