//! Gauss-Legendre quadrature rules.

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
///
/// Computed by Newton iteration on the Legendre polynomial; accurate to
/// machine precision for the rule sizes used here (n <= 64).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Symmetric rule: compute the first half, mirror the rest.
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (p2, d2) = legendre_and_derivative(n, x);
                x -= p2 / d2;
                dp = d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_and_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) via the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let p_next = ((2 * k + 1) as f64 * x * p - k as f64 * p_prev) / (k + 1) as f64;
        p_prev = p;
        p = p_next;
    }
    let d = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, d)
}

/// Tensor-product Gauss rule on an axis-aligned square `[x0, x0+h] x [y0, y0+h]`.
///
/// Returns points and weights in physical coordinates; weights include the
/// Jacobian `(h/2)^2`.
#[derive(Debug, Clone)]
pub struct SquareRule {
    /// Reference nodes in [-1,1] (one direction).
    pub nodes_1d: Vec<f64>,
    /// Reference weights (one direction).
    pub weights_1d: Vec<f64>,
}

impl SquareRule {
    pub fn new(points_per_direction: usize) -> Self {
        let (nodes_1d, weights_1d) = gauss_legendre(points_per_direction);
        Self { nodes_1d, weights_1d }
    }

    pub fn len(&self) -> usize {
        self.nodes_1d.len() * self.nodes_1d.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Iterate `(xi, eta, w_ref)` over the tensor grid; `w_ref` is the
    /// product of the 1D reference weights (no Jacobian).
    pub fn reference_points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.nodes_1d.len();
        (0..n * n).map(move |q| {
            let i = q % n;
            let j = q / n;
            (
                self.nodes_1d[i],
                self.nodes_1d[j],
                self.weights_1d[i] * self.weights_1d[j],
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_rules_match_known_values() {
        let (x, w) = gauss_legendre(2);
        let g = 1.0 / 3.0_f64.sqrt();
        assert!((x[0] + g).abs() < 1e-15 && (x[1] - g).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);

        let (x, w) = gauss_legendre(3);
        assert!((x[1]).abs() < 1e-15);
        assert!((x[2] - (0.6_f64).sqrt()).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((w[0] - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn rules_integrate_monomials_exactly() {
        for n in [1usize, 2, 3, 5, 8, 20, 64] {
            let (x, w) = gauss_legendre(n);
            assert_eq!(x.len(), n);
            // integrate x^p over [-1,1] for p up to 2n-1
            for p in 0..(2 * n) {
                let num: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!(
                    (num - exact).abs() < 5e-14,
                    "n={n} p={p}: {num} vs {exact}"
                );
            }
        }
    }
}
