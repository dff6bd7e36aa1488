//! Gauss–Legendre rules and composite panel quadrature.

use crate::C64;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    /// Nodes on [-1, 1], ascending.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule; nodes from Newton iteration on the three-term recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Composite rule over `[a, b]` split into `panels` equal panels.
    pub fn integrate_composite<F>(&self, a: f64, b: f64, panels: usize, mut f: F) -> C64
    where
        F: FnMut(f64) -> C64,
    {
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        let half = 0.5 * width;
        let mut total = C64::new(0.0, 0.0);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * width;
            let mut acc = C64::new(0.0, 0.0);
            for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                acc += w * f(mid + half * x);
            }
            total += half * acc;
        }
        total
    }
}

/// `(P_n(x), P_n'(x))`.
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 33] {
            let g = GaussLegendre::new(n);
            let s: f64 = g.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
        }
    }

    #[test]
    fn exact_for_degree_2n_minus_1() {
        let g = GaussLegendre::new(16);
        for deg in 0..32 {
            let approx = g.integrate_composite(-1.0, 1.0, 1, |x| C64::new(x.powi(deg), 0.0));
            let exact = if deg % 2 == 1 {
                0.0
            } else {
                2.0 / (deg as f64 + 1.0)
            };
            assert!((approx.re - exact).abs() < 1e-14, "deg={deg}");
        }
    }

    #[test]
    fn known_two_point_nodes() {
        let g = GaussLegendre::new(2);
        let x = 1.0 / 3f64.sqrt();
        assert!((g.nodes[0] + x).abs() < 1e-15);
        assert!((g.nodes[1] - x).abs() < 1e-15);
    }

    #[test]
    fn composite_oscillatory() {
        // ∫_0^3 e^{i 7 t} dt
        let g = GaussLegendre::new(16);
        let v = g.integrate_composite(0.0, 3.0, 8, |t| C64::new(0.0, 7.0 * t).exp());
        let exact = (C64::new(0.0, 21.0).exp() - 1.0) / C64::new(0.0, 7.0);
        assert!((v - exact).norm() < 1e-14);
    }
}
