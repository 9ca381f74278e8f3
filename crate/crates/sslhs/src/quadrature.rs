//! Gauss–Legendre quadrature.
//!
//! Nodes and weights are computed by Newton iteration on the Legendre
//! recurrence. The probability-weighted variant integrates against the
//! uniform density on an interval, which is the inner product every local
//! polynomial basis in this crate is orthonormal under.

/// A Gauss–Legendre rule: `order` nodes, exact for polynomials of degree
/// `2 * order - 1`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule of the given order on the reference interval `[-1, 1]`
    /// (weights sum to 2).
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be at least 1");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        // Roots are symmetric; solve the first half and mirror.
        for i in 0..order.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integrate `f` over `[a, b]` with the Lebesgue measure.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Integrate `f` over `[a, b]` against the uniform density `1/(b-a)`,
    /// i.e. compute the conditional expectation of `f` on the interval.
    pub fn expect(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * 0.5
    }

    /// Nodes mapped to `[a, b]` paired with probability weights that sum
    /// to one.
    pub fn prob_rule(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (mid + half * x, 0.5 * w))
            .collect()
    }
}

/// Conditional expectation of `f` under the uniform density on the box
/// with the given per-dimension `bounds`, by a full tensor grid of the
/// one-dimensional rule. Cost grows as `order^d`; intended for
/// low-dimensional reference computations.
pub fn tensor_expect<F>(rule: &GaussLegendre, bounds: &[(f64, f64)], f: F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    fn walk<F: Fn(&[f64]) -> f64>(
        rules: &[Vec<(f64, f64)>],
        k: usize,
        w: f64,
        point: &mut [f64],
        f: &F,
        acc: &mut f64,
    ) {
        if k == rules.len() {
            *acc += w * f(point);
            return;
        }
        for &(x, wx) in &rules[k] {
            point[k] = x;
            walk(rules, k + 1, w * wx, point, f, acc);
        }
    }

    let rules: Vec<Vec<(f64, f64)>> = bounds.iter().map(|&(a, b)| rule.prob_rule(a, b)).collect();
    let mut point = vec![0.0; bounds.len()];
    let mut acc = 0.0;
    walk(&rules, 0, 1.0, &mut point, &f, &mut acc);
    acc
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
