//! Gauss–Legendre rules and the composite panel integrator used by the
//! singular nested integrals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(&'static str),
    #[error("quadrature did not converge: {coarse} vs {fine} (tolerance {tolerance:e})")]
    NotConverged { coarse: f64, fine: f64, tolerance: f64 },
}

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Newton iteration on the three-term recurrence, seeded with the
    /// Tricomi approximation of the roots.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss rule needs at least one node");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_and_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_and_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A value together with a refinement-based error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Panel layout and tolerances for the integrals over `[-1, 1]`.
///
/// `finite_part_radius` is the half-width of the subtraction window around
/// an interior simple zero, as a fraction of the smallest gap between
/// neighbouring zeros and the endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub panel_count: usize,
    pub points_per_panel: usize,
    /// Strength `alpha` of `(1+z)^alpha` and `(1-z)^alpha` at the two endpoints.
    pub endpoint_exponent: [f64; 2],
    pub finite_part_radius: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            panel_count: 8,
            points_per_panel: 64,
            endpoint_exponent: [0.0, 0.0],
            finite_part_radius: 0.1,
            abs_tol: 1e-12,
            rel_tol: 1e-9,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), QuadratureError> {
        if self.panel_count == 0 {
            return Err(QuadratureError::InvalidSpec("panel_count must be positive"));
        }
        if self.points_per_panel == 0 {
            return Err(QuadratureError::InvalidSpec("points_per_panel must be positive"));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(QuadratureError::InvalidSpec("tolerances must be positive"));
        }
        if !(self.finite_part_radius > 0.0 && self.finite_part_radius < 1.0) {
            return Err(QuadratureError::InvalidSpec("finite_part_radius must lie in (0, 1)"));
        }
        if self.endpoint_exponent.iter().any(|e| !e.is_finite() || *e <= -1.0) {
            return Err(QuadratureError::InvalidSpec("endpoint exponents must exceed -1"));
        }
        Ok(())
    }

    /// Same layout with twice as many panels.
    pub fn refined(&self) -> Self {
        Self {
            panel_count: 2 * self.panel_count,
            ..self.clone()
        }
    }

    pub fn tolerance_for(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }

    pub fn rule(&self) -> GaussRule {
        GaussRule::new(self.points_per_panel)
    }

    /// Composite Gauss–Legendre over `[a, b]`. End panels touching an
    /// endpoint with a non-integer exponent use `x = a + (b-a) t^2`, which
    /// turns a half-integer power into a polynomial.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let rule = self.rule();
        let panels = uniform_panels(a, b, self.panel_count);
        let last = panels.len() - 1;
        let mut total = 0.0;
        for (k, &(pa, pb)) in panels.iter().enumerate() {
            let sub_left = k == 0 && needs_substitution(self.endpoint_exponent[0]);
            let sub_right = k == last && needs_substitution(self.endpoint_exponent[1]);
            total += if sub_left {
                rule.integrate(0.0, 1.0, |t| 2.0 * (pb - pa) * t * f(pa + (pb - pa) * t * t))
            } else if sub_right {
                rule.integrate(0.0, 1.0, |t| 2.0 * (pb - pa) * t * f(pb - (pb - pa) * t * t))
            } else {
                rule.integrate(pa, pb, &mut f)
            };
        }
        total
    }

    /// Integrates at this resolution and at twice the panel count; fails
    /// when the two disagree by more than the tolerance.
    pub fn integrate_checked<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        mut f: F,
    ) -> Result<Estimate, QuadratureError> {
        self.validate()?;
        let coarse = self.integrate(a, b, &mut f);
        let fine = self.refined().integrate(a, b, &mut f);
        let error = (fine - coarse).abs();
        let tolerance = self.tolerance_for(fine);
        if error > tolerance {
            return Err(QuadratureError::NotConverged {
                coarse,
                fine,
                tolerance,
            });
        }
        Ok(Estimate { value: fine, error })
    }
}

fn needs_substitution(exponent: f64) -> bool {
    exponent != 0.0 && (exponent - exponent.round()).abs() > 1e-12
}

pub fn uniform_panels(a: f64, b: f64, count: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / count as f64;
    (0..count)
        .map(|k| {
            let lo = a + h * k as f64;
            let hi = if k + 1 == count { b } else { a + h * (k + 1) as f64 };
            (lo, hi)
        })
        .collect()
}

/// Splits `[a, b]` at the sorted `breaks`, then each piece into panels no
/// longer than `(b - a) / count`.
pub fn panels_with_breaks(a: f64, b: f64, breaks: &[f64], count: usize) -> Vec<(f64, f64)> {
    let max_len = (b - a) / count as f64;
    let mut cuts = vec![a];
    cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let pieces = ((w[1] - w[0]) / max_len).ceil().max(1.0) as usize;
        out.extend(uniform_panels(w[0], w[1], pieces));
    }
    out
}

/// Running integrals `∫_{xs[0]}^{xs[i]} f` for increasing `xs`, each gap
/// integrated with `rule`.
pub fn cumulative_integral<F: FnMut(f64) -> f64>(xs: &[f64], rule: &GaussRule, mut f: F) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    if let Some(&first) = xs.first() {
        out.push(0.0);
        let mut prev = first;
        for &x in &xs[1..] {
            acc += rule.integrate(prev, x, &mut f);
            out.push(acc);
            prev = x;
        }
    }
    out
}
