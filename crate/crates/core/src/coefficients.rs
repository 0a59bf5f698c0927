//! Derivatives of the bifurcation parameter along the branch: `μ'(0)`,
//! the curvature `μ''(0)` as three nested integrals, and the sign table.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inversion::{FnProfile, GluedAntiderivative, InversionError, Numerator, SecondKindProfile};
use crate::legendre::{legendre_p_reduced, ln_legendre_norm, LegendreIndex};
use crate::quadrature::{QuadratureError, QuadratureSpec};
use crate::spectral::{
    coupling_eigenvalue, coupling_eigenvalue_deriv, mu_n, restricted_kernel_basis, Component,
    SpectralError, SpectralGrid, SymmetryClass,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("invalid index n={n}, m={m}")]
    InvalidIndex { n: usize, m: usize },
    #[error("{term} did not converge under refinement: {coarse} vs {fine} (tolerance {tolerance:e})")]
    Precision {
        term: &'static str,
        coarse: f64,
        fine: f64,
        tolerance: f64,
    },
    #[error(transparent)]
    Inversion(#[from] InversionError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

fn check_index(n: usize, m: usize) -> Result<(), CoefficientError> {
    if n == 0 || m > n {
        return Err(CoefficientError::InvalidIndex { n, m });
    }
    Ok(())
}

fn ln_factorial(k: usize) -> f64 {
    statrs::function::factorial::ln_factorial(k as u64)
}

/// `ln ∫ (P_n^m)^2` over `[-1, 1]`.
fn ln_nz(n: usize, m: usize) -> f64 {
    ln_legendre_norm(n, m)
}

/// `ln C_{n,m}`.
pub fn ln_c_nm(n: usize, m: usize) -> f64 {
    let (nf, n2) = (n as f64, (n * n) as f64);
    (nf * (nf + 1.0)).ln() - (4.0 * (n2 + nf + 1.0) * std::f64::consts::PI).ln()
        + 2.0 * ((2.0 * nf + 1.0).ln() + ln_factorial(n - m) - (n2 + nf + 2.0).ln() - ln_factorial(n + m))
}

/// The positive prefactor of the curvature integrals.
pub fn c_nm(n: usize, m: usize) -> f64 {
    assert!(m <= n, "c_nm needs m <= n");
    ln_c_nm(n, m).exp()
}

/// `C_{n,m} · (∫(P_n^m)^2)^2`: the prefactor when the integrals are taken
/// with unit-norm functions.
pub fn c_nm_normalized(n: usize) -> f64 {
    let (nf, n2) = (n as f64, (n * n) as f64);
    nf * (nf + 1.0) / ((n2 + nf + 1.0) * (n2 + nf + 2.0).powi(2) * std::f64::consts::PI)
}

/// Whether `1 <= n/m < 3`, the range where the curvature formula is stated.
pub fn within_hypothesis(n: usize, m: usize) -> bool {
    m >= 1 && 3 * m > n
}

/// `μ'(0)` from the first-order bifurcation formula, with the second
/// derivative of the nonlinearity taken by central differences on a grid.
pub fn mu_prime(n: usize, m: usize) -> Result<f64, CoefficientError> {
    check_index(n, m)?;
    let class = SymmetryClass::new(n, m)?;
    let w0 = restricted_kernel_basis(&class)
        .into_iter()
        .next()
        .ok_or(CoefficientError::InvalidIndex { n, m })?;
    let mu = mu_n(n);
    let lambda = coupling_eigenvalue(mu)?;
    let grid = SpectralGrid::for_truncation(class, n);
    let w = grid.synthesize(Component::Second, w0.coeffs(Component::Second));
    let nonlinear = |t: f64, k: usize| -> [f64; 2] {
        let phi2 = t * w[k];
        let (ep, em) = ((0.5 * phi2).exp(), (-0.5 * phi2).exp());
        [2.0 * (ep + em - 2.0), lambda * (ep - em)]
    };
    let h = 1e-3;
    let mut second = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
    for k in 0..grid.len() {
        let (a, b, c) = (nonlinear(h, k), nonlinear(0.0, k), nonlinear(-h, k));
        for comp in 0..2 {
            second[comp][k] = (a[comp] - 2.0 * b[comp] + c[comp]) / (h * h);
        }
    }
    // y0 = w0, whose first component vanishes
    let pairing: Vec<f64> = (0..grid.len()).map(|k| second[1][k] * w[k]).collect();
    let numerator = grid.integrate(&pairing);
    let norm_sq = w0.norm().powi(2);
    let h1_norm = (((n * n + n + 1) as f64) * norm_sq).sqrt();
    let denominator = h1_norm * coupling_eigenvalue_deriv(mu) * norm_sq;
    Ok(-0.5 * numerator / denominator)
}

/// The three integrals of the curvature formula, in one normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureTerms {
    pub quartic: f64,
    pub radial: f64,
    pub angular: f64,
}

impl CurvatureTerms {
    pub fn bracket(&self) -> f64 {
        self.quartic + 2.0 * self.radial + self.angular
    }

    fn scaled(&self, k: f64) -> Self {
        Self {
            quartic: self.quartic * k,
            radial: self.radial * k,
            angular: self.angular * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureResult {
    pub n: usize,
    pub m: usize,
    pub c_nm: f64,
    pub term_quartic: f64,
    pub term_radial: f64,
    pub term_angular: f64,
    /// `c_nm · (quartic + 2 radial + angular)`
    pub mu2: f64,
    /// The same three integrals for unit-norm `P_n^m`.
    pub normalized: CurvatureTerms,
    /// `μ''` along a branch parametrized so that `φ_2 = 2ε w_0 + O(ε^2)`
    /// with `w_0 = P_n^m(z) cos(mθ)`.
    pub mu2_branch: f64,
    pub error_estimate: f64,
    pub within_hypothesis: bool,
}

/// `P̄_n^m / (1 - z^2)^{m/2}` for unit-norm `P̄`.
fn reduced_normalized(n: usize, m: usize, z: f64) -> f64 {
    legendre_p_reduced(LegendreIndex::new(n, m), z).expect("valid index") * (-0.5 * ln_nz(n, m)).exp()
}

fn quartic_term(n: usize, m: usize, spec: &QuadratureSpec) -> f64 {
    spec.integrate(0.0, 1.0, |z| {
        let q = reduced_normalized(n, m, z);
        let p2 = (1.0 - z * z).powi(m as i32) * q * q;
        p2 * p2
    })
}

fn outer(glued: &GluedAntiderivative, weight: impl Fn(f64) -> f64) -> f64 {
    let f = glued.node_values();
    glued
        .nodes()
        .iter()
        .zip(glued.weights())
        .zip(&f)
        .map(|((&z, &w), &v)| w * weight(z) * v)
        .sum()
}

fn radial_term(n: usize, m: usize, spec: &QuadratureSpec) -> Result<f64, CoefficientError> {
    let weight = move |x: f64| {
        let q = reduced_normalized(n, m, x);
        x * (1.0 - x * x).powi(m as i32) * q * q
    };
    let glued = GluedAntiderivative::new(
        FnProfile::new(|z| (z, 1.0, 0.0), vec![0.0]),
        Numerator::InnerIntegral {
            integrand: Box::new(weight),
            two_sided: true,
        },
        (-1.0, 1.0),
        spec,
    )?;
    Ok(outer(&glued, weight))
}

fn angular_term(n: usize, m: usize, spec: &QuadratureSpec) -> Result<f64, CoefficientError> {
    if m == 0 {
        return radial_term(n, 0, spec);
    }
    let k = 2 * m;
    // (x + 2m)((1-x)/(1+x))^m (P_n^m)^2 / (2m+1) with the poles cancelled
    let weight = move |x: f64| {
        let q = reduced_normalized(n, m, x);
        (x + k as f64) * (1.0 - x).powi(k as i32) * q * q / (k + 1) as f64
    };
    let glued = GluedAntiderivative::new(
        SecondKindProfile::new(1, k),
        Numerator::InnerIntegral {
            integrand: Box::new(weight),
            two_sided: false,
        },
        (-1.0, 1.0),
        spec,
    )?;
    Ok(outer(&glued, weight))
}

/// The three integrals for unit-norm `P_n^m` at one resolution.
pub fn curvature_terms(n: usize, m: usize, spec: &QuadratureSpec) -> Result<CurvatureTerms, CoefficientError> {
    check_index(n, m)?;
    spec.validate()?;
    Ok(CurvatureTerms {
        quartic: quartic_term(n, m, spec),
        radial: radial_term(n, m, spec)?,
        angular: angular_term(n, m, spec)?,
    })
}

/// `μ''(0)` with an error estimate from one refinement of `spec`.
pub fn mu_second(n: usize, m: usize, spec: &QuadratureSpec) -> Result<CurvatureResult, CoefficientError> {
    let coarse = curvature_terms(n, m, spec)?;
    let fine = curvature_terms(n, m, &spec.refined())?;
    for (term, a, b) in [
        ("quartic", coarse.quartic, fine.quartic),
        ("radial", coarse.radial, fine.radial),
        ("angular", coarse.angular, fine.angular),
    ] {
        let tolerance = spec.tolerance_for(b);
        if (a - b).abs() > tolerance || !b.is_finite() {
            return Err(CoefficientError::Precision {
                term,
                coarse: a,
                fine: b,
                tolerance,
            });
        }
    }
    let c_bar = c_nm_normalized(n);
    let delta = (coarse.quartic - fine.quartic).abs()
        + 2.0 * (coarse.radial - fine.radial).abs()
        + (coarse.angular - fine.angular).abs();
    let magnitude = fine.quartic.abs() + 2.0 * fine.radial.abs() + fine.angular.abs();
    let error_estimate = c_bar * (delta + 1e4 * f64::EPSILON * magnitude);

    let nz = ln_nz(n, m).exp();
    let literal = fine.scaled(nz * nz);
    let c = c_nm(n, m);
    let mut mu2 = c * literal.bracket();
    if !mu2.is_finite() {
        mu2 = c_bar * fine.bracket();
    }
    let mu = mu_n(n);
    let nf = n as f64;
    let denom = if m == 0 { 12.0 } else { 16.0 };
    let mu2_branch = nf * (nf + 1.0) * (2.0 + mu).powi(2) * nz * fine.bracket() / denom;
    Ok(CurvatureResult {
        n,
        m,
        c_nm: c,
        term_quartic: literal.quartic,
        term_radial: literal.radial,
        term_angular: literal.angular,
        mu2,
        normalized: fine,
        mu2_branch,
        error_estimate,
        within_hypothesis: within_hypothesis(n, m),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
    /// `|mu2|` below its error estimate.
    #[serde(rename = "0*")]
    Indeterminate,
}

impl Sign {
    pub fn classify(value: f64, error: f64) -> Self {
        if value.abs() <= error {
            Sign::Indeterminate
        } else if value > 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
            Sign::Indeterminate => "0*",
        })
    }
}

/// Known sign pattern for `3 <= n <= 30`: positive for `m <= a`, negative for
/// `a < m <= b`, positive above. Rows from 23 on are positive throughout.
const REFERENCE_BANDS: [(usize, usize, usize); 20] = [
    (3, 1, 2),
    (4, 1, 3),
    (5, 1, 4),
    (6, 1, 4),
    (7, 2, 5),
    (8, 2, 6),
    (9, 3, 6),
    (10, 3, 7),
    (11, 3, 8),
    (12, 4, 8),
    (13, 4, 9),
    (14, 5, 9),
    (15, 5, 10),
    (16, 6, 10),
    (17, 7, 11),
    (18, 7, 11),
    (19, 8, 11),
    (20, 9, 12),
    (21, 10, 12),
    (22, 11, 12),
];

/// The tabulated sign of `μ''(0)`, where known.
pub fn reference_sign(n: usize, m: usize) -> Option<Sign> {
    if m > n {
        return None;
    }
    match n {
        2 => Some(Sign::Indeterminate),
        23..=30 => Some(Sign::Positive),
        _ => REFERENCE_BANDS.iter().find(|r| r.0 == n).map(|&(_, a, b)| {
            if m > a && m <= b {
                Sign::Negative
            } else {
                Sign::Positive
            }
        }),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignRow {
    pub n: usize,
    pub m: usize,
    pub sign: Option<Sign>,
    pub mu2: Option<f64>,
    pub error_estimate: Option<f64>,
    pub result: Option<CurvatureResult>,
    pub error: Option<String>,
}

impl SignRow {
    fn from_result(n: usize, m: usize, r: Result<CurvatureResult, CoefficientError>) -> Self {
        match r {
            Ok(res) => Self {
                n,
                m,
                sign: Some(Sign::classify(res.mu2, res.error_estimate)),
                mu2: Some(res.mu2),
                error_estimate: Some(res.error_estimate),
                result: Some(res),
                error: None,
            },
            Err(e) => Self {
                n,
                m,
                sign: None,
                mu2: None,
                error_estimate: None,
                result: None,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn matches_reference(&self) -> Option<bool> {
        Some(self.sign? == reference_sign(self.n, self.m)?)
    }
}

/// Rows `(n, m)` for `n_min <= n <= n_max`, `0 <= m <= n`, in order. Rows are
/// computed in parallel; a failing row carries its error.
pub fn sign_table(n_min: usize, n_max: usize, spec: &QuadratureSpec) -> Result<Vec<SignRow>, CoefficientError> {
    if n_min == 0 || n_min > n_max {
        return Err(CoefficientError::InvalidIndex { n: n_min, m: n_max });
    }
    spec.validate()?;
    let pairs: Vec<(usize, usize)> = (n_min..=n_max).flat_map(|n| (0..=n).map(move |m| (n, m))).collect();
    Ok(pairs
        .into_par_iter()
        .map(|(n, m)| SignRow::from_result(n, m, mu_second(n, m, spec)))
        .collect())
}

/// CSV with columns `n,m,mu2,error,sign`.
pub fn write_sign_table_csv<W: Write>(rows: &[SignRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "m", "mu2", "error", "sign"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.m.to_string(),
            r.mu2.map(|v| format!("{v:.12e}")).unwrap_or_default(),
            r.error_estimate.map(|v| format!("{v:.3e}")).unwrap_or_default(),
            r.sign.map(|s| s.to_string()).unwrap_or_else(|| "error".into()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sign_table_json(rows: &[SignRow]) -> serde_json::Result<String> {
    serde_json::to_string_pretty(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::{legendre_p, legendre_p_normalized};
    use crate::quadrature::GaussRule;
    use approx::assert_relative_eq;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    /// `-Σ_l <P^2, P̄_l^j>^2 / (2 - l(l+1))`, the same quantity expanded on
    /// eigenfunctions.
    fn spectral_sum(n: usize, m: usize, j: usize) -> f64 {
        let rule = GaussRule::new(4 * n + 8);
        let mut total = 0.0;
        for l in j..=2 * n {
            if l == 1 {
                continue;
            }
            let c: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&z, &w)| w * legendre_p_normalized(n, m, z).powi(2) * legendre_p_normalized(l, j, z))
                .sum();
            total -= c * c / (2.0 - (l * (l + 1)) as f64);
        }
        total
    }

    #[test]
    fn prefactor_values() {
        assert_relative_eq!(c_nm(3, 2), 1.0 / (249600.0 * std::f64::consts::PI), max_relative = 1e-13);
        assert_relative_eq!(
            c_nm(1, 1),
            (1.0 / (6.0 * std::f64::consts::PI)) * (9.0 / 64.0),
            max_relative = 1e-13
        );
        for n in 1..=30 {
            for m in 0..=n {
                assert!(c_nm(n, m) > 0.0);
                let nz = ln_nz(n, m).exp();
                assert_relative_eq!(c_nm(n, m) * nz * nz, c_nm_normalized(n), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn first_derivative_vanishes() {
        for (n, m) in [(3, 2), (2, 1), (5, 4), (3, 0), (4, 4)] {
            assert!(mu_prime(n, m).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn parity_identity() {
        let rule = GaussRule::new(64);
        for n in 1..=10 {
            for m in 0..=n {
                let s: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&z, &w)| w * z * legendre_p_normalized(n, m, z).powi(2))
                    .sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn terms_match_eigenfunction_expansion() {
        for (n, m) in [(3, 0), (3, 2), (4, 1), (5, 3), (6, 6), (7, 2)] {
            let t = curvature_terms(n, m, &spec()).unwrap();
            assert_relative_eq!(t.radial, spectral_sum(n, m, 0), max_relative = 1e-10, epsilon = 1e-13);
            assert_relative_eq!(t.angular, spectral_sum(n, m, 2 * m), max_relative = 1e-10, epsilon = 1e-13);
        }
    }

    #[test]
    fn quartic_term_by_direct_quadrature() {
        let rule = GaussRule::new(40);
        let (n, m) = (5, 2);
        let direct = rule.integrate(0.0, 1.0, |z| legendre_p(LegendreIndex::new(n, m), z).unwrap().powi(4));
        let r = mu_second(n, m, &spec()).unwrap();
        assert_relative_eq!(r.term_quartic, direct, max_relative = 1e-12);
    }

    #[test]
    fn known_values() {
        let r = mu_second(3, 0, &spec()).unwrap();
        assert_relative_eq!(r.term_radial, -1.0 / 65.0, max_relative = 1e-10);
        assert_relative_eq!(r.term_angular, r.term_radial, max_relative = 1e-14);
        let r = mu_second(4, 1, &spec()).unwrap();
        assert_relative_eq!(r.term_radial, -4.24164071223, max_relative = 1e-10);
        let r = mu_second(3, 2, &spec()).unwrap();
        assert_relative_eq!(r.term_quartic, 431.568, max_relative = 1e-5);
        assert_relative_eq!(r.term_radial, -279.720, max_relative = 1e-5);
        assert_relative_eq!(r.term_angular, 31.968, max_relative = 1e-5);
        assert_relative_eq!(r.mu2, -1.2230e-4, max_relative = 1e-4);
        assert_relative_eq!(r.mu2_branch, -0.68503, max_relative = 1e-4);
        assert!(r.within_hypothesis);
        assert_relative_eq!(mu_second(3, 3, &spec()).unwrap().mu2_branch, 3.5964, max_relative = 1e-4);
        assert_relative_eq!(mu_second(4, 3, &spec()).unwrap().mu2_branch, -11.8739, max_relative = 1e-4);
    }

    #[test]
    fn invariants_hold_by_construction() {
        for (n, m) in [(3, 1), (6, 4), (9, 9)] {
            let r = mu_second(n, m, &spec()).unwrap();
            let b = r.term_quartic + 2.0 * r.term_radial + r.term_angular;
            assert_eq!(r.mu2, r.c_nm * b);
            assert!(r.error_estimate < 1e-3 * r.mu2.abs().max(1.0));
        }
    }

    #[test]
    fn degenerate_rows_are_flat() {
        for m in 1..=2 {
            let r = mu_second(2, m, &spec()).unwrap();
            assert!(r.mu2.abs() < r.error_estimate, "{:e} vs {:e}", r.mu2, r.error_estimate);
            assert!(r.error_estimate < 1e-6);
        }
    }

    #[test]
    fn reference_rows() {
        let signs: String = (0..=10).map(|m| reference_sign(10, m).unwrap().to_string()).collect();
        assert_eq!(signs, "++++----+++");
        assert!((0..=23).all(|m| reference_sign(23, m) == Some(Sign::Positive)));
        assert_eq!(reference_sign(31, 0), None);
    }

    #[test]
    fn small_table_matches() {
        let rows = sign_table(3, 5, &spec()).unwrap();
        assert_eq!(rows.len(), 4 + 5 + 6);
        for r in &rows {
            assert_eq!(r.matches_reference(), Some(true), "row ({}, {})", r.n, r.m);
        }
        let mut buf = Vec::new();
        write_sign_table_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,m,mu2,error,sign\n3,0,"));
        assert!(sign_table_json(&rows).unwrap().contains("\"sign\": \"-\""));
    }

    #[test]
    fn bad_index_is_rejected() {
        assert!(matches!(mu_second(2, 3, &spec()), Err(CoefficientError::InvalidIndex { .. })));
        assert!(sign_table(4, 3, &spec()).is_err());
    }
}
