//! Associated Legendre functions of the first kind, their second-kind
//! companions `P̃_n^m`, norms, and helpers shared by the spectral code.
//!
//! Sign convention: `P_n^m` carries the Condon–Shortley factor `(-1)^m`,
//! so `P_1^1(z) = -sqrt(1 - z^2)`. Every module downstream uses this
//! convention.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LegendreError {
    #[error("order m = {m} exceeds degree n = {n}")]
    OrderExceedsDegree { n: usize, m: usize },
    #[error("argument z = {0} outside [-1, 1]")]
    OutOfDomain(f64),
    #[error("P̃_{n}^{m} has a pole at z = -1")]
    Pole { n: usize, m: usize },
}

/// Degree/order pair `(n, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LegendreIndex {
    pub n: usize,
    pub m: usize,
}

impl LegendreIndex {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, m }
    }

    fn check_first_kind(self) -> Result<(), LegendreError> {
        if self.m > self.n {
            return Err(LegendreError::OrderExceedsDegree { n: self.n, m: self.m });
        }
        Ok(())
    }
}

fn check_z(z: f64) -> Result<(), LegendreError> {
    if !(-1.0..=1.0).contains(&z) || z.is_nan() {
        return Err(LegendreError::OutOfDomain(z));
    }
    Ok(())
}

/// `P_n^m(z)` with the `(-1)^m` factor.
pub fn legendre_p(idx: LegendreIndex, z: f64) -> Result<f64, LegendreError> {
    idx.check_first_kind()?;
    check_z(z)?;
    Ok(p_unchecked(idx.n, idx.m, z))
}

/// `P_n^m(z) / (1 - z^2)^{m/2}`, a polynomial of degree `n - m`.
///
/// Products such as `(P_n^m)^2 ((1-z)/(1+z))^m` are evaluated through this
/// polynomial part so that no intermediate power over- or underflows near
/// the poles.
pub fn legendre_p_reduced(idx: LegendreIndex, z: f64) -> Result<f64, LegendreError> {
    idx.check_first_kind()?;
    check_z(z)?;
    Ok(reduced_unchecked(idx.n, idx.m, z))
}

/// `(-1)^m (2m-1)!!`, the value of the reduced `P_m^m`.
fn diagonal_seed(m: usize) -> f64 {
    let mut v = 1.0;
    for k in 0..m {
        v *= -((2 * k + 1) as f64);
    }
    v
}

/// Runs the upward three-term recurrence in the degree and returns
/// `(q_{n-1}^m, q_n^m)` for the reduced polynomial part.
fn reduced_pair(n: usize, m: usize, z: f64) -> (f64, f64) {
    debug_assert!(m <= n);
    let mut prev = 0.0;
    let mut cur = diagonal_seed(m);
    for k in m..n {
        let next = ((2 * k + 1) as f64 * z * cur - (k + m) as f64 * prev) / (k - m + 1) as f64;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

pub(crate) fn reduced_unchecked(n: usize, m: usize, z: f64) -> f64 {
    reduced_pair(n, m, z).1
}

pub(crate) fn sin_power(m: usize, z: f64) -> f64 {
    let s2 = (1.0 - z * z).max(0.0);
    if m % 2 == 0 {
        s2.powi((m / 2) as i32)
    } else {
        s2.sqrt().powi(m as i32)
    }
}

pub(crate) fn p_unchecked(n: usize, m: usize, z: f64) -> f64 {
    reduced_unchecked(n, m, z) * sin_power(m, z)
}

/// Values `P_m^m(z), P_{m+1}^m(z), ..., P_{n_max}^m(z)`.
pub fn legendre_column(m: usize, n_max: usize, z: f64) -> Vec<f64> {
    if n_max < m {
        return Vec::new();
    }
    let s = sin_power(m, z);
    let mut out = Vec::with_capacity(n_max - m + 1);
    let mut prev = 0.0;
    let mut cur = diagonal_seed(m);
    out.push(cur * s);
    for k in m..n_max {
        let next = ((2 * k + 1) as f64 * z * cur - (k + m) as f64 * prev) / (k - m + 1) as f64;
        prev = cur;
        cur = next;
        out.push(cur * s);
    }
    out
}

/// First-kind value together with its first and second derivatives in `z`.
///
/// Uses `(1-z^2) P_n^m' = (n+m) P_{n-1}^m - n z P_n^m` and its derivative;
/// valid for interior `z`.
#[derive(Debug, Clone, Copy)]
pub struct LegendreDerivs {
    pub value: f64,
    pub deriv: f64,
    pub second: f64,
    /// `d/dz [(1-z^2) P']`, the radial part of the Laplace–Beltrami operator.
    pub flux_deriv: f64,
}

pub fn legendre_p_derivs(n: usize, m: usize, z: f64) -> LegendreDerivs {
    debug_assert!(m <= n);
    let s = sin_power(m, z);
    let w = 1.0 - z * z;
    // degrees n-2, n-1, n of the reduced recurrence
    let (q_nm2, q_nm1) = if n >= 1 && n > m {
        reduced_pair(n - 1, m, z)
    } else {
        (0.0, 0.0)
    };
    let (_, q_n) = reduced_pair(n, m, z);
    let p_n = q_n * s;
    let p_nm1 = if n > m { q_nm1 * s } else { 0.0 };
    let p_nm2 = if n >= m + 2 { q_nm2 * s } else { 0.0 };
    let nf = n as f64;
    let mf = m as f64;
    let flux_n = (nf + mf) * p_nm1 - nf * z * p_n;
    let flux_nm1 = if n > m {
        (nf - 1.0 + mf) * p_nm2 - (nf - 1.0) * z * p_nm1
    } else {
        0.0
    };
    let deriv = flux_n / w;
    let flux_deriv = (nf + mf) * flux_nm1 / w - nf * p_n - nf * z * deriv;
    let second = (flux_deriv + 2.0 * z * deriv) / w;
    LegendreDerivs {
        value: p_n,
        deriv,
        second,
        flux_deriv,
    }
}

/// `ln ∫_{-1}^{1} (P_n^m)^2 dz`.
pub fn ln_legendre_norm(n: usize, m: usize) -> f64 {
    std::f64::consts::LN_2 + ln_factorial((n + m) as u64)
        - ln_factorial((n - m) as u64)
        - ((2 * n + 1) as f64).ln()
}

/// `∫_{-1}^{1} (P_n^m(z))^2 dz = 2 (n+m)! / ((2n+1) (n-m)!)`.
pub fn legendre_norm(idx: LegendreIndex) -> Result<f64, LegendreError> {
    idx.check_first_kind()?;
    Ok(ln_legendre_norm(idx.n, idx.m).exp())
}

/// `P_n^m` scaled to unit `L^2(-1, 1)` norm.
pub fn legendre_p_normalized(n: usize, m: usize, z: f64) -> f64 {
    p_unchecked(n, m, z) * (-0.5 * ln_legendre_norm(n, m)).exp()
}

/// Normalized column `P̄_m^m(z) .. P̄_{n_max}^m(z)`.
pub fn legendre_column_normalized(m: usize, n_max: usize, z: f64) -> Vec<f64> {
    let mut col = legendre_column(m, n_max, z);
    for (k, v) in col.iter_mut().enumerate() {
        *v *= (-0.5 * ln_legendre_norm(m + k, m)).exp();
    }
    col
}

/// Jacobi polynomial `P_n^{(a,b)}(x)` by the three-term recurrence in `n`;
/// needs `a + b >= 0` so the recurrence never divides by zero.
fn jacobi(n: usize, a: f64, b: f64, x: f64) -> f64 {
    let p0 = 1.0;
    if n == 0 {
        return p0;
    }
    let s = a + b;
    let mut prev = p0;
    let mut cur = (a + 1.0) + 0.5 * (s + 2.0) * (x - 1.0);
    for k in 2..=n {
        let k = k as f64;
        let c1 = 2.0 * k * (k + s) * (2.0 * k + s - 2.0);
        let c2 = (2.0 * k + s - 1.0) * ((2.0 * k + s) * (2.0 * k + s - 2.0) * x + a * a - b * b);
        let c3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * (2.0 * k + s);
        let next = (c2 * cur - c3 * prev) / c1;
        prev = cur;
        cur = next;
    }
    cur
}

/// Polynomial factor `S(z)` of `P̃_n^m = ((1-z)/(1+z))^{m/2} S(z)` and its
/// first two derivatives.
///
/// `S = ₂F₁(-n, n+1; m+1; (1-z)/2) = n!/(m+1)_n · P_n^{(m,-m)}(z)`, evaluated
/// as a Jacobi polynomial: the alternating power series in `(1-z)/2` loses
/// digits to cancellation once `n` grows.
#[derive(Debug, Clone)]
pub struct SecondKind {
    pub n: usize,
    pub m: usize,
    scale: f64,
}

impl SecondKind {
    pub fn new(idx: LegendreIndex) -> Self {
        let (n, m) = (idx.n as u64, idx.m as u64);
        let ln = ln_factorial(n) + ln_factorial(m) - ln_factorial(n + m);
        Self {
            n: idx.n,
            m: idx.m,
            scale: ln.exp(),
        }
    }

    /// `(S, S', S'')` at `z`.
    pub fn polynomial(&self, z: f64) -> (f64, f64, f64) {
        let (n, mf) = (self.n, self.m as f64);
        let nf = n as f64;
        let s = jacobi(n, mf, -mf, z);
        // d/dz P_k^{(a,b)} = (k + a + b + 1)/2 · P_{k-1}^{(a+1,b+1)}
        let d1 = if n >= 1 {
            0.5 * (nf + 1.0) * jacobi(n - 1, mf + 1.0, 1.0 - mf, z)
        } else {
            0.0
        };
        let d2 = if n >= 2 {
            0.25 * (nf + 1.0) * (nf + 2.0) * jacobi(n - 2, mf + 2.0, 2.0 - mf, z)
        } else {
            0.0
        };
        (self.scale * s, self.scale * d1, self.scale * d2)
    }

    fn ratio_power(&self, z: f64) -> f64 {
        ((1.0 - z) / (1.0 + z)).powf(0.5 * self.m as f64)
    }

    pub fn value(&self, z: f64) -> f64 {
        self.ratio_power(z) * self.polynomial(z).0
    }

    /// Value, first derivative and second derivative.
    pub fn derivs(&self, z: f64) -> (f64, f64, f64) {
        let t = self.ratio_power(z);
        let (s, s1, s2) = self.polynomial(z);
        let w = 1.0 - z * z;
        let mf = self.m as f64;
        let inner = s1 - mf * s / w;
        let d1 = t * inner;
        let inner_deriv = s2 - mf * s1 / w - mf * s * 2.0 * z / (w * w);
        let d2 = t * (-mf / w * inner + inner_deriv);
        (t * s, d1, d2)
    }

    /// `1 / ((1 - z^2) P̃(z)^2)` without forming `P̃^2`.
    pub fn inverse_weight(&self, z: f64) -> f64 {
        let (s, _, _) = self.polynomial(z);
        let mf = self.m as i32;
        (1.0 + z).powi(mf - 1) / ((1.0 - z).powi(mf + 1) * s * s)
    }
}

/// `P̃_n^m(z)`: the second-kind companion bounded away from the south pole.
pub fn legendre_p_tilde(idx: LegendreIndex, z: f64) -> Result<f64, LegendreError> {
    check_z(z)?;
    if z == -1.0 && idx.m >= 1 {
        return Err(LegendreError::Pole { n: idx.n, m: idx.m });
    }
    Ok(SecondKind::new(idx).value(z))
}

/// Simple zeros of `f` in `(a, b)`, located by sign scanning on `samples`
/// subintervals followed by bisection.
pub fn simple_zeros<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, samples: usize) -> Vec<f64> {
    let mut zeros = Vec::new();
    let h = (b - a) / samples as f64;
    let mut x0 = a + 1e-12 * (b - a);
    let mut f0 = f(x0);
    for i in 1..=samples {
        let x1 = if i == samples { b - 1e-12 * (b - a) } else { a + h * i as f64 };
        let f1 = f(x1);
        if f0 == 0.0 {
            zeros.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo < 4.0 * f64::EPSILON * mid.abs().max(1e-300) {
                    break;
                }
            }
            zeros.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    zeros
}

/// Interior zeros of `P_n^m`, i.e. of its reduced polynomial part.
pub fn legendre_zeros(n: usize, m: usize) -> Vec<f64> {
    if n <= m {
        return Vec::new();
    }
    simple_zeros(|z| reduced_unchecked(n, m, z), -1.0, 1.0, 64 * (n + 2))
}
