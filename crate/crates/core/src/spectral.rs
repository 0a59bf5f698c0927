//! Spectral structure of the linearized operator on the sphere: eigenvalues,
//! kernels, the symmetry classes `X_{n,m}` and fields stored on their modes.
//!
//! Fields use the real `L^2(S^2)`-orthonormal basis
//! `b_{l,j}(θ, z) = P̄_l^j(z) cos(jθ) / sqrt(π)` (`j ≥ 1`) or `/ sqrt(2π)`
//! (`j = 0`), where `P̄` is `P_l^j` scaled to unit norm on `[-1, 1]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::legendre::{legendre_column_normalized, legendre_norm, legendre_p, LegendreIndex};
use crate::quadrature::GaussRule;

/// Relative tolerance used to decide `μ = μ_n`.
pub const MU_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("coupling {0} lies outside (-2, 2)")]
    Domain(f64),
    #[error("coupling -2 is a pole of the linearization")]
    Pole,
    #[error("coupling {mu} is within tolerance of the bifurcation value for n = {n}")]
    Ambiguous { mu: f64, n: usize },
    #[error("invalid symmetry class: {0}")]
    InvalidClass(String),
    #[error("mode (l = {l}, j = {j}) is not admissible for component {component:?}")]
    Inadmissible { component: Component, l: usize, j: usize },
    #[error("grid too small: {0}")]
    Grid(String),
    #[error("field classes or truncations differ")]
    Mismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    First,
    Second,
}

impl Component {
    pub const BOTH: [Component; 2] = [Component::First, Component::Second];

    pub fn index(self) -> usize {
        match self {
            Component::First => 0,
            Component::Second => 1,
        }
    }
}

/// Degree `l` and angular frequency `j` of a cosine mode `P_l^j(z) cos(jθ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode {
    pub l: usize,
    pub j: usize,
}

/// `2 (2 - μ) / (2 + μ)`, the eigenvalue seen by the second component.
pub fn coupling_eigenvalue(mu: f64) -> Result<f64, SpectralError> {
    if mu == -2.0 {
        return Err(SpectralError::Pole);
    }
    Ok(2.0 * (2.0 - mu) / (2.0 + mu))
}

/// `d/dμ [2 (2 - μ) / (2 + μ)] = -8 / (2 + μ)^2`.
pub fn coupling_eigenvalue_deriv(mu: f64) -> f64 {
    -8.0 / ((2.0 + mu) * (2.0 + mu))
}

/// Bifurcation values `μ_n = -2 (n^2 + n - 2) / (n^2 + n + 2)`.
pub fn mu_n(n: usize) -> f64 {
    let k = (n * (n + 1)) as f64;
    -2.0 * (k - 2.0) / (k + 2.0)
}

/// The level `n ≥ 1` with `μ = μ_n`, if any.
pub fn level_for_mu(mu: f64) -> Option<usize> {
    if !(mu > -2.0 && mu < 2.0) {
        return None;
    }
    let lambda = 2.0 * (2.0 - mu) / (2.0 + mu);
    let guess = ((-1.0 + (1.0 + 4.0 * lambda).sqrt()) / 2.0).round();
    if guess < 1.0 {
        return None;
    }
    let n = guess as usize;
    let target = mu_n(n);
    ((mu - target).abs() <= MU_MATCH_TOL * target.abs().max(1.0)).then_some(n)
}

fn check_mu(mu: f64) -> Result<(), SpectralError> {
    if mu == -2.0 {
        return Err(SpectralError::Pole);
    }
    if !(mu > -2.0 && mu < 2.0) {
        return Err(SpectralError::Domain(mu));
    }
    Ok(())
}

/// The symmetry data behind `X_{n,m}`: `φ1` is invariant under `σ, ρ_m, τ_m`;
/// `φ2` picks up `(-1)^{n+m}, -1, -1`. `m = 0` is the class of functions of
/// `z` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymmetryClass {
    n: usize,
    m: usize,
}

impl SymmetryClass {
    pub fn new(n: usize, m: usize) -> Result<Self, SpectralError> {
        if n == 0 {
            return Err(SpectralError::InvalidClass("n must be at least 1".into()));
        }
        if m > n {
            return Err(SpectralError::InvalidClass(format!("m = {m} exceeds n = {n}")));
        }
        Ok(Self { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_radial(&self) -> bool {
        self.m == 0
    }

    /// `(-1)^{n+m}`: parity of `φ2` under `z → -z`.
    pub fn reflection_sign(&self) -> f64 {
        if (self.n + self.m) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn admits(&self, component: Component, mode: Mode) -> bool {
        let Mode { l, j } = mode;
        if l < j {
            return false;
        }
        let m = self.m;
        match component {
            Component::First => {
                let j_ok = if m == 0 { j == 0 } else { j % (2 * m) == 0 };
                j_ok && l % 2 == 0
            }
            Component::Second => {
                let j_ok = if m == 0 { j == 0 } else { j % (2 * m) == m };
                j_ok && (l + self.n) % 2 == 0
            }
        }
    }

    /// Admissible modes with `l ≤ truncation`, ordered by `(j, l)`.
    pub fn modes(&self, component: Component, truncation: usize) -> Vec<Mode> {
        let mut out = Vec::new();
        for j in 0..=truncation {
            for l in j..=truncation {
                let mode = Mode { l, j };
                if self.admits(component, mode) {
                    out.push(mode);
                }
            }
        }
        out
    }

    /// Largest angular frequency among admissible modes up to `truncation`.
    pub fn max_frequency(&self, truncation: usize) -> usize {
        Component::BOTH
            .iter()
            .flat_map(|&c| self.modes(c, truncation))
            .map(|m| m.j)
            .max()
            .unwrap_or(0)
    }

    /// Whether the restricted kernel is one-dimensional.
    pub fn has_simple_kernel(&self) -> bool {
        restricted_kernel_modes(self).len() == 1
    }
}

/// `1/sqrt(π)` for `j ≥ 1`, `1/sqrt(2π)` for `j = 0`.
pub fn angular_scale(j: usize) -> f64 {
    if j == 0 {
        (2.0 * PI).sqrt().recip()
    } else {
        PI.sqrt().recip()
    }
}

/// `∫_{S^2} (P_l^j(z) cos(jθ))^2`.
pub fn mode_norm_sq(mode: Mode) -> f64 {
    let z = legendre_norm(LegendreIndex::new(mode.l, mode.j)).expect("l >= j");
    if mode.j == 0 {
        2.0 * PI * z
    } else {
        PI * z
    }
}

/// A pair of fields on the sphere, stored on the admissible modes of a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereField {
    class: SymmetryClass,
    truncation: usize,
    modes: [Vec<Mode>; 2],
    coeffs: [Vec<f64>; 2],
}

impl SphereField {
    pub fn zeros(class: SymmetryClass, truncation: usize) -> Self {
        let modes = [
            class.modes(Component::First, truncation),
            class.modes(Component::Second, truncation),
        ];
        let coeffs = [vec![0.0; modes[0].len()], vec![0.0; modes[1].len()]];
        Self {
            class,
            truncation,
            modes,
            coeffs,
        }
    }

    /// Builds a field from `(component, mode, coefficient)` triples.
    pub fn from_modes<I>(class: SymmetryClass, truncation: usize, entries: I) -> Result<Self, SpectralError>
    where
        I: IntoIterator<Item = (Component, Mode, f64)>,
    {
        let mut field = Self::zeros(class, truncation);
        for (c, mode, v) in entries {
            field.set(c, mode, v)?;
        }
        Ok(field)
    }

    pub fn class(&self) -> SymmetryClass {
        self.class
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn modes(&self, c: Component) -> &[Mode] {
        &self.modes[c.index()]
    }

    pub fn coeffs(&self, c: Component) -> &[f64] {
        &self.coeffs[c.index()]
    }

    pub fn coeffs_mut(&mut self, c: Component) -> &mut [f64] {
        &mut self.coeffs[c.index()]
    }

    fn position(&self, c: Component, mode: Mode) -> Option<usize> {
        self.modes[c.index()].binary_search_by(|m| (m.j, m.l).cmp(&(mode.j, mode.l))).ok()
    }

    pub fn set(&mut self, c: Component, mode: Mode, value: f64) -> Result<(), SpectralError> {
        if !self.class.admits(c, mode) || mode.l > self.truncation {
            return Err(SpectralError::Inadmissible {
                component: c,
                l: mode.l,
                j: mode.j,
            });
        }
        let k = self.position(c, mode).expect("admissible modes are stored");
        self.coeffs[c.index()][k] = value;
        Ok(())
    }

    /// Coefficient of `b_{l,j}`; zero for modes not stored.
    pub fn coeff(&self, c: Component, mode: Mode) -> f64 {
        self.position(c, mode).map_or(0.0, |k| self.coeffs[c.index()][k])
    }

    pub fn len(&self) -> usize {
        self.coeffs[0].len() + self.coeffs[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Both coefficient vectors, first component first.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.coeffs[0].clone();
        v.extend_from_slice(&self.coeffs[1]);
        v
    }

    pub fn set_vector(&mut self, v: &[f64]) {
        let n1 = self.coeffs[0].len();
        assert_eq!(v.len(), self.len(), "coefficient vector length");
        self.coeffs[0].copy_from_slice(&v[..n1]);
        self.coeffs[1].copy_from_slice(&v[n1..]);
    }

    /// `L^2(S^2) × L^2(S^2)` norm.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().flatten().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Same field on a different truncation; modes above it are dropped.
    pub fn with_truncation(&self, truncation: usize) -> Self {
        let mut out = Self::zeros(self.class, truncation);
        for c in Component::BOTH {
            for (mode, &v) in self.modes(c).iter().zip(self.coeffs(c)) {
                if mode.l <= truncation {
                    out.set(c, *mode, v).expect("same class");
                }
            }
        }
        out
    }

    pub fn eval(&self, c: Component, theta: f64, z: f64) -> f64 {
        let mut total = 0.0;
        let modes = self.modes(c);
        let coeffs = self.coeffs(c);
        let mut k = 0;
        while k < modes.len() {
            let j = modes[k].j;
            let end = modes[k..].iter().position(|m| m.j != j).map_or(modes.len(), |p| k + p);
            let col = legendre_column_normalized(j, modes[end - 1].l, z);
            let radial: f64 = (k..end).map(|i| coeffs[i] * col[modes[i].l - j]).sum();
            total += radial * angular_scale(j) * (j as f64 * theta).cos();
            k = end;
        }
        total
    }

    /// Fraction of the coefficient energy held by modes with `l > 0.9 L`.
    pub fn tail_energy_fraction(&self) -> f64 {
        let cutoff = 0.9 * self.truncation as f64;
        let mut tail = 0.0;
        let mut total = 0.0;
        for c in Component::BOTH {
            for (mode, v) in self.modes(c).iter().zip(self.coeffs(c)) {
                total += v * v;
                if mode.l as f64 > cutoff {
                    tail += v * v;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

/// The reflection and the two angular maps defining `X_{n,m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Isometry {
    /// `z → -z`
    Sigma,
    /// `θ → θ + π/m`
    Rho,
    /// `θ → -θ + π/m`
    Tau,
}

impl Isometry {
    pub const ALL: [Isometry; 3] = [Isometry::Sigma, Isometry::Rho, Isometry::Tau];

    /// Image of `(θ, z)`.
    pub fn apply(self, m: usize, theta: f64, z: f64) -> (f64, f64) {
        match self {
            Isometry::Sigma => (theta, -z),
            Isometry::Rho => (theta + PI / m as f64, z),
            Isometry::Tau => (-theta + PI / m as f64, z),
        }
    }

    /// Expected factor `φ ∘ g = s φ` for a member of `X_{n,m}`.
    pub fn expected_sign(self, class: &SymmetryClass, c: Component) -> f64 {
        match (c, self) {
            (Component::First, _) => 1.0,
            (Component::Second, Isometry::Sigma) => class.reflection_sign(),
            (Component::Second, _) => -1.0,
        }
    }
}

/// Tensor grid: Gauss–Legendre in `z`, uniform in `θ ∈ [0, 2π)`.
///
/// Grid values are stored row-major, `values[i * theta_count + t]`.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    class: SymmetryClass,
    truncation: usize,
    pub z: Vec<f64>,
    pub z_weights: Vec<f64>,
    pub theta: Vec<f64>,
    modes: [Vec<Mode>; 2],
    /// `radial[c][k][i] = P̄_{l_k}^{j_k}(z_i) * angular_scale(j_k)`
    radial: [Vec<Vec<f64>>; 2],
    /// `cos_table[j][t] = cos(j θ_t)` for `j ≤ 2 * max_j`
    cos_table: Vec<Vec<f64>>,
    max_j: usize,
}

impl SpectralGrid {
    /// Default sizes: `2L + 8` nodes in `z`, and at least `4 J + 4` nodes in
    /// `θ`, rounded up to a multiple of `2m`.
    pub fn for_truncation(class: SymmetryClass, truncation: usize) -> Self {
        let nz = 2 * truncation + 8;
        let nt = default_theta_count(&class, truncation);
        Self::new(class, truncation, nz, nt).expect("default sizes are valid")
    }

    pub fn new(
        class: SymmetryClass,
        truncation: usize,
        z_count: usize,
        theta_count: usize,
    ) -> Result<Self, SpectralError> {
        let max_j = class.max_frequency(truncation);
        let period = 2 * class.m().max(1);
        if theta_count == 0 || theta_count % period != 0 {
            return Err(SpectralError::Grid(format!(
                "theta count {theta_count} must be a positive multiple of {period}"
            )));
        }
        if theta_count < 2 * max_j + 2 {
            return Err(SpectralError::Grid(format!(
                "theta count {theta_count} cannot resolve frequency {max_j}"
            )));
        }
        if z_count < truncation + 1 {
            return Err(SpectralError::Grid(format!(
                "z count {z_count} cannot resolve degree {truncation}"
            )));
        }
        let rule = GaussRule::new(z_count);
        let theta: Vec<f64> = (0..theta_count)
            .map(|t| 2.0 * PI * t as f64 / theta_count as f64)
            .collect();
        let modes = [
            class.modes(Component::First, truncation),
            class.modes(Component::Second, truncation),
        ];
        let mut radial: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
        for c in Component::BOTH {
            let list = &modes[c.index()];
            let mut table = vec![vec![0.0; z_count]; list.len()];
            for (i, &z) in rule.nodes.iter().enumerate() {
                let mut k = 0;
                while k < list.len() {
                    let j = list[k].j;
                    let end = list[k..].iter().position(|m| m.j != j).map_or(list.len(), |p| k + p);
                    let col = legendre_column_normalized(j, list[end - 1].l, z);
                    for kk in k..end {
                        table[kk][i] = col[list[kk].l - j] * angular_scale(j);
                    }
                    k = end;
                }
            }
            radial[c.index()] = table;
        }
        let cos_table = (0..=2 * max_j)
            .map(|j| theta.iter().map(|&th| (j as f64 * th).cos()).collect())
            .collect();
        Ok(Self {
            class,
            truncation,
            z: rule.nodes,
            z_weights: rule.weights,
            theta,
            modes,
            radial,
            cos_table,
            max_j,
        })
    }

    pub fn class(&self) -> SymmetryClass {
        self.class
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn z_count(&self) -> usize {
        self.z.len()
    }

    pub fn theta_count(&self) -> usize {
        self.theta.len()
    }

    pub fn len(&self) -> usize {
        self.z.len() * self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_frequency(&self) -> usize {
        self.max_j
    }

    pub fn modes(&self, c: Component) -> &[Mode] {
        &self.modes[c.index()]
    }

    /// Radial table row for mode `k` of component `c` (includes the angular scale).
    pub fn radial(&self, c: Component, k: usize) -> &[f64] {
        &self.radial[c.index()][k]
    }

    pub fn cos_row(&self, j: usize) -> &[f64] {
        &self.cos_table[j]
    }

    /// Area weight of node `(i, t)`.
    pub fn weight(&self, i: usize) -> f64 {
        self.z_weights[i] * 2.0 * PI / self.theta.len() as f64
    }

    pub fn synthesize(&self, c: Component, coeffs: &[f64]) -> Vec<f64> {
        let nt = self.theta.len();
        let modes = &self.modes[c.index()];
        let table = &self.radial[c.index()];
        assert_eq!(coeffs.len(), modes.len(), "coefficient count");
        let mut out = vec![0.0; self.len()];
        let mut fourier = vec![0.0; self.max_j + 1];
        for i in 0..self.z.len() {
            fourier.iter_mut().for_each(|f| *f = 0.0);
            for (k, mode) in modes.iter().enumerate() {
                fourier[mode.j] += coeffs[k] * table[k][i];
            }
            let row = &mut out[i * nt..(i + 1) * nt];
            for (j, &f) in fourier.iter().enumerate() {
                if f != 0.0 {
                    for (v, &cs) in row.iter_mut().zip(&self.cos_table[j]) {
                        *v += f * cs;
                    }
                }
            }
        }
        out
    }

    pub fn synthesize_field(&self, field: &SphereField) -> [Vec<f64>; 2] {
        [
            self.synthesize(Component::First, field.coeffs(Component::First)),
            self.synthesize(Component::Second, field.coeffs(Component::Second)),
        ]
    }

    /// Cosine transform per `z` node: `out[i][j] = Σ_t (2π/N_θ) f(i,t) cos(jθ_t)`
    /// for `j ≤ j_max`.
    pub fn cosine_transform(&self, values: &[f64], j_max: usize) -> Vec<Vec<f64>> {
        let nt = self.theta.len();
        let dtheta = 2.0 * PI / nt as f64;
        (0..self.z.len())
            .map(|i| {
                let row = &values[i * nt..(i + 1) * nt];
                (0..=j_max)
                    .map(|j| {
                        let cs = &self.cos_table[j];
                        dtheta * row.iter().zip(cs).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }

    /// `L^2` projection of grid values onto the admissible modes of `c`.
    pub fn analyze(&self, c: Component, values: &[f64]) -> Vec<f64> {
        let fourier = self.cosine_transform(values, self.max_j);
        let modes = &self.modes[c.index()];
        let table = &self.radial[c.index()];
        modes
            .iter()
            .enumerate()
            .map(|(k, mode)| {
                (0..self.z.len())
                    .map(|i| self.z_weights[i] * table[k][i] * fourier[i][mode.j])
                    .sum()
            })
            .collect()
    }

    pub fn analyze_field(&self, values: &[Vec<f64>; 2]) -> SphereField {
        let mut field = SphereField::zeros(self.class, self.truncation);
        for c in Component::BOTH {
            let coeffs = self.analyze(c, &values[c.index()]);
            field.coeffs_mut(c).copy_from_slice(&coeffs);
        }
        field
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        let nt = self.theta.len();
        (0..self.z.len())
            .map(|i| self.weight(i) * values[i * nt..(i + 1) * nt].iter().sum::<f64>())
            .sum()
    }

    /// Grid values of `f ∘ g` for an isometry `g`. The grid is closed under
    /// all three maps.
    pub fn compose(&self, values: &[f64], g: Isometry) -> Result<Vec<f64>, SpectralError> {
        let nz = self.z.len();
        let nt = self.theta.len();
        let m = self.class.m();
        if m == 0 && g != Isometry::Sigma {
            return Err(SpectralError::InvalidClass("angular maps need m >= 1".into()));
        }
        let shift = if m == 0 { 0 } else { nt / (2 * m) };
        let mut out = vec![0.0; values.len()];
        for i in 0..nz {
            for t in 0..nt {
                let (ii, tt) = match g {
                    Isometry::Sigma => (nz - 1 - i, t),
                    Isometry::Rho => (i, (t + shift) % nt),
                    Isometry::Tau => (i, (shift + nt - t) % nt),
                };
                out[i * nt + t] = values[ii * nt + tt];
            }
        }
        Ok(out)
    }
}

pub fn default_theta_count(class: &SymmetryClass, truncation: usize) -> usize {
    let max_j = class.max_frequency(truncation);
    let period = 2 * class.m().max(1);
    let min = 4 * max_j + 4;
    min.div_ceil(period) * period
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trig {
    Cos,
    Sin,
}

/// One generator `P_l^j(z) cos(jθ)` or `P_l^j(z) sin(jθ)` of the
/// unrestricted kernel, placed in one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelElement {
    pub component: Component,
    pub mode: Mode,
    pub trig: Trig,
}

impl KernelElement {
    pub fn eval(&self, theta: f64, z: f64) -> f64 {
        let p = legendre_p(LegendreIndex::new(self.mode.l, self.mode.j), z).expect("valid mode");
        let a = self.mode.j as f64 * theta;
        p * match self.trig {
            Trig::Cos => a.cos(),
            Trig::Sin => a.sin(),
        }
    }
}

/// Kernel of the linearization at the trivial solution: the three
/// first-component elements of degree one, plus the `2n + 1` second-component
/// elements of degree `n` when `μ = μ_n`.
pub fn kernel_basis(mu: f64) -> Result<Vec<KernelElement>, SpectralError> {
    check_mu(mu)?;
    let mut out = degree_elements(Component::First, 1);
    if let Some(n) = level_for_mu(mu) {
        out.extend(degree_elements(Component::Second, n));
    }
    Ok(out)
}

fn degree_elements(component: Component, l: usize) -> Vec<KernelElement> {
    let mut out = vec![KernelElement {
        component,
        mode: Mode { l, j: 0 },
        trig: Trig::Cos,
    }];
    for j in 1..=l {
        for trig in [Trig::Cos, Trig::Sin] {
            out.push(KernelElement {
                component,
                mode: Mode { l, j },
                trig,
            });
        }
    }
    out
}

/// Kernel modes at `μ_n` that survive the symmetry restriction.
pub fn restricted_kernel_modes(class: &SymmetryClass) -> Vec<(Component, Mode)> {
    let mut out = Vec::new();
    for (c, l) in [(Component::First, 1), (Component::Second, class.n())] {
        for j in 0..=l {
            let mode = Mode { l, j };
            if class.admits(c, mode) {
                out.push((c, mode));
            }
        }
    }
    out
}

/// Kernel elements at `μ_n` lying in `X_{n,m}`, each equal to
/// `P_l^j(z) cos(jθ)` in its component.
pub fn restricted_kernel_basis(class: &SymmetryClass) -> Vec<SphereField> {
    restricted_kernel_modes(class)
        .into_iter()
        .map(|(c, mode)| {
            let mut f = SphereField::zeros(*class, class.n());
            f.set(c, mode, mode_norm_sq(mode).sqrt()).expect("admissible");
            f
        })
        .collect()
}

/// Diagonal factor of the linearization on a mode of degree `l`.
pub fn linear_factor(mu: f64, component: Component, l: usize) -> Result<f64, SpectralError> {
    let ll = (l * (l + 1)) as f64;
    Ok(match component {
        Component::First => 2.0 - ll,
        Component::Second => coupling_eigenvalue(mu)? - ll,
    })
}

pub fn linearized_apply(mu: f64, field: &SphereField) -> Result<SphereField, SpectralError> {
    let mut out = field.clone();
    for c in Component::BOTH {
        let modes = field.modes(c).to_vec();
        for (v, mode) in out.coeffs_mut(c).iter_mut().zip(&modes) {
            *v *= linear_factor(mu, c, mode.l)?;
        }
    }
    Ok(out)
}

/// Number of positive factors of the linearization on the admissible modes
/// of `class` with `l ≤ truncation`.
pub fn morse_index(mu: f64, class: &SymmetryClass, truncation: usize) -> Result<usize, SpectralError> {
    check_mu(mu)?;
    let mut count = 0;
    for c in Component::BOTH {
        for mode in class.modes(c, truncation) {
            let f = linear_factor(mu, c, mode.l)?;
            let scale = (mode.l * (mode.l + 1)) as f64;
            if c == Component::Second && f.abs() <= 1e-9 * scale.max(1.0) {
                return Err(SpectralError::Ambiguous { mu, n: mode.l });
            }
            if f > 0.0 {
                count += 1;
            }
        }
    }
    Ok(count)
}
