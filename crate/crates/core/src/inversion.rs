//! Mode-wise inverse of the linearized operator by variation of constants,
//! with the antiderivative glued across simple zeros of the homogeneous
//! solution, and an independent dense collocation solver.
//!
//! All integrals over `[-1, 1]` are taken in the angle `s` with
//! `z = -cos(s)`, which turns the half-integer powers of `1 ± z` carried by
//! odd-order Legendre functions into analytic integrands.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::legendre::{
    legendre_p_derivs, legendre_p_reduced, legendre_zeros, ln_legendre_norm, simple_zeros,
    LegendreIndex, SecondKind,
};
use crate::quadrature::{panels_with_breaks, GaussRule, QuadratureError, QuadratureSpec};
use crate::spectral::Component;

/// `|∫ P̄ ψ| / ‖ψ‖` above this is a range violation.
pub const RANGE_TOL: f64 = 1e-8;

const SUB_RULE_POINTS: usize = 12;
const PATCH_POINTS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InversionError {
    #[error("right-hand side is not in the range: projection {projection:e} exceeds {tolerance:e}")]
    Resonance { projection: f64, tolerance: f64 },
    #[error("invalid mode: {0}")]
    InvalidMode(String),
    #[error("zero at {zero} is not simple (derivative {derivative:e})")]
    Degenerate { zero: f64, derivative: f64 },
    #[error("collocation system is singular")]
    Singular,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// A solution `p` of the homogeneous mode equation, used as the building
/// block of the variation-of-constants formula.
pub trait HomogeneousProfile {
    /// `(p, p', p'')` at an interior point.
    fn derivs(&self, z: f64) -> (f64, f64, f64);

    fn value(&self, z: f64) -> f64 {
        self.derivs(z).0
    }

    /// `ln(1 / ((1 - z^2) p(z)^2))`, evaluated without forming `p^2`.
    fn ln_inverse_weight(&self, z: f64) -> f64;

    /// Interior zeros in increasing order.
    fn zeros(&self) -> Vec<f64>;
}

/// `P_n^l` scaled to unit `L^2(-1, 1)` norm.
#[derive(Debug, Clone, Copy)]
pub struct FirstKindProfile {
    n: usize,
    l: usize,
    scale: f64,
}

impl FirstKindProfile {
    pub fn new(n: usize, l: usize) -> Self {
        assert!(l <= n, "first-kind profile needs l <= n");
        Self {
            n,
            l,
            scale: (-0.5 * ln_legendre_norm(n, l)).exp(),
        }
    }
}

impl HomogeneousProfile for FirstKindProfile {
    fn derivs(&self, z: f64) -> (f64, f64, f64) {
        let d = legendre_p_derivs(self.n, self.l, z);
        (d.value * self.scale, d.deriv * self.scale, d.second * self.scale)
    }

    fn value(&self, z: f64) -> f64 {
        let q = legendre_p_reduced(LegendreIndex::new(self.n, self.l), z).expect("valid index");
        q * self.scale * (1.0 - z * z).powf(0.5 * self.l as f64)
    }

    fn ln_inverse_weight(&self, z: f64) -> f64 {
        let q = legendre_p_reduced(LegendreIndex::new(self.n, self.l), z).expect("valid index") * self.scale;
        -((1 + self.l) as f64) * (1.0 - z * z).ln() - 2.0 * q.abs().ln()
    }

    fn zeros(&self) -> Vec<f64> {
        legendre_zeros(self.n, self.l)
    }
}

/// `P̃_n^l`, bounded except at `z = -1`.
#[derive(Debug, Clone)]
pub struct SecondKindProfile {
    inner: SecondKind,
}

impl SecondKindProfile {
    pub fn new(n: usize, l: usize) -> Self {
        Self {
            inner: SecondKind::new(LegendreIndex::new(n, l)),
        }
    }
}

impl HomogeneousProfile for SecondKindProfile {
    fn derivs(&self, z: f64) -> (f64, f64, f64) {
        self.inner.derivs(z)
    }

    fn value(&self, z: f64) -> f64 {
        self.inner.value(z)
    }

    fn ln_inverse_weight(&self, z: f64) -> f64 {
        let (s, _, _) = self.inner.polynomial(z);
        let m = self.inner.m as f64;
        (m - 1.0) * (1.0 + z).ln() - (m + 1.0) * (1.0 - z).ln() - 2.0 * s.abs().ln()
    }

    fn zeros(&self) -> Vec<f64> {
        let n = self.inner.n;
        simple_zeros(|z| self.inner.polynomial(z).0, -1.0, 1.0, 64 * (n + 2))
    }
}

/// A profile given by a closure returning `(p, p', p'')`, with known zeros.
pub struct FnProfile<F> {
    f: F,
    zeros: Vec<f64>,
}

impl<F: Fn(f64) -> (f64, f64, f64)> FnProfile<F> {
    pub fn new(f: F, zeros: Vec<f64>) -> Self {
        Self { f, zeros }
    }
}

impl<F: Fn(f64) -> (f64, f64, f64)> HomogeneousProfile for FnProfile<F> {
    fn derivs(&self, z: f64) -> (f64, f64, f64) {
        (self.f)(z)
    }

    fn ln_inverse_weight(&self, z: f64) -> f64 {
        let p = (self.f)(z).0;
        -(1.0 - z * z).ln() - 2.0 * p.abs().ln()
    }

    fn zeros(&self) -> Vec<f64> {
        self.zeros.clone()
    }
}

/// Local Laurent data `c/(y - z0)^2 + d/(y - z0)` of the integrand at a zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaurentPole {
    pub zero: f64,
    pub c: f64,
    pub d: f64,
    /// `p'(z0)`
    pub slope: f64,
}

impl LaurentPole {
    fn singular(&self, y: f64) -> f64 {
        let t = y - self.zero;
        let mut v = 0.0;
        if self.c != 0.0 {
            v += self.c / (t * t);
        }
        if self.d != 0.0 {
            v += self.d / t;
        }
        v
    }

    fn antiderivative(&self, y: f64) -> f64 {
        let t = y - self.zero;
        let mut v = 0.0;
        if self.c != 0.0 {
            v -= self.c / t;
        }
        if self.d != 0.0 {
            v += self.d * t.abs().ln();
        }
        v
    }
}

/// Chebyshev interpolant of the pole-free remainder on a window around a
/// zero, where direct evaluation would cancel two large terms.
struct Patch {
    lo: f64,
    hi: f64,
    coeffs: Vec<f64>,
}

impl Patch {
    fn build(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = PATCH_POINTS;
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let theta: Vec<f64> = (0..n)
            .map(|k| std::f64::consts::PI * (k as f64 + 0.5) / n as f64)
            .collect();
        let values: Vec<f64> = theta.iter().map(|t| f(mid + half * t.cos())).collect();
        let coeffs = (0..n)
            .map(|j| {
                let s: f64 = theta.iter().zip(&values).map(|(t, v)| v * (j as f64 * t).cos()).sum();
                s * if j == 0 { 1.0 } else { 2.0 } / n as f64
            })
            .collect();
        Self { lo, hi, coeffs }
    }

    fn contains(&self, y: f64) -> bool {
        y >= self.lo && y <= self.hi
    }

    fn eval(&self, y: f64) -> f64 {
        let x = (2.0 * y - self.lo - self.hi) / (self.hi - self.lo);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs[0]
    }
}

/// The numerator `I` of the middle integrand `I / ((1 - y^2) p^2)`.
pub enum Numerator<'a> {
    /// `I` given directly.
    Direct(Box<dyn Fn(f64) -> f64 + 'a>),
    /// `I(y) = ∫_y^1 f`. With `two_sided`, `∫_{-1}^1 f = 0` is assumed and
    /// the shorter side `-∫_{-1}^y f` is used on the left half.
    InnerIntegral {
        integrand: Box<dyn Fn(f64) -> f64 + 'a>,
        two_sided: bool,
    },
}

fn s_of(z: f64) -> f64 {
    (-z).clamp(-1.0, 1.0).acos()
}

fn z_of(s: f64) -> f64 {
    -s.cos()
}

/// Panels in `s` over `[s_lo, s_hi]`, with one panel centred on each zero.
struct Layout {
    half_width: f64,
    nodes_s: Vec<f64>,
    nodes_z: Vec<f64>,
    /// weights for `∫ dz`
    weights: Vec<f64>,
}

fn build_layout(z_lo: f64, z_hi: f64, zeros: &[f64], spec: &QuadratureSpec) -> Layout {
    let (s_lo, s_hi) = (s_of(z_lo), s_of(z_hi));
    let mut marks = vec![z_lo];
    marks.extend_from_slice(zeros);
    marks.push(z_hi);
    let min_gap = marks.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let h = spec.finite_part_radius * min_gap;
    let mut breaks = Vec::new();
    for &z0 in zeros {
        let s0 = s_of(z0);
        let hs = (s0 - s_of(z0 - h)).min(s_of(z0 + h) - s0);
        breaks.push(s0 - hs);
        breaks.push(s0 + hs);
    }
    let count = ((spec.panel_count as f64) * (s_hi - s_lo) / std::f64::consts::PI).ceil().max(1.0) as usize;
    let panels = panels_with_breaks(s_lo, s_hi, &breaks, count);
    let rule = GaussRule::new(spec.points_per_panel);
    let mut layout = Layout {
        half_width: h,
        nodes_s: Vec::new(),
        nodes_z: Vec::new(),
        weights: Vec::new(),
    };
    for (a, b) in panels {
        for (s, w) in rule.mapped(a, b) {
            layout.nodes_s.push(s);
            layout.nodes_z.push(z_of(s));
            layout.weights.push(w * s.sin());
        }
    }
    layout
}

/// Piecewise antiderivative `F(z) = ∫ I(y) / ((1 - y^2) p(y)^2) dy` from the
/// left end of the interval, glued across each simple zero of `p` so that
/// `p F` is smooth there.
///
/// The double pole at a zero `z0` is removed by subtracting its Laurent part
/// and adding back `-c/(y - z0) + d ln|y - z0|` with one constant on both
/// sides; the remainder is integrated by composite Gauss rules.
pub struct GluedAntiderivative<'a> {
    profile: Box<dyn HomogeneousProfile + 'a>,
    numerator: Numerator<'a>,
    z_lo: f64,
    sub: GaussRule,
    anchors: Vec<f64>,
    i_right: Vec<f64>,
    i_left: Vec<f64>,
    switch_s: f64,
    f_reg: Vec<f64>,
    poles: Vec<LaurentPole>,
    patches: Vec<Patch>,
    layout: Layout,
}

impl<'a> GluedAntiderivative<'a> {
    /// Antiderivative over `[z_lo, z_hi]`, vanishing at `z_lo`.
    pub fn new(
        profile: impl HomogeneousProfile + 'a,
        numerator: Numerator<'a>,
        interval: (f64, f64),
        spec: &QuadratureSpec,
    ) -> Result<Self, InversionError> {
        spec.validate()?;
        let (z_lo, z_hi) = interval;
        if !(z_lo < z_hi && z_lo >= -1.0 && z_hi <= 1.0) {
            return Err(InversionError::InvalidMode(format!("bad interval [{z_lo}, {z_hi}]")));
        }
        if matches!(numerator, Numerator::InnerIntegral { .. }) && (z_lo != -1.0 || z_hi != 1.0) {
            return Err(InversionError::InvalidMode(
                "inner integrals need the full interval".into(),
            ));
        }
        let zeros: Vec<f64> = profile.zeros().into_iter().filter(|&z| z > z_lo && z < z_hi).collect();
        let scale = (0..=64)
            .map(|k| profile.value(z_lo + (z_hi - z_lo) * (k as f64 + 0.5) / 65.0).abs())
            .fold(0.0, f64::max);
        for &z0 in &zeros {
            let slope = profile.derivs(z0).1;
            if slope.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(InversionError::Degenerate {
                    zero: z0,
                    derivative: slope,
                });
            }
        }
        let layout = build_layout(z_lo, z_hi, &zeros, spec);
        let mut anchors = vec![s_of(z_lo)];
        anchors.extend_from_slice(&layout.nodes_s);
        anchors.push(s_of(z_hi));
        let switch_s = switch_point(&zeros);
        let mut this = Self {
            profile: Box::new(profile),
            numerator,
            z_lo,
            sub: GaussRule::new(SUB_RULE_POINTS),
            anchors,
            i_right: Vec::new(),
            i_left: Vec::new(),
            switch_s,
            f_reg: Vec::new(),
            poles: Vec::new(),
            patches: Vec::new(),
            layout,
        };
        this.accumulate_inner();
        this.poles = zeros.iter().map(|&z0| this.laurent(z0)).collect();
        let h = this.layout.half_width;
        this.patches = zeros
            .iter()
            .map(|&z0| Patch::build(z0 - h, z0 + h, |y| this.regular_direct(y)))
            .collect();
        this.accumulate_regular();
        Ok(this)
    }

    fn inner_fn(&self) -> Option<&(dyn Fn(f64) -> f64 + 'a)> {
        match &self.numerator {
            Numerator::InnerIntegral { integrand, .. } => Some(integrand.as_ref()),
            Numerator::Direct(_) => None,
        }
    }

    fn integrate_inner(&self, f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        self.sub.integrate(a, b, |t| f(z_of(t)) * t.sin())
    }

    fn accumulate_inner(&mut self) {
        let Some(f) = self.inner_fn() else { return };
        let k = self.anchors.len();
        let mut right = vec![0.0; k];
        let mut left = vec![0.0; k];
        for i in (0..k - 1).rev() {
            right[i] = right[i + 1] + self.integrate_inner(f, self.anchors[i], self.anchors[i + 1]);
        }
        for i in 1..k {
            left[i] = left[i - 1] - self.integrate_inner(f, self.anchors[i - 1], self.anchors[i]);
        }
        self.i_right = right;
        self.i_left = left;
    }

    fn segment(&self, s: f64) -> usize {
        let k = self.anchors.partition_point(|&a| a <= s);
        k.clamp(1, self.anchors.len() - 1) - 1
    }

    /// The numerator `I` at `z`.
    pub fn numerator(&self, z: f64) -> f64 {
        match &self.numerator {
            Numerator::Direct(f) => f(z),
            Numerator::InnerIntegral { integrand, two_sided } => {
                let s = s_of(z);
                let k = self.segment(s);
                if *two_sided && s < self.switch_s {
                    self.i_left[k] - self.integrate_inner(integrand.as_ref(), self.anchors[k], s)
                } else {
                    self.i_right[k + 1] + self.integrate_inner(integrand.as_ref(), s, self.anchors[k + 1])
                }
            }
        }
    }

    fn numerator_deriv(&self, z: f64) -> f64 {
        match &self.numerator {
            Numerator::InnerIntegral { integrand, .. } => -integrand(z),
            Numerator::Direct(f) => {
                let h = 1e-4 * (1.0 - z * z).max(1e-6);
                (8.0 * (f(z + h) - f(z - h)) - (f(z + 2.0 * h) - f(z - 2.0 * h))) / (12.0 * h)
            }
        }
    }

    fn laurent(&self, z0: f64) -> LaurentPole {
        let (_, p1, p2) = self.profile.derivs(z0);
        let w = 1.0 - z0 * z0;
        let kappa = 1.0 / (w * p1 * p1);
        let kappa_d = kappa * (2.0 * z0 / w - p2 / p1);
        let i0 = self.numerator(z0);
        LaurentPole {
            zero: z0,
            c: kappa * i0,
            d: kappa * self.numerator_deriv(z0) + kappa_d * i0,
            slope: p1,
        }
    }

    /// The full middle integrand `I / ((1 - y^2) p^2)`.
    pub fn integrand(&self, y: f64) -> f64 {
        let i = self.numerator(y);
        if i == 0.0 {
            return 0.0;
        }
        i.signum() * (i.abs().ln() + self.profile.ln_inverse_weight(y)).exp()
    }

    fn regular(&self, y: f64) -> f64 {
        match self.patches.iter().find(|p| p.contains(y)) {
            Some(p) => p.eval(y),
            None => self.regular_direct(y),
        }
    }

    fn regular_direct(&self, y: f64) -> f64 {
        self.integrand(y) - self.poles.iter().map(|p| p.singular(y)).sum::<f64>()
    }

    fn integrate_regular(&self, a: f64, b: f64) -> f64 {
        self.sub.integrate(a, b, |t| self.regular(z_of(t)) * t.sin())
    }

    fn accumulate_regular(&mut self) {
        let k = self.anchors.len();
        let mut acc = vec![0.0; k];
        for i in 1..k {
            acc[i] = acc[i - 1] + self.integrate_regular(self.anchors[i - 1], self.anchors[i]);
        }
        self.f_reg = acc;
    }

    fn singular_part(&self, z: f64) -> f64 {
        self.poles
            .iter()
            .map(|p| p.antiderivative(z) - p.antiderivative(self.z_lo))
            .sum()
    }

    fn regular_part(&self, z: f64) -> f64 {
        let s = s_of(z);
        let k = self.segment(s);
        self.f_reg[k] + self.integrate_regular(self.anchors[k], s)
    }

    /// `F(z)`; infinite at a zero of `p`.
    pub fn eval(&self, z: f64) -> f64 {
        self.regular_part(z) + self.singular_part(z)
    }

    /// `p(z) F(z)`, continuous across the zeros of `p`.
    pub fn product(&self, z: f64) -> f64 {
        let p = self.profile.value(z);
        if let Some(pole) = self.poles.iter().find(|p| (z - p.zero).abs() < 1e-13) {
            return -pole.c * pole.slope;
        }
        p * self.eval(z)
    }

    pub fn poles(&self) -> &[LaurentPole] {
        &self.poles
    }

    pub fn profile(&self) -> &dyn HomogeneousProfile {
        self.profile.as_ref()
    }

    /// Quadrature nodes in `z`, increasing.
    pub fn nodes(&self) -> &[f64] {
        &self.layout.nodes_z
    }

    /// Weights for `∫ dz` at [`nodes`](Self::nodes).
    pub fn weights(&self) -> &[f64] {
        &self.layout.weights
    }

    /// `F` at the quadrature nodes.
    pub fn node_values(&self) -> Vec<f64> {
        (0..self.layout.nodes_z.len())
            .map(|i| self.f_reg[i + 1] + self.singular_part(self.layout.nodes_z[i]))
            .collect()
    }

    /// `p F` at the quadrature nodes.
    pub fn node_products(&self) -> Vec<f64> {
        self.layout
            .nodes_z
            .iter()
            .zip(self.node_values())
            .map(|(&z, f)| self.profile.value(z) * f)
            .collect()
    }
}

/// Where the two-sided inner integral switches sides: the midpoint of the
/// gap between zeros (or endpoints) whose midpoint is closest to 0.
fn switch_point(zeros: &[f64]) -> f64 {
    let mut marks = vec![-1.0];
    marks.extend_from_slice(zeros);
    marks.push(1.0);
    let mid = marks
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    s_of(mid)
}

/// Value at `z` of the glued antiderivative of `integrand / ((1 - y^2) p^2)`
/// over `interval`, vanishing at the left end.
pub fn glued_antiderivative(
    profile: impl HomogeneousProfile,
    integrand: impl Fn(f64) -> f64,
    interval: (f64, f64),
    z: f64,
    spec: &QuadratureSpec,
) -> Result<f64, InversionError> {
    let g = GluedAntiderivative::new(profile, Numerator::Direct(Box::new(integrand)), interval, spec)?;
    Ok(g.eval(z))
}

/// One Fourier mode of `Δφ + λφ = ψ` on the sphere.
pub struct ModeSolveRequest<'a> {
    /// Eigenlevel `n` of the second component; the first always uses level 1.
    pub n: usize,
    /// Angular order of the mode.
    pub l: usize,
    pub component: Component,
    pub rhs: &'a dyn Fn(f64) -> f64,
}

impl ModeSolveRequest<'_> {
    pub fn level(&self) -> usize {
        match self.component {
            Component::First => 1,
            Component::Second => self.n,
        }
    }

    pub fn eigenvalue(&self) -> f64 {
        let k = self.level();
        (k * (k + 1)) as f64
    }

    /// Whether `P_level^l` solves the homogeneous equation.
    pub fn is_resonant(&self) -> bool {
        self.l <= self.level()
    }

    fn validate(&self) -> Result<(), InversionError> {
        if self.component == Component::Second && self.n == 0 {
            return Err(InversionError::InvalidMode("eigenlevel must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub z: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    /// Free constant of the resonant case, fixed by orthogonality.
    pub constant: Option<f64>,
}

impl ModeSolution {
    /// `∫ φ f dz` by the solution's own quadrature.
    pub fn inner_product(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.z
            .iter()
            .zip(&self.weights)
            .zip(&self.values)
            .map(|((&z, &w), &v)| w * v * f(z))
            .sum()
    }
}

fn range_check(req: &ModeSolveRequest, spec: &QuadratureSpec) -> Result<(), InversionError> {
    if !req.is_resonant() {
        return Ok(());
    }
    let p = FirstKindProfile::new(req.level(), req.l);
    let rule = GaussRule::new(spec.points_per_panel);
    let mut proj = 0.0;
    let mut norm = 0.0;
    let count = spec.panel_count;
    for k in 0..count {
        let a = std::f64::consts::PI * k as f64 / count as f64;
        let b = std::f64::consts::PI * (k + 1) as f64 / count as f64;
        for (s, w) in rule.mapped(a, b) {
            let z = z_of(s);
            let r = (req.rhs)(z);
            proj += w * s.sin() * p.value(z) * r;
            norm += w * s.sin() * r * r;
        }
    }
    let tolerance = RANGE_TOL * norm.sqrt().max(f64::MIN_POSITIVE);
    if proj.abs() > tolerance {
        return Err(InversionError::Resonance {
            projection: proj.abs(),
            tolerance,
        });
    }
    Ok(())
}

/// Bounded solution of the mode equation by variation of constants,
/// orthogonal to the homogeneous solution when the mode is resonant.
pub fn solve_mode(req: &ModeSolveRequest, spec: &QuadratureSpec) -> Result<ModeSolution, InversionError> {
    req.validate()?;
    range_check(req, spec)?;
    let rhs = req.rhs;
    if req.is_resonant() {
        let profile = FirstKindProfile::new(req.level(), req.l);
        let glued = GluedAntiderivative::new(
            profile,
            Numerator::InnerIntegral {
                integrand: Box::new(move |x| profile.value(x) * rhs(x)),
                two_sided: true,
            },
            (-1.0, 1.0),
            spec,
        )?;
        let z = glued.nodes().to_vec();
        let weights = glued.weights().to_vec();
        let pf = glued.node_products();
        let p: Vec<f64> = z.iter().map(|&x| profile.value(x)).collect();
        let num: f64 = (0..z.len()).map(|i| weights[i] * p[i] * pf[i]).sum();
        let den: f64 = (0..z.len()).map(|i| weights[i] * p[i] * p[i]).sum();
        let c = num / den;
        let values = (0..z.len()).map(|i| c * p[i] - pf[i]).collect();
        Ok(ModeSolution {
            z,
            weights,
            values,
            constant: Some(c),
        })
    } else {
        let profile = SecondKindProfile::new(req.level(), req.l);
        let shared = profile.clone();
        let glued = GluedAntiderivative::new(
            profile,
            Numerator::InnerIntegral {
                integrand: Box::new(move |x| shared.value(x) * rhs(x)),
                two_sided: false,
            },
            (-1.0, 1.0),
            spec,
        )?;
        let values = glued.node_products().iter().map(|v| -v).collect();
        Ok(ModeSolution {
            z: glued.nodes().to_vec(),
            weights: glued.weights().to_vec(),
            values,
            constant: None,
        })
    }
}

/// Least-squares collocation solution on normalized Legendre functions.
#[derive(Debug, Clone)]
pub struct CollocationSolution {
    pub l: usize,
    pub degrees: Vec<usize>,
    pub coeffs: Vec<f64>,
}

impl CollocationSolution {
    pub fn eval(&self, z: f64) -> f64 {
        self.degrees
            .iter()
            .zip(&self.coeffs)
            .map(|(&k, &c)| c * crate::legendre::legendre_p_normalized(k, self.l, z))
            .sum()
    }
}

/// Dense collocation solve of the mode equation with basis `P̄_k^l`,
/// `l ≤ k ≤ max_degree`, omitting the resonant degree.
pub fn solve_mode_collocation(
    req: &ModeSolveRequest,
    max_degree: usize,
) -> Result<CollocationSolution, InversionError> {
    req.validate()?;
    if max_degree < req.l {
        return Err(InversionError::InvalidMode("max_degree below the order".into()));
    }
    let level = req.level();
    let lam = req.eigenvalue();
    let degrees: Vec<usize> = (req.l..=max_degree)
        .filter(|&k| !(req.is_resonant() && k == level))
        .collect();
    let points = 2 * (max_degree + 1) + 16;
    let rule = GaussRule::new(points);
    let lf = req.l as f64;
    let mut a = DMatrix::<f64>::zeros(points, degrees.len());
    let mut b = DVector::<f64>::zeros(points);
    for (i, &z) in rule.nodes.iter().enumerate() {
        let w = 1.0 - z * z;
        for (col, &k) in degrees.iter().enumerate() {
            let scale = (-0.5 * ln_legendre_norm(k, req.l)).exp();
            let d = legendre_p_derivs(k, req.l, z);
            a[(i, col)] = scale * (d.flux_deriv - lf * lf / w * d.value + lam * d.value);
        }
        b[i] = (req.rhs)(z);
    }
    if req.is_resonant() {
        let p = FirstKindProfile::new(level, req.l);
        let proj: f64 = rule.nodes.iter().zip(&rule.weights).map(|(&z, &w)| w * p.value(z) * (req.rhs)(z)).sum();
        let norm: f64 = rule.weights.iter().zip(b.iter()).map(|(w, r)| w * r * r).sum::<f64>().sqrt();
        let tolerance = RANGE_TOL * norm.max(f64::MIN_POSITIVE);
        if proj.abs() > tolerance {
            return Err(InversionError::Resonance {
                projection: proj.abs(),
                tolerance,
            });
        }
    }
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-13).map_err(|_| InversionError::Singular)?;
    Ok(CollocationSolution {
        l: req.l,
        degrees,
        coeffs: x.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::{legendre_p, legendre_p_normalized};
    use approx::assert_abs_diff_eq;

    fn spec() -> QuadratureSpec {
        QuadratureSpec {
            panel_count: 8,
            points_per_panel: 32,
            ..Default::default()
        }
    }

    fn linear() -> FnProfile<impl Fn(f64) -> (f64, f64, f64)> {
        FnProfile::new(|z| (z, 1.0, 0.0), vec![0.0])
    }

    #[test]
    fn removable_case_needs_no_finite_part() {
        // I(y) = y^3 vanishes at the zero of p = y
        let g = GluedAntiderivative::new(
            linear(),
            Numerator::Direct(Box::new(|y: f64| y.powi(3))),
            (-0.9, 0.9),
            &spec(),
        )
        .unwrap();
        assert_eq!(g.poles()[0].c, 0.0);
        // ∫_{-1}^z y/(1-y^2) dy = -ln(1-z^2)/2 + ln(1-1) ... use differences
        let f = |z: f64| -0.5 * (1.0 - z * z).ln();
        let a = g.eval(-0.5);
        for &z in &[-0.2, -0.01, 0.3, 0.7] {
            assert_abs_diff_eq!(g.eval(z) - a, f(z) - f(-0.5), epsilon = 1e-12);
        }
    }

    #[test]
    fn partial_fraction_closed_form() {
        let exact = |y: f64| -1.0 / y + 0.5 * ((1.0 + y) / (1.0 - y)).ln();
        let g = GluedAntiderivative::new(
            linear(),
            Numerator::Direct(Box::new(|_| 1.0)),
            (-0.9, 0.9),
            &spec(),
        )
        .unwrap();
        for &z in &[-0.6, -0.1, 0.05, 0.4, 0.85] {
            assert_abs_diff_eq!(g.eval(z), exact(z) - exact(-0.9), epsilon = 1e-11);
        }
        let v = glued_antiderivative(linear(), |_| 1.0, (-0.9, 0.9), 0.4, &spec()).unwrap();
        assert_abs_diff_eq!(v, exact(0.4) - exact(-0.9), epsilon = 1e-11);
    }

    #[test]
    fn product_is_continuous_across_zeros() {
        let profile = FirstKindProfile::new(2, 0);
        let g = GluedAntiderivative::new(
            profile,
            Numerator::Direct(Box::new(|y: f64| 1.0 + 0.3 * y - 2.0 * y * y + y.powi(5))),
            (-0.95, 0.95),
            &spec(),
        )
        .unwrap();
        for pole in g.poles() {
            let z0 = pole.zero;
            let limit = g.product(z0);
            // one-sided deviations shrink like h (up to h ln h)
            let dev = |h: f64| (g.product(z0 - h) - limit).abs().max((g.product(z0 + h) - limit).abs());
            let (d4, d6) = (dev(1e-4), dev(1e-6));
            assert!(d6 < 2e-2 * d4.max(1e-12) + 1e-10, "deviation {d4:e} -> {d6:e} at {z0}");
            assert!(d6 < 1e-3);
        }
    }

    #[test]
    fn eigenfunction_rhs_is_scaled() {
        // component 2 at level 3, order 1: rhs = P_5^1
        let rhs = |z: f64| legendre_p(LegendreIndex::new(5, 1), z).unwrap();
        let req = ModeSolveRequest {
            n: 3,
            l: 1,
            component: Component::Second,
            rhs: &rhs,
        };
        let sol = solve_mode(&req, &spec()).unwrap();
        for (z, v) in sol.z.iter().zip(&sol.values) {
            assert_abs_diff_eq!(*v, rhs(*z) / (12.0 - 30.0), epsilon = 1e-10);
        }
    }

    #[test]
    fn non_resonant_eigenfunction_rhs() {
        // component 1, order 2 uses the second-kind profile
        let rhs = |z: f64| legendre_p(LegendreIndex::new(4, 2), z).unwrap();
        let req = ModeSolveRequest {
            n: 3,
            l: 2,
            component: Component::First,
            rhs: &rhs,
        };
        let sol = solve_mode(&req, &spec()).unwrap();
        assert!(sol.constant.is_none());
        for (z, v) in sol.z.iter().zip(&sol.values) {
            assert_abs_diff_eq!(*v, rhs(*z) / (2.0 - 20.0), epsilon = 1e-10);
        }
    }

    #[test]
    fn radial_first_component_solve() {
        let rhs = |z: f64| 0.5 * legendre_p(LegendreIndex::new(3, 2), z).unwrap().powi(2);
        let req = ModeSolveRequest {
            n: 3,
            l: 0,
            component: Component::First,
            rhs: &rhs,
        };
        let sol = solve_mode(&req, &spec()).unwrap();
        let ortho = sol.inner_product(|z| z);
        assert!(ortho.abs() < 1e-10, "<phi, P_1> = {ortho}");
        // even in z: nodes are symmetric
        let k = sol.z.len();
        for i in 0..k {
            assert_abs_diff_eq!(sol.values[i], sol.values[k - 1 - i], epsilon = 1e-9);
        }
        let coll = solve_mode_collocation(&req, 8).unwrap();
        for (z, v) in sol.z.iter().zip(&sol.values) {
            assert_abs_diff_eq!(*v, coll.eval(*z), epsilon = 1e-9);
        }
    }

    #[test]
    fn angular_first_component_matches_collocation() {
        for m in 1..4usize {
            let rhs = move |z: f64| 0.5 * legendre_p(LegendreIndex::new(3, m), z).unwrap().powi(2);
            let req = ModeSolveRequest {
                n: 3,
                l: 2 * m,
                component: Component::First,
                rhs: &rhs,
            };
            let sol = solve_mode(&req, &spec()).unwrap();
            let coll = solve_mode_collocation(&req, 8).unwrap();
            let scale = sol.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (z, v) in sol.z.iter().zip(&sol.values) {
                assert!((v - coll.eval(*z)).abs() < 1e-9 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn resonant_rhs_is_refused() {
        let rhs = |z: f64| legendre_p_normalized(3, 1, z);
        let req = ModeSolveRequest {
            n: 3,
            l: 1,
            component: Component::Second,
            rhs: &rhs,
        };
        assert!(matches!(solve_mode(&req, &spec()), Err(InversionError::Resonance { .. })));
        assert!(matches!(
            solve_mode_collocation(&req, 8),
            Err(InversionError::Resonance { .. })
        ));
    }

    #[test]
    fn double_zero_is_degenerate() {
        let p = FnProfile::new(|z: f64| (z * z, 2.0 * z, 2.0), vec![0.0]);
        let r = GluedAntiderivative::new(p, Numerator::Direct(Box::new(|_| 1.0)), (-0.5, 0.5), &spec());
        assert!(matches!(r, Err(InversionError::Degenerate { .. })));
    }

    #[test]
    fn laurent_derivative_term_vanishes_for_legendre_profiles() {
        let rhs = |z: f64| legendre_p_normalized(6, 2, z) + 0.3 * legendre_p_normalized(2, 2, z);
        let profile = FirstKindProfile::new(4, 2);
        let g = GluedAntiderivative::new(
            profile,
            Numerator::InnerIntegral {
                integrand: Box::new(move |x| profile.value(x) * rhs(x)),
                two_sided: true,
            },
            (-1.0, 1.0),
            &spec(),
        )
        .unwrap();
        for p in g.poles() {
            assert!(p.d.abs() < 1e-9 * p.c.abs().max(1.0));
        }
    }
}
