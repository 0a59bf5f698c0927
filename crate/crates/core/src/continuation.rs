//! Galerkin discretization of the sphere operator, Newton correction and
//! pseudo-arclength continuation of the branch leaving `(μ_n, 0)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{
    coupling_eigenvalue, coupling_eigenvalue_deriv, mode_norm_sq, mu_n, restricted_kernel_modes,
    Component, Isometry, Mode, SpectralError, SpectralGrid, SphereField, SymmetryClass,
};

/// Largest admissible share of the field's energy in the top tenth of degrees.
pub const ALIASING_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuationError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("restricted kernel has dimension {dimension}, need 1: {modes}")]
    KernelDimension { dimension: usize, modes: String },
    #[error("field is under-resolved: tail energy fraction {fraction:e}")]
    Resolution { fraction: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("field does not belong to the grid's class or truncation")]
    FieldMismatch,
    #[error("singular bordered system")]
    Singular,
    #[error("curvature fit rejected: {0}")]
    DegenerateFit(String),
    #[error("zero at z = {z} is not simple")]
    NonSimpleZero { z: f64 },
    #[error("{0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum JacobianMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    pub truncation: usize,
    pub ds: f64,
    /// Steps per direction.
    pub max_steps: usize,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub theta_grid: Option<usize>,
    pub z_grid: Option<usize>,
    /// Stop once `|ε|` exceeds this.
    pub eps_max: f64,
    /// Stop once `μ` leaves this interval.
    pub mu_bounds: (f64, f64),
    pub jacobian: JacobianMode,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            truncation: 24,
            ds: 0.01,
            max_steps: 400,
            newton_tol: 1e-10,
            max_newton_iters: 12,
            theta_grid: None,
            z_grid: None,
            eps_max: 0.1,
            mu_bounds: (-1.99, 10.0),
            jacobian: JacobianMode::Analytic,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self, class: &SymmetryClass) -> Result<(), ContinuationError> {
        let bad = |s: &str| Err(ContinuationError::Config(s.into()));
        if !(self.ds > 0.0 && self.ds.is_finite()) {
            return bad("ds must be positive");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol must be positive");
        }
        if self.max_newton_iters == 0 {
            return bad("max_newton_iters must be positive");
        }
        if !(self.eps_max > 0.0) {
            return bad("eps_max must be positive");
        }
        if self.truncation < class.n() {
            return bad("truncation must reach the kernel degree");
        }
        let j = class.max_frequency(self.truncation);
        if let Some(nt) = self.theta_grid {
            if nt < 3 * j.max(1) {
                return bad("theta grid too coarse for cubic products");
            }
        }
        if let Some(nz) = self.z_grid {
            if nz < 3 * self.truncation / 2 + 4 {
                return bad("z grid too coarse for cubic products");
            }
        }
        Ok(())
    }

    pub fn grid(&self, class: SymmetryClass) -> Result<SpectralGrid, ContinuationError> {
        let default = SpectralGrid::for_truncation(class, self.truncation);
        match (self.z_grid, self.theta_grid) {
            (None, None) => Ok(default),
            (nz, nt) => Ok(SpectralGrid::new(
                class,
                self.truncation,
                nz.unwrap_or(default.z_count()),
                nt.unwrap_or(default.theta_count()),
            )?),
        }
    }
}

/// The discretized operator on one class, truncation and grid.
pub struct GalerkinSystem {
    grid: SpectralGrid,
    kernel_mode: Mode,
    kernel_norm: f64,
    check_aliasing: bool,
}

struct Exponentials {
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl GalerkinSystem {
    pub fn new(grid: SpectralGrid) -> Self {
        let class = grid.class();
        let kernel_mode = Mode {
            l: class.n(),
            j: class.m(),
        };
        Self {
            grid,
            kernel_mode,
            kernel_norm: mode_norm_sq(kernel_mode).sqrt(),
            check_aliasing: true,
        }
    }

    pub fn with_default_grid(class: SymmetryClass, truncation: usize) -> Self {
        Self::new(SpectralGrid::for_truncation(class, truncation))
    }

    /// Disables the tail-energy check, for probing under-resolved fields.
    pub fn without_aliasing_check(mut self) -> Self {
        self.check_aliasing = false;
        self
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn class(&self) -> SymmetryClass {
        self.grid.class()
    }

    pub fn truncation(&self) -> usize {
        self.grid.truncation()
    }

    /// `‖P_n^m cos(mθ)‖`.
    pub fn kernel_norm(&self) -> f64 {
        self.kernel_norm
    }

    /// Amplitude `ε` with `φ_2 = 2ε P_n^m cos(mθ) + …`.
    pub fn eps(&self, field: &SphereField) -> f64 {
        field.coeff(Component::Second, self.kernel_mode) / (2.0 * self.kernel_norm)
    }

    fn check(&self, field: &SphereField) -> Result<(), ContinuationError> {
        if field.class() != self.class() || field.truncation() != self.truncation() {
            return Err(ContinuationError::FieldMismatch);
        }
        if self.check_aliasing {
            let fraction = field.tail_energy_fraction();
            if fraction > ALIASING_TOL {
                return Err(ContinuationError::Resolution { fraction });
            }
        }
        Ok(())
    }

    fn exponentials(&self, field: &SphereField) -> Exponentials {
        let [p1, p2] = self.grid.synthesize_field(field);
        let plus = p1.iter().zip(&p2).map(|(a, b)| (0.5 * (a + b)).exp()).collect();
        let minus = p1.iter().zip(&p2).map(|(a, b)| (0.5 * (a - b)).exp()).collect();
        Exponentials { plus, minus }
    }

    fn grid_residual(&self, lambda: f64, e: &Exponentials) -> [Vec<f64>; 2] {
        [
            e.plus.iter().zip(&e.minus).map(|(p, m)| 2.0 * (p + m - 2.0)).collect(),
            e.plus.iter().zip(&e.minus).map(|(p, m)| lambda * (p - m)).collect(),
        ]
    }

    /// Pointwise nonlinear part of the operator on the grid, before projection.
    pub fn nonlinear_values(&self, mu: f64, field: &SphereField) -> Result<[Vec<f64>; 2], ContinuationError> {
        let lambda = coupling_eigenvalue(mu)?;
        let e = self.exponentials(field);
        Ok(self.grid_residual(lambda, &e))
    }

    /// The operator projected on the class modes.
    pub fn residual(&self, mu: f64, field: &SphereField) -> Result<SphereField, ContinuationError> {
        self.check(field)?;
        let lambda = coupling_eigenvalue(mu)?;
        let e = self.exponentials(field);
        let values = self.grid_residual(lambda, &e);
        let mut out = self.grid.analyze_field(&values);
        for c in Component::BOTH {
            let modes = field.modes(c).to_vec();
            let input = field.coeffs(c);
            for (k, (o, mode)) in out.coeffs_mut(c).iter_mut().zip(&modes).enumerate() {
                *o -= (mode.l * (mode.l + 1)) as f64 * input[k];
            }
        }
        Ok(out)
    }

    /// `∫ e^{(φ_1+φ_2)/2}` and `∫ e^{(φ_1-φ_2)/2}` over the sphere.
    pub fn masses(&self, field: &SphereField) -> (f64, f64) {
        let e = self.exponentials(field);
        (self.grid.integrate(&e.plus), self.grid.integrate(&e.minus))
    }

    /// `G[W]_{ab} = ∫ W b_a b_b` over component modes.
    fn gram(&self, w: &[f64], rows: Component, cols: Component) -> DMatrix<f64> {
        let ra = self.grid.modes(rows);
        let cb = self.grid.modes(cols);
        let jmax = 2 * self.grid.max_frequency();
        let fourier = self.grid.cosine_transform(w, jmax);
        let nz = self.grid.z_count();
        let mut g = DMatrix::zeros(ra.len(), cb.len());
        for (a, ma) in ra.iter().enumerate() {
            let ta = self.grid.radial(rows, a);
            for (b, mb) in cb.iter().enumerate() {
                let tb = self.grid.radial(cols, b);
                let (d, s) = (ma.j.abs_diff(mb.j), ma.j + mb.j);
                let mut acc = 0.0;
                for i in 0..nz {
                    acc += self.grid.z_weights[i] * ta[i] * tb[i] * 0.5 * (fourier[i][d] + fourier[i][s]);
                }
                g[(a, b)] = acc;
            }
        }
        g
    }

    /// Jacobian with respect to `(coefficients, μ)`, rows and columns ordered
    /// as [`SphereField::to_vector`] followed by `μ`.
    pub fn jacobian(&self, mu: f64, field: &SphereField) -> Result<DMatrix<f64>, ContinuationError> {
        self.check(field)?;
        let lambda = coupling_eigenvalue(mu)?;
        let e = self.exponentials(field);
        let sum: Vec<f64> = e.plus.iter().zip(&e.minus).map(|(p, m)| p + m).collect();
        let diff: Vec<f64> = e.plus.iter().zip(&e.minus).map(|(p, m)| p - m).collect();
        let n1 = field.coeffs(Component::First).len();
        let n2 = field.coeffs(Component::Second).len();
        let n = n1 + n2;
        let mut j = DMatrix::zeros(n, n + 1);
        use Component::{First, Second};
        j.view_mut((0, 0), (n1, n1)).copy_from(&self.gram(&sum, First, First));
        j.view_mut((0, n1), (n1, n2)).copy_from(&self.gram(&diff, First, Second));
        j.view_mut((n1, 0), (n2, n1)).copy_from(&(self.gram(&diff, Second, First) * (0.5 * lambda)));
        j.view_mut((n1, n1), (n2, n2)).copy_from(&(self.gram(&sum, Second, Second) * (0.5 * lambda)));
        for (k, mode) in field.modes(First).iter().chain(field.modes(Second)).enumerate() {
            j[(k, k)] -= (mode.l * (mode.l + 1)) as f64;
        }
        let dmu = self.grid.analyze(Second, &diff);
        let dl = coupling_eigenvalue_deriv(mu);
        for (k, v) in dmu.iter().enumerate() {
            j[(n1 + k, n)] = dl * v;
        }
        Ok(j)
    }

    /// Central-difference Jacobian, for checking the analytic one.
    pub fn jacobian_fd(&self, mu: f64, field: &SphereField, h: f64) -> Result<DMatrix<f64>, ContinuationError> {
        let x = field.to_vector();
        let n = x.len();
        let mut j = DMatrix::zeros(n, n + 1);
        let mut f = field.clone();
        for col in 0..=n {
            let eval = |f: &mut SphereField, sign: f64| -> Result<Vec<f64>, ContinuationError> {
                let mut y = x.clone();
                let mut m = mu;
                if col < n {
                    y[col] += sign * h;
                } else {
                    m += sign * h;
                }
                f.set_vector(&y);
                Ok(self.residual(m, f)?.to_vector())
            };
            let plus = eval(&mut f, 1.0)?;
            let minus = eval(&mut f, -1.0)?;
            for row in 0..n {
                j[(row, col)] = (plus[row] - minus[row]) / (2.0 * h);
            }
        }
        Ok(j)
    }

    /// Largest violation of the class symmetries by the unprojected
    /// nonlinear term.
    pub fn equivariance_defect(&self, mu: f64, field: &SphereField) -> Result<f64, ContinuationError> {
        let values = self.nonlinear_values(mu, field)?;
        let class = self.class();
        let maps: &[Isometry] = if class.is_radial() {
            &[Isometry::Sigma]
        } else {
            &Isometry::ALL
        };
        let mut worst = 0.0f64;
        for &g in maps {
            for c in Component::BOTH {
                let v = &values[c.index()];
                let composed = self.grid.compose(v, g)?;
                let s = g.expected_sign(&class, c);
                for (a, b) in composed.iter().zip(v) {
                    worst = worst.max((a - s * b).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// The projected operator on a default grid for the field's truncation.
pub fn residual(mu: f64, field: &SphereField) -> Result<SphereField, ContinuationError> {
    GalerkinSystem::with_default_grid(field.class(), field.truncation()).residual(mu, field)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub mu: f64,
    /// `φ_2 = 2ε P_n^m cos(mθ) + …`
    pub eps: f64,
    pub field: SphereField,
    pub residual_norm: f64,
    /// Signed: negative steps run towards negative `ε`.
    pub step_index: i64,
    pub newton_iterations: usize,
    /// Sphere integrals of `e^{(φ_1 ± φ_2)/2}`.
    pub masses: (f64, f64),
}

impl BranchPoint {
    pub fn is_trivial(&self) -> bool {
        self.field.to_vector().iter().all(|v| v.abs() < 1e-12)
    }

    /// `8π/(2+μ)`, the plane mass of each component.
    pub fn plane_mass(&self) -> f64 {
        8.0 * PI / (2.0 + self.mu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    EpsBound,
    MuBound,
    MaxSteps,
    NewtonFailure { mu: f64, eps: f64, ds: f64 },
    /// The field outgrew the truncation.
    Unresolved { mu: f64, eps: f64, fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchHeader {
    pub n: usize,
    pub m: usize,
    pub truncation: usize,
    pub z_grid: usize,
    pub theta_grid: usize,
    pub newton_tol: f64,
    pub ds: f64,
    pub eps_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub header: BranchHeader,
    /// Ordered by step index, from the negative end to the positive end.
    pub points: Vec<BranchPoint>,
    /// How each direction ended: `[negative, positive]`.
    pub termination: [Termination; 2],
}

impl Branch {
    pub fn newton_failed(&self) -> bool {
        self.termination
            .iter()
            .any(|t| matches!(t, Termination::NewtonFailure { .. } | Termination::Unresolved { .. }))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

fn describe_kernel(class: &SymmetryClass) -> String {
    restricted_kernel_modes(class)
        .iter()
        .map(|(c, m)| format!("φ{}:(l={}, j={})", c.index() + 1, m.l, m.j))
        .collect::<Vec<_>>()
        .join(", ")
}

struct State {
    x: DVector<f64>,
    tangent: DVector<f64>,
}

struct Tracer<'a> {
    system: &'a GalerkinSystem,
    cfg: &'a ContinuationConfig,
    template: SphereField,
}

impl Tracer<'_> {
    fn unknowns(&self) -> usize {
        self.template.len()
    }

    fn split(&self, x: &DVector<f64>) -> (SphereField, f64) {
        let n = self.unknowns();
        let mut f = self.template.clone();
        f.set_vector(&x.as_slice()[..n]);
        (f, x[n])
    }

    fn jacobian(&self, mu: f64, field: &SphereField) -> Result<DMatrix<f64>, ContinuationError> {
        match self.cfg.jacobian {
            JacobianMode::Analytic => self.system.jacobian(mu, field),
            JacobianMode::FiniteDifference => self.system.jacobian_fd(mu, field, 1e-7),
        }
    }

    fn bordered(j: &DMatrix<f64>, t: &DVector<f64>) -> DMatrix<f64> {
        let n = j.nrows();
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n + 1)).copy_from(j);
        a.view_mut((n, 0), (1, n + 1)).copy_from(&t.transpose());
        a
    }

    /// Corrects `pred` on the hyperplane orthogonal to `t`.
    fn correct(&self, pred: &DVector<f64>, t: &DVector<f64>) -> Result<(DVector<f64>, f64, usize), ContinuationError> {
        let n = self.unknowns();
        let mut x = pred.clone();
        for iter in 0..=self.cfg.max_newton_iters {
            let (field, mu) = self.split(&x);
            if !(self.cfg.mu_bounds.0 - 1.0..=self.cfg.mu_bounds.1 + 1.0).contains(&mu) || mu <= -2.0 {
                return Err(ContinuationError::Singular);
            }
            let r = self.system.residual(mu, &field)?.to_vector();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let arc = t.dot(&(&x - pred));
            if norm < self.cfg.newton_tol && arc.abs() < 1e-12 {
                return Ok((x, norm, iter));
            }
            if iter == self.cfg.max_newton_iters || !norm.is_finite() {
                break;
            }
            let a = Self::bordered(&self.jacobian(mu, &field)?, t);
            let mut rhs = DVector::zeros(n + 1);
            rhs.as_mut_slice()[..n].copy_from_slice(&r);
            rhs[n] = arc;
            let dx = a.lu().solve(&rhs).ok_or(ContinuationError::Singular)?;
            x -= dx;
        }
        Err(ContinuationError::Singular)
    }

    fn tangent(&self, x: &DVector<f64>, prev: &DVector<f64>) -> Result<DVector<f64>, ContinuationError> {
        let n = self.unknowns();
        let (field, mu) = self.split(x);
        let a = Self::bordered(&self.jacobian(mu, &field)?, prev);
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;
        let t = a.lu().solve(&rhs).ok_or(ContinuationError::Singular)?;
        let t = t.normalize();
        Ok(if t.dot(prev) < 0.0 { -t } else { t })
    }

    fn point(&self, x: &DVector<f64>, residual_norm: f64, step: i64, iters: usize) -> BranchPoint {
        let (field, mu) = self.split(x);
        BranchPoint {
            mu,
            eps: self.system.eps(&field),
            masses: self.system.masses(&field),
            field,
            residual_norm,
            step_index: step,
            newton_iterations: iters,
        }
    }

    fn run(&self, start: State, direction: i64) -> (Vec<BranchPoint>, Termination) {
        let cfg = self.cfg;
        let (ds_min, ds_max) = (cfg.ds / 16.0, 4.0 * cfg.ds);
        let mut ds = cfg.ds;
        let mut state = start;
        let mut easy = 0;
        let mut out = Vec::new();
        for step in 1..=cfg.max_steps as i64 {
            let (x, norm, iters) = loop {
                let pred = &state.x + &state.tangent * ds;
                match self.correct(&pred, &state.tangent) {
                    Ok(done) => break done,
                    Err(_) if ds / 2.0 >= ds_min * (1.0 - 1e-12) => {
                        ds /= 2.0;
                        easy = 0;
                    }
                    Err(e) => {
                        let (field, mu) = self.split(&state.x);
                        let eps = self.system.eps(&field);
                        let end = match e {
                            ContinuationError::Resolution { fraction } => Termination::Unresolved { mu, eps, fraction },
                            _ => Termination::NewtonFailure { mu, eps, ds },
                        };
                        return (out, end);
                    }
                }
            };
            let p = self.point(&x, norm, direction * step, iters);
            if p.eps.abs() > cfg.eps_max {
                return (out, Termination::EpsBound);
            }
            if !(cfg.mu_bounds.0..=cfg.mu_bounds.1).contains(&p.mu) {
                return (out, Termination::MuBound);
            }
            out.push(p);
            let tangent = match self.tangent(&x, &state.tangent) {
                Ok(t) => t,
                Err(_) => {
                    let last = out.last().expect("just pushed");
                    return (
                        out.clone(),
                        Termination::NewtonFailure {
                            mu: last.mu,
                            eps: last.eps,
                            ds,
                        },
                    );
                }
            };
            state = State { x, tangent };
            if iters <= 3 {
                easy += 1;
                if easy >= 4 {
                    ds = (2.0 * ds).min(ds_max);
                    easy = 0;
                }
            } else {
                easy = 0;
            }
        }
        (out, Termination::MaxSteps)
    }
}

/// Traces the branch through `(μ_n, 0)` in both directions of the kernel.
pub fn continue_branch(class: SymmetryClass, cfg: &ContinuationConfig) -> Result<Branch, ContinuationError> {
    let kernel = restricted_kernel_modes(&class);
    if kernel.len() != 1 {
        return Err(ContinuationError::KernelDimension {
            dimension: kernel.len(),
            modes: describe_kernel(&class),
        });
    }
    cfg.validate(&class)?;
    let grid = cfg.grid(class)?;
    let header = BranchHeader {
        n: class.n(),
        m: class.m(),
        truncation: cfg.truncation,
        z_grid: grid.z_count(),
        theta_grid: grid.theta_count(),
        newton_tol: cfg.newton_tol,
        ds: cfg.ds,
        eps_max: cfg.eps_max,
    };
    let system = GalerkinSystem::new(grid);
    let template = SphereField::zeros(class, cfg.truncation);
    let tracer = Tracer {
        system: &system,
        cfg,
        template: template.clone(),
    };
    let n = template.len();
    let mu0 = mu_n(class.n());
    let mut x0 = DVector::zeros(n + 1);
    x0[n] = mu0;
    let (kc, kmode) = kernel[0];
    let offset = match kc {
        Component::First => 0,
        Component::Second => template.coeffs(Component::First).len(),
    };
    let k = template
        .modes(kc)
        .iter()
        .position(|&m| m == kmode)
        .expect("kernel mode is admissible");
    let mut t0 = DVector::zeros(n + 1);
    t0[offset + k] = 1.0;

    let origin = BranchPoint {
        mu: mu0,
        eps: 0.0,
        masses: system.masses(&template),
        field: template,
        residual_norm: 0.0,
        step_index: 0,
        newton_iterations: 0,
    };
    let (neg, neg_end) = tracer.run(
        State {
            x: x0.clone(),
            tangent: -t0.clone(),
        },
        -1,
    );
    let (pos, pos_end) = tracer.run(State { x: x0, tangent: t0 }, 1);
    let mut points: Vec<BranchPoint> = neg.into_iter().rev().collect();
    points.push(origin);
    points.extend(pos);
    Ok(Branch {
        header,
        points,
        termination: [neg_end, pos_end],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFit {
    /// `μ''(0)` in the `ε` of [`BranchPoint::eps`].
    pub mu2: f64,
    /// Standard error of `mu2`.
    pub mu2_error: f64,
    pub mu0: f64,
    pub linear: f64,
    pub rms_residual: f64,
    pub points_used: usize,
}

/// Least-squares fit of `μ(ε)` by a polynomial about `ε = 0` over points with
/// `|ε| <= eps_window`; quadratic for few points, quartic once there are at
/// least eight so the `ε^4` term does not bias the curvature.
pub fn curvature_estimate(points: &[BranchPoint], eps_window: f64) -> Result<CurvatureFit, ContinuationError> {
    let used: Vec<&BranchPoint> = points.iter().filter(|p| p.eps.abs() <= eps_window).collect();
    if used.len() < 5 {
        return Err(ContinuationError::DegenerateFit(format!("{} points in window", used.len())));
    }
    let scale = used.iter().fold(0.0f64, |a, p| a.max(p.eps.abs()));
    if scale < 1e-9 {
        return Err(ContinuationError::DegenerateFit("branch is trivial".into()));
    }
    if !(used.iter().any(|p| p.eps < 0.0) && used.iter().any(|p| p.eps > 0.0)) {
        return Err(ContinuationError::DegenerateFit("points do not straddle ε = 0".into()));
    }
    let degree = if used.len() >= 8 { 4 } else { 2 };
    let k = used.len();
    let a = DMatrix::from_fn(k, degree + 1, |i, d| (used[i].eps / scale).powi(d as i32));
    let b = DVector::from_iterator(k, used.iter().map(|p| p.mu));
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(&b, 1e-14)
        .map_err(|e| ContinuationError::DegenerateFit(e.to_string()))?;
    let r = &a * &x - &b;
    let rss = r.norm_squared();
    let dof = (k - degree - 1).max(1) as f64;
    let sigma2 = rss / dof;
    let ata_inv = (a.transpose() * &a)
        .try_inverse()
        .ok_or_else(|| ContinuationError::DegenerateFit("singular normal equations".into()))?;
    let c = x[2] / (scale * scale);
    let c_err = (sigma2 * ata_inv[(2, 2)]).sqrt() / (scale * scale);
    let rms = (rss / k as f64).sqrt();
    let spread = (c.abs() * scale * scale).max(1e-9);
    if rms > 0.1 * spread {
        return Err(ContinuationError::DegenerateFit(format!("rms residual {rms:e}")));
    }
    Ok(CurvatureFit {
        mu2: 2.0 * c,
        mu2_error: 2.0 * c_err,
        mu0: x[0],
        linear: x[1] / scale,
        rms_residual: rms,
        points_used: k,
    })
}

/// Sphere masses `∫ e^{(φ_1 ± φ_2)/2}` of a point.
pub fn mass_check(point: &BranchPoint) -> (f64, f64) {
    GalerkinSystem::with_default_grid(point.field.class(), point.field.truncation()).masses(&point.field)
}

/// Sign changes of `φ_2(z)` for a radial point, each checked to be simple.
pub fn radial_zero_count(point: &BranchPoint) -> Result<usize, ContinuationError> {
    let class = point.field.class();
    if !class.is_radial() {
        return Err(ContinuationError::Precondition("zero count needs a radial class".into()));
    }
    let f = |z: f64| point.field.eval(Component::Second, 0.0, z);
    let samples = 4000;
    let zs: Vec<f64> = (0..=samples).map(|k| -1.0 + 2.0 * k as f64 / samples as f64).collect();
    let vals: Vec<f64> = zs.iter().map(|&z| f(z)).collect();
    let peak = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak < 1e-12 {
        return Err(ContinuationError::Precondition("φ2 vanishes identically".into()));
    }
    let h = 2.0 / samples as f64;
    let slope_scale = vals.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(0.0f64, f64::max);
    let mut count = 0;
    for i in 0..samples {
        let (a, b) = (vals[i], vals[i + 1]);
        if a == 0.0 || a * b < 0.0 {
            let slope = (b - a).abs() / h;
            if slope < 1e-6 * slope_scale {
                return Err(ContinuationError::NonSimpleZero { z: zs[i] });
            }
            count += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{linearized_apply, restricted_kernel_basis};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(class: SymmetryClass, l: usize, amp: f64, seed: u64) -> SphereField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = SphereField::zeros(class, l);
        for c in Component::BOTH {
            let modes = f.modes(c).to_vec();
            for (v, m) in f.coeffs_mut(c).iter_mut().zip(&modes) {
                *v = amp * rng.random_range(-1.0..1.0) * 0.2f64.powi(m.l as i32);
            }
        }
        f
    }

    #[test]
    fn zero_field_has_zero_residual() {
        let class = SymmetryClass::new(3, 2).unwrap();
        let f = SphereField::zeros(class, 12);
        assert!(residual(0.3, &f).unwrap().norm() < 1e-14);
    }

    #[test]
    fn directional_derivative_is_the_linearization() {
        let class = SymmetryClass::new(3, 2).unwrap();
        let sys = GalerkinSystem::with_default_grid(class, 12);
        let w = random_field(class, 12, 1.0, 3);
        let mu = -0.7;
        let h = 1e-6;
        let mut plus = w.clone();
        plus.set_vector(&w.to_vector().iter().map(|v| v * h).collect::<Vec<_>>());
        let r = sys.residual(mu, &plus).unwrap();
        let lin = linearized_apply(mu, &w).unwrap();
        for (a, b) in r.to_vector().iter().zip(lin.to_vector()) {
            assert_abs_diff_eq!(a / h, b, epsilon = 1e-8 * lin.norm().max(1.0));
        }
    }

    #[test]
    fn second_derivative_structure() {
        let class = SymmetryClass::new(3, 2).unwrap();
        let sys = GalerkinSystem::with_default_grid(class, 12);
        let w0 = &restricted_kernel_basis(&class)[0];
        let w0 = w0.with_truncation(12);
        let mu = mu_n(3);
        let h = 1e-3;
        let scaled = |s: f64| {
            let mut f = w0.clone();
            f.set_vector(&w0.to_vector().iter().map(|v| v * s).collect::<Vec<_>>());
            f
        };
        let a = sys.nonlinear_values(mu, &scaled(h)).unwrap();
        let b = sys.nonlinear_values(mu, &scaled(-h)).unwrap();
        let w = sys.grid().synthesize(Component::Second, w0.coeffs(Component::Second));
        for k in 0..w.len() {
            let d1 = (a[0][k] + b[0][k]) / (h * h);
            let d2 = (a[1][k] + b[1][k]) / (h * h);
            assert!((d1 - w[k] * w[k]).abs() < 1e-5 * (1.0 + w[k] * w[k]));
            assert!(d2.abs() < 1e-9);
        }
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        for (n, m) in [(3, 2), (3, 0), (4, 3)] {
            let class = SymmetryClass::new(n, m).unwrap();
            let sys = GalerkinSystem::with_default_grid(class, 10).without_aliasing_check();
            let f = random_field(class, 10, 0.8, 11 + n as u64);
            let a = sys.jacobian(-0.4, &f).unwrap();
            let d = sys.jacobian_fd(-0.4, &f, 1e-6).unwrap();
            let scale = a.amax();
            assert!((a - d).amax() < 1e-6 * scale.max(1.0));
        }
    }

    #[test]
    fn nonlinear_term_stays_in_class() {
        for (n, m) in [(3, 2), (5, 4), (4, 0)] {
            let class = SymmetryClass::new(n, m).unwrap();
            let sys = GalerkinSystem::with_default_grid(class, 12).without_aliasing_check();
            let f = random_field(class, 12, 1.0, 5);
            assert!(sys.equivariance_defect(0.2, &f).unwrap() < 1e-10);
        }
    }

    #[test]
    fn under_resolved_field_is_reported() {
        let class = SymmetryClass::new(3, 2).unwrap();
        let mut f = SphereField::zeros(class, 12);
        f.set(Component::First, Mode { l: 12, j: 0 }, 1.0).unwrap();
        assert!(matches!(residual(0.0, &f), Err(ContinuationError::Resolution { .. })));
    }

    #[test]
    fn trivial_masses() {
        let class = SymmetryClass::new(3, 2).unwrap();
        let f = SphereField::zeros(class, 8);
        let p = BranchPoint {
            mu: -10.0 / 7.0,
            eps: 0.0,
            field: f,
            residual_norm: 0.0,
            step_index: 0,
            newton_iterations: 0,
            masses: (0.0, 0.0),
        };
        let (a, b) = mass_check(&p);
        assert_abs_diff_eq!(a, 4.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 4.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(p.plane_mass(), 14.0 * PI, epsilon = 1e-12);
        assert!(p.is_trivial());
    }

    fn short_config() -> ContinuationConfig {
        ContinuationConfig {
            truncation: 16,
            ds: 0.05,
            eps_max: 0.05,
            ..Default::default()
        }
    }

    #[test]
    fn branch_at_three_two() {
        let class = SymmetryClass::new(3, 2).unwrap();
        let branch = continue_branch(class, &short_config()).unwrap();
        assert!(!branch.newton_failed());
        assert!(branch.points.len() >= 9);
        for p in &branch.points {
            assert!(p.residual_norm < 1e-10);
            assert!((p.masses.0 - 4.0 * PI).abs() < 1e-6);
            assert!((p.masses.1 - 4.0 * PI).abs() < 1e-6);
        }
        let fit = curvature_estimate(&branch.points, 0.05).unwrap();
        assert!(fit.mu2 < 0.0);
        assert_abs_diff_eq!(fit.mu0, mu_n(3), epsilon = 1e-6);
        // ε -> -ε is a rotation, so μ is even
        let far = branch.points.first().unwrap();
        let mirror = branch.points.last().unwrap();
        assert!(far.eps < 0.0 && mirror.eps > 0.0);
        let json = branch.to_json().unwrap();
        assert_eq!(Branch::from_json(&json).unwrap(), branch);
    }

    #[test]
    fn radial_branch_keeps_three_zeros() {
        let class = SymmetryClass::new(3, 0).unwrap();
        let branch = continue_branch(class, &short_config()).unwrap();
        for p in branch.points.iter().filter(|p| !p.is_trivial()) {
            assert_eq!(radial_zero_count(p).unwrap(), 3);
        }
        assert!(radial_zero_count(&branch.points[branch.points.len() / 2]).is_err());
    }

    #[test]
    fn refuses_double_kernel() {
        let class = SymmetryClass::new(3, 1).unwrap();
        match continue_branch(class, &short_config()) {
            Err(ContinuationError::KernelDimension { dimension, modes }) => {
                assert_eq!(dimension, 2);
                assert!(modes.contains("l=3"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trivial_fit_is_rejected() {
        let class = SymmetryClass::new(3, 2).unwrap();
        let p = BranchPoint {
            mu: -1.0,
            eps: 0.0,
            field: SphereField::zeros(class, 4),
            residual_norm: 0.0,
            step_index: 0,
            newton_iterations: 0,
            masses: (4.0 * PI, 4.0 * PI),
        };
        let pts = vec![p; 7];
        assert!(matches!(
            curvature_estimate(&pts, 1.0),
            Err(ContinuationError::DegenerateFit(_))
        ));
    }
}
