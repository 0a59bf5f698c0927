//! Pull-back of sphere solutions to the plane through the stereographic
//! projection `z = (8 - r^2)/(8 + r^2)`, and checks of the plane-side
//! properties: symmetries, far-field slope, PDE residual, mass.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuation::BranchPoint;
use crate::legendre::legendre_column_normalized;
use crate::quadrature::GaussRule;
use crate::spectral::{angular_scale, mode_norm_sq, Component, Mode, SphereField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlaneError {
    #[error("solution has μ = {solution}, point has μ = {point}")]
    MuMismatch { solution: f64, point: f64 },
    #[error("invalid plane grid: {0}")]
    Grid(String),
}

/// `z` of the sphere point over `r`.
pub fn sphere_z(r: f64) -> f64 {
    (8.0 - r * r) / (8.0 + r * r)
}

/// `ρ(x) = 32/(8 + |x|^2)^2`.
pub fn conformal_factor(r: f64) -> f64 {
    32.0 / (8.0 + r * r).powi(2)
}

/// `U_μ(r) = log(64 / ((2+μ)(8+r^2)^2))`.
pub fn background(mu: f64, r: f64) -> f64 {
    (64.0 / ((2.0 + mu) * (8.0 + r * r).powi(2))).ln()
}

/// Polar grid with `r = √8 e^s`, `s` uniform and symmetric, so that
/// `r -> 8/r` permutes the radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneGridSpec {
    pub r_max: f64,
    pub radial_count: usize,
    pub theta_count: usize,
}

impl Default for PlaneGridSpec {
    fn default() -> Self {
        Self {
            r_max: 1e3,
            radial_count: 241,
            theta_count: 96,
        }
    }
}

impl PlaneGridSpec {
    fn validate(&self, m: usize) -> Result<(), PlaneError> {
        if !(self.r_max > 8f64.sqrt()) {
            return Err(PlaneError::Grid("r_max must exceed √8".into()));
        }
        if self.radial_count < 5 || self.radial_count % 2 == 0 {
            return Err(PlaneError::Grid("radial count must be odd and at least 5".into()));
        }
        let period = 2 * m.max(1);
        if self.theta_count < 8 || self.theta_count % period != 0 {
            return Err(PlaneError::Grid(format!("theta count must be a multiple of {period}")));
        }
        Ok(())
    }

    fn radii(&self) -> Vec<f64> {
        let smax = (self.r_max / 8f64.sqrt()).ln();
        let k = self.radial_count - 1;
        (0..=k)
            .map(|i| 8f64.sqrt() * (smax * (2.0 * i as f64 / k as f64 - 1.0)).exp())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub mu: f64,
    pub delta: f64,
    pub center: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSolution {
    pub n: usize,
    pub m: usize,
    pub mu: f64,
    pub eps: f64,
    pub background: Background,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    /// Row-major `[radius][angle]`.
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl PlaneSolution {
    pub fn index(&self, i: usize, t: usize) -> usize {
        i * self.theta.len() + t
    }

    /// CSV with columns `r,theta,u1,u2`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "theta", "u1", "u2"])?;
        for (i, r) in self.r.iter().enumerate() {
            for (t, th) in self.theta.iter().enumerate() {
                let k = self.index(i, t);
                w.write_record([
                    format!("{r:.12e}"),
                    format!("{th:.12e}"),
                    format!("{:.12e}", self.u1[k]),
                    format!("{:.12e}", self.u2[k]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// `φ_c` at height `z` as cosine coefficients: `(j, a_j)` with
/// `φ_c(θ, z) = Σ a_j cos(jθ)`.
fn fourier_profile(field: &SphereField, c: Component, z: f64) -> Vec<(usize, f64)> {
    let modes = field.modes(c);
    let coeffs = field.coeffs(c);
    let mut out = Vec::new();
    let mut k = 0;
    while k < modes.len() {
        let j = modes[k].j;
        let end = modes[k..].iter().position(|m| m.j != j).map_or(modes.len(), |p| k + p);
        let col = legendre_column_normalized(j, modes[end - 1].l, z);
        let radial: f64 = (k..end).map(|i| coeffs[i] * col[modes[i].l - j]).sum();
        out.push((j, radial * angular_scale(j)));
        k = end;
    }
    out
}

fn eval_profile(profile: &[(usize, f64)], theta: f64) -> f64 {
    profile.iter().map(|&(j, a)| a * (j as f64 * theta).cos()).sum()
}

/// `u_{1,2} = U_μ + (φ_1 ± φ_2)/2` on the polar grid.
pub fn to_plane(point: &BranchPoint, grid: &PlaneGridSpec) -> Result<PlaneSolution, PlaneError> {
    let class = point.field.class();
    grid.validate(class.m())?;
    let r = grid.radii();
    let theta: Vec<f64> = (0..grid.theta_count)
        .map(|t| 2.0 * PI * t as f64 / grid.theta_count as f64)
        .collect();
    let mut u1 = Vec::with_capacity(r.len() * theta.len());
    let mut u2 = Vec::with_capacity(r.len() * theta.len());
    for &ri in &r {
        let z = sphere_z(ri);
        let base = background(point.mu, ri);
        let p1 = fourier_profile(&point.field, Component::First, z);
        let p2 = fourier_profile(&point.field, Component::Second, z);
        for &th in &theta {
            let (a, b) = (eval_profile(&p1, th), eval_profile(&p2, th));
            u1.push(base + 0.5 * (a + b));
            u2.push(base + 0.5 * (a - b));
        }
    }
    Ok(PlaneSolution {
        n: class.n(),
        m: class.m(),
        mu: point.mu,
        eps: point.eps,
        background: Background {
            mu: point.mu,
            delta: 1.0,
            center: [0.0, 0.0],
        },
        r,
        theta,
        u1,
        u2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryCheck {
    pub relation: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneReport {
    pub symmetries: Vec<SymmetryCheck>,
    /// Whether `r -> 8/r` exchanges the components (`n + m` odd).
    pub inversion_swaps: bool,
    /// Least-squares slopes of `u_1`, `u_2` against `log r` on `[1e2, 1e3]`,
    /// averaged over angles.
    pub slopes: [f64; 2],
    /// Largest `|Δu_i + Σ a_ij e^{u_j}|` on `r ∈ [0.1, 10]`, relative to
    /// the largest source term there; `None` when the grid is too coarse.
    pub pde_residual: Option<f64>,
    /// `sup |Z_1|`, `sup |Z_2|` of `φ_1 = 2εZ_1`, `φ_2 = 2ε(P_n^m cos mθ + Z_2)`;
    /// `None` on the trivial branch.
    pub remainder_sup: Option<[f64; 2]>,
    /// `∫ e^{u_i}` over the plane.
    pub masses: [f64; 2],
    /// `8π/(2+μ)`.
    pub expected_mass: f64,
}

impl PlaneReport {
    pub fn max_symmetry_residual(&self) -> f64 {
        self.symmetries.iter().map(|s| s.residual).fold(0.0, f64::max)
    }
}

fn max_violation(sol: &PlaneSolution, f: impl Fn(usize, usize) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..sol.r.len() {
        for t in 0..sol.theta.len() {
            worst = worst.max(f(i, t).abs());
        }
    }
    worst
}

fn symmetry_checks(sol: &PlaneSolution, swap: bool) -> Vec<SymmetryCheck> {
    let nt = sol.theta.len();
    let nr = sol.r.len();
    let (u1, u2) = (&sol.u1, &sol.u2);
    let mut out = vec![SymmetryCheck {
        relation: "u_i(r, -θ) = u_i(r, θ)".into(),
        residual: max_violation(sol, |i, t| {
            let tt = (nt - t) % nt;
            (u1[sol.index(i, tt)] - u1[sol.index(i, t)]).abs() + (u2[sol.index(i, tt)] - u2[sol.index(i, t)]).abs()
        }),
    }];
    if sol.m >= 1 {
        let shift = nt / (2 * sol.m);
        out.push(SymmetryCheck {
            relation: "u_1(r, θ + π/m) = u_2(r, θ)".into(),
            residual: max_violation(sol, |i, t| u1[sol.index(i, (t + shift) % nt)] - u2[sol.index(i, t)]),
        });
        out.push(SymmetryCheck {
            relation: "u_1(r, π/m - θ) = u_2(r, θ)".into(),
            residual: max_violation(sol, |i, t| u1[sol.index(i, (shift + nt - t) % nt)] - u2[sol.index(i, t)]),
        });
    }
    let (label, other) = if swap {
        ("u_1(8/r, θ) = log(r^4/64) + u_2(r, θ)", u2)
    } else {
        ("u_1(8/r, θ) = log(r^4/64) + u_1(r, θ)", u1)
    };
    out.push(SymmetryCheck {
        relation: label.into(),
        residual: max_violation(sol, |i, t| {
            let r = sol.r[i];
            u1[sol.index(nr - 1 - i, t)] - (r.powi(4) / 64.0).ln() - other[sol.index(i, t)]
        }),
    });
    out
}

fn far_field_slopes(sol: &PlaneSolution) -> [f64; 2] {
    let rows: Vec<usize> = (0..sol.r.len())
        .filter(|&i| sol.r[i] >= 1e2 * (1.0 - 1e-9) && sol.r[i] <= 1e3 * (1.0 + 1e-9))
        .collect();
    let mut out = [f64::NAN; 2];
    if rows.len() < 2 {
        return out;
    }
    for (c, u) in [&sol.u1, &sol.u2].into_iter().enumerate() {
        let mut total = 0.0;
        for t in 0..sol.theta.len() {
            let xs: Vec<f64> = rows.iter().map(|&i| sol.r[i].ln()).collect();
            let ys: Vec<f64> = rows.iter().map(|&i| u[sol.index(i, t)]).collect();
            let (mx, my) = (
                xs.iter().sum::<f64>() / xs.len() as f64,
                ys.iter().sum::<f64>() / ys.len() as f64,
            );
            let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            total += num / den;
        }
        out[c] = total / sol.theta.len() as f64;
    }
    out
}

/// Five-point residual of `-Δu_1 = 2e^{u_1} + μe^{u_2}`,
/// `-Δu_2 = μe^{u_1} + 2e^{u_2}` in `(log r, θ)`.
fn pde_residual(sol: &PlaneSolution) -> Option<f64> {
    let nr = sol.r.len();
    let nt = sol.theta.len();
    let hs = (sol.r[1] / sol.r[0]).ln();
    let ht = 2.0 * PI / nt as f64;
    if hs > 0.1 || ht > 0.1 {
        return None;
    }
    let mu = sol.mu;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 1..nr - 1 {
        let r = sol.r[i];
        if !(0.1..=10.0).contains(&r) {
            continue;
        }
        for t in 0..nt {
            let (tp, tm) = ((t + 1) % nt, (t + nt - 1) % nt);
            let lap = |u: &[f64]| {
                let c = u[sol.index(i, t)];
                let uss = (u[sol.index(i + 1, t)] - 2.0 * c + u[sol.index(i - 1, t)]) / (hs * hs);
                let utt = (u[sol.index(i, tp)] - 2.0 * c + u[sol.index(i, tm)]) / (ht * ht);
                (uss + utt) / (r * r)
            };
            let (e1, e2) = (sol.u1[sol.index(i, t)].exp(), sol.u2[sol.index(i, t)].exp());
            let res1 = lap(&sol.u1) + 2.0 * e1 + mu * e2;
            let res2 = lap(&sol.u2) + mu * e1 + 2.0 * e2;
            worst = worst.max(res1.abs()).max(res2.abs());
            scale = scale.max(2.0 * e1).max(2.0 * e2);
        }
    }
    (scale > 0.0).then(|| worst / scale)
}

/// `∫_{R^2} e^{u_c}` by Gauss panels in `log r` over `[-15, 15]` around `log √8`.
pub fn plane_mass(point: &BranchPoint, c: Component) -> f64 {
    let rule = GaussRule::new(24);
    let panels = 60;
    let (a, b) = (-15.0, 15.0);
    let h = (b - a) / panels as f64;
    let nt = 4 * point.field.class().max_frequency(point.field.truncation()) + 16;
    let sign = match c {
        Component::First => 1.0,
        Component::Second => -1.0,
    };
    let mut total = 0.0;
    for p in 0..panels {
        for (s, w) in rule.mapped(a + p as f64 * h, a + (p + 1) as f64 * h) {
            let r = 8f64.sqrt() * s.exp();
            let z = sphere_z(r);
            let base = background(point.mu, r);
            let p1 = fourier_profile(&point.field, Component::First, z);
            let p2 = fourier_profile(&point.field, Component::Second, z);
            let ring: f64 = (0..nt)
                .map(|t| {
                    let th = 2.0 * PI * t as f64 / nt as f64;
                    (base + 0.5 * (eval_profile(&p1, th) + sign * eval_profile(&p2, th))).exp()
                })
                .sum::<f64>()
                * 2.0
                * PI
                / nt as f64;
            total += w * ring * r * r;
        }
    }
    total
}

/// Sup norms of the remainders of `φ_1 = 2εZ_1`, `φ_2 = 2ε(w_0 + Z_2)` over a
/// sphere grid; `w_0 = P_n^m cos(mθ)`.
fn remainders(point: &BranchPoint) -> Option<[f64; 2]> {
    if point.eps.abs() < 1e-12 {
        return None;
    }
    let class = point.field.class();
    let kernel = Mode {
        l: class.n(),
        j: class.m(),
    };
    let mut rest = point.field.clone();
    let c0 = rest.coeff(Component::Second, kernel);
    rest.set(Component::Second, kernel, c0 - 2.0 * point.eps * mode_norm_sq(kernel).sqrt())
        .ok()?;
    let rule = GaussRule::new(2 * point.field.truncation() + 8);
    let nt = 4 * class.max_frequency(point.field.truncation()) + 16;
    let mut sup = [0.0f64; 2];
    for &z in &rule.nodes {
        let p1 = fourier_profile(&rest, Component::First, z);
        let p2 = fourier_profile(&rest, Component::Second, z);
        for t in 0..nt {
            let th = 2.0 * PI * t as f64 / nt as f64;
            sup[0] = sup[0].max(eval_profile(&p1, th).abs());
            sup[1] = sup[1].max(eval_profile(&p2, th).abs());
        }
    }
    let k = 2.0 * point.eps.abs();
    Some([sup[0] / k, sup[1] / k])
}

pub fn validate_plane(sol: &PlaneSolution, point: &BranchPoint) -> Result<PlaneReport, PlaneError> {
    if (sol.mu - point.mu).abs() > 1e-12 * point.mu.abs().max(1.0) {
        return Err(PlaneError::MuMismatch {
            solution: sol.mu,
            point: point.mu,
        });
    }
    let class = point.field.class();
    let swap = (class.n() + class.m()) % 2 == 1;
    Ok(PlaneReport {
        symmetries: symmetry_checks(sol, swap),
        inversion_swaps: swap,
        slopes: far_field_slopes(sol),
        pde_residual: pde_residual(sol),
        remainder_sup: remainders(point),
        masses: [plane_mass(point, Component::First), plane_mass(point, Component::Second)],
        expected_mass: point.plane_mass(),
    })
}
