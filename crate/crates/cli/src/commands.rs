use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use liouville_core::coefficients::{
    mu_second, reference_sign, sign_table, sign_table_json, write_sign_table_csv, SignRow,
};
use liouville_core::continuation::{
    continue_branch, curvature_estimate, radial_zero_count, Branch, BranchPoint, ContinuationConfig,
    ContinuationError, Termination,
};
use liouville_core::legendre::{
    legendre_p, legendre_p_normalized, legendre_p_tilde, LegendreIndex,
};
use liouville_core::plane_transfer::{self, to_plane, PlaneGridSpec};
use liouville_core::quadrature::QuadratureSpec;
use liouville_core::spectral::{kernel_basis, mu_n, restricted_kernel_modes, SymmetryClass, Trig};

use crate::{BranchArgs, Failure, Format, KernelArgs, LegendreArgs, PlaneArgs, TableArgs};

const N_LIMIT: usize = 60;
const SLOPE_TOL: f64 = 1e-2;
const SYMMETRY_TOL: f64 = 1e-7;
const MASS_TOL: f64 = 1e-6;

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .map_err(Failure::io)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let mut out = sink(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush())
        .context("writing output")
        .map_err(Failure::io)
}

fn check_spec(spec: &QuadratureSpec) -> Result<(), Failure> {
    spec.validate()
        .map_err(|e| Failure::new(4, format!("quadrature settings: {e}")))
}

pub fn table(args: &TableArgs, spec: &QuadratureSpec) -> Result<u8, Failure> {
    if args.n_min < 1 || args.n_max > N_LIMIT || args.n_min > args.n_max {
        return Err(Failure::new(
            4,
            format!("need 1 <= n-min <= n-max <= {N_LIMIT}, got {}..{}", args.n_min, args.n_max),
        ));
    }
    check_spec(spec)?;
    let rows = sign_table(args.n_min, args.n_max, spec).map_err(|e| Failure::new(4, e.to_string()))?;

    match args.format {
        Format::Csv => {
            let out = sink(args.out.as_deref())?;
            write_sign_table_csv(&rows, out)
                .context("writing table")
                .map_err(Failure::io)?;
        }
        Format::Json => {
            let text = sign_table_json(&rows)
                .context("serializing table")
                .map_err(Failure::io)?;
            write_text(args.out.as_deref(), &text)?;
        }
    }

    let summary = summarize(&rows);
    eprintln!("{}", summary.report);
    Ok(summary.code)
}

struct Summary {
    report: String,
    code: u8,
}

fn summarize(rows: &[SignRow]) -> Summary {
    let mut lines = Vec::new();
    let (mut compared, mut matched, mut failed) = (0, 0, 0);
    for row in rows {
        if let Some(err) = &row.error {
            failed += 1;
            lines.push(format!("  ({},{}) failed: {err}", row.n, row.m));
            continue;
        }
        match row.matches_reference() {
            Some(true) => {
                compared += 1;
                matched += 1;
            }
            Some(false) => {
                compared += 1;
                lines.push(format!(
                    "  ({},{}) sign {} differs from reference {}; mu2 = {:e} ± {:e}",
                    row.n,
                    row.m,
                    row.sign.map(|s| s.to_string()).unwrap_or_default(),
                    reference_sign(row.n, row.m)
                        .map(|s| s.to_string())
                        .unwrap_or_default(),
                    row.mu2.unwrap_or(f64::NAN),
                    row.error_estimate.unwrap_or(f64::NAN),
                ));
            }
            None => {}
        }
    }
    let mut report = format!(
        "{} rows, {compared} compared with the reference, {matched} match, {failed} failed",
        rows.len()
    );
    for l in &lines {
        report.push('\n');
        report.push_str(l);
    }
    let code = if failed > 0 {
        2
    } else if matched < compared {
        1
    } else {
        0
    };
    Summary { report, code }
}

fn refuse(class: &SymmetryClass) -> Failure {
    let modes = restricted_kernel_modes(class);
    let list = modes
        .iter()
        .map(|(c, m)| format!("φ{}: P_{}^{} cos({}θ)", c.index() + 1, m.l, m.j, m.j))
        .collect::<Vec<_>>()
        .join(", ");
    Failure::new(
        4,
        format!(
            "restricted kernel of X_{{{},{}}} has dimension {}, need 1: {list}",
            class.n(),
            class.m(),
            modes.len()
        ),
    )
}

pub fn branch(args: &BranchArgs, cfg: &ContinuationConfig, spec: &QuadratureSpec) -> Result<u8, Failure> {
    let class = SymmetryClass::new(args.n, args.m).map_err(|e| Failure::new(4, e.to_string()))?;
    if restricted_kernel_modes(&class).len() != 1 {
        return Err(refuse(&class));
    }
    check_spec(spec)?;
    let branch = match continue_branch(class, cfg) {
        Ok(b) => b,
        Err(ContinuationError::KernelDimension { .. }) => return Err(refuse(&class)),
        Err(e @ (ContinuationError::Config(_) | ContinuationError::Precondition(_))) => {
            return Err(Failure::new(4, e.to_string()))
        }
        Err(e) => return Err(Failure::new(3, e.to_string())),
    };
    let text = branch.to_json().context("serializing branch").map_err(Failure::io)?;
    write_text(args.out.as_deref(), &text)?;

    eprintln!("{}", branch_report(&branch, args, spec));
    if branch.newton_failed() {
        for t in &branch.termination {
            match t {
                Termination::NewtonFailure { mu, eps, ds } => {
                    eprintln!("Newton failed near μ = {mu:.8}, ε = {eps:.6} with ds = {ds:e}")
                }
                Termination::Unresolved { mu, eps, fraction } => {
                    eprintln!("truncation exhausted near μ = {mu:.8}, ε = {eps:.6}: tail fraction {fraction:e}")
                }
                _ => {}
            }
        }
        return Ok(3);
    }
    Ok(0)
}

fn branch_report(branch: &Branch, args: &BranchArgs, spec: &QuadratureSpec) -> String {
    let mut out = Vec::new();
    let h = &branch.header;
    let eps_range = branch
        .points
        .iter()
        .fold((0.0f64, 0.0f64), |(lo, hi), p| (lo.min(p.eps), hi.max(p.eps)));
    out.push(format!(
        "branch ({},{}): {} points, L = {}, grid {}x{}, ε in [{:.4}, {:.4}], ends {:?} / {:?}",
        h.n,
        h.m,
        branch.points.len(),
        h.truncation,
        h.z_grid,
        h.theta_grid,
        eps_range.0,
        eps_range.1,
        branch.termination[0],
        branch.termination[1],
    ));
    out.push(format!("μ_n = {:.12}", mu_n(h.n)));

    let fit = curvature_estimate(&branch.points, args.fit_window);
    let quad = mu_second(h.n, h.m, spec);
    match (&fit, &quad) {
        (Ok(f), Ok(q)) => {
            let rel = (f.mu2 - q.mu2_branch).abs() / q.mu2_branch.abs().max(1e-300);
            let agree = f.mu2.signum() == q.mu2_branch.signum();
            out.push(format!(
                "μ''(0): fit {:.6e} ± {:.1e} ({} points), quadrature {:.6e}, relative difference {:.2e}, signs {}",
                f.mu2,
                f.mu2_error,
                f.points_used,
                q.mu2_branch,
                rel,
                if agree { "agree" } else { "DISAGREE" }
            ));
            out.push(format!("μ'(0) from fit: {:.2e}", f.linear));
        }
        (Err(e), _) => out.push(format!("μ''(0): fit unavailable: {e}")),
        (_, Err(e)) => out.push(format!("μ''(0): quadrature unavailable: {e}")),
    }

    let target = 4.0 * std::f64::consts::PI;
    let worst = branch
        .points
        .iter()
        .map(|p| (p.masses.0 - target).abs().max((p.masses.1 - target).abs()))
        .fold(0.0f64, f64::max);
    out.push(format!(
        "masses: max |∫e^(φ1±φ2)/2 - 4π| = {worst:.2e} ({})",
        if worst < MASS_TOL { "ok" } else { "FAIL" }
    ));

    if h.m == 0 {
        let counts: Vec<usize> = branch
            .points
            .iter()
            .filter(|p| !p.is_trivial())
            .filter_map(|p| radial_zero_count(p).ok())
            .collect();
        let (lo, hi) = counts
            .iter()
            .fold((usize::MAX, 0), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        if counts.is_empty() {
            out.push("radial zero count: no nontrivial points".into());
        } else {
            out.push(format!("radial zero count of φ2: min {lo}, max {hi} over {} points", counts.len()));
        }
    }
    out.join("\n")
}

pub fn kernel(args: &KernelArgs) -> Result<u8, Failure> {
    if args.n == 0 || args.n > N_LIMIT {
        return Err(Failure::new(4, format!("need 1 <= n <= {N_LIMIT}")));
    }
    let mu = mu_n(args.n);
    let full = kernel_basis(mu).map_err(|e| Failure::new(4, e.to_string()))?;
    let restricted = match args.m {
        Some(m) => {
            let class = SymmetryClass::new(args.n, m).map_err(|e| Failure::new(4, e.to_string()))?;
            Some(restricted_kernel_modes(&class))
        }
        None => None,
    };
    let text = if args.json {
        let value = serde_json::json!({
            "n": args.n,
            "mu": mu,
            "dimension": full.len(),
            "basis": full,
            "restricted": restricted.as_ref().map(|r| serde_json::json!({
                "m": args.m,
                "dimension": r.len(),
                "modes": r.iter().map(|(c, m)| serde_json::json!({"component": c, "mode": m})).collect::<Vec<_>>(),
            })),
        });
        serde_json::to_string_pretty(&value)
            .context("serializing kernel")
            .map_err(Failure::io)?
    } else {
        let mut lines = vec![format!("μ_{} = {:.15}", args.n, mu), format!("kernel dimension {}", full.len())];
        for e in &full {
            let trig = match e.trig {
                Trig::Cos => "cos",
                Trig::Sin => "sin",
            };
            lines.push(format!(
                "  φ{}: P_{}^{}(z) {trig}({}θ)",
                e.component.index() + 1,
                e.mode.l,
                e.mode.j,
                e.mode.j
            ));
        }
        if let Some(r) = &restricted {
            lines.push(format!(
                "restricted to X_{{{},{}}}: dimension {}{}",
                args.n,
                args.m.unwrap_or(0),
                r.len(),
                if r.len() == 1 { " (simple)" } else { "" }
            ));
            for (c, m) in r {
                lines.push(format!("  φ{}: P_{}^{}(z) cos({}θ)", c.index() + 1, m.l, m.j, m.j));
            }
        }
        lines.join("\n")
    };
    write_text(None, &text)?;
    Ok(0)
}

fn pick_point(branch: &Branch, step: Option<i64>) -> Result<&BranchPoint, Failure> {
    match step {
        Some(s) => branch
            .points
            .iter()
            .find(|p| p.step_index == s)
            .ok_or_else(|| Failure::new(4, format!("branch has no point with step index {s}"))),
        None => branch
            .points
            .iter()
            .max_by(|a, b| a.eps.abs().total_cmp(&b.eps.abs()).then(a.step_index.cmp(&b.step_index)))
            .ok_or_else(|| Failure::new(4, "branch has no points")),
    }
}

pub fn validate_plane(args: &PlaneArgs) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(&args.branch)
        .with_context(|| format!("reading {}", args.branch.display()))
        .map_err(Failure::io)?;
    let branch = Branch::from_json(&text)
        .with_context(|| format!("parsing {}", args.branch.display()))
        .map_err(Failure::io)?;
    let point = pick_point(&branch, args.step)?;
    let grid = PlaneGridSpec {
        r_max: args.r_max,
        radial_count: args.radial_count,
        theta_count: args.theta_count,
    };
    let sol = to_plane(point, &grid).map_err(|e| Failure::new(4, e.to_string()))?;
    let report = plane_transfer::validate_plane(&sol, point).map_err(|e| Failure::new(4, e.to_string()))?;

    if let Some(path) = &args.out {
        match args.format {
            Format::Csv => {
                let out = sink(Some(path))?;
                sol.write_csv(out).context("writing plane samples").map_err(Failure::io)?;
            }
            Format::Json => {
                let text = sol.to_json().context("serializing plane samples").map_err(Failure::io)?;
                write_text(Some(path), &text)?;
            }
        }
    }

    let expect_swap = (point.field.class().n() + point.field.class().m()) % 2 == 1;
    let slope_ok = report.slopes.iter().all(|s| (s + 4.0).abs() <= SLOPE_TOL);
    let sym_ok = report.max_symmetry_residual() < SYMMETRY_TOL;
    let swap_ok = report.inversion_swaps == expect_swap;
    let mass_ok = report
        .masses
        .iter()
        .all(|m| (m - report.expected_mass).abs() <= MASS_TOL * report.expected_mass.max(1.0));

    let mut lines = vec![format!(
        "point: step {}, μ = {:.10}, ε = {:.6}",
        point.step_index, point.mu, point.eps
    )];
    for s in &report.symmetries {
        lines.push(format!("  {}: {:.2e}", s.relation, s.residual));
    }
    let verdict = |ok: bool| if ok { "ok" } else { "FAIL" };
    lines.push(format!("symmetry: max residual {:.2e} ({})", report.max_symmetry_residual(), verdict(sym_ok)));
    lines.push(format!(
        "inversion r -> 8/r swaps components: {} ({})",
        report.inversion_swaps,
        verdict(swap_ok)
    ));
    lines.push(format!(
        "far-field slopes: {:.6}, {:.6} ({})",
        report.slopes[0],
        report.slopes[1],
        verdict(slope_ok)
    ));
    lines.push(format!(
        "plane masses: {:.10}, {:.10}, expected {:.10} ({})",
        report.masses[0],
        report.masses[1],
        report.expected_mass,
        verdict(mass_ok)
    ));
    if let Some(r) = report.pde_residual {
        lines.push(format!("relative PDE residual on r in [0.1, 10]: {r:.2e}"));
    }
    if let Some([z1, z2]) = report.remainder_sup {
        lines.push(format!("sup |Z1| = {z1:.3e}, sup |Z2| = {z2:.3e}"));
    }
    let text = lines.join("\n");
    if args.out.is_some() {
        write_text(None, &text)?;
    } else {
        eprintln!("{text}");
    }
    Ok(if slope_ok && sym_ok && swap_ok && mass_ok { 0 } else { 2 })
}

pub fn legendre(args: &LegendreArgs) -> Result<u8, Failure> {
    if args.m > args.n {
        return Err(Failure::new(4, format!("need m <= n, got n = {}, m = {}", args.n, args.m)));
    }
    let idx = LegendreIndex::new(args.n, args.m);
    let mut lines = vec!["z,P,P_tilde,P_normalized".to_string()];
    for &z in &args.z {
        let p = legendre_p(idx, z).map_err(|e| Failure::new(4, e.to_string()))?;
        let pt = if z > -1.0 {
            legendre_p_tilde(idx, z).map_err(|e| Failure::new(4, e.to_string()))?
        } else {
            f64::NAN
        };
        lines.push(format!("{z},{p:e},{pt:e},{:e}", legendre_p_normalized(args.n, args.m, z)));
    }
    write_text(None, &lines.join("\n"))?;
    Ok(0)
}
