//! Optional TOML configuration. Every key is optional; flags given on the
//! command line take precedence over the file, which takes precedence over
//! the library defaults.

use std::path::Path;

use anyhow::{Context, Result};
use liouville_core::continuation::ContinuationConfig;
use liouville_core::quadrature::QuadratureSpec;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub jobs: Option<usize>,
    #[serde(default)]
    pub quadrature: QuadratureOverrides,
    #[serde(default)]
    pub continuation: ContinuationOverrides,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureOverrides {
    pub panel_count: Option<usize>,
    pub points_per_panel: Option<usize>,
    pub finite_part_radius: Option<f64>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationOverrides {
    pub truncation: Option<usize>,
    pub ds: Option<f64>,
    pub max_steps: Option<usize>,
    pub newton_tol: Option<f64>,
    pub max_newton_iters: Option<usize>,
    pub theta_grid: Option<usize>,
    pub z_grid: Option<usize>,
    pub eps_max: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

impl QuadratureOverrides {
    /// Layers `flags` over `self` over the defaults.
    pub fn resolve(&self, flags: &QuadratureOverrides) -> QuadratureSpec {
        let d = QuadratureSpec::default();
        QuadratureSpec {
            panel_count: pick(flags.panel_count, self.panel_count, d.panel_count),
            points_per_panel: pick(flags.points_per_panel, self.points_per_panel, d.points_per_panel),
            finite_part_radius: pick(flags.finite_part_radius, self.finite_part_radius, d.finite_part_radius),
            abs_tol: pick(flags.abs_tol, self.abs_tol, d.abs_tol),
            rel_tol: pick(flags.rel_tol, self.rel_tol, d.rel_tol),
            ..d
        }
    }
}

impl ContinuationOverrides {
    pub fn resolve(&self, flags: &ContinuationOverrides) -> ContinuationConfig {
        let d = ContinuationConfig::default();
        ContinuationConfig {
            truncation: pick(flags.truncation, self.truncation, d.truncation),
            ds: pick(flags.ds, self.ds, d.ds),
            max_steps: pick(flags.max_steps, self.max_steps, d.max_steps),
            newton_tol: pick(flags.newton_tol, self.newton_tol, d.newton_tol),
            max_newton_iters: pick(flags.max_newton_iters, self.max_newton_iters, d.max_newton_iters),
            theta_grid: flags.theta_grid.or(self.theta_grid),
            z_grid: flags.z_grid.or(self.z_grid),
            eps_max: pick(flags.eps_max, self.eps_max, d.eps_max),
            ..d
        }
    }
}
