//! TOML run configuration: one table per command plus a shared `[model]`.

use std::path::{Path, PathBuf};

use flatvp::casimir::{AssumptionConstants, CasimirModel, TabulatedQ};
use flatvp::steady_state::{GridSpec, SolverOptions};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub potential_table: PotentialTableSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    pub mu: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub mu3: Option<f64>,
    pub c: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    #[serde(rename = "C1")]
    pub k1: Option<f64>,
    #[serde(rename = "C2")]
    pub k2: Option<f64>,
    #[serde(rename = "C3")]
    pub k3: Option<f64>,
    #[serde(rename = "C4")]
    pub k4: Option<f64>,
    #[serde(rename = "F0")]
    pub f0: Option<f64>,
    /// Two-column `f,Q` CSV for `kind = "custom"`.
    pub table: Option<PathBuf>,
    /// Upper end of the validation grid; default `max(10, 10 F0)`.
    pub validate_f_max: Option<f64>,
    #[serde(default = "default_validate_points")]
    pub validate_points: usize,
}

fn default_validate_points() -> usize {
    400
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub mass: Option<f64>,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_tol")]
    pub mass_tol: f64,
    pub e0_lo: Option<f64>,
    pub e0_hi: Option<f64>,
    /// `auto`, `hybrid` or `uniform`.
    #[serde(default = "default_grid")]
    pub grid: String,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    pub r_core: Option<f64>,
    pub r_max: Option<f64>,
}

fn default_damping() -> f64 {
    0.5
}
fn default_max_iters() -> usize {
    20_000
}
fn default_tol() -> f64 {
    1e-10
}
fn default_grid() -> String {
    "auto".into()
}
fn default_nodes() -> usize {
    512
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            mass: None,
            damping: default_damping(),
            max_iters: default_max_iters(),
            residual_tol: default_tol(),
            mass_tol: default_tol(),
            e0_lo: None,
            e0_hi: None,
            grid: default_grid(),
            nodes: default_nodes(),
            r_core: None,
            r_max: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    /// Random `(a, b, c)` triples for the scaling-law check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// `(a, b, c)` are drawn log-uniformly from `[1/range, range]`.
    #[serde(default = "default_range")]
    pub range: f64,
    #[serde(default = "default_scaling_tol")]
    pub identity_tol: f64,
}

fn default_samples() -> usize {
    20
}
fn default_range() -> f64 {
    3.0
}
fn default_scaling_tol() -> f64 {
    1e-6
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self {
            m1: None,
            m2: None,
            samples: default_samples(),
            range: default_range(),
            identity_tol: default_scaling_tol(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    /// Steady-state CSV written by `solve`; solved afresh when absent.
    pub state: Option<PathBuf>,
    /// Absolute split radii.
    pub radii: Option<Vec<f64>>,
    /// Split radii as fractions of the support edge.
    pub fractions: Option<Vec<f64>>,
    /// Constant of the splitting bound; the bound is only checked when set.
    pub constant: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    pub state: Option<PathBuf>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Step in units of the dynamical time.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Duration in units of the dynamical time.
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// `grid` or `direct`.
    #[serde(default = "default_method")]
    pub method: String,
    /// Softening for `direct`, in units of the support edge.
    #[serde(default = "default_softening")]
    pub softening: f64,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    /// `none`, `velocity_scale` or `radial_stretch`.
    #[serde(default = "default_perturbation")]
    pub perturbation: String,
    #[serde(default)]
    pub delta: f64,
    pub seed: Option<u64>,
    /// Also write the final particle snapshot.
    #[serde(default)]
    pub snapshot: bool,
}

fn default_particles() -> usize {
    100_000
}
fn default_dt() -> f64 {
    1.0 / 200.0
}
fn default_duration() -> f64 {
    10.0
}
fn default_method() -> String {
    "grid".into()
}
fn default_softening() -> f64 {
    0.01
}
fn default_output_every() -> usize {
    20
}
fn default_perturbation() -> String {
    "none".into()
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            state: None,
            particles: default_particles(),
            dt: default_dt(),
            duration: default_duration(),
            method: default_method(),
            softening: default_softening(),
            output_every: default_output_every(),
            perturbation: default_perturbation(),
            delta: 0.0,
            seed: None,
            snapshot: false,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialTableSection {
    /// Two-column `r,rho` CSV.
    pub input: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn model_section(&self) -> Result<&ModelSection, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Usage("config: missing [model] table".into()))
    }

    pub fn model(&self) -> Result<CasimirModel, CliError> {
        let m = self.model_section()?;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| {
                CliError::Usage(format!("config: [model] kind = \"{}\" requires `{name}`", m.kind))
            })
        };
        let base = match m.kind.as_str() {
            "polytrope" => CasimirModel::polytrope(need(m.mu, "mu")?, m.c.unwrap_or(1.0))?,
            "double_power" => CasimirModel::double_power(
                need(m.mu1, "mu1")?,
                need(m.mu2, "mu2")?,
                need(m.c1, "c1")?,
                need(m.c2, "c2")?,
            )?,
            "custom" => {
                let path = m.table.as_ref().ok_or_else(|| {
                    CliError::Usage("config: [model] kind = \"custom\" requires `table`".into())
                })?;
                let table = TabulatedQ::from_csv(&self.resolve(path))?;
                let constants = AssumptionConstants {
                    f0: need(m.f0, "F0")?,
                    mu1: need(m.mu1, "mu1")?,
                    mu2: need(m.mu2, "mu2")?,
                    mu3: need(m.mu3, "mu3")?,
                    c1: need(m.k1, "C1")?,
                    c2: need(m.k2, "C2")?,
                    c3: need(m.k3, "C3")?,
                    c4: need(m.k4, "C4")?,
                };
                return Ok(CasimirModel::custom(table, constants)?);
            }
            other => {
                return Err(CliError::Usage(format!(
                    "config: [model] unknown kind `{other}` (polytrope, double_power, custom)"
                )))
            }
        };
        // declared constants override the built-in ones
        let k = base.constants;
        let constants = AssumptionConstants {
            f0: m.f0.unwrap_or(k.f0),
            mu1: if m.kind == "polytrope" { m.mu1.unwrap_or(k.mu1) } else { k.mu1 },
            mu2: if m.kind == "polytrope" { m.mu2.unwrap_or(k.mu2) } else { k.mu2 },
            mu3: m.mu3.unwrap_or(k.mu3),
            c1: m.k1.unwrap_or(k.c1),
            c2: m.k2.unwrap_or(k.c2),
            c3: m.k3.unwrap_or(k.c3),
            c4: m.k4.unwrap_or(k.c4),
        };
        Ok(base.with_constants(constants)?)
    }

    pub fn validation_grid(&self) -> Result<(f64, usize), CliError> {
        let m = self.model_section()?;
        let f0 = m.f0.unwrap_or(1.0);
        Ok((m.validate_f_max.unwrap_or((10.0 * f0).max(10.0)), m.validate_points))
    }

    pub fn solver_options(&self) -> Result<SolverOptions, CliError> {
        let s = &self.solve;
        let d = SolverOptions::default();
        let grid = match s.grid.as_str() {
            "auto" => GridSpec::Auto { n: s.nodes },
            "hybrid" => GridSpec::Hybrid {
                r_core: s
                    .r_core
                    .ok_or_else(|| CliError::Usage("config: [solve] grid = \"hybrid\" requires `r_core`".into()))?,
                r_max: s
                    .r_max
                    .ok_or_else(|| CliError::Usage("config: [solve] grid = \"hybrid\" requires `r_max`".into()))?,
                n: s.nodes,
            },
            "uniform" => GridSpec::Uniform {
                r_max: s
                    .r_max
                    .ok_or_else(|| CliError::Usage("config: [solve] grid = \"uniform\" requires `r_max`".into()))?,
                n: s.nodes,
            },
            other => {
                return Err(CliError::Usage(format!(
                    "config: [solve] unknown grid `{other}` (auto, hybrid, uniform)"
                )))
            }
        };
        let opts = SolverOptions {
            damping: s.damping,
            max_iters: s.max_iters,
            residual_tol: s.residual_tol,
            mass_tol: s.mass_tol,
            e0_lo: s.e0_lo.unwrap_or(d.e0_lo),
            e0_hi: s.e0_hi.unwrap_or(d.e0_hi),
            grid,
        };
        opts.validate().map_err(|e| CliError::Usage(format!("config: [solve] {e}")))?;
        Ok(opts)
    }

    pub fn mass(&self) -> Result<f64, CliError> {
        let m = self
            .solve
            .mass
            .ok_or_else(|| CliError::Usage("config: [solve] requires `mass`".into()))?;
        if !(m > 0.0 && m.is_finite()) {
            return Err(CliError::Usage(format!("config: [solve] mass must be positive, got {m}")));
        }
        Ok(m)
    }
}
