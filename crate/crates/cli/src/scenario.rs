//! Scenario files: strict JSON with defaults filled at load time.

use std::path::Path;

use agediff_core::{Boundary, Example2Params, FreezeMode, Normalization};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;
use crate::expr::Expr;

pub const MAX_N_X: usize = 4096;
pub const MAX_N_AGE: usize = 16384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub age: AgeSection,
    #[serde(default)]
    pub space: Option<SpaceSection>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    pub run: RunSpec,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeSection {
    pub a_max: f64,
    pub n_age: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    #[serde(default)]
    pub x_lo: f64,
    #[serde(default = "one")]
    pub x_hi: f64,
    pub n_x: usize,
    #[serde(default)]
    pub bc: Option<Boundary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Example1 {
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default)]
        normalization: Normalization,
    },
    Example2 {
        #[serde(default = "ex2_d0")]
        d0: f64,
        #[serde(default = "ex2_d1")]
        d1: f64,
        #[serde(default = "ex2_mu0")]
        mu0: f64,
        #[serde(default = "ex2_mu1")]
        mu1: f64,
        #[serde(default = "ex2_beta0")]
        beta0: f64,
    },
    /// Expressions in `U`, `a`, `x`.
    Custom {
        d: String,
        mu: String,
        beta: String,
        d_min: f64,
        #[serde(default = "total")]
        freeze: FreezeMode,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunSpec {
    Spectral {
        /// Horizon of an optional growth verification from `initial`.
        #[serde(default)]
        aeg_horizon: Option<f64>,
        #[serde(default = "default_initial")]
        initial: String,
        /// Also compute the dominant eigenvalue of the discrete generator.
        #[serde(default)]
        generator: bool,
    },
    Simulate {
        t_end: f64,
        #[serde(default = "one_usize")]
        cadence: usize,
        #[serde(default = "default_initial")]
        initial: String,
    },
    SimulateSemilinear {
        t_end: f64,
        #[serde(default = "one_usize")]
        cadence: usize,
        #[serde(default = "default_initial")]
        initial: String,
        /// Death modulus `m(U, a, x)` with `U` the age-integrated density.
        death: String,
    },
    Equilibrium {
        eta: f64,
        #[serde(default = "one")]
        s_init: f64,
    },
    Branch {
        eta_start: f64,
        eta_end: f64,
        #[serde(default = "twenty")]
        n_steps: usize,
    },
    Oracle {
        /// `beta(a)`.
        beta: String,
        /// `mu(a)`.
        mu: String,
        /// Initial age profile for the renewal limit.
        #[serde(default)]
        phi: Option<String>,
        #[serde(default)]
        gurtin_maccamy: Option<GmSpec>,
    },
}

impl RunSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            RunSpec::Spectral { .. } => "spectral",
            RunSpec::Simulate { .. } => "simulate",
            RunSpec::SimulateSemilinear { .. } => "simulate_semilinear",
            RunSpec::Equilibrium { .. } => "equilibrium",
            RunSpec::Branch { .. } => "branch",
            RunSpec::Oracle { .. } => "oracle",
        }
    }
}

/// `beta(U, a)` and `mu(U, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmSpec {
    pub beta: String,
    pub mu: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Root tolerance on `|r - 1|` for growth rates.
    pub tol: f64,
    pub lambda_tol: f64,
    pub lambda_limit: f64,
    pub perron_tol: f64,
    pub max_iter: usize,
    pub critical_band: f64,
    /// Equilibria.
    pub damping: f64,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub residual_tol: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub generator_tol: f64,
    pub generator_max_iter: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            lambda_tol: 1e-8,
            lambda_limit: 256.0,
            perron_tol: 1e-12,
            max_iter: 20_000,
            critical_band: 1e-6,
            damping: 0.5,
            outer_tol: 1e-9,
            inner_tol: 1e-11,
            residual_tol: 1e-6,
            s_min: 1e-6,
            s_max: 1e4,
            generator_tol: 1e-7,
            generator_max_iter: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<String>,
    /// Per-point field dumps for branch runs.
    pub field_dumps: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            field_dumps: true,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn twenty() -> usize {
    20
}
fn total() -> FreezeMode {
    FreezeMode::Total
}
fn default_initial() -> String {
    "1".into()
}
fn ex2_d0() -> f64 {
    Example2Params::default().d0
}
fn ex2_d1() -> f64 {
    Example2Params::default().d1
}
fn ex2_mu0() -> f64 {
    Example2Params::default().mu0
}
fn ex2_mu1() -> f64 {
    Example2Params::default().mu1
}
fn ex2_beta0() -> f64 {
    Example2Params::default().beta0
}

/// Reads, overrides, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    load_with_overrides(path, &[])
}

pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Scenario, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text, overrides)
}

pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<Scenario, CliError> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("scenario is not valid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let mut sc: Scenario = serde_json::from_value(value).map_err(|e| CliError::Validation(format!("scenario: {e}")))?;
    sc.fill_defaults();
    sc.validate()?;
    Ok(sc)
}

/// `key.path=value`; the value is parsed as JSON, else taken as a string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override `{spec}` is not key=value")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Validation(format!(
                "override key `{key}` has an empty segment"
            )));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Validation(format!("override `{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn field_err(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {reason}"))
}

impl Scenario {
    fn fill_defaults(&mut self) {
        if let (Some(space), Some(model)) = (self.space.as_mut(), self.model.as_ref()) {
            if space.bc.is_none() {
                space.bc = Some(match model {
                    ModelSpec::Example1 { .. } => Boundary::Dirichlet,
                    _ => Boundary::Neumann,
                });
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let a = &self.age;
        if !(a.a_max.is_finite() && a.a_max > 0.0) {
            return Err(field_err(
                "age.a_max",
                format!("must be finite and > 0, got {}", a.a_max),
            ));
        }
        if a.n_age < 3 || a.n_age > MAX_N_AGE {
            return Err(field_err(
                "age.n_age",
                format!("must lie in [3, {MAX_N_AGE}], got {}", a.n_age),
            ));
        }
        let needs_space = !matches!(self.run, RunSpec::Oracle { .. });
        match (&self.space, needs_space) {
            (None, true) => return Err(field_err("space", "required for this run kind")),
            (Some(s), _) => {
                if !(s.x_lo.is_finite() && s.x_hi.is_finite() && s.x_lo < s.x_hi) {
                    return Err(field_err("space.x_hi", "need finite x_lo < x_hi"));
                }
                if s.n_x < 1 || s.n_x > MAX_N_X {
                    return Err(field_err(
                        "space.n_x",
                        format!("must lie in [1, {MAX_N_X}], got {}", s.n_x),
                    ));
                }
                if s.n_x < 3 && s.bc != Some(Boundary::Neumann) {
                    return Err(field_err("space.n_x", "Dirichlet grids need at least 3 nodes"));
                }
            }
            _ => {}
        }
        match (&self.model, needs_space) {
            (None, true) => return Err(field_err("model", "required for this run kind")),
            (Some(m), _) => self.validate_model(m)?,
            _ => {}
        }
        self.validate_params()?;
        self.validate_run()
    }

    fn validate_model(&self, m: &ModelSpec) -> Result<(), CliError> {
        let space = self.space.as_ref();
        let unit = space.is_some_and(|s| s.x_lo == 0.0 && s.x_hi == 1.0);
        match m {
            ModelSpec::Example1 { alpha, .. } => {
                if !(alpha.is_finite() && *alpha >= 0.0) {
                    return Err(field_err("model.alpha", "must be >= 0"));
                }
                if !unit || space.and_then(|s| s.bc) != Some(Boundary::Dirichlet) {
                    return Err(field_err("space", "example1 lives on (0, 1) with Dirichlet conditions"));
                }
            }
            ModelSpec::Example2 {
                d0,
                d1,
                mu0,
                mu1,
                beta0,
            } => {
                if !(d0.is_finite() && *d0 > 0.0) {
                    return Err(field_err("model.d0", "must be > 0"));
                }
                for (name, v) in [
                    ("model.d1", d1),
                    ("model.mu0", mu0),
                    ("model.mu1", mu1),
                    ("model.beta0", beta0),
                ] {
                    if !(v.is_finite() && *v >= 0.0) {
                        return Err(field_err(name, "must be >= 0"));
                    }
                }
                if !unit || space.and_then(|s| s.bc) != Some(Boundary::Neumann) {
                    return Err(field_err("space", "example2 lives on (0, 1) with Neumann conditions"));
                }
            }
            ModelSpec::Custom { d, mu, beta, d_min, .. } => {
                for (name, src) in [("model.d", d), ("model.mu", mu), ("model.beta", beta)] {
                    Expr::parse(src).map_err(|e| field_err(name, e))?;
                }
                if !(d_min.is_finite() && *d_min > 0.0) {
                    return Err(field_err("model.d_min", "must be > 0"));
                }
            }
        }
        Ok(())
    }

    fn validate_params(&self) -> Result<(), CliError> {
        let p = &self.params;
        let positive = [
            ("params.tol", p.tol),
            ("params.lambda_tol", p.lambda_tol),
            ("params.lambda_limit", p.lambda_limit),
            ("params.perron_tol", p.perron_tol),
            ("params.critical_band", p.critical_band),
            ("params.outer_tol", p.outer_tol),
            ("params.inner_tol", p.inner_tol),
            ("params.residual_tol", p.residual_tol),
            ("params.s_min", p.s_min),
            ("params.s_max", p.s_max),
            ("params.generator_tol", p.generator_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(field_err(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(p.damping > 0.0 && p.damping <= 1.0) {
            return Err(field_err("params.damping", "must lie in (0, 1]"));
        }
        if p.s_min >= p.s_max {
            return Err(field_err("params.s_max", "must exceed params.s_min"));
        }
        if p.max_iter == 0 || p.generator_max_iter == 0 {
            return Err(field_err("params.max_iter", "must be positive"));
        }
        Ok(())
    }

    fn validate_run(&self) -> Result<(), CliError> {
        let expr = |name: &str, src: &str| Expr::parse(src).map(|_| ()).map_err(|e| field_err(name, e));
        match &self.run {
            RunSpec::Spectral {
                aeg_horizon, initial, ..
            } => {
                if let Some(t) = aeg_horizon {
                    if !(t.is_finite() && *t > 0.0) {
                        return Err(field_err("run.aeg_horizon", "must be > 0"));
                    }
                }
                expr("run.initial", initial)
            }
            RunSpec::Simulate {
                t_end,
                cadence,
                initial,
            } => {
                check_horizon(*t_end, *cadence)?;
                expr("run.initial", initial)
            }
            RunSpec::SimulateSemilinear {
                t_end,
                cadence,
                initial,
                death,
            } => {
                check_horizon(*t_end, *cadence)?;
                expr("run.initial", initial)?;
                expr("run.death", death)
            }
            RunSpec::Equilibrium { eta, s_init } => {
                if !(eta.is_finite() && *eta > 0.0) {
                    return Err(field_err("run.eta", "must be > 0"));
                }
                if !(s_init.is_finite() && *s_init >= 0.0) {
                    return Err(field_err("run.s_init", "must be >= 0"));
                }
                Ok(())
            }
            RunSpec::Branch {
                eta_start,
                eta_end,
                n_steps,
            } => {
                if !(eta_start.is_finite() && *eta_start > 0.0 && eta_end.is_finite() && eta_end > eta_start) {
                    return Err(field_err("run.eta_end", "need 0 < eta_start < eta_end"));
                }
                if *n_steps < 2 {
                    return Err(field_err("run.n_steps", "must be >= 2"));
                }
                Ok(())
            }
            RunSpec::Oracle {
                beta,
                mu,
                phi,
                gurtin_maccamy,
            } => {
                expr("run.beta", beta)?;
                expr("run.mu", mu)?;
                if let Some(p) = phi {
                    expr("run.phi", p)?;
                }
                if let Some(gm) = gurtin_maccamy {
                    expr("run.gurtin_maccamy.beta", &gm.beta)?;
                    expr("run.gurtin_maccamy.mu", &gm.mu)?;
                }
                Ok(())
            }
        }
    }
}

fn check_horizon(t_end: f64, cadence: usize) -> Result<(), CliError> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(field_err("run.t_end", "must be > 0"));
    }
    if cadence == 0 {
        return Err(field_err("run.cadence", "must be >= 1"));
    }
    Ok(())
}
