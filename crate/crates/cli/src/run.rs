//! Executes a scenario and writes its outputs.

use std::path::Path;
use std::sync::Arc;

use agediff_core::{
    assemble_discrete_generator, continue_branch, dominant_eigenvalue, gurtin_maccamy_equilibrium, malthusian,
    malthusian_scalar, projection, renewal_limit, simulate, simulate_semilinear, solve_equilibrium,
    validate_assumptions, verify_aeg, verify_example1_bounds, AgeGrid, AgeSpaceField, Boundary, CoefficientSet,
    EquilibriumOptions, Example2Params, QuasilinearModel, Rate, ScalarRates, SemilinearDeath, SpaceGrid,
    SpectralOptions, Trajectory,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::expr::Expr;
use crate::output::{append_field, field_csv, Csv, OutDir};
use crate::scenario::{ModelSpec, Params, RunSpec, Scenario};

pub const SCHEMA_VERSION: u32 = 1;

/// Contents of `run.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub kind: String,
    /// The scenario after defaults and overrides.
    pub scenario: Scenario,
    /// `ok`, `aborted` when a branch stopped early, or `failed`.
    pub status: String,
    pub summary: Value,
    pub files: Vec<String>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn spectral_options(p: &Params) -> SpectralOptions {
    SpectralOptions {
        root_tol: p.tol,
        lambda_tol: p.lambda_tol,
        perron_tol: p.perron_tol,
        max_iter: p.max_iter,
        lambda_limit: p.lambda_limit,
        critical_band: p.critical_band,
    }
}

pub fn equilibrium_options(p: &Params) -> EquilibriumOptions {
    EquilibriumOptions {
        tol: p.outer_tol,
        inner_tol: p.inner_tol,
        damping: p.damping,
        perron_tol: p.perron_tol,
        residual_tol: p.residual_tol,
        s_min: p.s_min,
        s_max: p.s_max,
        ..EquilibriumOptions::default()
    }
}

fn parse(field: &str, src: &str) -> Result<Expr, CliError> {
    Expr::parse(src).map_err(|e| CliError::Validation(format!("{field}: {e}")))
}

fn rate(e: Expr) -> Rate {
    Arc::new(move |u, a, x| e.eval(u, a, x))
}

/// The model a scenario describes, on its grids.
pub fn build_model(sc: &Scenario) -> Result<QuasilinearModel, CliError> {
    let age = AgeGrid::new(sc.age.a_max, sc.age.n_age)?;
    let space = sc
        .space
        .ok_or_else(|| CliError::Validation("space: required for this run kind".into()))?;
    let model = sc
        .model
        .as_ref()
        .ok_or_else(|| CliError::Validation("model: required for this run kind".into()))?;
    let bc = space.bc.unwrap_or(Boundary::Neumann);
    let m = match model {
        ModelSpec::Example1 { alpha, normalization } => {
            QuasilinearModel::example1(*alpha, space.n_x, age, *normalization)?
        }
        ModelSpec::Example2 {
            d0,
            d1,
            mu0,
            mu1,
            beta0,
        } => {
            let p = Example2Params {
                d0: *d0,
                d1: *d1,
                mu0: *mu0,
                mu1: *mu1,
                beta0: *beta0,
            };
            QuasilinearModel::example2(p, space.n_x, age)?
        }
        ModelSpec::Custom {
            d,
            mu,
            beta,
            d_min,
            freeze,
        } => {
            let (d, mu, beta) = (parse("model.d", d)?, parse("model.mu", mu)?, parse("model.beta", beta)?);
            let linear = !(d.uses("U") || mu.uses("U") || beta.uses("U"));
            let coeffs = CoefficientSet::from_rates(rate(d), rate(mu), rate(beta), *d_min, linear);
            let grid = SpaceGrid::new(space.x_lo, space.x_hi, space.n_x, bc)?;
            let report = validate_assumptions(&coeffs, &age, &grid);
            if !report.passes() {
                return Err(CliError::Validation(format!("model: {}", report.messages.join("; "))));
            }
            QuasilinearModel::custom(coeffs, age, grid, *freeze)
        }
    };
    Ok(m)
}

fn initial_field(model: &QuasilinearModel, src: &str) -> Result<AgeSpaceField, CliError> {
    let e = parse("run.initial", src)?;
    let phi = AgeSpaceField::from_fn(model.age, model.space, |a, x| e.eval(0.0, a, x));
    if phi.values().iter().any(|v| !v.is_finite()) {
        return Err(CliError::Validation(
            "run.initial: non-finite values on the grid".into(),
        ));
    }
    if !phi.is_nonnegative() {
        return Err(CliError::Validation("run.initial: negative values on the grid".into()));
    }
    Ok(phi)
}

/// Runs `sc`, writing everything under `out_dir`, and returns the record
/// that was also written to `run.json`. A failed run still writes
/// `run.json`, with status `failed` and the error, next to whatever partial
/// outputs exist.
pub fn execute(sc: &Scenario, out_dir: &Path) -> Result<RunRecord, CliError> {
    let mut out = OutDir::new(out_dir.to_path_buf())?;
    let (status, summary) = match dispatch(sc, &mut out) {
        Ok(r) => r,
        Err(CliError::Io(e)) => return Err(CliError::Io(e)),
        Err(e) => {
            let summary = json!({ "error": e.to_string(), "exit_code": e.exit_code() });
            finish(sc, out, "failed", summary)?;
            return Err(e);
        }
    };
    finish(sc, out, status, summary)
}

fn finish(sc: &Scenario, mut out: OutDir, status: &str, summary: Value) -> Result<RunRecord, CliError> {
    out.files.push("run.json".into());
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        kind: sc.run.kind().to_string(),
        scenario: sc.clone(),
        status: status.to_string(),
        summary,
        files: out.files,
    };
    crate::output::write_json(&out.root.join("run.json"), &record)?;
    Ok(record)
}

fn dispatch(sc: &Scenario, out: &mut OutDir) -> Result<(&'static str, Value), CliError> {
    let result = match &sc.run {
        RunSpec::Spectral {
            aeg_horizon,
            initial,
            generator,
        } => run_spectral(sc, out, *aeg_horizon, initial, *generator)?,
        RunSpec::Simulate {
            t_end,
            cadence,
            initial,
        } => {
            let model = build_model(sc)?;
            let op = model.linear_operator()?;
            let phi = initial_field(&model, initial)?;
            let traj = simulate(&op, &phi, *t_end, *cadence)?;
            ("ok", write_trajectory(out, &model, &traj)?)
        }
        RunSpec::SimulateSemilinear {
            t_end,
            cadence,
            initial,
            death,
        } => {
            let model = build_model(sc)?;
            let op = model.linear_operator()?;
            let phi = initial_field(&model, initial)?;
            let m = parse("run.death", death)?;
            let xs = model.space.nodes();
            let death = SemilinearDeath::new(move |_, total, a| {
                xs.iter().zip(total.values()).map(|(&x, &u)| m.eval(u, a, x)).collect()
            });
            let traj = simulate_semilinear(&op, &phi, *t_end, *cadence, &death)?;
            ("ok", write_trajectory(out, &model, &traj)?)
        }
        RunSpec::Equilibrium { eta, s_init } => {
            let model = build_model(sc)?;
            let opts = equilibrium_options(&sc.params);
            let p = solve_equilibrium(&model, *eta, *s_init, &opts)?;
            if !p.certified(opts.residual_tol) {
                return Err(CliError::NonConvergence(format!(
                    "equilibrium at eta = {eta} failed its certificate: pde {:e}, birth {:e}, r_check {}",
                    p.residuals.pde, p.residuals.birth, p.r_check
                )));
            }
            let bounds = match sc.model {
                Some(ModelSpec::Example1 { .. }) => Some(verify_example1_bounds(&model, &p)?),
                _ => None,
            };
            let summary = json!({
                "eta": p.eta,
                "trivial": p.trivial,
                "amplitude": p.amplitude,
                "sup_norm": p.sup_norm,
                "pde_residual": p.residuals.pde,
                "birth_residual": p.residuals.birth,
                "r_check": p.r_check,
                "inner_iterations": p.inner_iterations,
                "outer_iterations": p.outer_iterations,
                "bounds": bounds,
            });
            out.json("equilibrium.json", &summary)?;
            out.csv("field.csv", &field_csv(&p.u))?;
            ("ok", summary)
        }
        RunSpec::Branch {
            eta_start,
            eta_end,
            n_steps,
        } => {
            let model = build_model(sc)?;
            let opts = equilibrium_options(&sc.params);
            let branch = continue_branch(&model, *eta_start, *eta_end, *n_steps, &opts)?;
            let example1 = matches!(sc.model, Some(ModelSpec::Example1 { .. }));
            let mut csv = Csv::new(&[
                "eta",
                "amplitude",
                "sup_norm",
                "pde_residual",
                "birth_residual",
                "r_check",
            ]);
            let mut bounds_ok = true;
            for (i, p) in branch.points.iter().enumerate() {
                csv.row(&[
                    p.eta,
                    p.amplitude,
                    p.sup_norm,
                    p.residuals.pde,
                    p.residuals.birth,
                    p.r_check,
                ]);
                if example1 {
                    bounds_ok &= verify_example1_bounds(&model, p)?.passed;
                }
                if sc.output.field_dumps {
                    out.csv(&format!("fields/point_{i:03}.csv"), &field_csv(&p.u))?;
                }
            }
            out.csv("branch.csv", &csv)?;
            let summary = json!({
                "eta0": branch.eta0,
                "points": branch.points.len(),
                "requested": n_steps,
                "aborted": branch.aborted,
                "bounds_passed": if example1 { Some(bounds_ok) } else { None },
            });
            (if branch.aborted.is_some() { "aborted" } else { "ok" }, summary)
        }
        RunSpec::Oracle {
            beta,
            mu,
            phi,
            gurtin_maccamy,
        } => {
            let grid = AgeGrid::new(sc.age.a_max, sc.age.n_age)?;
            let (b, m) = (parse("run.beta", beta)?, parse("run.mu", mu)?);
            let rates = ScalarRates::new(move |a| b.eval(0.0, a, 0.0), move |a| m.eval(0.0, a, 0.0));
            let lambda0 = malthusian_scalar(&rates, &grid, sc.params.tol.min(1e-12))?;
            let r0 = agediff_core::net_reproduction(&rates, &grid, 0.0)?;
            let limit = match phi {
                Some(src) => {
                    let e = parse("run.phi", src)?;
                    let v: Vec<f64> = grid.nodes().iter().map(|&a| e.eval(0.0, a, 0.0)).collect();
                    Some(renewal_limit(&rates, &grid, &v)?)
                }
                None => None,
            };
            let gm = match gurtin_maccamy {
                Some(g) => {
                    let (b, m) = (
                        parse("run.gurtin_maccamy.beta", &g.beta)?,
                        parse("run.gurtin_maccamy.mu", &g.mu)?,
                    );
                    let rates =
                        ScalarRates::with_population(move |u, a| b.eval(u, a, 0.0), move |u, a| m.eval(u, a, 0.0));
                    Some(gurtin_maccamy_equilibrium(&rates, &grid, 1e-12)?)
                }
                None => None,
            };
            let summary = json!({
                "lambda0": lambda0,
                "r0": r0,
                "renewal_limit": limit,
                "gurtin_maccamy": gm.as_ref().map(|g| json!({
                    "u_star": g.u_star,
                    "r_check": g.r_check,
                    "integral": g.integral,
                    "r_zero": g.r_zero,
                })),
            });
            let mut full = summary.clone();
            if let Some(g) = &gm {
                full["gurtin_maccamy"]["profile"] = json!(g.profile);
            }
            out.json("oracle.json", &full)?;
            ("ok", summary)
        }
    };
    Ok(result)
}

fn run_spectral(
    sc: &Scenario,
    out: &mut OutDir,
    aeg_horizon: Option<f64>,
    initial: &str,
    generator: bool,
) -> Result<(&'static str, Value), CliError> {
    let model = build_model(sc)?;
    let op = model.linear_operator()?;
    let res = malthusian(&op, &spectral_options(&sc.params))?;
    let gen = if generator {
        let g = assemble_discrete_generator(&op)?;
        Some(dominant_eigenvalue(
            &g,
            sc.params.generator_tol,
            sc.params.generator_max_iter,
        ))
    } else {
        None
    };
    let mut aeg = None;
    let mut coefficient = None;
    if let Some(t) = aeg_horizon {
        let phi = initial_field(&model, initial)?;
        coefficient = Some(projection(&res, &op, &phi)?.coefficient);
        let report = verify_aeg(&res, &op, &phi, t)?;
        let mut csv = Csv::new(&["t", "error"]);
        for (&t, &e) in report.times.iter().zip(&report.errors) {
            csv.row(&[t, e]);
        }
        out.csv("aeg.csv", &csv)?;
        aeg = Some(json!({
            "horizon": t,
            "delta_fit": report.delta_fit,
            "half_ratio": report.half_ratio,
            "eventually_decreasing": report.eventually_decreasing,
            "passed": report.passed,
        }));
    }
    let summary = json!({
        "lambda0": res.lambda0,
        "r_at_zero": res.r_at_zero,
        "r_at_lambda0": res.r_at_lambda0,
        "classification": res.classification,
        "root_iterations": res.root_iterations,
        "perron_iterations": res.perron_iterations,
        "perron_residual": res.perron_residual,
        "dual_residual": res.dual_residual,
        "projection_coefficient": coefficient,
        "generator": gen,
        "aeg": aeg,
    });
    let mut full = summary.clone();
    full["zeta"] = json!(res.zeta);
    full["zeta_dual"] = json!(res.zeta_dual);
    full["x"] = json!(model.space.nodes());
    out.json("spectral.json", &full)?;
    Ok(("ok", summary))
}

fn write_trajectory(out: &mut OutDir, model: &QuasilinearModel, traj: &Trajectory) -> Result<Value, CliError> {
    let mut csv = Csv::new(&["t", "a", "x", "u"]);
    for (&t, f) in traj.times.iter().zip(&traj.fields) {
        append_field(&mut csv, Some(t), f);
    }
    out.csv("trajectory.csv", &csv)?;
    let xs = model.space.nodes();
    let mut births = Csv::new(&["t", "x", "b"]);
    for (&t, b) in traj.births.times.iter().zip(&traj.births.values) {
        for (&x, &v) in xs.iter().zip(b.values()) {
            births.row(&[t, x, v]);
        }
    }
    out.csv("births.csv", &births)?;
    let last = traj.fields.last().expect("trajectory has the initial snapshot");
    Ok(json!({
        "snapshots": traj.times.len(),
        "t_end": traj.times.last(),
        "final_sup_norm": last.sup_norm(),
        "final_min": last.min(),
    }))
}
