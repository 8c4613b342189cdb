//! Positive equilibria of the quasilinear problem
//! `d_a u + A(u, a) u = 0`, `u(0) = eta int beta(u, a) u da`.
//!
//! Nontrivial equilibria satisfy `u = Pi[u] u(0)` with `u(0) = s zeta[u]`,
//! where `zeta[u]` is the Perron vector of the frozen `Q[u]`, and
//! `eta r(Q[u]) = 1`. The solver fixes the amplitude `s`, iterates the first
//! relation to a field `u_s`, and root-finds `g(s) = eta r(Q[u_s]) - 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::elliptic::CoefficientSet;
use crate::error::{Error, Result};
use crate::evolution::{EvolutionOperator, Frozen};
use crate::grid::{integrate_age, AgeGrid, AgeSpaceField, Boundary, SpaceGrid};
use crate::roots::illinois;
use crate::spectral::{assemble_q, perron, stable_field, ReproductionOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(rename = "example1")]
    ExampleI,
    #[serde(rename = "example2")]
    ExampleII,
    Custom,
}

/// How the population enters the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreezeMode {
    /// `U(a, x) = u(a, x)`.
    Density,
    /// `U(x) = int u(a, x) da`.
    Total,
}

/// Scaling of the Example I fertility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `int beta(a) e^{-nu0 a} da = 1` with `nu0 = pi^2`.
    Continuum,
    /// The same identity for the discrete ground state, so `r(Q[0]) = 1`
    /// holds on the grid itself.
    #[default]
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example2Params {
    pub d0: f64,
    pub d1: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub beta0: f64,
}

impl Default for Example2Params {
    fn default() -> Self {
        Self {
            d0: 0.1,
            d1: 0.1,
            mu0: 0.2,
            mu1: 0.1,
            beta0: 4.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuasilinearModel {
    pub coeffs: CoefficientSet,
    pub age: AgeGrid,
    pub space: SpaceGrid,
    pub kind: ModelKind,
    pub freeze: FreezeMode,
    /// Logistic coefficient for Example I.
    pub alpha: Option<f64>,
}

/// `nu0 = pi^2`, the Dirichlet ground-state eigenvalue on `(0, 1)`.
pub const NU0: f64 = PI * PI;

/// Example I fertility `beta(a) = c e^{-2a}`.
pub fn example1_beta_scale(age: &AgeGrid, space: &SpaceGrid, normalization: Normalization) -> f64 {
    let k = NU0 + 2.0;
    match normalization {
        Normalization::Continuum => k / (1.0 - (-k * age.a_max()).exp()),
        Normalization::Discrete => {
            let dx = space.dx();
            let nu_h = 2.0 / (dx * dx) * (1.0 - (PI * dx).cos());
            let step = 1.0 / (1.0 + age.da() * nu_h);
            let sum: f64 = (0..age.n_age())
                .map(|j| age.weight(j) * (-2.0 * age.node(j)).exp() * step.powi(j as i32))
                .sum();
            1.0 / sum
        }
    }
}

/// Composite Simpson value of `int_0^a_max beta(a) e^{-nu0 a} da`.
pub fn example1_normalization_integral(scale: f64, a_max: f64) -> f64 {
    let n = 20_000;
    let h = a_max / n as f64;
    let f = |a: f64| scale * (-2.0 * a).exp() * (-NU0 * a).exp();
    let mut s = f(0.0) + f(a_max);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

impl QuasilinearModel {
    /// `d_a u - u_xx = -alpha u^2` on `(0, 1)` with Dirichlet conditions.
    pub fn example1(alpha: f64, n_x: usize, age: AgeGrid, normalization: Normalization) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::param("alpha", format!("must be >= 0, got {alpha}")));
        }
        let space = SpaceGrid::unit(n_x, Boundary::Dirichlet)?;
        let c = example1_beta_scale(&age, &space, normalization);
        if normalization == Normalization::Continuum {
            let check = example1_normalization_integral(c, age.a_max());
            if (check - 1.0).abs() > 1e-6 {
                return Err(Error::ContractViolation(format!(
                    "Example I normalization integral is {check}"
                )));
            }
        }
        let coeffs = CoefficientSet::new(
            |_, _, _| 1.0,
            move |u, _, _| alpha * u.max(0.0),
            move |_, a, _| c * (-2.0 * a).exp(),
            1.0,
        );
        Ok(Self {
            coeffs,
            age,
            space,
            kind: ModelKind::ExampleI,
            freeze: FreezeMode::Density,
            alpha: Some(alpha),
        })
    }

    /// `d = d0 + d1 U`, `mu = mu0 + mu1 U`,
    /// `beta = beta0 (1 + cos(pi x) / 2) / (1 + U)` on `(0, 1)`, Neumann.
    pub fn example2(p: Example2Params, n_x: usize, age: AgeGrid) -> Result<Self> {
        if !(p.d0 > 0.0 && p.d1 >= 0.0 && p.mu0 >= 0.0 && p.mu1 >= 0.0 && p.beta0 >= 0.0) {
            return Err(Error::param("example2", "need d0 > 0 and d1, mu0, mu1, beta0 >= 0"));
        }
        let space = SpaceGrid::unit(n_x, Boundary::Neumann)?;
        let coeffs = CoefficientSet::new(
            move |u, _, _| p.d0 + p.d1 * u.max(0.0),
            move |u, _, _| p.mu0 + p.mu1 * u.max(0.0),
            move |u, _, x| p.beta0 * (1.0 + 0.5 * (PI * x).cos()) / (1.0 + u.max(0.0)),
            p.d0,
        );
        Ok(Self {
            coeffs,
            age,
            space,
            kind: ModelKind::ExampleII,
            freeze: FreezeMode::Total,
            alpha: None,
        })
    }

    pub fn custom(coeffs: CoefficientSet, age: AgeGrid, space: SpaceGrid, freeze: FreezeMode) -> Self {
        Self {
            coeffs,
            age,
            space,
            kind: ModelKind::Custom,
            freeze,
            alpha: None,
        }
    }

    pub fn zero_field(&self) -> AgeSpaceField {
        AgeSpaceField::zeros(self.age, self.space)
    }

    /// Unfrozen operator, `U = 0`.
    pub fn linear_operator(&self) -> Result<EvolutionOperator> {
        EvolutionOperator::new(self.coeffs.clone(), self.age, self.space)
    }

    /// `Pi[u]` with the population frozen at `u`.
    pub fn frozen_operator(&self, u: &AgeSpaceField) -> Result<EvolutionOperator> {
        if u.age_grid() != &self.age || u.space_grid() != &self.space {
            return Err(Error::Dimension("field grids differ from the model grids".into()));
        }
        if !u.is_nonnegative() {
            return Err(Error::ContractViolation("frozen field has negative entries".into()));
        }
        let frozen = match self.freeze {
            FreezeMode::Density => Frozen::Density(u.clone()),
            FreezeMode::Total => Frozen::Total(integrate_age(u, None)?),
        };
        EvolutionOperator::with_frozen(self.coeffs.clone(), self.age, self.space, frozen)
    }
}

/// `Q[u]` at `lambda = 0`.
pub fn frozen_q(model: &QuasilinearModel, u: &AgeSpaceField) -> Result<ReproductionOperator> {
    Ok(assemble_q(0.0, &model.frozen_operator(u)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumOptions {
    /// Outer tolerance on `|eta r(Q[u]) - 1|`.
    pub tol: f64,
    /// Inner tolerance on successive fields, relative to their sup norm.
    pub inner_tol: f64,
    pub damping: f64,
    pub perron_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// Geometric factor of the amplitude scan.
    pub scan_factor: f64,
    /// Acceptance threshold for the certificate residuals.
    pub residual_tol: f64,
    /// `eta r(Q[0]) - 1` at or below this counts as subcritical.
    pub critical_band: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            inner_tol: 1e-11,
            damping: 0.5,
            perron_tol: 1e-12,
            max_inner: 5000,
            max_outer: 200,
            s_min: 1e-6,
            s_max: 1e4,
            scan_factor: 2.0,
            residual_tol: 1e-6,
            critical_band: 1e-9,
        }
    }
}

/// `eta0 = 1 / r(Q[0])`.
pub fn bifurcation_point(model: &QuasilinearModel, opts: &EquilibriumOptions) -> Result<f64> {
    let q = frozen_q(model, &model.zero_field())?;
    let r = perron(&q.matrix, opts.perron_tol, 100_000)?.r;
    if r == 0.0 {
        return Err(Error::DegenerateFertility(r));
    }
    Ok(1.0 / r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    pub pde: f64,
    pub birth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub eta: f64,
    pub u: AgeSpaceField,
    /// `sup u(0, .)`.
    pub amplitude: f64,
    pub sup_norm: f64,
    pub residuals: Residuals,
    /// `eta r(Q[u])`.
    pub r_check: f64,
    pub trivial: bool,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

impl BranchPoint {
    pub fn certified(&self, tol: f64) -> bool {
        self.trivial || (self.residuals.pde <= tol && self.residuals.birth <= tol && (self.r_check - 1.0).abs() <= tol)
    }
}

struct Inner {
    u: AgeSpaceField,
    g: f64,
    iterations: usize,
}

/// Iterations per window of the damping control.
const DAMPING_WINDOW: usize = 50;

/// Fixed point of `u -> Pi[u](s zeta[u])`, damped. The damping is halved,
/// down to `damping / 64`, whenever a window of iterations fails to halve
/// the residual; strong crowding feedback makes the plain map oscillate.
fn inner_solve(
    model: &QuasilinearModel,
    eta: f64,
    s: f64,
    start: &AgeSpaceField,
    opts: &EquilibriumOptions,
) -> Result<Inner> {
    let mut u = start.clone();
    let mut last = f64::INFINITY;
    let mut w = opts.damping;
    let mut window_start = f64::INFINITY;
    for it in 1..=opts.max_inner {
        let op = model.frozen_operator(&u)?;
        let pair = perron(&assemble_q(0.0, &op).matrix, opts.perron_tol, 100_000)?;
        let seed: Vec<f64> = pair.zeta.iter().map(|z| s * z).collect();
        let target = stable_field(&op, 0.0, &seed);
        let diff = target.max_abs_diff(&u)?;
        let scale = target.sup_norm().max(f64::MIN_POSITIVE);
        last = diff / scale;
        if last <= opts.inner_tol {
            let final_op = model.frozen_operator(&target)?;
            let r = perron(&assemble_q(0.0, &final_op).matrix, opts.perron_tol, 100_000)?.r;
            return Ok(Inner {
                u: target,
                g: eta * r - 1.0,
                iterations: it,
            });
        }
        if it % DAMPING_WINDOW == 0 {
            if last > 0.5 * window_start && w > opts.damping / 64.0 {
                w *= 0.5;
            }
            window_start = last;
        }
        let mut next = u.scaled(1.0 - w);
        next.axpy(w, &target)?;
        u = next;
    }
    Err(Error::Iteration {
        what: format!("inner fixed point at amplitude {s}"),
        iterations: opts.max_inner,
        residual: last,
    })
}

/// `||u - Pi[u] u(0)|| / ||u||` and
/// `||u(0) - eta int beta(u) u da|| / ||u(0)||`.
pub fn certify(model: &QuasilinearModel, eta: f64, u: &AgeSpaceField) -> Result<(Residuals, f64)> {
    let op = model.frozen_operator(u)?;
    let q = assemble_q(0.0, &op);
    let r = perron(&q.matrix, 1e-12, 100_000)?.r;
    let again = stable_field(&op, 0.0, u.row(0));
    let scale = u.sup_norm();
    if scale == 0.0 {
        return Ok((Residuals { pde: 0.0, birth: 0.0 }, eta * r));
    }
    let pde = again.max_abs_diff(u)? / scale;
    let b = crate::renewal::births(&op, u);
    let u0 = u.row(0);
    let n0 = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let birth = u0
        .iter()
        .zip(b.values())
        .fold(0.0f64, |m, (&x, &y)| m.max((x - eta * y).abs()))
        / n0;
    Ok((Residuals { pde, birth }, eta * r))
}

fn trivial_point(model: &QuasilinearModel, eta: f64, r0: f64) -> BranchPoint {
    BranchPoint {
        eta,
        u: model.zero_field(),
        amplitude: 0.0,
        sup_norm: 0.0,
        residuals: Residuals { pde: 0.0, birth: 0.0 },
        r_check: eta * r0,
        trivial: true,
        inner_iterations: 0,
        outer_iterations: 0,
    }
}

/// Nontrivial equilibrium at `eta`, or the trivial point when
/// `eta r(Q[0]) <= 1` or `s_init = 0`.
pub fn solve_equilibrium(
    model: &QuasilinearModel,
    eta: f64,
    s_init: f64,
    opts: &EquilibriumOptions,
) -> Result<BranchPoint> {
    solve_from(model, eta, s_init, None, opts)
}

/// As [`solve_equilibrium`], warm-started from `start` when given.
pub fn solve_from(
    model: &QuasilinearModel,
    eta: f64,
    s_init: f64,
    start: Option<&AgeSpaceField>,
    opts: &EquilibriumOptions,
) -> Result<BranchPoint> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::param("eta", format!("must be > 0, got {eta}")));
    }
    if !(s_init.is_finite() && s_init >= 0.0) {
        return Err(Error::param("s_init", format!("must be >= 0, got {s_init}")));
    }
    let lin = model.linear_operator()?;
    let q0 = assemble_q(0.0, &lin);
    let p0 = perron(&q0.matrix, opts.perron_tol, 100_000)?;
    if p0.r == 0.0 {
        return Err(Error::DegenerateFertility(0.0));
    }
    if s_init == 0.0 || eta * p0.r - 1.0 <= opts.critical_band {
        return Ok(trivial_point(model, eta, p0.r));
    }

    let mut warm = match start {
        Some(u) => u.clone(),
        None => stable_field(&lin, 0.0, &p0.zeta.iter().map(|z| s_init * z).collect::<Vec<_>>()),
    };
    let mut inner_total = 0;
    let mut evals = 0;
    let mut eval = |s: f64, warm: &mut AgeSpaceField| -> Result<f64> {
        let cur = warm.row(0).iter().fold(0.0f64, |m, v| m.max(*v));
        let start = if cur > 0.0 { warm.scaled(s / cur) } else { warm.clone() };
        let res = inner_solve(model, eta, s, &start, opts)?;
        inner_total += res.iterations;
        evals += 1;
        *warm = res.u;
        Ok(res.g)
    };

    let clamp = |s: f64| s.clamp(opts.s_min, opts.s_max);
    let mut s = clamp(s_init);
    let mut g = eval(s, &mut warm)?;
    let (mut lo, mut hi, mut glo, mut ghi);
    if g > 0.0 {
        lo = s;
        glo = g;
        loop {
            if s >= opts.s_max {
                return Err(Error::NoSolution(format!(
                    "eta r(Q[u_s]) - 1 stays positive up to s = {}",
                    opts.s_max
                )));
            }
            s = clamp(s * opts.scan_factor);
            g = eval(s, &mut warm)?;
            if g <= 0.0 {
                hi = s;
                ghi = g;
                break;
            }
            lo = s;
            glo = g;
        }
    } else {
        hi = s;
        ghi = g;
        loop {
            if s <= opts.s_min {
                return Err(Error::NoSolution(format!(
                    "eta r(Q[u_s]) - 1 stays negative down to s = {}",
                    opts.s_min
                )));
            }
            s = clamp(s / opts.scan_factor);
            g = eval(s, &mut warm)?;
            if g > 0.0 {
                lo = s;
                glo = g;
                break;
            }
            hi = s;
            ghi = g;
        }
    }

    let root = if ghi == 0.0 {
        crate::roots::Root {
            x: hi.ln(),
            fx: 0.0,
            iterations: 0,
        }
    } else {
        illinois(
            |t| eval(t.exp(), &mut warm),
            lo.ln(),
            hi.ln(),
            glo,
            ghi,
            1e-14,
            opts.tol,
            opts.max_outer,
        )?
    };
    let s_star = root.x.exp();
    // The last evaluation need not be the root when the bracket collapsed.
    let cur = warm.row(0).iter().fold(0.0f64, |m, v| m.max(*v));
    if (cur - s_star).abs() > 1e-12 * s_star {
        eval(s_star, &mut warm)?;
    }
    let u = warm;
    let (residuals, r_check) = certify(model, eta, &u)?;
    Ok(BranchPoint {
        eta,
        amplitude: u.row(0).iter().fold(0.0f64, |m, v| m.max(*v)),
        sup_norm: u.sup_norm(),
        u,
        residuals,
        r_check,
        trivial: false,
        inner_iterations: inner_total,
        outer_iterations: evals,
    })
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub eta0: f64,
    /// Why the march stopped early, if it did.
    pub aborted: Option<String>,
}

/// Natural continuation in `eta` over `n_points` equally spaced values.
/// The first solve starts from `t Pi[0] zeta0`; later ones from the previous
/// point. A failed step is retried once through the midpoint.
pub fn continue_branch(
    model: &QuasilinearModel,
    eta_start: f64,
    eta_end: f64,
    n_points: usize,
    opts: &EquilibriumOptions,
) -> Result<Branch> {
    if n_points < 2 {
        return Err(Error::param("n_steps", "need at least 2 points"));
    }
    let eta0 = bifurcation_point(model, opts)?;
    if eta_start < eta0 - opts.critical_band {
        return Err(Error::param(
            "eta_start",
            format!("{eta_start} is below the bifurcation value {eta0}"),
        ));
    }
    let lin = model.linear_operator()?;
    let zeta0 = perron(&assemble_q(0.0, &lin).matrix, opts.perron_tol, 100_000)?.zeta;
    let t = 0.1;
    let mut prev = stable_field(&lin, 0.0, &zeta0.iter().map(|z| t * z).collect::<Vec<_>>());
    let mut prev_eta = eta_start;
    let mut points: Vec<BranchPoint> = Vec::with_capacity(n_points);
    let etas: Vec<f64> = (0..n_points)
        .map(|i| eta_start + i as f64 * (eta_end - eta_start) / (n_points - 1) as f64)
        .collect();
    let mut aborted = None;
    for &eta in &etas {
        let s_guess = prev.row(0).iter().fold(0.0f64, |m, v| m.max(*v)).max(opts.s_min);
        let attempt = solve_from(model, eta, s_guess, Some(&prev), opts).and_then(|p| accept(p, opts));
        let point = match attempt {
            Ok(p) => Ok(p),
            Err(_) if !points.is_empty() => {
                let mid = 0.5 * (prev_eta + eta);
                solve_from(model, mid, s_guess, Some(&prev), opts)
                    .and_then(|p| accept(p, opts))
                    .and_then(|m| solve_from(model, eta, m.amplitude, Some(&m.u), opts).and_then(|p| accept(p, opts)))
            }
            Err(e) => Err(e),
        };
        match point {
            Ok(p) => {
                if !p.trivial {
                    prev = p.u.clone();
                }
                prev_eta = eta;
                points.push(p);
            }
            Err(e) => {
                aborted = Some(format!("step to eta = {eta} failed: {e}"));
                break;
            }
        }
    }
    Ok(Branch { points, eta0, aborted })
}

fn accept(p: BranchPoint, opts: &EquilibriumOptions) -> Result<BranchPoint> {
    if p.certified(opts.residual_tol) {
        Ok(p)
    } else {
        Err(Error::ContractViolation(format!(
            "point at eta = {} failed its certificate: pde {:e}, birth {:e}, r_check {}",
            p.eta, p.residuals.pde, p.residuals.birth, p.r_check
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub trivial: bool,
    /// `min (u - lower)` over all nodes.
    pub lower_margin: f64,
    /// The same margin divided by `sup u`.
    pub lower_margin_relative: f64,
    /// `max u a alpha` over nodes with `alpha a >= 0.1`; at most 1 when the
    /// upper bound holds.
    pub upper_ratio: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub passed: bool,
}

/// Explicit lower bound
/// `(nu0/alpha) (eta-1) / (eta (e^{nu0 a} - 1) + 1 - e^{-nu0 (a_max - a)}) sin(pi x)`
/// and the consequence `u <= 1 / (alpha a)` of the upper bound.
pub fn example1_lower_bound(alpha: f64, eta: f64, a_max: f64, a: f64, x: f64) -> f64 {
    let den = eta * ((NU0 * a).exp() - 1.0) + 1.0 - (-NU0 * (a_max - a)).exp();
    NU0 / alpha * (eta - 1.0) / den * (PI * x).sin()
}

pub fn verify_example1_bounds(model: &QuasilinearModel, point: &BranchPoint) -> Result<BoundsReport> {
    if model.kind != ModelKind::ExampleI {
        return Err(Error::param("model", "bounds apply to Example I only"));
    }
    let alpha = model.alpha.unwrap_or(0.0);
    if point.trivial || alpha == 0.0 {
        return Ok(BoundsReport {
            trivial: true,
            lower_margin: 0.0,
            lower_margin_relative: 0.0,
            upper_ratio: 0.0,
            lower_ok: true,
            upper_ok: true,
            passed: true,
        });
    }
    let u = &point.u;
    let ages = model.age.nodes();
    let xs = model.space.nodes();
    let mut margin = f64::INFINITY;
    let mut upper_ratio = 0.0f64;
    for (k, &a) in ages.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            let v = u.get(k, i);
            margin = margin.min(v - example1_lower_bound(alpha, point.eta, model.age.a_max(), a, x));
            if alpha * a >= 0.1 {
                upper_ratio = upper_ratio.max(v * alpha * a);
            }
        }
    }
    let lower_ok = margin >= 0.0;
    let upper_ok = upper_ratio <= 1.0;
    Ok(BoundsReport {
        trivial: false,
        lower_margin: margin,
        lower_margin_relative: margin / u.sup_norm(),
        upper_ratio,
        lower_ok,
        upper_ok,
        passed: lower_ok && upper_ok,
    })
}
