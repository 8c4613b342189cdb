//! Reproduction operator `Q_lambda = int beta(a) e^{-lambda a} Pi(a, 0) da`,
//! its Perron eigenpair, the Malthusian parameter and the rank-one
//! projection onto the dominant direction.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::EvolutionOperator;
use crate::grid::AgeSpaceField;
use crate::renewal::simulate;
use crate::roots::{bracket_decreasing, illinois};

/// Dense nonnegative `Q_lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReproductionOperator {
    pub lambda: f64,
    pub matrix: DMatrix<f64>,
}

impl ReproductionOperator {
    pub fn is_nonnegative(&self) -> bool {
        self.matrix.iter().all(|&v| v >= 0.0)
    }

    /// Strong connectivity of the positive pattern.
    pub fn is_irreducible(&self) -> bool {
        let n = self.matrix.nrows();
        let reach = |transpose: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    let v = if transpose {
                        self.matrix[(j, i)]
                    } else {
                        self.matrix[(i, j)]
                    };
                    if v > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        n > 0 && reach(false) && reach(true)
    }
}

/// Trapezoid over age nodes of `w_k e^{-lambda a_k} diag(beta_k) Pi(a_k, 0)`.
/// Columns are assembled in parallel.
pub fn assemble_q(lambda: f64, op: &EvolutionOperator) -> ReproductionOperator {
    let age = *op.age_grid();
    let n = op.n_x();
    let scale: Vec<f64> = (0..age.n_age())
        .map(|k| age.weight(k) * (-lambda * age.node(k)).exp())
        .collect();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut v = vec![0.0; n];
            v[j] = 1.0;
            let mut col = vec![0.0; n];
            for k in 0..age.n_age() {
                if k > 0 {
                    op.step(k, &mut v);
                }
                let s = scale[k];
                for ((c, &b), &x) in col.iter_mut().zip(op.beta(k)).zip(&v) {
                    *c += s * b * x;
                }
            }
            col
        })
        .collect();
    ReproductionOperator {
        lambda,
        matrix: DMatrix::from_fn(n, n, |i, j| cols[j][i]),
    }
}

/// Dominant eigenpair of a nonnegative matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerronPair {
    pub r: f64,
    /// Right eigenvector, sup norm 1.
    pub zeta: Vec<f64>,
    /// Left eigenvector with `<zeta_dual, zeta> = 1`.
    pub zeta_dual: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub dual_residual: f64,
}

fn power(
    m: &DMatrix<f64>,
    start: &[f64],
    tol: f64,
    max_iter: usize,
    what: &str,
) -> Result<(f64, Vec<f64>, usize, f64)> {
    let n = m.nrows();
    let mut v = nalgebra::DVector::from_column_slice(start);
    let s = v.amax();
    if s == 0.0 {
        return Err(Error::param("start", "power iteration needs a nonzero start"));
    }
    v /= s;
    let mut w = m * &v;
    for it in 1..=max_iter {
        let r = w.amax();
        if r == 0.0 {
            return Ok((0.0, v.as_slice().to_vec(), it, 0.0));
        }
        let next = &w / r;
        let mut res = 0.0f64;
        let w2 = m * &next;
        for i in 0..n {
            res = res.max((w2[i] - r * next[i]).abs());
        }
        v = next;
        w = w2;
        if res <= tol * r {
            // Rayleigh step on the converged vector keeps r consistent with v.
            let r_final = w.amax() / v.amax();
            return Ok((r_final, v.as_slice().to_vec(), it, res / r));
        }
        if it == max_iter {
            return Err(Error::Iteration {
                what: what.into(),
                iterations: max_iter,
                residual: res / r,
            });
        }
    }
    unreachable!()
}

/// Power iteration on `Q` and `Q^T` from the all-ones vector. Stops when
/// `||Q zeta - r zeta||_inf <= tol * r`.
pub fn perron(q: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<PerronPair> {
    let n = q.nrows();
    if n == 0 || q.ncols() != n {
        return Err(Error::Dimension(format!("Q is {}x{}", q.nrows(), q.ncols())));
    }
    if q.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::ContractViolation("Q has a negative or non-finite entry".into()));
    }
    perron_from(q, &vec![1.0; n], tol, max_iter)
}

/// As [`perron`] with an explicit positive start for the right vector.
pub fn perron_from(q: &DMatrix<f64>, start: &[f64], tol: f64, max_iter: usize) -> Result<PerronPair> {
    let n = q.nrows();
    let (r, zeta, iterations, residual) = power(q, start, tol, max_iter, "Perron power iteration")?;
    if r == 0.0 {
        return Ok(PerronPair {
            r,
            zeta: vec![1.0; n],
            zeta_dual: vec![1.0 / n as f64; n],
            iterations,
            residual: 0.0,
            dual_residual: 0.0,
        });
    }
    let qt = q.transpose();
    let (_, mut dual, _, dual_residual) = power(&qt, &vec![1.0; n], tol, max_iter, "dual Perron power iteration")?;
    let pairing: f64 = dual.iter().zip(&zeta).map(|(a, b)| a * b).sum();
    if pairing <= 0.0 {
        return Err(Error::DegenerateProjection(pairing));
    }
    dual.iter_mut().for_each(|v| *v /= pairing);
    Ok(PerronPair {
        r,
        zeta,
        zeta_dual: dual,
        iterations,
        residual,
        dual_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Stable,
    Critical,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    /// Stop when `|r(Q_lambda) - 1| <= root_tol`.
    pub root_tol: f64,
    /// Or when the bracket is narrower than this.
    pub lambda_tol: f64,
    pub perron_tol: f64,
    pub max_iter: usize,
    /// Largest `|lambda|` tried while bracketing.
    pub lambda_limit: f64,
    /// `|r(Q_0) - 1|` at or below this is critical.
    pub critical_band: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            root_tol: 1e-10,
            lambda_tol: 1e-8,
            perron_tol: 1e-12,
            max_iter: 20_000,
            lambda_limit: 256.0,
            critical_band: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralResult {
    pub lambda0: f64,
    pub r_at_zero: f64,
    pub r_at_lambda0: f64,
    pub classification: Classification,
    pub zeta: Vec<f64>,
    pub zeta_dual: Vec<f64>,
    pub root_iterations: usize,
    pub perron_iterations: usize,
    pub perron_residual: f64,
    pub dual_residual: f64,
}

/// Dominant eigenvalue of `Q_lambda`.
pub fn spectral_radius(lambda: f64, op: &EvolutionOperator, opts: &SpectralOptions) -> Result<f64> {
    Ok(perron(&assemble_q(lambda, op).matrix, opts.perron_tol, opts.max_iter)?.r)
}

pub fn classify(r_at_zero: f64, band: f64) -> Classification {
    if (r_at_zero - 1.0).abs() <= band {
        Classification::Critical
    } else if r_at_zero < 1.0 {
        Classification::Stable
    } else {
        Classification::Unstable
    }
}

/// Root `lambda0` of `r(Q_lambda) = 1`: outward doubling from 0, then
/// Illinois regula falsi on the bracket.
pub fn malthusian(op: &EvolutionOperator, opts: &SpectralOptions) -> Result<SpectralResult> {
    let r0 = spectral_radius(0.0, op, opts)?;
    if r0 == 0.0 {
        return Err(Error::DegenerateFertility(0.0));
    }
    let g = |l: f64| -> Result<f64> {
        if l == 0.0 {
            return Ok(r0 - 1.0);
        }
        Ok(spectral_radius(l, op, opts)? - 1.0)
    };
    let (lo, hi, flo, fhi) = bracket_decreasing(g, opts.lambda_limit)?;
    let root = if lo == hi {
        crate::roots::Root {
            x: lo,
            fx: 0.0,
            iterations: 0,
        }
    } else {
        illinois(g, lo, hi, flo, fhi, opts.lambda_tol, opts.root_tol, 500)?
    };
    let q = assemble_q(root.x, op);
    let pair = perron(&q.matrix, opts.perron_tol, opts.max_iter)?;
    Ok(SpectralResult {
        lambda0: root.x,
        r_at_zero: r0,
        r_at_lambda0: pair.r,
        classification: classify(r0, opts.critical_band),
        zeta: pair.zeta,
        zeta_dual: pair.zeta_dual,
        root_iterations: root.iterations,
        perron_iterations: pair.iterations,
        perron_residual: pair.residual,
        dual_residual: pair.dual_residual,
    })
}

/// `Pi_lambda(a_k, 0) zeta` at every age node.
pub fn stable_field(op: &EvolutionOperator, lambda: f64, zeta: &[f64]) -> AgeSpaceField {
    let age = *op.age_grid();
    let mut out = AgeSpaceField::zeros(age, *op.space_grid());
    let mut v = zeta.to_vec();
    let decay = (-lambda * age.da()).exp();
    out.row_mut(0).copy_from_slice(&v);
    for k in 1..age.n_age() {
        op.step(k, &mut v);
        v.iter_mut().for_each(|x| *x *= decay);
        out.row_mut(k).copy_from_slice(&v);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coefficient: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub field: AgeSpaceField,
}

/// `P phi = c(phi) Pi_lambda0(., 0) zeta` with
/// `c = <zeta', H phi> / <zeta', int a beta(a) Pi_lambda0(a, 0) da zeta>` and
/// `H phi = int beta(s) int_0^s Pi_lambda0(s, sigma) phi(sigma) dsigma ds`.
///
/// The outer integral is the trapezoid rule; the inner one takes the
/// left-endpoint rule on each age cell. With that pairing `c` is the exact
/// dominant left eigenfunctional of the stepping scheme in [`crate::renewal`],
/// so `P` commutes with it instead of only approximating its limit.
pub fn projection(result: &SpectralResult, op: &EvolutionOperator, phi: &AgeSpaceField) -> Result<Projection> {
    if phi.age_grid() != op.age_grid() || phi.space_grid() != op.space_grid() {
        return Err(Error::Dimension("field grids differ from the operator grids".into()));
    }
    let age = *op.age_grid();
    let n_x = op.n_x();
    let lambda = result.lambda0;
    let da = age.da();
    let decay = (-lambda * da).exp();
    let dual = &result.zeta_dual;

    let mut y = vec![0.0; n_x];
    let mut h = vec![0.0; n_x];
    for j in 1..age.n_age() {
        for (yi, &p) in y.iter_mut().zip(phi.row(j - 1)) {
            *yi += da * p;
        }
        op.step(j, &mut y);
        y.iter_mut().for_each(|v| *v *= decay);
        let w = age.weight(j);
        for ((hi, &b), &v) in h.iter_mut().zip(op.beta(j)).zip(&y) {
            *hi += w * b * v;
        }
    }
    let numerator: f64 = dual.iter().zip(&h).map(|(a, b)| a * b).sum();

    let stable = stable_field(op, lambda, &result.zeta);
    let mut g = vec![0.0; n_x];
    for k in 1..age.n_age() {
        let w = age.weight(k) * da * k as f64;
        for ((gi, &b), &v) in g.iter_mut().zip(op.beta(k)).zip(stable.row(k)) {
            *gi += w * b * v;
        }
    }
    let denominator: f64 = dual.iter().zip(&g).map(|(a, b)| a * b).sum();
    if denominator.abs() < 1e-14 {
        return Err(Error::DegenerateProjection(denominator));
    }
    let coefficient = numerator / denominator;
    Ok(Projection {
        coefficient,
        numerator,
        denominator,
        field: stable.scaled(coefficient),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AegReport {
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    /// Decay rate fitted to `log e(t)` over the second half of the samples.
    pub delta_fit: f64,
    /// Maxima over consecutive quarters of the tail strictly decrease.
    pub eventually_decreasing: bool,
    /// `e(T) / e(T/2)`.
    pub half_ratio: f64,
    pub passed: bool,
    pub message: String,
}

/// Samples `e(t) = ||e^{-lambda0 t} S(t) phi - P phi||_inf` on `[0, T]`.
pub fn verify_aeg(
    result: &SpectralResult,
    op: &EvolutionOperator,
    phi: &AgeSpaceField,
    t_end: f64,
) -> Result<AegReport> {
    let steps = op.age_grid().steps_in(t_end)?;
    if steps < 40 {
        return Err(Error::param("T", format!("{steps} steps give fewer than 20 samples")));
    }
    let cadence = (1..=steps / 40)
        .rev()
        .find(|c| steps % c == 0 && (steps / c) % 2 == 0)
        .unwrap_or(1);
    let target = projection(result, op, phi)?.field;
    let traj = simulate(op, phi, t_end, cadence)?;
    let errors: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.fields)
        .map(|(&t, f)| {
            let s = (-result.lambda0 * t).exp();
            f.values()
                .iter()
                .zip(target.values())
                .fold(0.0f64, |m, (&u, &p)| m.max((s * u - p).abs()))
        })
        .collect();
    let times = traj.times;
    let m = times.len();
    let tail = m / 2;
    let floor = 1e-300;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (tail..m).map(|i| (times[i], errors[i].max(floor).ln())).unzip();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let delta_fit = -sxy / sxx;

    let q = (m - tail) / 4;
    let maxima: Vec<f64> = (0..4)
        .map(|i| {
            errors[tail + i * q..tail + (i + 1) * q]
                .iter()
                .fold(0.0f64, |a, &b| a.max(b))
        })
        .collect();
    let eventually_decreasing = q > 0 && maxima.windows(2).all(|w| w[1] < w[0]);
    let half_ratio = errors[m - 1] / errors[tail];
    let passed = delta_fit > 0.0 && eventually_decreasing;
    let message = if passed {
        String::new()
    } else {
        format!("error curve not decreasing over the tail (delta_fit = {delta_fit:e})")
    };
    Ok(AegReport {
        times,
        errors,
        delta_fit,
        eventually_decreasing,
        half_ratio,
        passed,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::CoefficientSet;
    use crate::grid::{AgeGrid, Boundary, SpaceGrid};
    use crate::scalar::{malthusian_scalar, net_reproduction, ScalarRates};

    fn op_with(c: CoefficientSet, n_x: usize, bc: Boundary, a_max: f64, n_age: usize) -> EvolutionOperator {
        EvolutionOperator::new(
            c,
            AgeGrid::new(a_max, n_age).unwrap(),
            SpaceGrid::unit(n_x, bc).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn perron_small_matrices() {
        let id = DMatrix::<f64>::identity(4, 4);
        let p = perron(&id, 1e-12, 100).unwrap();
        assert_eq!(p.r, 1.0);
        assert_eq!(p.residual, 0.0);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = perron(&swap, 1e-12, 100).unwrap();
        assert_eq!(p.r, 1.0);
        assert_eq!(p.zeta, vec![1.0, 1.0]);
        assert!((p.zeta_dual.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let zero = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(perron(&zero, 1e-12, 100).unwrap().r, 0.0);
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(perron(&neg, 1e-12, 100).is_err());
    }

    #[test]
    fn perron_matches_dense_eigensolver() {
        let m = DMatrix::from_fn(6, 6, |i, j| 1.0 / (1.0 + (i as f64 - 2.0 * j as f64).abs()));
        let p = perron(&m, 1e-13, 1000).unwrap();
        let eig = m.clone().complex_eigenvalues();
        let r = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((p.r - r).abs() < 1e-10 * r);
        let lhs: f64 = p.zeta_dual.iter().zip(&p.zeta).map(|(a, b)| a * b).sum();
        assert!((lhs - 1.0).abs() < 1e-13);
    }

    #[test]
    fn perron_reports_non_convergence() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1e-3, 1e-3, 1.0 - 1e-9]);
        assert!(matches!(
            perron_from(&m, &[1.0, 0.1], 1e-14, 3),
            Err(Error::Iteration { .. })
        ));
    }

    #[test]
    fn no_fertility_gives_zero_q() {
        let op = op_with(CoefficientSet::constant(1.0, 0.5, 0.0), 8, Boundary::Neumann, 1.0, 11);
        assert_eq!(assemble_q(0.0, &op).matrix, DMatrix::zeros(8, 8));
        assert!(matches!(
            malthusian(&op, &SpectralOptions::default()),
            Err(Error::DegenerateFertility(_))
        ));
    }

    #[test]
    fn homogeneous_q_matches_scalar() {
        let beta = |a: f64| 2.0 * a;
        let mu = 0.4;
        let c = CoefficientSet::linear(|_, x| 0.5 + x, move |_, _| mu, move |a, _| beta(a), 0.5);
        let op = op_with(c, 10, Boundary::Neumann, 1.5, 301);
        let scalar = ScalarRates::new(beta, move |_| mu);
        for lambda in [-1.0, 0.0, 0.7] {
            let q = assemble_q(lambda, &op).matrix;
            let r = net_reproduction(&scalar, op.age_grid(), lambda).unwrap();
            for i in 0..10 {
                let row: f64 = q.row(i).sum();
                // Backward Euler survival vs exact exponential: O(da).
                assert!((row - r).abs() < 2e-3 * r, "lambda {lambda}: {row} vs {r}");
            }
        }
    }

    #[test]
    fn q_is_monotone_in_lambda() {
        let c = CoefficientSet::linear(|_, x| 1.0 + x, |a, _| a, |a, x| a * (1.0 + x), 1.0);
        let op = op_with(c, 12, Boundary::Dirichlet, 2.0, 41);
        let q1 = assemble_q(0.5, &op).matrix;
        let q2 = assemble_q(0.9, &op).matrix;
        assert!((q1 - q2).iter().all(|&v| v >= 0.0));
        assert!(assemble_q(0.0, &op).is_irreducible());
    }

    #[test]
    fn unit_fertility_is_critical() {
        let c = CoefficientSet::linear(|_, x| 1.0 + x, |_, _| 0.0, |_, _| 1.0, 1.0);
        let op = op_with(c, 10, Boundary::Neumann, 1.0, 101);
        let res = malthusian(&op, &SpectralOptions::default()).unwrap();
        assert!((res.r_at_zero - 1.0).abs() < 1e-12);
        assert!(res.lambda0.abs() < 1e-8);
        assert_eq!(res.classification, Classification::Critical);
    }

    #[test]
    fn constant_rates_growth_rate() {
        let op = op_with(CoefficientSet::constant(0.2, 1.0, 3.0), 5, Boundary::Neumann, 2.0, 2001);
        let res = malthusian(&op, &SpectralOptions::default()).unwrap();
        let closed = |l: f64| 3.0 * (1.0 - (-2.0 * (l + 1.0)).exp()) / (l + 1.0) - 1.0;
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if closed(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((res.lambda0 - lo).abs() < 1e-3, "{} vs {lo}", res.lambda0);
        assert_eq!(res.classification, Classification::Unstable);
        let scalar = malthusian_scalar(&ScalarRates::constant(3.0, 1.0), op.age_grid(), 1e-12).unwrap();
        assert!((res.lambda0 - scalar).abs() < 2e-3);
    }

    #[test]
    fn projection_identities() {
        let c = CoefficientSet::linear(
            |_, x| 0.1 + 0.1 * x,
            |a, x| 0.2 * a * x,
            |a, x| 3.0 * a * (1.0 + 0.5 * x),
            0.1,
        );
        let op = op_with(c, 15, Boundary::Neumann, 1.0, 101);
        let res = malthusian(&op, &SpectralOptions::default()).unwrap();
        let stable = stable_field(&op, res.lambda0, &res.zeta);
        let p = projection(&res, &op, &stable).unwrap();
        assert!((p.coefficient - 1.0).abs() < 1e-12);
        assert!(p.field.max_abs_diff(&stable).unwrap() < 1e-12 * stable.sup_norm());
        let zero = AgeSpaceField::zeros(*op.age_grid(), *op.space_grid());
        assert_eq!(projection(&res, &op, &zero).unwrap().coefficient, 0.0);

        let phi = AgeSpaceField::from_fn(*op.age_grid(), *op.space_grid(), |a, x| (1.0 - a) * (1.0 + x));
        let once = projection(&res, &op, &phi).unwrap().field;
        let twice = projection(&res, &op, &once).unwrap().field;
        assert!(twice.max_abs_diff(&once).unwrap() <= 1e-10 * phi.sup_norm());
    }

    #[test]
    fn projection_is_invariant_under_time_steps() {
        let c = CoefficientSet::linear(|_, _| 0.3, |a, _| 0.5 * a, |a, x| 4.0 * a * (1.0 + x), 0.3);
        let op = op_with(c, 9, Boundary::Dirichlet, 1.0, 51);
        let res = malthusian(&op, &SpectralOptions::default()).unwrap();
        let phi = AgeSpaceField::from_fn(*op.age_grid(), *op.space_grid(), |a, x| (5.0 * a).cos().abs() + x);
        let traj = simulate(&op, &phi, 0.4, 20).unwrap();
        let c0 = projection(&res, &op, &phi).unwrap().coefficient;
        let c1 = projection(&res, &op, traj.fields.last().unwrap()).unwrap().coefficient;
        let expected = c0 * (res.lambda0 * 0.4).exp();
        assert!((c1 - expected).abs() < 1e-11 * expected.abs());
    }

    #[test]
    fn aeg_on_invariant_direction() {
        let c = CoefficientSet::linear(|_, _| 0.5, |_, _| 0.2, |a, x| 3.0 * a * (1.0 + x), 0.5);
        let op = op_with(c, 8, Boundary::Neumann, 1.0, 51);
        let res = malthusian(&op, &SpectralOptions::default()).unwrap();
        let stable = stable_field(&op, res.lambda0, &res.zeta);
        let rep = verify_aeg(&res, &op, &stable, 4.0).unwrap();
        assert!(rep.errors.len() >= 21);
        assert!(rep.errors.iter().all(|&e| e <= 1e-8 * stable.sup_norm()));
    }
}
