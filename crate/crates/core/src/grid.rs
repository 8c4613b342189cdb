//! Uniform age and space lattices, grid functions on them, and the
//! quadrature rules shared by every solver.
//!
//! Age integrals always use the composite trapezoid rule on the age nodes.
//! Space integrals use `dx` per interior node for Dirichlet grids (the
//! boundary values are zero) and the trapezoid rule for Neumann grids, whose
//! nodes include both endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform age lattice `0 = a_0 < ... < a_{n-1} = a_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgeGrid {
    a_max: f64,
    n_age: usize,
    da: f64,
}

impl AgeGrid {
    pub fn new(a_max: f64, n_age: usize) -> Result<Self> {
        if !(a_max.is_finite() && a_max > 0.0) {
            return Err(Error::param("a_max", format!("must be finite and > 0, got {a_max}")));
        }
        if n_age < 3 {
            return Err(Error::param("n_age", format!("must be >= 3, got {n_age}")));
        }
        Ok(Self {
            a_max,
            n_age,
            da: a_max / (n_age - 1) as f64,
        })
    }

    /// Grid with spacing `da`; `a_max` must be an integer multiple of it.
    pub fn with_spacing(a_max: f64, da: f64) -> Result<Self> {
        if !(da.is_finite() && da > 0.0) {
            return Err(Error::param("da", format!("must be > 0, got {da}")));
        }
        let steps = (a_max / da).round();
        if (steps * da - a_max).abs() > 1e-9 * a_max {
            return Err(Error::GridAlignment(format!(
                "a_max = {a_max} is not a multiple of da = {da}"
            )));
        }
        Self::new(a_max, steps as usize + 1)
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn n_age(&self) -> usize {
        self.n_age
    }

    pub fn da(&self) -> f64 {
        self.da
    }

    /// Number of age intervals, `n_age - 1`.
    pub fn steps(&self) -> usize {
        self.n_age - 1
    }

    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k < self.n_age);
        if k == self.n_age - 1 {
            self.a_max
        } else {
            k as f64 * self.da
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_age).map(|k| self.node(k)).collect()
    }

    /// Composite trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![self.da; self.n_age];
        w[0] = 0.5 * self.da;
        w[self.n_age - 1] = 0.5 * self.da;
        w
    }

    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n_age - 1 {
            0.5 * self.da
        } else {
            self.da
        }
    }

    /// Index of the node equal to `age`, or a grid-alignment error.
    pub fn index_of(&self, age: f64) -> Result<usize> {
        let k = (age / self.da).round();
        if !k.is_finite() || k < 0.0 || (k * self.da - age).abs() > 1e-9 * self.da.max(age.abs()) {
            return Err(Error::GridAlignment(format!(
                "age {age} is not a node of the grid with da = {}",
                self.da
            )));
        }
        let k = k as usize;
        if k >= self.n_age {
            return Err(Error::GridAlignment(format!(
                "age {age} lies beyond a_max = {}",
                self.a_max
            )));
        }
        Ok(k)
    }

    /// Number of `da` steps in a time span `t`; errors unless aligned.
    pub fn steps_in(&self, t: f64) -> Result<usize> {
        let n = (t / self.da).round();
        if !n.is_finite() || n < 0.0 || (n * self.da - t).abs() > 1e-9 * self.da.max(t.abs()) {
            return Err(Error::GridAlignment(format!(
                "time {t} is not a multiple of the age step {}",
                self.da
            )));
        }
        Ok(n as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// Uniform 1-D spatial lattice on `[x_lo, x_hi]`.
///
/// Dirichlet grids store the `n_x` interior nodes; Neumann grids include both
/// endpoints. A Neumann grid with a single node is accepted as a well-mixed
/// patch whose node carries the whole domain length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceGrid {
    x_lo: f64,
    x_hi: f64,
    n_x: usize,
    dx: f64,
    bc: Boundary,
}

impl SpaceGrid {
    pub fn new(x_lo: f64, x_hi: f64, n_x: usize, bc: Boundary) -> Result<Self> {
        if !(x_lo.is_finite() && x_hi.is_finite() && x_lo < x_hi) {
            return Err(Error::param(
                "x_lo/x_hi",
                format!("need x_lo < x_hi, got [{x_lo}, {x_hi}]"),
            ));
        }
        let single_patch = bc == Boundary::Neumann && n_x == 1;
        if n_x < 3 && !single_patch {
            return Err(Error::param("n_x", format!("must be >= 3, got {n_x}")));
        }
        let len = x_hi - x_lo;
        let dx = match bc {
            Boundary::Dirichlet => len / (n_x + 1) as f64,
            Boundary::Neumann if single_patch => len,
            Boundary::Neumann => len / (n_x - 1) as f64,
        };
        Ok(Self {
            x_lo,
            x_hi,
            n_x,
            dx,
            bc,
        })
    }

    pub fn unit(n_x: usize, bc: Boundary) -> Result<Self> {
        Self::new(0.0, 1.0, n_x, bc)
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn bc(&self) -> Boundary {
        self.bc
    }

    pub fn length(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn node(&self, i: usize) -> f64 {
        match self.bc {
            Boundary::Dirichlet => self.x_lo + (i + 1) as f64 * self.dx,
            Boundary::Neumann if self.n_x == 1 => 0.5 * (self.x_lo + self.x_hi),
            Boundary::Neumann if i == self.n_x - 1 => self.x_hi,
            Boundary::Neumann => self.x_lo + i as f64 * self.dx,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.node(i)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        match self.bc {
            Boundary::Dirichlet => vec![self.dx; self.n_x],
            Boundary::Neumann if self.n_x == 1 => vec![self.length()],
            Boundary::Neumann => {
                let mut w = vec![self.dx; self.n_x];
                w[0] *= 0.5;
                w[self.n_x - 1] *= 0.5;
                w
            }
        }
    }

    /// Spatial integral of a profile.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights().iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// A function of space on a [`SpaceGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialProfile(Vec<f64>);

impl SpatialProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("profile", format!("non-finite entry {v}")));
        }
        Ok(Self(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn from_fn(grid: &SpaceGrid, f: impl Fn(f64) -> f64) -> Self {
        Self(grid.nodes().into_iter().map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| c * v).collect())
    }
}

impl std::ops::Index<usize> for SpatialProfile {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Density `u(a, x)` on the tensor grid, stored age-major: row `k` is the
/// spatial profile at age node `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeSpaceField {
    age: AgeGrid,
    space: SpaceGrid,
    values: Vec<f64>,
}

impl AgeSpaceField {
    pub fn zeros(age: AgeGrid, space: SpaceGrid) -> Self {
        Self {
            age,
            space,
            values: vec![0.0; age.n_age() * space.n_x()],
        }
    }

    pub fn from_fn(age: AgeGrid, space: SpaceGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let xs = space.nodes();
        let mut values = Vec::with_capacity(age.n_age() * space.n_x());
        for k in 0..age.n_age() {
            let a = age.node(k);
            values.extend(xs.iter().map(|&x| f(a, x)));
        }
        Self { age, space, values }
    }

    /// Builds a field from age-major values; errors on shape mismatch or
    /// non-finite entries.
    pub fn from_values(age: AgeGrid, space: SpaceGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != age.n_age() * space.n_x() {
            return Err(Error::Dimension(format!(
                "field has {} values, grids need {} x {}",
                values.len(),
                age.n_age(),
                space.n_x()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("field", format!("non-finite entry {v}")));
        }
        Ok(Self { age, space, values })
    }

    pub fn from_rows(age: AgeGrid, space: SpaceGrid, rows: &[SpatialProfile]) -> Result<Self> {
        if rows.len() != age.n_age() || rows.iter().any(|r| r.len() != space.n_x()) {
            return Err(Error::Dimension("rows do not match the grids".into()));
        }
        let values = rows.iter().flat_map(|r| r.values().iter().copied()).collect();
        Ok(Self { age, space, values })
    }

    pub fn age_grid(&self) -> &AgeGrid {
        &self.age
    }

    pub fn space_grid(&self) -> &SpaceGrid {
        &self.space
    }

    pub fn n_age(&self) -> usize {
        self.age.n_age()
    }

    pub fn n_x(&self) -> usize {
        self.space.n_x()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.space.n_x();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.space.n_x();
        &mut self.values[k * n..(k + 1) * n]
    }

    pub fn profile(&self, k: usize) -> SpatialProfile {
        SpatialProfile(self.row(k).to_vec())
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.space.n_x() + i]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Nonnegative up to the round-off allowance `1e-12 * max(1, max entry)`.
    pub fn is_nonnegative(&self) -> bool {
        self.min() >= -1e-12 * self.max().max(1.0)
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &AgeSpaceField) -> Result<()> {
        self.check_same_shape(other)?;
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += c * o;
        }
        Ok(())
    }

    /// Max-abs difference to another field on the same grids.
    pub fn max_abs_diff(&self, other: &AgeSpaceField) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub(crate) fn check_same_shape(&self, other: &AgeSpaceField) -> Result<()> {
        if self.n_age() != other.n_age() || self.n_x() != other.n_x() {
            return Err(Error::Dimension(format!(
                "fields of shape {}x{} and {}x{}",
                self.n_age(),
                self.n_x(),
                other.n_age(),
                other.n_x()
            )));
        }
        Ok(())
    }
}

/// Exponent of a quadrature-weighted grid norm; `p = f64::INFINITY` is the
/// max norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    pub p: f64,
}

impl NormSpec {
    pub const L1: NormSpec = NormSpec { p: 1.0 };
    pub const L2: NormSpec = NormSpec { p: 2.0 };
    pub const SUP: NormSpec = NormSpec { p: f64::INFINITY };

    pub fn new(p: f64) -> Result<Self> {
        let spec = NormSpec { p };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.p.is_nan() || self.p < 1.0 {
            return Err(Error::param("p", format!("norm exponent must be >= 1, got {}", self.p)));
        }
        Ok(())
    }
}

/// Trapezoidal age integral of `kernel(a) * u(a, .)`.
pub fn integrate_age(field: &AgeSpaceField, kernel: Option<&[f64]>) -> Result<SpatialProfile> {
    let age = field.age_grid();
    if let Some(k) = kernel {
        if k.len() != age.n_age() {
            return Err(Error::Dimension(format!(
                "kernel has {} entries, age grid has {}",
                k.len(),
                age.n_age()
            )));
        }
    }
    let mut out = vec![0.0; field.n_x()];
    for k in 0..age.n_age() {
        let w = age.weight(k) * kernel.map_or(1.0, |kern| kern[k]);
        for (o, u) in out.iter_mut().zip(field.row(k)) {
            *o += w * u;
        }
    }
    Ok(SpatialProfile(out))
}

/// Quadrature-weighted `L_p` norm over age and space.
pub fn field_norm(field: &AgeSpaceField, spec: NormSpec) -> Result<f64> {
    spec.validate()?;
    if spec.p.is_infinite() {
        return Ok(field.sup_norm());
    }
    let wa = field.age_grid().weights();
    let wx = field.space_grid().weights();
    let mut acc = 0.0;
    for (k, wk) in wa.iter().enumerate() {
        for (u, wi) in field.row(k).iter().zip(&wx) {
            acc += wk * wi * u.abs().powf(spec.p);
        }
    }
    Ok(acc.powf(1.0 / spec.p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grids(a_max: f64, n_age: usize) -> (AgeGrid, SpaceGrid) {
        (
            AgeGrid::new(a_max, n_age).unwrap(),
            SpaceGrid::unit(11, Boundary::Neumann).unwrap(),
        )
    }

    #[test]
    fn age_nodes_are_uniform_and_hit_endpoints() {
        let g = AgeGrid::new(2.0, 7).unwrap();
        let n = g.nodes();
        assert_eq!(n[0], 0.0);
        assert_eq!(n[6], 2.0);
        for w in n.windows(2) {
            assert!((w[1] - w[0] - g.da()).abs() < 1e-15);
        }
        assert_eq!(g.index_of(2.0 / 3.0).unwrap(), 2);
        assert!(matches!(g.index_of(0.5), Err(Error::GridAlignment(_))));
        assert!(matches!(g.index_of(3.0), Err(Error::GridAlignment(_))));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(AgeGrid::new(-1.0, 10).is_err());
        assert!(AgeGrid::new(1.0, 2).is_err());
        assert!(SpaceGrid::new(1.0, 0.0, 10, Boundary::Dirichlet).is_err());
        assert!(SpaceGrid::new(0.0, 1.0, 2, Boundary::Dirichlet).is_err());
        assert!(SpaceGrid::new(0.0, 1.0, 1, Boundary::Neumann).is_ok());
    }

    #[test]
    fn space_spacing_depends_on_boundary() {
        let d = SpaceGrid::unit(99, Boundary::Dirichlet).unwrap();
        assert!((d.dx() - 0.01).abs() < 1e-15);
        assert!((d.node(49) - 0.5).abs() < 1e-15);
        let n = SpaceGrid::unit(101, Boundary::Neumann).unwrap();
        assert!((n.dx() - 0.01).abs() < 1e-15);
        assert_eq!(n.node(0), 0.0);
        assert_eq!(n.node(100), 1.0);
        assert!((n.integrate(&vec![1.0; 101]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn integrate_constant_is_exact() {
        let (age, space) = grids(2.0, 21);
        let u = AgeSpaceField::from_fn(age, space, |_, _| 1.0);
        let big_u = integrate_age(&u, None).unwrap();
        for v in big_u.values() {
            assert!((v - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn integrate_linear_is_exact() {
        let (age, space) = grids(1.0, 17);
        let u = AgeSpaceField::from_fn(age, space, |a, _| a);
        for v in integrate_age(&u, None).unwrap().values() {
            assert!((v - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn integrate_exponential_matches_analytic() {
        let (age, space) = grids(1.0, 201);
        let u = AgeSpaceField::from_fn(age, space, |a, _| (-a).exp());
        let exact = 1.0 - (-1.0f64).exp();
        for v in integrate_age(&u, None).unwrap().values() {
            assert!((v - exact).abs() <= 1e-4);
        }
    }

    #[test]
    fn integrate_rejects_bad_kernel() {
        let (age, space) = grids(1.0, 11);
        let u = AgeSpaceField::zeros(age, space);
        assert!(matches!(integrate_age(&u, Some(&[1.0; 3])), Err(Error::Dimension(_))));
    }

    #[test]
    fn norms_of_simple_fields() {
        let (age, space) = grids(1.0, 11);
        let zero = AgeSpaceField::zeros(age, space);
        let one = AgeSpaceField::from_fn(age, space, |_, _| 1.0);
        for p in [1.0, 2.0, f64::INFINITY] {
            assert_eq!(field_norm(&zero, NormSpec { p }).unwrap(), 0.0);
        }
        assert_eq!(field_norm(&one, NormSpec::SUP).unwrap(), 1.0);
        assert!((field_norm(&one, NormSpec::L1).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            field_norm(&one, NormSpec { p: 0.5 }),
            Err(Error::Parameter { .. })
        ));
    }

    fn field_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        let n = 7 * 5;
        (
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-10.0..10.0f64, n),
        )
    }

    proptest! {
        #[test]
        fn integrate_age_is_linear((u, v) in field_strategy(), c1 in -3.0..3.0f64, c2 in -3.0..3.0f64) {
            let age = AgeGrid::new(1.5, 7).unwrap();
            let space = SpaceGrid::unit(5, Boundary::Dirichlet).unwrap();
            let fu = AgeSpaceField::from_values(age, space, u).unwrap();
            let fv = AgeSpaceField::from_values(age, space, v).unwrap();
            let mut comb = fu.scaled(c1);
            comb.axpy(c2, &fv).unwrap();
            let lhs = integrate_age(&comb, None).unwrap();
            let iu = integrate_age(&fu, None).unwrap();
            let iv = integrate_age(&fv, None).unwrap();
            for i in 0..5 {
                let rhs = c1 * iu[i] + c2 * iv[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn norm_triangle_and_homogeneity((u, v) in field_strategy(), c in -5.0..5.0f64, p in prop::sample::select(vec![1.0, 2.0, 3.5, f64::INFINITY])) {
            let age = AgeGrid::new(1.0, 7).unwrap();
            let space = SpaceGrid::unit(5, Boundary::Neumann).unwrap();
            let fu = AgeSpaceField::from_values(age, space, u).unwrap();
            let fv = AgeSpaceField::from_values(age, space, v).unwrap();
            let spec = NormSpec::new(p).unwrap();
            let mut sum = fu.clone();
            sum.axpy(1.0, &fv).unwrap();
            let nu = field_norm(&fu, spec).unwrap();
            let nv = field_norm(&fv, spec).unwrap();
            prop_assert!(field_norm(&sum, spec).unwrap() <= nu + nv + 1e-12);
            let ncu = field_norm(&fu.scaled(c), spec).unwrap();
            prop_assert!((ncu - c.abs() * nu).abs() <= 1e-12 * (1.0 + ncu));
        }

        #[test]
        fn integrate_nonnegative(u in prop::collection::vec(0.0..10.0f64, 35), kern in prop::collection::vec(0.0..2.0f64, 7)) {
            let age = AgeGrid::new(1.0, 7).unwrap();
            let space = SpaceGrid::unit(5, Boundary::Neumann).unwrap();
            let fu = AgeSpaceField::from_values(age, space, u).unwrap();
            let out = integrate_age(&fu, Some(&kern)).unwrap();
            prop_assert!(out.values().iter().all(|&v| v >= 0.0));
        }
    }
}
