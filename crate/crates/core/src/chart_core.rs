//! Coordinate charts, fields as evaluable maps, central finite differences,
//! tensor-product quadrature and diffeomorphisms of a chart.
//!
//! Fields are closures, never stored grids. Grids only appear as sampling
//! artifacts in sweeps and quadrature.

use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Chart coordinates of a point. Its length must equal the chart dimension.
pub type Point = Vec<f64>;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type MatrixListFn = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;
pub type MatrixGridFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<DMatrix<f64>>> + Send + Sync>;

/// A closed coordinate box in R^d together with the per-axis sampling
/// resolution used by quadrature and grid sweeps.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartDomain {
    bounds: Vec<(f64, f64)>,
    grid_res: usize,
}

impl ChartDomain {
    pub fn new(bounds: Vec<(f64, f64)>, grid_res: usize) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidChart("dimension must be at least 1".into()));
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidChart(format!(
                    "axis {axis} has empty interval [{lo}, {hi}]"
                )));
            }
        }
        if grid_res < 2 {
            return Err(Error::InvalidChart(format!("grid_res {grid_res} < 2")));
        }
        Ok(Self { bounds, grid_res })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64, grid_res: usize) -> Result<Self> {
        Self::new(vec![(lo, hi); dim], grid_res)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn grid_res(&self) -> usize {
        self.grid_res
    }

    pub fn with_grid_res(&self, grid_res: usize) -> Result<Self> {
        Self::new(self.bounds.clone(), grid_res)
    }

    pub fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.contains_with_margin(p, 0.0)
    }

    /// True when `p` lies in the box shrunk by `margin` on every side.
    pub fn contains_with_margin(&self, p: &[f64], margin: f64) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo + margin && x <= hi - margin)
    }

    pub fn center(&self) -> Point {
        self.bounds
            .iter()
            .map(|&(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// The box shrunk by `margin` on every side.
    pub fn shrink(&self, margin: f64) -> Result<Self> {
        Self::new(
            self.bounds
                .iter()
                .map(|&(lo, hi)| (lo + margin, hi - margin))
                .collect(),
            self.grid_res,
        )
    }

    /// Cartesian product `self x other`, keeping this chart's resolution.
    pub fn product(&self, other: &ChartDomain) -> ChartDomain {
        let mut bounds = self.bounds.clone();
        bounds.extend_from_slice(&other.bounds);
        ChartDomain {
            bounds,
            grid_res: self.grid_res,
        }
    }

    /// Tensor grid with `per_axis` samples per axis, including the faces.
    pub fn grid_points(&self, per_axis: usize) -> Vec<Point> {
        tensor_grid(&self.bounds, per_axis)
    }

    /// Tensor grid of the box shrunk by `margin`.
    pub fn interior_grid(&self, per_axis: usize, margin: f64) -> Vec<Point> {
        let shrunk: Vec<(f64, f64)> = self
            .bounds
            .iter()
            .map(|&(lo, hi)| (lo + margin, hi - margin))
            .collect();
        tensor_grid(&shrunk, per_axis)
    }

    /// Uniform random point in the box shrunk by `margin`.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R, margin: f64) -> Point {
        self.bounds
            .iter()
            .map(|&(lo, hi)| rng.gen_range((lo + margin)..(hi - margin)))
            .collect()
    }
}

fn tensor_grid(bounds: &[(f64, f64)], per_axis: usize) -> Vec<Point> {
    let n = per_axis.max(1);
    let axis_values: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            if n == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let total = n.pow(bounds.len() as u32);
    (0..total)
        .map(|mut flat| {
            let mut p = vec![0.0; bounds.len()];
            for axis in (0..bounds.len()).rev() {
                p[axis] = axis_values[axis][flat % n];
                flat /= n;
            }
            p
        })
        .collect()
}

/// Central-difference accuracy order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdOrder {
    Second,
    Fourth,
}

/// Step and scheme for central finite differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdConfig {
    step: f64,
    order: FdOrder,
}

impl FdConfig {
    pub fn new(step: f64, order: FdOrder) -> Result<Self> {
        if !(1e-8..=1e-1).contains(&step) {
            return Err(Error::InvalidConfig(format!(
                "fd step {step} outside [1e-8, 1e-1]"
            )));
        }
        Ok(Self { step, order })
    }

    /// Order-4 scheme with h = 1e-3, used for first derivatives of metrics.
    pub fn first_derivative() -> Self {
        Self {
            step: 1e-3,
            order: FdOrder::Fourth,
        }
    }

    /// Order-4 scheme with h = 5e-3, used when differentiating Christoffel
    /// symbols into curvature.
    pub fn second_derivative() -> Self {
        Self {
            step: 5e-3,
            order: FdOrder::Fourth,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn order(&self) -> FdOrder {
        self.order
    }

    /// Largest coordinate offset the stencil touches.
    pub fn reach(&self) -> f64 {
        match self.order {
            FdOrder::Second => self.step,
            FdOrder::Fourth => 2.0 * self.step,
        }
    }
}

impl Default for FdConfig {
    fn default() -> Self {
        Self::first_derivative()
    }
}

fn shifted(p: &[f64], axis: usize, delta: f64) -> Point {
    let mut q = p.to_vec();
    q[axis] += delta;
    q
}

/// Central difference of `f` along `axis` at `p`, without domain checks.
pub fn central_difference<T, F>(f: F, p: &[f64], axis: usize, cfg: &FdConfig) -> T
where
    F: Fn(&[f64]) -> T,
    T: Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let h = cfg.step;
    match cfg.order {
        FdOrder::Second => (f(&shifted(p, axis, h)) - f(&shifted(p, axis, -h))) * (0.5 / h),
        FdOrder::Fourth => {
            let near = f(&shifted(p, axis, h)) - f(&shifted(p, axis, -h));
            let far = f(&shifted(p, axis, -2.0 * h)) - f(&shifted(p, axis, 2.0 * h));
            near * (8.0 / (12.0 * h)) + far * (1.0 / (12.0 * h))
        }
    }
}

/// Provenance of derivative data attached to a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    FiniteDifference,
}

/// Real-valued field on a chart, with optional analytic gradient and Hessian.
#[derive(Clone)]
pub struct ScalarField {
    domain: ChartDomain,
    value: ScalarFn,
    gradient: Option<VectorFn>,
    hessian: Option<MatrixFn>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("domain", &self.domain)
            .field("provenance", &self.provenance())
            .finish()
    }
}

impl ScalarField {
    pub fn new(domain: ChartDomain, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            domain,
            value: Arc::new(f),
            gradient: None,
            hessian: None,
        }
    }

    pub fn constant(domain: ChartDomain, c: f64) -> Self {
        let d = domain.dim();
        Self::new(domain, move |_| c)
            .with_gradient(move |_| vec![0.0; d])
            .with_hessian(move |_| DMatrix::zeros(d, d))
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(
        mut self,
        h: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn provenance(&self) -> Provenance {
        if self.gradient.is_some() {
            Provenance::Analytic
        } else {
            Provenance::FiniteDifference
        }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        (self.value)(p)
    }

    pub fn analytic_gradient(&self, p: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(p))
    }

    pub fn analytic_hessian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(p))
    }

    /// Gradient, analytic when available, else finite differences.
    pub fn gradient(&self, p: &[f64], cfg: &FdConfig) -> Result<Vec<f64>> {
        if let Some(g) = self.analytic_gradient(p) {
            return Ok(g);
        }
        (0..self.domain.dim())
            .map(|axis| fd_partial(self, p, axis, cfg))
            .collect()
    }

    /// Hessian, analytic when available, else finite differences of the
    /// gradient.
    pub fn hessian(&self, p: &[f64], cfg: &FdConfig) -> Result<DMatrix<f64>> {
        if let Some(h) = self.analytic_hessian(p) {
            return Ok(h);
        }
        let d = self.domain.dim();
        check_stencil(&self.domain, p, cfg)?;
        let mut out = DMatrix::zeros(d, d);
        let inner = FdConfig::first_derivative();
        for axis in 0..d {
            let col = central_difference(
                |q| {
                    let g = self.analytic_gradient(q).unwrap_or_else(|| {
                        (0..d)
                            .map(|a| central_difference(|r| self.eval(r), q, a, &inner))
                            .collect()
                    });
                    nalgebra::DVector::from_vec(g)
                },
                p,
                axis,
                cfg,
            );
            out.set_column(axis, &col);
        }
        Ok((&out + out.transpose()) * 0.5)
    }
}

/// Field of d x d matrices on a chart: the carrier for (1,1)-tensor fields
/// and for symmetric bilinear forms.
///
/// `partials(p)[k]` is the derivative along axis k; `second_partials(p)[k][l]`
/// is the mixed derivative along axes k and l.
#[derive(Clone)]
pub struct MatrixField {
    domain: ChartDomain,
    value: MatrixFn,
    partials: Option<MatrixListFn>,
    second_partials: Option<MatrixGridFn>,
}

/// A (1,1)-tensor field; evaluations must be finite on the chart interior.
pub type Tensor11Field = MatrixField;
/// A symmetric bilinear form field; evaluations are symmetric to 1e-12.
pub type SymBilinearField = MatrixField;

impl std::fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MatrixField")
            .field("domain", &self.domain)
            .field("provenance", &self.provenance())
            .finish()
    }
}

impl MatrixField {
    pub fn new(
        domain: ChartDomain,
        f: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            domain,
            value: Arc::new(f),
            partials: None,
            second_partials: None,
        }
    }

    pub fn from_arc(domain: ChartDomain, f: MatrixFn) -> Self {
        Self {
            domain,
            value: f,
            partials: None,
            second_partials: None,
        }
    }

    pub fn constant(domain: ChartDomain, m: DMatrix<f64>) -> Self {
        let d = domain.dim();
        let (r, c) = m.shape();
        Self::new(domain, move |_| m.clone())
            .with_partials(move |_| vec![DMatrix::zeros(r, c); d])
            .with_second_partials(move |_| vec![vec![DMatrix::zeros(r, c); d]; d])
    }

    pub fn identity(domain: ChartDomain) -> Self {
        let d = domain.dim();
        Self::constant(domain, DMatrix::identity(d, d))
    }

    pub fn with_partials(
        mut self,
        f: impl Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.partials = Some(Arc::new(f));
        self
    }

    pub fn with_second_partials(
        mut self,
        f: impl Fn(&[f64]) -> Vec<Vec<DMatrix<f64>>> + Send + Sync + 'static,
    ) -> Self {
        self.second_partials = Some(Arc::new(f));
        self
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn provenance(&self) -> Provenance {
        if self.partials.is_some() {
            Provenance::Analytic
        } else {
            Provenance::FiniteDifference
        }
    }

    pub fn has_second_partials(&self) -> bool {
        self.second_partials.is_some()
    }

    pub fn eval(&self, p: &[f64]) -> DMatrix<f64> {
        (self.value)(p)
    }

    pub fn value_fn(&self) -> MatrixFn {
        self.value.clone()
    }

    pub fn analytic_partials(&self, p: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        self.partials.as_ref().map(|f| f(p))
    }

    pub fn analytic_second_partials(&self, p: &[f64]) -> Option<Vec<Vec<DMatrix<f64>>>> {
        self.second_partials.as_ref().map(|f| f(p))
    }

    /// All first partials, analytic when available, else finite differences.
    pub fn partials(&self, p: &[f64], cfg: &FdConfig) -> Result<Vec<DMatrix<f64>>> {
        if let Some(d) = self.analytic_partials(p) {
            return Ok(d);
        }
        (0..self.domain.dim())
            .map(|axis| fd_partial(self, p, axis, cfg))
            .collect()
    }

    /// Pointwise map of the values; derivative data is dropped.
    pub fn map(
        &self,
        f: impl Fn(&[f64], DMatrix<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        let inner = self.value.clone();
        Self::new(self.domain.clone(), move |p| f(p, inner(p)))
    }

    /// Same field with derivative data dropped, so every derivative is taken
    /// by finite differences.
    pub fn without_derivatives(&self) -> Self {
        Self::from_arc(self.domain.clone(), self.value.clone())
    }
}

/// Fields that [`fd_partial`] can differentiate.
pub trait FdField {
    type Value: Add<Output = Self::Value>
        + Sub<Output = Self::Value>
        + Mul<f64, Output = Self::Value>;
    fn chart(&self) -> &ChartDomain;
    fn value_at(&self, p: &[f64]) -> Self::Value;
    fn analytic_partial(&self, p: &[f64], axis: usize) -> Option<Self::Value>;
}

impl FdField for ScalarField {
    type Value = f64;
    fn chart(&self) -> &ChartDomain {
        &self.domain
    }
    fn value_at(&self, p: &[f64]) -> f64 {
        self.eval(p)
    }
    fn analytic_partial(&self, p: &[f64], axis: usize) -> Option<f64> {
        self.analytic_gradient(p).map(|g| g[axis])
    }
}

impl FdField for MatrixField {
    type Value = DMatrix<f64>;
    fn chart(&self) -> &ChartDomain {
        &self.domain
    }
    fn value_at(&self, p: &[f64]) -> DMatrix<f64> {
        self.eval(p)
    }
    fn analytic_partial(&self, p: &[f64], axis: usize) -> Option<DMatrix<f64>> {
        self.analytic_partials(p).map(|mut v| v.swap_remove(axis))
    }
}

fn check_stencil(domain: &ChartDomain, p: &[f64], cfg: &FdConfig) -> Result<()> {
    domain.check_point(p)?;
    if !domain.contains_with_margin(p, cfg.reach()) {
        return Err(Error::OutOfDomain { point: p.to_vec() });
    }
    Ok(())
}

/// Partial derivative of `field` along `axis` at `point`.
///
/// Uses the analytic partial when the field carries one; otherwise a central
/// difference whose stencil must stay inside the chart.
pub fn fd_partial<F: FdField>(
    field: &F,
    point: &[f64],
    axis: usize,
    cfg: &FdConfig,
) -> Result<F::Value> {
    field.chart().check_point(point)?;
    if axis >= point.len() {
        return Err(Error::InvalidConfig(format!("axis {axis} out of range")));
    }
    if let Some(v) = field.analytic_partial(point, axis) {
        return Ok(v);
    }
    check_stencil(field.chart(), point, cfg)?;
    Ok(central_difference(|q| field.value_at(q), point, axis, cfg))
}

/// One-dimensional quadrature rule applied along every axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    /// Composite Simpson; needs an odd `grid_res`.
    Simpson,
}

fn rule_weights(lo: f64, hi: f64, n: usize, rule: QuadratureRule) -> Result<Vec<f64>> {
    let h = (hi - lo) / (n - 1) as f64;
    match rule {
        QuadratureRule::Trapezoid => Ok((0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect()),
        QuadratureRule::Simpson => {
            if n % 2 == 0 {
                return Err(Error::InvalidConfig(format!(
                    "Simpson needs odd grid_res, got {n}"
                )));
            }
            Ok((0..n)
                .map(|i| {
                    let c = if i == 0 || i == n - 1 {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    c * h / 3.0
                })
                .collect())
        }
    }
}

/// Tensor-product quadrature of a fallible integrand over the closed box.
///
/// The sum runs over slices of the first axis in parallel, each slice summed
/// sequentially, and the slice totals are added in index order, so the result
/// does not depend on the worker count.
pub fn integrate_fn<F>(domain: &ChartDomain, rule: QuadratureRule, integrand: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let n = domain.grid_res();
    let d = domain.dim();
    let nodes: Vec<Vec<f64>> = domain
        .bounds()
        .iter()
        .map(|&(lo, hi)| {
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        })
        .collect();
    let weights: Vec<Vec<f64>> = domain
        .bounds()
        .iter()
        .map(|&(lo, hi)| rule_weights(lo, hi, n, rule))
        .collect::<Result<_>>()?;
    let inner_count = n.pow((d - 1) as u32);
    let slices: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i0| {
            let mut acc = 0.0;
            let mut p = vec![0.0; d];
            p[0] = nodes[0][i0];
            for flat in 0..inner_count {
                let mut rest = flat;
                let mut w = weights[0][i0];
                for axis in (1..d).rev() {
                    let idx = rest % n;
                    rest /= n;
                    p[axis] = nodes[axis][idx];
                    w *= weights[axis][idx];
                }
                let v = integrand(&p)?;
                if !v.is_finite() {
                    return Err(Error::NonFiniteSample { point: p.clone() });
                }
                acc += w * v;
            }
            Ok(acc)
        })
        .collect();
    slices.into_iter().try_fold(0.0, |acc, s| Ok(acc + s?))
}

/// Trapezoid approximation of the integral of `field * weight` over `domain`.
pub fn integrate_quadrature(
    field: &ScalarField,
    domain: &ChartDomain,
    weight: &ScalarField,
) -> Result<f64> {
    integrate_with_rule(field, domain, weight, QuadratureRule::Trapezoid)
}

pub fn integrate_with_rule(
    field: &ScalarField,
    domain: &ChartDomain,
    weight: &ScalarField,
    rule: QuadratureRule,
) -> Result<f64> {
    integrate_fn(domain, rule, |p| Ok(field.eval(p) * weight.eval(p)))
}

type PointFn = Arc<dyn Fn(&[f64]) -> Point + Send + Sync>;

/// A diffeomorphism given by forward and inverse maps on chart coordinates,
/// with an optional analytic differential.
#[derive(Clone)]
pub struct DiffeoOnChart {
    domain: ChartDomain,
    forward: PointFn,
    inverse: PointFn,
    differential: Option<MatrixFn>,
}

impl std::fmt::Debug for DiffeoOnChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffeoOnChart")
            .field("domain", &self.domain)
            .field("analytic_differential", &self.differential.is_some())
            .finish()
    }
}

impl DiffeoOnChart {
    pub fn new(
        domain: ChartDomain,
        forward: impl Fn(&[f64]) -> Point + Send + Sync + 'static,
        inverse: impl Fn(&[f64]) -> Point + Send + Sync + 'static,
    ) -> Self {
        Self {
            domain,
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            differential: None,
        }
    }

    pub fn with_differential(
        mut self,
        df: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.differential = Some(Arc::new(df));
        self
    }

    pub fn identity(domain: ChartDomain) -> Self {
        let d = domain.dim();
        Self::new(domain, |p| p.to_vec(), |p| p.to_vec())
            .with_differential(move |_| DMatrix::identity(d, d))
    }

    /// The affine map `p -> A p + b`. Fails when `A` is singular.
    pub fn affine(domain: ChartDomain, a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("affine map is singular".into()))?;
        let (a1, b1, b2) = (a.clone(), b.clone(), b);
        Ok(Self::new(
            domain,
            move |p| {
                let v = &a1 * nalgebra::DVector::from_column_slice(p);
                v.iter().zip(&b1).map(|(x, y)| x + y).collect()
            },
            move |p| {
                let shifted: Vec<f64> = p.iter().zip(&b2).map(|(x, y)| x - y).collect();
                (&a_inv * nalgebra::DVector::from_vec(shifted))
                    .iter()
                    .copied()
                    .collect()
            },
        )
        .with_differential(move |_| a.clone()))
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn forward(&self, p: &[f64]) -> Point {
        (self.forward)(p)
    }

    pub fn inverse(&self, p: &[f64]) -> Point {
        (self.inverse)(p)
    }

    pub fn has_analytic_differential(&self) -> bool {
        self.differential.is_some()
    }

    /// `D_p f`, analytic when provided, else an order-4 central difference of
    /// the forward map (the forward map is assumed defined near the chart).
    pub fn differential(&self, p: &[f64]) -> DMatrix<f64> {
        if let Some(df) = &self.differential {
            return df(p);
        }
        let d = p.len();
        let cfg = FdConfig::first_derivative();
        let mut m = DMatrix::zeros(d, d);
        for axis in 0..d {
            let col = central_difference(
                |q| nalgebra::DVector::from_vec(self.forward(q)),
                p,
                axis,
                &cfg,
            );
            m.set_column(axis, &col);
        }
        m
    }

    /// `D_x (f^{-1}) = (D_{f^{-1} x} f)^{-1}`.
    pub fn inverse_differential(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let y = self.inverse(x);
        self.differential(&y)
            .try_inverse()
            .ok_or(Error::SingularTensor { point: y })
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &DiffeoOnChart) -> DiffeoOnChart {
        let (f_fwd, g_fwd) = (self.clone(), other.clone());
        let (f_inv, g_inv) = (self.clone(), other.clone());
        let (f_d, g_d) = (self.clone(), other.clone());
        Self::new(
            self.domain.clone(),
            move |p| f_fwd.forward(&g_fwd.forward(p)),
            move |p| g_inv.inverse(&f_inv.inverse(p)),
        )
        .with_differential(move |p| f_d.differential(&g_d.forward(p)) * g_d.differential(p))
    }

    /// The inverse diffeomorphism.
    pub fn inverted(&self) -> DiffeoOnChart {
        let fwd = self.clone();
        let inv = self.clone();
        let diff = self.clone();
        Self::new(
            self.domain.clone(),
            move |p| inv.inverse(p),
            move |p| fwd.forward(p),
        )
        .with_differential(move |p| {
            let y = diff.inverse(p);
            let m = diff.differential(&y);
            let d = m.nrows();
            m.try_inverse()
                .unwrap_or_else(|| DMatrix::from_element(d, d, f64::NAN))
        })
    }

    /// `f^n` for any integer `n`; `n = 0` is the identity.
    pub fn power(&self, n: i32) -> DiffeoOnChart {
        let base = if n < 0 { self.inverted() } else { self.clone() };
        let mut acc = DiffeoOnChart::identity(self.domain.clone());
        for _ in 0..n.unsigned_abs() {
            acc = base.compose(&acc);
        }
        acc
    }

    /// Largest `|f^{-1}(f(p)) - p|` over a `per_axis^d` grid of the chart.
    pub fn roundtrip_error(&self, per_axis: usize) -> f64 {
        self.domain
            .grid_points(per_axis)
            .iter()
            .map(|p| {
                let q = self.inverse(&self.forward(p));
                q.iter()
                    .zip(p)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Checks the round-trip to 1e-9 and invertibility of the differential on
    /// a `per_axis^d` grid.
    pub fn check(&self, per_axis: usize) -> Result<()> {
        let err = self.roundtrip_error(per_axis);
        if err.is_nan() || err >= 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "inverse(forward(p)) deviates by {err:e}"
            )));
        }
        for p in self.domain.interior_grid(per_axis, 1e-2) {
            let det = self.differential(&p).determinant();
            if !det.is_finite() || det.abs() < 1e-12 {
                return Err(Error::SingularTensor { point: p });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_square(res: usize) -> ChartDomain {
        ChartDomain::cube(2, 0.0, 1.0, res).unwrap()
    }

    #[test]
    fn chart_rejects_bad_input() {
        assert!(ChartDomain::new(vec![], 3).is_err());
        assert!(ChartDomain::new(vec![(1.0, 1.0)], 3).is_err());
        assert!(ChartDomain::new(vec![(0.0, 1.0)], 1).is_err());
        assert!(FdConfig::new(1.0, FdOrder::Second).is_err());
        assert!(FdConfig::new(1e-9, FdOrder::Second).is_err());
    }

    #[test]
    fn constant_field_has_zero_partial() {
        let dom = ChartDomain::cube(2, -1.0, 1.0, 5).unwrap();
        let f = ScalarField::new(dom, |_| 3.5);
        for axis in 0..2 {
            let v = fd_partial(&f, &[0.1, 0.2], axis, &FdConfig::default()).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn quadratic_exact_for_second_order() {
        let dom = ChartDomain::cube(2, -2.0, 2.0, 5).unwrap();
        let f = ScalarField::new(dom, |p| p[0] * p[0]);
        let cfg = FdConfig::new(1e-4, FdOrder::Second).unwrap();
        let v = fd_partial(&f, &[1.0, 0.0], 0, &cfg).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-7);
    }

    #[test]
    fn sine_fourth_order_matches_cosine() {
        let dom = ChartDomain::cube(1, -1.0, 1.0, 5).unwrap();
        let f = ScalarField::new(dom, |p| p[0].sin());
        let cfg = FdConfig::new(1e-3, FdOrder::Fourth).unwrap();
        let v = fd_partial(&f, &[0.3], 0, &cfg).unwrap();
        assert_abs_diff_eq!(v, 0.3f64.cos(), epsilon = 1e-8);
    }

    #[test]
    fn analytic_partial_is_preferred() {
        let dom = ChartDomain::cube(1, -1.0, 1.0, 5).unwrap();
        // deliberately inconsistent gradient so the branch taken is visible
        let f = ScalarField::new(dom, |p| p[0]).with_gradient(|_| vec![42.0]);
        assert_eq!(
            fd_partial(&f, &[0.999999], 0, &FdConfig::default()).unwrap(),
            42.0
        );
    }

    #[test]
    fn stencil_outside_chart_is_reported() {
        let f = ScalarField::new(unit_square(5), |p| p[0]);
        let err = fd_partial(&f, &[0.0005, 0.5], 0, &FdConfig::default()).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { .. }));
    }

    #[test]
    fn richardson_ratio_order_two() {
        let dom = ChartDomain::cube(1, -1.0, 2.0, 5).unwrap();
        let f = ScalarField::new(dom, |p| p[0].exp() * p[0].sin());
        let exact = |x: f64| x.exp() * (x.sin() + x.cos());
        let x = 0.7;
        let e1 = (fd_partial(&f, &[x], 0, &FdConfig::new(1e-2, FdOrder::Second).unwrap()).unwrap()
            - exact(x))
        .abs();
        let e2 = (fd_partial(&f, &[x], 0, &FdConfig::new(5e-3, FdOrder::Second).unwrap()).unwrap()
            - exact(x))
        .abs();
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn matrix_field_partials() {
        let dom = ChartDomain::cube(2, -1.0, 1.0, 5).unwrap();
        let m = MatrixField::new(dom, |p| {
            DMatrix::from_row_slice(2, 2, &[p[0] * p[1], p[0], p[1], 1.0])
        });
        let d = m.partials(&[0.3, -0.2], &FdConfig::default()).unwrap();
        assert_abs_diff_eq!(d[0][(0, 0)], -0.2, epsilon = 1e-10);
        assert_abs_diff_eq!(d[0][(0, 1)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(d[1][(1, 0)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(d[1][(1, 1)], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn quadrature_unit_and_separable() {
        let dom = unit_square(101);
        let one = ScalarField::constant(dom.clone(), 1.0);
        assert_abs_diff_eq!(
            integrate_quadrature(&one, &dom, &one).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let xy = ScalarField::new(dom.clone(), |p| p[0] * p[1]);
        assert_abs_diff_eq!(
            integrate_quadrature(&xy, &dom, &one).unwrap(),
            0.25,
            epsilon = 1e-6
        );
    }

    #[test]
    fn quadrature_converges_at_second_order() {
        let exact = (1.0f64.exp() - 1.0).powi(2);
        let err = |res: usize| {
            let dom = unit_square(res);
            let f = ScalarField::new(dom.clone(), |p| (p[0] + p[1]).exp());
            let one = ScalarField::constant(dom.clone(), 1.0);
            (integrate_quadrature(&f, &dom, &one).unwrap() - exact).abs()
        };
        let ratio = err(21) / err(41);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn simpson_needs_odd_resolution() {
        let dom = unit_square(10);
        let one = ScalarField::constant(dom.clone(), 1.0);
        assert!(integrate_with_rule(&one, &dom, &one, QuadratureRule::Simpson).is_err());
    }

    #[test]
    fn non_finite_sample_is_reported() {
        let dom = unit_square(5);
        let err = integrate_fn(&dom, QuadratureRule::Trapezoid, |p| Ok(1.0 / p[0])).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample { .. }));
    }

    #[test]
    fn diffeo_roundtrip_and_composition() {
        let dom = unit_square(5);
        let f = DiffeoOnChart::affine(
            dom.clone(),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]),
            vec![0.25, 0.25],
        )
        .unwrap();
        f.check(10).unwrap();
        let f3 = f.power(3);
        let p = f3.forward(&[1.0, 0.0]);
        assert_abs_diff_eq!(p[0], 0.5 + 0.0625, epsilon = 1e-15);
        assert_abs_diff_eq!(f3.differential(&[0.3, 0.3])[(0, 0)], 0.125, epsilon = 1e-15);
        let back = f.power(-3).forward(&p);
        assert_abs_diff_eq!(back[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn fd_differential_matches_analytic() {
        let dom = unit_square(5);
        let f = DiffeoOnChart::new(
            dom,
            |p| vec![p[0] + 0.1 * p[1].sin(), p[1]],
            |p| vec![p[0] - 0.1 * p[1].sin(), p[1]],
        );
        let m = f.differential(&[0.4, 0.6]);
        assert_abs_diff_eq!(m[(0, 1)], 0.1 * 0.6f64.cos(), epsilon = 1e-10);
        assert_abs_diff_eq!(m[(0, 0)], 1.0, epsilon = 1e-10);
    }
}
