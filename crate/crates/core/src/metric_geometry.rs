//! Levi-Civita connection, curvature, geodesics and the test for sharing
//! unparameterized geodesics.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chart_core::{ChartDomain, FdConfig, MatrixField, Point, ScalarField, SymBilinearField};
use crate::error::{Error, Result};

/// Determinant magnitude below which a metric counts as singular.
pub const SINGULAR_DET: f64 = 1e-10;

/// Counts of positive and negative directions of a metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature {
    pub positive: usize,
    pub negative: usize,
}

impl Signature {
    pub fn riemannian(d: usize) -> Self {
        Self {
            positive: d,
            negative: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.positive + self.negative
    }

    /// Signature of a symmetric matrix; zero eigenvalues are counted in
    /// neither slot.
    pub fn of(m: &DMatrix<f64>) -> Self {
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let positive = eig
            .eigenvalues
            .iter()
            .filter(|&&l| l > 1e-14 * scale)
            .count();
        let negative = eig
            .eigenvalues
            .iter()
            .filter(|&&l| l < -1e-14 * scale)
            .count();
        Self { positive, negative }
    }
}

/// A (pseudo-)Riemannian metric on a chart.
#[derive(Clone, Debug)]
pub struct Metric {
    field: SymBilinearField,
    signature: Signature,
}

impl Metric {
    pub fn new(field: SymBilinearField, signature: Signature) -> Result<Self> {
        let d = field.domain().dim();
        if signature.dim() != d {
            return Err(Error::InvalidConfig(format!(
                "signature ({}, {}) does not match dimension {d}",
                signature.positive, signature.negative
            )));
        }
        Ok(Self { field, signature })
    }

    pub fn riemannian(field: SymBilinearField) -> Self {
        let d = field.domain().dim();
        Self {
            field,
            signature: Signature::riemannian(d),
        }
    }

    /// The Euclidean metric on `domain`.
    pub fn flat(domain: ChartDomain) -> Self {
        Self::riemannian(MatrixField::identity(domain))
    }

    /// `factor(x) * Id`; analytic derivatives are inherited from the factor's
    /// gradient and Hessian when it has them.
    pub fn conformally_flat(factor: ScalarField) -> Self {
        let domain = factor.domain().clone();
        let d = domain.dim();
        let f0 = factor.clone();
        let mut field = MatrixField::new(domain, move |p| DMatrix::identity(d, d) * f0.eval(p));
        if factor.analytic_gradient(&vec![0.0; d]).is_some() {
            let f1 = factor.clone();
            field = field.with_partials(move |p| {
                f1.analytic_gradient(p)
                    .unwrap()
                    .into_iter()
                    .map(|g| DMatrix::identity(d, d) * g)
                    .collect()
            });
        }
        if factor.analytic_hessian(&vec![0.0; d]).is_some() {
            let f2 = factor;
            field = field.with_second_partials(move |p| {
                let h = f2.analytic_hessian(p).unwrap();
                (0..d)
                    .map(|k| {
                        (0..d)
                            .map(|l| DMatrix::identity(d, d) * h[(k, l)])
                            .collect()
                    })
                    .collect()
            });
        }
        Self::riemannian(field)
    }

    pub fn field(&self) -> &SymBilinearField {
        &self.field
    }

    pub fn domain(&self) -> &ChartDomain {
        self.field.domain()
    }

    pub fn dim(&self) -> usize {
        self.domain().dim()
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn is_riemannian(&self) -> bool {
        self.signature.negative == 0
    }

    pub fn eval(&self, p: &[f64]) -> DMatrix<f64> {
        self.field.eval(p)
    }

    /// `g^{-1}` at `p`; fails when `|det g| < 1e-10`.
    pub fn inverse(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.eval(p);
        let det = g.determinant();
        if !(det.abs() >= SINGULAR_DET) {
            return Err(Error::SingularMetric {
                point: p.to_vec(),
                det,
            });
        }
        g.try_inverse().ok_or(Error::SingularMetric {
            point: p.to_vec(),
            det,
        })
    }

    pub fn inner(&self, p: &[f64], u: &[f64], v: &[f64]) -> f64 {
        bilinear(&self.eval(p), u, v)
    }

    pub fn partials(&self, p: &[f64], cfg: &FdConfig) -> Result<Vec<DMatrix<f64>>> {
        self.field.partials(p, cfg)
    }

    /// `c * g`, keeping derivative data.
    pub fn scaled(&self, c: f64) -> Metric {
        let f = self.field.clone();
        let mut field = MatrixField::new(self.domain().clone(), {
            let f = f.clone();
            move |p| f.eval(p) * c
        });
        if self.field.provenance() == crate::chart_core::Provenance::Analytic {
            let f1 = f.clone();
            field = field.with_partials(move |p| {
                f1.analytic_partials(p)
                    .unwrap()
                    .into_iter()
                    .map(|m| m * c)
                    .collect()
            });
        }
        if self.field.has_second_partials() {
            let f2 = f;
            field = field.with_second_partials(move |p| {
                f2.analytic_second_partials(p)
                    .unwrap()
                    .into_iter()
                    .map(|row| row.into_iter().map(|m| m * c).collect())
                    .collect()
            });
        }
        let signature = if c > 0.0 {
            self.signature
        } else {
            Signature {
                positive: self.signature.negative,
                negative: self.signature.positive,
            }
        };
        Metric { field, signature }
    }

    /// Same metric with all derivatives taken by finite differences.
    pub fn without_derivatives(&self) -> Metric {
        Metric {
            field: self.field.without_derivatives(),
            signature: self.signature,
        }
    }

    /// Checks symmetry, nondegeneracy and the declared signature on a
    /// `per_axis^d` grid of the chart.
    pub fn validate(&self, per_axis: usize) -> Result<()> {
        for p in self.domain().grid_points(per_axis) {
            let g = self.eval(&p);
            let asym = (&g - g.transpose()).amax();
            if asym > 1e-12 * g.amax().max(1.0) {
                return Err(Error::AsymmetricMetric {
                    point: p,
                    asymmetry: asym,
                });
            }
            let det = g.determinant();
            if !(det.abs() > SINGULAR_DET) {
                return Err(Error::SingularMetric { point: p, det });
            }
            let found = Signature::of(&g);
            if found != self.signature {
                return Err(Error::SignatureMismatch {
                    point: p,
                    declared_pos: self.signature.positive,
                    declared_neg: self.signature.negative,
                    found_pos: found.positive,
                    found_neg: found.negative,
                });
            }
        }
        Ok(())
    }

    /// Coordinate margin that finite-difference Christoffel evaluation needs.
    pub fn christoffel_margin(&self, cfg: &FdConfig) -> f64 {
        if self.field.provenance() == crate::chart_core::Provenance::Analytic {
            0.0
        } else {
            cfg.reach()
        }
    }
}

pub(crate) fn bilinear(g: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..u.len() {
        for j in 0..v.len() {
            s += g[(i, j)] * u[i] * v[j];
        }
    }
    s
}

pub(crate) fn euclid_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Christoffel symbols `Γ^k_{ij}` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.dim + i) * self.dim + j] = v;
    }

    /// `Γ^k_{ij} u^i v^j`.
    pub fn contract(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += self.get(k, i, j) * u[i] * v[j];
                    }
                }
                s
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest `|Γ^k_{ij} - Γ^k_{ji}|`.
    pub fn lower_asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    m = m.max((self.get(k, i, j) - self.get(k, j, i)).abs());
                }
            }
        }
        m
    }

    fn sub(&self, other: &Christoffel) -> Christoffel {
        Christoffel {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    fn scale(&self, c: f64) -> Christoffel {
        Christoffel {
            dim: self.dim,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    fn add(&self, other: &Christoffel) -> Christoffel {
        Christoffel {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl std::ops::Add for Christoffel {
    type Output = Christoffel;
    fn add(self, rhs: Christoffel) -> Christoffel {
        Christoffel::add(&self, &rhs)
    }
}

impl std::ops::Sub for Christoffel {
    type Output = Christoffel;
    fn sub(self, rhs: Christoffel) -> Christoffel {
        Christoffel::sub(&self, &rhs)
    }
}

impl std::ops::Mul<f64> for Christoffel {
    type Output = Christoffel;
    fn mul(self, c: f64) -> Christoffel {
        self.scale(c)
    }
}

fn christoffel_from(ginv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Christoffel {
    let d = ginv.nrows();
    let mut out = Christoffel::zeros(d);
    for k in 0..d {
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for l in 0..d {
                    s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                out.set(k, i, j, 0.5 * s);
                out.set(k, j, i, 0.5 * s);
            }
        }
    }
    out
}

/// The Levi-Civita connection of a metric as an evaluable field.
#[derive(Clone, Debug)]
pub struct ChristoffelField {
    metric: Metric,
    cfg: FdConfig,
}

impl ChristoffelField {
    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn eval(&self, p: &[f64]) -> Result<Christoffel> {
        let ginv = self.metric.inverse(p)?;
        let dg = self.metric.partials(p, &self.cfg)?;
        Ok(christoffel_from(&ginv, &dg))
    }

    /// `∂_m Γ^k_{ij}` from analytic first and second metric derivatives, when
    /// the metric carries both.
    fn analytic_derivatives(&self, p: &[f64]) -> Option<Result<Vec<Christoffel>>> {
        let f = self.metric.field();
        let dg = f.analytic_partials(p)?;
        let ddg = f.analytic_second_partials(p)?;
        Some((|| {
            let ginv = self.metric.inverse(p)?;
            let d = ginv.nrows();
            let mut out = Vec::with_capacity(d);
            for m in 0..d {
                let dginv = -(&ginv * &dg[m] * &ginv);
                let mut c = Christoffel::zeros(d);
                for k in 0..d {
                    for i in 0..d {
                        for j in 0..d {
                            let mut s = 0.0;
                            for l in 0..d {
                                s += dginv[(k, l)]
                                    * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)])
                                    + ginv[(k, l)]
                                        * (ddg[m][i][(j, l)] + ddg[m][j][(i, l)]
                                            - ddg[m][l][(i, j)]);
                            }
                            c.set(k, i, j, 0.5 * s);
                        }
                    }
                }
                out.push(c);
            }
            Ok(out)
        })())
    }
}

/// `Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})`, with analytic
/// metric partials when available and `fd_partial` otherwise.
pub fn christoffel(metric: &Metric, cfg: &FdConfig) -> ChristoffelField {
    ChristoffelField {
        metric: metric.clone(),
        cfg: *cfg,
    }
}

/// Riemann tensor `R^i_{jkl}` at one point, with
/// `R(∂_k, ∂_l)∂_j = R^i_{jkl} ∂_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Riemann {
    dim: usize,
    data: Vec<f64>,
}

impl Riemann {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim.pow(4)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.dim;
        self.data[((i * d + j) * d + k) * d + l]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let d = self.dim;
        self.data[((i * d + j) * d + k) * d + l] = v;
    }

    /// `R(u, v)w`.
    pub fn apply(&self, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            s += self.get(i, j, k, l) * w[j] * u[k] * v[l];
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// `Ric_{jl} = R^i_{jil}`.
    pub fn ricci(&self) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |j, l| (0..d).map(|i| self.get(i, j, i, l)).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest `|R^i_{jkl} + R^i_{jlk}|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        m = m.max((self.get(i, j, k, l) + self.get(i, j, l, k)).abs());
                    }
                }
            }
        }
        m
    }
}

/// Curvature of a metric: Riemann and Ricci tensors as evaluable fields.
///
/// Christoffel symbols are differentiated with `outer`; the Christoffel
/// symbols themselves use `inner` when the metric has no analytic partials.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    metric: Metric,
    inner: FdConfig,
    outer: FdConfig,
}

impl CurvatureData {
    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    /// Coordinate margin needed by the nested stencils.
    pub fn margin(&self) -> f64 {
        let f = self.metric.field();
        if f.has_second_partials() && f.provenance() == crate::chart_core::Provenance::Analytic {
            0.0
        } else {
            self.outer.reach() + self.metric.christoffel_margin(&self.inner)
        }
    }

    pub fn christoffel_at(&self, p: &[f64]) -> Result<Christoffel> {
        christoffel(&self.metric, &self.inner).eval(p)
    }

    fn christoffel_derivatives(&self, p: &[f64]) -> Result<Vec<Christoffel>> {
        let field = christoffel(&self.metric, &self.inner);
        if let Some(res) = field.analytic_derivatives(p) {
            return res;
        }
        let domain = self.metric.domain();
        if !domain.contains_with_margin(p, self.outer.reach()) {
            return Err(Error::OutOfDomain { point: p.to_vec() });
        }
        let d = p.len();
        let mut out = Vec::with_capacity(d);
        for axis in 0..d {
            let h = self.outer.step();
            let at = |delta: f64| -> Result<Christoffel> {
                let mut q = p.to_vec();
                q[axis] += delta;
                field.eval(&q)
            };
            let c = match self.outer.order() {
                crate::chart_core::FdOrder::Second => (at(h)? - at(-h)?) * (0.5 / h),
                crate::chart_core::FdOrder::Fourth => {
                    (at(h)? - at(-h)?) * (8.0 / (12.0 * h))
                        + (at(-2.0 * h)? - at(2.0 * h)?) * (1.0 / (12.0 * h))
                }
            };
            out.push(c);
        }
        Ok(out)
    }

    /// `R^i_{jkl} = ∂_k Γ^i_{lj} − ∂_l Γ^i_{kj} + Γ^i_{km}Γ^m_{lj} − Γ^i_{lm}Γ^m_{kj}`.
    pub fn riemann(&self, p: &[f64]) -> Result<Riemann> {
        let g = self.christoffel_at(p)?;
        let dg = self.christoffel_derivatives(p)?;
        let d = p.len();
        let mut r = Riemann::zeros(d);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut v = dg[k].get(i, l, j) - dg[l].get(i, k, j);
                        for m in 0..d {
                            v += g.get(i, k, m) * g.get(m, l, j) - g.get(i, l, m) * g.get(m, k, j);
                        }
                        r.set(i, j, k, l, v);
                    }
                }
            }
        }
        Ok(r)
    }

    pub fn ricci(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.riemann(p)?.ricci())
    }
}

/// Curvature data of `metric`; `cfg` is the step used to differentiate the
/// Christoffel symbols (default [`FdConfig::second_derivative`]).
pub fn curvature(metric: &Metric, cfg: &FdConfig) -> CurvatureData {
    CurvatureData {
        metric: metric.clone(),
        inner: FdConfig::first_derivative(),
        outer: *cfg,
    }
}

/// `K(u,v) = g(R(u,v)v, u) / (g(u,u)g(v,v) − g(u,v)²)`.
pub fn sectional_curvature(
    curv: &CurvatureData,
    metric: &Metric,
    point: &[f64],
    u: &[f64],
    v: &[f64],
) -> Result<f64> {
    let g = metric.eval(point);
    let gram = bilinear(&g, u, u) * bilinear(&g, v, v) - bilinear(&g, u, v).powi(2);
    if gram.abs() <= 1e-10 {
        return Err(Error::DegeneratePlane { gram });
    }
    let r = curv.riemann(point)?;
    let rv = r.apply(u, v, v);
    Ok(bilinear(&g, &rv, u) / gram)
}

/// One sample of an integrated curve.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSample {
    pub t: f64,
    pub point: Point,
    pub velocity: Vec<f64>,
    /// Coordinate acceleration from the integrator state, when known.
    pub acceleration: Option<Vec<f64>>,
}

/// Time-stamped (point, velocity) samples of a curve.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicPath {
    pub samples: Vec<GeodesicSample>,
    pub step: f64,
    /// Set when integration stopped early because the curve left the chart.
    pub truncated: bool,
}

impl GeodesicPath {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&GeodesicSample> {
        self.samples.last()
    }

    /// CSV with columns `t, x_1..x_d, v_1..v_d`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let d = self.samples.first().map_or(0, |s| s.point.len());
        let mut out = String::from("t");
        for i in 1..=d {
            let _ = write!(out, ",x_{i}");
        }
        for i in 1..=d {
            let _ = write!(out, ",v_{i}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{:.16e}", s.t);
            for x in s.point.iter().chain(&s.velocity) {
                let _ = write!(out, ",{x:.16e}");
            }
            out.push('\n');
        }
        out
    }

    /// Image of the curve under a chart map with differential `df`. The
    /// acceleration is dropped because it needs second derivatives.
    pub fn map_through(
        &self,
        f: impl Fn(&[f64]) -> Point,
        df: impl Fn(&[f64]) -> DMatrix<f64>,
    ) -> GeodesicPath {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let jac = df(&s.point);
                let v = &jac * DVector::from_column_slice(&s.velocity);
                GeodesicSample {
                    t: s.t,
                    point: f(&s.point),
                    velocity: v.iter().copied().collect(),
                    acceleration: None,
                }
            })
            .collect();
        GeodesicPath {
            samples,
            step: self.step,
            truncated: self.truncated,
        }
    }

    /// Reparameterization `t = s(τ)` given `s⁻¹`, `s'` and `s''` (as functions
    /// of τ). Velocities and accelerations transform by the chain rule, so
    /// the curve must carry accelerations.
    pub fn reparameterize(
        &self,
        s_inv: impl Fn(f64) -> f64,
        ds: impl Fn(f64) -> f64,
        d2s: impl Fn(f64) -> f64,
    ) -> Option<GeodesicPath> {
        let mut samples = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let a = s.acceleration.as_ref()?;
            let tau = s_inv(s.t);
            let (sp, spp) = (ds(tau), d2s(tau));
            samples.push(GeodesicSample {
                t: tau,
                point: s.point.clone(),
                velocity: s.velocity.iter().map(|v| sp * v).collect(),
                acceleration: Some(
                    s.velocity
                        .iter()
                        .zip(a)
                        .map(|(v, a)| spp * v + sp * sp * a)
                        .collect(),
                ),
            });
        }
        Some(GeodesicPath {
            samples,
            step: self.step,
            truncated: self.truncated,
        })
    }

    /// Largest `|g(ẋ,ẋ)(t) − g(ẋ,ẋ)(0)|` along the path.
    pub fn energy_drift(&self, metric: &Metric) -> f64 {
        let Some(first) = self.samples.first() else {
            return 0.0;
        };
        let e0 = metric.inner(&first.point, &first.velocity, &first.velocity);
        self.samples
            .iter()
            .map(|s| (metric.inner(&s.point, &s.velocity, &s.velocity) - e0).abs())
            .fold(0.0, f64::max)
    }
}

fn geodesic_rhs(conn: &ChristoffelField, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    Ok(conn
        .eval(x)?
        .contract(v, v)
        .into_iter()
        .map(|a| -a)
        .collect())
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| xi + a * yi).collect()
}

fn integrate_impl(
    metric: &Metric,
    start: &[f64],
    velocity: &[f64],
    t_end: f64,
    step: f64,
) -> Result<GeodesicPath> {
    if !(step > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need step > 0 and t_end >= 0, got {step}, {t_end}"
        )));
    }
    metric.domain().check_point(start)?;
    if velocity.len() != start.len() {
        return Err(Error::DimensionMismatch {
            expected: start.len(),
            got: velocity.len(),
        });
    }
    let cfg = FdConfig::first_derivative();
    let conn = christoffel(metric, &cfg);
    let margin = metric.christoffel_margin(&cfg);
    let domain = metric.domain().clone();
    let inside = |x: &[f64]| domain.contains_with_margin(x, margin);
    if !inside(start) {
        return Err(Error::OutOfDomain {
            point: start.to_vec(),
        });
    }
    let n_steps = (t_end / step).round() as usize;
    let mut x = start.to_vec();
    let mut v = velocity.to_vec();
    let mut a = geodesic_rhs(&conn, &x, &v)?;
    let mut samples = vec![GeodesicSample {
        t: 0.0,
        point: x.clone(),
        velocity: v.clone(),
        acceleration: Some(a.clone()),
    }];
    for n in 0..n_steps {
        let t = n as f64 * step;
        let stage = |xs: &[f64], vs: &[f64]| -> Option<Result<Vec<f64>>> {
            if !inside(xs) {
                return None;
            }
            Some(geodesic_rhs(&conn, xs, vs))
        };
        let left = || Error::LeftDomain {
            t,
            partial: Box::new(GeodesicPath {
                samples: samples.clone(),
                step,
                truncated: true,
            }),
        };
        let (k1x, k1v) = (v.clone(), a.clone());
        let x2 = axpy(&x, 0.5 * step, &k1x);
        let v2 = axpy(&v, 0.5 * step, &k1v);
        let k2v = match stage(&x2, &v2) {
            Some(r) => r?,
            None => return Err(left()),
        };
        let x3 = axpy(&x, 0.5 * step, &v2);
        let v3 = axpy(&v, 0.5 * step, &k2v);
        let k3v = match stage(&x3, &v3) {
            Some(r) => r?,
            None => return Err(left()),
        };
        let x4 = axpy(&x, step, &v3);
        let v4 = axpy(&v, step, &k3v);
        let k4v = match stage(&x4, &v4) {
            Some(r) => r?,
            None => return Err(left()),
        };
        let nx: Vec<f64> = (0..x.len())
            .map(|i| x[i] + step / 6.0 * (k1x[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]))
            .collect();
        let nv: Vec<f64> = (0..v.len())
            .map(|i| v[i] + step / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]))
            .collect();
        let na = match stage(&nx, &nv) {
            Some(r) => r?,
            None => return Err(left()),
        };
        x = nx;
        v = nv;
        a = na;
        samples.push(GeodesicSample {
            t: (n + 1) as f64 * step,
            point: x.clone(),
            velocity: v.clone(),
            acceleration: Some(a.clone()),
        });
    }
    Ok(GeodesicPath {
        samples,
        step,
        truncated: false,
    })
}

fn check_energy(path: GeodesicPath, metric: &Metric) -> Result<GeodesicPath> {
    let drift = path.energy_drift(metric);
    let e0 = path.samples.first().map_or(0.0, |s| {
        metric.inner(&s.point, &s.velocity, &s.velocity).abs()
    });
    if drift > 1e-3 * e0.max(1.0) {
        return Err(Error::StepTooLarge { drift });
    }
    Ok(path)
}

/// Fixed-step RK4 integration of `ẍ^k + Γ^k_{ij} ẋ^i ẋ^j = 0`.
///
/// Leaving the chart (including the finite-difference margin) yields
/// [`Error::LeftDomain`] carrying the partial path.
pub fn geodesic_integrate(
    metric: &Metric,
    start: &[f64],
    velocity: &[f64],
    t_end: f64,
    step: f64,
) -> Result<GeodesicPath> {
    match integrate_impl(metric, start, velocity, t_end, step) {
        Ok(path) => check_energy(path, metric),
        Err(Error::LeftDomain { t, partial }) => check_energy(*partial, metric).map(|p| {
            Err(Error::LeftDomain {
                t,
                partial: Box::new(p),
            })
        })?,
        Err(e) => Err(e),
    }
}

/// Like [`geodesic_integrate`] but returns the partial path, flagged as
/// truncated, when the curve leaves the chart.
pub fn geodesic_integrate_truncating(
    metric: &Metric,
    start: &[f64],
    velocity: &[f64],
    t_end: f64,
    step: f64,
) -> Result<GeodesicPath> {
    match geodesic_integrate(metric, start, velocity, t_end, step) {
        Err(Error::LeftDomain { partial, .. }) => Ok(*partial),
        other => other,
    }
}

/// Integrates a batch of launches `(start, velocity)` in parallel; output
/// order follows input order.
pub fn geodesic_batch(
    metric: &Metric,
    launches: &[(Point, Vec<f64>)],
    t_end: f64,
    step: f64,
) -> Vec<Result<GeodesicPath>> {
    launches
        .par_iter()
        .map(|(x, v)| geodesic_integrate_truncating(metric, x, v, t_end, step))
        .collect()
}

/// `n` seeded launches: points at least `margin` inside the chart and random
/// directions scaled to unit `metric`-speed.
pub fn random_launches(metric: &Metric, n: usize, seed: u64, margin: f64) -> Vec<(Point, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = metric.dim();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = metric.domain().sample_interior(&mut rng, margin);
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let speed = metric.inner(&x, &v, &v).abs().sqrt();
        if speed < 1e-3 {
            continue;
        }
        out.push((x, v.into_iter().map(|c| c / speed).collect()));
    }
    out
}

/// Outcome of [`geodesic_sharing`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SharingReport {
    /// Largest residual over all tested paths.
    pub max_residual: f64,
    pub paths: usize,
    /// Paths left out because they exited the chart before five samples.
    pub too_short: usize,
}

/// Integrates `n` seeded geodesics of `source`, optionally maps them through
/// `image = (f, Df)`, and tests each against `other` with
/// [`unparam_geodesic_residual`].
pub fn geodesic_sharing(
    source: &Metric,
    other: &Metric,
    image: Option<&crate::chart_core::DiffeoOnChart>,
    n: usize,
    seed: u64,
    t_end: f64,
    step: f64,
) -> Result<SharingReport> {
    let width = source.domain().bounds().iter().map(|(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min);
    let launches = random_launches(source, n, seed, 0.05 * width);
    let cfg = FdConfig::first_derivative();
    let results: Vec<Result<Option<f64>>> = geodesic_batch(source, &launches, t_end, step)
        .into_par_iter()
        .map(|path| {
            let path = path?;
            let path = match image {
                Some(f) => path.map_through(|p| f.forward(p), |p| f.differential(p)),
                None => path,
            };
            match unparam_geodesic_residual(&path, other, &cfg) {
                Ok(r) => Ok(Some(r.value)),
                Err(Error::TooFewSamples { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut report = SharingReport { max_residual: 0.0, paths: 0, too_short: 0 };
    for r in results {
        match r? {
            Some(v) => {
                report.max_residual = report.max_residual.max(v);
                report.paths += 1;
            }
            None => report.too_short += 1,
        }
    }
    Ok(report)
}

/// Outcome of [`unparam_geodesic_residual`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualReport {
    /// Max over used samples of the normalized transverse acceleration.
    pub value: f64,
    pub used: usize,
    /// Samples skipped because the velocity is (near) null for the test metric.
    pub excluded_near_null: usize,
}

fn fd_accelerations(path: &GeodesicPath) -> Vec<Option<Vec<f64>>> {
    let s = &path.samples;
    let n = s.len();
    let mut out = vec![None; n];
    let dt0 = s[1].t - s[0].t;
    let uniform = s
        .windows(2)
        .all(|w| ((w[1].t - w[0].t) - dt0).abs() <= 1e-9 * dt0.abs());
    if uniform && n >= 5 {
        for i in 2..n - 2 {
            let acc = (0..s[i].velocity.len())
                .map(|k| {
                    (8.0 * (s[i + 1].velocity[k] - s[i - 1].velocity[k])
                        - (s[i + 2].velocity[k] - s[i - 2].velocity[k]))
                        / (12.0 * dt0)
                })
                .collect();
            out[i] = Some(acc);
        }
    } else {
        for i in 1..n - 1 {
            let h1 = s[i].t - s[i - 1].t;
            let h2 = s[i + 1].t - s[i].t;
            let acc = (0..s[i].velocity.len())
                .map(|k| {
                    (h1 * h1 * s[i + 1].velocity[k] - h2 * h2 * s[i - 1].velocity[k]
                        + (h2 * h2 - h1 * h1) * s[i].velocity[k])
                        / (h1 * h2 * (h1 + h2))
                })
                .collect();
            out[i] = Some(acc);
        }
    }
    out
}

/// Measures how far `candidate` is from being an unparameterized geodesic of
/// `other`.
///
/// With `A = c̈ + Γ_other(ċ, ċ)` and `A_⊥` its `other`-orthogonal component
/// relative to `ċ`, the per-sample value is
/// `‖A_⊥‖ / max(‖A‖, ‖c̈‖, ‖Γ_other(ċ,ċ)‖, 1e-12)` (Euclidean norms). The
/// denominator keeps the ratio meaningful when `A` itself vanishes, as it
/// does for metrics with the same connection. Samples with
/// `|g(ċ,ċ)| < 1e-8‖ċ‖²` are excluded and counted.
pub fn unparam_geodesic_residual(
    candidate: &GeodesicPath,
    other: &Metric,
    cfg: &FdConfig,
) -> Result<ResidualReport> {
    let n = candidate.samples.len();
    if n < 5 {
        return Err(Error::TooFewSamples { needed: 5, got: n });
    }
    let conn = christoffel(other, cfg);
    let accels: Vec<Option<Vec<f64>>> =
        if candidate.samples.iter().all(|s| s.acceleration.is_some()) {
            candidate
                .samples
                .iter()
                .map(|s| s.acceleration.clone())
                .collect()
        } else {
            fd_accelerations(candidate)
        };
    let mut value: f64 = 0.0;
    let mut used = 0;
    let mut excluded = 0;
    for (s, acc) in candidate.samples.iter().zip(accels) {
        let Some(acc) = acc else { continue };
        let g = other.eval(&s.point);
        let v = &s.velocity;
        let gvv = bilinear(&g, v, v);
        let vn = euclid_norm(v);
        if gvv.abs() < 1e-8 * vn * vn || vn == 0.0 {
            excluded += 1;
            continue;
        }
        let gamma_vv = conn.eval(&s.point)?.contract(v, v);
        let a: Vec<f64> = acc.iter().zip(&gamma_vv).map(|(x, y)| x + y).collect();
        let coeff = bilinear(&g, &a, v) / gvv;
        let perp: Vec<f64> = a.iter().zip(v).map(|(ai, vi)| ai - coeff * vi).collect();
        let denom = euclid_norm(&a)
            .max(euclid_norm(&acc))
            .max(euclid_norm(&gamma_vv))
            .max(1e-12);
        value = value.max(euclid_norm(&perp) / denom);
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateVelocity { excluded });
    }
    Ok(ResidualReport {
        value,
        used,
        excluded_near_null: excluded,
    })
}

/// The metric `dr² + δ(r)·fiber` on the product chart `[r] × fiber`.
///
/// `delta` lives on a one-dimensional chart. Analytic derivatives are
/// assembled when `delta` and the fiber provide them.
pub fn warped_product_metric(delta: &ScalarField, fiber: &Metric) -> Result<Metric> {
    if delta.domain().dim() != 1 {
        return Err(Error::InvalidConfig(
            "warp factor must live on a 1-dimensional chart".into(),
        ));
    }
    for p in delta.domain().grid_points(delta.domain().grid_res()) {
        let value = delta.eval(&p);
        if !(value > 0.0) {
            return Err(Error::NonPositiveWarp { r: p[0], value });
        }
    }
    let domain = delta.domain().product(fiber.domain());
    let n = fiber.dim();
    let d = n + 1;
    let embed = move |block: &DMatrix<f64>, rr: f64| {
        let mut m = DMatrix::zeros(d, d);
        m[(0, 0)] = rr;
        m.view_mut((1, 1), (n, n)).copy_from(block);
        m
    };
    let (dl, fb) = (delta.clone(), fiber.clone());
    let mut field = MatrixField::new(domain, move |p| {
        embed(&(fb.eval(&p[1..]) * dl.eval(&p[..1])), 1.0)
    });
    let probe = fiber.domain().center();
    let fiber_analytic = fiber.field().analytic_partials(&probe).is_some();
    if delta.analytic_gradient(&[0.0]).is_some() && fiber_analytic {
        let (dl, fb) = (delta.clone(), fiber.clone());
        field = field.with_partials(move |p| {
            let (r, th) = (&p[..1], &p[1..]);
            let big_g = fb.eval(th);
            let dfib = fb.field().analytic_partials(th).unwrap();
            let dr = dl.analytic_gradient(r).unwrap()[0];
            let dv = dl.eval(r);
            let mut out = vec![embed(&(&big_g * dr), 0.0)];
            out.extend(dfib.iter().map(|m| embed(&(m * dv), 0.0)));
            out
        });
        if delta.analytic_hessian(&[0.0]).is_some() && fiber.field().has_second_partials() {
            let (dl, fb) = (delta.clone(), fiber.clone());
            field = field.with_second_partials(move |p| {
                let (r, th) = (&p[..1], &p[1..]);
                let big_g = fb.eval(th);
                let dfib = fb.field().analytic_partials(th).unwrap();
                let ddfib = fb.field().analytic_second_partials(th).unwrap();
                let dv = dl.eval(r);
                let d1 = dl.analytic_gradient(r).unwrap()[0];
                let d2 = dl.analytic_hessian(r).unwrap()[(0, 0)];
                (0..d)
                    .map(|k| {
                        (0..d)
                            .map(|l| {
                                let block = match (k, l) {
                                    (0, 0) => &big_g * d2,
                                    (0, b) => &dfib[b - 1] * d1,
                                    (a, 0) => &dfib[a - 1] * d1,
                                    (a, b) => &ddfib[a - 1][b - 1] * dv,
                                };
                                embed(&block, 0.0)
                            })
                            .collect()
                    })
                    .collect()
            });
        }
    }
    let sig = fiber.signature();
    Metric::new(
        field,
        Signature {
            positive: sig.positive + 1,
            negative: sig.negative,
        },
    )
}
