//! Concrete models: Dini pairs, the involution example, constant-curvature
//! charts, Fubini–Study metrics with Veronese and Segre maps, and pullbacks.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::chart_core::{central_difference, ChartDomain, DiffeoOnChart, FdConfig, MatrixField, Point, ScalarField};
use crate::error::{Error, Result};
use crate::metric_geometry::{warped_product_metric, Metric, Signature};
use crate::projective_algebra::LTensor;

/// Samples per axis used for range and positivity checks.
const RANGE_SAMPLES: usize = 201;

/// A scalar function of one variable with analytic first and second
/// derivatives.
pub fn scalar_1d(
    lo: f64,
    hi: f64,
    f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> Result<ScalarField> {
    let domain = ChartDomain::new(vec![(lo, hi)], RANGE_SAMPLES)?;
    Ok(ScalarField::new(domain, move |p| f(p[0]))
        .with_gradient(move |p| vec![df(p[0])])
        .with_hessian(move |p| DMatrix::from_element(1, 1, d2f(p[0]))))
}

fn range_on(field: &ScalarField, lo: f64, hi: f64) -> (f64, f64) {
    (0..RANGE_SAMPLES)
        .map(|i| field.eval(&[lo + (hi - lo) * i as f64 / (RANGE_SAMPLES - 1) as f64]))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), v| (mn.min(v), mx.max(v)))
}

fn derivs(field: &ScalarField, t: f64) -> Option<(f64, f64, f64)> {
    let d1 = field.analytic_gradient(&[t])?[0];
    let d2 = field.analytic_hessian(&[t])?[(0, 0)];
    Some((field.eval(&[t]), d1, d2))
}

fn diag2(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
}

/// Two metrics in the normal form of projectively equivalent surfaces,
/// `g = (X − Y)(dx² + dy²)` and `ḡ = (1/Y − 1/X)(dx²/X + dy²/Y)`, with the
/// tensor `L = diag(X, Y)` of `ḡ` relative to `g`.
#[derive(Clone, Debug)]
pub struct DiniPair {
    pub g: Metric,
    pub g_bar: Metric,
    pub l: LTensor,
    pub x: ScalarField,
    pub y: ScalarField,
}

/// Builds the pair on `domain`; `x` and `y` are functions of one variable.
/// Analytic derivatives are attached when both carry them.
pub fn dini_pair(x: ScalarField, y: ScalarField, domain: ChartDomain) -> Result<DiniPair> {
    if domain.dim() != 2 || x.domain().dim() != 1 || y.domain().dim() != 1 {
        return Err(Error::InvalidConfig("Dini pairs live on 2-dimensional charts".into()));
    }
    let (xb, yb) = (domain.bounds()[0], domain.bounds()[1]);
    let (inf_x, _) = range_on(&x, xb.0, xb.1);
    let (inf_y, sup_y) = range_on(&y, yb.0, yb.1);
    if !(sup_y < inf_x) {
        return Err(Error::RangeOverlap { sup_y, inf_x });
    }
    if !(inf_y > 0.0) {
        return Err(Error::PositivityFailure(format!("Y must be positive, found {inf_y}")));
    }
    let analytic = derivs(&x, xb.0).is_some() && derivs(&y, yb.0).is_some();

    let (x1, y1) = (x.clone(), y.clone());
    let mut g = MatrixField::new(domain.clone(), move |p| {
        DMatrix::identity(2, 2) * (x1.eval(&p[..1]) - y1.eval(&p[1..]))
    });
    let (x2, y2) = (x.clone(), y.clone());
    let mut g_bar = MatrixField::new(domain.clone(), move |p| {
        let (u, v) = (1.0 / x2.eval(&p[..1]), 1.0 / y2.eval(&p[1..]));
        diag2(u * v - u * u, v * v - u * v)
    });
    let (x3, y3) = (x.clone(), y.clone());
    let mut l = MatrixField::new(domain.clone(), move |p| diag2(x3.eval(&p[..1]), y3.eval(&p[1..])));

    if analytic {
        let (xa, ya) = (x.clone(), y.clone());
        let both = move |p: &[f64]| (derivs(&xa, p[0]).unwrap(), derivs(&ya, p[1]).unwrap());
        let b1 = both.clone();
        g = g
            .with_partials(move |p| {
                let ((_, x1, _), (_, y1, _)) = b1(p);
                vec![DMatrix::identity(2, 2) * x1, DMatrix::identity(2, 2) * -y1]
            })
            .with_second_partials({
                let b = both.clone();
                move |p| {
                    let ((_, _, x2), (_, _, y2)) = b(p);
                    let z = DMatrix::zeros(2, 2);
                    vec![vec![DMatrix::identity(2, 2) * x2, z.clone()], vec![z, DMatrix::identity(2, 2) * -y2]]
                }
            });
        // with u = 1/X, v = 1/Y: ḡ = diag(uv − u², v² − uv)
        let inv = |(f, f1, f2): (f64, f64, f64)| {
            (1.0 / f, -f1 / (f * f), (2.0 * f1 * f1 - f * f2) / (f * f * f))
        };
        let b2 = both.clone();
        g_bar = g_bar
            .with_partials(move |p| {
                let (xs, ys) = b2(p);
                let ((u, u1, _), (v, v1, _)) = (inv(xs), inv(ys));
                vec![diag2(u1 * v - 2.0 * u * u1, -u1 * v), diag2(u * v1, 2.0 * v * v1 - u * v1)]
            })
            .with_second_partials({
                let b = both.clone();
                move |p| {
                    let (xs, ys) = b(p);
                    let ((u, u1, u2), (v, v1, v2)) = (inv(xs), inv(ys));
                    let xy = diag2(u1 * v1, -u1 * v1);
                    vec![
                        vec![diag2(u2 * v - 2.0 * (u1 * u1 + u * u2), -u2 * v), xy.clone()],
                        vec![xy, diag2(u * v2, 2.0 * (v1 * v1 + v * v2) - u * v2)],
                    ]
                }
            });
        l = l.with_partials(move |p| {
            let ((_, x1, _), (_, y1, _)) = both(p);
            vec![diag2(x1, 0.0), diag2(0.0, y1)]
        });
    }
    let g = Metric::riemannian(g);
    let g_bar = Metric::riemannian(g_bar);
    let l = LTensor::new(l, &g)?;
    Ok(DiniPair { g, g_bar, l, x, y })
}

/// `X = 4 + sin x`, `Y = 1.5 + 0.4 sin y` on `[0, 2π]²`.
pub fn dini_default(grid_res: usize) -> Result<DiniPair> {
    let x = scalar_1d(0.0, 2.0 * PI, |t| 4.0 + t.sin(), |t| t.cos(), |t| -t.sin())?;
    let y = scalar_1d(0.0, 2.0 * PI, |t| 1.5 + 0.4 * t.sin(), |t| 0.4 * t.cos(), |t| -0.4 * t.sin())?;
    dini_pair(x, y, ChartDomain::cube(2, 0.0, 2.0 * PI, grid_res)?)
}

/// The metric `(a(x) − 1/a(y))(√a(x) dx² + dy²/√a(y))`, the coordinate swap
/// that maps it to a projectively equivalent metric, and the tensor
/// `diag(a(x), 1/a(y))` relating the two.
#[derive(Clone, Debug)]
pub struct MatveevExample {
    pub g: Metric,
    pub sigma: DiffeoOnChart,
    pub l: LTensor,
}

/// Builds the example on a square `domain = I × I`, `a` a function on `I`.
pub fn matveev_example(a: ScalarField, domain: ChartDomain) -> Result<MatveevExample> {
    if domain.dim() != 2 || domain.bounds()[0] != domain.bounds()[1] {
        return Err(Error::InvalidConfig("the swap needs a square 2-dimensional chart".into()));
    }
    let (lo, hi) = domain.bounds()[0];
    let (inf_a, _) = range_on(&a, lo, hi);
    if !(inf_a > 0.0) {
        return Err(Error::PositivityFailure(format!("a must be positive, found {inf_a}")));
    }
    if !(inf_a > 1.0 / inf_a) {
        return Err(Error::PositivityFailure(format!(
            "inf a = {inf_a} must exceed sup 1/a = {}",
            1.0 / inf_a
        )));
    }
    let a1 = a.clone();
    let mut g = MatrixField::new(domain.clone(), move |p| {
        let (ax, ay) = (a1.eval(&p[..1]), a1.eval(&p[1..]));
        diag2((ax - 1.0 / ay) * ax.sqrt(), (ax - 1.0 / ay) / ay.sqrt())
    });
    if derivs(&a, lo).is_some() {
        let a2 = a.clone();
        g = g.with_partials(move |p| {
            let (ax, ax1, _) = derivs(&a2, p[0]).unwrap();
            let (ay, ay1, _) = derivs(&a2, p[1]).unwrap();
            let (b, b1) = (1.0 / ay, -ay1 / (ay * ay));
            let (s, s1) = (ax.sqrt(), ax1 / (2.0 * ax.sqrt()));
            let (t, t1) = (b.sqrt(), b1 / (2.0 * b.sqrt()));
            let pp = ax - b;
            vec![diag2(ax1 * s + pp * s1, ax1 * t), diag2(-b1 * s, -b1 * t + pp * t1)]
        });
    }
    let a3 = a.clone();
    let l = MatrixField::new(domain.clone(), move |p| diag2(a3.eval(&p[..1]), 1.0 / a3.eval(&p[1..])));
    let g = Metric::riemannian(g);
    let l = LTensor::new(l, &g)?;
    let swap = |p: &[f64]| vec![p[1], p[0]];
    let sigma = DiffeoOnChart::new(domain, swap, swap)
        .with_differential(|_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    Ok(MatveevExample { g, sigma, l })
}

/// `a(t) = 3 + sin t` on `[0, 2π]²`.
pub fn matveev_default(grid_res: usize) -> Result<MatveevExample> {
    let a = scalar_1d(0.0, 2.0 * PI, |t| 3.0 + t.sin(), |t| t.cos(), |t| -t.sin())?;
    matveev_example(a, ChartDomain::cube(2, 0.0, 2.0 * PI, grid_res)?)
}

/// Flat metric on `[−1, 1]^d` (`kappa = 0`), the stereographic sphere
/// `4/(1 + |x|²)² Id` on `[−1, 1]^d` (`kappa = 1`), or the half-space model
/// `Id / x_d²` with `x_d ∈ [0.5, 2]` and the other coordinates in `[−1, 1]`
/// (`kappa = −1`).
pub fn constant_curvature_chart(d: usize, kappa: i32) -> Result<Metric> {
    if d < 2 {
        return Err(Error::DimensionTooLow { dim: d });
    }
    match kappa {
        0 => Ok(Metric::flat(ChartDomain::cube(d, -1.0, 1.0, 21)?)),
        1 => Ok(Metric::conformally_flat(stereographic_factor(ChartDomain::cube(d, -1.0, 1.0, 21)?))),
        -1 => {
            let mut bounds = vec![(-1.0, 1.0); d];
            bounds[d - 1] = (0.5, 2.0);
            let domain = ChartDomain::new(bounds, 21)?;
            let factor = ScalarField::new(domain, move |p| p[d - 1].powi(-2))
                .with_gradient(move |p| {
                    let mut g = vec![0.0; d];
                    g[d - 1] = -2.0 * p[d - 1].powi(-3);
                    g
                })
                .with_hessian(move |p| {
                    let mut h = DMatrix::zeros(d, d);
                    h[(d - 1, d - 1)] = 6.0 * p[d - 1].powi(-4);
                    h
                });
            Ok(Metric::conformally_flat(factor))
        }
        _ => Err(Error::InvalidConfig(format!("curvature sign must be -1, 0 or 1, got {kappa}"))),
    }
}

/// The stereographic sphere with its factor multiplied by `1 + 0.1 x₁²`, a
/// conformally flat metric of non-constant curvature on `[−1, 1]^d`. Its
/// derivatives are taken by finite differences.
pub fn perturbed_sphere(d: usize) -> Result<Metric> {
    if d < 2 {
        return Err(Error::DimensionTooLow { dim: d });
    }
    let domain = ChartDomain::cube(d, -1.0, 1.0, 21)?;
    let base = stereographic_factor(domain.clone());
    Ok(Metric::conformally_flat(ScalarField::new(domain, move |p| (1.0 + 0.1 * p[0] * p[0]) * base.eval(p))))
}

/// The round unit sphere in polar form `dr² + sin²(r) dΩ²_{d−1}`, built as a
/// tower of warped products over a circle coordinate. Polar angles range over
/// `[0.4, π − 0.4]`, the last angle over `[0, 2π]`.
pub fn sphere_polar(d: usize) -> Result<Metric> {
    if d < 2 {
        return Err(Error::DimensionTooLow { dim: d });
    }
    let warp = || -> Result<ScalarField> {
        Ok(ScalarField::new(ChartDomain::new(vec![(0.4, PI - 0.4)], 21)?, |p| p[0].sin().powi(2))
            .with_gradient(|p| vec![(2.0 * p[0]).sin()])
            .with_hessian(|p| DMatrix::from_element(1, 1, 2.0 * (2.0 * p[0]).cos())))
    };
    let mut metric = Metric::flat(ChartDomain::new(vec![(0.0, 2.0 * PI)], 21)?);
    for _ in 1..d {
        metric = warped_product_metric(&warp()?, &metric)?;
    }
    Ok(metric)
}

/// `(x, y) ↦ (x + 0.1 sin πx, y + 0.04 sin(πy)(1 + x))`, a diffeomorphism of
/// `[−1, 1]²` onto itself fixing the boundary; inverted by Newton iteration.
pub fn sine_shear_diffeo(grid_res: usize) -> Result<DiffeoOnChart> {
    let domain = ChartDomain::cube(2, -1.0, 1.0, grid_res)?;
    let fwd = |p: &[f64]| {
        vec![p[0] + 0.1 * (PI * p[0]).sin(), p[1] + 0.04 * (PI * p[1]).sin() * (1.0 + p[0])]
    };
    let newton = |target: f64, f: &dyn Fn(f64) -> (f64, f64)| {
        let mut t = target;
        for _ in 0..100 {
            let (v, dv) = f(t);
            let step = (v - target) / dv;
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        t
    };
    let inv = move |q: &[f64]| {
        let x = newton(q[0], &|t| (t + 0.1 * (PI * t).sin(), 1.0 + 0.1 * PI * (PI * t).cos()));
        let c = 0.04 * (1.0 + x);
        let y = newton(q[1], &|t| (t + c * (PI * t).sin(), 1.0 + c * PI * (PI * t).cos()));
        vec![x, y]
    };
    Ok(DiffeoOnChart::new(domain, fwd, inv).with_differential(|p| {
        let cx = (PI * p[0]).cos();
        let (sy, cy) = (PI * p[1]).sin_cos();
        DMatrix::from_row_slice(
            2,
            2,
            &[1.0 + 0.1 * PI * cx, 0.0, 0.04 * sy, 1.0 + 0.04 * PI * cy * (1.0 + p[0])],
        )
    }))
}

/// The conformal factor `4/(1 + |x|²)²` of the stereographic unit sphere.
pub fn stereographic_factor(domain: ChartDomain) -> ScalarField {
    let r2 = |p: &[f64]| 1.0 + p.iter().map(|x| x * x).sum::<f64>();
    ScalarField::new(domain, move |p| 4.0 / r2(p).powi(2))
        .with_gradient(move |p| {
            let s = r2(p);
            p.iter().map(|x| -16.0 * x / s.powi(3)).collect()
        })
        .with_hessian(move |p| {
            let s = r2(p);
            let d = p.len();
            DMatrix::from_fn(d, d, |i, j| {
                let delta = if i == j { -16.0 / s.powi(3) } else { 0.0 };
                delta + 96.0 * p[i] * p[j] / s.powi(4)
            })
        })
}

/// Complex coordinates from interleaved real ones `(Re z₁, Im z₁, …)`.
pub fn complexify(p: &[f64]) -> Vec<Complex64> {
    p.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

pub fn realify(z: &[Complex64]) -> Point {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// Real `2m × 2n` Jacobian of a holomorphic map with complex Jacobian `j`.
pub fn realify_jacobian(j: &DMatrix<Complex64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2 * j.nrows(), 2 * j.ncols());
    for r in 0..j.nrows() {
        for c in 0..j.ncols() {
            let w = j[(r, c)];
            out[(2 * r, 2 * c)] = w.re;
            out[(2 * r, 2 * c + 1)] = -w.im;
            out[(2 * r + 1, 2 * c)] = w.im;
            out[(2 * r + 1, 2 * c + 1)] = w.re;
        }
    }
    out
}

/// An affine chart `{Z_index = 1}` of complex projective `n`-space, realified
/// to the box `[−w, w]^{2n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectiveChart {
    pub n: usize,
    pub index: usize,
    pub half_width: f64,
}

impl ProjectiveChart {
    pub fn new(n: usize, index: usize, half_width: f64) -> Result<Self> {
        if n < 1 || index > n || !(half_width > 0.0) {
            return Err(Error::InvalidConfig(format!("bad projective chart n={n}, index={index}, w={half_width}")));
        }
        Ok(Self { n, index, half_width })
    }

    pub fn domain(&self) -> Result<ChartDomain> {
        ChartDomain::cube(2 * self.n, -self.half_width, self.half_width, 11)
    }

    /// Homogeneous coordinates with a 1 in slot `index`.
    pub fn lift(&self, p: &[f64]) -> Vec<Complex64> {
        let mut z = complexify(p);
        z.insert(self.index, Complex64::new(1.0, 0.0));
        z
    }

    /// Inverse of [`lift`](Self::lift); fails where `Z_index = 0`.
    pub fn dehomogenize(&self, z: &[Complex64]) -> Result<Point> {
        let pivot = z[self.index];
        if pivot.norm() < 1e-300 {
            return Err(Error::OutOfDomain { point: realify(z) });
        }
        let affine: Vec<Complex64> =
            z.iter().enumerate().filter(|(i, _)| *i != self.index).map(|(_, w)| w / pivot).collect();
        Ok(realify(&affine))
    }

    pub fn metric(&self) -> Result<Metric> {
        Ok(fubini_study_on(self.domain()?))
    }
}

/// Fubini–Study metric `∂∂̄ log(1 + |z|²)` on the affine chart `index` of
/// complex projective `n`-space, realified on `[−1, 1]^{2n}`. For `n = 1`
/// this is the round sphere of radius ½.
pub fn fubini_study(n: usize, index: usize) -> Result<Metric> {
    ProjectiveChart::new(n, index, 1.0)?.metric()
}

/// The realified Fubini–Study metric on an arbitrary box of `ℂⁿ`.
pub fn fubini_study_on(domain: ChartDomain) -> Metric {
    Metric::riemannian(MatrixField::new(domain, |p| {
        let z = complexify(p);
        let n = z.len();
        let s = 1.0 + z.iter().map(|w| w.norm_sqr()).sum::<f64>();
        let h = DMatrix::from_fn(n, n, |i, j| {
            let delta = if i == j { s } else { 0.0 };
            (Complex64::new(delta, 0.0) - z[i].conj() * z[j]) / (s * s)
        });
        // g(e_p, e_q) = Re Σ h_ij ê_p,i conj(ê_q,j) with ê = 1 or i per slot
        let unit = |p: usize| if p % 2 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
        DMatrix::from_fn(2 * n, 2 * n, |p, q| (h[(p / 2, q / 2)] * unit(p) * unit(q).conj()).re)
    }))
}

type PointMap = Arc<dyn Fn(&[f64]) -> Point + Send + Sync>;
type JacobianMap = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A smooth map from a chart into `ℝ^target_dim`, optionally with an analytic
/// Jacobian.
#[derive(Clone)]
pub struct SmoothMap {
    source: ChartDomain,
    target_dim: usize,
    map: PointMap,
    jacobian: Option<JacobianMap>,
}

impl std::fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMap")
            .field("source", &self.source)
            .field("target_dim", &self.target_dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl SmoothMap {
    pub fn new(source: ChartDomain, target_dim: usize, map: impl Fn(&[f64]) -> Point + Send + Sync + 'static) -> Self {
        Self { source, target_dim, map: Arc::new(map), jacobian: None }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    /// A holomorphic map between complex coordinate spaces, given by its
    /// values and complex Jacobian, realified.
    pub fn holomorphic(
        source: ChartDomain,
        target_complex_dim: usize,
        value: impl Fn(&[Complex64]) -> Vec<Complex64> + Send + Sync + 'static,
        jacobian: impl Fn(&[Complex64]) -> DMatrix<Complex64> + Send + Sync + 'static,
    ) -> Self {
        Self::new(source, 2 * target_complex_dim, move |p| realify(&value(&complexify(p))))
            .with_jacobian(move |p| realify_jacobian(&jacobian(&complexify(p))))
    }

    pub fn source(&self) -> &ChartDomain {
        &self.source
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn eval(&self, p: &[f64]) -> Point {
        (self.map)(p)
    }

    /// Analytic Jacobian when provided, else an order-4 central difference.
    pub fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(p);
        }
        let cfg = FdConfig::first_derivative();
        let mut out = DMatrix::zeros(self.target_dim, p.len());
        for axis in 0..p.len() {
            let col = central_difference(|q| DVector::from_vec(self.eval(q)), p, axis, &cfg);
            out.set_column(axis, &col);
        }
        out
    }

    /// `next ∘ self`; the image of `self` is taken as the source of `next`.
    pub fn then(&self, next: &SmoothMap) -> SmoothMap {
        let (a, b) = (self.clone(), next.clone());
        let (ja, jb) = (self.clone(), next.clone());
        SmoothMap::new(self.source.clone(), next.target_dim, move |p| b.eval(&a.eval(p)))
            .with_jacobian(move |p| jb.jacobian(&ja.eval(p)) * ja.jacobian(p))
    }

    /// `(p, q) ↦ (self(p), other(q))` on the product chart.
    pub fn product(&self, other: &SmoothMap) -> SmoothMap {
        let n1 = self.source.dim();
        let (a, b) = (self.clone(), other.clone());
        let (ja, jb) = (self.clone(), other.clone());
        let (t1, t2) = (self.target_dim, other.target_dim);
        SmoothMap::new(self.source.product(&other.source), t1 + t2, move |p| {
            let mut out = a.eval(&p[..n1]);
            out.extend(b.eval(&p[n1..]));
            out
        })
        .with_jacobian(move |p| {
            let (j1, j2) = (ja.jacobian(&p[..n1]), jb.jacobian(&p[n1..]));
            let mut out = DMatrix::zeros(t1 + t2, p.len());
            out.view_mut((0, 0), (t1, n1)).copy_from(&j1);
            out.view_mut((t1, n1), (t2, p.len() - n1)).copy_from(&j2);
            out
        })
    }
}

/// `(φ*g)(u, v) = g(Dφ u, Dφ v)` on the source chart of `map`. The image of a
/// grid of the source chart must lie in the target chart.
pub fn pullback_metric(map: &SmoothMap, target: &Metric) -> Result<Metric> {
    if map.target_dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: map.target_dim() });
    }
    for p in map.source().grid_points(map.source().grid_res().clamp(2, 7)) {
        let q = map.eval(&p);
        if !target.domain().contains_with_margin(&q, -1e-12) {
            return Err(Error::OutOfDomain { point: q });
        }
    }
    let (m, g) = (map.clone(), target.clone());
    let field = MatrixField::new(map.source().clone(), move |p| {
        let j = m.jacobian(p);
        let out = j.transpose() * g.eval(&m.eval(p)) * j;
        (&out + out.transpose()) * 0.5
    });
    let signature = if target.is_riemannian() {
        Signature::riemannian(map.source().dim())
    } else {
        Signature::of(&field.eval(&map.source().center()))
    };
    Metric::new(field, signature)
}

/// The metric `g₁ ⊕ g₂` on the product chart.
pub fn product_metric(g1: &Metric, g2: &Metric) -> Metric {
    let n1 = g1.dim();
    let d = n1 + g2.dim();
    let (a, b) = (g1.clone(), g2.clone());
    let field = MatrixField::new(g1.domain().product(g2.domain()), move |p| {
        let mut out = DMatrix::zeros(d, d);
        out.view_mut((0, 0), (n1, n1)).copy_from(&a.eval(&p[..n1]));
        out.view_mut((n1, n1), (d - n1, d - n1)).copy_from(&b.eval(&p[n1..]));
        out
    });
    let (s1, s2) = (g1.signature(), g2.signature());
    Metric::new(field, Signature { positive: s1.positive + s2.positive, negative: s1.negative + s2.negative })
        .expect("dimensions add up")
}

/// Exponent vectors of degree `k` in `d + 1` variables, `X₀^k` first and the
/// rest in decreasing lexicographic order.
fn homogeneous_exponents(vars: usize, k: u32) -> Vec<Vec<u32>> {
    if vars == 1 {
        return vec![vec![k]];
    }
    (0..=k)
        .rev()
        .flat_map(|first| {
            homogeneous_exponents(vars - 1, k - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn binomial(n: u32, k: u32) -> usize {
    (factorial(n) / (factorial(k) * factorial(n - k))).round() as usize
}

/// The degree-`k` Veronese embedding of complex projective `d`-space, in the
/// affine charts `{Z₀ = 1}` of source and target.
#[derive(Clone, Debug)]
pub struct VeroneseMap {
    pub d: usize,
    pub k: u32,
    /// Complex dimension of the target projective space.
    pub n_target: usize,
    pub map: SmoothMap,
    /// Fubini–Study metric on a target box containing the image.
    pub target: Metric,
}

impl VeroneseMap {
    /// Weighted monomials `√(k!/α!) Z^α` of the homogeneous coordinates.
    pub fn homogeneous(&self, z: &[Complex64]) -> Vec<Complex64> {
        homogeneous_exponents(self.d + 1, self.k)
            .iter()
            .map(|e| {
                let w = (factorial(self.k) / e.iter().map(|&a| factorial(a)).product::<f64>()).sqrt();
                e.iter().zip(z).map(|(&a, zi)| zi.powu(a)).product::<Complex64>() * w
            })
            .collect()
    }
}

/// Veronese map on the source box `[−w, w]^{2d}`.
pub fn veronese(d: usize, k: u32, half_width: f64) -> Result<VeroneseMap> {
    if d < 1 || k < 1 {
        return Err(Error::InvalidConfig(format!("Veronese map needs d, k >= 1, got {d}, {k}")));
    }
    let source = ProjectiveChart::new(d, 0, half_width)?.domain()?;
    let exps: Vec<(f64, Vec<u32>)> = homogeneous_exponents(d + 1, k)
        .into_iter()
        .skip(1)
        .map(|e| {
            let w = (factorial(k) / e.iter().map(|&a| factorial(a)).product::<f64>()).sqrt();
            (w, e[1..].to_vec())
        })
        .collect();
    let n_target = binomial(d as u32 + k, k) - 1;
    debug_assert_eq!(exps.len(), n_target);
    let (e1, e2) = (exps.clone(), exps);
    let map = SmoothMap::holomorphic(
        source,
        n_target,
        move |z| e1.iter().map(|(w, e)| monomial_c(e, z) * *w).collect(),
        move |z| {
            DMatrix::from_fn(e2.len(), z.len(), |r, c| {
                let (w, e) = &e2[r];
                if e[c] == 0 {
                    return Complex64::new(0.0, 0.0);
                }
                let mut de = e.clone();
                de[c] -= 1;
                monomial_c(&de, z) * (*w * e[c] as f64)
            })
        },
    );
    let bound = factorial(k).sqrt() * (2f64.sqrt() * half_width).max(1.0).powi(k as i32);
    let target = fubini_study_on(ChartDomain::cube(2 * n_target, -bound, bound, 11)?);
    Ok(VeroneseMap { d, k, n_target, map, target })
}

fn monomial_c(e: &[u32], z: &[Complex64]) -> Complex64 {
    e.iter().zip(z).map(|(&a, zi)| zi.powu(a)).product()
}

/// The Segre embedding of `Pᵐ × Pⁿ` into `P^{(m+1)(n+1)−1}`,
/// `(Z, W) ↦ (Z_i W_j)`, in the affine charts `{Z₀ = 1}`, `{W₀ = 1}` and
/// `{Z₀W₀ = 1}`.
#[derive(Clone, Debug)]
pub struct SegreMap {
    pub m: usize,
    pub n: usize,
    pub n_target: usize,
    pub map: SmoothMap,
    pub target: Metric,
}

/// Segre map on the source box `[−w, w]^{2m} × [−w, w]^{2n}`.
pub fn segre(m: usize, n: usize, half_width: f64) -> Result<SegreMap> {
    let source = segre_source(m, n, half_width)?;
    let bound = (2f64.sqrt() * half_width).max(1.0).powi(2);
    segre_on(m, n, source, bound)
}

fn segre_source(m: usize, n: usize, half_width: f64) -> Result<ChartDomain> {
    if m < 1 || n < 1 {
        return Err(Error::InvalidConfig(format!("Segre map needs m, n >= 1, got {m}, {n}")));
    }
    Ok(ProjectiveChart::new(m, 0, half_width)?.domain()?.product(&ProjectiveChart::new(n, 0, half_width)?.domain()?))
}

/// Segre map on an explicit source chart, with a target box `[−bound, bound]`.
pub fn segre_on(m: usize, n: usize, source: ChartDomain, bound: f64) -> Result<SegreMap> {
    if source.dim() != 2 * (m + n) {
        return Err(Error::DimensionMismatch { expected: 2 * (m + n), got: source.dim() });
    }
    let n_target = (m + 1) * (n + 1) - 1;
    let one = Complex64::new(1.0, 0.0);
    let homog = move |z: &[Complex64]| -> (Vec<Complex64>, Vec<Complex64>) {
        let mut zz = vec![one];
        zz.extend_from_slice(&z[..m]);
        let mut ww = vec![one];
        ww.extend_from_slice(&z[m..]);
        (zz, ww)
    };
    let map = SmoothMap::holomorphic(
        source,
        n_target,
        move |z| {
            let (zz, ww) = homog(z);
            zz.iter().flat_map(|a| ww.iter().map(move |b| a * b)).skip(1).collect()
        },
        move |z| {
            let (zz, ww) = homog(z);
            let mut jac = DMatrix::from_element(n_target + 1, m + n, Complex64::new(0.0, 0.0));
            for i in 0..=m {
                for j in 0..=n {
                    let row = i * (n + 1) + j;
                    if i > 0 {
                        jac[(row, i - 1)] = ww[j];
                    }
                    if j > 0 {
                        jac[(row, m + j - 1)] = zz[i];
                    }
                }
            }
            jac.rows(1, n_target).into_owned()
        },
    );
    let target = fubini_study_on(ChartDomain::cube(2 * n_target, -bound, bound, 11)?);
    Ok(SegreMap { m, n, n_target, map, target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart_core::FdConfig;
    use crate::metric_geometry::{christoffel, curvature, sectional_curvature};
    use crate::projective_algebra::projective_connection_check;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dini_rejects_overlap() {
        let x = scalar_1d(0.0, 1.0, |t| 2.0 + t, |_| 1.0, |_| 0.0).unwrap();
        let y = scalar_1d(0.0, 1.0, |t| 1.5 + t, |_| 1.0, |_| 0.0).unwrap();
        let err = dini_pair(x, y, ChartDomain::cube(2, 0.0, 1.0, 5).unwrap()).unwrap_err();
        assert!(matches!(err, Error::RangeOverlap { sup_y, inf_x } if sup_y == 2.5 && inf_x == 2.0));
    }

    #[test]
    fn dini_constants_are_flat_multiples() {
        let x = scalar_1d(0.0, 1.0, |_| 4.0, |_| 0.0, |_| 0.0).unwrap();
        let y = scalar_1d(0.0, 1.0, |_| 1.5, |_| 0.0, |_| 0.0).unwrap();
        let pair = dini_pair(x, y, ChartDomain::cube(2, 0.0, 1.0, 5).unwrap()).unwrap();
        let samples = pair.g.domain().interior_grid(5, 0.01);
        let v = projective_connection_check(&pair.g, &pair.g_bar, &FdConfig::default(), &samples).unwrap();
        assert!(v < 1e-9);
        assert_abs_diff_eq!(pair.g.eval(&[0.5, 0.5])[(0, 0)], 2.5, epsilon = 1e-15);
    }

    #[test]
    fn dini_analytic_partials_match_fd() {
        let pair = dini_default(21).unwrap();
        let p = [1.3, 2.1];
        for m in [&pair.g, &pair.g_bar] {
            let analytic = m.partials(&p, &FdConfig::default()).unwrap();
            let fd = m.without_derivatives().partials(&p, &FdConfig::default()).unwrap();
            for (a, f) in analytic.iter().zip(&fd) {
                assert!((a - f).amax() < 1e-9);
            }
            let second = m.field().analytic_second_partials(&p).unwrap();
            for k in 0..2 {
                let fd2 = crate::chart_core::central_difference(
                    |q| m.partials(q, &FdConfig::default()).unwrap()[k].clone(),
                    &p,
                    1 - k,
                    &FdConfig::default(),
                );
                assert!((&second[k][1 - k] - fd2).amax() < 1e-8);
                let fd_diag = crate::chart_core::central_difference(
                    |q| m.partials(q, &FdConfig::default()).unwrap()[k].clone(),
                    &p,
                    k,
                    &FdConfig::default(),
                );
                assert!((&second[k][k] - fd_diag).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn matveev_constant_a_is_symmetric() {
        let a = scalar_1d(0.0, 1.0, |_| 2.0, |_| 0.0, |_| 0.0).unwrap();
        let ex = matveev_example(a, ChartDomain::cube(2, 0.0, 1.0, 5).unwrap()).unwrap();
        let g = ex.g.eval(&[0.3, 0.8]);
        assert_abs_diff_eq!(g[(0, 0)], 1.5 * 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(g[(1, 1)], 1.5 / 2f64.sqrt(), epsilon = 1e-14);
        assert_eq!(ex.sigma.forward(&[0.3, 0.8]), vec![0.8, 0.3]);
    }

    #[test]
    fn matveev_rejects_small_a() {
        let a = scalar_1d(0.0, 1.0, |_| 0.9, |_| 0.0, |_| 0.0).unwrap();
        assert!(matches!(
            matveev_example(a, ChartDomain::cube(2, 0.0, 1.0, 5).unwrap()),
            Err(Error::PositivityFailure(_))
        ));
    }

    #[test]
    fn flat_chart_has_no_christoffels() {
        let g = constant_curvature_chart(3, 0).unwrap();
        assert_eq!(christoffel(&g, &FdConfig::default()).eval(&[0.1, 0.2, 0.3]).unwrap().max_abs(), 0.0);
        assert!(matches!(constant_curvature_chart(1, 1), Err(Error::DimensionTooLow { dim: 1 })));
    }

    #[test]
    fn hyperbolic_plane_curvature() {
        let g = constant_curvature_chart(2, -1).unwrap();
        let curv = curvature(&g, &FdConfig::second_derivative());
        let k = sectional_curvature(&curv, &g, &[0.2, 1.1], &[1.0, 0.0], &[0.3, 1.0]).unwrap();
        assert_abs_diff_eq!(k, -1.0, epsilon = 1e-10);
    }

    #[test]
    fn fs_at_origin_is_scalar() {
        let g = fubini_study(2, 0).unwrap().eval(&[0.0; 4]);
        assert_eq!(g, DMatrix::identity(4, 4));
    }

    #[test]
    fn fs_line_is_sphere_of_radius_half() {
        let fs = fubini_study(1, 0).unwrap();
        for p in [[0.3, -0.2], [0.9, 0.5]] {
            let r2: f64 = p[0] * p[0] + p[1] * p[1];
            let expected = 1.0 / (1.0 + r2).powi(2);
            let g = fs.eval(&p);
            assert_abs_diff_eq!((g - DMatrix::identity(2, 2) * expected).amax(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn chart_lift_roundtrip() {
        let chart = ProjectiveChart::new(2, 1, 1.0).unwrap();
        let p = vec![0.1, -0.4, 0.7, 0.2];
        let z = chart.lift(&p);
        assert_eq!(z[1], Complex64::new(1.0, 0.0));
        assert_eq!(chart.dehomogenize(&z).unwrap(), p);
        let scaled: Vec<Complex64> = z.iter().map(|w| w * Complex64::new(0.3, 2.0)).collect();
        let back = chart.dehomogenize(&scaled).unwrap();
        assert!(back.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn veronese_target_dimensions() {
        assert_eq!(veronese(1, 2, 0.5).unwrap().n_target, 2);
        assert_eq!(veronese(2, 2, 0.5).unwrap().n_target, 5);
        assert_eq!(veronese(2, 3, 0.5).unwrap().n_target, 9);
        assert_eq!(homogeneous_exponents(3, 2)[0], vec![2, 0, 0]);
    }

    #[test]
    fn veronese_weights_preserve_norm_power() {
        let v = veronese(2, 3, 0.5).unwrap();
        let z = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.5), Complex64::new(1.1, -0.4)];
        let norm2: f64 = z.iter().map(|w| w.norm_sqr()).sum();
        let image: f64 = v.homogeneous(&z).iter().map(|w| w.norm_sqr()).sum();
        assert_abs_diff_eq!(image, norm2.powi(3), epsilon = 1e-13);
    }

    #[test]
    fn pullback_of_linear_map() {
        let dom = ChartDomain::cube(2, -0.5, 0.5, 5).unwrap();
        let flat = Metric::flat(ChartDomain::cube(2, -1.0, 1.0, 5).unwrap());
        let doubling = SmoothMap::new(dom, 2, |p| p.iter().map(|x| 2.0 * x).collect());
        let g = pullback_metric(&doubling, &flat).unwrap();
        assert_abs_diff_eq!((g.eval(&[0.1, 0.2]) - DMatrix::identity(2, 2) * 4.0).amax(), 0.0, epsilon = 1e-9);
        let too_far = SmoothMap::new(ChartDomain::cube(2, -1.0, 1.0, 5).unwrap(), 2, |p| {
            p.iter().map(|x| 2.0 * x).collect()
        });
        assert!(matches!(pullback_metric(&too_far, &flat), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn segre_jacobian_matches_fd() {
        let s = segre(1, 2, 0.5).unwrap();
        assert_eq!(s.n_target, 5);
        let p = [0.1, 0.2, -0.3, 0.05, 0.4, -0.1];
        let analytic = s.map.jacobian(&p);
        let fd = SmoothMap::new(s.map.source().clone(), s.map.target_dim(), {
            let m = s.map.clone();
            move |q| m.eval(q)
        })
        .jacobian(&p);
        assert!((analytic - fd).amax() < 1e-10);
    }
}
