//! Transfer and strength tensors, the determinant-normalized inverse
//! transform between tensors and metrics, the induced action of
//! diffeomorphisms, the volume-type functionals, and the linear equation
//! satisfied by the tensors of projectively equivalent metrics.

use nalgebra::{DMatrix, SVD};
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::chart_core::{
    fd_partial, integrate_fn, ChartDomain, DiffeoOnChart, FdConfig, MatrixField, Point,
    QuadratureRule, Tensor11Field,
};
use crate::error::{Error, Result};
use crate::metric_geometry::{christoffel, CurvatureData, Metric, Signature};

/// Determinant magnitude below which a (1,1)-tensor counts as singular.
pub const SINGULAR_TENSOR_DET: f64 = 1e-14;
/// Determinant magnitude below which the N functional is declared infinite.
pub const NEAR_DEGENERATE_DET: f64 = 1e-8;

/// Samples per axis used when a field is checked on its chart.
const CHECK_PER_AXIS: usize = 7;

/// A `g0`-self-adjoint (1,1)-tensor field together with its base metric.
#[derive(Clone, Debug)]
pub struct LTensor {
    field: Tensor11Field,
    base: Metric,
}

impl LTensor {
    /// Wraps `field`, checking `g0(Lu, v) = g0(u, Lv)` to 1e-9 (relative) on a
    /// grid of the chart.
    pub fn new(field: Tensor11Field, base: &Metric) -> Result<Self> {
        let l = Self::new_unchecked(field, base)?;
        let defect = l.self_adjoint_defect(CHECK_PER_AXIS);
        if !(defect <= 1e-9) {
            return Err(Error::InvalidConfig(format!(
                "tensor is not self-adjoint (defect {defect:e})"
            )));
        }
        Ok(l)
    }

    /// Wraps `field` without the self-adjointness check.
    pub fn new_unchecked(field: Tensor11Field, base: &Metric) -> Result<Self> {
        if field.domain().dim() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: field.domain().dim(),
            });
        }
        Ok(Self {
            field,
            base: base.clone(),
        })
    }

    pub fn identity(base: &Metric) -> Self {
        Self {
            field: MatrixField::identity(base.domain().clone()),
            base: base.clone(),
        }
    }

    pub fn scalar(base: &Metric, c: f64) -> Self {
        let d = base.dim();
        Self {
            field: MatrixField::constant(base.domain().clone(), DMatrix::identity(d, d) * c),
            base: base.clone(),
        }
    }

    pub fn field(&self) -> &Tensor11Field {
        &self.field
    }

    pub fn base(&self) -> &Metric {
        &self.base
    }

    pub fn domain(&self) -> &ChartDomain {
        self.field.domain()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn eval(&self, p: &[f64]) -> DMatrix<f64> {
        self.field.eval(p)
    }

    /// Largest `|g0 L − (g0 L)ᵀ| / max(|g0 L|, 1)` over a grid.
    pub fn self_adjoint_defect(&self, per_axis: usize) -> f64 {
        self.domain()
            .grid_points(per_axis)
            .iter()
            .map(|p| {
                let gl = self.base.eval(p) * self.eval(p);
                (&gl - gl.transpose()).amax() / gl.amax().max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Ordinary strength `S` and tensor strength `K` of a diffeomorphism.
#[derive(Clone, Debug)]
pub struct StrengthPair {
    pub s: Tensor11Field,
    pub k: Tensor11Field,
    map: DiffeoOnChart,
    base: Metric,
}

impl StrengthPair {
    pub fn s_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        strength_s_at(&self.map, &self.base, x)
    }

    pub fn k_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        strength_k_at(&self.map, &self.base, x)
    }
}

/// Coefficients of `(f_*K) K_f = αK + βI` and the fit residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomographyCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub residual: f64,
}

fn nan_matrix(d: usize) -> DMatrix<f64> {
    DMatrix::from_element(d, d, f64::NAN)
}

/// Runs `check` at every point of a grid of `domain`, returning the first
/// error.
fn check_on_grid(domain: &ChartDomain, check: impl Fn(&[f64]) -> Result<()>) -> Result<()> {
    let per_axis = domain.grid_res().clamp(2, CHECK_PER_AXIS);
    domain
        .grid_points(per_axis)
        .iter()
        .try_for_each(|p| check(p))
}

/// `L ↦ L⁻¹ / det L` at one point.
pub fn f_transform_at(l: &DMatrix<f64>, point: &[f64]) -> Result<DMatrix<f64>> {
    let det = l.determinant();
    if !(det.abs() >= SINGULAR_TENSOR_DET) {
        return Err(Error::SingularTensor {
            point: point.to_vec(),
        });
    }
    let inv = l.clone().try_inverse().ok_or(Error::SingularTensor {
        point: point.to_vec(),
    })?;
    Ok(inv / det)
}

/// `T ↦ (det T)^{1/(1+d)} T⁻¹` at one point, using the real root. When
/// `1 + d` is even a negative determinant has no real root.
pub fn f_inverse_transform_at(t: &DMatrix<f64>, point: &[f64]) -> Result<DMatrix<f64>> {
    let d = t.nrows();
    let det = t.determinant();
    if !(det.abs() >= SINGULAR_TENSOR_DET) {
        return Err(Error::SingularTensor {
            point: point.to_vec(),
        });
    }
    if det < 0.0 && (d + 1) % 2 == 0 {
        return Err(Error::NegativeDetRoot {
            point: point.to_vec(),
            det,
        });
    }
    let root = det.signum() * det.abs().powf(1.0 / (d as f64 + 1.0));
    let inv = t.clone().try_inverse().ok_or(Error::SingularTensor {
        point: point.to_vec(),
    })?;
    Ok(inv * root)
}

/// Pointwise `L⁻¹ / det L`.
pub fn f_transform(l: &Tensor11Field) -> Result<Tensor11Field> {
    check_on_grid(l.domain(), |p| f_transform_at(&l.eval(p), p).map(|_| ()))?;
    let d = l.domain().dim();
    Ok(l.without_derivatives()
        .map(move |p, m| f_transform_at(&m, p).unwrap_or_else(|_| nan_matrix(d))))
}

/// Pointwise `(det T)^{1/(1+d)} T⁻¹`.
pub fn f_inverse_transform(t: &Tensor11Field) -> Result<Tensor11Field> {
    check_on_grid(t.domain(), |p| {
        f_inverse_transform_at(&t.eval(p), p).map(|_| ())
    })?;
    let d = t.domain().dim();
    Ok(t.without_derivatives()
        .map(move |p, m| f_inverse_transform_at(&m, p).unwrap_or_else(|_| nan_matrix(d))))
}

/// `T = g0⁻¹ g`, returned as a tensor over `g0`.
pub fn transfer_tensor(g: &Metric, g0: &Metric) -> Result<LTensor> {
    if g.dim() != g0.dim() {
        return Err(Error::DimensionMismatch {
            expected: g0.dim(),
            got: g.dim(),
        });
    }
    check_on_grid(g0.domain(), |p| {
        g0.inverse(p)?;
        g.inverse(p).map(|_| ())
    })?;
    let (ga, gb) = (g.clone(), g0.clone());
    let d = g0.dim();
    let field = MatrixField::new(g0.domain().clone(), move |p| match gb.inverse(p) {
        Ok(inv) => inv * ga.eval(p),
        Err(_) => nan_matrix(d),
    });
    LTensor::new_unchecked(field, g0)
}

/// The metric `g0(L⁻¹·, ·) / det L`; the signature is read off at the chart
/// center.
pub fn metric_from_l(l: &LTensor) -> Result<Metric> {
    check_on_grid(l.domain(), |p| f_transform_at(&l.eval(p), p).map(|_| ()))?;
    let (lf, base) = (l.field.clone(), l.base.clone());
    let d = l.dim();
    let field = MatrixField::new(l.domain().clone(), move |p| {
        let g0 = base.eval(p);
        match f_transform_at(&lf.eval(p), p) {
            Ok(t) => {
                let g = g0 * t;
                (&g + g.transpose()) * 0.5
            }
            Err(_) => nan_matrix(d),
        }
    });
    let signature = Signature::of(&field.eval(&l.domain().center()));
    Metric::new(field, signature)
}

fn preimage(f: &DiffeoOnChart, domain: &ChartDomain, x: &[f64]) -> Result<Point> {
    let y = f.inverse(x);
    if !y.iter().all(|v| v.is_finite()) || !domain.contains_with_margin(&y, -1e-9) {
        return Err(Error::OutOfDomain { point: x.to_vec() });
    }
    Ok(y)
}

/// `(f_*g)(x) = Jᵀ g(f⁻¹x) J` with `J = D_x f⁻¹`.
pub fn pushforward_metric_at(f: &DiffeoOnChart, g: &Metric, x: &[f64]) -> Result<DMatrix<f64>> {
    let y = preimage(f, g.domain(), x)?;
    let j = f
        .differential(&y)
        .try_inverse()
        .ok_or(Error::SingularTensor { point: y.clone() })?;
    Ok(j.transpose() * g.eval(&y) * j)
}

/// `(f_*L)(x) = D f(y) L(y) (D f(y))⁻¹` with `y = f⁻¹x`.
pub fn pushforward_tensor_at(
    f: &DiffeoOnChart,
    l: &Tensor11Field,
    x: &[f64],
) -> Result<DMatrix<f64>> {
    let y = preimage(f, l.domain(), x)?;
    let df = f.differential(&y);
    let inv = df
        .clone()
        .try_inverse()
        .ok_or(Error::SingularTensor { point: y.clone() })?;
    Ok(df * l.eval(&y) * inv)
}

fn strength_s_at(f: &DiffeoOnChart, g0: &Metric, x: &[f64]) -> Result<DMatrix<f64>> {
    Ok(g0.inverse(x)? * pushforward_metric_at(f, g0, x)?)
}

fn strength_k_at(f: &DiffeoOnChart, g0: &Metric, x: &[f64]) -> Result<DMatrix<f64>> {
    f_inverse_transform_at(&strength_s_at(f, g0, x)?, x)
}

/// `S_f = g0⁻¹ (f_*g0)` and `K_f` with `S_f = K_f⁻¹ / det K_f`.
pub fn strength_of(f: &DiffeoOnChart, g0: &Metric) -> Result<StrengthPair> {
    check_on_grid(g0.domain(), |p| strength_k_at(f, g0, p).map(|_| ()))?;
    let d = g0.dim();
    let (fs, gs) = (f.clone(), g0.clone());
    let (fk, gk) = (f.clone(), g0.clone());
    Ok(StrengthPair {
        s: MatrixField::new(g0.domain().clone(), move |x| {
            strength_s_at(&fs, &gs, x).unwrap_or_else(|_| nan_matrix(d))
        }),
        k: MatrixField::new(g0.domain().clone(), move |x| {
            strength_k_at(&fk, &gk, x).unwrap_or_else(|_| nan_matrix(d))
        }),
        map: f.clone(),
        base: g0.clone(),
    })
}

/// `(ρ(f)L)(x) = (f_*L)(x) K_f(x)`.
pub fn rho_apply_at(
    f: &DiffeoOnChart,
    l: &LTensor,
    g0: &Metric,
    x: &[f64],
) -> Result<DMatrix<f64>> {
    Ok(pushforward_tensor_at(f, &l.field, x)? * strength_k_at(f, g0, x)?)
}

/// The action `L ↦ (f_*L) K_f` on tensors over `g0`.
pub fn rho_apply(f: &DiffeoOnChart, l: &LTensor, g0: &Metric) -> Result<LTensor> {
    check_on_grid(g0.domain(), |p| rho_apply_at(f, l, g0, p).map(|_| ()))?;
    let d = g0.dim();
    let (fc, lc, gc) = (f.clone(), l.clone(), g0.clone());
    let field = MatrixField::new(g0.domain().clone(), move |x| {
        rho_apply_at(&fc, &lc, &gc, x).unwrap_or_else(|_| nan_matrix(d))
    });
    LTensor::new_unchecked(field, g0)
}

/// The action `T ↦ S_f (f_*T)` on transfer tensors, i.e. `T(g, g0) ↦ T(f_*g, g0)`.
pub fn rho_transfer_apply(f: &DiffeoOnChart, t: &LTensor, g0: &Metric) -> Result<LTensor> {
    let at = |f: &DiffeoOnChart, t: &LTensor, g0: &Metric, x: &[f64]| -> Result<DMatrix<f64>> {
        Ok(strength_s_at(f, g0, x)? * pushforward_tensor_at(f, &t.field, x)?)
    };
    check_on_grid(g0.domain(), |p| at(f, t, g0, p).map(|_| ()))?;
    let d = g0.dim();
    let (fc, tc, gc) = (f.clone(), t.clone(), g0.clone());
    let field = MatrixField::new(g0.domain().clone(), move |x| {
        at(&fc, &tc, &gc, x).unwrap_or_else(|_| nan_matrix(d))
    });
    LTensor::new_unchecked(field, g0)
}

/// Which volume-type functional to integrate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FunctionalKind {
    /// `∫ √|det T| dv_{g0}` for a transfer tensor `T`.
    Q,
    /// `∫ |det L|^{-(1+d)/2} dv_{g0}` for a tensor `L`.
    N,
}

/// Quadrature of the chosen functional over the field's chart, at the chart's
/// `grid_res`.
pub fn functionals(
    field: &Tensor11Field,
    g0: &Metric,
    kind: FunctionalKind,
    rule: QuadratureRule,
) -> Result<f64> {
    let d = g0.dim() as f64;
    integrate_fn(field.domain(), rule, |p| {
        let det = field.eval(p).determinant();
        let vol = g0.eval(p).determinant().abs().sqrt();
        match kind {
            FunctionalKind::Q => Ok(det.abs().sqrt() * vol),
            FunctionalKind::N => {
                if !(det.abs() > NEAR_DEGENERATE_DET) {
                    return Err(Error::NearDegenerate {
                        point: p.to_vec(),
                        det,
                    });
                }
                Ok(det.abs().powf(-(1.0 + d) / 2.0) * vol)
            }
        }
    })
}

/// Largest Frobenius discrepancy between `K_{fⁿ}` and
/// `(f^{n−1}_* K_f) ⋯ (f_* K_f) K_f`, sampled at `fⁿ(p)` for `p` on a
/// `per_axis` grid so that every preimage stays on the chart.
pub fn chain_rule_check(f: &DiffeoOnChart, g0: &Metric, n: u32, per_axis: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "chain rule power must be positive".into(),
        ));
    }
    let fk: Vec<DiffeoOnChart> = (0..n as i32).map(|k| f.power(k)).collect();
    let fnn = f.power(n as i32);
    let points: Vec<Point> = g0
        .domain()
        .grid_points(per_axis)
        .iter()
        .map(|p| fnn.forward(p))
        .collect();
    let errs: Vec<Result<f64>> = points
        .par_iter()
        .map(|x| {
            let direct = strength_k_at(&fnn, g0, x)?;
            let d = g0.dim();
            let mut product = DMatrix::identity(d, d);
            for k in (0..n as usize).rev() {
                let y = preimage(&fk[k], g0.domain(), x)?;
                let dfk = fk[k].differential(&y);
                let inv = dfk
                    .clone()
                    .try_inverse()
                    .ok_or(Error::SingularTensor { point: y.clone() })?;
                product *= dfk * strength_k_at(f, g0, &y)? * inv;
            }
            Ok((direct - product).norm())
        })
        .collect();
    errs.into_iter().try_fold(0.0, |m, e| Ok(f64::max(m, e?)))
}

/// Default sample points for interior checks: a grid of the chart shrunk by
/// `margin`, at most 7 points per axis.
pub fn check_samples(domain: &ChartDomain, margin: f64) -> Vec<Point> {
    domain.interior_grid(domain.grid_res().clamp(2, CHECK_PER_AXIS), margin)
}

/// Components `E_{kjl}` (flattened) of
/// `g_{li}(∇_k L)^i_j − ½ g_{jk} ∂_l tr L − ½ g_{lk} ∂_j tr L` at `p`, and the
/// summed magnitudes of the individual terms.
fn sinjukov_components(
    l: &Tensor11Field,
    base: &Metric,
    cfg: &FdConfig,
    p: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = p.len();
    let g = base.eval(p);
    let gamma = christoffel(base, cfg).eval(p)?;
    let lv = l.eval(p);
    let dl: Vec<DMatrix<f64>> = (0..d)
        .map(|k| fd_partial(l, p, k, cfg))
        .collect::<Result<_>>()?;
    let dtr: Vec<f64> = dl.iter().map(|m| m.trace()).collect();
    let mut values = Vec::with_capacity(d * d * d);
    let mut scales = Vec::with_capacity(d * d * d);
    for k in 0..d {
        let gk = DMatrix::from_fn(d, d, |i, m| gamma.get(i, k, m));
        let conn = &gk * &lv - &lv * &gk;
        let lhs_d = &g * &dl[k];
        let lhs_c = &g * conn;
        for j in 0..d {
            for li in 0..d {
                let rhs = 0.5 * g[(j, k)] * dtr[li] + 0.5 * g[(li, k)] * dtr[j];
                values.push(lhs_d[(li, j)] + lhs_c[(li, j)] - rhs);
                scales.push(
                    lhs_d[(li, j)].abs()
                        + lhs_c[(li, j)].abs()
                        + 0.5 * (g[(j, k)] * dtr[li]).abs()
                        + 0.5 * (g[(li, k)] * dtr[j]).abs(),
                );
            }
        }
    }
    Ok((values, scales))
}

/// Largest coordinate-frame residual of the linear equation on a grid of the
/// chart interior.
pub fn sinjukov_residual(l: &LTensor, cfg: &FdConfig) -> Result<f64> {
    let samples = check_samples(l.domain(), 2.0 * cfg.reach());
    sinjukov_residual_at(l, cfg, &samples)
}

pub fn sinjukov_residual_at(l: &LTensor, cfg: &FdConfig, samples: &[Point]) -> Result<f64> {
    let per_point: Vec<Result<f64>> = samples
        .par_iter()
        .map(|p| {
            let (v, _) = sinjukov_components(&l.field, &l.base, cfg, p)?;
            Ok(v.iter().fold(0.0, |m: f64, x| m.max(x.abs())))
        })
        .collect();
    per_point
        .into_iter()
        .try_fold(0.0, |m, r| Ok(f64::max(m, r?)))
}

/// Largest component of `∇_k L^i_j = ∂_k L^i_j + Γ^i_{km} L^m_j − L^i_m Γ^m_{kj}`
/// over `samples`.
pub fn covariant_derivative_max(l: &LTensor, cfg: &FdConfig, samples: &[Point]) -> Result<f64> {
    let conn = christoffel(&l.base, cfg);
    let per_point: Vec<Result<f64>> = samples
        .par_iter()
        .map(|p| {
            let d = p.len();
            let gamma = conn.eval(p)?;
            let lv = l.eval(p);
            let mut m: f64 = 0.0;
            for k in 0..d {
                let gk = DMatrix::from_fn(d, d, |i, j| gamma.get(i, k, j));
                let nabla = fd_partial(&l.field, p, k, cfg)? + &gk * &lv - &lv * &gk;
                m = m.max(nabla.amax());
            }
            Ok(m)
        })
        .collect();
    per_point.into_iter().try_fold(0.0, |m, r| Ok(f64::max(m, r?)))
}

/// Outcome of [`mobility_in_span`].
#[derive(Clone, Debug, PartialEq)]
pub struct MobilityReport {
    /// Dimension of the solution space within the span.
    pub dimension: usize,
    /// Singular values of the column-normalized collocation matrix, descending.
    pub singular_values: Vec<f64>,
    /// Smallest retained singular value over the largest discarded one
    /// (infinite when either side is empty or the discarded ones vanish).
    pub gap: f64,
    pub threshold: f64,
}

/// Dimension of the kernel of the linear equation restricted to the span of
/// `basis`, by collocation on `samples` and a singular-value count.
///
/// Each column is divided by the norm of its summed term magnitudes, so that
/// a column measures relative cancellation; identically vanishing columns
/// stay zero. Singular values below `tol · max(σ_max, 1)` count as kernel.
pub fn mobility_in_span(
    g: &Metric,
    basis: &[Tensor11Field],
    tol: f64,
    cfg: &FdConfig,
    samples: &[Point],
) -> Result<MobilityReport> {
    if basis.is_empty() {
        return Err(Error::EmptyBasis);
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = g.dim();
    let per_row = d * d * d;
    let blocks: Vec<Result<Vec<(Vec<f64>, Vec<f64>)>>> = samples
        .par_iter()
        .map(|p| {
            basis
                .iter()
                .map(|b| sinjukov_components(b, g, cfg, p))
                .collect()
        })
        .collect();
    let blocks: Vec<Vec<(Vec<f64>, Vec<f64>)>> = blocks.into_iter().collect::<Result<_>>()?;
    let rows = samples.len() * per_row;
    let cols = basis.len();
    let mut a = DMatrix::zeros(rows, cols);
    let mut scale = vec![0.0; cols];
    for (s, block) in blocks.iter().enumerate() {
        for (c, (vals, scales)) in block.iter().enumerate() {
            for r in 0..per_row {
                a[(s * per_row + r, c)] = vals[r];
                scale[c] += scales[r] * scales[r];
            }
        }
    }
    for (c, sc) in scale.iter().enumerate() {
        if *sc > 0.0 {
            let norm = sc.sqrt();
            a.column_mut(c).iter_mut().for_each(|x| *x /= norm);
        }
    }
    let svd = SVD::new(a, false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let threshold = tol * sv.first().copied().unwrap_or(0.0).max(1.0);
    let kept: Vec<f64> = sv.iter().copied().filter(|&s| s >= threshold).collect();
    let dropped_max = sv
        .iter()
        .copied()
        .filter(|&s| s < threshold)
        .fold(0.0, f64::max);
    let gap = match kept.last() {
        Some(&smallest) if dropped_max > 0.0 => smallest / dropped_max,
        _ => f64::INFINITY,
    };
    Ok(MobilityReport {
        dimension: cols - kept.len(),
        singular_values: sv,
        gap,
        threshold,
    })
}

/// Symmetric matrix-unit fields times monomials of degree `≤ max_degree`,
/// with analytic partials. For the flat metric these span a space
/// containing every solution of the linear equation when `max_degree ≥ 2`.
pub fn polynomial_basis(domain: &ChartDomain, max_degree: u32) -> Vec<Tensor11Field> {
    let d = domain.dim();
    let mut exponents: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..d {
        exponents = exponents
            .into_iter()
            .flat_map(|e| {
                let used: u32 = e.iter().sum();
                (0..=max_degree - used).map(move |k| {
                    let mut e = e.clone();
                    e.push(k);
                    e
                })
            })
            .collect();
    }
    exponents.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
    let mut out = Vec::new();
    for a in 0..d {
        for b in a..d {
            let mut unit = DMatrix::zeros(d, d);
            unit[(a, b)] = 1.0;
            unit[(b, a)] = 1.0;
            for e in &exponents {
                let (u1, u2, e1, e2) = (unit.clone(), unit.clone(), e.clone(), e.clone());
                let field = MatrixField::new(domain.clone(), move |p| &u1 * monomial(&e1, p))
                    .with_partials(move |p| {
                        (0..p.len())
                            .map(|k| {
                                if e2[k] == 0 {
                                    return DMatrix::zeros(p.len(), p.len());
                                }
                                let mut de = e2.clone();
                                de[k] -= 1;
                                &u2 * (e2[k] as f64 * monomial(&de, p))
                            })
                            .collect()
                    });
                out.push(field);
            }
        }
    }
    out
}

fn monomial(e: &[u32], p: &[f64]) -> f64 {
    e.iter().zip(p).map(|(&k, &x)| x.powi(k as i32)).product()
}

/// Largest deviation of `Γ' − Γ` from the projective form
/// `δ^k_i φ_j + δ^k_j φ_i`, with `φ_j` read off the trace.
pub fn projective_connection_check(
    g: &Metric,
    g2: &Metric,
    cfg: &FdConfig,
    samples: &[Point],
) -> Result<f64> {
    let d = g.dim();
    let (c1, c2) = (christoffel(g, cfg), christoffel(g2, cfg));
    let per_point: Vec<Result<f64>> = samples
        .par_iter()
        .map(|p| {
            let delta = c2.eval(p)? - c1.eval(p)?;
            let phi: Vec<f64> = (0..d)
                .map(|j| (0..d).map(|k| delta.get(k, k, j)).sum::<f64>() / (d as f64 + 1.0))
                .collect();
            let mut m: f64 = 0.0;
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        let expected =
                            if k == i { phi[j] } else { 0.0 } + if k == j { phi[i] } else { 0.0 };
                        m = m.max((delta.get(k, i, j) - expected).abs());
                    }
                }
            }
            Ok(m)
        })
        .collect();
    per_point
        .into_iter()
        .try_fold(0.0, |m, r| Ok(f64::max(m, r?)))
}

/// Largest Frobenius norm of `L Ric♯ − Ric♯ L`, `Ric♯ = g⁻¹ Ric`.
pub fn ricci_commutator(l: &LTensor, curv: &CurvatureData, samples: &[Point]) -> Result<f64> {
    let per_point: Vec<Result<f64>> = samples
        .par_iter()
        .map(|p| {
            let ric = curv.metric().inverse(p)? * curv.ricci(p)?;
            let lv = l.eval(p);
            Ok((&lv * &ric - &ric * &lv).norm())
        })
        .collect();
    per_point
        .into_iter()
        .try_fold(0.0, |m, r| Ok(f64::max(m, r?)))
}

/// Result line of a numerical check, serialized as JSON.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRecord {
    pub op: String,
    /// SHA-256 (hex) of the textual description of the inputs.
    pub inputs_digest: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// Record with `pass = value <= tol`.
    pub fn below(op: &str, inputs: &str, value: f64, tol: f64) -> Self {
        Self::with_pass(op, inputs, value, tol, value <= tol)
    }

    pub fn with_pass(op: &str, inputs: &str, value: f64, tol: f64, pass: bool) -> Self {
        Self {
            op: op.to_string(),
            inputs_digest: digest(inputs),
            value,
            tol,
            pass,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "op": self.op,
            "inputs_digest": self.inputs_digest,
            "value": crate::report::json_number(self.value),
            "tol": crate::report::json_number(self.tol),
            "pass": self.pass,
        })
    }
}

/// Hex SHA-256 of `text`.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat(d: usize) -> Metric {
        Metric::flat(ChartDomain::cube(d, 0.0, 1.0, 21).unwrap())
    }

    fn const_field(m: &Metric, a: DMatrix<f64>) -> Tensor11Field {
        MatrixField::constant(m.domain().clone(), a)
    }

    #[test]
    fn transfer_of_scaled_metric() {
        let g = flat(2);
        let t = transfer_tensor(&g.scaled(2.0), &g).unwrap();
        assert_eq!(t.eval(&[0.3, 0.4]), DMatrix::identity(2, 2) * 2.0);
        let t1 = transfer_tensor(&g, &g).unwrap();
        assert_eq!(t1.eval(&[0.3, 0.4]), DMatrix::identity(2, 2));
    }

    #[test]
    fn f_transform_of_scalar() {
        let g = flat(2);
        let t = f_transform(&const_field(&g, DMatrix::identity(2, 2) * 2.0)).unwrap();
        assert_abs_diff_eq!(t.eval(&[0.5, 0.5])[(0, 0)], 0.125, epsilon = 1e-15);
        let id = f_transform(&MatrixField::identity(g.domain().clone())).unwrap();
        assert_eq!(id.eval(&[0.5, 0.5]), DMatrix::identity(2, 2));
    }

    #[test]
    fn inverse_transform_branches() {
        let p = [0.0; 2];
        // d = 2: odd root exists for a negative determinant
        let t = DMatrix::from_row_slice(2, 2, &[-8.0, 0.0, 0.0, 1.0]);
        let k = f_inverse_transform_at(&t, &p).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], -2.0 / -8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(1, 1)], -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            (f_transform_at(&k, &p).unwrap() - &t).amax(),
            0.0,
            epsilon = 1e-14
        );
        // d = 3: even root of a negative number does not exist
        let t3 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, 1.0]));
        assert!(matches!(
            f_inverse_transform_at(&t3, &[0.0; 3]),
            Err(Error::NegativeDetRoot { .. })
        ));
        let zero = DMatrix::zeros(2, 2);
        assert!(matches!(
            f_transform_at(&zero, &p),
            Err(Error::SingularTensor { .. })
        ));
    }

    #[test]
    fn metric_from_scalar_l() {
        let g = flat(2);
        let m = metric_from_l(&LTensor::scalar(&g, 2.0)).unwrap();
        assert_abs_diff_eq!(m.eval(&[0.2, 0.7])[(1, 1)], 0.125, epsilon = 1e-15);
        let m1 = metric_from_l(&LTensor::identity(&g)).unwrap();
        assert_eq!(m1.eval(&[0.2, 0.7]), DMatrix::identity(2, 2));
    }

    #[test]
    fn strength_of_dilation() {
        let dom = ChartDomain::cube(2, -1.0, 1.0, 5).unwrap();
        let g = Metric::flat(dom.clone());
        let f = DiffeoOnChart::affine(dom, DMatrix::identity(2, 2) * 2.0, vec![0.0, 0.0]).unwrap();
        let sp = strength_of(&f, &g).unwrap();
        let s = sp.s_at(&[0.3, 0.1]).unwrap();
        let k = sp.k_at(&[0.3, 0.1]).unwrap();
        assert_abs_diff_eq!(s[(0, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(0, 0)], 4f64.cbrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(k[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn strength_of_rotation_is_identity() {
        let dom = ChartDomain::cube(2, -1.0, 1.0, 5).unwrap();
        let g = Metric::flat(dom.clone());
        let (c, s) = (0.0, 1.0);
        let f = DiffeoOnChart::affine(
            dom,
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            vec![0.0, 0.0],
        )
        .unwrap();
        let k = strength_of(&f, &g).unwrap().k_at(&[0.2, 0.2]).unwrap();
        assert_abs_diff_eq!((k - DMatrix::identity(2, 2)).amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn out_of_domain_preimage() {
        let dom = ChartDomain::cube(2, 0.0, 1.0, 5).unwrap();
        let g = Metric::flat(dom.clone());
        let f = DiffeoOnChart::affine(dom, DMatrix::identity(2, 2) * 0.5, vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            strength_of(&f, &g),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn functionals_of_scalars() {
        let g = flat(2);
        let n1 = functionals(
            &MatrixField::identity(g.domain().clone()),
            &g,
            FunctionalKind::N,
            QuadratureRule::Trapezoid,
        )
        .unwrap();
        assert_abs_diff_eq!(n1, 1.0, epsilon = 1e-12);
        let c = 1.7;
        let nc = functionals(
            &const_field(&g, DMatrix::identity(2, 2) * c),
            &g,
            FunctionalKind::N,
            QuadratureRule::Trapezoid,
        )
        .unwrap();
        assert_abs_diff_eq!(nc, c.powi(-3), epsilon = 1e-12);
        let zero = const_field(&g, DMatrix::zeros(2, 2));
        assert!(matches!(
            functionals(&zero, &g, FunctionalKind::N, QuadratureRule::Trapezoid),
            Err(Error::NearDegenerate { .. })
        ));
    }

    #[test]
    fn chain_rule_trivial_cases() {
        let dom = ChartDomain::cube(2, 0.0, 1.0, 5).unwrap();
        let g = Metric::flat(dom.clone());
        let f =
            DiffeoOnChart::affine(dom, DMatrix::identity(2, 2) * 0.5, vec![0.25, 0.25]).unwrap();
        assert_eq!(chain_rule_check(&f, &g, 1, 5).unwrap(), 0.0);
        assert!(chain_rule_check(&f, &g, 3, 5).unwrap() < 1e-8);
    }

    #[test]
    fn sinjukov_constant_scalars() {
        let g = flat(2);
        let cfg = FdConfig::default();
        assert!(sinjukov_residual(&LTensor::identity(&g), &cfg).unwrap() < 1e-8);
        assert!(sinjukov_residual(&LTensor::scalar(&g, 3.5), &cfg).unwrap() < 1e-8);
    }

    #[test]
    fn sinjukov_flat_quadratic_family() {
        // L = A + w xᵀ + x wᵀ + c x xᵀ solves the equation for the flat metric.
        let g = flat(2);
        let field = MatrixField::new(g.domain().clone(), |p| {
            let x = nalgebra::DVector::from_column_slice(p);
            let w = nalgebra::DVector::from_vec(vec![0.3, -0.2]);
            let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
            a + &w * x.transpose() + &x * w.transpose() + &x * x.transpose() * 0.7
        });
        let l = LTensor::new(field, &g).unwrap();
        assert!(sinjukov_residual(&l, &FdConfig::default()).unwrap() < 1e-8);
        let bad = LTensor::new(
            MatrixField::new(g.domain().clone(), |p| {
                DMatrix::identity(2, 2) * p[0] * p[0]
            }),
            &g,
        )
        .unwrap();
        assert!(sinjukov_residual(&bad, &FdConfig::default()).unwrap() > 1e-2);
    }

    #[test]
    fn polynomial_basis_sizes() {
        assert_eq!(
            polynomial_basis(&ChartDomain::cube(2, 0.0, 1.0, 5).unwrap(), 2).len(),
            18
        );
        assert_eq!(
            polynomial_basis(&ChartDomain::cube(3, 0.0, 1.0, 5).unwrap(), 2).len(),
            60
        );
    }

    #[test]
    fn mobility_rejects_empty_basis() {
        let g = flat(2);
        assert!(matches!(
            mobility_in_span(&g, &[], 1e-7, &FdConfig::default(), &[vec![0.5, 0.5]]),
            Err(Error::EmptyBasis)
        ));
    }

    #[test]
    fn projective_connection_of_scaled_metric() {
        let dom = ChartDomain::new(vec![(0.5, 2.0), (-1.0, 1.0)], 5).unwrap();
        let g = Metric::riemannian(MatrixField::new(dom.clone(), |p| {
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, p[0] * p[0]])
        }));
        let samples = check_samples(&dom, 0.01);
        assert_eq!(
            projective_connection_check(&g, &g, &FdConfig::default(), &samples).unwrap(),
            0.0
        );
        assert!(
            projective_connection_check(&g, &g.scaled(5.0), &FdConfig::default(), &samples)
                .unwrap()
                < 1e-9
        );
    }

    #[test]
    fn record_json_layout() {
        let r = CheckRecord::below("sinjukov_residual", "L=I", 1e-12, 1e-8);
        let text = serde_json::to_string(&r.to_json()).unwrap();
        assert!(text.starts_with("{\"op\":\"sinjukov_residual\",\"inputs_digest\":\""));
        assert!(r.pass);
        assert_eq!(r.inputs_digest.len(), 64);
    }
}
