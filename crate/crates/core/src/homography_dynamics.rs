//! Real 2×2 homographies: classification, the action on the projective line
//! and on tensors, fitting the homography induced by a diffeomorphism, and
//! the spectral and asymptotic statements built on it.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chart_core::{DiffeoOnChart, Point};
use crate::error::{Error, Result};
use crate::metric_geometry::Metric;
use crate::projective_algebra::{pushforward_tensor_at, HomographyCoeffs, LTensor};

/// Window on `|trace| − 2` (after normalization) treated as parabolic.
pub const PARABOLIC_EPS: f64 = 1e-9;
/// Default bound on the fit residual of [`solve_alpha_beta`].
pub const DEFAULT_FIT_THRESHOLD: f64 = 1e-4;

/// A point of the real projective line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinity,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(x) => Some(x),
            ExtendedReal::Infinity => None,
        }
    }
}

/// A point of the complex projective line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedComplex {
    Finite(Complex64),
    Infinity,
}

/// The homography `z ↦ (az + b)/(cz + d)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mobius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mobius {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let m = Self { a, b, c, d };
        if !(m.det().abs() > 1e-12) {
            return Err(Error::SingularMobius);
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 1.0,
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.a, self.b, self.c, self.d)
    }

    fn from_matrix(m: Matrix2<f64>) -> Self {
        Self {
            a: m[(0, 0)],
            b: m[(0, 1)],
            c: m[(1, 0)],
            d: m[(1, 1)],
        }
    }

    pub fn compose(&self, other: &Mobius) -> Mobius {
        Self::from_matrix(self.matrix() * other.matrix())
    }

    pub fn inverse(&self) -> Result<Mobius> {
        let det = self.det();
        if det == 0.0 {
            return Err(Error::SingularMobius);
        }
        Ok(Self {
            a: self.d / det,
            b: -self.b / det,
            c: -self.c / det,
            d: self.a / det,
        })
    }

    /// `Mⁿ` for any integer `n`.
    pub fn pow(&self, n: i32) -> Result<Mobius> {
        let base = if n < 0 { self.inverse()? } else { *self };
        let mut acc = Mobius::identity();
        for _ in 0..n.unsigned_abs() {
            acc = base.compose(&acc);
        }
        Ok(acc)
    }

    /// Largest entry difference after scaling both to unit determinant
    /// magnitude and choosing the sign that matches best.
    pub fn projective_distance(&self, other: &Mobius) -> f64 {
        let n1 = self.matrix() / self.det().abs().sqrt();
        let n2 = other.matrix() / other.det().abs().sqrt();
        (n1 - n2).amax().min((n1 + n2).amax())
    }

    /// Image of a real projective point.
    pub fn act(&self, z: ExtendedReal) -> ExtendedReal {
        match z {
            ExtendedReal::Infinity => {
                if self.c == 0.0 {
                    ExtendedReal::Infinity
                } else {
                    ExtendedReal::Finite(self.a / self.c)
                }
            }
            ExtendedReal::Finite(z) => {
                let den = self.c * z + self.d;
                if den == 0.0 {
                    ExtendedReal::Infinity
                } else {
                    ExtendedReal::Finite((self.a * z + self.b) / den)
                }
            }
        }
    }

    pub fn act_real(&self, z: f64) -> ExtendedReal {
        self.act(ExtendedReal::Finite(z))
    }

    /// Image of a complex projective point.
    pub fn act_complex(&self, z: ExtendedComplex) -> ExtendedComplex {
        match z {
            ExtendedComplex::Infinity => {
                if self.c == 0.0 {
                    ExtendedComplex::Infinity
                } else {
                    ExtendedComplex::Finite(Complex64::new(self.a / self.c, 0.0))
                }
            }
            ExtendedComplex::Finite(z) => {
                let den = z * self.c + self.d;
                if den == Complex64::new(0.0, 0.0) {
                    ExtendedComplex::Infinity
                } else {
                    ExtendedComplex::Finite((z * self.a + self.b) / den)
                }
            }
        }
    }

    /// `(aK + bI)(cK + dI)⁻¹`, or `None` when `cK + dI` is singular.
    pub fn act_tensor(&self, k: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let n = k.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let den = k * self.c + &id * self.d;
        let scale = den.amax().max(1.0);
        if !(den.determinant().abs() > 1e-12 * scale.powi(n as i32)) {
            return None;
        }
        Some((k * self.a + &id * self.b) * den.try_inverse()?)
    }

    /// The matrix `(α, β; 1, 0)` of a fitted relation.
    pub fn from_coeffs(coeffs: &HomographyCoeffs) -> Result<Mobius> {
        Mobius::new(coeffs.alpha, coeffs.beta, 1.0, 0.0)
    }
}

/// The trichotomy of homographies, with the identity split off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MobiusTag {
    Identity,
    Elliptic,
    Parabolic,
    Hyperbolic,
}

/// Classification result. For orientation-reversing maps the tag is that of
/// the square and `orientation_reversing` is set; fixed points are always
/// those of the map itself.
#[derive(Clone, Debug, PartialEq)]
pub struct MobiusClass {
    pub tag: MobiusTag,
    pub fixed_points: Vec<ExtendedReal>,
    pub orientation_reversing: bool,
}

fn fixed_points(m: &Mobius, tag: MobiusTag) -> Vec<ExtendedReal> {
    let scale = m.matrix().amax();
    let (a, b, c, d) = (m.a, m.b, m.c, m.d);
    if tag == MobiusTag::Identity && !(m.det() < 0.0) {
        return vec![];
    }
    if c.abs() <= 1e-14 * scale {
        // ∞ is fixed; a second fixed point b/(d − a) when a ≠ d
        let mut out = vec![ExtendedReal::Infinity];
        if (a - d).abs() > 1e-14 * scale {
            out.insert(0, ExtendedReal::Finite(b / (d - a)));
        }
        return out;
    }
    let p = d - a;
    match tag {
        MobiusTag::Elliptic => vec![],
        MobiusTag::Parabolic => vec![ExtendedReal::Finite(-p / (2.0 * c))],
        _ => {
            let disc = (p * p + 4.0 * b * c).max(0.0).sqrt();
            // numerically stable roots of c z² + p z − b = 0
            let q = -0.5 * (p + p.signum() * disc);
            let (z1, z2) = if q != 0.0 {
                (q / c, -b / q)
            } else {
                (disc / (2.0 * c), -disc / (2.0 * c))
            };
            let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
            vec![ExtendedReal::Finite(lo), ExtendedReal::Finite(hi)]
        }
    }
}

fn tag_from_normalized(m: &Mobius) -> MobiusTag {
    let n = m.matrix() / m.det().abs().sqrt();
    if (n - Matrix2::identity()).amax() <= PARABOLIC_EPS
        || (n + Matrix2::identity()).amax() <= PARABOLIC_EPS
    {
        return MobiusTag::Identity;
    }
    let t = n.trace().abs();
    if t < 2.0 - PARABOLIC_EPS {
        MobiusTag::Elliptic
    } else if t <= 2.0 + PARABOLIC_EPS {
        MobiusTag::Parabolic
    } else {
        MobiusTag::Hyperbolic
    }
}

/// Floating-point classification by the normalized trace.
pub fn classify(m: &Mobius) -> Result<MobiusClass> {
    if !(m.det().abs() > 1e-12) {
        return Err(Error::SingularMobius);
    }
    let reversing = m.det() < 0.0;
    let tag = if reversing {
        tag_from_normalized(&m.compose(m))
    } else {
        tag_from_normalized(m)
    };
    let fp_tag = if reversing {
        MobiusTag::Hyperbolic
    } else {
        tag
    };
    Ok(MobiusClass {
        tag,
        fixed_points: fixed_points(m, fp_tag),
        orientation_reversing: reversing,
    })
}

/// Exact classification of an integer matrix `(a, b; c, d)`.
pub fn classify_exact(a: i64, b: i64, c: i64, d: i64) -> Result<MobiusClass> {
    let (a, b, c, d) = (a as i128, b as i128, c as i128, d as i128);
    let det = a * d - b * c;
    if det == 0 {
        return Err(Error::SingularMobius);
    }
    let tr = a + d;
    let tag_of = |a: i128, b: i128, c: i128, d: i128| {
        let det = a * d - b * c;
        let tr = a + d;
        if b == 0 && c == 0 && a == d {
            MobiusTag::Identity
        } else {
            match (tr * tr - 4 * det).signum() {
                -1 => MobiusTag::Elliptic,
                0 => MobiusTag::Parabolic,
                _ => MobiusTag::Hyperbolic,
            }
        }
    };
    let reversing = det < 0;
    let tag = if reversing {
        tag_of(a * a + b * c, a * b + b * d, c * a + d * c, c * b + d * d)
    } else {
        tag_of(a, b, c, d)
    };
    let m = Mobius {
        a: a as f64,
        b: b as f64,
        c: c as f64,
        d: d as f64,
    };
    let fp_tag = if reversing || tr * tr - 4 * det > 0 {
        MobiusTag::Hyperbolic
    } else {
        tag
    };
    Ok(MobiusClass {
        tag,
        fixed_points: fixed_points(&m, fp_tag),
        orientation_reversing: reversing,
    })
}

fn frob_inner(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    x.component_mul(y).sum()
}

fn is_scalar(k: &DMatrix<f64>) -> bool {
    let n = k.nrows();
    let s = k.trace() / n as f64;
    (k - DMatrix::identity(n, n) * s).amax() <= 1e-6 * k.amax().max(1.0)
}

/// Grid points `x` of the chart whose preimage `f⁻ⁿx` stays on the chart.
fn orbit_samples(f: &DiffeoOnChart, n: i32, per_axis: usize) -> Vec<Point> {
    let fn_inv = f.power(-n);
    let domain = f.domain();
    domain
        .grid_points(per_axis)
        .into_iter()
        .filter(|x| {
            let y = fn_inv.forward(x);
            y.iter().all(|v| v.is_finite()) && domain.contains_with_margin(&y, -1e-9)
        })
        .collect()
}

/// Least-squares fit of `(f_*K) K ≈ αK + βI` over a grid of the chart.
///
/// The residual is the largest pointwise Frobenius norm of the misfit.
pub fn solve_alpha_beta(
    f: &DiffeoOnChart,
    k: &LTensor,
    g0: &Metric,
    threshold: f64,
) -> Result<HomographyCoeffs> {
    if k.dim() != g0.dim() {
        return Err(Error::DimensionMismatch {
            expected: g0.dim(),
            got: k.dim(),
        });
    }
    let per_axis = k.domain().grid_res().clamp(2, 11);
    let samples = orbit_samples(f, 1, per_axis);
    if samples.is_empty() {
        return Err(Error::OutOfDomain {
            point: k.domain().center(),
        });
    }
    let d = k.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let mut rows: Vec<(DMatrix<f64>, DMatrix<f64>)> = Vec::with_capacity(samples.len());
    for x in &samples {
        let kx = k.eval(x);
        let lhs = pushforward_tensor_at(f, k.field(), x)? * &kx;
        rows.push((kx, lhs));
    }
    if rows.iter().all(|(kx, _)| is_scalar(kx)) {
        return Err(Error::ScalarK);
    }
    let mut normal = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    for (kx, lhs) in &rows {
        normal[(0, 0)] += frob_inner(kx, kx);
        normal[(0, 1)] += frob_inner(kx, &id);
        normal[(1, 1)] += frob_inner(&id, &id);
        rhs[0] += frob_inner(kx, lhs);
        rhs[1] += frob_inner(&id, lhs);
    }
    normal[(1, 0)] = normal[(0, 1)];
    let sol = normal.try_inverse().ok_or(Error::ScalarK)? * rhs;
    let (alpha, beta) = (sol[0], sol[1]);
    let residual = rows
        .iter()
        .map(|(kx, lhs)| {
            let misfit: DMatrix<f64> = lhs - kx * alpha - &id * beta;
            misfit.norm()
        })
        .fold(0.0, f64::max);
    if !(residual <= threshold) {
        return Err(Error::BadFit {
            residual,
            threshold,
        });
    }
    Ok(HomographyCoeffs {
        alpha,
        beta,
        residual,
    })
}

/// Largest pointwise discrepancy between `fⁿ_* K` and `Aⁿ·K`.
pub fn iterate_check(f: &DiffeoOnChart, k: &LTensor, a: &Mobius, n: i32) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let fpow = f.power(n);
    let an = a.pow(n)?;
    let per_axis = k.domain().grid_res().clamp(2, 11);
    let mut worst: f64 = 0.0;
    for x in orbit_samples(f, n, per_axis) {
        let pushed = pushforward_tensor_at(&fpow, k.field(), &x)?;
        let acted = an.act_tensor(&k.eval(&x)).ok_or(Error::DegenerateStage {
            power: n,
            point: x.clone(),
        })?;
        worst = worst.max((pushed - acted).norm());
    }
    Ok(worst)
}

/// Partial products `P_n = Π_{k=1..n} (Cᵏ·z) / λ₋ⁿ`, `n = 1..n_max`, for a
/// hyperbolic `C` whose lower fixed point `λ₋` attracts `[λ₋, λ₊)`.
pub fn product_limit(c: &Mobius, z: f64, n_max: usize) -> Result<Vec<f64>> {
    let class = classify(c)?;
    if class.tag != MobiusTag::Hyperbolic || class.orientation_reversing {
        return Err(Error::NotHyperbolic);
    }
    let (Some(lo), Some(hi)) = (
        class.fixed_points[0].finite(),
        class.fixed_points.get(1).and_then(|p| p.finite()),
    ) else {
        return Err(Error::NotHyperbolic);
    };
    if lo == 0.0 {
        return Err(Error::ZeroFixedPoint);
    }
    let multiplier = c.det().abs() / (c.c * lo + c.d).powi(2);
    if !(multiplier < 1.0) {
        return Err(Error::RepellingLowerFixedPoint);
    }
    if !(z >= lo && z < hi) {
        return Err(Error::OutOfBasin { z });
    }
    let mut w = z;
    let mut product = 1.0;
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        w = c.act_real(w).finite().ok_or(Error::OutOfBasin { z })?;
        product *= w / lo;
        out.push(product);
    }
    Ok(out)
}

/// Verdicts of the inequalities forced on hyperbolic eigenvalue data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorollaryReport {
    /// `λ₋^{d₋} λ₊^{d₊} · λ₋ ≤ 1`
    pub lower: bool,
    /// `λ₋^{d₋} λ₊^{d₊} · λ₊ ≥ 1`
    pub upper: bool,
    /// `λ₋ < 1 < λ₊`
    pub straddles_one: bool,
}

impl CorollaryReport {
    pub fn all(&self) -> bool {
        self.lower && self.upper && self.straddles_one
    }
}

pub fn corollary_inequalities(
    lambda_minus: f64,
    lambda_plus: f64,
    d_minus: u32,
    d_plus: u32,
) -> Result<CorollaryReport> {
    if !(lambda_minus < lambda_plus) {
        return Err(Error::BadOrder);
    }
    let p = lambda_minus.powi(d_minus as i32) * lambda_plus.powi(d_plus as i32);
    Ok(CorollaryReport {
        lower: p * lambda_minus <= 1.0,
        upper: p * lambda_plus >= 1.0,
        straddles_one: lambda_minus < 1.0 && 1.0 < lambda_plus,
    })
}

/// Sectors `{a(K − tI) : t ∈ [lo, hi]}` of the degeneracy cone, after merging
/// intersecting eigenvalue ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorDecomposition {
    pub sectors: Vec<(f64, f64)>,
}

pub fn degenerate_sectors(eigen_ranges: &[(f64, f64)]) -> Result<SectorDecomposition> {
    if eigen_ranges.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&(lo, hi)) = eigen_ranges.iter().find(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::InvalidConfig(format!("range [{lo}, {hi}] is empty")));
    }
    let mut ranges = eigen_ranges.to_vec();
    ranges.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut sectors: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in ranges {
        match sectors.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => sectors.push((lo, hi)),
        }
    }
    Ok(SectorDecomposition { sectors })
}

/// Eigenvalues of a real matrix, sorted by real then imaginary part.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let mut ev: Vec<Complex64> = m.clone().complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    ev
}

fn point_distance(x: &ExtendedComplex, y: &ExtendedComplex) -> f64 {
    match (x, y) {
        (ExtendedComplex::Finite(a), ExtendedComplex::Finite(b)) => (a - b).norm(),
        (ExtendedComplex::Infinity, ExtendedComplex::Infinity) => 0.0,
        _ => f64::INFINITY,
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Matching distance between two equal-size multisets: the optimal
/// bottleneck assignment for up to 4 elements, greedy nearest matching above.
pub fn multiset_distance(xs: &[ExtendedComplex], ys: &[ExtendedComplex]) -> f64 {
    if xs.len() != ys.len() {
        return f64::INFINITY;
    }
    let n = xs.len();
    if n <= 4 {
        return permutations(n)
            .iter()
            .map(|p| {
                (0..n)
                    .map(|i| point_distance(&xs[i], &ys[p[i]]))
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
    }
    let mut free: Vec<bool> = vec![true; n];
    let mut worst: f64 = 0.0;
    for x in xs {
        let (j, dist) = (0..n)
            .filter(|&j| free[j])
            .map(|j| (j, point_distance(x, &ys[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("a free partner remains");
        free[j] = false;
        worst = worst.max(dist);
    }
    worst
}

/// Largest matching distance between `Sp(f(x))` and `A⁻¹·Sp(x)` over `n_pts`
/// seeded random chart points whose image stays on the chart.
pub fn spectral_equivariance(
    f: &DiffeoOnChart,
    k: &LTensor,
    a: &Mobius,
    n_pts: usize,
    seed: u64,
) -> Result<f64> {
    let a_inv = a.inverse()?;
    let domain = k.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut used = 0;
    let mut attempts = 0;
    while used < n_pts {
        attempts += 1;
        if attempts > 100 * n_pts.max(1) {
            return Err(Error::OutOfDomain {
                point: domain.center(),
            });
        }
        let x = domain.sample_interior(&mut rng, 0.0);
        let fx = f.forward(&x);
        if !domain.contains(&fx) {
            continue;
        }
        let at_fx: Vec<ExtendedComplex> = eigenvalues(&k.eval(&fx))
            .into_iter()
            .map(ExtendedComplex::Finite)
            .collect();
        let mapped: Vec<ExtendedComplex> = eigenvalues(&k.eval(&x))
            .into_iter()
            .map(|z| a_inv.act_complex(ExtendedComplex::Finite(z)))
            .collect();
        worst = worst.max(multiset_distance(&at_fx, &mapped));
        used += 1;
    }
    Ok(worst)
}

/// Eigenvalue samples of a tensor field with their source points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectrumCloud {
    pub samples: Vec<(Complex64, Point)>,
}

impl SpectrumCloud {
    pub fn from_points(k: &LTensor, points: &[Point]) -> Self {
        let samples = points
            .iter()
            .flat_map(|p| {
                eigenvalues(&k.eval(p))
                    .into_iter()
                    .map(move |z| (z, p.clone()))
            })
            .collect();
        Self { samples }
    }

    /// Largest distance from a conjugated sample to the spectrum at the same
    /// source point; zero for real tensors up to rounding.
    pub fn conjugation_defect(&self) -> f64 {
        self.samples
            .iter()
            .map(|(z, p)| {
                self.samples
                    .iter()
                    .filter(|(_, q)| q == p)
                    .map(|(w, _)| (z.conj() - w).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `re, im, x_1..x_d`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let d = self.samples.first().map_or(0, |(_, p)| p.len());
        let mut out = String::from("re,im");
        for i in 1..=d {
            let _ = write!(out, ",x_{i}");
        }
        out.push('\n');
        for (z, p) in &self.samples {
            let _ = write!(out, "{:.16e},{:.16e}", z.re, z.im);
            for x in p {
                let _ = write!(out, ",{x:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Squared distortion factors of a map on its eigenspaces and its squared
/// Jacobian, from the eigenvalue data at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionFactors {
    pub zeta_minus_sq: f64,
    pub zeta_lambda_sq: f64,
    pub zeta_plus_sq: f64,
    pub jac_sq: f64,
}

/// Eigenvalue data of a map at one point: the constant extreme eigenvalues,
/// their multiplicities, and the middle eigenvalue at the image point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenData {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub lambda_fx: f64,
    pub d_minus: u32,
    pub d_plus: u32,
}

impl EigenData {
    /// Data of the inverse map at `f(x)`: extremes swap and invert, so do the
    /// multiplicities, and the middle eigenvalue inverts.
    pub fn inverse_map(&self, lambda_at_image: f64) -> EigenData {
        EigenData {
            lambda_minus: 1.0 / self.lambda_plus,
            lambda_plus: 1.0 / self.lambda_minus,
            lambda_fx: 1.0 / lambda_at_image,
            d_minus: self.d_plus,
            d_plus: self.d_minus,
        }
    }

    pub fn factors(&self) -> Result<DistortionFactors> {
        distortion_factors(
            self.lambda_minus,
            self.lambda_plus,
            self.lambda_fx,
            self.d_minus,
            self.d_plus,
        )
    }
}

/// With `P = λ₋^{d₋} λ₊^{d₊} λ(f(x))` and `d = d₋ + d₊ + 1`:
/// `ζ₋² = Pλ₋`, `ζ_λ² = Pλ(f(x))`, `ζ₊² = Pλ₊`, `Jac² = P^{1+d}`.
pub fn distortion_factors(
    lambda_minus: f64,
    lambda_plus: f64,
    lambda_fx: f64,
    d_minus: u32,
    d_plus: u32,
) -> Result<DistortionFactors> {
    if !(lambda_minus > 0.0 && lambda_plus > 0.0 && lambda_fx > 0.0) {
        return Err(Error::NonPositiveEigen);
    }
    let p = lambda_minus.powi(d_minus as i32) * lambda_plus.powi(d_plus as i32) * lambda_fx;
    let d = (d_minus + d_plus + 1) as i32;
    Ok(DistortionFactors {
        zeta_minus_sq: p * lambda_minus,
        zeta_lambda_sq: p * lambda_fx,
        zeta_plus_sq: p * lambda_plus,
        jac_sq: p.powi(1 + d),
    })
}
