//! The projective Weyl tensor and a projective-flatness test.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::chart_core::{FdConfig, Point};
use crate::error::{Error, Result};
use crate::metric_geometry::{bilinear, curvature, sectional_curvature, CurvatureData, Metric, Riemann};
use crate::report::json_number;

/// Default flatness tolerance on `max |W|` with finite-difference curvature.
pub const DEFAULT_WEYL_TOL: f64 = 1e-4;
/// Sectional-curvature variance below which curvature counts as constant.
pub const CURVATURE_VARIANCE_TOL: f64 = 1e-6;

/// `W^i_{jkl} = R^i_{jkl} − (δ^i_k Ric_{jl} − δ^i_l Ric_{jk})/(d − 1)` as an
/// evaluable field.
#[derive(Clone, Debug)]
pub struct WeylField {
    curv: CurvatureData,
}

impl WeylField {
    pub fn curvature(&self) -> &CurvatureData {
        &self.curv
    }

    pub fn eval(&self, p: &[f64]) -> Result<Riemann> {
        let r = self.curv.riemann(p)?;
        Ok(weyl_from_riemann(&r))
    }

    /// Largest `|W^i_{ikl}|` and `|W^i_{jil}|`.
    pub fn trace_defect(&self, p: &[f64]) -> Result<f64> {
        let w = self.eval(p)?;
        let d = w.dim();
        let mut m: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let first: f64 = (0..d).map(|i| w.get(i, i, a, b)).sum();
                let second: f64 = (0..d).map(|i| w.get(i, a, i, b)).sum();
                m = m.max(first.abs()).max(second.abs());
            }
        }
        Ok(m)
    }

    /// Largest component over a grid of the chart interior, in parallel.
    pub fn max_abs_on(&self, samples: &[Point]) -> Result<f64> {
        let vals: Vec<Result<f64>> = samples.par_iter().map(|p| Ok(self.eval(p)?.max_abs())).collect();
        vals.into_iter().try_fold(0.0, |m, v| Ok(f64::max(m, v?)))
    }

    /// Default interior sample grid (5 points per axis, clear of the stencils).
    pub fn samples(&self) -> Vec<Point> {
        let domain = self.curv.metric().domain();
        let margin = self.curv.margin() + 1e-3;
        domain.interior_grid(5, margin)
    }
}

fn weyl_from_riemann(r: &Riemann) -> Riemann {
    let d = r.dim();
    let ric = r.ricci();
    let c = 1.0 / (d as f64 - 1.0);
    let mut w = Riemann::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let mut v = r.get(i, j, k, l);
                    if i == k {
                        v -= c * ric[(j, l)];
                    }
                    if i == l {
                        v += c * ric[(j, k)];
                    }
                    w.set(i, j, k, l, v);
                }
            }
        }
    }
    w
}

/// Projective Weyl field of `metric`; refuses dimension 2.
pub fn projective_weyl(curv: &CurvatureData, metric: &Metric) -> Result<WeylField> {
    if metric.dim() < 3 {
        return Err(Error::DimensionTooLow { dim: metric.dim() });
    }
    Ok(WeylField { curv: curv.clone() })
}

/// A `g`-orthonormal frame from random vectors by Gram–Schmidt.
pub fn orthonormal_frame<R: Rng + ?Sized>(metric: &Metric, p: &[f64], rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let g = metric.eval(p);
    let d = metric.dim();
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(d);
    while frame.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for e in &frame {
            let c = bilinear(&g, &v, e);
            v.iter_mut().zip(e).for_each(|(vi, ei)| *vi -= c * ei);
        }
        let n2 = bilinear(&g, &v, &v);
        if n2 <= 1e-6 {
            continue;
        }
        if !metric.is_riemannian() {
            return Err(Error::InvalidConfig("orthonormal frames need a Riemannian metric".into()));
        }
        let n = n2.sqrt();
        frame.push(v.into_iter().map(|x| x / n).collect());
    }
    Ok(frame)
}

/// Evaluates the orthonormal-quadruple form
/// `g(R'(u,v)w, z) − (δ_{zv} Ric(w,u) − δ_{zu} Ric(w,v))/(d − 1)` with
/// `R'(u,v) = R(v,u)` on a `g`-orthonormal frame and returns the largest
/// deviation from `g(W(v,u)w, z)` of the coordinate form.
pub fn frame_formula_deviation(weyl: &WeylField, p: &[f64], frame: &[Vec<f64>]) -> Result<f64> {
    let metric = weyl.curv.metric();
    let g = metric.eval(p);
    let r = weyl.curv.riemann(p)?;
    let ric = r.ricci();
    let w = weyl_from_riemann(&r);
    let d = frame.len();
    let c = 1.0 / (d as f64 - 1.0);
    let ric_of = |x: &[f64], y: &[f64]| bilinear(&ric, x, y);
    let mut worst: f64 = 0.0;
    for (a, u) in frame.iter().enumerate() {
        for (b, v) in frame.iter().enumerate() {
            for wv in frame {
                let r_vu_w = r.apply(v, u, wv);
                let w_vu_w = w.apply(v, u, wv);
                for (e, z) in frame.iter().enumerate() {
                    let delta_zv = if e == b { 1.0 } else { 0.0 };
                    let delta_zu = if e == a { 1.0 } else { 0.0 };
                    let frame_form =
                        bilinear(&g, &r_vu_w, z) - c * (delta_zv * ric_of(wv, u) - delta_zu * ric_of(wv, v));
                    worst = worst.max((frame_form - bilinear(&g, &w_vu_w, z)).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Outcome of [`flatness_test`].
#[derive(Clone, Debug, PartialEq)]
pub struct FlatnessReport {
    pub model: String,
    pub d: usize,
    /// Largest Weyl component over the grid; zero in dimension 2.
    pub max_weyl: f64,
    /// Variance of sectional curvature over random (point, plane) draws.
    pub curv_variance: f64,
    pub tol: f64,
    pub verdict: bool,
}

impl FlatnessReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "model": self.model,
            "d": self.d,
            "max_weyl": json_number(self.max_weyl),
            "curv_variance": json_number(self.curv_variance),
            "tol": json_number(self.tol),
            "verdict": self.verdict,
        })
    }
}

/// Sectional curvatures at `n_draws` seeded random (point, plane) pairs in the
/// chart interior.
pub fn sectional_samples(metric: &Metric, n_draws: usize, seed: u64) -> Result<Vec<f64>> {
    let curv = curvature(metric, &FdConfig::second_derivative());
    let margin = curv.margin() + 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = metric.dim();
    let draws: Vec<(Point, Vec<f64>, Vec<f64>)> = (0..n_draws)
        .map(|_| {
            let p = metric.domain().sample_interior(&mut rng, margin);
            let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (p, u, v)
        })
        .collect();
    draws
        .par_iter()
        .map(|(p, u, v)| sectional_curvature(&curv, metric, p, u, v))
        .collect()
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Weyl-tensor size (dimension ≥ 3) and sectional-curvature variance over 50
/// seeded draws; the verdict needs `max |W| < tol` and variance `< 1e-6`.
pub fn flatness_test(model: &str, metric: &Metric, tol: f64, seed: u64) -> Result<FlatnessReport> {
    let d = metric.dim();
    let curv = curvature(metric, &FdConfig::second_derivative());
    let max_weyl = if d >= 3 {
        let weyl = projective_weyl(&curv, metric)?;
        weyl.max_abs_on(&weyl.samples())?
    } else {
        0.0
    };
    let curv_variance = variance(&sectional_samples(metric, 50, seed)?);
    let verdict = max_weyl < tol && curv_variance < CURVATURE_VARIANCE_TOL;
    Ok(FlatnessReport { model: model.to_string(), d, max_weyl, curv_variance, tol, verdict })
}

/// `W(Df u, Df v) Df w` at `f(p)` against `Df (W(u, v) w)` at `p`, for the
/// given frame, as the largest component difference.
pub fn transformation_defect(
    weyl: &WeylField,
    f: &crate::chart_core::DiffeoOnChart,
    p: &[f64],
    frame: &[Vec<f64>],
) -> Result<f64> {
    let df = f.differential(p);
    let push = |v: &[f64]| -> Vec<f64> { (&df * DVector::from_column_slice(v)).iter().copied().collect() };
    let fp = f.forward(p);
    let w_p = weyl.eval(p)?;
    let w_fp = weyl.eval(&fp)?;
    let mut worst: f64 = 0.0;
    for u in frame {
        for v in frame {
            for w in frame {
                let lhs = w_fp.apply(&push(u), &push(v), &push(w));
                let rhs = push(&w_p.apply(u, v, w));
                let diff = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst = worst.max(diff);
            }
        }
    }
    Ok(worst)
}
