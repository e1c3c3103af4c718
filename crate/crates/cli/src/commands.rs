use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use projequiv::chart_core::{FdConfig, FdOrder, MatrixField, QuadratureRule};
use projequiv::homography_dynamics::*;
use projequiv::metric_geometry::*;
use projequiv::model_zoo::*;
use projequiv::projective_algebra::*;
use projequiv::weyl_flatness::{flatness_test, frame_formula_deviation, orthonormal_frame, projective_weyl};

use crate::models::ModelId;
use crate::report::Record;
use crate::{CliError, Settings};

/// Records plus optional CSV payload.
pub type Outcome = Result<(Vec<Record>, Option<String>), CliError>;

const GEODESIC_T_END: f64 = 2.0;
const GEODESIC_STEP: f64 = 1e-2;
const ENERGY_STEP: f64 = 1e-3;
const ENERGY_TOL: f64 = 1e-6;

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn fd(s: &Settings) -> Result<FdConfig, CliError> {
    match s.fd_step {
        Some(h) => Ok(FdConfig::new(h, FdOrder::Fourth)?),
        None => Ok(FdConfig::first_derivative()),
    }
}

/// Checks that the model is among `allowed` (by kind) before any work.
pub fn check_model(sub: &str, model: ModelId, basis: Option<&str>, csv: bool) -> Result<(), CliError> {
    let ok = match sub {
        "geodesics" | "weyl" => model.is_metric(),
        "dini" => model == ModelId::Dini,
        "matveev" | "spectrum" => model == ModelId::Matveev,
        "mobility" => matches!(model, ModelId::Flat(_) | ModelId::Dini),
        "homography" => true,
        "veronese" => matches!(model, ModelId::Veronese(..) | ModelId::Segre(..)),
        "functional" => model == ModelId::Flat(2),
        _ => false,
    };
    if !ok {
        return Err(usage(format!("model '{model}' is not supported by '{sub}'")));
    }
    if let Some(b) = basis {
        let fits = match (sub, model) {
            ("mobility", ModelId::Flat(_)) => matches!(b, "poly1" | "poly2"),
            ("mobility", ModelId::Dini) => matches!(b, "span" | "span+random"),
            _ => false,
        };
        if !fits {
            return Err(usage(format!("basis '{b}' does not apply to '{sub}' with model '{model}'")));
        }
    }
    if csv && !matches!(sub, "geodesics" | "spectrum") {
        return Err(usage(format!("'{sub}' writes no CSV")));
    }
    Ok(())
}

pub fn default_model(sub: &str) -> ModelId {
    match sub {
        "dini" => ModelId::Dini,
        "matveev" | "spectrum" => ModelId::Matveev,
        "weyl" => ModelId::Sphere(3),
        "veronese" => ModelId::Veronese(1, 2),
        _ => ModelId::Flat(2),
    }
}

fn metric_of(model: ModelId, s: &Settings) -> Result<Metric, CliError> {
    Ok(match model {
        ModelId::Dini => dini_default(s.grid_res.unwrap_or(41))?.g,
        ModelId::Matveev => matveev_default(s.grid_res.unwrap_or(21))?.g,
        ModelId::Flat(d) => constant_curvature_chart(d, 0)?,
        ModelId::Sphere(d) => constant_curvature_chart(d, 1)?,
        ModelId::Warped(d) => sphere_polar(d)?,
        ModelId::Perturbed(d) => perturbed_sphere(d)?,
        ModelId::FubiniStudy(n) => fubini_study(n, 0)?,
        ModelId::Veronese(..) | ModelId::Segre(..) => unreachable!("rejected by check_model"),
    })
}

pub fn geodesics(model: ModelId, s: &Settings) -> Outcome {
    let g = metric_of(model, s)?;
    let tol = s.tol.unwrap_or(1e-4);
    let width = g.domain().bounds().iter().map(|(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min);
    let launches = random_launches(&g, s.n_geodesics, s.seed, 0.05 * width);
    let paths: Vec<GeodesicPath> =
        geodesic_batch(&g, &launches, GEODESIC_T_END, ENERGY_STEP).into_iter().collect::<Result<_, _>>()?;
    let cfg = fd(s)?;
    let (mut drift, mut residual): (f64, f64) = (0.0, 0.0);
    let mut csv = String::new();
    for (i, path) in paths.iter().enumerate() {
        drift = drift.max(path.energy_drift(&g));
        if path.len() >= 5 {
            // drop the integrator accelerations so the trajectory is differenced
            let mut traced = path.clone();
            traced.samples.iter_mut().for_each(|s| s.acceleration = None);
            residual = residual.max(unparam_geodesic_residual(&traced, &g, &cfg)?.value);
        }
        let body = path.to_csv();
        let mut lines = body.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            csv.push_str(&format!("path,{header}\n"));
        }
        for line in lines {
            csv.push_str(&format!("{i},{line}\n"));
        }
    }
    let records = vec![
        Record::below("energy_drift", drift, ENERGY_TOL),
        Record::below("self_residual", residual, tol),
        Record::exact("paths", paths.len() as f64, s.n_geodesics as f64),
    ];
    Ok((records, Some(csv)))
}

pub fn dini(s: &Settings) -> Outcome {
    let pair = dini_default(s.grid_res.unwrap_or(41))?;
    let tol = s.tol.unwrap_or(1e-4);
    let cfg = fd(s)?;
    let forward = geodesic_sharing(&pair.g, &pair.g_bar, None, s.n_geodesics, s.seed, GEODESIC_T_END, GEODESIC_STEP)?;
    let backward = geodesic_sharing(
        &pair.g_bar,
        &pair.g,
        None,
        s.n_geodesics,
        s.seed.wrapping_add(1),
        GEODESIC_T_END,
        GEODESIC_STEP,
    )?;
    let samples = check_samples(pair.g.domain(), 0.1);
    Ok((
        vec![
            Record::below("g_geodesics_vs_g_bar", forward.max_residual, tol),
            Record::below("g_bar_geodesics_vs_g", backward.max_residual, tol),
            Record::exact("paths_tested", (forward.paths + backward.paths) as f64, 2.0 * s.n_geodesics as f64),
            Record::below("sinjukov_residual", sinjukov_residual(&pair.l, &cfg)?, tol),
            Record::below("projective_connection", projective_connection_check(&pair.g, &pair.g_bar, &cfg, &samples)?, tol),
        ],
        None,
    ))
}

fn matveev_homography(ex: &MatveevExample) -> Result<(HomographyCoeffs, Mobius), CliError> {
    let coeffs = solve_alpha_beta(&ex.sigma, &ex.l, &ex.g, DEFAULT_FIT_THRESHOLD)?;
    let a = Mobius::from_coeffs(&coeffs)?;
    Ok((coeffs, a))
}

pub fn matveev(s: &Settings) -> Outcome {
    let ex = matveev_default(s.grid_res.unwrap_or(21))?;
    let tol = s.tol.unwrap_or(1e-4);
    let images =
        geodesic_sharing(&ex.g, &ex.g, Some(&ex.sigma), s.n_geodesics, s.seed, GEODESIC_T_END, GEODESIC_STEP)?;
    let (coeffs, a) = matveev_homography(&ex)?;
    let square = (a.compose(&a).matrix() - Matrix2::identity()).amax();
    Ok((
        vec![
            Record::below("sigma_image_residual", images.max_residual, tol),
            Record::exact("paths_tested", images.paths as f64, s.n_geodesics as f64),
            Record::below("alpha", coeffs.alpha.abs(), 1e-4),
            Record::below("beta_minus_one", (coeffs.beta - 1.0).abs(), 1e-4),
            Record::below("fit_residual", coeffs.residual, 1e-5),
            Record::below("det", a.det(), 0.0),
            Record::below("square_minus_identity", square, 1e-6),
            Record::below("iterate_n2", iterate_check(&ex.sigma, &ex.l, &a, 2)?, 1e-6),
        ],
        None,
    ))
}

pub fn mobility(model: ModelId, basis: Option<&str>, s: &Settings) -> Outcome {
    let cfg = fd(s)?;
    let tol = s.tol.unwrap_or(1e-7);
    let (g, fields, expected) = match model {
        ModelId::Flat(d) => {
            let domain = projequiv::chart_core::ChartDomain::cube(d, 0.0, 1.0, s.grid_res.unwrap_or(11))?;
            let degree = if basis == Some("poly1") { 1 } else { 2 };
            // the solutions are quadratic; degree 1 keeps the constant and linear members
            let expected = if degree == 2 { (d + 1) * (d + 2) / 2 } else { d * (d + 1) / 2 + d };
            (Metric::flat(domain.clone()), polynomial_basis(&domain, degree), expected)
        }
        ModelId::Dini => {
            let pair = dini_default(s.grid_res.unwrap_or(41))?;
            let mut fields = vec![MatrixField::identity(pair.g.domain().clone()), pair.l.field().clone()];
            if basis == Some("span+random") {
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
                let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                fields.push(MatrixField::new(pair.g.domain().clone(), move |p| {
                    let b = c[2] * p[0] * p[1];
                    nalgebra::DMatrix::from_row_slice(
                        2,
                        2,
                        &[c[0] + c[1] * p[1] * p[1], b, b, c[3] + c[4] * p[0] + c[5] * p[0] * p[1]],
                    )
                }));
            }
            (pair.g, fields, 2)
        }
        _ => unreachable!("rejected by check_model"),
    };
    let samples = check_samples(g.domain(), 2.0 * cfg.reach());
    let r = mobility_in_span(&g, &fields, tol, &cfg, &samples)?;
    let mut records = vec![Record::exact("dimension", r.dimension as f64, expected as f64)];
    if r.dimension < fields.len() {
        records.push(Record::above("gap", r.gap, 1e3));
    }
    Ok((records, None))
}

fn canonical_mismatches() -> Result<f64, CliError> {
    let cases = [
        ((0, -1, 1, 0), MobiusTag::Elliptic),
        ((1, 1, 0, 1), MobiusTag::Parabolic),
        ((2, 0, 0, 1), MobiusTag::Hyperbolic),
    ];
    let mut bad = 0;
    for ((a, b, c, d), tag) in cases {
        let exact = classify_exact(a, b, c, d)?;
        let float = classify(&Mobius::new(a as f64, b as f64, c as f64, d as f64)?)?;
        if exact.tag != tag || float.tag != tag || exact.fixed_points != float.fixed_points {
            bad += 1;
        }
    }
    Ok(bad as f64)
}

fn group_law_error(seed: u64) -> Result<f64, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = |rng: &mut ChaCha8Rng| loop {
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        if (v[0] * v[3] - v[1] * v[2]).abs() > 0.2 {
            return Mobius::new(v[0], v[1], v[2], v[3]);
        }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (m, n) = (random(&mut rng)?, random(&mut rng)?);
        let z: f64 = rng.gen_range(-5.0..5.0);
        if (n.c * z + n.d).abs() < 1e-2 {
            continue;
        }
        let w = n.act_real(z).finite().expect("pole excluded");
        let direct = m.compose(&n).act_real(z);
        if w.abs() > 1e3 || (m.c * w + m.d).abs() < 1e-2 {
            continue;
        }
        let (Some(direct), Some(two)) = (direct.finite(), m.act_real(w).finite()) else { continue };
        if direct.abs() > 1e3 {
            continue;
        }
        worst = worst.max((direct - two).abs() / direct.abs().max(1.0));
    }
    Ok(worst)
}

/// Largest deviation of the tail ratio of successive partial-product
/// differences from the contraction multiplier, relative to the multiplier,
/// over a grid of `[λ₋, λ₊ − 0.1]`.
fn product_ratio_deviation() -> Result<f64, CliError> {
    // fixed points 1 and 2, multiplier ½ at 1
    let phi = Mobius::new(1.0, -1.0, 1.0, -2.0)?;
    let c = phi.inverse()?.compose(&Mobius::new(0.5, 0.0, 0.0, 1.0)?).compose(&phi);
    let multiplier = 0.5;
    let mut worst: f64 = 0.0;
    for i in 1..=18 {
        let z = 1.0 + 0.05 * i as f64;
        let p = product_limit(&c, z, 40)?;
        let diffs: Vec<f64> = p.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for w in diffs.windows(2).skip(15) {
            if w[0] > 1e-12 {
                worst = worst.max((w[1] / w[0] / multiplier - 1.0).abs());
            }
        }
    }
    let fixed = product_limit(&c, 1.0, 10)?;
    if fixed.iter().any(|&v| v != 1.0) {
        worst = f64::INFINITY;
    }
    Ok(worst)
}

fn inequality_mismatches() -> Result<f64, CliError> {
    let mut bad = 0;
    let both = corollary_inequalities(0.5, 2.0, 1, 1)?;
    if !(both.lower && both.upper && both.straddles_one) {
        bad += 1;
    }
    if corollary_inequalities(2.0, 3.0, 1, 1)?.straddles_one {
        bad += 1;
    }
    if !matches!(corollary_inequalities(1.0, 1.0, 1, 1), Err(projequiv::Error::BadOrder)) {
        bad += 1;
    }
    Ok(bad as f64)
}

pub fn homography(s: &Settings) -> Outcome {
    Ok((
        vec![
            Record::exact("canonical_classification_mismatches", canonical_mismatches()?, 0.0),
            Record::below("group_law_error", group_law_error(s.seed)?, s.tol.unwrap_or(1e-10)),
            Record::below("product_ratio_deviation", product_ratio_deviation()?, 0.1),
            Record::exact("eigenvalue_inequality_mismatches", inequality_mismatches()?, 0.0),
        ],
        None,
    ))
}

pub fn weyl(model: ModelId, s: &Settings) -> Outcome {
    let g = metric_of(model, s)?;
    let tol = s.tol.unwrap_or(projequiv::weyl_flatness::DEFAULT_WEYL_TOL);
    let report = flatness_test(&model.to_string(), &g, tol, s.seed)?;
    let mut records = vec![];
    if g.dim() >= 3 {
        records.push(Record::below("max_weyl", report.max_weyl, tol));
        let curv = curvature(&g, &FdConfig::second_derivative());
        let weyl = projective_weyl(&curv, &g)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let p = g.domain().sample_interior(&mut rng, curv.margin() + 1e-3);
            let frame = orthonormal_frame(&g, &p, &mut rng)?;
            worst = worst.max(frame_formula_deviation(&weyl, &p, &frame)?);
        }
        records.push(Record::below("frame_formula_agreement", worst, 1e-5));
    }
    records.push(Record::below("curvature_variance", report.curv_variance, projequiv::weyl_flatness::CURVATURE_VARIANCE_TOL));
    Ok((records, None))
}

pub fn veronese_pullback(model: ModelId, s: &Settings) -> Outcome {
    let tol = s.tol.unwrap_or(1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let (map, target, expected_n, n_target, reference, factor) = match model {
        ModelId::Veronese(d, k) => {
            let v = projequiv::model_zoo::veronese(d, k, 0.5)?;
            let expected = (1..=k as usize).fold(1usize, |acc, i| acc * (d + i) / i) - 1;
            let base = fubini_study_on(v.map.source().clone());
            (v.map, v.target, expected, v.n_target, base, k as f64)
        }
        ModelId::Segre(m, n) => {
            let sg = segre(m, n, 0.5)?;
            let (dm, dn) = (ProjectiveChart::new(m, 0, 0.5)?.domain()?, ProjectiveChart::new(n, 0, 0.5)?.domain()?);
            let base = product_metric(&fubini_study_on(dm), &fubini_study_on(dn));
            (sg.map, sg.target, (m + 1) * (n + 1) - 1, sg.n_target, base, 1.0)
        }
        _ => unreachable!("rejected by check_model"),
    };
    let pulled = pullback_metric(&map, &target)?;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = map.source().sample_interior(&mut rng, 0.0);
        worst = worst.max((pulled.eval(&p) - reference.eval(&p) * factor).amax());
    }
    Ok((
        vec![
            Record::below("pullback_deviation", worst, tol),
            Record::exact("target_dimension", n_target as f64, expected_n as f64),
        ],
        None,
    ))
}

pub fn functional(s: &Settings) -> Outcome {
    let grid = s.grid_res.unwrap_or(201);
    let tol = s.tol.unwrap_or(1e-4);
    let f = sine_shear_diffeo(grid)?;
    let g0 = Metric::flat(f.domain().clone());
    let l = LTensor::new(
        MatrixField::new(f.domain().clone(), |p| {
            nalgebra::DMatrix::from_row_slice(2, 2, &[2.0 + 0.5 * p[0], 0.3 * p[1], 0.3 * p[1], 1.5 + 0.2 * p[0] * p[1]])
        }),
        &g0,
    )?;
    let rule = if grid % 2 == 1 { QuadratureRule::Simpson } else { QuadratureRule::Trapezoid };
    let rel = |kind: FunctionalKind, moved: &LTensor| -> Result<f64, CliError> {
        let before = functionals(l.field(), &g0, kind, rule)?;
        let after = functionals(moved.field(), &g0, kind, rule)?;
        Ok((after - before).abs() / before.abs())
    };
    let n_change = rel(FunctionalKind::N, &rho_apply(&f, &l, &g0)?)?;
    let q_change = rel(FunctionalKind::Q, &rho_transfer_apply(&f, &l, &g0)?)?;
    Ok((
        vec![
            Record::below("n_relative_change", n_change, tol),
            Record::below("q_relative_change", q_change, tol),
            Record::below("chain_rule_n3", chain_rule_check(&f, &g0, 3, 7)?, 1e-8),
        ],
        None,
    ))
}

pub fn spectrum(s: &Settings) -> Outcome {
    let ex = matveev_default(s.grid_res.unwrap_or(21))?;
    let (_, a) = matveev_homography(&ex)?;
    let n = 200;
    let deviation = spectral_equivariance(&ex.sigma, &ex.l, &a, n, s.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let points: Vec<_> = (0..n).map(|_| ex.g.domain().sample_interior(&mut rng, 0.0)).collect();
    let cloud = SpectrumCloud::from_points(&ex.l, &points);
    Ok((
        vec![
            Record::below("spectral_deviation", deviation, s.tol.unwrap_or(1e-6)),
            Record::below("conjugation_defect", cloud.conjugation_defect(), 1e-12),
        ],
        Some(cloud.to_csv()),
    ))
}
