use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use projequiv::chart_core::{ChartDomain, DiffeoOnChart, FdConfig, MatrixField, QuadratureRule};
use projequiv::metric_geometry::Metric;
use projequiv::model_zoo::{dini_default, sine_shear_diffeo};
use projequiv::projective_algebra::*;

fn sample_l(domain: &ChartDomain, base: &Metric) -> LTensor {
    let field = MatrixField::new(domain.clone(), |p| {
        DMatrix::from_row_slice(2, 2, &[2.0 + 0.5 * p[0], 0.3 * p[1], 0.3 * p[1], 1.5 + 0.2 * p[0] * p[1]])
    });
    LTensor::new(field, base).unwrap()
}

#[test]
fn n_functional_is_invariant() {
    let f = sine_shear_diffeo(201).unwrap();
    let g0 = Metric::flat(f.domain().clone());
    let l = sample_l(f.domain(), &g0);
    let before = functionals(l.field(), &g0, FunctionalKind::N, QuadratureRule::Simpson).unwrap();
    let moved = rho_apply(&f, &l, &g0).unwrap();
    let after = functionals(moved.field(), &g0, FunctionalKind::N, QuadratureRule::Simpson).unwrap();
    let rel = (after - before).abs() / before.abs();
    assert!(rel < 1e-4, "relative change {rel:e}");
    // the pushforward alone does not preserve it
    let pushed = MatrixField::new(f.domain().clone(), {
        let (f, l) = (f.clone(), l.clone());
        move |x| pushforward_tensor_at(&f, l.field(), x).unwrap()
    });
    let naive = functionals(&pushed, &g0, FunctionalKind::N, QuadratureRule::Simpson).unwrap();
    assert!((naive - before).abs() / before.abs() > 1e-3);
}

#[test]
fn q_functional_is_invariant() {
    let f = sine_shear_diffeo(201).unwrap();
    let g0 = Metric::flat(f.domain().clone());
    let t = sample_l(f.domain(), &g0);
    let before = functionals(t.field(), &g0, FunctionalKind::Q, QuadratureRule::Simpson).unwrap();
    let moved = rho_transfer_apply(&f, &t, &g0).unwrap();
    let after = functionals(moved.field(), &g0, FunctionalKind::Q, QuadratureRule::Simpson).unwrap();
    let rel = (after - before).abs() / before.abs();
    assert!(rel < 1e-4, "relative change {rel:e}");
}

#[test]
fn chain_rule_for_strength() {
    let domain = ChartDomain::cube(2, 0.0, 1.0, 11).unwrap();
    let g0 = Metric::flat(domain.clone());
    let contraction = DiffeoOnChart::new(
        domain,
        |p| vec![p[0] / 2.0 + 0.25, p[1] / 2.0 + 0.25],
        |p| vec![2.0 * (p[0] - 0.25), 2.0 * (p[1] - 0.25)],
    )
    .with_differential(|_| DMatrix::identity(2, 2) * 0.5);
    assert!(chain_rule_check(&contraction, &g0, 3, 5).unwrap() < 1e-8);

    let f = sine_shear_diffeo(11).unwrap();
    let g0 = Metric::flat(f.domain().clone());
    assert!(chain_rule_check(&f, &g0, 3, 7).unwrap() < 1e-8);
}

#[test]
fn rho_is_a_representation() {
    let f = sine_shear_diffeo(11).unwrap();
    let h = f.inverted().compose(&f.inverted());
    let g0 = Metric::flat(f.domain().clone());
    let l = sample_l(f.domain(), &g0);
    let composite = rho_apply(&f.compose(&h), &l, &g0).unwrap();
    let stepwise = rho_apply(&f, &rho_apply(&h, &l, &g0).unwrap(), &g0).unwrap();
    for p in g0.domain().grid_points(9) {
        assert!((composite.eval(&p) - stepwise.eval(&p)).amax() < 1e-7);
    }
    // ρ(f)I = K_f
    let k = strength_of(&f, &g0).unwrap();
    let of_identity = rho_apply(&f, &LTensor::identity(&g0), &g0).unwrap();
    for p in g0.domain().grid_points(5) {
        assert!((of_identity.eval(&p) - k.k_at(&p).unwrap()).amax() < 1e-12);
    }
}

#[test]
fn sinjukov_controls() {
    let dini = dini_default(41).unwrap();
    let cfg = FdConfig::first_derivative();
    assert!(sinjukov_residual(&LTensor::identity(&dini.g), &cfg).unwrap() < 1e-8);
    assert!(sinjukov_residual(&LTensor::scalar(&dini.g, 2.5), &cfg).unwrap() < 1e-8);
    assert!(sinjukov_residual(&dini.l, &cfg).unwrap() < 1e-4);

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let c: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let random = MatrixField::new(dini.g.domain().clone(), move |p| {
        let (x, y) = (p[0], p[1]);
        let a = c[0] + c[1] * x + c[2] * y * y;
        let b = c[3] * x * y + c[4] * y;
        let d = c[5] + c[6] * x * x + c[7] * y + c[8] * x * y;
        DMatrix::from_row_slice(2, 2, &[a, b, b, d])
    });
    let control = LTensor::new(random, &dini.g).unwrap();
    assert!(sinjukov_residual(&control, &cfg).unwrap() > 1e-2);

    let samples = check_samples(dini.g.domain(), 0.1);
    let basis = vec![MatrixField::identity(dini.g.domain().clone()), dini.l.field().clone(), control.field().clone()];
    let r = mobility_in_span(&dini.g, &basis, 1e-7, &cfg, &samples).unwrap();
    assert_eq!(r.dimension, 2, "{r:?}");
}

#[test]
fn flat_mobility_counts() {
    let cfg = FdConfig::first_derivative();
    for (d, expected) in [(2usize, 6usize), (3, 10)] {
        let domain = ChartDomain::cube(d, 0.0, 1.0, 11).unwrap();
        let g = Metric::flat(domain.clone());
        let basis = polynomial_basis(&domain, 2);
        let samples = check_samples(&domain, 0.05);
        let r = mobility_in_span(&g, &basis, 1e-7, &cfg, &samples).unwrap();
        assert_eq!(r.dimension, expected, "{r:?}");
        assert!(r.gap >= 1e3, "gap {:e}", r.gap);
    }
}

#[test]
fn parallel_exactly_when_eigenvalues_are_constant() {
    let dini = dini_default(41).unwrap();
    let cfg = FdConfig::first_derivative();
    let samples = check_samples(dini.g.domain(), 0.1);
    let spread = |l: &LTensor| {
        let evs: Vec<Vec<f64>> = samples
            .iter()
            .map(|p| {
                let mut e: Vec<f64> = projequiv::homography_dynamics::eigenvalues(&l.eval(p)).iter().map(|z| z.re).collect();
                e.sort_by(f64::total_cmp);
                e
            })
            .collect();
        (0..2)
            .map(|i| {
                let (lo, hi) = evs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| (a.min(e[i]), b.max(e[i])));
                hi - lo
            })
            .fold(0.0, f64::max)
    };
    for (l, parallel) in [
        (LTensor::identity(&dini.g), true),
        (LTensor::scalar(&dini.g, 3.0), true),
        (dini.l.clone(), false),
    ] {
        let nabla = covariant_derivative_max(&l, &cfg, &samples).unwrap();
        assert_eq!(nabla < 1e-5, parallel, "|∇L| = {nabla:e}");
        assert_eq!(spread(&l) < 1e-5, parallel);
    }
}
