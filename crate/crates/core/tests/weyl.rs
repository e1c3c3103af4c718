use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use projequiv::chart_core::{DiffeoOnChart, FdConfig, MatrixField};
use projequiv::metric_geometry::{curvature, Metric};
use projequiv::model_zoo::{constant_curvature_chart, dini_default, perturbed_sphere, sphere_polar};
use projequiv::projective_algebra::{metric_from_l, LTensor};
use projequiv::weyl_flatness::*;

fn weyl_of(g: &Metric) -> WeylField {
    projective_weyl(&curvature(g, &FdConfig::second_derivative()), g).unwrap()
}

fn perturbed() -> Metric {
    perturbed_sphere(3).unwrap()
}

#[test]
fn stereographic_sphere_is_projectively_flat() {
    let w = weyl_of(&constant_curvature_chart(3, 1).unwrap());
    let m = w.max_abs_on(&w.samples()).unwrap();
    assert!(m < 1e-5, "max |W| = {m:e}");
}

#[test]
fn polar_sphere_is_projectively_flat() {
    let w = weyl_of(&sphere_polar(3).unwrap());
    let m = w.max_abs_on(&w.samples()).unwrap();
    assert!(m < 1e-5, "max |W| = {m:e}");
}

#[test]
fn perturbed_sphere_is_not_flat() {
    let w = weyl_of(&perturbed());
    let m = w.max_abs_on(&w.samples()).unwrap();
    assert!(m > 1e-3, "max |W| = {m:e}");
}

#[test]
fn weyl_traces_and_antisymmetry() {
    let w = weyl_of(&perturbed());
    for p in w.samples().iter().step_by(7) {
        assert!(w.trace_defect(p).unwrap() < 1e-6);
        assert!(w.eval(p).unwrap().antisymmetry_defect() < 1e-6);
    }
}

#[test]
fn frame_formula_matches_coordinate_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for g in [constant_curvature_chart(3, 1).unwrap(), perturbed()] {
        let w = weyl_of(&g);
        let margin = w.curvature().margin() + 1e-3;
        for _ in 0..100 {
            let p = g.domain().sample_interior(&mut rng, margin);
            let frame = orthonormal_frame(&g, &p, &mut rng).unwrap();
            let dev = frame_formula_deviation(&w, &p, &frame).unwrap();
            assert!(dev < 1e-5, "deviation {dev:e} at {p:?}");
        }
    }
}

#[test]
fn flatness_verdicts() {
    let sphere = flatness_test("sphere:3", &constant_curvature_chart(3, 1).unwrap(), DEFAULT_WEYL_TOL, 5).unwrap();
    assert!(sphere.verdict, "{sphere:?}");
    let warped = flatness_test("warped:3", &sphere_polar(3).unwrap(), DEFAULT_WEYL_TOL, 5).unwrap();
    assert!(warped.verdict, "{warped:?}");
    let control = flatness_test("perturbed", &perturbed(), DEFAULT_WEYL_TOL, 5).unwrap();
    assert!(!control.verdict);
}

#[test]
fn dini_surface_has_varying_curvature() {
    let dini = dini_default(41).unwrap();
    let r = flatness_test("dini", &dini.g, DEFAULT_WEYL_TOL, 5).unwrap();
    assert_eq!(r.max_weyl, 0.0);
    assert!(r.curv_variance > 1e-3, "variance {:e}", r.curv_variance);
    assert!(!r.verdict);
}

#[test]
fn weyl_is_invariant_under_isometries() {
    let g = constant_curvature_chart(3, 1).unwrap();
    let w = weyl_of(&g);
    let quarter = |p: &[f64]| vec![-p[1], p[0], p[2]];
    let back = |p: &[f64]| vec![p[1], -p[0], p[2]];
    let f = DiffeoOnChart::new(g.domain().clone(), quarter, back);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let p = g.domain().sample_interior(&mut rng, 0.2);
        let frame = orthonormal_frame(&g, &p, &mut rng).unwrap();
        assert!(transformation_defect(&w, &f, &p, &frame).unwrap() < 1e-5);
    }

    let flat = constant_curvature_chart(3, 0).unwrap();
    let wf = weyl_of(&flat);
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 0.9, 0.1, 0.0, 0.0, 1.1]);
    let f = DiffeoOnChart::affine(flat.domain().clone(), a, vec![0.0; 3]).unwrap();
    let p = [0.1, 0.0, -0.1];
    let frame = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    assert!(transformation_defect(&wf, &f, &p, &frame).unwrap() < 1e-6);
}

#[test]
fn weyl_agrees_across_the_projective_class() {
    // L = I + 0.1 x xᵀ solves the flat Sinjukov equation.
    let flat = constant_curvature_chart(3, 0).unwrap();
    let field = MatrixField::new(flat.domain().clone(), |p| {
        let x = nalgebra::DVector::from_column_slice(p);
        DMatrix::identity(3, 3) + &x * x.transpose() * 0.1
    });
    let l = LTensor::new(field, &flat).unwrap();
    let g2 = metric_from_l(&l).unwrap();
    let w2 = weyl_of(&g2);
    let m = w2.max_abs_on(&w2.samples()).unwrap();
    assert!(m < 1e-4, "max |W| = {m:e}");
}
