//! Acceptance suite: one PASS/FAIL line per criterion, each at its own
//! tolerance. Runs the CLI end to end where a subcommand covers the criterion.

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use projequiv::chart_core::{FdConfig, MatrixField};
use projequiv::model_zoo::dini_default;
use projequiv::projective_algebra::{sinjukov_residual, LTensor};

struct Report {
    json: Value,
    raw: String,
}

impl Report {
    fn value(&self, name: &str) -> f64 {
        let rec = self.json["records"]
            .as_array()
            .and_then(|rs| rs.iter().find(|r| r["name"] == name))
            .unwrap_or_else(|| panic!("record {name} missing from\n{}", self.raw));
        match &rec["value"] {
            Value::String(s) if s == "nan" => f64::NAN,
            Value::String(s) if s == "inf" => f64::INFINITY,
            v => v.as_f64().expect("numeric value"),
        }
    }

    fn masked(&self) -> String {
        let mut j = self.json.clone();
        j["wall_time"] = Value::Null;
        j.to_string()
    }
}

fn cli(args: &[&str]) -> (Report, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_projequiv")).args(args).output().expect("binary runs");
    let elapsed = start.elapsed();
    let raw = String::from_utf8(out.stdout).expect("utf-8");
    let json = serde_json::from_str(&raw).unwrap_or_else(|e| {
        panic!("{args:?} gave no report ({e}); stderr: {}", String::from_utf8_lossy(&out.stderr))
    });
    (Report { json, raw }, elapsed)
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn below(x: f64, tol: f64) -> bool {
    x < tol
}

fn dini(s: &mut Suite) {
    let (r, t) = cli(&["dini", "--model", "dini:default", "--n-geodesics", "100", "--seed", "7"]);
    let (fw, bw, n) = (r.value("g_geodesics_vs_g_bar"), r.value("g_bar_geodesics_vs_g"), r.value("paths_tested"));
    let pass = below(fw, 1e-4) && below(bw, 1e-4) && n == 200.0 && t < Duration::from_secs(60);
    s.line(
        "1 dini geodesic sharing",
        pass,
        format!("g vs g_bar {fw:.2e}, g_bar vs g {bw:.2e} (< 1e-4), {n} paths, {:.2} s (< 60 s)", t.as_secs_f64()),
    );
}

fn matveev(s: &mut Suite) {
    let (r, _) = cli(&["matveev", "--n-geodesics", "100", "--seed", "7"]);
    let (img, a, b1, det, sq) = (
        r.value("sigma_image_residual"),
        r.value("alpha"),
        r.value("beta_minus_one"),
        r.value("det"),
        r.value("square_minus_identity"),
    );
    let pass = below(img, 1e-4) && a <= 1e-4 && b1 <= 1e-4 && det < 0.0 && sq <= 1e-6 && r.value("paths_tested") == 100.0;
    s.line(
        "2 matveev involution",
        pass,
        format!("images {img:.2e} (< 1e-4), |alpha| {a:.2e}, |beta-1| {b1:.2e} (<= 1e-4), det {det:.3}, |A^2-I| {sq:.2e} (<= 1e-6)"),
    );
}

fn sinjukov(s: &mut Suite) {
    let pair = dini_default(41).unwrap();
    let cfg = FdConfig::first_derivative();
    let id = sinjukov_residual(&LTensor::identity(&pair.g), &cfg).unwrap();
    let scaled = sinjukov_residual(&LTensor::scalar(&pair.g, 2.5), &cfg).unwrap();
    let l = sinjukov_residual(&pair.l, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let c: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let field = MatrixField::new(pair.g.domain().clone(), move |p| {
        let (x, y) = (p[0], p[1]);
        let b = c[3] * x * y + c[4] * y;
        DMatrix::from_row_slice(2, 2, &[c[0] + c[1] * x + c[2] * y * y, b, b, c[5] + c[6] * x * x + c[7] * y + c[8] * x * y])
    });
    let control = sinjukov_residual(&LTensor::new(field, &pair.g).unwrap(), &cfg).unwrap();
    let pass = below(id, 1e-8) && below(scaled, 1e-8) && below(l, 1e-4) && control > 1e-2;
    s.line(
        "3 linear equation residual",
        pass,
        format!("I {id:.2e}, cI {scaled:.2e} (< 1e-8), dini {l:.2e} (< 1e-4), random control {control:.2e} (> 1e-2)"),
    );
}

fn mobility(s: &mut Suite) {
    let (f2, _) = cli(&["mobility", "--model", "flat:2", "--basis", "poly2"]);
    let (f3, _) = cli(&["mobility", "--model", "flat:3", "--basis", "poly2"]);
    let (dn, _) = cli(&["mobility", "--model", "dini:default", "--basis", "span"]);
    let (dr, _) = cli(&["mobility", "--model", "dini:default", "--basis", "span+random"]);
    let dims = [f2.value("dimension"), f3.value("dimension"), dn.value("dimension"), dr.value("dimension")];
    let gap = f2.value("gap").min(f3.value("gap")).min(dr.value("gap"));
    let pass = dims == [6.0, 10.0, 2.0, 2.0] && gap >= 1e3;
    s.line(
        "4 mobility in span",
        pass,
        format!("flat2 {}, flat3 {}, dini {{I,L}} {}, with random member {} (exact 6/10/2/2), min gap {gap:.2e} (>= 1e3)", dims[0], dims[1], dims[2], dims[3]),
    );
}

fn functional(s: &mut Suite) -> Report {
    let (r, _) = cli(&["functional", "--grid-res", "201"]);
    let (n, q) = (r.value("n_relative_change"), r.value("q_relative_change"));
    s.line("5 volume functional invariance", below(n, 1e-4) && below(q, 1e-4), format!("N {n:.2e}, Q {q:.2e} (< 1e-4) at grid 201"));
    r
}

fn chain_rule(s: &mut Suite, functional: &Report) {
    let c = functional.value("chain_rule_n3");
    s.line("6 strength chain rule", below(c, 1e-8), format!("n = 3 discrepancy {c:.2e} (< 1e-8)"));
}

fn homography(s: &mut Suite) {
    let (r, _) = cli(&["homography"]);
    let (cls, law, ratio, cor) = (
        r.value("canonical_classification_mismatches"),
        r.value("group_law_error"),
        r.value("product_ratio_deviation"),
        r.value("eigenvalue_inequality_mismatches"),
    );
    let pass = cls == 0.0 && below(law, 1e-10) && ratio <= 0.1 && cor == 0.0;
    s.line(
        "7 homography suite",
        pass,
        format!("classification mismatches {cls}, group law {law:.2e} (< 1e-10), product ratio deviation {ratio:.2e} (<= 0.1), eigenvalue inequality mismatches {cor}"),
    );
}

fn spectrum(s: &mut Suite) {
    let (r, _) = cli(&["spectrum"]);
    let d = r.value("spectral_deviation");
    s.line("8 spectral equivariance", below(d, 1e-6), format!("Hausdorff deviation {d:.2e} at 200 points (< 1e-6)"));
}

fn weyl(s: &mut Suite) {
    let (sphere, _) = cli(&["weyl", "--model", "sphere:3", "--tol", "1e-5"]);
    let (warped, _) = cli(&["weyl", "--model", "warped:3", "--tol", "1e-5"]);
    let (pert, _) = cli(&["weyl", "--model", "perturbed:3"]);
    let (ws, ww, wp) = (sphere.value("max_weyl"), warped.value("max_weyl"), pert.value("max_weyl"));
    let frames = [&sphere, &warped, &pert].iter().map(|r| r.value("frame_formula_agreement")).fold(0.0, f64::max);
    let pass = below(ws, 1e-5) && below(ww, 1e-5) && wp > 1e-3 && below(frames, 1e-5);
    s.line(
        "9 projective weyl",
        pass,
        format!("sphere {ws:.2e}, warped {ww:.2e} (< 1e-5), perturbed {wp:.2e} (> 1e-3), formula agreement {frames:.2e} (< 1e-5)"),
    );
}

fn veronese(s: &mut Suite) {
    let mut worst: f64 = 0.0;
    let mut dims_ok = true;
    let mut detail = vec![];
    for (d, k) in [(1usize, 1usize), (1, 2), (1, 3), (2, 2)] {
        let (r, _) = cli(&["veronese", "--model", &format!("veronese:{d},{k}")]);
        let n = r.value("target_dimension");
        let expected = (1..=k).fold(1usize, |acc, i| acc * (d + i) / i) - 1;
        dims_ok &= n == expected as f64;
        worst = worst.max(r.value("pullback_deviation"));
        detail.push(format!("N({d},{k}) = {n}"));
    }
    let (sg, _) = cli(&["veronese", "--model", "segre:1,1"]);
    let seg = sg.value("pullback_deviation");
    let pass = below(worst, 1e-6) && dims_ok && below(seg, 1e-6);
    s.line(
        "10 veronese and segre",
        pass,
        format!("k*g_FS deviation {worst:.2e} (< 1e-6), {} (exact), segre(1,1) {seg:.2e} (< 1e-6)", detail.join(", ")),
    );
}

fn determinism(s: &mut Suite, suite_start: Instant) {
    let subs = ["geodesics", "dini", "matveev", "mobility", "homography", "weyl", "veronese", "functional", "spectrum"];
    let differing: Vec<&str> =
        subs.iter().copied().filter(|sub| cli(&[sub, "--seed", "7"]).0.masked() != cli(&[sub, "--seed", "7"]).0.masked()).collect();
    let elapsed = suite_start.elapsed();
    let pass = differing.is_empty() && elapsed < Duration::from_secs(600);
    s.line(
        "11 determinism",
        pass,
        format!("{} of {} reports byte-identical across two runs {differing:?}, suite {:.1} s (< 600 s)", subs.len() - differing.len(), subs.len(), elapsed.as_secs_f64()),
    );
}

fn main() {
    let start = Instant::now();
    let mut s = Suite { failures: 0 };
    dini(&mut s);
    matveev(&mut s);
    sinjukov(&mut s);
    mobility(&mut s);
    let f = functional(&mut s);
    chain_rule(&mut s, &f);
    homography(&mut s);
    spectrum(&mut s);
    weyl(&mut s);
    veronese(&mut s);
    determinism(&mut s, start);
    println!("acceptance: {} of 11 criteria passed", 11 - s.failures);
    if s.failures > 0 {
        std::process::exit(1);
    }
}
