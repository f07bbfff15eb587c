use fracheat_core::extension::{GridSpec, ParabolicGrid, ScalarField, Spacing};
use fracheat_core::kernels::FracParams;
use fracheat_core::moduli::{ModulusOfContinuity, ModulusPipelineConfig};
use fracheat_core::probe::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn grid(s: f64, n: usize, m: usize) -> ParabolicGrid {
    GridSpec::new(1.0, m, m, m).build(FracParams::new(s, n).unwrap()).unwrap()
}

fn wobbly(g: &ParabolicGrid) -> ScalarField {
    ScalarField::from_fn(g, |t, x, y| {
        (1.3 * x[0]).sin() * (1.0 + y) + t * t - 0.4 * x.iter().sum::<f64>() * y.sqrt() + (2.0 * t).cos()
    })
}

#[test]
fn parabolic_distance_examples() {
    assert_eq!(parabolic_distance(0.3, &[0.1, 0.2], 0.3, &[0.1, 0.2]), 0.0);
    assert_eq!(parabolic_distance(5.0, &[1.0, 0.5], 1.0, &[1.0, 0.5]), 2.0);
    assert_eq!(parabolic_distance(0.0, &[0.0, 0.0], 0.01, &[0.3, 0.4]), 0.5);
}

#[test]
fn quadrature_integrates_cylinder_measures() {
    for (n, ball) in [(1usize, 2.0), (2, std::f64::consts::PI)] {
        let g = GridSpec::new(1.0, 12, 14, 10).build(FracParams::new(0.7, n).unwrap()).unwrap();
        let a = g.params().a();
        for r in [0.9, 0.37] {
            let x0 = vec![0.05; n];
            let q = CylinderQuadrature::build(&g, &Cylinder::new(0.1, x0.clone(), r), true).unwrap();
            let thin = 2.0 * r * r * ball * r.powi(n as i32);
            assert!((q.thin_measure() - thin).abs() < 1e-12, "n={n} r={r}");
            let thick = thin * r.powf(1.0 + a) / (1.0 + a);
            assert!((q.thick_measure() - thick).abs() < 1e-12 * thick.max(1.0));
            let plain = CylinderQuadrature::build(&g, &Cylinder::new(0.1, x0, r), false).unwrap();
            assert!((plain.thick_measure() - thin * r).abs() < 1e-12);
        }
    }
    assert!(CylinderQuadrature::build(&grid(0.7, 1, 8), &Cylinder::new(0.5, vec![0.0], 0.8), true).is_err());
}

#[test]
fn linear_data_is_fitted_exactly() {
    let g = grid(0.75, 2, 10);
    let u = ScalarField::from_fn(&g, |_, x, _| 1.5 - 2.0 * x[0] + 0.25 * x[1]);
    let cyl = Cylinder::new(0.0, vec![0.1, -0.2], 0.6);
    let f = best_linear_fit(&g, &u, &cyl).unwrap();
    assert!((f.a - (1.5 - 0.2 - 0.05)).abs() < 1e-12);
    assert!((f.b[0] + 2.0).abs() < 1e-12 && (f.b[1] - 0.25).abs() < 1e-12);
    assert!(f.excess <= 1e-12);
    assert!(f.normal_residual <= 1e-12);
}

#[test]
fn square_has_zero_slope_and_mean_value() {
    let g = grid(0.6, 1, 16);
    let u = ScalarField::from_fn(&g, |_, x, _| x[0] * x[0]);
    let cyl = Cylinder::new(0.0, vec![0.0], 0.5);
    let f = best_linear_fit(&g, &u, &cyl).unwrap();
    assert!(f.b[0].abs() < 1e-12, "{f:?}");
    // The functional weights x by the combined per-node mass, which is a
    // constant multiple of the x overlap for data independent of t and y.
    let q = CylinderQuadrature::build(&g, &cyl, true).unwrap();
    let (num, den) = q.x.iter().fold((0.0, 0.0), |(s, w), (_, wx, off)| (s + wx * off[0] * off[0], w + wx));
    assert!((f.a - num / den).abs() < 1e-13);
    // and the continuous mean r²/3 up to the midpoint-rule error.
    assert!((f.a - 0.25 / 3.0).abs() < 5e-3);
}

/// Weighted least squares by SVD on the dense design matrix.
fn dense_fit(g: &ParabolicGrid, u: &ScalarField, cyl: &Cylinder) -> Vec<f64> {
    let q = CylinderQuadrature::build(g, cyl, true).unwrap();
    let n = g.n();
    let (s_thin, s_thick) = (cyl.r.powf(-(n as f64 + 2.0)), cyl.r.powf(-(n as f64 + 3.0 + g.params().a())));
    let mut rows: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    for &(it, wt) in &q.t {
        for (xf, wx, off) in &q.x {
            let mut phi = vec![1.0];
            phi.extend(off);
            rows.push(((wt * wx * s_thin).sqrt(), phi.clone(), u.values[g.index(it, *xf, 0)]));
            for &(j, wy) in &q.y {
                rows.push(((wt * wx * wy * s_thick).sqrt(), phi.clone(), u.values[g.index(it, *xf, j)]));
            }
        }
    }
    let m = DMatrix::from_fn(rows.len(), n + 1, |i, k| rows[i].0 * rows[i].1[k]);
    let b = DVector::from_fn(rows.len(), |i, _| rows[i].0 * rows[i].2);
    let sol = m.svd(true, true).solve(&b, 1e-14).unwrap();
    sol.iter().copied().collect()
}

#[test]
fn fit_matches_dense_least_squares() {
    for n in [1, 2] {
        let g = GridSpec::new(1.0, 8, 10, 8).build(FracParams::new(0.8, n).unwrap()).unwrap();
        let u = wobbly(&g);
        let cyl = Cylinder::new(-0.1, vec![0.15; n], 0.55);
        let f = best_linear_fit(&g, &u, &cyl).unwrap();
        let d = dense_fit(&g, &u, &cyl);
        assert!((f.a - d[0]).abs() < 1e-10);
        for k in 0..n {
            assert!((f.b[k] - d[k + 1]).abs() < 1e-10, "n={n}");
        }
    }
}

#[test]
fn excess_sequence_of_linear_data_vanishes() {
    let g = GridSpec::new(1.0, 64, 64, 32).build(FracParams::new(0.75, 1).unwrap()).unwrap();
    let u = ScalarField::from_fn(&g, |_, x, _| 2.0 + 3.0 * x[0]);
    let seq =
        excess_sequence(&g, &u, 0.0, &[0.0], &ExcessOptions::default(), &ModulusOfContinuity::constant(1.0)).unwrap();
    assert!(seq.entries.len() >= 2);
    assert!(seq.entries.iter().all(|e| e.excess < 1e-24), "{:?}", seq.entries);
}

#[test]
fn excess_of_square_decays_at_the_closed_form_rate() {
    // U = x²: the best fit is the mean r²/3 on every cylinder and
    // E(r) = (16/45) r⁴ (1 + 1/(1+a)); the unit-L² normalization divides by
    // (4/5)(1 + 1/(1+a)), so E_k = (4/9) λ^{4k} and with ω ≡ 1 the ratio is
    // (4/9) λ^{2k}.
    let spec = GridSpec {
        time_spacing: Spacing::Layered { levels: 12 },
        x_spacing: Spacing::Layered { levels: 4 },
        ..GridSpec::new(1.0, 192, 256, 64)
    };
    let g = spec.build(FracParams::new(0.75, 1).unwrap()).unwrap();
    let u = ScalarField::from_fn(&g, |_, x, _| x[0] * x[0]);
    let opts = ExcessOptions { kmax: 8, ..Default::default() };
    let seq = excess_sequence(&g, &u, 0.0, &[0.0], &opts, &ModulusOfContinuity::constant(1.0)).unwrap();
    assert!(seq.entries.len() >= 3, "{:?}", seq.diagnostic);
    assert!(seq.diagnostic.is_some());
    for e in &seq.entries {
        let l = 0.25f64.powi(e.k as i32);
        let want = 4.0 / 9.0 * l.powi(4);
        assert!((e.excess - want).abs() < 0.05 * want, "k={} {} vs {}", e.k, e.excess, want);
        assert!((e.ratio - 4.0 / 9.0 * l * l).abs() < 0.05 * want / (l * l));
        assert!(e.fit.b[0].abs() < 1e-10);
    }
}

#[test]
fn previous_fit_never_beats_the_current_one() {
    let g = grid(0.7, 1, 48);
    let u = wobbly(&g);
    let seq = excess_sequence(
        &g,
        &u,
        0.0,
        &[0.0],
        &ExcessOptions { min_cells: 2, ..Default::default() },
        &ModulusOfContinuity::constant(1.0),
    )
    .unwrap();
    assert!(seq.entries.len() >= 2);
    for e in &seq.entries[1..] {
        assert!(e.excess_previous_fit.unwrap() >= e.excess * (1.0 - 1e-12));
    }
    assert_eq!(seq.drift_a.len(), seq.entries.len() - 1);
}

#[test]
fn rescaling_reproduces_the_sequence() {
    let g = GridSpec::new(1.0, 40, 40, 40).build(FracParams::new(0.65, 1).unwrap()).unwrap();
    let u = wobbly(&g);
    let (t0, x0, gamma) = (0.05, 0.1, 0.5);
    let omega = ModulusOfContinuity::power(1.0, 0.5);
    let h = rescaled_grid(&g, t0, &[x0], gamma).unwrap();
    for norm in [Normalization::None, Normalization::UnitL2] {
        let opts = ExcessOptions { kmax: 2, min_cells: 2, scale: gamma, normalization: norm, ..Default::default() };
        let a = excess_sequence(&g, &u, t0, &[x0], &opts, &omega).unwrap();
        let b = excess_sequence(&h, &u, 0.0, &[0.0], &ExcessOptions { scale: 1.0, ..opts }, &omega).unwrap();
        assert_eq!(a.entries.len(), b.entries.len());
        for (p, q) in a.entries.iter().zip(&b.entries) {
            assert!((p.ratio - q.ratio).abs() < 1e-10 * p.ratio, "{norm:?} k={}", p.k);
            assert!((p.fit.b[0] * gamma - q.fit.b[0]).abs() < 1e-10);
        }
        if norm == Normalization::UnitL2 {
            assert!((a.normalization_factor - b.normalization_factor).abs() < 1e-10 * a.normalization_factor);
        }
    }
}

#[test]
fn averaged_normalization_follows_its_formula() {
    let g = grid(0.7, 1, 16);
    let u = ScalarField::from_fn(&g, |_, _, _| 3.0);
    // ⨍ 9 + ⨍ 9 + 1.
    let f = normalization_factor(&g, &u, 0.0, &[0.0], 1.0, Normalization::Averaged).unwrap();
    assert!((f - 19.0).abs() < 1e-12);
}

#[test]
fn one_step_for_linear_data_succeeds_at_once() {
    let g = grid(0.75, 1, 32);
    let u = ScalarField::from_fn(&g, |_, x, _| 1.0 - x[0]);
    let rep = one_step_improvement(&g, &u, 0.0, &[0.0], 2).unwrap();
    assert_eq!(rep.lambda_found, Some(0.25));
    assert!(rep.ratio.unwrap() < 1e-20);
}

#[test]
fn campanato_profile_of_linear_data_is_zero() {
    let g = grid(0.75, 1, 32);
    let u = ScalarField::from_fn(&g, |_, x, _| 0.5 + x[0]);
    let k = ModulusOfContinuity::power(1.0, 0.5);
    let p = campanato_excess_profile(&g, &u, 0.0, &[0.0], &[0.5, 0.25, 0.125], &k).unwrap();
    assert!(p.rows.iter().all(|r| r.ratio < 1e-20 && r.thin_ratio < 1e-20));
    assert!((p.limit_fit.b[0] - 1.0).abs() < 1e-12);
    let q = campanato_excess_profile(&g, &u, 0.1, &[0.2], &[0.25], &k).unwrap();
    assert!(p.gradient_gap(&q, &k).0 < 1e-12);
}

#[test]
fn gradients_of_linear_data_agree_everywhere() {
    let g = grid(0.75, 2, 16);
    let u = ScalarField::from_fn(&g, |t, x, y| 1.0 + 2.0 * x[0] - x[1] + 0.5 * y + 0.0 * t);
    let k = ModulusOfContinuity::power(1.0, 0.5);
    let opts = GradientProbeOptions { pairs: 400, time_pairs: 100, ..GradientProbeOptions::new(2, 11) };
    let rep = gradient_modulus_probe(&g, &u, &k, &opts).unwrap();
    assert!(rep.samples.iter().filter(|s| s.case != 0).all(|s| s.difference < 1e-10));
    assert!(rep.case_i.pairs > 0 && rep.case_ii.pairs > 0);
    assert_eq!(rep.case_i.pairs + rep.case_ii.pairs, 400);
    assert!(rep.time.c_emp < 1e-10);
    assert!(rep.case_ii_geometry_holds);
}

#[test]
fn gradient_probe_is_deterministic_and_respects_geometry() {
    let g = grid(0.7, 1, 32);
    let u = wobbly(&g);
    let k = ModulusOfContinuity::power(1.0, 0.5);
    let opts = GradientProbeOptions { pairs: 2000, time_pairs: 500, ..GradientProbeOptions::new(1, 5) };
    let a = gradient_modulus_probe(&g, &u, &k, &opts).unwrap();
    let b = gradient_modulus_probe(&g, &u, &k, &opts).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    for s in a.samples.iter().filter(|s| s.case == 2) {
        let y2 = s.p1[2].max(s.p2[2]);
        assert!(y2 <= 6.0 * s.dist);
    }
    for s in a.samples.iter().filter(|s| s.case == 1) {
        assert!(s.dist <= s.p1[2].min(s.p2[2]) / 4.0);
    }
    for s in &a.samples {
        let d = parabolic_distance(s.p1[0], &s.p1[1..], s.p2[0], &s.p2[1..]);
        let want = if s.case == 0 { (s.p1[0] - s.p2[0]).abs().sqrt() } else { d };
        assert_eq!(s.dist, want);
    }
    assert!(a.case_i.c_emp.is_finite() && a.case_ii.c_emp.is_finite());
}

#[test]
fn node_gradient_is_exact_for_quadratics() {
    let g = GridSpec { x_spacing: Spacing::Clustered { stretch: 2.0 }, ..GridSpec::new(1.0, 4, 12, 12) }
        .build(FracParams::new(0.7, 1).unwrap())
        .unwrap();
    let u = ScalarField::from_fn(&g, |_, x, y| x[0] * x[0] + 3.0 * x[0] * y + y * y);
    let (it, ix, j) = (2, [5usize], 4);
    let (gx, gy) = node_gradient(&g, &u, it, &ix, j).unwrap();
    let (x, y) = (g.x()[0][5], g.y()[4]);
    assert!((gx[0] - (2.0 * x + 3.0 * y)).abs() < 1e-12);
    assert!((gy.unwrap() - (3.0 * x + 2.0 * y)).abs() < 1e-12);
    assert!(node_gradient(&g, &u, it, &ix, 0).unwrap().1.is_none());
    assert!(node_gradient(&g, &u, it, &[0], 3).is_err());
}

#[test]
fn interior_probe_examples() {
    let g = GridSpec { y_max: Some(2.0), grading: Some(1.0), ..GridSpec::new(1.0, 256, 64, 64) }
        .build(FracParams::new(0.7, 1).unwrap())
        .unwrap();
    let psi = ModulusOfContinuity::power(1.0, 0.5);
    let lin = ScalarField::from_fn(&g, |_, x, y| 1.0 + x[0] - 2.0 * y);
    let z = interior_probe(&g, &lin, 0.0, &[0.0, 1.0], 0.4, 0.5, 3, 2, &psi).unwrap();
    // U − ℓ₀ vanishes, so the excess is pure round-off.
    assert!(z.entries.iter().all(|e| e.excess.is_finite()));
    let smooth = ScalarField::from_fn(&g, |t, x, y| (x[0] + 0.5 * y).cos() * (-t).exp() + 0.3 * y * y);
    let rep = interior_probe(&g, &smooth, 0.0, &[0.0, 1.0], 0.4, 0.5, 3, 2, &psi).unwrap();
    assert!(rep.entries.len() >= 3, "{:?}", rep.diagnostic);
    // Smooth data: E_k ~ λ^{4k}, below λ^{3k} with a shrinking ratio.
    let r: Vec<f64> = rep.entries.iter().map(|e| e.excess / 0.5f64.powi(3 * e.k as i32)).collect();
    assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
    let alpha = rep.alpha_empirical.unwrap();
    assert!(alpha > 0.8 && alpha < 1.2, "{alpha}");
    assert!(interior_probe(&g, &smooth, 0.0, &[0.0, 0.7], 0.4, 0.5, 3, 2, &psi).is_err());
}

#[test]
fn linear_interior_data_has_zero_excess() {
    let g = GridSpec { y_max: Some(2.0), grading: Some(1.0), ..GridSpec::new(1.0, 64, 32, 32) }
        .build(FracParams::new(0.7, 1).unwrap())
        .unwrap();
    let psi = ModulusOfContinuity::power(1.0, 0.5);
    let lin = ScalarField::from_fn(&g, |_, x, y| 1.0 + x[0] - 2.0 * y);
    let rep = interior_probe(&g, &lin, 0.0, &[0.0, 1.0], 0.4, 0.5, 2, 2, &psi).unwrap();
    // Normalization is skipped for an exactly linear field (factor 1).
    assert_eq!(rep.normalization_factor, 1.0);
    assert!(rep.entries.iter().all(|e| e.excess < 1e-24), "{:?}", rep.entries);
}

#[test]
fn interior_modulus_is_half_decreasing_and_normalized() {
    let omega_a = ModulusOfContinuity::log_dini(0.2, 2.0);
    let cfg = ModulusPipelineConfig::default();
    let pipe = interior_modulus(&omega_a, 0.3, 1.5, &cfg).unwrap();
    let psi = &pipe.omega;
    assert!(psi.eval(1.0) >= 1.0 - 1e-12);
    for k in 0..10 {
        let r = cfg.lambda.powi(k);
        assert!(psi.eval(r) >= r.sqrt() * (1.0 - 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_the_larger_term(t1 in -2.0f64..2.0, t2 in -2.0f64..2.0, x in prop::collection::vec(-1.0f64..1.0, 4)) {
        let d = parabolic_distance(t1, &x[..2], t2, &x[2..]);
        let spatial = ((x[0] - x[2]).powi(2) + (x[1] - x[3]).powi(2)).sqrt();
        prop_assert_eq!(d, (t1 - t2).abs().sqrt().max(spatial));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fitting_the_residual_returns_zero(c in -2.0f64..2.0, k in 0.5f64..3.0, r in 0.2f64..0.9) {
        let g = grid(0.72, 1, 16);
        let u = ScalarField::from_fn(&g, |t, x, y| c * (k * x[0]).sin() + t * y + y.powf(1.56));
        let cyl = Cylinder::new(0.0, vec![0.05], r);
        let f = best_linear_fit(&g, &u, &cyl).unwrap();
        let resid = ScalarField::from_fn(&g, |_, x, _| f.eval(x));
        let resid = u.axpy(-1.0, &resid).unwrap();
        let z = best_linear_fit(&g, &resid, &cyl).unwrap();
        prop_assert!(z.a.abs() < 1e-12 && z.b[0].abs() < 1e-12, "{:?}", z);
        prop_assert!((z.excess - f.excess).abs() <= 1e-12 * (1.0 + f.excess));
    }
}
