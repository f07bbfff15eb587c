use fracheat_core::kernels::*;
use proptest::prelude::*;

/// Stirling series for ln Γ, shifted upward by recurrence.
fn gamma_oracle(x: f64) -> f64 {
    let shift = 12;
    let z = x + shift as f64;
    let z2 = z * z;
    let lg = (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * z)
        - 1.0 / (360.0 * z * z2)
        + 1.0 / (1260.0 * z * z2 * z2)
        - 1.0 / (1680.0 * z * z2 * z2 * z2);
    let mut prod = 1.0;
    for k in 0..shift {
        prod *= x + k as f64;
    }
    lg.exp() / prod
}

/// Adaptive Simpson, independent of the Gauss–Legendre machinery.
fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64 + Copy>(
        f: F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// ∫₀^∞ τ^{−s−1}(1−e^{−τ}) dτ: power series on [0,1], Simpson on [1,80],
/// closed-form tail beyond.
fn marchaud_oracle(s: f64) -> f64 {
    let mut head = 0.0;
    let mut fact = 1.0;
    for k in 1..40 {
        fact *= k as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        head += sign / fact / (k as f64 - s);
    }
    let mid = simpson(|t: f64| t.powf(-s - 1.0) * (1.0 - (-t).exp()), 1.0, 80.0, 1e-13);
    let tail = 80f64.powf(-s) / s;
    head + mid + tail
}

#[test]
fn gamma_constants_match_stirling_oracle() {
    for i in 0..=8 {
        let s = 0.55 + 0.05 * i as f64;
        let c = subordination_constant(s).unwrap();
        let want = s / gamma_oracle(1.0 - s);
        assert!(((c - want) / want).abs() < 1e-12, "s={s}");
        let d = dtn_constant(s).unwrap();
        let want = 2f64.powf(2.0 * s - 1.0) * gamma_oracle(s) / gamma_oracle(1.0 - s);
        assert!(((d - want) / want).abs() < 1e-12, "s={s}");
    }
    let d = dtn_constant(0.75).unwrap();
    assert!((d - 0.478).abs() < 1e-3, "{d}");
    assert!((subordination_constant(1e-12).unwrap()).abs() < 1e-11);
}

#[test]
fn heat_kernel_normalization_and_value() {
    let mass = simpson(|z| heat_kernel(0.5, &[z], 1).unwrap(), -10.0, 10.0, 1e-12);
    assert!((mass - 1.0).abs() < 1e-8);
    let v = heat_kernel(1.0, &[2.0], 1).unwrap();
    let want = (4.0 * std::f64::consts::PI).powf(-0.5) * (-1f64).exp();
    assert!((v - want).abs() < 1e-16);
    for &tau in &[1e-3f64, 0.1, 7.0] {
        let r = 12.0 * tau.sqrt();
        let mass = simpson(|z| heat_kernel(tau, &[z], 1).unwrap(), -r, r, 1e-12);
        assert!((mass - 1.0).abs() < 1e-8, "tau={tau}");
    }
}

#[test]
fn marchaud_normalization() {
    let q = QuadratureSpec::default();
    for i in 0..=8 {
        let s = 0.55 + 0.05 * i as f64;
        let oracle = marchaud_oracle(s) * subordination_constant(s).unwrap();
        assert!((oracle - 1.0).abs() < 1e-9, "oracle s={s}: {oracle}");
        let lib = subordinate(s, &q, |tau| 1.0 - (-tau).exp()).unwrap();
        assert!((lib - 1.0).abs() < 1e-6, "s={s}: {lib}");
    }
}

#[test]
fn constant_and_linear_inputs_vanish() {
    let p = FracParams::new(0.75, 1).unwrap();
    let q = QuadratureSpec::default();
    let pts: Vec<(f64, Vec<f64>)> = vec![(0.0, vec![0.3]), (1.5, vec![-2.0])];
    let r = frac_heat_apply(&|_t: f64, _x: &[f64]| 7.0, &p, &q, &pts).unwrap();
    assert!(r.values.iter().all(|v| v.abs() < 1e-12));
    let r = frac_heat_apply(&|_t: f64, x: &[f64]| x[0], &p, &q, &pts).unwrap();
    assert!(r.values.iter().all(|v| v.abs() < 1e-9), "{:?}", r.values);
}

#[test]
fn exponential_in_time_is_an_eigenfunction() {
    let q = QuadratureSpec::default();
    for &s in &[0.5, 0.6, 0.75, 0.9] {
        let p = FracParams::new(s, 1).unwrap();
        let pts = vec![(0.0, vec![0.0]), (0.7, vec![0.2])];
        let u = |t: f64, _x: &[f64]| t.exp();
        for spec in [q.clone(), q.refined()] {
            let r = frac_heat_apply(&u, &p, &spec, &pts).unwrap();
            for ((t, _), v) in pts.iter().zip(&r.values) {
                assert!(((v - t.exp()) / t.exp()).abs() < 1e-4, "s={s} t={t}: {v}");
            }
        }
    }
}

#[test]
fn cosine_symbol_in_one_and_two_dimensions() {
    let q = QuadratureSpec::default();
    let s = 0.75;
    let p = FracParams::new(s, 1).unwrap();
    let xi: f64 = 2.0;
    let pts = vec![(0.0, vec![0.1]), (0.0, vec![0.9])];
    let r = frac_heat_apply(&|_t: f64, x: &[f64]| (xi * x[0]).cos(), &p, &q, &pts).unwrap();
    for ((_, x), v) in pts.iter().zip(&r.values) {
        let want = xi.powf(2.0 * s) * (xi * x[0]).cos();
        assert!((v - want).abs() < 1e-5, "{v} vs {want}");
    }
    assert!(r.diagnostics.is_empty());

    let p2 = FracParams::new(s, 2).unwrap();
    let pts = vec![(0.0, vec![0.1, 0.4])];
    let u = |_t: f64, x: &[f64]| (x[0] + 2.0 * x[1]).cos();
    let r = frac_heat_apply(&u, &p2, &q, &pts).unwrap();
    let want = 5f64.powf(s) * (0.1f64 + 0.8).cos();
    assert!((r.values[0] - want).abs() < 1e-5, "{} vs {want}", r.values[0]);
}

#[test]
fn master_bounds_on_parabolic_band() {
    let p = FracParams::new(0.75, 1).unwrap();
    let grid = MasterSampleGrid { tau_min: 1e-3, tau_max: 400.0, tau_count: 121, z_min: 0.1, z_max: 10.0, z_count: 41 };
    let rep = check_master_bounds(&p, 0.5, 2.0, &grid).unwrap();
    assert!(rep.holds);
    assert!(rep.band_samples > 0);
    assert!(rep.lambda_lower > 0.0 && rep.lambda_upper.is_finite());

    // z ↦ 2z, τ ↦ 4τ maps the sample grid onto itself shifted; λ is scale-invariant.
    let scaled = MasterSampleGrid { tau_min: 4e-3, tau_max: 1600.0, z_min: 0.2, z_max: 20.0, ..grid.clone() };
    let rep2 = check_master_bounds(&p, 0.5, 2.0, &scaled).unwrap();
    assert!((rep2.lambda_lower / rep.lambda_lower - 1.0).abs() < 0.05);

    let empty = MasterSampleGrid { tau_min: 1e3, tau_max: 1e4, tau_count: 3, z_min: 0.1, z_max: 0.2, z_count: 3 };
    assert!(check_master_bounds(&p, 0.5, 2.0, &empty).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn translation_invariance(t0 in -1.0f64..1.0, x0 in -1.0f64..1.0, t in -0.5f64..0.5, x in -0.5f64..0.5) {
        let p = FracParams::new(0.7, 1).unwrap();
        let q = QuadratureSpec { tau_cutoff_high: 1e2, ..QuadratureSpec::default() };
        let u = |t: f64, x: &[f64]| (0.3 * t).exp() * (1.3 * x[0]).sin() + x[0] * x[0];
        let shifted = |t: f64, x: &[f64]| u(t - t0, &[x[0] - x0]);
        let a = frac_heat_apply(&shifted, &p, &q, &[(t, vec![x])]).unwrap().values[0];
        let b = frac_heat_apply(&u, &p, &q, &[(t - t0, vec![x - x0])]).unwrap().values[0];
        prop_assert!((a - b).abs() < 1e-7 * (1.0 + b.abs()));
    }

    #[test]
    fn linearity(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, x in -1.0f64..1.0) {
        let p = FracParams::new(0.8, 1).unwrap();
        let q = QuadratureSpec { tau_cutoff_high: 1e2, ..QuadratureSpec::default() };
        let u = |t: f64, x: &[f64]| (0.5 * t).exp() * x[0].cos();
        let v = |_t: f64, x: &[f64]| (2.0 * x[0]).sin();
        let w = |t: f64, x: &[f64]| alpha * u(t, x) + beta * v(t, x);
        let pt = [(0.2, vec![x])];
        let lu = frac_heat_apply(&u, &p, &q, &pt).unwrap().values[0];
        let lv = frac_heat_apply(&v, &p, &q, &pt).unwrap().values[0];
        let lw = frac_heat_apply(&w, &p, &q, &pt).unwrap().values[0];
        prop_assert!((lw - alpha * lu - beta * lv).abs() < 1e-8 * (1.0 + lw.abs()));
    }
}
