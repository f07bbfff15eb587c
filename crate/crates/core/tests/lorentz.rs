use fracheat_core::kernels::FracParams;
use fracheat_core::lorentz::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform_edges(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

fn random_cells(rng: &mut ChaCha8Rng) -> CellFunction {
    let nt = rng.gen_range(3..12);
    let nx = rng.gen_range(3..12);
    let te = uniform_edges(-1.0, 1.0, nt);
    let xe = uniform_edges(-1.0, 1.0, nx);
    let vals: Vec<f64> = (0..nt * nx)
        .map(|_| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if rng.gen_bool(0.2) {
                v * 20.0
            } else {
                v
            }
        })
        .collect();
    CellFunction::new(te, vec![xe], vals).unwrap()
}

/// μ({|f| > t}) by direct summation over cells.
fn brute_distribution(cells: &[(f64, f64)], t: f64) -> f64 {
    cells.iter().filter(|c| c.1.abs() > t).map(|c| c.0).sum()
}

#[test]
fn shuffled_steps_match_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let k = rng.gen_range(1..40);
        let cells: Vec<(f64, f64)> =
            (0..k).map(|_| (rng.gen_range(0.01..1.0), (rng.gen_range(-5..=5) as f64) * 0.5)).collect();
        let f = SampledFunction::new(cells.clone()).unwrap();
        let g = decreasing_rearrangement(&f);
        let mut sorted: Vec<f64> = cells.iter().map(|c| c.1.abs()).collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted.dedup();
        assert_eq!(g.plateaus(), &sorted[..]);
        for &t in &[0.0, 0.25, 0.5, 1.0, 1.75, 2.5, 3.0] {
            assert!((g.distribution(t) - brute_distribution(&cells, t)).abs() < 1e-12);
        }
        for w in g.plateaus().windows(2) {
            assert!(w[0] > w[1]);
        }
    }
}

#[test]
fn monotone_step_function_is_its_own_profile() {
    let f = SampledFunction::new(vec![(0.5, 4.0), (0.25, 2.0), (1.0, 1.0)]).unwrap();
    let g = decreasing_rearrangement(&f);
    assert_eq!(g.breakpoints(), &[0.0, 0.5, 0.75, 1.75]);
    assert_eq!(g.plateaus(), &[4.0, 2.0, 1.0]);
    let c = SampledFunction::new(vec![(2.0, 3.0)]).unwrap();
    let gc = decreasing_rearrangement(&c);
    for &r in &[0.1, 1.0, 2.0] {
        assert_eq!(gc.double_star(r).unwrap(), 3.0);
    }
}

#[test]
fn lorentz_two_step_matches_layer_cake() {
    let cells = vec![(0.2, 3.0), (0.5, -1.5), (0.3, 0.0)];
    let f = SampledFunction::new(cells.clone()).unwrap();
    let p = 2.5;
    // Layer cake: the distribution function is constant between distinct |values|.
    let mut levels: Vec<f64> = cells.iter().map(|c| c.1.abs()).collect();
    levels.push(0.0);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut oracle = 0.0;
    for w in levels.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        oracle += (w[1] - w[0]) * brute_distribution(&cells, mid).powf(1.0 / p);
    }
    let l = lorentz_norm(&f, p).unwrap();
    assert!((l.distribution_form - oracle).abs() < 1e-12);
    assert!((l.rearrangement_form - p * oracle).abs() < 1e-12);
    let zero = SampledFunction::new(vec![(1.0, 0.0)]).unwrap();
    assert_eq!(lorentz_norm(&zero, p).unwrap().distribution_form, 0.0);
}

#[test]
fn lorentz_nesting_on_truncated_powers() {
    // f(ρ) = ρ^{−θ} on (ε,1]; in L(p,1) iff θ < 1/p. Norms of the critical θ
    // grow without bound as ε → 0, subcritical ones settle.
    let p: f64 = 3.0;
    let family = |theta: f64, eps: f64| {
        let n = 4000;
        let mut cells = Vec::new();
        let (le, l1) = (eps.ln(), 0.0f64);
        let mut prev = 0.0;
        for i in 0..=n {
            let rho = (le + (l1 - le) * i as f64 / n as f64).exp();
            cells.push((rho - prev, rho.powf(-theta)));
            prev = rho;
        }
        SampledFunction::new(cells).unwrap()
    };
    let lp = |f: &SampledFunction, q: f64| f.cells().iter().map(|c| c.0 * c.1.abs().powf(q)).sum::<f64>().powf(1.0 / q);
    let growth =
        |theta: f64, norm: &dyn Fn(&SampledFunction) -> f64| norm(&family(theta, 1e-12)) / norm(&family(theta, 1e-6));
    let l_p1 = |f: &SampledFunction| lorentz_norm(f, p).unwrap().distribution_form;
    let eps = 0.05;
    // θ below 1/(p+ε): everything converges.
    let sub = 0.1;
    assert!(growth(sub, &|f| lp(f, p + eps)) < 1.1);
    assert!(growth(sub, &l_p1) < 1.1);
    assert!(growth(sub, &|f| lp(f, p)) < 1.1);
    // θ = 1/p: L(p,1) grows like log(1/ε), faster than L^p (like log^{1/p}).
    let crit = 1.0 / p;
    assert!(growth(crit, &l_p1) > 1.5);
    assert!(growth(crit, &l_p1) > growth(crit, &|f| lp(f, p)));
    assert!(growth(crit, &|f| lp(f, p)) > 1.1);
}

#[test]
fn potential_of_constant_has_closed_form() {
    let te = uniform_edges(-1.0, 1.0, 8);
    let xe = uniform_edges(-1.0, 1.0, 8);
    let f = CellFunction::new(te.clone(), vec![xe.clone()], vec![2.0; 64]).unwrap();
    for &s in &[0.6, 0.75, 0.9] {
        let p = FracParams::new(s, 1).unwrap();
        let spec = PotentialSpec::new(0.1, vec![-0.2], 0.4, 0.5, p);
        let v = riesz_potential_i2(&f, &spec).unwrap();
        let want = 2.0 * 0.4f64.powf(2.0 * s - 1.0) / (2.0 * s - 1.0);
        assert!((v - want).abs() < 1e-12 * want, "s={s}: {v} vs {want}");
    }
    let z = CellFunction::new(te, vec![xe], vec![0.0; 64]).unwrap();
    let spec = PotentialSpec::new(0.0, vec![0.0], 0.4, 0.5, FracParams::new(0.75, 1).unwrap());
    assert_eq!(riesz_potential_i2(&z, &spec).unwrap(), 0.0);
    let e1 = estimate1_check(&z, &spec).unwrap();
    assert_eq!((e1.lhs, e1.rhs, e1.holds), (0.0, 0.0, true));
    let e2 = estimate2_check(&z, &spec).unwrap();
    assert_eq!((e2.lhs, e2.rhs, e2.holds), (0.0, 0.0, true));
}

#[test]
fn potential_rejects_cylinders_leaving_the_grid() {
    let f = CellFunction::new(uniform_edges(-1.0, 1.0, 4), vec![uniform_edges(-1.0, 1.0, 4)], vec![1.0; 16]).unwrap();
    let spec = PotentialSpec::new(0.0, vec![0.8], 0.4, 0.5, FracParams::new(0.75, 1).unwrap());
    assert!(riesz_potential_i2(&f, &spec).is_err());
}

#[test]
fn estimate1_unit_function_closed_form() {
    let (s, sigma, r) = (0.75, 0.5, 0.45);
    let f = CellFunction::new(uniform_edges(-1.0, 1.0, 5), vec![uniform_edges(-1.0, 1.0, 5)], vec![1.0; 25]).unwrap();
    let spec = PotentialSpec::new(0.05, vec![0.1], r, sigma, FracParams::new(s, 1).unwrap());
    let rep = estimate1_check(&f, &spec).unwrap();
    let e = 2.0 * s - 1.0;
    let lhs = (r / 2.0f64).powf(e) / (1.0 - sigma.powf(e));
    let c = e * 2f64.powf(1.5) / (2f64.powf(e) - 1.0) + sigma.powf(e) * e * sigma.powf(1.5) / (1.0 - sigma.powf(-e));
    let rhs = c * r.powf(e) / e;
    assert!((rep.lhs - lhs).abs() < 1e-12);
    assert!((rep.constant_used - c).abs() < 1e-14);
    assert!((rep.rhs - rhs).abs() < 1e-12);
    assert!(rep.holds);
    assert!(rep.rhs_corrected > rep.rhs);
}

#[test]
fn estimate2_indicator_closed_form() {
    // f = 1 on the sub-cylinder cell block (−0.5,0.5)×(−0.5,0.5), 0 elsewhere.
    let te = uniform_edges(-1.0, 1.0, 4);
    let xe = uniform_edges(-1.0, 1.0, 4);
    let f =
        CellFunction::from_fn(te, vec![xe], |t, x| if t.abs() < 0.5 && x[0].abs() < 0.5 { 1.0 } else { 0.0 }).unwrap();
    let s = 0.75;
    let r = 0.3;
    let spec = PotentialSpec::new(0.0, vec![0.0], r, 0.5, FracParams::new(s, 1).unwrap());
    let rep = estimate2_check(&f, &spec).unwrap();
    assert!(rep.holds);
    // g** = 1 on [0, m], m/ρ after; m = 1.
    let (c, beta, m) = (4.0f64, 0.5 / 3.0, 1.0f64);
    let upper = c * r.powi(3);
    let integral = if upper <= m {
        upper.powf(beta) / beta
    } else {
        m.powf(beta) / beta + m.sqrt() * (upper.powf(beta - 0.5) - m.powf(beta - 0.5)) / (beta - 0.5)
    };
    let want = integral / (3.0 * c.powf(beta));
    assert!((rep.rhs - want).abs() < 1e-12, "{} vs {want}", rep.rhs);
    // The cylinder lies inside the support, so the left side is the constant case.
    assert!((rep.lhs - r.powf(0.5) / 0.5).abs() < 1e-12);
}

#[test]
fn hardy_littlewood_cases() {
    let te = uniform_edges(-1.0, 1.0, 6);
    let xe = uniform_edges(-1.0, 1.0, 6);
    let c = CellFunction::new(te.clone(), vec![xe.clone()], vec![1.7; 36]).unwrap();
    let rep = hardy_littlewood_check(&c, 0.2, &[0.1], 0.35).unwrap();
    assert!((rep.average - rep.bound).abs() < 1e-12);
    assert!(rep.holds);
    let ind =
        CellFunction::from_fn(
            te,
            vec![xe],
            |t, x| if t.abs() < 1.0 / 3.0 && x[0].abs() < 1.0 / 3.0 { 2.0 } else { 0.0 },
        )
        .unwrap();
    let rep = hardy_littlewood_check(&ind, 0.0, &[0.0], 0.9).unwrap();
    assert!(rep.holds);
}

#[test]
fn randomized_estimates_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for &s in &[0.6, 0.9] {
        for &sigma in &[0.5, 0.25] {
            for _ in 0..15 {
                let f = random_cells(&mut rng);
                let p = FracParams::new(s, 1).unwrap();
                let t0 = rng.gen_range(-0.25..0.25);
                let x0 = rng.gen_range(-0.5..0.5);
                let r = rng.gen_range(0.05..0.5);
                let spec = PotentialSpec::new(t0, vec![x0], r, sigma, p);
                assert!(estimate1_check(&f, &spec).unwrap().holds);
                assert!(estimate2_check(&f, &spec).unwrap().holds);
                assert!(hardy_littlewood_check(&f, t0, &[x0], r).unwrap().holds);
            }
        }
    }
}

#[test]
fn potential_quadrature_self_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let f = random_cells(&mut rng);
        let p = FracParams::new(0.6, 1).unwrap();
        let mut spec = PotentialSpec::new(rng.gen_range(-0.2..0.2), vec![rng.gen_range(-0.4..0.4)], 0.45, 0.5, p);
        let a = riesz_potential_i2(&f, &spec).unwrap();
        spec.nodes_per_decade = 128;
        let b = riesz_potential_i2(&f, &spec).unwrap();
        assert!((a - b).abs() <= 1e-3 * b.abs().max(1e-300));
    }
}

#[test]
fn two_dimensional_potential_of_constant() {
    let e = uniform_edges(-1.0, 1.0, 6);
    let f = CellFunction::new(e.clone(), vec![e.clone(), e], vec![3.0; 216]).unwrap();
    let spec = PotentialSpec::new(0.0, vec![0.05, -0.1], 0.3, 0.5, FracParams::new(0.8, 2).unwrap());
    let v = riesz_potential_i2(&f, &spec).unwrap();
    let want = 3.0 * 0.3f64.powf(0.6) / 0.6;
    assert!((v - want).abs() < 1e-11 * want);
    assert!(hardy_littlewood_check(&f, 0.0, &[0.0, 0.0], 0.3).unwrap().holds);
}

proptest! {
    #[test]
    fn equimeasurable_and_double_star_dominates(
        cells in prop::collection::vec((0.01f64..2.0, -10.0f64..10.0), 1..30),
        t in 0.0f64..10.0,
        alpha in -4.0f64..4.0,
    ) {
        let f = SampledFunction::new(cells.clone()).unwrap();
        let g = decreasing_rearrangement(&f);
        prop_assert!((g.distribution(t) - brute_distribution(&cells, t)).abs() < 1e-9);
        let total = g.total_measure();
        let mut prev = f64::INFINITY;
        for i in 1..=50 {
            let rho = total * i as f64 / 40.0;
            let ds = g.double_star(rho).unwrap();
            prop_assert!(ds + 1e-12 >= g.g_star(rho));
            prop_assert!(ds <= prev + 1e-12);
            prev = ds;
        }
        let l = lorentz_norm(&f, 2.0).unwrap().distribution_form;
        let la = lorentz_norm(&f.map_values(|v| alpha * v), 2.0).unwrap().distribution_form;
        prop_assert!((la - alpha.abs() * l).abs() <= 1e-12 * (1.0 + la.abs()));
    }
}
