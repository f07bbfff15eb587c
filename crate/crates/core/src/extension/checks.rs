//! Weak-form verification suite: Steklov averages, the energy inequality,
//! trace and Poincaré constants, the constant-coefficient comparison problem,
//! closeness, interior regularity, uniqueness, conservation and symmetry.

use serde::{Deserialize, Serialize};

use super::coeff::CoefficientField;
use super::grid::{ParabolicGrid, ScalarField, ThinField, VectorField};
use super::solver::{
    assemble, dirichlet_mask, solve_extension, sources, Bottom, ExtensionProblem, ExtensionSolution, LinearSolver,
    Ordering, SolverOptions,
};
use crate::error::{domain, Result};

/// `V_h(t) = ⨍_t^{t+h} V(τ) dτ` with `V` linear between time nodes, at every
/// time node with `t + h ≤ t_last`. Returns the truncated grid and field.
pub fn steklov_average(grid: &ParabolicGrid, u: &ScalarField, h: f64) -> Result<(ParabolicGrid, ScalarField)> {
    let t = grid.t();
    let last = *t.last().unwrap();
    if !(h > 0.0) || t[0] + h > last {
        return domain(format!("Steklov window h = {h} exceeds the time range"));
    }
    let keep = t.iter().take_while(|&&tk| tk + h <= last * (1.0 + 1e-15) + 1e-15).count();
    let all_x: Vec<(usize, usize)> = grid.x_shape().iter().map(|&m| (0, m - 1)).collect();
    let sub = grid.restrict((0, keep - 1), &all_x, grid.ny_nodes() - 1)?;
    let len = grid.slice_len();
    let mut out = ScalarField::zeros(&sub);
    // Integral of the piecewise-linear interpolant from t[0] to `s`.
    let primitive = |p: usize, s: f64| -> f64 {
        let mut acc = 0.0;
        for k in 0..t.len() - 1 {
            let (a, b) = (t[k], t[k + 1]);
            if s <= a {
                break;
            }
            let (ua, ub) = (u.values[k * len + p], u.values[(k + 1) * len + p]);
            let e = s.min(b);
            let w = (e - a) / (b - a);
            acc += (e - a) * (ua + 0.5 * w * (ub - ua));
        }
        acc
    };
    for k in 0..keep {
        for p in 0..len {
            out.values[k * len + p] = (primitive(p, (t[k] + h).min(last)) - primitive(p, t[k])) / h;
        }
    }
    Ok((sub, out))
}

/// Identity-coefficient edges `(p, q, c)` of one slice, `c > 0`:
/// `Σ c (v_p − v_q)²` is the discrete `∫ y^a |∇v|²` over the slice.
fn gradient_edges(grid: &ParabolicGrid) -> Result<Vec<(usize, usize, f64)>> {
    let op = assemble(grid, &CoefficientField::identity(grid))?;
    let mut edges = Vec::new();
    for p in 0..op.stiffness.n() {
        for (q, v) in op.stiffness.row(p) {
            if q > p && v < 0.0 {
                edges.push((p, q, -v));
            }
        }
    }
    Ok(edges)
}

/// Trapezoid weights of the time nodes restricted to `[it1, it2]`.
fn window_weights(t: &[f64], it1: usize, it2: usize) -> Vec<(usize, f64)> {
    (it1..=it2)
        .map(|k| {
            let lo = if k > it1 { 0.5 * (t[k] - t[k - 1]) } else { 0.0 };
            let hi = if k < it2 { 0.5 * (t[k + 1] - t[k]) } else { 0.0 };
            (k, lo + hi)
        })
        .collect()
}

fn slice_mass(grid: &ParabolicGrid) -> Vec<f64> {
    let ny = grid.ny_nodes();
    let mut m = vec![0.0; grid.slice_len()];
    for xf in 0..grid.x_count() {
        let v = grid.x_volume(xf);
        for j in 0..ny {
            m[xf * ny + j] = v * grid.y_weights()[j];
        }
    }
    m
}

/// `(Σ w (u − v)²)^{1/2}` with space-time weights `t_w · x_w · y_w` over nodes
/// for which `keep(t, x, y)` holds.
pub fn weighted_l2_distance(
    grid: &ParabolicGrid,
    u: &ScalarField,
    v: &ScalarField,
    keep: impl Fn(f64, &[f64], f64) -> bool,
) -> f64 {
    let mass = slice_mass(grid);
    let ny = grid.ny_nodes();
    let mut acc = 0.0;
    for (it, &tw) in grid.t_weights().iter().enumerate() {
        for xf in 0..grid.x_count() {
            let x = grid.x_point(&grid.x_multi(xf));
            for j in 0..ny {
                if keep(grid.t()[it], &x, grid.y()[j]) {
                    let k = grid.index(it, xf, j);
                    let d = u.values[k] - v.values[k];
                    acc += tw * mass[xf * ny + j] * d * d;
                }
            }
        }
    }
    acc.sqrt()
}

/// Terms of the local energy inequality
/// `sup ∫ y^a U² φ² + ∫∫ y^a φ² |∇U|² ≤ C [∫∫ y^a ((|∂_t φ²| + |∇φ|²) U² + |F|² φ²)
///   + ∫∫ φ(·,0)² |U(·,0)| |f|] + ∫ y^a U(t₁)² φ(t₁)²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub sup_term: f64,
    pub gradient_term: f64,
    pub cutoff_term: f64,
    pub forcing_term: f64,
    pub trace_term: f64,
    pub initial_term: f64,
    /// Smallest `C` for which the inequality holds.
    pub c_emp: f64,
    /// True when both sides vanish.
    pub vacuous: bool,
}

pub fn energy_report(
    grid: &ParabolicGrid,
    u: &ScalarField,
    f: Option<&ThinField>,
    forcing: Option<&VectorField>,
    cutoff: impl Fn(f64, &[f64], f64) -> f64,
    window: (usize, usize),
) -> Result<EnergyReport> {
    let (it1, it2) = window;
    if !(it1 < it2 && it2 < grid.nt_nodes()) {
        return domain("energy window must satisfy t₁ < t₂ inside the grid");
    }
    let phi = ScalarField::from_fn(grid, &cutoff);
    let edges = gradient_edges(grid)?;
    let mass = slice_mass(grid);
    let len = grid.slice_len();
    let ny = grid.ny_nodes();
    let t = grid.t();
    let mut sup_term: f64 = 0.0;
    let (mut gradient_term, mut cutoff_term, mut forcing_term, mut trace_term) = (0.0, 0.0, 0.0, 0.0);
    for (k, w) in window_weights(t, it1, it2) {
        let base = k * len;
        let uk = &u.values[base..base + len];
        let pk = &phi.values[base..base + len];
        let level: f64 = (0..len).map(|p| mass[p] * pk[p] * pk[p] * uk[p] * uk[p]).sum();
        sup_term = sup_term.max(level);
        let (kl, kr) = (k.saturating_sub(1), (k + 1).min(grid.nt_nodes() - 1));
        let dt = t[kr] - t[kl];
        let mut g = 0.0;
        let mut c = 0.0;
        for &(p, q, cpq) in &edges {
            let phi2 = 0.5 * (pk[p] * pk[p] + pk[q] * pk[q]);
            g += cpq * phi2 * (uk[p] - uk[q]).powi(2);
            let u2 = 0.5 * (uk[p] * uk[p] + uk[q] * uk[q]);
            c += cpq * u2 * (pk[p] - pk[q]).powi(2);
        }
        for p in 0..len {
            let dphi2 = (phi.values[kr * len + p].powi(2) - phi.values[kl * len + p].powi(2)) / dt;
            c += mass[p] * dphi2.abs() * uk[p] * uk[p];
        }
        gradient_term += w * g;
        cutoff_term += w * c;
        if let Some(fv) = forcing {
            let mut s = 0.0;
            for p in 0..len {
                let node = base + p;
                let f2: f64 = (0..fv.n).map(|d| fv.component(node, d).powi(2)).sum();
                s += mass[p] * f2 * pk[p] * pk[p];
            }
            forcing_term += w * s;
        }
        if let Some(fd) = f {
            let mut s = 0.0;
            for xf in 0..grid.x_count() {
                let p = xf * ny;
                s += grid.x_volume(xf) * pk[p] * pk[p] * uk[p].abs() * fd.at(grid, k, xf).abs();
            }
            trace_term += w * s;
        }
    }
    let base = it1 * len;
    let initial_term: f64 = (0..len).map(|p| mass[p] * (phi.values[base + p] * u.values[base + p]).powi(2)).sum();
    let lhs = sup_term + gradient_term - initial_term;
    let data = cutoff_term + forcing_term + trace_term;
    let tiny = 1e-300;
    let (c_emp, vacuous) = if lhs <= tiny {
        (0.0, data <= tiny && sup_term + gradient_term <= tiny)
    } else if data <= tiny {
        (f64::INFINITY, false)
    } else {
        (lhs / data, false)
    };
    Ok(EnergyReport { sup_term, gradient_term, cutoff_term, forcing_term, trace_term, initial_term, c_emp, vacuous })
}

/// A smooth cutoff supported in `Q_ρ × [0, ρ)` that does not vanish on `y = 0`.
pub fn standard_cutoff(rho: f64) -> impl Fn(f64, &[f64], f64) -> f64 + Sync {
    move |t: f64, x: &[f64], y: f64| {
        let bump = |v: f64| if v.abs() < 1.0 { (0.5 * std::f64::consts::PI * v).cos().powi(2) } else { 0.0 };
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        bump(t / (rho * rho)) * bump(r / rho) * bump(y / rho)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoincareReport {
    pub trace_lhs: f64,
    pub weighted_l2: f64,
    pub weighted_gradient: f64,
    /// `∫ v(·,0)² / (∫ y^a v² + ∫ y^a |∇v|²)`.
    pub c_trace: f64,
    /// `∫ y^a v² / ∫ y^a |∇v|²`.
    pub c_poincare: f64,
    pub trace_ok: bool,
    pub poincare_ok: bool,
}

/// Empirical trace and Poincaré constants of a field vanishing on the
/// lateral boundary.
pub fn trace_poincare_check(grid: &ParabolicGrid, v: &ScalarField) -> Result<TracePoincareReport> {
    let len = grid.slice_len();
    let ny = grid.ny_nodes();
    for it in 0..grid.nt_nodes() {
        for xf in 0..grid.x_count() {
            if grid.on_lateral_boundary(&grid.x_multi(xf)) && (0..ny).any(|j| v.values[it * len + xf * ny + j] != 0.0) {
                return domain("field does not vanish on the lateral boundary");
            }
        }
    }
    let edges = gradient_edges(grid)?;
    let mass = slice_mass(grid);
    let (mut tr, mut l2, mut gr) = (0.0, 0.0, 0.0);
    for (it, &w) in grid.t_weights().iter().enumerate() {
        let s = &v.values[it * len..(it + 1) * len];
        tr += w * (0..grid.x_count()).map(|xf| grid.x_volume(xf) * s[xf * ny].powi(2)).sum::<f64>();
        l2 += w * (0..len).map(|p| mass[p] * s[p] * s[p]).sum::<f64>();
        gr += w * edges.iter().map(|&(p, q, c)| c * (s[p] - s[q]).powi(2)).sum::<f64>();
    }
    let ratio = |num: f64, den: f64| {
        if num == 0.0 {
            0.0
        } else if den > 0.0 {
            num / den
        } else {
            f64::INFINITY
        }
    };
    let c_trace = ratio(tr, l2 + gr);
    let c_poincare = ratio(l2, gr);
    Ok(TracePoincareReport {
        trace_lhs: tr,
        weighted_l2: l2,
        weighted_gradient: gr,
        c_trace,
        c_poincare,
        trace_ok: c_trace.is_finite(),
        poincare_ok: c_poincare.is_finite(),
    })
}

/// Index box of a grid: time range, per-axis `x` ranges, top `y` index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexBox {
    pub t: (usize, usize),
    pub x: Vec<(usize, usize)>,
    pub y_top: usize,
}

fn nearest(nodes: &[f64], v: f64) -> usize {
    nodes.iter().enumerate().min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs())).map(|(i, _)| i).unwrap()
}

impl IndexBox {
    /// Nodes nearest to `[t0, t1] × [−r, r]^n × [0, y1]`.
    pub fn around(grid: &ParabolicGrid, t0: f64, t1: f64, r: f64, y1: f64) -> Result<Self> {
        let b = IndexBox {
            t: (nearest(grid.t(), t0), nearest(grid.t(), t1)),
            x: grid.x().iter().map(|xs| (nearest(xs, -r), nearest(xs, r))).collect(),
            y_top: nearest(grid.y(), y1),
        };
        if b.t.0 >= b.t.1 || b.x.iter().any(|&(lo, hi)| hi < lo + 2) || b.y_top < 2 {
            return domain("index box is too small for the grid resolution");
        }
        Ok(b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSolution {
    pub grid: ParabolicGrid,
    pub solution: ExtensionSolution,
    pub boundary_min: f64,
    pub boundary_max: f64,
    /// `min boundary ≤ V ≤ max boundary` up to 1e−12.
    pub maximum_principle: bool,
}

/// Solves `div(y^a ∇V) = y^a ∂_t V` on the sub-box with `V = U` on its
/// parabolic boundary away from `y = 0` and zero flux on `y = 0`.
pub fn solve_constant_coeff_dirichlet(
    grid: &ParabolicGrid,
    u: &ScalarField,
    bx: &IndexBox,
) -> Result<ComparisonSolution> {
    let sub = grid.restrict(bx.t, &bx.x, bx.y_top)?;
    let data = u.restrict(grid, bx.t, &bx.x, bx.y_top)?;
    let problem = ExtensionProblem { bottom: Bottom::Neumann(ThinField::zeros(&sub)), forcing: None, dirichlet: data };
    let coeff = CoefficientField::identity(&sub);
    let solution = solve_extension(&sub, &coeff, &problem, &SolverOptions::default())?;
    let mask = dirichlet_mask(&sub, &problem.bottom);
    let len = sub.slice_len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for it in 0..sub.nt_nodes() {
        for p in 0..len {
            if it == 0 || mask[p] {
                let v = problem.dirichlet.values[it * len + p];
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    let maximum_principle = solution.field.values.iter().all(|&v| v >= lo - tol && v <= hi + tol);
    Ok(ComparisonSolution { grid: sub, solution, boundary_min: lo, boundary_max: hi, maximum_principle })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    /// `∫_{Q*_{1/2}} y^a |U − V|²`.
    pub eps_weighted: f64,
    /// `∫_{Q_{1/2}} |U − V|²` on `y = 0`.
    pub eps_trace: f64,
    pub f_norm_sq: f64,
    pub forcing_norm_sq: f64,
    pub omega_a_at_one: f64,
    /// False when the smallness assumptions with the given δ fail.
    pub smallness_holds: bool,
    pub maximum_principle: bool,
}

/// Compares `U` with the constant-coefficient zero-flux solution `V` on
/// `(−ρ²/2, 3ρ²/4) × (−ρ/2, ρ/2)^n × (0, ρ/2)` and measures the two squared
/// distances on `Q*_{ρ/2}` and `Q_{ρ/2}`.
pub fn closeness_experiment(
    grid: &ParabolicGrid,
    u: &ScalarField,
    f: &ThinField,
    forcing: Option<&VectorField>,
    coeff: &CoefficientField,
    delta: f64,
) -> Result<ClosenessReport> {
    let rho = grid.x()[0].last().copied().unwrap();
    let r2 = rho * rho;
    let bx = IndexBox::around(grid, -0.5 * r2, 0.75 * r2, 0.5 * rho, 0.5 * rho)?;
    let comp = solve_constant_coeff_dirichlet(grid, u, &bx)?;
    let sub = &comp.grid;
    let u_sub = u.restrict(grid, bx.t, &bx.x, bx.y_top)?;
    let half = 0.5 * rho;
    let inside = |t: f64, x: &[f64]| t.abs() < half * half && x.iter().map(|v| v * v).sum::<f64>().sqrt() < half;
    let eps_weighted =
        weighted_l2_distance(sub, &u_sub, &comp.solution.field, |t, x, y| inside(t, x) && y < half).powi(2);
    let ny = sub.ny_nodes();
    let mut eps_trace = 0.0;
    for (it, &tw) in sub.t_weights().iter().enumerate() {
        for xf in 0..sub.x_count() {
            let x = sub.x_point(&sub.x_multi(xf));
            if inside(sub.t()[it], &x) {
                let k = (it * sub.x_count() + xf) * ny;
                eps_trace += tw * sub.x_volume(xf) * (u_sub.values[k] - comp.solution.field.values[k]).powi(2);
            }
        }
    }
    let mut f_norm_sq = 0.0;
    for (it, &tw) in grid.t_weights().iter().enumerate() {
        for xf in 0..grid.x_count() {
            f_norm_sq += tw * grid.x_volume(xf) * f.at(grid, it, xf).powi(2);
        }
    }
    let forcing_norm_sq = match forcing {
        None => 0.0,
        Some(v) => {
            let mass = slice_mass(grid);
            let len = grid.slice_len();
            let mut acc = 0.0;
            for (it, &tw) in grid.t_weights().iter().enumerate() {
                for p in 0..len {
                    let node = it * len + p;
                    acc += tw * mass[p] * (0..v.n).map(|d| v.component(node, d).powi(2)).sum::<f64>();
                }
            }
            acc
        }
    };
    let omega_a_at_one = coeff.omega_a.eval(1.0);
    let d2 = delta * delta;
    Ok(ClosenessReport {
        eps_weighted,
        eps_trace,
        f_norm_sq,
        forcing_norm_sq,
        omega_a_at_one,
        smallness_holds: f_norm_sq <= d2 && forcing_norm_sq <= d2 && omega_a_at_one <= d2,
        maximum_principle: comp.maximum_principle,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub oscillation: f64,
    pub weighted_norm: f64,
    /// `(r/2)·sup|∇_x W| / osc` on the half cylinder.
    pub gradient_ratio: f64,
    /// `(r/2)²·sup|D²_x W| / osc`.
    pub hessian_ratio: f64,
    /// `(r/2)²·sup|∂_t W| / osc`.
    pub time_ratio: f64,
    /// `max |W| / ‖W‖_{L²(y^a)}` on the half cylinder.
    pub sup_ratio: f64,
    /// `sup |W_y(·,·,y)| / (y ‖W‖_{L²(y^a)})` over faces below `r/2`.
    pub normal_ratio: f64,
    /// The same ratio restricted to the lowest face (behaviour as `y → 0`).
    pub normal_ratio_bottom: f64,
}

/// Finite-difference interior estimates for a zero-flux constant-coefficient
/// solution on its whole grid (`r` = half-width of the `x` box).
pub fn regularity_estimates_check(grid: &ParabolicGrid, w: &ScalarField) -> Result<RegularityReport> {
    let n = grid.n();
    let t = grid.t();
    let (t_mid, t_half) = (0.5 * (t[0] + t[t.len() - 1]), 0.5 * (t[t.len() - 1] - t[0]));
    let r = grid.x().iter().map(|xs| 0.5 * (xs[xs.len() - 1] - xs[0])).fold(f64::INFINITY, f64::min);
    let centers: Vec<f64> = grid.x().iter().map(|xs| 0.5 * (xs[0] + xs[xs.len() - 1])).collect();
    let (lo, hi) = w.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let osc = hi - lo;
    let wn = weighted_l2_distance(grid, w, &ScalarField::zeros(grid), |_, _, _| true);
    let in_half = |it: usize, ix: &[usize], j: usize| {
        (t[it] - t_mid).abs() <= 0.25 * t_half
            && ix.iter().enumerate().all(|(d, &i)| (grid.x()[d][i] - centers[d]).abs() <= 0.5 * r)
            && grid.y()[j] < 0.5 * r
    };
    let (mut g, mut hs, mut tt, mut sup, mut nr, mut nb): (f64, f64, f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let ny = grid.ny_nodes();
    for it in 1..grid.nt_nodes() - 1 {
        for xf in 0..grid.x_count() {
            let ix = grid.x_multi(xf);
            if grid.on_lateral_boundary(&ix) {
                continue;
            }
            for j in 0..ny - 1 {
                if !in_half(it, &ix, j) {
                    continue;
                }
                let k = grid.index(it, xf, j);
                sup = sup.max(w.values[k].abs());
                let dt = t[it + 1] - t[it - 1];
                tt = tt.max(((w.values[grid.index(it + 1, xf, j)] - w.values[grid.index(it - 1, xf, j)]) / dt).abs());
                let mut grad2 = 0.0;
                for d in 0..n {
                    let xs = &grid.x()[d];
                    let i = ix[d];
                    let mut m = ix.clone();
                    m[d] = i + 1;
                    let up = w.values[grid.index(it, grid.x_flat(&m), j)];
                    m[d] = i - 1;
                    let dn = w.values[grid.index(it, grid.x_flat(&m), j)];
                    let (hp, hm) = (xs[i + 1] - xs[i], xs[i] - xs[i - 1]);
                    let gd = (up - dn) / (hp + hm);
                    grad2 += gd * gd;
                    let dd = 2.0 * (hm * up - (hp + hm) * w.values[k] + hp * dn) / (hp * hm * (hp + hm));
                    hs = hs.max(dd.abs());
                }
                g = g.max(grad2.sqrt());
                let (y0, y1) = (grid.y()[j], grid.y()[j + 1]);
                let wy = (w.values[grid.index(it, xf, j + 1)] - w.values[k]) / (y1 - y0);
                let ratio = wy.abs() / (0.5 * (y0 + y1));
                nr = nr.max(ratio);
                if j == 0 {
                    nb = nb.max(ratio);
                }
            }
        }
    }
    let half = 0.5 * r;
    let safe = |v: f64, d: f64| if v == 0.0 { 0.0 } else { v / d };
    Ok(RegularityReport {
        oscillation: osc,
        weighted_norm: wn,
        gradient_ratio: safe(half * g, osc),
        hessian_ratio: safe(half * half * hs, osc),
        time_ratio: safe(half * half * tt, osc),
        sup_ratio: safe(sup, wn),
        normal_ratio: safe(nr, wn),
        normal_ratio_bottom: safe(nb, wn),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub direct_vs_iterative: f64,
    pub direct_vs_reordered: f64,
    pub max_distance: f64,
}

/// Solves the same problem with the direct solver, with CG from a zero
/// iterate and with reversed unknown ordering, and returns the weighted `L²`
/// distances between the results.
pub fn uniqueness_check(
    grid: &ParabolicGrid,
    coeff: &CoefficientField,
    problem: &ExtensionProblem,
) -> Result<UniquenessReport> {
    let direct = SolverOptions { linear: LinearSolver::Direct, ..Default::default() };
    let iterative = SolverOptions {
        linear: LinearSolver::Iterative,
        zero_initial_iterate: true,
        tolerance: 1e-14,
        ..Default::default()
    };
    let reordered = SolverOptions { ordering: Ordering::Reversed, ..direct.clone() };
    let a = solve_extension(grid, coeff, problem, &direct)?.field;
    let b = solve_extension(grid, coeff, problem, &iterative)?.field;
    let c = solve_extension(grid, coeff, problem, &reordered)?.field;
    let all = |_: f64, _: &[f64], _: f64| true;
    let d1 = weighted_l2_distance(grid, &a, &b, all);
    let d2 = weighted_l2_distance(grid, &a, &c, all);
    Ok(UniquenessReport { direct_vs_iterative: d1, direct_vs_reordered: d2, max_distance: d1.max(d2) })
}

/// Largest per-step mismatch between the change of `Σ y^a U` over the
/// unknown nodes and the boundary fluxes plus sources, relative to the
/// largest flux magnitude.
pub fn conservation_check(
    grid: &ParabolicGrid,
    coeff: &CoefficientField,
    problem: &ExtensionProblem,
    solution: &ExtensionSolution,
    opts: &SolverOptions,
) -> Result<f64> {
    let op = assemble(grid, coeff)?;
    let mask = dirichlet_mask(grid, &problem.bottom);
    let len = grid.slice_len();
    let flux = |u: &[f64]| -> f64 {
        let mut acc = 0.0;
        for p in (0..len).filter(|&p| !mask[p]) {
            for (q, k) in op.stiffness.row(p) {
                if mask[q] {
                    acc -= k * (u[q] - u[p]);
                }
            }
        }
        acc
    };
    let mut worst: f64 = 0.0;
    let mut s_prev = sources(grid, problem, 0);
    for it in 0..grid.nt_nodes() - 1 {
        let dt = grid.t()[it + 1] - grid.t()[it];
        let theta = opts.theta_at(it);
        let u0 = solution.field.slice(grid, it);
        let u1 = solution.field.slice(grid, it + 1);
        let s_next = sources(grid, problem, it + 1);
        let change: f64 = (0..len).filter(|&p| !mask[p]).map(|p| op.mass[p] * (u1[p] - u0[p]) / dt).sum();
        let src = |s: &[f64]| (0..len).filter(|&p| !mask[p]).map(|p| s[p]).sum::<f64>();
        let (f0, f1) = (flux(u0), flux(u1));
        let budget = theta * (f1 + src(&s_next)) + (1.0 - theta) * (f0 + src(&s_prev));
        let scale = 1.0 + f0.abs().max(f1.abs()) + change.abs();
        worst = worst.max((change - budget).abs() / scale);
        s_prev = s_next;
    }
    Ok(worst)
}

/// `max |U(t, x, y) − U(t, −x, y)|` on a grid symmetric under `x ↦ −x`.
pub fn symmetry_defect(grid: &ParabolicGrid, u: &ScalarField) -> Result<f64> {
    for xs in grid.x() {
        let m = xs.len();
        if (0..m).any(|i| (xs[i] + xs[m - 1 - i]).abs() > 1e-12) {
            return domain("grid is not symmetric under x ↦ −x");
        }
    }
    let mut worst: f64 = 0.0;
    for it in 0..grid.nt_nodes() {
        for xf in 0..grid.x_count() {
            let ix = grid.x_multi(xf);
            let mirror: Vec<usize> = ix.iter().zip(grid.x()).map(|(&i, xs)| xs.len() - 1 - i).collect();
            let mf = grid.x_flat(&mirror);
            for j in 0..grid.ny_nodes() {
                worst = worst.max((u.values[grid.index(it, xf, j)] - u.values[grid.index(it, mf, j)]).abs());
            }
        }
    }
    Ok(worst)
}
