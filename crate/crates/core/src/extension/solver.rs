//! Vertex-centred finite-volume discretization of
//! `y^a ∂_t U − div(y^a B ∇U) = −div(y^a F)`, `B = diag(A, 1)`, with the
//! θ-scheme in time.
//!
//! The `y` fluxes use the exact transmissibility `1/∫ y^{−a}` between nodes,
//! `x` fluxes use harmonic means of the diagonal of `A` (off-diagonal entries
//! in two dimensions enter through a symmetric corner-gradient form), and the
//! Neumann datum enters the bottom control volumes as the boundary flux `f`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::coeff::CoefficientField;
use super::grid::{ParabolicGrid, ScalarField, ThinField, VectorField};
use super::linalg::{pcg, BandedCholesky, CsrMatrix};
use crate::error::{domain, Result};

/// Condition on the face `y = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Bottom {
    /// `−y^a U_y = f` with `f` on the `(t, x)` nodes.
    Neumann(ThinField),
    /// `U(·,·,0)` taken from the Dirichlet field.
    Dirichlet,
}

/// Data of one solve. `dirichlet` supplies the initial slice, the lateral and
/// top boundary values and, for [`Bottom::Dirichlet`], the trace.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtensionProblem {
    pub bottom: Bottom,
    pub forcing: Option<VectorField>,
    pub dirichlet: ScalarField,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded Cholesky when the band fits `direct_band_limit`, else CG.
    Auto,
    Direct,
    Iterative,
}

/// Order of the unknowns in the linear systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    YFastest,
    Reversed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// 1 for implicit Euler, 1/2 for Crank–Nicolson.
    pub theta: f64,
    pub linear: LinearSolver,
    pub ordering: Ordering,
    /// Relative residual target of the iterative solver.
    pub tolerance: f64,
    /// Maximum stored band entries `N·(bw+1)` for the direct solver.
    pub direct_band_limit: usize,
    /// Start CG from zero instead of the previous time level.
    pub zero_initial_iterate: bool,
    /// Number of initial steps taken with implicit Euler before switching to
    /// `theta`; damps the stiff modes that Crank–Nicolson leaves undamped.
    #[serde(default)]
    pub startup_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            theta: 1.0,
            linear: LinearSolver::Auto,
            ordering: Ordering::YFastest,
            tolerance: 1e-13,
            direct_band_limit: 40_000_000,
            zero_initial_iterate: false,
            startup_steps: 0,
        }
    }
}

impl SolverOptions {
    pub fn crank_nicolson() -> Self {
        SolverOptions { theta: 0.5, startup_steps: 4, ..Default::default() }
    }

    /// The θ used for the step from level `it` to `it + 1`.
    pub fn theta_at(&self, it: usize) -> f64 {
        if it < self.startup_steps {
            1.0
        } else {
            self.theta
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    /// Relative residual of the discrete weak form over all unknown rows.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionSolution {
    pub field: ScalarField,
    pub max_residual: f64,
    pub steps: Vec<StepReport>,
    pub used_direct: bool,
}

/// Stiffness matrix and lumped mass on one time slice (all nodes).
#[derive(Clone, Debug)]
pub struct SliceOperator {
    pub stiffness: CsrMatrix,
    pub mass: Vec<f64>,
}

fn couple(t: &mut Vec<(usize, usize, f64)>, p: usize, q: usize, c: f64) {
    t.push((p, p, c));
    t.push((q, q, c));
    t.push((p, q, -c));
    t.push((q, p, -c));
}

/// Neighbour pairs along each `x` axis: `(d, x_flat, x_flat_next, face area, spacing)`.
fn x_faces(grid: &ParabolicGrid) -> Vec<(usize, usize, usize, f64, f64)> {
    let n = grid.n();
    let mut out = Vec::new();
    for xf in 0..grid.x_count() {
        let ix = grid.x_multi(xf);
        for d in 0..n {
            if ix[d] + 1 >= grid.x()[d].len() {
                continue;
            }
            let mut nb = ix.clone();
            nb[d] += 1;
            let area: f64 = (0..n).filter(|&e| e != d).map(|e| grid.x_widths()[e][ix[e]]).product();
            let h = grid.x()[d][ix[d] + 1] - grid.x()[d][ix[d]];
            out.push((d, xf, grid.x_flat(&nb), area, h));
        }
    }
    out
}

pub fn assemble(grid: &ParabolicGrid, coeff: &CoefficientField) -> Result<SliceOperator> {
    if coeff.n() != grid.n() {
        return domain("coefficient dimension differs from grid dimension");
    }
    let ny = grid.ny_nodes();
    let node = |xf: usize, j: usize| xf * ny + j;
    let m = grid.y_weights();
    let mut t = Vec::new();
    for (d, p, q, area, h) in x_faces(grid) {
        let (ap, aq) = (coeff.entry(p, d, d), coeff.entry(q, d, d));
        let face = 2.0 * ap * aq / (ap + aq);
        for j in 0..ny {
            couple(&mut t, node(p, j), node(q, j), m[j] * face * area / h);
        }
    }
    for xf in 0..grid.x_count() {
        let vol = grid.x_volume(xf);
        for j in 0..ny - 1 {
            couple(&mut t, node(xf, j), node(xf, j + 1), vol * grid.y_transmissibility()[j]);
        }
    }
    if coeff.has_off_diagonal() {
        let (x1, x2) = (&grid.x()[0], &grid.x()[1]);
        for i1 in 0..x1.len() - 1 {
            for i2 in 0..x2.len() - 1 {
                let (h1, h2) = (x1[i1 + 1] - x1[i1], x2[i2 + 1] - x2[i2]);
                let f = |a: usize, b: usize| grid.x_flat(&[a, b]);
                let a12 = 0.25
                    * [f(i1, i2), f(i1 + 1, i2), f(i1, i2 + 1), f(i1 + 1, i2 + 1)]
                        .iter()
                        .map(|&k| 0.5 * (coeff.entry(k, 0, 1) + coeff.entry(k, 1, 0)))
                        .sum::<f64>();
                for c1 in 0..2 {
                    for c2 in 0..2 {
                        let d1 = [(f(i1 + 1, i2 + c2), 1.0 / h1), (f(i1, i2 + c2), -1.0 / h1)];
                        let d2 = [(f(i1 + c1, i2 + 1), 1.0 / h2), (f(i1 + c1, i2), -1.0 / h2)];
                        for j in 0..ny {
                            let w = m[j] * h1 * h2 * 0.25 * a12;
                            for &(u, al) in &d1 {
                                for &(v, be) in &d2 {
                                    t.push((node(u, j), node(v, j), w * al * be));
                                    t.push((node(v, j), node(u, j), w * al * be));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let len = grid.slice_len();
    let stiffness = CsrMatrix::from_triplets(len, t);
    let mut mass = vec![0.0; len];
    for xf in 0..grid.x_count() {
        let vol = grid.x_volume(xf);
        for j in 0..ny {
            mass[node(xf, j)] = vol * m[j];
        }
    }
    Ok(SliceOperator { stiffness, mass })
}

/// Boundary flux and divergence-form forcing at time level `it`, per slice node.
pub fn sources(grid: &ParabolicGrid, problem: &ExtensionProblem, it: usize) -> Vec<f64> {
    let ny = grid.ny_nodes();
    let mut s = vec![0.0; grid.slice_len()];
    if let Bottom::Neumann(f) = &problem.bottom {
        for xf in 0..grid.x_count() {
            s[xf * ny] += grid.x_volume(xf) * f.at(grid, it, xf);
        }
    }
    if let Some(forcing) = &problem.forcing {
        let m = grid.y_weights();
        for (d, p, q, area, _) in x_faces(grid) {
            for j in 0..ny {
                let fp = forcing.component(grid.index(it, p, j), d);
                let fq = forcing.component(grid.index(it, q, j), d);
                let flux = m[j] * area * 0.5 * (fp + fq);
                s[p * ny + j] -= flux;
                s[q * ny + j] += flux;
            }
        }
    }
    s
}

/// Slice nodes whose values are prescribed.
pub fn dirichlet_mask(grid: &ParabolicGrid, bottom: &Bottom) -> Vec<bool> {
    let ny = grid.ny_nodes();
    let mut mask = vec![false; grid.slice_len()];
    for xf in 0..grid.x_count() {
        let lateral = grid.on_lateral_boundary(&grid.x_multi(xf));
        for j in 0..ny {
            mask[xf * ny + j] = lateral || j + 1 == ny || (j == 0 && matches!(bottom, Bottom::Dirichlet));
        }
    }
    mask
}

enum Factor {
    Direct(BandedCholesky),
    Iterative,
}

struct System {
    matrix: CsrMatrix,
    factor: Factor,
}

fn validate_problem(grid: &ParabolicGrid, problem: &ExtensionProblem) -> Result<()> {
    if problem.dirichlet.shape != grid.shape() {
        return domain("Dirichlet field shape does not match the grid");
    }
    if let Bottom::Neumann(f) = &problem.bottom {
        if f.values.len() != grid.nt_nodes() * grid.x_count() {
            return domain("Neumann datum shape does not match the grid");
        }
    }
    if let Some(v) = &problem.forcing {
        if v.n != grid.n() || v.values.len() != grid.nt_nodes() * grid.slice_len() * grid.n() {
            return domain("forcing field shape does not match the grid");
        }
    }
    let finite = problem.dirichlet.values.iter().all(|v| v.is_finite())
        && problem.forcing.as_ref().is_none_or(|v| v.values.iter().all(|x| x.is_finite()))
        && match &problem.bottom {
            Bottom::Neumann(f) => f.values.iter().all(|v| v.is_finite()),
            Bottom::Dirichlet => true,
        };
    if !finite {
        return domain("data contain non-finite values");
    }
    Ok(())
}

pub fn solve_extension(
    grid: &ParabolicGrid,
    coeff: &CoefficientField,
    problem: &ExtensionProblem,
    opts: &SolverOptions,
) -> Result<ExtensionSolution> {
    validate_problem(grid, problem)?;
    if !(opts.theta >= 0.5 && opts.theta <= 1.0) {
        return domain("θ must lie in [1/2, 1] for unconditional stability");
    }
    let op = assemble(grid, coeff)?;
    let len = grid.slice_len();
    let mask = dirichlet_mask(grid, &problem.bottom);
    let mut unknowns: Vec<usize> = (0..len).filter(|&p| !mask[p]).collect();
    if opts.ordering == Ordering::Reversed {
        unknowns.reverse();
    }
    let mut pos = vec![usize::MAX; len];
    for (k, &p) in unknowns.iter().enumerate() {
        pos[p] = k;
    }
    let nu = unknowns.len();

    let mut field = ScalarField::zeros(grid);
    field.values[..len].copy_from_slice(problem.dirichlet.slice(grid, 0));
    let mut systems: HashMap<(u64, u64), System> = HashMap::new();
    let mut steps = Vec::with_capacity(grid.nt_nodes() - 1);
    let mut max_residual: f64 = 0.0;
    let mut used_direct = false;
    let mut s_prev = sources(grid, problem, 0);
    let mut ku = vec![0.0; len];
    for it in 0..grid.nt_nodes() - 1 {
        let dt = grid.t()[it + 1] - grid.t()[it];
        let theta = opts.theta_at(it);
        let s_next = sources(grid, problem, it + 1);
        let prev: Vec<f64> = field.values[it * len..(it + 1) * len].to_vec();
        let mut next = problem.dirichlet.slice(grid, it + 1).to_vec();
        for p in 0..len {
            if !mask[p] {
                next[p] = 0.0;
            }
        }
        op.stiffness.matvec(&prev, &mut ku);
        let mut rhs = vec![0.0; nu];
        for (k, &p) in unknowns.iter().enumerate() {
            let mut v =
                op.mass[p] / dt * prev[p] - (1.0 - theta) * ku[p] + theta * s_next[p] + (1.0 - theta) * s_prev[p];
            for (q, kv) in op.stiffness.row(p) {
                if mask[q] {
                    v -= theta * kv * next[q];
                }
            }
            rhs[k] = v;
        }
        let sys = match systems.entry((dt.to_bits(), theta.to_bits())) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let mut t = Vec::new();
                for (k, &p) in unknowns.iter().enumerate() {
                    t.push((k, k, op.mass[p] / dt));
                    for (q, kv) in op.stiffness.row(p) {
                        if !mask[q] {
                            t.push((k, pos[q], theta * kv));
                        }
                    }
                }
                let matrix = CsrMatrix::from_triplets(nu, t);
                let direct = match opts.linear {
                    LinearSolver::Direct => true,
                    LinearSolver::Iterative => false,
                    LinearSolver::Auto => nu.saturating_mul(matrix.bandwidth() + 1) <= opts.direct_band_limit,
                };
                let factor = if direct { Factor::Direct(BandedCholesky::factor(&matrix)?) } else { Factor::Iterative };
                e.insert(System { matrix, factor })
            }
        };
        let (x, iterations) = match &sys.factor {
            Factor::Direct(ch) => {
                used_direct = true;
                (ch.solve(&rhs), 0)
            }
            Factor::Iterative => {
                let x0: Vec<f64> =
                    if opts.zero_initial_iterate { vec![0.0; nu] } else { unknowns.iter().map(|&p| prev[p]).collect() };
                let out = pcg(&sys.matrix, &rhs, &x0, opts.tolerance, 20 * nu + 100)?;
                (out.x, out.iterations)
            }
        };
        let mut r = vec![0.0; nu];
        sys.matrix.matvec(&x, &mut r);
        let num: f64 = r.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let residual = if den > 0.0 { num / den } else { num };
        max_residual = max_residual.max(residual);
        steps.push(StepReport { step: it + 1, residual, iterations });
        for (k, &p) in unknowns.iter().enumerate() {
            next[p] = x[k];
        }
        field.values[(it + 1) * len..(it + 2) * len].copy_from_slice(&next);
        s_prev = s_next;
    }
    Ok(ExtensionSolution { field, max_residual, steps, used_direct })
}
