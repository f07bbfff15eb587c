//! Dirichlet-to-Neumann extraction `−c_s lim_{y→0} y^a ∂_y U` from discrete
//! extension solutions, and its comparison with direct quadrature of
//! `(∂_t − Δ)^s u`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::extension::{
    solve_extension, Bottom, CoefficientField, ExtensionProblem, GridSpec, ParabolicGrid, ScalarField, SolverOptions,
};
use crate::kernels::{dtn_constant, frac_heat_apply, FracParams, QuadratureSpec};
use crate::special::extension_profile;

/// Extracted boundary values on every `(t, x)` node of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtnExtract {
    pub nt: usize,
    pub x_count: usize,
    pub layers: usize,
    /// `c_s = 2^{2s−1} Γ(s)/Γ(1−s)`.
    pub c_s: f64,
    /// Effective `y^{1+a}` of the first `layers` faces.
    pub positions: Vec<f64>,
    /// `y^a ∂_y U` on the first `layers` faces, per `(t, x)` node.
    pub fluxes: Vec<f64>,
    /// Extrapolated `lim_{y→0} y^a ∂_y U`.
    pub limit: Vec<f64>,
    /// `−c_s · limit`.
    pub values: Vec<f64>,
    /// `|P_K(0) − P_{K−1}(0)|` relative to the flux scale, where `P_k`
    /// interpolates the first `k` fluxes.
    pub residual: Vec<f64>,
    /// Residual above the threshold.
    pub flagged: Vec<bool>,
    /// Node is at least two cells away from the lateral boundary.
    pub interior: Vec<bool>,
}

impl DtnExtract {
    pub fn index(&self, it: usize, x_flat: usize) -> usize {
        it * self.x_count + x_flat
    }

    pub fn at(&self, it: usize, x_flat: usize) -> f64 {
        self.values[self.index(it, x_flat)]
    }

    /// Largest residual over interior nodes.
    pub fn max_interior_residual(&self) -> f64 {
        self.residual.iter().zip(&self.interior).filter(|(_, &i)| i).map(|(r, _)| *r).fold(0.0, f64::max)
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

/// Value at 0 of the polynomial through `(z_i, v_i)` (Neville).
fn extrapolate_to_zero(z: &[f64], v: &[f64]) -> f64 {
    let mut p = v.to_vec();
    let k = z.len();
    for m in 1..k {
        for i in 0..k - m {
            p[i] = (z[i + m] * p[i] - z[i] * p[i + 1]) / (z[i + m] - z[i]);
        }
    }
    p[0]
}

/// Fits the first `layers` face fluxes as a polynomial in the effective
/// `y^{1+a}` and extrapolates to `y = 0`.
pub fn extract_dtn(grid: &ParabolicGrid, u: &ScalarField, layers: usize, threshold: f64) -> Result<DtnExtract> {
    if layers < 3 || layers >= grid.ny_nodes() {
        return domain(format!("need 3 ≤ layers < {} y-nodes, got {layers}", grid.ny_nodes()));
    }
    if u.shape != grid.shape() {
        return domain("field shape does not match the grid");
    }
    let c_s = dtn_constant(grid.params().s())?;
    let positions = grid.y_flux_positions()[..layers].to_vec();
    let trans = &grid.y_transmissibility()[..layers];
    let (nt, xc) = (grid.nt_nodes(), grid.x_count());
    let cells = nt * xc;
    let mut out = DtnExtract {
        nt,
        x_count: xc,
        layers,
        c_s,
        positions: positions.clone(),
        fluxes: Vec::with_capacity(cells * layers),
        limit: Vec::with_capacity(cells),
        values: Vec::with_capacity(cells),
        residual: Vec::with_capacity(cells),
        flagged: Vec::with_capacity(cells),
        interior: Vec::with_capacity(cells),
    };
    for it in 0..nt {
        for xf in 0..xc {
            let ix = grid.x_multi(xf);
            let fl: Vec<f64> = (0..layers)
                .map(|k| trans[k] * (u.values[grid.index(it, xf, k + 1)] - u.values[grid.index(it, xf, k)]))
                .collect();
            let full = extrapolate_to_zero(&positions, &fl);
            let reduced = extrapolate_to_zero(&positions[..layers - 1], &fl[..layers - 1]);
            let scale = fl.iter().fold(full.abs(), |m, v| m.max(v.abs()));
            let residual = if scale > 0.0 { (full - reduced).abs() / scale } else { 0.0 };
            out.fluxes.extend_from_slice(&fl);
            out.limit.push(full);
            out.values.push(-c_s * full);
            out.residual.push(residual);
            out.flagged.push(!(residual <= threshold));
            out.interior.push(ix.iter().zip(grid.x()).all(|(&i, xs)| i >= 2 && i + 2 < xs.len()));
        }
    }
    Ok(out)
}

/// One term `A e^{μt} cos(ξ·x)` of a closed-form function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub amplitude: f64,
    pub xi: Vec<f64>,
    #[serde(default)]
    pub mu: f64,
}

impl Mode {
    fn kappa2(&self) -> f64 {
        self.xi.iter().map(|v| v * v).sum::<f64>() + self.mu
    }
}

/// `u(t, x) = Σ A e^{μt} cos(ξ·x)`, for which `(∂_t − Δ)^s u` and the
/// extension are explicit: the symbol is `(|ξ|² + μ)^s` and the extension
/// multiplies each mode by `φ_s(√(|ξ|² + μ) y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSum {
    pub modes: Vec<Mode>,
}

impl ModeSum {
    pub fn cosine(xi: Vec<f64>) -> Self {
        ModeSum { modes: vec![Mode { amplitude: 1.0, xi, mu: 0.0 }] }
    }

    pub fn exponential(n: usize, mu: f64) -> Self {
        ModeSum { modes: vec![Mode { amplitude: 1.0, xi: vec![0.0; n], mu }] }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        ModeSum { modes: vec![Mode { amplitude: value, xi: vec![0.0; n], mu: 0.0 }] }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for m in &self.modes {
            if m.xi.len() != n {
                return domain(format!("mode frequency has dimension {}, expected {n}", m.xi.len()));
            }
            if m.kappa2() < 0.0 || (m.kappa2() == 0.0 && m.mu != 0.0) {
                return domain("each mode needs |ξ|² + μ > 0 (or ξ = 0 and μ = 0)");
            }
        }
        Ok(())
    }

    /// Weaker check for use as extension data only: `|ξ|² + μ = 0` is
    /// allowed, giving the `y`-independent solution `e^{−|ξ|²t} cos(ξ·x)` of
    /// the homogeneous Neumann problem. (The nonlocal operator needs the
    /// strict inequality for its time integral to converge.)
    pub fn validate_extension(&self, n: usize) -> Result<()> {
        for m in &self.modes {
            if m.xi.len() != n {
                return domain(format!("mode frequency has dimension {}, expected {n}", m.xi.len()));
            }
            if m.kappa2() < 0.0 {
                return domain("each mode needs |ξ|² + μ ≥ 0");
            }
        }
        Ok(())
    }

    fn phase(m: &Mode, t: f64, x: &[f64]) -> f64 {
        m.amplitude * (m.mu * t).exp() * m.xi.iter().zip(x).map(|(k, v)| k * v).sum::<f64>().cos()
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.modes.iter().map(|m| Self::phase(m, t, x)).sum()
    }

    /// `(∂_t − Δ)^s u` from the symbol.
    pub fn fractional(&self, s: f64, t: f64, x: &[f64]) -> f64 {
        self.modes.iter().map(|m| m.kappa2().powf(s) * Self::phase(m, t, x)).sum()
    }

    pub fn extension(&self, s: f64, t: f64, x: &[f64], y: f64) -> f64 {
        self.modes.iter().map(|m| Self::phase(m, t, x) * extension_profile(s, m.kappa2().sqrt() * y)).sum()
    }
}

/// Discrepancies on one grid/quadrature level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtnLevel {
    pub grid: GridSpec,
    pub quadrature: QuadratureSpec,
    pub compared_points: usize,
    /// Extension route vs direct quadrature.
    pub sup_rel_direct: f64,
    pub l2_rel_direct: f64,
    /// Extension route vs the closed-form symbol.
    pub sup_rel_closed: f64,
    pub l2_rel_closed: f64,
    /// Direct quadrature vs the closed-form symbol.
    pub sup_rel_direct_vs_closed: f64,
    pub max_extrapolation_residual: f64,
    pub flagged_cells: usize,
    pub quadrature_warnings: usize,
    pub solver_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtnComparison {
    pub s: f64,
    pub n: usize,
    pub function: ModeSum,
    pub levels: Vec<DtnLevel>,
    /// The extension-vs-direct sup discrepancy decreases level to level.
    pub decreasing: bool,
}

/// Options for [`dtn_vs_direct`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtnOptions {
    pub layers: usize,
    pub residual_threshold: f64,
    /// Compare on every `stride`-th node of the coarsest grid (scaled with
    /// refinement so that all levels use the same points).
    pub stride: usize,
}

impl Default for DtnOptions {
    fn default() -> Self {
        DtnOptions { layers: 3, residual_threshold: 0.05, stride: 2 }
    }
}

/// Solves the extension problem of `u` with exact Dirichlet data on every
/// boundary face (including `y = 0`) and second-order time stepping.
pub fn solve_mode_extension(u: &ModeSum, grid: &ParabolicGrid) -> Result<crate::extension::ExtensionSolution> {
    let s = grid.params().s();
    u.validate(grid.n())?;
    let problem = ExtensionProblem {
        bottom: Bottom::Dirichlet,
        forcing: None,
        dirichlet: ScalarField::boundary_from_fn(grid, true, |t, x, y| u.extension(s, t, x, y)),
    };
    solve_extension(grid, &CoefficientField::identity(grid), &problem, &SolverOptions::crank_nicolson())
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Compares `extract_dtn ∘ solve_extension` with `frac_heat_apply` and the
/// closed form on the interior half-cylinder `|t| < ρ²/4, |x| < ρ/2`. Level
/// `i` uses `grids[i]` and the quadrature refined `i` times.
pub fn dtn_vs_direct(
    u: &ModeSum,
    p: FracParams,
    grids: &[GridSpec],
    quadrature: &QuadratureSpec,
    opts: &DtnOptions,
) -> Result<DtnComparison> {
    u.validate(p.n())?;
    if grids.is_empty() || opts.stride == 0 {
        return domain("need at least one grid and a positive stride");
    }
    let s = p.s();
    let mut levels = Vec::with_capacity(grids.len());
    let mut q = quadrature.clone();
    for (level, spec) in grids.iter().enumerate() {
        let grid = spec.build(p)?;
        let sol = solve_mode_extension(u, &grid)?;
        let ext = extract_dtn(&grid, &sol.field, opts.layers, opts.residual_threshold)?;
        let stride = opts.stride * (spec.nx / grids[0].nx).max(1);
        let t_stride = opts.stride * (spec.nt / grids[0].nt).max(1);
        let rho = spec.rho;
        let mut points = Vec::new();
        let mut cells = Vec::new();
        for it in (0..grid.nt_nodes()).step_by(t_stride) {
            let t = grid.t()[it];
            if t.abs() >= 0.25 * rho * rho {
                continue;
            }
            for xf in 0..grid.x_count() {
                let ix = grid.x_multi(xf);
                let x = grid.x_point(&ix);
                let inside = x.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.5 * rho;
                let idx = ext.index(it, xf);
                if inside && ext.interior[idx] && ix.iter().all(|i| i % stride == 0) {
                    points.push((t, x));
                    cells.push(idx);
                }
            }
        }
        if points.is_empty() {
            return domain("no grid nodes inside the interior half-cylinder");
        }
        let direct = frac_heat_apply(&|t: f64, x: &[f64]| u.value(t, x), &p, &q, &points)?;
        let closed: Vec<f64> = points.iter().map(|(t, x)| u.fractional(s, *t, x)).collect();
        let extv: Vec<f64> = cells.iter().map(|&c| ext.values[c]).collect();
        let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let l2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let norm_sup = |a: &[f64]| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let norm_l2 = |a: &[f64]| a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (ds, dl, cs, cl) = (norm_sup(&direct.values), norm_l2(&direct.values), norm_sup(&closed), norm_l2(&closed));
        levels.push(DtnLevel {
            grid: spec.clone(),
            quadrature: q.clone(),
            compared_points: points.len(),
            sup_rel_direct: rel(sup(&extv, &direct.values), ds),
            l2_rel_direct: rel(l2(&extv, &direct.values), dl),
            sup_rel_closed: rel(sup(&extv, &closed), cs),
            l2_rel_closed: rel(l2(&extv, &closed), cl),
            sup_rel_direct_vs_closed: rel(sup(&direct.values, &closed), cs),
            max_extrapolation_residual: cells.iter().map(|&c| ext.residual[c]).fold(0.0, f64::max),
            flagged_cells: cells.iter().filter(|&&c| ext.flagged[c]).count(),
            quadrature_warnings: direct.diagnostics.len(),
            solver_residual: sol.max_residual,
        });
        if level + 1 < grids.len() {
            q = q.refined();
        }
    }
    let decreasing = levels.windows(2).all(|w| w[1].sup_rel_direct < w[0].sup_rel_direct);
    Ok(DtnComparison { s, n: p.n(), function: u.clone(), levels, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neville_reproduces_polynomials() {
        let z = [0.1, 0.3, 0.7, 1.2];
        let v: Vec<f64> = z.iter().map(|x| 2.0 - 3.0 * x + 0.5 * x * x * x).collect();
        assert!((extrapolate_to_zero(&z, &v) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mode_sum_constant_has_zero_symbol() {
        let u = ModeSum::constant(2, 3.0);
        assert_eq!(u.fractional(0.7, 0.3, &[0.1, 0.2]), 0.0);
        assert_eq!(u.extension(0.7, 0.3, &[0.1, 0.2], 0.5), 3.0);
        assert!(ModeSum::exponential(1, -1.0).validate(1).is_err());
    }

    #[test]
    fn caloric_mode_is_valid_extension_data_only() {
        let u = ModeSum { modes: vec![Mode { amplitude: 1.0, xi: vec![2.0], mu: -4.0 }] };
        assert!(u.validate(1).is_err());
        assert!(u.validate_extension(1).is_ok());
        assert_eq!(u.extension(0.75, 0.1, &[0.3], 0.9), u.value(0.1, &[0.3]));
        let bad = ModeSum { modes: vec![Mode { amplitude: 1.0, xi: vec![1.0], mu: -2.0 }] };
        assert!(bad.validate_extension(1).is_err());
    }
}
