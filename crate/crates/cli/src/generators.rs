//! Turns the declarative parts of a config into grids, coefficient fields and
//! sampled data.

use fracheat_core::dtn::ModeSum;
use fracheat_core::extension::{
    Bottom, CoefficientField, ExtensionProblem, ParabolicGrid, ScalarField, ThinField, VectorField,
};
use fracheat_core::kernels::FracParams;
use fracheat_core::lorentz::CellFunction;
use fracheat_core::Result;

use crate::config::{critical_theta, BoundarySpec, DataSpec, ExperimentConfig, ForcingSpec};

/// Evaluates the `f` generator at `(t, x)`.
pub fn data_value(spec: &DataSpec, s: f64, t: f64, x: &[f64]) -> f64 {
    match spec {
        DataSpec::Zero => 0.0,
        DataSpec::TruncatedPower { amplitude, center, cutoff, theta } => {
            let th = theta.unwrap_or_else(|| critical_theta(s, x.len()));
            let r = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
            amplitude * r.max(*cutoff).powf(-th)
        }
        DataSpec::Indicator { amplitude, lo, hi } => {
            let inside = x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h);
            if inside {
                *amplitude
            } else {
                0.0
            }
        }
        DataSpec::Smooth { modes } => modes.value(t, x),
    }
}

/// Sorted, deduplicated edges on `[−ρ, ρ]`: `cells` uniform cells, refined
/// by `c ± cutoff·2^k` when `c` is given.
fn axis_edges(rho: f64, cells: usize, center: Option<(f64, f64)>) -> Vec<f64> {
    let mut e: Vec<f64> = (0..=cells).map(|i| -rho + 2.0 * rho * i as f64 / cells as f64).collect();
    if let Some((c, cutoff)) = center {
        let mut r = cutoff;
        while r < 2.0 * rho {
            for v in [c - r, c + r] {
                if v > -rho && v < rho {
                    e.push(v);
                }
            }
            r *= 2.0;
        }
    }
    e.sort_by(f64::total_cmp);
    let min_gap = 1e-12 * rho;
    e.dedup_by(|a, b| (*a - *b).abs() <= min_gap);
    e
}

/// `f` as a piecewise-constant function on the data grid covering the
/// solver domain, sampled at cell midpoints.
pub fn data_cells(cfg: &ExperimentConfig) -> Result<CellFunction> {
    let rho = cfg.grid.rho;
    let r2 = rho * rho;
    let dg = &cfg.data_grid;
    let t_edges: Vec<f64> = (0..=dg.t_cells).map(|i| -r2 + 2.0 * r2 * i as f64 / dg.t_cells as f64).collect();
    let x_edges: Vec<Vec<f64>> = (0..cfg.n)
        .map(|d| {
            let center = match (&cfg.f, dg.geometric) {
                (DataSpec::TruncatedPower { center, cutoff, .. }, true) => Some((center[d], *cutoff)),
                _ => None,
            };
            axis_edges(rho, dg.x_cells, center)
        })
        .collect();
    CellFunction::from_fn(t_edges, x_edges, |t, x| data_value(&cfg.f, cfg.s, t, x))
}

pub fn params(cfg: &ExperimentConfig) -> Result<FracParams> {
    FracParams::new(cfg.s, cfg.n)
}

pub fn grid(cfg: &ExperimentConfig) -> Result<ParabolicGrid> {
    cfg.grid.build(params(cfg)?)
}

fn boundary_value(modes: Option<&ModeSum>, s: f64, t: f64, x: &[f64], y: f64) -> f64 {
    modes.map_or(0.0, |m| m.extension(s, t, x, y))
}

/// The Neumann problem `−y^a U_y = f` with Dirichlet data elsewhere.
pub fn problem(cfg: &ExperimentConfig, grid: &ParabolicGrid) -> ExtensionProblem {
    let s = cfg.s;
    let f = ThinField::from_fn(grid, |t, x| data_value(&cfg.f, s, t, x));
    let forcing = match &cfg.forcing {
        ForcingSpec::Zero => None,
        ForcingSpec::Smooth { amplitude, xi } => Some(VectorField::from_fn(grid, |_, x, y, out| {
            let phase: f64 = xi.iter().zip(x).map(|(k, v)| k * v).sum();
            out.iter_mut().for_each(|o| *o = amplitude * phase.cos() * (-y).exp());
        })),
    };
    let modes = match &cfg.boundary {
        BoundarySpec::Zero => None,
        BoundarySpec::Modes { modes } => Some(modes),
    };
    ExtensionProblem {
        bottom: Bottom::Neumann(f),
        forcing,
        dirichlet: ScalarField::boundary_from_fn(grid, false, |t, x, y| boundary_value(modes, s, t, x, y)),
    }
}

pub fn coefficients(cfg: &ExperimentConfig, grid: &ParabolicGrid) -> Result<CoefficientField> {
    CoefficientField::build(&cfg.coefficients, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_power_is_capped_at_the_cutoff() {
        let spec = DataSpec::TruncatedPower { amplitude: 2.0, center: vec![0.0], cutoff: 0.01, theta: Some(0.5) };
        assert!((data_value(&spec, 0.75, 0.0, &[0.0]) - 20.0).abs() < 1e-12);
        assert!((data_value(&spec, 0.75, 0.0, &[0.25]) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_edges_bracket_the_center() {
        let e = axis_edges(1.0, 4, Some((0.0, 0.125)));
        assert_eq!(e, vec![-1.0, -0.5, -0.25, -0.125, 0.0, 0.125, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn data_cells_cover_the_solver_domain() {
        let cfg = ExperimentConfig::example(1);
        let f = data_cells(&cfg).unwrap();
        assert_eq!(f.t_edges().first(), Some(&-1.0));
        assert_eq!(f.x_edges()[0].last(), Some(&1.0));
        assert!(f.values().iter().all(|v| *v >= 1.0));
    }
}
