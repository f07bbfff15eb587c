//! Coefficient matrices `A(x)` sampled on the `x` nodes, with their
//! ellipticity bounds and declared modulus of continuity `ω_A`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::ParabolicGrid;
use crate::error::{domain, Result};
use crate::moduli::{concave_majorant_rule, log_grid, ModulusOfContinuity, ModulusRule};

/// Named coefficient generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientSpec {
    Identity,
    /// `A(x) = I + ε η(|x|) M` with `M` symmetric (row-major `n×n`).
    Perturbed {
        epsilon: f64,
        profile: ModulusRule,
        matrix: Vec<f64>,
    },
    /// `A(x) = (1 + c·tanh(Π_d sin(π x_d / period) / width)) I`, a smoothed
    /// checkerboard.
    Checkerboard {
        contrast: f64,
        period: f64,
        width: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    n: usize,
    /// Row-major `n×n` blocks, one per flat `x` node.
    nodes: Vec<f64>,
    pub lambda_ell: f64,
    pub big_lambda_ell: f64,
    pub omega_a: ModulusOfContinuity,
}

fn sym_eigen_bounds(m: &[f64], n: usize) -> (f64, f64) {
    match n {
        1 => (m[0], m[0]),
        _ => {
            let (a, b, d) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            (mean - rad, mean + rad)
        }
    }
}

fn generator_value(spec: &CoefficientSpec, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for d in 0..n {
        out[d * n + d] = 1.0;
    }
    match spec {
        CoefficientSpec::Identity => {}
        CoefficientSpec::Perturbed { epsilon, profile, matrix } => {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let eta = ModulusOfContinuity::new(profile.clone()).eval(r);
            for (o, m) in out.iter_mut().zip(matrix) {
                *o += epsilon * eta * m;
            }
        }
        CoefficientSpec::Checkerboard { contrast, period, width } => {
            let prod: f64 = x.iter().map(|v| (std::f64::consts::PI * v / period).sin()).product();
            let c = 1.0 + contrast * (prod / width).tanh();
            for d in 0..n {
                out[d * n + d] = c;
            }
        }
    }
}

/// Sampled `h ↦ sup_r |η(r + h) − η(r)|` for a radial profile (constant
/// beyond 1). Unlike `η` itself this bounds the oscillation of `η(|x|)` also
/// where `η` is convex; its concave majorant is then a valid `ω_A`.
fn oscillation_rule(profile: &ModulusRule) -> Result<ModulusRule> {
    let eta = ModulusOfContinuity::new(profile.clone());
    let hs = log_grid(1e-200, 1.0, 10);
    let mut rs = log_grid(1e-12, 1.0, 12);
    rs.insert(0, 0.0);
    let osc: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let tail = (eta.eval(1.0) - eta.eval(1.0 - h)).abs();
            rs.iter().map(|&r| (eta.eval(r + h) - eta.eval(r)).abs()).fold(tail, f64::max)
        })
        .collect();
    // The oscillation is nondecreasing in h, so the value at the next node
    // bounds it on the whole segment.
    let values = (0..hs.len()).map(|i| osc[(i + 1).min(hs.len() - 1)]).collect();
    Ok(ModulusRule::Table { r: hs, values, log_log: false, tail: Some(Box::new(profile.clone())) })
}

impl CoefficientField {
    pub fn identity(grid: &ParabolicGrid) -> Self {
        Self::build(&CoefficientSpec::Identity, grid).expect("identity coefficients are valid")
    }

    pub fn build(spec: &CoefficientSpec, grid: &ParabolicGrid) -> Result<Self> {
        let n = grid.n();
        let omega_a = match spec {
            CoefficientSpec::Identity => ModulusOfContinuity::zero(),
            CoefficientSpec::Perturbed { epsilon, profile, matrix } => {
                if matrix.len() != n * n {
                    return domain(format!("perturbation matrix needs {} entries", n * n));
                }
                if n == 2 && matrix[1] != matrix[2] {
                    return domain("perturbation matrix must be symmetric");
                }
                let (lo, hi) = sym_eigen_bounds(matrix, n);
                let norm = lo.abs().max(hi.abs());
                let hull = concave_majorant_rule(&oscillation_rule(profile)?)?;
                ModulusOfContinuity::new(ModulusRule::Scaled { factor: epsilon.abs() * norm, inner: Box::new(hull) })
            }
            CoefficientSpec::Checkerboard { contrast, period, width } => {
                if !(*period > 0.0 && *width > 0.0) {
                    return domain("checkerboard needs positive period and width");
                }
                let lip = contrast.abs() / width * std::f64::consts::PI / period * (n as f64).sqrt();
                ModulusOfContinuity::lipschitz(lip)
            }
        };
        let count = grid.x_count();
        let mut nodes = vec![0.0; count * n * n];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for xf in 0..count {
            let x = grid.x_point(&grid.x_multi(xf));
            let block = &mut nodes[xf * n * n..(xf + 1) * n * n];
            generator_value(spec, &x, block);
            let (l, h) = sym_eigen_bounds(block, n);
            lo = lo.min(l);
            hi = hi.max(h);
        }
        if !(lo > 0.0) {
            return domain(format!("coefficients are not elliptic: smallest eigenvalue {lo}"));
        }
        Ok(CoefficientField { n, nodes, lambda_ell: lo, big_lambda_ell: hi, omega_a })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry `A_{de}` at a flat `x` node.
    pub fn entry(&self, x_flat: usize, d: usize, e: usize) -> f64 {
        self.nodes[x_flat * self.n * self.n + d * self.n + e]
    }

    pub fn is_identity(&self) -> bool {
        let n = self.n;
        self.nodes.chunks(n * n).all(|b| (0..n).all(|d| (0..n).all(|e| b[d * n + e] == if d == e { 1.0 } else { 0.0 })))
    }

    pub fn has_off_diagonal(&self) -> bool {
        self.n == 2 && self.nodes.chunks(4).any(|b| b[1] != 0.0 || b[2] != 0.0)
    }

    /// Compares `|A(x) − A(x')|` (spectral norm) with `ω_A(|x − x'|)` on
    /// random node pairs.
    pub fn check_oscillation(&self, grid: &ParabolicGrid, pairs: usize, seed: u64) -> OscillationReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = grid.x_count();
        let n = self.n;
        let mut worst_excess = f64::NEG_INFINITY;
        let mut worst_ratio: f64 = 0.0;
        for _ in 0..pairs {
            let (i, k) = (rng.gen_range(0..count), rng.gen_range(0..count));
            if i == k {
                continue;
            }
            let diff: Vec<f64> = (0..n * n).map(|m| self.nodes[i * n * n + m] - self.nodes[k * n * n + m]).collect();
            let (l, h) = sym_eigen_bounds(&diff, n);
            let osc = l.abs().max(h.abs());
            let (xi, xk) = (grid.x_point(&grid.x_multi(i)), grid.x_point(&grid.x_multi(k)));
            let r = xi.iter().zip(&xk).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let bound = self.omega_a.eval(r);
            worst_excess = worst_excess.max(osc - bound);
            if bound > 0.0 {
                worst_ratio = worst_ratio.max(osc / bound);
            }
        }
        OscillationReport { pairs, worst_ratio, holds: worst_excess <= 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub pairs: usize,
    pub worst_ratio: f64,
    pub holds: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::grid::GridSpec;
    use crate::kernels::FracParams;

    #[test]
    fn log_dini_perturbation_respects_declared_modulus() {
        let p = FracParams::new(0.7, 2).unwrap();
        let g = GridSpec::new(1.0, 2, 16, 4).build(p).unwrap();
        let spec = CoefficientSpec::Perturbed {
            epsilon: 0.3,
            profile: ModulusRule::LogDini { scale: 1.0, power: 2.0 },
            matrix: vec![1.0, 0.2, 0.2, -0.5],
        };
        let c = CoefficientField::build(&spec, &g).unwrap();
        assert!(c.lambda_ell > 0.5 && c.big_lambda_ell < 1.5);
        assert!(c.check_oscillation(&g, 2000, 7).holds);
        assert!(c.has_off_diagonal());
    }

    #[test]
    fn checkerboard_is_elliptic_and_lipschitz() {
        let p = FracParams::new(0.7, 1).unwrap();
        let g = GridSpec::new(1.0, 2, 64, 4).build(p).unwrap();
        let spec = CoefficientSpec::Checkerboard { contrast: 0.5, period: 0.5, width: 0.3 };
        let c = CoefficientField::build(&spec, &g).unwrap();
        assert!(c.lambda_ell >= 0.5 - 1e-12);
        assert!(c.check_oscillation(&g, 2000, 1).holds);
        let bad = CoefficientSpec::Checkerboard { contrast: 1.5, period: 0.5, width: 0.3 };
        assert!(CoefficientField::build(&bad, &g).is_err());
    }
}
