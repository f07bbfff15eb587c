//! Regularity probes on solved extension fields: linear-fit excess over
//! shrinking parabolic cylinders at the thin face, Campanato profiles,
//! sampled gradient moduli and interior excess decay away from `y = 0`.
//!
//! Cylinders are `Q_r(t₀, x₀) = (t₀ − r², t₀ + r²) × B_r(x₀)` on the face
//! and `Q*_r = Q_r × [0, r)` above it. Integrals are node quadratures whose
//! weights are the exact overlaps of each dual cell with the cylinder (with
//! `∫ y^a dy` in `y`), so they vary continuously with the radius.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Result};
use crate::extension::{ParabolicGrid, ScalarField};
use crate::geometry::{ball_box_overlap, interval_overlap};
use crate::moduli::{
    build_omega1, build_omega3_and_omega, ModulusOfContinuity, ModulusPipelineConfig, ModulusRule, OmegaPipeline,
};

/// `max{√|t₁ − t₂|, ‖X₁ − X₂‖}`.
pub fn parabolic_distance(t1: f64, x1: &[f64], t2: f64, x2: &[f64]) -> f64 {
    let dx = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (t1 - t2).abs().sqrt().max(dx)
}

fn dual_edges(nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len();
    let mut e = Vec::with_capacity(m + 1);
    e.push(nodes[0]);
    e.extend(nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    e.push(nodes[m - 1]);
    e
}

/// Dual `y` cells of the solver: boundaries at `ζ^{1/(1+a)}` of the faces.
fn y_edges(grid: &ParabolicGrid) -> Vec<f64> {
    let a = grid.params().a();
    let mut e = vec![0.0];
    e.extend(grid.y_flux_positions().iter().map(|z| z.powf(1.0 / (1.0 + a))));
    e.push(*grid.y().last().unwrap());
    e
}

fn relative_slack(v: f64) -> f64 {
    1e-12 * (1.0 + v.abs())
}

/// Centered cylinder at the face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub r: f64,
}

impl Cylinder {
    pub fn new(t0: f64, x0: Vec<f64>, r: f64) -> Self {
        Cylinder { t0, x0, r }
    }

    pub fn inside(&self, grid: &ParabolicGrid) -> bool {
        let (t, r2) = (grid.t(), self.r * self.r);
        let t_ok = self.t0 - r2 >= t[0] - relative_slack(t[0])
            && self.t0 + r2 <= t[t.len() - 1] + relative_slack(t[t.len() - 1]);
        let x_ok = grid.x().iter().zip(&self.x0).all(|(xs, &c)| {
            c - self.r >= xs[0] - relative_slack(xs[0])
                && c + self.r <= xs[xs.len() - 1] + relative_slack(xs[xs.len() - 1])
        });
        let y_max = *grid.y().last().unwrap();
        self.r > 0.0 && t_ok && x_ok && self.x0.len() == grid.n() && self.r <= y_max + relative_slack(y_max)
    }

    /// True when the cylinder contains at least `min_cells + 1` nodes along
    /// `t`, along every `x` axis through its center, and along `y` in `[0, r)`.
    pub fn resolved(&self, grid: &ParabolicGrid, min_cells: usize) -> bool {
        let need = min_cells + 1;
        let count = |v: &[f64], lo: f64, hi: f64| v.iter().filter(|&&p| p >= lo && p <= hi).count();
        let r2 = self.r * self.r;
        count(grid.t(), self.t0 - r2, self.t0 + r2) >= need
            && grid.x().iter().zip(&self.x0).all(|(xs, &c)| count(xs, c - self.r, c + self.r) >= need)
            && grid.y().iter().filter(|&&y| y < self.r).count() >= need
    }
}

/// Overlap weights of a cylinder with the dual cells, kept separable.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderQuadrature {
    pub r: f64,
    pub t: Vec<(usize, f64)>,
    /// `(flat x index, |B_r(x₀) ∩ cell|, x − x₀)`.
    pub x: Vec<(usize, f64, Vec<f64>)>,
    /// `∫_{cell ∩ [0,r)} y^a dy` when weighted, the plain length otherwise.
    pub y: Vec<(usize, f64)>,
}

impl CylinderQuadrature {
    pub fn build(grid: &ParabolicGrid, cyl: &Cylinder, weighted: bool) -> Result<Self> {
        if !cyl.inside(grid) {
            return domain(format!("cylinder of radius {} at t = {}, x = {:?} leaves the grid", cyl.r, cyl.t0, cyl.x0));
        }
        let r2 = cyl.r * cyl.r;
        let te = dual_edges(grid.t());
        let t = (0..grid.nt_nodes())
            .filter_map(|it| {
                let w = interval_overlap(te[it], te[it + 1], cyl.t0 - r2, cyl.t0 + r2);
                (w > 0.0).then_some((it, w))
            })
            .collect();
        let xe: Vec<Vec<f64>> = grid.x().iter().map(|xs| dual_edges(xs)).collect();
        let ranges: Vec<Vec<usize>> = xe
            .iter()
            .zip(&cyl.x0)
            .map(|(e, &c)| (0..e.len() - 1).filter(|&i| e[i + 1] > c - cyl.r && e[i] < c + cyl.r).collect())
            .collect();
        let mut x = Vec::new();
        let mut idx = vec![0usize; grid.n()];
        let emit = |ix: &[usize], x: &mut Vec<(usize, f64, Vec<f64>)>| {
            let lo: Vec<f64> = ix.iter().enumerate().map(|(d, &i)| xe[d][i]).collect();
            let hi: Vec<f64> = ix.iter().enumerate().map(|(d, &i)| xe[d][i + 1]).collect();
            let w = ball_box_overlap(&cyl.x0, cyl.r, &lo, &hi);
            if w > 0.0 {
                let off = grid.x_point(ix).iter().zip(&cyl.x0).map(|(p, c)| p - c).collect();
                x.push((grid.x_flat(ix), w, off));
            }
        };
        match grid.n() {
            1 => {
                for &i in &ranges[0] {
                    idx[0] = i;
                    emit(&idx, &mut x);
                }
            }
            _ => {
                for &i in &ranges[0] {
                    for &k in &ranges[1] {
                        idx[0] = i;
                        idx[1] = k;
                        emit(&idx, &mut x);
                    }
                }
            }
        }
        let a = grid.params().a();
        let ye = y_edges(grid);
        let y = (0..grid.ny_nodes())
            .filter_map(|j| {
                let (lo, hi) = (ye[j], ye[j + 1].min(cyl.r));
                if hi <= lo {
                    return None;
                }
                let w = if weighted { (hi.powf(1.0 + a) - lo.powf(1.0 + a)) / (1.0 + a) } else { hi - lo };
                Some((j, w))
            })
            .collect();
        Ok(CylinderQuadrature { r: cyl.r, t, x, y })
    }

    /// `|Q_r|` as integrated by the weights.
    pub fn thin_measure(&self) -> f64 {
        self.t.iter().map(|p| p.1).sum::<f64>() * self.x.iter().map(|p| p.1).sum::<f64>()
    }

    /// `∫_{Q*_r} y^a` (or `|Q*_r|` for plain weights).
    pub fn thick_measure(&self) -> f64 {
        self.thin_measure() * self.y.iter().map(|p| p.1).sum::<f64>()
    }

    /// `(∫_{Q_r} |U(·,·,0) − ℓ|², ∫_{Q*_r} w(y) |U − ℓ|²)` for
    /// `ℓ(x) = a + b·(x − x₀)`.
    pub fn residual_integrals(&self, grid: &ParabolicGrid, u: &ScalarField, a: f64, b: &[f64]) -> (f64, f64) {
        let (mut thin, mut thick) = (0.0, 0.0);
        for &(it, wt) in &self.t {
            for (xf, wx, off) in &self.x {
                let l = a + b.iter().zip(off).map(|(p, q)| p * q).sum::<f64>();
                let base = grid.index(it, *xf, 0);
                let d0 = u.values[base] - l;
                thin += wt * wx * d0 * d0;
                let mut s = 0.0;
                for &(j, wy) in &self.y {
                    let d = u.values[base + j] - l;
                    s += wy * d * d;
                }
                thick += wt * wx * s;
            }
        }
        (thin, thick)
    }
}

/// `ℓ(x) = a + b·(x − x₀)` fitted on `Q*_r(t₀, x₀)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub center: Vec<f64>,
    pub r: f64,
    /// Value of `ℓ` at the center.
    pub a: f64,
    pub b: Vec<f64>,
    /// `∫_{Q_r} |U(·,·,0) − ℓ|²`.
    pub thin: f64,
    /// `∫_{Q*_r} y^a |U − ℓ|²`.
    pub thick: f64,
    /// `r^{−(n+2)} thin + r^{−(n+3+a)} thick`, the functional `ℓ` minimizes.
    pub excess: f64,
    /// Relative residual of the normal equations.
    pub normal_residual: f64,
}

impl LinearFit {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.a + self.b.iter().zip(x.iter().zip(&self.center)).map(|(b, (p, c))| b * (p - c)).sum::<f64>()
    }
}

fn scales(grid: &ParabolicGrid, r: f64) -> (f64, f64) {
    let n = grid.n() as f64;
    (r.powf(-(n + 2.0)), r.powf(-(n + 3.0 + grid.params().a())))
}

/// Solves `M c = rhs` for a symmetric positive definite moment matrix and
/// returns `c` with the relative residual.
fn solve_normal(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let chol = match m.clone().cholesky() {
        Some(c) => c,
        None => return precondition("degenerate moment matrix in the linear fit"),
    };
    let c = chol.solve(&rhs);
    let res = (&m * &c - &rhs).amax();
    let scale = m.amax() * c.amax() + rhs.amax();
    Ok((c, if scale > 0.0 { res / scale } else { 0.0 }))
}

fn fit_on(grid: &ParabolicGrid, u: &ScalarField, q: &CylinderQuadrature, center: &[f64]) -> Result<LinearFit> {
    let n = grid.n();
    let (s_thin, s_thick) = scales(grid, q.r);
    let y_mass: f64 = q.y.iter().map(|p| p.1).sum();
    let t_mass: f64 = q.t.iter().map(|p| p.1).sum();
    let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<f64>::zeros(n + 1);
    let mut phi = DVector::<f64>::zeros(n + 1);
    for (xf, wx, off) in &q.x {
        phi[0] = 1.0;
        for d in 0..n {
            phi[d + 1] = off[d];
        }
        let weight = wx * t_mass * (s_thin + s_thick * y_mass);
        let mut g = 0.0;
        for &(it, wt) in &q.t {
            let base = grid.index(it, *xf, 0);
            let thick: f64 = q.y.iter().map(|&(j, wy)| wy * u.values[base + j]).sum();
            g += wt * (s_thin * u.values[base] + s_thick * thick);
        }
        m += &phi * phi.transpose() * weight;
        rhs += &phi * (wx * g);
    }
    let (c, normal_residual) = solve_normal(m, rhs)?;
    let b: Vec<f64> = (0..n).map(|d| c[d + 1]).collect();
    let (thin, thick) = q.residual_integrals(grid, u, c[0], &b);
    Ok(LinearFit {
        center: center.to_vec(),
        r: q.r,
        a: c[0],
        b,
        thin,
        thick,
        excess: s_thin * thin + s_thick * thick,
        normal_residual,
    })
}

/// Minimizer of `r^{−(n+2)} ∫_{Q_r}|U(·,·,0) − ℓ|² + r^{−(n+3+a)} ∫_{Q*_r} y^a |U − ℓ|²`
/// over `ℓ(x) = a + b·(x − x₀)`, from the normal equations.
pub fn best_linear_fit(grid: &ParabolicGrid, u: &ScalarField, cyl: &Cylinder) -> Result<LinearFit> {
    let q = CylinderQuadrature::build(grid, cyl, true)?;
    fit_on(grid, u, &q, &cyl.x0)
}

/// Value of the fit functional on `cyl` for a given `ℓ`.
pub fn excess_with(grid: &ParabolicGrid, u: &ScalarField, cyl: &Cylinder, fit: &LinearFit) -> Result<f64> {
    let q = CylinderQuadrature::build(grid, cyl, true)?;
    let a = fit.eval(&cyl.x0);
    let (thin, thick) = q.residual_integrals(grid, u, a, &fit.b);
    let (s_thin, s_thick) = scales(grid, cyl.r);
    Ok(s_thin * thin + s_thick * thick)
}

/// How the field is scaled before excess sequences are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// Divide by `(γ^{−(n+2)}∫_{Q_γ}U(·,·,0)² + γ^{−(n+3+a)}∫_{Q*_γ} y^a U²)^{1/2}`,
    /// so that the rescaled field has unit combined `L²` norm on `Q*_1`.
    UnitL2,
    /// Divide by `⨍_{Q_γ} U(·,·,0)² + ⨍_{Q*_γ} U² + 1` (unweighted averages).
    Averaged,
}

/// Divisor applied to `U` under a normalization at scale `γ`.
pub fn normalization_factor(
    grid: &ParabolicGrid,
    u: &ScalarField,
    t0: f64,
    x0: &[f64],
    gamma: f64,
    kind: Normalization,
) -> Result<f64> {
    let cyl = Cylinder::new(t0, x0.to_vec(), gamma);
    let zero = vec![0.0; grid.n()];
    match kind {
        Normalization::None => Ok(1.0),
        Normalization::UnitL2 => {
            let q = CylinderQuadrature::build(grid, &cyl, true)?;
            let (thin, thick) = q.residual_integrals(grid, u, 0.0, &zero);
            let (s_thin, s_thick) = scales(grid, gamma);
            let v = (s_thin * thin + s_thick * thick).sqrt();
            if v > 0.0 {
                Ok(v)
            } else {
                Ok(1.0)
            }
        }
        Normalization::Averaged => {
            let q = CylinderQuadrature::build(grid, &cyl, false)?;
            let (thin, thick) = q.residual_integrals(grid, u, 0.0, &zero);
            Ok(thin / q.thin_measure() + thick / q.thick_measure() + 1.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessOptions {
    pub lambda: f64,
    pub kmax: usize,
    /// Radius `γ` of the `k = 0` cylinder.
    pub scale: f64,
    pub min_cells: usize,
    pub normalization: Normalization,
}

impl Default for ExcessOptions {
    fn default() -> Self {
        ExcessOptions { lambda: 0.25, kmax: 6, scale: 1.0, min_cells: 4, normalization: Normalization::UnitL2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessEntry {
    pub k: usize,
    /// Physical radius `γ λ^k`.
    pub r: f64,
    /// `λ^{−k(n+2)} ∫_{Q_{λ^k}} |U − ℓ_k|²` in rescaled variables.
    pub thin_term: f64,
    /// `λ^{−k(n+3+a)} ∫_{Q*_{λ^k}} y^a |U − ℓ_k|²` in rescaled variables.
    pub thick_term: f64,
    pub excess: f64,
    pub omega: f64,
    /// `λ^{2k} ω²(λ^k)`.
    pub bound: f64,
    pub ratio: f64,
    /// Excess on this cylinder with the previous level's fit (≥ `excess`).
    pub excess_previous_fit: Option<f64>,
    pub fit: LinearFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessSequence {
    pub lambda: f64,
    pub scale: f64,
    pub normalization: Normalization,
    pub normalization_factor: f64,
    pub kmax_requested: usize,
    pub entries: Vec<ExcessEntry>,
    /// `|a_{k+1} − a_k| / (λ^k ω(λ^k))` for consecutive entries.
    pub drift_a: Vec<f64>,
    /// `|b_{k+1} − b_k| / ω(λ^k)`.
    pub drift_b: Vec<f64>,
    pub max_ratio: f64,
    pub diagnostic: Option<String>,
}

impl ExcessSequence {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,r,thin,thick,excess,omega,bound,ratio\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                e.k, e.r, e.thin_term, e.thick_term, e.excess, e.omega, e.bound, e.ratio
            ));
        }
        s
    }
}

/// Fit excess on `Q*_{γλ^k}(t₀, x₀)` for `k = 0..=kmax`, compared with
/// `λ^{2k} ω²(λ^k)`. Radii the grid cannot resolve end the sequence and are
/// reported in `diagnostic`.
pub fn excess_sequence(
    grid: &ParabolicGrid,
    u: &ScalarField,
    t0: f64,
    x0: &[f64],
    opts: &ExcessOptions,
    omega: &ModulusOfContinuity,
) -> Result<ExcessSequence> {
    if !(opts.lambda > 0.0 && opts.lambda < 1.0) {
        return domain(format!("lambda = {} must lie in (0,1)", opts.lambda));
    }
    let norm = normalization_factor(grid, u, t0, x0, opts.scale, opts.normalization)?;
    let n2 = norm * norm;
    let mut entries: Vec<ExcessEntry> = Vec::new();
    let mut diagnostic = None;
    for k in 0..=opts.kmax {
        let lk = opts.lambda.powi(k as i32);
        let cyl = Cylinder::new(t0, x0.to_vec(), opts.scale * lk);
        if !cyl.inside(grid) {
            return domain(format!("cylinder Q*_{} leaves the grid", cyl.r));
        }
        if !cyl.resolved(grid, opts.min_cells) {
            diagnostic = Some(format!(
                "kmax clamped from {} to {}: radius {:.3e} spans fewer than {} cells in some direction",
                opts.kmax,
                k.saturating_sub(1),
                cyl.r,
                opts.min_cells
            ));
            break;
        }
        let fit = best_linear_fit(grid, u, &cyl)?;
        let (s_thin, s_thick) = scales(grid, cyl.r);
        let thin_term = s_thin * fit.thin / n2;
        let thick_term = s_thick * fit.thick / n2;
        let excess = thin_term + thick_term;
        let w = omega.eval(lk);
        let bound = lk * lk * w * w;
        let excess_previous_fit = match entries.last() {
            Some(prev) => Some(excess_with(grid, u, &cyl, &prev.fit)? / n2),
            None => None,
        };
        entries.push(ExcessEntry {
            k,
            r: cyl.r,
            thin_term,
            thick_term,
            excess,
            omega: w,
            bound,
            ratio: if bound > 0.0 { excess / bound } else { f64::INFINITY },
            excess_previous_fit,
            fit,
        });
    }
    if entries.is_empty() {
        return domain(format!("the grid does not resolve the unit cylinder of radius {}", opts.scale));
    }
    // Coefficients in the rescaled variables: a/N and γ b/N.
    let mut drift_a = Vec::new();
    let mut drift_b = Vec::new();
    for w in entries.windows(2) {
        let (p, q) = (&w[0], &w[1]);
        let lk = opts.lambda.powi(p.k as i32);
        let da = (q.fit.a - p.fit.a).abs() / norm;
        let db = p.fit.b.iter().zip(&q.fit.b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() * opts.scale / norm;
        drift_a.push(da / (lk * p.omega));
        drift_b.push(db / p.omega);
    }
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(ExcessSequence {
        lambda: opts.lambda,
        scale: opts.scale,
        normalization: opts.normalization,
        normalization_factor: norm,
        kmax_requested: opts.kmax,
        entries,
        drift_a,
        drift_b,
        max_ratio,
        diagnostic,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepTrial {
    pub lambda: f64,
    pub resolved: bool,
    /// `λ^{−(n+2)}∫_{Q_λ}|U − ℓ|² + λ^{−(n+3+a)}∫_{Q*_λ} y^a|U − ℓ|²` for the
    /// normalized field and its best fit; `None` when unresolved.
    pub value: Option<f64>,
    /// `value / λ³`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepReport {
    pub normalization_factor: f64,
    pub trials: Vec<OneStepTrial>,
    /// Largest `λ` with `value < λ³`.
    pub lambda_found: Option<f64>,
    pub ratio: Option<f64>,
    pub fit: Option<LinearFit>,
}

/// Scans `λ ∈ {2⁻², …, 2⁻⁶}` for the one-step improvement
/// `value(λ) < λ³` on the field normalized to unit combined `L²` on `Q*_1`.
pub fn one_step_improvement(
    grid: &ParabolicGrid,
    u: &ScalarField,
    t0: f64,
    x0: &[f64],
    min_cells: usize,
) -> Result<OneStepReport> {
    let norm = normalization_factor(grid, u, t0, x0, 1.0, Normalization::UnitL2)?;
    let mut trials = Vec::new();
    let mut found: Option<(f64, f64, LinearFit)> = None;
    for p in 2..=6 {
        let lambda = 0.5f64.powi(p);
        let cyl = Cylinder::new(t0, x0.to_vec(), lambda);
        if !cyl.inside(grid) {
            return domain(format!("cylinder of radius {lambda} leaves the grid"));
        }
        if !cyl.resolved(grid, min_cells) {
            trials.push(OneStepTrial { lambda, resolved: false, value: None, ratio: None });
            continue;
        }
        let fit = best_linear_fit(grid, u, &cyl)?;
        let value = fit.excess / (norm * norm);
        let ratio = value / lambda.powi(3);
        trials.push(OneStepTrial { lambda, resolved: true, value: Some(value), ratio: Some(ratio) });
        if ratio < 1.0 && found.is_none() {
            found = Some((lambda, ratio, fit));
        }
    }
    let (lambda_found, ratio, fit) = match found {
        Some((l, r, f)) => (Some(l), Some(r), Some(f)),
        None => (None, None, None),
    };
    Ok(OneStepReport { normalization_factor: norm, trials, lambda_found, ratio, fit })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampanatoRow {
    pub r: f64,
    /// `r^{−(n+3+a)} ∫_{Q*_r} y^a |U − ℓ_∞|²`.
    pub thick_excess: f64,
    /// `⨍_{Q_r} |U(·,·,0) − ℓ_∞|²`.
    pub thin_mean: f64,
    pub k: f64,
    /// `thick_excess / (r² K²(r))`.
    pub ratio: f64,
    /// Same for the thin average.
    pub thin_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampanatoProfile {
    pub t0: f64,
    pub x0: Vec<f64>,
    /// Fit on the finest radius, standing in for the limit fit.
    pub limit_fit: LinearFit,
    pub rows: Vec<CampanatoRow>,
    pub max_ratio: f64,
    /// `Σ |b_{i+1} − b_i|` over consecutive radii, the visible part of the
    /// gap between the finest fit and the true limit.
    pub gradient_drift_total: f64,
}

impl CampanatoProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,thick_excess,thin_mean,K,ratio,thin_ratio\n");
        for row in &self.rows {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e}\n",
                row.r, row.thick_excess, row.thin_mean, row.k, row.ratio, row.thin_ratio
            ));
        }
        s
    }

    /// `(|b_∞(p) − b_∞(q)|, dist, gap/K(dist))` between two profiles.
    pub fn gradient_gap(&self, other: &CampanatoProfile, k: &ModulusOfContinuity) -> (f64, f64, f64) {
        let gap = self.limit_fit.b.iter().zip(&other.limit_fit.b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let mut x1 = self.x0.clone();
        x1.push(0.0);
        let mut x2 = other.x0.clone();
        x2.push(0.0);
        let dist = parabolic_distance(self.t0, &x1, other.t0, &x2);
        (gap, dist, gap / k.eval(dist))
    }
}

/// `r ↦ r^{−(n+3+a)}∫_{Q*_r} y^a |U − ℓ_∞|² / (r² K²(r))` with `ℓ_∞` the fit
/// on the smallest radius.
pub fn campanato_excess_profile(
    grid: &ParabolicGrid,
    u: &ScalarField,
    t0: f64,
    x0: &[f64],
    radii: &[f64],
    k: &ModulusOfContinuity,
) -> Result<CampanatoProfile> {
    if radii.is_empty() {
        return domain("campanato profile needs at least one radius");
    }
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| b.total_cmp(a));
    let fits = radii
        .iter()
        .map(|&r| best_linear_fit(grid, u, &Cylinder::new(t0, x0.to_vec(), r)))
        .collect::<Result<Vec<_>>>()?;
    let limit = fits.last().unwrap().clone();
    let gradient_drift_total =
        fits.windows(2).map(|w| w[0].b.iter().zip(&w[1].b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()).sum();
    let a = grid.params().a();
    let n = grid.n() as f64;
    let mut rows = Vec::new();
    for &r in &radii {
        let cyl = Cylinder::new(t0, x0.to_vec(), r);
        let q = CylinderQuadrature::build(grid, &cyl, true)?;
        let (thin, thick) = q.residual_integrals(grid, u, limit.eval(x0), &limit.b);
        let thick_excess = thick * r.powf(-(n + 3.0 + a));
        let thin_mean = thin / q.thin_measure();
        let kv = k.eval(r);
        let den = r * r * kv * kv;
        rows.push(CampanatoRow {
            r,
            thick_excess,
            thin_mean,
            k: kv,
            ratio: thick_excess / den,
            thin_ratio: thin_mean / den,
        });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(CampanatoProfile { t0, x0: x0.to_vec(), limit_fit: limit, rows, max_ratio, gradient_drift_total })
}

/// Second-order difference weights at interior node `i` of a nonuniform axis.
fn centered(v: &[f64], i: usize, f: impl Fn(usize) -> f64) -> f64 {
    let (hm, hp) = (v[i] - v[i - 1], v[i + 1] - v[i]);
    (hm * hm * (f(i + 1) - f(i)) + hp * hp * (f(i) - f(i - 1))) / (hm * hp * (hm + hp))
}

/// `(∇_x U, U_y)` at a node; `U_y` is `None` on the face `y = 0`.
pub fn node_gradient(
    grid: &ParabolicGrid,
    u: &ScalarField,
    it: usize,
    ix: &[usize],
    j: usize,
) -> Result<(Vec<f64>, Option<f64>)> {
    let ny = grid.ny_nodes();
    if grid.on_lateral_boundary(ix) || j + 1 >= ny {
        return domain("gradients need a node away from the lateral boundary and the top face");
    }
    let xf = grid.x_flat(ix);
    let mut gx = Vec::with_capacity(grid.n());
    for d in 0..grid.n() {
        let xs = &grid.x()[d];
        let val = |i: usize| {
            let mut m = ix.to_vec();
            m[d] = i;
            u.values[grid.index(it, grid.x_flat(&m), j)]
        };
        gx.push(centered(xs, ix[d], val));
    }
    let gy = (j > 0).then(|| centered(grid.y(), j, |k| u.values[grid.index(it, xf, k)]));
    Ok((gx, gy))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientProbeOptions {
    pub pairs: usize,
    pub time_pairs: usize,
    pub seed: u64,
    /// Half-size of the probed cylinder `Q*_R` around `(t₀, x₀, 0)`.
    pub radius: f64,
    pub t0: f64,
    pub x0: Vec<f64>,
    /// Exponent `p` of the smaller modulus `r^p K(r)` used for falsification.
    pub falsify_exponent: f64,
    /// Attempts per accepted pair before a stratum is declared infeasible.
    pub attempts: usize,
}

impl GradientProbeOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        GradientProbeOptions {
            pairs: 10_000,
            time_pairs: 10_000,
            seed,
            radius: 0.5,
            t0: 0.0,
            x0: vec![0.0; n],
            falsify_exponent: 0.9,
            attempts: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub dist: f64,
    /// 1 for `dist ≤ min(y₁, y₂)/4`, 2 otherwise, 0 for time increments.
    pub case: u8,
    /// True when one point lies on the face and only `∇_x` is compared.
    pub tangential_only: bool,
    pub difference: f64,
    pub k: f64,
    pub ratio: f64,
    pub ratio_falsified: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub decade: (f64, f64),
    pub pairs: usize,
    pub c_emp: f64,
    pub c_emp_falsified: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub pairs: usize,
    pub c_emp: f64,
    pub c_emp_falsified: f64,
    pub strata: Vec<StratumSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusProbeReport {
    pub seed: u64,
    pub requested_pairs: usize,
    pub case_i: CaseSummary,
    pub case_ii: CaseSummary,
    /// `|U(t₁,X) − U(t₂,X)| / (K(√|Δt|) √|Δt|)`.
    pub time: CaseSummary,
    /// `max y₂/dist` over case (ii) pairs and whether it stays `≤ 6`.
    pub case_ii_worst_height: f64,
    pub case_ii_geometry_holds: bool,
    pub samples: Vec<PairSample>,
}

impl ModulusProbeReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("case,dist,difference,K,ratio,ratio_falsified,tangential_only,p1,p2\n");
        for p in &self.samples {
            let fmt = |v: &[f64]| v.iter().map(|c| format!("{c:e}")).collect::<Vec<_>>().join(" ");
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{},{},{}\n",
                p.case,
                p.dist,
                p.difference,
                p.k,
                p.ratio,
                p.ratio_falsified,
                p.tangential_only as u8,
                fmt(&p.p1),
                fmt(&p.p2)
            ));
        }
        s
    }
}

fn nearest(v: &[f64], x: f64) -> usize {
    let i = v.partition_point(|&p| p < x);
    if i == 0 {
        0
    } else if i == v.len() || x - v[i - 1] <= v[i] - x {
        i - 1
    } else {
        i
    }
}

struct Region<'a> {
    grid: &'a ParabolicGrid,
    t: Vec<usize>,
    x: Vec<Vec<usize>>,
    y: Vec<usize>,
    opts: &'a GradientProbeOptions,
}

impl<'a> Region<'a> {
    fn new(grid: &'a ParabolicGrid, opts: &'a GradientProbeOptions) -> Result<Self> {
        let r = opts.radius;
        let t: Vec<usize> = (0..grid.nt_nodes()).filter(|&i| (grid.t()[i] - opts.t0).abs() < r * r).collect();
        let x: Vec<Vec<usize>> = grid
            .x()
            .iter()
            .zip(&opts.x0)
            .map(|(xs, &c)| (1..xs.len() - 1).filter(|&i| (xs[i] - c).abs() < r).collect())
            .collect();
        let y: Vec<usize> = (0..grid.ny_nodes() - 1).filter(|&j| grid.y()[j] < r).collect();
        if t.len() < 2 || x.iter().any(|v| v.len() < 2) || y.len() < 2 {
            return domain("probe region holds too few nodes");
        }
        let region = Region { grid, t, x, y, opts };
        if !Cylinder::new(opts.t0, opts.x0.clone(), r).inside(grid) {
            return domain("probe region leaves the grid");
        }
        Ok(region)
    }

    fn contains(&self, it: usize, ix: &[usize], j: usize) -> bool {
        let g = self.grid;
        let r = self.opts.radius;
        let x = g.x_point(ix);
        let rx = x.iter().zip(&self.opts.x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        (g.t()[it] - self.opts.t0).abs() < r * r
            && rx < r
            && g.y()[j] < r
            && !g.on_lateral_boundary(ix)
            && j + 1 < g.ny_nodes()
    }

    /// A point drawn uniformly from the physical region `|t − t₀| < R²`,
    /// `|x − x₀| < R`, `0 ≤ y < R`, snapped to the nearest node. Drawing in
    /// physical coordinates makes a given seed probe nearly the same points
    /// on every grid covering the region.
    fn random_node(&self, rng: &mut ChaCha8Rng) -> (usize, Vec<usize>, usize) {
        let g = self.grid;
        let r = self.opts.radius;
        loop {
            let t = self.opts.t0 + r * r * (2.0 * rng.gen::<f64>() - 1.0);
            let x: Vec<f64> = self.opts.x0.iter().map(|c| c + r * (2.0 * rng.gen::<f64>() - 1.0)).collect();
            let y = r * rng.gen::<f64>();
            let it = nearest(g.t(), t);
            let ix: Vec<usize> = x.iter().enumerate().map(|(d, v)| nearest(&g.x()[d], *v)).collect();
            let j = nearest(g.y(), y);
            if self.contains(it, &ix, j) {
                return (it, ix, j);
            }
        }
    }

    fn point(&self, it: usize, ix: &[usize], j: usize) -> (f64, Vec<f64>) {
        let mut x = self.grid.x_point(ix);
        x.push(self.grid.y()[j]);
        (self.grid.t()[it], x)
    }

    /// Smallest positive parabolic distance between nodes of the region.
    fn min_distance(&self) -> f64 {
        let g = self.grid;
        let gap = |v: &[f64], idx: &[usize]| idx.windows(2).map(|w| v[w[1]] - v[w[0]]).fold(f64::INFINITY, f64::min);
        let mut m = gap(g.t(), &self.t).sqrt();
        for (d, idx) in self.x.iter().enumerate() {
            m = m.min(gap(&g.x()[d], idx));
        }
        m.min(gap(g.y(), &self.y))
    }
}

fn decades(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let (a, b) = (lo.log10().floor() as i32, hi.log10().ceil() as i32);
    (a..b).map(|e| (10f64.powi(e), 10f64.powi(e + 1))).collect()
}

/// Independent stream for the stratum starting at `lo` and the given case
/// (0 for time increments). Keying streams by decade rather than by position
/// keeps each stratum's draws the same when refinement adds finer decades.
fn stratum_rng(seed: u64, lo: f64, case: u8) -> ChaCha8Rng {
    let decade = (lo.log10().round() as i64 + 512) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(decade * 4 + case as u64);
    rng
}

fn summarize(samples: &[&PairSample], strata: &[(f64, f64)]) -> CaseSummary {
    let fold = |it: &mut dyn Iterator<Item = &&PairSample>| {
        it.fold((0usize, 0.0f64, 0.0f64), |(c, m, f), p| (c + 1, m.max(p.ratio), f.max(p.ratio_falsified)))
    };
    let (pairs, c_emp, c_emp_falsified) = fold(&mut samples.iter());
    let strata = strata
        .iter()
        .map(|&(lo, hi)| {
            let (pairs, c_emp, c_emp_falsified) = fold(&mut samples.iter().filter(|p| p.dist >= lo && p.dist < hi));
            StratumSummary { decade: (lo, hi), pairs, c_emp, c_emp_falsified }
        })
        .collect();
    CaseSummary { pairs, c_emp, c_emp_falsified, strata }
}

/// Samples node pairs in `Q*_R(t₀, x₀)` stratified by distance decade and
/// by proof case, and records `|∇U(p₁) − ∇U(p₂)| / K(dist)`; time
/// increments at fixed `X` are sampled separately. Points are drawn in
/// physical coordinates from one random stream per stratum, so the same
/// seed probes nearly the same pairs on a grid and on its refinement.
pub fn gradient_modulus_probe(
    grid: &ParabolicGrid,
    u: &ScalarField,
    k: &ModulusOfContinuity,
    opts: &GradientProbeOptions,
) -> Result<ModulusProbeReport> {
    if opts.x0.len() != grid.n() {
        return domain("probe center has the wrong dimension");
    }
    let region = Region::new(grid, opts)?;
    let r = opts.radius;
    let strata = decades(region.min_distance(), r);
    let mut streams: Vec<[ChaCha8Rng; 3]> =
        strata.iter().map(|&(lo, _)| [0, 1, 2].map(|case| stratum_rng(opts.seed, lo, case))).collect();
    let p = opts.falsify_exponent;
    let mut samples = Vec::new();

    // Gradient pairs: round-robin over (decade, case) strata.
    let mut live: Vec<(usize, u8)> = (0..strata.len()).flat_map(|d| [(d, 1u8), (d, 2u8)]).collect();
    let mut turn = 0usize;
    let mut accepted = 0usize;
    while accepted < opts.pairs && !live.is_empty() {
        let slot = turn % live.len();
        let (d, case) = live[slot];
        let (lo, hi) = strata[d];
        let rng = &mut streams[d][case as usize];
        let mut hit = None;
        for _ in 0..opts.attempts {
            let (it1, ix1, j1) = region.random_node(rng);
            let target = (lo.ln() + rng.gen::<f64>() * (hi / lo).ln()).exp();
            let (t1, x1) = region.point(it1, &ix1, j1);
            let time_led = rng.gen_bool(0.5);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let dt = sign * target * target * if time_led { 1.0 } else { rng.gen::<f64>() };
            let mut dir: Vec<f64> = (0..=grid.n()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let reach = if time_led { target * rng.gen::<f64>() } else { target };
            dir.iter_mut().for_each(|v| *v *= reach / len);
            let it2 = nearest(grid.t(), t1 + dt);
            let ix2: Vec<usize> = (0..grid.n()).map(|e| nearest(&grid.x()[e], x1[e] + dir[e])).collect();
            let j2 = nearest(grid.y(), (x1[grid.n()] + dir[grid.n()]).abs());
            if !region.contains(it2, &ix2, j2) || (it2 == it1 && ix2 == ix1 && j2 == j1) {
                continue;
            }
            let (t2, x2) = region.point(it2, &ix2, j2);
            let dist = parabolic_distance(t1, &x1, t2, &x2);
            let y_lo = x1[grid.n()].min(x2[grid.n()]);
            let got_case = if dist <= y_lo / 4.0 { 1 } else { 2 };
            if dist >= lo && dist < hi && got_case == case {
                hit = Some(((it1, ix1, j1, t1, x1), (it2, ix2, j2, t2, x2), dist));
                break;
            }
        }
        match hit {
            None => {
                live.remove(slot);
                continue;
            }
            Some(((it1, ix1, j1, t1, x1), (it2, ix2, j2, t2, x2), dist)) => {
                let (g1, h1) = node_gradient(grid, u, it1, &ix1, j1)?;
                let (g2, h2) = node_gradient(grid, u, it2, &ix2, j2)?;
                let mut sq: f64 = g1.iter().zip(&g2).map(|(a, b)| (a - b) * (a - b)).sum();
                let tangential_only = h1.is_none() || h2.is_none();
                if let (Some(a), Some(b)) = (h1, h2) {
                    sq += (a - b) * (a - b);
                }
                let difference = sq.sqrt();
                let kv = k.eval(dist);
                samples.push(PairSample {
                    p1: std::iter::once(t1).chain(x1).collect(),
                    p2: std::iter::once(t2).chain(x2).collect(),
                    dist,
                    case,
                    tangential_only,
                    difference,
                    k: kv,
                    ratio: difference / kv,
                    ratio_falsified: difference / (dist.powf(p) * kv),
                });
                accepted += 1;
                turn += 1;
            }
        }
    }

    // Time increments at a fixed node, stratified by decade of √|Δt|.
    let mut live: Vec<usize> = (0..strata.len()).collect();
    let mut turn = 0usize;
    let mut accepted_t = 0usize;
    while accepted_t < opts.time_pairs && !live.is_empty() {
        let slot = turn % live.len();
        let (lo, hi) = strata[live[slot]];
        let rng = &mut streams[live[slot]][0];
        let mut hit = None;
        for _ in 0..opts.attempts {
            let (it1, ix, j) = region.random_node(rng);
            let target = (lo.ln() + rng.gen::<f64>() * (hi / lo).ln()).exp();
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let it2 = nearest(grid.t(), grid.t()[it1] + sign * target * target);
            if it2 == it1 || !region.contains(it2, &ix, j) {
                continue;
            }
            let root = (grid.t()[it2] - grid.t()[it1]).abs().sqrt();
            if root >= lo && root < hi {
                hit = Some((it1, it2, ix, j, root));
                break;
            }
        }
        match hit {
            None => {
                live.remove(slot);
            }
            Some((it1, it2, ix, j, root)) => {
                let xf = grid.x_flat(&ix);
                let difference = (u.values[grid.index(it1, xf, j)] - u.values[grid.index(it2, xf, j)]).abs();
                let kv = k.eval(root);
                let (t1, x) = region.point(it1, &ix, j);
                let t2 = grid.t()[it2];
                samples.push(PairSample {
                    p1: std::iter::once(t1).chain(x.iter().copied()).collect(),
                    p2: std::iter::once(t2).chain(x).collect(),
                    dist: root,
                    case: 0,
                    tangential_only: false,
                    difference,
                    k: kv,
                    ratio: difference / (kv * root),
                    ratio_falsified: difference / (root.powf(p) * kv * root),
                });
                accepted_t += 1;
                turn += 1;
            }
        }
    }

    let by_case = |c: u8| samples.iter().filter(|s| s.case == c).collect::<Vec<_>>();
    let n = grid.n();
    let case_ii_worst_height = by_case(2).iter().map(|s| s.p1[n + 1].max(s.p2[n + 1]) / s.dist).fold(0.0, f64::max);
    Ok(ModulusProbeReport {
        seed: opts.seed,
        requested_pairs: opts.pairs,
        case_i: summarize(&by_case(1), &strata),
        case_ii: summarize(&by_case(2), &strata),
        time: summarize(&by_case(0), &strata),
        case_ii_geometry_holds: case_ii_worst_height <= 6.0,
        case_ii_worst_height,
        samples,
    })
}

/// `ψ` of the interior estimate for the rescaled problem around height `y₁`:
/// `Ψ_B(r) = ω_A(y₁ r)` and `Ψ_g(r) = |∇ℓ| ω_A(y₁ r)` (the forcing
/// `(I − B)∇ℓ`), each run through the `ω₁` construction and combined by the
/// dyadic convolution.
pub fn interior_modulus(
    omega_a: &ModulusOfContinuity,
    y1: f64,
    gradient: f64,
    cfg: &ModulusPipelineConfig,
) -> Result<OmegaPipeline> {
    let psi_b = ModulusOfContinuity::new(ModulusRule::ArgScaled { factor: y1, inner: Box::new(omega_a.rule.clone()) });
    let psi_g = ModulusOfContinuity::new(ModulusRule::Scaled { factor: gradient, inner: Box::new(psi_b.rule.clone()) });
    let psi1 = build_omega1(&psi_b, cfg)?;
    let psi2 = build_omega1(&psi_g, cfg)?;
    build_omega3_and_omega(&psi1.omega1, &psi2.omega1, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorEntry {
    pub k: usize,
    pub r: f64,
    /// `λ^{−k(n+3)} ∫ |u − ℓ_k|²` for the normalized rescaled field.
    pub excess: f64,
    pub psi: f64,
    /// `λ^{2k} ψ²(λ^k)`.
    pub bound: f64,
    pub ratio: f64,
    /// `ℓ_k = a + b·(X − X₀)` with `b ∈ R^{n+1}`.
    pub a: f64,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorReport {
    pub t0: f64,
    pub center: Vec<f64>,
    pub side: f64,
    pub lambda: f64,
    /// `(side^{−(n+3)} ∫_{C_side} |U − ℓ₀|²)^{1/2}`, the divisor of `U − ℓ₀`.
    pub normalization_factor: f64,
    pub entries: Vec<InteriorEntry>,
    pub drift_a: Vec<f64>,
    pub drift_b: Vec<f64>,
    pub max_ratio: f64,
    /// Least-squares slope of `ln(√E_k / λ^k)` against `ln λ^k` over `k ≥ 1`.
    pub alpha_empirical: Option<f64>,
    pub diagnostic: Option<String>,
}

impl InteriorReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,r,excess,psi,bound,ratio\n");
        for e in &self.entries {
            s.push_str(&format!("{},{:e},{:e},{:e},{:e},{:e}\n", e.k, e.r, e.excess, e.psi, e.bound, e.ratio));
        }
        s
    }
}

struct Cube {
    t: Vec<(usize, f64)>,
    /// `(flat x index, overlap, x − x₀)`.
    x: Vec<(usize, f64, Vec<f64>)>,
    /// `(j, overlap, y − y₀)`.
    y: Vec<(usize, f64, f64)>,
}

fn cube_quadrature(grid: &ParabolicGrid, t0: f64, center: &[f64], r: f64) -> Cube {
    let n = grid.n();
    let te = dual_edges(grid.t());
    let t = (0..grid.nt_nodes())
        .filter_map(|it| {
            let w = interval_overlap(te[it], te[it + 1], t0 - r * r, t0 + r * r);
            (w > 0.0).then_some((it, w))
        })
        .collect();
    let per_axis: Vec<Vec<(usize, f64)>> = grid
        .x()
        .iter()
        .zip(center)
        .map(|(xs, &c)| {
            let e = dual_edges(xs);
            (0..xs.len())
                .filter_map(|i| {
                    let w = interval_overlap(e[i], e[i + 1], c - r, c + r);
                    (w > 0.0).then_some((i, w))
                })
                .collect()
        })
        .collect();
    let mut x = Vec::new();
    let mut push = |ix: Vec<usize>, w: f64| {
        let off = grid.x_point(&ix).iter().zip(center).map(|(p, c)| p - c).collect();
        x.push((grid.x_flat(&ix), w, off));
    };
    if n == 1 {
        for &(i, w) in &per_axis[0] {
            push(vec![i], w);
        }
    } else {
        for &(i, w) in &per_axis[0] {
            for &(k, v) in &per_axis[1] {
                push(vec![i, k], w * v);
            }
        }
    }
    let ye = y_edges(grid);
    let y0 = center[n];
    let y = (0..grid.ny_nodes())
        .filter_map(|j| {
            let w = interval_overlap(ye[j], ye[j + 1], y0 - r, y0 + r);
            (w > 0.0).then_some((j, w, grid.y()[j] - y0))
        })
        .collect();
    Cube { t, x, y }
}

/// Best fit `a + b·(X − X₀)` on a cube, `∫|U − ℓ|²` and `∫U²`.
fn cube_fit(grid: &ParabolicGrid, u: &ScalarField, cube: &Cube) -> Result<(f64, Vec<f64>, f64, f64)> {
    let n = grid.n();
    let m = n + 2;
    let mut mat = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut phi = DVector::<f64>::zeros(m);
    let t_mass: f64 = cube.t.iter().map(|p| p.1).sum();
    for (xf, wx, off) in &cube.x {
        for &(j, wy, dy) in &cube.y {
            phi[0] = 1.0;
            for d in 0..n {
                phi[d + 1] = off[d];
            }
            phi[n + 1] = dy;
            let mut g = 0.0;
            for &(it, wt) in &cube.t {
                g += wt * u.values[grid.index(it, *xf, j)];
            }
            mat += &phi * phi.transpose() * (wx * wy * t_mass);
            rhs += &phi * (wx * wy * g);
        }
    }
    let (c, _) = solve_normal(mat, rhs)?;
    let b: Vec<f64> = (1..m).map(|d| c[d]).collect();
    let (mut sum, mut total) = (0.0, 0.0);
    for &(it, wt) in &cube.t {
        for (xf, wx, off) in &cube.x {
            let lx = c[0] + (0..n).map(|d| b[d] * off[d]).sum::<f64>();
            for &(j, wy, dy) in &cube.y {
                let v = u.values[grid.index(it, *xf, j)];
                let d = v - lx - b[n] * dy;
                sum += wt * wx * wy * d * d;
                total += wt * wx * wy * v * v;
            }
        }
    }
    Ok((c[0], b, sum, total))
}

/// Excess decay on cubes `(t₀ − r², t₀ + r²) × Π[X₀ − r, X₀ + r]`,
/// `r = side·λ^k`, for a center at height `y₀ ≥ 2·side`, with fits linear
/// in all of `X = (x, y)` and plain (unweighted) integrals.
#[allow(clippy::too_many_arguments)]
pub fn interior_probe(
    grid: &ParabolicGrid,
    u: &ScalarField,
    t0: f64,
    center: &[f64],
    side: f64,
    lambda: f64,
    kmax: usize,
    min_cells: usize,
    psi: &ModulusOfContinuity,
) -> Result<InteriorReport> {
    let n = grid.n();
    if center.len() != n + 1 {
        return domain("interior center needs n + 1 coordinates");
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return domain(format!("lambda = {lambda} must lie in (0,1)"));
    }
    if center[n] - side < side {
        return domain(format!("cube of side {side} at height {} comes closer than its side to y = 0", center[n]));
    }
    let inside = |r: f64| {
        let (t, y) = (grid.t(), grid.y());
        t0 - r * r >= t[0]
            && t0 + r * r <= t[t.len() - 1]
            && center[n] + r <= y[y.len() - 1]
            && grid.x().iter().zip(center).all(|(xs, &c)| c - r >= xs[0] && c + r <= xs[xs.len() - 1])
    };
    let resolved = |r: f64| {
        let count = |v: &[f64], lo: f64, hi: f64| v.iter().filter(|&&p| p >= lo && p <= hi).count();
        let need = min_cells + 1;
        count(grid.t(), t0 - r * r, t0 + r * r) >= need
            && grid.x().iter().zip(center).all(|(xs, &c)| count(xs, c - r, c + r) >= need)
            && count(grid.y(), center[n] - r, center[n] + r) >= need
    };
    if !inside(side) {
        return domain("interior cube leaves the grid");
    }
    let dim = (n + 3) as i32;
    let (_, _, e0, total) = cube_fit(grid, u, &cube_quadrature(grid, t0, center, side))?;
    // A residual at round-off level means U is linear; dividing by it would
    // only amplify the round-off.
    let norm = if e0 > 1e-24 * total { (e0 / side.powi(dim)).sqrt() } else { 1.0 };
    let mut entries: Vec<InteriorEntry> = Vec::new();
    let mut diagnostic = None;
    for k in 0..=kmax {
        let lk = lambda.powi(k as i32);
        let r = side * lk;
        if !resolved(r) {
            diagnostic = Some(format!(
                "kmax clamped from {kmax} to {}: cube of side {r:.3e} is under-resolved",
                k.saturating_sub(1)
            ));
            break;
        }
        let (a, b, sum, _) = cube_fit(grid, u, &cube_quadrature(grid, t0, center, r))?;
        let excess = sum / r.powi(dim) / (norm * norm);
        let w = psi.eval(lk);
        let bound = lk * lk * w * w;
        entries.push(InteriorEntry { k, r, excess, psi: w, bound, ratio: excess / bound, a, b });
    }
    if entries.is_empty() {
        return domain("the grid does not resolve the interior cube");
    }
    let mut drift_a = Vec::new();
    let mut drift_b = Vec::new();
    for w in entries.windows(2) {
        let lk = lambda.powi(w[0].k as i32);
        drift_a.push((w[1].a - w[0].a).abs() / norm / (lk * w[0].psi));
        let db = w[0].b.iter().zip(&w[1].b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt() * side / norm;
        drift_b.push(db / w[0].psi);
    }
    let pts: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.k >= 1 && e.excess > 0.0)
        .map(|e| {
            let lk = lambda.powi(e.k as i32);
            (lk.ln(), (e.excess.sqrt() / lk).ln())
        })
        .collect();
    let alpha_empirical = (pts.len() >= 2).then(|| {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        let (mx, my) = (sx / m, sy / m);
        let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        num / den
    });
    let max_ratio = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    Ok(InteriorReport {
        t0,
        center: center.to_vec(),
        side,
        lambda,
        normalization_factor: norm,
        entries,
        drift_a,
        drift_b,
        max_ratio,
        alpha_empirical,
        diagnostic,
    })
}

/// The grid seen in the variables `((t − t₀)/γ², (x − x₀)/γ, y/γ)`.
pub fn rescaled_grid(grid: &ParabolicGrid, t0: f64, x0: &[f64], gamma: f64) -> Result<ParabolicGrid> {
    let t = grid.t().iter().map(|t| (t - t0) / (gamma * gamma)).collect();
    let x = grid.x().iter().zip(x0).map(|(xs, c)| xs.iter().map(|x| (x - c) / gamma).collect()).collect();
    let y = grid.y().iter().map(|y| y / gamma).collect();
    ParabolicGrid::from_nodes(*grid.params(), t, x, y, grid.grading())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decades_cover_the_range() {
        assert_eq!(decades(3e-3, 0.5), vec![(1e-3, 1e-2), (1e-2, 1e-1), (1e-1, 1.0)]);
    }

    #[test]
    fn nearest_picks_the_closer_node() {
        let v = [0.0, 1.0, 3.0];
        assert_eq!(nearest(&v, -1.0), 0);
        assert_eq!(nearest(&v, 0.4), 0);
        assert_eq!(nearest(&v, 2.2), 2);
        assert_eq!(nearest(&v, 9.0), 2);
    }

    #[test]
    fn centered_difference_is_exact_for_quadratics() {
        let v = [0.0, 0.3, 1.0];
        let f = |i: usize| 2.0 * v[i] * v[i] - v[i];
        assert!((centered(&v, 1, f) - (4.0 * 0.3 - 1.0)).abs() < 1e-14);
    }
}
