//! Tensor grids on the thick cylinder `(t₀, t₁) × box × (0, Y)` with a graded
//! `y` mesh, their finite-volume weights, and nodal fields.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::check_dimension;
use crate::kernels::FracParams;

/// Node placement along one axis of `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// `sinh` clustering toward the midpoint; the spacing at the ends is
    /// `cosh(stretch)` times the spacing at the center.
    Clustered {
        stretch: f64,
    },
    /// Each half is split into `levels` blocks of `cells / (2 levels)` equal
    /// cells, the width doubling from block to block away from the midpoint.
    /// Along `t` this keeps the number of distinct time steps at `levels`.
    Layered {
        levels: usize,
    },
}

impl Spacing {
    fn nodes(&self, lo: f64, hi: f64, cells: usize) -> Result<Vec<f64>> {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        if let Spacing::Layered { levels } = *self {
            if levels == 0 || !cells.is_multiple_of(2 * levels) {
                return domain(format!("layered spacing needs the cell count {cells} to be a multiple of 2·{levels}"));
            }
            let per = cells / (2 * levels);
            let h = half / (per as f64 * ((1u64 << levels) - 1) as f64);
            let mut offsets = vec![0.0];
            for level in 0..levels {
                for _ in 0..per {
                    offsets.push(offsets.last().unwrap() + h * (1u64 << level) as f64);
                }
            }
            let mut v: Vec<f64> = offsets.iter().rev().map(|o| mid - o).collect();
            v.extend(offsets[1..].iter().map(|o| mid + o));
            v[0] = lo;
            v[cells] = hi;
            return Ok(v);
        }
        Ok((0..=cells)
            .map(|i| {
                let xi = -1.0 + 2.0 * i as f64 / cells as f64;
                let v = match *self {
                    Spacing::Clustered { stretch } => (stretch * xi).sinh() / stretch.sinh(),
                    _ => xi,
                };
                if i == 0 {
                    lo
                } else if i == cells {
                    hi
                } else {
                    mid + half * v
                }
            })
            .collect())
    }
}

/// Declarative grid description: `(−ρ², ρ²) × (−ρ, ρ)^n × (0, y_max)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rho: f64,
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "uniform")]
    pub time_spacing: Spacing,
    #[serde(default = "uniform")]
    pub x_spacing: Spacing,
    /// `y_j = y_max (j/ny)^q`; defaults to `q = min(1/(1−|a|), 2)`. Below the
    /// cap this makes the flux variable `y^{1+a}` equispaced when `a < 0` and
    /// the trace profile `y^{1−a}` equispaced when `a > 0`; the cap keeps
    /// `U(y₁) − U(0) ~ y₁^{1−a}` well above round-off as `|a| → 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grading: Option<f64>,
    /// Defaults to `rho`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_max: Option<f64>,
}

fn uniform() -> Spacing {
    Spacing::Uniform
}

impl GridSpec {
    pub fn new(rho: f64, nt: usize, nx: usize, ny: usize) -> Self {
        GridSpec {
            rho,
            nt,
            nx,
            ny,
            time_spacing: Spacing::Uniform,
            x_spacing: Spacing::Uniform,
            grading: None,
            y_max: None,
        }
    }

    /// Same layout with every cell count doubled.
    pub fn refined(&self) -> Self {
        GridSpec { nt: 2 * self.nt, nx: 2 * self.nx, ny: 2 * self.ny, ..self.clone() }
    }

    pub fn build(&self, params: FracParams) -> Result<ParabolicGrid> {
        if !(self.rho > 0.0) || self.nt == 0 || self.nx < 2 || self.ny < 2 {
            return domain("grid needs ρ > 0, nt ≥ 1, nx ≥ 2 and ny ≥ 2");
        }
        let n = params.n();
        let q = self.grading.unwrap_or((1.0 / (1.0 - params.a().abs())).min(2.0));
        if !(q >= 1.0) {
            return domain(format!("grading exponent {q} must be at least 1"));
        }
        let y_max = self.y_max.unwrap_or(self.rho);
        let r2 = self.rho * self.rho;
        let t = self.time_spacing.nodes(-r2, r2, self.nt)?;
        let x = vec![self.x_spacing.nodes(-self.rho, self.rho, self.nx)?; n];
        let y: Vec<f64> = (0..=self.ny).map(|j| y_max * (j as f64 / self.ny as f64).powf(q)).collect();
        ParabolicGrid::from_nodes(params, t, x, y, q)
    }
}

/// Node coordinates plus the finite-volume quantities derived from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicGrid {
    params: FracParams,
    t: Vec<f64>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    grading: f64,
    #[serde(skip)]
    derived: Derived,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Derived {
    t_weights: Vec<f64>,
    x_widths: Vec<Vec<f64>>,
    y_weights: Vec<f64>,
    y_transmissibility: Vec<f64>,
    y_flux_positions: Vec<f64>,
}

fn dual_widths(nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len();
    (0..m)
        .map(|i| {
            let lo = if i == 0 { nodes[0] } else { 0.5 * (nodes[i - 1] + nodes[i]) };
            let hi = if i + 1 == m { nodes[m - 1] } else { 0.5 * (nodes[i] + nodes[i + 1]) };
            hi - lo
        })
        .collect()
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.len() >= 2 && v.windows(2).all(|w| w[0] < w[1])
}

impl ParabolicGrid {
    /// Builds a grid from explicit node lists; `y[0]` must be 0.
    pub fn from_nodes(params: FracParams, t: Vec<f64>, x: Vec<Vec<f64>>, y: Vec<f64>, grading: f64) -> Result<Self> {
        let n = params.n();
        check_dimension(n)?;
        if x.len() != n {
            return domain("one node list per spatial dimension is required");
        }
        if !strictly_increasing(&t)
            || !strictly_increasing(&y)
            || x.iter().any(|xs| xs.len() < 3 || !strictly_increasing(xs))
        {
            return domain("node lists must be strictly increasing (x needs at least 3 nodes)");
        }
        if y[0] != 0.0 {
            return domain("the y nodes must start at the boundary face y = 0");
        }
        let a = params.a();
        let pw = |v: f64, e: f64| if v == 0.0 { 0.0 } else { v.powf(e) };
        let m = y.len();
        let mut y_transmissibility = Vec::with_capacity(m - 1);
        let mut y_flux_positions = Vec::with_capacity(m - 1);
        for j in 0..m - 1 {
            let d = pw(y[j + 1], 1.0 - a) - pw(y[j], 1.0 - a);
            y_transmissibility.push((1.0 - a) / d);
            y_flux_positions.push((1.0 - a) * (y[j + 1] * y[j + 1] - y[j] * y[j]) / (2.0 * d));
        }
        // Dual cells end where the face flux is evaluated (y^{1+a} = ζ), so the
        // weighted mass balances the fluxes exactly for U = y².
        let y_weights = (0..m)
            .map(|j| {
                let lo = if j == 0 { 0.0 } else { y_flux_positions[j - 1] };
                let hi = if j + 1 == m { pw(y[m - 1], 1.0 + a) } else { y_flux_positions[j] };
                (hi - lo) / (1.0 + a)
            })
            .collect();
        let derived = Derived {
            t_weights: dual_widths(&t),
            x_widths: x.iter().map(|xs| dual_widths(xs)).collect(),
            y_weights,
            y_transmissibility,
            y_flux_positions,
        };
        Ok(ParabolicGrid { params, t, x, y, grading, derived })
    }

    /// Rebuilds derived quantities after deserialization.
    pub fn rehydrate(self) -> Result<Self> {
        ParabolicGrid::from_nodes(self.params, self.t, self.x, self.y, self.grading)
    }

    /// The sub-grid on the index ranges `t ∈ [it.0, it.1]`, `x_d ∈ [ix[d].0, ix[d].1]`,
    /// `y ∈ [0, jy]` (inclusive).
    pub fn restrict(&self, it: (usize, usize), ix: &[(usize, usize)], jy: usize) -> Result<Self> {
        let t = self.t.get(it.0..=it.1).ok_or_else(|| crate::Error::Domain("time range outside grid".into()))?.to_vec();
        let mut x = Vec::with_capacity(self.n());
        for (d, &(lo, hi)) in ix.iter().enumerate() {
            x.push(self.x[d].get(lo..=hi).ok_or_else(|| crate::Error::Domain("x range outside grid".into()))?.to_vec());
        }
        let y = self.y.get(0..=jy).ok_or_else(|| crate::Error::Domain("y range outside grid".into()))?.to_vec();
        ParabolicGrid::from_nodes(self.params, t, x, y, self.grading)
    }

    pub fn params(&self) -> &FracParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    /// Trapezoid weights in `t`.
    pub fn t_weights(&self) -> &[f64] {
        &self.derived.t_weights
    }

    /// Dual-cell widths along each `x` axis.
    pub fn x_widths(&self) -> &[Vec<f64>] {
        &self.derived.x_widths
    }

    /// `∫ y^a dy` over each dual `y` cell; the cell boundaries sit at
    /// `y = ζ^{1/(1+a)}` of the adjacent faces (see [`Self::y_flux_positions`]).
    pub fn y_weights(&self) -> &[f64] {
        &self.derived.y_weights
    }

    /// `1/∫_{y_j}^{y_{j+1}} y^{−a} dy`: exact flux coefficient of `y^a ∂_y`
    /// across the face between `y_j` and `y_{j+1}`.
    pub fn y_transmissibility(&self) -> &[f64] {
        &self.derived.y_transmissibility
    }

    /// Position in `ζ = y^{1+a}` at which the face flux samples `y^a ∂_y U`
    /// exactly for `U = c₀ + c₁ y^{1−a} + c₂ y²`.
    pub fn y_flux_positions(&self) -> &[f64] {
        &self.derived.y_flux_positions
    }

    pub fn nt_nodes(&self) -> usize {
        self.t.len()
    }

    pub fn ny_nodes(&self) -> usize {
        self.y.len()
    }

    /// Number of `x` nodes per axis.
    pub fn x_shape(&self) -> Vec<usize> {
        self.x.iter().map(|v| v.len()).collect()
    }

    pub fn x_count(&self) -> usize {
        self.x.iter().map(|v| v.len()).product()
    }

    /// Nodes in one time slice.
    pub fn slice_len(&self) -> usize {
        self.x_count() * self.ny_nodes()
    }

    /// Shape `(nt, nx₁, …, ny)` of a nodal field.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.nt_nodes()];
        s.extend(self.x_shape());
        s.push(self.ny_nodes());
        s
    }

    /// Flat `x` index from a multi-index (row-major).
    pub fn x_flat(&self, ix: &[usize]) -> usize {
        ix.iter().zip(&self.x).fold(0, |acc, (&i, xs)| acc * xs.len() + i)
    }

    /// Multi-index from a flat `x` index.
    pub fn x_multi(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.n()];
        for d in (0..self.n()).rev() {
            let m = self.x[d].len();
            out[d] = flat % m;
            flat /= m;
        }
        out
    }

    pub fn x_point(&self, ix: &[usize]) -> Vec<f64> {
        ix.iter().enumerate().map(|(d, &i)| self.x[d][i]).collect()
    }

    /// Product of dual widths at a flat `x` index.
    pub fn x_volume(&self, flat: usize) -> f64 {
        self.x_multi(flat).iter().enumerate().map(|(d, &i)| self.derived.x_widths[d][i]).product()
    }

    /// Index of node `(it, x_flat, j)` in a nodal field.
    pub fn index(&self, it: usize, x_flat: usize, j: usize) -> usize {
        (it * self.x_count() + x_flat) * self.ny_nodes() + j
    }

    /// True when the `x` multi-index lies on the lateral boundary.
    pub fn on_lateral_boundary(&self, ix: &[usize]) -> bool {
        ix.iter().zip(&self.x).any(|(&i, xs)| i == 0 || i + 1 == xs.len())
    }

    /// Total weighted measure `Σ w_t w_x w_y`, equal to
    /// `(t₁ − t₀) |box| y_max^{1+a}/(1+a)`.
    pub fn weighted_measure(&self) -> f64 {
        let st: f64 = self.t_weights().iter().sum();
        let sx: f64 = self.x_widths().iter().map(|w| w.iter().sum::<f64>()).product();
        let sy: f64 = self.y_weights().iter().sum();
        st * sx * sy
    }
}

/// Values on every node of a grid, row-major in `(t, x…, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &ParabolicGrid) -> Self {
        let shape = grid.shape();
        let len = shape.iter().product();
        ScalarField { shape, values: vec![0.0; len] }
    }

    /// Samples `u(t, x, y)` at every node.
    pub fn from_fn(grid: &ParabolicGrid, u: impl Fn(f64, &[f64], f64) -> f64) -> Self {
        let mut f = Self::zeros(grid);
        for it in 0..grid.nt_nodes() {
            for xf in 0..grid.x_count() {
                let x = grid.x_point(&grid.x_multi(xf));
                for (j, &y) in grid.y().iter().enumerate() {
                    f.values[grid.index(it, xf, j)] = u(grid.t()[it], &x, y);
                }
            }
        }
        f
    }

    /// Samples `u` only where a solver reads Dirichlet data: the initial
    /// slice, the lateral boundary, the top face and, when `bottom` is set,
    /// the face `y = 0`. Other nodes are zero.
    pub fn boundary_from_fn(grid: &ParabolicGrid, bottom: bool, u: impl Fn(f64, &[f64], f64) -> f64) -> Self {
        let mut f = Self::zeros(grid);
        let ny = grid.ny_nodes();
        for it in 0..grid.nt_nodes() {
            for xf in 0..grid.x_count() {
                let ix = grid.x_multi(xf);
                let x = grid.x_point(&ix);
                let lateral = it == 0 || grid.on_lateral_boundary(&ix);
                for j in 0..ny {
                    if lateral || j + 1 == ny || (bottom && j == 0) {
                        f.values[grid.index(it, xf, j)] = u(grid.t()[it], &x, grid.y()[j]);
                    }
                }
            }
        }
        f
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField { shape: self.shape.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &ScalarField) -> Result<Self> {
        if self.shape != other.shape {
            return domain("field shapes differ");
        }
        Ok(ScalarField {
            shape: self.shape.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        })
    }

    /// Values of one time slice.
    pub fn slice(&self, grid: &ParabolicGrid, it: usize) -> &[f64] {
        let len = grid.slice_len();
        &self.values[it * len..(it + 1) * len]
    }

    /// Restriction to the index box used by [`ParabolicGrid::restrict`].
    pub fn restrict(&self, grid: &ParabolicGrid, it: (usize, usize), ix: &[(usize, usize)], jy: usize) -> Result<Self> {
        let sub = grid.restrict(it, ix, jy)?;
        let mut out = Self::zeros(&sub);
        for (kt, t) in (it.0..=it.1).enumerate() {
            for xf in 0..sub.x_count() {
                let m = sub.x_multi(xf);
                let parent: Vec<usize> = m.iter().zip(ix).map(|(&i, r)| i + r.0).collect();
                let pf = grid.x_flat(&parent);
                for j in 0..=jy {
                    out.values[sub.index(kt, xf, j)] = self.values[grid.index(t, pf, j)];
                }
            }
        }
        Ok(out)
    }
}

/// Values on the face `y = 0`, row-major in `(t, x…)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThinField {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ThinField {
    pub fn zeros(grid: &ParabolicGrid) -> Self {
        let mut shape = vec![grid.nt_nodes()];
        shape.extend(grid.x_shape());
        ThinField { values: vec![0.0; shape.iter().product()], shape }
    }

    pub fn from_fn(grid: &ParabolicGrid, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        let nx = grid.x_count();
        for it in 0..grid.nt_nodes() {
            for xf in 0..nx {
                out.values[it * nx + xf] = f(grid.t()[it], &grid.x_point(&grid.x_multi(xf)));
            }
        }
        out
    }

    /// The trace `U(·,·,0)` of a nodal field.
    pub fn trace(grid: &ParabolicGrid, u: &ScalarField) -> Self {
        let mut out = Self::zeros(grid);
        let nx = grid.x_count();
        for it in 0..grid.nt_nodes() {
            for xf in 0..nx {
                out.values[it * nx + xf] = u.values[grid.index(it, xf, 0)];
            }
        }
        out
    }

    pub fn at(&self, grid: &ParabolicGrid, it: usize, x_flat: usize) -> f64 {
        self.values[it * grid.x_count() + x_flat]
    }
}

/// Nodal vector field with `n` components (the `x` components of `F`; the
/// `y` component is identically zero), row-major in `(t, x…, y, component)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub n: usize,
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn from_fn(grid: &ParabolicGrid, f: impl Fn(f64, &[f64], f64, &mut [f64])) -> Self {
        let n = grid.n();
        let mut values = vec![0.0; grid.nt_nodes() * grid.slice_len() * n];
        for it in 0..grid.nt_nodes() {
            for xf in 0..grid.x_count() {
                let x = grid.x_point(&grid.x_multi(xf));
                for (j, &y) in grid.y().iter().enumerate() {
                    let k = grid.index(it, xf, j) * n;
                    f(grid.t()[it], &x, y, &mut values[k..k + n]);
                }
            }
        }
        VectorField { n, values }
    }

    pub fn component(&self, node: usize, d: usize) -> f64 {
        self.values[node * self.n + d]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layered_spacing_doubles_per_block() {
        let v = Spacing::Layered { levels: 3 }.nodes(-1.0, 1.0, 12).unwrap();
        assert_eq!(v.len(), 13);
        let h: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
        let h0 = 1.0 / 14.0;
        let want = [4.0, 4.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 4.0, 4.0];
        for (a, b) in h.iter().zip(want) {
            assert!((a - b * h0).abs() < 1e-15);
        }
        assert_eq!(v[6], 0.0);
        assert!(Spacing::Layered { levels: 4 }.nodes(-1.0, 1.0, 12).is_err());
    }

    #[test]
    fn weights_sum_to_weighted_measure() {
        for &s in &[0.6, 0.75, 0.9] {
            let p = FracParams::new(s, 1).unwrap();
            let g = GridSpec::new(1.0, 8, 10, 12).build(p).unwrap();
            let want = 2.0 * 2.0 / (1.0 + p.a());
            assert!((g.weighted_measure() - want).abs() < 1e-12 * want, "s={s}");
            assert!(g.y_weights().iter().all(|&w| w > 0.0));
            // Uniform weighted cells in the interior for the default grading.
            let w = g.y_weights();
            assert!((w[3] - w[4]).abs() < 0.3 * w[3]);
        }
    }

    #[test]
    fn flux_positions_are_exact_for_the_model_expansion() {
        let p = FracParams::new(0.7, 1).unwrap();
        let a = p.a();
        let g = GridSpec::new(1.0, 2, 4, 9).build(p).unwrap();
        let (c1, c2) = (0.7, -1.3);
        let u = |y: f64| 2.0 + c1 * y.powf(1.0 - a) + c2 * y * y;
        for j in 0..g.ny_nodes() - 1 {
            let flux = g.y_transmissibility()[j] * (u(g.y()[j + 1]) - u(g.y()[j]));
            let want = (1.0 - a) * c1 + 2.0 * c2 * g.y_flux_positions()[j];
            assert!((flux - want).abs() < 1e-12, "j={j}");
        }
    }

    #[test]
    fn index_roundtrip_in_two_dimensions() {
        let p = FracParams::new(0.7, 2).unwrap();
        let g = GridSpec::new(1.0, 2, 4, 3).build(p).unwrap();
        for f in 0..g.x_count() {
            assert_eq!(g.x_flat(&g.x_multi(f)), f);
        }
        assert_eq!(g.shape(), vec![3, 5, 5, 4]);
    }
}
