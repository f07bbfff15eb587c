//! Experiment configuration: the JSON document that drives a run, its data
//! generators and the checks applied before anything is executed.

use std::path::Path;

use fracheat_core::dtn::{DtnOptions, ModeSum};
use fracheat_core::extension::{CoefficientSpec, GridSpec, SolverOptions, Spacing};
use fracheat_core::kernels::QuadratureSpec;
use fracheat_core::moduli::ModulusPipelineConfig;
use serde::{Deserialize, Serialize};

/// Pipeline stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Solve,
    Dtn,
    Moduli,
    Lorentz,
    Probe,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Solve, Stage::Dtn, Stage::Moduli, Stage::Lorentz, Stage::Probe, Stage::Plot];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Solve => "solve",
            Stage::Dtn => "dtn",
            Stage::Moduli => "moduli",
            Stage::Lorentz => "lorentz",
            Stage::Probe => "probe",
            Stage::Plot => "plot",
        }
    }

    pub fn parse(s: &str) -> Result<Stage, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}` (expected one of solve, dtn, moduli, lorentz, probe, plot)"))
    }

    /// Parses a comma-separated list; the empty string is the empty list.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>, String> {
        s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(Stage::parse).collect()
    }
}

/// Neumann datum `f(t, x)` on the thin space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Zero,
    /// `amplitude · max(|x − center|, cutoff)^{−θ}`; θ defaults to the
    /// critical exponent `n(2s−1)/(n+2)` of `L((n+2)/(2s−1), 1)`.
    TruncatedPower {
        amplitude: f64,
        center: Vec<f64>,
        cutoff: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
    },
    /// `amplitude` on the box `lo ≤ x ≤ hi` (all times), 0 elsewhere.
    Indicator {
        amplitude: f64,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// A closed-form mode sum.
    Smooth {
        modes: ModeSum,
    },
}

/// Divergence forcing `F(t, X)`, one component per `x` direction (the `y`
/// component is zero).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingSpec {
    Zero,
    /// `F_d = amplitude · cos(ξ·x) e^{−y}` in every `x` component.
    Smooth {
        amplitude: f64,
        xi: Vec<f64>,
    },
}

/// Dirichlet data on the initial slice, the lateral faces and the top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    Zero,
    /// Extension of a mode sum, e.g. `cos(ξx) e^{−ξ²t}` via `μ = −ξ²`.
    Modes {
        modes: ModeSum,
    },
}

/// Cells on which `f` is sampled as a piecewise-constant function for the
/// Lorentz and moduli computations: uniform edges, plus edges at
/// `c ± cutoff·2^k` around the singular point of a truncated power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataGridSpec {
    pub t_cells: usize,
    pub x_cells: usize,
    #[serde(default = "default_true")]
    pub geometric: bool,
}

fn default_true() -> bool {
    true
}

impl Default for DataGridSpec {
    fn default() -> Self {
        DataGridSpec { t_cells: 16, x_cells: 64, geometric: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Ratio of the excess sequence.
    pub lambda: f64,
    pub kmax: usize,
    pub seed: u64,
    pub pairs: usize,
    pub time_pairs: usize,
    pub min_cells: usize,
    /// Half-size of the probed cylinder `Q*_R` for the gradient pairs.
    pub radius: f64,
    pub falsify_exponent: f64,
    /// Second Campanato center `x`, at `t = 0`.
    pub second_center: Vec<f64>,
    /// Radii of the Campanato profiles, largest first.
    pub campanato_radii: Vec<f64>,
    /// Side and center height of the interior cube.
    pub interior_side: f64,
    pub interior_height: f64,
    pub interior_lambda: f64,
    pub interior_kmax: usize,
}

impl ProbeConfig {
    pub fn new(n: usize) -> Self {
        let mut second = vec![0.0; n];
        second[0] = 0.125;
        ProbeConfig {
            lambda: 0.25,
            kmax: 6,
            seed: 1,
            pairs: 10_000,
            time_pairs: 10_000,
            min_cells: 4,
            radius: 0.5,
            falsify_exponent: 0.9,
            second_center: second,
            campanato_radii: vec![0.5, 0.25, 0.125, 0.0625, 0.03125],
            interior_side: 0.125,
            interior_height: 0.375,
            interior_lambda: 0.5,
            interior_kmax: 4,
        }
    }
}

/// Dual-route DtN comparison for a closed-form function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtnCheckConfig {
    pub function: ModeSum,
    /// Number of grid levels, each the refinement of the previous one.
    pub levels: usize,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub options: DtnOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub s: f64,
    pub n: usize,
    pub grid: GridSpec,
    pub coefficients: CoefficientSpec,
    pub f: DataSpec,
    pub forcing: ForcingSpec,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub data_grid: DataGridSpec,
    #[serde(default)]
    pub moduli: ModulusPipelineConfig,
    pub probe: ProbeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtn: Option<DtnCheckConfig>,
    #[serde(default)]
    pub solver: SolverOptions,
    pub stages: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

/// The critical exponent `θ = n(2s−1)/(n+2)` at which `|x|^{−θ}` sits on the
/// edge of `L((n+2)/(2s−1), 1)`.
pub fn critical_theta(s: f64, n: usize) -> f64 {
    n as f64 * (2.0 * s - 1.0) / (n as f64 + 2.0)
}

impl ExperimentConfig {
    /// A small log-Dini instance with critical truncated-power data.
    pub fn example(n: usize) -> Self {
        ExperimentConfig {
            s: 0.75,
            n,
            grid: GridSpec {
                time_spacing: Spacing::Layered { levels: 5 },
                x_spacing: Spacing::Layered { levels: 3 },
                ..GridSpec::new(1.0, 60, 48, 24)
            },
            coefficients: CoefficientSpec::Perturbed {
                epsilon: 0.5,
                profile: fracheat_core::moduli::ModulusRule::LogDini { scale: 1.0, power: 2.0 },
                matrix: identity(n),
            },
            f: DataSpec::TruncatedPower { amplitude: 1.0, center: vec![0.0; n], cutoff: 1e-3, theta: None },
            forcing: ForcingSpec::Zero,
            boundary: BoundarySpec::Zero,
            data_grid: DataGridSpec::default(),
            moduli: ModulusPipelineConfig::default(),
            probe: ProbeConfig { pairs: 2000, time_pairs: 2000, ..ProbeConfig::new(n) },
            dtn: None,
            solver: SolverOptions::default(),
            stages: vec![Stage::Solve, Stage::Dtn, Stage::Moduli, Stage::Lorentz, Stage::Probe, Stage::Plot],
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    /// Invariant violations, empty for a runnable config.
    pub fn validate(&self) -> Vec<String> {
        let mut d = Vec::new();
        let n = self.n;
        if !(self.s > 0.5 && self.s < 1.0) {
            d.push(format!("s = {} outside (1/2,1)", self.s));
        }
        if !(1..=2).contains(&n) {
            d.push(format!("n = {n} must be 1 or 2"));
        }
        d.extend(self.moduli.diagnostics().into_iter().map(|m| format!("moduli: {m}")));
        let g = &self.grid;
        if !(g.rho > 0.0) || g.nt == 0 || g.nx < 2 || g.ny < 2 {
            d.push("grid: need rho > 0, nt ≥ 1, nx ≥ 2 and ny ≥ 2".into());
        }
        let dim = |name: &str, v: &[f64], d: &mut Vec<String>| {
            if v.len() != n {
                d.push(format!("{name} has {} components, expected n = {n}", v.len()));
            }
        };
        match &self.coefficients {
            CoefficientSpec::Perturbed { matrix, .. } if matrix.len() != n * n => {
                d.push(format!("coefficients: perturbation matrix needs {} entries", n * n))
            }
            _ => {}
        }
        match &self.f {
            DataSpec::TruncatedPower { center, cutoff, theta, .. } => {
                dim("f.center", center, &mut d);
                if !(*cutoff > 0.0) {
                    d.push("f.cutoff must be positive".into());
                }
                if let Some(th) = theta {
                    if !(*th >= 0.0) {
                        d.push("f.theta must be nonnegative".into());
                    }
                }
            }
            DataSpec::Indicator { lo, hi, .. } => {
                dim("f.lo", lo, &mut d);
                dim("f.hi", hi, &mut d);
            }
            DataSpec::Smooth { modes } => {
                if let Err(e) = modes.validate(n) {
                    d.push(format!("f.modes: {e}"));
                }
            }
            DataSpec::Zero => {}
        }
        if let ForcingSpec::Smooth { xi, .. } = &self.forcing {
            dim("forcing.xi", xi, &mut d);
        }
        if let BoundarySpec::Modes { modes } = &self.boundary {
            if let Err(e) = modes.validate_extension(n) {
                d.push(format!("boundary.modes: {e}"));
            }
        }
        if self.data_grid.t_cells == 0 || self.data_grid.x_cells == 0 {
            d.push("data_grid: cell counts must be positive".into());
        }
        let p = &self.probe;
        if !(p.lambda > 0.0 && p.lambda < 1.0) {
            d.push(format!("probe.lambda = {} must lie in (0,1)", p.lambda));
        }
        if !(p.interior_lambda > 0.0 && p.interior_lambda < 1.0) {
            d.push(format!("probe.interior_lambda = {} must lie in (0,1)", p.interior_lambda));
        }
        dim("probe.second_center", &p.second_center, &mut d);
        if p.campanato_radii.is_empty() || p.campanato_radii.iter().any(|r| !(*r > 0.0)) {
            d.push("probe.campanato_radii must be a nonempty list of positive radii".into());
        }
        if !(p.radius > 0.0 && p.radius <= g.rho) {
            d.push(format!("probe.radius = {} must lie in (0, rho]", p.radius));
        }
        if !(p.interior_height >= 2.0 * p.interior_side && p.interior_side > 0.0) {
            d.push("probe: the interior cube needs interior_height ≥ 2·interior_side > 0".into());
        }
        if let Some(c) = &self.dtn {
            if c.levels == 0 {
                d.push("dtn.levels must be positive".into());
            }
            if let Err(e) = c.function.validate(n) {
                d.push(format!("dtn.function: {e}"));
            }
        }
        if !(self.solver.theta >= 0.5 && self.solver.theta <= 1.0) {
            d.push(format!("solver.theta = {} must lie in [1/2, 1]", self.solver.theta));
        }
        d
    }
}

fn identity(n: usize) -> Vec<f64> {
    (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect()
}

/// Diagnostics for raw JSON text: parse errors carry line and column.
pub fn validate_text(text: &str) -> Vec<String> {
    match ExperimentConfig::from_json(text) {
        Ok(cfg) => cfg.validate(),
        Err(e) => vec![e],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_is_valid_and_round_trips() {
        for n in [1, 2] {
            let cfg = ExperimentConfig::example(n);
            assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
            let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_json(), cfg.to_json());
        }
    }

    #[test]
    fn stage_lists_parse() {
        assert_eq!(Stage::parse_list("").unwrap(), vec![]);
        assert_eq!(Stage::parse_list("solve, probe").unwrap(), vec![Stage::Solve, Stage::Probe]);
        assert!(Stage::parse_list("solve,fly").is_err());
    }

    #[test]
    fn critical_exponent_for_one_dimension() {
        assert!((critical_theta(0.75, 1) - 1.0 / 6.0).abs() < 1e-15);
    }
}
