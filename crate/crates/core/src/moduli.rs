//! Moduli of continuity and the pipeline `ω_A → ω̃₁, ω₁, ω₂ → ω₃, ω → K`
//! that turns a Dini coefficient modulus and a Lorentz datum into the
//! gradient modulus `K`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Error, Result};
use crate::geometry::unit_cylinder_measure;
use crate::kernels::FracParams;
use crate::lorentz::{
    decreasing_rearrangement, estimate1_constant, estimate1_constant_corrected, CellFunction, PotentialSpec,
    RearrangedProfile,
};
use crate::quadrature::{gl, gl_composite};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Verified,
    Refuted,
    Unchecked,
}

impl Flag {
    fn from_bool(ok: bool) -> Flag {
        if ok {
            Flag::Verified
        } else {
            Flag::Refuted
        }
    }
}

/// Evaluation rule of a modulus on `[0, 1]`; arguments above 1 are clamped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusRule {
    Zero,
    Constant {
        value: f64,
    },
    /// `scale · r^exponent` (Lipschitz for exponent 1, Hölder below).
    Power {
        scale: f64,
        exponent: f64,
    },
    /// `scale / (1 − ln r)^power`: Dini for power > 1, not Hölder.
    LogDini {
        scale: f64,
        power: f64,
    },
    /// Interpolates `(r_i, v_i)`, `r` increasing and positive: linearly, or
    /// by a power law on each segment when `log_log` is set (which keeps
    /// `v/√r` monotone whenever the nodes do). Below `r₀` the value is
    /// continued by `tail` when present, otherwise by `v₀·(r/r₀)` or, with
    /// `log_log`, by `v₀·sqrt(r/r₀)`.
    Table {
        r: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        log_log: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail: Option<Box<ModulusRule>>,
    },
    /// Values `ω(λ^k)` for `k = 0..=kmax`, interpolated by
    /// `min{ω(λ^k), ω(λ^{k+1}) sqrt(r/λ^{k+1})}` on `[λ^{k+1}, λ^k]`.
    Dyadic {
        lambda: f64,
        values: Vec<f64>,
    },
    /// `inner(sqrt r)`.
    Sqrt {
        inner: Box<ModulusRule>,
    },
    /// `inner(factor · r)`.
    ArgScaled {
        factor: f64,
        inner: Box<ModulusRule>,
    },
    /// `factor · inner(r)`.
    Scaled {
        factor: f64,
        inner: Box<ModulusRule>,
    },
    /// Pointwise maximum.
    Max {
        parts: Vec<ModulusRule>,
    },
}

impl ModulusRule {
    /// Evaluation from `ln r`, so that closed forms stay accurate far below
    /// the smallest positive double.
    fn eval_ln(&self, ln_r: f64) -> f64 {
        let ln_r = ln_r.min(0.0);
        match self {
            ModulusRule::Zero => 0.0,
            ModulusRule::Constant { value } => *value,
            ModulusRule::Power { scale, exponent } => scale * (exponent * ln_r).exp(),
            ModulusRule::LogDini { scale, power } => scale / (1.0 - ln_r).powf(*power),
            ModulusRule::Table { r, values, log_log, tail } => {
                let x = ln_r.exp();
                if x < r[0] {
                    if let Some(t) = tail {
                        return t.eval_ln(ln_r);
                    }
                    return if *log_log { values[0] * (0.5 * (ln_r - r[0].ln())).exp() } else { values[0] * x / r[0] };
                }
                let k = r.partition_point(|&v| v <= x);
                if k >= r.len() {
                    return *values.last().unwrap();
                }
                let (r0, r1) = (r[k - 1], r[k]);
                let (v0, v1) = (values[k - 1], values[k]);
                if *log_log && v0 > 0.0 && v1 > 0.0 {
                    let w = (ln_r - r0.ln()) / (r1 / r0).ln();
                    return v0 * (w * (v1 / v0).ln()).exp();
                }
                let w = (x - r0) / (r1 - r0);
                v0 + w * (v1 - v0)
            }
            ModulusRule::Dyadic { lambda, values } => {
                let ll = lambda.ln();
                // r ∈ [λ^{k+1}, λ^k]
                let pos = ln_r / ll;
                let kmax = values.len() - 1;
                if pos <= 0.0 {
                    return values[0];
                }
                let k = pos.floor() as usize;
                if k >= kmax {
                    return values[kmax] * (0.5 * (ln_r - kmax as f64 * ll)).exp();
                }
                let lower = values[k + 1] * (0.5 * (ln_r - (k + 1) as f64 * ll)).exp();
                values[k].min(lower)
            }
            ModulusRule::Sqrt { inner } => inner.eval_ln(0.5 * ln_r),
            ModulusRule::ArgScaled { factor, inner } => inner.eval_ln(ln_r + factor.ln()),
            ModulusRule::Scaled { factor, inner } => factor * inner.eval_ln(ln_r),
            ModulusRule::Max { parts } => parts.iter().map(|p| p.eval_ln(ln_r)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Value at `r = 0` (the limit from the right).
    fn at_zero(&self) -> f64 {
        match self {
            ModulusRule::Constant { value } => *value,
            ModulusRule::Table { tail: Some(t), .. } => t.at_zero(),
            ModulusRule::Sqrt { inner } | ModulusRule::ArgScaled { inner, .. } => inner.at_zero(),
            ModulusRule::Scaled { factor, inner } => factor * inner.at_zero(),
            ModulusRule::Max { parts } => parts.iter().map(|p| p.at_zero()).fold(f64::NEG_INFINITY, f64::max),
            _ => 0.0,
        }
    }
}

/// A nondecreasing modulus with tri-state property flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusOfContinuity {
    pub rule: ModulusRule,
    pub is_dini: Flag,
    pub is_concave: Flag,
    pub is_half_decreasing: Flag,
}

impl ModulusOfContinuity {
    pub fn new(rule: ModulusRule) -> Self {
        ModulusOfContinuity {
            rule,
            is_dini: Flag::Unchecked,
            is_concave: Flag::Unchecked,
            is_half_decreasing: Flag::Unchecked,
        }
    }

    pub fn zero() -> Self {
        Self::new(ModulusRule::Zero)
    }

    pub fn constant(value: f64) -> Self {
        Self::new(ModulusRule::Constant { value })
    }

    pub fn lipschitz(scale: f64) -> Self {
        Self::new(ModulusRule::Power { scale, exponent: 1.0 })
    }

    pub fn power(scale: f64, exponent: f64) -> Self {
        Self::new(ModulusRule::Power { scale, exponent })
    }

    pub fn log_dini(scale: f64, power: f64) -> Self {
        Self::new(ModulusRule::LogDini { scale, power })
    }

    pub fn table(r: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if r.is_empty() || r.len() != values.len() {
            return domain("table needs matching, nonempty r and value lists");
        }
        if !(r[0] > 0.0) || r.windows(2).any(|w| w[0] >= w[1]) {
            return domain("table radii must be positive and strictly increasing");
        }
        Ok(Self::new(ModulusRule::Table { r, values, log_log: false, tail: None }))
    }

    pub fn dyadic(lambda: f64, values: Vec<f64>) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) || values.is_empty() {
            return domain("dyadic modulus needs λ ∈ (0,1) and at least one value");
        }
        Ok(Self::new(ModulusRule::Dyadic { lambda, values }))
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return self.rule.at_zero();
        }
        self.rule.eval_ln(r.ln())
    }

    pub fn eval_ln(&self, ln_r: f64) -> f64 {
        self.rule.eval_ln(ln_r)
    }

    /// Checks the flags on `per_decade` log-spaced samples in `[r_min, 1]`,
    /// together with the Dini integral on `(0, 1]`. Returns whether the
    /// samples are nondecreasing.
    pub fn check_flags(&mut self, r_min: f64, per_decade: usize) -> bool {
        let rs = log_grid(r_min, 1.0, per_decade);
        let vs: Vec<f64> = rs.iter().map(|&r| self.eval(r)).collect();
        let tol = 1e-12;
        let monotone = vs.windows(2).all(|w| w[1] >= w[0] - tol * w[0].abs());
        let mut concave = true;
        for i in 1..rs.len() - 1 {
            let s0 = (vs[i] - vs[i - 1]) / (rs[i] - rs[i - 1]);
            let s1 = (vs[i + 1] - vs[i]) / (rs[i + 1] - rs[i]);
            if s1 > s0 * (1.0 + 1e-9) + 1e-12 * vs[i + 1].abs() / rs[i + 1] {
                concave = false;
                break;
            }
        }
        let half = rs
            .windows(2)
            .zip(vs.windows(2))
            .all(|(r, v)| v[1] / r[1].sqrt() <= v[0] / r[0].sqrt() * (1.0 + 1e-9) + 1e-300);
        self.is_concave = Flag::from_bool(concave && monotone);
        self.is_half_decreasing = Flag::from_bool(half);
        self.is_dini = Flag::from_bool(dini_integral(self, 0.0, 1.0).is_ok());
        monotone
    }

    /// `r,omega` CSV on the given radii.
    pub fn to_csv(&self, rs: &[f64]) -> String {
        let mut out = String::from("r,omega\n");
        for &r in rs {
            out.push_str(&format!("{r:e},{:e}\n", self.eval(r)));
        }
        out
    }
}

/// `per_decade` log-spaced points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, per_decade: usize) -> Vec<f64> {
    let decades = (b / a).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    let (la, lb) = (a.ln(), b.ln());
    (0..=n).map(|i| (la + (lb - la) * i as f64 / n as f64).exp()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiniIntegral {
    pub value: f64,
    /// Running partial integrals over successively lower limits (only for `a = 0`).
    pub partials: Vec<f64>,
    /// Geometric tail estimate added beyond the last panel.
    pub tail_estimate: f64,
}

const DINI_DEGREE: usize = 16;
const DINI_MAX_PANELS: usize = 512;

/// `∫_a^b ω(t)/t dt` for `0 ≤ a < b ≤ 1`.
///
/// For `a > 0` the integral is taken in `ln t` with one Gauss–Legendre panel
/// per decade. For `a = 0` it is written as `∫₀^∞ ω(b e^{−v}) dv` and
/// summed over doubling panels in `v`; geometric decay of the panel sums
/// gives a tail estimate, while panel sums that stop decaying mean the
/// integral diverges.
pub fn dini_integral(omega: &ModulusOfContinuity, a: f64, b: f64) -> Result<DiniIntegral> {
    if !(a >= 0.0 && b > a && b <= 1.0 + 1e-15) {
        return domain(format!("Dini integral needs 0 ≤ a < b ≤ 1, got a = {a}, b = {b}"));
    }
    let lb = b.ln();
    if a > 0.0 {
        let la = a.ln();
        let panels = ((lb - la) / std::f64::consts::LN_10).ceil().max(1.0) as usize;
        let h = (lb - la) / panels as f64;
        let value = (0..panels)
            .map(|p| {
                let u0 = la + p as f64 * h;
                gl(DINI_DEGREE, u0, u0 + h, |u| omega.eval_ln(u))
            })
            .sum();
        return Ok(DiniIntegral { value, partials: vec![value], tail_estimate: 0.0 });
    }
    let mut sums = Vec::new();
    let mut partials = Vec::new();
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..DINI_MAX_PANELS {
        let s = gl_composite(DINI_DEGREE, 4, lo, hi, |v| omega.eval_ln(lb - v));
        total += s;
        sums.push(s);
        partials.push(total);
        if s <= 1e-17 * total {
            return Ok(DiniIntegral { value: total, partials, tail_estimate: 0.0 });
        }
        lo = hi;
        hi *= 2.0;
    }
    let k = sums.len();
    let ratios: Vec<f64> = (k - 4..k).map(|i| sums[i] / sums[i - 1]).collect();
    let q = ratios[3];
    if ratios.iter().any(|&r| r >= 0.999) || !q.is_finite() {
        return Err(Error::Divergent { partials });
    }
    let tail = sums[k - 1] * q / (1.0 - q);
    Ok(DiniIntegral { value: total + tail, partials, tail_estimate: tail })
}

/// Least concave nondecreasing majorant of samples `(r_i, ω_i)` on `[0,1]`:
/// running maximum, then upper convex hull, as a piecewise-linear table.
pub fn least_concave_majorant(r: &[f64], values: &[f64]) -> Result<ModulusOfContinuity> {
    let hull = concave_hull_points(r, values)?;
    let (hr, hv): (Vec<f64>, Vec<f64>) = hull.into_iter().unzip();
    let mut m = ModulusOfContinuity::new(ModulusRule::Table { r: hr, values: hv, log_log: false, tail: None });
    m.is_concave = Flag::Verified;
    Ok(m)
}

fn concave_hull_points(r: &[f64], values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if r.is_empty() || r.len() != values.len() {
        return domain("majorant needs matching, nonempty sample lists");
    }
    if !(r[0] > 0.0) || r.windows(2).any(|w| w[0] >= w[1]) {
        return domain("sample radii must be positive and strictly increasing");
    }
    let mut run = f64::NEG_INFINITY;
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(r.len());
    for (&x, &v) in r.iter().zip(values) {
        run = run.max(v);
        let p = (x, run);
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // Drop b when it lies on or below the chord a–p.
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    Ok(hull)
}

/// `γ`, `δ̃`, the ratio `λ` and the truncation depth of the dyadic sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusPipelineConfig {
    pub gamma: f64,
    pub delta_tilde: f64,
    pub lambda: f64,
    pub kmax: usize,
}

impl Default for ModulusPipelineConfig {
    fn default() -> Self {
        ModulusPipelineConfig { gamma: 0.25, delta_tilde: 0.5, lambda: 1.0 / 16.0, kmax: 24 }
    }
}

impl ModulusPipelineConfig {
    /// Human-readable violations of the configuration invariants.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut d = Vec::new();
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.gamma) {
            d.push(format!("gamma = {} must lie in (0,1)", self.gamma));
        }
        if !unit(self.delta_tilde) {
            d.push(format!("delta_tilde = {} must lie in (0,1)", self.delta_tilde));
        }
        if !(self.gamma < self.delta_tilde) {
            d.push(format!(
                "gamma = {} must be smaller than delta_tilde = {} (the summability argument picks gamma below delta_tilde)",
                self.gamma, self.delta_tilde
            ));
        }
        if !(self.lambda > 0.0 && self.lambda < 0.25) {
            d.push(format!("lambda = {} must lie in (0, 1/4)", self.lambda));
        }
        if self.kmax == 0 {
            d.push("kmax must be positive".into());
        }
        d
    }

    fn validate(&self) -> Result<()> {
        match self.diagnostics().into_iter().next() {
            None => Ok(()),
            Some(m) => precondition(m),
        }
    }

    fn dyadic_radii(&self) -> Vec<f64> {
        (0..=self.kmax).map(|k| self.lambda.powi(k as i32)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Omega1 {
    /// `ω̃₁`: least concave majorant of `max{ω_A(γr)/δ̃, r}`, before normalization.
    pub tilde: ModulusOfContinuity,
    /// `ω₁(r) = ω̃₁(√r)/scale`, so that `ω₁(1) = 1`.
    pub omega1: ModulusOfContinuity,
    pub scale: f64,
}

const HULL_FLOOR: f64 = 1e-200;
const HULL_PER_DECADE: usize = 10;

/// Least concave majorant of a rule on `[0, 1]`, sampled on a log grid down to
/// 1e−200 and continued by the rule itself below that (where the families
/// used here are already concave).
pub fn concave_majorant_rule(rule: &ModulusRule) -> Result<ModulusRule> {
    let rs = log_grid(HULL_FLOOR, 1.0, HULL_PER_DECADE);
    let vs: Vec<f64> = rs.iter().map(|r| rule.eval_ln(r.ln())).collect();
    let hull = concave_hull_points(&rs, &vs)?;
    let (hr, hv): (Vec<f64>, Vec<f64>) = hull.into_iter().unzip();
    Ok(ModulusRule::Table { r: hr, values: hv, log_log: false, tail: Some(Box::new(rule.clone())) })
}

pub fn build_omega1(omega_a: &ModulusOfContinuity, cfg: &ModulusPipelineConfig) -> Result<Omega1> {
    if !(cfg.gamma < cfg.delta_tilde) {
        return precondition(format!("need gamma < delta_tilde, got {} ≥ {}", cfg.gamma, cfg.delta_tilde));
    }
    cfg.validate()?;
    let raw = ModulusRule::Max {
        parts: vec![
            ModulusRule::Scaled {
                factor: 1.0 / cfg.delta_tilde,
                inner: Box::new(ModulusRule::ArgScaled { factor: cfg.gamma, inner: Box::new(omega_a.rule.clone()) }),
            },
            ModulusRule::Power { scale: 1.0, exponent: 1.0 },
        ],
    };
    let tilde_rule = concave_majorant_rule(&raw)?;
    let scale = tilde_rule.eval_ln(0.0);
    let mut tilde = ModulusOfContinuity::new(tilde_rule.clone());
    tilde.check_flags(1e-30, 4);
    let mut omega1 = ModulusOfContinuity::new(ModulusRule::Scaled {
        factor: 1.0 / scale,
        inner: Box::new(ModulusRule::Sqrt { inner: Box::new(tilde_rule) }),
    });
    omega1.check_flags(1e-30, 4);
    Ok(Omega1 { tilde, omega1, scale })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Omega2 {
    pub omega2: ModulusOfContinuity,
    /// `ω₂(λ^k)` for `k = 0..=kmax`.
    pub dyadic: Vec<f64>,
    /// Radii where the running maximum exceeded the pointwise value.
    pub envelope_radii: Vec<f64>,
}

/// `ω₂(r) = max{γ I(γr)/δ̃, r}` with `I(r) = r^{2s−1}(⨍_{Q_r(0,0)} f²)^{1/2}`,
/// made nondecreasing by a running maximum from small to large `r`.
pub fn build_omega2(f: &CellFunction, cfg: &ModulusPipelineConfig, p: &FracParams) -> Result<Omega2> {
    cfg.validate()?;
    if !p.is_supercritical() {
        return domain("ω₂ needs s > 1/2");
    }
    let n = f.n();
    let origin = vec![0.0; n];
    if !f.contains_cylinder(0.0, &origin, cfg.gamma) {
        return domain("the cylinder Q_γ around the origin leaves the data grid");
    }
    let e = 2.0 * p.s() - 1.0;
    let r_min = cfg.lambda.powi(cfg.kmax as i32);
    let dyadic = cfg.dyadic_radii();
    let near_dyadic = |r: f64| dyadic.iter().any(|&d| (r - d).abs() <= 1e-9 * d);
    let mut rs: Vec<f64> = log_grid(r_min, 1.0, 8).into_iter().filter(|&r| !near_dyadic(r)).collect();
    rs.extend(&dyadic);
    rs.sort_by(f64::total_cmp);
    let mut vs = Vec::with_capacity(rs.len());
    let mut envelope_radii = Vec::new();
    let mut run: f64 = 0.0;
    for &r in &rs {
        let rho = cfg.gamma * r;
        let ms = f.cylinder_mean_square(0.0, &origin, rho)?;
        let v = (cfg.gamma * rho.powf(e) * ms.sqrt() / cfg.delta_tilde).max(r);
        if v < run {
            envelope_radii.push(r);
        }
        run = run.max(v);
        vs.push(run);
    }
    let dyadic = dyadic.iter().map(|&r| vs[rs.partition_point(|&x| x < r)]).collect();
    let mut omega2 = ModulusOfContinuity::new(ModulusRule::Table { r: rs, values: vs, log_log: false, tail: None });
    omega2.check_flags(r_min, 4);
    Ok(Omega2 { omega2, dyadic, envelope_radii })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaPipeline {
    pub omega1_dyadic: Vec<f64>,
    pub omega2_dyadic: Vec<f64>,
    /// `ω₃(λ^k) = Σ_{i≤k} ω₁(λ^{k−i}) ω₂(λ^i)`.
    pub omega3: Vec<f64>,
    /// `ω(λ^k) = max{ω₃(λ^k), λ^{k/2}}` with the dyadic interpolation.
    pub omega: ModulusOfContinuity,
}

pub fn build_omega3_and_omega(
    omega1: &ModulusOfContinuity,
    omega2: &ModulusOfContinuity,
    cfg: &ModulusPipelineConfig,
) -> Result<OmegaPipeline> {
    cfg.validate()?;
    let rs = cfg.dyadic_radii();
    let w1: Vec<f64> = rs.iter().map(|&r| omega1.eval(r)).collect();
    let w2: Vec<f64> = rs.iter().map(|&r| omega2.eval(r)).collect();
    Ok(combine_dyadic(w1, w2, cfg))
}

fn combine_dyadic(w1: Vec<f64>, w2: Vec<f64>, cfg: &ModulusPipelineConfig) -> OmegaPipeline {
    let k = w1.len();
    let omega3: Vec<f64> = (0..k).map(|kk| (0..=kk).map(|i| w1[kk - i] * w2[i]).sum()).collect();
    let values: Vec<f64> = omega3.iter().enumerate().map(|(kk, &v)| v.max(cfg.lambda.powf(kk as f64 / 2.0))).collect();
    let mut omega = ModulusOfContinuity::new(ModulusRule::Dyadic { lambda: cfg.lambda, values: values.clone() });
    let grid_monotone = values.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let grid_half = values.windows(2).all(|w| w[1] >= w[0] * cfg.lambda.sqrt() * (1.0 - 1e-12));
    omega.is_half_decreasing = Flag::from_bool(grid_half);
    omega.is_concave = if grid_monotone { Flag::Unchecked } else { Flag::Refuted };
    omega.is_dini = Flag::Verified;
    OmegaPipeline { omega1_dyadic: w1, omega2_dyadic: w2, omega3, omega }
}

/// `Σ_{k≤kmax} ω(λ^k)`.
pub fn dyadic_sum(omega: &ModulusOfContinuity, lambda: f64, kmax: usize) -> f64 {
    (0..=kmax).map(|k| omega.eval(lambda.powi(k as i32))).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    pub gamma_initial: f64,
    pub gamma_tuned: f64,
    pub partial_sums_omega1: Vec<f64>,
    pub partial_sums_omega2: Vec<f64>,
    pub partial_sums_omega: Vec<f64>,
    /// `ω_A(γ)/δ̃ + ∫₀^γ ω_A(s)/s ds / ((−ln√λ) δ̃)`, the part of the `Σω₁`
    /// bound that the choice of γ controls.
    pub omega_a_part: f64,
    /// `omega_a_part + 1/(1−√λ)` (the `r` branch of `ω̃₁` contributes the
    /// geometric series).
    pub bound_omega1: f64,
    /// Via the dyadic potential estimate at radius `2γ` with ratio `λ`.
    pub bound_omega2_est1: f64,
    /// Via the rearrangement estimate; the bound used for `C_sum`.
    pub bound_omega2: f64,
    /// Same chain with the corrected dyadic constant.
    pub bound_omega2_corrected: f64,
    /// `bound_omega1 · bound_omega2 + 1/(1−√λ)`.
    pub c_sum: f64,
    /// The last increments `ω(λ^kmax)`, `ω₁(λ^kmax)`, `ω₂(λ^kmax)`.
    pub last_increment_omega: f64,
    pub last_increment_omega1: f64,
    pub last_increment_omega2: f64,
    pub sum_omega1_at_most_one: bool,
    pub holds: bool,
    pub omega1_scale: f64,
    pub omega2_envelope_radii: usize,
}

fn cumulative(xs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    xs.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn omega_a_part(omega_a: &ModulusOfContinuity, gamma: f64, cfg: &ModulusPipelineConfig) -> Result<f64> {
    let dini = dini_integral(omega_a, 0.0, gamma)?.value;
    Ok(omega_a.eval(gamma) / cfg.delta_tilde + dini / ((-cfg.lambda.sqrt().ln()) * cfg.delta_tilde))
}

/// Runs the full pipeline for `ω_A` and `f`, auto-tuning γ downward until the
/// `ω_A`-controlled part of the `Σω₁` bound is at most 1, and compares the
/// truncated dyadic sums with the bound chain.
pub fn summability_check(
    omega_a: &ModulusOfContinuity,
    f: &CellFunction,
    p: &FracParams,
    cfg: &ModulusPipelineConfig,
) -> Result<SummabilityReport> {
    cfg.validate()?;
    let mut gamma = cfg.gamma;
    let mut part = omega_a_part(omega_a, gamma, cfg)?;
    let mut guard = 0;
    while part > 1.0 && guard < 200 {
        gamma *= 0.5;
        part = omega_a_part(omega_a, gamma, cfg)?;
        guard += 1;
    }
    let tuned = ModulusPipelineConfig { gamma, ..cfg.clone() };
    let o1 = build_omega1(omega_a, &tuned)?;
    let o2 = build_omega2(f, &tuned, p)?;
    let pipe = build_omega3_and_omega(&o1.omega1, &o2.omega2, &tuned)?;
    let omega_vals: Vec<f64> = (0..=cfg.kmax).map(|k| pipe.omega.eval(cfg.lambda.powi(k as i32))).collect();

    let sl = cfg.lambda.sqrt();
    let bound1 = part + 1.0 / (1.0 - sl);
    let n = f.n();
    let spec = PotentialSpec::new(0.0, vec![0.0; n], 2.0 * gamma, cfg.lambda, *p);
    let i2 = crate::lorentz::riesz_potential_i2(f, &spec)?;
    let est2 = crate::lorentz::estimate2_check(f, &spec)?;
    let c = estimate1_constant(p.s(), cfg.lambda, n);
    let cc = estimate1_constant_corrected(p.s(), cfg.lambda, n);
    let geo2 = 1.0 / (1.0 - cfg.lambda);
    let pref = gamma / cfg.delta_tilde;
    let bound2_est1 = pref * c * i2 + geo2;
    let bound2 = pref * c * est2.rhs + geo2;
    let bound2_corr = pref * cc * est2.rhs + geo2;
    let c_sum = bound1 * bound2 + 1.0 / (1.0 - sl);

    let s1 = cumulative(&pipe.omega1_dyadic);
    let s2 = cumulative(&pipe.omega2_dyadic);
    let s = cumulative(&omega_vals);
    let last = |v: &[f64]| *v.last().unwrap();
    let tol = 1.0 + 1e-12;
    let holds = last(&s1) <= bound1 * tol && last(&s2) <= bound2 * tol && last(&s) <= c_sum * tol;
    Ok(SummabilityReport {
        gamma_initial: cfg.gamma,
        gamma_tuned: gamma,
        sum_omega1_at_most_one: last(&s1) <= 1.0,
        partial_sums_omega1: s1,
        partial_sums_omega2: s2,
        partial_sums_omega: s,
        omega_a_part: part,
        bound_omega1: bound1,
        bound_omega2_est1: bound2_est1,
        bound_omega2: bound2,
        bound_omega2_corrected: bound2_corr,
        c_sum,
        last_increment_omega: last(&omega_vals),
        last_increment_omega1: last(&pipe.omega1_dyadic),
        last_increment_omega2: last(&pipe.omega2_dyadic),
        holds,
        omega1_scale: o1.scale,
        omega2_envelope_radii: o2.envelope_radii.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSample {
    pub r: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientModulus {
    pub k: ModulusOfContinuity,
    pub samples: Vec<KSample>,
    /// True when no shifted window `[a, a+L]` beat `a = 0` in the sup scan.
    pub sup_at_zero: bool,
}

const K_FLOOR: f64 = 1e-12;

/// `K = K₁ + K₂ + K₃` with `K₁(r) = sup_a ∫_a^{a+√r} ω₁(t)/t dt`,
/// `K₂(r) = √r`, `K₃(r) = sup_a ∫_a^{a+C_{n+2} r} ρ^{(2s−1)/(n+2)} g**(ρ)^{1/2} dρ/ρ`.
///
/// The sups are taken over `a = 0` and a log-spaced scan of shifts; for the
/// nonincreasing integrands here the scan only certifies that `a = 0` wins.
pub fn build_k(omega1: &ModulusOfContinuity, g: &RearrangedProfile, p: &FracParams) -> Result<GradientModulus> {
    if !p.is_supercritical() {
        return domain("K needs s > 1/2");
    }
    let beta = (2.0 * p.s() - 1.0) / (p.n() as f64 + 2.0);
    let c = unit_cylinder_measure(p.n());
    let k1_window = |a: f64, len: f64| -> Result<f64> {
        let hi = (a + len).min(1.0);
        let mut v = if a == 0.0 {
            dini_integral(omega1, 0.0, hi)?.value
        } else if a < hi {
            dini_integral(omega1, a, hi)?.value
        } else {
            0.0
        };
        // ω₁ is constant beyond 1.
        if a + len > 1.0 {
            let lo = a.max(1.0);
            v += omega1.eval(1.0) * ((a + len) / lo).ln();
        }
        Ok(v)
    };
    let k3_window = |a: f64, len: f64| g.potential_integral(beta, a, a + len, 32);
    let rs = log_grid(K_FLOOR, 1.0, 6);
    let mut samples = Vec::with_capacity(rs.len());
    let mut sup_at_zero = true;
    for &r in &rs {
        let l1 = r.sqrt();
        let l3 = c * r;
        let mut k1 = k1_window(0.0, l1)?;
        let mut k3 = k3_window(0.0, l3);
        for j in -3..=3 {
            let a1 = l1 * 10f64.powi(j);
            let v1 = k1_window(a1, l1)?;
            if v1 > k1 * (1.0 + 1e-9) {
                sup_at_zero = false;
                k1 = v1;
            }
            let a3 = l3 * 10f64.powi(j);
            let v3 = k3_window(a3, l3);
            if v3 > k3 * (1.0 + 1e-9) {
                sup_at_zero = false;
                k3 = v3;
            }
        }
        samples.push(KSample { r, k1, k2: l1, k3 });
    }
    let values: Vec<f64> = samples.iter().map(|s| s.k1 + s.k2 + s.k3).collect();
    let mut k = ModulusOfContinuity::new(ModulusRule::Table { r: rs, values, log_log: true, tail: None });
    k.check_flags(K_FLOOR, 4);
    Ok(GradientModulus { k, samples, sup_at_zero })
}

/// `g**` profile of `g = f²` for the K₃ term.
pub fn square_profile(f: &CellFunction) -> RearrangedProfile {
    decreasing_rearrangement(&f.to_sampled(true))
}
