//! Stage execution. Each stage writes JSON reports and CSV tables into the
//! output directory; intermediate results (the solution, the moduli) are
//! computed on demand and shared between stages.

use std::path::{Path, PathBuf};

use fracheat_core::dtn::{dtn_vs_direct, extract_dtn};
use fracheat_core::extension::io::{write_field, FieldHeader};
use fracheat_core::extension::{solve_extension, CoefficientField, GridSpec, ParabolicGrid, ScalarField};
use fracheat_core::kernels::FracParams;
use fracheat_core::lorentz::{
    decreasing_rearrangement, estimate1_check, estimate2_check, hardy_littlewood_check, lorentz_norm, CellFunction,
    PotentialSpec,
};
use fracheat_core::moduli::{
    build_k, build_omega1, build_omega2, build_omega3_and_omega, log_grid, square_profile, summability_check,
    GradientModulus, ModulusOfContinuity, ModulusPipelineConfig, SummabilityReport,
};
use fracheat_core::probe::{
    campanato_excess_profile, excess_sequence, gradient_modulus_probe, interior_modulus, interior_probe,
    normalization_factor, one_step_improvement, ExcessOptions, GradientProbeOptions, Normalization,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, ForcingSpec, Stage};
use crate::generators;
use crate::manifest::{Manifest, StageRecord, Status};

/// Solution and the factor that scales it to unit combined `L²` on `Q*_1`.
struct Solved {
    grid: ParabolicGrid,
    coeff: CoefficientField,
    field: ScalarField,
    max_residual: f64,
    used_direct: bool,
    steps: usize,
    norm: f64,
}

struct Moduli {
    summability: SummabilityReport,
    tuned: ModulusPipelineConfig,
    omega1: ModulusOfContinuity,
    omega2: ModulusOfContinuity,
    omega: ModulusOfContinuity,
    k: GradientModulus,
    /// Divisor applied to `f` (the solution's normalization, or 1).
    scale: f64,
}

/// Outcome of a run: the manifest that was written and the process status.
pub struct RunOutcome {
    pub manifest: Manifest,
    pub success: bool,
}

pub struct Runner {
    cfg: ExperimentConfig,
    out: PathBuf,
    manifest: Manifest,
    current: Vec<String>,
    solved: Option<Solved>,
    moduli: Option<Moduli>,
}

type StageResult = std::result::Result<(), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

impl Runner {
    /// `seed` overrides the probe seed of the config.
    pub fn new(mut cfg: ExperimentConfig, out: &Path, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            cfg.probe.seed = s;
        }
        let manifest = Manifest::new(&cfg.to_json(), cfg.probe.seed);
        Runner { cfg, out: out.to_path_buf(), manifest, current: Vec::new(), solved: None, moduli: None }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Runs `stages` in order; after a failure the remaining stages are
    /// skipped. The manifest is written in every case.
    pub fn run(mut self, stages: &[Stage]) -> std::io::Result<RunOutcome> {
        std::fs::create_dir_all(&self.out)?;
        let mut failed = false;
        for &stage in stages {
            if failed {
                self.manifest.stages.push(StageRecord {
                    stage: stage.name().into(),
                    status: Status::Skipped,
                    error: None,
                    outputs: Vec::new(),
                });
                continue;
            }
            self.current.clear();
            let result = match stage {
                Stage::Solve => self.stage_solve(),
                Stage::Dtn => self.stage_dtn(),
                Stage::Moduli => self.stage_moduli(),
                Stage::Lorentz => self.stage_lorentz(),
                Stage::Probe => self.stage_probe(),
                Stage::Plot => self.stage_plot(),
            };
            let (status, error) = match result {
                Ok(()) => (Status::Ok, None),
                Err(e) => {
                    failed = true;
                    (Status::Failed, Some(e))
                }
            };
            self.manifest.stages.push(StageRecord {
                stage: stage.name().into(),
                status,
                error,
                outputs: std::mem::take(&mut self.current),
            });
        }
        if failed {
            self.manifest.status = Status::Failed;
        }
        self.manifest.write(&self.out)?;
        Ok(RunOutcome { success: !failed, manifest: self.manifest })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> StageResult {
        std::fs::write(self.out.join(name), bytes).map_err(|e| format!("writing {name}: {e}"))?;
        self.manifest.record_output(name, bytes);
        self.current.push(name.into());
        Ok(())
    }

    fn params(&self) -> std::result::Result<FracParams, String> {
        generators::params(&self.cfg).map_err(err)
    }

    fn ensure_solved(&mut self) -> StageResult {
        if self.solved.is_some() {
            return Ok(());
        }
        let grid = generators::grid(&self.cfg).map_err(err)?;
        let coeff = generators::coefficients(&self.cfg, &grid).map_err(err)?;
        let problem = generators::problem(&self.cfg, &grid);
        let sol = solve_extension(&grid, &coeff, &problem, &self.cfg.solver).map_err(err)?;
        let zero = vec![0.0; self.cfg.n];
        let norm = normalization_factor(&grid, &sol.field, 0.0, &zero, 1.0, Normalization::UnitL2).map_err(err)?;
        self.solved = Some(Solved {
            grid,
            coeff,
            max_residual: sol.max_residual,
            used_direct: sol.used_direct,
            steps: sol.steps.len(),
            field: sol.field,
            norm,
        });
        Ok(())
    }

    /// `f` on the data grid, scaled by the solution's normalization when a
    /// solution exists so that moduli and probes refer to the same problem.
    fn ensure_moduli(&mut self) -> StageResult {
        if self.moduli.is_some() {
            return Ok(());
        }
        let p = self.params()?;
        let scale = self.solved.as_ref().map_or(1.0, |s| s.norm);
        let f = scaled_cells(&generators::data_cells(&self.cfg).map_err(err)?, scale)?;
        let omega_a = match &self.solved {
            Some(s) => s.coeff.omega_a.clone(),
            None => {
                let grid = generators::grid(&self.cfg).map_err(err)?;
                generators::coefficients(&self.cfg, &grid).map_err(err)?.omega_a
            }
        };
        let summability = summability_check(&omega_a, &f, &p, &self.cfg.moduli).map_err(err)?;
        let tuned = ModulusPipelineConfig { gamma: summability.gamma_tuned, ..self.cfg.moduli.clone() };
        let o1 = build_omega1(&omega_a, &tuned).map_err(err)?;
        let o2 = build_omega2(&f, &tuned, &p).map_err(err)?;
        let pipe = build_omega3_and_omega(&o1.omega1, &o2.omega2, &tuned).map_err(err)?;
        let k = build_k(&o1.omega1, &square_profile(&f), &p).map_err(err)?;
        self.moduli =
            Some(Moduli { summability, tuned, omega1: o1.omega1, omega2: o2.omega2, omega: pipe.omega, k, scale });
        Ok(())
    }

    fn stage_solve(&mut self) -> StageResult {
        self.ensure_solved()?;
        let s = self.solved.as_ref().unwrap();
        let header = FieldHeader::new(&s.grid, Some((s.coeff.lambda_ell, s.coeff.big_lambda_ell)));
        let mut buf = Vec::new();
        write_field(&mut buf, &header, &s.field).map_err(err)?;
        let osc = s.coeff.check_oscillation(&s.grid, 2000, self.cfg.probe.seed);
        let report = json!({
            "shape": s.grid.shape(),
            "steps": s.steps,
            "max_residual": s.max_residual,
            "used_direct": s.used_direct,
            "lambda_ell": s.coeff.lambda_ell,
            "big_lambda_ell": s.coeff.big_lambda_ell,
            "omega_a_oscillation": osc,
            "normalization_factor": s.norm,
        });
        self.write("solution.field", &buf)?;
        self.write("solve.json", to_json(&report).as_bytes())
    }

    fn stage_dtn(&mut self) -> StageResult {
        let p = self.params()?;
        if let Some(c) = self.cfg.dtn.clone() {
            let mut grids: Vec<GridSpec> = vec![self.cfg.grid.clone()];
            while grids.len() < c.levels {
                grids.push(grids.last().unwrap().refined());
            }
            let rep = dtn_vs_direct(&c.function, p, &grids, &c.quadrature, &c.options).map_err(err)?;
            let mut csv = String::from(
                "level,nt,nx,ny,points,sup_rel_direct,l2_rel_direct,sup_rel_closed,l2_rel_closed,sup_rel_direct_vs_closed,flagged\n",
            );
            for (i, l) in rep.levels.iter().enumerate() {
                csv.push_str(&format!(
                    "{i},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{}\n",
                    l.grid.nt,
                    l.grid.nx,
                    l.grid.ny,
                    l.compared_points,
                    l.sup_rel_direct,
                    l.l2_rel_direct,
                    l.sup_rel_closed,
                    l.l2_rel_closed,
                    l.sup_rel_direct_vs_closed,
                    l.flagged_cells
                ));
            }
            self.write("dtn.json", to_json(&rep).as_bytes())?;
            return self.write("dtn.csv", csv.as_bytes());
        }
        // Without a closed-form function, check that the extracted DtN of the
        // Neumann solution returns c_s f on the interior half-cylinder.
        self.ensure_solved()?;
        let s = self.solved.as_ref().unwrap();
        let ext = extract_dtn(&s.grid, &s.field, 3, 0.05).map_err(err)?;
        let rho = self.cfg.grid.rho;
        let (mut num, mut den, mut l2n, mut l2d, mut points) = (0.0f64, 0.0f64, 0.0, 0.0, 0usize);
        let mut csv = String::from("t,x,extracted,expected\n");
        for it in 0..s.grid.nt_nodes() {
            let t = s.grid.t()[it];
            if t.abs() >= 0.25 * rho * rho {
                continue;
            }
            for xf in 0..s.grid.x_count() {
                let x = s.grid.x_point(&s.grid.x_multi(xf));
                let idx = ext.index(it, xf);
                if x.iter().map(|v| v * v).sum::<f64>().sqrt() >= 0.5 * rho || !ext.interior[idx] {
                    continue;
                }
                let want = ext.c_s * generators::data_value(&self.cfg.f, self.cfg.s, t, &x);
                let got = ext.values[idx];
                num = num.max((got - want).abs());
                den = den.max(want.abs());
                l2n += (got - want) * (got - want);
                l2d += want * want;
                points += 1;
                if self.cfg.n == 1 {
                    csv.push_str(&format!("{t:e},{:e},{got:e},{want:e}\n", x[0]));
                }
            }
        }
        let rel = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
        let report = json!({
            "c_s": ext.c_s,
            "compared_points": points,
            "sup_rel": rel(num, den),
            "l2_rel": rel(l2n.sqrt(), l2d.sqrt()),
            "flagged_cells": ext.flagged_count(),
            "max_interior_residual": ext.max_interior_residual(),
        });
        self.write("dtn_neumann.json", to_json(&report).as_bytes())?;
        if self.cfg.n == 1 {
            self.write("dtn_neumann.csv", csv.as_bytes())?;
        }
        Ok(())
    }

    fn stage_moduli(&mut self) -> StageResult {
        self.ensure_moduli()?;
        let m = self.moduli.as_ref().unwrap();
        let mut csv = String::from("r,omega1,omega2,omega,K\n");
        for r in log_grid(1e-8, 1.0, 8) {
            csv.push_str(&format!(
                "{r:e},{:e},{:e},{:e},{:e}\n",
                m.omega1.eval(r),
                m.omega2.eval(r),
                m.omega.eval(r),
                m.k.k.eval(r)
            ));
        }
        let report = json!({
            "data_scale": m.scale,
            "tuned": m.tuned,
            "summability": m.summability,
            "k_sup_at_zero": m.k.sup_at_zero,
            "k_flags": {
                "dini": m.k.k.is_dini,
                "concave": m.k.k.is_concave,
                "half_decreasing": m.k.k.is_half_decreasing,
            },
            "k_samples": m.k.samples,
        });
        self.write("moduli.json", to_json(&report).as_bytes())?;
        self.write("moduli.csv", csv.as_bytes())
    }

    fn stage_lorentz(&mut self) -> StageResult {
        let p = self.params()?;
        let f = generators::data_cells(&self.cfg).map_err(err)?;
        let exponent = (self.cfg.n as f64 + 2.0) / (2.0 * self.cfg.s - 1.0);
        let sampled = f.to_sampled(false);
        let norm = lorentz_norm(&sampled, exponent).map_err(err)?;
        let center = vec![0.0; self.cfg.n];
        let radius = 0.5 * self.cfg.grid.rho.min(1.0);
        let spec = PotentialSpec::new(0.0, center.clone(), radius, 0.5, p);
        let e1 = estimate1_check(&f, &spec).map_err(err)?;
        let e2 = estimate2_check(&f, &spec).map_err(err)?;
        let hl = hardy_littlewood_check(&f, 0.0, &center, radius).map_err(err)?;
        let profile = decreasing_rearrangement(&sampled);
        let mut csv = String::from("rho,g_star,g_double_star\n");
        for &b in profile.breakpoints().iter().skip(1) {
            let g2 = profile.double_star(b).map_err(err)?;
            csv.push_str(&format!("{b:e},{:e},{g2:e}\n", profile.g_star(0.999_999 * b)));
        }
        let report = json!({
            "exponent": exponent,
            "lorentz_norm": norm,
            "cells": f.cell_count(),
            "estimate1": e1,
            "estimate2": e2,
            "hardy_littlewood": hl,
        });
        self.write("lorentz.json", to_json(&report).as_bytes())?;
        self.write("rearrangement.csv", csv.as_bytes())
    }

    fn stage_probe(&mut self) -> StageResult {
        self.ensure_solved()?;
        self.ensure_moduli()?;
        let s = self.solved.as_ref().unwrap();
        let m = self.moduli.as_ref().unwrap();
        let pc = self.cfg.probe.clone();
        let n = self.cfg.n;
        let u = s.field.map(|v| v / s.norm);
        let grid = &s.grid;
        let x0 = vec![0.0; n];
        let mut notes = Vec::new();
        if self.cfg.forcing != ForcingSpec::Zero {
            notes.push("divergence forcing is present; the gradient modulus K does not account for it".to_string());
        }

        let opts = ExcessOptions {
            lambda: pc.lambda,
            kmax: pc.kmax,
            scale: 1.0,
            min_cells: pc.min_cells,
            normalization: Normalization::None,
        };
        let seq = excess_sequence(grid, &u, 0.0, &x0, &opts, &m.omega).map_err(err)?;
        let one_step = one_step_improvement(grid, &u, 0.0, &x0, pc.min_cells).map_err(err)?;
        let k = &m.k.k;
        let c1 = campanato_excess_profile(grid, &u, 0.0, &x0, &pc.campanato_radii, k).map_err(err)?;
        let c2 = campanato_excess_profile(grid, &u, 0.0, &pc.second_center, &pc.campanato_radii, k).map_err(err)?;
        let (gap, gap_dist, gap_ratio) = c1.gradient_gap(&c2, k);

        let mut gopts = GradientProbeOptions::new(n, pc.seed);
        gopts.pairs = pc.pairs;
        gopts.time_pairs = pc.time_pairs;
        gopts.radius = pc.radius;
        gopts.falsify_exponent = pc.falsify_exponent;
        let modulus = gradient_modulus_probe(grid, &u, k, &gopts).map_err(err)?;

        let mut center = x0.clone();
        center.push(pc.interior_height);
        let omega_a = &s.coeff.omega_a;
        // First pass only to read the gradient of the initial fit, which sets
        // the size of the forcing (I − B)∇ℓ in the interior modulus.
        let flat = ModulusOfContinuity::constant(1.0);
        let pre = interior_probe(grid, &u, 0.0, &center, pc.interior_side, pc.interior_lambda, 0, pc.min_cells, &flat)
            .map_err(err)?;
        let slope = pre.entries.first().map_or(0.0, |e| e.b.iter().map(|v| v * v).sum::<f64>().sqrt());
        let psi = interior_modulus(omega_a, pc.interior_height, slope, &m.tuned).map_err(err)?;
        let interior = interior_probe(
            grid,
            &u,
            0.0,
            &center,
            pc.interior_side,
            pc.interior_lambda,
            pc.interior_kmax,
            pc.min_cells,
            &psi.omega,
        )
        .map_err(err)?;

        let summary = json!({
            "normalization_factor": s.norm,
            "gamma_tuned": m.tuned.gamma,
            "notes": notes,
            "excess": {
                "lambda": seq.lambda,
                "kmax_requested": seq.kmax_requested,
                "resolved": seq.entries.len(),
                "max_ratio": seq.max_ratio,
                "drift_a": seq.drift_a,
                "drift_b": seq.drift_b,
                "diagnostic": seq.diagnostic,
            },
            "one_step": one_step,
            "campanato": {
                "center": { "x0": c1.x0, "max_ratio": c1.max_ratio, "limit_fit": c1.limit_fit, "gradient_drift_total": c1.gradient_drift_total },
                "second": { "x0": c2.x0, "max_ratio": c2.max_ratio, "limit_fit": c2.limit_fit, "gradient_drift_total": c2.gradient_drift_total },
                "gradient_gap": gap,
                "distance": gap_dist,
                "gap_over_k": gap_ratio,
            },
            "gradient_modulus": {
                "seed": modulus.seed,
                "requested_pairs": modulus.requested_pairs,
                "case_i": modulus.case_i,
                "case_ii": modulus.case_ii,
                "time": modulus.time,
                "case_ii_worst_height": modulus.case_ii_worst_height,
                "case_ii_geometry_holds": modulus.case_ii_geometry_holds,
            },
            "interior": {
                "center": interior.center,
                "side": interior.side,
                "normalization_factor": interior.normalization_factor,
                "max_ratio": interior.max_ratio,
                "alpha_empirical": interior.alpha_empirical,
                "forcing_slope": slope,
                "drift_a": interior.drift_a,
                "drift_b": interior.drift_b,
                "diagnostic": interior.diagnostic,
            },
        });
        self.write("probe.json", to_json(&summary).as_bytes())?;
        self.write("excess.csv", seq.to_csv().as_bytes())?;
        self.write("campanato_center.csv", c1.to_csv().as_bytes())?;
        self.write("campanato_second.csv", c2.to_csv().as_bytes())?;
        self.write("gradient_pairs.csv", modulus.to_csv().as_bytes())?;
        self.write("interior.csv", interior.to_csv().as_bytes())
    }

    /// Converts every CSV table in the output directory into a
    /// whitespace-separated `.dat` file with a commented header.
    fn stage_plot(&mut self) -> StageResult {
        let mut names: Vec<String> = std::fs::read_dir(&self.out)
            .map_err(err)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        for name in names {
            let text = std::fs::read_to_string(self.out.join(&name)).map_err(err)?;
            let mut dat = String::new();
            for (i, line) in text.lines().enumerate() {
                if i == 0 {
                    dat.push_str("# ");
                }
                dat.push_str(&line.replace(',', " "));
                dat.push('\n');
            }
            let stem = name.trim_end_matches(".csv");
            self.write(&format!("{stem}.dat"), dat.as_bytes())?;
        }
        Ok(())
    }
}

fn scaled_cells(f: &CellFunction, scale: f64) -> std::result::Result<CellFunction, String> {
    let values = f.values().iter().map(|v| v / scale).collect();
    CellFunction::new(f.t_edges().to_vec(), f.x_edges().to_vec(), values).map_err(err)
}
