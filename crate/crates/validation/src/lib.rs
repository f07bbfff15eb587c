//! Plumbing for the acceptance suite: verdict lines, the bundled experiment
//! instances and grid refinement of a whole configuration.
//!
//! The suite itself lives in `tests/acceptance.rs` and runs with
//! `cargo test -p fracheat-validation --test acceptance`. Criterion numbers
//! given as arguments after `--` restrict the run to those criteria.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fracheat_cli::ExperimentConfig;

/// Outcome of one acceptance criterion: a list of named sub-checks plus
/// free-form measurements that are reported but not gated on.
pub struct Verdict {
    id: u32,
    title: String,
    checks: Vec<(String, bool)>,
    notes: Vec<String>,
}

impl Verdict {
    pub fn new(id: u32, title: &str) -> Self {
        Verdict { id, title: title.into(), checks: Vec::new(), notes: Vec::new() }
    }

    /// Records a gated sub-check and returns its outcome.
    pub fn check(&mut self, name: impl Into<String>, ok: bool) -> bool {
        self.checks.push((name.into(), ok));
        ok
    }

    /// Records an ungated measurement.
    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// True when every sub-check passed; a criterion without checks fails.
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|(_, ok)| *ok)
    }

    /// One `PASS`/`FAIL` line followed by indented sub-check and note lines.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let failed = self.checks.iter().filter(|(_, ok)| !ok).count();
        let head = if self.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(
            s,
            "{head} criterion {}: {} ({}/{} checks)",
            self.id,
            self.title,
            self.checks.len() - failed,
            self.checks.len()
        );
        for (name, ok) in &self.checks {
            let _ = writeln!(s, "    [{}] {name}", if *ok { "ok" } else { "failed" });
        }
        for n in &self.notes {
            let _ = writeln!(s, "    note: {n}");
        }
        s
    }
}

/// Runs `f` and returns its value with the elapsed wall time in seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

/// Directory holding the configurations shipped with the CLI.
pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("..").join("cli").join("configs")
}

pub fn bundled_config(name: &str) -> ExperimentConfig {
    let path = configs_dir().join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The same experiment with every solver cell count doubled. The data grid
/// is left alone, so `f` stays the same function.
pub fn refined(cfg: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig { grid: cfg.grid.refined(), ..cfg.clone() }
}

/// `|b/a − 1|`, the relative change from `a` to `b`.
pub fn relative_change(a: f64, b: f64) -> f64 {
    (b / a - 1.0).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_needs_every_check() {
        let mut v = Verdict::new(3, "demo");
        assert!(!v.passed());
        v.check("a", true);
        assert!(v.passed());
        v.check("b", false);
        v.note("measured 1");
        assert!(!v.passed());
        let text = v.render();
        assert!(text.starts_with("FAIL criterion 3: demo (1/2 checks)\n"));
        assert!(text.contains("[failed] b") && text.contains("note: measured 1"));
    }

    #[test]
    fn bundled_configs_load_and_refine() {
        let cfg = bundled_config("log-dini-critical.json");
        let r = refined(&cfg);
        assert_eq!((r.grid.nt, r.grid.nx, r.grid.ny), (2 * cfg.grid.nt, 2 * cfg.grid.nx, 2 * cfg.grid.ny));
        assert_eq!(r.data_grid, cfg.data_grid);
    }
}
