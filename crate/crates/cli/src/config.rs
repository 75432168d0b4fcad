use std::fs;
use std::path::{Path, PathBuf};

use mlfti::experiment::{default_ratio_grid, Strategy};
use mlfti::solver::SolverOptions;
use mlfti::transforms::Basis;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MLFTI_OUT_DIR";

/// Every tunable of every command. Fields absent from a config file take
/// their defaults; command-line flags override both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_xi: usize,
    pub n_x: usize,
    pub n_y: usize,
    /// Fourier levels: `2^q` bands.
    pub q: u32,
    pub rho: Vec<f64>,
    pub bases: Vec<Basis>,
    /// Phase-transition grid.
    pub ratios: Vec<f64>,
    /// Single ratio for `sample` and `reconstruct`.
    pub ratio: f64,
    pub trials: usize,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    pub strategy: Strategy,
    pub eps_nyq: f64,
    pub c: f64,
    /// Fluorochromes in the synthetic dictionary.
    pub n_f: usize,
    pub dictionary: Option<PathBuf>,
    pub volume: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    /// Bands exported as spatial maps; empty means the middle band.
    pub bands: Vec<usize>,
    /// Sparsity level used when profiling for designs and error reports.
    pub design_rho: f64,
    pub out_dir: Option<PathBuf>,
    pub solver: SolverOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_xi: 1024,
            n_x: 8,
            n_y: 8,
            q: 6,
            rho: vec![0.93, 0.96, 0.99],
            bases: vec![Basis::Dft, Basis::Dhw],
            ratios: default_ratio_grid(),
            ratio: 0.1,
            trials: 100,
            seed: 0,
            strategies: Strategy::ALL.to_vec(),
            strategy: Strategy::MlsDft,
            eps_nyq: 0.0,
            c: 1.0,
            n_f: 16,
            dictionary: None,
            volume: None,
            measurements: None,
            bands: Vec::new(),
            design_rho: 0.99,
            out_dir: None,
            solver: SolverOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.n_xi < 2 || !self.n_xi.is_power_of_two() {
            return bad(format!("n_xi = {} must be a power of two >= 2", self.n_xi));
        }
        if self.n_x == 0 || self.n_y == 0 {
            return bad("n_x and n_y must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if let Some(r) = self.ratios.iter().chain([&self.ratio]).find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return bad(format!("ratio {r} outside (0, 1]"));
        }
        if let Some(r) = self.rho.iter().chain([&self.design_rho]).find(|&&r| !(0.0..=1.0).contains(&r)) {
            return bad(format!("rho {r} outside [0, 1]"));
        }
        if !(self.eps_nyq >= 0.0 && self.eps_nyq.is_finite()) {
            return bad(format!("eps_nyq = {} must be >= 0", self.eps_nyq));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("c = {} must be positive", self.c));
        }
        if self.n_f == 0 {
            return bad("n_f must be at least 1".into());
        }
        if self.solver.max_iter == 0 {
            return bad("solver.max_iter must be at least 1".into());
        }
        if let Some(b) = self.bands.iter().find(|&&b| b >= self.n_xi) {
            return bad(format!("band {b} out of range for {} bands", self.n_xi));
        }
        for path in [&self.dictionary, &self.volume, &self.measurements].into_iter().flatten() {
            if !path.exists() {
                return bad(format!("{} does not exist", path.display()));
            }
        }
        Ok(())
    }

    /// Flag, then config, then environment, then `./out`.
    pub fn resolve_out_dir(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}
