//! Command-line harness: level and coherence inspection, dictionary
//! profiling, pattern generation, recovery curves and end-to-end
//! reconstruction. Every artifact is CSV or JSON and depends only on the
//! configuration and the master seed.

pub mod config;
pub mod error;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mlfti::coherence::local_coherence;
use mlfti::dictionary::{estimate_profile, load_dictionary, synth_dictionary, LocalSparsityProfile, SpectralDictionary};
use mlfti::experiment::{
    budget_for_ratio, crossing_ratio, derive_seed, phase_csv, run_phase_transition, Designer, PhaseTransitionConfig,
    Strategy,
};
use mlfti::levels::{
    build_dft_levels, build_dhw_sampling_levels, build_dhw_sparsity_levels, validate_scheme, LevelScheme,
};
use mlfti::recon::{acquire, error_report, reconstruct, synthetic_volume, CiFtiMeasurements, NoiseModel, ReconOptions};
use mlfti::solver::SolverStatus;
use mlfti::transforms::Basis;
use mlfti::volume::HsVolume;
use serde::Serialize;

pub use config::{ExperimentConfig, OUT_DIR_ENV};
pub use error::{CliError, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER};

/// Seed of the synthetic dictionary when none is loaded from a file.
const DICTIONARY_SEED_TAG: u64 = 0xD1C7;
const VOLUME_SEED_TAG: u64 = 0x5EED;
const PATTERN_SEED_TAG: u64 = 0x0A7;
const NOISE_SEED_TAG: u64 = 0x4015E;

#[derive(Debug, Parser)]
#[command(name = "mlfti", version, about = "Multilevel coded illumination for Fourier transform interferometry")]
pub struct Cli {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: config, then $MLFTI_OUT_DIR, then ./out).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the sparsity and sampling level schemes.
    Levels(Overrides),
    /// Local coherence between sampling and sparsity levels.
    Coherence(Overrides),
    /// Per-level sparsity ratios of a dictionary.
    Profile(Overrides),
    /// Draw one illumination coding pattern.
    Sample(Overrides),
    /// Recovery probability against measurement ratio.
    PhaseTransition(Overrides),
    /// Acquire and reconstruct a volume.
    Reconstruct(Overrides),
}

/// Flags mirroring the configuration fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long = "n-xi")]
    pub n_xi: Option<usize>,
    #[arg(long = "n-x")]
    pub n_x: Option<usize>,
    #[arg(long = "n-y")]
    pub n_y: Option<usize>,
    #[arg(long)]
    pub q: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub bases: Option<Vec<Basis>>,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<Strategy>>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long = "eps-nyq")]
    pub eps_nyq: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long = "n-f")]
    pub n_f: Option<usize>,
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    #[arg(long)]
    pub volume: Option<PathBuf>,
    #[arg(long)]
    pub measurements: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub bands: Option<Vec<usize>>,
    #[arg(long = "design-rho")]
    pub design_rho: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    #[arg(long = "opt-tol")]
    pub opt_tol: Option<f64>,
    #[arg(long = "feas-tol")]
    pub feas_tol: Option<f64>,
}

impl Overrides {
    fn apply(self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { cfg.$field = v; })* };
        }
        set!(n_xi, n_x, n_y, q, rho, bases, ratios, ratio, trials, strategies, strategy, eps_nyq, c, n_f, bands, design_rho);
        if self.dictionary.is_some() {
            cfg.dictionary = self.dictionary;
        }
        if self.volume.is_some() {
            cfg.volume = self.volume;
        }
        if self.measurements.is_some() {
            cfg.measurements = self.measurements;
        }
        if let Some(v) = self.max_iter {
            cfg.solver.max_iter = v;
        }
        if let Some(v) = self.opt_tol {
            cfg.solver.opt_tol = v;
        }
        if let Some(v) = self.feas_tol {
            cfg.solver.feas_tol = v;
        }
    }
}

/// Parse `args`, run the command and report the exit status.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mlfti: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let (overrides, cmd): (Overrides, fn(&ExperimentConfig, &Path) -> Result<(), CliError>) = match cli.command {
        Command::Levels(o) => (o, cmd_levels),
        Command::Coherence(o) => (o, cmd_coherence),
        Command::Profile(o) => (o, cmd_profile),
        Command::Sample(o) => (o, cmd_sample),
        Command::PhaseTransition(o) => (o, cmd_phase_transition),
        Command::Reconstruct(o) => (o, cmd_reconstruct),
    };
    overrides.apply(&mut cfg);
    cfg.validate()?;
    let out = cfg.resolve_out_dir(cli.out_dir);
    fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
    cmd(&cfg, &out)
}

fn write(out: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_json<S: Serialize>(out: &Path, name: &str, value: &S) -> Result<(), CliError> {
    write(out, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn sparsity_levels(basis: Basis, n: usize, q: u32) -> mlfti::Result<LevelScheme> {
    match basis {
        Basis::Dft => build_dft_levels(n, q),
        Basis::Dhw => build_dhw_sparsity_levels(n),
    }
}

fn sampling_levels(basis: Basis, n: usize, q: u32) -> mlfti::Result<LevelScheme> {
    match basis {
        Basis::Dft => build_dft_levels(n, q),
        Basis::Dhw => build_dhw_sampling_levels(n),
    }
}

fn dictionary(cfg: &ExperimentConfig) -> Result<SpectralDictionary<f64>, CliError> {
    match &cfg.dictionary {
        Some(path) => {
            let (dict, report) = load_dictionary(path, cfg.n_xi)?;
            if report.clamped > 0 {
                log::warn!("clamped {} negative dictionary values to zero", report.clamped);
            }
            Ok(dict)
        }
        None => Ok(synth_dictionary(cfg.n_f, cfg.n_xi, derive_seed(cfg.seed, &[DICTIONARY_SEED_TAG]))?),
    }
}

fn cmd_levels(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let schemes = [
        ("dft", build_dft_levels(cfg.n_xi, cfg.q)?),
        ("dhw-sparsity", build_dhw_sparsity_levels(cfg.n_xi)?),
        ("dhw-sampling", build_dhw_sampling_levels(cfg.n_xi)?),
    ];
    let mut rows = Vec::new();
    for (name, scheme) in &schemes {
        let violations = validate_scheme(scheme);
        if let Some(v) = violations.first() {
            return Err(CliError::Config(format!("{name} levels: {v}")));
        }
        write(out, &format!("levels_{name}.json"), &(scheme.to_json()? + "\n"))?;
        for (l, lv) in scheme.levels().iter().enumerate() {
            rows.extend(lv.iter().map(|i| vec![name.to_string(), (l + 1).to_string(), i.to_string()]));
        }
    }
    write(out, "levels.csv", &csv_string(&["scheme", "level", "index"], rows)?)
}

fn cmd_coherence(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    for &psi in &cfg.bases {
        let w = sampling_levels(psi, cfg.n_xi, cfg.q)?;
        let t = sparsity_levels(psi, cfg.n_xi, cfg.q)?;
        let coh = local_coherence::<f64>(Basis::Dft, psi, &w, &t)?;
        write(out, &format!("coherence_{psi}.json"), &(coh.to_json()? + "\n"))?;
        let rows = (0..coh.r()).flat_map(|ti| {
            let coh = &coh;
            (0..coh.values[ti].len())
                .map(move |l| vec![(ti + 1).to_string(), (l + 1).to_string(), coh.get(ti, l).to_string()])
        });
        write(out, &format!("coherence_{psi}.csv"), &csv_string(&["sampling_level", "sparsity_level", "mu"], rows)?)?;
    }
    Ok(())
}

fn cmd_profile(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let dict = dictionary(cfg)?;
    let mut profiles: Vec<LocalSparsityProfile> = Vec::new();
    for &basis in &cfg.bases {
        let t = sparsity_levels(basis, cfg.n_xi, cfg.q)?;
        for &rho in &cfg.rho {
            profiles.push(estimate_profile(&dict, basis, &t, rho)?);
        }
    }
    let rows = profiles.iter().flat_map(|p| {
        let ratios = p.ratios();
        (0..p.k.len()).map(move |l| {
            vec![
                p.basis.to_string(),
                p.rho.to_string(),
                (l + 1).to_string(),
                p.level_sizes[l].to_string(),
                p.k[l].to_string(),
                ratios[l].to_string(),
            ]
        })
    });
    write(out, "profile.csv", &csv_string(&["basis", "rho", "level", "size", "k", "ratio"], rows)?)?;
    write_json(out, "profile.json", &profiles)
}

fn designer(cfg: &ExperimentConfig, dict: &SpectralDictionary<f64>) -> Result<Designer, CliError> {
    Ok(Designer::from_dictionary(dict, cfg.q, cfg.design_rho)?)
}

fn cmd_sample(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let dict = dictionary(cfg)?;
    let d = designer(cfg, &dict)?;
    let m_xi = budget_for_ratio(cfg.ratio, cfg.n_xi)?;
    let pattern = d.pattern::<f64>(cfg.strategy, m_xi, derive_seed(cfg.seed, &[PATTERN_SEED_TAG]))?;
    write(out, "pattern.json", &(pattern.to_json()? + "\n"))?;
    write(out, "mask.csv", &pattern.mask_csv())
}

#[derive(Serialize)]
struct PhaseSummary<'a> {
    n_xi: usize,
    trials: usize,
    seed: u64,
    crossings: Vec<(Strategy, Option<f64>)>,
    points: &'a [mlfti::experiment::PhasePoint],
}

fn cmd_phase_transition(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let dict = dictionary(cfg)?;
    let pt = PhaseTransitionConfig {
        ratios: cfg.ratios.clone(),
        trials: cfg.trials,
        master_seed: cfg.seed,
        strategies: cfg.strategies.clone(),
        q: cfg.q,
        rho: cfg.design_rho,
        solver: cfg.solver,
    };
    let points = run_phase_transition(&dict, &pt)?;
    write(out, "phase_transition.csv", &phase_csv(&points)?)?;
    let summary = PhaseSummary {
        n_xi: cfg.n_xi,
        trials: cfg.trials,
        seed: cfg.seed,
        crossings: cfg.strategies.iter().map(|&s| (s, crossing_ratio(&points, s, 0.95))).collect(),
        points: &points,
    };
    write_json(out, "phase_transition.json", &summary)
}

fn cmd_reconstruct(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let dict = dictionary(cfg)?;
    let psi = cfg.strategy.sparsity_basis();
    let truth: Option<HsVolume<f64>>;
    let meas = match &cfg.measurements {
        Some(path) => {
            truth = cfg.volume.as_deref().map(HsVolume::read).transpose()?;
            CiFtiMeasurements::<f64>::read(path)?
        }
        None => {
            let x = match &cfg.volume {
                Some(path) => HsVolume::read(path)?,
                None => synthetic_volume(&dict, cfg.n_x, cfg.n_y, derive_seed(cfg.seed, &[VOLUME_SEED_TAG]))?,
            };
            let d = designer(cfg, &dict)?;
            let m_xi = budget_for_ratio(cfg.ratio, x.n_xi())?;
            let pattern = d.pattern::<f64>(cfg.strategy, m_xi, derive_seed(cfg.seed, &[PATTERN_SEED_TAG]))?;
            let noise = if cfg.eps_nyq > 0.0 {
                NoiseModel::bounded(cfg.eps_nyq, derive_seed(cfg.seed, &[NOISE_SEED_TAG]))
            } else {
                NoiseModel::none()
            };
            let meas = acquire(&x, &pattern, &noise)?;
            meas.write(&out.join("measurements.bin"))?;
            truth = Some(x);
            meas
        }
    };
    let t = sparsity_levels(psi, meas.pattern.n, cfg.q)?;
    let profile = estimate_profile(&dict, psi, &t, cfg.design_rho)?;
    let opts = ReconOptions {
        psi,
        approach: meas.pattern.approach(),
        c: cfg.c,
        k_total: profile.total().max(1),
        solver: cfg.solver,
    };
    let (xhat, mut report) = reconstruct(&meas, &opts)?;
    if let Some(x) = &truth {
        report.errors = Some(error_report(x, &xhat, &profile.k, &t, psi, &report.params, meas.eps_nyq)?);
    }
    xhat.write(&out.join("xhat.bin"))?;
    let bands = if cfg.bands.is_empty() { vec![xhat.n_xi() / 2] } else { cfg.bands.clone() };
    for b in bands {
        write(out, &format!("band_{b:04}.csv"), &xhat.band_map_csv(b)?)?;
    }
    write(out, "mask.csv", &meas.pattern.mask_csv())?;
    write(out, "report.json", &(report.to_json()? + "\n"))?;
    let unconverged = report.statuses.len() - report.count(SolverStatus::Converged);
    if unconverged > 0 {
        return Err(CliError::Solver(format!(
            "{unconverged} of {} pixels did not converge",
            report.statuses.len()
        )));
    }
    Ok(())
}
