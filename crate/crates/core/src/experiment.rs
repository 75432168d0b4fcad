//! Monte Carlo recovery experiments over measurement ratios.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::dyadic_weights;
use crate::dictionary::{estimate_profile, SpectralDictionary};
use crate::error::{Error, Result};
use crate::levels::{build_dft_levels, build_dhw_sampling_levels, build_dhw_sparsity_levels, LevelScheme};
use crate::sampling::{sample_mls, sample_vds, SamplingPattern};
use crate::scalar::Scalar;
use crate::solver::{BpdnSolver, SolverOptions, SolverStatus};
use crate::transforms::{Basis, Fourier};

/// Relative squared error at or below which a trial counts as recovered.
pub const SUCCESS_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    MlsDft,
    MlsDhw,
    InitialVds,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::MlsDft, Strategy::MlsDhw, Strategy::InitialVds];

    pub fn sparsity_basis(self) -> Basis {
        match self {
            Strategy::MlsDft => Basis::Dft,
            Strategy::MlsDhw | Strategy::InitialVds => Basis::Dhw,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Strategy::MlsDft => 1,
            Strategy::MlsDhw => 2,
            Strategy::InitialVds => 3,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::MlsDft => "mls-dft",
            Strategy::MlsDhw => "mls-dhw",
            Strategy::InitialVds => "initial-vds",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mls-dft" => Ok(Strategy::MlsDft),
            "mls-dhw" => Ok(Strategy::MlsDhw),
            "initial-vds" => Ok(Strategy::InitialVds),
            other => Err(Error::InvalidArgument(format!("unknown strategy '{other}'"))),
        }
    }
}

/// SplitMix64 finalizer folded over `parts`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// `M = floor(ratio N)`, computed without drifting below exact grid points.
pub fn budget_for_ratio(ratio: f64, n: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("ratio {ratio} outside (0, 1]")));
    }
    Ok(((ratio * n as f64) + 1e-9).floor() as usize)
}

/// Fill levels in order until `total` samples are placed.
pub fn fill_in_order(sizes: &[usize], total: usize) -> Vec<usize> {
    let mut left = total;
    sizes
        .iter()
        .map(|&s| {
            let take = left.min(s);
            left -= take;
            take
        })
        .collect()
}

/// Split `total` proportionally to `weights`, capping each level at its size
/// and handing the excess to the remaining levels. Integer parts are settled
/// by largest remainder, ties to the lower level. Any leftover after every
/// weighted level is full goes to zero-weight levels in order.
pub fn proportional_allocation(weights: &[f64], sizes: &[usize], total: usize) -> Vec<usize> {
    let r = sizes.len();
    let mut alloc = vec![0usize; r];
    let mut left = total.min(sizes.iter().sum());
    let mut open: Vec<usize> = (0..r).filter(|&t| weights[t] > 0.0 && sizes[t] > 0).collect();
    while left > 0 && !open.is_empty() {
        let wsum: f64 = open.iter().map(|&t| weights[t]).sum();
        let share: Vec<f64> = open.iter().map(|&t| weights[t] / wsum * left as f64).collect();
        // saturate any level whose share meets its remaining room
        let saturated: Vec<usize> = open
            .iter()
            .zip(&share)
            .filter(|(&t, &sh)| sh >= (sizes[t] - alloc[t]) as f64)
            .map(|(&t, _)| t)
            .collect();
        if !saturated.is_empty() {
            for &t in &saturated {
                left -= sizes[t] - alloc[t];
                alloc[t] = sizes[t];
            }
            open.retain(|t| !saturated.contains(t));
            continue;
        }
        let floors: Vec<usize> = share.iter().map(|s| s.floor() as usize).collect();
        for (&t, &f) in open.iter().zip(&floors) {
            alloc[t] += f;
        }
        let mut rest = left - floors.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..open.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = share[a] - floors[a] as f64;
            let fb = share[b] - floors[b] as f64;
            fb.partial_cmp(&fa).expect("finite shares").then(a.cmp(&b))
        });
        for i in order {
            if rest == 0 {
                break;
            }
            let t = open[i];
            if alloc[t] < sizes[t] {
                alloc[t] += 1;
                rest -= 1;
            }
        }
        left = rest;
        open.retain(|&t| alloc[t] < sizes[t]);
    }
    for t in 0..r {
        let take = left.min(sizes[t] - alloc[t]);
        alloc[t] += take;
        left -= take;
    }
    alloc
}

/// Everything needed to design patterns for each strategy at a given `N`.
#[derive(Debug, Clone)]
pub struct Designer {
    n: usize,
    dft_levels: LevelScheme,
    dhw_sampling: LevelScheme,
    dhw_weights: Vec<f64>,
}

impl Designer {
    /// `dhw_k` is the Haar-level sparsity profile driving the `mls-dhw` split.
    pub fn new(n: usize, q: u32, dhw_k: &[usize]) -> Result<Self> {
        let dft_levels = build_dft_levels(n, q)?;
        let dhw_sampling = build_dhw_sampling_levels(n)?;
        if dhw_k.len() != dhw_sampling.r() {
            return Err(Error::Dimension(format!(
                "{} sparsity levels for {} sampling levels",
                dhw_k.len(),
                dhw_sampling.r()
            )));
        }
        Ok(Self {
            n,
            dft_levels,
            dhw_sampling,
            dhw_weights: dyadic_weights(dhw_k),
        })
    }

    /// Profile the dictionary at `rho` to get the Haar-level split.
    pub fn from_dictionary<T: Scalar>(dict: &SpectralDictionary<T>, q: u32, rho: f64) -> Result<Self> {
        let t = build_dhw_sparsity_levels(dict.n_nu())?;
        let profile = estimate_profile(dict, Basis::Dhw, &t, rho)?;
        Self::new(dict.n_nu(), q, &profile.k)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dft_levels(&self) -> &LevelScheme {
        &self.dft_levels
    }

    pub fn dhw_sampling(&self) -> &LevelScheme {
        &self.dhw_sampling
    }

    /// Per-level counts for the multilevel strategies.
    pub fn level_counts(&self, strategy: Strategy, m_xi: usize) -> Option<Vec<usize>> {
        match strategy {
            Strategy::MlsDft => Some(fill_in_order(&self.dft_levels.sizes(), m_xi)),
            Strategy::MlsDhw => Some(proportional_allocation(
                &self.dhw_weights,
                &self.dhw_sampling.sizes(),
                m_xi,
            )),
            Strategy::InitialVds => None,
        }
    }

    pub fn pattern<T: Scalar>(&self, strategy: Strategy, m_xi: usize, seed: u64) -> Result<SamplingPattern<T>> {
        match strategy {
            Strategy::MlsDft => sample_mls(&self.dft_levels, &fill_in_order(&self.dft_levels.sizes(), m_xi), seed),
            Strategy::MlsDhw => {
                let m = self.level_counts(strategy, m_xi).expect("multilevel strategy");
                sample_mls(&self.dhw_sampling, &m, seed)
            }
            Strategy::InitialVds => sample_vds(self.n, m_xi, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseTransitionConfig {
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub strategies: Vec<Strategy>,
    pub q: u32,
    pub rho: f64,
    pub solver: SolverOptions,
}

/// `{0.05, 0.1, 0.2, ..., 1.0}`.
pub fn default_ratio_grid() -> Vec<f64> {
    let mut g = vec![0.05];
    g.extend((1..=10).map(|i| i as f64 / 10.0));
    g
}

impl Default for PhaseTransitionConfig {
    fn default() -> Self {
        Self {
            ratios: default_ratio_grid(),
            trials: 100,
            master_seed: 0,
            strategies: Strategy::ALL.to_vec(),
            q: 6,
            rho: 0.99,
            solver: SolverOptions::default(),
        }
    }
}

impl PhaseTransitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.ratios.is_empty() {
            return Err(Error::InvalidArgument("ratio grid is empty".into()));
        }
        if let Some(r) = self.ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::InvalidArgument(format!("ratio {r} outside (0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!("rho = {} outside [0, 1]", self.rho)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub strategy: Strategy,
    pub ratio: f64,
    pub m_xi: usize,
    pub trials: usize,
    pub successes: usize,
    /// Trials whose solver reported an unreachable tolerance.
    pub failures: usize,
}

impl PhasePoint {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub rel_sq_error: f64,
    pub status: SolverStatus,
}

impl TrialOutcome {
    pub fn success(&self) -> bool {
        self.status != SolverStatus::InfeasibleTolerance && self.rel_sq_error <= SUCCESS_THRESHOLD
    }
}

/// `x = H g` with `g_i` i.i.d. uniform on `[0, 1]`.
pub fn random_mixture<T: Scalar, R: Rng + ?Sized>(dict: &SpectralDictionary<T>, rng: &mut R) -> Vec<T> {
    let g: Vec<T> = (0..dict.n_f()).map(|_| T::of(rng.random::<f64>())).collect();
    let mut x = vec![T::zero(); dict.n_nu()];
    for (col, &gi) in dict.columns().iter().zip(&g) {
        for (xv, &h) in x.iter_mut().zip(col) {
            *xv = *xv + h * gi;
        }
    }
    x
}

pub fn relative_sq_error<T: Scalar>(x: &[T], xhat: &[T]) -> f64 {
    let err: f64 = x.iter().zip(xhat).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
    let tot: f64 = x.iter().map(|a| a.as_f64().powi(2)).sum();
    if tot == 0.0 {
        err
    } else {
        err / tot
    }
}

/// Noiseless recovery of `x` from the pattern, `τ = 0`.
pub fn run_trial<T: Scalar>(x: &[T], pattern: &SamplingPattern<T>, psi: Basis, opts: &SolverOptions) -> Result<TrialOutcome> {
    let xh = Fourier::<T>::new(x.len())?.analyze_real(x);
    let y: Vec<_> = pattern.omega.iter().map(|&i| xh[i]).collect();
    let res = BpdnSolver::new(pattern, psi)?.solve(&y, T::zero(), opts);
    Ok(TrialOutcome {
        rel_sq_error: relative_sq_error(x, &res.u),
        status: res.status,
    })
}

/// Success counts for every `(strategy, ratio)` pair, in grid order.
///
/// The mixing weights of trial `i` depend only on `(master_seed, i)`, so all
/// strategies and ratios see the same signals; the pattern seed also mixes
/// in the strategy and ratio index.
pub fn run_phase_transition<T: Scalar>(
    dict: &SpectralDictionary<T>,
    cfg: &PhaseTransitionConfig,
) -> Result<Vec<PhasePoint>> {
    cfg.validate()?;
    let n = dict.n_nu();
    let designer = Designer::from_dictionary(dict, cfg.q, cfg.rho)?;
    let signals: Vec<Vec<T>> = (0..cfg.trials)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &[0, i as u64]));
            random_mixture(dict, &mut rng)
        })
        .collect();
    let mut points = Vec::new();
    for &strategy in &cfg.strategies {
        for (ri, &ratio) in cfg.ratios.iter().enumerate() {
            let m_xi = budget_for_ratio(ratio, n)?;
            let outcomes: Vec<TrialOutcome> = signals
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let seed = derive_seed(cfg.master_seed, &[strategy.tag(), ri as u64, i as u64]);
                    let pattern = designer.pattern::<T>(strategy, m_xi, seed)?;
                    run_trial(x, &pattern, strategy.sparsity_basis(), &cfg.solver)
                })
                .collect::<Result<_>>()?;
            let point = PhasePoint {
                strategy,
                ratio,
                m_xi,
                trials: cfg.trials,
                successes: outcomes.iter().filter(|o| o.success()).count(),
                failures: outcomes
                    .iter()
                    .filter(|o| o.status == SolverStatus::InfeasibleTolerance)
                    .count(),
            };
            log::info!(
                "{strategy} ratio {ratio}: {}/{} recovered",
                point.successes,
                point.trials
            );
            points.push(point);
        }
    }
    Ok(points)
}

/// First grid ratio whose success rate reaches `level`.
pub fn crossing_ratio(points: &[PhasePoint], strategy: Strategy, level: f64) -> Option<f64> {
    let mut pts: Vec<&PhasePoint> = points.iter().filter(|p| p.strategy == strategy).collect();
    pts.sort_by(|a, b| a.ratio.partial_cmp(&b.ratio).expect("finite ratios"));
    pts.into_iter().find(|p| p.success_rate() >= level).map(|p| p.ratio)
}

/// Largest drop in success count between consecutive ratios of a strategy.
pub fn worst_drop(points: &[PhasePoint], strategy: Strategy) -> usize {
    let mut pts: Vec<&PhasePoint> = points.iter().filter(|p| p.strategy == strategy).collect();
    pts.sort_by(|a, b| a.ratio.partial_cmp(&b.ratio).expect("finite ratios"));
    pts.windows(2)
        .map(|w| w[0].successes.saturating_sub(w[1].successes))
        .max()
        .unwrap_or(0)
}

pub fn phase_csv(points: &[PhasePoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "ratio", "m_xi", "trials", "successes", "failures", "success_rate"])?;
    for p in points {
        w.write_record([
            p.strategy.to_string(),
            p.ratio.to_string(),
            p.m_xi.to_string(),
            p.trials.to_string(),
            p.successes.to_string(),
            p.failures.to_string(),
            p.success_rate().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
