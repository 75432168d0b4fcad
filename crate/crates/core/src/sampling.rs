//! Illumination coding patterns: which OPD samples are acquired.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with the pattern seed,
//! which produces the same stream on every platform.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coherence::Approach;
use crate::error::{Error, Result};
use crate::levels::LevelScheme;
use crate::scalar::Scalar;
use crate::transforms::IndexConvention;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Mls,
    Vds,
    Nyquist,
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::Mls => "mls",
            PatternKind::Vds => "vds",
            PatternKind::Nyquist => "nyquist",
        })
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mls" => Ok(PatternKind::Mls),
            "vds" => Ok(PatternKind::Vds),
            "nyquist" => Ok(PatternKind::Nyquist),
            other => Err(Error::InvalidArgument(format!("unknown pattern kind '{other}'"))),
        }
    }
}

/// Selected storage indices `Ω` with their weights `D_ii`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPattern<T> {
    pub kind: PatternKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    /// Storage indices; repeated entries are allowed for VDS only.
    pub omega: Vec<usize>,
    /// `D_ii`, aligned with `omega`.
    pub weights: Vec<T>,
    /// Per-level counts (MLS only).
    pub m: Vec<usize>,
}

impl<T: Scalar> SamplingPattern<T> {
    /// `M_xi`, counting repeats.
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// The approach whose weights and constants match this pattern.
    pub fn approach(&self) -> Approach {
        match self.kind {
            PatternKind::Vds => Approach::InitialVds,
            PatternKind::Mls | PatternKind::Nyquist => Approach::MlsThisWork,
        }
    }

    /// 0/1 indicator over the `N` storage indices.
    pub fn mask(&self) -> Vec<u8> {
        let mut mask = vec![0u8; self.n];
        for &i in &self.omega {
            mask[i] = 1;
        }
        mask
    }

    /// Mask as a single CSV row.
    pub fn mask_csv(&self) -> String {
        let cells: Vec<String> = self.mask().iter().map(u8::to_string).collect();
        cells.join(",") + "\n"
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: SamplingPattern<T> = serde_json::from_str(s)?;
        p.check()?;
        Ok(p)
    }

    /// Structural checks shared by every consumer of a pattern.
    pub fn check(&self) -> Result<()> {
        if self.weights.len() != self.omega.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} samples",
                self.weights.len(),
                self.omega.len()
            )));
        }
        if let Some(&i) = self.omega.iter().find(|&&i| i >= self.n) {
            return Err(Error::InvalidArgument(format!("sample index {i} >= N = {}", self.n)));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > T::zero())) {
            return Err(Error::InvalidArgument("weights must be finite and positive".into()));
        }
        if self.kind != PatternKind::Vds {
            let mut seen = vec![false; self.n];
            for &i in &self.omega {
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!(
                        "index {i} repeated in a {} pattern",
                        self.kind
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Every index once, unit weights.
pub fn sample_nyquist<T: Scalar>(n: usize) -> Result<SamplingPattern<T>> {
    IndexConvention::new(n)?;
    Ok(SamplingPattern {
        kind: PatternKind::Nyquist,
        n,
        seed: 0,
        omega: (0..n).collect(),
        weights: vec![T::one(); n],
        m: Vec::new(),
    })
}

/// `(W, m)` multilevel sampling: `m_t` distinct indices drawn uniformly from
/// each level `W_t`, unit weights. `omega` is sorted.
pub fn sample_mls<T: Scalar>(w: &LevelScheme, m: &[usize], seed: u64) -> Result<SamplingPattern<T>> {
    if m.len() != w.r() {
        return Err(Error::Dimension(format!("{} counts for {} levels", m.len(), w.r())));
    }
    for (t, (&mt, lv)) in m.iter().zip(w.levels()).enumerate() {
        if mt > lv.len() {
            return Err(Error::SamplesExceedLevel {
                level: t,
                m: mt,
                size: lv.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega = Vec::with_capacity(m.iter().sum());
    for (&mt, lv) in m.iter().zip(w.levels()) {
        omega.extend(rand::seq::index::sample(&mut rng, lv.len(), mt).iter().map(|i| lv[i]));
    }
    omega.sort_unstable();
    Ok(SamplingPattern {
        kind: PatternKind::Mls,
        n: w.n(),
        seed,
        weights: vec![T::one(); omega.len()],
        omega,
        m: m.to_vec(),
    })
}

/// `p(s) ∝ min{1, |f(s)|^-1}` with the DC term at weight 1.
pub fn vds_pmf<T: Scalar>(n: usize) -> Result<Vec<T>> {
    let conv = IndexConvention::new(n)?;
    let raw: Vec<f64> = (0..n)
        .map(|s| match conv.frequency(s).unsigned_abs() {
            0 => 1.0,
            f => 1.0 / f as f64,
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| T::of(v / total)).collect())
}

/// `M_xi` i.i.d. draws from [`vds_pmf`], repeats kept, `D_ii = p(Ω_i)^{-1/2}`.
pub fn sample_vds<T: Scalar>(n: usize, m_xi: usize, seed: u64) -> Result<SamplingPattern<T>> {
    let pmf = vds_pmf::<f64>(n)?;
    let dist = WeightedIndex::new(&pmf).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega: Vec<usize> = (0..m_xi).map(|_| dist.sample(&mut rng)).collect();
    let weights = omega.iter().map(|&i| T::of(pmf[i].powf(-0.5))).collect();
    Ok(SamplingPattern {
        kind: PatternKind::Vds,
        n,
        seed,
        omega,
        weights,
        m: Vec::new(),
    })
}

/// `min(N, ceil(C K ln^3 K ln^2 N))`.
pub fn vds_budget(k: usize, n: usize, c: f64) -> Result<usize> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("K = {k} < 2")));
    }
    let (kf, nf) = (k as f64, n as f64);
    let v = (c * kf * kf.ln().powi(3) * nf.ln().powi(2)).ceil();
    Ok((v as usize).min(n))
}
