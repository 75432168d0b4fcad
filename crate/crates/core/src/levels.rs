//! Sparsity and sampling level schemes.
//!
//! A scheme partitions the storage indices `0..N` into `r` ordered levels.
//! Two families are supported: the dyadic Haar levels (with dyadic frequency
//! annuli as sampling levels) and equal-size symmetric Fourier bands, which
//! serve as both sparsity and sampling levels.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::{check_length, IndexConvention};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    DhwSparsity,
    DhwSampling,
    DftSymmetric,
}

/// An ordered partition of `0..N` into levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelScheme {
    #[serde(rename = "N")]
    n: usize,
    r: usize,
    kind: SchemeKind,
    /// `l_0..=l_r` for sparsity levels; outer frequency radii for the Haar
    /// sampling annuli; half-band edges for the Fourier bands.
    boundaries: Vec<usize>,
    /// Sorted storage indices of each level.
    levels: Vec<Vec<usize>>,
}

impl LevelScheme {
    /// Assemble a scheme without checking it. Use [`validate_scheme`] to
    /// inspect the result.
    pub fn from_parts(
        n: usize,
        kind: SchemeKind,
        boundaries: Vec<usize>,
        levels: Vec<Vec<usize>>,
    ) -> Self {
        Self {
            n,
            r: levels.len(),
            kind,
            boundaries,
            levels,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &[usize] {
        &self.levels[l]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    /// Level index of every storage index (`usize::MAX` where unassigned).
    pub fn level_map(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.n];
        for (l, idx) in self.levels.iter().enumerate() {
            for &i in idx {
                if i < self.n {
                    map[i] = l;
                }
            }
        }
        map
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let scheme: LevelScheme = serde_json::from_str(s)?;
        if scheme.r != scheme.levels.len() {
            return Err(Error::InvalidArgument(format!(
                "r = {} but {} levels listed",
                scheme.r,
                scheme.levels.len()
            )));
        }
        Ok(scheme)
    }
}

fn log2(n: usize) -> usize {
    n.trailing_zeros() as usize
}

/// Dyadic Haar sparsity levels: `T_1 = {0, 1}`, `T_l = 2^(l-1)..2^l`.
pub fn build_dhw_sparsity_levels(n: usize) -> Result<LevelScheme> {
    check_length(n)?;
    let r = log2(n);
    let mut boundaries = vec![0];
    boundaries.extend((1..=r).map(|l| 1usize << l));
    let levels = boundaries
        .windows(2)
        .map(|w| (w[0]..w[1]).collect())
        .collect();
    Ok(LevelScheme::from_parts(n, SchemeKind::DhwSparsity, boundaries, levels))
}

/// Dyadic frequency annuli: `W_1 = {0, 1}` and
/// `W_t = {-2^(t-1)+1, .., 2^(t-1)} \ (W_1 ∪ .. ∪ W_(t-1))`.
pub fn build_dhw_sampling_levels(n: usize) -> Result<LevelScheme> {
    let conv = IndexConvention::new(n)?;
    let r = log2(n);
    let mut boundaries = vec![0];
    let mut levels = Vec::with_capacity(r);
    let mut inner: i64 = 0;
    for t in 1..=r {
        let outer = 1i64 << (t - 1);
        let mut idx: Vec<usize> = (-outer + 1..=outer)
            .filter(|f| !(-inner + 1..=inner).contains(f))
            .map(|f| conv.storage(f))
            .collect();
        idx.sort_unstable();
        levels.push(idx);
        boundaries.push(outer as usize);
        inner = outer;
    }
    Ok(LevelScheme::from_parts(n, SchemeKind::DhwSampling, boundaries, levels))
}

/// `r = 2^q` symmetric Fourier bands of equal size `N / r`.
///
/// Band `l` holds the frequencies `(l-1)h+1 ..= l h` and their reflections
/// `f -> 1 - f`, with half-band width `h = N / (2r)`.
pub fn build_dft_levels(n: usize, q: u32) -> Result<LevelScheme> {
    let conv = IndexConvention::new(n)?;
    let r = 1usize
        .checked_shl(q)
        .ok_or_else(|| Error::InvalidArgument(format!("q = {q} is too large")))?;
    if r > n / 2 || (n / 2) % r != 0 {
        return Err(Error::InvalidArgument(format!(
            "r = 2^{q} = {r} does not divide N/2 = {}",
            n / 2
        )));
    }
    let h = (n / (2 * r)) as i64;
    let boundaries = (0..=r).map(|l| l * h as usize).collect();
    let levels = (1..=r as i64)
        .map(|l| {
            let mut idx: Vec<usize> = ((l - 1) * h + 1..=l * h)
                .flat_map(|f| [f, 1 - f])
                .map(|f| conv.storage(f))
                .collect();
            idx.sort_unstable();
            idx
        })
        .collect();
    Ok(LevelScheme::from_parts(n, SchemeKind::DftSymmetric, boundaries, levels))
}

/// A broken scheme invariant. Level numbers in messages are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Overlap { a: usize, b: usize },
    Missing(Vec<usize>),
    Empty(usize),
    OutOfRange { level: usize, index: usize },
    RepeatedIndex { level: usize, index: usize },
    Asymmetric(usize),
    Cardinality { level: usize, size: usize, expected: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Overlap { a, b } => write!(f, "levels {} and {} overlap", a + 1, b + 1),
            Violation::Missing(idx) => {
                let list: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
                write!(f, "union misses {{{}}}", list.join(","))
            }
            Violation::Empty(l) => write!(f, "level {} is empty", l + 1),
            Violation::OutOfRange { level, index } => {
                write!(f, "level {} holds out-of-range index {index}", level + 1)
            }
            Violation::RepeatedIndex { level, index } => {
                write!(f, "level {} repeats index {index}", level + 1)
            }
            Violation::Asymmetric(l) => write!(f, "level {} is not symmetric", l + 1),
            Violation::Cardinality {
                level,
                size,
                expected,
            } => write!(f, "level {} has {size} indices, expected {expected}", level + 1),
        }
    }
}

/// Every invariant the scheme breaks; empty when it is a valid partition.
pub fn validate_scheme(s: &LevelScheme) -> Vec<Violation> {
    let mut out = Vec::new();
    let sets: Vec<BTreeSet<usize>> = s.levels.iter().map(|l| l.iter().copied().collect()).collect();

    for (l, idx) in s.levels.iter().enumerate() {
        if idx.is_empty() {
            out.push(Violation::Empty(l));
        }
        let mut seen = BTreeSet::new();
        for &i in idx {
            if i >= s.n {
                out.push(Violation::OutOfRange { level: l, index: i });
            } else if !seen.insert(i) {
                out.push(Violation::RepeatedIndex { level: l, index: i });
            }
        }
    }
    for a in 0..sets.len() {
        for b in a + 1..sets.len() {
            if !sets[a].is_disjoint(&sets[b]) {
                out.push(Violation::Overlap { a, b });
            }
        }
    }
    let covered: BTreeSet<usize> = sets.iter().flatten().copied().collect();
    let missing: Vec<usize> = (0..s.n).filter(|i| !covered.contains(i)).collect();
    if !missing.is_empty() {
        out.push(Violation::Missing(missing));
    }

    if s.kind == SchemeKind::DftSymmetric {
        if let Ok(conv) = IndexConvention::new(s.n) {
            let half = (s.n / 2) as i64;
            for (l, set) in sets.iter().enumerate() {
                let symmetric = set.iter().filter(|&&i| i < s.n).all(|&i| {
                    let g = 1 - conv.frequency(i);
                    g > -half && g <= half && set.contains(&conv.storage(g))
                });
                if !symmetric {
                    out.push(Violation::Asymmetric(l));
                }
            }
        }
        if !s.levels.is_empty() && s.n % s.levels.len() == 0 {
            let expected = s.n / s.levels.len();
            for (l, idx) in s.levels.iter().enumerate() {
                if idx.len() != expected {
                    out.push(Violation::Cardinality {
                        level: l,
                        size: idx.len(),
                        expected,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn freqs(s: &LevelScheme) -> Vec<Vec<i64>> {
        let conv = IndexConvention::new(s.n()).unwrap();
        s.levels()
            .iter()
            .map(|l| {
                let mut f: Vec<i64> = l.iter().map(|&i| conv.frequency(i)).collect();
                f.sort_unstable();
                f
            })
            .collect()
    }

    #[test]
    fn dhw_sparsity_small() {
        let s = build_dhw_sparsity_levels(8).unwrap();
        assert_eq!(s.r(), 3);
        assert_eq!(s.levels(), &[vec![0, 1], vec![2, 3], vec![4, 5, 6, 7]]);
        assert_eq!(s.boundaries(), &[0, 2, 4, 8]);
        let s = build_dhw_sparsity_levels(2).unwrap();
        assert_eq!(s.levels(), &[vec![0, 1]]);
        assert!(validate_scheme(&s).is_empty());
    }

    #[test]
    fn dhw_sampling_annuli() {
        let s = build_dhw_sampling_levels(8).unwrap();
        assert_eq!(freqs(&s), vec![vec![0, 1], vec![-1, 2], vec![-3, -2, 3, 4]]);
        let s = build_dhw_sampling_levels(4).unwrap();
        assert_eq!(freqs(&s), vec![vec![0, 1], vec![-1, 2]]);
        let s = build_dhw_sampling_levels(1024).unwrap();
        assert_eq!(s.sizes().iter().sum::<usize>(), 1024);
        assert!(validate_scheme(&s).is_empty());
        // the Nyquist frequency lands in the outermost annulus
        assert_eq!(*freqs(&s).last().unwrap().last().unwrap(), 512);
    }

    #[test]
    fn dft_bands() {
        let s = build_dft_levels(16, 1).unwrap();
        assert_eq!(s.sizes(), vec![8, 8]);
        assert_eq!(freqs(&s)[0], vec![-3, -2, -1, 0, 1, 2, 3, 4]);
        let s = build_dft_levels(1024, 6).unwrap();
        assert_eq!(s.r(), 64);
        assert!(s.sizes().iter().all(|&c| c == 16));
        let first6: usize = s.sizes()[..6].iter().sum();
        assert_eq!(first6, 96);
        assert!(validate_scheme(&s).is_empty());
    }

    #[test]
    fn dft_rejects_bad_q() {
        assert!(build_dft_levels(16, 4).is_err());
        assert!(build_dft_levels(12, 1).is_err());
        assert!(build_dft_levels(16, 3).is_ok());
    }

    #[test]
    fn violations_are_reported() {
        let good = build_dhw_sparsity_levels(8).unwrap();
        assert!(validate_scheme(&good).is_empty());

        let dup = LevelScheme::from_parts(
            8,
            SchemeKind::DhwSparsity,
            vec![],
            vec![vec![0, 1], vec![0, 1], vec![2, 3, 4, 5, 6, 7]],
        );
        let v: Vec<String> = validate_scheme(&dup).iter().map(|v| v.to_string()).collect();
        assert_eq!(v, vec!["levels 1 and 2 overlap"]);

        let short = LevelScheme::from_parts(
            8,
            SchemeKind::DhwSparsity,
            vec![],
            vec![vec![0, 1], vec![2, 3], vec![4, 5, 6]],
        );
        let v: Vec<String> = validate_scheme(&short).iter().map(|v| v.to_string()).collect();
        assert_eq!(v, vec!["union misses {7}"]);

        let lopsided = LevelScheme::from_parts(
            8,
            SchemeKind::DftSymmetric,
            vec![],
            vec![vec![0, 1, 2], vec![3, 4, 5, 6, 7]],
        );
        let v = validate_scheme(&lopsided);
        assert!(v.contains(&Violation::Asymmetric(0)));
        assert!(v.iter().any(|x| matches!(x, Violation::Cardinality { .. })));
    }

    #[test]
    fn json_round_trip() {
        let s = build_dft_levels(64, 3).unwrap();
        let js = s.to_json().unwrap();
        assert!(js.contains("\"N\": 64"));
        assert!(js.contains("\"kind\": \"dft-symmetric\""));
        assert_eq!(LevelScheme::from_json(&js).unwrap(), s);
    }
}
