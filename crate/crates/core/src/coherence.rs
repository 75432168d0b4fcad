//! Local coherence, relative sparsity and measurement budgets.
//!
//! Everything here works from the dense cross-Gram matrix `U = Φ* Ψ`, which
//! is only practical for moderate `N` (a few thousand at most). The
//! brute-force relative sparsity is meant for `N <= 16`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{build_dhw_sampling_levels, build_dhw_sparsity_levels, LevelScheme, SchemeKind};
use crate::scalar::Scalar;
use crate::transforms::{haar_analyze_in_place, Basis, Fourier, SparsityTransform};

/// Dense `N x N` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex::new(T::zero(), T::zero()); n * n];
        for i in 0..n {
            data[i * n + i] = Complex::new(T::one(), T::zero());
        }
        Self { n, data }
    }

    /// Build from row-major entries.
    pub fn from_rows(n: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!(
                "{} entries for a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.n + j]
    }

    /// `μ(U) = max |U_ij|^2`.
    pub fn coherence(&self) -> T {
        self.data.iter().fold(T::zero(), |m, c| m.max(c.norm_sqr()))
    }
}

/// `Φ* Ψ` for two orthonormal bases of length `n`.
///
/// Identical bases give the identity exactly rather than a rounded product.
pub fn cross_gram<T: Scalar>(phi: Basis, psi: Basis, n: usize) -> Result<DenseMatrix<T>> {
    let psi_t = SparsityTransform::<T>::new(psi, n)?;
    if phi == psi {
        return Ok(DenseMatrix::identity(n));
    }
    let fourier = Fourier::<T>::new(n)?;
    let zero = Complex::new(T::zero(), T::zero());
    let mut data = vec![zero; n * n];
    let mut col = vec![zero; n];
    for j in 0..n {
        let atom = psi_t.atom(j);
        match phi {
            Basis::Dft => fourier.analyze_into(&atom, &mut col),
            Basis::Dhw => {
                let mut re: Vec<T> = atom.iter().map(|c| c.re).collect();
                let mut im: Vec<T> = atom.iter().map(|c| c.im).collect();
                haar_analyze_in_place(&mut re);
                haar_analyze_in_place(&mut im);
                for (c, (a, b)) in col.iter_mut().zip(re.into_iter().zip(im)) {
                    *c = Complex::new(a, b);
                }
            }
        }
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
    Ok(DenseMatrix { n, data })
}

/// Local coherences `μ_{t,l}` between sampling and sparsity levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceMatrix<T> {
    pub phi: Basis,
    pub psi: Basis,
    pub sampling: SchemeKind,
    pub sparsity: SchemeKind,
    /// `values[t][l]`.
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> CoherenceMatrix<T> {
    pub fn r(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, t: usize, l: usize) -> T {
        self.values[t][l]
    }

    /// `{r, values}` document for the CLI.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            r: usize,
            phi: Basis,
            psi: Basis,
            values: &'a [Vec<T>],
        }
        Ok(serde_json::to_string_pretty(&Doc {
            r: self.r(),
            phi: self.phi,
            psi: self.psi,
            values: &self.values,
        })?)
    }
}

/// Local coherence from an explicit cross-Gram matrix.
pub fn local_coherence_of<T: Scalar>(
    u: &DenseMatrix<T>,
    w: &LevelScheme,
    t: &LevelScheme,
) -> Result<Vec<Vec<T>>> {
    if w.n() != t.n() || u.n() != w.n() {
        return Err(Error::Dimension(format!(
            "schemes over {} and {} indices, matrix of size {}",
            w.n(),
            t.n(),
            u.n()
        )));
    }
    let n = u.n();
    let t_map = t.level_map();
    // block_max[i][l] = max_{j in T_l} |U_ij|^2
    let mut block_max = vec![vec![T::zero(); t.r()]; n];
    for (i, row) in block_max.iter_mut().enumerate() {
        for (j, &l) in t_map.iter().enumerate() {
            if l != usize::MAX {
                row[l] = row[l].max(u.get(i, j).norm_sqr());
            }
        }
    }
    let mut out = vec![vec![T::zero(); t.r()]; w.r()];
    for (tt, rows) in w.levels().iter().enumerate() {
        let mut level_max = vec![T::zero(); t.r()];
        for &i in rows {
            for (m, &b) in level_max.iter_mut().zip(&block_max[i]) {
                *m = m.max(b);
            }
        }
        let row_mu = level_max.iter().fold(T::zero(), |m, &v| m.max(v));
        for (o, &b) in out[tt].iter_mut().zip(&level_max) {
            *o = (row_mu * b).sqrt();
        }
    }
    Ok(out)
}

/// `μ_{t,l}^{W,T}(Φ, Ψ) = sqrt(μ(P_{W_t} Φ*Ψ) μ(P_{W_t} Φ*Ψ P_{T_l}))`.
pub fn local_coherence<T: Scalar>(
    phi: Basis,
    psi: Basis,
    w: &LevelScheme,
    t: &LevelScheme,
) -> Result<CoherenceMatrix<T>> {
    if w.n() != t.n() {
        return Err(Error::Dimension(format!(
            "sampling scheme over {} indices, sparsity scheme over {}",
            w.n(),
            t.n()
        )));
    }
    let u = cross_gram::<T>(phi, psi, w.n())?;
    Ok(CoherenceMatrix {
        phi,
        psi,
        sampling: w.kind(),
        sparsity: t.kind(),
        values: local_coherence_of(&u, w, t)?,
    })
}

/// Largest `|W_t| μ_{t,l} / 2^{-|t-l|/2}` over all level pairs.
///
/// Bounded by a constant for Fourier sampling against Haar sparsity.
pub fn dyadic_decay_constant<T: Scalar>(coh: &CoherenceMatrix<T>, w: &LevelScheme) -> T {
    let mut worst = T::zero();
    for (t, row) in coh.values.iter().enumerate() {
        let size = T::of_usize(w.level(t).len());
        for (l, &mu) in row.iter().enumerate() {
            let gap = (t as f64 - l as f64).abs();
            worst = worst.max(size * mu / T::of(2f64.powf(-gap / 2.0)));
        }
    }
    worst
}

/// Values admitted for the nonzero entries of `z` in the relative sparsity
/// maximisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseSet {
    /// `{-1, +1}`: real coefficients.
    #[default]
    Real,
    /// `{±1, ±i}`.
    Complex,
}

impl PhaseSet {
    fn count(self) -> usize {
        match self {
            PhaseSet::Real => 2,
            PhaseSet::Complex => 4,
        }
    }

    fn value<T: Scalar>(self, digit: usize) -> Complex<T> {
        let (one, zero) = (T::one(), T::zero());
        match digit {
            0 => Complex::new(one, zero),
            1 => Complex::new(-one, zero),
            2 => Complex::new(zero, one),
            _ => Complex::new(zero, -one),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnumerationOrder {
    #[default]
    Lexicographic,
    Reversed,
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerationOptions {
    pub cap: u128,
    pub phases: PhaseSet,
    pub order: EnumerationOrder,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            cap: 50_000_000,
            phases: PhaseSet::Real,
            order: EnumerationOrder::Lexicographic,
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Relative sparsities `K_t(W, T, k)` by exhaustive search.
///
/// The objective `||P_{W_t} U z||^2` is convex in `z`, so its maximum over
/// the box `||z||_inf <= 1` restricted to a support is attained at a vertex;
/// supports are taken with exactly `min(k_l, |T_l|)` entries per level since
/// smaller supports are faces of larger ones.
pub fn relative_sparsity_bruteforce<T: Scalar>(
    u: &DenseMatrix<T>,
    w: &LevelScheme,
    t: &LevelScheme,
    k: &[usize],
    opts: EnumerationOptions,
) -> Result<Vec<T>> {
    if w.n() != t.n() || u.n() != w.n() {
        return Err(Error::Dimension("matrix and schemes disagree on N".into()));
    }
    if k.len() != t.r() {
        return Err(Error::Dimension(format!(
            "{} sparsities for {} levels",
            k.len(),
            t.r()
        )));
    }
    let eff: Vec<usize> = k
        .iter()
        .zip(t.levels())
        .map(|(&kl, lv)| kl.min(lv.len()))
        .collect();
    let total_k: usize = eff.iter().sum();
    let mut count: u128 = 1;
    for (l, &kl) in eff.iter().enumerate() {
        count = count.saturating_mul(binomial(t.level(l).len(), kl));
    }
    let phases = opts.phases.count() as u128;
    for _ in 0..total_k {
        count = count.saturating_mul(phases);
    }
    if count > opts.cap {
        return Err(Error::EnumerationCap {
            count,
            cap: opts.cap,
        });
    }

    let per_level: Vec<Vec<Vec<usize>>> = eff
        .iter()
        .enumerate()
        .map(|(l, &kl)| {
            let lv = t.level(l);
            let mut c: Vec<Vec<usize>> = combinations(lv.len(), kl)
                .into_iter()
                .map(|c| c.into_iter().map(|i| lv[i]).collect())
                .collect();
            if opts.order == EnumerationOrder::Reversed {
                c.reverse();
            }
            c
        })
        .collect();

    let n = u.n();
    let w_map = w.level_map();
    let zero = Complex::new(T::zero(), T::zero());
    let mut best = vec![T::zero(); w.r()];
    let mut uz = vec![zero; n];
    let mut energy = vec![T::zero(); w.r()];
    let mut pick = vec![0usize; per_level.len()];
    let p = opts.phases.count();
    let sign_patterns = p.pow(total_k as u32);

    loop {
        let support: Vec<usize> = pick
            .iter()
            .enumerate()
            .flat_map(|(l, &c)| per_level[l][c].iter().copied())
            .collect();
        for code in 0..sign_patterns {
            let mut code = match opts.order {
                EnumerationOrder::Lexicographic => code,
                EnumerationOrder::Reversed => sign_patterns - 1 - code,
            };
            uz.iter_mut().for_each(|v| *v = zero);
            for &j in &support {
                let z = opts.phases.value::<T>(code % p);
                code /= p;
                for (i, v) in uz.iter_mut().enumerate() {
                    *v = *v + u.get(i, j) * z;
                }
            }
            energy.iter_mut().for_each(|e| *e = T::zero());
            for (i, v) in uz.iter().enumerate() {
                if w_map[i] != usize::MAX {
                    energy[w_map[i]] = energy[w_map[i]] + v.norm_sqr();
                }
            }
            for (b, &e) in best.iter_mut().zip(&energy) {
                *b = b.max(e);
            }
        }
        // odometer over the per-level supports
        let mut l = 0;
        loop {
            if l == pick.len() {
                return Ok(best);
            }
            pick[l] += 1;
            if pick[l] < per_level[l].len() {
                break;
            }
            pick[l] = 0;
            l += 1;
        }
    }
}

/// Relative sparsity in the Fourier/Fourier case with `W = T`: `min(k_t, |T_t|)`.
pub fn relative_sparsity_dft(k: &[usize], t: &LevelScheme) -> Vec<usize> {
    k.iter().zip(t.levels()).map(|(&kl, lv)| kl.min(lv.len())).collect()
}

/// Per-level sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBudget {
    pub m: Vec<usize>,
    #[serde(rename = "M_xi")]
    pub total: usize,
    /// Constant standing in for the universal constants of the bounds.
    pub c: f64,
    /// Failure probability, when the budget depends on one.
    pub eps: Option<f64>,
    #[serde(rename = "K")]
    pub k_total: usize,
}

impl MeasurementBudget {
    fn new(m: Vec<usize>, c: f64, eps: Option<f64>, k_total: usize) -> Self {
        Self {
            total: m.iter().sum(),
            m,
            c,
            eps,
            k_total,
        }
    }

    pub fn r(&self) -> usize {
        self.m.len()
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            r: usize,
            m: &'a [usize],
            #[serde(rename = "M_xi")]
            total: usize,
            #[serde(rename = "K")]
            k_total: usize,
            c: f64,
            eps: Option<f64>,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            r: self.r(),
            m: &self.m,
            total: self.total,
            k_total: self.k_total,
            c: self.c,
            eps: self.eps,
        })?)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= (-1f64).exp() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "failure probability {eps} outside (0, 1/e]"
        )))
    }
}

fn check_sparsity(k: &[usize], sizes: &[usize]) -> Result<()> {
    if k.len() != sizes.len() {
        return Err(Error::Dimension(format!(
            "{} sparsities for {} levels",
            k.len(),
            sizes.len()
        )));
    }
    for (l, (&kl, &size)) in k.iter().zip(sizes).enumerate() {
        if kl > size {
            return Err(Error::SparsityExceedsLevel { level: l, k: kl, size });
        }
    }
    Ok(())
}

/// Haar sparsity, Fourier sampling:
/// `m_t = min(|W_t|, ceil(C (Σ_l 2^{-|t-l|/2} k_l) ln(K/eps) ln N))`.
pub fn budget_dhw(k: &[usize], n: usize, eps: f64, c: f64) -> Result<MeasurementBudget> {
    check_eps(eps)?;
    let t = build_dhw_sparsity_levels(n)?;
    let w = build_dhw_sampling_levels(n)?;
    check_sparsity(k, &t.sizes())?;
    let k_total: usize = k.iter().sum();
    if k_total == 0 {
        return Ok(MeasurementBudget::new(vec![0; w.r()], c, Some(eps), 0));
    }
    let logs = (k_total as f64 / eps).ln() * (n as f64).ln();
    let m = dyadic_weights(k)
        .into_iter()
        .zip(w.sizes())
        .map(|(v, size)| ((c * v * logs).ceil() as usize).min(size))
        .collect();
    Ok(MeasurementBudget::new(m, c, Some(eps), k_total))
}

/// `Σ_l 2^{-|t-l|/2} k_l` for every level `t`.
pub fn dyadic_weights(k: &[usize]) -> Vec<f64> {
    (0..k.len())
        .map(|t| {
            k.iter()
                .enumerate()
                .map(|(l, &kl)| 2f64.powf(-((t as f64 - l as f64).abs()) / 2.0) * kl as f64)
                .sum()
        })
        .collect()
}

/// Fourier sparsity and sampling with `W = T`: fully sample every level with
/// `k_t > 0`, take `floor_m` samples (clamped to the level) elsewhere.
pub fn budget_dft(k: &[usize], w: &LevelScheme, floor_m: usize) -> Result<MeasurementBudget> {
    if w.kind() != SchemeKind::DftSymmetric {
        return Err(Error::InvalidArgument(
            "Fourier budget needs symmetric Fourier levels".into(),
        ));
    }
    check_sparsity(k, &w.sizes())?;
    let m = k
        .iter()
        .zip(w.sizes())
        .map(|(&kt, size)| if kt > 0 { size } else { floor_m.min(size) })
        .collect();
    Ok(MeasurementBudget::new(m, 1.0, None, k.iter().sum()))
}

/// Outcome of checking a budget against the general multilevel conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    /// Per sampling level: `m_t >= C |W_t| (Σ_l μ_{t,l} k_l) ln(K/eps) ln N`.
    pub coherence_condition: Vec<bool>,
    /// Per sampling level: `m_t >= C m̂_t ln(K/eps) ln N`.
    pub auxiliary_condition: Vec<bool>,
    /// Per sparsity level: `1 >= C Σ_t (|W_t|/m̂_t - 1) μ_{t,l} K_t`.
    pub relative_sparsity_condition: Vec<bool>,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.coherence_condition
            .iter()
            .chain(&self.auxiliary_condition)
            .chain(&self.relative_sparsity_condition)
            .all(|&b| b)
    }
}

/// Check a given `(m, m̂)` against the multilevel measurement conditions.
///
/// The conditions are only verified, never solved for `m̂`.
#[allow(clippy::too_many_arguments)]
pub fn check_measurement_bounds<T: Scalar>(
    m: &[usize],
    m_hat: &[f64],
    k: &[usize],
    relative_sparsity: &[f64],
    coh: &CoherenceMatrix<T>,
    w: &LevelScheme,
    eps: f64,
    c: f64,
) -> Result<BoundCheck> {
    check_eps(eps)?;
    let r = w.r();
    if m.len() != r || m_hat.len() != r || relative_sparsity.len() != r || coh.r() != r {
        return Err(Error::Dimension("bound check inputs disagree on r".into()));
    }
    let k_total: usize = k.iter().sum();
    let logs = if k_total == 0 {
        0.0
    } else {
        (k_total as f64 / eps).ln() * (w.n() as f64).ln()
    };
    let sizes = w.sizes();
    let coherence_condition = (0..r)
        .map(|t| {
            let s: f64 = k
                .iter()
                .enumerate()
                .map(|(l, &kl)| coh.get(t, l).as_f64() * kl as f64)
                .sum();
            m[t] as f64 >= c * sizes[t] as f64 * s * logs
        })
        .collect();
    let auxiliary_condition = (0..r).map(|t| m[t] as f64 >= c * m_hat[t] * logs).collect();
    let relative_sparsity_condition = (0..coh.values[0].len())
        .map(|l| {
            let s: f64 = (0..r)
                .map(|t| {
                    let coef = coh.get(t, l).as_f64() * relative_sparsity[t];
                    if coef == 0.0 {
                        0.0
                    } else if m_hat[t] <= 0.0 {
                        f64::INFINITY
                    } else {
                        (sizes[t] as f64 / m_hat[t] - 1.0) * coef
                    }
                })
                .sum();
            1.0 >= c * s
        })
        .collect();
    Ok(BoundCheck {
        coherence_condition,
        auxiliary_condition,
        relative_sparsity_condition,
    })
}

/// Reconstruction strategy whose error-bound constants are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    /// Variable density sampling with inverse-probability weights.
    InitialVds,
    /// Multilevel sampling with unit weights.
    MlsThisWork,
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::InitialVds => "initial-vds",
            Approach::MlsThisWork => "mls-this-work",
        })
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial-vds" | "vds" => Ok(Approach::InitialVds),
            "mls-this-work" | "mls" => Ok(Approach::MlsThisWork),
            other => Err(Error::InvalidArgument(format!("unknown approach '{other}'"))),
        }
    }
}

/// Constraint scaling `α` and error-bound weights `β_1`, `β_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundParams<T> {
    pub approach: Approach,
    pub alpha: T,
    pub beta1: T,
    pub beta2: T,
    pub c: T,
}

pub fn error_bound_params<T: Scalar>(
    approach: Approach,
    m_xi: usize,
    n_xi: usize,
    n_p: usize,
    k: usize,
    c: T,
) -> Result<ErrorBoundParams<T>> {
    if m_xi == 0 || n_xi == 0 || n_p == 0 {
        return Err(Error::InvalidArgument(
            "M_xi, N_xi and N_p must be positive".into(),
        ));
    }
    let (m, n, p) = (T::of_usize(m_xi), T::of_usize(n_xi), T::of_usize(n_p));
    let (alpha, beta1, beta2) = match approach {
        Approach::InitialVds => {
            if k == 0 {
                return Err(Error::InvalidArgument(
                    "K must be positive for the VDS bound".into(),
                ));
            }
            ((m / p).sqrt(), T::of(2.0) / T::of_usize(k).sqrt(), p.sqrt())
        }
        Approach::MlsThisWork => ((m / (n * p)).sqrt(), c, c * (m * p / n).sqrt()),
    };
    Ok(ErrorBoundParams {
        approach,
        alpha,
        beta1,
        beta2,
        c,
    })
}
