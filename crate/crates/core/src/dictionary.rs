//! Fluorochrome spectral dictionaries and the sparsity-in-levels profile
//! they induce.
//!
//! The profile of a dictionary `H` in a basis `Ψ` is estimated column by
//! column: transform `h_i` to `Ψ* h_i`, keep the fewest largest-magnitude
//! coefficients carrying a fraction `ρ` of its norm, count how many of them
//! land in each level, then take the worst count over all columns.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levels::{LevelScheme, SchemeKind};
use crate::scalar::Scalar;
use crate::transforms::{check_length, Basis, SparsityTransform};
use crate::volume::HsVolume;

/// `N_nu x N_f` matrix of nonnegative emission spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDictionary<T> {
    columns: Vec<Vec<T>>,
    names: Vec<String>,
    /// Wavelength (nm) of every sample, when known.
    wavelengths: Option<Vec<T>>,
}

impl<T: Scalar> SpectralDictionary<T> {
    pub fn new(columns: Vec<Vec<T>>, names: Vec<String>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Dictionary("no spectra".into()));
        }
        if names.len() != columns.len() {
            return Err(Error::Dictionary(format!(
                "{} names for {} spectra",
                names.len(),
                columns.len()
            )));
        }
        let n = columns[0].len();
        check_length(n)?;
        for (c, name) in columns.iter().zip(&names) {
            if c.len() != n {
                return Err(Error::Dictionary(format!("spectrum '{name}' has length {}", c.len())));
            }
            if c.iter().any(|v| !v.is_finite() || *v < T::zero()) {
                return Err(Error::Dictionary(format!("spectrum '{name}' has negative entries")));
            }
            if c.iter().all(|v| v.is_zero()) {
                return Err(Error::Dictionary(format!("spectrum '{name}' is identically zero")));
            }
        }
        Ok(Self {
            columns,
            names,
            wavelengths: None,
        })
    }

    pub fn with_wavelengths(mut self, grid: Vec<T>) -> Result<Self> {
        if grid.len() != self.n_nu() {
            return Err(Error::Dimension("wavelength grid length".into()));
        }
        self.wavelengths = Some(grid);
        Ok(self)
    }

    pub fn n_nu(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_f(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, i: usize) -> &[T] {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Vec<T>] {
        &self.columns
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn wavelengths(&self) -> Option<&[T]> {
        self.wavelengths.as_deref()
    }

    /// Copy with column `i` multiplied by `factor > 0`.
    pub fn scaled_column(&self, i: usize, factor: T) -> Self {
        let mut out = self.clone();
        out.columns[i].iter_mut().for_each(|v| *v = *v * factor);
        out
    }
}

/// Side information gathered while reading a dictionary file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadReport {
    /// Negative readings that were clamped to zero.
    pub clamped: usize,
    /// Rows read before resampling.
    pub rows: usize,
}

fn is_wavelength_header(h: &str) -> bool {
    matches!(
        h.trim().to_ascii_lowercase().as_str(),
        "wavelength" | "wavelength_nm" | "wavelength (nm)" | "nm" | "lambda"
    )
}

/// Linear interpolation of `(xs, ys)` onto `n` uniform points spanning `xs`.
fn resample<T: Scalar>(xs: &[f64], ys: &[f64], n: usize) -> Vec<T> {
    if ys.len() == 1 {
        return vec![T::of(ys[0]); n];
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let mut seg = 0;
    (0..n)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            while seg + 2 < xs.len() && xs[seg + 1] < x {
                seg += 1;
            }
            let (x0, x1) = (xs[seg], xs[seg + 1]);
            let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
            T::of(ys[seg] + t * (ys[seg + 1] - ys[seg]))
        })
        .collect()
}

/// Parse a dictionary CSV: a header row of names, then one row per
/// wavelength sample. A leading column named `wavelength` (or `nm`,
/// `lambda`) is taken as the sampling grid.
pub fn parse_dictionary<T: Scalar, R: Read>(
    reader: R,
    target_length: usize,
) -> Result<(SpectralDictionary<T>, LoadReport)> {
    check_length(target_length)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let has_grid = headers.first().is_some_and(|h| is_wavelength_header(h));
    let names: Vec<String> = headers.iter().skip(usize::from(has_grid)).cloned().collect();
    if names.is_empty() {
        return Err(Error::Dictionary("no spectrum columns".into()));
    }
    let mut grid = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut report = LoadReport::default();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Dictionary(format!(
                "row {} has {} fields, expected {}",
                row + 2,
                rec.len(),
                headers.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Dictionary(format!("row {}: bad number '{s}'", row + 2)))
        };
        let mut fields = rec.iter();
        if has_grid {
            grid.push(parse(fields.next().expect("checked length"))?);
        } else {
            grid.push(row as f64);
        }
        for (col, s) in cols.iter_mut().zip(fields) {
            let mut v = parse(s)?;
            if v < 0.0 {
                report.clamped += 1;
                v = 0.0;
            }
            col.push(v);
        }
    }
    report.rows = grid.len();
    if report.rows == 0 {
        return Err(Error::Dictionary("no samples".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Dictionary("wavelengths must be strictly increasing".into()));
    }
    if report.clamped > 0 {
        log::warn!("clamped {} negative dictionary readings to zero", report.clamped);
    }
    let columns = cols
        .iter()
        .map(|c| resample::<T>(&grid, c, target_length))
        .collect();
    let mut dict = SpectralDictionary::new(columns, names)?;
    if has_grid {
        dict = dict.with_wavelengths(resample(&grid, &grid, target_length))?;
    }
    Ok((dict, report))
}

/// Read a dictionary CSV and resample every spectrum to `target_length`.
pub fn load_dictionary<T: Scalar>(
    path: &Path,
    target_length: usize,
) -> Result<(SpectralDictionary<T>, LoadReport)> {
    parse_dictionary(std::fs::File::open(path)?, target_length)
}

/// Seeded stand-in for a fluorochrome database.
///
/// Each spectrum is a sum of one to three Gaussian bumps with standard
/// deviation between 3% and 10% of the band, centred in the middle 40% of
/// the band, normalised to a peak of 1.
pub fn synth_dictionary<T: Scalar>(n_f: usize, n_nu: usize, seed: u64) -> Result<SpectralDictionary<T>> {
    if n_f == 0 {
        return Err(Error::InvalidArgument("need at least one fluorochrome".into()));
    }
    check_length(n_nu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = n_nu as f64;
    let mut columns = Vec::with_capacity(n_f);
    for _ in 0..n_f {
        let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=3))
            .map(|_| {
                let center = rng.random_range(0.3..0.7) * len;
                let sigma = rng.random_range(0.03..0.10) * len;
                let amp = rng.random_range(0.3..1.0);
                (center, sigma, amp)
            })
            .collect();
        let raw: Vec<f64> = (0..n_nu)
            .map(|t| {
                bumps
                    .iter()
                    .map(|&(c, s, a)| a * (-(t as f64 - c).powi(2) / (2.0 * s * s)).exp())
                    .sum()
            })
            .collect();
        let peak = raw.iter().cloned().fold(0.0, f64::max);
        columns.push(raw.into_iter().map(|v| T::of(v / peak)).collect());
    }
    let names = (1..=n_f).map(|i| format!("F{i:02}")).collect();
    SpectralDictionary::new(columns, names)
}

/// Per-level sparsity budget estimated from a dictionary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalSparsityProfile {
    pub rho: f64,
    pub basis: Basis,
    pub scheme: SchemeKind,
    /// `k_l^0 = max_i k_{i,l}`.
    pub k: Vec<usize>,
    /// `k_{i,l}` for every fluorochrome `i`.
    pub per_fluorochrome: Vec<Vec<usize>>,
    /// 1-based index of the last level with `k_l^0 > 0`; 0 when all vanish.
    pub r0: usize,
    pub level_sizes: Vec<usize>,
}

impl LocalSparsityProfile {
    /// `k_l^0 / |T_l|`.
    pub fn ratios(&self) -> Vec<f64> {
        self.k
            .iter()
            .zip(&self.level_sizes)
            .map(|(&k, &s)| k as f64 / s as f64)
            .collect()
    }

    pub fn total(&self) -> usize {
        self.k.iter().sum()
    }

    /// `{rho, k, r0, per_fluorochrome}`.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            rho: f64,
            basis: Basis,
            k: &'a [usize],
            r0: usize,
            per_fluorochrome: &'a [Vec<usize>],
        }
        Ok(serde_json::to_string_pretty(&Doc {
            rho: self.rho,
            basis: self.basis,
            k: &self.k,
            r0: self.r0,
            per_fluorochrome: &self.per_fluorochrome,
        })?)
    }
}

/// Indices of `coeffs` by decreasing magnitude, ties by ascending index,
/// truncated to the shortest prefix whose energy reaches `rho^2` of the total.
pub fn energy_prefix<T: Scalar>(magnitudes: &[T], rho: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..magnitudes.len()).collect();
    order.sort_by(|&a, &b| {
        magnitudes[b]
            .partial_cmp(&magnitudes[a])
            .expect("finite magnitudes")
            .then(a.cmp(&b))
    });
    // the total is summed in the same order so the full prefix reaches it exactly
    let total = order.iter().fold(T::zero(), |s, &i| s + magnitudes[i] * magnitudes[i]);
    let target = T::of(rho) * total.sqrt();
    let mut acc = T::zero();
    let mut n = 0;
    while n < order.len() && acc.sqrt() < target {
        acc = acc + magnitudes[order[n]] * magnitudes[order[n]];
        n += 1;
    }
    order.truncate(n);
    order
}

/// `k_{i,l}(ρ)`: how many of the energy-prefix indices of each coefficient
/// magnitude vector fall in each level of `t`.
pub fn level_counts<T: Scalar>(magnitudes: &[Vec<T>], t: &LevelScheme, rho: f64) -> Vec<Vec<usize>> {
    let level_of = t.level_map();
    magnitudes
        .iter()
        .map(|mags| {
            let mut counts = vec![0usize; t.r()];
            for i in energy_prefix(mags, rho) {
                counts[level_of[i]] += 1;
            }
            counts
        })
        .collect()
}

/// Estimate `k^0(ρ)` of a dictionary over the levels `t`.
pub fn estimate_profile<T: Scalar>(
    dict: &SpectralDictionary<T>,
    psi: Basis,
    t: &LevelScheme,
    rho: f64,
) -> Result<LocalSparsityProfile> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho = {rho} outside [0, 1]")));
    }
    if dict.n_nu() != t.n() {
        return Err(Error::Dimension(format!(
            "dictionary length {} vs scheme over {} indices",
            dict.n_nu(),
            t.n()
        )));
    }
    let transform = SparsityTransform::<T>::new(psi, t.n())?;
    let magnitudes: Vec<Vec<T>> = dict
        .columns()
        .iter()
        .map(|h| transform.analyze(h).iter().map(|c| c.norm()).collect())
        .collect();
    let per_fluorochrome = level_counts(&magnitudes, t, rho);
    let k: Vec<usize> = (0..t.r())
        .map(|l| per_fluorochrome.iter().map(|c| c[l]).max().unwrap_or(0))
        .collect();
    let r0 = k.iter().rposition(|&v| v > 0).map_or(0, |p| p + 1);
    Ok(LocalSparsityProfile {
        rho,
        basis: psi,
        scheme: t.kind(),
        k,
        per_fluorochrome,
        r0,
        level_sizes: t.sizes(),
    })
}

/// Nonnegative `N_f x N_p` concentrations, column-major by pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix<T> {
    n_f: usize,
    n_p: usize,
    data: Vec<T>,
}

impl<T: Scalar> MixingMatrix<T> {
    pub fn new(n_f: usize, n_p: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n_f * n_p {
            return Err(Error::Dimension(format!(
                "{} values for a {n_f} x {n_p} mixing matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidArgument("mixing matrix must be nonnegative".into()));
        }
        Ok(Self { n_f, n_p, data })
    }

    /// Entries drawn i.i.d. uniform on `[0, 1)`.
    pub fn uniform<R: Rng + ?Sized>(n_f: usize, n_p: usize, rng: &mut R) -> Self {
        let data = (0..n_f * n_p).map(|_| T::of(rng.random::<f64>())).collect();
        Self { n_f, n_p, data }
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn pixel(&self, j: usize) -> &[T] {
        &self.data[j * self.n_f..(j + 1) * self.n_f]
    }
}

/// `X = H G`.
pub fn lmm_mix<T: Scalar>(dict: &SpectralDictionary<T>, g: &MixingMatrix<T>) -> Result<HsVolume<T>> {
    if g.n_f() != dict.n_f() {
        return Err(Error::Dimension(format!(
            "mixing matrix has {} rows for {} spectra",
            g.n_f(),
            dict.n_f()
        )));
    }
    let n = dict.n_nu();
    let mut x = HsVolume::zeros(n, g.n_p());
    for j in 0..g.n_p() {
        let out = x.pixel_mut(j);
        for (h, &w) in dict.columns().iter().zip(g.pixel(j)) {
            if w.is_zero() {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(h) {
                *o = *o + w * v;
            }
        }
    }
    Ok(x)
}

/// `∪_i supp(Ψ* h_i)`, with magnitudes at or below `floor` treated as zero.
pub fn support_union<T: Scalar>(dict: &SpectralDictionary<T>, psi: Basis, floor: T) -> Result<Vec<bool>> {
    let transform = SparsityTransform::<T>::new(psi, dict.n_nu())?;
    let mut union = vec![false; dict.n_nu()];
    for h in dict.columns() {
        for (u, c) in union.iter_mut().zip(transform.analyze(h)) {
            *u |= c.norm() > floor;
        }
    }
    Ok(union)
}

/// Pixels whose `Ψ*`-support escapes the dictionary support union.
pub fn support_violations<T: Scalar>(
    dict: &SpectralDictionary<T>,
    psi: Basis,
    x: &HsVolume<T>,
    floor: T,
) -> Result<Vec<usize>> {
    if x.n_xi() != dict.n_nu() {
        return Err(Error::Dimension("volume and dictionary lengths differ".into()));
    }
    let union = support_union(dict, psi, floor)?;
    let transform = SparsityTransform::<T>::new(psi, dict.n_nu())?;
    Ok((0..x.n_p())
        .filter(|&j| {
            transform
                .analyze(x.pixel(j))
                .iter()
                .zip(&union)
                .any(|(c, &inside)| !inside && c.norm() > floor)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::{build_dft_levels, build_dhw_sparsity_levels};

    #[test]
    fn prefix_hand_example() {
        // |h~| = (3, 0, 4, 0): top-1 carries 4 >= 0.8 * 5
        assert_eq!(energy_prefix(&[3.0, 0.0, 4.0, 0.0], 0.8), vec![2]);
        assert_eq!(energy_prefix(&[3.0, 0.0, 4.0, 0.0], 0.0), Vec::<usize>::new());
        assert_eq!(energy_prefix(&[3.0, 0.0, 4.0, 0.0], 1.0), vec![2, 0]);
        // ties go to the lower index
        assert_eq!(energy_prefix(&[1.0, 1.0, 1.0, 1.0], 0.5), vec![0]);
    }

    #[test]
    fn profile_hand_example() {
        let t = LevelScheme::from_parts(
            4,
            SchemeKind::DhwSparsity,
            vec![0, 2, 4],
            vec![vec![0, 1], vec![2, 3]],
        );
        let counts = level_counts(&[vec![3.0, 0.0, 4.0, 0.0]], &t, 0.8);
        assert_eq!(counts, vec![vec![0, 1]]);
    }

    #[test]
    fn csv_loading() {
        let csv = "wavelength,A,B\n400,0.1,0.0\n410,0.5,-0.01\n420,1.0,0.2\n430,0.4,0.9\n";
        let (d, rep) = parse_dictionary::<f64, _>(csv.as_bytes(), 8).unwrap();
        assert_eq!(d.n_f(), 2);
        assert_eq!(d.n_nu(), 8);
        assert_eq!(rep.clamped, 1);
        assert_eq!(rep.rows, 4);
        assert!((d.column(0)[0] - 0.1).abs() < 1e-15);
        assert!((d.column(0)[7] - 0.4).abs() < 1e-15);
        assert!((d.wavelengths().unwrap()[7] - 430.0).abs() < 1e-12);

        let (d, _) = parse_dictionary::<f64, _>("only\n2.0\n2.0\n".as_bytes(), 4).unwrap();
        assert_eq!(d.column(0), &[2.0; 4]);
    }

    #[test]
    fn csv_errors() {
        assert!(parse_dictionary::<f64, _>("A,B\n".as_bytes(), 8).is_err());
        assert!(parse_dictionary::<f64, _>("A,B\n1,x\n".as_bytes(), 8).is_err());
        assert!(parse_dictionary::<f64, _>("A,B\n1,0\n2,0\n".as_bytes(), 8).is_err());
        assert!(parse_dictionary::<f64, _>("A\n1\n".as_bytes(), 6).is_err());
        assert!(parse_dictionary::<f64, _>("nm,A\n2,1\n1,1\n".as_bytes(), 4).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_normalised() {
        let a = synth_dictionary::<f64>(5, 256, 9).unwrap();
        let b = synth_dictionary::<f64>(5, 256, 9).unwrap();
        assert_eq!(a, b);
        for c in a.columns() {
            assert!(c.iter().all(|&v| v >= 0.0));
            assert_eq!(c.iter().cloned().fold(0.0, f64::max), 1.0);
        }
        assert_ne!(a, synth_dictionary::<f64>(5, 256, 10).unwrap());
    }

    #[test]
    fn rho_extremes() {
        let d = synth_dictionary::<f64>(4, 64, 1).unwrap();
        let t = build_dhw_sparsity_levels(64).unwrap();
        let p = estimate_profile(&d, Basis::Dhw, &t, 0.0).unwrap();
        assert!(p.k.iter().all(|&k| k == 0));
        assert_eq!(p.r0, 0);
        assert!(estimate_profile(&d, Basis::Dhw, &t, 1.5).is_err());
        let t16 = build_dft_levels(16, 2).unwrap();
        assert!(estimate_profile(&d, Basis::Dft, &t16, 0.5).is_err());
    }

    #[test]
    fn full_energy_needs_full_support() {
        // piecewise-constant spectra on dyadic blocks have exactly sparse Haar coefficients
        let col = vec![1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 2.0, 2.0];
        let d = SpectralDictionary::new(vec![col.clone()], vec!["p".into()]).unwrap();
        let t = build_dhw_sparsity_levels(8).unwrap();
        let p = estimate_profile(&d, Basis::Dhw, &t, 1.0).unwrap();
        let support = crate::transforms::dhw_forward(&col)
            .unwrap()
            .iter()
            .filter(|v: &&f64| v.abs() > 1e-12)
            .count();
        assert_eq!(p.per_fluorochrome[0].iter().sum::<usize>(), support);
    }

    #[test]
    fn lmm_basics() {
        let d = synth_dictionary::<f64>(3, 32, 4).unwrap();
        let g = MixingMatrix::new(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let x = lmm_mix(&d, &g).unwrap();
        assert_eq!(x.pixel(0), d.column(0));
        let x = lmm_mix(&d, &MixingMatrix::new(3, 2, vec![0.0; 6]).unwrap()).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
        assert!(MixingMatrix::<f64>::new(3, 1, vec![1.0, -0.5, 0.0]).is_err());
        assert!(lmm_mix(&d, &MixingMatrix::new(2, 1, vec![1.0, 1.0]).unwrap()).is_err());
    }
}
