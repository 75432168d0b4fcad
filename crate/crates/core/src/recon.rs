//! Coded-illumination acquisition and per-pixel reconstruction.

use std::fs;
use std::path::Path;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{error_bound_params, Approach, ErrorBoundParams};
use crate::dictionary::{lmm_mix, MixingMatrix, SpectralDictionary};
use crate::error::{Error, Result};
use crate::experiment::{derive_seed, relative_sq_error};
use crate::levels::LevelScheme;
use crate::sampling::SamplingPattern;
use crate::scalar::Scalar;
use crate::solver::{BpdnSolver, SolverOptions, SolverStatus};
use crate::transforms::{Basis, Fourier, SparsityTransform};
use crate::volume::{sidecar_path, HsVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    None,
    GaussianBounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub eps_nyq: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            eps_nyq: 0.0,
            seed: 0,
        }
    }

    pub fn bounded(eps_nyq: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::GaussianBounded,
            eps_nyq,
            seed,
        }
    }

    /// Noise on the `N` Nyquist rows of pixel `j`.
    ///
    /// Rows are complex normal scaled so the expected norm matches the
    /// per-pixel bound `ε_Nyq / √N_p`; a draw above the bound is shrunk onto it.
    pub fn pixel_noise<T: Scalar>(&self, n: usize, n_p: usize, j: usize) -> Vec<Complex<T>> {
        if self.kind == NoiseKind::None || self.eps_nyq == 0.0 {
            return vec![Complex::new(T::zero(), T::zero()); n];
        }
        let bound = self.eps_nyq / (n_p as f64).sqrt();
        let sd = bound / (2.0 * n as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[j as u64]));
        let mut w: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                (re * sd, im * sd)
            })
            .collect();
        let norm = w.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
        if norm > bound {
            let mut f = bound / norm;
            // rounding may leave the rescaled norm one ulp above the bound
            while w.iter().map(|(a, b)| (a * f).powi(2) + (b * f).powi(2)).sum::<f64>().sqrt() > bound {
                f *= 1.0 - f64::EPSILON;
            }
            w.iter_mut().for_each(|(a, b)| {
                *a *= f;
                *b *= f;
            });
        }
        w.into_iter().map(|(a, b)| Complex::new(T::of(a), T::of(b))).collect()
    }
}

/// `Y = P_Ω Φ* X + W_CI`, one column of `|Ω|` values per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CiFtiMeasurements<T> {
    pub pattern: SamplingPattern<T>,
    pub eps_nyq: f64,
    n_p: usize,
    shape: Option<(usize, usize)>,
    /// Pixel-major: pixel `j` owns `y[j * M .. (j + 1) * M]`.
    y: Vec<Complex<T>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeasurementHeader<T> {
    #[serde(rename = "N_x")]
    n_x: usize,
    #[serde(rename = "N_y")]
    n_y: usize,
    eps_nyq: f64,
    pattern: SamplingPattern<T>,
}

impl<T: Scalar> CiFtiMeasurements<T> {
    pub fn new(pattern: SamplingPattern<T>, eps_nyq: f64, n_p: usize, y: Vec<Complex<T>>) -> Result<Self> {
        pattern.check()?;
        if y.len() != pattern.len() * n_p {
            return Err(Error::Dimension(format!(
                "{} values for {} rows and {n_p} pixels",
                y.len(),
                pattern.len()
            )));
        }
        if !(eps_nyq >= 0.0 && eps_nyq.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps_nyq = {eps_nyq} must be >= 0")));
        }
        Ok(Self {
            pattern,
            eps_nyq,
            n_p,
            shape: None,
            y,
        })
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn rows(&self) -> usize {
        self.pattern.len()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn pixel(&self, j: usize) -> &[Complex<T>] {
        let m = self.rows();
        &self.y[j * m..(j + 1) * m]
    }

    /// Write interleaved real/imaginary `f64` values and a JSON sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.y.len() * 16);
        for c in &self.y {
            bytes.extend_from_slice(&c.re.as_f64().to_le_bytes());
            bytes.extend_from_slice(&c.im.as_f64().to_le_bytes());
        }
        fs::write(path, bytes)?;
        let (n_x, n_y) = self.shape.unwrap_or((self.n_p, 1));
        let header = MeasurementHeader {
            n_x,
            n_y,
            eps_nyq: self.eps_nyq,
            pattern: self.pattern.clone(),
        };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&header)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let header: MeasurementHeader<T> = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let bytes = fs::read(path)?;
        if bytes.len() % 16 != 0 {
            return Err(Error::Dimension(format!("{} bytes is not a whole number of complex values", bytes.len())));
        }
        let y = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex::new(T::of(re), T::of(im))
            })
            .collect();
        let mut meas = Self::new(header.pattern, header.eps_nyq, header.n_x * header.n_y, y)?;
        meas.shape = Some((header.n_x, header.n_y));
        Ok(meas)
    }
}

pub fn acquire<T: Scalar>(x: &HsVolume<T>, pattern: &SamplingPattern<T>, noise: &NoiseModel) -> Result<CiFtiMeasurements<T>> {
    pattern.check()?;
    if pattern.n != x.n_xi() {
        return Err(Error::Dimension(format!(
            "pattern over {} rows for {} spectral bands",
            pattern.n,
            x.n_xi()
        )));
    }
    let (n, n_p) = (x.n_xi(), x.n_p());
    let fourier = Fourier::<T>::new(n)?;
    let y: Vec<Complex<T>> = (0..n_p)
        .into_par_iter()
        .flat_map_iter(|j| {
            let xh = fourier.analyze_real(x.pixel(j));
            let w = noise.pixel_noise::<T>(n, n_p, j);
            pattern.omega.iter().map(move |&i| xh[i] + w[i]).collect::<Vec<_>>()
        })
        .collect();
    let eps = if noise.kind == NoiseKind::None { 0.0 } else { noise.eps_nyq };
    let mut meas = CiFtiMeasurements::new(pattern.clone(), eps, n_p, y)?;
    meas.shape = x.shape();
    Ok(meas)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconOptions {
    pub psi: Basis,
    pub approach: Approach,
    /// Universal constant in the error-bound weights.
    pub c: f64,
    /// Total sparsity `K`, used by the VDS bound weight.
    pub k_total: usize,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub rel_sq_errors: Vec<f64>,
    pub median_rel_sq_error: f64,
    /// `‖X − X̂‖` over the stacked pixels.
    pub aggregate_error: f64,
    /// `σ_{k,T}(Ψ* x_j)` per pixel.
    pub sigma: Vec<f64>,
    pub bound_rhs: f64,
    pub bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub approach: Approach,
    pub psi: Basis,
    pub m_xi: usize,
    pub n_xi: usize,
    pub n_p: usize,
    pub eps_nyq: f64,
    pub tau: f64,
    pub params: ErrorBoundParams<f64>,
    pub statuses: Vec<SolverStatus>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    pub errors: Option<ErrorSummary>,
}

impl ReconReport {
    pub fn count(&self, status: SolverStatus) -> usize {
        self.statuses.iter().filter(|&&s| s == status).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Solve the per-pixel problem with `τ = α ε_Nyq` for every pixel.
///
/// Solver trouble on one pixel is recorded in the report; the other pixels
/// are unaffected.
pub fn reconstruct<T: Scalar>(meas: &CiFtiMeasurements<T>, opts: &ReconOptions) -> Result<(HsVolume<T>, ReconReport)> {
    if meas.pattern.approach() != opts.approach {
        return Err(Error::InvalidArgument(format!(
            "a {} pattern needs the {} approach, not {}",
            meas.pattern.kind,
            meas.pattern.approach(),
            opts.approach
        )));
    }
    let (n, n_p, m) = (meas.pattern.n, meas.n_p(), meas.rows());
    if m == 0 {
        return Err(Error::InvalidArgument("the pattern selects no rows".into()));
    }
    let params = error_bound_params(opts.approach, m, n, n_p, opts.k_total, opts.c)?;
    let tau = params.alpha * meas.eps_nyq;
    let solver = BpdnSolver::new(&meas.pattern, opts.psi)?;
    let results: Vec<_> = (0..n_p)
        .into_par_iter()
        .map(|j| solver.solve(meas.pixel(j), T::of(tau), &opts.solver))
        .collect();
    let mut data = Vec::with_capacity(n * n_p);
    let mut statuses = Vec::with_capacity(n_p);
    let mut iterations = Vec::with_capacity(n_p);
    let mut residuals = Vec::with_capacity(n_p);
    for r in results {
        if r.status != SolverStatus::Converged {
            log::warn!("pixel {}: {}", statuses.len(), r.status);
        }
        data.extend(r.u);
        statuses.push(r.status);
        iterations.push(r.iterations);
        residuals.push(r.residual.as_f64());
    }
    let mut volume = HsVolume::new(n, n_p, data)?;
    if let Some((nx, ny)) = meas.shape() {
        volume = volume.with_shape(nx, ny)?;
    }
    let report = ReconReport {
        approach: opts.approach,
        psi: opts.psi,
        m_xi: m,
        n_xi: n,
        n_p,
        eps_nyq: meas.eps_nyq,
        tau,
        params,
        statuses,
        iterations,
        residuals,
        errors: None,
    };
    Ok((volume, report))
}

/// `σ_{k,T}(s)`: ℓ₁ mass left after keeping the `k_l` largest magnitudes
/// inside each level.
pub fn sigma_kt<T: Scalar>(coeffs: &[Complex<T>], k: &[usize], t: &LevelScheme) -> Result<f64> {
    if k.len() != t.r() || coeffs.len() != t.n() {
        return Err(Error::Dimension("sparsity vector, levels and coefficients disagree".into()));
    }
    let mut tail = 0.0;
    for (lv, &kl) in t.levels().iter().zip(k) {
        let mut mags: Vec<f64> = lv.iter().map(|&i| coeffs[i].norm().as_f64()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).expect("finite coefficients"));
        tail += mags.iter().skip(kl).sum::<f64>();
    }
    Ok(tail)
}

pub fn error_report<T: Scalar>(
    x_true: &HsVolume<T>,
    x_hat: &HsVolume<T>,
    k: &[usize],
    t: &LevelScheme,
    psi: Basis,
    params: &ErrorBoundParams<f64>,
    eps_nyq: f64,
) -> Result<ErrorSummary> {
    if x_true.n_xi() != x_hat.n_xi() || x_true.n_p() != x_hat.n_p() {
        return Err(Error::Dimension("volumes differ in shape".into()));
    }
    let transform = SparsityTransform::<T>::new(psi, x_true.n_xi())?;
    let rel_sq_errors: Vec<f64> = (0..x_true.n_p())
        .map(|j| relative_sq_error(x_true.pixel(j), x_hat.pixel(j)))
        .collect();
    let sigma = (0..x_true.n_p())
        .map(|j| sigma_kt(&transform.analyze(x_true.pixel(j)), k, t))
        .collect::<Result<Vec<f64>>>()?;
    let aggregate_error = x_true
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum::<f64>()
        .sqrt();
    let bound_rhs = params.beta1 * sigma.iter().sum::<f64>() + params.beta2 * eps_nyq;
    Ok(ErrorSummary {
        median_rel_sq_error: median(&rel_sq_errors),
        rel_sq_errors,
        aggregate_error,
        sigma,
        bound_rhs,
        bound_holds: aggregate_error <= bound_rhs,
    })
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let h = s.len() / 2;
    if s.len() % 2 == 1 {
        s[h]
    } else {
        0.5 * (s[h - 1] + s[h])
    }
}

/// `X = H G` with uniform mixing weights on an `n_x x n_y` grid.
pub fn synthetic_volume<T: Scalar>(dict: &SpectralDictionary<T>, n_x: usize, n_y: usize, seed: u64) -> Result<HsVolume<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = MixingMatrix::uniform(dict.n_f(), n_x * n_y, &mut rng);
    lmm_mix(dict, &g)?.with_shape(n_x, n_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::{build_dft_levels, build_dhw_sparsity_levels};
    use crate::sampling::{sample_mls, sample_nyquist};

    fn small_volume() -> HsVolume<f64> {
        let d = crate::dictionary::synth_dictionary::<f64>(3, 64, 5).unwrap();
        synthetic_volume(&d, 2, 2, 1).unwrap()
    }

    #[test]
    fn nyquist_noiseless_is_plain_dft() {
        let x = small_volume();
        let p = sample_nyquist::<f64>(64).unwrap();
        let meas = acquire(&x, &p, &NoiseModel::none()).unwrap();
        let f = Fourier::<f64>::new(64).unwrap();
        for j in 0..4 {
            assert_eq!(meas.pixel(j), f.analyze_real(x.pixel(j)).as_slice());
        }
    }

    #[test]
    fn empty_pattern_gives_no_rows() {
        let x = small_volume();
        let w = build_dft_levels(64, 2).unwrap();
        let p = sample_mls::<f64>(&w, &[0; 4], 0).unwrap();
        let meas = acquire(&x, &p, &NoiseModel::none()).unwrap();
        assert_eq!(meas.rows(), 0);
        assert!(meas.pixel(3).is_empty());
    }

    #[test]
    fn noise_respects_bound() {
        for eps in [1e-3, 0.5, 30.0] {
            let model = NoiseModel::bounded(eps, 4);
            for j in 0..20 {
                let w = model.pixel_noise::<f64>(64, 9, j);
                let nrm = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                assert!(nrm <= eps / 3.0, "{nrm} > {}", eps / 3.0);
            }
        }
        assert!(NoiseModel::none().pixel_noise::<f64>(8, 1, 0).iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn approach_must_match_pattern() {
        let x = small_volume();
        let p = sample_nyquist::<f64>(64).unwrap();
        let meas = acquire(&x, &p, &NoiseModel::none()).unwrap();
        let opts = ReconOptions {
            psi: Basis::Dft,
            approach: Approach::InitialVds,
            c: 1.0,
            k_total: 4,
            solver: SolverOptions::default(),
        };
        assert!(reconstruct(&meas, &opts).is_err());
    }

    #[test]
    fn nyquist_reconstruction_is_exact() {
        let x = small_volume();
        let p = sample_nyquist::<f64>(64).unwrap();
        let meas = acquire(&x, &p, &NoiseModel::none()).unwrap();
        let opts = ReconOptions {
            psi: Basis::Dhw,
            approach: Approach::MlsThisWork,
            c: 1.0,
            k_total: 4,
            solver: SolverOptions::default(),
        };
        let (xh, rep) = reconstruct(&meas, &opts).unwrap();
        for (a, b) in xh.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert_eq!(rep.count(SolverStatus::Converged), 4);
        assert_eq!(xh.shape(), Some((2, 2)));
    }

    #[test]
    fn sigma_of_sparse_is_zero() {
        let t = build_dhw_sparsity_levels(8).unwrap();
        let mut c = vec![Complex::new(0.0, 0.0); 8];
        c[0] = Complex::new(2.0, 0.0);
        c[5] = Complex::new(-1.0, 0.0);
        c[6] = Complex::new(0.5, 0.0);
        assert_eq!(sigma_kt(&c, &[1, 0, 2], &t).unwrap(), 0.0);
        assert_eq!(sigma_kt(&c, &[1, 0, 1], &t).unwrap(), 0.5);
        assert_eq!(sigma_kt(&c, &[0, 0, 0], &t).unwrap(), 3.5);
    }

    #[test]
    fn identical_volumes_report_zero_error() {
        let x = small_volume();
        let t = build_dhw_sparsity_levels(64).unwrap();
        let params = error_bound_params::<f64>(Approach::MlsThisWork, 10, 64, 4, 1, 1.0).unwrap();
        let rep = error_report(&x, &x, &vec![1; t.r()], &t, Basis::Dhw, &params, 0.0).unwrap();
        assert_eq!(rep.aggregate_error, 0.0);
        assert!(rep.bound_holds);
        assert_eq!(rep.median_rel_sq_error, 0.0);
    }

    #[test]
    fn measurement_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.bin");
        let x = small_volume();
        let w = build_dft_levels(64, 2).unwrap();
        let p = sample_mls::<f64>(&w, &[4, 4, 0, 0], 3).unwrap();
        let meas = acquire(&x, &p, &NoiseModel::bounded(0.1, 2)).unwrap();
        meas.write(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 * 4 * 16);
        assert_eq!(CiFtiMeasurements::<f64>::read(&path).unwrap(), meas);
    }
}
