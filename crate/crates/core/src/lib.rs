//! Multilevel illumination coding for compressive Fourier transform
//! interferometry: transforms, level schemes, coherence analysis, sampling
//! patterns, an ℓ₁ solver and the end-to-end reconstruction pipeline.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for the common case.
//!
//! ```
//! use mlfti::levels::build_dft_levels;
//! use mlfti::sampling::sample_mls;
//! use mlfti::solver::{solve_bpdn, BpdnProblem, SolverOptions};
//! use mlfti::transforms::{Basis, Fourier};
//!
//! let n = 256;
//! let x: Vec<f64> = (0..n).map(|t| (-((t as f64 - 90.0) / 12.0).powi(2)).exp()).collect();
//! let w = build_dft_levels(n, 4)?;
//! let mut m = vec![0; w.r()];
//! m[0] = 16;
//! m[1] = 16;
//! let pattern = sample_mls::<f64>(&w, &m, 1)?;
//! let xh = Fourier::<f64>::new(n)?.analyze_real(&x);
//! let y = pattern.omega.iter().map(|&i| xh[i]).collect();
//! let problem = BpdnProblem::new(y, pattern, Basis::Dhw, 1e-6)?;
//! let result = solve_bpdn(&problem, &SolverOptions::default())?;
//! println!("{:?} after {} iterations", result.status, result.iterations);
//! # Ok::<(), mlfti::Error>(())
//! ```

pub mod coherence;
pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod levels;
pub mod recon;
pub mod sampling;
pub mod scalar;
pub mod solver;
pub mod transforms;
pub mod volume;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type HsVolumeF64 = volume::HsVolume<f64>;
pub type HsVolumeF32 = volume::HsVolume<f32>;
pub type SpectralDictionaryF64 = dictionary::SpectralDictionary<f64>;
pub type SpectralDictionaryF32 = dictionary::SpectralDictionary<f32>;
pub type SamplingPatternF64 = sampling::SamplingPattern<f64>;
pub type SamplingPatternF32 = sampling::SamplingPattern<f32>;
pub type BpdnProblemF64 = solver::BpdnProblem<f64>;
pub type BpdnProblemF32 = solver::BpdnProblem<f32>;
pub type CiFtiMeasurementsF64 = recon::CiFtiMeasurements<f64>;
pub type CiFtiMeasurementsF32 = recon::CiFtiMeasurements<f32>;
pub type CoherenceMatrixF64 = coherence::CoherenceMatrix<f64>;
pub type FourierF64 = transforms::Fourier<f64>;
pub type FourierF32 = transforms::Fourier<f32>;
