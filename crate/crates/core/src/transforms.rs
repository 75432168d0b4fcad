//! Unitary 1-D Fourier and Haar operators.
//!
//! Fourier coefficients are stored in *centered* order: storage index `s`
//! (0-based) holds frequency `f(s) = s + 1 - N/2`, so frequencies run over
//! `-N/2 + 1 ..= N/2` and the DC term sits at `s = N/2 - 1`. Every module that
//! reasons about frequencies (levels, sampling, coherence) goes through
//! [`IndexConvention`].
//!
//! Haar coefficients are ordered scaling coefficient first, then the wavelet
//! levels from coarse to fine, each level ordered by translation.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn check_length(n: usize) -> Result<()> {
    if n >= 2 && n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::NotPowerOfTwo(n))
    }
}

/// Storage-to-frequency map of the centered Fourier layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexConvention {
    n: usize,
}

impl IndexConvention {
    pub fn new(n: usize) -> Result<Self> {
        check_length(n)?;
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frequency stored at 0-based storage index `s`.
    #[inline]
    pub fn frequency(&self, s: usize) -> i64 {
        s as i64 + 1 - (self.n / 2) as i64
    }

    /// Storage index of frequency `f`, which must lie in `-N/2 + 1 ..= N/2`.
    #[inline]
    pub fn storage(&self, f: i64) -> usize {
        debug_assert!(f > -((self.n / 2) as i64) && f <= (self.n / 2) as i64);
        (f + (self.n / 2) as i64 - 1) as usize
    }

    #[inline]
    pub fn dc(&self) -> usize {
        self.n / 2 - 1
    }

    /// Storage index of `-f(s)`, folded back into range (the Nyquist
    /// frequency is its own mirror).
    #[inline]
    pub fn mirror(&self, s: usize) -> usize {
        let half = (self.n / 2) as i64;
        let f = self.frequency(s);
        if f == half {
            s
        } else {
            self.storage(-f)
        }
    }

    /// FFT bin (natural order) holding storage index `s`.
    #[inline]
    fn bin(&self, s: usize) -> usize {
        (s + 1 + self.n / 2) % self.n
    }
}

/// Label of an orthonormal basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Dft,
    Dhw,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Dft => "dft",
            Basis::Dhw => "dhw",
        })
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dft" => Ok(Basis::Dft),
            "dhw" | "haar" => Ok(Basis::Dhw),
            other => Err(Error::InvalidArgument(format!("unknown basis '{other}'"))),
        }
    }
}

/// Unitary DFT with cached plans.
#[derive(Clone)]
pub struct Fourier<T: Scalar> {
    conv: IndexConvention,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Scalar> fmt::Debug for Fourier<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier").field("n", &self.conv.n).finish()
    }
}

impl<T: Scalar> Fourier<T> {
    pub fn new(n: usize) -> Result<Self> {
        let conv = IndexConvention::new(n)?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            conv,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scale: T::one() / T::of_usize(n).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.conv.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn convention(&self) -> IndexConvention {
        self.conv
    }

    /// Analysis `Φ* x` of a complex signal, written in centered order.
    pub fn analyze_into(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        let n = self.conv.n;
        assert_eq!(x.len(), n);
        assert_eq!(out.len(), n);
        let mut buf = x.to_vec();
        self.forward.process(&mut buf);
        for (s, o) in out.iter_mut().enumerate() {
            *o = buf[self.conv.bin(s)] * self.scale;
        }
    }

    pub fn analyze_real(&self, x: &[T]) -> Vec<Complex<T>> {
        let buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.conv.n];
        self.analyze_into(&buf, &mut out);
        out
    }

    /// Synthesis `Φ y` from centered coefficients.
    pub fn synthesize_into(&self, y: &[Complex<T>], out: &mut [Complex<T>]) {
        let n = self.conv.n;
        assert_eq!(y.len(), n);
        assert_eq!(out.len(), n);
        for (s, &v) in y.iter().enumerate() {
            out[self.conv.bin(s)] = v * self.scale;
        }
        self.inverse.process(out);
    }

    pub fn synthesize(&self, y: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.conv.n];
        self.synthesize_into(y, &mut out);
        out
    }

    /// Real part of `Φ y`, along with the largest discarded imaginary part.
    pub fn synthesize_real(&self, y: &[Complex<T>]) -> RealSignal<T> {
        let full = self.synthesize(y);
        let imag_residue = full.iter().fold(T::zero(), |m, c| m.max(c.im.abs()));
        RealSignal {
            values: full.into_iter().map(|c| c.re).collect(),
            imag_residue,
        }
    }
}

/// Output of a real-valued synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSignal<T> {
    pub values: Vec<T>,
    /// Largest magnitude of the imaginary part that was dropped.
    pub imag_residue: T,
}

/// Unitary DFT `Φ* x` of a real signal, in centered order.
pub fn dft_forward<T: Scalar>(x: &[T]) -> Result<Vec<Complex<T>>> {
    Ok(Fourier::new(x.len())?.analyze_real(x))
}

/// Inverse of [`dft_forward`]; the imaginary residue is discarded.
///
/// Inputs that are not conjugate symmetric leave an imaginary part behind;
/// its size is kept in [`RealSignal::imag_residue`] and logged when it is
/// above `1e-10` relative to the input norm.
pub fn dft_inverse<T: Scalar>(y: &[Complex<T>]) -> Result<RealSignal<T>> {
    let out = Fourier::new(y.len())?.synthesize_real(y);
    let norm = y.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt();
    let limit = T::of(1e-10).max(T::tolerance_floor()) * norm.max(T::one());
    if out.imag_residue > limit {
        log::warn!(
            "dft_inverse dropped an imaginary residue of {} (input not conjugate symmetric)",
            out.imag_residue
        );
    } else if out.imag_residue > T::zero() {
        log::trace!("dft_inverse dropped an imaginary residue of {}", out.imag_residue);
    }
    Ok(out)
}

/// Orthonormal Haar analysis `Ψ* x`.
pub fn dhw_forward<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    check_length(x.len())?;
    let mut out = x.to_vec();
    haar_analyze_in_place(&mut out);
    Ok(out)
}

/// Orthonormal Haar synthesis `Ψ s`.
pub fn dhw_inverse<T: Scalar>(s: &[T]) -> Result<Vec<T>> {
    check_length(s.len())?;
    let mut out = s.to_vec();
    haar_synthesize_in_place(&mut out);
    Ok(out)
}

pub(crate) fn haar_analyze_in_place<T: Scalar>(data: &mut [T]) {
    let r = T::FRAC_1_SQRT_2();
    let mut tmp = vec![T::zero(); data.len()];
    let mut len = data.len();
    while len > 1 {
        let half = len / 2;
        for k in 0..half {
            let (a, b) = (data[2 * k], data[2 * k + 1]);
            tmp[k] = (a + b) * r;
            tmp[half + k] = (a - b) * r;
        }
        data[..len].copy_from_slice(&tmp[..len]);
        len = half;
    }
}

pub(crate) fn haar_synthesize_in_place<T: Scalar>(data: &mut [T]) {
    let r = T::FRAC_1_SQRT_2();
    let mut tmp = vec![T::zero(); data.len()];
    let mut len = 2;
    while len <= data.len() {
        let half = len / 2;
        for k in 0..half {
            let (a, d) = (data[k], data[half + k]);
            tmp[2 * k] = (a + d) * r;
            tmp[2 * k + 1] = (a - d) * r;
        }
        data[..len].copy_from_slice(&tmp[..len]);
        len *= 2;
    }
}

/// A sparsity basis `Ψ` acting on real signals.
///
/// Coefficients are always complex; the Haar coefficients simply carry a
/// zero imaginary part.
#[derive(Debug, Clone)]
pub struct SparsityTransform<T: Scalar> {
    basis: Basis,
    fourier: Fourier<T>,
}

impl<T: Scalar> SparsityTransform<T> {
    pub fn new(basis: Basis, n: usize) -> Result<Self> {
        Ok(Self {
            basis,
            fourier: Fourier::new(n)?,
        })
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn len(&self) -> usize {
        self.fourier.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fourier(&self) -> &Fourier<T> {
        &self.fourier
    }

    /// `Ψ* u`.
    pub fn analyze(&self, u: &[T]) -> Vec<Complex<T>> {
        match self.basis {
            Basis::Dft => self.fourier.analyze_real(u),
            Basis::Dhw => {
                let mut c = u.to_vec();
                haar_analyze_in_place(&mut c);
                c.into_iter().map(|v| Complex::new(v, T::zero())).collect()
            }
        }
    }

    /// `Re(Ψ s)`.
    pub fn synthesize_real(&self, s: &[Complex<T>]) -> Vec<T> {
        match self.basis {
            Basis::Dft => self.fourier.synthesize_real(s).values,
            Basis::Dhw => {
                let mut c: Vec<T> = s.iter().map(|z| z.re).collect();
                haar_synthesize_in_place(&mut c);
                c
            }
        }
    }

    /// Atom `Ψ e_j` as a complex vector.
    pub fn atom(&self, j: usize) -> Vec<Complex<T>> {
        let n = self.len();
        let zero = Complex::new(T::zero(), T::zero());
        let mut e = vec![zero; n];
        e[j] = Complex::new(T::one(), T::zero());
        match self.basis {
            Basis::Dft => self.fourier.synthesize(&e),
            Basis::Dhw => {
                let mut c = vec![T::zero(); n];
                c[j] = T::one();
                haar_synthesize_in_place(&mut c);
                c.into_iter().map(|v| Complex::new(v, T::zero())).collect()
            }
        }
    }
}
