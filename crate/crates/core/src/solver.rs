//! Weighted basis pursuit denoise for one real spectrum:
//!
//! ```text
//! minimize ‖Ψ* u‖₁  subject to  ‖D (y − P_Ω Φ* u)‖ ≤ τ
//! ```
//!
//! with `Φ` the unitary DFT. The unknown is real and the measurements are
//! complex; real and imaginary residual parts share one Euclidean norm.
//!
//! The method is ADMM on the splitting `s = Ψ* u`, `z = D P_Ω Φ* u`. Every
//! quantity is kept in the Fourier domain, where the normal operator of the
//! measurement map restricted to real signals is diagonal, so the `u`-update
//! is an elementwise division. A final step moves `u` along the
//! least-squares direction just far enough to satisfy the constraint.

use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SamplingPattern;
use crate::scalar::Scalar;
use crate::transforms::{haar_analyze_in_place, haar_synthesize_in_place, Basis, Fourier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Converged,
    MaxIter,
    InfeasibleTolerance,
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIter => "max-iter",
            SolverStatus::InfeasibleTolerance => "infeasible-tolerance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub feas_tol: f64,
    pub opt_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            feas_tol: 1e-6,
            opt_tol: 1e-6,
        }
    }
}

/// One spectrum's problem. The sensing basis is always the DFT.
#[derive(Debug, Clone)]
pub struct BpdnProblem<T> {
    pub y: Vec<Complex<T>>,
    pub pattern: SamplingPattern<T>,
    pub psi: Basis,
    pub tau: T,
}

impl<T: Scalar> BpdnProblem<T> {
    pub fn new(y: Vec<Complex<T>>, pattern: SamplingPattern<T>, psi: Basis, tau: T) -> Result<Self> {
        let p = Self { y, pattern, psi, tau };
        p.check()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn check(&self) -> Result<()> {
        self.pattern.check()?;
        if self.y.len() != self.pattern.len() {
            return Err(Error::Dimension(format!(
                "{} measurements for {} samples",
                self.y.len(),
                self.pattern.len()
            )));
        }
        if !(self.tau >= T::zero() && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau = {} must be finite and >= 0", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult<T> {
    pub u: Vec<T>,
    /// `‖Ψ* u‖₁`.
    pub objective: T,
    /// `‖D (y − P_Ω Φ* u)‖`.
    pub residual: T,
    pub iterations: usize,
    pub status: SolverStatus,
    /// Radius actually enforced; differs from `tau` only when `tau = 0`.
    pub tau_effective: T,
    /// Distance from `D y` to the range of the weighted measurement map.
    pub distance_to_range: T,
}

/// `‖D (y − P_Ω Φ* u)‖`, recomputed from scratch.
pub fn residual_check<T: Scalar>(u: &[T], p: &BpdnProblem<T>) -> Result<T> {
    if u.len() != p.n() {
        return Err(Error::Dimension(format!("u has length {}, expected {}", u.len(), p.n())));
    }
    let uh = Fourier::<T>::new(p.n())?.analyze_real(u);
    let sq = p
        .pattern
        .omega
        .iter()
        .zip(&p.pattern.weights)
        .zip(&p.y)
        .map(|((&i, &d), &y)| ((y - uh[i]) * d).norm_sqr())
        .sum::<T>();
    Ok(sq.sqrt())
}

pub fn solve_bpdn<T: Scalar>(p: &BpdnProblem<T>, opts: &SolverOptions) -> Result<SolverResult<T>> {
    p.check()?;
    Ok(BpdnSolver::new(&p.pattern, p.psi)?.solve(&p.y, p.tau, opts))
}

/// Pattern-dependent precomputation, shared across many right-hand sides.
#[derive(Debug, Clone)]
pub struct BpdnSolver<T: Scalar> {
    n: usize,
    psi: Basis,
    fourier: Fourier<T>,
    omega: Vec<usize>,
    weights: Vec<T>,
    mirror: Vec<usize>,
    /// Diagonal of the normal operator in the Fourier domain.
    lambda: Vec<T>,
}

fn zero<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

fn norm<T: Scalar>(v: &[Complex<T>]) -> T {
    v.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt()
}

impl<T: Scalar> BpdnSolver<T> {
    pub fn new(pattern: &SamplingPattern<T>, psi: Basis) -> Result<Self> {
        pattern.check()?;
        let n = pattern.n;
        let fourier = Fourier::new(n)?;
        let conv = fourier.convention();
        let mirror: Vec<usize> = (0..n).map(|s| conv.mirror(s)).collect();
        let mut w = vec![T::zero(); n];
        for (&i, &d) in pattern.omega.iter().zip(&pattern.weights) {
            w[i] = w[i] + d * d;
        }
        let half = T::of(0.5);
        let lambda = (0..n).map(|s| (w[s] + w[mirror[s]]) * half).collect();
        Ok(Self {
            n,
            psi,
            fourier,
            omega: pattern.omega.clone(),
            weights: pattern.weights.clone(),
            mirror,
            lambda,
        })
    }

    /// Hermitian part: the Fourier image of `Re(Φ g)`.
    fn sym_into(&self, g: &[Complex<T>], out: &mut [Complex<T>]) {
        let half = T::of(0.5);
        for s in 0..self.n {
            out[s] = (g[s] + g[self.mirror[s]].conj()) * half;
        }
    }

    /// Fourier image of `Re(A* v)` with `A = D P_Ω Φ*`.
    fn adjoint_into(&self, v: &[Complex<T>], scratch: &mut [Complex<T>], out: &mut [Complex<T>]) {
        scratch.iter_mut().for_each(|c| *c = zero());
        for ((&i, &d), &vi) in self.omega.iter().zip(&self.weights).zip(v) {
            scratch[i] = scratch[i] + vi * d;
        }
        self.sym_into(scratch, out);
    }

    fn forward_into(&self, uh: &[Complex<T>], out: &mut [Complex<T>]) {
        for ((o, &i), &d) in out.iter_mut().zip(&self.omega).zip(&self.weights) {
            *o = uh[i] * d;
        }
    }

    /// Least-squares Fourier coefficients on the sampled frequencies; the
    /// rest are copied from `base`.
    fn least_squares(&self, yd: &[Complex<T>], base: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut scratch = vec![zero(); self.n];
        let mut g = vec![zero(); self.n];
        self.adjoint_into(yd, &mut scratch, &mut g);
        (0..self.n)
            .map(|s| {
                if self.lambda[s] > T::zero() {
                    g[s] / self.lambda[s]
                } else {
                    base[s]
                }
            })
            .collect()
    }

    /// `Ψ* u` from the Fourier coefficients of a real `u`.
    fn analyze_from_fourier(&self, uh: &[Complex<T>], out: &mut [Complex<T>], work: &mut [Complex<T>]) {
        match self.psi {
            Basis::Dft => out.copy_from_slice(uh),
            Basis::Dhw => {
                self.fourier.synthesize_into(uh, work);
                let mut re: Vec<T> = work.iter().map(|c| c.re).collect();
                haar_analyze_in_place(&mut re);
                for (o, v) in out.iter_mut().zip(re) {
                    *o = Complex::new(v, T::zero());
                }
            }
        }
    }

    /// Fourier image of `Re(Ψ v)`.
    fn synthesize_to_fourier(&self, v: &[Complex<T>], out: &mut [Complex<T>], work: &mut [Complex<T>]) {
        match self.psi {
            Basis::Dft => self.sym_into(v, out),
            Basis::Dhw => {
                let mut re: Vec<T> = v.iter().map(|c| c.re).collect();
                haar_synthesize_in_place(&mut re);
                for (w, r) in work.iter_mut().zip(re) {
                    *w = Complex::new(r, T::zero());
                }
                self.fourier.analyze_into(work, out);
            }
        }
    }

    fn real_signal(&self, uh: &[Complex<T>]) -> Vec<T> {
        self.fourier.synthesize_real(uh).values
    }

    pub fn solve(&self, y: &[Complex<T>], tau: T, opts: &SolverOptions) -> SolverResult<T> {
        let (n, m) = (self.n, self.omega.len());
        assert_eq!(y.len(), m, "measurement count must match the pattern");
        let yd: Vec<Complex<T>> = y.iter().zip(&self.weights).map(|(&v, &d)| v * d).collect();
        let yd_norm = norm(&yd);

        let uh_ls = self.least_squares(&yd, &vec![zero(); n]);
        let mut ls_image = vec![zero(); m];
        self.forward_into(&uh_ls, &mut ls_image);
        let r_perp: Vec<Complex<T>> = yd.iter().zip(&ls_image).map(|(&a, &b)| a - b).collect();
        let distance_to_range = norm(&r_perp);

        let tau_eff = if tau > T::zero() { tau } else { T::of(1e-12) * yd_norm };
        let feas_slack = T::of(opts.feas_tol);

        if distance_to_range > tau_eff * (T::one() + feas_slack) {
            log::debug!("tau {tau_eff} below distance to range {distance_to_range}");
            return self.finish(uh_ls, &yd, 0, SolverStatus::InfeasibleTolerance, tau_eff, distance_to_range);
        }
        if yd_norm <= tau_eff || yd_norm == T::zero() {
            // u = 0 is feasible and optimal
            return self.finish(vec![zero(); n], &yd, 0, SolverStatus::Converged, tau_eff, distance_to_range);
        }

        let tol = T::of(opts.opt_tol);
        let mut rho = T::of_usize(n).sqrt() / yd_norm;
        let mut uh = uh_ls.clone();
        let mut su = vec![zero(); n];
        let mut work = vec![zero(); n];
        let mut scratch = vec![zero(); n];
        self.analyze_from_fourier(&uh, &mut su, &mut work);
        let mut au = vec![zero(); m];
        self.forward_into(&uh, &mut au);
        let mut s = su.clone();
        let mut z = au.clone();
        project_ball(&mut z, &yd, tau_eff);
        let mut a = vec![zero(); n];
        let mut b = vec![zero(); m];
        let mut v1 = vec![zero(); n];
        let mut v2 = vec![zero(); m];
        let mut rhs = vec![zero(); n];
        let mut rhs2 = vec![zero(); n];
        let mut dz_img = vec![zero(); n];
        let mut dz = vec![zero(); m];

        let mut iterations = 0;
        let mut converged = false;
        while iterations < opts.max_iter {
            iterations += 1;
            for k in 0..n {
                v1[k] = s[k] - a[k];
            }
            for k in 0..m {
                v2[k] = z[k] - b[k];
            }
            self.synthesize_to_fourier(&v1, &mut rhs, &mut work);
            self.adjoint_into(&v2, &mut scratch, &mut rhs2);
            for k in 0..n {
                uh[k] = (rhs[k] + rhs2[k]) / (T::one() + self.lambda[k]);
            }
            self.analyze_from_fourier(&uh, &mut su, &mut work);
            self.forward_into(&uh, &mut au);

            let thresh = T::one() / rho;
            let mut ds_sq = T::zero();
            let mut r_sq = T::zero();
            for k in 0..n {
                let new = soft(su[k] + a[k], thresh);
                ds_sq = ds_sq + (new - s[k]).norm_sqr();
                s[k] = new;
                let r = su[k] - new;
                r_sq = r_sq + r.norm_sqr();
                a[k] = a[k] + r;
            }
            for k in 0..m {
                dz[k] = au[k] + b[k];
            }
            project_ball(&mut dz, &yd, tau_eff);
            for k in 0..m {
                let new = dz[k];
                dz[k] = new - z[k];
                z[k] = new;
                let r = au[k] - new;
                r_sq = r_sq + r.norm_sqr();
                b[k] = b[k] + r;
            }
            self.adjoint_into(&dz, &mut scratch, &mut dz_img);
            let primal = r_sq.sqrt();
            let dual = rho * (ds_sq + dz_img.iter().map(|c| c.norm_sqr()).sum::<T>()).sqrt();

            let x_scale = (norm(&su).powi(2) + norm(&au).powi(2))
                .sqrt()
                .max((norm(&s).powi(2) + norm(&z).powi(2)).sqrt());
            self.adjoint_into(&b, &mut scratch, &mut dz_img);
            let y_scale = rho * (norm(&a).powi(2) + norm(&dz_img).powi(2)).sqrt();
            if primal <= tol * x_scale && dual <= tol * y_scale {
                converged = true;
                break;
            }

            if iterations % 10 == 0 {
                // compare relative residuals so the schedule ignores the data scale
                let (rp, rd) = (primal / x_scale, dual / y_scale);
                let ten = T::of(10.0);
                let factor = if rp > ten * rd {
                    T::of(2.0)
                } else if rd > ten * rp {
                    T::of(0.5)
                } else {
                    T::one()
                };
                if factor != T::one() {
                    rho = rho * factor;
                    a.iter_mut().for_each(|c| *c = *c / factor);
                    b.iter_mut().for_each(|c| *c = *c / factor);
                }
            }
        }

        let uh = self.polish(uh, &uh_ls, &yd, tau_eff);
        let status = if converged {
            SolverStatus::Converged
        } else {
            SolverStatus::MaxIter
        };
        self.finish(uh, &yd, iterations, status, tau_eff, distance_to_range)
    }

    /// Move towards the least-squares point until the constraint holds.
    ///
    /// The residual splits orthogonally into a part `r_perp` outside the
    /// range, unchanged by the move, and a part `r_range` that shrinks by
    /// `(1 − θ)`.
    fn polish(&self, uh: Vec<Complex<T>>, uh_ls: &[Complex<T>], yd: &[Complex<T>], tau: T) -> Vec<Complex<T>> {
        let m = self.omega.len();
        let target = self.least_squares(yd, &uh);
        let mut au = vec![zero(); m];
        let mut at = vec![zero(); m];
        self.forward_into(&uh, &mut au);
        self.forward_into(uh_ls, &mut at);
        let r_perp_sq: T = yd.iter().zip(&at).map(|(&a, &b)| (a - b).norm_sqr()).sum();
        let r_range_sq: T = at.iter().zip(&au).map(|(&a, &b)| (a - b).norm_sqr()).sum();
        let room = tau * tau - r_perp_sq;
        if r_perp_sq + r_range_sq <= tau * tau || r_range_sq == T::zero() {
            return uh;
        }
        // keep a sliver of slack so rounding cannot push the result outside
        let keep = if room > T::zero() {
            (room / r_range_sq).sqrt() * (T::one() - T::of(1e-9))
        } else {
            T::zero()
        };
        let theta = T::one() - keep.min(T::one());
        uh.iter()
            .zip(&target)
            .map(|(&u, &t)| u + (t - u) * theta)
            .collect()
    }

    fn finish(
        &self,
        uh: Vec<Complex<T>>,
        yd: &[Complex<T>],
        iterations: usize,
        status: SolverStatus,
        tau_effective: T,
        distance_to_range: T,
    ) -> SolverResult<T> {
        let u = self.real_signal(&uh);
        let uh = self.fourier.analyze_real(&u);
        let mut au = vec![zero(); self.omega.len()];
        self.forward_into(&uh, &mut au);
        let residual = yd
            .iter()
            .zip(&au)
            .map(|(&a, &b)| (a - b).norm_sqr())
            .sum::<T>()
            .sqrt();
        let mut coeffs = vec![zero(); self.n];
        let mut work = vec![zero(); self.n];
        self.analyze_from_fourier(&uh, &mut coeffs, &mut work);
        let objective = coeffs.iter().map(|c| c.norm()).sum();
        SolverResult {
            u,
            objective,
            residual,
            iterations,
            status,
            tau_effective,
            distance_to_range,
        }
    }
}

fn soft<T: Scalar>(c: Complex<T>, t: T) -> Complex<T> {
    let mag = c.norm();
    if mag <= t {
        zero()
    } else {
        c * ((mag - t) / mag)
    }
}

fn project_ball<T: Scalar>(v: &mut [Complex<T>], center: &[Complex<T>], radius: T) {
    let d = v
        .iter()
        .zip(center)
        .map(|(&a, &c)| (a - c).norm_sqr())
        .sum::<T>()
        .sqrt();
    if d > radius {
        let f = radius / d;
        for (a, &c) in v.iter_mut().zip(center) {
            *a = c + (*a - c) * f;
        }
    }
}
