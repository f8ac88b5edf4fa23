//! Target potentials `U(θ)` with `p*(θ) ∝ e^{-U(θ)}`.
//!
//! Every potential obeys the shift convention `U(0) = 0`, `∇U(0) = 0` and
//! reports its smoothness and normalisation constants through
//! [`PotentialConstants`].

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

/// Constants consumed by the step-size schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialConstants<T> {
    /// Gradient Lipschitz constant.
    pub l_g: T,
    /// Hessian Lipschitz constant in Frobenius norm.
    pub l_h: T,
    /// Strong convexity (global for quadratics, outside the ball otherwise).
    pub m: Option<T>,
    /// Radius of the nonconvex region.
    pub r: Option<T>,
    /// Log-Sobolev constant, capped at one.
    pub rho: T,
    /// Normaliser constants: `ln ∫e^{-U} ≤ c_n·d + c_m`.
    pub c_n: T,
    pub c_m: T,
}

impl<T: Real> PotentialConstants<T> {
    /// `C_N + ½ ln(L_G / 2π)`.
    pub fn c_n_tilde(&self) -> T {
        self.c_n + T::lit(0.5) * (self.l_g / (T::lit(2.0) * T::PI())).ln()
    }
}

pub trait Potential<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, theta: &[T]) -> Result<T>;

    fn grad_into(&self, theta: &[T], out: &mut [T]) -> Result<()>;

    fn grad(&self, theta: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim()];
        self.grad_into(theta, &mut out)?;
        Ok(out)
    }

    fn hessian(&self, theta: &[T]) -> Result<Matrix<T>>;

    fn constants(&self) -> PotentialConstants<T>;

    fn l_g(&self) -> T {
        self.constants().l_g
    }

    fn l_h(&self) -> T {
        self.constants().l_h
    }

    fn as_quadratic(&self) -> Option<&QuadraticPotential<T>> {
        None
    }
}

/// `∇U(θ)`.
pub fn eval_grad<T: Real, P: Potential<T> + ?Sized>(p: &P, theta: &[T]) -> Result<Vec<T>> {
    p.grad(theta)
}

pub fn constants<T: Real, P: Potential<T> + ?Sized>(p: &P) -> PotentialConstants<T> {
    p.constants()
}

/// `U(θ) = ½ θᵀAθ` with `A` symmetric positive definite.
#[derive(Clone, Debug)]
pub struct QuadraticPotential<T> {
    spectrum: Vec<T>,
    /// Eigenvectors of `A` as columns; `None` means `A` is already diagonal.
    basis: Option<Matrix<T>>,
}

impl<T: Real> QuadraticPotential<T> {
    pub fn from_spectrum(spectrum: Vec<T>) -> Result<Self> {
        if spectrum.is_empty() {
            return Err(Error::invalid("empty spectrum"));
        }
        if let Some(bad) = spectrum.iter().find(|&&l| !(l > T::zero()) || !l.is_finite()) {
            return Err(Error::invalid(format!("eigenvalue {bad} is not positive and finite")));
        }
        Ok(Self { spectrum, basis: None })
    }

    /// Eigendecomposes a symmetric positive definite `A`.
    pub fn from_matrix(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid("quadratic form must be square"));
        }
        let tol = T::lit(1e3) * T::epsilon() * a.max_abs();
        if !a.is_symmetric(tol) {
            return Err(Error::invalid("quadratic form must be symmetric"));
        }
        let (values, vectors) = a.sym_eigen()?;
        let mut q = Self::from_spectrum(values)?;
        q.basis = Some(vectors);
        Ok(q)
    }

    /// Spectrum log-spaced over `[1, kappa]`.
    pub fn log_spaced(d: usize, kappa: T) -> Result<Self> {
        if d == 0 || !(kappa >= T::one()) {
            return Err(Error::invalid("log-spaced spectrum needs d ≥ 1 and kappa ≥ 1"));
        }
        let spectrum = (0..d)
            .map(|i| {
                if d == 1 {
                    T::one()
                } else {
                    kappa.powf(T::from_usize_lossy(i) / T::from_usize_lossy(d - 1))
                }
            })
            .collect();
        Self::from_spectrum(spectrum)
    }

    pub fn spectrum(&self) -> &[T] {
        &self.spectrum
    }

    pub fn basis(&self) -> Option<&Matrix<T>> {
        self.basis.as_ref()
    }

    pub fn min_eigenvalue(&self) -> T {
        self.spectrum.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_eigenvalue(&self) -> T {
        self.spectrum.iter().copied().fold(T::zero(), T::max)
    }

    /// Coordinates of `θ` in the eigenbasis of `A`.
    pub fn to_eigenbasis(&self, theta: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), theta.len())?;
        Ok(match &self.basis {
            None => theta.to_vec(),
            Some(v) => v.transpose().mul_vec(theta)?,
        })
    }

    pub fn from_eigenbasis(&self, coords: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), coords.len())?;
        Ok(match &self.basis {
            None => coords.to_vec(),
            Some(v) => v.mul_vec(coords)?,
        })
    }

    /// `ln ∫ e^{-U} = ½ Σ ln(2π/λ_i)`.
    pub fn log_normalizer(&self) -> T {
        let two_pi = T::lit(2.0) * T::PI();
        self.spectrum.iter().map(|&l| (two_pi / l).ln()).sum::<T>() * T::lit(0.5)
    }
}

impl<T: Real> Potential<T> for QuadraticPotential<T> {
    fn dim(&self) -> usize {
        self.spectrum.len()
    }

    fn value(&self, theta: &[T]) -> Result<T> {
        let y = self.to_eigenbasis(theta)?;
        Ok(y.iter().zip(&self.spectrum).map(|(&yi, &l)| l * yi * yi).sum::<T>() * T::lit(0.5))
    }

    fn grad_into(&self, theta: &[T], out: &mut [T]) -> Result<()> {
        check_dim(self.dim(), out.len())?;
        match &self.basis {
            None => {
                check_dim(self.dim(), theta.len())?;
                for ((o, &t), &l) in out.iter_mut().zip(theta).zip(&self.spectrum) {
                    *o = l * t;
                }
            }
            Some(_) => {
                let y: Vec<T> = self.to_eigenbasis(theta)?.iter().zip(&self.spectrum).map(|(&y, &l)| l * y).collect();
                out.copy_from_slice(&self.from_eigenbasis(&y)?);
            }
        }
        Ok(())
    }

    fn hessian(&self, theta: &[T]) -> Result<Matrix<T>> {
        check_dim(self.dim(), theta.len())?;
        let diag = Matrix::from_diag(&self.spectrum);
        match &self.basis {
            None => Ok(diag),
            Some(v) => v.matmul(&diag)?.matmul(&v.transpose()),
        }
    }

    fn constants(&self) -> PotentialConstants<T> {
        let m = self.min_eigenvalue();
        let d = T::from_usize_lossy(self.dim());
        PotentialConstants {
            l_g: self.max_eigenvalue(),
            l_h: T::zero(),
            m: Some(m),
            r: None,
            rho: m.min(T::one()),
            c_n: self.log_normalizer() / d,
            c_m: T::zero(),
        }
    }

    fn as_quadratic(&self) -> Option<&QuadraticPotential<T>> {
        Some(self)
    }
}

/// `U(θ) = (m/2)‖θ‖² + a (e^{-‖θ‖²/(2s²)} - 1)` with `a ≥ 0`.
///
/// The Gaussian bump makes `U` nonconvex near the origin when `a/s² > m`
/// and its curvature deficit decays outside radius `R`.
#[derive(Clone, Debug)]
pub struct LocallyNonconvexPotential<T> {
    dim: usize,
    m: T,
    radius: T,
    amplitude: T,
    width: T,
    l_g: T,
    l_h: T,
    m_outer: T,
}

impl<T: Real> LocallyNonconvexPotential<T> {
    pub fn new(dim: usize, m: T, radius: T, amplitude: T, width: T) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !(m > T::zero()) || !(radius >= T::zero()) || !(amplitude >= T::zero()) || !(width > T::zero()) {
            return Err(Error::invalid("need m > 0, R ≥ 0, a ≥ 0, s > 0"));
        }
        let k = amplitude / (width * width);
        let two = T::lit(2.0);
        // Hessian eigenvalues: tangential m - k e^{-u/2}, radial
        // m - k e^{-u/2}(1 - u) with u = ‖θ‖²/s²; extremes at u = 0 and u = 3.
        let l_g = (m - k).abs().max(m + two * (-T::lit(1.5)).exp() * k);
        let m_outer = m - k * (-(radius * radius) / (two * width * width)).exp();
        if !(m_outer > T::zero()) {
            return Err(Error::invalid(format!(
                "bump does not decay by radius {radius}: outer curvature {m_outer} ≤ 0"
            )));
        }
        let l_h = amplitude / (width * width * width) * T::lit(third_derivative_profile(dim));
        Ok(Self { dim, m, radius, amplitude, width, l_g, l_h, m_outer })
    }

    /// One-dimensional instance `m = 1, a = 1, s = ½, R = 1`.
    pub fn default_instance(dim: usize) -> Result<Self> {
        Self::new(dim, T::one(), T::one(), T::one(), T::lit(0.5))
    }

    pub fn m(&self) -> T {
        self.m
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    pub fn width(&self) -> T {
        self.width
    }

    /// Strong convexity outside the ball of radius `R`.
    pub fn outer_convexity(&self) -> T {
        self.m_outer
    }

    fn bump(&self, sq_norm: T) -> T {
        (-sq_norm / (T::lit(2.0) * self.width * self.width)).exp()
    }
}

/// `max_ρ e^{-ρ²/2} (ρ √((d-1) + (1-ρ²)²) + 2ρ)`, which bounds the Frobenius
/// norm of the bump's third derivative in units of `a/s³`.
fn third_derivative_profile(dim: usize) -> f64 {
    let dm1 = (dim - 1) as f64;
    let f = |r: f64| (-0.5 * r * r).exp() * (r * (dm1 + (1.0 - r * r).powi(2)).sqrt() + 2.0 * r);
    let n = 20_000;
    let hi = 10.0;
    let (mut best_r, mut best) = (0.0, 0.0);
    for i in 0..=n {
        let r = hi * i as f64 / n as f64;
        let v = f(r);
        if v > best {
            best = v;
            best_r = r;
        }
    }
    // golden-section refinement around the grid maximum
    let step = hi / n as f64;
    let (mut a, mut b) = ((best_r - step).max(0.0), best_r + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(f(0.5 * (a + b))) * (1.0 + 1e-9)
}

/// The generic bounds for a locally nonconvex target with outer strong
/// convexity `m`, smoothness `l_g` and nonconvex radius `r`.
pub fn locally_nonconvex_bounds<T: Real>(m: T, l_g: T, r: T) -> PotentialConstants<T> {
    let two = T::lit(2.0);
    let rho = (m / two * (-T::lit(16.0) * l_g * r * r).exp()).min(T::one());
    PotentialConstants {
        l_g,
        l_h: T::zero(),
        m: Some(m),
        r: Some(r),
        rho,
        c_n: T::lit(0.5) * (T::lit(4.0) * T::PI() / m).ln(),
        c_m: T::lit(32.0) * (l_g * l_g / (m * m)) * l_g * r * r,
    }
}

impl<T: Real> Potential<T> for LocallyNonconvexPotential<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &[T]) -> Result<T> {
        check_dim(self.dim, theta.len())?;
        let q = dot(theta, theta);
        // a (e^{-x} - 1) = a · expm1(-x), exact near the origin
        let x = q / (T::lit(2.0) * self.width * self.width);
        Ok(self.m * q * T::lit(0.5) + self.amplitude * (-x).exp_m1())
    }

    fn grad_into(&self, theta: &[T], out: &mut [T]) -> Result<()> {
        check_dim(self.dim, theta.len())?;
        check_dim(self.dim, out.len())?;
        let coef = self.m - self.amplitude / (self.width * self.width) * self.bump(dot(theta, theta));
        for (o, &t) in out.iter_mut().zip(theta) {
            *o = coef * t;
        }
        Ok(())
    }

    fn hessian(&self, theta: &[T]) -> Result<Matrix<T>> {
        check_dim(self.dim, theta.len())?;
        let s2 = self.width * self.width;
        let g = self.amplitude / s2 * self.bump(dot(theta, theta));
        Ok(Matrix::from_fn(self.dim, self.dim, |i, j| {
            let diag = if i == j { self.m - g } else { T::zero() };
            diag + g * theta[i] * theta[j] / s2
        }))
    }

    fn constants(&self) -> PotentialConstants<T> {
        let mut c = locally_nonconvex_bounds(self.m_outer, self.l_g, self.radius);
        c.l_h = self.l_h;
        c
    }
}
