//! Exact law tracking for quadratic targets.
//!
//! Every sampler in this crate is affine in the state when `U` is quadratic,
//! so a Gaussian law stays Gaussian and can be propagated in closed form.
//! Phase-space laws are kept per eigenmode of `A` as independent 2×2 blocks
//! ([`ModalLaw`]); a dense [`GaussianLaw`] is available for small `n`.
//! All divergences are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::integrators::{underdamped_covariance, SamplerKind};
use crate::linalg::{solve_discrete_lyapunov, spectral_radius_small, Matrix};
use crate::potentials::QuadraticPotential;
use crate::scalar::{one_minus_exp_neg, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianLaw<T> {
    mean: Vec<T>,
    cov: Matrix<T>,
}

impl<T: Real> GaussianLaw<T> {
    pub fn new(mean: Vec<T>, cov: Matrix<T>) -> Result<Self> {
        check_dim(mean.len(), cov.rows())?;
        check_dim(mean.len(), cov.cols())?;
        let n = mean.len();
        let scale = cov.max_abs().max(T::min_positive_value());
        if !cov.is_symmetric(T::lit(1e3) * T::epsilon() * scale) {
            return Err(Error::NotPositiveSemidefinite("covariance is not symmetric".into()));
        }
        if n > 0 {
            let tol = T::lit(1e-12) * (cov.trace() / T::from_usize_lossy(n)).abs();
            let min = cov.min_eigenvalue()?;
            if min < -tol.max(T::epsilon() * scale) {
                return Err(Error::NotPositiveSemidefinite(format!("covariance eigenvalue {min}")));
            }
        }
        Ok(Self { mean, cov: cov.symmetrized() })
    }

    pub fn isotropic(n: usize, variance: T) -> Self {
        Self { mean: vec![T::zero(); n], cov: Matrix::identity(n).scale(variance) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix<T> {
        &self.cov
    }

    pub fn marginal(&self, idx: &[usize]) -> Self {
        Self { mean: idx.iter().map(|&i| self.mean[i]).collect(), cov: self.cov.submatrix(idx) }
    }

    /// Marginal on the first half of the coordinates of a phase-space law.
    pub fn theta_marginal(&self) -> Self {
        let d = self.dim() / 2;
        self.marginal(&(0..d).collect::<Vec<_>>())
    }
}

/// `x' = T x + w` with `w ~ N(0, noise)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineKernel<T> {
    pub transition: Matrix<T>,
    pub noise: GaussianLaw<T>,
}

impl<T: Real> AffineKernel<T> {
    pub fn new(transition: Matrix<T>, noise_cov: Matrix<T>) -> Result<Self> {
        check_dim(transition.rows(), noise_cov.rows())?;
        let n = noise_cov.rows();
        Ok(Self { transition, noise: GaussianLaw::new(vec![T::zero(); n], noise_cov)? })
    }

    /// Kernel of applying `self` then `next`.
    pub fn then(&self, next: &Self) -> Result<Self> {
        let t = next.transition.matmul(&self.transition)?;
        let q = next
            .transition
            .matmul(self.noise.cov())?
            .matmul(&next.transition.transpose())?
            .add(next.noise.cov())?;
        Self::new(t, q)
    }

    pub fn power(&self, k: usize) -> Result<Self> {
        let n = self.transition.rows();
        let mut acc = Self::new(Matrix::identity(n), Matrix::zeros(n, n))?;
        for _ in 0..k {
            acc = acc.then(self)?;
        }
        Ok(acc)
    }
}

/// `mean' = T mean`, `cov' = T cov Tᵀ + noise`.
pub fn propagate_gaussian<T: Real>(law: &GaussianLaw<T>, k: &AffineKernel<T>) -> Result<GaussianLaw<T>> {
    check_dim(k.transition.cols(), law.dim())?;
    let mean = k.transition.mul_vec(&law.mean)?;
    let cov = k
        .transition
        .matmul(&law.cov)?
        .matmul(&k.transition.transpose())?
        .add(k.noise.cov())?
        .symmetrized();
    Ok(GaussianLaw { mean, cov })
}

/// `KL(p ‖ q)`. Infinite when `p` is degenerate; an error when `q` is.
pub fn kl_gaussian<T: Real>(p: &GaussianLaw<T>, q: &GaussianLaw<T>) -> Result<T> {
    check_dim(q.dim(), p.dim())?;
    let n = p.dim();
    let lq = q.cov.cholesky().map_err(|_| Error::Singular("reference covariance".into()))?;
    let Ok(lp) = p.cov.cholesky() else {
        return Ok(T::infinity());
    };
    let q_inv = q.cov.inverse()?;
    let dm: Vec<T> = q.mean.iter().zip(&p.mean).map(|(a, b)| *a - *b).collect();
    let quad: T = crate::linalg::dot(&dm, &q_inv.mul_vec(&dm)?);
    let tr = q_inv.matmul(&p.cov)?.trace();
    let two = T::lit(2.0);
    let ld_q: T = (0..n).map(|i| lq[(i, i)].ln()).sum::<T>() * two;
    let ld_p: T = (0..n).map(|i| lp[(i, i)].ln()).sum::<T>() * two;
    let kl = T::lit(0.5) * (tr - T::from_usize_lossy(n) + quad + ld_q - ld_p);
    Ok(kl.max(T::zero()))
}

/// Prefactor convention for the Wasserstein-2 distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum W2Convention {
    /// `W₂² = ½ inf E‖x - y‖²`.
    #[default]
    Half,
    /// `W₂² = inf E‖x - y‖²`.
    Standard,
}

impl W2Convention {
    fn factor<T: Real>(self) -> T {
        match self {
            W2Convention::Half => T::lit(0.5),
            W2Convention::Standard => T::one(),
        }
    }
}

/// Bures–Wasserstein distance with the halved convention.
pub fn w2_gaussian<T: Real>(p: &GaussianLaw<T>, q: &GaussianLaw<T>) -> Result<T> {
    w2_gaussian_with(p, q, W2Convention::Half)
}

pub fn w2_gaussian_with<T: Real>(p: &GaussianLaw<T>, q: &GaussianLaw<T>, conv: W2Convention) -> Result<T> {
    check_dim(q.dim(), p.dim())?;
    let shift: T = p.mean.iter().zip(&q.mean).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
    let rq = q.cov.sqrt_psd()?;
    let cross = rq.matmul(&p.cov)?.matmul(&rq)?.sqrt_psd()?;
    let bures = p.cov.trace() + q.cov.trace() - T::lit(2.0) * cross.trace();
    Ok((conv.factor::<T>() * (shift + bures.max(T::zero()))).sqrt())
}

/// `S = (scale/L_G) [[¼I, ½I], [½I, 2I]]`; `scale = 1` is the reference matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovMatrixS<T> {
    pub l_g: T,
    pub scale: T,
}

impl<T: Real> LyapunovMatrixS<T> {
    pub fn new(l_g: T) -> Self {
        Self { l_g, scale: T::one() }
    }

    /// Entries `(a, b, c)` of the 2×2 pattern `[[b, a/2], [a/2, c]]`, i.e.
    /// `a = 1/L_G` (off-diagonal doubled), `b = 1/(4L_G)`, `c = 2/L_G`.
    pub fn abc(&self) -> (T, T, T) {
        let k = self.scale / self.l_g;
        (k, k * T::lit(0.25), k * T::lit(2.0))
    }

    pub fn block(&self) -> [[T; 2]; 2] {
        let (a, b, c) = self.abc();
        let half = T::lit(0.5) * a;
        [[b, half], [half, c]]
    }

    pub fn dense(&self, d: usize) -> Matrix<T> {
        let blk = self.block();
        Matrix::from_fn(2 * d, 2 * d, |i, j| if i % d == j % d { blk[i / d][j / d] } else { T::zero() })
    }
}

/// `𝓛[p_t] = KL(p_t‖p*) + E_{p_t}⟨∇ln(p_t/p*), S ∇ln(p_t/p*)⟩` for Gaussian laws.
pub fn lyapunov_gaussian<T: Real>(p_t: &GaussianLaw<T>, p_star: &GaussianLaw<T>, s: &LyapunovMatrixS<T>) -> Result<T> {
    let n = p_t.dim();
    check_dim(n, p_star.dim())?;
    if !n.is_multiple_of(2) {
        return Err(Error::invalid("phase-space law must have even dimension"));
    }
    let kl = kl_gaussian(p_t, p_star)?;
    let star_inv = p_star.cov.inverse()?;
    let t_inv = p_t.cov.inverse()?;
    let b = star_inv.sub(&t_inv)?;
    let sm = s.dense(n / 2);
    let c: Vec<T> = t_inv
        .mul_vec(&p_t.mean)?
        .iter()
        .zip(star_inv.mul_vec(&p_star.mean)?)
        .map(|(a, b)| *a - b)
        .collect();
    let tr = b.transpose().matmul(&sm)?.matmul(&b)?.matmul(&p_t.cov)?.trace();
    let v: Vec<T> = b.mul_vec(&p_t.mean)?.iter().zip(&c).map(|(a, b)| *a + *b).collect();
    let quad = crate::linalg::dot(&v, &sm.mul_vec(&v)?);
    Ok(kl + tr + quad)
}

/// `√(2·KL)`, which bounds `∫|p - p*|`.
pub fn tv_upper_bound<T: Real>(kl: T) -> Result<T> {
    if !(kl >= T::zero()) {
        return Err(Error::invalid(format!("KL must be nonnegative, got {kl}")));
    }
    Ok((T::lit(2.0) * kl).sqrt())
}

/// `√(2·KL/ρ)`.
pub fn talagrand_upper_bound<T: Real>(kl: T, rho: T) -> Result<T> {
    if !(kl >= T::zero()) {
        return Err(Error::invalid(format!("KL must be nonnegative, got {kl}")));
    }
    if !(rho > T::zero()) {
        return Err(Error::invalid(format!("ρ must be positive, got {rho}")));
    }
    Ok((T::lit(2.0) * kl / rho).sqrt())
}

// ---------------------------------------------------------------------------
// Per-eigenmode representation

/// Moments of one eigenmode: mean `(θ, r)` and covariance `(θθ, θr, rr)`.
/// Position-only samplers leave the momentum entries at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeLaw<T> {
    pub mean: [T; 2],
    pub cov: [T; 3],
}

/// Mode transition `[[t00, t01], [t10, t11]]` with noise covariance `(θθ, θr, rr)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeKernel<T> {
    pub t: [[T; 2]; 2],
    pub noise: [T; 3],
}

impl<T: Real> ModeKernel<T> {
    fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { t: [[o, z], [z, o]], noise: [z; 3] }
    }

    #[inline]
    pub fn apply(&self, law: &ModeLaw<T>) -> ModeLaw<T> {
        let t = &self.t;
        let [m0, m1] = law.mean;
        let [c00, c01, c11] = law.cov;
        // rows of T·C
        let a00 = t[0][0] * c00 + t[0][1] * c01;
        let a01 = t[0][0] * c01 + t[0][1] * c11;
        let a10 = t[1][0] * c00 + t[1][1] * c01;
        let a11 = t[1][0] * c01 + t[1][1] * c11;
        ModeLaw {
            mean: [t[0][0] * m0 + t[0][1] * m1, t[1][0] * m0 + t[1][1] * m1],
            cov: [
                a00 * t[0][0] + a01 * t[0][1] + self.noise[0],
                a00 * t[1][0] + a01 * t[1][1] + self.noise[1],
                a10 * t[1][0] + a11 * t[1][1] + self.noise[2],
            ],
        }
    }

    /// Kernel of applying `self` then `next`.
    pub fn then(&self, next: &Self) -> Self {
        let (a, b) = (&self.t, &next.t);
        let t = [
            [b[0][0] * a[0][0] + b[0][1] * a[1][0], b[0][0] * a[0][1] + b[0][1] * a[1][1]],
            [b[1][0] * a[0][0] + b[1][1] * a[1][0], b[1][0] * a[0][1] + b[1][1] * a[1][1]],
        ];
        let pushed = next.apply(&ModeLaw { mean: [T::zero(); 2], cov: self.noise });
        Self { t, noise: pushed.cov }
    }

    pub fn transition_matrix(&self) -> Matrix<T> {
        Matrix::from_rows(&[&self.t[0], &self.t[1]])
    }

    pub fn spectral_radius(&self) -> T {
        spectral_radius_small(&self.transition_matrix())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalLaw<T> {
    pub kinetic: bool,
    pub modes: Vec<ModeLaw<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalKernel<T> {
    pub kinetic: bool,
    pub modes: Vec<ModeKernel<T>>,
}

/// Step parameters shared by the kernel constructors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams<T> {
    pub gamma: T,
    pub xi: T,
    pub h: T,
    pub leapfrog_steps: usize,
    pub refresh: T,
}

impl<T: Real> SamplerParams<T> {
    pub fn new(gamma: T, xi: T, h: T) -> Self {
        Self { gamma, xi, h, leapfrog_steps: 5, refresh: h }
    }
}

/// Per-mode transition of one sampler step on a quadratic target.
pub fn mode_kernel<T: Real>(kind: SamplerKind, lambda: T, params: &SamplerParams<T>) -> Result<ModeKernel<T>> {
    let SamplerParams { gamma, xi, h, leapfrog_steps, refresh } = *params;
    let (o, z) = (T::one(), T::zero());
    let two = T::lit(2.0);
    Ok(match kind {
        SamplerKind::Underdamped => {
            let c = underdamped_covariance(gamma, xi, h)?;
            let t = c.mode_transition(lambda);
            ModeKernel { t: [[t[(0, 0)], t[(0, 1)]], [t[(1, 0)], t[(1, 1)]]], noise: [c.s11, c.s12, c.s22] }
        }
        SamplerKind::Em | SamplerKind::GenericDq => ModeKernel {
            t: [[o, h * xi], [-h * lambda, o - h * gamma * xi]],
            noise: [z, z, two * gamma * h],
        },
        SamplerKind::Overdamped => ModeKernel { t: [[o - h * lambda, z], [z, z]], noise: [two * h, z, z] },
        SamplerKind::Hmc => {
            let half = T::lit(0.5) * h;
            let kick = ModeKernel { t: [[o, z], [-half * lambda, o]], noise: [z; 3] };
            let drift = ModeKernel { t: [[o, h * xi], [z, o]], noise: [z; 3] };
            let leap = kick.then(&drift).then(&kick);
            let mut k = ModeKernel::identity();
            for _ in 0..leapfrog_steps {
                k = k.then(&leap);
            }
            let a = gamma * xi * refresh;
            let refresh = ModeKernel {
                t: [[o, z], [z, (-a).exp()]],
                noise: [z, z, one_minus_exp_neg(two * a) / xi],
            };
            k.then(&refresh)
        }
    })
}

/// Affine kernel of one sampler step on a quadratic target, per eigenmode.
pub fn kernel_of_sampler<T: Real>(
    kind: SamplerKind,
    p: &QuadraticPotential<T>,
    params: &SamplerParams<T>,
) -> Result<ModalKernel<T>> {
    let modes = p.spectrum().iter().map(|&l| mode_kernel(kind, l, params)).collect::<Result<_>>()?;
    Ok(ModalKernel { kinetic: kind.is_kinetic(), modes })
}

impl<T: Real> ModalKernel<T> {
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn apply(&self, law: &ModalLaw<T>) -> Result<ModalLaw<T>> {
        check_dim(self.dim(), law.modes.len())?;
        Ok(ModalLaw { kinetic: law.kinetic, modes: self.modes.iter().zip(&law.modes).map(|(k, m)| k.apply(m)).collect() })
    }

    pub fn apply_in_place(&self, law: &mut ModalLaw<T>) {
        for (k, m) in self.modes.iter().zip(law.modes.iter_mut()) {
            *m = k.apply(m);
        }
    }

    /// `k`-fold composition by repeated squaring.
    pub fn power(&self, mut k: usize) -> Self {
        let mut base = self.modes.clone();
        let mut acc = vec![ModeKernel::identity(); self.dim()];
        while k > 0 {
            if k & 1 == 1 {
                for (a, b) in acc.iter_mut().zip(&base) {
                    *a = a.then(b);
                }
            }
            for b in base.iter_mut() {
                *b = b.then(b);
            }
            k >>= 1;
        }
        Self { kinetic: self.kinetic, modes: acc }
    }

    pub fn spectral_radius(&self) -> T {
        self.modes.iter().map(|m| m.spectral_radius()).fold(T::zero(), T::max)
    }

    /// Stationary law of the chain; errors unless every mode contracts.
    pub fn fixed_point(&self) -> Result<ModalLaw<T>> {
        let modes = self
            .modes
            .iter()
            .map(|k| {
                if !(k.spectral_radius() < T::one()) {
                    return Err(Error::invalid("kernel is not contracting"));
                }
                let v = if self.kinetic {
                    let q = Matrix::from_rows(&[&[k.noise[0], k.noise[1]], &[k.noise[1], k.noise[2]]]);
                    solve_discrete_lyapunov(&k.transition_matrix(), &q)?
                } else {
                    let t = k.t[0][0];
                    Matrix::from_diag(&[k.noise[0] / (T::one() - t * t), T::zero()])
                };
                Ok(ModeLaw { mean: [T::zero(); 2], cov: [v[(0, 0)], v[(0, 1)], v[(1, 1)]] })
            })
            .collect::<Result<_>>()?;
        Ok(ModalLaw { kinetic: self.kinetic, modes })
    }

    /// Dense kernel on `(θ, r)` (or `θ` alone) in the eigenbasis.
    pub fn to_dense(&self) -> Result<AffineKernel<T>> {
        let d = self.dim();
        let n = if self.kinetic { 2 * d } else { d };
        let mut t = Matrix::zeros(n, n);
        let mut q = Matrix::zeros(n, n);
        for (i, k) in self.modes.iter().enumerate() {
            if self.kinetic {
                let idx = [i, i + d];
                for a in 0..2 {
                    for b in 0..2 {
                        t[(idx[a], idx[b])] = k.t[a][b];
                    }
                }
                q[(i, i)] = k.noise[0];
                q[(i, i + d)] = k.noise[1];
                q[(i + d, i)] = k.noise[1];
                q[(i + d, i + d)] = k.noise[2];
            } else {
                t[(i, i)] = k.t[0][0];
                q[(i, i)] = k.noise[0];
            }
        }
        AffineKernel::new(t, q)
    }
}

impl<T: Real> ModalLaw<T> {
    /// `θ ~ N(0, var_theta·I)`, and `r ~ N(0, var_r·I)` when kinetic.
    pub fn isotropic(d: usize, var_theta: T, var_r: T, kinetic: bool) -> Self {
        let vr = if kinetic { var_r } else { T::zero() };
        Self { kinetic, modes: vec![ModeLaw { mean: [T::zero(); 2], cov: [var_theta, T::zero(), vr] }; d] }
    }

    /// `p*(θ) ∝ e^{-U}` times `p*(r) = N(0, I/ξ)` when kinetic.
    pub fn target(p: &QuadraticPotential<T>, xi: T, kinetic: bool) -> Self {
        let vr = if kinetic { T::one() / xi } else { T::zero() };
        Self {
            kinetic,
            modes: p.spectrum().iter().map(|&l| ModeLaw { mean: [T::zero(); 2], cov: [T::one() / l, T::zero(), vr] }).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn kl_theta(&self, target: &Self) -> Result<T> {
        check_dim(self.dim(), target.dim())?;
        let mut s = T::zero();
        for (p, q) in self.modes.iter().zip(&target.modes) {
            s = s + kl_1d(p.mean[0], p.cov[0], q.mean[0], q.cov[0])?;
        }
        Ok(s)
    }

    /// Joint KL on `(θ, r)`; equals [`Self::kl_theta`] for position-only laws.
    pub fn kl_joint(&self, target: &Self) -> Result<T> {
        if !self.kinetic {
            return self.kl_theta(target);
        }
        check_dim(self.dim(), target.dim())?;
        let mut s = T::zero();
        for (p, q) in self.modes.iter().zip(&target.modes) {
            s = s + kl_2d(p, q)?;
        }
        Ok(s)
    }

    /// `W₂` between position marginals, halved convention by default.
    pub fn w2_theta(&self, target: &Self, conv: W2Convention) -> Result<T> {
        check_dim(self.dim(), target.dim())?;
        let s: T = self
            .modes
            .iter()
            .zip(&target.modes)
            .map(|(p, q)| {
                let dm = p.mean[0] - q.mean[0];
                let ds = p.cov[0].max(T::zero()).sqrt() - q.cov[0].max(T::zero()).sqrt();
                dm * dm + ds * ds
            })
            .sum();
        Ok((conv.factor::<T>() * s).sqrt())
    }

    /// Lyapunov functional against a kinetic target.
    pub fn lyapunov(&self, target: &Self, s: &LyapunovMatrixS<T>) -> Result<T> {
        if !self.kinetic || !target.kinetic {
            return Err(Error::invalid("Lyapunov functional needs a phase-space law"));
        }
        check_dim(self.dim(), target.dim())?;
        let sb = s.block();
        let mut total = T::zero();
        for (p, q) in self.modes.iter().zip(&target.modes) {
            total = total + kl_2d(p, q)? + mode_fisher_form(p, q, &sb)?;
        }
        Ok(total)
    }

    /// `‖E θ‖` in the eigenbasis (equal to the original-coordinate norm).
    pub fn mean_norm(&self) -> T {
        self.modes.iter().map(|m| m.mean[0] * m.mean[0]).sum::<T>().sqrt()
    }

    /// `tr Cov(θ)`.
    pub fn cov_trace(&self) -> T {
        self.modes.iter().map(|m| m.cov[0]).sum()
    }

    /// Dense law on `(θ, r)` (or `θ`) in original coordinates, given the
    /// eigenvectors of `A` as columns.
    pub fn to_dense(&self, basis: Option<&Matrix<T>>) -> Result<GaussianLaw<T>> {
        let d = self.dim();
        let n = if self.kinetic { 2 * d } else { d };
        let mut mean = vec![T::zero(); n];
        let mut cov = Matrix::zeros(n, n);
        for (i, m) in self.modes.iter().enumerate() {
            mean[i] = m.mean[0];
            cov[(i, i)] = m.cov[0];
            if self.kinetic {
                mean[i + d] = m.mean[1];
                cov[(i, i + d)] = m.cov[1];
                cov[(i + d, i)] = m.cov[1];
                cov[(i + d, i + d)] = m.cov[2];
            }
        }
        if let Some(v) = basis {
            check_dim(d, v.rows())?;
            let blocks = if self.kinetic { 2 } else { 1 };
            let rot = Matrix::from_fn(n, n, |i, j| if i / d == j / d && i / d < blocks { v[(i % d, j % d)] } else { T::zero() });
            mean = rot.mul_vec(&mean)?;
            cov = rot.matmul(&cov)?.matmul(&rot.transpose())?;
        }
        GaussianLaw::new(mean, cov.symmetrized())
    }
}

fn kl_1d<T: Real>(mp: T, vp: T, mq: T, vq: T) -> Result<T> {
    if !(vq > T::zero()) {
        return Err(Error::Singular("reference variance".into()));
    }
    if !(vp > T::zero()) {
        return Ok(T::infinity());
    }
    let r = vp / vq;
    let dm = mp - mq;
    // r - 1 - ln r without cancellation near r = 1
    let t = (r - T::one()) - (r - T::one()).ln_1p();
    Ok((T::lit(0.5) * (t + dm * dm / vq)).max(T::zero()))
}

fn det2<T: Real>(c: &[T; 3]) -> T {
    c[0] * c[2] - c[1] * c[1]
}

fn kl_2d<T: Real>(p: &ModeLaw<T>, q: &ModeLaw<T>) -> Result<T> {
    let dq = det2(&q.cov);
    if !(dq > T::zero()) {
        return Err(Error::Singular("reference mode covariance".into()));
    }
    let dp = det2(&p.cov);
    if !(dp > T::zero()) || !(p.cov[0] > T::zero()) {
        return Ok(T::infinity());
    }
    // q⁻¹ = [[q11, -q01], [-q01, q00]] / dq
    let [q00, q01, q11] = q.cov;
    let [p00, p01, p11] = p.cov;
    let tr = (q11 * p00 - T::lit(2.0) * q01 * p01 + q00 * p11) / dq;
    let d0 = q.mean[0] - p.mean[0];
    let d1 = q.mean[1] - p.mean[1];
    let quad = (q11 * d0 * d0 - T::lit(2.0) * q01 * d0 * d1 + q00 * d1 * d1) / dq;
    let ratio = dq / dp;
    Ok((T::lit(0.5) * (tr - T::lit(2.0) + quad + ratio.ln())).max(T::zero()))
}

fn inv2<T: Real>(c: &[T; 3]) -> Result<[T; 3]> {
    let det = det2(c);
    if !(det > T::zero()) {
        return Err(Error::Singular("mode covariance".into()));
    }
    Ok([c[2] / det, -c[1] / det, c[0] / det])
}

fn sym_mul<T: Real>(a: &[T; 3], b: &[[T; 2]; 2]) -> [[T; 2]; 2] {
    let am = [[a[0], a[1]], [a[1], a[2]]];
    let mut out = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = am[i][0] * b[0][j] + am[i][1] * b[1][j];
        }
    }
    out
}

/// `tr(BᵀSBΣ) + (Bμ + c)ᵀ S (Bμ + c)` for one mode.
fn mode_fisher_form<T: Real>(p: &ModeLaw<T>, q: &ModeLaw<T>, s: &[[T; 2]; 2]) -> Result<T> {
    let pi = inv2(&p.cov)?;
    let qi = inv2(&q.cov)?;
    let b = [qi[0] - pi[0], qi[1] - pi[1], qi[2] - pi[2]];
    // B symmetric: tr(B S B Σ)
    let sb = {
        let bm = [[b[0], b[1]], [b[1], b[2]]];
        let mut o = [[T::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                o[i][j] = s[i][0] * bm[0][j] + s[i][1] * bm[1][j];
            }
        }
        o
    };
    let bsb = sym_mul(&b, &sb);
    let sigma = [[p.cov[0], p.cov[1]], [p.cov[1], p.cov[2]]];
    let mut tr = T::zero();
    for i in 0..2 {
        for k in 0..2 {
            tr = tr + bsb[i][k] * sigma[k][i];
        }
    }
    // Bμ + c = Σ*⁻¹(μ - μ*)
    let dm = [p.mean[0] - q.mean[0], p.mean[1] - q.mean[1]];
    let v = [qi[0] * dm[0] + qi[1] * dm[1], qi[1] * dm[0] + qi[2] * dm[1]];
    let quad = v[0] * (s[0][0] * v[0] + s[0][1] * v[1]) + v[1] * (s[1][0] * v[0] + s[1][1] * v[1]);
    Ok(tr + quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn random_law(rng: &mut RngStream, n: usize) -> GaussianLaw<f64> {
        let a = Matrix::from_fn(n, n, |_, _| rng.normal::<f64>());
        let cov = a.matmul(&a.transpose()).unwrap().add(&Matrix::identity(n).scale(0.2)).unwrap();
        GaussianLaw::new(rng.normal_vec(n), cov).unwrap()
    }

    #[test]
    fn kl_examples() {
        let p = GaussianLaw::<f64>::new(vec![1.0, -2.0], Matrix::identity(2)).unwrap();
        let q = GaussianLaw::isotropic(2, 1.0);
        assert!((kl_gaussian(&p, &q).unwrap() - 2.5).abs() < 1e-14);
        assert_eq!(kl_gaussian(&q, &q).unwrap(), 0.0);
        let sing = GaussianLaw::new(vec![0.0, 0.0], Matrix::from_diag(&[1.0, 0.0])).unwrap();
        assert!(kl_gaussian(&sing, &q).unwrap().is_infinite());
        assert!(matches!(kl_gaussian(&q, &sing), Err(Error::Singular(_))));
    }

    #[test]
    fn w2_examples() {
        let p = GaussianLaw::new(vec![0.0, 0.0], Matrix::from_diag(&[4.0, 1.0])).unwrap();
        let q = GaussianLaw::new(vec![0.0, 0.0], Matrix::from_diag(&[1.0, 9.0])).unwrap();
        let expect = (0.5f64 * (1.0 + 4.0)).sqrt();
        assert!((w2_gaussian(&p, &q).unwrap() - expect).abs() < 1e-12);
        assert!((w2_gaussian_with(&p, &q, W2Convention::Standard).unwrap() - 5f64.sqrt()).abs() < 1e-12);
        assert!(w2_gaussian(&p, &p).unwrap() < 1e-7);
    }

    #[test]
    fn metric_bound_helpers() {
        assert_eq!(tv_upper_bound(0.0).unwrap(), 0.0);
        assert_eq!(tv_upper_bound(0.5f64).unwrap(), 1.0);
        assert!(tv_upper_bound(-1.0f64).is_err());
        assert!((talagrand_upper_bound(0.5f64, 0.25).unwrap() - 2.0).abs() < 1e-15);
        assert!(talagrand_upper_bound(0.5f64, 0.0).is_err());
    }

    #[test]
    fn s_pattern_eigenvalues() {
        let s = LyapunovMatrixS::new(3.0f64);
        let (vals, _) = s.dense(2).sym_eigen().unwrap();
        let lo = (9.0 - 65f64.sqrt()) / 8.0 / 3.0;
        let hi = (9.0 + 65f64.sqrt()) / 8.0 / 3.0;
        assert!((vals[0] - lo).abs() < 1e-14 && (vals[3] - hi).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_vanishes_at_target() {
        let p = QuadraticPotential::from_spectrum(vec![1.0f64, 3.0]).unwrap();
        let t = ModalLaw::target(&p, 6.0, true);
        assert_eq!(t.lyapunov(&t, &LyapunovMatrixS::new(3.0)).unwrap(), 0.0);
        let dense = t.to_dense(None).unwrap();
        assert!(lyapunov_gaussian(&dense, &dense, &LyapunovMatrixS::new(3.0)).unwrap().abs() < 1e-14);
    }

    #[test]
    fn modal_and_dense_diagnostics_agree() {
        let p = QuadraticPotential::from_spectrum(vec![0.5f64, 2.0, 7.0]).unwrap();
        let xi = 14.0;
        let k = kernel_of_sampler(SamplerKind::Underdamped, &p, &SamplerParams::new(2.0, xi, 0.05)).unwrap();
        let mut law = ModalLaw::isotropic(3, 1.0 / 7.0, 1.0 / 7.0, true);
        law.modes[1].mean = [0.4, -0.3];
        for _ in 0..7 {
            law = k.apply(&law).unwrap();
        }
        let target = ModalLaw::target(&p, xi, true);
        let s = LyapunovMatrixS::new(7.0);
        let (dl, dt) = (law.to_dense(None).unwrap(), target.to_dense(None).unwrap());
        assert!((law.kl_joint(&target).unwrap() - kl_gaussian(&dl, &dt).unwrap()).abs() < 1e-12);
        let kt = kl_gaussian(&dl.theta_marginal(), &dt.theta_marginal()).unwrap();
        assert!((law.kl_theta(&target).unwrap() - kt).abs() < 1e-12);
        let lv = law.lyapunov(&target, &s).unwrap();
        assert!((lv - lyapunov_gaussian(&dl, &dt, &s).unwrap()).abs() < 1e-9 * lv.max(1.0));
        let w = w2_gaussian(&dl.theta_marginal(), &dt.theta_marginal()).unwrap();
        assert!((law.w2_theta(&target, W2Convention::Half).unwrap() - w).abs() < 1e-7);
    }

    #[test]
    fn dense_propagation_matches_modal() {
        let p = QuadraticPotential::from_spectrum(vec![1.0f64, 4.0]).unwrap();
        for kind in [SamplerKind::Underdamped, SamplerKind::Em, SamplerKind::Overdamped, SamplerKind::Hmc] {
            let k = kernel_of_sampler(kind, &p, &SamplerParams::new(2.0, 8.0, 0.03)).unwrap();
            let law = ModalLaw::isotropic(2, 0.25, 0.25, kind.is_kinetic());
            let modal = k.power(5).apply(&law).unwrap().to_dense(None).unwrap();
            let mut dense = law.to_dense(None).unwrap();
            let dk = k.to_dense().unwrap();
            for _ in 0..5 {
                dense = propagate_gaussian(&dense, &dk).unwrap();
            }
            assert!(modal.cov().sub(dense.cov()).unwrap().max_abs() < 1e-13);
        }
    }

    #[test]
    fn zero_step_kernel_is_identity() {
        let p = QuadraticPotential::from_spectrum(vec![1.0f64, 2.0]).unwrap();
        let k = kernel_of_sampler(SamplerKind::Underdamped, &p, &SamplerParams::new(2.0, 4.0, 0.0)).unwrap();
        for m in &k.modes {
            assert_eq!(m.t, [[1.0, 0.0], [0.0, 1.0]]);
            assert_eq!(m.noise, [0.0; 3]);
        }
    }

    #[test]
    fn zero_curvature_mode_is_pure_ou() {
        let (g, xi, h) = (2.0f64, 1.0, 0.3);
        let k = mode_kernel(SamplerKind::Underdamped, 0.0, &SamplerParams::new(g, xi, h)).unwrap();
        let e1 = (-g * xi * h).exp();
        assert_eq!(k.t[0][0], 1.0);
        assert_eq!(k.t[1][0], 0.0);
        assert!((k.t[0][1] - (1.0 - e1) / g).abs() < 1e-15);
        assert!((k.t[1][1] - e1).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_solves_lyapunov_equation() {
        let p = QuadraticPotential::from_spectrum(vec![1.0f64, 5.0]).unwrap();
        for kind in [SamplerKind::Underdamped, SamplerKind::Em, SamplerKind::Overdamped, SamplerKind::Hmc] {
            let k = kernel_of_sampler(kind, &p, &SamplerParams::new(2.0, 10.0, 0.02)).unwrap();
            let fp = k.fixed_point().unwrap();
            let next = k.apply(&fp).unwrap();
            for (a, b) in fp.modes.iter().zip(&next.modes) {
                for j in 0..3 {
                    assert!((a.cov[j] - b.cov[j]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn overdamped_fixed_point_variance() {
        let h = 0.1f64;
        let k = mode_kernel(SamplerKind::Overdamped, 1.0, &SamplerParams::new(2.0, 2.0, h)).unwrap();
        let fp = ModalKernel { kinetic: false, modes: vec![k] }.fixed_point().unwrap();
        assert!((fp.modes[0].cov[0] - 1.0 / (1.0 - h / 2.0)).abs() < 1e-14);
    }

    #[test]
    fn repeated_propagation_converges_to_fixed_point() {
        let p = QuadraticPotential::from_spectrum(vec![1.0f64]).unwrap();
        let k = kernel_of_sampler(SamplerKind::Underdamped, &p, &SamplerParams::new(2.0, 2.0, 0.2)).unwrap();
        let fp = k.fixed_point().unwrap();
        let mut law = ModalLaw::isotropic(1, 1.0, 1.0, true);
        for _ in 0..2000 {
            k.apply_in_place(&mut law);
        }
        for j in 0..3 {
            assert!((law.modes[0].cov[j] - fp.modes[0].cov[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn rotated_dense_law_matches_kl() {
        let a = Matrix::from_rows(&[&[2.0f64, 0.6], &[0.6, 1.0]]);
        let p = QuadraticPotential::from_matrix(&a).unwrap();
        let target = ModalLaw::target(&p, 4.0, true);
        let law = ModalLaw::isotropic(2, 0.5, 0.5, true);
        let basis = p.basis();
        let dl = law.to_dense(basis).unwrap();
        let dt = target.to_dense(basis).unwrap();
        let ainv = a.inverse().unwrap();
        assert!(dt.cov().submatrix(&[0, 1]).sub(&ainv).unwrap().max_abs() < 1e-13);
        assert!((kl_gaussian(&dl, &dt).unwrap() - law.kl_joint(&target).unwrap()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative_and_dominates_marginal(seed in 0u64..10_000) {
            let mut rng = RngStream::new(seed);
            let p = random_law(&mut rng, 4);
            let q = random_law(&mut rng, 4);
            let kl = kl_gaussian(&p, &q).unwrap();
            prop_assert!(kl >= 0.0);
            let km = kl_gaussian(&p.theta_marginal(), &q.theta_marginal()).unwrap();
            prop_assert!(km <= kl + 1e-12);
        }

        #[test]
        fn lyapunov_dominates_kl(seed in 0u64..10_000) {
            let mut rng = RngStream::new(seed);
            let p = random_law(&mut rng, 4);
            let q = random_law(&mut rng, 4);
            let s = LyapunovMatrixS::new(2.5);
            prop_assert!(lyapunov_gaussian(&p, &q, &s).unwrap() >= kl_gaussian(&p, &q).unwrap() - 1e-12);
        }

        #[test]
        fn modal_power_matches_iteration(h in 0.001f64..0.3, lambda in 0.1f64..5.0, k in 1usize..40) {
            let params = SamplerParams::new(2.0, 2.0 * lambda.max(1.0), h);
            let mk = mode_kernel(SamplerKind::Underdamped, lambda, &params).unwrap();
            let kern = ModalKernel { kinetic: true, modes: vec![mk] };
            let start = ModalLaw { kinetic: true, modes: vec![ModeLaw { mean: [1.0, -0.5], cov: [0.3, 0.05, 0.4] }] };
            let mut it = start.clone();
            for _ in 0..k {
                kern.apply_in_place(&mut it);
            }
            let pw = kern.power(k).apply(&start).unwrap();
            for j in 0..3 {
                prop_assert!((it.modes[0].cov[j] - pw.modes[0].cov[j]).abs() < 1e-10);
            }
            for j in 0..2 {
                prop_assert!((it.modes[0].mean[j] - pw.modes[0].mean[j]).abs() < 1e-10);
            }
        }
    }
}
