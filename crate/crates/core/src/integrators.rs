//! One-step transition kernels.
//!
//! The underdamped dynamics are
//! `dθ = ξ r dt`, `dr = -∇U(θ) dt - γξ r dt + √(2γ) dB`.
//! [`underdamped_step`] freezes the gradient at the start of the step and
//! samples the resulting linear SDE exactly; the other steppers are the
//! usual baselines.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::potentials::Potential;
use crate::rng::RngStream;
use crate::scalar::{exp_neg_remainder2, one_minus_exp_neg, position_variance_bracket, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState<T> {
    pub theta: Vec<T>,
    pub r: Vec<T>,
}

impl<T: Real> PhaseState<T> {
    pub fn new(theta: Vec<T>, r: Vec<T>) -> Result<Self> {
        check_dim(theta.len(), r.len())?;
        Ok(Self { theta, r })
    }

    pub fn zeros(d: usize) -> Self {
        Self { theta: vec![T::zero(); d], r: vec![T::zero(); d] }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    fn check(&self, d: usize) -> Result<()> {
        check_dim(d, self.theta.len())?;
        check_dim(d, self.r.len())
    }
}

/// Scalars of the frozen-gradient step for one `(γ, ξ, h)`.
///
/// With `a = γξh`, `e1 = e^{-a}` and `e2 = e^{-2a}`, each coordinate pair
/// `(θ_i, r_i)` receives Gaussian noise with covariance `[[s11, s12], [s12, s22]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCoefficients<T> {
    pub gamma: T,
    pub xi: T,
    pub h: T,
    pub e1: T,
    pub e2: T,
    pub s11: T,
    pub s12: T,
    pub s22: T,
    /// `(1 - e1)/γ`, weight of `r` in the position mean.
    pub theta_from_r: T,
    /// `(1/γ)(h - (1 - e1)/(γξ))`, weight of `-g` in the position mean.
    pub theta_from_grad: T,
    /// `(1 - e1)/(γξ)`, weight of `-g` in the momentum mean.
    pub r_from_grad: T,
    chol: [T; 3],
}

/// Closed-form step covariance, evaluated without cancellation for small `γξh`.
pub fn underdamped_covariance<T: Real>(gamma: T, xi: T, h: T) -> Result<StepCoefficients<T>> {
    if !(gamma > T::zero()) || !(xi > T::zero()) || !gamma.is_finite() || !xi.is_finite() {
        return Err(Error::invalid(format!("need γ > 0 and ξ > 0, got γ={gamma}, ξ={xi}")));
    }
    if !(h >= T::zero()) {
        return Err(Error::invalid(format!("step size must be nonnegative, got {h}")));
    }
    let gx = gamma * xi;
    let a = gx * h;
    let e1 = (-a).exp();
    let e2 = e1 * e1;
    let om1 = one_minus_exp_neg(a);
    let om2 = om1 * (T::one() + e1);
    let s11 = position_variance_bracket(a) / (gamma * gx);
    let mut s12 = om1 * om1 / gx;
    let s22 = om2 / xi;
    if !(s11 >= T::zero() && s22 >= T::zero()) || !s12.is_finite() {
        return Err(Error::NotPositiveSemidefinite(format!("s11={s11}, s12={s12}, s22={s22}")));
    }
    let det = s11 * s22 - s12 * s12;
    if det < T::zero() {
        let bound = (s11 * s22).sqrt();
        if -det > T::lit(1e-6) * s12 * s12 {
            return Err(Error::NotPositiveSemidefinite(format!(
                "determinant {det} at γ={gamma}, ξ={xi}, h={h}"
            )));
        }
        log::warn!("step covariance determinant {det} < 0 from rounding; clamping s12 to {bound}");
        s12 = bound;
    }
    let l11 = s11.sqrt();
    let l21 = if l11 > T::zero() { s12 / l11 } else { T::zero() };
    let l22 = (s22 - l21 * l21).max(T::zero()).sqrt();
    Ok(StepCoefficients {
        gamma,
        xi,
        h,
        e1,
        e2,
        s11,
        s12,
        s22,
        theta_from_r: om1 / gamma,
        theta_from_grad: exp_neg_remainder2(a) / (gamma * gx),
        r_from_grad: om1 / gx,
        chol: [l11, l21, l22],
    })
}

impl<T: Real> StepCoefficients<T> {
    pub fn new(gamma: T, xi: T, h: T) -> Result<Self> {
        underdamped_covariance(gamma, xi, h)
    }

    /// Lower Cholesky factor `[[l11, 0], [l21, l22]]` of the 2×2 block.
    pub fn cholesky(&self) -> [T; 3] {
        self.chol
    }

    pub fn covariance_block(&self) -> Matrix<T> {
        Matrix::from_rows(&[&[self.s11, self.s12], &[self.s12, self.s22]])
    }

    /// Mean map of one mode with curvature `λ`: `μ = T x` where the
    /// frozen gradient is `λθ`.
    pub fn mode_transition(&self, lambda: T) -> Matrix<T> {
        Matrix::from_rows(&[
            &[T::one() - lambda * self.theta_from_grad, self.theta_from_r],
            &[-lambda * self.r_from_grad, self.e1],
        ])
    }
}

/// Mean of the frozen-gradient step from `x` with gradient `g = ∇U(θ)`.
pub fn underdamped_mean<T: Real>(x: &PhaseState<T>, g: &[T], c: &StepCoefficients<T>) -> Result<PhaseState<T>> {
    let d = x.dim();
    x.check(d)?;
    check_dim(d, g.len())?;
    let mut out = x.clone();
    mean_in_place(&mut out, g, c);
    Ok(out)
}

fn mean_in_place<T: Real>(x: &mut PhaseState<T>, g: &[T], c: &StepCoefficients<T>) {
    for ((t, r), &gi) in x.theta.iter_mut().zip(x.r.iter_mut()).zip(g) {
        *t = *t + c.theta_from_r * *r - c.theta_from_grad * gi;
        *r = c.e1 * *r - c.r_from_grad * gi;
    }
}

/// One step of the exact frozen-gradient integrator with the noise
/// `(z_θ, z_r)` supplied by the caller.
pub fn underdamped_step_with_noise<T: Real, P: Potential<T> + ?Sized>(
    x: &PhaseState<T>,
    p: &P,
    c: &StepCoefficients<T>,
    z_theta: &[T],
    z_r: &[T],
) -> Result<PhaseState<T>> {
    let d = p.dim();
    x.check(d)?;
    check_dim(d, z_theta.len())?;
    check_dim(d, z_r.len())?;
    let g = p.grad(&x.theta)?;
    let mut out = x.clone();
    mean_in_place(&mut out, &g, c);
    let [l11, l21, l22] = c.chol;
    for i in 0..d {
        out.theta[i] = out.theta[i] + l11 * z_theta[i];
        out.r[i] = out.r[i] + l21 * z_theta[i] + l22 * z_r[i];
    }
    Ok(out)
}

/// Draws `x' ~ N(μ(x), Σ)`.
pub fn underdamped_step<T: Real, P: Potential<T> + ?Sized>(
    x: &PhaseState<T>,
    p: &P,
    c: &StepCoefficients<T>,
    rng: &mut RngStream,
) -> Result<PhaseState<T>> {
    let d = p.dim();
    let (z_theta, z_r) = draw_pairs(rng, d);
    underdamped_step_with_noise(x, p, c, &z_theta, &z_r)
}

// Noise is drawn coordinate by coordinate as (z_θ, z_r) pairs so that the
// stream layout does not depend on how callers split the vectors.
fn draw_pairs<T: Real>(rng: &mut RngStream, d: usize) -> (Vec<T>, Vec<T>) {
    let mut a = Vec::with_capacity(d);
    let mut b = Vec::with_capacity(d);
    for _ in 0..d {
        a.push(rng.normal());
        b.push(rng.normal());
    }
    (a, b)
}

pub fn em_step_with_noise<T: Real, P: Potential<T> + ?Sized>(
    x: &PhaseState<T>,
    p: &P,
    gamma: T,
    xi: T,
    h: T,
    z: &[T],
) -> Result<PhaseState<T>> {
    let d = p.dim();
    x.check(d)?;
    check_dim(d, z.len())?;
    let g = p.grad(&x.theta)?;
    let damp = T::one() - h * gamma * xi;
    let sd = (T::lit(2.0) * gamma * h).sqrt();
    let mut out = x.clone();
    for i in 0..d {
        out.theta[i] = x.theta[i] + h * xi * x.r[i];
        out.r[i] = damp * x.r[i] - h * g[i] + sd * z[i];
    }
    Ok(out)
}

/// Euler–Maruyama step of the underdamped SDE.
pub fn em_step<T: Real, P: Potential<T> + ?Sized>(
    x: &PhaseState<T>,
    p: &P,
    gamma: T,
    xi: T,
    h: T,
    rng: &mut RngStream,
) -> Result<PhaseState<T>> {
    if !(h > T::zero()) {
        return Err(Error::invalid("step size must be positive"));
    }
    let z = rng.normal_vec(p.dim());
    em_step_with_noise(x, p, gamma, xi, h, &z)
}

pub fn overdamped_step_with_noise<T: Real, P: Potential<T> + ?Sized>(
    theta: &[T],
    p: &P,
    h: T,
    z: &[T],
) -> Result<Vec<T>> {
    check_dim(p.dim(), z.len())?;
    let g = p.grad(theta)?;
    let sd = (T::lit(2.0) * h).sqrt();
    Ok(theta.iter().zip(&g).zip(z).map(|((&t, &gi), &zi)| t - h * gi + sd * zi).collect())
}

/// Unadjusted overdamped Langevin step `θ' = θ - h∇U(θ) + √(2h) z`.
pub fn overdamped_step<T: Real, P: Potential<T> + ?Sized>(
    theta: &[T],
    p: &P,
    h: T,
    rng: &mut RngStream,
) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(Error::invalid("step size must be positive"));
    }
    let z = rng.normal_vec(p.dim());
    overdamped_step_with_noise(theta, p, h, &z)
}

pub fn hmc_momentum_refresh_with_noise<T: Real>(r: &[T], gamma: T, xi: T, s: T, z: &[T]) -> Result<Vec<T>> {
    check_dim(r.len(), z.len())?;
    if !(s >= T::zero()) {
        return Err(Error::invalid("refresh duration must be nonnegative"));
    }
    let a = gamma * xi * s;
    let decay = (-a).exp();
    let sd = (one_minus_exp_neg(T::lit(2.0) * a) / xi).sqrt();
    Ok(r.iter().zip(z).map(|(&ri, &zi)| decay * ri + sd * zi).collect())
}

/// Exact Ornstein–Uhlenbeck update of the momentum over duration `s`;
/// `s = ∞` resamples `r ~ N(0, I/ξ)`.
pub fn hmc_momentum_refresh<T: Real>(r: &[T], gamma: T, xi: T, s: T, rng: &mut RngStream) -> Result<Vec<T>> {
    let z = rng.normal_vec(r.len());
    hmc_momentum_refresh_with_noise(r, gamma, xi, s, &z)
}

/// Leapfrog for `H = U(θ) + (ξ/2)‖r‖²`.
pub fn leapfrog_step<T: Real, P: Potential<T> + ?Sized>(x: &PhaseState<T>, p: &P, xi: T, h: T) -> Result<PhaseState<T>> {
    let d = p.dim();
    x.check(d)?;
    let half = T::lit(0.5) * h;
    let mut out = x.clone();
    let mut g = p.grad(&out.theta)?;
    for i in 0..d {
        out.r[i] = out.r[i] - half * g[i];
        out.theta[i] = out.theta[i] + h * xi * out.r[i];
    }
    p.grad_into(&out.theta, &mut g)?;
    for i in 0..d {
        out.r[i] = out.r[i] - half * g[i];
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcParams<T> {
    pub gamma: T,
    pub xi: T,
    pub h: T,
    pub leapfrog_steps: usize,
    pub refresh: T,
}

impl<T: Real> HmcParams<T> {
    /// Five leapfrog substeps followed by a refresh of duration `h`.
    pub fn with_defaults(gamma: T, xi: T, h: T) -> Self {
        Self { gamma, xi, h, leapfrog_steps: 5, refresh: h }
    }
}

/// `L` leapfrog substeps followed by one partial momentum refresh.
pub fn hmc_step<T: Real, P: Potential<T> + ?Sized>(
    x: &PhaseState<T>,
    p: &P,
    params: &HmcParams<T>,
    rng: &mut RngStream,
) -> Result<PhaseState<T>> {
    let mut y = x.clone();
    for _ in 0..params.leapfrog_steps {
        y = leapfrog_step(&y, p, params.xi, params.h)?;
    }
    y.r = hmc_momentum_refresh(&y.r, params.gamma, params.xi, params.refresh, rng)?;
    Ok(y)
}

/// Constant diffusion `D` (PSD) and curl `Q` (skew) for
/// `dx = (D + Q)∇ln p*(x) dt + √(2D) dB`.
#[derive(Clone, Debug)]
pub struct ConstantDiffusion<T> {
    drift: Matrix<T>,
    sqrt_d: Matrix<T>,
}

impl<T: Real> ConstantDiffusion<T> {
    pub fn new(d: &Matrix<T>, q: &Matrix<T>) -> Result<Self> {
        if !d.is_square() || d.rows() != q.rows() || !q.is_square() {
            return Err(Error::DimensionMismatch { expected: d.rows(), found: q.rows() });
        }
        let scale = d.max_abs().max(q.max_abs()).max(T::one());
        let tol = T::lit(1e3) * T::epsilon() * scale;
        if !d.is_symmetric(tol) {
            return Err(Error::NotPositiveSemidefinite("D is not symmetric".into()));
        }
        let min_eig = d.min_eigenvalue()?;
        if min_eig < -tol {
            return Err(Error::NotPositiveSemidefinite(format!("D has eigenvalue {min_eig}")));
        }
        if !q.is_skew_symmetric(tol) {
            return Err(Error::NotSkewSymmetric("Q + Qᵀ ≠ 0".into()));
        }
        Ok(Self { drift: d.add(q)?, sqrt_d: d.sqrt_psd()? })
    }

    /// `D = blockdiag(0, γI)`, `Q = [[0, -I], [I, 0]]` on `(θ, r)`.
    pub fn underdamped(d: usize, gamma: T) -> Result<Self> {
        let n = 2 * d;
        let dm = Matrix::from_fn(n, n, |i, j| if i == j && i >= d { gamma } else { T::zero() });
        let q = Matrix::from_fn(n, n, |i, j| {
            if j == i + d {
                -T::one()
            } else if i == j + d {
                T::one()
            } else {
                T::zero()
            }
        });
        Self::new(&dm, &q)
    }

    pub fn dim(&self) -> usize {
        self.drift.rows()
    }

    pub fn drift_matrix(&self) -> &Matrix<T> {
        &self.drift
    }

    pub fn sqrt_diffusion(&self) -> &Matrix<T> {
        &self.sqrt_d
    }
}

/// `∇ ln p*(θ, r)` for the extended target `e^{-U(θ) - (ξ/2)‖r‖²}`, packed as `(θ, r)`.
pub fn extended_log_density_grad<T: Real, P: Potential<T> + ?Sized>(p: &P, xi: T, x: &[T]) -> Result<Vec<T>> {
    let d = p.dim();
    check_dim(2 * d, x.len())?;
    let mut out = p.grad(&x[..d])?;
    for o in out.iter_mut() {
        *o = -*o;
    }
    out.extend(x[d..].iter().map(|&r| -xi * r));
    Ok(out)
}

pub fn generic_dq_step_with_noise<T: Real>(
    x: &[T],
    logp_grad: &dyn Fn(&[T]) -> Result<Vec<T>>,
    diffusion: &ConstantDiffusion<T>,
    h: T,
    z: &[T],
) -> Result<Vec<T>> {
    let n = diffusion.dim();
    check_dim(n, x.len())?;
    check_dim(n, z.len())?;
    let g = logp_grad(x)?;
    check_dim(n, g.len())?;
    let drift = diffusion.drift.mul_vec(&g)?;
    let noise = diffusion.sqrt_d.mul_vec(z)?;
    let sd = (T::lit(2.0) * h).sqrt();
    Ok((0..n).map(|i| x[i] + h * drift[i] + sd * noise[i]).collect())
}

/// Euler–Maruyama step `x' = x + h(D+Q)∇ln p*(x) + √(2h) D^{1/2} z`.
pub fn generic_dq_step<T: Real>(
    x: &[T],
    logp_grad: &dyn Fn(&[T]) -> Result<Vec<T>>,
    diffusion: &ConstantDiffusion<T>,
    h: T,
    rng: &mut RngStream,
) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(Error::invalid("step size must be positive"));
    }
    let z = rng.normal_vec(diffusion.dim());
    generic_dq_step_with_noise(x, logp_grad, diffusion, h, &z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Underdamped,
    Em,
    Overdamped,
    Hmc,
    GenericDq,
}

impl SamplerKind {
    /// Whether the sampler carries a momentum.
    pub fn is_kinetic(self) -> bool {
        !matches!(self, SamplerKind::Overdamped)
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Underdamped => "underdamped",
            SamplerKind::Em => "em",
            SamplerKind::Overdamped => "overdamped",
            SamplerKind::Hmc => "hmc",
            SamplerKind::GenericDq => "generic_dq",
        }
    }
}
