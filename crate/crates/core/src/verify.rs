//! Numeric checks of the matrix inequalities, the discretisation norm bound,
//! the normaliser bound and the closed-form step formulas.
//!
//! The two lemma checkers rebuild `α, β, σ` from the entries of `S` at
//! `γ = 2`, `ξ = 2L_G` and compare the resulting endpoint polynomials with
//! the published fractions evaluated in exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrators::{underdamped_covariance, underdamped_mean, PhaseState};
use crate::linalg::Matrix;
use crate::potentials::{LocallyNonconvexPotential, Potential};
use crate::quadrature::simpson_cube;
use crate::rng::RngStream;

/// Values at or below this count as nonpositive.
pub const ENDPOINT_TOL: f64 = 1e-12;
/// Points of the dense `Λ` sweep.
pub const SWEEP_POINTS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EndpointReport {
    pub label: String,
    /// Left-hand side built from `α, β, σ`; the inequality is `value ≤ 0`.
    pub value: f64,
    /// Published closed form, when the row has one.
    pub reference: Option<f64>,
    pub satisfied: bool,
    pub rho: f64,
    pub l_g: f64,
}

impl EndpointReport {
    pub fn matches_reference(&self) -> bool {
        self.reference.is_none_or(|r| (self.value - r).abs() <= ENDPOINT_TOL * r.abs().max(1.0))
    }
}

/// Which of the two lemmas to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Lemma {
    /// Continuous-time matrix, `λ = ρ/10`.
    Continuous,
    /// Discretised matrix, `λ = ρ/30` and `31/32` factors.
    Discrete,
}

struct Coefficients {
    alpha: f64,
    beta: f64,
    sigma: f64,
    a: f64,
    b: f64,
}

fn coefficients(lemma: Lemma, rho: f64, l_g: f64, s_scale: f64) -> Coefficients {
    let gamma = 2.0;
    let xi = 2.0 * l_g;
    let a = s_scale / l_g;
    let b = s_scale / (4.0 * l_g);
    let c = 2.0 * s_scale / l_g;
    let (lambda, fa, fs) = match lemma {
        Lemma::Continuous => (rho / 10.0, 0.5, 1.0),
        Lemma::Discrete => (rho / 30.0, 31.0 / 64.0, 31.0 / 32.0),
    };
    Coefficients {
        alpha: fa * a * xi - (b + 1.0 / (2.0 * rho)) * lambda,
        beta: 0.5 * (c + a * gamma) * xi - 0.5 * a * lambda,
        sigma: fs * gamma * (2.0 * c * xi + 1.0) - (c + 1.0 / (2.0 * rho)) * lambda,
        a,
        b,
    }
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn exact(x: f64) -> Result<BigRational> {
    BigRational::from_f64(x).ok_or_else(|| Error::invalid(format!("{x} is not finite")))
}

/// Published endpoint polynomials in `x = ρ/L_G`, evaluated exactly.
fn reference_endpoints(lemma: Lemma, rho: f64, l_g: f64) -> Result<[f64; 3]> {
    let x = exact(rho)? / exact(l_g)?;
    let x2 = &x * &x;
    let vals = match lemma {
        Lemma::Continuous => [
            ratio(-92, 5) + ratio(9, 40) * &x,
            ratio(-819, 1600) + ratio(191, 800) * &x - ratio(1, 400) * &x2,
            ratio(-2499, 1600) + ratio(191, 800) * &x - ratio(1, 400) * &x2,
        ],
        Lemma::Discrete => [
            ratio(-8579, 480) + ratio(3, 40) * &x,
            ratio(-5357, 115200) + ratio(241, 3200) * &x - ratio(1, 3600) * &x2,
            ratio(-126077, 115200) + ratio(241, 3200) * &x - ratio(1, 3600) * &x2,
        ],
    };
    let f = |r: &BigRational| r.to_f64().unwrap_or(f64::NAN);
    Ok([f(&vals[0]), f(&vals[1]), f(&vals[2])])
}

fn lemma_reports(lemma: Lemma, rho: f64, l_g: f64, s_scale: f64) -> Result<Vec<EndpointReport>> {
    let k = coefficients(lemma, rho, l_g, s_scale);
    let Coefficients { alpha, beta, sigma, a, b } = k;
    let lin = 0.5 * a * alpha - b * beta;
    let constant = beta * beta - alpha * sigma;
    let quad = 0.25 * b * b * l_g * l_g;
    let values = [0.5 * a * l_g - alpha - sigma, quad - lin * l_g + constant, quad + lin * l_g + constant];
    let reference = reference_endpoints(lemma, rho, l_g)?;
    let labels = ["trace at Λ=L_G", "determinant at Λ=-L_G", "determinant at Λ=L_G"];
    let mut out: Vec<EndpointReport> = (0..3)
        .map(|i| EndpointReport {
            label: labels[i].to_string(),
            value: values[i],
            reference: Some(reference[i]),
            satisfied: values[i] <= ENDPOINT_TOL,
            rho,
            l_g,
        })
        .collect();

    // Dense sweep of the symbol [[α, β - bΛ/2], [β - bΛ/2, σ - aΛ/2]].
    let mut worst = f64::NEG_INFINITY;
    for i in 0..SWEEP_POINTS {
        let lam = -l_g + 2.0 * l_g * i as f64 / (SWEEP_POINTS - 1) as f64;
        let off = beta - 0.5 * b * lam;
        let sym = Matrix::from_rows(&[&[alpha, off], &[off, sigma - 0.5 * a * lam]]);
        worst = worst.max(-sym.min_eigenvalue()?);
    }
    out.push(EndpointReport {
        label: format!("symbol PSD over {SWEEP_POINTS} Λ"),
        value: worst,
        reference: None,
        satisfied: worst <= ENDPOINT_TOL,
        rho,
        l_g,
    });
    Ok(out)
}

/// Continuous-time lemma at `λ = ρ/10`; `0 < ρ ≤ L_G`.
pub fn check_mc_bound(rho: f64, l_g: f64) -> Result<Vec<EndpointReport>> {
    check_mc_bound_scaled(rho, l_g, 1.0)
}

/// As [`check_mc_bound`] with every entry of `S` multiplied by `s_scale`.
pub fn check_mc_bound_scaled(rho: f64, l_g: f64, s_scale: f64) -> Result<Vec<EndpointReport>> {
    if !(rho > 0.0 && rho <= l_g) || !l_g.is_finite() {
        return Err(Error::invalid(format!("need 0 < ρ ≤ L_G, got ρ={rho}, L_G={l_g}")));
    }
    lemma_reports(Lemma::Continuous, rho, l_g, s_scale)
}

/// Discretised lemma at `λ = ρ/30`; `L_G ≥ 2ρ`.
pub fn check_m_bound(rho: f64, l_g: f64) -> Result<Vec<EndpointReport>> {
    check_m_bound_scaled(rho, l_g, 1.0)
}

pub fn check_m_bound_scaled(rho: f64, l_g: f64, s_scale: f64) -> Result<Vec<EndpointReport>> {
    if !(rho > 0.0) || !(l_g >= 2.0 * rho) || !l_g.is_finite() {
        return Err(Error::invalid(format!("need ρ > 0 and L_G ≥ 2ρ, got ρ={rho}, L_G={l_g}")));
    }
    lemma_reports(Lemma::Discrete, rho, l_g, s_scale)
}

/// Endpoint rows and sweep agree on whether the inequality holds.
pub fn endpoint_and_sweep_agree(reports: &[EndpointReport]) -> bool {
    let (sweep, ends) = reports.split_last().expect("reports end with the sweep row");
    ends.iter().all(|r| r.satisfied) == sweep.satisfied
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fact2Report {
    pub trials: usize,
    pub violations: usize,
    /// Largest `norm / bound` over trials with a positive bound.
    pub max_ratio: f64,
    pub max_norm: f64,
}

/// Admissible upper end `min{1/(γξ), 1/√(2e L_G ξ)}` for `ν`.
pub fn fact2_nu_max(l_g: f64, gamma: f64, xi: f64) -> f64 {
    (1.0 / (gamma * xi)).min(1.0 / (2.0 * std::f64::consts::E * l_g * xi).sqrt())
}

pub fn fact2_eta(gamma: f64, xi: f64, nu: f64) -> f64 {
    let gx = gamma * xi;
    let a = gx * nu;
    let om = -(-a).exp_m1();
    (a.exp() * om * om / gx - (nu - om / gx)) / gamma
}

/// Spectral norm of `[H((I+ηH)⁻¹ - I); -((e^{γξν}-1)/γ) H(I+ηH)⁻¹]`.
pub fn fact2_matrix_norm(h: &Matrix<f64>, gamma: f64, xi: f64, nu: f64) -> Result<f64> {
    let d = h.rows();
    let eta = fact2_eta(gamma, xi, nu);
    let inv = Matrix::identity(d).add(&h.scale(eta))?.inverse()?;
    let top = h.matmul(&inv.sub(&Matrix::identity(d))?)?;
    let coef = -(gamma * xi * nu).exp_m1() / gamma;
    let bottom = h.matmul(&inv)?.scale(coef);
    let stacked = Matrix::from_fn(2 * d, d, |i, j| if i < d { top[(i, j)] } else { bottom[(i - d, j)] });
    stacked.spectral_norm()
}

pub fn fact2_bound(l_g: f64, xi: f64, nu: f64) -> f64 {
    4.0 * std::f64::consts::E * (l_g * l_g * xi * nu * nu).max(l_g * xi * nu)
}

/// Symmetric Gaussian matrix rescaled to spectral norm `target`.
pub fn random_symmetric(rng: &mut RngStream, d: usize, target: f64) -> Result<Matrix<f64>> {
    let g = Matrix::from_fn(d, d, |_, _| rng.normal::<f64>());
    let sym = g.symmetrized();
    let norm = sym.spectral_norm()?;
    Ok(if norm > 0.0 { sym.scale(target / norm) } else { sym })
}

fn fact2_trials(
    l_g: f64,
    gamma: f64,
    xi: f64,
    trials: usize,
    d: usize,
    rng: &mut RngStream,
    mut nu_of: impl FnMut(&mut RngStream) -> f64,
) -> Result<Fact2Report> {
    let mut report = Fact2Report { trials, violations: 0, max_ratio: 0.0, max_norm: 0.0 };
    for _ in 0..trials {
        let nu = nu_of(rng);
        let target = l_g * rng.uniform();
        let h = random_symmetric(rng, d, target)?;
        let norm = fact2_matrix_norm(&h, gamma, xi, nu)?;
        let bound = fact2_bound(l_g, xi, nu);
        if norm > bound * (1.0 + 1e-12) + 1e-15 {
            report.violations += 1;
        }
        if bound > 0.0 {
            report.max_ratio = report.max_ratio.max(norm / bound);
        }
        report.max_norm = report.max_norm.max(norm);
    }
    Ok(report)
}

/// Random symmetric `H` with `‖H‖₂ ≤ L_G` at a fixed `ν`.
pub fn check_fact2(l_g: f64, gamma: f64, xi: f64, nu: f64, trials: usize, seed: u64) -> Result<Fact2Report> {
    let nu_max = fact2_nu_max(l_g, gamma, xi);
    if !(0.0..=nu_max).contains(&nu) {
        return Err(Error::invalid(format!("ν = {nu} outside [0, {nu_max}]")));
    }
    let mut rng = RngStream::new(seed);
    fact2_trials(l_g, gamma, xi, trials, 4, &mut rng, |_| nu)
}

/// Random `(H, ν)` pairs with `ν` uniform on the admissible range.
pub fn fact2_sweep(l_g: f64, gamma: f64, xi: f64, draws: usize, d: usize, seed: u64) -> Result<Fact2Report> {
    let nu_max = fact2_nu_max(l_g, gamma, xi);
    let mut rng = RngStream::new(seed);
    fact2_trials(l_g, gamma, xi, draws, d, &mut rng, |r| nu_max * r.uniform())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fact1Report {
    pub dim: usize,
    /// `ln ∫e^{-U}` from quadrature plus the tail bound.
    pub log_z: f64,
    pub tail_mass: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Quadrature check of `ln ∫e^{-U} ≤ (d/2)ln(4π/m) + 32(L_G²/m²)L_G R²` for `d ≤ 3`.
pub fn check_fact1(p: &LocallyNonconvexPotential<f64>, nodes: usize) -> Result<Fact1Report> {
    let d = p.dim();
    if d > 3 {
        return Err(Error::Quadrature(format!("dimension {d} too large for tensor quadrature")));
    }
    // U ≥ (m/2)‖θ‖² - a, so outside the cube the mass is at most
    // e^a (2π/m)^{d/2} · d · P(|Z| > W√m).
    let (m, a) = (p.m(), p.amplitude());
    let width = (2.0 * (40.0 + a) / m).sqrt();
    let x = width * m.sqrt();
    let gauss_tail = 2.0 * (-0.5 * x * x).exp() / (x * (2.0 * std::f64::consts::PI).sqrt());
    let tail = a.exp() * (2.0 * std::f64::consts::PI / m).powf(d as f64 / 2.0) * d as f64 * gauss_tail;
    let mass = simpson_cube(|t| (-p.value(t).unwrap_or(f64::INFINITY)).exp(), d, width, nodes)?;
    if !(mass > 0.0) || tail > 1e-6 * mass {
        return Err(Error::Quadrature(format!("tail mass {tail} too large against {mass}")));
    }
    let c = p.constants();
    let bound = c.c_n * d as f64 + c.c_m;
    let log_z = (mass + tail).ln();
    Ok(Fact1Report { dim: d, log_z, tail_mass: tail, bound, satisfied: log_z <= bound })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepFormulaReport {
    pub gamma: f64,
    pub xi: f64,
    pub h: f64,
    pub substeps: usize,
    pub paths: usize,
    /// Largest mean discrepancy over random frozen gradients and starts.
    pub mean_error: f64,
    /// Largest |empirical - closed form| / standard error over `(s11, s12, s22)`.
    pub max_cov_z: f64,
    pub satisfied: bool,
}

/// Fine Euler integration of the frozen-gradient drift over one step.
pub fn fine_drift(x: &PhaseState<f64>, g: &[f64], gamma: f64, xi: f64, h: f64, substeps: usize) -> PhaseState<f64> {
    let dt = h / substeps as f64;
    let mut y = x.clone();
    for _ in 0..substeps {
        for i in 0..y.dim() {
            let th = y.theta[i] + dt * xi * y.r[i];
            y.r[i] = y.r[i] - dt * (g[i] + gamma * xi * y.r[i]);
            y.theta[i] = th;
        }
    }
    y
}

/// Empirical `(θ, r)` covariance of the zero-gradient SDE after time `h`,
/// from `paths` Euler–Maruyama paths started at the origin. Returns the
/// covariance entries and their standard errors.
pub fn fine_sde_covariance(gamma: f64, xi: f64, h: f64, substeps: usize, paths: usize, seed: u64) -> ([f64; 3], [f64; 3]) {
    let mut rng = RngStream::new(seed);
    let dt = h / substeps as f64;
    let sd = (2.0 * gamma * dt).sqrt();
    let mut samples = Vec::with_capacity(paths);
    for _ in 0..paths {
        let (mut th, mut r) = (0.0f64, 0.0f64);
        for _ in 0..substeps {
            let z: f64 = rng.normal();
            th += dt * xi * r;
            r += -dt * gamma * xi * r + sd * z;
        }
        samples.push((th, r));
    }
    moment_stats(&samples)
}

/// Covariance entries of zero-mean-reference pairs and their standard errors.
pub fn moment_stats(samples: &[(f64, f64)]) -> ([f64; 3], [f64; 3]) {
    let n = samples.len() as f64;
    let (mt, mr) = samples.iter().fold((0.0, 0.0), |(a, b), &(t, r)| (a + t, b + r));
    let (mt, mr) = (mt / n, mr / n);
    let prods = |f: &dyn Fn(f64, f64) -> f64| -> (f64, f64) {
        let vals: Vec<f64> = samples.iter().map(|&(t, r)| f(t - mt, r - mr)).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean * n / (n - 1.0), (var / n).sqrt())
    };
    let (c00, e00) = prods(&|t, _| t * t);
    let (c01, e01) = prods(&|t, r| t * r);
    let (c11, e11) = prods(&|_, r| r * r);
    ([c00, c01, c11], [e00, e01, e11])
}

/// Compares the closed-form mean and covariance against fine-step oracles.
pub fn check_step_formulas(
    gamma: f64,
    xi: f64,
    h: f64,
    trials: usize,
    paths: usize,
    substeps: usize,
    seed: u64,
) -> Result<StepFormulaReport> {
    let c = underdamped_covariance(gamma, xi, h)?;
    let mut rng = RngStream::new(seed);
    let mut mean_error: f64 = 0.0;
    for _ in 0..trials {
        let x = PhaseState::new(rng.normal_vec(2), rng.normal_vec(2))?;
        let g: Vec<f64> = rng.normal_vec(2);
        let exact = underdamped_mean(&x, &g, &c)?;
        let fine = fine_drift(&x, &g, gamma, xi, h, substeps);
        for i in 0..2 {
            mean_error = mean_error.max((exact.theta[i] - fine.theta[i]).abs()).max((exact.r[i] - fine.r[i]).abs());
        }
    }
    let (emp, se) = fine_sde_covariance(gamma, xi, h, substeps, paths, seed ^ 0x5eed);
    let closed = [c.s11, c.s12, c.s22];
    let max_cov_z = (0..3).map(|i| (emp[i] - closed[i]).abs() / se[i].max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    // Euler drift error is first order in the substep.
    let mean_tol = 10.0 * (1.0 + gamma * xi) * h * (h / substeps as f64) * (1.0 + xi);
    Ok(StepFormulaReport {
        gamma,
        xi,
        h,
        substeps,
        paths,
        mean_error,
        max_cov_z,
        satisfied: mean_error <= mean_tol && max_cov_z <= 4.0,
    })
}
