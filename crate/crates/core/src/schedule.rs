//! Hyperparameters, step size and iteration budget for a target KL accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::PotentialConstants;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule<T> {
    pub gamma: T,
    pub xi: T,
    pub h: T,
    pub k: u64,
    pub rho: T,
    pub c_n_tilde: T,
    pub c_m: T,
    pub epsilon: T,
    pub d: usize,
    pub l_g: T,
    pub l_h: T,
}

fn check_inputs<T: Real>(l_g: T, l_h: T, rho: T, c_n_tilde: T, c_m: T, epsilon: T, d: usize) -> Result<()> {
    if !(l_g > T::zero()) || !(epsilon > T::zero()) || d == 0 {
        return Err(Error::invalid("need L_G > 0, ε > 0 and d ≥ 1"));
    }
    if !(rho > T::zero() && rho <= T::one()) {
        return Err(Error::invalid(format!("ρ must lie in (0, 1], got {rho}")));
    }
    if !(l_h >= T::zero()) || !(c_m >= T::zero()) || !(c_n_tilde >= T::zero()) {
        return Err(Error::invalid("need L_H ≥ 0, C_M ≥ 0 and C̃_N ≥ 0"));
    }
    if epsilon > T::lit(2.0) * T::from_usize_lossy(d) {
        log::warn!("ε = {epsilon} exceeds 2d = {}; the accuracy guarantee does not cover it", 2 * d);
    }
    Ok(())
}

/// `x/y`, reading `y = 0` as `+∞` in a `min`.
fn ratio_or_inf<T: Real>(x: T, y: T) -> T {
    if y == T::zero() {
        T::infinity()
    } else {
        x / y
    }
}

/// `h = (1/56)(1/√L_G)·min{ρ/(24L_G), √L_G ρ/L_H}·min{(C̃_N+2)^{-1/2}√(ε/d), √(ε/C_M)}`.
pub fn step_size<T: Real>(l_g: T, l_h: T, rho: T, c_n_tilde: T, c_m: T, epsilon: T, d: usize) -> Result<T> {
    check_inputs(l_g, l_h, rho, c_n_tilde, c_m, epsilon, d)?;
    let dd = T::from_usize_lossy(d);
    let smooth = (rho / (T::lit(24.0) * l_g)).min(ratio_or_inf(l_g.sqrt() * rho, l_h));
    let accuracy = ((epsilon / dd).sqrt() / (c_n_tilde + T::lit(2.0)).sqrt()).min(ratio_or_inf(epsilon, c_m).sqrt());
    Ok(smooth * accuracy / (T::lit(56.0) * l_g.sqrt()))
}

/// `K = ⌈1680·max{24L_G^{3/2}/ρ², L_H/ρ²}·max{√(C̃_N+2)√(d/ε), √(C_M/ε)}·ln(4·max{(C̃_N+1)d/ε, C_M/ε})⌉`.
pub fn iteration_count_closed_form<T: Real>(
    l_g: T,
    l_h: T,
    rho: T,
    c_n_tilde: T,
    c_m: T,
    epsilon: T,
    d: usize,
) -> Result<u64> {
    check_inputs(l_g, l_h, rho, c_n_tilde, c_m, epsilon, d)?;
    let dd = T::from_usize_lossy(d);
    let r2 = rho * rho;
    let a = (T::lit(24.0) * l_g.powf(T::lit(1.5)) / r2).max(l_h / r2);
    let b = ((c_n_tilde + T::lit(2.0)).sqrt() * (dd / epsilon).sqrt()).max((c_m / epsilon).sqrt());
    let c = (T::lit(4.0) * ((c_n_tilde + T::one()) * dd / epsilon).max(c_m / epsilon)).ln();
    Ok(ceil_count(T::lit(1680.0) * a * b * c))
}

/// `K = ⌈(30/(ρh))·ln(2𝓛₀/ε)⌉`, at least one.
pub fn iteration_count_from_step<T: Real>(rho: T, h: T, initial_lyapunov: T, epsilon: T) -> Result<u64> {
    if !(rho > T::zero()) || !(h > T::zero()) || !(epsilon > T::zero()) || !(initial_lyapunov >= T::zero()) {
        return Err(Error::invalid("need ρ, h, ε > 0 and 𝓛₀ ≥ 0"));
    }
    let k = T::lit(30.0) / (rho * h) * (T::lit(2.0) * initial_lyapunov / epsilon).ln();
    Ok(ceil_count(k))
}

fn ceil_count<T: Real>(k: T) -> u64 {
    let k = k.as_f64().ceil();
    if k.is_nan() || k < 1.0 {
        1
    } else if k >= u64::MAX as f64 {
        u64::MAX
    } else {
        k as u64
    }
}

/// `(C̃_N + 1)d + C_M`, the bound on `𝓛[p₀]` for the Gaussian initialisation.
pub fn initial_lyapunov_bound<T: Real>(c_n_tilde: T, c_m: T, d: usize) -> T {
    (c_n_tilde + T::one()) * T::from_usize_lossy(d) + c_m
}

impl<T: Real> Schedule<T> {
    /// `γ = 2`, `ξ = 2L_G`, step size and closed-form `K` from the constants.
    pub fn derived(c: &PotentialConstants<T>, d: usize, epsilon: T) -> Result<Self> {
        let c_n_tilde = c.c_n_tilde();
        let h = step_size(c.l_g, c.l_h, c.rho, c_n_tilde, c.c_m, epsilon, d)?;
        let k = iteration_count_closed_form(c.l_g, c.l_h, c.rho, c_n_tilde, c.c_m, epsilon, d)?;
        let s = Self {
            gamma: T::lit(2.0),
            xi: T::lit(2.0) * c.l_g,
            h,
            k,
            rho: c.rho,
            c_n_tilde,
            c_m: c.c_m,
            epsilon,
            d,
            l_g: c.l_g,
            l_h: c.l_h,
        };
        s.check_step_cap();
        Ok(s)
    }

    /// `K` from `ln(2𝓛₀/ε)` with the initial bound in place of `𝓛₀`.
    pub fn generic_iteration_count(&self) -> Result<u64> {
        let l0 = initial_lyapunov_bound(self.c_n_tilde, self.c_m, self.d);
        iteration_count_from_step(self.rho, self.h, l0, self.epsilon)
    }

    /// `h ≤ 1/(8L_G)`; logs a warning when violated.
    pub fn check_step_cap(&self) -> bool {
        let ok = self.h * T::lit(8.0) * self.l_g <= T::one();
        if !ok {
            log::warn!("step size {} exceeds 1/(8 L_G) = {}", self.h, T::one() / (T::lit(8.0) * self.l_g));
        }
        ok
    }

    /// `key=value` pairs in a fixed order, for artifact headers.
    pub fn header_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("gamma", format!("{:?}", self.gamma)),
            ("xi", format!("{:?}", self.xi)),
            ("h", format!("{:?}", self.h)),
            ("K", self.k.to_string()),
            ("rho", format!("{:?}", self.rho)),
            ("c_n_tilde", format!("{:?}", self.c_n_tilde)),
            ("c_m", format!("{:?}", self.c_m)),
            ("epsilon", format!("{:?}", self.epsilon)),
            ("d", self.d.to_string()),
            ("l_g", format!("{:?}", self.l_g)),
            ("l_h", format!("{:?}", self.l_h)),
        ]
    }
}
