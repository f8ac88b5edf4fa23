//! Composite Simpson quadrature on bounded boxes.

use crate::error::{Error, Result};

/// Composite Simpson rule on `[a, b]` with `n` (rounded up to even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Tensor-product Simpson rule on `[-half_width, half_width]^dim`, `dim ≤ 3`.
pub fn simpson_cube(f: impl Fn(&[f64]) -> f64, dim: usize, half_width: f64, n: usize) -> Result<f64> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Quadrature(format!("tensor quadrature supports 1 to 3 dimensions, got {dim}")));
    }
    let n = (n.max(2) + 1) & !1;
    let h = 2.0 * half_width / n as f64;
    let nodes: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            (-half_width + h * i as f64, w * h / 3.0)
        })
        .collect();
    let mut total = 0.0;
    let mut x = vec![0.0; dim];
    let count = (n + 1).pow(dim as u32);
    for flat in 0..count {
        let mut rem = flat;
        let mut w = 1.0;
        for xi in x.iter_mut() {
            let (node, wi) = nodes[rem % (n + 1)];
            rem /= n + 1;
            *xi = node;
            w *= wi;
        }
        total += w * f(&x);
    }
    Ok(total)
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `∫|p - q|` for two univariate Gaussians given as `(mean, variance)`.
pub fn l1_distance_1d(p: (f64, f64), q: (f64, f64)) -> f64 {
    let sd = p.1.max(q.1).sqrt();
    let lo = p.0.min(q.0) - 12.0 * sd;
    let hi = p.0.max(q.0) + 12.0 * sd;
    simpson(|x| (normal_pdf(x, p.0, p.1) - normal_pdf(x, q.0, q.1)).abs(), lo, hi, 20_000)
}

/// `∫ p ln(p/q)` for two univariate Gaussians by quadrature.
pub fn kl_1d_quadrature(p: (f64, f64), q: (f64, f64)) -> f64 {
    let sd = p.1.sqrt();
    let lo = p.0 - 14.0 * sd;
    let hi = p.0 + 14.0 * sd;
    simpson(
        |x| {
            let a = normal_pdf(x, p.0, p.1);
            if a == 0.0 {
                return 0.0;
            }
            let lp = -0.5 * (x - p.0).powi(2) / p.1 - 0.5 * (2.0 * std::f64::consts::PI * p.1).ln();
            let lq = -0.5 * (x - q.0).powi(2) / q.1 - 0.5 * (2.0 * std::f64::consts::PI * q.1).ln();
            a * (lp - lq)
        },
        lo,
        hi,
        20_000,
    )
}
