use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gaussian_analysis::{kernel_of_sampler, ModalLaw, SamplerParams};
use crate::integrators::SamplerKind;
use crate::potentials::{Potential, QuadraticPotential};

/// Settings of the acceleration comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureConfig {
    pub d: usize,
    pub kappa: f64,
    /// KL level the curves are run down to.
    pub epsilon: f64,
    pub seed: u64,
    /// Step overrides; `None` picks the largest stable step.
    pub h_overdamped: Option<f64>,
    pub h_underdamped: Option<f64>,
    /// Friction override for the underdamped sampler.
    pub gamma: Option<f64>,
    /// Momentum scale; defaults to `2L_G`.
    pub xi: Option<f64>,
    pub max_iter: u64,
}

impl FigureConfig {
    pub fn new(d: usize, kappa: f64, epsilon: f64, seed: u64) -> Self {
        Self { d, kappa, epsilon, seed, h_overdamped: None, h_underdamped: None, gamma: None, xi: None, max_iter: 50_000_000 }
    }
}

/// Damping ratio of the softest mode used when no friction is given.
pub const DEFAULT_DAMPING_RATIO: f64 = 0.25;

/// Friction putting the mode of curvature `m` at damping ratio `zeta`:
/// the mode obeys `θ'' + γξθ' + ξmθ = 0`, critical at `γ = 2√(m/ξ)`.
pub fn friction_for_damping(m: f64, xi: f64, zeta: f64) -> f64 {
    2.0 * zeta * (m / xi).sqrt()
}

/// `KL(π_h(θ)‖p*(θ))` for the stationary law `π_h` of the chain, `+∞` when
/// the chain does not contract.
pub fn theta_kl_floor(kind: SamplerKind, q: &QuadraticPotential<f64>, params: &SamplerParams<f64>) -> Result<f64> {
    let kernel = kernel_of_sampler(kind, q, params)?;
    if !(kernel.spectral_radius() < 1.0) {
        return Ok(f64::INFINITY);
    }
    let target = ModalLaw::target(q, params.xi, kind.is_kinetic());
    kernel.fixed_point()?.kl_theta(&target)
}

/// Largest step with spectral radius below one and stationary `θ`-KL at
/// most `floor_max`, by doubling then bisection on `h`.
pub fn largest_stable_step(
    kind: SamplerKind,
    q: &QuadraticPotential<f64>,
    params_at: impl Fn(f64) -> SamplerParams<f64>,
    floor_max: f64,
) -> Result<f64> {
    let ok = |h: f64| -> Result<bool> { Ok(theta_kl_floor(kind, q, &params_at(h))? <= floor_max) };
    let mut lo = 1e-6 / q.max_eigenvalue();
    if !ok(lo)? {
        return Err(Error::invalid("no admissible step found"));
    }
    let mut hi = lo * 2.0;
    while ok(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(lo);
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `θ`-KL per iteration from `init` until it falls to `threshold` or
/// `max_iter` steps pass. `keep` selects whether the curve is stored.
pub fn kl_theta_curve(
    kind: SamplerKind,
    q: &QuadraticPotential<f64>,
    params: &SamplerParams<f64>,
    init: &ModalLaw<f64>,
    threshold: f64,
    max_iter: u64,
    keep: bool,
) -> Result<(Vec<f64>, Option<u64>)> {
    let kernel = kernel_of_sampler(kind, q, params)?;
    let target = ModalLaw::target(q, params.xi, kind.is_kinetic());
    let mut law = init.clone();
    let mut curve = Vec::new();
    for iter in 0..=max_iter {
        if iter > 0 {
            kernel.apply_in_place(&mut law);
        }
        let kl = law.kl_theta(&target)?;
        if keep {
            curve.push(kl);
        }
        if kl <= threshold {
            return Ok((curve, Some(iter)));
        }
    }
    Ok((curve, None))
}

/// First iteration at which the `θ`-KL reaches `threshold`.
pub fn iterations_to_kl(
    kind: SamplerKind,
    q: &QuadraticPotential<f64>,
    params: &SamplerParams<f64>,
    init: &ModalLaw<f64>,
    threshold: f64,
    max_iter: u64,
) -> Result<Option<u64>> {
    Ok(kl_theta_curve(kind, q, params, init, threshold, max_iter, false)?.1)
}

/// Whether a curve ever increases, up to relative noise `rtol`.
pub fn is_non_monotone(curve: &[f64], rtol: f64) -> bool {
    curve.windows(2).any(|w| w[1] > w[0] * (1.0 + rtol))
}

/// Step parameters of the two compared samplers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonParams {
    pub overdamped: SamplerParams<f64>,
    pub underdamped: SamplerParams<f64>,
}

/// Resolves friction, momentum scale and step sizes for `q`; automatic
/// steps keep each stationary `θ`-KL at or below `threshold / 2`.
pub fn comparison_params(q: &QuadraticPotential<f64>, cfg: &FigureConfig, threshold: f64) -> Result<ComparisonParams> {
    let l = q.max_eigenvalue();
    let xi = cfg.xi.unwrap_or(2.0 * l);
    let gamma = cfg.gamma.unwrap_or_else(|| friction_for_damping(q.min_eigenvalue(), xi, DEFAULT_DAMPING_RATIO));
    let floor = 0.5 * threshold;
    let h_over = match cfg.h_overdamped {
        Some(h) => h,
        None => largest_stable_step(SamplerKind::Overdamped, q, |h| SamplerParams::new(gamma, xi, h), floor)?,
    };
    let h_under = match cfg.h_underdamped {
        Some(h) => h,
        None => largest_stable_step(SamplerKind::Underdamped, q, |h| SamplerParams::new(gamma, xi, h), floor)?,
    };
    Ok(ComparisonParams {
        overdamped: SamplerParams::new(gamma, xi, h_over),
        underdamped: SamplerParams::new(gamma, xi, h_under),
    })
}

/// Shared start: `θ₀, r₀ ~ N(0, I/L_G)`.
pub fn initial_law(q: &QuadraticPotential<f64>, kinetic: bool) -> ModalLaw<f64> {
    let v = 1.0 / q.max_eigenvalue();
    ModalLaw::isotropic(q.dim(), v, v, kinetic)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub sampler: SamplerKind,
    pub params: SamplerParams<f64>,
    pub kl_theta: Vec<f64>,
    pub hit: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FigureOutput {
    pub curves: [Curve; 2],
    pub files: Vec<PathBuf>,
}

/// Row cap for each curve file; longer curves are strided.
pub const FIGURE_ROWS: usize = 10_000;

pub const PLOT_SCRIPT: &str = r##"import csv
import sys
import matplotlib.pyplot as plt

def load(path):
    xs, ys = [], []
    with open(path) as f:
        rows = csv.reader(line for line in f if not line.startswith("#"))
        next(rows)
        for it, kl in rows:
            xs.append(int(it))
            ys.append(float(kl))
    return xs, ys

out = sys.argv[1] if len(sys.argv) > 1 else "accel.png"
for name in ("overdamped", "underdamped"):
    xs, ys = load(name + ".csv")
    plt.semilogy(xs, ys, label=name)
plt.xlabel("iteration")
plt.ylabel("KL(p_t(theta) || p*(theta))")
plt.legend()
plt.savefig(out, dpi=150)
"##;

/// Runs both samplers on the log-spaced quadratic with condition number
/// `kappa` and writes `overdamped.csv`, `underdamped.csv` and `plot_accel.py`
/// into `out_dir`.
pub fn figure_accel(cfg: &FigureConfig, out_dir: &Path) -> Result<FigureOutput> {
    let q = QuadraticPotential::log_spaced(cfg.d, cfg.kappa)?;
    let p = comparison_params(&q, cfg, cfg.epsilon)?;
    let mut curves = Vec::with_capacity(2);
    for (kind, params) in [(SamplerKind::Overdamped, p.overdamped), (SamplerKind::Underdamped, p.underdamped)] {
        let init = initial_law(&q, kind.is_kinetic());
        let (kl_theta, hit) = kl_theta_curve(kind, &q, &params, &init, cfg.epsilon, cfg.max_iter, true)?;
        curves.push(Curve { sampler: kind, params, kl_theta, hit });
    }
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for c in &curves {
        let path = out_dir.join(format!("{}.csv", c.sampler.name()));
        write_curve(&path, c, cfg)?;
        files.push(path);
    }
    let script = out_dir.join("plot_accel.py");
    std::fs::write(&script, PLOT_SCRIPT)?;
    files.push(script);
    let curves: [Curve; 2] = curves.try_into().expect("two curves");
    Ok(FigureOutput { curves, files })
}

fn write_curve(path: &Path, c: &Curve, cfg: &FigureConfig) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# sampler={}", c.sampler.name())?;
    writeln!(w, "# d={}", cfg.d)?;
    writeln!(w, "# kappa={:?}", cfg.kappa)?;
    writeln!(w, "# epsilon={:?}", cfg.epsilon)?;
    writeln!(w, "# seed={}", cfg.seed)?;
    writeln!(w, "# gamma={:?}", c.params.gamma)?;
    writeln!(w, "# xi={:?}", c.params.xi)?;
    writeln!(w, "# h={:?}", c.params.h)?;
    writeln!(w, "# hit={}", c.hit.map_or("none".to_string(), |k| k.to_string()))?;
    writeln!(w, "iter,kl_theta")?;
    let stride = c.kl_theta.len().div_ceil(FIGURE_ROWS).max(1);
    let last = c.kl_theta.len().saturating_sub(1);
    for (i, kl) in c.kl_theta.iter().enumerate() {
        if i % stride == 0 || i == last {
            writeln!(w, "{i},{kl:?}")?;
        }
    }
    w.flush()?;
    Ok(())
}
