use std::io::Write;

use rayon::prelude::*;

use super::config::{DiagnosticsMode, MomentumInit, RunConfig, ScheduleMode};
use crate::error::{Error, Result};
use crate::gaussian_analysis::{
    kernel_of_sampler, kl_gaussian, lyapunov_gaussian, w2_gaussian_with, GaussianLaw, LyapunovMatrixS, ModalLaw,
    SamplerParams, W2Convention,
};
use crate::integrators::{
    em_step, extended_log_density_grad, generic_dq_step, hmc_step, overdamped_step, underdamped_step,
    ConstantDiffusion, HmcParams, PhaseState, SamplerKind, StepCoefficients,
};
use crate::linalg::Matrix;
use crate::potentials::Potential;
use crate::rng::RngStream;
use crate::schedule::Schedule;

/// Largest number of rows a run emits.
pub const MAX_ROWS: usize = 10_000;
/// Largest phase-space dimension for which sample mode forms dense moment KLs.
pub const DENSE_MOMENT_LIMIT: usize = 64;

/// One logged iteration. `lyapunov` is NaN for position-only samplers and
/// divergences are NaN when the target law is not available in closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub iter: u64,
    pub t: f64,
    pub kl_joint: f64,
    pub kl_theta: f64,
    pub w2: f64,
    pub lyapunov: f64,
    pub mean_norm: f64,
    pub cov_trace: f64,
}

pub const CSV_COLUMNS: &str = "iter,t,kl_joint,kl_theta,w2,lyapunov,mean_norm,cov_trace";

impl DiagnosticsRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.iter, self.t, self.kl_joint, self.kl_theta, self.w2, self.lyapunov, self.mean_norm, self.cov_trace
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub header: Vec<(String, String)>,
    pub rows: Vec<DiagnosticsRow>,
}

impl RunOutput {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in &self.header {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{CSV_COLUMNS}")?;
        for r in &self.rows {
            writeln!(w, "{}", r.csv_line())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    pub fn last(&self) -> &DiagnosticsRow {
        self.rows.last().expect("a run emits at least one row")
    }
}

/// Iterations to log for a run of `k` steps: all of them up to
/// `k = `[`MAX_ROWS`], otherwise a geometric grid that keeps `0` and `k`.
pub fn log_iterations(k: u64) -> Vec<u64> {
    if k <= MAX_ROWS as u64 {
        return (0..=k).collect();
    }
    // One slot is kept free for an early-termination row.
    let n = MAX_ROWS - 2;
    let lk = (k as f64).ln();
    let mut out = vec![0u64];
    for j in 0..n {
        let v = ((j as f64 / (n - 1) as f64) * lk).exp().round() as u64;
        let v = v.clamp(1, k);
        if *out.last().unwrap() != v {
            out.push(v);
        }
    }
    if *out.last().unwrap() != k {
        out.push(k);
    }
    out
}

/// A configuration with its potential and schedule worked out.
pub struct ResolvedRun {
    pub config: RunConfig,
    pub potential: Box<dyn Potential<f64>>,
    pub schedule: Schedule<f64>,
    pub params: SamplerParams<f64>,
}

impl ResolvedRun {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let potential = config.build_potential()?;
        let c = potential.constants();
        let d = potential.dim();
        let mut schedule = match config.schedule {
            ScheduleMode::Derived => Schedule::derived(&c, d, config.epsilon).map_err(|e| Error::Config(e.to_string()))?,
            ScheduleMode::Manual => Schedule {
                gamma: 2.0,
                xi: 2.0 * c.l_g,
                h: 0.0,
                k: 0,
                rho: c.rho,
                c_n_tilde: c.c_n_tilde(),
                c_m: c.c_m,
                epsilon: config.epsilon,
                d,
                l_g: c.l_g,
                l_h: c.l_h,
            },
        };
        if let Some(g) = config.gamma {
            schedule.gamma = g;
        }
        if let Some(x) = config.xi {
            schedule.xi = x;
        }
        if let Some(h) = config.h {
            schedule.h = h;
        }
        if let Some(k) = config.k {
            schedule.k = k;
        }
        let params = SamplerParams {
            gamma: schedule.gamma,
            xi: schedule.xi,
            h: schedule.h,
            leapfrog_steps: config.leapfrog_steps.unwrap_or(5),
            refresh: config.refresh.unwrap_or(schedule.h),
        };
        Ok(Self { config, potential, schedule, params })
    }

    pub fn kind(&self) -> SamplerKind {
        self.config.sampler
    }

    /// Variances of the initial `θ` and `r` laws.
    pub fn initial_variances(&self) -> (f64, f64) {
        let vt = 1.0 / self.schedule.l_g;
        let vr = match self.config.momentum_init {
            MomentumInit::Algorithm => vt,
            MomentumInit::Lemma => 1.0 / self.schedule.xi,
        };
        (vt, vr)
    }

    pub fn header(&self) -> Vec<(String, String)> {
        let cfg = &self.config;
        let mut h: Vec<(String, String)> = vec![
            ("sampler".into(), cfg.sampler.name().into()),
            ("potential".into(), format!("{:?}", cfg.potential).to_lowercase()),
            ("diagnostics".into(), format!("{:?}", cfg.diagnostics).to_lowercase()),
            ("momentum_init".into(), format!("{:?}", cfg.momentum_init).to_lowercase()),
            ("w2_convention".into(), format!("{:?}", cfg.w2_convention).to_lowercase()),
            ("seed".into(), cfg.seed.to_string()),
            ("chains".into(), cfg.chains.to_string()),
            ("leapfrog_steps".into(), self.params.leapfrog_steps.to_string()),
            ("refresh".into(), format!("{:?}", self.params.refresh)),
        ];
        h.extend(self.schedule.header_pairs().into_iter().map(|(k, v)| (k.to_string(), v)));
        h
    }

    pub fn run(&self) -> Result<RunOutput> {
        let rows = match self.config.diagnostics {
            DiagnosticsMode::ExactGaussian => self.run_exact()?,
            DiagnosticsMode::SampleMoments => self.run_sampled()?,
        };
        Ok(RunOutput { header: self.header(), rows })
    }

    fn run_exact(&self) -> Result<Vec<DiagnosticsRow>> {
        let q = self.potential.as_quadratic().ok_or(Error::NotQuadratic)?;
        let kind = self.kind();
        let kinetic = kind.is_kinetic();
        let kernel = kernel_of_sampler(kind, q, &self.params)?;
        let target = ModalLaw::target(q, self.params.xi, kinetic);
        let (vt, vr) = self.initial_variances();
        let mut law = ModalLaw::isotropic(q.dim(), vt, vr, kinetic);
        let s = LyapunovMatrixS::new(self.schedule.l_g);
        let conv = self.config.w2_convention;
        let h = self.params.h;

        let row = |iter: u64, law: &ModalLaw<f64>, kl_joint: f64| -> Result<DiagnosticsRow> {
            Ok(DiagnosticsRow {
                iter,
                t: iter as f64 * h,
                kl_joint,
                kl_theta: law.kl_theta(&target)?,
                w2: law.w2_theta(&target, conv)?,
                lyapunov: if kinetic { law.lyapunov(&target, &s)? } else { f64::NAN },
                mean_norm: law.mean_norm(),
                cov_trace: law.cov_trace(),
            })
        };

        let k = self.schedule.k;
        let logged = log_iterations(k);
        let mut next = 0;
        let mut rows = Vec::with_capacity(logged.len());
        for iter in 0..=k {
            if iter > 0 {
                kernel.apply_in_place(&mut law);
            }
            let kl = law.kl_joint(&target)?;
            let stop = self.config.stop_at_epsilon && kl <= self.config.epsilon;
            if next < logged.len() && logged[next] == iter {
                next += 1;
                rows.push(row(iter, &law, kl)?);
            } else if stop || iter == k {
                rows.push(row(iter, &law, kl)?);
            }
            if stop {
                break;
            }
        }
        Ok(rows)
    }

    fn run_sampled(&self) -> Result<Vec<DiagnosticsRow>> {
        let mut ens = ChainEnsemble::new(self)?;
        let stats = MomentTarget::new(self)?;
        let k = self.schedule.k;
        let logged = log_iterations(k);
        let mut rows = Vec::with_capacity(logged.len());
        let mut next = 0;
        for iter in 0..=k {
            if iter > 0 {
                ens.step_all()?;
            }
            if next < logged.len() && logged[next] == iter {
                next += 1;
                let row = stats.row(iter, self.params.h, &ens)?;
                let stop = self.config.stop_at_epsilon && row.kl_joint <= self.config.epsilon;
                rows.push(row);
                if stop {
                    break;
                }
            }
        }
        Ok(rows)
    }
}

/// Convenience wrapper: resolve and run.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    ResolvedRun::new(config.clone())?.run()
}

struct Chain {
    x: PhaseState<f64>,
    rng: RngStream,
}

/// Independent chains stepped in lockstep, one RNG stream per chain.
pub struct ChainEnsemble<'a> {
    run: &'a ResolvedRun,
    chains: Vec<Chain>,
    coeffs: Option<StepCoefficients<f64>>,
    diffusion: Option<ConstantDiffusion<f64>>,
}

impl<'a> ChainEnsemble<'a> {
    pub fn new(run: &'a ResolvedRun) -> Result<Self> {
        let d = run.potential.dim();
        let (vt, vr) = run.initial_variances();
        let kinetic = run.kind().is_kinetic();
        let chains = (0..run.config.chains)
            .map(|i| {
                let mut rng = RngStream::for_chain(run.config.seed, i as u64);
                let theta: Vec<f64> = rng.normal_vec(d).into_iter().map(|z: f64| z * vt.sqrt()).collect();
                let r = if kinetic {
                    rng.normal_vec(d).into_iter().map(|z: f64| z * vr.sqrt()).collect()
                } else {
                    vec![0.0; d]
                };
                Chain { x: PhaseState { theta, r }, rng }
            })
            .collect();
        let p = &run.params;
        let coeffs = match run.kind() {
            SamplerKind::Underdamped => Some(StepCoefficients::new(p.gamma, p.xi, p.h)?),
            _ => None,
        };
        let diffusion = match run.kind() {
            SamplerKind::GenericDq => Some(ConstantDiffusion::underdamped(d, p.gamma)?),
            _ => None,
        };
        Ok(Self { run, chains, coeffs, diffusion })
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &PhaseState<f64>> {
        self.chains.iter().map(|c| &c.x)
    }

    pub fn step_all(&mut self) -> Result<()> {
        let pot: &dyn Potential<f64> = self.run.potential.as_ref();
        let p = self.run.params;
        let kind = self.run.kind();
        let coeffs = self.coeffs.as_ref();
        let diffusion = self.diffusion.as_ref();
        self.chains.par_iter_mut().try_for_each(|c| -> Result<()> {
            c.x = match kind {
                SamplerKind::Underdamped => underdamped_step(&c.x, pot, coeffs.expect("coefficients"), &mut c.rng)?,
                SamplerKind::Em => em_step(&c.x, pot, p.gamma, p.xi, p.h, &mut c.rng)?,
                SamplerKind::Overdamped => {
                    let theta = overdamped_step(&c.x.theta, pot, p.h, &mut c.rng)?;
                    PhaseState { theta, r: std::mem::take(&mut c.x.r) }
                }
                SamplerKind::Hmc => {
                    let hp = HmcParams { gamma: p.gamma, xi: p.xi, h: p.h, leapfrog_steps: p.leapfrog_steps, refresh: p.refresh };
                    hmc_step(&c.x, pot, &hp, &mut c.rng)?
                }
                SamplerKind::GenericDq => {
                    let d = c.x.dim();
                    let mut packed = c.x.theta.clone();
                    packed.extend_from_slice(&c.x.r);
                    let grad = |v: &[f64]| extended_log_density_grad(pot, p.xi, v);
                    let next = generic_dq_step(&packed, &grad, diffusion.expect("diffusion"), p.h, &mut c.rng)?;
                    PhaseState { theta: next[..d].to_vec(), r: next[d..].to_vec() }
                }
            };
            Ok(())
        })
    }

    /// Sample mean and unbiased covariance of `(θ, r)` (or `θ` alone for
    /// position-only samplers).
    pub fn moments(&self) -> (Vec<f64>, Matrix<f64>) {
        let kinetic = self.run.kind().is_kinetic();
        let vecs: Vec<Vec<f64>> = self.states().map(|x| pack(x, kinetic)).collect();
        let n = vecs.first().map_or(0, Vec::len);
        let count = vecs.len() as f64;
        let mut mean = vec![0.0; n];
        for v in &vecs {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= count;
        }
        let mut cov = Matrix::zeros(n, n);
        for v in &vecs {
            for i in 0..n {
                let di = v[i] - mean[i];
                for j in i..n {
                    cov[(i, j)] += di * (v[j] - mean[j]);
                }
            }
        }
        for i in 0..n {
            for j in i..n {
                let c = cov[(i, j)] / (count - 1.0);
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        (mean, cov)
    }

    /// `‖mean θ‖` and `Σᵢ Var θᵢ` without forming the full covariance.
    pub fn theta_summary(&self) -> (f64, f64) {
        let d = self.run.potential.dim();
        let count = self.chains.len() as f64;
        let mut mean = vec![0.0; d];
        for x in self.states() {
            for (m, t) in mean.iter_mut().zip(&x.theta) {
                *m += t;
            }
        }
        for m in mean.iter_mut() {
            *m /= count;
        }
        let mut tr = 0.0;
        for x in self.states() {
            for (m, t) in mean.iter().zip(&x.theta) {
                tr += (t - m) * (t - m);
            }
        }
        (mean.iter().map(|m| m * m).sum::<f64>().sqrt(), tr / (count - 1.0))
    }
}

fn pack(x: &PhaseState<f64>, kinetic: bool) -> Vec<f64> {
    let mut v = x.theta.clone();
    if kinetic {
        v.extend_from_slice(&x.r);
    }
    v
}

/// Dense target law for moment-matched diagnostics, when it exists.
struct MomentTarget {
    target: Option<GaussianLaw<f64>>,
    kinetic: bool,
    d: usize,
    s: LyapunovMatrixS<f64>,
    conv: W2Convention,
}

impl MomentTarget {
    fn new(run: &ResolvedRun) -> Result<Self> {
        let kinetic = run.kind().is_kinetic();
        let d = run.potential.dim();
        let n = if kinetic { 2 * d } else { d };
        let target = match run.potential.as_quadratic() {
            Some(q) if n <= DENSE_MOMENT_LIMIT => Some(ModalLaw::target(q, run.params.xi, kinetic).to_dense(q.basis())?),
            _ => None,
        };
        Ok(Self { target, kinetic, d, s: LyapunovMatrixS::new(run.schedule.l_g), conv: run.config.w2_convention })
    }

    fn row(&self, iter: u64, h: f64, ens: &ChainEnsemble) -> Result<DiagnosticsRow> {
        let (mean_norm, cov_trace) = ens.theta_summary();
        let mut row = DiagnosticsRow {
            iter,
            t: iter as f64 * h,
            kl_joint: f64::NAN,
            kl_theta: f64::NAN,
            w2: f64::NAN,
            lyapunov: f64::NAN,
            mean_norm,
            cov_trace,
        };
        let Some(target) = &self.target else {
            return Ok(row);
        };
        let (mean, cov) = ens.moments();
        let emp = GaussianLaw::new(mean, cov)?;
        let idx: Vec<usize> = (0..self.d).collect();
        let (emp_t, tgt_t) = (emp.marginal(&idx), target.marginal(&idx));
        row.kl_joint = kl_gaussian(&emp, target)?;
        row.kl_theta = kl_gaussian(&emp_t, &tgt_t)?;
        row.w2 = w2_gaussian_with(&emp_t, &tgt_t, self.conv)?;
        if self.kinetic {
            row.lyapunov = lyapunov_gaussian(&emp, target, &self.s)?;
        }
        Ok(row)
    }
}
