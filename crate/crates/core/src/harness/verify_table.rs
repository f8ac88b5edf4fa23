use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::potentials::LocallyNonconvexPotential;
use crate::verify::{check_fact1, check_m_bound_scaled, check_mc_bound_scaled, check_step_formulas, fact2_sweep};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fact2Case {
    pub l_g: f64,
    pub gamma: f64,
    pub xi: f64,
    pub draws: usize,
    pub d: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fact1Case {
    pub d: usize,
    pub m: f64,
    pub radius: f64,
    pub a: f64,
    pub s: f64,
    pub nodes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepCase {
    pub gamma: f64,
    pub xi: f64,
    pub h: f64,
    pub trials: usize,
    pub paths: usize,
    pub substeps: usize,
}

/// Parameter grid for [`verify_all`]. Missing lists are empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyGrid {
    /// `(ρ, L_G)` pairs for the continuous-time matrix lemma.
    #[serde(default)]
    pub mc_bound: Vec<(f64, f64)>,
    /// `(ρ, L_G)` pairs for the discretised matrix lemma.
    #[serde(default)]
    pub m_bound: Vec<(f64, f64)>,
    #[serde(default)]
    pub fact2: Vec<Fact2Case>,
    #[serde(default)]
    pub fact1: Vec<Fact1Case>,
    #[serde(default)]
    pub step_formulas: Vec<StepCase>,
    /// Multiplies every entry of `S`; values other than one are a fault injection.
    #[serde(default = "one")]
    pub s_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl Default for VerifyGrid {
    fn default() -> Self {
        Self { mc_bound: vec![], m_bound: vec![], fact2: vec![], fact1: vec![], step_formulas: vec![], s_scale: 1.0, seed: 0 }
    }
}

/// `ρ/L_G` ratios used by the default lemma grids.
pub const DEFAULT_RATIOS: [f64; 7] = [1e-6, 1e-4, 1e-3, 0.01, 0.1, 0.25, 0.5];
pub const DEFAULT_L_G: [f64; 4] = [0.5, 1.0, 10.0, 100.0];

impl VerifyGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::Error::Config(e.to_string()))
    }

    /// Every checker over its default grid.
    pub fn default_grid() -> Self {
        let mut mc = Vec::new();
        let mut m = Vec::new();
        for &l in &DEFAULT_L_G {
            for &r in &DEFAULT_RATIOS {
                mc.push((r * l, l));
                m.push((r * l, l));
            }
            mc.push((l, l));
        }
        let fact2 = [1.0, 10.0].iter().map(|&l| Fact2Case { l_g: l, gamma: 2.0, xi: 2.0 * l, draws: 1000, d: 4 }).collect();
        // s = 0.3 and a = (e^{1.5}/2)s² give L_G = 2 exactly.
        let a = 0.5 * 1.5f64.exp() * 0.09;
        let fact1 = (1..=3).map(|d| Fact1Case { d, m: 1.0, radius: 0.5, a, s: 0.3, nodes: if d == 3 { 120 } else { 400 } }).collect();
        let step_formulas = [(1.0, 0.05), (1.0, 0.25), (2.0, 0.05), (2.0, 0.25)]
            .iter()
            .map(|&(xi, h)| StepCase { gamma: 2.0, xi, h, trials: 20, paths: 4000, substeps: 200 })
            .collect();
        Self { mc_bound: mc, m_bound: m, fact2, fact1, step_formulas, s_scale: 1.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyRow {
    pub check: String,
    pub params: String,
    pub value: f64,
    /// The check passes when `value` is at most this.
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerifyTable {
    pub rows: Vec<VerifyRow>,
}

impl VerifyTable {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerifyRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "check,params,value,threshold,pass")?;
        for r in &self.rows {
            writeln!(w, "{},\"{}\",{:?},{:?},{}", r.check, r.params, r.value, r.threshold, r.pass)?;
        }
        Ok(())
    }

    /// Fixed-width text table.
    pub fn render(&self) -> String {
        let mut s = format!("{:<14} {:<44} {:>14} {:>10}  result\n", "check", "params", "value", "threshold");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<14} {:<44} {:>14.6e} {:>10.3e}  {}\n",
                r.check,
                r.params,
                r.value,
                r.threshold,
                if r.pass { "PASS" } else { "FAIL" }
            ));
        }
        s
    }
}

fn lemma_rows(name: &str, rows: &mut Vec<VerifyRow>, reports: Vec<crate::verify::EndpointReport>) {
    for r in reports {
        let pass = r.satisfied && r.matches_reference();
        rows.push(VerifyRow {
            check: name.to_string(),
            params: format!("rho={:?} l_g={:?} {}", r.rho, r.l_g, r.label),
            value: r.value,
            threshold: crate::verify::ENDPOINT_TOL,
            pass,
        });
    }
}

/// Runs every checker over `grid`.
pub fn verify_all(grid: &VerifyGrid) -> Result<VerifyTable> {
    let mut rows = Vec::new();
    for &(rho, l) in &grid.mc_bound {
        lemma_rows("mc_bound", &mut rows, check_mc_bound_scaled(rho, l, grid.s_scale)?);
    }
    for &(rho, l) in &grid.m_bound {
        lemma_rows("m_bound", &mut rows, check_m_bound_scaled(rho, l, grid.s_scale)?);
    }
    for (i, c) in grid.fact2.iter().enumerate() {
        let r = fact2_sweep(c.l_g, c.gamma, c.xi, c.draws, c.d, grid.seed.wrapping_add(i as u64))?;
        rows.push(VerifyRow {
            check: "fact2".into(),
            params: format!("l_g={:?} gamma={:?} xi={:?} draws={} d={}", c.l_g, c.gamma, c.xi, c.draws, c.d),
            value: r.max_ratio,
            threshold: 1.0,
            pass: r.violations == 0,
        });
    }
    for c in &grid.fact1 {
        let p = LocallyNonconvexPotential::new(c.d, c.m, c.radius, c.a, c.s)?;
        let r = check_fact1(&p, c.nodes)?;
        rows.push(VerifyRow {
            check: "fact1".into(),
            params: format!("d={} m={:?} R={:?} a={:?} s={:?}", c.d, c.m, c.radius, c.a, c.s),
            value: r.log_z,
            threshold: r.bound,
            pass: r.satisfied,
        });
    }
    for (i, c) in grid.step_formulas.iter().enumerate() {
        let r = check_step_formulas(c.gamma, c.xi, c.h, c.trials, c.paths, c.substeps, grid.seed.wrapping_add(i as u64))?;
        rows.push(VerifyRow {
            check: "step_formulas".into(),
            params: format!("gamma={:?} xi={:?} h={:?} paths={} substeps={}", c.gamma, c.xi, c.h, c.paths, c.substeps),
            value: r.max_cov_z,
            threshold: 4.0,
            pass: r.satisfied,
        });
    }
    Ok(VerifyTable { rows })
}
