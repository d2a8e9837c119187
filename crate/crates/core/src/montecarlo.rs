//! Deterministic parallel Monte Carlo over simulation cells.
//!
//! Replication `r` of a cell draws from its own ChaCha stream keyed by the
//! master seed and a content hash of the cell, so a cell gives the same
//! draws whether it runs alone or inside a grid and whatever the thread
//! count. Results are reduced in replication order.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::IvxConfig;
use crate::error::{Error, Result};
use crate::inference::{Prepared, Variant};
use crate::local_projection::{estimate_horizon, one_step, Restriction};
use crate::simulate::{replication_rng, simulate_panel, SimulationSpec};

/// Critical value for the coverage indicator `|t| ≤ 1.96`.
pub const COVERAGE_CRITICAL: f64 = 1.96;

pub const GRID_SIZES: [usize; 3] = [30, 50, 100];
pub const GRID_RHOS: [f64; 5] = [0.60, 0.95, 0.99, 1.00, 1.01];
pub const GRID_OMEGA12: [f64; 2] = [0.70, 0.95];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub reps: usize,
    pub seed: u64,
    pub ivx: IvxConfig,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl McOptions {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self {
            reps,
            seed,
            ivx: IvxConfig::default(),
            threads: None,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stable key of a design, ignoring its `reps` and `seed` fields.
pub fn cell_key(spec: &SimulationSpec) -> u64 {
    let mut s = spec.clone();
    s.reps = 1;
    s.seed = 0;
    fnv1a(serde_json::to_string(&s).expect("spec serializes").as_bytes())
}

fn run_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Mean and `sd/√m` of a sample.
fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mu = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mu, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m - 1.0);
    (mu, (var / m).sqrt())
}

fn proportion_se(p: f64, m: usize) -> f64 {
    (p * (1.0 - p) / m as f64).sqrt()
}

/// The univariate design grid in table order: `ρ*`, then `ω12`, then `n = T`.
pub fn reference_grid() -> Vec<SimulationSpec> {
    let mut out = Vec::new();
    for &rho in &GRID_RHOS {
        for &w in &GRID_OMEGA12 {
            for &n in &GRID_SIZES {
                out.push(SimulationSpec::univariate(n, n, rho, 0.0, w));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub n: usize,
    pub periods: usize,
    pub rho_star: f64,
    pub omega12: f64,
    pub beta_star: f64,
}

impl CellInfo {
    fn of(spec: &SimulationSpec) -> Self {
        Self {
            n: spec.n,
            periods: spec.periods,
            rho_star: spec.rho_star[0],
            omega12: spec.omega[0][1],
            beta_star: spec.beta_star[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub cell: CellInfo,
    pub estimator: Variant,
    pub bias: f64,
    pub bias_mc_se: f64,
    pub rmse: f64,
    /// Delta-method standard error `se(MSE) / (2 RMSE)`.
    pub rmse_mc_se: f64,
    pub coverage: f64,
    pub coverage_mc_se: f64,
    pub reps_used: usize,
    pub failures: usize,
}

impl MonteCarloSummary {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / (self.reps_used + self.failures) as f64
    }
}

/// `(β̂ − β*, |t| ≤ 1.96)` per variant, or `None` on failure.
type RepOutcome = Vec<Option<(f64, bool)>>;

fn uni_replication(spec: &SimulationSpec, variants: &[Variant], opts: &McOptions, key: u64, r: usize) -> RepOutcome {
    let mut rng = replication_rng(opts.seed, key, r as u64);
    let beta = spec.beta_star[0];
    let panel = match simulate_panel(spec, &mut rng) {
        Ok(p) => p,
        Err(_) => return vec![None; variants.len()],
    };
    let prep = match Prepared::new(&panel, &opts.ivx) {
        Ok(p) => p,
        Err(_) => return vec![None; variants.len()],
    };
    variants
        .iter()
        .map(|&v| {
            prep.estimate(v, beta)
                .ok()
                .filter(|e| e.beta_hat.is_finite() && e.t_stat.is_finite())
                .map(|e| (e.beta_hat - beta, e.t_stat.abs() <= COVERAGE_CRITICAL))
        })
        .collect()
}

/// Univariate bias, RMSE and coverage for every cell and variant.
pub fn run_grid(specs: &[SimulationSpec], variants: &[Variant], opts: &McOptions) -> Result<Vec<MonteCarloSummary>> {
    if opts.reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    opts.ivx.validate()?;
    for s in specs {
        s.validate()?;
        if s.k() != 1 {
            return Err(Error::NotUnivariate(s.k()));
        }
    }
    let mut out = Vec::new();
    for spec in specs {
        let key = cell_key(spec);
        let reps: Vec<RepOutcome> = run_pool(opts.threads, || {
            (0..opts.reps)
                .into_par_iter()
                .map(|r| uni_replication(spec, variants, opts, key, r))
                .collect()
        })?;
        for (vi, &v) in variants.iter().enumerate() {
            let ok: Vec<(f64, bool)> = reps.iter().filter_map(|o| o[vi]).collect();
            let errs: Vec<f64> = ok.iter().map(|o| o.0).collect();
            let m = errs.len();
            let (bias, bias_mc_se) = mean_se(&errs);
            let sq: Vec<f64> = errs.iter().map(|e| e * e).collect();
            let (mse, mse_se) = mean_se(&sq);
            let rmse = mse.sqrt();
            let coverage = ok.iter().filter(|o| o.1).count() as f64 / m as f64;
            out.push(MonteCarloSummary {
                cell: CellInfo::of(spec),
                estimator: v,
                bias,
                bias_mc_se,
                rmse,
                rmse_mc_se: mse_se / (2.0 * rmse),
                coverage,
                coverage_mc_se: proportion_se(coverage, m),
                reps_used: m,
                failures: opts.reps - m,
            });
        }
    }
    Ok(out)
}

/// How the innovation covariance of the multivariate design is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaDraw {
    /// One draw per seed and dimension, shared by every cell.
    Fixed,
    /// One draw per cell, shared by its replications.
    PerCell,
    /// A fresh draw in every replication.
    PerReplication,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultCell {
    pub n: usize,
    pub periods: usize,
    pub r_star: Vec<f64>,
    pub beta_star: Vec<f64>,
    pub horizons: Vec<usize>,
    pub omega_draw: OmegaDraw,
}

impl MultCell {
    /// `k = 5`, `R* = diag(0.60, 0.95, 0.99, 1.00, 1.01)`, `β* = 0`.
    pub fn reference(n: usize, omega_draw: OmegaDraw) -> Self {
        Self {
            n,
            periods: n,
            r_star: GRID_RHOS.to_vec(),
            beta_star: vec![0.0; GRID_RHOS.len()],
            horizons: (1..=5).collect(),
            omega_draw,
        }
    }

    fn spec(&self, omega: &DMatrix<f64>) -> SimulationSpec {
        let d = omega.nrows();
        let mut s = SimulationSpec::univariate(self.n, self.periods, 0.0, 0.0, 0.0);
        s.rho_star = self.r_star.clone();
        s.beta_star = self.beta_star.clone();
        s.omega = (0..d).map(|r| (0..d).map(|c| omega[(r, c)]).collect()).collect();
        s
    }

    /// `β⁽ʰ⁾* = R*^{h−1} β*`.
    pub fn beta_h(&self, h: usize) -> Vec<f64> {
        self.r_star
            .iter()
            .zip(&self.beta_star)
            .map(|(r, b)| r.powi(h as i32 - 1) * b)
            .collect()
    }
}

/// `W W' + D` with standard normal `W` and `D = diag(U(0,1))`, rescaled to a
/// unit diagonal.
pub fn random_correlation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let w: DMatrix<f64> = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let unif = Uniform::new(0.0, 1.0).expect("valid bounds");
    let d = DMatrix::from_diagonal(&nalgebra::DVector::<f64>::from_fn(dim, |_, _| unif.sample(rng)));
    let m = &w * w.transpose() + d;
    let s: Vec<f64> = (0..dim).map(|i| m[(i, i)].sqrt()).collect();
    DMatrix::from_fn(dim, dim, |r, c| if r == c { 1.0 } else { m[(r, c)] / (s[r] * s[c]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultSummary {
    pub n: usize,
    pub periods: usize,
    pub horizon: usize,
    /// `‖m⁻¹ Σ (β̂ − β*)‖`.
    pub norm_bias: f64,
    /// `m⁻¹ Σ ‖β̂ − β*‖²`.
    pub msq_error: f64,
    /// `√(m⁻¹ Σ ‖β̂ − β*‖²)`, reported as `rmse` in the tables.
    pub rmse_root: f64,
    pub size: f64,
    pub size_mc_se: f64,
    pub nominal: f64,
    pub reps_used: usize,
    /// Replications whose `Θ̂` is not positive definite.
    pub indefinite_theta: usize,
    pub failures: usize,
}

struct MultRep {
    /// per horizon: (β̂ − β*, rejected, Θ̂ positive definite)
    per_h: Vec<Option<(Vec<f64>, bool, bool)>>,
}

fn cell_omega(dim: usize, seed: u64, key: u64) -> DMatrix<f64> {
    random_correlation(dim, &mut replication_rng(seed, key, u64::MAX))
}

/// The covariance shared by all cells under [`OmegaDraw::Fixed`].
pub fn fixed_omega(dim: usize, seed: u64) -> DMatrix<f64> {
    cell_omega(dim, seed, fnv1a(format!("omega:{dim}").as_bytes()))
}

fn mult_replication(cell: &MultCell, opts: &McOptions, key: u64, r: usize, shared: Option<&DMatrix<f64>>, crit: f64) -> MultRep {
    let mut rng = replication_rng(opts.seed, key, r as u64);
    let k = cell.r_star.len();
    let omega = match shared {
        Some(o) => o.clone(),
        None => random_correlation(k + 1, &mut rng),
    };
    let fail = || MultRep {
        per_h: vec![None; cell.horizons.len()],
    };
    let panel = match simulate_panel(&cell.spec(&omega), &mut rng) {
        Ok(p) => p,
        Err(_) => return fail(),
    };
    let base = match one_step(&panel, &opts.ivx) {
        Ok(b) => b,
        Err(_) => return fail(),
    };
    let per_h = cell
        .horizons
        .iter()
        .map(|&h| {
            let truth = cell.beta_h(h);
            let restriction = Restriction {
                a: DMatrix::identity(k, k),
                q: nalgebra::DVector::from_vec(truth.clone()),
            };
            let res = estimate_horizon(&panel, &opts.ivx, &base, h, Some(&restriction)).ok()?;
            let wald = res.wald?;
            if !wald.statistic.is_finite() {
                return None;
            }
            let dev: Vec<f64> = res.beta_ivxj.iter().zip(&truth).map(|(b, t)| b - t).collect();
            Some((dev, wald.statistic > crit, res.theta_positive_definite))
        })
        .collect();
    MultRep { per_h }
}

/// Wald size and estimation error of the multivariate correction under
/// `H₀: β⁽ʰ⁾ = R*^{h−1} β*`, at nominal level 5%.
pub fn run_mult_grid(cells: &[MultCell], opts: &McOptions) -> Result<Vec<MultSummary>> {
    if opts.reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    opts.ivx.validate()?;
    let nominal = 0.05;
    let mut out = Vec::new();
    for cell in cells {
        let k = cell.r_star.len();
        if k == 0 || cell.beta_star.len() != k || cell.horizons.is_empty() {
            return Err(Error::InvalidConfig("multivariate cell needs matching r_star and beta_star".into()));
        }
        let crit = ChiSquared::new(k as f64)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .inverse_cdf(1.0 - nominal);
        let key = fnv1a(serde_json::to_string(cell).expect("cell serializes").as_bytes());
        let shared = match cell.omega_draw {
            OmegaDraw::Fixed => Some(fixed_omega(k + 1, opts.seed)),
            OmegaDraw::PerCell => Some(cell_omega(k + 1, opts.seed, key)),
            OmegaDraw::PerReplication => None,
        };
        let reps: Vec<MultRep> = run_pool(opts.threads, || {
            (0..opts.reps)
                .into_par_iter()
                .map(|r| mult_replication(cell, opts, key, r, shared.as_ref(), crit))
                .collect()
        })?;
        for (hi, &h) in cell.horizons.iter().enumerate() {
            let ok: Vec<&(Vec<f64>, bool, bool)> = reps.iter().filter_map(|r| r.per_h[hi].as_ref()).collect();
            let m = ok.len();
            let mut mean_dev = vec![0.0; k];
            let mut msq = 0.0;
            for (dev, ..) in &ok {
                for j in 0..k {
                    mean_dev[j] += dev[j] / m as f64;
                }
                msq += dev.iter().map(|d| d * d).sum::<f64>() / m as f64;
            }
            let size = ok.iter().filter(|o| o.1).count() as f64 / m as f64;
            out.push(MultSummary {
                n: cell.n,
                periods: cell.periods,
                horizon: h,
                norm_bias: mean_dev.iter().map(|d| d * d).sum::<f64>().sqrt(),
                msq_error: msq,
                rmse_root: msq.sqrt(),
                size,
                size_mc_se: proportion_se(size, m),
                nominal,
                reps_used: m,
                indefinite_theta: ok.iter().filter(|o| !o.2).count(),
                failures: opts.reps - m,
            });
        }
    }
    Ok(out)
}

/// Univariate tables laid out as rows of `(ρ*, n, T, ω12)` and one column
/// per estimator, followed by the matching Monte Carlo standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniTable {
    Bias,
    Rmse,
    Coverage,
}

impl UniTable {
    pub fn name(self) -> &'static str {
        match self {
            UniTable::Bias => "bias",
            UniTable::Rmse => "rmse",
            UniTable::Coverage => "coverage",
        }
    }

    fn value(self, s: &MonteCarloSummary) -> f64 {
        match self {
            UniTable::Bias => s.bias,
            UniTable::Rmse => s.rmse,
            UniTable::Coverage => s.coverage,
        }
    }

    fn mc_se(self, s: &MonteCarloSummary) -> f64 {
        match self {
            UniTable::Bias => s.bias_mc_se,
            UniTable::Rmse => s.rmse_mc_se,
            UniTable::Coverage => s.coverage_mc_se,
        }
    }
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NaN".into()
    }
}

/// Groups summaries by cell, preserving first-seen order.
fn by_cell(summaries: &[MonteCarloSummary]) -> Vec<(CellInfo, Vec<&MonteCarloSummary>)> {
    let mut out: Vec<(CellInfo, Vec<&MonteCarloSummary>)> = Vec::new();
    for s in summaries {
        match out.iter_mut().find(|(c, _)| *c == s.cell) {
            Some((_, v)) => v.push(s),
            None => out.push((s.cell.clone(), vec![s])),
        }
    }
    out
}

pub fn uni_table_csv(summaries: &[MonteCarloSummary], table: UniTable) -> String {
    let groups = by_cell(summaries);
    let variants: Vec<Variant> = groups
        .first()
        .map(|(_, v)| v.iter().map(|s| s.estimator).collect())
        .unwrap_or_default();
    let mut s = String::from("rho_star,n,T,omega12");
    for v in &variants {
        s.push(',');
        s.push_str(v.label());
    }
    for v in &variants {
        s.push_str(&format!(",{}_mc_se", v.label()));
    }
    s.push_str(",failures\n");
    for (cell, rows) in &groups {
        s.push_str(&format!("{:.2},{},{},{:.2}", cell.rho_star, cell.n, cell.periods, cell.omega12));
        for r in rows {
            s.push(',');
            s.push_str(&fmt(table.value(r)));
        }
        for r in rows {
            s.push(',');
            s.push_str(&fmt(table.mc_se(r)));
        }
        s.push_str(&format!(",{}\n", rows.iter().map(|r| r.failures).sum::<usize>()));
    }
    s
}

/// One row per `(table, cell, estimator)` for plotting.
pub fn uni_long_csv(summaries: &[MonteCarloSummary]) -> String {
    let mut s = String::from("table,rho_star,n,T,omega12,estimator,value,mc_se\n");
    for table in [UniTable::Bias, UniTable::Rmse, UniTable::Coverage] {
        for r in summaries {
            s.push_str(&format!(
                "{},{:.2},{},{},{:.2},{},{},{}\n",
                table.name(),
                r.cell.rho_star,
                r.cell.n,
                r.cell.periods,
                r.cell.omega12,
                r.estimator.label(),
                fmt(table.value(r)),
                fmt(table.mc_se(r))
            ));
        }
    }
    s
}

/// Rows `(quantity, n=T)` by horizon columns; sizes in percent.
pub fn mult_table_csv(summaries: &[MultSummary]) -> String {
    let mut horizons: Vec<usize> = summaries.iter().map(|s| s.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut sizes: Vec<usize> = summaries.iter().map(|s| s.n).collect();
    sizes.dedup();
    let mut out = String::from("quantity,n,T");
    for h in &horizons {
        out.push_str(&format!(",h{h}"));
    }
    for h in &horizons {
        out.push_str(&format!(",h{h}_mc_se"));
    }
    out.push('\n');
    type Pick = fn(&MultSummary) -> (f64, f64);
    let rows: [(&str, Pick); 5] = [
        ("bias", |s| (s.norm_bias, f64::NAN)),
        ("mean_sq_error", |s| (s.msq_error, f64::NAN)),
        ("rmse", |s| (s.rmse_root, f64::NAN)),
        ("size_pct", |s| (100.0 * s.size, 100.0 * s.size_mc_se)),
        ("indefinite_theta_pct", |s| (100.0 * s.indefinite_theta as f64 / s.reps_used as f64, f64::NAN)),
    ];
    for (name, pick) in rows {
        for &n in &sizes {
            let cells: Vec<&MultSummary> = summaries.iter().filter(|s| s.n == n).collect();
            let t = cells.first().map_or(n, |c| c.periods);
            out.push_str(&format!("{name},{n},{t}"));
            for h in &horizons {
                let v = cells.iter().find(|c| c.horizon == *h).map_or(f64::NAN, |c| pick(c).0);
                out.push_str(&format!(",{}", fmt(v)));
            }
            for h in &horizons {
                let v = cells.iter().find(|c| c.horizon == *h).map_or(f64::NAN, |c| pick(c).1);
                out.push_str(&format!(",{}", fmt(v)));
            }
            out.push('\n');
        }
    }
    out
}
