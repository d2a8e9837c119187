//! Data-generating process for simulated panels.
//!
//! ```text
//! x_{i,t} = α_i + δ_{i,t},   δ_{i,t} = R δ_{i,t−1} + v_{i,t}
//! y_{i,t} = μ_{y,i} + β' x_{i,t−1} + e_{i,t}
//! ```
//!
//! with `(e, v')'` drawn with covariance `Ω` and `t = 0` the pre-sample
//! period (`x_{i,0} = α_i + δ_{i,0}`).

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Individual, Panel};

/// Innovation family. Student-t draws are rescaled to unit variance before
/// the Cholesky factor is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Innovations {
    Normal,
    StudentT { df: f64 },
}

/// Distribution of a per-individual, per-regressor scalar (`α_{j,i}`,
/// `δ_{j,i,0}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScalarDist {
    Normal { mean: f64, sd: f64 },
    Constant { value: f64 },
}

impl ScalarDist {
    pub const STANDARD_NORMAL: ScalarDist = ScalarDist::Normal { mean: 0.0, sd: 1.0 };

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarDist::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            ScalarDist::Constant { value } => value,
        }
    }
}

/// Rule for the target's fixed effect `μ_{y,i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffectRule {
    /// `(1/(kT)) Σ_j Σ_{t=1}^{T} x_{j,i,t}`.
    TimeAverage,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n: usize,
    /// Estimation periods per individual (the pre-sample row is extra).
    pub periods: usize,
    /// Diagonal of the autoregressive matrix, one entry per regressor.
    pub rho_star: Vec<f64>,
    pub beta_star: Vec<f64>,
    /// `(k+1)×(k+1)` covariance of `(e, v_1, …, v_k)`, row-major.
    pub omega: Vec<Vec<f64>>,
    #[serde(default = "default_fe_rule")]
    pub fe_rule: FixedEffectRule,
    #[serde(default = "default_scalar")]
    pub alpha_dist: ScalarDist,
    #[serde(default = "default_scalar")]
    pub delta0_dist: ScalarDist,
    #[serde(default = "default_innovations")]
    pub innovations: Innovations,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_fe_rule() -> FixedEffectRule {
    FixedEffectRule::TimeAverage
}
fn default_scalar() -> ScalarDist {
    ScalarDist::STANDARD_NORMAL
}
fn default_innovations() -> Innovations {
    Innovations::Normal
}
fn default_reps() -> usize {
    1
}

impl SimulationSpec {
    /// Univariate design with unit innovation variances and correlation
    /// `omega12`.
    pub fn univariate(n: usize, periods: usize, rho_star: f64, beta_star: f64, omega12: f64) -> Self {
        Self {
            n,
            periods,
            rho_star: vec![rho_star],
            beta_star: vec![beta_star],
            omega: vec![vec![1.0, omega12], vec![omega12, 1.0]],
            fe_rule: FixedEffectRule::TimeAverage,
            alpha_dist: ScalarDist::STANDARD_NORMAL,
            delta0_dist: ScalarDist::STANDARD_NORMAL,
            innovations: Innovations::Normal,
            reps: 1,
            seed: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.rho_star.len()
    }

    pub fn omega_matrix(&self) -> DMatrix<f64> {
        let d = self.omega.len();
        DMatrix::from_fn(d, d, |r, c| self.omega[r][c])
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.beta_star.len() != k {
            return Err(Error::InvalidConfig(format!(
                "rho_star has {} entries, beta_star {}",
                k,
                self.beta_star.len()
            )));
        }
        if self.n == 0 || self.reps == 0 {
            return Err(Error::InvalidConfig("n and reps must be positive".into()));
        }
        if self.periods < crate::panel::MIN_PERIODS {
            return Err(Error::InvalidConfig(format!(
                "periods must be at least {}",
                crate::panel::MIN_PERIODS
            )));
        }
        if let Innovations::StudentT { df } = self.innovations {
            if !(df > 2.0) {
                return Err(Error::InvalidConfig(format!("student-t df must exceed 2, got {df}")));
            }
        }
        self.cholesky().map(|_| ())
    }

    fn cholesky(&self) -> Result<DMatrix<f64>> {
        let d = self.k() + 1;
        if self.omega.len() != d || self.omega.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidCovariance(format!("omega must be {d}x{d}")));
        }
        let m = self.omega_matrix();
        for r in 0..d {
            for c in 0..r {
                let scale = m[(r, r)].abs().max(m[(c, c)].abs()).max(1.0);
                if (m[(r, c)] - m[(c, r)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidCovariance("omega is not symmetric".into()));
                }
            }
        }
        Cholesky::new(m)
            .map(|c| c.l())
            .ok_or_else(|| Error::InvalidCovariance("omega is not positive definite".into()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

/// A simulated panel together with its latent components.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: Panel,
    /// `alpha[i][j]`.
    pub alpha: Vec<Vec<f64>>,
    pub mu_y: Vec<f64>,
    /// `e[i][t]` for `t = 0..=T`; index 0 is unused and zero.
    pub errors: Vec<Vec<f64>>,
}

/// Simulates one panel from `spec`.
pub fn simulate_panel<R: Rng + ?Sized>(spec: &SimulationSpec, rng: &mut R) -> Result<Panel> {
    simulate_detailed(spec, rng).map(|s| s.panel)
}

pub fn simulate_detailed<R: Rng + ?Sized>(spec: &SimulationSpec, rng: &mut R) -> Result<SimulatedPanel> {
    spec.validate()?;
    let chol = spec.cholesky()?;
    let k = spec.k();
    let big_t = spec.periods;
    let t_scale = match spec.innovations {
        Innovations::Normal => None,
        Innovations::StudentT { df } => Some((StudentT::new(df).expect("validated df"), ((df - 2.0) / df).sqrt())),
    };

    let mut individuals = Vec::with_capacity(spec.n);
    let mut alphas = Vec::with_capacity(spec.n);
    let mut mus = Vec::with_capacity(spec.n);
    let mut errors = Vec::with_capacity(spec.n);
    let mut raw = vec![0.0; k + 1];
    let mut u = vec![0.0; k + 1];

    for i in 0..spec.n {
        let alpha: Vec<f64> = (0..k).map(|_| spec.alpha_dist.sample(rng)).collect();
        let mut delta: Vec<f64> = (0..k).map(|_| spec.delta0_dist.sample(rng)).collect();
        let mut x = vec![vec![0.0; big_t + 1]; k];
        let mut e = vec![0.0; big_t + 1];
        for j in 0..k {
            x[j][0] = alpha[j] + delta[j];
        }
        for t in 1..=big_t {
            for slot in raw.iter_mut() {
                *slot = match &t_scale {
                    None => StandardNormal.sample(rng),
                    Some((dist, scale)) => dist.sample(rng) * scale,
                };
            }
            for (r, slot) in u.iter_mut().enumerate() {
                *slot = (0..=r).map(|c| chol[(r, c)] * raw[c]).sum();
            }
            e[t] = u[0];
            for j in 0..k {
                delta[j] = spec.rho_star[j] * delta[j] + u[j + 1];
                x[j][t] = alpha[j] + delta[j];
            }
        }
        let mu = match spec.fe_rule {
            FixedEffectRule::TimeAverage => {
                x.iter().map(|col| col[1..].iter().sum::<f64>()).sum::<f64>() / (k * big_t) as f64
            }
            FixedEffectRule::Zero => 0.0,
        };
        let mut y = vec![0.0; big_t + 1];
        for t in 1..=big_t {
            let fit: f64 = (0..k).map(|j| spec.beta_star[j] * x[j][t - 1]).sum();
            y[t] = mu + fit + e[t];
        }
        let times = (0..=big_t as i64).collect();
        individuals.push(Individual::new(format!("{}", i + 1), times, x, y)?);
        alphas.push(alpha);
        mus.push(mu);
        errors.push(e);
    }

    Ok(SimulatedPanel {
        panel: Panel::new(individuals)?,
        alpha: alphas,
        mu_y: mus,
        errors,
    })
}

/// Independent generator for replication `rep` of cell `cell`.
///
/// The key mixes the master seed and the cell; the replication selects the
/// ChaCha stream, so draws never depend on scheduling.
pub fn replication_rng(seed: u64, cell: u64, rep: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&cell.to_le_bytes());
    key[16..24].copy_from_slice(b"ivxjpanl");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(rep);
    rng
}
