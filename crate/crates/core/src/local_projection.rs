//! Multivariate, multi-horizon panel local projection with the jackknife
//! bias correction and a serial-correlation-aware covariance.
//!
//! At horizon `h`, `y_{i,t+h}` is projected on `x_{i,t}` for
//! `t = 1..=T_i − h` with the instrument truncated to the same periods. The
//! innovation covariance, the autoregressive roots and the slope plugged into
//! the bias are one-step quantities shared by every horizon.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::IvxConfig;
use crate::error::{Error, Result};
use crate::estimators::{ivx_instrument, lag_lead, xj_rho_column, IvxInstrument};
use crate::geometric::double_geometric;
use crate::panel::{effective_periods, mean, Panel};

/// Largest accepted condition number of the instrument design.
pub const MAX_CONDITION: f64 = 1e12;

/// Linear restrictions `A β = q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub a: DMatrix<f64>,
    pub q: DVector<f64>,
}

impl Restriction {
    pub fn new(a: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if a.nrows() != q.len() {
            return Err(Error::InvalidConfig(format!(
                "restriction matrix has {} rows but q has {} entries",
                a.nrows(),
                q.len()
            )));
        }
        if a.nrows() == 0 || a.nrows() > a.ncols() {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= m <= k restrictions, got m = {}, k = {}",
                a.nrows(),
                a.ncols()
            )));
        }
        let sv = a.clone().svd(false, false).singular_values;
        let top = sv.max();
        if sv.iter().any(|&s| s <= top * 1e-12) {
            return Err(Error::InvalidConfig("restriction matrix is not of full row rank".into()));
        }
        Ok(Self { a, q })
    }

    /// `H₀: β = 0`.
    pub fn all_zero(k: usize) -> Self {
        Self {
            a: DMatrix::identity(k, k),
            q: DVector::zeros(k),
        }
    }

    /// `H₀: β_j = value`.
    pub fn single(k: usize, j: usize, value: f64) -> Self {
        let mut a = DMatrix::zeros(1, k);
        a[(0, j)] = 1.0;
        Self {
            a,
            q: DVector::from_element(1, value),
        }
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongHorizonConfig {
    pub horizons: Vec<usize>,
    pub ivx: IvxConfig,
    pub restriction: Option<Restriction>,
}

impl LongHorizonConfig {
    pub fn new(horizons: Vec<usize>, ivx: IvxConfig) -> Self {
        Self {
            horizons,
            ivx,
            restriction: None,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        self.ivx.validate()?;
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::InvalidConfig("horizons must be a nonempty list of positive counts".into()));
        }
        if let Some(r) = &self.restriction {
            if r.a.ncols() != k {
                return Err(Error::InvalidConfig(format!(
                    "restriction matrix has {} columns for {} regressors",
                    r.a.ncols(),
                    k
                )));
            }
        }
        Ok(())
    }
}

/// One-step innovation covariance: `ω11`, `ω12` and `Ω22`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultCovariance {
    pub omega11: f64,
    pub omega12: DVector<f64>,
    pub omega22: DMatrix<f64>,
}

impl MultCovariance {
    /// `(k+1)×(k+1)` covariance of `(e, v')'`.
    pub fn full(&self) -> DMatrix<f64> {
        let k = self.omega12.len();
        let mut m = DMatrix::zeros(k + 1, k + 1);
        m[(0, 0)] = self.omega11;
        for j in 0..k {
            m[(0, j + 1)] = self.omega12[j];
            m[(j + 1, 0)] = self.omega12[j];
            for l in 0..k {
                m[(j + 1, l + 1)] = self.omega22[(j, l)];
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonResult {
    pub horizon: usize,
    pub beta_ivx: DVector<f64>,
    pub beta_ivxj: DVector<f64>,
    pub bias: DVector<f64>,
    pub xi: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub theta_hat: DMatrix<f64>,
    /// `Γ̂ee(ℓ)` for `ℓ = 0..h`.
    pub gamma_ee: Vec<f64>,
    pub condition: f64,
    /// `Θ̂` admits a Cholesky factor. The diagonal-only `M_T` can break this
    /// when several regressors have `ρ̂ ≥ 1`.
    pub theta_positive_definite: bool,
    pub wald: Option<WaldTest>,
}

impl HorizonResult {
    /// `√diag Θ̂`; NaN where the diagonal is not positive.
    pub fn se(&self) -> DVector<f64> {
        self.theta_hat.diagonal().map(|v| if v > 0.0 { v.sqrt() } else { f64::NAN })
    }

    /// `β̂_j / se_j`, centred at zero.
    pub fn t_stats(&self) -> DVector<f64> {
        self.beta_ivxj.component_div(&self.se())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongHorizonResult {
    pub rho_z: f64,
    pub beta_one_step: DVector<f64>,
    /// Diagonal of `R̂`.
    pub r_xj: DVector<f64>,
    pub cov: MultCovariance,
    pub horizons: Vec<HorizonResult>,
}

impl LongHorizonResult {
    pub fn omega_hat(&self) -> DMatrix<f64> {
        self.cov.full()
    }
}

/// `Σ_i Σ_t z̃_{i,t} x'_{i,t}` and `Σ_i Σ_t z̃_{i,t} y_{i,t+h}`.
pub fn design_sums(panel: &Panel, iv: &IvxInstrument) -> (DMatrix<f64>, DVector<f64>) {
    let k = panel.k();
    let h = iv.horizon();
    let mut d = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (i, ind) in panel.individuals().iter().enumerate() {
        for a in 0..k {
            let zt = iv.z_tilde(i, a);
            let (_, yl) = lag_lead(ind.x(0), ind.y(), h);
            rhs[a] += zt.iter().zip(yl).map(|(u, v)| u * v).sum::<f64>();
            for b in 0..k {
                let (xl, _) = lag_lead(ind.x(b), ind.y(), h);
                d[(a, b)] += zt.iter().zip(xl).map(|(u, v)| u * v).sum::<f64>();
            }
        }
    }
    (d, rhs)
}

/// Condition number of `d` from its singular values.
pub fn condition_number(d: &DMatrix<f64>) -> f64 {
    let sv = d.clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solves `d x = b` by partially pivoted LU after a condition check.
fn solve_design(d: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cond = condition_number(d);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularDesign(format!("condition number {cond:.3e}")));
    }
    d.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularDesign("LU factorization failed".into()))
}

/// `(Σ z̃ x')⁻¹ Σ z̃ y_{t+h}`.
pub fn ivx_beta_h(panel: &Panel, iv: &IvxInstrument) -> Result<DVector<f64>> {
    let (d, rhs) = design_sums(panel, iv);
    let sol = solve_design(&d, &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
    Ok(sol.column(0).into_owned())
}

/// Diagonal of the per-regressor jackknife roots.
pub fn r_xj(panel: &Panel) -> Result<DVector<f64>> {
    let vals = (0..panel.k())
        .map(|j| xj_rho_column(panel, j).map(|e| e.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

/// One-step residual moments at `(β, R)` with divisor `Σ_i (T_i − 2)`.
pub fn omega_hats_mult(beta: &DVector<f64>, r: &DVector<f64>, panel: &Panel) -> Result<MultCovariance> {
    let k = panel.k();
    if beta.len() != k || r.len() != k {
        return Err(Error::InvalidConfig("coefficient dimension does not match the panel".into()));
    }
    let mut s11 = 0.0;
    let mut s12 = DVector::zeros(k);
    let mut s22 = DMatrix::zeros(k, k);
    let mut div = 0.0;
    let mut v = vec![0.0; k];
    for ind in panel.individuals() {
        let y = ind.y();
        let lags: Vec<(&[f64], &[f64])> = (0..k).map(|j| lag_lead(ind.x(j), ind.x(j), 1)).collect();
        let (_, yl) = lag_lead(ind.x(0), y, 1);
        let lag_means: Vec<f64> = lags.iter().map(|(l, _)| mean(l)).collect();
        let lead_means: Vec<f64> = lags.iter().map(|(_, n)| mean(n)).collect();
        let ym = mean(yl);
        for t in 0..yl.len() {
            let mut e = yl[t] - ym;
            for j in 0..k {
                let lag = lags[j].0[t] - lag_means[j];
                e -= beta[j] * lag;
                v[j] = (lags[j].1[t] - lead_means[j]) - r[j] * lag;
            }
            s11 += e * e;
            for a in 0..k {
                s12[a] += e * v[a];
                for b in 0..k {
                    s22[(a, b)] += v[a] * v[b];
                }
            }
        }
        div += (ind.periods() - 2) as f64;
    }
    Ok(MultCovariance {
        omega11: s11 / div,
        omega12: s12 / div,
        omega22: s22 / div,
    })
}

/// `ξ⁽ʰ⁾`, with the `n/T_h` scaling accumulated per individual from the
/// estimation periods `periods[i] = T_i`.
#[allow(clippy::too_many_arguments)]
pub fn xi_h(
    r: &DVector<f64>,
    omega12: &DVector<f64>,
    omega22: &DMatrix<f64>,
    beta: &DVector<f64>,
    h: usize,
    periods: &[usize],
    rho_z: f64,
) -> DVector<f64> {
    let k = r.len();
    // c_τ = Ω22 R^{h−1−τ} β for τ = 1..h−1
    let carried: Vec<DVector<f64>> = (1..h)
        .map(|tau| {
            let pw = r.map(|rj| rj.powi((h - 1 - tau) as i32));
            omega22 * pw.component_mul(beta)
        })
        .collect();
    let mut xi = DVector::zeros(k);
    for &big_t in periods {
        let th = effective_periods(big_t, h);
        if th == 0 {
            continue;
        }
        let scale = 1.0 / th as f64;
        for j in 0..k {
            let mut acc = double_geometric(rho_z, r[j], th, h + 1) * omega12[j];
            for tau in 1..h {
                acc += double_geometric(rho_z, r[j], th, tau + 1) * carried[tau - 1][j];
            }
            xi[j] += scale * acc;
        }
    }
    xi
}

/// `F̂_τ [1; β]`: the error selector for `τ = 0`, otherwise `(0, R^{τ−1} β)`.
fn f_times(tau: usize, beta: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
    let k = beta.len();
    let mut u = DVector::zeros(k + 1);
    if tau == 0 {
        u[0] = 1.0;
    } else {
        for j in 0..k {
            u[j + 1] = r[j].powi((tau - 1) as i32) * beta[j];
        }
    }
    u
}

/// `[1, β'] (Σ_{τ=ℓ+1}^{h} F̂_{h−τ} Ω̂ F̂'_{h−τ+ℓ}) [1; β]`.
pub fn gamma_ee_h(ell: usize, h: usize, beta: &DVector<f64>, r: &DVector<f64>, omega: &DMatrix<f64>) -> f64 {
    (ell + 1..=h)
        .map(|tau| {
            let left = f_times(h - tau, beta, r);
            let right = f_times(h - tau + ell, beta, r);
            left.dot(&(omega * right))
        })
        .sum()
}

/// `Σ_i (Σ_t z z' − M_T)` with `M_T = T_h^θ ρ_z^{h−1} diag(𝟙(ρ̂_j ≥ 1) z̄²_{j,i})`.
pub fn instrument_moment(panel: &Panel, iv: &IvxInstrument, r: &DVector<f64>, theta: f64) -> DMatrix<f64> {
    let k = panel.k();
    let h = iv.horizon();
    let damp = iv.rho_z().powi(h as i32 - 1);
    let mut s = DMatrix::zeros(k, k);
    for i in 0..panel.n() {
        for a in 0..k {
            let za = iv.z(i, a);
            for b in a..k {
                let v: f64 = za.iter().zip(iv.z(i, b)).map(|(u, w)| u * w).sum();
                s[(a, b)] += v;
                if a != b {
                    s[(b, a)] += v;
                }
            }
            if r[a] >= 1.0 {
                let zbar = mean(za);
                s[(a, a)] -= (za.len() as f64).powf(theta) * damp * zbar * zbar;
            }
        }
    }
    s
}

/// `Σ̂ = Π̂(0) + Σ_{ℓ=1}^{h−1} (Π̂(ℓ) + Π̂(ℓ)')` with `Π̂(ℓ) = Γ̂ee(ℓ) S R^ℓ`.
pub fn sigma_hat_h(s: &DMatrix<f64>, gamma: &[f64], r: &DVector<f64>) -> DMatrix<f64> {
    let mut sigma = s * gamma[0];
    for (ell, &g) in gamma.iter().enumerate().skip(1) {
        let pw = r.map(|rj| rj.powi(ell as i32));
        let pi = (s * DMatrix::from_diagonal(&pw)) * g;
        sigma += &pi + pi.transpose();
    }
    sigma
}

/// `D⁻¹ Σ̂ D⁻ᵀ`.
pub fn theta_hat_h(design: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let left = solve_design(design, sigma)?;
    let theta = solve_design(design, &left.transpose())?;
    // symmetrise away rounding noise
    Ok((&theta + theta.transpose()) * 0.5)
}

/// `(Aβ − q)' (A Θ̂ A')⁻¹ (Aβ − q)` and its `χ²(m)` p-value.
pub fn wald_h(restriction: &Restriction, beta: &DVector<f64>, theta: &DMatrix<f64>) -> Result<WaldTest> {
    let a = &restriction.a;
    let diff = a * beta - &restriction.q;
    let v = a * theta * a.transpose();
    let scale = v.diagonal().abs().max();
    let sv = v.clone().svd(false, false).singular_values;
    if !(scale > 0.0) || sv.min() <= scale * 1e-14 {
        return Err(Error::SingularRestriction);
    }
    let sol = v.lu().solve(&diff).ok_or(Error::SingularRestriction)?;
    let statistic = diff.dot(&sol);
    let m = restriction.m();
    let p_value = ChiSquared::new(m as f64)
        .map(|d| 1.0 - d.cdf(statistic.max(0.0)))
        .unwrap_or(f64::NAN);
    Ok(WaldTest {
        statistic,
        df: m,
        p_value,
    })
}

/// One-step quantities shared by every horizon.
#[derive(Debug, Clone)]
pub struct OneStep {
    pub rho_z: f64,
    pub beta: DVector<f64>,
    pub r: DVector<f64>,
    pub cov: MultCovariance,
    pub omega: DMatrix<f64>,
}

pub fn one_step(panel: &Panel, ivx: &IvxConfig) -> Result<OneStep> {
    let rho_z = ivx.rho_z_for(panel)?;
    let iv1 = ivx_instrument(panel, rho_z, 1)?;
    let beta = ivx_beta_h(panel, &iv1)?;
    let r = r_xj(panel)?;
    let cov = omega_hats_mult(&beta, &r, panel)?;
    let omega = cov.full();
    Ok(OneStep {
        rho_z,
        beta,
        r,
        cov,
        omega,
    })
}

pub fn estimate_horizon(
    panel: &Panel,
    ivx: &IvxConfig,
    base: &OneStep,
    h: usize,
    restriction: Option<&Restriction>,
) -> Result<HorizonResult> {
    let min_t = panel.min_periods();
    if h + 2 > min_t {
        return Err(Error::InvalidConfig(format!(
            "horizon {h} leaves fewer than two regression pairs for an individual with {min_t} periods"
        )));
    }
    let iv = ivx_instrument(panel, base.rho_z, h)?;
    let (design, rhs) = design_sums(panel, &iv);
    let condition = condition_number(&design);
    let beta_ivx = solve_design(&design, &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))?
        .column(0)
        .into_owned();
    let periods: Vec<usize> = panel.individuals().iter().map(|ind| ind.periods()).collect();
    let xi = xi_h(&base.r, &base.cov.omega12, &base.cov.omega22, &base.beta, h, &periods, base.rho_z);
    let bias = solve_design(&design, &DMatrix::from_column_slice(xi.len(), 1, xi.as_slice()))?
        .column(0)
        .into_owned();
    let beta_ivxj = &beta_ivx + &bias;
    let gamma_ee: Vec<f64> = (0..h).map(|l| gamma_ee_h(l, h, &base.beta, &base.r, &base.omega)).collect();
    let s = instrument_moment(panel, &iv, &base.r, ivx.theta);
    let sigma_hat = sigma_hat_h(&s, &gamma_ee, &base.r);
    let theta_hat = theta_hat_h(&design, &sigma_hat)?;
    let theta_positive_definite = theta_hat.clone().cholesky().is_some();
    let wald = restriction.map(|rs| wald_h(rs, &beta_ivxj, &theta_hat)).transpose()?;
    Ok(HorizonResult {
        horizon: h,
        beta_ivx,
        beta_ivxj,
        bias,
        xi,
        sigma_hat,
        theta_hat,
        gamma_ee,
        condition,
        theta_positive_definite,
        wald,
    })
}

/// Runs every configured horizon.
pub fn estimate_lp(panel: &Panel, config: &LongHorizonConfig) -> Result<LongHorizonResult> {
    config.validate(panel.k())?;
    let base = one_step(panel, &config.ivx)?;
    let horizons = config
        .horizons
        .iter()
        .map(|&h| estimate_horizon(panel, &config.ivx, &base, h, config.restriction.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(LongHorizonResult {
        rho_z: base.rho_z,
        beta_one_step: base.beta,
        r_xj: base.r,
        cov: base.cov,
        horizons,
    })
}
