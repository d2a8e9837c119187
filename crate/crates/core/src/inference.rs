//! Bias corrections, innovation covariances, standard errors and the
//! two-base correction algorithm producing the eight estimator variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::IvxConfig;
use crate::error::{Error, Result};
use crate::estimators::{
    ivx_beta_sums, ivx_instrument, lag_lead, wg_beta, wg_rho, xd_rho, xj_rho, IvxInstrument,
};
use crate::geometric::{double_geometric, lambda_t};
use crate::panel::{demean_within, effective_periods, mean, Panel};

/// Sample moments of the demeaned innovations `(ẽ, ṽ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceHat {
    pub omega11: f64,
    pub omega12: f64,
    pub omega22: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Base {
    Wg,
    Ivx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RhoMethod {
    None,
    Wg,
    Xd,
    Xj,
}

/// The eight base/root combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "WG")]
    Wg,
    #[serde(rename = "WG-WG")]
    WgWg,
    #[serde(rename = "WG-XD")]
    WgXd,
    #[serde(rename = "WG-XJ")]
    WgXj,
    #[serde(rename = "IVX")]
    Ivx,
    #[serde(rename = "IVX-WG")]
    IvxWg,
    #[serde(rename = "IVX-XD")]
    IvxXd,
    #[serde(rename = "IVXJ")]
    Ivxj,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Wg,
        Variant::WgWg,
        Variant::WgXd,
        Variant::WgXj,
        Variant::Ivx,
        Variant::IvxWg,
        Variant::IvxXd,
        Variant::Ivxj,
    ];

    pub fn new(base: Base, rho_method: RhoMethod) -> Self {
        match (base, rho_method) {
            (Base::Wg, RhoMethod::None) => Variant::Wg,
            (Base::Wg, RhoMethod::Wg) => Variant::WgWg,
            (Base::Wg, RhoMethod::Xd) => Variant::WgXd,
            (Base::Wg, RhoMethod::Xj) => Variant::WgXj,
            (Base::Ivx, RhoMethod::None) => Variant::Ivx,
            (Base::Ivx, RhoMethod::Wg) => Variant::IvxWg,
            (Base::Ivx, RhoMethod::Xd) => Variant::IvxXd,
            (Base::Ivx, RhoMethod::Xj) => Variant::Ivxj,
        }
    }

    pub fn base(self) -> Base {
        match self {
            Variant::Wg | Variant::WgWg | Variant::WgXd | Variant::WgXj => Base::Wg,
            _ => Base::Ivx,
        }
    }

    pub fn rho_method(self) -> RhoMethod {
        match self {
            Variant::Wg | Variant::Ivx => RhoMethod::None,
            Variant::WgWg | Variant::IvxWg => RhoMethod::Wg,
            Variant::WgXd | Variant::IvxXd => RhoMethod::Xd,
            Variant::WgXj | Variant::Ivxj => RhoMethod::Xj,
        }
    }

    /// Root used for the standard error. Uncorrected variants borrow one:
    /// WG takes `ρ̂WG`, IVX shares the IVXJ standard error and takes `ρ̂XJ`.
    pub fn se_rho_method(self) -> RhoMethod {
        match self {
            Variant::Wg => RhoMethod::Wg,
            Variant::Ivx => RhoMethod::Xj,
            other => other.rho_method(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Wg => "WG",
            Variant::WgWg => "WG-WG",
            Variant::WgXd => "WG-XD",
            Variant::WgXj => "WG-XJ",
            Variant::Ivx => "IVX",
            Variant::IvxWg => "IVX-WG",
            Variant::IvxXd => "IVX-XD",
            Variant::Ivxj => "IVXJ",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        let unified = up.replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.label() == unified)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub variant: Variant,
    pub base: Base,
    pub rho_method: RhoMethod,
    pub beta_hat: f64,
    pub beta_raw: f64,
    pub bias_correction: f64,
    /// `b(ρ̂)`; zero for uncorrected variants.
    pub bias_factor: f64,
    /// Root plugged into the covariance and standard error.
    pub rho_hat: f64,
    pub rho_z: f64,
    pub se: f64,
    pub t_stat: f64,
    pub null_value: f64,
    pub ci: (f64, f64),
    pub ci_level: f64,
    pub cov: CovarianceHat,
}

/// `n Σ_{t=2}^{T−1} Σ_{s=2}^{t} ρ^{t−s} / [(T−1) Σ x̃²]`, with the numerator
/// accumulated per individual.
pub fn bias_wg(rho: f64, panel: &Panel) -> Result<f64> {
    panel.require_univariate()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ind in panel.individuals() {
        let te = effective_periods(ind.periods(), 1);
        num += double_geometric(rho, 1.0, te, 2) / te as f64;
        let (xl, _) = lag_lead(ind.x(0), ind.y(), 1);
        let xt = demean_within(xl);
        den += xt.iter().map(|v| v * v).sum::<f64>();
    }
    if den == 0.0 {
        return Err(Error::DegenerateRegressor("regressor constant within every individual"));
    }
    Ok(num / den)
}

/// `n Σ_{t=2}^{T−1} Σ_{s=2}^{t} ρ_z^{t−s} ρ^{s−2} / [(T−1) Σ z̃ x]`.
pub fn bias_ivx(rho: f64, panel: &Panel, iv: &IvxInstrument) -> Result<f64> {
    panel.require_univariate()?;
    let num: f64 = panel
        .individuals()
        .iter()
        .map(|ind| {
            let te = effective_periods(ind.periods(), iv.horizon());
            double_geometric(iv.rho_z(), rho, te, 2) / te as f64
        })
        .sum();
    let (_, den) = ivx_beta_sums(panel, iv);
    if den == 0.0 {
        return Err(Error::SingularDesign("instrument uncorrelated with regressor".into()));
    }
    Ok(num / den)
}

/// Residual moments at `(β, ρ)` with divisor `Σ_i (T_i − 2)`.
///
/// The lead series `y_{t+1}`, `x_{t+1}` and the lag `x_t` are demeaned
/// separately over `t = 1..=T_i − 1`.
pub fn omega_hats(beta: f64, rho: f64, panel: &Panel) -> Result<CovarianceHat> {
    panel.require_univariate()?;
    let (mut s11, mut s12, mut s22, mut div) = (0.0, 0.0, 0.0, 0.0);
    for ind in panel.individuals() {
        let x = ind.x(0);
        let (xl, yl) = lag_lead(x, ind.y(), 1);
        let (_, xn) = lag_lead(x, x, 1);
        let (xlm, ylm, xnm) = (mean(xl), mean(yl), mean(xn));
        for t in 0..xl.len() {
            let lag = xl[t] - xlm;
            let e = (yl[t] - ylm) - beta * lag;
            let v = (xn[t] - xnm) - rho * lag;
            s11 += e * e;
            s12 += e * v;
            s22 += v * v;
        }
        div += (ind.periods() - 2) as f64;
    }
    Ok(CovarianceHat {
        omega11: s11 / div,
        omega12: s12 / div,
        omega22: s22 / div,
    })
}

/// `√ω11 · √(Σ_i [Σ_t z² − 𝟙(ρ ≥ 1)(T_i − 1)^θ z̄_i²]) / |Σ z̃ x|`.
pub fn se_ivx(omega11: f64, rho: f64, theta: f64, iv: &IvxInstrument, panel: &Panel) -> Result<f64> {
    panel.require_univariate()?;
    let radicand = ivx_radicand(rho, theta, iv, panel);
    if radicand < 0.0 {
        return Err(Error::CorrectionExceedsSumOfSquares { radicand });
    }
    let (_, den) = ivx_beta_sums(panel, iv);
    if den == 0.0 {
        return Err(Error::SingularDesign("instrument uncorrelated with regressor".into()));
    }
    Ok(omega11.max(0.0).sqrt() * radicand.sqrt() / den.abs())
}

fn ivx_radicand(rho: f64, theta: f64, iv: &IvxInstrument, panel: &Panel) -> f64 {
    let switch = rho >= 1.0;
    (0..panel.n())
        .map(|i| {
            let z = iv.z(i, 0);
            let ss: f64 = z.iter().map(|v| v * v).sum();
            if switch {
                let zbar = mean(z);
                ss - (z.len() as f64).powf(theta) * zbar * zbar
            } else {
                ss
            }
        })
        .sum()
}

/// Components of `n · v̂ar(Σ x̃ e)`, summed over individuals with
/// `T = T_i − 1` regression pairs each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WgVariance {
    pub ols_term: f64,
    pub lambda_term: f64,
    pub bias_term: f64,
    pub sum_x2: f64,
}

impl WgVariance {
    pub fn total(&self) -> f64 {
        self.ols_term + self.lambda_term - self.bias_term
    }
}

pub fn wg_variance(cov: &CovarianceHat, rho: f64, panel: &Panel) -> Result<WgVariance> {
    panel.require_univariate()?;
    let mut v = WgVariance {
        ols_term: 0.0,
        lambda_term: 0.0,
        bias_term: 0.0,
        sum_x2: 0.0,
    };
    for ind in panel.individuals() {
        let te = effective_periods(ind.periods(), 1);
        let (xl, _) = lag_lead(ind.x(0), ind.y(), 1);
        let xt = demean_within(xl);
        v.sum_x2 += xt.iter().map(|a| a * a).sum::<f64>();
        v.lambda_term += 2.0 * cov.omega12 * cov.omega12 * lambda_t(rho, te);
        let b = cov.omega12 / te as f64 * double_geometric(rho, 1.0, te, 2);
        v.bias_term += b * b;
    }
    v.ols_term = cov.omega11 * v.sum_x2;
    Ok(v)
}

/// `√(n · v̂ar) / Σ x̃²` with the residual moments evaluated at `(β, ρ)`.
pub fn se_wg_feasible(beta: f64, rho: f64, panel: &Panel) -> Result<f64> {
    let cov = omega_hats(beta, rho, panel)?;
    se_wg_from(&cov, rho, panel)
}

pub fn se_wg_from(cov: &CovarianceHat, rho: f64, panel: &Panel) -> Result<f64> {
    let v = wg_variance(cov, rho, panel)?;
    let total = v.total();
    if total < 0.0 {
        return Err(Error::NegativeVariance {
            total,
            ols_term: v.ols_term,
            lambda_term: v.lambda_term,
            bias_term: v.bias_term,
        });
    }
    if v.sum_x2 == 0.0 {
        return Err(Error::DegenerateRegressor("regressor constant within every individual"));
    }
    Ok(total.sqrt() / v.sum_x2)
}

/// Quantities shared by every variant on one panel.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    panel: &'a Panel,
    config: IvxConfig,
    iv: IvxInstrument,
    beta_wg: Result<f64>,
    beta_ivx: Result<f64>,
    rho_wg: Result<f64>,
    rho_xd: Result<f64>,
    rho_xj: Result<f64>,
}

fn share(r: &Result<f64>) -> Result<f64> {
    r.clone()
}

impl<'a> Prepared<'a> {
    pub fn new(panel: &'a Panel, config: &IvxConfig) -> Result<Self> {
        config.validate()?;
        panel.require_univariate()?;
        let rho_z = config.rho_z_for(panel)?;
        let iv = ivx_instrument(panel, rho_z, 1)?;
        let beta_ivx = {
            let (num, den) = ivx_beta_sums(panel, &iv);
            if den == 0.0 {
                Err(Error::SingularDesign("instrument uncorrelated with regressor".into()))
            } else {
                Ok(num / den)
            }
        };
        Ok(Self {
            panel,
            config: *config,
            beta_wg: wg_beta(panel).map(|e| e.value),
            beta_ivx,
            rho_wg: wg_rho(panel).map(|e| e.value),
            rho_xd: xd_rho(panel).map(|e| e.value),
            rho_xj: xj_rho(panel).map(|e| e.value),
            iv,
        })
    }

    pub fn instrument(&self) -> &IvxInstrument {
        &self.iv
    }

    pub fn rho(&self, method: RhoMethod) -> Option<Result<f64>> {
        match method {
            RhoMethod::None => None,
            RhoMethod::Wg => Some(share(&self.rho_wg)),
            RhoMethod::Xd => Some(share(&self.rho_xd)),
            RhoMethod::Xj => Some(share(&self.rho_xj)),
        }
    }

    pub fn raw_beta(&self, base: Base) -> Result<f64> {
        match base {
            Base::Wg => share(&self.beta_wg),
            Base::Ivx => share(&self.beta_ivx),
        }
    }

    /// Runs the four steps of the correction for one variant and tests
    /// `β = null_value`.
    pub fn estimate(&self, variant: Variant, null_value: f64) -> Result<Estimate> {
        let base = variant.base();
        let method = variant.rho_method();
        // Step 1
        let beta_raw = self.raw_beta(base)?;
        let rho_hat = self.rho(variant.se_rho_method()).expect("se root is always set")?;
        // Step 2
        let cov = omega_hats(beta_raw, rho_hat, self.panel)?;
        // Step 3
        let bias_factor = match method {
            RhoMethod::None => 0.0,
            _ => match base {
                Base::Wg => bias_wg(rho_hat, self.panel)?,
                Base::Ivx => bias_ivx(rho_hat, self.panel, &self.iv)?,
            },
        };
        let bias_correction = cov.omega12 * bias_factor;
        let beta_hat = beta_raw + bias_correction;
        // Step 4
        let se = match base {
            Base::Wg => se_wg_from(&cov, rho_hat, self.panel)?,
            Base::Ivx => se_ivx(cov.omega11, rho_hat, self.config.theta, &self.iv, self.panel)?,
        };
        let q = self.config.critical_value();
        Ok(Estimate {
            variant,
            base,
            rho_method: method,
            beta_hat,
            beta_raw,
            bias_correction,
            bias_factor,
            rho_hat,
            rho_z: self.iv.rho_z(),
            se,
            t_stat: (beta_hat - null_value) / se,
            null_value,
            ci: (beta_hat - q * se, beta_hat + q * se),
            ci_level: self.config.ci_level,
            cov,
        })
    }
}

/// One variant on one panel, testing `β = 0`.
pub fn estimate(panel: &Panel, config: &IvxConfig, base: Base, rho_method: RhoMethod) -> Result<Estimate> {
    Prepared::new(panel, config)?.estimate(Variant::new(base, rho_method), 0.0)
}

/// Every requested variant; failures are reported per variant.
pub fn estimate_variants(
    panel: &Panel,
    config: &IvxConfig,
    variants: &[Variant],
    null_value: f64,
) -> Result<Vec<Result<Estimate>>> {
    let prep = Prepared::new(panel, config)?;
    Ok(variants.iter().map(|&v| prep.estimate(v, null_value)).collect())
}
