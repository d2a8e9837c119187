//! Univariate point estimators for the slope and the autoregressive root.
//!
//! Helpers ending in `_parts` return the per-individual numerator and
//! denominator so that pooled estimators and tests share one code path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{demean_within, effective_periods, jackknife_periods, mean, Panel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EstimatorTag {
    WgBeta,
    IvxBeta,
    WgRho,
    XdRho,
    XjRho,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimate {
    pub value: f64,
    pub tag: EstimatorTag,
}

/// Self-generated instrument `z_{i,t} = Σ_{s=1}^{t} ρ_z^{t−s} Δx_{i,s}`.
///
/// `z[i][j][t − 1]` holds period `t = 1..=T_i − h` for regressor `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct IvxInstrument {
    rho_z: f64,
    horizon: usize,
    z: Vec<Vec<Vec<f64>>>,
    z_tilde: Vec<Vec<Vec<f64>>>,
}

impl IvxInstrument {
    pub fn rho_z(&self) -> f64 {
        self.rho_z
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Raw instrument of individual `i`, regressor `j`, periods `1..=T_i−h`.
    pub fn z(&self, i: usize, j: usize) -> &[f64] {
        &self.z[i][j]
    }

    /// Within-demeaned instrument over the same periods.
    pub fn z_tilde(&self, i: usize, j: usize) -> &[f64] {
        &self.z_tilde[i][j]
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }
}

/// Filters `x_0..x_T` into `z_1..z_T`.
pub fn ivx_filter(x: &[f64], rho_z: f64) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len().saturating_sub(1));
    let mut prev = 0.0;
    for t in 1..x.len() {
        prev = rho_z * prev + (x[t] - x[t - 1]);
        z.push(prev);
    }
    z
}

pub fn ivx_instrument(panel: &Panel, rho_z: f64, horizon: usize) -> Result<IvxInstrument> {
    if !(rho_z > 0.0 && rho_z < 1.0) {
        return Err(Error::InvalidConfig(format!("rho_z must lie in (0,1), got {rho_z}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let mut z = Vec::with_capacity(panel.n());
    let mut z_tilde = Vec::with_capacity(panel.n());
    for ind in panel.individuals() {
        let len = effective_periods(ind.periods(), horizon);
        let zi: Vec<Vec<f64>> = ind
            .regressors()
            .iter()
            .map(|x| {
                let mut f = ivx_filter(x, rho_z);
                f.truncate(len);
                f
            })
            .collect();
        z_tilde.push(zi.iter().map(|s| demean_within(s)).collect());
        z.push(zi);
    }
    Ok(IvxInstrument {
        rho_z,
        horizon,
        z,
        z_tilde,
    })
}

/// Regression sample of one individual at horizon `h`: the lagged regressor
/// `x_t` and the lead target `y_{t+h}` for `t = 1..=T_i − h`.
pub(crate) fn lag_lead<'a>(x: &'a [f64], y: &'a [f64], h: usize) -> (&'a [f64], &'a [f64]) {
    let len = effective_periods(x.len() - 1, h);
    (&x[1..1 + len], &y[1 + h..1 + h + len])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn ratio(num: f64, den: f64, tag: EstimatorTag) -> Result<ScalarEstimate> {
    if den == 0.0 || !den.is_finite() {
        return Err(match tag {
            EstimatorTag::IvxBeta => Error::SingularDesign("instrument uncorrelated with regressor".into()),
            EstimatorTag::WgBeta | EstimatorTag::WgRho => Error::DegenerateRegressor("regressor constant within every individual"),
            EstimatorTag::XdRho => Error::DegenerateRegressor("all X-differences vanish"),
            EstimatorTag::XjRho => Error::DegenerateRegressor("odd/even demeaned regressor vanishes"),
        });
    }
    let value = num / den;
    if !value.is_finite() {
        return Err(Error::DegenerateRegressor("non-finite estimate"));
    }
    Ok(ScalarEstimate { value, tag })
}

/// `(Σ x̃_t y_{t+1}, Σ x̃_t²)` for one series.
pub fn wg_beta_parts(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (xl, yl) = lag_lead(x, y, 1);
    let xt = demean_within(xl);
    (dot(&xt, yl), dot(&xt, &xt))
}

/// `(Σ x̃_t x_{t+1}, Σ x̃_t²)` for one series.
pub fn wg_rho_parts(x: &[f64]) -> (f64, f64) {
    let (xl, xn) = lag_lead(x, x, 1);
    let xt = demean_within(xl);
    (dot(&xt, xn), dot(&xt, &xt))
}

pub fn wg_beta(panel: &Panel) -> Result<ScalarEstimate> {
    panel.require_univariate()?;
    let (num, den) = pool(panel, |i| {
        let ind = &panel.individuals()[i];
        wg_beta_parts(ind.x(0), ind.y())
    });
    ratio(num, den, EstimatorTag::WgBeta)
}

pub fn wg_rho(panel: &Panel) -> Result<ScalarEstimate> {
    panel.require_univariate()?;
    wg_rho_column(panel, 0)
}

pub(crate) fn wg_rho_column(panel: &Panel, j: usize) -> Result<ScalarEstimate> {
    let (num, den) = pool(panel, |i| wg_rho_parts(panel.individuals()[i].x(j)));
    ratio(num, den, EstimatorTag::WgRho)
}

/// `(Σ z̃_t y_{t+1}, Σ z̃_t x_t)` pooled over individuals.
pub(crate) fn ivx_beta_sums(panel: &Panel, iv: &IvxInstrument) -> (f64, f64) {
    pool(panel, |i| {
        let ind = &panel.individuals()[i];
        let (xl, yl) = lag_lead(ind.x(0), ind.y(), iv.horizon);
        let zt = iv.z_tilde(i, 0);
        (dot(zt, yl), dot(zt, xl))
    })
}

pub fn ivx_beta(panel: &Panel, iv: &IvxInstrument) -> Result<ScalarEstimate> {
    panel.require_univariate()?;
    check_instrument(panel, iv)?;
    let (num, den) = ivx_beta_sums(panel, iv);
    ratio(num, den, EstimatorTag::IvxBeta)
}

pub(crate) fn check_instrument(panel: &Panel, iv: &IvxInstrument) -> Result<()> {
    if iv.n() != panel.n() || iv.z.first().map_or(0, Vec::len) != panel.k() {
        return Err(Error::InvalidConfig("instrument was built from a different panel".into()));
    }
    Ok(())
}

/// X-differencing sums over `t = 4..=T`, `s = 1..=t−3` for `x_0..x_T`.
///
/// Expanding both products leaves prefix sums of `x_s`, `x_{s+1}`,
/// `x_s x_{s+1}` and `x_{s+1}²`; the series is centred first, which leaves
/// every difference unchanged.
pub fn xd_rho_parts(x: &[f64]) -> (f64, f64) {
    let big_t = x.len() - 1;
    let c = mean(&x[1..]);
    let x: Vec<f64> = x.iter().map(|v| v - c).collect();
    let (mut s0, mut s1, mut p, mut q) = (0.0, 0.0, 0.0, 0.0);
    let (mut num, mut den) = (0.0, 0.0);
    for t in 4..=big_t {
        let s = t - 3;
        s0 += x[s];
        s1 += x[s + 1];
        p += x[s] * x[s + 1];
        q += x[s + 1] * x[s + 1];
        let cnt = s as f64;
        let (a, b) = (x[t - 1], x[t]);
        num += cnt * a * b - a * s0 - b * s1 + p;
        den += cnt * a * a - 2.0 * a * s1 + q;
    }
    (num, den)
}

pub fn xd_rho(panel: &Panel) -> Result<ScalarEstimate> {
    panel.require_univariate()?;
    xd_rho_column(panel, 0)
}

pub(crate) fn xd_rho_column(panel: &Panel, j: usize) -> Result<ScalarEstimate> {
    let (num, den) = pool(panel, |i| xd_rho_parts(panel.individuals()[i].x(j)));
    ratio(num, den, EstimatorTag::XdRho)
}

/// Jackknife sums for `x_0..x_T`; an odd `T` drops its last period.
pub fn xj_rho_parts(x: &[f64]) -> (f64, f64) {
    let big_t = jackknife_periods(x.len() - 1);
    let w = 2.0 / (big_t - 2) as f64;
    let half = (big_t - 2) / 2;
    let odd = (3..big_t).step_by(2);
    let even = (2..big_t - 1).step_by(2);
    let sum_odd: f64 = odd.clone().map(|t| x[t]).sum();
    let sum_even: f64 = even.clone().map(|t| x[t]).sum();
    let (mo, me) = (w * sum_odd, w * sum_even);

    let mut num = 0.0;
    let mut den = 0.0;
    for t in odd.clone() {
        let d = x[t] - mo;
        num += d * x[t + 1];
        den += d * d;
    }
    for t in even {
        let d = x[t] - me;
        num += d * x[t + 1];
        den += d * d;
    }
    let compressed: f64 = (1..=half).map(|t| x[t] * x[t + 1]).sum();
    let lagged_odd: f64 = odd.map(|t| x[t - 2]).sum();
    let eta = w * (x[1] * sum_even + x[2] * lagged_odd);
    num += 2.0 * w * compressed - eta;
    (num, den)
}

pub fn xj_rho(panel: &Panel) -> Result<ScalarEstimate> {
    panel.require_univariate()?;
    xj_rho_column(panel, 0)
}

pub(crate) fn xj_rho_column(panel: &Panel, j: usize) -> Result<ScalarEstimate> {
    let (num, den) = pool(panel, |i| xj_rho_parts(panel.individuals()[i].x(j)));
    ratio(num, den, EstimatorTag::XjRho)
}

fn pool(panel: &Panel, f: impl Fn(usize) -> (f64, f64)) -> (f64, f64) {
    (0..panel.n()).map(f).fold((0.0, 0.0), |(a, b), (u, v)| (a + u, b + v))
}
