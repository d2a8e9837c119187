//! Machine-readable reports. Every number carries the tag of the formula
//! that produced it.

use serde::Serialize;

use crate::config::IvxConfig;
use crate::error::Error;
use crate::inference::{Base, Estimate, RhoMethod, Variant};
use crate::local_projection::LongHorizonResult;
use crate::panel::Panel;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tagged {
    pub value: f64,
    pub formula: &'static str,
}

fn tag(value: f64, formula: &'static str) -> Tagged {
    Tagged { value, formula }
}

/// `*`, `**`, `***` for `|t|` above 1.64, 1.96 and 2.58.
pub fn significance_stars(t: f64) -> &'static str {
    let a = t.abs();
    if a > 2.58 {
        "***"
    } else if a > 1.96 {
        "**"
    } else if a > 1.64 {
        "*"
    } else {
        ""
    }
}

/// Sample standard deviation of regressor `j` over every observed row.
pub fn regressor_sd(panel: &Panel, j: usize) -> f64 {
    let vals: Vec<f64> = panel.regressor(j).flatten().copied().collect();
    let m = vals.len() as f64;
    let mu = vals.iter().sum::<f64>() / m;
    (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
}

/// Factor `100 · sd(x_j)` applied to coefficients and standard errors.
pub fn standardization_factor(panel: &Panel, j: usize) -> f64 {
    100.0 * regressor_sd(panel, j)
}

#[derive(Debug, Clone, Serialize)]
pub struct PanelInfo {
    pub n: usize,
    pub k: usize,
    pub min_periods: usize,
    pub max_periods: usize,
    pub balanced: bool,
    pub regression_pairs: usize,
    pub rho_z: Tagged,
}

impl PanelInfo {
    pub fn new(panel: &Panel, config: &IvxConfig) -> Self {
        Self {
            n: panel.n(),
            k: panel.k(),
            min_periods: panel.min_periods(),
            max_periods: panel.max_periods(),
            balanced: panel.is_balanced(),
            regression_pairs: panel.observations(1),
            rho_z: tag(config.rho_z_for(panel).unwrap_or(f64::NAN), "rho_z = 1 + c_z / (max_i T_i)^theta"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimator: Variant,
    pub beta_hat: Tagged,
    pub beta_raw: Tagged,
    pub bias_correction: Tagged,
    pub bias_factor: Tagged,
    pub rho_hat: Tagged,
    pub se: Tagged,
    pub t_stat: Tagged,
    pub ci_lower: Tagged,
    pub ci_upper: Tagged,
    pub ci_level: f64,
    pub omega11: Tagged,
    pub omega12: Tagged,
    pub omega22: Tagged,
    pub stars: &'static str,
    /// Factor applied to `beta_*`, `bias_correction`, `se` and the CI.
    pub scale: f64,
}

impl EstimateReport {
    pub fn new(e: &Estimate, scale: f64) -> Self {
        let (raw_tag, b_tag, corr_tag, se_tag) = match e.base {
            Base::Wg => ("beta_WG", "b_WG", "omega12_hat * b_WG(rho_hat)", "sigma_WG"),
            Base::Ivx => ("beta_IVX", "b_IVX", "omega12_hat * b_IVX(rho_hat)", "sigma_IVX"),
        };
        let rho_tag = match e.variant.se_rho_method() {
            RhoMethod::Wg => "rho_WG",
            RhoMethod::Xd => "rho_XD",
            RhoMethod::Xj => "rho_XJ",
            RhoMethod::None => "none",
        };
        let (corr_tag, b_tag) = if e.rho_method == RhoMethod::None {
            ("none", "none")
        } else {
            (corr_tag, b_tag)
        };
        Self {
            estimator: e.variant,
            beta_hat: tag(e.beta_hat * scale, "beta_raw + bias_correction"),
            beta_raw: tag(e.beta_raw * scale, raw_tag),
            bias_correction: tag(e.bias_correction * scale, corr_tag),
            bias_factor: tag(e.bias_factor, b_tag),
            rho_hat: tag(e.rho_hat, rho_tag),
            se: tag(e.se * scale, se_tag),
            t_stat: tag(e.t_stat, "(beta_hat - null) / se"),
            ci_lower: tag(e.ci.0 * scale, "beta_hat - q * se"),
            ci_upper: tag(e.ci.1 * scale, "beta_hat + q * se"),
            ci_level: e.ci_level,
            omega11: tag(e.cov.omega11, "omega11_hat"),
            omega12: tag(e.cov.omega12, "omega12_hat"),
            omega22: tag(e.cov.omega22, "omega22_hat"),
            stars: significance_stars(e.t_stat),
            scale,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub estimator: String,
    pub error: String,
}

impl Failure {
    pub fn new(label: impl Into<String>, e: &Error) -> Self {
        Self {
            estimator: label.into(),
            error: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRun {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub config: IvxConfig,
    pub panel: PanelInfo,
    pub standardized: bool,
    pub estimates: Vec<EstimateReport>,
    pub failures: Vec<Failure>,
}

impl EstimateRun {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "estimator,beta_hat,beta_raw,bias_correction,bias_factor,rho_hat,se,t_stat,ci_lower,ci_upper,omega11,omega12,omega22,stars,scale\n",
        );
        for e in &self.estimates {
            s.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{:?}\n",
                e.estimator,
                e.beta_hat.value,
                e.beta_raw.value,
                e.bias_correction.value,
                e.bias_factor.value,
                e.rho_hat.value,
                e.se.value,
                e.t_stat.value,
                e.ci_lower.value,
                e.ci_upper.value,
                e.omega11.value,
                e.omega12.value,
                e.omega22.value,
                e.stars,
                e.scale
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TaggedVector {
    pub values: Vec<f64>,
    pub formula: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaggedMatrix {
    pub rows: Vec<Vec<f64>>,
    pub formula: &'static str,
}

fn tvec(v: impl IntoIterator<Item = f64>, formula: &'static str) -> TaggedVector {
    TaggedVector {
        values: v.into_iter().collect(),
        formula,
    }
}

fn tmat(m: &nalgebra::DMatrix<f64>, formula: &'static str) -> TaggedMatrix {
    TaggedMatrix {
        rows: (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect(),
        formula,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WaldReport {
    pub statistic: Tagged,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonReport {
    pub horizon: usize,
    pub beta_ivx: TaggedVector,
    pub beta_ivxj: TaggedVector,
    pub bias: TaggedVector,
    pub se: TaggedVector,
    pub t_stat: TaggedVector,
    pub stars: Vec<&'static str>,
    pub theta_hat: TaggedMatrix,
    pub gamma_ee: TaggedVector,
    pub design_condition: f64,
    pub theta_positive_definite: bool,
    pub wald: Option<WaldReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpRun {
    pub schema_version: &'static str,
    pub command: &'static str,
    pub config: IvxConfig,
    pub panel: PanelInfo,
    pub standardized: bool,
    /// Per-regressor factor applied to coefficients, SEs and `Θ̂`.
    pub scale: Vec<f64>,
    pub beta_one_step: TaggedVector,
    pub r_xj: TaggedVector,
    pub omega_hat: TaggedMatrix,
    pub horizons: Vec<HorizonReport>,
}

impl LpRun {
    pub fn new(panel: &Panel, config: &IvxConfig, res: &LongHorizonResult, standardize: bool) -> Self {
        let k = panel.k();
        let scale: Vec<f64> = (0..k)
            .map(|j| if standardize { standardization_factor(panel, j) } else { 1.0 })
            .collect();
        let sc = |v: &nalgebra::DVector<f64>| -> Vec<f64> { v.iter().zip(&scale).map(|(a, s)| a * s).collect() };
        let horizons = res
            .horizons
            .iter()
            .map(|h| {
                let theta = nalgebra::DMatrix::from_fn(k, k, |a, b| h.theta_hat[(a, b)] * scale[a] * scale[b]);
                let t = h.t_stats();
                HorizonReport {
                    horizon: h.horizon,
                    beta_ivx: tvec(sc(&h.beta_ivx), "beta_IVX^(h)"),
                    beta_ivxj: tvec(sc(&h.beta_ivxj), "beta_IVX^(h) + (sum z~ x')^-1 xi^(h)"),
                    bias: tvec(sc(&h.bias), "(sum z~ x')^-1 xi^(h)"),
                    se: tvec(sc(&h.se()), "sqrt(diag Theta_hat^(h))"),
                    t_stat: tvec(t.iter().copied(), "beta_IVXJ^(h) / se"),
                    stars: t.iter().map(|&v| significance_stars(v)).collect(),
                    theta_hat: tmat(&theta, "Theta_hat^(h)"),
                    gamma_ee: tvec(h.gamma_ee.iter().copied(), "Gamma_ee^(h)(l)"),
                    design_condition: h.condition,
                    theta_positive_definite: h.theta_positive_definite,
                    wald: h.wald.as_ref().map(|w| WaldReport {
                        statistic: tag(w.statistic, "Wald^(h)"),
                        df: w.df,
                        p_value: w.p_value,
                    }),
                }
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            command: "lp",
            config: *config,
            panel: PanelInfo::new(panel, config),
            standardized: standardize,
            beta_one_step: tvec(sc(&res.beta_one_step), "beta_IVX^(1)"),
            r_xj: tvec(res.r_xj.iter().copied(), "R_XJ"),
            omega_hat: tmat(&res.omega_hat(), "Omega_hat_IVXJ"),
            horizons,
            scale,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("horizon,regressor,beta_ivx,beta_ivxj,bias,se,t_stat,stars,wald,wald_p\n");
        for h in &self.horizons {
            for j in 0..h.beta_ivxj.values.len() {
                let (w, p) = h
                    .wald
                    .as_ref()
                    .map_or((String::new(), String::new()), |w| (format!("{:?}", w.statistic.value), format!("{:?}", w.p_value)));
                s.push_str(&format!(
                    "{},x{},{:?},{:?},{:?},{:?},{:?},{},{},{}\n",
                    h.horizon,
                    j + 1,
                    h.beta_ivx.values[j],
                    h.beta_ivxj.values[j],
                    h.bias.values[j],
                    h.se.values[j],
                    h.t_stat.values[j],
                    h.stars[j],
                    w,
                    p
                ));
            }
        }
        s
    }
}
