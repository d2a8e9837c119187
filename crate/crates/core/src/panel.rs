//! Panel data container and the within-group index machinery shared by every
//! estimator.
//!
//! Each individual's first observation is the pre-sample period `t = 0`. It
//! supplies `x_{i,0}` for the first difference `Δx_{i,1}` of the instrument
//! and is otherwise unused. An individual with `T_i + 1` rows therefore has
//! `T_i` estimation periods `t = 1..=T_i`, and vector index `t` addresses
//! period `t` directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of estimation periods per individual.
pub const MIN_PERIODS: usize = 6;

/// One cross-sectional unit: contiguous time stamps with `k` regressors and
/// one target series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    id: String,
    times: Vec<i64>,
    /// `x[j][t]`, regressor-major.
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Individual {
    pub fn new(id: impl Into<String>, times: Vec<i64>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidIndividual {
            id: id.clone(),
            reason,
        };
        if x.is_empty() {
            return Err(invalid("no regressors".into()));
        }
        let len = y.len();
        if times.len() != len {
            return Err(invalid(format!("{} time stamps for {} observations", times.len(), len)));
        }
        for (j, col) in x.iter().enumerate() {
            if col.len() != len {
                return Err(invalid(format!(
                    "regressor {} has {} observations, y has {}",
                    j + 1,
                    col.len(),
                    len
                )));
            }
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(invalid(format!("time stamps not strictly increasing at {}", w[1])));
            }
            if w[1] != w[0] + 1 {
                return Err(Error::InteriorGap {
                    id,
                    before: w[0],
                    after: w[1],
                });
            }
        }
        if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite value".into()));
        }
        Ok(Self { id, times, x, y })
    }

    /// Univariate convenience constructor with times `0..len`.
    pub fn univariate(id: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let times = (0..y.len() as i64).collect();
        Self::new(id, times, vec![x], y)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }

    /// Number of estimation periods `T_i` (rows minus the pre-sample row).
    pub fn periods(&self) -> usize {
        self.y.len().saturating_sub(1)
    }

    /// Regressor `j` over `t = 0..=T_i`.
    pub fn x(&self, j: usize) -> &[f64] {
        &self.x[j]
    }

    pub fn regressors(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// Target over `t = 0..=T_i`.
    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// A (possibly unbalanced) panel of individuals sharing the regressor count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    individuals: Vec<Individual>,
    k: usize,
}

impl Panel {
    pub fn new(individuals: Vec<Individual>) -> Result<Self> {
        let first = individuals.first().ok_or(Error::EmptyPanel)?;
        let k = first.k();
        for ind in &individuals {
            if ind.k() != k {
                return Err(Error::RegressorCount {
                    id: ind.id.clone(),
                    expected: k,
                    found: ind.k(),
                });
            }
        }
        let short: Vec<String> = individuals
            .iter()
            .filter(|ind| ind.periods() < MIN_PERIODS)
            .map(|ind| ind.id.clone())
            .collect();
        if !short.is_empty() {
            return Err(Error::SeriesTooShort {
                ids: short,
                min: MIN_PERIODS,
            });
        }
        Ok(Self { individuals, k })
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn n(&self) -> usize {
        self.individuals.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `max_i T_i`, the sample length used for the instrument persistence.
    pub fn max_periods(&self) -> usize {
        self.individuals.iter().map(Individual::periods).max().unwrap_or(0)
    }

    pub fn min_periods(&self) -> usize {
        self.individuals.iter().map(Individual::periods).min().unwrap_or(0)
    }

    pub fn is_balanced(&self) -> bool {
        self.min_periods() == self.max_periods()
    }

    /// Total number of `(x_t, y_{t+h})` pairs used at horizon `h`.
    pub fn observations(&self, horizon: usize) -> usize {
        self.individuals
            .iter()
            .map(|ind| ind.periods().saturating_sub(horizon))
            .sum()
    }

    /// Regressor `j` of every individual, over `t = 0..=T_i`.
    pub fn regressor(&self, j: usize) -> impl Iterator<Item = &[f64]> + '_ {
        self.individuals.iter().map(move |ind| ind.x(j))
    }

    pub(crate) fn require_univariate(&self) -> Result<()> {
        if self.k == 1 {
            Ok(())
        } else {
            Err(Error::NotUnivariate(self.k))
        }
    }

    /// Panel restricted to a single regressor.
    pub fn select_regressor(&self, j: usize) -> Panel {
        let individuals = self
            .individuals
            .iter()
            .map(|ind| Individual {
                id: ind.id.clone(),
                times: ind.times.clone(),
                x: vec![ind.x[j].clone()],
                y: ind.y.clone(),
            })
            .collect();
        Panel { individuals, k: 1 }
    }
}

/// Number of regression pairs `T_i − h` an individual with `T_i` periods
/// contributes at horizon `h`. Every estimator counts through this helper.
pub fn effective_periods(periods: usize, horizon: usize) -> usize {
    periods.saturating_sub(horizon)
}

/// Within-group demeaning: `s − mean(s)`.
pub fn demean_within(series: &[f64]) -> Vec<f64> {
    if series.is_empty() {
        return Vec::new();
    }
    let m = mean(series);
    series.iter().map(|v| v - m).collect()
}

pub(crate) fn mean(series: &[f64]) -> f64 {
    series.iter().sum::<f64>() / series.len() as f64
}

/// Odd and even period sets of the jackknife split,
/// `O = {3, 5, …, T−1}` and `E = {2, 4, …, T−2}`.
///
/// An odd `T` is truncated to `T − 1` first.
pub fn odd_even_sets(periods: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if periods < MIN_PERIODS {
        return Err(Error::SeriesTooShort {
            ids: Vec::new(),
            min: MIN_PERIODS,
        });
    }
    let t = jackknife_periods(periods);
    let odd = (3..t).step_by(2).collect();
    let even = (2..t - 1).step_by(2).collect();
    Ok((odd, even))
}

/// Even sample length used by the jackknife split.
pub fn jackknife_periods(periods: usize) -> usize {
    periods - periods % 2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(id: &str, len: usize) -> Individual {
        let x: Vec<f64> = (0..len).map(|t| t as f64).collect();
        Individual::univariate(id, x.clone(), x).unwrap()
    }

    #[test]
    fn demean_examples() {
        assert_eq!(demean_within(&[1.0, 2.0, 3.0]), vec![-1.0, 0.0, 1.0]);
        assert_eq!(demean_within(&[4.5; 5]), vec![0.0; 5]);
        assert_eq!(demean_within(&[2.0, 4.0, 4.0, 6.0]), vec![-2.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn odd_even_examples() {
        assert_eq!(odd_even_sets(6).unwrap(), (vec![3, 5], vec![2, 4]));
        assert_eq!(odd_even_sets(8).unwrap(), (vec![3, 5, 7], vec![2, 4, 6]));
        assert_eq!(odd_even_sets(7).unwrap(), odd_even_sets(6).unwrap());
        assert!(matches!(odd_even_sets(5), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn odd_even_disjoint_inside_range() {
        for t in 6..60 {
            let (o, e) = odd_even_sets(t).unwrap();
            assert_eq!(o.len(), e.len());
            assert_eq!(o.len(), (jackknife_periods(t) - 2) / 2);
            assert!(o.iter().all(|v| !e.contains(v)));
            assert!(o.iter().chain(&e).all(|&v| v >= 2 && v < t));
        }
    }

    #[test]
    fn gap_is_rejected() {
        let err = Individual::new("a", vec![0, 1, 3], vec![vec![0.0; 3]], vec![0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::InteriorGap { before: 1, after: 3, .. }));
    }

    #[test]
    fn short_individuals_listed() {
        let err = Panel::new(vec![ind("ok", 7), ind("short", 6), ind("tiny", 3)]).unwrap_err();
        match err {
            Error::SeriesTooShort { ids, .. } => assert_eq!(ids, vec!["short", "tiny"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn regressor_count_must_agree() {
        let a = ind("a", 8);
        let b = Individual::new("b", (0..8).collect(), vec![vec![0.0; 8]; 2], vec![0.0; 8]).unwrap();
        assert!(matches!(Panel::new(vec![a, b]), Err(Error::RegressorCount { .. })));
    }

    #[test]
    fn periods_and_balance() {
        let p = Panel::new(vec![ind("a", 8), ind("b", 11)]).unwrap();
        assert_eq!(p.max_periods(), 10);
        assert_eq!(p.min_periods(), 7);
        assert!(!p.is_balanced());
        assert_eq!(p.observations(1), 6 + 9);
    }
}
