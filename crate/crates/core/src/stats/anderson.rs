//! Rank-based k-sample Anderson-Darling statistic.
//!
//! Both tie treatments follow Scholz & Stephens (1987): `Midrank` is the
//! statistic for continuous parents with midranks for tied values,
//! `Discrete` the right-continuous version for genuinely discrete data.
//! The statistic is normalized by its finite-sample null standard deviation
//! before it is mapped to a p-value.

use serde::{Deserialize, Serialize};

use super::asymptotic::asymptotic_pvalue;
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    #[default]
    Midrank,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdMethod {
    Asymptotic,
    Permutation,
}

/// Where a p-value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueSource {
    /// Quadratic interpolation of the tabulated critical values.
    Interpolated,
    /// Exact limiting null distribution, used above the table's largest
    /// significance level.
    LimitDistribution,
    /// Beyond the table's smallest significance level; the true value is
    /// smaller than the one reported.
    Floored,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Different,
    Similar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdTestResult {
    /// Standardized statistic `(A2 - (k - 1)) / sigma_N`.
    pub statistic: f64,
    /// Unstandardized `A2` statistic.
    pub raw_statistic: f64,
    pub p_value: f64,
    pub p_value_source: PValueSource,
    pub method: AdMethod,
    pub tie_mode: TieMode,
    pub k: usize,
    pub n_total: usize,
    pub alpha: f64,
    pub verdict: Verdict,
}

/// Pooled, sorted view of the samples: distinct values become groups and
/// every sorted position remembers the sample it came from.
#[derive(Debug, Clone)]
pub(crate) struct Pooled {
    pub group_sizes: Vec<usize>,
    pub group_of: Vec<usize>,
    pub labels: Vec<usize>,
    pub sample_sizes: Vec<usize>,
}

impl Pooled {
    pub fn new<S: AsRef<[f64]>>(samples: &[S]) -> Result<Self, StatsError> {
        if samples.len() < 2 || samples.iter().any(|s| s.as_ref().len() < 2) {
            return Err(StatsError::TooFewSamples);
        }
        let mut all: Vec<(f64, usize)> = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            for &v in s.as_ref() {
                if !v.is_finite() {
                    return Err(StatsError::NonFinite);
                }
                all.push((v, i));
            }
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut group_sizes = Vec::new();
        let mut group_of = Vec::with_capacity(all.len());
        let mut prev: Option<f64> = None;
        for &(v, _) in &all {
            if prev != Some(v) {
                group_sizes.push(0);
                prev = Some(v);
            }
            *group_sizes.last_mut().expect("pushed above") += 1;
            group_of.push(group_sizes.len() - 1);
        }
        if group_sizes.len() < 2 {
            return Err(StatsError::DegenerateSamples);
        }
        Ok(Pooled {
            group_sizes,
            group_of,
            labels: all.iter().map(|&(_, i)| i).collect(),
            sample_sizes: samples.iter().map(|s| s.as_ref().len()).collect(),
        })
    }

    pub fn n_total(&self) -> usize {
        self.labels.len()
    }

    /// `A2` for the given assignment of sorted positions to samples.
    /// `counts` is scratch space of length `k * groups`.
    pub fn statistic(&self, labels: &[usize], tie_mode: TieMode, counts: &mut Vec<usize>) -> f64 {
        let k = self.sample_sizes.len();
        let groups = self.group_sizes.len();
        counts.clear();
        counts.resize(k * groups, 0);
        for (&label, &g) in labels.iter().zip(&self.group_of) {
            counts[g * k + label] += 1;
        }

        let n = self.n_total() as f64;
        let mut below_pooled = 0.0;
        let mut below = vec![0.0f64; k];
        let mut total = vec![0.0f64; k];

        match tie_mode {
            TieMode::Midrank => {
                for (g, &l) in self.group_sizes.iter().enumerate() {
                    let l = l as f64;
                    let b = below_pooled + l / 2.0;
                    let denom = b * (n - b) - n * l / 4.0;
                    for i in 0..k {
                        let f = counts[g * k + i] as f64;
                        let m = below[i] + f / 2.0;
                        let d = n * m - b * self.sample_sizes[i] as f64;
                        total[i] += l / n * d * d / denom;
                        below[i] += f;
                    }
                    below_pooled += l;
                }
                let a: f64 = total
                    .iter()
                    .zip(&self.sample_sizes)
                    .map(|(t, &ni)| t / ni as f64)
                    .sum();
                a * (n - 1.0) / n
            }
            TieMode::Discrete => {
                for (g, &l) in self.group_sizes[..groups - 1].iter().enumerate() {
                    let l = l as f64;
                    below_pooled += l;
                    let b = below_pooled;
                    for i in 0..k {
                        below[i] += counts[g * k + i] as f64;
                        let d = n * below[i] - b * self.sample_sizes[i] as f64;
                        total[i] += l / n * d * d / (b * (n - b));
                    }
                }
                total
                    .iter()
                    .zip(&self.sample_sizes)
                    .map(|(t, &ni)| t / ni as f64)
                    .sum()
            }
        }
    }

    /// Finite-sample null variance of `A2`.
    pub fn null_variance(&self) -> f64 {
        let k = self.sample_sizes.len() as f64;
        let n_total = self.n_total();
        let n = n_total as f64;
        let big_h: f64 = self.sample_sizes.iter().map(|&s| 1.0 / s as f64).sum();
        let h: f64 = (1..n_total).map(|i| 1.0 / i as f64).sum();
        // g = sum_{i=1}^{N-2} sum_{j=i+1}^{N-1} 1 / ((N - i) j)
        let mut g = 0.0;
        let mut tail = 0.0;
        for i in (1..n_total - 1).rev() {
            tail += 1.0 / (i + 1) as f64;
            g += tail / (n - i as f64);
        }
        let a = (4.0 * g - 6.0) * (k - 1.0) + (10.0 - 6.0 * g) * big_h;
        let b = (2.0 * g - 4.0) * k * k + 8.0 * h * k + (2.0 * g - 14.0 * h - 4.0) * big_h - 8.0 * h
            + 4.0 * g
            - 6.0;
        let c = (6.0 * h + 2.0 * g - 2.0) * k * k + (4.0 * h - 4.0 * g + 6.0) * k + (2.0 * h - 6.0) * big_h
            + 4.0 * h;
        let d = (2.0 * h + 6.0) * k * k - 4.0 * h * k;
        (a * n.powi(3) + b * n * n + c * n + d) / ((n - 1.0) * (n - 2.0) * (n - 3.0))
    }

    pub fn standardize(&self, raw: f64) -> f64 {
        let m = (self.sample_sizes.len() - 1) as f64;
        (raw - m) / self.null_variance().sqrt()
    }
}

/// Unstandardized k-sample `A2` statistic.
pub fn ad_statistic<S: AsRef<[f64]>>(samples: &[S], tie_mode: TieMode) -> Result<f64, StatsError> {
    let pooled = Pooled::new(samples)?;
    Ok(pooled.statistic(&pooled.labels, tie_mode, &mut Vec::new()))
}

pub(crate) fn check_alpha(alpha: f64) -> Result<(), StatsError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidAlpha(alpha))
    }
}

/// k-sample Anderson-Darling test with the asymptotic p-value.
/// `Different` is declared only when `p < alpha`.
pub fn ad_ksample<S: AsRef<[f64]>>(samples: &[S], alpha: f64, tie_mode: TieMode) -> Result<AdTestResult, StatsError> {
    check_alpha(alpha)?;
    let pooled = Pooled::new(samples)?;
    let raw = pooled.statistic(&pooled.labels, tie_mode, &mut Vec::new());
    let statistic = pooled.standardize(raw);
    let k = samples.len();
    let (p_value, p_value_source) = asymptotic_pvalue(statistic, k - 1);
    Ok(AdTestResult {
        statistic,
        raw_statistic: raw,
        p_value,
        p_value_source,
        method: AdMethod::Asymptotic,
        tie_mode,
        k,
        n_total: pooled.n_total(),
        alpha,
        verdict: if p_value < alpha {
            Verdict::Different
        } else {
            Verdict::Similar
        },
    })
}
