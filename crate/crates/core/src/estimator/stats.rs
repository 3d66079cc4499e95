//! Monte Carlo summaries and the two-sample and goodness-of-fit tests used
//! by the validation suite.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Result, SpinalError};

/// Quantile of the standard normal used for the 95% interval.
pub const Z95: f64 = 1.96;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_replicas: usize,
    pub ci95: (f64, f64),
    /// Largest single sample; a heavy-tail diagnostic for weighted estimators.
    pub max_sample: f64,
}

impl MCEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(SpinalError::InvalidArgument("estimate needs at least one sample".into()));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let std_error = (var / n).sqrt();
        Ok(MCEstimate {
            mean,
            std_error,
            n_replicas: xs.len(),
            ci95: (mean - Z95 * std_error, mean + Z95 * std_error),
            max_sample: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn scaled(&self, k: f64) -> Self {
        let (a, b) = (self.ci95.0 * k, self.ci95.1 * k);
        MCEstimate {
            mean: self.mean * k,
            std_error: self.std_error * k.abs(),
            n_replicas: self.n_replicas,
            ci95: (a.min(b), a.max(b)),
            max_sample: self.max_sample * k,
        }
    }

    /// `|mean - target| ≤ k · SE`.
    pub fn within_se(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }

    pub fn ci_overlaps(&self, other: &MCEstimate) -> bool {
        self.ci95.0 <= other.ci95.1 && other.ci95.0 <= self.ci95.1
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{k-1} exp(-2 k² λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    (d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))
}

/// One-sample KS statistic and asymptotic p-value against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> (f64, f64) {
    let mut x = xs.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sq = n.sqrt();
    (d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d))
}

fn chi2_sf(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return if stat > 0.0 { 0.0 } else { 1.0 };
    }
    ChiSquared::new(dof as f64).map(|c| c.sf(stat)).unwrap_or(f64::NAN)
}

/// Pearson goodness-of-fit of `counts` against cell probabilities `probs`.
/// Cells with zero probability must be empty, otherwise the p-value is 0.
pub fn chi2_goodness_of_fit(counts: &[u64], probs: &[f64]) -> (f64, f64) {
    assert_eq!(counts.len(), probs.len());
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            if c > 0 {
                return (f64::INFINITY, 0.0);
            }
            continue;
        }
        let e = p * total as f64;
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    (stat, chi2_sf(stat, cells.saturating_sub(1)))
}

/// Pearson test of homogeneity between two categorical samples.
pub fn chi2_homogeneity(a: &[u64], b: &[u64]) -> (f64, f64) {
    let len = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).copied().unwrap_or(0) as f64;
    let (na, nb): (f64, f64) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for i in 0..len {
        let col = get(a, i) + get(b, i);
        if col == 0.0 {
            continue;
        }
        cells += 1;
        for (obs, row) in [(get(a, i), na), (get(b, i), nb)] {
            let e = row * col / n;
            stat += (obs - e).powi(2) / e;
        }
    }
    (stat, chi2_sf(stat, cells.saturating_sub(1)))
}

/// Histogram of non-negative integer samples.
pub fn counts_of(values: &[usize]) -> Vec<u64> {
    let max = values.iter().copied().max().unwrap_or(0);
    let mut c = vec![0u64; max + 1];
    for &v in values {
        c[v] += 1;
    }
    c
}

/// Merges the upper tail of two histograms so that every cell has an
/// expected pooled count of at least `min_count`.
pub fn pool_tail(a: &[u64], b: &[u64], min_count: u64) -> (Vec<u64>, Vec<u64>) {
    let len = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).copied().unwrap_or(0);
    let mut ra = Vec::new();
    let mut rb = Vec::new();
    let (mut ca, mut cb) = (0, 0);
    for i in 0..len {
        ca += get(a, i);
        cb += get(b, i);
        if ca + cb >= min_count {
            ra.push(ca);
            rb.push(cb);
            ca = 0;
            cb = 0;
        }
    }
    if ca + cb > 0 {
        if let (Some(la), Some(lb)) = (ra.last_mut(), rb.last_mut()) {
            *la += ca;
            *lb += cb;
        } else {
            ra.push(ca);
            rb.push(cb);
        }
    }
    (ra, rb)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Continuous,
    /// Non-negative integer valued samples.
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub chi2: Option<(f64, f64)>,
    pub ci_overlap: bool,
    pub alpha: f64,
    pub pass: bool,
}

impl TestReport {
    /// Smallest p-value among the tests that ran.
    pub fn p_value(&self) -> f64 {
        match self.chi2 {
            Some((_, p)) => p,
            None => self.ks_p_value,
        }
    }
}

/// Default significance of [`two_sample_check`].
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Compares two samples: KS on the raw values, a χ² homogeneity test for
/// categorical data, and overlap of the 95% intervals of the means.
/// The verdict uses the χ² test for categorical data and KS otherwise.
pub fn two_sample_check(a: &[f64], b: &[f64], kind: SampleKind, alpha: f64) -> Result<TestReport> {
    if a.is_empty() || b.is_empty() {
        return Err(SpinalError::InvalidArgument("two-sample check needs nonempty samples".into()));
    }
    let (d, p) = ks_two_sample(a, b);
    let chi2 = match kind {
        SampleKind::Continuous => None,
        SampleKind::Categorical => {
            let to_int = |v: &[f64]| -> Vec<usize> { v.iter().map(|&x| x.round().max(0.0) as usize).collect() };
            let (ca, cb) = pool_tail(&counts_of(&to_int(a)), &counts_of(&to_int(b)), 10);
            Some(chi2_homogeneity(&ca, &cb))
        }
    };
    let ea = MCEstimate::from_samples(a)?;
    let eb = MCEstimate::from_samples(b)?;
    let p_used = chi2.map_or(p, |c| c.1);
    Ok(TestReport { ks_statistic: d, ks_p_value: p, chi2, ci_overlap: ea.ci_overlaps(&eb), alpha, pass: p_used > alpha })
}
