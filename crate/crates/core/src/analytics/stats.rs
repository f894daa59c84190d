use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::statistics::{Data, OrderStatistics, RankTieBreaker, Statistics};

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub p_value: f64,
    pub df: usize,
}

/// Kruskal-Wallis H test with mid-ranks and tie correction; p from the
/// chi-square upper tail with `k - 1` degrees of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis, AnalyticsError> {
    if groups.len() < 2 {
        return Err(AnalyticsError::Arity(format!("need at least 2 groups, got {}", groups.len())));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(AnalyticsError::Arity(format!("group {i} is empty")));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    if all.iter().any(|x| !x.is_finite()) {
        return Err(AnalyticsError::Domain("samples must be finite".into()));
    }
    let n = all.len();
    if n < 3 {
        return Err(AnalyticsError::Arity(format!("need at least 3 samples, got {n}")));
    }
    let df = groups.len() - 1;
    let ranks = Data::new(all.clone()).ranks(RankTieBreaker::Average);

    let nf = n as f64;
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h_raw = 12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0);

    let mut sorted = all;
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    let correction = 1.0 - ties / (nf * nf * nf - nf);
    if correction <= 0.0 {
        // every sample identical
        return Ok(KruskalWallis { h: 0.0, p_value: 1.0, df });
    }
    let h = (h_raw / correction).max(0.0);
    let chi = ChiSquared::new(df as f64).map_err(|e| AnalyticsError::Domain(e.to_string()))?;
    Ok(KruskalWallis {
        h,
        p_value: chi.sf(h).clamp(0.0, 1.0),
        df,
    })
}

/// Silverman's rule: `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`. When the IQR
/// is zero but the spread is not, the standard deviation alone is used.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64, AnalyticsError> {
    if samples.len() < 2 {
        return Err(AnalyticsError::Arity(format!("need at least 2 samples, got {}", samples.len())));
    }
    let sd = samples.iter().copied().std_dev();
    let iqr = Data::new(samples.to_vec()).interquartile_range() / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        _ => return Err(AnalyticsError::DegenerateBandwidth),
    };
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Gaussian kernel density evaluated on `grid`. `bandwidth` overrides
/// Silverman's rule.
pub fn kde(samples: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Vec<f64>, AnalyticsError> {
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(AnalyticsError::Domain(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(samples)?,
    };
    if samples.is_empty() {
        return Err(AnalyticsError::Arity("no samples".into()));
    }
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&xi| {
                    let z = (x - xi) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect())
}

/// `n` evenly spaced points covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().copied().mean();
    let std = if values.len() < 2 {
        0.0
    } else {
        values.iter().copied().std_dev()
    };
    (mean, std)
}

/// Quantile in `[0, 1]`; 0 for no data.
pub fn quantile(values: &[f64], tau: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    Data::new(values.to_vec()).quantile(tau)
}
