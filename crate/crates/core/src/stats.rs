//! Correlation and goodness-of-fit statistics against human ratings.
//!
//! Ties are handled with fractional (averaged) ranks for Spearman and the
//! tau-b correction for Kendall.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{CorrelationRow, CorrelationTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("series lengths differ: {0} labels, {1} x values, {2} y values")]
    LengthMismatch(usize, usize, usize),
    #[error("need at least 2 paired values, got {0}")]
    TooShort(usize),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("{0} series is constant")]
    DegenerateSeries(&'static str),
    #[error("series are not aligned on the same labels: {0}")]
    Alignment(String),
    #[error("metric `{metric}`: {source}")]
    Metric {
        metric: String,
        #[source]
        source: Box<StatsError>,
    },
}

impl StatsError {
    pub fn code(&self) -> &'static str {
        match self {
            StatsError::DegenerateSeries(_) => "DEGENERATE_SERIES",
            StatsError::Alignment(_) => "ALIGNMENT_ERROR",
            StatsError::Metric { source, .. } => source.code(),
            StatsError::LengthMismatch(..) | StatsError::TooShort(_) | StatsError::NonFinite(_) => {
                "INVALID_SERIES"
            }
        }
    }
}

/// Two equally long finite series, labelled by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    pub labels: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PairedSeries {
    pub fn new(labels: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self, StatsError> {
        if labels.len() != x.len() || x.len() != y.len() {
            return Err(StatsError::LengthMismatch(labels.len(), x.len(), y.len()));
        }
        if x.len() < 2 {
            return Err(StatsError::TooShort(x.len()));
        }
        if let Some(i) = x.iter().zip(&y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(StatsError::NonFinite(i));
        }
        Ok(PairedSeries { labels, x, y })
    }

    /// Unlabelled series; labels are positions.
    pub fn unlabeled(x: Vec<f64>, y: Vec<f64>) -> Result<Self, StatsError> {
        let labels = (0..x.len()).map(|i| i.to_string()).collect();
        Self::new(labels, x, y)
    }

    /// Joins two label-keyed maps; both must carry exactly the same labels.
    pub fn align(x: &BTreeMap<String, f64>, y: &BTreeMap<String, f64>) -> Result<Self, StatsError> {
        let missing_y: Vec<&str> = x.keys().filter(|k| !y.contains_key(*k)).map(String::as_str).collect();
        let missing_x: Vec<&str> = y.keys().filter(|k| !x.contains_key(*k)).map(String::as_str).collect();
        if !missing_x.is_empty() || !missing_y.is_empty() {
            return Err(StatsError::Alignment(format!(
                "only in first: [{}]; only in second: [{}]",
                missing_y.join(", "),
                missing_x.join(", ")
            )));
        }
        Self::new(
            x.keys().cloned().collect(),
            x.values().copied().collect(),
            y.values().copied().collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

fn check_not_constant(s: &PairedSeries) -> Result<(), StatsError> {
    if is_constant(&s.x) {
        return Err(StatsError::DegenerateSeries("x"));
    }
    if is_constant(&s.y) {
        return Err(StatsError::DegenerateSeries("y"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson_raw(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Mean-centered product-moment correlation.
pub fn pearson(s: &PairedSeries) -> Result<f64, StatsError> {
    check_not_constant(s)?;
    Ok(pearson_raw(&s.x, &s.y))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation of fractional ranks.
pub fn spearman(s: &PairedSeries) -> Result<f64, StatsError> {
    check_not_constant(s)?;
    Ok(pearson_raw(&fractional_ranks(&s.x), &fractional_ranks(&s.y)))
}

/// Kendall tau-b: `(C - D) / sqrt((n0 - n1)(n0 - n2))` with `n0` all pairs,
/// `n1`/`n2` pairs tied in x/y.
pub fn kendall_tau_b(s: &PairedSeries) -> Result<f64, StatsError> {
    check_not_constant(s)?;
    let n = s.len();
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = s.x[i].total_cmp(&s.x[j]);
            let dy = s.y[i].total_cmp(&s.y[j]);
            use std::cmp::Ordering::Equal;
            if dx == Equal {
                tied_x += 1;
            }
            if dy == Equal {
                tied_y += 1;
            }
            if dx != Equal && dy != Equal {
                if dx == dy {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = ((n0 - tied_x) as f64 * (n0 - tied_y) as f64).sqrt();
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

/// Coefficient of determination of the least-squares line of y on x,
/// `1 - SS_res / SS_tot`. Reported as "R² (R1)".
pub fn r_squared(s: &PairedSeries) -> Result<f64, StatsError> {
    check_not_constant(s)?;
    let (mx, my) = (mean(&s.x), mean(&s.y));
    let sxx: f64 = s.x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = s.x.iter().zip(&s.y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = s
        .x
        .iter()
        .zip(&s.y)
        .map(|(a, b)| (b - (intercept + slope * a)).powi(2))
        .sum();
    let ss_tot: f64 = s.y.iter().map(|b| (b - my).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn correlation_row(metric: &str, s: &PairedSeries) -> Result<CorrelationRow, StatsError> {
    let wrap = |source| StatsError::Metric {
        metric: metric.to_owned(),
        source: Box::new(source),
    };
    Ok(CorrelationRow {
        metric: metric.to_owned(),
        pearson: pearson(s).map_err(wrap)?,
        spearman: spearman(s).map_err(wrap)?,
        kendall: kendall_tau_b(s).map_err(wrap)?,
    })
}

/// One row per metric, in the given order. Every series must be labelled
/// identically.
pub fn correlation_table(metrics: &[(String, PairedSeries)]) -> Result<CorrelationTable, StatsError> {
    if let Some((_, first)) = metrics.first() {
        for (name, s) in metrics {
            if s.labels != first.labels {
                return Err(StatsError::Alignment(format!(
                    "metric `{name}` is labelled differently from the first metric"
                )));
            }
        }
    }
    let rows = metrics
        .iter()
        .map(|(name, s)| correlation_row(name, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorrelationTable { rows })
}
