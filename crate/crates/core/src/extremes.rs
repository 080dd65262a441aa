//! Block maxima of filtered magnitudes and marginal models (ECDF / GEV),
//! optionally fitted over locally stationary segments.

use crate::error::{Result, SteError};
use crate::optim::nelder_mead;
use crate::signal::{BandSpec, TimeSeries};
use serde::{Deserialize, Serialize};

const PIT_EPS: f64 = 1e-10;

/// Per-block maxima of |signal| over non-overlapping windows of `m` samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockMaximaSeries {
    pub values: Vec<f64>,
    pub m: usize,
    pub fs: f64,
    pub band: Option<BandSpec>,
    pub source_label: String,
}

impl BlockMaximaSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reduce a series to block maxima of magnitudes. The trailing partial
/// block is discarded.
pub fn block_maxima(x: &TimeSeries, m: usize) -> Result<BlockMaximaSeries> {
    block_maxima_banded(x, m, None)
}

pub fn block_maxima_banded(x: &TimeSeries, m: usize, band: Option<BandSpec>) -> Result<BlockMaximaSeries> {
    if m < 1 {
        return Err(SteError::Config("block size m must be >= 1".into()));
    }
    if x.len() < m {
        return Err(SteError::TooShort { need: m, got: x.len() });
    }
    let n_blocks = x.len() / m;
    let values = (0..n_blocks)
        .map(|b| {
            x.values[b * m..(b + 1) * m]
                .iter()
                .map(|v| v.abs())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(BlockMaximaSeries {
        values,
        m,
        fs: x.fs,
        band,
        source_label: x.label.clone(),
    })
}

/// Fitted GEV parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
    pub log_lik: f64,
    pub converged: bool,
}

/// Marginal representation of one segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum MarginKind {
    /// Sorted sample; evaluation uses average ranks rescaled by n/(n+1).
    Ecdf { sorted: Vec<f64> },
    Gev(GevParams),
}

/// Marginal model over one or more locally stationary segments. Segments
/// partition the block-index range exactly; evaluation of observation i
/// uses its own segment's model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginModel {
    pub segments: Vec<(usize, usize, MarginKind)>, // [start, end) in block indices
}

/// Margin family selector used by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarginChoice {
    Ecdf,
    Gev,
}

fn segment_bounds(n: usize, n_segments: usize) -> Result<Vec<(usize, usize)>> {
    if n_segments == 0 {
        return Err(SteError::Config("need at least one segment".into()));
    }
    let seg_len = n / n_segments;
    if seg_len < 10 {
        return Err(SteError::Config(format!(
            "segments too small: {n} observations over {n_segments} segments"
        )));
    }
    let mut out = Vec::with_capacity(n_segments);
    for q in 0..n_segments {
        let start = q * seg_len;
        let end = if q + 1 == n_segments { n } else { (q + 1) * seg_len };
        out.push((start, end));
    }
    Ok(out)
}

/// Fit per-segment ECDFs. `n_segments = 1` is the global ECDF.
pub fn fit_ecdf(x: &BlockMaximaSeries, n_segments: usize) -> Result<MarginModel> {
    let bounds = segment_bounds(x.len(), n_segments)?;
    let segments = bounds
        .into_iter()
        .map(|(s, e)| {
            let mut sorted = x.values[s..e].to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (s, e, MarginKind::Ecdf { sorted })
        })
        .collect();
    Ok(MarginModel { segments })
}

/// ECDF evaluation with average ranks for ties, rescaled by n/(n+1) so the
/// output stays strictly inside (0,1).
fn ecdf_eval(sorted: &[f64], x: f64) -> f64 {
    let n = sorted.len();
    let below = sorted.partition_point(|&v| v < x);
    let not_above = sorted.partition_point(|&v| v <= x);
    // average rank among ties: (below + not_above + 1)/2 in 1-based ranks
    let rank = (below + not_above) as f64 / 2.0 + 0.5;
    let u = rank / (n as f64 + 1.0);
    u.clamp(PIT_EPS, 1.0 - PIT_EPS)
}

/// GEV log-likelihood; Gumbel branch for |xi| < 1e-6.
fn gev_log_lik(data: &[f64], mu: f64, sigma: f64, xi: f64) -> f64 {
    if sigma <= 1e-8 {
        return f64::NEG_INFINITY;
    }
    let n = data.len() as f64;
    let mut ll = -n * sigma.ln();
    if xi.abs() < 1e-6 {
        for &x in data {
            let z = (x - mu) / sigma;
            ll += -z - (-z).exp();
        }
    } else {
        for &x in data {
            let t = 1.0 + xi * (x - mu) / sigma;
            if t <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += -(1.0 + 1.0 / xi) * t.ln() - t.powf(-1.0 / xi);
        }
    }
    ll
}

/// GEV CDF.
pub fn gev_cdf(p: &GevParams, x: f64) -> f64 {
    let z = (x - p.mu) / p.sigma;
    let v = if p.xi.abs() < 1e-6 {
        (-(-z).exp()).exp()
    } else {
        let t = 1.0 + p.xi * z;
        if t <= 0.0 {
            if p.xi > 0.0 {
                0.0
            } else {
                1.0
            }
        } else {
            (-t.powf(-1.0 / p.xi)).exp()
        }
    };
    v.clamp(PIT_EPS, 1.0 - PIT_EPS)
}

/// GEV quantile (inverse CDF).
pub fn gev_quantile(p: &GevParams, u: f64) -> f64 {
    let l = -u.ln();
    if p.xi.abs() < 1e-6 {
        p.mu - p.sigma * l.ln()
    } else {
        p.mu + p.sigma * (l.powf(-p.xi) - 1.0) / p.xi
    }
}

fn fit_gev_segment(data: &[f64]) -> Result<GevParams> {
    let n = data.len();
    if n < 2 {
        return Err(SteError::FitFailure("GEV fit needs at least 2 observations".into()));
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    if sd < 1e-12 {
        return Err(SteError::FitFailure("degenerate sample: zero variance".into()));
    }

    // Moment-based Gumbel initializer, perturbed for the multi-start.
    let sigma0 = (6.0_f64).sqrt() * sd / std::f64::consts::PI;
    let mu0 = mean - 0.5772156649015329 * sigma0;
    let starts = [
        [mu0, sigma0.ln(), 0.1],
        [mu0 + 0.2 * sigma0, (1.2 * sigma0).ln(), -0.1],
        [mu0 - 0.2 * sigma0, (0.8 * sigma0).ln(), 0.0],
    ];

    let neg_ll = |p: &[f64]| {
        let (mu, log_sigma, xi_raw) = (p[0], p[1], p[2]);
        // soft box for xi in [-0.5, 0.5]
        let xi = xi_raw.clamp(-0.5, 0.5);
        let penalty = 1e4 * (xi_raw - xi).abs();
        -gev_log_lik(data, mu, log_sigma.exp(), xi) + penalty
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let (p, v) = nelder_mead(&neg_ll, &s, 0.1, 1e-12, 2000);
        if v.is_finite() && best.as_ref().map_or(true, |(_, bv)| v < *bv) {
            best = Some((p, v));
        }
    }
    let (p, v) = best.ok_or_else(|| SteError::FitFailure("GEV optimization diverged from all starts".into()))?;
    if !v.is_finite() {
        return Err(SteError::FitFailure("GEV log-likelihood not finite at optimum".into()));
    }
    Ok(GevParams {
        mu: p[0],
        sigma: p[1].exp(),
        xi: p[2].clamp(-0.5, 0.5),
        log_lik: -v,
        converged: true,
    })
}

/// Fit a GEV margin by maximum likelihood (single global segment).
pub fn fit_gev(x: &BlockMaximaSeries) -> Result<MarginModel> {
    fit_gev_segmented(x, 1)
}

pub fn fit_gev_segmented(x: &BlockMaximaSeries, n_segments: usize) -> Result<MarginModel> {
    let bounds = segment_bounds(x.len(), n_segments)?;
    let mut segments = Vec::with_capacity(bounds.len());
    for (s, e) in bounds {
        let params = fit_gev_segment(&x.values[s..e])?;
        segments.push((s, e, MarginKind::Gev(params)));
    }
    Ok(MarginModel { segments })
}

/// Fit the configured margin with segments of roughly `segment_seconds`
/// worth of blocks (0 = one global segment).
pub fn fit_margin(x: &BlockMaximaSeries, choice: MarginChoice, segment_seconds: f64) -> Result<MarginModel> {
    let n_segments = if segment_seconds <= 0.0 {
        1
    } else {
        let blocks_per_segment = (segment_seconds * x.fs / x.m as f64).round() as usize;
        if blocks_per_segment == 0 {
            1
        } else {
            (x.len() / blocks_per_segment).max(1)
        }
    };
    match choice {
        MarginChoice::Ecdf => fit_ecdf(x, n_segments),
        MarginChoice::Gev => fit_gev_segmented(x, n_segments),
    }
}

impl MarginModel {
    /// CDF of observation at block index i (uses its own segment's model).
    pub fn eval(&self, i: usize, x: f64) -> f64 {
        for (s, e, kind) in &self.segments {
            if i >= *s && i < *e {
                return match kind {
                    MarginKind::Ecdf { sorted } => ecdf_eval(sorted, x),
                    MarginKind::Gev(p) => gev_cdf(p, x),
                };
            }
        }
        // index past the last segment: fall back to the last model
        match &self.segments.last().expect("margin model has segments").2 {
            MarginKind::Ecdf { sorted } => ecdf_eval(sorted, x),
            MarginKind::Gev(p) => gev_cdf(p, x),
        }
    }

    pub fn gev_params(&self) -> Option<&GevParams> {
        match &self.segments.first()?.2 {
            MarginKind::Gev(p) => Some(p),
            _ => None,
        }
    }
}

/// Probability integral transform of the series against a fitted margin.
/// Outputs are strictly inside (0,1).
pub fn pit(x: &BlockMaximaSeries, model: &MarginModel) -> Vec<f64> {
    x.values
        .iter()
        .enumerate()
        .map(|(i, &v)| model.eval(i, v).clamp(PIT_EPS, 1.0 - PIT_EPS))
        .collect()
}
