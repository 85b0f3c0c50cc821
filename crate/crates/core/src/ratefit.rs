//! Convergence-rate fits over recorded trajectories: a geometric fit for
//! deterministic runs, an `err * n` trend for the harmonic-step regime, and a
//! `gap * sqrt(n) / log(n)` trend for the averaged monotone regime.

/// Error floor below which rows are excluded from any fit.
pub const FIT_FLOOR: f64 = 1e-14;

/// Geometric fits stop once the error reaches this level; the tail is
/// round-off, not rate information.
pub const GEOMETRIC_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    /// `log err = level + n * slope`.
    Geometric,
    /// Trend of `err * n` over the last half of the run.
    Harmonic,
    /// Trend of `gap * sqrt(n) / log(n)` over the last half of the run.
    SqrtLog,
}

impl RateModel {
    pub fn name(&self) -> &'static str {
        match self {
            RateModel::Geometric => "geometric",
            RateModel::Harmonic => "harmonic",
            RateModel::SqrtLog => "sqrtlog",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub model: RateModel,
    pub slope: f64,
    pub level: f64,
    pub r_squared: f64,
    pub points: usize,
}

fn linear_regression(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some((slope, intercept, r2))
}

/// Fits `log err` against `n` after a 10% burn-in, on rows that sit above the
/// floor and have not yet reached the round-off regime.
pub fn fit_geometric(rows: &[(u64, f64)], total_iters: u64) -> Option<RateFit> {
    let burn_in = total_iters / 10;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(n, e) in rows {
        if n >= burn_in.max(1) && e > FIT_FLOOR && e > GEOMETRIC_CUTOFF {
            xs.push(n as f64);
            ys.push(e.ln());
        }
    }
    let (slope, intercept, r2) = linear_regression(&xs, &ys)?;
    Some(RateFit {
        model: RateModel::Geometric,
        slope,
        level: intercept,
        r_squared: r2,
        points: xs.len(),
    })
}

fn trend_fit(rows: &[(u64, f64)], model: RateModel, transform: impl Fn(u64, f64) -> f64) -> Option<RateFit> {
    let max_n = rows.iter().map(|&(n, _)| n).max()?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(n, e) in rows {
        if n >= max_n / 2 && n >= 2 && e > FIT_FLOOR {
            xs.push(n as f64);
            ys.push(transform(n, e));
        }
    }
    let (slope, _, r2) = linear_regression(&xs, &ys)?;
    let level = {
        let mut sorted = ys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite trend values"));
        percentile_sorted(&sorted, 0.5)
    };
    Some(RateFit { model, slope, level, r_squared: r2, points: xs.len() })
}

/// Trend of `err * n` over the last half of the run; a flat trend with a
/// finite level is the `O(1/n)` signature.
pub fn fit_harmonic(rows: &[(u64, f64)]) -> Option<RateFit> {
    trend_fit(rows, RateModel::Harmonic, |n, e| e * n as f64)
}

/// Trend of `gap * sqrt(n) / log(n)` over the last half of the run.
pub fn fit_sqrtlog(rows: &[(u64, f64)]) -> Option<RateFit> {
    trend_fit(rows, RateModel::SqrtLog, |n, e| e * (n as f64).sqrt() / (n as f64).ln())
}

/// Linear-interpolation percentile of pre-sorted values, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile of an unsorted slice.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    percentile_sorted(&sorted, q)
}
