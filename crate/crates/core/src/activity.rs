//! Per-investor activity series and heterogeneity statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{TradeRecord, TradingCalendar};

/// Daily operation counts of one investor in one asset.
///
/// Counts are stored densely over the active period `[first_day, last_day]`
/// (trading-day ordinals on the asset calendar). Both boundary counts are
/// positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivitySeries {
    investor_id: String,
    ticker: String,
    first_day: usize,
    counts: Vec<u32>,
    total_ops: u64,
    trading_days: usize,
}

impl ActivitySeries {
    /// Builds a series from `(day, count)` pairs. Days may repeat; counts are
    /// summed. Returns `None` when all counts are zero.
    pub fn from_day_counts(
        investor_id: impl Into<String>,
        ticker: impl Into<String>,
        day_counts: impl IntoIterator<Item = (usize, u32)>,
    ) -> Option<Self> {
        let mut per_day: BTreeMap<usize, u32> = BTreeMap::new();
        for (d, c) in day_counts {
            if c > 0 {
                *per_day.entry(d).or_default() += c;
            }
        }
        let (&first, _) = per_day.first_key_value()?;
        let (&last, _) = per_day.last_key_value()?;
        let mut counts = vec![0u32; last - first + 1];
        for (d, c) in &per_day {
            counts[d - first] = *c;
        }
        Some(Self::from_parts(investor_id.into(), ticker.into(), first, counts))
    }

    /// Builds a series from dense counts starting at `start_day`; leading and
    /// trailing zero days are trimmed.
    pub fn from_dense(investor_id: impl Into<String>, ticker: impl Into<String>, start_day: usize, dense: &[u32]) -> Option<Self> {
        let lo = dense.iter().position(|&c| c > 0)?;
        let hi = dense.iter().rposition(|&c| c > 0)?;
        Some(Self::from_parts(investor_id.into(), ticker.into(), start_day + lo, dense[lo..=hi].to_vec()))
    }

    fn from_parts(investor_id: String, ticker: String, first_day: usize, counts: Vec<u32>) -> Self {
        let total_ops = counts.iter().map(|&c| u64::from(c)).sum();
        let trading_days = counts.iter().filter(|&&c| c > 0).count();
        Self { investor_id, ticker, first_day, counts, total_ops, trading_days }
    }

    pub fn investor_id(&self) -> &str {
        &self.investor_id
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    /// First active day `T_F`.
    pub fn first_day(&self) -> usize {
        self.first_day
    }

    /// Last active day `T_L`.
    pub fn last_day(&self) -> usize {
        self.first_day + self.counts.len() - 1
    }

    /// Operations on `day`; zero outside the active period.
    pub fn count_at(&self, day: usize) -> u32 {
        if day < self.first_day {
            return 0;
        }
        self.counts.get(day - self.first_day).copied().unwrap_or(0)
    }

    /// Dense counts over `[first_day, last_day]`.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Counts over `[start, end]`, which must lie inside the active period.
    pub fn window(&self, start: usize, end: usize) -> &[u32] {
        &self.counts[start - self.first_day..=end - self.first_day]
    }

    pub fn total_ops(&self) -> u64 {
        self.total_ops
    }

    /// Number of days with at least one operation (`N`).
    pub fn trading_days(&self) -> usize {
        self.trading_days
    }

    /// Active span in trading days (`T = T_L - T_F + 1`).
    pub fn span(&self) -> usize {
        self.counts.len()
    }

    /// Operations per trading day.
    pub fn opd(&self) -> f64 {
        self.total_ops as f64 / self.trading_days as f64
    }

    /// `(day, count)` for every day with activity.
    pub fn active_days(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(i, &c)| (self.first_day + i, c))
    }
}

/// Counts every trade per investor and day. All trades must belong to the
/// calendar's asset and fall on a calendar day.
pub fn build_activity<'a, I>(trades: I, calendar: &TradingCalendar) -> Result<BTreeMap<String, ActivitySeries>>
where
    I: IntoIterator<Item = &'a TradeRecord>,
{
    let mut days: BTreeMap<&str, Vec<(usize, u32)>> = BTreeMap::new();
    for t in trades {
        if t.ticker != calendar.ticker {
            return Err(Error::TickerMismatch { expected: calendar.ticker.clone(), found: t.ticker.clone() });
        }
        let d = calendar
            .index_of(t.date)
            .ok_or_else(|| Error::OffCalendar { ticker: calendar.ticker.clone(), date: t.date.to_string() })?;
        days.entry(t.investor_id.as_str()).or_default().push((d, 1));
    }
    Ok(days
        .into_iter()
        .filter_map(|(inv, dc)| ActivitySeries::from_day_counts(inv, calendar.ticker.as_str(), dc).map(|s| (inv.to_string(), s)))
        .collect())
}

/// Empirical survival function at each distinct value: `(value, P[X >= value])`.
pub fn ccdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("ccdf of an empty sample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("ccdf input must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        out.push((v, (sorted.len() - i) as f64 / n));
        while i < sorted.len() && sorted[i] == v {
            i += 1;
        }
    }
    Ok(out)
}

/// Hill tail-index estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub alpha: f64,
    /// Asymptotic standard error `alpha / sqrt(k)`.
    pub stderr: f64,
    pub k: usize,
    pub n: usize,
}

/// Default number of upper order statistics: `ceil(0.1 n)`.
pub fn default_hill_k(n: usize) -> usize {
    (n as f64 * 0.1).ceil() as usize
}

fn hill_sorted_desc(desc: &[f64], k: usize) -> Result<TailFit> {
    let n = desc.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("Hill k must satisfy 0 < k < n (k={k}, n={n})")));
    }
    let threshold = desc[k];
    if desc[0] == threshold {
        return Err(Error::Degenerate(format!("top {} order statistics are all equal", k + 1)));
    }
    let log_sum: f64 = desc[..k].iter().map(|&x| (x / threshold).ln()).sum();
    let alpha = k as f64 / log_sum;
    Ok(TailFit { alpha, stderr: alpha / (k as f64).sqrt(), k, n })
}

fn sorted_desc(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("Hill estimator needs finite positive values".into()));
    }
    let mut desc = values.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    Ok(desc)
}

/// Hill estimator using the `k` largest values:
/// `alpha = k / sum_{j<=k} ln(x_(j) / x_(k+1))`.
pub fn hill_index(values: &[f64], k: usize) -> Result<TailFit> {
    hill_sorted_desc(&sorted_desc(values)?, k)
}

/// Hill estimates across several `k`, for inspecting the plateau of the Hill plot.
pub fn hill_sweep(values: &[f64], ks: &[usize]) -> Result<Vec<TailFit>> {
    let desc = sorted_desc(values)?;
    Ok(ks.iter().filter_map(|&k| hill_sorted_desc(&desc, k).ok()).collect())
}

/// Roughly log-spaced `k` values in `[min_k, n/2]`.
pub fn sweep_ks(n: usize, points: usize) -> Vec<usize> {
    let hi = n / 2;
    let lo = 5.min(hi);
    if hi < 1 || points == 0 {
        return Vec::new();
    }
    let mut ks: Vec<usize> = (0..points)
        .map(|i| {
            let f = if points == 1 { 1.0 } else { i as f64 / (points - 1) as f64 };
            ((lo.max(1) as f64).ln() * (1.0 - f) + (hi as f64).ln() * f).exp().round() as usize
        })
        .collect();
    ks.dedup();
    ks
}

/// `(N, total_ops)` per investor, in investor-id order.
pub fn ops_vs_days<'a, I>(series: I) -> Vec<(usize, u64)>
where
    I: IntoIterator<Item = &'a ActivitySeries>,
{
    series.into_iter().map(|s| (s.trading_days(), s.total_ops())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::exec::stream_rng;

    #[test]
    fn counts_repeated_days() {
        let s = ActivitySeries::from_day_counts("A", "REP", [(3, 1), (3, 1), (7, 1)]).unwrap();
        assert_eq!(s.count_at(3), 2);
        assert_eq!(s.count_at(7), 1);
        assert_eq!(s.count_at(5), 0);
        assert_eq!(s.count_at(0), 0);
        assert_eq!(s.count_at(100), 0);
        assert_eq!(s.total_ops(), 3);
        assert_eq!(s.trading_days(), 2);
        assert_eq!(s.span(), 5);
        assert_eq!(s.opd(), 1.5);
        assert_eq!((s.first_day(), s.last_day()), (3, 7));
    }

    #[test]
    fn single_trade_boundary() {
        let s = ActivitySeries::from_day_counts("A", "REP", [(9, 1)]).unwrap();
        assert_eq!((s.trading_days(), s.span(), s.opd()), (1, 1, 1.0));
    }

    #[test]
    fn opd_definition() {
        let s = ActivitySeries::from_day_counts("A", "REP", (0..20).map(|d| (d * 3, 2))).unwrap();
        assert_eq!(s.total_ops(), 40);
        assert_eq!(s.opd(), 2.0);
    }

    #[test]
    fn dense_constructor_trims() {
        let s = ActivitySeries::from_dense("A", "REP", 10, &[0, 0, 1, 0, 2, 0]).unwrap();
        assert_eq!((s.first_day(), s.last_day()), (12, 14));
        assert_eq!(s.counts(), &[1, 0, 2]);
        assert!(ActivitySeries::from_dense("A", "REP", 0, &[0, 0]).is_none());
    }

    #[test]
    fn ccdf_direct_count() {
        assert_eq!(ccdf(&[1.0, 1.0, 2.0, 4.0]).unwrap(), vec![(1.0, 1.0), (2.0, 0.5), (4.0, 0.25)]);
        assert_eq!(ccdf(&[5.0, 5.0, 5.0]).unwrap(), vec![(5.0, 1.0)]);
        assert!(ccdf(&[]).is_err());
    }

    /// Least-squares slope of log fraction against log value.
    fn loglog_slope(points: &[(f64, f64)]) -> f64 {
        let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    }

    fn pareto_draws(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / alpha)).collect()
    }

    #[test]
    fn ccdf_of_zipf_sample_has_unit_slope() {
        let pts = ccdf(&pareto_draws(1.0, 10_000, 11)).unwrap();
        let slope = loglog_slope(&pts);
        assert!((slope + 1.0).abs() < 0.1, "slope {slope}");
    }

    /// Brute-force Hill: direct sum over the k largest of exact quantiles.
    fn hill_oracle(n: usize, k: usize) -> f64 {
        // x_(j) = (j/n)^-1 = n/j in descending order j = 1..n
        let xk1 = n as f64 / (k + 1) as f64;
        let s: f64 = (1..=k).map(|j| ((n as f64 / j as f64) / xk1).ln()).sum();
        k as f64 / s
    }

    #[test]
    fn hill_on_exact_pareto_quantiles() {
        let n = 1000;
        let values: Vec<f64> = (1..=n).map(|j| (j as f64 / n as f64).powi(-1)).collect();
        let fit = hill_index(&values, 100).unwrap();
        let oracle = hill_oracle(n, 100);
        assert!((fit.alpha - oracle).abs() < 1e-12);
        // frozen: 100 / (100 ln 101 - ln 100!) = 1.022778...
        assert!((fit.alpha - 1.022_778).abs() < 1e-5, "{}", fit.alpha);
        assert!((fit.alpha - 1.0).abs() < 0.05);
        assert_eq!(fit.stderr, fit.alpha / 10.0);
        assert_eq!((fit.k, fit.n), (100, 1000));
    }

    #[test]
    fn hill_converges_with_sqrt_n() {
        let mut prev = f64::INFINITY;
        for n in [1_000usize, 10_000, 100_000] {
            let values: Vec<f64> = (1..=n).map(|j| n as f64 / j as f64).collect();
            let k = (n as f64).sqrt() as usize;
            let err = (hill_index(&values, k).unwrap().alpha - 1.0).abs();
            assert!(err < prev, "n={n} err={err} prev={prev}");
            prev = err;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn hill_recovers_opd_like_index() {
        let draws = pareto_draws(1.29, 100_000, 5);
        let fit = hill_index(&draws, 10_000).unwrap();
        assert!((fit.alpha - 1.29).abs() < 0.05, "{}", fit.alpha);
    }

    #[test]
    fn hill_rejects_degenerate_and_bad_k() {
        assert!(matches!(hill_index(&[2.0; 10], 3), Err(Error::Degenerate(_))));
        assert!(matches!(hill_index(&[1.0, 2.0, 3.0], 3), Err(Error::InvalidParameter(_))));
        assert!(matches!(hill_index(&[1.0, 2.0, 3.0], 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(hill_index(&[1.0, -2.0, 3.0], 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn sweep_skips_invalid_k() {
        let values: Vec<f64> = (1..=100).map(|j| 100.0 / j as f64).collect();
        let ks = sweep_ks(values.len(), 10);
        assert_eq!(*ks.first().unwrap(), 5);
        assert_eq!(*ks.last().unwrap(), 50);
        let fits = hill_sweep(&values, &[0, 10, 200]).unwrap();
        assert_eq!(fits.len(), 1);
        assert_eq!(fits[0].k, 10);
    }

    #[test]
    fn ops_vs_days_rows() {
        let s1 = ActivitySeries::from_day_counts("a", "X", [(0, 1)]).unwrap();
        let s2 = ActivitySeries::from_day_counts("b", "X", (0..10).map(|d| (d, if d < 5 { 1 } else { 2 }))).unwrap();
        let s3 = ActivitySeries::from_day_counts("c", "X", (0..100).map(|d| (d, 4))).unwrap();
        assert_eq!(ops_vs_days([&s1, &s2, &s3]), vec![(1, 1), (10, 15), (100, 400)]);
        assert!(ops_vs_days(std::iter::empty()).is_empty());
    }

    proptest! {
        #[test]
        fn series_invariants(days in prop::collection::vec((0usize..300, 1u32..5), 1..60)) {
            let s = ActivitySeries::from_day_counts("x", "X", days.clone()).unwrap();
            prop_assert!(s.trading_days() <= s.span());
            prop_assert!(s.opd() >= s.total_ops() as f64 / s.span() as f64);
            prop_assert!(s.count_at(s.first_day()) > 0 && s.count_at(s.last_day()) > 0);
            prop_assert_eq!(s.total_ops(), days.iter().map(|d| u64::from(d.1)).sum::<u64>());
            prop_assert_eq!(s.counts().iter().map(|&c| u64::from(c)).sum::<u64>(), s.total_ops());
        }

        #[test]
        fn ccdf_is_survival_function(values in prop::collection::vec(0.01f64..1e6, 1..200)) {
            let pts = ccdf(&values).unwrap();
            prop_assert_eq!(pts[0].1, 1.0);
            for w in pts.windows(2) {
                prop_assert!(w[1].0 > w[0].0);
                prop_assert!(w[1].1 < w[0].1);
            }
            prop_assert!(pts.iter().all(|p| p.1 > 0.0 && p.1 <= 1.0));
        }

        #[test]
        fn hill_is_scale_invariant(values in prop::collection::vec(0.1f64..1e4, 20..200), c in 1e-3f64..1e3) {
            let k = values.len() / 4;
            if let Ok(fit) = hill_index(&values, k) {
                let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
                let fit2 = hill_index(&scaled, k).unwrap();
                prop_assert!((fit.alpha - fit2.alpha).abs() <= 1e-12 * fit.alpha.max(1.0));
            }
        }
    }
}
