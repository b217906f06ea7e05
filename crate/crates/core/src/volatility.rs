//! Daily high-low volatility and mesoscopic activity/volatility correlations.

use serde::{Deserialize, Serialize};

use crate::activity::ActivitySeries;
use crate::error::{Error, Result};
use crate::ingest::QuoteSeries;
use crate::stats::pearson;

/// `nu(t) = (high - low) / open` on every calendar day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySeries {
    pub ticker: String,
    pub nu: Vec<f64>,
}

/// Total operations of the studied population on every calendar day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MesoSeries {
    pub ticker: String,
    pub ops: Vec<f64>,
}

pub fn high_low_volatility(quotes: &QuoteSeries) -> Result<VolatilitySeries> {
    let nu = (0..quotes.len())
        .map(|t| {
            let open = quotes.open[t];
            if !(open > 0.0) {
                return Err(Error::BadRow { line: t as u64, reason: format!("non-positive open {open}") });
            }
            Ok((quotes.high[t] - quotes.low[t]) / open)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VolatilitySeries { ticker: quotes.ticker.clone(), nu })
}

/// Sums activity over investors on a calendar of `n_days`.
pub fn meso_series<'a, I>(ticker: &str, n_days: usize, series: I) -> MesoSeries
where
    I: IntoIterator<Item = &'a ActivitySeries>,
{
    let mut ops = vec![0.0; n_days];
    for s in series {
        for (d, c) in s.active_days() {
            ops[d] += f64::from(c);
        }
    }
    MesoSeries { ticker: ticker.to_string(), ops }
}

/// Correlation over the whole calendar with globally subtracted means.
pub fn meso_long_correlation(ops: &MesoSeries, nu: &VolatilitySeries) -> Result<f64> {
    if ops.ops.len() != nu.nu.len() {
        return Err(Error::InvalidParameter("activity and volatility are on different calendars".into()));
    }
    if ops.ops.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two days"));
    }
    pearson(&ops.ops, &nu.nu).ok_or(Error::UndefinedCorrelation("constant series"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovingAverage {
    /// Mean of days `t-w+1 ..= t`.
    #[default]
    Trailing,
    /// Mean of a window centred on `t` (`w/2` days either side, extra day
    /// on the past side for even `w`).
    Centered,
}

impl std::str::FromStr for MovingAverage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "trailing" => Ok(Self::Trailing),
            "centered" | "centred" => Ok(Self::Centered),
            _ => Err(format!("unknown moving average '{s}' (trailing | centered)")),
        }
    }
}

/// Residuals `x_t - MA_w(x)_t` on the days where the full window fits,
/// together with the index of the first residual day.
pub fn moving_average_residuals(xs: &[f64], window: usize, kind: MovingAverage) -> (usize, Vec<f64>) {
    if window == 0 || window > xs.len() {
        return (0, Vec::new());
    }
    let back = match kind {
        MovingAverage::Trailing => window - 1,
        MovingAverage::Centered => window / 2,
    };
    let fwd = window - 1 - back;
    let res = (back..xs.len() - fwd)
        .map(|t| {
            let win = &xs[t - back..=t + fwd];
            xs[t] - win.iter().sum::<f64>() / window as f64
        })
        .collect();
    (back, res)
}

/// Correlation of the residuals left after subtracting a `window`-day
/// moving average from both series.
pub fn meso_short_correlation(ops: &MesoSeries, nu: &VolatilitySeries, window: usize, kind: MovingAverage) -> Result<f64> {
    if ops.ops.len() != nu.nu.len() {
        return Err(Error::InvalidParameter("activity and volatility are on different calendars".into()));
    }
    if window == 0 {
        return Err(Error::InvalidParameter("moving-average window must be positive".into()));
    }
    let (_, ro) = moving_average_residuals(&ops.ops, window, kind);
    let (_, rn) = moving_average_residuals(&nu.nu, window, kind);
    if ro.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two residual days"));
    }
    pearson(&ro, &rn).ok_or(Error::UndefinedCorrelation("constant residual series"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::stream_rng;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn quotes(bars: &[(f64, f64, f64)]) -> QuoteSeries {
        let start = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        let days = (0..bars.len()).map(|i| start + chrono::Duration::days(i as i64)).collect();
        QuoteSeries::new(
            "T",
            days,
            bars.iter().map(|b| b.0).collect(),
            bars.iter().map(|b| b.1).collect(),
            bars.iter().map(|b| b.2).collect(),
        )
        .unwrap()
    }

    #[test]
    fn high_low_definition() {
        let v = high_low_volatility(&quotes(&[(100.0, 105.0, 95.0), (50.0, 50.0, 50.0), (20.0, 22.0, 19.0)])).unwrap();
        assert!((v.nu[0] - 0.10).abs() < 1e-15);
        assert_eq!(v.nu[1], 0.0);
        assert!((v.nu[2] - 0.15).abs() < 1e-15);
    }

    fn ms(v: Vec<f64>) -> MesoSeries {
        MesoSeries { ticker: "T".into(), ops: v }
    }

    fn vs(v: Vec<f64>) -> VolatilitySeries {
        VolatilitySeries { ticker: "T".into(), nu: v }
    }

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn long_linear_dependence_is_one() {
        let nu: Vec<f64> = normals(300, 1).iter().map(|z| 0.02 * (0.3 * z).exp()).collect();
        let ops: Vec<f64> = nu.iter().map(|v| 7.0 * v + 3.0).collect();
        let r = meso_long_correlation(&ms(ops), &vs(nu)).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn long_independent_series_within_null_band() {
        let r = meso_long_correlation(&ms(normals(2000, 2)), &vs(normals(2000, 3))).unwrap();
        assert!(r.abs() < 0.07, "{r}");
    }

    #[test]
    fn long_planted_mixture() {
        // x = 0.5 z + sqrt(0.75) e has correlation 0.5 with z
        let z = normals(2000, 4);
        let e = normals(2000, 5);
        let x: Vec<f64> = z.iter().zip(&e).map(|(z, e)| 0.5 * z + 0.75f64.sqrt() * e).collect();
        let r = meso_long_correlation(&ms(x), &vs(z)).unwrap();
        assert!((r - 0.5).abs() < 0.05, "{r}");
    }

    #[test]
    fn long_constant_series_is_undefined() {
        assert!(matches!(
            meso_long_correlation(&ms(vec![1.0; 10]), &vs(normals(10, 1))),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    /// Direct evaluation: subtract the trailing mean of each day by hand.
    fn short_oracle(x: &[f64], y: &[f64], w: usize) -> f64 {
        let mut rx = Vec::new();
        let mut ry = Vec::new();
        for t in (w - 1)..x.len() {
            let mut sx = 0.0;
            let mut sy = 0.0;
            for s in (t + 1 - w)..=t {
                sx += x[s];
                sy += y[s];
            }
            rx.push(x[t] - sx / w as f64);
            ry.push(y[t] - sy / w as f64);
        }
        let n = rx.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
        cov / (vx.sqrt() * vy.sqrt())
    }

    #[test]
    fn short_shared_wiggle_on_trend() {
        let n = 400;
        let wiggle = normals(n, 6);
        let ops: Vec<f64> = (0..n).map(|t| 100.0 + 0.5 * t as f64 + wiggle[t]).collect();
        let nu: Vec<f64> = (0..n).map(|t| 0.01 + 1e-4 * t as f64 + 0.002 * wiggle[t]).collect();
        let r = meso_short_correlation(&ms(ops.clone()), &vs(nu.clone()), 5, MovingAverage::Trailing).unwrap();
        let oracle = short_oracle(&ops, &nu, 5);
        assert!((r - oracle).abs() < 1e-12);
        assert!(r > 0.999, "{r}");
    }

    #[test]
    fn linear_trend_has_constant_residuals() {
        let trend: Vec<f64> = (0..50).map(|t| t as f64).collect();
        let err = meso_short_correlation(&ms(trend), &vs(normals(50, 7)), 5, MovingAverage::Trailing).unwrap_err();
        assert!(matches!(err, Error::UndefinedCorrelation(_)));
    }

    #[test]
    fn short_slow_trend_versus_noise_is_null() {
        let n = 2000;
        let noise = normals(n, 8);
        let mut rng = stream_rng(9, 0);
        let ops: Vec<f64> = (0..n).map(|t| (t as f64 / 200.0).sin() * 50.0 + rng.random::<f64>()).collect();
        let r = meso_short_correlation(&ms(ops), &vs(noise), 5, MovingAverage::Trailing).unwrap();
        assert!(r.abs() < 0.07, "{r}");
    }

    #[test]
    fn short_window_too_long_is_error() {
        let x = normals(10, 1);
        let y = normals(10, 2);
        assert!(meso_short_correlation(&ms(x.clone()), &vs(y.clone()), 10, MovingAverage::Trailing).is_err());
        assert!(meso_short_correlation(&ms(x.clone()), &vs(y.clone()), 11, MovingAverage::Trailing).is_err());
        assert!(meso_short_correlation(&ms(x), &vs(y), 9, MovingAverage::Trailing).is_ok());
    }

    #[test]
    fn centered_residuals() {
        let xs = [1.0, 2.0, 3.0, 10.0, 5.0, 6.0];
        let (start, r) = moving_average_residuals(&xs, 3, MovingAverage::Centered);
        assert_eq!(start, 1);
        assert_eq!(r.len(), 4);
        assert!((r[0] - 0.0).abs() < 1e-15);
        assert!((r[2] - (10.0 - 6.0)).abs() < 1e-15);
        let (start, r) = moving_average_residuals(&xs, 3, MovingAverage::Trailing);
        assert_eq!((start, r.len()), (2, 4));
    }

    proptest! {
        #[test]
        fn nu_is_scale_invariant(bars in prop::collection::vec((1.0f64..100.0, 0.0f64..0.5, 0.0f64..1.0), 1..50), c in 1e-3f64..1e3) {
            let raw: Vec<(f64, f64, f64)> = bars.iter().map(|&(o, r, u)| (o, o * (1.0 + r * u), o * (1.0 - r * (1.0 - u) * 0.5))).collect();
            let scaled: Vec<(f64, f64, f64)> = raw.iter().map(|&(o, h, l)| (o * c, h * c, l * c)).collect();
            let a = high_low_volatility(&quotes(&raw)).unwrap();
            let b = high_low_volatility(&quotes(&scaled)).unwrap();
            for (x, y) in a.nu.iter().zip(&b.nu) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn long_is_symmetric_and_bounded(x in prop::collection::vec(0.0f64..50.0, 3..80), seed in 0u64..1000) {
            let y = normals(x.len(), seed);
            if let Ok(r) = meso_long_correlation(&ms(x.clone()), &vs(y.clone())) {
                let r2 = meso_long_correlation(&ms(y), &vs(x)).unwrap();
                prop_assert_eq!(r, r2);
                prop_assert!(r.abs() <= 1.0);
            }
        }

        #[test]
        fn short_self_correlation_is_one(x in prop::collection::vec(-50.0f64..50.0, 8..80)) {
            if let Ok(r) = meso_short_correlation(&ms(x.clone()), &vs(x), 5, MovingAverage::Trailing) {
                prop_assert!((r - 1.0).abs() < 1e-12);
            }
        }
    }
}
