//! Per-investor volatility polarization.
//!
//! The score of an investor is the correlation between their operation
//! count and same-day volatility, taken only over the days on which they
//! traded. A shuffled baseline permutes volatility over each investor's
//! trading days to measure how wide the score distribution would be
//! without any coupling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::activity::ActivitySeries;
use crate::error::{Error, Result};
use crate::exec::{map_range, pair_stream, stream_rng, Execution};
use crate::stats::{clamp_unit, mean, variance};
use crate::syncnet::SyncNetwork;
use crate::volatility::VolatilitySeries;

/// Which days supply the volatility mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuMoments {
    /// The investor's own trading days (a proper correlation in [-1, 1]).
    #[default]
    TradingDays,
    /// The whole calendar. Not bounded to [-1, 1].
    Global,
}

impl std::str::FromStr for NuMoments {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "trading" | "trading_days" => Ok(Self::TradingDays),
            "global" => Ok(Self::Global),
            _ => Err(format!("unknown moments '{s}' (trading | global)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationScore {
    pub investor_id: String,
    pub rho_ov: f64,
    pub trading_days_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    TooFewTradingDays,
    ConstantActivity,
    ConstantVolatility,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub investor_id: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationConfig {
    pub min_days: usize,
    pub moments: NuMoments,
    pub bins: usize,
    pub replicas: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for PolarizationConfig {
    fn default() -> Self {
        Self { min_days: 20, moments: NuMoments::TradingDays, bins: 50, replicas: 100, seed: 0, execution: Execution::Parallel }
    }
}

#[derive(Debug, Clone, Copy)]
struct GlobalMoments {
    mean: f64,
    sd: f64,
}

fn global_moments(nu: &VolatilitySeries) -> GlobalMoments {
    GlobalMoments { mean: mean(&nu.nu), sd: variance(&nu.nu).sqrt() }
}

/// Correlation over paired `(ops, nu)` samples with the chosen moments.
fn score(ops: &[f64], nus: &[f64], global: Option<GlobalMoments>) -> std::result::Result<f64, ExclusionReason> {
    let constant = |xs: &[f64]| xs.iter().all(|&x| x == xs[0]);
    if constant(ops) {
        return Err(ExclusionReason::ConstantActivity);
    }
    let n = ops.len() as f64;
    let mo = mean(ops);
    let so = variance(ops).sqrt();
    let (mv, sv) = match global {
        Some(g) => (g.mean, g.sd),
        None => (mean(nus), variance(nus).sqrt()),
    };
    if constant(nus) && global.is_none() || !(sv > 0.0) {
        return Err(ExclusionReason::ConstantVolatility);
    }
    let s: f64 = ops.iter().zip(nus).map(|(o, v)| (o - mo) * (v - mv)).sum();
    let r = s / n / (so * sv);
    Ok(if global.is_some() { r } else { clamp_unit(r) })
}

fn trading_day_samples(a: &ActivitySeries, nu: &VolatilitySeries) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.last_day() >= nu.nu.len() {
        return Err(Error::InvalidParameter(format!(
            "activity of {} extends past the volatility calendar",
            a.investor_id()
        )));
    }
    Ok(a.active_days().map(|(d, c)| (f64::from(c), nu.nu[d])).unzip())
}

/// Volatility polarization of one investor.
///
/// The outer `Result` signals a calendar mismatch; the inner one carries
/// the exclusion reason for ineligible investors.
pub fn rho_ov(
    a: &ActivitySeries,
    nu: &VolatilitySeries,
    min_days: usize,
    moments: NuMoments,
) -> Result<std::result::Result<PolarizationScore, ExclusionReason>> {
    if a.trading_days() < min_days {
        return Ok(Err(ExclusionReason::TooFewTradingDays));
    }
    let (ops, nus) = trading_day_samples(a, nu)?;
    let global = (moments == NuMoments::Global).then(|| global_moments(nu));
    Ok(score(&ops, &nus, global).map(|rho| PolarizationScore {
        investor_id: a.investor_id().to_string(),
        rho_ov: rho,
        trading_days_used: ops.len(),
    }))
}

#[derive(Debug, Clone, Default)]
pub struct ScoredPopulation {
    pub scores: Vec<PolarizationScore>,
    pub excluded: Vec<Exclusion>,
}

impl ScoredPopulation {
    pub fn values(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.rho_ov).collect()
    }

    pub fn exclusion_counts(&self) -> BTreeMap<ExclusionReason, usize> {
        let mut out = BTreeMap::new();
        for e in &self.excluded {
            *out.entry(e.reason).or_insert(0) += 1;
        }
        out
    }

    /// `investor rho_ov days_used`.
    pub fn scores_tsv(&self) -> String {
        let mut out = String::from("investor\trho_ov\tdays_used\n");
        for s in &self.scores {
            let _ = writeln!(out, "{}\t{}\t{}", s.investor_id, s.rho_ov, s.trading_days_used);
        }
        out
    }
}

pub fn score_population<'a, I>(series: I, nu: &VolatilitySeries, cfg: &PolarizationConfig) -> Result<ScoredPopulation>
where
    I: IntoIterator<Item = &'a ActivitySeries>,
{
    let mut out = ScoredPopulation::default();
    for a in series {
        match rho_ov(a, nu, cfg.min_days, cfg.moments)? {
            Ok(s) => out.scores.push(s),
            Err(reason) => out.excluded.push(Exclusion { investor_id: a.investor_id().to_string(), reason }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_centers: Vec<f64>,
    pub density: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub mode_center: f64,
}

impl Histogram {
    /// `bin_center density`.
    pub fn tsv(&self) -> String {
        let mut out = String::from("bin_center\tdensity\n");
        for (c, d) in self.bin_centers.iter().zip(&self.density) {
            let _ = writeln!(out, "{c}\t{d}");
        }
        out
    }
}

/// Normalized histogram of scores over [-1, 1].
pub fn population_distribution(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no polarization scores"));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let width = 2.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v + 1.0) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = values.len() as f64;
    let bin_centers: Vec<f64> = (0..bins).map(|b| -1.0 + (b as f64 + 0.5) * width).collect();
    let density = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    let mode = counts.iter().enumerate().max_by_key(|&(b, &c)| (c, std::cmp::Reverse(b))).map_or(0, |(b, _)| b);
    Ok(Histogram { mode_center: bin_centers[mode], bin_centers, density, mean: mean(values), variance: variance(values) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffledBaseline {
    /// Population variance of the shuffled scores, per replica.
    pub replica_variances: Vec<f64>,
    pub replica_means: Vec<f64>,
    /// Mean of `replica_variances`.
    pub shuffled_variance: f64,
    /// Mean shuffled score over all replicas and investors.
    pub shuffled_mean: f64,
    /// Shuffled scores of the first replica, in score order.
    pub first_replica: Vec<f64>,
}

/// Recomputes every eligible score with volatility permuted over the
/// investor's own trading days. Investor `k` in replica `r` draws from
/// stream `(seed, r, k)`.
pub fn shuffled_baseline<'a, I>(series: I, nu: &VolatilitySeries, cfg: &PolarizationConfig) -> Result<ShuffledBaseline>
where
    I: IntoIterator<Item = &'a ActivitySeries>,
{
    if cfg.replicas == 0 {
        return Err(Error::InvalidParameter("replicas must be positive".into()));
    }
    let global = (cfg.moments == NuMoments::Global).then(|| global_moments(nu));
    let mut samples = Vec::new();
    for a in series {
        if a.trading_days() < cfg.min_days {
            continue;
        }
        let (ops, nus) = trading_day_samples(a, nu)?;
        if score(&ops, &nus, global).is_ok() {
            samples.push((ops, nus));
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("no eligible investors for the shuffled baseline"));
    }
    let per_replica: Vec<Vec<f64>> = map_range(cfg.execution, cfg.replicas, |r| {
        samples
            .iter()
            .enumerate()
            .map(|(k, (ops, nus))| {
                let mut rng = stream_rng(cfg.seed, pair_stream(r, k));
                let mut shuffled = nus.clone();
                shuffled.shuffle(&mut rng);
                score(ops, &shuffled, global).expect("permutation preserves the moments")
            })
            .collect()
    });
    let replica_variances: Vec<f64> = per_replica.iter().map(|v| variance(v)).collect();
    let replica_means: Vec<f64> = per_replica.iter().map(|v| mean(v)).collect();
    Ok(ShuffledBaseline {
        shuffled_variance: mean(&replica_variances),
        shuffled_mean: mean(&replica_means),
        replica_variances,
        replica_means,
        first_replica: per_replica.into_iter().next().unwrap_or_default(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationSummary {
    pub scored: usize,
    pub excluded: BTreeMap<ExclusionReason, usize>,
    pub mean: f64,
    pub variance: f64,
    pub mode_bin: f64,
    pub shuffled_variance: f64,
    pub shuffled_mean: f64,
    pub variance_ratio: f64,
}

/// Scores, histogram and shuffled baseline of one population.
#[derive(Debug, Clone)]
pub struct PolarizationAnalysis {
    pub population: ScoredPopulation,
    pub histogram: Histogram,
    pub baseline: ShuffledBaseline,
    pub summary: PolarizationSummary,
}

impl PolarizationAnalysis {
    /// `investor rho_ov rho_ov_shuffled` for the first shuffle replica.
    pub fn scatter_tsv(&self) -> String {
        let mut out = String::from("investor\trho_ov\trho_ov_shuffled\n");
        for (s, sh) in self.population.scores.iter().zip(&self.baseline.first_replica) {
            let _ = writeln!(out, "{}\t{}\t{}", s.investor_id, s.rho_ov, sh);
        }
        out
    }
}

pub fn analyze_polarization<'a, I>(series: I, nu: &VolatilitySeries, cfg: &PolarizationConfig) -> Result<PolarizationAnalysis>
where
    I: IntoIterator<Item = &'a ActivitySeries> + Clone,
{
    let population = score_population(series.clone(), nu, cfg)?;
    let histogram = population_distribution(&population.values(), cfg.bins)?;
    let baseline = shuffled_baseline(series, nu, cfg)?;
    if !(baseline.shuffled_variance > 0.0) {
        return Err(Error::Degenerate("shuffled scores have zero variance".into()));
    }
    let summary = PolarizationSummary {
        scored: population.scores.len(),
        excluded: population.exclusion_counts(),
        mean: histogram.mean,
        variance: histogram.variance,
        mode_bin: histogram.mode_center,
        shuffled_variance: baseline.shuffled_variance,
        shuffled_mean: baseline.shuffled_mean,
        variance_ratio: histogram.variance / baseline.shuffled_variance,
    };
    Ok(PolarizationAnalysis { population, histogram, baseline, summary })
}

/// Copies scores onto matching network nodes. Returns the network and the
/// ids of nodes left without a score.
pub fn attach_scores(net: &SyncNetwork, scores: &[PolarizationScore]) -> (SyncNetwork, Vec<String>) {
    let by_id: BTreeMap<&str, f64> = scores.iter().map(|s| (s.investor_id.as_str(), s.rho_ov)).collect();
    let mut out = net.clone();
    let mut missing = Vec::new();
    for node in &mut out.nodes {
        node.rho_ov = by_id.get(node.investor_id.as_str()).copied();
        if node.rho_ov.is_none() {
            missing.push(node.investor_id.clone());
        }
    }
    (out, missing)
}
