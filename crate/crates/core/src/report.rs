//! End-to-end analysis of one or more assets and the consolidated report.
//!
//! Every randomized stage draws from a seed derived from the root seed, the
//! ticker and a stage label, so a report is reproducible from its recorded
//! configuration regardless of worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activity::{build_activity, ccdf, default_hill_k, hill_index, hill_sweep, sweep_ks, ActivitySeries, TailFit};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_slice, Execution};
use crate::ingest::{build_calendar, filter_automatic, AutoPolicy, QuoteSeries, TradeRecord, TradingCalendar, DATE_FORMAT};
use crate::netmetrics::{
    assortativity_with_nulls, discretize_attribute, discretize_opd, louvain, partition_tsv, AssortativityResult, Discretization,
    NullConfig,
};
use crate::polarization::{analyze_polarization, attach_scores, NuMoments, PolarizationConfig, PolarizationSummary};
use crate::syncnet::{build_sync_network, PermutationConfig, ShuffleMode, SyncConfig, SyncDiagnostics, SyncNetwork};
use crate::volatility::{
    high_low_volatility, meso_long_correlation, meso_series, meso_short_correlation, MesoSeries, MovingAverage, VolatilitySeries,
};

pub const SCHEMA_VERSION: &str = "1.0";

/// Every tunable of the pipeline. Serialized into the report and hashed
/// into its digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub auto_policy: AutoPolicy,
    pub min_ops: u64,
    pub min_days: usize,
    pub shuffles: usize,
    pub p_level: f64,
    pub shuffle_mode: ShuffleMode,
    pub early_stop: bool,
    pub replicas: usize,
    pub swap_factor: usize,
    pub weighted_assortativity: bool,
    pub discretization: Discretization,
    pub opd_cap: Option<i64>,
    pub ma_window: usize,
    pub ma_kind: MovingAverage,
    pub nu_moments: NuMoments,
    pub hist_bins: usize,
    pub polar_replicas: usize,
    /// Hill `k`; `None` uses `ceil(0.1 n)`.
    pub hill_k: Option<usize>,
    pub hill_sweep_points: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            auto_policy: AutoPolicy::None,
            min_ops: 20,
            min_days: 20,
            shuffles: 999,
            p_level: 0.01,
            shuffle_mode: ShuffleMode::Both,
            early_stop: true,
            replicas: 1000,
            swap_factor: 10,
            weighted_assortativity: false,
            discretization: Discretization::Truncate,
            opd_cap: None,
            ma_window: 5,
            ma_kind: MovingAverage::Trailing,
            nu_moments: NuMoments::TradingDays,
            hist_bins: 50,
            polar_replicas: 100,
            hill_k: None,
            hill_sweep_points: 20,
            seed: 0,
        }
    }
}

impl AnalysisConfig {
    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn sync_config(&self, seed: u64, execution: Execution) -> SyncConfig {
        SyncConfig {
            min_ops: self.min_ops,
            permutation: PermutationConfig {
                shuffles: self.shuffles,
                level: self.p_level,
                mode: self.shuffle_mode,
                early_stop: self.early_stop,
            },
            seed,
            execution,
        }
    }

    pub fn null_config(&self, seed: u64, execution: Execution) -> NullConfig {
        NullConfig { replicas: self.replicas, swap_factor: self.swap_factor, weighted: self.weighted_assortativity, seed, execution }
    }

    pub fn polarization_config(&self, seed: u64, execution: Execution) -> PolarizationConfig {
        PolarizationConfig {
            min_days: self.min_days,
            moments: self.nu_moments,
            bins: self.hist_bins,
            replicas: self.polar_replicas,
            seed,
            execution,
        }
    }
}

/// Either a value or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Value(T),
    Error(String),
}

impl<T> Outcome<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Outcome::Value(v) => Some(v),
            Outcome::Error(_) => None,
        }
    }
}

impl<T> From<Result<T>> for Outcome<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Value(v),
            Err(e) => Outcome::Error(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeCounts {
    /// Trades of this ticker before the automatic-operation filter.
    pub input: usize,
    pub after_filter: usize,
    pub off_calendar: usize,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MesoReport {
    pub long: Outcome<f64>,
    pub short: Outcome<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub nodes: usize,
    pub edges: usize,
    pub isolated: usize,
    pub modularity: Outcome<f64>,
    pub communities: Option<usize>,
    pub diagnostics: SyncDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssortativityReport {
    /// Computed on the subgraph induced by nodes with a polarization score.
    pub rho_ov: Outcome<AssortativityResult>,
    pub opd: Outcome<AssortativityResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetReport {
    pub ticker: String,
    pub calendar_days: usize,
    pub trades: TradeCounts,
    pub retention_fraction: f64,
    pub investors: usize,
    pub tail_fit: Outcome<TailFit>,
    pub opd_tail_fit: Outcome<TailFit>,
    pub meso: MesoReport,
    pub network: NetworkReport,
    pub assortativity: AssortativityReport,
    pub polarization: Outcome<PolarizationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_digest: String,
    pub config: AnalysisConfig,
    pub defaults: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: String,
    pub generator: Generator,
    pub run: RunMetadata,
    pub assets: BTreeMap<String, Outcome<AssetReport>>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn failed_assets(&self) -> Vec<(&str, &str)> {
        self.assets
            .iter()
            .filter_map(|(t, o)| match o {
                Outcome::Error(e) => Some((t.as_str(), e.as_str())),
                Outcome::Value(_) => None,
            })
            .collect()
    }
}

/// Report plus plot-ready tables keyed by relative path (`TICKER/name.tsv`).
#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub report: AnalysisReport,
    pub tables: BTreeMap<String, String>,
}

/// `investor total_ops N T opd first_date last_date`.
pub fn activity_tsv<'a, I>(series: I, calendar: &TradingCalendar) -> String
where
    I: IntoIterator<Item = &'a ActivitySeries>,
{
    let mut out = String::from("investor\ttotal_ops\tN\tT\topd\tfirst_date\tlast_date\n");
    for s in series {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.investor_id(),
            s.total_ops(),
            s.trading_days(),
            s.span(),
            s.opd(),
            calendar.days[s.first_day()].format(DATE_FORMAT),
            calendar.days[s.last_day()].format(DATE_FORMAT)
        );
    }
    out
}

/// `value ccdf`.
pub fn ccdf_tsv(values: &[f64]) -> Result<String> {
    let mut out = String::from("value\tccdf\n");
    for (v, p) in ccdf(values)? {
        let _ = writeln!(out, "{v}\t{p}");
    }
    Ok(out)
}

/// `k alpha stderr`.
pub fn hill_sweep_tsv(fits: &[TailFit]) -> String {
    let mut out = String::from("k\talpha\tstderr\n");
    for f in fits {
        let _ = writeln!(out, "{}\t{}\t{}", f.k, f.alpha, f.stderr);
    }
    out
}

/// `date ops nu`; the `ops` column is omitted when `ops` is `None`.
pub fn daily_tsv(calendar: &TradingCalendar, nu: &VolatilitySeries, ops: Option<&MesoSeries>) -> String {
    let mut out = String::from(if ops.is_some() { "date\tops\tnu\n" } else { "date\tnu\n" });
    for (t, d) in calendar.days.iter().enumerate() {
        match ops {
            Some(o) => writeln!(out, "{}\t{}\t{}", d.format(DATE_FORMAT), o.ops[t], nu.nu[t]),
            None => writeln!(out, "{}\t{}", d.format(DATE_FORMAT), nu.nu[t]),
        }
        .expect("write to string");
    }
    out
}

/// Hill fit with the configured or default `k`.
pub fn tail_fit(values: &[f64], k: Option<usize>) -> Result<TailFit> {
    hill_index(values, k.unwrap_or_else(|| default_hill_k(values.len())))
}

fn rho_assortativity(net: &SyncNetwork, cfg: &AnalysisConfig, seed: u64, exec: Execution) -> Result<AssortativityResult> {
    let scored = net.induced(|n| n.rho_ov.is_some());
    let values: Vec<f64> = scored.nodes.iter().map(|n| n.rho_ov.expect("induced on scored nodes")).collect();
    let attr = discretize_attribute(&values, cfg.discretization)?;
    assortativity_with_nulls(&scored, &attr, "rho_ov", &cfg.null_config(seed, exec))
}

fn opd_assortativity(net: &SyncNetwork, cfg: &AnalysisConfig, seed: u64, exec: Execution) -> Result<AssortativityResult> {
    let values: Vec<f64> = net.nodes.iter().map(|n| n.opd).collect();
    let attr = discretize_opd(&values, cfg.opd_cap);
    assortativity_with_nulls(net, &attr, "opd", &cfg.null_config(seed, exec))
}

/// Seed of one randomized stage of one asset.
pub fn stage_seed(root: u64, ticker: &str, stage: &str) -> u64 {
    derive_seed(derive_seed(root, ticker), stage)
}

/// Inputs of one asset after calendar alignment.
#[derive(Debug, Clone)]
pub struct AssetData {
    pub calendar: TradingCalendar,
    pub series: BTreeMap<String, ActivitySeries>,
    pub nu: VolatilitySeries,
    pub counts: TradeCounts,
    /// `(investor, date)` of trades dropped for falling off the calendar.
    pub off_calendar: Vec<(String, NaiveDate)>,
}

impl AssetData {
    /// `investor date`.
    pub fn off_calendar_tsv(&self) -> String {
        let mut out = String::from("investor\tdate\n");
        for (id, d) in &self.off_calendar {
            let _ = writeln!(out, "{}\t{}", id, d.format(DATE_FORMAT));
        }
        out
    }
}

/// Aligns one asset's trades (already filtered, `input` before the filter)
/// with its quote calendar and builds activity and volatility series.
pub fn prepare_asset(quotes: &QuoteSeries, trades: &[TradeRecord], input: usize) -> Result<AssetData> {
    let calendar = build_calendar(quotes)?;
    let split = calendar.split(trades);
    let counts = TradeCounts { input, after_filter: trades.len(), off_calendar: split.off.len(), used: split.on.len() };
    let series = build_activity(split.on.iter().copied(), &calendar)?;
    let nu = high_low_volatility(quotes)?;
    let off_calendar = split.off.iter().map(|t| (t.investor_id.clone(), t.date)).collect();
    Ok(AssetData { calendar, series, nu, counts, off_calendar })
}

/// Full analysis of one asset. `trades` holds this ticker's trades after
/// the automatic-operation filter; `input` is the count before it.
pub fn analyze_asset(
    quotes: &QuoteSeries,
    trades: &[TradeRecord],
    input: usize,
    cfg: &AnalysisConfig,
    exec: Execution,
) -> Result<(AssetReport, BTreeMap<String, String>)> {
    let ticker = quotes.ticker.as_str();
    let seed = |stage: &str| stage_seed(cfg.seed, ticker, stage);
    let data = prepare_asset(quotes, trades, input)?;
    let AssetData { calendar, series, nu, counts, .. } = &data;
    let mut tables = BTreeMap::new();
    tables.insert("off_calendar.tsv".to_string(), data.off_calendar_tsv());
    tables.insert("activity.tsv".to_string(), activity_tsv(series.values(), calendar));

    let totals: Vec<f64> = series.values().map(|s| s.total_ops() as f64).collect();
    let opds: Vec<f64> = series.values().map(|s| s.opd()).collect();
    if !totals.is_empty() {
        tables.insert("ccdf_total_ops.tsv".to_string(), ccdf_tsv(&totals)?);
        tables.insert("ccdf_opd.tsv".to_string(), ccdf_tsv(&opds)?);
    }
    let sweep = hill_sweep(&totals, &sweep_ks(totals.len(), cfg.hill_sweep_points)).unwrap_or_default();
    tables.insert("hill_sweep.tsv".to_string(), hill_sweep_tsv(&sweep));

    let meso = meso_series(ticker, calendar.len(), series.values());
    tables.insert("meso.tsv".to_string(), daily_tsv(calendar, nu, Some(&meso)));
    let meso_report = MesoReport {
        long: meso_long_correlation(&meso, nu).into(),
        short: meso_short_correlation(&meso, nu, cfg.ma_window, cfg.ma_kind).into(),
    };

    let build = build_sync_network(ticker, series, &cfg.sync_config(seed("syncnet"), exec))?;
    let polar = analyze_polarization(series.values(), nu, &cfg.polarization_config(seed("polarization"), exec));
    let scores = polar.as_ref().map(|p| p.population.scores.as_slice()).unwrap_or(&[]);
    let (network, _) = attach_scores(&build.network, scores);
    tables.insert("edges.tsv".to_string(), network.edges_tsv());
    tables.insert("nodes.tsv".to_string(), network.nodes_tsv());

    let partition = louvain(&network, seed("louvain"));
    if let Ok(p) = &partition {
        tables.insert("partition.tsv".to_string(), partition_tsv(&network, p));
    }
    let network_report = NetworkReport {
        nodes: network.nodes.len(),
        edges: network.edges.len(),
        isolated: build.diagnostics.isolated_nodes,
        modularity: partition.as_ref().map(|p| p.modularity).map_err(Clone::clone).into(),
        communities: partition.as_ref().ok().map(|p| p.communities()),
        diagnostics: build.diagnostics,
    };
    let assort = AssortativityReport {
        rho_ov: rho_assortativity(&network, cfg, seed("assortativity.rho_ov"), exec).into(),
        opd: opd_assortativity(&network, cfg, seed("assortativity.opd"), exec).into(),
    };
    if let Ok(p) = &polar {
        tables.insert("scores.tsv".to_string(), p.population.scores_tsv());
        tables.insert("histogram.tsv".to_string(), p.histogram.tsv());
        tables.insert("scatter.tsv".to_string(), p.scatter_tsv());
    }

    let retention = if input == 0 { 1.0 } else { trades.len() as f64 / input as f64 };
    let report = AssetReport {
        ticker: ticker.to_string(),
        calendar_days: calendar.len(),
        trades: *counts,
        retention_fraction: retention,
        investors: series.len(),
        tail_fit: tail_fit(&totals, cfg.hill_k).into(),
        opd_tail_fit: tail_fit(&opds, cfg.hill_k).into(),
        meso: meso_report,
        network: network_report,
        assortativity: assort,
        polarization: polar.map(|p| p.summary).into(),
    };
    Ok((report, tables))
}

/// Applies the automatic-operation filter and groups the retained trades
/// by quote series: `(quotes, trades before the filter, retained trades)`.
/// Trades of tickers without quotes are ignored.
pub fn asset_inputs<'a>(
    trades: &[TradeRecord],
    quotes: &'a [QuoteSeries],
    policy: AutoPolicy,
) -> Result<Vec<(&'a QuoteSeries, usize, Vec<TradeRecord>)>> {
    let filtered = filter_automatic(trades, policy)?;
    let mut by_ticker: BTreeMap<&str, Vec<TradeRecord>> = BTreeMap::new();
    for t in filtered.retained {
        if let Some(q) = quotes.iter().find(|q| q.ticker == t.ticker) {
            by_ticker.entry(q.ticker.as_str()).or_default().push(t);
        }
    }
    Ok(quotes
        .iter()
        .map(|q| {
            let input = filtered.retention.get(&q.ticker).map_or(0, |r| r.before);
            (q, input, by_ticker.remove(q.ticker.as_str()).unwrap_or_default())
        })
        .collect())
}

/// Runs the whole chain for every quote series. A failing asset is
/// recorded in the report and does not stop the others; only an invalid
/// filter configuration is fatal.
pub fn run_report(trades: &[TradeRecord], quotes: &[QuoteSeries], cfg: &AnalysisConfig, exec: Execution) -> Result<ReportOutput> {
    if quotes.is_empty() {
        return Err(Error::EmptyInput("no quote series"));
    }
    let mut tickers: Vec<&str> = quotes.iter().map(|q| q.ticker.as_str()).collect();
    tickers.sort_unstable();
    if tickers.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("duplicate quote series for one ticker".into()));
    }
    let inputs = asset_inputs(trades, quotes, cfg.auto_policy)?;
    let results = map_slice(exec, &inputs, |(q, input, own)| analyze_asset(q, own, *input, cfg, exec));
    let mut assets = BTreeMap::new();
    let mut tables = BTreeMap::new();
    for (q, r) in quotes.iter().zip(results) {
        match r {
            Ok((report, t)) => {
                for (name, body) in t {
                    tables.insert(format!("{}/{}", q.ticker, name), body);
                }
                assets.insert(q.ticker.clone(), Outcome::Value(report));
            }
            Err(e) => {
                assets.insert(q.ticker.clone(), Outcome::Error(e.to_string()));
            }
        }
    }
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION.to_string(),
        generator: Generator { name: env!("CARGO_PKG_NAME").to_string(), version: env!("CARGO_PKG_VERSION").to_string() },
        run: RunMetadata { seed: cfg.seed, config_digest: cfg.digest(), config: cfg.clone(), defaults: AnalysisConfig::default() },
        assets,
    };
    Ok(ReportOutput { report, tables })
}
