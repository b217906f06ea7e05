//! `volsync`: batch front end for the activity, network and polarization analysis.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use volsync_core::activity::{hill_sweep, sweep_ks};
use volsync_core::ingest::{build_calendar, parse_quotes, parse_trades, write_quotes, write_trades, AutoPolicy, QuoteSeries, TradeFormat, TradeRecord};
use volsync_core::netmetrics::Discretization;
use volsync_core::polarization::{analyze_polarization, NuMoments};
use volsync_core::report::{
    activity_tsv, analyze_asset, asset_inputs, ccdf_tsv, daily_tsv, hill_sweep_tsv, prepare_asset, run_report, stage_seed, tail_fit,
    AnalysisConfig, Outcome,
};
use volsync_core::synth::{generate, Ar1, CommunitySpec, SynthConfig};
use volsync_core::syncnet::{build_sync_network, ShuffleMode};
use volsync_core::volatility::{high_low_volatility, meso_long_correlation, meso_series, meso_short_correlation, MovingAverage};
use volsync_core::Execution;

const THREADS_VAR: &str = "VOLSYNC_THREADS";

#[derive(Parser)]
#[command(name = "volsync", version, about = "Investor activity synchronization, volatility polarization and assortativity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check trades and quotes files; exits non-zero on any rejected row.
    Validate(Common),
    /// Activity series, CCDFs and Hill tail fits.
    Activity(Common),
    /// Daily high-low volatility (quotes only).
    Volatility(Common),
    /// Aggregate activity against volatility (long and short correlations).
    Meso(Common),
    /// Permutation-filtered synchronization network.
    Syncnet(Common),
    /// Communities and assortativity with null models.
    Metrics(Common),
    /// Per-investor volatility polarization and shuffled baseline.
    Polarization(Common),
    /// Generate a synthetic market (trades, quotes and planted truth).
    Synth(SynthArgs),
    /// Full chain: JSON report plus every table.
    Report(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ShuffleArg {
    Both,
    One,
}

#[derive(Clone, Copy, ValueEnum)]
enum MovingAverageArg {
    Trailing,
    Centered,
}

#[derive(Clone, Copy, ValueEnum)]
enum MomentsArg {
    Trading,
    Global,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiscretizationArg {
    Truncate,
    Floor,
}

#[derive(Args, Clone)]
struct Common {
    /// Trades file (columns investor_id,date,ticker,shares,price,side[,is_auto]).
    #[arg(long)]
    trades: Option<PathBuf>,
    /// Quotes file as [TICKER=]PATH; repeatable. Without a prefix the ticker
    /// is --ticker (single file) or the file stem.
    #[arg(long)]
    quotes: Vec<String>,
    /// Restrict the analysis to one ticker.
    #[arg(long)]
    ticker: Option<String>,
    /// Field delimiter of input files.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Automatic-operation filter: none | flag | threshold:K.
    #[arg(long, default_value = "none")]
    auto_policy: AutoPolicy,
    #[arg(long, default_value_t = 20)]
    min_ops: u64,
    #[arg(long, default_value_t = 20)]
    min_days: usize,
    #[arg(long, default_value_t = 999)]
    shuffles: usize,
    #[arg(long, default_value_t = 0.01)]
    p_level: f64,
    #[arg(long, value_enum, default_value = "both")]
    shuffle_mode: ShuffleArg,
    /// Run every shuffle even when the decision is already fixed.
    #[arg(long)]
    no_early_stop: bool,
    /// Null-model replicas.
    #[arg(long, default_value_t = 1000)]
    replicas: usize,
    /// Successful double-edge swaps per edge in each rewiring replica.
    #[arg(long, default_value_t = 10)]
    swap_factor: usize,
    /// Weight edges by their correlation in assortativity.
    #[arg(long)]
    weighted: bool,
    #[arg(long, value_enum, default_value = "truncate")]
    discretization: DiscretizationArg,
    /// Cap on the integer operations-per-day attribute.
    #[arg(long)]
    opd_cap: Option<i64>,
    #[arg(long, default_value_t = 5)]
    ma_window: usize,
    #[arg(long, value_enum, default_value = "trailing")]
    ma_kind: MovingAverageArg,
    /// Days supplying the volatility moments of the polarization score.
    #[arg(long, value_enum, default_value = "trading")]
    nu_moments: MomentsArg,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Replicas of the shuffled polarization baseline.
    #[arg(long, default_value_t = 100)]
    polar_replicas: usize,
    /// Hill k (default: 10% of the sample).
    #[arg(long)]
    hill_k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "volsync-out")]
    out_dir: PathBuf,
}

impl Common {
    fn config(&self) -> AnalysisConfig {
        AnalysisConfig {
            auto_policy: self.auto_policy,
            min_ops: self.min_ops,
            min_days: self.min_days,
            shuffles: self.shuffles,
            p_level: self.p_level,
            shuffle_mode: match self.shuffle_mode {
                ShuffleArg::Both => ShuffleMode::Both,
                ShuffleArg::One => ShuffleMode::One,
            },
            early_stop: !self.no_early_stop,
            replicas: self.replicas,
            swap_factor: self.swap_factor,
            weighted_assortativity: self.weighted,
            discretization: match self.discretization {
                DiscretizationArg::Truncate => Discretization::Truncate,
                DiscretizationArg::Floor => Discretization::Floor,
            },
            opd_cap: self.opd_cap,
            ma_window: self.ma_window,
            ma_kind: match self.ma_kind {
                MovingAverageArg::Trailing => MovingAverage::Trailing,
                MovingAverageArg::Centered => MovingAverage::Centered,
            },
            nu_moments: match self.nu_moments {
                MomentsArg::Trading => NuMoments::TradingDays,
                MomentsArg::Global => NuMoments::Global,
            },
            hist_bins: self.bins,
            polar_replicas: self.polar_replicas,
            hill_k: self.hill_k,
            seed: self.seed,
            ..AnalysisConfig::default()
        }
    }

    fn delimiter(&self) -> Result<u8> {
        u8::try_from(self.delimiter).context("delimiter must be a single ASCII character")
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    agents: usize,
    #[arg(long, default_value_t = 500)]
    days: usize,
    /// Tail index of the base-rate law.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.02)]
    base_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    beta_mean: f64,
    #[arg(long, default_value_t = 0.2)]
    beta_sd: f64,
    /// Mean of log-volatility.
    #[arg(long, default_value_t = -3.912)]
    vol_mean: f64,
    #[arg(long, default_value_t = 0.9)]
    vol_phi: f64,
    #[arg(long, default_value_t = 0.25)]
    vol_sigma: f64,
    /// Planted community SIZE[:COUPLING[:RATE]]; repeatable.
    #[arg(long)]
    community: Vec<String>,
    #[arg(long, default_value_t = 0.2)]
    gate_prob: f64,
    #[arg(long, default_value = "SYN")]
    ticker: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "volsync-out")]
    out_dir: PathBuf,
}

fn parse_community(s: &str) -> Result<CommunitySpec> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.is_empty() || parts.len() > 3 {
        bail!("community must be SIZE[:COUPLING[:RATE]], got '{s}'");
    }
    let size = parts[0].parse().with_context(|| format!("bad community size in '{s}'"))?;
    let coupling = parts.get(1).map(|c| c.parse()).transpose().with_context(|| format!("bad coupling in '{s}'"))?.unwrap_or(1.0);
    let rate = parts.get(2).map(|r| r.parse()).transpose().with_context(|| format!("bad rate in '{s}'"))?;
    Ok(CommunitySpec { size, coupling, rate })
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, &s)
}

fn quote_specs(common: &Common) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for spec in &common.quotes {
        let (ticker, path) = match spec.split_once('=') {
            Some((t, p)) if !t.is_empty() => (t.to_string(), PathBuf::from(p)),
            _ => {
                let path = PathBuf::from(spec);
                let ticker = match (&common.ticker, common.quotes.len()) {
                    (Some(t), 1) => t.clone(),
                    _ => path.file_stem().and_then(|s| s.to_str()).context("quotes path has no file stem")?.to_string(),
                };
                (ticker, path)
            }
        };
        out.push((ticker, path));
    }
    if let Some(t) = &common.ticker {
        out.retain(|(ticker, _)| ticker == t);
        if out.is_empty() {
            bail!("no quotes given for ticker {t}");
        }
    }
    Ok(out)
}

fn load_quotes(common: &Common) -> Result<Vec<QuoteSeries>> {
    let specs = quote_specs(common)?;
    if specs.is_empty() {
        bail!("at least one --quotes file is required");
    }
    let delim = common.delimiter()?;
    specs
        .into_iter()
        .map(|(ticker, path)| {
            let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            parse_quotes(BufReader::new(file), &ticker, delim).with_context(|| format!("{}", path.display()))
        })
        .collect()
}

struct LoadedTrades {
    records: Vec<TradeRecord>,
    rejects: String,
}

fn load_trades(common: &Common) -> Result<LoadedTrades> {
    let path = common.trades.as_ref().context("--trades is required")?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let format = TradeFormat { delimiter: common.delimiter()?, ..TradeFormat::default() };
    let parsed = parse_trades(BufReader::new(file), &format).with_context(|| format!("{}", path.display()))?;
    if !parsed.rejects.is_empty() {
        eprintln!("{}: {} rows rejected", path.display(), parsed.rejects.len());
    }
    Ok(LoadedTrades { rejects: parsed.reject_report(), records: parsed.records })
}

fn execution() -> Result<Execution> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).with_context(|| format!("{THREADS_VAR} must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    Ok(Execution::Parallel)
}

fn validate(common: &Common) -> Result<ExitCode> {
    let mut problems = 0;
    let quotes = if common.quotes.is_empty() { Vec::new() } else { load_quotes(common)? };
    for q in &quotes {
        println!("{}: {} quote days, {} .. {}", q.ticker, q.len(), q.days.first().map_or("-".into(), |d| d.to_string()), q.days.last().map_or("-".into(), |d| d.to_string()));
    }
    if common.trades.is_some() {
        let trades = load_trades(common)?;
        println!("trades: {} valid rows, {} rejected", trades.records.len(), trades.rejects.lines().count());
        if !trades.rejects.is_empty() {
            print!("{}", trades.rejects);
            problems += 1;
        }
        for q in &quotes {
            let split = build_calendar(q)?.split(&trades.records);
            println!("{}: {} trades on calendar, {} off calendar", q.ticker, split.on.len(), split.off.len());
            for t in &split.off {
                println!("off-calendar: {} {} {}", t.investor_id, t.ticker, t.date);
            }
        }
    } else if quotes.is_empty() {
        bail!("nothing to validate: pass --trades and/or --quotes");
    }
    Ok(if problems > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

/// Runs `stage` on every asset, writing `TICKER/...` files. Returns the
/// number of failed assets.
fn per_asset<F>(common: &Common, needs_trades: bool, stage: F) -> Result<ExitCode>
where
    F: Fn(&QuoteSeries, usize, &[TradeRecord]) -> Result<BTreeMap<String, String>>,
{
    let quotes = load_quotes(common)?;
    let trades = if needs_trades { load_trades(common)?.records } else { Vec::new() };
    let mut failed = 0;
    for (q, input, own) in asset_inputs(&trades, &quotes, common.auto_policy)? {
        match stage(q, input, &own) {
            Ok(files) => {
                for (name, body) in files {
                    write_file(&common.out_dir.join(&q.ticker).join(name), &body)?;
                }
            }
            Err(e) => {
                eprintln!("{}: {e:#}", q.ticker);
                failed += 1;
            }
        }
    }
    Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn json_string(v: serde_json::Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn activity_stage(common: &Common, q: &QuoteSeries, input: usize, trades: &[TradeRecord]) -> Result<BTreeMap<String, String>> {
    let cfg = common.config();
    let data = prepare_asset(q, trades, input)?;
    let totals: Vec<f64> = data.series.values().map(|s| s.total_ops() as f64).collect();
    let opds: Vec<f64> = data.series.values().map(|s| s.opd()).collect();
    let mut files = BTreeMap::new();
    files.insert("activity.tsv".into(), activity_tsv(data.series.values(), &data.calendar));
    files.insert("off_calendar.tsv".into(), data.off_calendar_tsv());
    if !totals.is_empty() {
        files.insert("ccdf_total_ops.tsv".into(), ccdf_tsv(&totals)?);
        files.insert("ccdf_opd.tsv".into(), ccdf_tsv(&opds)?);
    }
    let sweep = hill_sweep(&totals, &sweep_ks(totals.len(), cfg.hill_sweep_points)).unwrap_or_default();
    files.insert("hill_sweep.tsv".into(), hill_sweep_tsv(&sweep));
    files.insert(
        "activity.json".into(),
        json_string(json!({
            "ticker": q.ticker,
            "trades": data.counts,
            "investors": data.series.len(),
            "tail_fit": Outcome::from(tail_fit(&totals, cfg.hill_k)),
            "opd_tail_fit": Outcome::from(tail_fit(&opds, cfg.hill_k)),
        }))?,
    );
    Ok(files)
}

fn meso_stage(common: &Common, q: &QuoteSeries, input: usize, trades: &[TradeRecord]) -> Result<BTreeMap<String, String>> {
    let cfg = common.config();
    let data = prepare_asset(q, trades, input)?;
    let meso = meso_series(&q.ticker, data.calendar.len(), data.series.values());
    let mut files = BTreeMap::new();
    files.insert("meso.tsv".into(), daily_tsv(&data.calendar, &data.nu, Some(&meso)));
    files.insert(
        "meso.json".into(),
        json_string(json!({
            "ticker": q.ticker,
            "long": Outcome::from(meso_long_correlation(&meso, &data.nu)),
            "short": Outcome::from(meso_short_correlation(&meso, &data.nu, cfg.ma_window, cfg.ma_kind)),
        }))?,
    );
    Ok(files)
}

fn syncnet_stage(common: &Common, q: &QuoteSeries, input: usize, trades: &[TradeRecord], exec: Execution) -> Result<BTreeMap<String, String>> {
    let cfg = common.config();
    let data = prepare_asset(q, trades, input)?;
    let build = build_sync_network(&q.ticker, &data.series, &cfg.sync_config(stage_seed(cfg.seed, &q.ticker, "syncnet"), exec))?;
    let mut files = BTreeMap::new();
    files.insert("edges.tsv".into(), build.network.edges_tsv());
    files.insert("nodes.tsv".into(), build.network.nodes_tsv());
    files.insert("syncnet.json".into(), json_string(json!({ "ticker": q.ticker, "diagnostics": build.diagnostics }))?);
    Ok(files)
}

fn polarization_stage(common: &Common, q: &QuoteSeries, input: usize, trades: &[TradeRecord], exec: Execution) -> Result<BTreeMap<String, String>> {
    let cfg = common.config();
    let data = prepare_asset(q, trades, input)?;
    let pc = cfg.polarization_config(stage_seed(cfg.seed, &q.ticker, "polarization"), exec);
    let an = analyze_polarization(data.series.values(), &data.nu, &pc)?;
    let mut files = BTreeMap::new();
    files.insert("scores.tsv".into(), an.population.scores_tsv());
    files.insert("histogram.tsv".into(), an.histogram.tsv());
    files.insert("scatter.tsv".into(), an.scatter_tsv());
    files.insert(
        "polarization.json".into(),
        json_string(json!({ "ticker": q.ticker, "summary": an.summary, "excluded": an.population.excluded }))?,
    );
    Ok(files)
}

fn metrics_stage(common: &Common, q: &QuoteSeries, input: usize, trades: &[TradeRecord], exec: Execution) -> Result<BTreeMap<String, String>> {
    let (report, tables) = analyze_asset(q, trades, input, &common.config(), exec)?;
    let mut files: BTreeMap<String, String> =
        tables.into_iter().filter(|(name, _)| matches!(name.as_str(), "edges.tsv" | "nodes.tsv" | "partition.tsv")).collect();
    files.insert(
        "metrics.json".into(),
        json_string(json!({ "ticker": q.ticker, "network": report.network, "assortativity": report.assortativity }))?,
    );
    Ok(files)
}

fn report(common: &Common, exec: Execution) -> Result<ExitCode> {
    let quotes = load_quotes(common)?;
    let trades = load_trades(common)?;
    let out = run_report(&trades.records, &quotes, &common.config(), exec)?;
    write_file(&common.out_dir.join("report.json"), &out.report.to_json())?;
    for (name, body) in &out.tables {
        write_file(&common.out_dir.join(name), body)?;
    }
    if !trades.rejects.is_empty() {
        write_file(&common.out_dir.join("rejects.txt"), &trades.rejects)?;
    }
    let failed = out.report.failed_assets();
    println!("{} assets analysed, {} failed; report at {}", out.report.assets.len() - failed.len(), failed.len(), common.out_dir.join("report.json").display());
    for (ticker, err) in &failed {
        eprintln!("{ticker}: {err}");
    }
    Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn synth(args: &SynthArgs) -> Result<ExitCode> {
    let cfg = SynthConfig {
        n_agents: args.agents,
        n_days: args.days,
        activity_tail_alpha: args.alpha,
        base_rate: args.base_rate,
        beta_mean: args.beta_mean,
        beta_sd: args.beta_sd,
        vol: Ar1 { mean: args.vol_mean, phi: args.vol_phi, sigma: args.vol_sigma },
        planted_communities: args.community.iter().map(|c| parse_community(c)).collect::<Result<_>>()?,
        gate_on_prob: args.gate_prob,
        ticker: args.ticker.clone(),
        seed: args.seed,
        ..SynthConfig::default()
    };
    let m = generate(&cfg)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let trades_path = args.out_dir.join("trades.csv");
    let quotes_path = args.out_dir.join(format!("{}.csv", cfg.ticker));
    write_trades(File::create(&trades_path)?, &m.trades, &TradeFormat::default(), false)?;
    write_quotes(File::create(&quotes_path)?, &m.quotes, &m.close)?;
    write_json(&args.out_dir.join("truth.json"), &json!({ "config": cfg, "truth": m.truth }))?;
    println!("{} trades by {} agents over {} days", m.trades.len(), cfg.n_agents, cfg.n_days);
    println!("wrote {}, {} and truth.json", trades_path.display(), quotes_path.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Synth(args) => synth(args),
        Command::Validate(c) => validate(c),
        Command::Volatility(c) => per_asset(c, false, |q, _, _| {
            let cal = build_calendar(q)?;
            let nu = high_low_volatility(q)?;
            Ok(BTreeMap::from([("volatility.tsv".to_string(), daily_tsv(&cal, &nu, None))]))
        }),
        Command::Activity(c) => per_asset(c, true, |q, i, t| activity_stage(c, q, i, t)),
        Command::Meso(c) => per_asset(c, true, |q, i, t| meso_stage(c, q, i, t)),
        Command::Syncnet(c) => {
            let exec = execution()?;
            per_asset(c, true, |q, i, t| syncnet_stage(c, q, i, t, exec))
        }
        Command::Polarization(c) => {
            let exec = execution()?;
            per_asset(c, true, |q, i, t| polarization_stage(c, q, i, t, exec))
        }
        Command::Metrics(c) => {
            let exec = execution()?;
            per_asset(c, true, |q, i, t| metrics_stage(c, q, i, t, exec))
        }
        Command::Report(c) => {
            let exec = execution()?;
            report(c, exec)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
