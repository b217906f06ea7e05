//! Trade and quote ingestion.
//!
//! Trades arrive as delimiter-separated text with a header row. Malformed
//! rows are rejected individually (with their line number); a missing
//! mandatory column aborts the whole file. Quote files are validated
//! strictly: any bad row is fatal because the trading calendar is derived
//! from them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    fn parse(s: &str) -> Option<Side> {
        match s.trim().to_ascii_lowercase().as_str() {
            "buy" | "b" => Some(Side::Buy),
            "sell" | "s" => Some(Side::Sell),
            _ => None,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        })
    }
}

/// One buy or sell operation by one investor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub investor_id: String,
    pub date: NaiveDate,
    pub ticker: String,
    pub shares: u64,
    pub price: f64,
    pub side: Side,
    pub is_auto: Option<bool>,
}

/// Column names of a trades file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeColumns {
    pub investor_id: String,
    pub date: String,
    pub ticker: String,
    pub shares: String,
    pub price: String,
    pub side: String,
    pub is_auto: String,
}

impl Default for TradeColumns {
    fn default() -> Self {
        Self {
            investor_id: "investor_id".into(),
            date: "date".into(),
            ticker: "ticker".into(),
            shares: "shares".into(),
            price: "price".into(),
            side: "side".into(),
            is_auto: "is_auto".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeFormat {
    pub delimiter: u8,
    pub columns: TradeColumns,
}

impl Default for TradeFormat {
    fn default() -> Self {
        Self { delimiter: b',', columns: TradeColumns::default() }
    }
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedTrades {
    pub records: Vec<TradeRecord>,
    pub rejects: Vec<Reject>,
    pub has_auto_column: bool,
}

impl ParsedTrades {
    /// Reject report, one `line <n>: <reason>` per line.
    pub fn reject_report(&self) -> String {
        self.rejects.iter().map(|r| format!("{r}\n")).collect()
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).ok()
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" => Some(true),
        "false" | "0" | "no" | "n" | "" => Some(false),
        _ => None,
    }
}

struct TradeIdx {
    investor_id: usize,
    date: usize,
    ticker: usize,
    shares: usize,
    price: usize,
    side: usize,
    is_auto: Option<usize>,
}

fn parse_trade_row(row: &csv::StringRecord, idx: &TradeIdx) -> std::result::Result<TradeRecord, String> {
    let field = |i: usize| row.get(i).map(str::trim).ok_or_else(|| "missing field".to_string());
    let investor_id = field(idx.investor_id)?;
    if investor_id.is_empty() {
        return Err("empty investor_id".into());
    }
    let date_s = field(idx.date)?;
    let date = parse_date(date_s).ok_or_else(|| format!("bad date '{date_s}'"))?;
    let ticker = field(idx.ticker)?;
    if ticker.is_empty() {
        return Err("empty ticker".into());
    }
    let shares_s = field(idx.shares)?;
    let shares: i64 = shares_s.parse().map_err(|_| format!("bad shares '{shares_s}'"))?;
    if shares <= 0 {
        return Err("non-positive shares".into());
    }
    let price_s = field(idx.price)?;
    let price: f64 = price_s.parse().map_err(|_| format!("bad price '{price_s}'"))?;
    if !price.is_finite() {
        return Err(format!("bad price '{price_s}'"));
    }
    if price <= 0.0 {
        return Err("non-positive price".into());
    }
    let side_s = field(idx.side)?;
    let side = Side::parse(side_s).ok_or_else(|| format!("bad side '{side_s}'"))?;
    let is_auto = match idx.is_auto {
        Some(i) => {
            let s = field(i)?;
            Some(parse_flag(s).ok_or_else(|| format!("bad is_auto '{s}'"))?)
        }
        None => None,
    };
    Ok(TradeRecord {
        investor_id: investor_id.to_string(),
        date,
        ticker: ticker.to_string(),
        shares: shares as u64,
        price,
        side,
        is_auto,
    })
}

/// Parses a trades file. Row-level problems become [`Reject`]s; a missing
/// mandatory column is fatal.
pub fn parse_trades<R: Read>(source: R, format: &TradeFormat) -> Result<ParsedTrades> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .flexible(true)
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let cols = &format.columns;
    let need = |name: &str| column_index(&headers, name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let idx = TradeIdx {
        investor_id: need(&cols.investor_id)?,
        date: need(&cols.date)?,
        ticker: need(&cols.ticker)?,
        shares: need(&cols.shares)?,
        price: need(&cols.price)?,
        side: need(&cols.side)?,
        is_auto: column_index(&headers, &cols.is_auto),
    };

    let mut out = ParsedTrades { has_auto_column: idx.is_auto.is_some(), ..Default::default() };
    let mut row = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                let line = row.position().map_or(line, |p| p.line());
                if row.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                if row.len() != headers.len() {
                    out.rejects.push(Reject {
                        line,
                        reason: format!("expected {} fields, found {}", headers.len(), row.len()),
                    });
                    continue;
                }
                match parse_trade_row(&row, &idx) {
                    Ok(rec) => out.records.push(rec),
                    Err(reason) => out.rejects.push(Reject { line, reason }),
                }
            }
            Err(e) => out.rejects.push(Reject { line, reason: e.to_string() }),
        }
    }
    Ok(out)
}

/// Writes trades in the canonical layout read by [`parse_trades`].
pub fn write_trades<W: Write>(sink: W, records: &[TradeRecord], format: &TradeFormat, with_auto: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(format.delimiter).from_writer(sink);
    let c = &format.columns;
    let mut header = vec![&c.investor_id, &c.date, &c.ticker, &c.shares, &c.price, &c.side];
    if with_auto {
        header.push(&c.is_auto);
    }
    w.write_record(header)?;
    for r in records {
        let mut fields = vec![
            r.investor_id.clone(),
            r.date.format(DATE_FORMAT).to_string(),
            r.ticker.clone(),
            r.shares.to_string(),
            r.price.to_string(),
            r.side.to_string(),
        ];
        if with_auto {
            fields.push(r.is_auto.unwrap_or(false).to_string());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// How automatic (non-human) operations are identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "max_ops")]
pub enum AutoPolicy {
    #[default]
    None,
    /// Drop rows whose `is_auto` flag is set.
    Flag,
    /// Drop every investor-asset-day with more than this many operations.
    Threshold(usize),
}

impl std::str::FromStr for AutoPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(AutoPolicy::None),
            "flag" => Ok(AutoPolicy::Flag),
            other => match other.strip_prefix("threshold:") {
                Some(k) => k.parse().map(AutoPolicy::Threshold).map_err(|_| format!("bad threshold '{k}'")),
                None => Err(format!("unknown policy '{other}' (none | flag | threshold:K)")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retention {
    pub before: usize,
    pub after: usize,
}

impl Retention {
    pub fn fraction(&self) -> f64 {
        if self.before == 0 {
            1.0
        } else {
            self.after as f64 / self.before as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub retained: Vec<TradeRecord>,
    /// Retention per ticker.
    pub retention: BTreeMap<String, Retention>,
}

pub fn filter_automatic(trades: &[TradeRecord], policy: AutoPolicy) -> Result<FilterOutcome> {
    let keep: Vec<bool> = match policy {
        AutoPolicy::None => vec![true; trades.len()],
        AutoPolicy::Flag => trades
            .iter()
            .map(|t| t.is_auto.map(|a| !a).ok_or(Error::MissingAutoFlag))
            .collect::<Result<_>>()?,
        AutoPolicy::Threshold(k) => {
            let mut per_day: HashMap<(&str, &str, NaiveDate), usize> = HashMap::new();
            for t in trades {
                *per_day.entry((&t.investor_id, &t.ticker, t.date)).or_default() += 1;
            }
            trades
                .iter()
                .map(|t| per_day[&(t.investor_id.as_str(), t.ticker.as_str(), t.date)] <= k)
                .collect()
        }
    };
    let mut retention: BTreeMap<String, Retention> = BTreeMap::new();
    let mut retained = Vec::with_capacity(trades.len());
    for (t, k) in trades.iter().zip(keep) {
        let e = retention.entry(t.ticker.clone()).or_insert(Retention { before: 0, after: 0 });
        e.before += 1;
        if k {
            e.after += 1;
            retained.push(t.clone());
        }
    }
    Ok(FilterOutcome { retained, retention })
}

/// Daily open/high/low quotes of one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSeries {
    pub ticker: String,
    pub days: Vec<NaiveDate>,
    pub open: Vec<f64>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
}

fn check_bar(open: f64, high: f64, low: f64) -> std::result::Result<(), String> {
    if !(open.is_finite() && high.is_finite() && low.is_finite()) {
        return Err("non-finite price".into());
    }
    if open <= 0.0 || high <= 0.0 || low <= 0.0 {
        return Err("non-positive price".into());
    }
    if high < low {
        return Err(format!("high {high} < low {low}"));
    }
    if open < low || open > high {
        return Err(format!("open {open} outside [low {low}, high {high}]"));
    }
    Ok(())
}

impl QuoteSeries {
    /// Builds a validated series. Errors carry the 0-based bar index as `line`.
    pub fn new(ticker: impl Into<String>, days: Vec<NaiveDate>, open: Vec<f64>, high: Vec<f64>, low: Vec<f64>) -> Result<Self> {
        let n = days.len();
        if open.len() != n || high.len() != n || low.len() != n {
            return Err(Error::InvalidParameter("quote columns differ in length".into()));
        }
        for t in 0..n {
            check_bar(open[t], high[t], low[t]).map_err(|reason| Error::BadRow { line: t as u64, reason })?;
            if t > 0 && days[t] <= days[t - 1] {
                return Err(Error::BadRow { line: t as u64, reason: format!("date {} not after {}", days[t], days[t - 1]) });
            }
        }
        Ok(Self { ticker: ticker.into(), days, open, high, low })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

/// Parses a quotes file with columns `date, open, high, low[, close]`.
/// Any invalid row is fatal and reported with its file line number.
pub fn parse_quotes<R: Read>(source: R, ticker: &str, delimiter: u8) -> Result<QuoteSeries> {
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let need = |name: &str| column_index(&headers, name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let (di, oi, hi, li) = (need("date")?, need("open")?, need("high")?, need("low")?);
    let ci = column_index(&headers, "close");

    let (mut days, mut open, mut high, mut low) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| Error::BadRow { line, reason };
        let get = |i: usize| row.get(i).map(str::trim).ok_or_else(|| bad("missing field".into()));
        let num = |i: usize, name: &str| -> Result<f64> {
            let s = get(i)?;
            s.parse::<f64>().map_err(|_| bad(format!("bad {name} '{s}'")))
        };
        let ds = get(di)?;
        let d = parse_date(ds).ok_or_else(|| bad(format!("bad date '{ds}'")))?;
        let (o, h, l) = (num(oi, "open")?, num(hi, "high")?, num(li, "low")?);
        check_bar(o, h, l).map_err(bad)?;
        if let Some(ci) = ci {
            let c = num(ci, "close")?;
            if c < l || c > h {
                return Err(bad(format!("close {c} outside [low {l}, high {h}]")));
            }
        }
        if let Some(prev) = days.last() {
            if d <= *prev {
                return Err(bad(format!("date {d} not after {prev}")));
            }
        }
        days.push(d);
        open.push(o);
        high.push(h);
        low.push(l);
    }
    Ok(QuoteSeries { ticker: ticker.to_string(), days, open, high, low })
}

/// Writes quotes with a `close` column; `close` values are supplied by the caller.
pub fn write_quotes<W: Write>(sink: W, quotes: &QuoteSeries, close: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["date", "open", "high", "low", "close"])?;
    for t in 0..quotes.len() {
        w.write_record([
            quotes.days[t].format(DATE_FORMAT).to_string(),
            quotes.open[t].to_string(),
            quotes.high[t].to_string(),
            quotes.low[t].to_string(),
            close[t].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ordered trading days of one asset with an ordinal index.
#[derive(Debug, Clone, PartialEq)]
pub struct TradingCalendar {
    pub ticker: String,
    pub days: Vec<NaiveDate>,
    index: HashMap<NaiveDate, usize>,
}

impl TradingCalendar {
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.index.get(&date).copied()
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Splits trades of this calendar's ticker into on-calendar and
    /// off-calendar sets. Trades of other tickers are ignored.
    pub fn split<'a>(&self, trades: &'a [TradeRecord]) -> CalendarSplit<'a> {
        let mut split = CalendarSplit::default();
        for t in trades.iter().filter(|t| t.ticker == self.ticker) {
            if self.index.contains_key(&t.date) {
                split.on.push(t);
            } else {
                split.off.push(t);
            }
        }
        split
    }
}

#[derive(Debug, Default)]
pub struct CalendarSplit<'a> {
    pub on: Vec<&'a TradeRecord>,
    pub off: Vec<&'a TradeRecord>,
}

pub fn build_calendar(quotes: &QuoteSeries) -> Result<TradingCalendar> {
    if quotes.is_empty() {
        return Err(Error::EmptyQuotes(quotes.ticker.clone()));
    }
    let index = quotes.days.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    Ok(TradingCalendar { ticker: quotes.ticker.clone(), days: quotes.days.clone(), index })
}
