//! Synthetic market with planted parameters, plus small graph fixtures.
//!
//! Generation is a single sequential pass over one ChaCha stream, so the
//! output depends only on the configuration and seed.

use std::collections::HashSet;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::stream_rng;
use crate::ingest::{QuoteSeries, Side, TradeRecord};
use crate::netmetrics::endpoint_correlation;
use crate::stats::{mean, variance};
use crate::syncnet::{SyncNetwork, SyncNode};

/// Log-volatility AR(1): `x_t = mean + phi (x_{t-1} - mean) + sigma eps_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1 {
    pub mean: f64,
    pub phi: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommunitySpec {
    pub size: usize,
    /// Fraction of each member's intensity that follows the shared gate.
    pub coupling: f64,
    /// Base rate of members; `None` keeps their Pareto draw.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_agents: usize,
    pub n_days: usize,
    pub activity_tail_alpha: f64,
    /// Scale of the Pareto law of base rates (operations per day).
    pub base_rate: f64,
    /// Upper cap on base rates; bounds the size of a single agent's output.
    pub max_rate: Option<f64>,
    pub beta_mean: f64,
    pub beta_sd: f64,
    pub vol: Ar1,
    pub planted_communities: Vec<CommunitySpec>,
    /// Probability that a community gate is on for a day.
    pub gate_on_prob: f64,
    /// Active windows of independent agents cover between this fraction
    /// of the calendar and all of it. Community members are always active.
    pub min_active_fraction: f64,
    pub ticker: String,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_agents: 500,
            n_days: 500,
            activity_tail_alpha: 1.0,
            base_rate: 0.02,
            max_rate: Some(50.0),
            beta_mean: 0.3,
            beta_sd: 0.2,
            vol: Ar1 { mean: (0.02f64).ln(), phi: 0.9, sigma: 0.25 },
            planted_communities: Vec::new(),
            gate_on_prob: 0.2,
            min_active_fraction: 0.5,
            ticker: "SYN".into(),
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_agents < 2 {
            return bad(format!("n_agents must be >= 2, got {}", self.n_agents));
        }
        if self.n_days < 30 {
            return bad(format!("n_days must be >= 30, got {}", self.n_days));
        }
        if !(0.0..1.0).contains(&self.vol.phi) {
            return bad(format!("phi must lie in [0, 1), got {}", self.vol.phi));
        }
        if !(self.vol.sigma > 0.0) || !self.vol.mean.is_finite() {
            return bad("volatility sigma must be positive and mean finite".into());
        }
        if !(self.activity_tail_alpha > 0.0) || !(self.base_rate > 0.0) {
            return bad("tail index and base rate must be positive".into());
        }
        if self.max_rate.is_some_and(|m| !(m >= self.base_rate)) {
            return bad("max_rate must be at least base_rate".into());
        }
        if !(self.beta_sd >= 0.0) || !self.beta_mean.is_finite() {
            return bad("beta_sd must be non-negative and beta_mean finite".into());
        }
        if !(self.gate_on_prob > 0.0 && self.gate_on_prob <= 1.0) {
            return bad(format!("gate_on_prob must lie in (0, 1], got {}", self.gate_on_prob));
        }
        if !(self.min_active_fraction > 0.0 && self.min_active_fraction <= 1.0) {
            return bad("min_active_fraction must lie in (0, 1]".into());
        }
        let members: usize = self.planted_communities.iter().map(|c| c.size).sum();
        if members > self.n_agents {
            return bad(format!("communities need {members} agents, only {} configured", self.n_agents));
        }
        for c in &self.planted_communities {
            if c.size < 2 || !(0.0..=1.0).contains(&c.coupling) || c.rate.is_some_and(|r| !(r > 0.0)) {
                return bad(format!("invalid community {c:?}"));
            }
        }
        Ok(())
    }
}

/// Planted quantities, never consumed by the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub investor_ids: Vec<String>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    /// Inclusive active window of each agent, as calendar indices.
    pub windows: Vec<(usize, usize)>,
    pub community: Vec<Option<usize>>,
    pub gates: Vec<Vec<bool>>,
    pub nu: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthMarket {
    pub trades: Vec<TradeRecord>,
    pub quotes: QuoteSeries,
    pub close: Vec<f64>,
    pub truth: SynthTruth,
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

fn volatility_path(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let Ar1 { mean: mu, phi, sigma } = cfg.vol;
    let mut x = mu + sigma / (1.0 - phi * phi).sqrt() * std_normal(rng);
    (0..cfg.n_days)
        .map(|t| {
            if t > 0 {
                x = mu + phi * (x - mu) + sigma * std_normal(rng);
            }
            x.exp()
        })
        .collect()
}

/// Bars with `(high - low) / open = nu` and a slowly drifting open.
fn build_quotes(cfg: &SynthConfig, days: Vec<NaiveDate>, nu: &[f64], rng: &mut ChaCha8Rng) -> Result<(QuoteSeries, Vec<f64>)> {
    let n = nu.len();
    let (mut open, mut high, mut low, mut close) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut o = 20.0f64;
    for &v in nu {
        o *= (0.005 * std_normal(rng)).exp();
        // low = o (1 - v (1 - u)) stays positive for u >= 1 - 0.5 / v
        let u_min = (1.0 - 0.5 / v).max(0.0);
        let u = u_min + (1.0 - u_min) * rng.random::<f64>();
        let h = o + o * v * u;
        let l = h - o * v;
        open.push(o);
        high.push(h);
        low.push(l.min(o));
        close.push(l.min(o) + rng.random::<f64>() * (h - l.min(o)));
    }
    Ok((QuoteSeries::new(cfg.ticker.clone(), days, open, high, low)?, close))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthMarket> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let days = business_days(cfg.start_date, cfg.n_days);
    let nu = volatility_path(cfg, &mut rng);
    let (quotes, close) = build_quotes(cfg, days.clone(), &nu, &mut rng)?;
    let (m, sd) = (mean(&nu), variance(&nu).sqrt());
    if !(sd > 0.0) {
        return Err(Error::Degenerate("volatility path is constant".into()));
    }
    let z: Vec<f64> = nu.iter().map(|v| (v - m) / sd).collect();

    let mut community = vec![None; cfg.n_agents];
    let mut next = 0;
    for (c, spec) in cfg.planted_communities.iter().enumerate() {
        for slot in community.iter_mut().skip(next).take(spec.size) {
            *slot = Some(c);
        }
        next += spec.size;
    }

    let beta_law = Normal::new(cfg.beta_mean, cfg.beta_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut lambda = Vec::with_capacity(cfg.n_agents);
    let mut beta = Vec::with_capacity(cfg.n_agents);
    let mut windows = Vec::with_capacity(cfg.n_agents);
    for &comm in &community {
        let u: f64 = 1.0 - rng.random::<f64>();
        let mut l = cfg.base_rate * u.powf(-1.0 / cfg.activity_tail_alpha);
        if let Some(cap) = cfg.max_rate {
            l = l.min(cap);
        }
        if let Some(rate) = comm.and_then(|c| cfg.planted_communities[c].rate) {
            l = rate;
        }
        lambda.push(l);
        beta.push(beta_law.sample(&mut rng));
        let frac = cfg.min_active_fraction + (1.0 - cfg.min_active_fraction) * rng.random::<f64>();
        let len = ((frac * cfg.n_days as f64).ceil() as usize).clamp(1, cfg.n_days);
        let start = if comm.is_some() { 0 } else { rng.random_range(0..=cfg.n_days - len) };
        windows.push(if comm.is_some() { (0, cfg.n_days - 1) } else { (start, start + len - 1) });
    }
    let gates: Vec<Vec<bool>> = cfg
        .planted_communities
        .iter()
        .map(|_| (0..cfg.n_days).map(|_| rng.random::<f64>() < cfg.gate_on_prob).collect())
        .collect();

    let intensity = |i: usize, t: usize| -> f64 {
        let (s, e) = windows[i];
        if t < s || t > e {
            return 0.0;
        }
        let mut mu = lambda[i] * (1.0 + beta[i] * z[t]).max(0.0);
        if let Some(c) = community[i] {
            let k = cfg.planted_communities[c].coupling;
            let g = if gates[c][t] { 1.0 / cfg.gate_on_prob } else { 0.0 };
            mu *= (1.0 - k) + k * g;
        }
        mu
    };
    let any_positive = (0..cfg.n_agents).any(|i| (0..cfg.n_days).any(|t| intensity(i, t) > 0.0));
    if !any_positive {
        return Err(Error::Degenerate("parameters force zero intensity for every agent and day".into()));
    }

    let width = cfg.n_agents.saturating_sub(1).to_string().len().max(5);
    let investor_ids: Vec<String> = (0..cfg.n_agents).map(|i| format!("A{i:0width$}")).collect();
    let mut trades = Vec::new();
    for t in 0..cfg.n_days {
        for i in 0..cfg.n_agents {
            let mu = intensity(i, t);
            if mu <= 0.0 {
                continue;
            }
            let count = Poisson::new(mu).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(&mut rng) as u64;
            for _ in 0..count {
                let price = quotes.low[t] + rng.random::<f64>() * (quotes.high[t] - quotes.low[t]);
                trades.push(TradeRecord {
                    investor_id: investor_ids[i].clone(),
                    date: days[t],
                    ticker: cfg.ticker.clone(),
                    shares: rng.random_range(1..=1000),
                    price,
                    side: if rng.random::<bool>() { Side::Buy } else { Side::Sell },
                    is_auto: None,
                });
            }
        }
    }
    Ok(SynthMarket {
        trades,
        quotes,
        close,
        truth: SynthTruth { investor_ids, lambda, beta, windows, community, gates, nu, z },
    })
}

fn nodes(n: usize) -> Vec<SyncNode> {
    (0..n).map(|k| SyncNode::bare(format!("n{k}"))).collect()
}

/// Two disjoint cliques of `size` nodes: `n0..` and `n{size}..`.
pub fn two_cliques(size: usize) -> SyncNetwork {
    let mut pairs = Vec::new();
    for block in 0..2 {
        let base = block * size;
        for i in 0..size {
            for j in (i + 1)..size {
                pairs.push((base + i, base + j));
            }
        }
    }
    SyncNetwork::from_edges("FIXTURE", nodes(2 * size), &pairs).expect("simple graph")
}

/// Complete bipartite graph between `n0..n{a-1}` and the remaining `b` nodes.
pub fn complete_bipartite(a: usize, b: usize) -> SyncNetwork {
    let pairs: Vec<(usize, usize)> = (0..a).flat_map(|i| (a..a + b).map(move |j| (i, j))).collect();
    SyncNetwork::from_edges("FIXTURE", nodes(a + b), &pairs).expect("simple graph")
}

/// Node 0 joined to `leaves` leaves.
pub fn star(leaves: usize) -> SyncNetwork {
    let pairs: Vec<(usize, usize)> = (1..=leaves).map(|j| (0, j)).collect();
    SyncNetwork::from_edges("FIXTURE", nodes(leaves + 1), &pairs).expect("simple graph")
}

/// Two blocks of `block` nodes with edge probabilities `p_in` within and
/// `p_out` between blocks.
pub fn planted_blocks(block: usize, p_in: f64, p_out: f64, seed: u64) -> SyncNetwork {
    let mut rng = stream_rng(seed, 0);
    let n = 2 * block;
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if (i < block) == (j < block) { p_in } else { p_out };
            if rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    SyncNetwork::from_edges("FIXTURE", nodes(n), &pairs).expect("simple graph")
}

/// Running endpoint sums of the assortativity of an edge multiset.
#[derive(Debug, Clone, Copy, Default)]
struct EndpointSums {
    s1: f64,
    s2: f64,
    sxy: f64,
    m: f64,
}

impl EndpointSums {
    fn apply(&mut self, x: f64, y: f64, sign: f64) {
        self.s1 += sign * (x + y);
        self.s2 += sign * (x * x + y * y);
        self.sxy += sign * 2.0 * x * y;
        self.m += sign * 2.0;
    }

    fn r(&self) -> f64 {
        let mu = self.s1 / self.m;
        let var = self.s2 / self.m - mu * mu;
        if var <= 0.0 {
            return 0.0;
        }
        (self.sxy / self.m - mu * mu) / var
    }
}

/// Random simple graph on `attributes.len()` nodes whose assortativity by
/// `attributes` lies within 0.02 of `target_r`.
///
/// Starts from a random graph with three edges per node and replaces one
/// random edge per step with an edge between similar (to raise `r`) or
/// dissimilar (to lower it) nodes.
pub fn plant_assortative_network(attributes: &[i64], target_r: f64, seed: u64) -> Result<SyncNetwork> {
    let n = attributes.len();
    if !(target_r > -1.0 && target_r < 1.0) {
        return Err(Error::InvalidParameter(format!("target {target_r} outside (-1, 1)")));
    }
    let distinct: HashSet<i64> = attributes.iter().copied().collect();
    if distinct.len() < 2 || n < 4 {
        return Err(Error::InvalidParameter("need at least four nodes and two attribute values".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let capacity = n * (n - 1) / 2;
    let m = (3 * n).min(capacity / 2).max(1);
    let mut present: HashSet<(usize, usize)> = HashSet::new();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(m);
    while edges.len() < m {
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if u != v && present.insert((u.min(v), u.max(v))) {
            edges.push((u.min(v), u.max(v)));
        }
    }
    let x = |i: usize| attributes[i] as f64;
    let mut sums = EndpointSums::default();
    for &(u, v) in &edges {
        sums.apply(x(u), x(v), 1.0);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (attributes[i], i));
    let mut rank = vec![0; n];
    for (p, &i) in order.iter().enumerate() {
        rank[i] = p;
    }
    let w = (n / 20).max(1);
    let max_steps = 200 * m;
    let mut best = sums.r();
    for _ in 0..max_steps {
        let r = sums.r();
        if (r - target_r).abs() < (best - target_r).abs() {
            best = r;
        }
        if (r - target_r).abs() <= 0.01 {
            let net = SyncNetwork::from_edges("FIXTURE", nodes(n), &edges)?;
            let measured = endpoint_correlation(&edges, attributes)?;
            if (measured - target_r).abs() <= 0.02 {
                return Ok(net);
            }
        }
        let raise = r < target_r;
        let u = rng.random_range(0..n);
        let offset = rng.random_range(1..=w) as isize * if rng.random::<bool>() { 1 } else { -1 };
        let anchor = if raise { rank[u] as isize } else { (n - 1 - rank[u]) as isize };
        let p = (anchor + offset).clamp(0, n as isize - 1) as usize;
        let v = order[p];
        let key = (u.min(v), u.max(v));
        if u == v || present.contains(&key) {
            continue;
        }
        let k = rng.random_range(0..edges.len());
        let old = edges[k];
        let mut trial = sums;
        trial.apply(x(old.0), x(old.1), -1.0);
        trial.apply(x(u), x(v), 1.0);
        // only accept replacements that move toward the target
        if (trial.r() - target_r).abs() > (r - target_r).abs() {
            continue;
        }
        present.remove(&old);
        present.insert(key);
        edges[k] = key;
        sums = trial;
    }
    Err(Error::TargetUnreachable { target: target_r, best, steps: max_steps })
}
