//! Activity-synchronization networks.
//!
//! Investors become nodes once they reach a minimum number of operations.
//! Every node pair with overlapping active periods gets the population
//! cross-correlation of their daily counts over the overlap (inactive days
//! count as zeros), and the edge survives only if a one-sided permutation
//! test rejects the shuffled null at the requested level.
//!
//! Shuffling preserves each window's multiset of counts, so the means and
//! standard deviations are fixed across replicas and the correlation is a
//! monotone function of the integer dot product `sum_t a_t b_t`. Replicas
//! therefore only need to place the nonzero counts at random distinct
//! positions and sum the collisions, which costs `O(nnz)` instead of
//! `O(window)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activity::ActivitySeries;
use crate::error::{Error, Result};
use crate::exec::{map_range, pair_stream, stream_rng, Execution};
use crate::stats::clamp_unit;

/// Intersection `[start, end]` of two active periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapWindow {
    pub start: usize,
    pub end: usize,
}

impl OverlapWindow {
    /// `T^{ij}` in trading days.
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn overlap(a: &ActivitySeries, b: &ActivitySeries) -> Option<OverlapWindow> {
    let start = a.first_day().max(b.first_day());
    let end = a.last_day().min(b.last_day());
    (start <= end).then_some(OverlapWindow { start, end })
}

/// Population correlation of two equal-length count windows, or `None`
/// when either window is constant.
pub fn window_correlation(x: &[u32], y: &[u32]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let my = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = f64::from(a) - mx;
        let dy = f64::from(b) - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let sx = (sxx / n).sqrt();
    let sy = (syy / n).sqrt();
    Some(clamp_unit(sxy / n / (sx * sy)))
}

/// Cross-correlation of two investors over `w`.
pub fn cross_correlation(a: &ActivitySeries, b: &ActivitySeries, w: OverlapWindow) -> Result<f64> {
    window_correlation(a.window(w.start, w.end), b.window(w.start, w.end))
        .ok_or_else(|| Error::Degenerate("zero activity variance over the overlap window".into()))
}

/// Which series are re-permuted in each shuffle replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShuffleMode {
    #[default]
    Both,
    /// Only the first series of the pair.
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub shuffles: usize,
    pub level: f64,
    pub mode: ShuffleMode,
    /// Stop once the pair can no longer reach `level`. The keep/drop decision
    /// is unchanged; only the p-values of dropped pairs become lower bounds.
    pub early_stop: bool,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self { shuffles: 999, level: 0.01, mode: ShuffleMode::Both, early_stop: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    /// `(1 + exceedances) / (shuffles + 1)`.
    pub pvalue: f64,
    pub keep: bool,
    pub exceedances: usize,
    pub replicas_run: usize,
    /// False when the test stopped early; `pvalue` is then a lower bound.
    pub exact: bool,
}

/// Sparse view of two count windows plus scratch space for replicas.
struct PairKernel {
    a_val: Vec<u32>,
    b_pos: Vec<u32>,
    b_val: Vec<u32>,
    observed: u64,
    idx: Vec<u32>,
    undo: Vec<u32>,
    placed_a: Vec<u32>,
    placed_b: Vec<u32>,
    dense_b: Vec<u32>,
}

/// Uniformly random ordered choice of `count` distinct positions out of
/// `idx.len()` (partial Fisher-Yates). `idx` is restored afterwards.
fn place(idx: &mut [u32], undo: &mut Vec<u32>, count: usize, out: &mut Vec<u32>, rng: &mut ChaCha8Rng) {
    out.clear();
    undo.clear();
    let len = idx.len();
    for k in 0..count {
        let r = rng.random_range(k..len);
        idx.swap(k, r);
        undo.push(r as u32);
        out.push(idx[k]);
    }
    for k in (0..count).rev() {
        idx.swap(k, undo[k] as usize);
    }
}

impl PairKernel {
    fn new(x: &[u32], y: &[u32]) -> Self {
        let len = x.len();
        let a_val: Vec<u32> = x.iter().copied().filter(|&c| c > 0).collect();
        let (b_pos, b_val): (Vec<u32>, Vec<u32>) =
            y.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i as u32, c)).unzip();
        let observed = x.iter().zip(y).map(|(&a, &b)| u64::from(a) * u64::from(b)).sum();
        Self {
            placed_a: Vec::with_capacity(a_val.len()),
            placed_b: Vec::with_capacity(b_val.len()),
            a_val,
            b_pos,
            b_val,
            observed,
            idx: (0..len as u32).collect(),
            undo: Vec::new(),
            dense_b: vec![0; len],
        }
    }

    fn replica_dot(&mut self, mode: ShuffleMode, rng: &mut ChaCha8Rng) -> u64 {
        if mode == ShuffleMode::Both {
            place(&mut self.idx, &mut self.undo, self.b_val.len(), &mut self.placed_b, rng);
            for (&p, &v) in self.placed_b.iter().zip(&self.b_val) {
                self.dense_b[p as usize] = v;
            }
        }
        place(&mut self.idx, &mut self.undo, self.a_val.len(), &mut self.placed_a, rng);
        let dot = self
            .placed_a
            .iter()
            .zip(&self.a_val)
            .map(|(&p, &a)| u64::from(a) * u64::from(self.dense_b[p as usize]))
            .sum();
        if mode == ShuffleMode::Both {
            for &p in &self.placed_b {
                self.dense_b[p as usize] = 0;
            }
        }
        dot
    }

    fn run(&mut self, cfg: &PermutationConfig, rng: &mut ChaCha8Rng) -> PermutationOutcome {
        if cfg.mode == ShuffleMode::One {
            for (&p, &v) in self.b_pos.iter().zip(&self.b_val) {
                self.dense_b[p as usize] = v;
            }
        }
        let denom = (cfg.shuffles + 1) as f64;
        let mut exceed = 0usize;
        let mut run = 0usize;
        while run < cfg.shuffles {
            run += 1;
            if self.replica_dot(cfg.mode, rng) >= self.observed {
                exceed += 1;
                if cfg.early_stop && (1 + exceed) as f64 / denom >= cfg.level {
                    break;
                }
            }
        }
        let pvalue = (1 + exceed) as f64 / denom;
        PermutationOutcome { pvalue, keep: pvalue < cfg.level, exceedances: exceed, replicas_run: run, exact: run == cfg.shuffles }
    }
}

/// One-sided permutation test on two aligned count windows.
pub fn permutation_test(x: &[u32], y: &[u32], cfg: &PermutationConfig, rng: &mut ChaCha8Rng) -> Result<PermutationOutcome> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidParameter("permutation test needs two nonempty windows of equal length".into()));
    }
    if cfg.shuffles < 99 {
        return Err(Error::InvalidParameter(format!("at least 99 shuffles required, got {}", cfg.shuffles)));
    }
    Ok(PairKernel::new(x, y).run(cfg, rng))
}

/// Permutation filter for one investor pair over its overlap window.
pub fn permutation_filter(
    a: &ActivitySeries,
    b: &ActivitySeries,
    w: OverlapWindow,
    cfg: &PermutationConfig,
    seed: u64,
) -> Result<PermutationOutcome> {
    let mut rng = stream_rng(seed, 0);
    permutation_test(a.window(w.start, w.end), b.window(w.start, w.end), cfg, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncNode {
    pub investor_id: String,
    pub total_ops: u64,
    pub trading_days: usize,
    pub span: usize,
    pub opd: f64,
    pub rho_ov: Option<f64>,
}

impl SyncNode {
    pub fn from_series(s: &ActivitySeries) -> Self {
        Self {
            investor_id: s.investor_id().to_string(),
            total_ops: s.total_ops(),
            trading_days: s.trading_days(),
            span: s.span(),
            opd: s.opd(),
            rho_ov: None,
        }
    }

    /// Placeholder node for fixtures built directly from edge lists.
    pub fn bare(id: impl Into<String>) -> Self {
        Self { investor_id: id.into(), total_ops: 0, trading_days: 0, span: 0, opd: 0.0, rho_ov: None }
    }
}

/// Undirected edge between node indices `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncEdge {
    pub i: usize,
    pub j: usize,
    pub rho: f64,
    pub overlap: usize,
    pub pvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncNetwork {
    pub ticker: String,
    pub nodes: Vec<SyncNode>,
    pub edges: Vec<SyncEdge>,
}

impl SyncNetwork {
    /// Network from an unweighted edge list over `nodes`; every edge gets
    /// weight 1. Duplicate pairs and self-loops are rejected.
    pub fn from_edges(ticker: &str, nodes: Vec<SyncNode>, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut edges = Vec::with_capacity(pairs.len());
        for &(u, v) in pairs {
            let (i, j) = (u.min(v), u.max(v));
            if i == j || j >= nodes.len() || !seen.insert((i, j)) {
                return Err(Error::InvalidParameter(format!("edge ({u}, {v}) is a self-loop, duplicate or out of range")));
            }
            edges.push(SyncEdge { i, j, rho: 1.0, overlap: 0, pvalue: 0.0 });
        }
        Ok(Self { ticker: ticker.to_string(), nodes, edges })
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for e in &self.edges {
            d[e.i] += 1;
            d[e.j] += 1;
        }
        d
    }

    pub fn isolated(&self) -> Vec<bool> {
        self.degrees().into_iter().map(|d| d == 0).collect()
    }

    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }

    /// Subnetwork induced by the nodes satisfying `keep`, with node indices
    /// renumbered in their original order.
    pub fn induced<F: Fn(&SyncNode) -> bool>(&self, keep: F) -> SyncNetwork {
        let mut map = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if keep(n) {
                map[i] = nodes.len();
                nodes.push(n.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| map[e.i] != usize::MAX && map[e.j] != usize::MAX)
            .map(|e| SyncEdge { i: map[e.i], j: map[e.j], ..*e })
            .collect();
        SyncNetwork { ticker: self.ticker.clone(), nodes, edges }
    }

    /// `i j rho overlap pvalue`, one line per edge, investor ids as endpoints.
    pub fn edges_tsv(&self) -> String {
        let mut out = String::from("i\tj\trho\toverlap\tpvalue\n");
        for e in &self.edges {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                self.nodes[e.i].investor_id, self.nodes[e.j].investor_id, e.rho, e.overlap, e.pvalue
            );
        }
        out
    }

    /// `investor total_ops N T opd`.
    pub fn nodes_tsv(&self) -> String {
        let mut out = String::from("investor\ttotal_ops\tN\tT\topd\n");
        for n in &self.nodes {
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", n.investor_id, n.total_ops, n.trading_days, n.span, n.opd);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    pub min_ops: u64,
    pub permutation: PermutationConfig,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            min_ops: 20,
            permutation: PermutationConfig { early_stop: true, ..Default::default() },
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncDiagnostics {
    pub investors: usize,
    pub nodes: usize,
    pub pairs_considered: usize,
    pub no_overlap: usize,
    pub short_overlap: usize,
    pub degenerate_pairs: usize,
    /// Pairs with a defined correlation, before the significance filter.
    pub edges_pre_filter: usize,
    pub negative_pre_filter: usize,
    pub edges_post_filter: usize,
    pub isolated_nodes: usize,
}

/// A pair that reached the significance test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestedPair {
    pub i: usize,
    pub j: usize,
    pub rho: f64,
    pub overlap: usize,
    pub outcome: PermutationOutcome,
}

#[derive(Debug, Clone)]
pub struct SyncBuild {
    pub network: SyncNetwork,
    pub diagnostics: SyncDiagnostics,
    pub tested: Vec<TestedPair>,
}

enum PairResult {
    NoOverlap,
    Short,
    Degenerate,
    Tested(TestedPair),
}

fn evaluate_pair(a: &ActivitySeries, b: &ActivitySeries, i: usize, j: usize, cfg: &SyncConfig) -> PairResult {
    let Some(w) = overlap(a, b) else {
        return PairResult::NoOverlap;
    };
    if w.len() < 2 {
        return PairResult::Short;
    }
    let (x, y) = (a.window(w.start, w.end), b.window(w.start, w.end));
    let Some(rho) = window_correlation(x, y) else {
        return PairResult::Degenerate;
    };
    let mut rng = stream_rng(cfg.seed, pair_stream(i, j));
    let outcome = PairKernel::new(x, y).run(&cfg.permutation, &mut rng);
    PairResult::Tested(TestedPair { i, j, rho, overlap: w.len(), outcome })
}

/// Builds the synchronization network of one asset.
///
/// Node order follows the iteration order of `series` (investor-id order
/// for the map returned by [`crate::activity::build_activity`]); pair
/// `(i, j)` always draws from RNG stream `(seed, i, j)`, so the output is
/// independent of scheduling.
pub fn build_sync_network(ticker: &str, series: &BTreeMap<String, ActivitySeries>, cfg: &SyncConfig) -> Result<SyncBuild> {
    if cfg.permutation.shuffles < 99 {
        return Err(Error::InvalidParameter(format!("at least 99 shuffles required, got {}", cfg.permutation.shuffles)));
    }
    let members: Vec<&ActivitySeries> = series.values().filter(|s| s.total_ops() >= cfg.min_ops).collect();
    let n = members.len();
    let rows: Vec<Vec<PairResult>> = map_range(cfg.execution, n, |i| {
        ((i + 1)..n).map(|j| evaluate_pair(members[i], members[j], i, j, cfg)).collect()
    });

    let mut diag = SyncDiagnostics { investors: series.len(), nodes: n, pairs_considered: n * n.saturating_sub(1) / 2, ..Default::default() };
    let mut tested = Vec::new();
    let mut edges = Vec::new();
    for r in rows.into_iter().flatten() {
        match r {
            PairResult::NoOverlap => diag.no_overlap += 1,
            PairResult::Short => diag.short_overlap += 1,
            PairResult::Degenerate => diag.degenerate_pairs += 1,
            PairResult::Tested(p) => {
                diag.edges_pre_filter += 1;
                if p.rho < 0.0 {
                    diag.negative_pre_filter += 1;
                }
                if p.outcome.keep {
                    edges.push(SyncEdge { i: p.i, j: p.j, rho: p.rho, overlap: p.overlap, pvalue: p.outcome.pvalue });
                }
                tested.push(p);
            }
        }
    }
    diag.edges_post_filter = edges.len();
    let network = SyncNetwork {
        ticker: ticker.to_string(),
        nodes: members.iter().map(|s| SyncNode::from_series(s)).collect(),
        edges,
    };
    diag.isolated_nodes = network.isolated().iter().filter(|&&x| x).count();
    Ok(SyncBuild { network, diagnostics: diag, tested })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};

    fn series(id: &str, first: usize, counts: &[u32]) -> ActivitySeries {
        ActivitySeries::from_day_counts(id, "T", counts.iter().enumerate().map(|(k, &c)| (first + k, c))).unwrap()
    }

    fn span(id: &str, lo: usize, hi: usize) -> ActivitySeries {
        series(id, lo, &vec![1; hi - lo + 1])
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap(&span("a", 0, 10), &span("b", 5, 20)), Some(OverlapWindow { start: 5, end: 10 }));
        assert_eq!(overlap(&span("a", 0, 10), &span("b", 5, 20)).unwrap().len(), 6);
        assert_eq!(overlap(&span("a", 0, 4), &span("b", 5, 9)), None);
        let w = overlap(&span("a", 3, 8), &span("b", 3, 8)).unwrap();
        assert_eq!((w.start, w.end, w.len()), (3, 8, 6));
    }

    /// Term-by-term evaluation of the cross-correlation definition.
    fn brute_force(x: &[f64], y: &[f64]) -> f64 {
        let t = x.len() as f64;
        let mx = x.iter().sum::<f64>() / t;
        let my = y.iter().sum::<f64>() / t;
        let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / t).sqrt();
        let sy = (y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / t).sqrt();
        let mut acc = 0.0;
        for k in 0..x.len() {
            acc += (x[k] - mx) * (y[k] - my) / (sx * sy);
        }
        acc / t
    }

    #[test]
    fn cross_correlation_examples() {
        let a = series("a", 0, &[1, 3, 0, 2, 5]);
        let w = overlap(&a, &a).unwrap();
        assert_eq!(cross_correlation(&a, &a, w).unwrap(), 1.0);

        let b = series("b", 0, &[5, 3, 6, 4, 1]); // 6 - a
        assert!((cross_correlation(&a, &b, w).unwrap() + 1.0).abs() < 1e-15);

        let x = [0u32, 2, 0, 1, 0];
        let y = [1u32, 3, 0, 2, 0];
        let r = window_correlation(&x, &y).unwrap();
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        assert!((r - brute_force(&xf, &yf)).abs() < 1e-12);
        // frozen: cov 0.88 / sqrt(0.64 * 1.36)
        assert!((r - 0.88 / (0.64f64 * 1.36).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pair_is_signalled() {
        let a = series("a", 0, &[1, 1, 1, 1]);
        let b = series("b", 0, &[1, 0, 2, 1]);
        let w = overlap(&a, &b).unwrap();
        assert!(matches!(cross_correlation(&a, &b, w), Err(Error::Degenerate(_))));
    }

    fn cfg(shuffles: usize) -> PermutationConfig {
        PermutationConfig { shuffles, ..Default::default() }
    }

    #[test]
    fn perfectly_synchronized_pair_has_minimal_pvalue() {
        let counts: Vec<u32> = (1..=30).map(|k| (k * 7 % 31) as u32).collect();
        let a = series("a", 0, &counts);
        let w = overlap(&a, &a).unwrap();
        let out = permutation_filter(&a, &a, w, &cfg(999), 3).unwrap();
        assert!(out.keep);
        assert_eq!(out.exceedances, 0);
        assert_eq!(out.pvalue, 1.0 / 1000.0);
        assert!(out.exact);
    }

    #[test]
    fn zero_correlation_is_not_kept() {
        let x: Vec<u32> = (0..40).map(|t| (t % 2 == 0) as u32).collect();
        let y: Vec<u32> = (0..40).map(|t| (t % 4 < 2) as u32).collect();
        assert!(window_correlation(&x, &y).unwrap().abs() < 1e-15);
        for mode in [ShuffleMode::Both, ShuffleMode::One] {
            let c = PermutationConfig { mode, ..cfg(999) };
            let out = permutation_test(&x, &y, &c, &mut stream_rng(1, 0)).unwrap();
            assert!(!out.keep);
            assert!(out.pvalue > 0.3);
        }
    }

    #[test]
    fn too_few_shuffles_is_rejected() {
        let x = [1u32, 0, 2];
        assert!(permutation_test(&x, &x, &cfg(50), &mut stream_rng(1, 0)).is_err());
    }

    #[test]
    fn early_stop_keeps_decision() {
        let mut rng = stream_rng(21, 0);
        let pois = Poisson::new(1.0).unwrap();
        for k in 0..200u64 {
            let x: Vec<u32> = (0..60).map(|_| pois.sample(&mut rng) as u32).collect();
            let y: Vec<u32> = x.iter().map(|&v| if rng.random::<f64>() < 0.3 { v } else { pois.sample(&mut rng) as u32 }).collect();
            let full = permutation_test(&x, &y, &cfg(199), &mut stream_rng(k, 0)).unwrap();
            let fast = permutation_test(&x, &y, &PermutationConfig { early_stop: true, ..cfg(199) }, &mut stream_rng(k, 0)).unwrap();
            assert_eq!(full.keep, fast.keep);
            if fast.keep {
                assert_eq!(full, fast);
            } else {
                assert!(fast.pvalue <= full.pvalue);
            }
        }
    }

    #[test]
    fn independent_pairs_respect_level() {
        let pois = Poisson::new(1.0).unwrap();
        let mut data = stream_rng(99, 0);
        let c = PermutationConfig { early_stop: true, ..cfg(199) };
        let pairs = 1000;
        let mut kept = 0;
        for k in 0..pairs {
            let x: Vec<u32> = (0..100).map(|_| pois.sample(&mut data) as u32).collect();
            let y: Vec<u32> = (0..100).map(|_| pois.sample(&mut data) as u32).collect();
            if permutation_test(&x, &y, &c, &mut stream_rng(5, k)).unwrap().keep {
                kept += 1;
            }
        }
        // binomial(1000, 0.01): mean 10, sd ~3.1
        assert!(kept <= 25, "kept {kept}");
    }

    fn population(n_indep: usize, seed: u64) -> BTreeMap<String, ActivitySeries> {
        let pois = Poisson::new(0.6).unwrap();
        let mut rng = stream_rng(seed, 0);
        let mut out = BTreeMap::new();
        for k in 0..n_indep {
            let dense: Vec<u32> = (0..120).map(|_| pois.sample(&mut rng) as u32).collect();
            let id = format!("I{k:03}");
            out.insert(id.clone(), ActivitySeries::from_dense(id, "T", 0, &dense).unwrap());
        }
        let shared: Vec<u32> = (0..120).map(|_| if rng.random::<f64>() < 0.25 { 1 + pois.sample(&mut rng) as u32 } else { 0 }).collect();
        for id in ["A", "B"] {
            let own: Vec<u32> = shared.iter().map(|&s| if s > 0 { s + (rng.random::<f64>() < 0.3) as u32 } else { 0 }).collect();
            out.insert(id.to_string(), ActivitySeries::from_dense(id, "T", 0, &own).unwrap());
        }
        out
    }

    #[test]
    fn planted_pair_survives() {
        let series = population(30, 4);
        let build = build_sync_network("T", &series, &SyncConfig { min_ops: 20, seed: 8, ..Default::default() }).unwrap();
        let net = &build.network;
        let ia = net.nodes.iter().position(|n| n.investor_id == "A").unwrap();
        let ib = net.nodes.iter().position(|n| n.investor_id == "B").unwrap();
        assert!(net.edges.iter().any(|e| (e.i, e.j) == (ia.min(ib), ia.max(ib))));
        // 31 + 30 null pairs touch the planted nodes; the rest are pure null
        assert!(net.edges.len() <= 1 + 20, "{} edges", net.edges.len());
        assert!(net.edges.iter().all(|e| e.pvalue < 0.01 && e.i < e.j));
        let d = build.diagnostics;
        assert_eq!(d.pairs_considered, 32 * 31 / 2);
        assert_eq!(d.pairs_considered, d.no_overlap + d.short_overlap + d.degenerate_pairs + d.edges_pre_filter);
    }

    #[test]
    fn below_min_ops_gives_empty_network() {
        let series = population(10, 1);
        let build = build_sync_network("T", &series, &SyncConfig { min_ops: 10_000, ..Default::default() }).unwrap();
        assert!(build.network.nodes.is_empty());
        assert!(build.network.edges.is_empty());
    }

    #[test]
    fn identical_series_give_complete_graph() {
        let counts: Vec<u32> = (0..50).map(|t| ((t * 13) % 7) as u32 + (t % 3 == 0) as u32).collect();
        let mut map = BTreeMap::new();
        for k in 0..6 {
            let id = format!("X{k}");
            map.insert(id.clone(), ActivitySeries::from_dense(id, "T", 0, &counts).unwrap());
        }
        let build = build_sync_network("T", &map, &SyncConfig::default()).unwrap();
        assert_eq!(build.network.edges.len(), 15);
        assert!(build.network.edges.iter().all(|e| e.rho == 1.0));
        assert_eq!(build.diagnostics.isolated_nodes, 0);
    }

    #[test]
    fn serial_and_parallel_networks_are_identical() {
        let series = population(25, 12);
        let base = SyncConfig { seed: 77, ..Default::default() };
        let s = build_sync_network("T", &series, &SyncConfig { execution: Execution::Serial, ..base }).unwrap();
        let p = build_sync_network("T", &series, &SyncConfig { execution: Execution::Parallel, ..base }).unwrap();
        assert_eq!(s.network, p.network);
        assert_eq!(s.diagnostics, p.diagnostics);
        assert_eq!(s.network.edges_tsv(), p.network.edges_tsv());
    }

    #[test]
    fn edge_count_is_monotone_in_level() {
        let series = population(25, 13);
        let mut prev = 0;
        for level in [0.001, 0.01, 0.05, 0.2] {
            let c = SyncConfig { permutation: PermutationConfig { level, early_stop: true, ..Default::default() }, seed: 3, ..Default::default() };
            let e = build_sync_network("T", &series, &c).unwrap().network.edges.len();
            assert!(e >= prev, "level {level}: {e} < {prev}");
            prev = e;
        }
    }

    #[test]
    fn tables_have_expected_layout() {
        let net = SyncNetwork::from_edges("T", vec![SyncNode::bare("a"), SyncNode::bare("b")], &[(1, 0)]).unwrap();
        assert_eq!(net.edges_tsv(), "i\tj\trho\toverlap\tpvalue\na\tb\t1\t0\t0\n");
        assert!(net.nodes_tsv().starts_with("investor\ttotal_ops\tN\tT\topd\n"));
        assert!(SyncNetwork::from_edges("T", vec![SyncNode::bare("a")], &[(0, 0)]).is_err());
    }

    #[test]
    fn induced_subnetwork_renumbers() {
        let nodes = (0..4).map(|k| SyncNode::bare(format!("n{k}"))).collect();
        let net = SyncNetwork::from_edges("T", nodes, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let sub = net.induced(|n| n.investor_id != "n1");
        assert_eq!(sub.nodes.len(), 3);
        assert_eq!(sub.edge_pairs(), vec![(1, 2)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn correlation_is_bounded_symmetric_and_shift_invariant(
            pairs in prop::collection::vec((0u32..6, 0u32..6), 2..120),
            shift in 0u32..50,
        ) {
            let x: Vec<u32> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<u32> = pairs.iter().map(|p| p.1).collect();
            if let Some(r) = window_correlation(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
                prop_assert!((r - window_correlation(&y, &x).unwrap()).abs() <= 1e-12);
                let xs: Vec<u32> = x.iter().map(|v| v + shift).collect();
                prop_assert!((r - window_correlation(&xs, &y).unwrap()).abs() <= 1e-12);
            }
        }
    }
}
