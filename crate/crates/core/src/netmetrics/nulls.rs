//! Null models for assortativity: degree-preserving rewiring and
//! attribute shuffling.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assortativity::MixingMatrix;
use crate::error::{Error, Result};
use crate::exec::{map_range, stream_rng, Execution};
use crate::stats::quantile_sorted;
use crate::syncnet::SyncNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullStats {
    pub mean: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub replicas: usize,
}

impl NullStats {
    /// Mean and empirical 2.5 / 97.5 percentiles. Values are reduced in the
    /// given (replica) order.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("null statistics need at least one replica"));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean,
            ci95_low: quantile_sorted(&sorted, 0.025),
            ci95_high: quantile_sorted(&sorted, 0.975),
            replicas: values.len(),
        })
    }

    pub fn covers(&self, x: f64) -> bool {
        self.ci95_low <= x && x <= self.ci95_high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullConfig {
    pub replicas: usize,
    /// Successful swaps per replica, as a multiple of the edge count.
    pub swap_factor: usize,
    /// Use `rho`-weighted mixing fractions.
    pub weighted: bool,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for NullConfig {
    fn default() -> Self {
        Self { replicas: 1000, swap_factor: 10, weighted: false, seed: 0, execution: Execution::Parallel }
    }
}

fn key(u: usize, v: usize) -> u64 {
    let (a, b) = (u.min(v) as u64, u.max(v) as u64);
    (a << 32) | b
}

/// Performs `target` successful double-edge swaps `(a,b),(c,d) -> (a,d),(c,b)`
/// that keep the graph simple. Gives up after `100 * target` attempts.
/// Returns the number of successful swaps; errors if none succeeded.
pub fn double_edge_swap(edges: &mut [(usize, usize)], target: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
    let m = edges.len();
    if m < 2 {
        return Err(Error::NoSwapPossible { attempts: 0 });
    }
    let mut present: HashSet<u64> = edges.iter().map(|&(u, v)| key(u, v)).collect();
    let max_attempts = target.saturating_mul(100).max(1000);
    let mut done = 0;
    let mut attempts = 0;
    while done < target && attempts < max_attempts {
        attempts += 1;
        let i = rng.random_range(0..m);
        let mut j = rng.random_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = edges[i];
        let (mut c, mut d) = edges[j];
        if rng.random::<bool>() {
            std::mem::swap(&mut c, &mut d);
        }
        if a == d || c == b || present.contains(&key(a, d)) || present.contains(&key(c, b)) {
            continue;
        }
        present.remove(&key(a, b));
        present.remove(&key(c, d));
        present.insert(key(a, d));
        present.insert(key(c, b));
        edges[i] = (a, d);
        edges[j] = (c, b);
        done += 1;
    }
    if done == 0 && target > 0 {
        return Err(Error::NoSwapPossible { attempts });
    }
    Ok(done)
}

fn degree_sequence(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut d = vec![0; n];
    for &(u, v) in edges {
        d[u] += 1;
        d[v] += 1;
    }
    d
}

fn weights(net: &SyncNetwork, weighted: bool) -> Option<Vec<f64>> {
    weighted.then(|| net.edges.iter().map(|e| e.rho).collect())
}

/// Assortativity of degree-preserving randomizations of `net`, attributes fixed.
pub fn null_rewire(net: &SyncNetwork, attribute: &[i64], cfg: &NullConfig) -> Result<NullStats> {
    if net.edges.len() < 2 {
        return Err(Error::NoSwapPossible { attempts: 0 });
    }
    if cfg.replicas == 0 {
        return Err(Error::InvalidParameter("replicas must be positive".into()));
    }
    let base = net.edge_pairs();
    let w = weights(net, cfg.weighted);
    let degrees = degree_sequence(net.nodes.len(), &base);
    let target = cfg.swap_factor * base.len();
    let rs = map_range(cfg.execution, cfg.replicas, |k| -> Result<f64> {
        let mut rng = stream_rng(cfg.seed, k as u64);
        let mut edges = base.clone();
        double_edge_swap(&mut edges, target, &mut rng)?;
        debug_assert_eq!(degree_sequence(net.nodes.len(), &edges), degrees);
        MixingMatrix::from_edges(&edges, w.as_deref(), attribute)?.assortativity()
    });
    NullStats::from_values(&rs.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Permutes `attribute` over the `positions` nodes; all other entries are kept.
pub fn shuffle_attribute(attribute: &[i64], positions: &[usize], rng: &mut ChaCha8Rng) -> Vec<i64> {
    let mut values: Vec<i64> = positions.iter().map(|&i| attribute[i]).collect();
    values.shuffle(rng);
    let mut shuffled = attribute.to_vec();
    for (&i, v) in positions.iter().zip(values) {
        shuffled[i] = v;
    }
    shuffled
}

/// Assortativity with the attribute permuted over the non-isolated nodes,
/// topology fixed.
pub fn null_shuffle(net: &SyncNetwork, attribute: &[i64], cfg: &NullConfig) -> Result<NullStats> {
    let connected: Vec<usize> = net.degrees().iter().enumerate().filter(|(_, &d)| d > 0).map(|(i, _)| i).collect();
    let mut distinct: Vec<i64> = connected.iter().map(|&i| attribute[i]).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Degenerate("attribute shuffle needs at least two distinct values on connected nodes".into()));
    }
    if cfg.replicas == 0 {
        return Err(Error::InvalidParameter("replicas must be positive".into()));
    }
    let edges = net.edge_pairs();
    let w = weights(net, cfg.weighted);
    let rs = map_range(cfg.execution, cfg.replicas, |k| -> Result<f64> {
        let mut rng = stream_rng(cfg.seed, k as u64);
        let shuffled = shuffle_attribute(attribute, &connected, &mut rng);
        MixingMatrix::from_edges(&edges, w.as_deref(), &shuffled)?.assortativity()
    });
    NullStats::from_values(&rs.into_iter().collect::<Result<Vec<_>>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssortativityResult {
    pub attribute: String,
    pub r: f64,
    pub null_rewire: NullStats,
    pub null_shuffle: NullStats,
}

/// Observed assortativity with both null models. The two nulls use
/// independent seeds derived from `cfg.seed`.
pub fn assortativity_with_nulls(net: &SyncNetwork, attribute: &[i64], name: &str, cfg: &NullConfig) -> Result<AssortativityResult> {
    let r = if cfg.weighted {
        super::assortativity::assortativity_weighted(net, attribute)?
    } else {
        super::assortativity::assortativity(net, attribute)?
    };
    let rewire_cfg = NullConfig { seed: crate::exec::derive_seed(cfg.seed, "rewire"), ..*cfg };
    let shuffle_cfg = NullConfig { seed: crate::exec::derive_seed(cfg.seed, "shuffle"), ..*cfg };
    Ok(AssortativityResult {
        attribute: name.to_string(),
        r,
        null_rewire: null_rewire(net, attribute, &rewire_cfg)?,
        null_shuffle: null_shuffle(net, attribute, &shuffle_cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{star, two_cliques};
    use crate::syncnet::SyncNode;

    fn clique_attr(size: usize) -> Vec<i64> {
        (0..2 * size).map(|i| if i < size { 10 } else { 20 }).collect()
    }

    #[test]
    fn swaps_preserve_degrees_and_simplicity() {
        let net = two_cliques(6);
        let mut edges = net.edge_pairs();
        let before = degree_sequence(12, &edges);
        let done = double_edge_swap(&mut edges, 300, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(done, 300);
        assert_eq!(degree_sequence(12, &edges), before);
        let set: HashSet<u64> = edges.iter().map(|&(u, v)| key(u, v)).collect();
        assert_eq!(set.len(), edges.len());
        assert!(edges.iter().all(|&(u, v)| u != v));
    }

    #[test]
    fn rewiring_destroys_alignment() {
        let net = two_cliques(20);
        let attr = clique_attr(20);
        let cfg = NullConfig { replicas: 200, seed: 3, ..Default::default() };
        let s = null_rewire(&net, &attr, &cfg).unwrap();
        assert!(s.mean.abs() < 0.05, "{s:?}");
        assert!(s.covers(0.0), "{s:?}");
        assert_eq!(s.replicas, 200);
    }

    #[test]
    fn shuffling_destroys_alignment() {
        let net = two_cliques(20);
        let attr = clique_attr(20);
        let cfg = NullConfig { replicas: 500, seed: 4, ..Default::default() };
        let s = null_shuffle(&net, &attr, &cfg).unwrap();
        assert!(s.mean.abs() < 0.05, "{s:?}");
        assert!(s.covers(0.0), "{s:?}");
    }

    #[test]
    fn single_replica_gives_degenerate_ci() {
        let net = two_cliques(5);
        let cfg = NullConfig { replicas: 1, seed: 9, ..Default::default() };
        let s = null_rewire(&net, &clique_attr(5), &cfg).unwrap();
        assert_eq!(s.ci95_low, s.mean);
        assert_eq!(s.ci95_high, s.mean);
    }

    #[test]
    fn fixed_seed_is_reproducible_across_execution_modes() {
        let net = two_cliques(8);
        let attr = clique_attr(8);
        let par = NullConfig { replicas: 64, seed: 5, ..Default::default() };
        let ser = NullConfig { execution: Execution::Serial, ..par };
        assert_eq!(null_rewire(&net, &attr, &par).unwrap(), null_rewire(&net, &attr, &par).unwrap());
        assert_eq!(null_rewire(&net, &attr, &par).unwrap(), null_rewire(&net, &attr, &ser).unwrap());
        assert_eq!(null_shuffle(&net, &attr, &par).unwrap(), null_shuffle(&net, &attr, &ser).unwrap());
    }

    #[test]
    fn impossible_swaps_are_errors() {
        let nodes = vec![SyncNode::bare("a"), SyncNode::bare("b")];
        let single = SyncNetwork::from_edges("T", nodes, &[(0, 1)]).unwrap();
        assert!(matches!(null_rewire(&single, &[1, 2], &NullConfig::default()), Err(Error::NoSwapPossible { .. })));
        let s = star(6);
        let attr: Vec<i64> = (0..7).collect();
        assert!(matches!(
            null_rewire(&s, &attr, &NullConfig { replicas: 2, ..Default::default() }),
            Err(Error::NoSwapPossible { .. })
        ));
    }

    #[test]
    fn shuffle_needs_two_values() {
        let net = two_cliques(3);
        assert!(null_shuffle(&net, &[7; 6], &NullConfig::default()).is_err());
    }

    #[test]
    fn shuffle_preserves_population() {
        let attr: Vec<i64> = (0..12).map(|i| (i * 7 % 5) as i64).collect();
        let positions: Vec<usize> = (0..12).filter(|i| i % 4 != 0).collect();
        let mut rng = stream_rng(2, 0);
        for _ in 0..50 {
            let s = shuffle_attribute(&attr, &positions, &mut rng);
            let (mut a, mut b) = (attr.clone(), s.clone());
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
            for i in (0..12).filter(|i| i % 4 == 0) {
                assert_eq!(s[i], attr[i]);
            }
        }
    }
}
