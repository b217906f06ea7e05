//! Weighted modularity and Louvain community detection (resolution 1).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::stream_rng;
use crate::syncnet::SyncNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Community label per node, relabelled `0..` in order of first appearance.
    pub labels: Vec<usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn communities(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }
}

fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    let mut next = 0;
    labels
        .iter()
        .map(|&c| {
            *map.entry(c).or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn check_weights(net: &SyncNetwork) -> Result<f64> {
    let mut total = 0.0;
    for e in &net.edges {
        if !(e.rho >= 0.0) || !e.rho.is_finite() {
            return Err(Error::InvalidParameter(format!("negative or non-finite edge weight {}", e.rho)));
        }
        total += e.rho;
    }
    if total <= 0.0 {
        return Err(Error::EmptyInput("network has no positive edge weight"));
    }
    Ok(total)
}

/// Weighted modularity `Q = 1/2m sum_ij [w_ij - k_i k_j / 2m] delta(c_i, c_j)`
/// with `rho` as edge weight.
pub fn modularity_of(net: &SyncNetwork, labels: &[usize]) -> Result<f64> {
    if labels.len() != net.nodes.len() {
        return Err(Error::InvalidParameter(format!(
            "partition covers {} nodes, network has {}",
            labels.len(),
            net.nodes.len()
        )));
    }
    let m = check_weights(net)?;
    let two_m = 2.0 * m;
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    let mut degree: BTreeMap<usize, f64> = BTreeMap::new();
    for e in &net.edges {
        *degree.entry(labels[e.i]).or_default() += e.rho;
        *degree.entry(labels[e.j]).or_default() += e.rho;
        if labels[e.i] == labels[e.j] {
            *internal.entry(labels[e.i]).or_default() += e.rho;
        }
    }
    Ok(degree
        .iter()
        .map(|(c, &d)| internal.get(c).copied().unwrap_or(0.0) / m - (d / two_m) * (d / two_m))
        .sum())
}

/// Symmetric weighted graph used during aggregation. `adj[i]` holds
/// `(neighbour, weight)` with self-loops stored once carrying `A_ii`.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
    two_m: f64,
}

impl Level {
    fn from_network(net: &SyncNetwork) -> Self {
        let n = net.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for e in &net.edges {
            adj[e.i].push((e.j, e.rho));
            adj[e.j].push((e.i, e.rho));
        }
        Self::finish(adj)
    }

    fn finish(adj: Vec<Vec<(usize, f64)>>) -> Self {
        let degree: Vec<f64> = adj.iter().map(|row| row.iter().map(|&(_, w)| w).sum()).collect();
        let two_m = degree.iter().sum();
        Self { adj, degree, two_m }
    }

    /// One round of local moves. Returns the community of each node and
    /// whether any node moved.
    fn local_moves(&self, order: &[usize]) -> (Vec<usize>, bool) {
        let n = self.adj.len();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot: Vec<f64> = self.degree.clone();
        let mut links: Vec<f64> = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut seen = vec![false; n];
        let mut any_move = false;
        loop {
            let mut moved = false;
            for &i in order {
                let ki = self.degree[i];
                let own = comm[i];
                for &(j, w) in &self.adj[i] {
                    if j == i {
                        continue;
                    }
                    let c = comm[j];
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                    links[c] += w;
                }
                tot[own] -= ki;
                let gain = |c: usize, links: &[f64], tot: &[f64]| links[c] - ki * tot[c] / self.two_m;
                let own_gain = gain(own, &links, &tot);
                let mut best = own;
                let mut best_gain = own_gain;
                touched.sort_unstable();
                for &c in &touched {
                    if c == own {
                        continue;
                    }
                    let g = gain(c, &links, &tot);
                    if g > best_gain + 1e-12 || ((g - best_gain).abs() <= 1e-12 && best != own && c < best) {
                        best = c;
                        best_gain = g;
                    }
                }
                if best != own && best_gain <= own_gain + 1e-12 {
                    best = own;
                }
                tot[best] += ki;
                if best != own {
                    comm[i] = best;
                    moved = true;
                    any_move = true;
                }
                for &c in &touched {
                    links[c] = 0.0;
                    seen[c] = false;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
        }
        (comm, any_move)
    }

    fn aggregate(&self, comm: &[usize]) -> Self {
        let k = comm.iter().max().map_or(0, |m| m + 1);
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, w) in row {
                *rows[comm[i]].entry(comm[j]).or_default() += w;
            }
        }
        Self::finish(rows.into_iter().map(|r| r.into_iter().collect()).collect())
    }
}

/// Louvain optimisation of weighted modularity. Node visit order at each
/// level is shuffled with `seed`; ties between candidate communities go to
/// the lowest community id and a node only leaves its community for a
/// strictly positive gain.
pub fn louvain(net: &SyncNetwork, seed: u64) -> Result<Partition> {
    if net.nodes.is_empty() {
        return Err(Error::EmptyInput("louvain on an empty network"));
    }
    check_weights(net)?;
    let mut level = Level::from_network(net);
    let mut membership: Vec<usize> = (0..net.nodes.len()).collect();
    let mut rng = stream_rng(seed, 0);
    loop {
        let mut order: Vec<usize> = (0..level.adj.len()).collect();
        order.shuffle(&mut rng);
        let (comm, moved) = level.local_moves(&order);
        if !moved {
            break;
        }
        let comm = relabel(&comm);
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        level = level.aggregate(&comm);
    }
    let labels = relabel(&membership);
    let modularity = modularity_of(net, &labels)?;
    Ok(Partition { labels, modularity })
}

/// `investor community` table.
pub fn partition_tsv(net: &SyncNetwork, partition: &Partition) -> String {
    let mut out = String::from("investor\tcommunity\n");
    for (n, c) in net.nodes.iter().zip(&partition.labels) {
        out.push_str(&format!("{}\t{}\n", n.investor_id, c));
    }
    out
}
