//! Assortativity by a discrete scalar node attribute.
//!
//! `e_xy` is the fraction of edge endpoints pairs joining value `x` to value
//! `y`, with every undirected edge contributing both orientations, and
//! `r = sum_xy xy (e_xy - a_x b_y) / (sigma_a sigma_b)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::clamp_unit;
use crate::syncnet::SyncNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// Integer part, truncating toward zero.
    #[default]
    Truncate,
    Floor,
}

fn integer_part(scaled: f64, mode: Discretization) -> i64 {
    // 0.29 * 100 = 28.999999999999996 must still map to 29
    let snapped = if (scaled - scaled.round()).abs() < 1e-9 { scaled.round() } else { scaled };
    match mode {
        Discretization::Truncate => snapped.trunc() as i64,
        Discretization::Floor => snapped.floor() as i64,
    }
}

/// Integer score `int(value * 100)` for correlation-valued attributes.
pub fn discretize_attribute(values: &[f64], mode: Discretization) -> Result<Vec<i64>> {
    values
        .iter()
        .map(|&v| {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("attribute {v} outside [-1, 1]")));
            }
            Ok(integer_part(v * 100.0, mode))
        })
        .collect()
}

/// Integer part of operations-per-day, optionally capped.
pub fn discretize_opd(values: &[f64], cap: Option<i64>) -> Vec<i64> {
    values
        .iter()
        .map(|&v| {
            let s = integer_part(v, Discretization::Truncate);
            cap.map_or(s, |c| s.min(c))
        })
        .collect()
}

/// Mixing matrix over the distinct attribute values present on edge endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    pub values: Vec<i64>,
    /// Row-major `values.len()^2` fractions.
    pub e: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl MixingMatrix {
    /// Builds `e_xy` from undirected edges; `weights` switches to
    /// weight fractions instead of link fractions.
    pub fn from_edges(edges: &[(usize, usize)], weights: Option<&[f64]>, attribute: &[i64]) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::EmptyInput("assortativity needs at least one edge"));
        }
        let mut values: Vec<i64> = edges.iter().flat_map(|&(u, v)| [attribute[u], attribute[v]]).collect();
        values.sort_unstable();
        values.dedup();
        let k = values.len();
        let pos = |x: i64| values.binary_search(&x).expect("value present");
        let mut e = vec![0.0; k * k];
        let mut total = 0.0;
        for (idx, &(u, v)) in edges.iter().enumerate() {
            let w = weights.map_or(1.0, |ws| ws[idx]);
            let (x, y) = (pos(attribute[u]), pos(attribute[v]));
            e[x * k + y] += w;
            e[y * k + x] += w;
            total += 2.0 * w;
        }
        if total <= 0.0 {
            return Err(Error::Degenerate("zero total edge weight".into()));
        }
        for v in e.iter_mut() {
            *v /= total;
        }
        let a: Vec<f64> = (0..k).map(|x| (0..k).map(|y| e[x * k + y]).sum()).collect();
        let b: Vec<f64> = (0..k).map(|y| (0..k).map(|x| e[x * k + y]).sum()).collect();
        Ok(Self { values, e, a, b })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.e[x * self.values.len() + y]
    }

    pub fn assortativity(&self) -> Result<f64> {
        let k = self.values.len();
        let xs: Vec<f64> = self.values.iter().map(|&v| v as f64).collect();
        let moments = |m: &[f64]| {
            let mean: f64 = xs.iter().zip(m).map(|(x, p)| x * p).sum();
            let var: f64 = xs.iter().zip(m).map(|(x, p)| (x - mean) * (x - mean) * p).sum();
            var.sqrt()
        };
        let (sa, sb) = (moments(&self.a), moments(&self.b));
        if !(sa > 0.0 && sb > 0.0) {
            return Err(Error::Degenerate("attribute is constant over all edge endpoints".into()));
        }
        let mut acc = 0.0;
        for x in 0..k {
            for y in 0..k {
                acc += xs[x] * xs[y] * (self.get(x, y) - self.a[x] * self.b[y]);
            }
        }
        Ok(clamp_unit(acc / (sa * sb)))
    }
}

fn check_attribute(net: &SyncNetwork, attribute: &[i64]) -> Result<()> {
    if attribute.len() != net.nodes.len() {
        return Err(Error::InvalidParameter(format!(
            "attribute has {} entries, network has {} nodes",
            attribute.len(),
            net.nodes.len()
        )));
    }
    Ok(())
}

/// Assortativity over unweighted edges.
pub fn assortativity(net: &SyncNetwork, attribute: &[i64]) -> Result<f64> {
    check_attribute(net, attribute)?;
    MixingMatrix::from_edges(&net.edge_pairs(), None, attribute)?.assortativity()
}

/// Assortativity with `rho` edge weights.
pub fn assortativity_weighted(net: &SyncNetwork, attribute: &[i64]) -> Result<f64> {
    check_attribute(net, attribute)?;
    let w: Vec<f64> = net.edges.iter().map(|e| e.rho).collect();
    MixingMatrix::from_edges(&net.edge_pairs(), Some(&w), attribute)?.assortativity()
}

/// Pearson correlation of attribute values across both orientations of
/// every edge. Same quantity as [`assortativity`], computed without the
/// mixing matrix.
pub fn endpoint_correlation(edges: &[(usize, usize)], attribute: &[i64]) -> Result<f64> {
    if edges.is_empty() {
        return Err(Error::EmptyInput("assortativity needs at least one edge"));
    }
    let n = 2.0 * edges.len() as f64;
    let mean = edges.iter().map(|&(u, v)| (attribute[u] + attribute[v]) as f64).sum::<f64>() / n;
    let mut var = 0.0;
    let mut cov = 0.0;
    for &(u, v) in edges {
        let (x, y) = (attribute[u] as f64 - mean, attribute[v] as f64 - mean);
        var += x * x + y * y;
        cov += 2.0 * x * y;
    }
    if var <= 0.0 {
        return Err(Error::Degenerate("attribute is constant over all edge endpoints".into()));
    }
    Ok(clamp_unit(cov / var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{complete_bipartite, two_cliques};
    use proptest::prelude::*;

    #[test]
    fn discretization_truncates_toward_zero() {
        assert_eq!(discretize_attribute(&[0.379, -0.379, 1.0, -1.0, 0.0], Discretization::Truncate).unwrap(), vec![37, -37, 100, -100, 0]);
        assert_eq!(discretize_attribute(&[0.29, -0.29], Discretization::Truncate).unwrap(), vec![29, -29]);
        assert_eq!(discretize_attribute(&[-0.379], Discretization::Floor).unwrap(), vec![-38]);
        assert!(discretize_attribute(&[1.01], Discretization::Truncate).is_err());
        assert_eq!(discretize_opd(&[0.5, 1.99, 37.2], Some(20)), vec![0, 1, 20]);
    }

    #[test]
    fn perfectly_assortative_cliques() {
        let net = two_cliques(5);
        let attr: Vec<i64> = (0..10).map(|i| if i < 5 { 10 } else { 20 }).collect();
        assert_eq!(assortativity(&net, &attr).unwrap(), 1.0);
    }

    #[test]
    fn complete_bipartite_is_disassortative() {
        let net = complete_bipartite(4, 6);
        let attr: Vec<i64> = (0..10).map(|i| if i < 4 { 10 } else { 20 }).collect();
        let mm = MixingMatrix::from_edges(&net.edge_pairs(), None, &attr).unwrap();
        // 24 edges all across: e_{10,20} = e_{20,10} = 1/2
        assert_eq!(mm.values, vec![10, 20]);
        assert_eq!((mm.get(0, 0), mm.get(0, 1), mm.get(1, 0), mm.get(1, 1)), (0.0, 0.5, 0.5, 0.0));
        assert!((assortativity(&net, &attr).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixing_matrix_invariants() {
        let net = two_cliques(4);
        let attr = vec![1, 2, 3, 4, 1, 1, 2, 9];
        let mm = MixingMatrix::from_edges(&net.edge_pairs(), None, &attr).unwrap();
        let k = mm.values.len();
        assert!((mm.e.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for x in 0..k {
            for y in 0..k {
                assert_eq!(mm.get(x, y), mm.get(y, x));
            }
            assert!((mm.a[x] - mm.b[x]).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_attribute_is_undefined() {
        let net = two_cliques(3);
        assert!(matches!(assortativity(&net, &[5; 6]), Err(Error::Degenerate(_))));
        assert!(assortativity(&net, &[5; 3]).is_err());
    }

    #[test]
    fn weighted_variant_reduces_to_unweighted_for_unit_weights() {
        let net = two_cliques(4);
        let attr = vec![1, 2, 3, 4, 1, 1, 2, 9];
        assert!((assortativity(&net, &attr).unwrap() - assortativity_weighted(&net, &attr).unwrap()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn two_routes_agree(
            n in 3usize..25,
            raw in prop::collection::vec((0usize..25, 0usize..25), 1..60),
            attr in prop::collection::vec(-100i64..=100, 25),
        ) {
            let mut seen = std::collections::HashSet::new();
            let edges: Vec<(usize, usize)> = raw
                .into_iter()
                .map(|(a, b)| (a % n, b % n))
                .filter(|&(a, b)| a != b && seen.insert((a.min(b), a.max(b))))
                .collect();
            prop_assume!(!edges.is_empty());
            let mm = MixingMatrix::from_edges(&edges, None, &attr).unwrap();
            match (mm.assortativity(), endpoint_correlation(&edges, &attr)) {
                (Ok(r1), Ok(r2)) => {
                    prop_assert!((r1 - r2).abs() < 1e-12, "{} vs {}", r1, r2);
                    prop_assert!((-1.0..=1.0).contains(&r1));
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "routes disagree on definedness: {:?} {:?}", a, b),
            }
        }
    }
}
