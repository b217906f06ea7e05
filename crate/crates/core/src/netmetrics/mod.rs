//! Network metrics: Louvain communities, attribute assortativity and its
//! null models.

pub mod assortativity;
pub mod louvain;
pub mod nulls;

pub use assortativity::{
    assortativity, assortativity_weighted, discretize_attribute, discretize_opd, endpoint_correlation, Discretization,
    MixingMatrix,
};
pub use louvain::{louvain, modularity_of, partition_tsv, Partition};
pub use nulls::{assortativity_with_nulls, double_edge_swap, null_rewire, null_shuffle, AssortativityResult, NullConfig, NullStats};
