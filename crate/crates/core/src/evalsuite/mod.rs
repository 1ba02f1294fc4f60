//! Enrichment, centrality and spreading baselines, topology diagnostics
//! and set overlap.

mod centrality;
mod gsea;
mod overlap;
mod spread;
mod topology;

pub use centrality::{
    betweenness, centralities, eigenvector, pagerank, Centralities, DAMPING, POWER_TOL,
};
pub use gsea::{
    benjamini_hochberg, curve_to_csv, gsea_all, gsea_preranked, gsea_to_tsv, rank_sum_greater,
    GseaConfig, GseaResult, Ranking,
};
pub use overlap::{
    intersections_to_tsv, jaccard, jaccard_matrix, jaccard_to_tsv, Intersection, Overlap,
};
pub use spread::{component_sizes, sir_influence, SirConfig};
pub use topology::{
    degree_histogram, heavy_tailed, histogram_to_tsv, topology_stats, topology_to_tsv, HistBin,
    TopologyStats,
};
