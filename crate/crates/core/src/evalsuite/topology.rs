//! Global graph statistics and degree histograms.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datamodel::WGraph;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyStats {
    pub nodes: usize,
    pub edges: usize,
    pub max_degree: usize,
    pub triangles: u64,
    pub clustering: f64,
    pub efficiency: f64,
}

/// Triangles through sorted-adjacency intersection, each counted once.
fn triangles(nbrs: &[Vec<usize>]) -> u64 {
    let mut t = 0u64;
    for (i, ni) in nbrs.iter().enumerate() {
        for &j in ni.iter().filter(|&&j| j > i) {
            let (mut a, mut b) = (0, 0);
            let nj = &nbrs[j];
            while a < ni.len() && b < nj.len() {
                match ni[a].cmp(&nj[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        if ni[a] > j {
                            t += 1;
                        }
                        a += 1;
                        b += 1;
                    }
                }
            }
        }
    }
    t
}

/// Mean inverse hop distance over unordered pairs, unreachable pairs 0.
fn efficiency(nbrs: &[Vec<usize>]) -> f64 {
    let n = nbrs.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut dist = vec![usize::MAX; n];
    let mut q = VecDeque::new();
    for s in 0..n {
        dist.fill(usize::MAX);
        dist[s] = 0;
        q.push_back(s);
        while let Some(v) = q.pop_front() {
            for &w in &nbrs[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
            }
        }
        total += dist[s + 1..]
            .iter()
            .filter(|&&d| d != usize::MAX)
            .map(|&d| 1.0 / d as f64)
            .sum::<f64>();
    }
    total / (n * (n - 1) / 2) as f64
}

pub fn topology_stats(g: &WGraph) -> Result<TopologyStats> {
    if g.n() == 0 {
        return Err(Error::invalid("topology of an empty graph"));
    }
    let nbrs = g.neighbors();
    let deg = g.degrees();
    let t = triangles(&nbrs);
    let triplets: u64 = deg
        .iter()
        .map(|&d| (d as u64) * (d as u64).saturating_sub(1) / 2)
        .sum();
    Ok(TopologyStats {
        nodes: g.n(),
        edges: g.edge_count(),
        max_degree: deg.iter().copied().max().unwrap_or(0),
        triangles: t,
        clustering: if triplets == 0 {
            0.0
        } else {
            3.0 * t as f64 / triplets as f64
        },
        efficiency: efficiency(&nbrs),
    })
}

/// Degrees in `[lo, hi)`; `density` is `count / (hi − lo)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub density: f64,
}

/// Exact per-degree counts, or power-of-two bins `[2^k, 2^(k+1))` with
/// degree 0 in its own bin. Only nonempty exact degrees are listed; log
/// bins run contiguously up to the largest degree.
pub fn degree_histogram(g: &WGraph, log_binned: bool) -> Result<Vec<HistBin>> {
    if g.n() == 0 {
        return Err(Error::invalid("degree histogram of an empty graph"));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for d in g.degrees() {
        *counts.entry(d).or_default() += 1;
    }
    if !log_binned {
        return Ok(counts
            .into_iter()
            .map(|(d, c)| HistBin {
                lo: d,
                hi: d + 1,
                count: c,
                density: c as f64,
            })
            .collect());
    }
    let max = *counts.keys().next_back().unwrap();
    let mut bins = Vec::new();
    if let Some(&c) = counts.get(&0) {
        bins.push(HistBin {
            lo: 0,
            hi: 1,
            count: c,
            density: c as f64,
        });
    }
    let mut lo = 1;
    while lo <= max {
        let hi = lo * 2;
        let count: usize = counts.range(lo..hi).map(|(_, c)| c).sum();
        bins.push(HistBin {
            lo,
            hi,
            count,
            density: count as f64 / (hi - lo) as f64,
        });
        lo = hi;
    }
    Ok(bins)
}

/// Counts never rise past the fullest bin (the first such bin on ties).
pub fn heavy_tailed(bins: &[HistBin]) -> bool {
    let Some(mode) =
        (0..bins.len()).max_by(|&a, &b| bins[a].count.cmp(&bins[b].count).then(b.cmp(&a)))
    else {
        return false;
    };
    bins[mode..].windows(2).all(|w| w[1].count <= w[0].count)
}

pub fn topology_to_tsv(rows: &[(&str, &TopologyStats)]) -> String {
    let mut s =
        String::from("network\tnodes\tedges\tmax_degree\ttriangles\tclustering\tefficiency\n");
    for (name, t) in rows {
        writeln!(
            s,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}",
            t.nodes, t.edges, t.max_degree, t.triangles, t.clustering, t.efficiency
        )
        .unwrap();
    }
    s
}

pub fn histogram_to_tsv(bins: &[HistBin]) -> String {
    let mut s = String::from("lo\thi\tcount\tdensity\n");
    for b in bins {
        writeln!(s, "{}\t{}\t{}\t{}", b.lo, b.hi, b.count, b.density).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use proptest::prelude::*;

    fn graph(n: usize, e: &[(usize, usize)]) -> WGraph {
        WGraph::from_edges(n, e.iter().map(|&(a, b)| (a, b, 1.0)))
            .unwrap()
            .0
    }

    #[test]
    fn small_graphs() {
        let k3 = topology_stats(&graph(3, &[(0, 1), (1, 2), (0, 2)])).unwrap();
        assert_eq!(
            (k3.max_degree, k3.triangles, k3.clustering, k3.efficiency),
            (2, 1, 1.0, 1.0)
        );
        let star = topology_stats(&graph(4, &[(0, 1), (0, 2), (0, 3)])).unwrap();
        assert_eq!((star.triangles, star.clustering), (0, 0.0));
        let p3 = topology_stats(&graph(3, &[(0, 1), (1, 2)])).unwrap();
        assert!((p3.efficiency - 5.0 / 6.0).abs() < 1e-15);
        let iso = topology_stats(&WGraph::empty(1)).unwrap();
        assert_eq!((iso.max_degree, iso.efficiency), (0, 0.0));
        assert!(topology_stats(&WGraph::empty(0)).is_err());
    }

    #[test]
    fn histograms() {
        let star = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let h = degree_histogram(&star, false).unwrap();
        assert_eq!(
            h.iter().map(|b| (b.lo, b.count)).collect::<Vec<_>>(),
            [(1, 3), (3, 1)]
        );
        let h = degree_histogram(&WGraph::empty(5), false).unwrap();
        assert_eq!(
            h.iter().map(|b| (b.lo, b.count)).collect::<Vec<_>>(),
            [(0, 5)]
        );
        let lb = degree_histogram(&star, true).unwrap();
        assert_eq!(
            lb.iter().map(|b| (b.lo, b.hi, b.count)).collect::<Vec<_>>(),
            [(1, 2, 3), (2, 4, 1)]
        );
        assert_eq!(lb[1].density, 0.5);
        assert!(heavy_tailed(&lb));
        let rising = [(1, 1), (2, 5), (4, 2), (8, 3)].map(|(lo, count)| HistBin {
            lo,
            hi: 2 * lo,
            count,
            density: 0.0,
        });
        assert!(!heavy_tailed(&rising));
    }

    proptest! {
        #[test]
        fn triangles_match_trace_of_cube(
            n in 1usize..=12,
            bits in prop::collection::vec(prop::bool::weighted(0.4), 66),
        ) {
            let mut e = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if bits[k] {
                        e.push((i, j));
                    }
                    k += 1;
                }
            }
            let g = graph(n, &e);
            let a = g.dense();
            let a3: Matrix = a.matmul(&a).matmul(&a);
            let trace: f64 = (0..n).map(|i| a3.get(i, i)).sum();
            let t = topology_stats(&g).unwrap();
            prop_assert_eq!(t.triangles as f64, trace / 6.0);
            prop_assert!((0.0..=1.0).contains(&t.clustering));
            prop_assert!((0.0..=1.0).contains(&t.efficiency));
            let total: usize = degree_histogram(&g, false).unwrap().iter().map(|b| b.count).sum();
            prop_assert_eq!(total, n);
            let total: usize = degree_histogram(&g, true).unwrap().iter().map(|b| b.count).sum();
            prop_assert_eq!(total, n);
        }
    }
}
