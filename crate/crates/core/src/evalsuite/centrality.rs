//! Centrality baselines: weighted degree, betweenness, eigenvector, PageRank.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::datamodel::WGraph;
use crate::error::{Error, Result};

pub const POWER_TOL: f64 = 1e-10;
const MAX_POWER_ITER: usize = 100_000;
pub const DAMPING: f64 = 0.85;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Centralities {
    pub degree: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub eigenvector: Vec<f64>,
    pub pagerank: Vec<f64>,
}

pub fn centralities(g: &WGraph) -> Result<Centralities> {
    if g.n() == 0 {
        return Err(Error::invalid("centralities of an empty graph"));
    }
    Ok(Centralities {
        degree: g.weighted_degrees(),
        betweenness: betweenness(g),
        eigenvector: eigenvector(g)?,
        pagerank: pagerank(g)?,
    })
}

/// Shortest-path counts through each node over unordered pairs, hop
/// distance, endpoints excluded (Brandes accumulation).
pub fn betweenness(g: &WGraph) -> Vec<f64> {
    let n = g.n();
    let nbrs = g.neighbors();
    let mut cb = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &nbrs[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &nbrs[w] {
                if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    // Each unordered pair was visited from both ends.
    cb.iter_mut().for_each(|c| *c /= 2.0);
    cb
}

/// Unit-norm principal eigenvector of the weighted adjacency, by power
/// iteration on `A + I` so bipartite graphs still converge.
pub fn eigenvector(g: &WGraph) -> Result<Vec<f64>> {
    let n = g.n();
    let adj = g.adjacency();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    for _ in 0..MAX_POWER_ITER {
        for i in 0..n {
            y[i] = x[i] + adj[i].iter().map(|&(j, w)| w * x[j]).sum::<f64>();
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::numeric("eigenvector iteration collapsed to zero"));
        }
        let mut diff = 0.0f64;
        for i in 0..n {
            let v = y[i] / norm;
            diff = diff.max((v - x[i]).abs());
            x[i] = v;
        }
        if diff < POWER_TOL {
            return Ok(x);
        }
    }
    Err(Error::numeric(format!(
        "eigenvector centrality did not converge in {MAX_POWER_ITER} iterations"
    )))
}

/// Weighted PageRank; dangling mass is spread uniformly.
pub fn pagerank(g: &WGraph) -> Result<Vec<f64>> {
    let n = g.n();
    let adj = g.adjacency();
    let strength = g.weighted_degrees();
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_POWER_ITER {
        let dangling: f64 = (0..n).filter(|&i| strength[i] <= 0.0).map(|i| x[i]).sum();
        let base = (1.0 - DAMPING) / nf + DAMPING * dangling / nf;
        next.fill(base);
        for i in 0..n {
            if strength[i] > 0.0 {
                let share = DAMPING * x[i] / strength[i];
                for &(j, w) in &adj[i] {
                    next[j] += share * w;
                }
            }
        }
        let diff: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if diff < POWER_TOL {
            let s: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= s);
            return Ok(x);
        }
    }
    Err(Error::numeric(format!(
        "pagerank did not converge in {MAX_POWER_ITER} iterations"
    )))
}
