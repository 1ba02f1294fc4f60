//! Consensus network from several input networks by random-walk-with-restart
//! diffusion, averaging and per-node sparsification.

use serde::{Deserialize, Serialize};

use crate::datamodel::WGraph;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    /// Restart probability in (0, 1].
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Scores kept per node before taking the union over endpoints.
    pub top_k: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            alpha: 0.5,
            max_iter: 10_000,
            tol: 1e-9,
            top_k: 10,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!(
                "diffusion alpha {} not in (0, 1]",
                self.alpha
            )));
        }
        if self.top_k == 0 {
            return Err(Error::config("consensus top_k must be at least 1"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::config("diffusion tol and max_iter must be positive"));
        }
        Ok(())
    }
}

/// Row-normalized transition matrix; isolated nodes keep their mass.
pub fn transition_matrix(w: &WGraph) -> Matrix {
    let n = w.n();
    let mut p = w.dense();
    for i in 0..n {
        let row = p.row_mut(i);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            row[i] = 1.0;
        }
    }
    p
}

/// `S = α Σ_t (1-α)^t P^t`, iterated as `S ← αI + (1-α) P S`.
pub fn diffuse(w: &WGraph, cfg: &DiffusionConfig) -> Result<Matrix> {
    cfg.validate()?;
    let n = w.n();
    if n == 0 {
        return Err(Error::invalid("diffuse: empty graph"));
    }
    let p = transition_matrix(w);
    let a = cfg.alpha;
    let mut s = Matrix::identity(n);
    s.scale_in_place(a);
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let mut next = p.matmul(&s);
        next.scale_in_place(1.0 - a);
        for i in 0..n {
            next.set(i, i, next.get(i, i) + a);
        }
        residual = next
            .as_slice()
            .iter()
            .zip(s.as_slice())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        s = next;
        if residual < cfg.tol {
            return Ok(s);
        }
    }
    Err(Error::numeric(format!(
        "diffusion did not converge in {} iterations (residual {residual:e})",
        cfg.max_iter
    )))
}

fn symmetrize(m: &mut Matrix) {
    let n = m.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
}

/// Mean over graphs of the symmetrized diffused adjacency `S·W`.
pub fn fused_scores(graphs: &[WGraph], cfg: &DiffusionConfig) -> Result<Matrix> {
    let Some(first) = graphs.first() else {
        return Err(Error::invalid("consensus needs at least one graph"));
    };
    let n = first.n();
    if let Some(g) = graphs.iter().find(|g| g.n() != n) {
        return Err(Error::invalid(format!(
            "consensus: graphs disagree on vocabulary size ({} vs {n})",
            g.n()
        )));
    }
    let mut total = Matrix::zeros(n, n);
    for g in graphs {
        let s = diffuse(g, cfg)?;
        let mut f = s.matmul(&g.dense());
        symmetrize(&mut f);
        total.add_assign(&f);
    }
    total.scale_in_place(1.0 / graphs.len() as f64);
    Ok(total)
}

/// Min-max rescaled fused scores, sparsified to each node's top-k.
///
/// Only pairs with a positive fused score are candidates, so nodes in
/// different components of every input never become linked.
pub fn consensus(graphs: &[WGraph], cfg: &DiffusionConfig) -> Result<WGraph> {
    let f = fused_scores(graphs, cfg)?;
    let n = f.rows();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                lo = lo.min(f.get(i, j));
                hi = hi.max(f.get(i, j));
            }
        }
    }
    let range = hi - lo;
    let rescale = |v: f64| {
        if range > 0.0 {
            ((v - lo) / range).clamp(0.0, 1.0)
        } else {
            1.0
        }
    };

    let mut keep = vec![false; n * n];
    let mut cand: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i && f.get(i, j) > 0.0));
        cand.sort_by(|&a, &b| f.get(i, b).total_cmp(&f.get(i, a)).then(a.cmp(&b)));
        for &j in cand.iter().take(cfg.top_k) {
            keep[i.min(j) * n + i.max(j)] = true;
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if keep[i * n + j] {
                edges.push((i, j, rescale(f.get(i, j))));
            }
        }
    }
    Ok(WGraph::from_edges(n, edges)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(n: usize, e: &[(usize, usize, f64)]) -> WGraph {
        WGraph::from_edges(n, e.iter().copied()).unwrap().0
    }

    fn cfg(alpha: f64, k: usize) -> DiffusionConfig {
        DiffusionConfig {
            alpha,
            top_k: k,
            tol: 1e-13,
            ..DiffusionConfig::default()
        }
    }

    // α (I - (1-α) P)^{-1} by Gauss-Jordan elimination.
    fn closed_form(w: &WGraph, alpha: f64) -> Matrix {
        let n = w.n();
        let p = transition_matrix(w);
        let mut a = Matrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, a.get(i, j) - (1.0 - alpha) * p.get(i, j));
            }
        }
        let mut inv = Matrix::identity(n);
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&x, &y| a.get(x, c).abs().total_cmp(&a.get(y, c).abs()))
                .unwrap();
            for k in 0..n {
                let (t1, t2) = (a.get(c, k), a.get(piv, k));
                a.set(c, k, t2);
                a.set(piv, k, t1);
                let (t1, t2) = (inv.get(c, k), inv.get(piv, k));
                inv.set(c, k, t2);
                inv.set(piv, k, t1);
            }
            let d = a.get(c, c);
            for k in 0..n {
                a.set(c, k, a.get(c, k) / d);
                inv.set(c, k, inv.get(c, k) / d);
            }
            for r in 0..n {
                if r != c {
                    let f = a.get(r, c);
                    for k in 0..n {
                        a.set(r, k, a.get(r, k) - f * a.get(c, k));
                        inv.set(r, k, inv.get(r, k) - f * inv.get(c, k));
                    }
                }
            }
        }
        inv.scale_in_place(alpha);
        inv
    }

    #[test]
    fn diffusion_examples() {
        let s = diffuse(&g(2, &[(0, 1, 1.0)]), &cfg(0.5, 1)).unwrap();
        assert!((s.get(0, 0) - 2.0 / 3.0).abs() < 1e-9);
        assert!((s.get(0, 1) - 1.0 / 3.0).abs() < 1e-9);

        let s = diffuse(&WGraph::empty(1), &cfg(0.5, 1)).unwrap();
        assert!((s.get(0, 0) - 1.0).abs() < 1e-12);

        let s = diffuse(&g(4, &[(0, 1, 1.0), (2, 3, 2.0)]), &cfg(0.3, 1)).unwrap();
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert_eq!(s.get(i, j), 0.0);
            assert_eq!(s.get(j, i), 0.0);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let c = DiffusionConfig {
            alpha: 0.01,
            max_iter: 3,
            ..DiffusionConfig::default()
        };
        let err = diffuse(&g(3, &[(0, 1, 1.0), (1, 2, 1.0)]), &c).unwrap_err();
        assert!(matches!(err, Error::Numeric(m) if m.contains("residual")));
    }

    #[test]
    fn repeated_graphs_equal_single() {
        let a = g(5, &[(0, 1, 1.0), (1, 2, 0.5), (3, 4, 1.0), (2, 3, 0.2)]);
        let one = consensus(&[a.clone()], &cfg(0.5, 2)).unwrap();
        let three = consensus(&[a.clone(), a.clone(), a], &cfg(0.5, 2)).unwrap();
        assert_eq!(one.edges().len(), three.edges().len());
        for (x, y) in one.edges().iter().zip(three.edges()) {
            assert_eq!((x.0, x.1), (y.0, y.1));
            assert!((x.2 - y.2).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_stars_stay_apart() {
        let a = g(8, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]);
        let b = g(8, &[(4, 5, 1.0), (4, 6, 1.0), (4, 7, 1.0)]);
        let c = consensus(&[a, b], &cfg(0.5, 7)).unwrap();
        assert!(c.edges().iter().all(|&(i, j, _)| (i < 4) == (j < 4)));
        assert!(!c.edges().is_empty());
    }

    #[test]
    fn vocabulary_mismatch() {
        assert!(consensus(&[WGraph::empty(3), WGraph::empty(4)], &cfg(0.5, 1)).is_err());
        assert!(consensus(&[], &cfg(0.5, 1)).is_err());
    }

    fn random_graph(n: usize, bits: &[bool], weights: &[f64]) -> WGraph {
        let mut e = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if bits[k % bits.len()] {
                    e.push((i, j, weights[k % weights.len()]));
                }
                k += 1;
            }
        }
        g(n, &e)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_closed_form(bits in prop::collection::vec(any::<bool>(), 10), w in prop::collection::vec(0.1f64..2.0, 10), alpha in 0.1f64..1.0) {
            let gr = random_graph(5, &bits, &w);
            let s = diffuse(&gr, &cfg(alpha, 1)).unwrap();
            prop_assert!(s.max_abs_diff(&closed_form(&gr, alpha)) < 1e-9);
        }

        #[test]
        fn direct_links_survive(bits in prop::collection::vec(any::<bool>(), 10), w in prop::collection::vec(0.1f64..2.0, 10)) {
            let gr = random_graph(5, &bits, &w);
            let kmax = gr.degrees().into_iter().max().unwrap_or(0).max(1);
            let out = consensus(&[gr.clone()], &cfg(0.5, 4)).unwrap();
            for &(i, j, _) in gr.edges() {
                prop_assert!(out.has_edge(i, j), "lost {i}-{j}");
            }
            // With α = 1 the scores are the adjacency itself, so k ≥ degree keeps every edge.
            let out1 = consensus(&[gr.clone()], &cfg(1.0, kmax)).unwrap();
            for &(i, j, _) in gr.edges() {
                prop_assert!(out1.has_edge(i, j));
            }
        }

        #[test]
        fn output_shape_and_order_invariance(
            b1 in prop::collection::vec(any::<bool>(), 45),
            b2 in prop::collection::vec(any::<bool>(), 45),
            w in prop::collection::vec(0.1f64..2.0, 45),
            k in 1usize..6,
        ) {
            let g1 = random_graph(10, &b1, &w);
            let g2 = random_graph(10, &b2, &w[5..]);
            let c = cfg(0.5, k);
            let a = consensus(&[g1.clone(), g2.clone()], &c).unwrap();
            let b = consensus(&[g2, g1], &c).unwrap();
            prop_assert_eq!(a.edges().len(), b.edges().len());
            for (x, y) in a.edges().iter().zip(b.edges()) {
                prop_assert_eq!((x.0, x.1), (y.0, y.1));
                prop_assert!((x.2 - y.2).abs() < 1e-12);
            }
            for &(i, j, wt) in a.edges() {
                prop_assert!(i < j);
                prop_assert!((0.0..=1.0).contains(&wt));
            }
        }

        #[test]
        fn alpha_one_is_rescaled_adjacency_top_k(
            bits in prop::collection::vec(any::<bool>(), 45),
            w in prop::collection::vec(0.1f64..2.0, 45),
            k in 1usize..5,
        ) {
            let gr = random_graph(10, &bits, &w);
            let out = consensus(&[gr.clone()], &cfg(1.0, k)).unwrap();
            // Oracle: rank each row of the dense adjacency directly.
            let a = gr.dense();
            let n = 10;
            let mut keep = std::collections::BTreeSet::new();
            for i in 0..n {
                let mut js: Vec<usize> = (0..n).filter(|&j| j != i && a.get(i, j) > 0.0).collect();
                js.sort_by(|&x, &y| a.get(i, y).partial_cmp(&a.get(i, x)).unwrap().then(x.cmp(&y)));
                for &j in js.iter().take(k) {
                    keep.insert((i.min(j), i.max(j)));
                }
            }
            let hi = gr.edges().iter().map(|e| e.2).fold(0.0f64, f64::max);
            let lo = if gr.edges().len() == n * (n - 1) / 2 {
                gr.edges().iter().map(|e| e.2).fold(f64::INFINITY, f64::min)
            } else { 0.0 };
            let got: Vec<_> = out.edges().iter().map(|e| (e.0, e.1)).collect();
            prop_assert_eq!(got, keep.iter().copied().collect::<Vec<_>>());
            for &(i, j, wt) in out.edges() {
                let want = if hi > lo { (a.get(i, j) - lo) / (hi - lo) } else { 1.0 };
                prop_assert!((wt - want).abs() < 1e-12);
            }
        }
    }
}
