//! Discrete-time SIR outbreaks seeded at each node.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::WGraph;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirConfig {
    pub beta: f64,
    pub gamma: f64,
    pub nsim: usize,
}

impl Default for SirConfig {
    fn default() -> Self {
        SirConfig {
            beta: 0.1,
            gamma: 1.0,
            nsim: 1000,
        }
    }
}

impl SirConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("SIR {name} = {v} not in (0, 1]")));
            }
        }
        if self.nsim == 0 {
            return Err(Error::config("SIR needs at least one simulation"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Susceptible,
    Infected,
    Recovered,
}

fn outbreak<R: Rng>(
    nbrs: &[Vec<usize>],
    seed: usize,
    beta: f64,
    gamma: f64,
    rng: &mut R,
    state: &mut [State],
) -> usize {
    state.fill(State::Susceptible);
    state[seed] = State::Infected;
    let mut infected = vec![seed];
    let mut ever = 1;
    let mut fresh = Vec::new();
    while !infected.is_empty() {
        fresh.clear();
        for &i in &infected {
            for &j in &nbrs[i] {
                if state[j] == State::Susceptible && rng.random::<f64>() < beta {
                    state[j] = State::Infected;
                    fresh.push(j);
                }
            }
        }
        ever += fresh.len();
        infected.retain(|&i| {
            let recover = rng.random::<f64>() < gamma;
            if recover {
                state[i] = State::Recovered;
            }
            !recover
        });
        infected.extend_from_slice(&fresh);
    }
    ever
}

/// Mean number of ever-infected nodes per seed node. Newly infected nodes
/// start spreading on the following step; each seed has its own stream.
pub fn sir_influence(g: &WGraph, cfg: &SirConfig, stream: RngStream) -> Result<Vec<f64>> {
    cfg.validate()?;
    let nbrs = g.neighbors();
    let mut state = vec![State::Susceptible; g.n()];
    Ok((0..g.n())
        .map(|s| {
            let mut rng = stream.derive(s as u64).rng();
            let total: usize = (0..cfg.nsim)
                .map(|_| outbreak(&nbrs, s, cfg.beta, cfg.gamma, &mut rng, &mut state))
                .sum();
            total as f64 / cfg.nsim as f64
        })
        .collect())
}

/// Size of the connected component containing each node.
pub fn component_sizes(g: &WGraph) -> Vec<usize> {
    let nbrs = g.neighbors();
    let mut comp = vec![usize::MAX; g.n()];
    let mut sizes = Vec::new();
    for s in 0..g.n() {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        comp[s] = id;
        let mut stack = vec![s];
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &w in &nbrs[v] {
                if comp[w] == usize::MAX {
                    comp[w] = id;
                    stack.push(w);
                }
            }
        }
        sizes.push(size);
    }
    comp.into_iter().map(|c| sizes[c]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(n: usize, e: &[(usize, usize)]) -> WGraph {
        WGraph::from_edges(n, e.iter().map(|&(a, b)| (a, b, 1.0)))
            .unwrap()
            .0
    }

    #[test]
    fn deterministic_spread() {
        let cfg = SirConfig {
            beta: 1.0,
            gamma: 1.0,
            nsim: 5,
        };
        let s = sir_influence(&graph(3, &[(0, 1)]), &cfg, RngStream::new(0, 0)).unwrap();
        assert_eq!(s, [2.0, 2.0, 1.0]);
        assert!(sir_influence(
            &graph(2, &[]),
            &SirConfig {
                beta: 0.0,
                ..cfg.clone()
            },
            RngStream::new(0, 0)
        )
        .is_err());
        assert!(sir_influence(
            &graph(2, &[]),
            &SirConfig { nsim: 0, ..cfg },
            RngStream::new(0, 0)
        )
        .is_err());
    }

    #[test]
    fn hub_dominates_star() {
        let star = graph(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
        let cfg = SirConfig {
            beta: 0.5,
            gamma: 1.0,
            nsim: 10_000,
        };
        let s = sir_influence(&star, &cfg, RngStream::new(3, 0)).unwrap();
        assert!(s[1..].iter().all(|&l| s[0] > l));
        assert!((s[0] - 3.5).abs() < 0.05 * 3.5, "{}", s[0]);
        // Leaf seed: 1 + β(1 + 4β) = 2.5.
        assert!((s[1] - 2.5).abs() < 0.05 * 2.5);
        assert_eq!(s, sir_influence(&star, &cfg, RngStream::new(3, 0)).unwrap());
    }

    #[test]
    fn slow_recovery_spreads_further() {
        let path = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let fast = SirConfig {
            beta: 0.3,
            gamma: 1.0,
            nsim: 4000,
        };
        let slow = SirConfig {
            gamma: 0.2,
            ..fast.clone()
        };
        let a = sir_influence(&path, &fast, RngStream::new(1, 0)).unwrap();
        let b = sir_influence(&path, &slow, RngStream::new(1, 0)).unwrap();
        assert!(b.iter().zip(&a).all(|(x, y)| x > y));
    }

    proptest! {
        #[test]
        fn full_transmission_fills_the_component(
            n in 1usize..=12,
            bits in prop::collection::vec(prop::bool::weighted(0.2), 66),
            seed in any::<u64>(),
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
            let cfg = SirConfig { beta: 1.0, gamma: 1.0, nsim: 3 };
            let s = sir_influence(&g, &cfg, RngStream::new(seed, 0)).unwrap();
            let want: Vec<f64> = component_sizes(&g).into_iter().map(|c| c as f64).collect();
            prop_assert_eq!(s, want);
        }
    }
}
