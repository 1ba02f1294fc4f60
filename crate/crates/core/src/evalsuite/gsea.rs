//! Preranked enrichment with a gene-label permutation null.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datamodel::{GeneSet, GeneSetDB, GeneVocab};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Genes in descending score order, ties by ascending symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    symbols: Vec<String>,
    scores: Vec<f64>,
    index: HashMap<String, usize>,
}

impl Ranking {
    pub fn new(mut pairs: Vec<(String, f64)>) -> Result<Self> {
        if let Some((s, v)) = pairs.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!(
                "ranking score of {s} is {v}; scores must be finite and nonnegative"
            )));
        }
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut index = HashMap::with_capacity(pairs.len());
        for (i, (s, _)) in pairs.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::invalid(format!("gene {s} ranked twice")));
            }
        }
        let (symbols, scores) = pairs.into_iter().unzip();
        Ok(Ranking {
            symbols,
            scores,
            index,
        })
    }

    pub fn from_scores(vocab: &GeneVocab, scores: &[f64]) -> Result<Self> {
        if scores.len() != vocab.len() {
            return Err(Error::invalid(format!(
                "{} scores for {} genes",
                scores.len(),
                vocab.len()
            )));
        }
        Ranking::new(
            vocab
                .symbols()
                .iter()
                .cloned()
                .zip(scores.iter().copied())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn position(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GseaConfig {
    pub weight_exp: f64,
    pub nperm: usize,
}

impl Default for GseaConfig {
    fn default() -> Self {
        GseaConfig {
            weight_exp: 1.0,
            nperm: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GseaResult {
    pub set: String,
    /// Members found in the ranking.
    pub size: usize,
    /// False when no member is ranked; statistics are then absent.
    pub testable: bool,
    pub es: f64,
    pub nes: Option<f64>,
    pub p_value: Option<f64>,
    pub fdr: Option<f64>,
    /// Rank position of the extremum.
    pub peak: usize,
    pub leading_edge: Vec<String>,
    pub curve: Vec<f64>,
    /// Null samples drawn, and whether they enumerate every labelling.
    pub null_size: usize,
    pub exhaustive: bool,
}

struct Walk<'a> {
    scores: &'a [f64],
    weight_exp: f64,
}

impl Walk<'_> {
    fn weights(&self, hits: &[usize]) -> (Vec<f64>, f64) {
        let w: Vec<f64> = hits
            .iter()
            .map(|&p| self.scores[p].powf(self.weight_exp))
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            (w, total)
        } else {
            // Every hit carries zero score: fall back to equal steps.
            (vec![1.0; hits.len()], hits.len() as f64)
        }
    }

    /// Extremum of the running sum and its position. Only the points just
    /// before and at each hit, and the last position, can be extremal.
    fn enrichment(&self, hits: &[usize]) -> (f64, usize) {
        let n = self.scores.len();
        let k = hits.len();
        let (w, nr) = self.weights(hits);
        let nm = (n - k) as f64;
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |v: f64, p: usize| {
            if best.is_none_or(|(b, _)| v.abs() > b.abs()) {
                best = Some((v, p));
            }
        };
        let mut cum = 0.0;
        for (t, &p) in hits.iter().enumerate() {
            if p > 0 && (t == 0 || hits[t - 1] + 1 != p) {
                consider(cum / nr - (p - t) as f64 / nm, p - 1);
            }
            cum += w[t];
            consider(cum / nr - (p - t) as f64 / nm, p);
        }
        if hits[k - 1] + 1 < n {
            consider(cum / nr - (n - k) as f64 / nm, n - 1);
        }
        best.expect("at least one hit")
    }

    fn curve(&self, hits: &[usize]) -> Vec<f64> {
        let n = self.scores.len();
        let (w, nr) = self.weights(hits);
        let nm = (n - hits.len()) as f64;
        let (mut cum, mut misses, mut t) = (0.0, 0usize, 0usize);
        (0..n)
            .map(|i| {
                if t < hits.len() && hits[t] == i {
                    cum += w[t];
                    t += 1;
                } else {
                    misses += 1;
                }
                cum / nr - misses as f64 / nm
            })
            .collect()
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    c
}

/// Advances a sorted k-subset of `0..n` to its lexicographic successor.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let Some(i) = (0..k).rev().find(|&i| c[i] < n - k + i) else {
        return false;
    };
    c[i] += 1;
    for j in i + 1..k {
        c[j] = c[j - 1] + 1;
    }
    true
}

/// Enrichment of one set. When `nperm` covers every distinct placement of
/// the set's members the null is enumerated exactly.
pub fn gsea_preranked(
    ranking: &Ranking,
    set: &GeneSet,
    cfg: &GseaConfig,
    stream: RngStream,
) -> Result<GseaResult> {
    if cfg.nperm < 100 {
        return Err(Error::invalid(format!("nperm {} is below 100", cfg.nperm)));
    }
    if !(cfg.weight_exp.is_finite() && cfg.weight_exp >= 0.0) {
        return Err(Error::invalid(format!(
            "weight exponent {} must be nonnegative",
            cfg.weight_exp
        )));
    }
    let n = ranking.len();
    let mut hits: Vec<usize> = set
        .members
        .iter()
        .filter_map(|m| ranking.position(m))
        .collect();
    hits.sort_unstable();
    hits.dedup();
    let k = hits.len();
    let mut out = GseaResult {
        set: set.name.clone(),
        size: k,
        testable: false,
        es: 0.0,
        nes: None,
        p_value: None,
        fdr: None,
        peak: 0,
        leading_edge: Vec::new(),
        curve: Vec::new(),
        null_size: 0,
        exhaustive: false,
    };
    if k == 0 {
        return Ok(out);
    }
    if k == n {
        return Err(Error::invalid(format!(
            "set {} covers every ranked gene; the running sum has no misses",
            set.name
        )));
    }
    let walk = Walk {
        scores: ranking.scores(),
        weight_exp: cfg.weight_exp,
    };
    let (es, peak) = walk.enrichment(&hits);

    let mut null = Vec::new();
    let exhaustive = binomial(n, k) <= cfg.nperm as u128;
    if exhaustive {
        let mut c: Vec<usize> = (0..k).collect();
        loop {
            null.push(walk.enrichment(&c).0);
            if !next_combination(&mut c, n) {
                break;
            }
        }
    } else {
        let mut rng = stream.rng();
        null.reserve(cfg.nperm);
        for _ in 0..cfg.nperm {
            let mut c = index::sample(&mut rng, n, k).into_vec();
            c.sort_unstable();
            null.push(walk.enrichment(&c).0);
        }
    }
    let positive = es >= 0.0;
    let same: Vec<f64> = null
        .iter()
        .copied()
        .filter(|&v| (v >= 0.0) == positive)
        .collect();
    if !same.is_empty() {
        let extreme = same.iter().filter(|v| v.abs() >= es.abs()).count();
        out.p_value = Some(extreme as f64 / same.len() as f64);
        let mean = same.iter().map(|v| v.abs()).sum::<f64>() / same.len() as f64;
        if mean > 0.0 {
            out.nes = Some(es / mean);
        }
    }
    out.leading_edge = hits
        .iter()
        .filter(|&&p| if positive { p <= peak } else { p >= peak })
        .map(|&p| ranking.symbols()[p].clone())
        .collect();
    out.testable = true;
    out.es = es;
    out.peak = peak;
    out.curve = walk.curve(&hits);
    out.null_size = null.len();
    out.exhaustive = exhaustive;
    Ok(out)
}

/// BH step-up adjusted values, in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for r in (0..m).rev() {
        let i = order[r];
        running = running.min(p[i] * m as f64 / (r + 1) as f64);
        q[i] = running;
    }
    q
}

/// Every set in `db` against one ranking, with FDR across testable sets.
pub fn gsea_all(
    ranking: &Ranking,
    db: &GeneSetDB,
    cfg: &GseaConfig,
    stream: RngStream,
) -> Result<Vec<GseaResult>> {
    let mut out = Vec::with_capacity(db.len());
    for (k, set) in db.sets().iter().enumerate() {
        out.push(gsea_preranked(ranking, set, cfg, stream.derive(k as u64))?);
    }
    let tested: Vec<usize> = (0..out.len())
        .filter(|&i| out[i].p_value.is_some())
        .collect();
    let p: Vec<f64> = tested.iter().map(|&i| out[i].p_value.unwrap()).collect();
    for (&i, q) in tested.iter().zip(benjamini_hochberg(&p)) {
        out[i].fdr = Some(q);
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn gsea_to_tsv(results: &[GseaResult]) -> String {
    let mut s = String::from("set\tsize\tes\tnes\tp_value\tfdr\tleading_edge\n");
    for r in results {
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.set,
            r.size,
            if r.testable {
                r.es.to_string()
            } else {
                "NA".into()
            },
            opt(r.nes),
            opt(r.p_value),
            opt(r.fdr),
            r.leading_edge.join(",")
        )
        .unwrap();
    }
    s
}

/// `position,running_es` with 1-based positions.
pub fn curve_to_csv(result: &GseaResult) -> String {
    let mut s = String::from("position,running_es\n");
    for (i, v) in result.curve.iter().enumerate() {
        writeln!(s, "{},{}", i + 1, v).unwrap();
    }
    s
}

/// One-sided rank-sum p-value that `group` scores exceed the rest, by the
/// tie-corrected normal approximation with continuity correction.
pub fn rank_sum_greater(group: &[f64], rest: &[f64]) -> Result<f64> {
    let (n1, n2) = (group.len(), rest.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("rank-sum test needs two nonempty samples"));
    }
    let mut all: Vec<(f64, bool)> = group
        .iter()
        .map(|&v| (v, true))
        .chain(rest.iter().map(|&v| (v, false)))
        .collect();
    if all.iter().any(|v| v.0.is_nan()) {
        return Err(Error::invalid("rank-sum test: NaN value"));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len();
    let (mut r1, mut ties) = (0.0, 0.0);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        let mid = (i + j) as f64 / 2.0 + 1.0;
        r1 += mid * all[i..=j].iter().filter(|v| v.1).count() as f64;
        i = j + 1;
    }
    let (a, b, nf) = (n1 as f64, n2 as f64, n as f64);
    let u = r1 - a * (a + 1.0) / 2.0;
    let var = a * b / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = (u - a * b / 2.0 - 0.5) / var.sqrt();
    Ok(0.5 * libm::erfc(z / std::f64::consts::SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranking(scores: &[f64]) -> Ranking {
        Ranking::new(
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| (format!("g{i}"), s))
                .collect(),
        )
        .unwrap()
    }

    fn set(members: &[usize]) -> GeneSet {
        GeneSet {
            name: "S".into(),
            description: String::new(),
            members: members.iter().map(|i| format!("g{i}")).collect(),
        }
    }

    fn cfg() -> GseaConfig {
        GseaConfig::default()
    }

    fn abcd() -> Ranking {
        Ranking::new(vec![
            ("A".into(), 4.0),
            ("B".into(), 3.0),
            ("C".into(), 2.0),
            ("D".into(), 1.0),
        ])
        .unwrap()
    }

    fn named(m: &[&str]) -> GeneSet {
        GeneSet {
            name: "S".into(),
            description: String::new(),
            members: m.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn hand_run_sums() {
        let r = gsea_preranked(&abcd(), &named(&["A"]), &cfg(), RngStream::new(0, 0)).unwrap();
        assert_eq!(r.es, 1.0);
        assert_eq!(r.leading_edge, ["A"]);
        let r = gsea_preranked(&abcd(), &named(&["D"]), &cfg(), RngStream::new(0, 0)).unwrap();
        assert_eq!(r.es, -1.0);
        assert_eq!(r.leading_edge, ["D"]);
        assert!(r.exhaustive && r.null_size == 4);
        assert!(gsea_preranked(
            &abcd(),
            &named(&["A", "B", "C", "D"]),
            &cfg(),
            RngStream::new(0, 0)
        )
        .is_err());
        let r = gsea_preranked(&abcd(), &named(&["Z"]), &cfg(), RngStream::new(0, 0)).unwrap();
        assert!(!r.testable && r.p_value.is_none());
        let few = GseaConfig { nperm: 10, ..cfg() };
        assert!(gsea_preranked(&abcd(), &named(&["A"]), &few, RngStream::new(0, 0)).is_err());
    }

    /// Running sum written straight from its definition, position by position.
    fn brute_es(scores: &[f64], member: &[bool], p: f64) -> f64 {
        let n = scores.len();
        let k = member.iter().filter(|&&m| m).count();
        let mut nr = 0.0;
        for i in 0..n {
            if member[i] {
                nr += scores[i].powf(p);
            }
        }
        let nr_zero = nr == 0.0;
        if nr_zero {
            nr = k as f64;
        }
        let mut best = 0.0f64;
        for i in 0..n {
            let mut hit = 0.0;
            let mut miss = 0;
            for j in 0..=i {
                if member[j] {
                    hit += if nr_zero { 1.0 } else { scores[j].powf(p) };
                } else {
                    miss += 1;
                }
            }
            let v = hit / nr - miss as f64 / (n - k) as f64;
            if v.abs() > best.abs() {
                best = v;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn es_matches_brute_force(
            raw in prop::collection::vec(0u8..5, 2..=8),
            picks in prop::collection::vec(any::<prop::sample::Index>(), 1..=4),
            p in prop::sample::select(vec![0.0, 1.0, 2.0]),
        ) {
            let scores: Vec<f64> = raw.iter().map(|&v| v as f64 * 0.75).collect();
            let r = ranking(&scores);
            let mut ids: Vec<usize> = picks.iter().map(|ix| ix.index(scores.len())).collect();
            ids.sort_unstable();
            ids.dedup();
            prop_assume!(ids.len() < scores.len());
            let members: Vec<usize> = ids.iter().map(|&pos| r.symbols()[pos][1..].parse().unwrap()).collect();
            let g = GseaConfig { weight_exp: p, nperm: 100 };
            let res = gsea_preranked(&r, &set(&members), &g, RngStream::new(1, 1)).unwrap();
            let mut mask = vec![false; scores.len()];
            for &i in &ids {
                mask[i] = true;
            }
            prop_assert_eq!(res.es, brute_es(r.scores(), &mask, p));
            let curve_best = res.curve.iter().fold(0.0f64, |b, &v| if v.abs() > b.abs() { v } else { b });
            prop_assert_eq!(res.es, curve_best);
        }

        #[test]
        fn exhaustive_p_matches_all_label_permutations(
            raw in prop::collection::vec(1u8..6, 2..=7),
            picks in prop::collection::vec(any::<prop::sample::Index>(), 1..=3),
        ) {
            let scores: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
            let n = scores.len();
            let r = ranking(&scores);
            let mut ids: Vec<usize> = picks.iter().map(|ix| ix.index(n)).collect();
            ids.sort_unstable();
            ids.dedup();
            prop_assume!(ids.len() < n);
            let members: Vec<usize> = ids.iter().map(|&pos| r.symbols()[pos][1..].parse().unwrap()).collect();
            let res = gsea_preranked(&r, &set(&members), &GseaConfig { weight_exp: 1.0, nperm: 5040 }, RngStream::new(1, 1)).unwrap();
            prop_assert!(res.exhaustive);
            // Every permutation of gene labels over positions.
            let mut perm: Vec<usize> = (0..n).collect();
            let (mut same, mut extreme) = (0u64, 0u64);
            let pos_es = res.es >= 0.0;
            loop {
                let mut mask = vec![false; n];
                for &i in &ids {
                    mask[perm[i]] = true;
                }
                let e = brute_es(r.scores(), &mask, 1.0);
                if (e >= 0.0) == pos_es {
                    same += 1;
                    if e.abs() >= res.es.abs() {
                        extreme += 1;
                    }
                }
                // Lexicographic next permutation.
                let Some(i) = (0..n - 1).rev().find(|&i| perm[i] < perm[i + 1]) else { break };
                let j = (i + 1..n).rev().find(|&j| perm[j] > perm[i]).unwrap();
                perm.swap(i, j);
                perm[i + 1..].reverse();
            }
            prop_assert_eq!(res.p_value, Some(extreme as f64 / same as f64));
        }
    }

    #[test]
    fn sampled_null_is_seeded() {
        let scores: Vec<f64> = (0..60).map(|i| 60.0 - i as f64).collect();
        let r = ranking(&scores);
        let s = set(&[0, 1, 2, 4, 7, 30]);
        let a = gsea_preranked(&r, &s, &cfg(), RngStream::new(5, 0)).unwrap();
        let b = gsea_preranked(&r, &s, &cfg(), RngStream::new(5, 0)).unwrap();
        assert_eq!(a, b);
        assert!(!a.exhaustive && a.null_size == 1000);
        assert!(a.es > 0.5 && a.p_value.unwrap() < 0.01 && a.nes.unwrap() > 1.0);
        assert!(a.leading_edge.len() >= 4 && a.leading_edge.len() <= 6);
    }

    #[test]
    fn bh_examples() {
        let q = benjamini_hochberg(&[0.01, 0.04, 0.03, 0.5]);
        let want = [0.04, 0.16 / 3.0, 0.16 / 3.0, 0.5];
        for (a, b) in q.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{q:?}");
        }
        assert!(benjamini_hochberg(&[]).is_empty());
    }

    #[test]
    fn rank_sum_examples() {
        let hi: Vec<f64> = (50..60).map(f64::from).collect();
        let lo: Vec<f64> = (0..50).map(f64::from).collect();
        assert!(rank_sum_greater(&hi, &lo).unwrap() < 1e-5);
        assert!(rank_sum_greater(&lo, &hi).unwrap() > 0.999);
        let p = rank_sum_greater(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(p, 1.0);
    }
}
