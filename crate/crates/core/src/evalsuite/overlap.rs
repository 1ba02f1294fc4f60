//! Pairwise Jaccard overlap and exclusive (UpSet-style) intersections.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_SETS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    /// Indices of the sets in this combination.
    pub sets: Vec<usize>,
    /// Elements in exactly these sets and no other.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub names: Vec<String>,
    pub jaccard: Vec<Vec<f64>>,
    /// Pairs of empty sets, whose Jaccard is reported as 0.
    pub both_empty: Vec<(usize, usize)>,
    /// Every nonempty combination, by bitmask order.
    pub intersections: Vec<Intersection>,
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn jaccard_matrix(sets: &[(String, BTreeSet<String>)]) -> Result<Overlap> {
    let k = sets.len();
    if k < 2 {
        return Err(Error::invalid("overlap analysis needs at least two sets"));
    }
    if k > MAX_SETS {
        return Err(Error::invalid(format!("at most {MAX_SETS} sets, got {k}")));
    }
    let mut j = vec![vec![0.0; k]; k];
    let mut both_empty = Vec::new();
    for a in 0..k {
        for b in 0..k {
            j[a][b] = jaccard(&sets[a].1, &sets[b].1);
            if a < b && sets[a].1.is_empty() && sets[b].1.is_empty() {
                both_empty.push((a, b));
            }
        }
    }
    let mut membership: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, (_, s)) in sets.iter().enumerate() {
        for e in s {
            *membership.entry(e).or_default() |= 1 << i;
        }
    }
    let mut counts = vec![0usize; 1 << k];
    for mask in membership.values() {
        counts[*mask] += 1;
    }
    let intersections = (1..1usize << k)
        .map(|mask| Intersection {
            sets: (0..k).filter(|i| mask >> i & 1 == 1).collect(),
            count: counts[mask],
        })
        .collect();
    Ok(Overlap {
        names: sets.iter().map(|s| s.0.clone()).collect(),
        jaccard: j,
        both_empty,
        intersections,
    })
}

pub fn jaccard_to_tsv(o: &Overlap) -> String {
    let mut s = String::from("set");
    for n in &o.names {
        write!(s, "\t{n}").unwrap();
    }
    s.push('\n');
    for (n, row) in o.names.iter().zip(&o.jaccard) {
        s.push_str(n);
        for v in row {
            write!(s, "\t{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn intersections_to_tsv(o: &Overlap) -> String {
    let mut s = String::from("sets\tcount\n");
    for i in &o.intersections {
        let names: Vec<&str> = i.sets.iter().map(|&k| o.names[k].as_str()).collect();
        writeln!(s, "{}\t{}", names.join("&"), i.count).unwrap();
    }
    s
}
