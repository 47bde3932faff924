//! Query-time refinement metadata: hubness counts with a percentile cutoff,
//! and optional persistence-based confidence for a result list.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{cosine_distance, EmbeddingStore};

pub const DEFAULT_HUBNESS_K: usize = 10;
pub const HUBNESS_QUANTILE: f64 = 0.75;

/// Per-entity k-occurrence counts and the cutoff above which an entity is a hub.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubnessMetadata {
    pub k: usize,
    pub cutoff: u64,
    pub counts: BTreeMap<String, u64>,
}

impl HubnessMetadata {
    /// Counts occurrences with neighborhood size `k` and takes the 75th percentile.
    pub fn compute(store: &EmbeddingStore, k: usize) -> Result<Self> {
        let counts = hubness_counts(store, k)?;
        let cutoff = percentile_cutoff(&counts, HUBNESS_QUANTILE)?;
        Ok(HubnessMetadata {
            k,
            cutoff,
            counts: store.entities().iter().cloned().zip(counts).collect(),
        })
    }

    pub fn count(&self, entity: &str) -> u64 {
        self.counts.get(entity).copied().unwrap_or(0)
    }

    pub fn is_hub(&self, entity: &str) -> bool {
        self.count(entity) > self.cutoff
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// `counts[y]` = how many other entities have `y` among their `k` nearest
/// neighbors (the entity itself excluded). Indexed like the store.
pub fn hubness_counts(store: &EmbeddingStore, k: usize) -> Result<Vec<u64>> {
    if k == 0 || k >= store.len() {
        return Err(Error::InvalidArgument(format!(
            "hubness neighborhood must satisfy 1 <= k < {}, got {k}",
            store.len()
        )));
    }
    let mut counts = vec![0u64; store.len()];
    for x in 0..store.len() {
        for n in store.knn_excluding(store.vector_at(x), k, Some(x))? {
            let y = store.index_of(&n.entity).expect("neighbor comes from the store");
            counts[y] += 1;
        }
    }
    Ok(counts)
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(q * n)` of the sorted counts.
pub fn percentile_cutoff(counts: &[u64], q: f64) -> Result<u64> {
    if counts.is_empty() {
        return Err(Error::InvalidArgument("no counts to take a percentile of".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("quantile must lie in (0, 1], got {q}")));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Disjoint-set forest that also keeps the member list of each root.
#[derive(Debug, Clone)]
struct Components {
    parent: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Components {
    fn new(n: usize) -> Self {
        Components {
            parent: (0..n).collect(),
            members: (0..n).map(|i| vec![i]).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Merges the two roots (smaller into larger) and returns the surviving root.
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (big, small) = if self.members[a].len() >= self.members[b].len() {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small] = big;
        let moved = std::mem::take(&mut self.members[small]);
        self.members[big].extend(moved);
        big
    }
}

/// For points `1..n` of a symmetric distance matrix, the filtration value at
/// which each joins the component of point 0.
///
/// This is the largest edge on the minimum-spanning-tree path to point 0, i.e.
/// the 0-dimensional persistence merge time. Kruskal order breaks weight ties
/// by point index.
pub fn merge_distances(dist: &[Vec<f64>]) -> Vec<f64> {
    let n = dist.len();
    if n == 0 {
        return Vec::new();
    }
    let mut edges: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (dist[i][j], i, j))
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut merge = vec![0.0; n];
    let mut comps = Components::new(n);
    let mut joined = 1;
    for (w, i, j) in edges {
        if joined == n {
            break;
        }
        let (ri, rj) = (comps.find(i), comps.find(j));
        if ri == rj {
            continue;
        }
        let query_root = comps.find(0);
        let newcomer = if ri == query_root {
            Some(rj)
        } else if rj == query_root {
            Some(ri)
        } else {
            None
        };
        if let Some(other) = newcomer {
            for &m in &comps.members[other] {
                merge[m] = w;
            }
            joined += comps.members[other].len();
        }
        comps.union(ri, rj);
    }
    merge.remove(0);
    merge
}

/// `1 - merge / max(merge)`, or all ones when every merge value is equal.
pub fn confidence_from_merges(merges: &[f64]) -> Vec<f64> {
    let max = merges.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = merges.iter().copied().fold(f64::INFINITY, f64::min);
    if merges.is_empty() || max == min {
        return vec![1.0; merges.len()];
    }
    merges.iter().map(|m| 1.0 - m / max).collect()
}

/// Confidence in [0, 1] for each candidate, from how early it joins the
/// query's connected component as the cosine-distance threshold grows.
///
/// Duplicate candidates and the query itself are ignored. Result order
/// follows the first occurrence of each candidate.
pub fn persistence_confidence(
    store: &EmbeddingStore,
    query: &str,
    candidates: &[String],
) -> Result<Vec<(String, f64)>> {
    let qv = store
        .vector(query)
        .ok_or_else(|| Error::EntityNotFound(query.to_string()))?;
    let mut seen = HashSet::new();
    let mut points = vec![qv];
    let mut names = Vec::new();
    for c in candidates {
        if c == query || !seen.insert(c.as_str()) {
            continue;
        }
        let v = store
            .vector(c)
            .ok_or_else(|| Error::EntityNotFound(c.clone()))?;
        points.push(v);
        names.push(c.clone());
    }
    if names.is_empty() {
        return Err(Error::InvalidArgument("persistence needs at least one candidate".into()));
    }
    let mut dist = vec![vec![0.0; points.len()]; points.len()];
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = cosine_distance(points[i], points[j])?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let conf = confidence_from_merges(&merge_distances(&dist));
    Ok(names.into_iter().zip(conf).collect())
}
