//! Record-linkage and concept-expansion evaluation, plus a seeded synthetic
//! dataset with known groups for desk-scale experiments.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::extract::{SourceKind, Triple};
use crate::join::termite_join;
use crate::refine::HubnessMetadata;
use crate::store::EmbeddingStore;

/// Disjoint clusters, each holding alternative spellings of one real-world entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkageGroundTruth {
    pub clusters: Vec<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptGroundTruth {
    pub concept: String,
    pub instances: BTreeSet<String>,
}

impl LinkageGroundTruth {
    pub fn new(clusters: Vec<BTreeSet<String>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &clusters {
            if c.len() < 2 {
                return Err(Error::InvalidArgument("linkage clusters need at least two members".into()));
            }
            for m in c {
                if !seen.insert(m.as_str()) {
                    return Err(Error::InvalidArgument(format!("`{m}` appears in two clusters")));
                }
            }
        }
        Ok(LinkageGroundTruth { clusters })
    }

    /// One cluster per line, members tab-separated.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let clusters = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split('\t')
                    .map(str::trim)
                    .filter(|m| !m.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .collect();
        Self::new(clusters).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for c in &self.clusters {
            out.push_str(&c.iter().cloned().collect::<Vec<_>>().join("\t"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

impl ConceptGroundTruth {
    pub fn new(concept: impl Into<String>, instances: BTreeSet<String>) -> Result<Self> {
        let concept = concept.into();
        if instances.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "concept `{concept}` needs at least two instances"
            )));
        }
        Ok(ConceptGroundTruth { concept, instances })
    }

    /// `concept<TAB>member` lines; concepts keep their first-seen order.
    pub fn load_all(path: &Path) -> Result<Vec<Self>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut grouped: Vec<(String, BTreeSet<String>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (concept, member) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected concept<TAB>member".into(),
            })?;
            let (concept, member) = (concept.trim(), member.trim());
            match grouped.iter_mut().find(|(c, _)| c == concept) {
                Some((_, set)) => {
                    set.insert(member.to_string());
                }
                None => grouped.push((concept.to_string(), BTreeSet::from([member.to_string()]))),
            }
        }
        grouped
            .into_iter()
            .map(|(c, set)| Self::new(c, set))
            .collect::<Result<_>>()
            .map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save_all(concepts: &[Self], path: &Path) -> Result<()> {
        let mut out = String::new();
        for c in concepts {
            for m in &c.instances {
                let _ = writeln!(out, "{}\t{m}", c.concept);
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    fn query(&self) -> &str {
        self.instances.first().expect("at least two instances")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkageReport {
    pub hits: usize,
    /// Alternative representations that could have been found.
    pub total: usize,
    pub recall: f64,
}

/// Queries each cluster with its lexicographically-first member and
/// `K = |cluster| - 1`; recall is hits over all alternative representations.
pub fn record_linkage_recall(
    store: &EmbeddingStore,
    meta: &HubnessMetadata,
    gt: &LinkageGroundTruth,
) -> Result<LinkageReport> {
    let missing: Vec<String> = gt
        .clusters
        .iter()
        .flatten()
        .filter(|m| store.index_of(m).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEntities(missing));
    }
    let mut hits = 0;
    let mut total = 0;
    for cluster in &gt.clusters {
        let query = cluster.first().expect("clusters have two or more members");
        let k = cluster.len() - 1;
        let found = termite_join(store, meta, query, k, false)?;
        hits += found
            .results
            .iter()
            .filter(|h| cluster.contains(&h.entity))
            .count();
        total += k;
    }
    let recall = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    Ok(LinkageReport { hits, total, recall })
}

pub const DEFAULT_MULTIPLIERS: [usize; 3] = [1, 2, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionRow {
    pub multiplier: usize,
    pub k: usize,
    pub found: usize,
    /// `found / |instances|`.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub concept: String,
    pub instances: usize,
    pub rows: Vec<ExpansionRow>,
}

/// Queries with the lexicographically-first instance and lists of
/// `multiplier * |instances|` entities, counting how many are instances.
pub fn concept_expansion(
    store: &EmbeddingStore,
    meta: &HubnessMetadata,
    gt: &ConceptGroundTruth,
    multipliers: &[usize],
) -> Result<ExpansionReport> {
    let query = gt.query();
    if store.index_of(query).is_none() {
        return Err(Error::MissingEntities(vec![query.to_string()]));
    }
    let n = gt.instances.len();
    let mut rows = Vec::with_capacity(multipliers.len());
    for &multiplier in multipliers {
        let k = multiplier * n;
        let found = termite_join(store, meta, query, k, false)?
            .results
            .iter()
            .filter(|h| gt.instances.contains(&h.entity))
            .count();
        rows.push(ExpansionRow {
            multiplier,
            k,
            found,
            fraction: found as f64 / n as f64,
        });
    }
    Ok(ExpansionReport {
        concept: gt.concept.clone(),
        instances: n,
        rows,
    })
}

/// TSV: `concept  instances  multiplier  k  found  fraction`.
pub fn expansion_tsv(reports: &[ExpansionReport]) -> String {
    let mut out = String::from("concept\tinstances\tmultiplier\tk\tfound\tfraction\n");
    for r in reports {
        for row in &r.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:.6}",
                r.concept, r.instances, row.multiplier, row.k, row.found, row.fraction
            );
        }
    }
    out
}

/// Human-readable table with one `found (pct%)` column per list size.
pub fn expansion_table(reports: &[ExpansionReport]) -> String {
    let multipliers: BTreeSet<usize> = reports
        .iter()
        .flat_map(|r| r.rows.iter().map(|row| row.multiplier))
        .collect();
    let header = |m: usize| if m == 1 { "Found Top".to_string() } else { format!("Found {m}x Top") };
    let name_width = reports
        .iter()
        .map(|r| r.concept.chars().count())
        .chain(std::iter::once("Concept".len()))
        .max()
        .unwrap_or(7);
    let mut out = format!("{:<name_width$}  {:>11}", "Concept", "# Instances");
    for &m in &multipliers {
        let _ = write!(out, "  {:>14}", header(m));
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<name_width$}  {:>11}", r.concept, r.instances);
        for &m in &multipliers {
            let cell = r
                .rows
                .iter()
                .find(|row| row.multiplier == m)
                .map(|row| format!("{} ({:.0}%)", row.found, row.fraction * 100.0))
                .unwrap_or_else(|| "---".into());
            let _ = write!(out, "  {cell:>14}");
        }
        out.push('\n');
    }
    out
}

/// Seeded synthetic triples with `groups` disjoint groups of `per_group` members.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub triples: Vec<Triple>,
    pub linkage: LinkageGroundTruth,
    pub concepts: Vec<ConceptGroundTruth>,
    /// Every string generated for each group: its members followed by its predicates.
    pub groups: Vec<Vec<String>>,
}

impl SynthDataset {
    /// Group index of every generated string.
    pub fn group_of(&self, entity: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.iter().any(|e| e == entity))
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ra", "tu", "ven", "sho", "dri", "pa", "zel", "or", "qui", "bex", "nu",
    "ta", "gor", "eli", "fas", "wy", "ju", "som", "hra", "ct", "ip",
];

fn pseudo_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let parts = rng.random_range(2..=4);
        let word: String = (0..parts)
            .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
            .collect();
        if used.insert(word.clone()) {
            return word;
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Generates `groups` concept groups of `per_group` members each.
///
/// Members are two-word names made of words used nowhere else. Each group owns
/// two predicates; member `i` links to members `i+1 ..= i+3` (cyclically, at
/// most `per_group - 1` of them) through them, so every member occurs in at
/// least three triples and no triple crosses groups.
pub fn synth_dataset(groups: usize, per_group: usize, seed: u64) -> Result<SynthDataset> {
    if groups < 2 || per_group < 3 {
        return Err(Error::InvalidArgument(format!(
            "synthetic data needs at least 2 groups of 3, got {groups} x {per_group}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();
    let mut triples = Vec::new();
    let mut clusters = Vec::new();
    let mut concepts = Vec::new();
    let mut all_groups = Vec::new();
    let links = 3.min(per_group - 1);
    for g in 0..groups {
        let members: Vec<String> = (0..per_group)
            .map(|_| {
                let first = capitalize(&pseudo_word(&mut rng, &mut used));
                let last = capitalize(&pseudo_word(&mut rng, &mut used));
                format!("{first} {last}")
            })
            .collect();
        let predicates: Vec<String> = (0..2)
            .map(|_| format!("{}_{}", pseudo_word(&mut rng, &mut used), pseudo_word(&mut rng, &mut used)))
            .collect();
        for i in 0..per_group {
            for step in 1..=links {
                let j = (i + step) % per_group;
                let p = &predicates[(i + step) % 2];
                triples.extend(Triple::new(
                    &members[i],
                    p,
                    &members[j],
                    "synth",
                    SourceKind::Unstructured,
                ));
            }
        }
        let set: BTreeSet<String> = members.iter().cloned().collect();
        clusters.push(set.clone());
        concepts.push(ConceptGroundTruth::new(format!("group{g:02}"), set)?);
        all_groups.push(members.into_iter().chain(predicates).collect());
    }
    Ok(SynthDataset {
        triples,
        linkage: LinkageGroundTruth::new(clusters)?,
        concepts,
        groups: all_groups,
    })
}

/// Ideal embedding for a synthetic dataset: every member of group `g` gets
/// the basis vector `e_g`. Predicates are left out.
pub fn orthogonal_store(data: &SynthDataset) -> Result<EmbeddingStore> {
    let dim = data.concepts.len();
    let rows = data.concepts.iter().enumerate().flat_map(|(g, c)| {
        c.instances.iter().map(move |m| {
            let mut v = vec![0.0f32; dim];
            v[g] = 1.0;
            (m.clone(), v)
        })
    });
    EmbeddingStore::from_rows(dim, rows)
}
