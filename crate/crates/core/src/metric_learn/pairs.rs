use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::extract::Triple;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    /// Y = 0
    Related,
    /// Y = 1
    Unrelated,
}

impl Label {
    pub fn value(self) -> u8 {
        match self {
            Label::Related => 0,
            Label::Unrelated => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrainingPair {
    pub a: String,
    pub b: String,
    pub label: Label,
}

fn unordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Positive pairs (S,P), (P,O), (S,O) of every triple, deduplicated as
/// unordered pairs. Pairs with identical elements are skipped.
pub fn generate_pairs(triples: &[Triple]) -> Vec<TrainingPair> {
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut out = Vec::new();
    for t in triples {
        let [s, p, o] = t.elements();
        for (a, b) in [(s, p), (p, o), (s, o)] {
            if a == b {
                continue;
            }
            let (x, y) = unordered(a, b);
            if seen.insert((x.to_string(), y.to_string())) {
                out.push(TrainingPair {
                    a: a.to_string(),
                    b: b.to_string(),
                    label: Label::Related,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct NegativeSample {
    pub pairs: Vec<TrainingPair>,
    /// Number of negatives that were asked for.
    pub requested: usize,
}

impl NegativeSample {
    /// True when the complement of the positives was too small to fill the request.
    pub fn is_short(&self) -> bool {
        self.pairs.len() < self.requested
    }
}

/// Draws `floor(ratio * |positives|)` distinct unordered pairs of distinct
/// entities, none of which is a positive pair.
pub fn sample_negatives(
    positives: &[TrainingPair],
    entities: &[String],
    ratio: f64,
    seed: u64,
) -> Result<NegativeSample> {
    if entities.len() < 2 {
        return Err(Error::InvalidArgument(
            "negative sampling needs at least two entities".into(),
        ));
    }
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad negative ratio {ratio}")));
    }
    let requested = (ratio * positives.len() as f64).floor() as usize;
    let blocked: HashSet<(&str, &str)> = positives
        .iter()
        .map(|p| unordered(&p.a, &p.b))
        .collect();
    let mut chosen: HashSet<(&str, &str)> = HashSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(requested);
    let max_draws = requested.saturating_mul(100).saturating_add(10_000);
    let n = entities.len();
    let mut draws = 0;
    while pairs.len() < requested && draws < max_draws {
        draws += 1;
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || entities[i] == entities[j] {
            continue;
        }
        let key = unordered(&entities[i], &entities[j]);
        if blocked.contains(&key) || !chosen.insert(key) {
            continue;
        }
        pairs.push(TrainingPair {
            a: entities[i].clone(),
            b: entities[j].clone(),
            label: Label::Unrelated,
        });
    }
    let sample = NegativeSample { pairs, requested };
    if sample.is_short() {
        log::warn!(
            "negative sampling produced {} of {} requested pairs",
            sample.pairs.len(),
            requested
        );
    }
    Ok(sample)
}

/// Debug dump: `a<TAB>b<TAB>Y`.
pub fn write_pairs(path: &Path, pairs: &[TrainingPair]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.a, p.b, p.label.value()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
