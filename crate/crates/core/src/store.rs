//! Offline embedding of every entity, with exact cosine k-NN by linear scan.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::encode::Encoder;
use crate::error::{Error, Result};
use crate::metric_learn::{ByteReader, SiameseModel};

const EMBEDDING_MAGIC: &[u8; 4] = b"TEMB";

/// Added to the first coordinate of an all-zero embedding.
pub const ZERO_NORM_NUDGE: f32 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub entity: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entities: Vec<String>,
    /// Row-major, `entities.len() * dim`.
    vectors: Vec<f32>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
}

pub fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// `1 - cos(u, v)`, clamped into [0, 2].
pub fn cosine_distance(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(distance_with_norms(u, v, nu, nv))
}

fn distance_with_norms(u: &[f32], v: &[f32], nu: f64, nv: f64) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
    (1.0 - dot / (nu * nv)).clamp(0.0, 2.0)
}

/// Ascending distance, then ascending entity string.
pub fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.entity.cmp(&b.entity))
}

impl EmbeddingStore {
    /// Builds a store from `(entity, vector)` rows. Later duplicates of an
    /// entity are ignored; zero vectors are nudged off the origin.
    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let mut store = EmbeddingStore {
            dim,
            entities: Vec::new(),
            vectors: Vec::new(),
            norms: Vec::new(),
            index: HashMap::new(),
        };
        for (entity, mut vector) in rows {
            let entity = entity.into();
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: vector.len(),
                });
            }
            if store.index.contains_key(&entity) {
                continue;
            }
            if norm(&vector) == 0.0 {
                log::info!("entity `{entity}` embeds to the zero vector; nudging it");
                vector[0] += ZERO_NORM_NUDGE;
            }
            store.norms.push(norm(&vector));
            store.index.insert(entity.clone(), store.entities.len());
            store.entities.push(entity);
            store.vectors.extend_from_slice(&vector);
        }
        Ok(store)
    }

    /// Embeds every entity with the trained network.
    pub fn build<'a>(
        model: &SiameseModel,
        encoder: &Encoder,
        entities: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let dim = model.embedding_dim();
        let mut rows = Vec::new();
        for e in entities {
            let v = model.forward(&encoder.encode(e))?;
            rows.push((e, v.into_iter().map(|x| x as f32).collect()));
        }
        Self::from_rows(dim, rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn index_of(&self, entity: &str) -> Option<usize> {
        self.index.get(entity).copied()
    }

    pub fn vector_at(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, entity: &str) -> Option<&[f32]> {
        self.index_of(entity).map(|i| self.vector_at(i))
    }

    /// Distance from `query` to every stored vector, in store order.
    pub fn distances(&self, query: &[f32]) -> Result<Vec<f64>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let nq = norm(query);
        if nq == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok((0..self.len())
            .map(|i| distance_with_norms(query, self.vector_at(i), nq, self.norms[i]))
            .collect())
    }

    fn order_indices(&self, a: &(f64, usize), b: &(f64, usize)) -> Ordering {
        a.0.total_cmp(&b.0)
            .then_with(|| self.entities[a.1].cmp(&self.entities[b.1]))
    }

    /// Top-`k` neighbors of `query`, optionally skipping the entity at `exclude`.
    pub fn knn_excluding(&self, query: &[f32], k: usize, exclude: Option<usize>) -> Result<Vec<Neighbor>> {
        let mut scored: Vec<(f64, usize)> = self
            .distances(query)?
            .into_iter()
            .enumerate()
            .filter(|&(i, _)| Some(i) != exclude)
            .map(|(i, d)| (d, i))
            .collect();
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, |a, b| self.order_indices(a, b));
            scored.truncate(k);
        }
        scored.sort_by(|a, b| self.order_indices(a, b));
        Ok(scored
            .into_iter()
            .map(|(distance, i)| Neighbor {
                entity: self.entities[i].clone(),
                distance,
            })
            .collect())
    }

    /// Every stored entity ranked by distance to `query`.
    pub fn ranking(&self, query: &[f32]) -> Result<Vec<Neighbor>> {
        self.knn_excluding(query, self.len(), None)
    }

    /// Exact top-`k` by cosine distance; ties go to the smaller entity string.
    pub fn knn(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        self.knn_excluding(query, k, None)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.vectors.len() * 4);
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (i, e) in self.entities.iter().enumerate() {
            out.extend_from_slice(&(e.len() as u32).to_le_bytes());
            out.extend_from_slice(e.as_bytes());
            for x in self.vector_at(i) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0, path };
        if r.take(4)? != EMBEDDING_MAGIC {
            return Err(Error::format(path, "bad magic, expected TEMB"));
        }
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        let mut rows = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let entity = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format(path, "entity is not UTF-8"))?
                .to_string();
            let vector = (0..dim).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            if norm(&vector) == 0.0 {
                return Err(Error::format(path, format!("zero vector for `{entity}`")));
            }
            rows.push((entity, vector));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes"));
        }
        let store = Self::from_rows(dim, rows).map_err(|e| Error::format(path, e.to_string()))?;
        if store.len() as u64 != count {
            return Err(Error::format(path, "duplicate entity"));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::Dictionary;
    use crate::metric_learn::Layer;

    fn store(rows: &[(&str, [f32; 2])]) -> EmbeddingStore {
        EmbeddingStore::from_rows(2, rows.iter().map(|(e, v)| (*e, v.to_vec()))).unwrap()
    }

    #[test]
    fn cosine_cases() {
        let u = [1.0f32, 2.0, -3.0];
        assert!(cosine_distance(&u, &u).unwrap().abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 5.0]).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f32> = u.iter().map(|x| -x).collect();
        assert!((cosine_distance(&u, &neg).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
        assert!(cosine_distance(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn knn_edges() {
        let s = store(&[("b", [1.0, 0.0]), ("a", [1.0, 0.0]), ("c", [0.0, 1.0])]);
        assert!(s.knn(&[1.0, 0.0], 0).unwrap().is_empty());
        let all = s.knn(&[1.0, 0.1], 10).unwrap();
        let names: Vec<_> = all.iter().map(|n| n.entity.as_str()).collect();
        // a and b tie exactly; the string order decides.
        assert_eq!(names, ["a", "b", "c"]);
        assert!(matches!(s.knn(&[0.0, 0.0], 1), Err(Error::ZeroNorm)));
        assert!(matches!(s.knn(&[0.0, 0.0], 0), Err(Error::ZeroNorm)));
    }

    #[test]
    fn duplicates_stored_once() {
        let s = store(&[("x", [1.0, 0.0]), ("y", [0.0, 1.0]), ("x", [5.0, 5.0])]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.vector("x").unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn zero_model_store_is_still_valid() {
        let model = SiameseModel {
            layers: vec![Layer::zeros(4, 16), Layer::zeros(3, 4)],
            margin: 1.0,
        };
        let enc = Encoder::new(Dictionary::fit(["p q", "r"]), 16).unwrap();
        let s = EmbeddingStore::build(&model, &enc, ["p q", "r", "p q"]).unwrap();
        assert_eq!(s.len(), 2);
        for i in 0..s.len() {
            assert!(norm(s.vector_at(i)) > 0.0);
            assert_eq!(s.vector_at(i)[0], ZERO_NORM_NUDGE);
        }
    }

    #[test]
    fn self_query_finds_self() {
        let s = store(&[("p", [1.0, 0.2]), ("q", [0.3, 1.0]), ("r", [-1.0, 0.5])]);
        for e in s.entities() {
            let hit = &s.knn(s.vector(e).unwrap(), 1).unwrap()[0];
            assert_eq!(&hit.entity, e);
            assert!(hit.distance < 1e-12);
        }
    }

    #[test]
    fn file_layout_and_roundtrip() {
        let s = store(&[("é", [1.0, 2.0]), ("b", [0.5, -1.0])]);
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..4], b"TEMB");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2); // "é" is 2 bytes
        assert_eq!(bytes.len(), 16 + (4 + 2 + 8) + (4 + 1 + 8));
        let back = EmbeddingStore::from_bytes(&bytes, Path::new("e.bin")).unwrap();
        assert_eq!(back, s);
        assert!(EmbeddingStore::from_bytes(&bytes[..bytes.len() - 2], Path::new("e.bin")).is_err());
    }
}
