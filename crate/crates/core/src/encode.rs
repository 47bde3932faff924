//! Dictionary encoding and fixed-width hashed input vectors.
//!
//! Every token gets a dense integer id. A bag of words is mapped into a
//! binary vector of width `F` by hashing each distinct id; when the first
//! slot is already taken by another token of the same bag, a second hash is
//! tried, and a token whose both slots are taken is dropped and counted.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::extract::{tokenize, BagOfWords};

/// Input width used when the expected bag size is unknown.
pub const DEFAULT_INPUT_DIM: usize = 1024;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

pub fn primary_hash(id: u64) -> u64 {
    fnv1a64(&id.to_le_bytes())
}

pub fn secondary_hash(id: u64) -> u64 {
    let mut bytes = [0u8; 9];
    bytes[..8].copy_from_slice(&id.to_le_bytes());
    bytes[8] = 0x01;
    fnv1a64(&bytes)
}

/// Smallest vector width whose birthday-approximation collision probability
/// for `m` tokens stays at or below `p`.
pub fn size_vector(m: usize, p: f64) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "collision probability must lie in (0, 1), got {p}"
        )));
    }
    if m < 2 {
        return Ok(1);
    }
    let m = m as f64;
    let width = m * (m - 1.0) / (-2.0 * (-p).ln_1p());
    Ok(width.ceil() as usize)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    ids: HashMap<String, u64>,
    tokens: Vec<String>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the token's id, assigning the next free one if it is new.
    pub fn assign_id(&mut self, token: &str) -> u64 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as u64;
        self.ids.insert(token.to_string(), id);
        self.tokens.push(token.to_string());
        id
    }

    pub fn id(&self, token: &str) -> Option<u64> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u64) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Builds a dictionary over the tokens of `strings`, in order.
    pub fn fit<'a>(strings: impl IntoIterator<Item = &'a str>) -> Self {
        let mut dict = Dictionary::new();
        for s in strings {
            for tok in tokenize(s).tokens {
                dict.assign_id(&tok);
            }
        }
        dict
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (id, tok) in self.tokens.iter().enumerate() {
            writeln!(w, "{tok}\t{id}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut dict = Dictionary::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("expected token<TAB>id".into()))?;
            let id: u64 = id
                .parse()
                .map_err(|_| parse_err(format!("bad id `{id}`")))?;
            if id != dict.len() as u64 || dict.id(tok).is_some() {
                return Err(parse_err(format!("ids must be dense and unique, found `{tok}` -> {id}")));
            }
            dict.assign_id(tok);
        }
        Ok(dict)
    }
}

/// Sparse view of a binary vector of length `len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedVector {
    len: usize,
    positions: Vec<usize>,
    /// Tokens dropped because both of their slots were already taken.
    pub collisions: usize,
}

impl EncodedVector {
    pub fn zeros(len: usize) -> Self {
        EncodedVector {
            len,
            positions: Vec::new(),
            collisions: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Set positions, ascending.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        for &p in &self.positions {
            v[p] = 1.0;
        }
        v
    }
}

/// Hashes distinct ids into a binary vector of width `width`.
pub fn encode_ids(ids: impl IntoIterator<Item = u64>, width: usize) -> EncodedVector {
    assert!(width >= 1, "vector width must be positive");
    let width_u64 = width as u64;
    let distinct: BTreeSet<u64> = ids.into_iter().collect();
    let mut slots = BTreeSet::new();
    let mut collisions = 0;
    // Insertion order is ascending id so the result does not depend on token order.
    for id in distinct {
        let first = (primary_hash(id) % width_u64) as usize;
        if slots.insert(first) {
            continue;
        }
        let second = (secondary_hash(id) % width_u64) as usize;
        if !slots.insert(second) {
            collisions += 1;
        }
    }
    EncodedVector {
        len: width,
        positions: slots.into_iter().collect(),
        collisions,
    }
}

/// Encodes a bag against a frozen dictionary. Unknown tokens are ignored.
pub fn encode_bow(dict: &Dictionary, bow: &BagOfWords, width: usize) -> EncodedVector {
    encode_ids(bow.tokens.iter().filter_map(|t| dict.id(t)), width)
}

/// Frozen dictionary plus input width: everything needed to turn an entity
/// string into a network input.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub dict: Dictionary,
    pub input_dim: usize,
}

impl Encoder {
    pub fn new(dict: Dictionary, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        Ok(Encoder { dict, input_dim })
    }

    pub fn encode(&self, entity: &str) -> EncodedVector {
        encode_bow(&self.dict, &tokenize(entity), self.input_dim)
    }
}
