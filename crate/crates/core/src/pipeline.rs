//! File-to-file pipeline stages: extract, encode, train, refine.

use std::path::{Path, PathBuf};

use crate::encode::{Dictionary, Encoder, DEFAULT_INPUT_DIM};
use crate::error::{Error, Result};
use crate::extract::{
    entities_of, ingest_triples, read_triple_file, relational_to_triples, write_triples, SourceKind,
    Table, Triple,
};
use crate::metric_learn::{generate_pairs, sample_negatives, train, TrainConfig, Trained};
use crate::refine::{HubnessMetadata, DEFAULT_HUBNESS_K};
use crate::store::EmbeddingStore;

/// Artifact locations and stage parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub triples: PathBuf,
    pub dict: PathBuf,
    pub model: PathBuf,
    pub embedding: PathBuf,
    pub hubness: PathBuf,
    pub input_dim: usize,
    pub train: TrainConfig,
    pub hubness_k: usize,
    pub port: u16,
}

impl PipelineConfig {
    /// Default file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        PipelineConfig {
            triples: dir.join("triples.tsv"),
            dict: dir.join("dictionary.tsv"),
            model: dir.join("model.tmt"),
            embedding: dir.join("embedding.temb"),
            hubness: dir.join("hubness.json"),
            input_dim: DEFAULT_INPUT_DIM,
            train: TrainConfig::default(),
            hubness_k: DEFAULT_HUBNESS_K,
            port: 8080,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let paths = [&self.triples, &self.dict, &self.model, &self.embedding, &self.hubness];
        for (i, a) in paths.iter().enumerate() {
            if paths[i + 1..].contains(a) {
                return Err(Error::InvalidArgument(format!(
                    "artifact path {} is used twice",
                    a.display()
                )));
            }
        }
        if self.input_dim == 0 || self.hubness_k == 0 {
            return Err(Error::InvalidArgument("input width and hubness k must be positive".into()));
        }
        self.train.validate()
    }
}

/// Converts CSV tables and triple files into one triple file. Returns the triples written.
pub fn extract_stage(csv: &[PathBuf], text: &[PathBuf], out: &Path) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for path in csv {
        let table = Table::from_csv(path)?;
        triples.extend(relational_to_triples(&table)?);
    }
    for path in text {
        triples.extend(ingest_triples(path)?.triples);
    }
    write_triples(out, &triples)?;
    Ok(triples)
}

pub fn read_triples(path: &Path) -> Result<Vec<Triple>> {
    Ok(read_triple_file(path, SourceKind::Unstructured)?.triples)
}

/// Builds the token dictionary over every triple element.
pub fn encode_stage(triples: &Path, dict_out: &Path) -> Result<Dictionary> {
    let triples = read_triples(triples)?;
    let dict = Dictionary::fit(triples.iter().flat_map(|t| t.elements()));
    dict.save(dict_out)?;
    Ok(dict)
}

pub fn train_on(triples: &[Triple], encoder: &Encoder, config: &TrainConfig) -> Result<Trained> {
    let positives = generate_pairs(triples);
    let entities = entities_of(triples);
    let negatives = sample_negatives(
        &positives,
        &entities,
        config.negative_ratio,
        config.seed.wrapping_add(1),
    )?;
    let mut pairs = positives;
    pairs.extend(negatives.pairs);
    train(&pairs, encoder, config)
}

pub fn train_stage(
    triples: &Path,
    dict: &Path,
    model_out: &Path,
    input_dim: usize,
    config: &TrainConfig,
) -> Result<Trained> {
    let triples = read_triples(triples)?;
    let encoder = Encoder::new(Dictionary::load(dict)?, input_dim)?;
    let trained = train_on(&triples, &encoder, config)?;
    trained.model.save(model_out)?;
    Ok(trained)
}

/// Embeds every triple element and computes hubness metadata.
pub fn refine_stage(config: &PipelineConfig) -> Result<(EmbeddingStore, HubnessMetadata)> {
    let triples = read_triples(&config.triples)?;
    let model = crate::metric_learn::SiameseModel::load(&config.model)?;
    let encoder = Encoder::new(Dictionary::load(&config.dict)?, model.input_dim())?;
    let entities = entities_of(&triples);
    let store = EmbeddingStore::build(&model, &encoder, entities.iter().map(String::as_str))?;
    let meta = HubnessMetadata::compute(&store, config.hubness_k)?;
    store.save(&config.embedding)?;
    meta.save(&config.hubness)?;
    Ok((store, meta))
}

/// Runs extract through refine on one triple file.
pub fn run_all(text: &[PathBuf], csv: &[PathBuf], config: &PipelineConfig) -> Result<(EmbeddingStore, HubnessMetadata)> {
    config.validate()?;
    extract_stage(csv, text, &config.triples)?;
    encode_stage(&config.triples, &config.dict)?;
    train_stage(
        &config.triples,
        &config.dict,
        &config.model,
        config.input_dim,
        &config.train,
    )?;
    refine_stage(config)
}
