//! The `termite` command: pipeline stages, queries, evaluation and the HTTP server.

pub mod server;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use termite::encode::{size_vector, DEFAULT_INPUT_DIM};
use termite::eval::{
    concept_expansion, expansion_table, expansion_tsv, record_linkage_recall, synth_dataset,
    ConceptGroundTruth, LinkageGroundTruth, DEFAULT_MULTIPLIERS,
};
use termite::extract::write_triples;
use termite::metric_learn::{SiameseModel, TrainConfig};
use termite::pipeline::{encode_stage, extract_stage, refine_stage, train_stage, PipelineConfig};
use termite::refine::DEFAULT_HUBNESS_K;
use termite::{termite_join, EmbeddingStore, HubnessMetadata};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] termite::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for bad invocations, 2 for bad or missing data.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_usage() => 1,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "termite", version, about = "Related-entity search over tables and text")]
pub struct Cli {
    #[command(flatten)]
    pub paths: Paths,

    #[command(subcommand)]
    pub command: Command,
}

/// Artifact locations. Each defaults to a fixed name inside the data directory.
#[derive(Debug, Args)]
pub struct Paths {
    /// Directory holding every artifact unless overridden below.
    #[arg(long, global = true, env = "TERMITE_DATA_DIR", default_value = ".")]
    pub data_dir: PathBuf,
    #[arg(long, global = true)]
    pub triples: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dict: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub emb: Option<PathBuf>,
    #[arg(long, global = true)]
    pub hubness: Option<PathBuf>,
}

impl Paths {
    pub fn config(&self) -> PipelineConfig {
        let mut c = PipelineConfig::in_dir(&self.data_dir);
        let pick = |flag: &Option<PathBuf>, default: &mut PathBuf| {
            if let Some(p) = flag {
                *default = p.clone();
            }
        };
        pick(&self.triples, &mut c.triples);
        pick(&self.dict, &mut c.dict);
        pick(&self.model, &mut c.model);
        pick(&self.emb, &mut c.embedding);
        pick(&self.hubness, &mut c.hubness);
        c
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn CSV tables and triple files into one triple file.
    Extract {
        /// CSV table; the key column is guessed.
        #[arg(long)]
        csv: Vec<PathBuf>,
        /// Tab-separated `subject predicate object [source]` file.
        #[arg(long)]
        text: Vec<PathBuf>,
    },
    /// Build the token dictionary from the triple file.
    Encode,
    /// Train the siamese network.
    Train(TrainArgs),
    /// Embed every entity and compute hubness metadata.
    Refine {
        /// Neighborhood size for hubness counts.
        #[arg(long, default_value_t = DEFAULT_HUBNESS_K)]
        kh: usize,
    },
    /// Print the top-K related entities as `rank<TAB>entity<TAB>distance`.
    Query {
        entity: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
        /// Append a persistence confidence column.
        #[arg(long)]
        confidence: bool,
    },
    /// Serve the JSON API and the static UI.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory of static UI files; defaults to `ui` inside the data directory.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Evaluation harness.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Input vector width.
    #[arg(long, conflicts_with = "m")]
    pub f: Option<usize>,
    /// Expected tokens per entity; sizes the input with the birthday bound.
    #[arg(long)]
    pub m: Option<usize>,
    /// Acceptable probability of a collision within one entity.
    #[arg(long, default_value_t = 0.01, requires = "m")]
    pub p: f64,
    /// Embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub neg_ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

impl TrainArgs {
    pub fn input_dim(&self) -> Result<usize> {
        match (self.f, self.m) {
            (Some(f), _) => Ok(f),
            (None, Some(m)) => Ok(size_vector(m, self.p)?),
            (None, None) => Ok(DEFAULT_INPUT_DIM),
        }
    }

    pub fn config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            batch_size: self.batch.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            negative_ratio: self.neg_ratio.unwrap_or(d.negative_ratio),
            margin: self.margin.unwrap_or(d.margin),
            seed: self.seed.unwrap_or(d.seed),
            hidden: self.hidden.clone().unwrap_or(d.hidden),
            embedding_dim: self.dim.unwrap_or(d.embedding_dim),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Write a synthetic triple file with matching ground truth.
    Synth {
        #[arg(long, default_value_t = 20)]
        groups: usize,
        #[arg(long, default_value_t = 10)]
        per_group: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory; defaults to the data directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record-linkage recall against tab-separated clusters.
    Linkage {
        #[arg(long)]
        gt: PathBuf,
    },
    /// Concept expansion against `concept<TAB>member` lines.
    Concepts {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MULTIPLIERS)]
        multipliers: Vec<usize>,
        /// Print TSV instead of the aligned table.
        #[arg(long)]
        tsv: bool,
    },
}

fn load_index(config: &PipelineConfig) -> Result<(EmbeddingStore, HubnessMetadata)> {
    Ok((
        EmbeddingStore::load(&config.embedding)?,
        HubnessMetadata::load(&config.hubness)?,
    ))
}

fn emit(out: &mut impl Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
        context: "writing output".into(),
        source,
    })
}

/// Runs one command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    let mut config = cli.paths.config();
    match cli.command {
        Command::Extract { csv, text } => {
            if csv.is_empty() && text.is_empty() {
                return Err(CliError::Usage("extract needs at least one --csv or --text input".into()));
            }
            let triples = extract_stage(&csv, &text, &config.triples)?;
            log::info!("wrote {} triples to {}", triples.len(), config.triples.display());
        }
        Command::Encode => {
            let dict = encode_stage(&config.triples, &config.dict)?;
            log::info!("dictionary of {} tokens at {}", dict.len(), config.dict.display());
        }
        Command::Train(args) => {
            config.input_dim = args.input_dim()?;
            config.train = args.config();
            config.validate()?;
            let trained = train_stage(
                &config.triples,
                &config.dict,
                &config.model,
                config.input_dim,
                &config.train,
            )?;
            if let Some(last) = trained.loss_trace.last() {
                log::info!("final mean loss {last:.6}");
            }
        }
        Command::Refine { kh } => {
            config.hubness_k = kh;
            config.validate()?;
            let (store, meta) = refine_stage(&config)?;
            log::info!("{} entities embedded, hubness cutoff {}", store.len(), meta.cutoff);
        }
        Command::Query { entity, k, confidence } => {
            let (store, meta) = load_index(&config)?;
            let r = termite_join(&store, &meta, &entity, k, confidence)?;
            let mut text = String::new();
            for (rank, hit) in r.results.iter().enumerate() {
                text.push_str(&format!("{}\t{}\t{:.6}", rank + 1, hit.entity, hit.distance));
                if let Some(c) = hit.confidence {
                    text.push_str(&format!("\t{c:.6}"));
                }
                text.push('\n');
            }
            emit(out, &text)?;
        }
        Command::Serve { port, static_dir } => {
            let (store, meta) = load_index(&config)?;
            let input_dim = SiameseModel::load(&config.model)?.input_dim();
            let static_dir = static_dir.unwrap_or_else(|| cli.paths.data_dir.join("ui"));
            let state = server::AppState::new(store, meta, input_dim);
            let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
                context: "starting the async runtime".into(),
                source,
            })?;
            runtime
                .block_on(server::serve(state, Some(&static_dir), port))
                .map_err(|source| CliError::Io {
                    context: format!("serving on port {port}"),
                    source,
                })?;
        }
        Command::Eval(cmd) => run_eval(cmd, &config, &cli.paths.data_dir, out)?,
    }
    Ok(())
}

fn run_eval(cmd: EvalCommand, config: &PipelineConfig, data_dir: &Path, out: &mut impl Write) -> Result<()> {
    match cmd {
        EvalCommand::Synth { groups, per_group, seed, out: dir } => {
            let dir = dir.unwrap_or_else(|| data_dir.to_path_buf());
            let data = synth_dataset(groups, per_group, seed)?;
            write_triples(&dir.join("synth_triples.tsv"), &data.triples)?;
            data.linkage.save(&dir.join("synth_linkage.tsv"))?;
            ConceptGroundTruth::save_all(&data.concepts, &dir.join("synth_concepts.tsv"))?;
            emit(
                out,
                &format!(
                    "{} triples, {} groups in {}\n",
                    data.triples.len(),
                    groups,
                    dir.display()
                ),
            )?;
        }
        EvalCommand::Linkage { gt } => {
            let gt = LinkageGroundTruth::load(&gt)?;
            let (store, meta) = load_index(config)?;
            let r = record_linkage_recall(&store, &meta, &gt)?;
            emit(
                out,
                &format!("recall\t{:.4}\t{}/{}\n", r.recall, r.hits, r.total),
            )?;
        }
        EvalCommand::Concepts { gt, multipliers, tsv } => {
            if multipliers.is_empty() || multipliers.contains(&0) {
                return Err(CliError::Usage("multipliers must be positive".into()));
            }
            let concepts = ConceptGroundTruth::load_all(&gt)?;
            let (store, meta) = load_index(config)?;
            let reports = concepts
                .iter()
                .map(|c| concept_expansion(&store, &meta, c, &multipliers))
                .collect::<termite::Result<Vec<_>>>()?;
            let text = if tsv {
                expansion_tsv(&reports)
            } else {
                expansion_table(&reports)
            };
            emit(out, &text)?;
        }
    }
    Ok(())
}
