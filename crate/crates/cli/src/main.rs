use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use entclust::features::{BowWeighting, EmbedClientConfig};
use entclust::gcc::GccConfig;
use entclust::graph::{GraphConfig, GraphKind};
use entclust::synth::{generate, SynthConfig, CORPUS_FILE, EMBEDDINGS_FILE, ENTITIES_FILE};
use entclust::w2v::W2vConfig;
use entclust_cli::config::{BowSettings, EntityVectors, FeatureSource, Paths, PipelineConfig};
use entclust_cli::error::{CliError, Result};
use entclust_cli::pipeline::{run_pipeline, StageStatus};
use entclust_cli::stages;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "entclust", version, about = "Entity-graph document clustering")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphChoice {
    Ner,
    Knn,
}

impl From<GraphChoice> for GraphKind {
    fn from(g: GraphChoice) -> Self {
        match g {
            GraphChoice::Ner => GraphKind::Ner,
            GraphChoice::Knn => GraphKind::Knn,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a corpus, merging multi-word entities into single tokens.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        entities: Option<PathBuf>,
        /// english, french, none, or a stopword file.
        #[arg(long, default_value = "english")]
        stopwords: String,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the normalized entity table.
        #[arg(long)]
        entities_out: Option<PathBuf>,
    },
    /// Validate an entity file against a corpus and print per-type counts.
    Entities {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        entities: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train CBOW Word2Vec vectors on a tokenized corpus.
    TrainW2v {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: W2vOpts,
    },
    /// Find matching entity pairs between documents.
    Match {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        entities: PathBuf,
        /// Trained vectors; without them only identical surfaces match.
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        graph: GraphOpts,
    },
    /// Build the entity graph from matches.
    Graph {
        #[arg(long)]
        matches: PathBuf,
        /// Corpus the matches refer to (fixes the number of nodes).
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        graph: GraphOpts,
    },
    /// Build a symmetric k-nearest-neighbour graph from features.
    KnnGraph {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the document feature matrix.
    Features {
        #[arg(long, value_enum, default_value = "llm")]
        kind: FeatureSource,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        max_features: usize,
        #[arg(long)]
        tfidf: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Request document embeddings from an OpenAI-compatible endpoint.
    FetchEmbeddings {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        base_url: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Environment variable holding the API key; "none" sends no key.
        #[arg(long)]
        api_key_env: Option<String>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Response cache keyed by text hash.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Smooth features over the graph.
    Propagate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit GCC on a propagated feature matrix.
    Fit {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the projected embedding Y W.
        #[arg(long)]
        embedding_out: Option<PathBuf>,
        #[command(flatten)]
        gcc: GccOpts,
        #[arg(long)]
        k: usize,
        /// Propagation order the input was produced with; recorded in the result.
        #[arg(long, default_value_t = 2)]
        p: usize,
    },
    /// Suggest cluster counts from a Ward dendrogram of an over-segmentation.
    SelectK {
        #[arg(long)]
        features: PathBuf,
        /// Over-segmentation size (default min(500, n/4, d)).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 20)]
        k_max: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        gcc: GccOpts,
    },
    /// Sweep the propagation order and record the clustering loss curve.
    SelectP {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        p_min: usize,
        #[arg(long, default_value_t = 50)]
        p_max: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        gcc: GccOpts,
    },
    /// Score predicted clusters against reference labels.
    Evaluate {
        /// Fit result JSON or a JSON array of labels.
        #[arg(long)]
        pred: PathBuf,
        /// Labeled corpus or JSON array of labels.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        percent: bool,
        /// Features for internal indices (silhouette, Davies-Bouldin, Calinski-Harabasz).
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic labeled corpus with planted entities and features.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 600)]
        n_docs: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0.05)]
        leak: f64,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write a pipeline.toml that clusters the generated data.
        #[arg(long)]
        write_config: bool,
    },
    /// Run every stage, reusing cached outputs when inputs are unchanged.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        entities: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        workdir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, value_enum)]
        graph_kind: Option<GraphChoice>,
        #[arg(long, value_enum)]
        feature_kind: Option<FeatureSource>,
        #[arg(long, value_enum)]
        entity_vectors: Option<EntityVectors>,
    },
}

#[derive(Args)]
struct W2vOpts {
    #[arg(long, default_value_t = 500)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 10)]
    min_count: u64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    negative: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Training threads; 1 is reproducible.
    #[arg(long = "w2v-threads", default_value_t = 1)]
    threads: usize,
}

impl W2vOpts {
    fn config(&self) -> W2vConfig {
        W2vConfig {
            dim: self.dim,
            window: self.window,
            min_count: self.min_count,
            epochs: self.epochs,
            negative_samples: self.negative,
            seed: self.seed,
            threads: self.threads,
            ..W2vConfig::default()
        }
    }
}

#[derive(Args)]
struct GraphOpts {
    #[arg(long, default_value_t = 0.9)]
    sim_threshold: f64,
    #[arg(long, default_value_t = 3)]
    min_shared_links: usize,
    /// Let entities of different types match.
    #[arg(long)]
    any_type: bool,
}

impl GraphOpts {
    fn config(&self) -> GraphConfig {
        GraphConfig {
            sim_threshold: self.sim_threshold,
            min_shared_links: self.min_shared_links,
            same_type_only: !self.any_type,
        }
    }
}

#[derive(Args)]
struct GccOpts {
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 30)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent restarts; the lowest final loss wins.
    #[arg(long, default_value_t = 10)]
    n_init: usize,
}

impl GccOpts {
    fn config(&self, k: usize) -> GccConfig {
        GccConfig {
            k,
            lambda: self.lambda,
            max_iter: self.max_iter,
            tol: self.tol,
            seed: self.seed,
            n_init: self.n_init,
            ..GccConfig::default()
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Predicted labels from a fit result or a bare JSON array.
fn read_pred(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(labels) = serde_json::from_str::<Vec<usize>>(&text) {
        return Ok(labels);
    }
    Ok(stages::read_result(path)?.assignments)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            corpus,
            entities,
            stopwords,
            out,
            entities_out,
        } => print_json(&stages::ingest(
            &corpus,
            entities.as_deref(),
            &stopwords,
            &out,
            entities_out.as_deref(),
        )?),
        Command::Entities {
            corpus,
            entities,
            out,
        } => print_json(&stages::check_entities(&corpus, &entities, out.as_deref())?),
        Command::TrainW2v { corpus, out, opts } => {
            let cfg = opts.config();
            cfg.validate()
                .map_err(|e| CliError::config(e.to_string()))?;
            print_json(&stages::train_w2v(&corpus, &cfg, &out)?)
        }
        Command::Match {
            corpus,
            entities,
            vectors,
            out,
            graph,
        } => {
            let cfg = graph.config();
            cfg.validate()?;
            print_json(&stages::match_entities(
                &corpus,
                &entities,
                vectors.as_deref(),
                &cfg,
                &out,
            )?)
        }
        Command::Graph {
            matches,
            corpus,
            out,
            graph,
        } => {
            let cfg = graph.config();
            cfg.validate()?;
            let n = stages::load_tokenized(&corpus)?.len();
            print_json(&stages::build_graph(&matches, n, &cfg, &out)?)
        }
        Command::KnnGraph { features, k, out } => {
            print_json(&stages::knn_graph(&features, k, &out)?)
        }
        Command::Features {
            kind,
            corpus,
            embeddings,
            max_features,
            tfidf,
            out,
        } => {
            let bow = BowSettings {
                max_features,
                weighting: if tfidf {
                    BowWeighting::TfIdf
                } else {
                    BowWeighting::Counts
                },
            };
            print_json(&stages::build_features(
                kind,
                &corpus,
                embeddings.as_deref(),
                &bow,
                &out,
            )?)
        }
        Command::FetchEmbeddings {
            corpus,
            out,
            base_url,
            model,
            api_key_env,
            batch_size,
            cache,
        } => {
            let mut cfg = EmbedClientConfig::default();
            if let Some(u) = base_url {
                cfg.base_url = u;
            }
            if let Some(m) = model {
                cfg.model = m;
            }
            if let Some(k) = api_key_env {
                cfg.api_key_env = (k != "none").then_some(k);
            }
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            cfg.cache_path = cache;
            print_json(&stages::fetch(&corpus, &cfg, &out)?)
        }
        Command::Propagate {
            graph,
            features,
            p,
            out,
        } => print_json(&stages::propagate_file(&graph, &features, p, &out)?),
        Command::Fit {
            features,
            out,
            embedding_out,
            gcc,
            k,
            p,
        } => {
            let cfg = GccConfig { p, ..gcc.config(k) };
            let r = stages::fit_file(&features, &cfg, &out, embedding_out.as_deref())?;
            eprintln!(
                "final loss {:.6}",
                r.loss_trace.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::SelectK {
            features,
            m,
            k_min,
            k_max,
            out_dir,
            gcc,
        } => {
            let (report, _) =
                stages::select_k(&features, m, &gcc.config(2), (k_min, k_max), &out_dir)?;
            print_json(&report)
        }
        Command::SelectP {
            graph,
            features,
            k,
            p_min,
            p_max,
            out_dir,
            gcc,
        } => {
            let res = stages::select_p(
                &graph,
                &features,
                k,
                (p_min, p_max),
                &gcc.config(k),
                &out_dir,
            )?;
            print!("{}", res.to_csv());
            eprintln!("suggested p = {}", res.chosen);
            Ok(())
        }
        Command::Evaluate {
            pred,
            truth,
            percent,
            features,
            out,
        } => {
            let pred = read_pred(&pred)?;
            let truth = stages::read_truth(&truth)?;
            let s = stages::evaluate(&pred, &truth)?;
            print!("{}", stages::metrics_table(&s, percent));
            if let Some(f) = features {
                let ix = stages::indices_for(&f, &pred)?;
                print_json(&ix)?;
            }
            if let Some(out) = out {
                std::fs::write(&out, stages::metrics_json(&s))?;
            }
            Ok(())
        }
        Command::Synth {
            out_dir,
            n_docs,
            k,
            leak,
            dim,
            noise,
            seed,
            write_config,
        } => {
            let cfg = SynthConfig {
                n_docs,
                k_true: k,
                leak,
                feature_dim: dim,
                feature_noise: noise,
                seed,
                ..SynthConfig::default()
            };
            let data = generate(&cfg)?;
            data.write_to(&out_dir)?;
            if write_config {
                let pc = PipelineConfig {
                    seed,
                    entity_vectors: EntityVectors::Exact,
                    paths: Paths {
                        corpus: Some(CORPUS_FILE.into()),
                        entities: Some(ENTITIES_FILE.into()),
                        embeddings: Some(EMBEDDINGS_FILE.into()),
                        ..Paths::default()
                    },
                    gcc: GccConfig {
                        k,
                        ..GccConfig::default()
                    },
                    ..PipelineConfig::default()
                };
                std::fs::write(out_dir.join("pipeline.toml"), pc.to_toml())?;
            }
            eprintln!(
                "wrote {} documents to {}",
                data.corpus.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Pipeline {
            config,
            corpus,
            entities,
            embeddings,
            workdir,
            seed,
            k,
            p,
            graph_kind,
            feature_kind,
            entity_vectors,
        } => {
            let mut cfg = match config {
                Some(path) => PipelineConfig::load(&path)?,
                None => PipelineConfig::default(),
            };
            if corpus.is_some() {
                cfg.paths.corpus = corpus;
            }
            if entities.is_some() {
                cfg.paths.entities = entities;
            }
            if embeddings.is_some() {
                cfg.paths.embeddings = embeddings;
            }
            if let Some(w) = workdir {
                cfg.paths.workdir = w;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(k) = k {
                cfg.gcc.k = k;
            }
            if let Some(p) = p {
                cfg.gcc.p = p;
            }
            if let Some(g) = graph_kind {
                cfg.graph_kind = g.into();
            }
            if let Some(f) = feature_kind {
                cfg.feature_kind = f;
            }
            if let Some(v) = entity_vectors {
                cfg.entity_vectors = v;
            }
            let report = run_pipeline(&cfg)?;
            for s in &report.stages {
                let status = match s.status {
                    StageStatus::Ran => "ran",
                    StageStatus::Cached => "cached",
                };
                println!("{}: {status}", s.stage);
            }
            if let Some(m) = &report.metrics {
                print!("{}", stages::metrics_table(m, false));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| level.into()),
        )
        .init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
