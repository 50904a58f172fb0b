//! Pipeline configuration: one TOML file, every key optional, with flag
//! overrides applied on top.

use std::path::{Path, PathBuf};

use entclust::features::BowWeighting;
use entclust::gcc::GccConfig;
use entclust::graph::{GraphConfig, GraphKind};
use entclust::w2v::W2vConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Bow,
    #[default]
    Llm,
}

/// How entity surfaces are compared when building the entity graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EntityVectors {
    /// Cosine similarity of trained Word2Vec vectors.
    #[default]
    W2v,
    /// Identical normalized surfaces only (similarity 1), no training.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub workdir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: None,
            entities: None,
            embeddings: None,
            workdir: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BowSettings {
    pub max_features: usize,
    pub weighting: BowWeighting,
}

impl Default for BowSettings {
    fn default() -> Self {
        Self {
            max_features: 2000,
            weighting: BowWeighting::Counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnSettings {
    pub k: usize,
}

impl Default for KnnSettings {
    fn default() -> Self {
        Self { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSettings {
    /// Over-segmentation size; `None` picks `min(500, n / 4, d)`.
    pub m: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    pub p_min: usize,
    pub p_max: usize,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        Self {
            m: None,
            k_min: 2,
            k_max: 20,
            p_min: 1,
            p_max: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed, copied into the Word2Vec and GCC settings.
    pub seed: u64,
    /// Forces single-threaded Word2Vec so every artifact is reproducible.
    pub deterministic: bool,
    /// `english`, `french`, `none`, or a path to a one-word-per-line file.
    pub stopwords: String,
    pub graph_kind: GraphKind,
    pub feature_kind: FeatureSource,
    pub entity_vectors: EntityVectors,
    pub paths: Paths,
    pub graph: GraphConfig,
    pub knn: KnnSettings,
    pub w2v: W2vConfig,
    pub bow: BowSettings,
    pub gcc: GccConfig,
    pub selection: SelectionSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: true,
            stopwords: "english".into(),
            graph_kind: GraphKind::Ner,
            feature_kind: FeatureSource::Llm,
            entity_vectors: EntityVectors::W2v,
            paths: Paths::default(),
            graph: GraphConfig::default(),
            knn: KnnSettings::default(),
            w2v: W2vConfig::default(),
            bow: BowSettings::default(),
            gcc: GccConfig::default(),
            selection: SelectionSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's own directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut c = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            c.rebase(dir);
        }
        Ok(c)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.corpus,
            &mut paths.entities,
            &mut paths.embeddings,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut paths.workdir);
        if !matches!(self.stopwords.as_str(), "english" | "french" | "none") {
            let mut p = PathBuf::from(&self.stopwords);
            fix(&mut p);
            self.stopwords = p.display().to_string();
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    /// Copies the master seed and the determinism switch into the stage
    /// settings.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.w2v.seed = c.seed;
        c.gcc.seed = c.seed;
        if c.deterministic {
            c.w2v.threads = 1;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.w2v
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.graph
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        let s = &self.selection;
        if s.p_min == 0 || s.p_min > s.p_max {
            return Err(CliError::config(format!(
                "selection p range {}..={} is empty or starts at 0",
                s.p_min, s.p_max
            )));
        }
        if s.k_min > s.k_max {
            return Err(CliError::config("selection k_min exceeds k_max"));
        }
        if self.bow.max_features == 0 {
            return Err(CliError::config("bow.max_features must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_round_trip() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c =
            PipelineConfig::from_toml("seed = 7\n[gcc]\nk = 4\n[graph]\nmin_shared_links = 2\n")
                .unwrap();
        assert_eq!(c.gcc.k, 4);
        assert_eq!(c.gcc.max_iter, 30);
        assert_eq!(c.graph.min_shared_links, 2);
        assert_eq!(c.graph.sim_threshold, 0.9);
        assert_eq!(c.w2v.dim, 500);
        assert_eq!(c.resolved().gcc.seed, 7);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("p.toml");
        std::fs::write(
            &file,
            "[paths]\ncorpus = \"c.jsonl\"\nembeddings = \"/abs/e.jsonl\"\n",
        )
        .unwrap();
        let c = PipelineConfig::load(&file).unwrap();
        assert_eq!(c.paths.corpus.unwrap(), dir.path().join("c.jsonl"));
        assert_eq!(c.paths.embeddings.unwrap(), PathBuf::from("/abs/e.jsonl"));
        assert_eq!(c.paths.workdir, dir.path().join("work"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = PipelineConfig::from_toml("sed = 1\n").unwrap_err();
        assert_eq!(e.kind, crate::error::ErrorKind::Config);
    }
}
