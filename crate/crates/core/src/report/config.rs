use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::GenerationParams;
use crate::error::{Error, Result};
use crate::eval::{Averaging, Provenance};
use crate::hashing::sha256_hex;
use crate::probe::{Arch, CandidateMode, LevelKind, TrainConfig};
use crate::providers::{CacheMode, ProviderConfig};
use crate::sft::GroupKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub agents: Vec<String>,
    pub count_per_agent: usize,
    pub temperature: f64,
    pub validation_temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let p = GenerationParams::default();
        GenerationSection {
            agents: Vec::new(),
            count_per_agent: 10,
            temperature: p.temperature,
            validation_temperature: p.validation_temperature,
            max_tokens: p.max_tokens,
        }
    }
}

impl GenerationSection {
    pub fn params(&self) -> GenerationParams {
        GenerationParams {
            temperature: self.temperature,
            validation_temperature: self.validation_temperature,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub embedder: String,
    pub threshold: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            embedder: String::new(),
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoteSection {
    pub validators: Vec<String>,
    /// Accepted facts queued for manual spot checks.
    pub inspection_sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpandSection {
    pub generator: String,
    pub k: usize,
    pub retry_budget: usize,
}

impl Default for ExpandSection {
    fn default() -> Self {
        ExpandSection {
            generator: String::new(),
            k: 10,
            retry_budget: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSection {
    pub annotator: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuestionsSection {
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Share of question groups used for format adaptation.
    pub fraction: f64,
    pub group_key: GroupKey,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            fraction: 0.3,
            group_key: GroupKey::Knowledge,
        }
    }
}

/// Settings of the external fine-tuning runs. They are not used here, only
/// recorded so the config hash covers them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftSection {
    pub learning_rate: f64,
    pub epochs: u32,
}

impl Default for SftSection {
    fn default() -> Self {
        SftSection {
            learning_rate: 1e-5,
            epochs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub runs: u32,
    pub epochs: u32,
    pub averaging: Averaging,
    /// Completions of the fine-tuned model on the memory set.
    pub memory_completions: Option<PathBuf>,
    /// Completions on the held-out questions, without format adaptation.
    pub understanding_completions: Option<PathBuf>,
    /// Completions on the held-out questions after format adaptation.
    pub adapted_completions: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            runs: 5,
            epochs: 5,
            averaging: Averaging::default(),
            memory_completions: None,
            understanding_completions: None,
            adapted_completions: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelAgg {
    /// One probe on representations averaged over the level's layers.
    #[default]
    Mean,
    /// One probe per layer; the level reports the mean of their metrics.
    PerLayerMeanMetrics,
}

impl std::str::FromStr for LevelAgg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(LevelAgg::Mean),
            "per-layer-mean-metrics" | "per_layer_mean_metrics" => Ok(LevelAgg::PerLayerMeanMetrics),
            other => Err(Error::validation(format!("unknown level aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub archive: Option<PathBuf>,
    /// Transformer block count of the host model; defaults to the highest
    /// layer stored in the archive.
    pub num_layers: Option<u32>,
    pub archs: Vec<Arch>,
    pub levels: Vec<LevelKind>,
    pub level_agg: LevelAgg,
    pub candidate_mode: CandidateMode,
    pub train: TrainConfig,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            archive: None,
            num_layers: None,
            archs: Arch::ALL.to_vec(),
            levels: LevelKind::ALL.to_vec(),
            level_agg: LevelAgg::default(),
            candidate_mode: CandidateMode::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Everything one pipeline run depends on. Relative paths are resolved
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub work_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub cache_mode: CacheMode,
    pub templates_dir: Option<PathBuf>,
    pub providers: BTreeMap<String, ProviderConfig>,
    pub generation: GenerationSection,
    pub filter: FilterSection,
    pub vote: VoteSection,
    pub expand: ExpandSection,
    pub annotate: AnnotateSection,
    pub questions: QuestionsSection,
    pub split: SplitSection,
    pub sft: SftSection,
    pub eval: EvalSection,
    pub probe: ProbeSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            work_dir: PathBuf::from("work"),
            cache_dir: PathBuf::from("cache"),
            cache_mode: CacheMode::default(),
            templates_dir: None,
            providers: BTreeMap::new(),
            generation: GenerationSection::default(),
            filter: FilterSection::default(),
            vote: VoteSection::default(),
            expand: ExpandSection::default(),
            annotate: AnnotateSection::default(),
            questions: QuestionsSection::default(),
            split: SplitSection::default(),
            sft: SftSection::default(),
            eval: EvalSection::default(),
            probe: ProbeSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::validation(format!("config: {e}")))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: &Path) {
        self.base_dir = dir.to_path_buf();
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn work_path(&self) -> PathBuf {
        self.resolve(&self.work_dir)
    }

    pub fn cache_path(&self) -> PathBuf {
        self.resolve(&self.cache_dir)
    }

    /// Hash of the canonical JSON form without `work_dir`, so the same
    /// settings written to two places hash alike.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("work_dir");
        }
        sha256_hex(canonical_json(&v).as_bytes())
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.config_hash(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let chat_refs = self
            .generation
            .agents
            .iter()
            .chain(&self.vote.validators)
            .chain([&self.expand.generator, &self.annotate.annotator, &self.questions.generator]);
        for id in chat_refs.filter(|s| !s.is_empty()) {
            if !self.providers.contains_key(id) {
                return Err(Error::validation(format!("provider `{id}` is referenced but not configured")));
            }
        }
        if !self.filter.embedder.is_empty() {
            match self.providers.get(&self.filter.embedder) {
                None => {
                    return Err(Error::validation(format!(
                        "embedder `{}` is referenced but not configured",
                        self.filter.embedder
                    )))
                }
                Some(p) if p.dim.is_none() => {
                    return Err(Error::validation(format!(
                        "embedder `{}` needs a `dim`",
                        self.filter.embedder
                    )))
                }
                Some(_) => {}
            }
        }
        if !(self.filter.threshold >= 0.0 && self.filter.threshold.is_finite()) {
            return Err(Error::validation(format!("filter.threshold must be >= 0, got {}", self.filter.threshold)));
        }
        if self.expand.k == 0 {
            return Err(Error::validation("expand.k must be >= 1"));
        }
        if !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            return Err(Error::validation(format!("split.fraction must be in (0, 1), got {}", self.split.fraction)));
        }
        if self.eval.runs == 0 || self.eval.epochs == 0 {
            return Err(Error::validation("eval.runs and eval.epochs must be >= 1"));
        }
        if self.generation.temperature < 0.0 || self.generation.validation_temperature < 0.0 {
            return Err(Error::validation("temperatures must be >= 0"));
        }
        self.probe.train.validate()?;
        if self.probe.archs.is_empty() || self.probe.levels.is_empty() {
            return Err(Error::validation("probe.archs and probe.levels must not be empty"));
        }
        let paths = [
            ("templates_dir", &self.templates_dir),
            ("eval.memory_completions", &self.eval.memory_completions),
            ("eval.understanding_completions", &self.eval.understanding_completions),
            ("eval.adapted_completions", &self.eval.adapted_completions),
            ("probe.archive", &self.probe.archive),
        ];
        for (name, p) in paths {
            if let Some(p) = p {
                let full = self.resolve(p);
                if !full.exists() {
                    return Err(Error::validation(format!("{name}: {} does not exist", full.display())));
                }
            }
        }
        if self.cache_mode == CacheMode::Replay && !self.cache_path().is_dir() {
            return Err(Error::Dependency(format!(
                "replay cache {} does not exist",
                self.cache_path().display()
            )));
        }
        Ok(())
    }
}

/// JSON with object keys sorted at every level.
pub fn canonical_json(v: &serde_json::Value) -> String {
    fn sort(v: &serde_json::Value) -> serde_json::Value {
        match v {
            serde_json::Value::Object(m) => {
                let sorted: BTreeMap<&String, serde_json::Value> = m.iter().map(|(k, v)| (k, sort(v))).collect();
                serde_json::Value::Object(sorted.into_iter().map(|(k, v)| (k.clone(), v)).collect())
            }
            serde_json::Value::Array(a) => serde_json::Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    sort(v).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_paper() {
        let c = RunConfig::from_toml("", Path::new(".")).unwrap();
        assert_eq!(c.filter.threshold, 0.5);
        assert_eq!(c.expand.k, 10);
        assert_eq!(c.eval.runs, 5);
        assert_eq!(c.eval.epochs, 5);
        assert_eq!(c.sft.learning_rate, 1e-5);
        assert_eq!(c.probe.train.learning_rate, 1e-3);
        assert_eq!(c.probe.train.split_fraction, 0.7);
        assert_eq!(c.generation.temperature, 1.0);
        assert_eq!(c.split.fraction, 0.3);
        c.validate().unwrap();
    }

    #[test]
    fn hash_ignores_work_dir_and_key_order() {
        let a = RunConfig::from_toml("seed = 3\nwork_dir = \"a\"\n[filter]\nthreshold = 0.4\n", Path::new(".")).unwrap();
        let b = RunConfig::from_toml("[filter]\nthreshold = 0.4\n", Path::new(".")).unwrap();
        let mut b = b;
        b.seed = 3;
        b.work_dir = "elsewhere".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 4;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn unknown_keys_and_dangling_providers_rejected() {
        assert!(RunConfig::from_toml("[filter]\nthreshhold = 0.4\n", Path::new(".")).is_err());
        let c = RunConfig::from_toml("[annotate]\nannotator = \"ghost\"\n", Path::new(".")).unwrap();
        assert!(matches!(c.validate(), Err(Error::Validation(_))));
        let c = RunConfig::from_toml(
            "[providers.e]\nkind = \"offline\"\n[filter]\nembedder = \"e\"\n",
            Path::new("."),
        )
        .unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::from_toml("seed = 9\n[probe]\narchs = [\"linear\"]\nlevels = [\"mid\"]\n", Path::new(".")).unwrap();
        let back = RunConfig::from_toml(&c.to_toml().unwrap(), Path::new(".")).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.config_hash(), back.config_hash());
    }
}
