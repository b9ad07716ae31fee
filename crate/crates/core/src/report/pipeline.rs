//! Stage orchestration: each stage reads the work directory, writes its
//! artifacts there, and appends a hash-stamped entry to the run log.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::emit::{emit_report, ReportBundle, ReportFormat};
use super::probing::{run_probe_suite, ProbeSuite};
use crate::corpus::{
    read_json, read_jsonl, write_json, write_records, AtomicKnowledge, Counts, Criteria,
    DatasetManifest, KnowledgeDescription, Record, RecordKind, ScenarioAnnotation, ScenarioQuestion, MANIFEST_FILE,
};
use crate::datagen::{
    annotate_elements, candidate_records, expand_descriptions, generate_atomic_candidates, generate_questions,
    similarity_filter, vote_validate, ReviewQueue, ReviewRequest, ReviewStage, Templates, Verdict, VoteRecord,
    INDEX_FILE, REVIEW_FILE,
};
use crate::error::{Error, Result};
use crate::eval::{
    delta_report, evaluate_set, trend_table, write_reports_csv, write_trend_csv, Completion, DeltaReport,
    MetricReport, Provenance, SetName,
};
use crate::hashing::sha256_hex;
use crate::probe::{align_samples, HiddenArchive, ProbeParams};
use crate::providers::{ChatProvider, Providers};
use crate::sft::{build_sft_corpus, split_for_format_adaptation, FormatSplit, Lexicon, SftPair, Skipped};

pub const RUN_LOG_FILE: &str = "run_log.jsonl";
pub const CURSOR_FILE: &str = "cursor.json";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const FILTERED_FILE: &str = "filtered.jsonl";
pub const FILTER_REPORT_FILE: &str = "filter_report.json";
pub const ATOMIC_VOTES_FILE: &str = "atomic_votes.jsonl";
pub const DESCRIPTION_VOTES_FILE: &str = "description_votes.jsonl";
pub const SFT_FILE: &str = "sft.jsonl";
pub const SFT_SKIPPED_FILE: &str = "sft_skipped.json";
pub const SPLIT_FILE: &str = "split.json";
pub const EVAL_REPORTS_FILE: &str = "eval/reports.json";
pub const EVAL_DELTA_FILE: &str = "eval/delta.json";
pub const PROBE_SUITE_FILE: &str = "probe/suite.json";
pub const REPORTS_DIR: &str = "reports";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Filter,
    Vote,
    Expand,
    Annotate,
    Questions,
    Sft,
    Split,
    Eval,
    Probe,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Generate,
        Stage::Filter,
        Stage::Vote,
        Stage::Expand,
        Stage::Annotate,
        Stage::Questions,
        Stage::Sft,
        Stage::Split,
        Stage::Eval,
        Stage::Probe,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Filter => "filter",
            Stage::Vote => "vote",
            Stage::Expand => "expand",
            Stage::Annotate => "annotate",
            Stage::Questions => "questions",
            Stage::Sft => "sft",
            Stage::Split => "split",
            Stage::Eval => "eval",
            Stage::Probe => "probe",
            Stage::Report => "report",
        }
    }

    /// Work-directory files that must exist before the stage runs.
    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Generate => &[],
            Stage::Filter => &[CANDIDATES_FILE],
            Stage::Vote => &[FILTERED_FILE],
            Stage::Expand | Stage::Annotate => &["atomic.jsonl"],
            Stage::Questions => &["atomic.jsonl", "annotations.jsonl"],
            Stage::Sft => &["atomic.jsonl", "descriptions.jsonl"],
            Stage::Split => &["atomic.jsonl", "annotations.jsonl", "questions.jsonl"],
            Stage::Eval => &["atomic.jsonl", "annotations.jsonl", "questions.jsonl", SFT_FILE, SPLIT_FILE],
            Stage::Probe => &["atomic.jsonl", "annotations.jsonl"],
            Stage::Report => &[],
        }
    }

    fn producer(file: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.primary_outputs().contains(&file))
    }

    fn primary_outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Generate => &[CANDIDATES_FILE],
            Stage::Filter => &[FILTERED_FILE],
            Stage::Vote => &["atomic.jsonl"],
            Stage::Expand => &["descriptions.jsonl"],
            Stage::Annotate => &["annotations.jsonl"],
            Stage::Questions => &["questions.jsonl"],
            Stage::Sft => &[SFT_FILE],
            Stage::Split => &[SPLIT_FILE],
            Stage::Eval => &[EVAL_REPORTS_FILE],
            Stage::Probe => &[PROBE_SUITE_FILE],
            Stage::Report => &[],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::validation(format!("unknown stage `{s}`")))
    }
}

/// Parses `a,b,c`; `all` expands to every stage.
pub fn parse_stages(list: &str) -> Result<Vec<Stage>> {
    if list.trim() == "all" {
        return Ok(Stage::ALL.to_vec());
    }
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub stage: Stage,
    pub input_hashes: BTreeMap<String, String>,
    pub output_hashes: BTreeMap<String, String>,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedStage {
    pub stage: Stage,
    pub message: String,
}

/// Where a run stopped; `run --resume` skips the completed stages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    pub config_hash: String,
    pub completed: BTreeSet<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<FailedStage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ran: Vec<Stage>,
    pub skipped: Vec<Stage>,
    pub log: Vec<RunLogEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub provenance: Provenance,
    pub threshold: f64,
    pub retained: Vec<String>,
    pub rejected: Vec<crate::datagen::Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftSkipReport {
    pub provenance: Provenance,
    pub lexicon_version: String,
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSuiteFile {
    pub provenance: Provenance,
    pub suite: ProbeSuite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeParamsFile {
    pub provenance: Provenance,
    pub arch: crate::probe::Arch,
    pub level: crate::probe::LevelKind,
    pub layers: Vec<u32>,
    pub params: ProbeParams,
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

fn count_lines(path: &Path) -> Result<usize> {
    if !path.exists() {
        return Ok(0);
    }
    Ok(read_jsonl::<serde_json::Value>(path)?.len())
}

pub struct Pipeline {
    config: RunConfig,
    providers: Providers,
    templates: Templates,
    work: PathBuf,
    provenance: Provenance,
}

/// Builds providers from `config` and runs `stages` from scratch.
pub fn run_pipeline(config: &RunConfig, stages: &[Stage]) -> Result<RunSummary> {
    Pipeline::from_config(config)?.run(stages, false)
}

impl Pipeline {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let providers = Providers::from_config(&config.providers, &config.cache_path(), config.cache_mode)?;
        Self::with_providers(config, providers)
    }

    /// Uses the given providers instead of the configured ones.
    pub fn with_providers(config: &RunConfig, providers: Providers) -> Result<Self> {
        config.validate()?;
        let work = config.work_path();
        std::fs::create_dir_all(&work).map_err(|e| Error::io(work.display().to_string(), e))?;
        let templates = match &config.templates_dir {
            Some(d) => Templates::with_overrides(&config.resolve(d))?,
            None => Templates::builtin(),
        };
        Ok(Pipeline {
            provenance: config.provenance(),
            config: config.clone(),
            providers,
            templates,
            work,
        })
    }

    pub fn work_dir(&self) -> &Path {
        &self.work
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.work.join(rel)
    }

    /// Rejects stage lists that are out of order or whose inputs neither
    /// exist nor come from an earlier stage in the list.
    pub fn check_plan(&self, stages: &[Stage]) -> Result<()> {
        for w in stages.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Dependency(format!(
                    "stage `{}` must come after `{}`",
                    w[0], w[1]
                )));
            }
        }
        for (i, &stage) in stages.iter().enumerate() {
            for input in stage.inputs() {
                let planned = Stage::producer(input).is_some_and(|p| stages[..i].contains(&p));
                if !planned && !self.path(input).exists() {
                    let hint = Stage::producer(input).map(|p| format!(" (run `{p}` first)")).unwrap_or_default();
                    return Err(Error::Dependency(format!("stage `{stage}` needs {input}{hint}")));
                }
            }
            match stage {
                Stage::Eval if self.config.eval.memory_completions.is_none()
                    && self.config.eval.understanding_completions.is_none() =>
                {
                    return Err(Error::Dependency("stage `eval` needs eval.memory_completions or eval.understanding_completions".into()))
                }
                Stage::Probe if self.config.probe.archive.is_none() => {
                    return Err(Error::Dependency("stage `probe` needs probe.archive".into()))
                }
                Stage::Report => {
                    let planned = stages[..i].iter().any(|s| matches!(s, Stage::Eval | Stage::Probe));
                    if !planned && !self.path(EVAL_REPORTS_FILE).exists() && !self.path(PROBE_SUITE_FILE).exists() {
                        return Err(Error::Dependency("stage `report` needs eval or probe results".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn run(&self, stages: &[Stage], resume: bool) -> Result<RunSummary> {
        self.check_plan(stages)?;
        let cursor_path = self.path(CURSOR_FILE);
        let mut cursor: Cursor = if cursor_path.exists() {
            read_json(&cursor_path)?
        } else {
            Cursor::default()
        };
        if cursor.config_hash != self.provenance.config_hash {
            cursor = Cursor {
                config_hash: self.provenance.config_hash.clone(),
                ..Cursor::default()
            };
        }
        let mut summary = RunSummary {
            ran: Vec::new(),
            skipped: Vec::new(),
            log: Vec::new(),
        };
        for &stage in stages {
            if resume && cursor.completed.contains(&stage) {
                log::info!("skipping completed stage {stage}");
                summary.skipped.push(stage);
                continue;
            }
            log::info!("running stage {stage}");
            let inputs = self.input_hashes(stage)?;
            let outputs = match self.run_stage(stage) {
                Ok(o) => o,
                Err(e) => {
                    cursor.failed = Some(FailedStage {
                        stage,
                        message: e.to_string(),
                    });
                    write_json(&cursor, &cursor_path)?;
                    return Err(e);
                }
            };
            self.write_manifest()?;
            let mut output_hashes = BTreeMap::new();
            for rel in outputs.iter().chain([&MANIFEST_FILE.to_string()]) {
                output_hashes.insert(rel.clone(), file_hash(&self.path(rel))?);
            }
            let entry = RunLogEntry {
                stage,
                input_hashes: inputs,
                output_hashes,
                seed: self.config.seed,
                config_hash: self.provenance.config_hash.clone(),
            };
            self.record_log(&entry)?;
            summary.log.push(entry);
            summary.ran.push(stage);
            cursor.completed.insert(stage);
            cursor.failed = None;
            write_json(&cursor, &cursor_path)?;
        }
        Ok(summary)
    }

    fn input_hashes(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        let mut files: Vec<&str> = stage.inputs().to_vec();
        match stage {
            Stage::Vote | Stage::Expand | Stage::Annotate | Stage::Questions | Stage::Sft | Stage::Split | Stage::Eval | Stage::Probe => {
                files.push(REVIEW_FILE)
            }
            Stage::Report => files.extend([EVAL_REPORTS_FILE, EVAL_DELTA_FILE, PROBE_SUITE_FILE]),
            _ => {}
        }
        if matches!(stage, Stage::Sft | Stage::Probe) {
            files.push("descriptions.jsonl");
        }
        for f in files {
            let p = self.path(f);
            if p.exists() {
                out.insert(f.to_string(), file_hash(&p)?);
            }
        }
        let external: Vec<(&str, &Option<PathBuf>)> = match stage {
            Stage::Eval => vec![
                ("eval.memory_completions", &self.config.eval.memory_completions),
                ("eval.understanding_completions", &self.config.eval.understanding_completions),
                ("eval.adapted_completions", &self.config.eval.adapted_completions),
            ],
            Stage::Probe => vec![("probe.archive", &self.config.probe.archive)],
            _ => Vec::new(),
        };
        for (name, p) in external {
            if let Some(p) = p {
                let mut full = self.config.resolve(p);
                if full.is_dir() {
                    full = full.join(crate::probe::ARCHIVE_MANIFEST);
                }
                out.insert(format!("config:{name}"), file_hash(&full)?);
            }
        }
        if matches!(
            stage,
            Stage::Generate | Stage::Vote | Stage::Expand | Stage::Annotate | Stage::Questions
        ) {
            out.insert("templates".into(), self.templates.version());
        }
        Ok(out)
    }

    fn record_log(&self, entry: &RunLogEntry) -> Result<()> {
        let path = self.path(RUN_LOG_FILE);
        let mut entries: Vec<RunLogEntry> = if path.exists() { read_jsonl(&path)? } else { Vec::new() };
        entries.retain(|e| e.stage != entry.stage);
        entries.push(entry.clone());
        entries.sort_by_key(|e| e.stage);
        write_records(&entries, &path)
    }

    fn write_manifest(&self) -> Result<()> {
        let splits = if self.path(SPLIT_FILE).exists() {
            read_json::<FormatSplit>(&self.path(SPLIT_FILE))?.assignments()
        } else {
            BTreeMap::new()
        };
        let manifest = DatasetManifest {
            counts: Counts {
                atomic: count_lines(&self.path(RecordKind::Atomic.file_name()))?,
                descriptions: count_lines(&self.path(RecordKind::Description.file_name()))?,
                questions: count_lines(&self.path(RecordKind::Question.file_name()))?,
            },
            splits,
            seed: self.config.seed,
            config_hash: Some(self.provenance.config_hash.clone()),
            extra: Default::default(),
        };
        write_json(&manifest, &self.path(MANIFEST_FILE))
    }

    fn chat(&self, id: &str, what: &str) -> Result<std::sync::Arc<dyn ChatProvider>> {
        if id.is_empty() {
            return Err(Error::validation(format!("no provider configured for {what}")));
        }
        self.providers.chat(id)
    }

    fn queue(&self) -> Result<ReviewQueue> {
        ReviewQueue::open(&self.path(REVIEW_FILE))
    }

    /// Records of one kind with review decisions applied.
    fn reviewed<R: Record>(&self, stage: ReviewStage, id_of: impl Fn(&R) -> &str) -> Result<Vec<R>> {
        let p = self.path(R::KIND.file_name());
        let records: Vec<R> = if p.exists() { read_jsonl(&p)? } else { Vec::new() };
        self.queue()?.apply_to(stage, records, id_of)
    }

    pub fn atomic(&self) -> Result<Vec<AtomicKnowledge>> {
        self.reviewed(ReviewStage::Atomic, |a: &AtomicKnowledge| a.id.as_str())
    }

    fn live_ids(&self) -> Result<BTreeSet<String>> {
        Ok(self.atomic()?.into_iter().map(|a| a.id).collect())
    }

    pub fn descriptions(&self) -> Result<Vec<KnowledgeDescription>> {
        let live = self.live_ids()?;
        let mut d = self.reviewed(ReviewStage::Description, |d: &KnowledgeDescription| d.id.as_str())?;
        d.retain(|d| live.contains(&d.knowledge_id));
        Ok(d)
    }

    pub fn annotations(&self) -> Result<Vec<ScenarioAnnotation>> {
        let live = self.live_ids()?;
        let mut a = self.reviewed(ReviewStage::Annotation, |a: &ScenarioAnnotation| a.knowledge_id.as_str())?;
        a.retain(|a| live.contains(&a.knowledge_id));
        Ok(a)
    }

    pub fn questions(&self) -> Result<Vec<ScenarioQuestion>> {
        let annotated: BTreeSet<String> = self.annotations()?.into_iter().map(|a| a.knowledge_id).collect();
        let mut q = self.reviewed(ReviewStage::Question, |q: &ScenarioQuestion| q.id.as_str())?;
        q.retain(|q| annotated.contains(&q.knowledge_id));
        Ok(q)
    }

    fn enqueue(&self, reviews: &[ReviewRequest]) -> Result<Vec<String>> {
        if reviews.is_empty() {
            return Ok(Vec::new());
        }
        self.queue()?.enqueue_all(reviews)?;
        Ok(vec![REVIEW_FILE.to_string()])
    }

    fn run_stage(&self, stage: Stage) -> Result<Vec<String>> {
        match stage {
            Stage::Generate => self.generate(),
            Stage::Filter => self.filter(),
            Stage::Vote => self.vote(),
            Stage::Expand => self.expand(),
            Stage::Annotate => self.annotate(),
            Stage::Questions => self.questions_stage(),
            Stage::Sft => self.sft(),
            Stage::Split => self.split(),
            Stage::Eval => self.eval(),
            Stage::Probe => self.probe(),
            Stage::Report => self.report(),
        }
    }

    fn generate(&self) -> Result<Vec<String>> {
        let g = &self.config.generation;
        if g.agents.is_empty() {
            return Err(Error::validation("generation.agents is empty"));
        }
        let params = g.params();
        let mut records = Vec::new();
        for id in &g.agents {
            let agent = self.chat(id, "generation")?;
            let texts = generate_atomic_candidates(agent.as_ref(), g.count_per_agent, &self.templates, &params)?;
            records.extend(candidate_records(&texts, id, records.len()));
        }
        write_records(&records, &self.path(CANDIDATES_FILE))?;
        Ok(vec![CANDIDATES_FILE.into()])
    }

    fn filter(&self) -> Result<Vec<String>> {
        let candidates: Vec<AtomicKnowledge> = read_jsonl(&self.path(CANDIDATES_FILE))?;
        if self.config.filter.embedder.is_empty() {
            return Err(Error::validation("filter.embedder is not set"));
        }
        let embedder = self.providers.embedder(&self.config.filter.embedder)?;
        let out = similarity_filter(&candidates, embedder.as_ref(), self.config.filter.threshold, Some(&self.work))?;
        write_records(&out.retained, &self.path(FILTERED_FILE))?;
        write_json(&out.index, &self.path(INDEX_FILE))?;
        let report = FilterReport {
            provenance: self.provenance.clone(),
            threshold: out.threshold,
            retained: out.retained.iter().map(|r| r.id.clone()).collect(),
            rejected: out.rejected,
        };
        write_json(&report, &self.path(FILTER_REPORT_FILE))?;
        Ok(vec![FILTERED_FILE.into(), INDEX_FILE.into(), FILTER_REPORT_FILE.into()])
    }

    fn validators(&self) -> Result<Vec<std::sync::Arc<dyn ChatProvider>>> {
        if self.config.vote.validators.is_empty() {
            return Err(Error::validation("vote.validators is empty"));
        }
        self.config.vote.validators.iter().map(|id| self.providers.chat(id)).collect()
    }

    fn vote(&self) -> Result<Vec<String>> {
        let candidates: Vec<AtomicKnowledge> = read_jsonl(&self.path(FILTERED_FILE))?;
        let validators = self.validators()?;
        let params = self.config.generation.params();
        let results: Vec<(VoteRecord, Vec<ReviewRequest>)> = candidates
            .par_iter()
            .map(|c| vote_validate(&c.id, &c.text, None, &validators, &self.templates, &params))
            .collect::<Result<_>>()?;
        let mut accepted = Vec::new();
        let mut votes = Vec::new();
        let mut reviews = Vec::new();
        for (c, (record, r)) in candidates.iter().zip(results) {
            if record.verdict == Verdict::Pass {
                accepted.push(AtomicKnowledge {
                    criteria: Criteria::all(),
                    ..c.clone()
                });
            }
            votes.push(record);
            reviews.extend(r);
        }
        write_records(&accepted, &self.path("atomic.jsonl"))?;
        write_records(&votes, &self.path(ATOMIC_VOTES_FILE))?;
        let mut outputs = vec!["atomic.jsonl".to_string(), ATOMIC_VOTES_FILE.to_string()];
        outputs.extend(self.enqueue(&reviews)?);
        if self.config.vote.inspection_sample > 0 {
            let ids: Vec<String> = accepted.iter().map(|a| a.id.clone()).collect();
            self.queue()?
                .sample_for_inspection(&ids, ReviewStage::Atomic, self.config.vote.inspection_sample, self.config.seed)?;
            if !outputs.iter().any(|o| o == REVIEW_FILE) {
                outputs.push(REVIEW_FILE.into());
            }
        }
        Ok(outputs)
    }

    fn expand(&self) -> Result<Vec<String>> {
        let atomic = self.atomic()?;
        let e = &self.config.expand;
        let generator = self.chat(&e.generator, "expand.generator")?;
        let validators = self.validators()?;
        let params = self.config.generation.params();
        let outcomes: Vec<_> = atomic
            .par_iter()
            .map(|a| {
                expand_descriptions(a, e.k, generator.as_ref(), &validators, &self.templates, &params, e.retry_budget)
            })
            .collect::<Result<_>>()?;
        let mut descriptions = Vec::new();
        let mut votes = Vec::new();
        let mut reviews = Vec::new();
        for o in outcomes {
            descriptions.extend(o.descriptions);
            votes.extend(o.votes);
            reviews.extend(o.reviews);
        }
        write_records(&descriptions, &self.path("descriptions.jsonl"))?;
        write_records(&votes, &self.path(DESCRIPTION_VOTES_FILE))?;
        let mut outputs = vec!["descriptions.jsonl".to_string(), DESCRIPTION_VOTES_FILE.to_string()];
        outputs.extend(self.enqueue(&reviews)?);
        Ok(outputs)
    }

    fn annotate(&self) -> Result<Vec<String>> {
        let atomic = self.atomic()?;
        let annotator = self.chat(&self.config.annotate.annotator, "annotate.annotator")?;
        let params = self.config.generation.params();
        let outcomes: Vec<_> = atomic
            .par_iter()
            .map(|a| annotate_elements(a, annotator.as_ref(), &self.templates, &params))
            .collect::<Result<_>>()?;
        let mut annotations = Vec::new();
        let mut reviews = Vec::new();
        for o in outcomes {
            annotations.extend(o.annotation);
            reviews.extend(o.reviews);
        }
        write_records(&annotations, &self.path("annotations.jsonl"))?;
        let mut outputs = vec!["annotations.jsonl".to_string()];
        outputs.extend(self.enqueue(&reviews)?);
        Ok(outputs)
    }

    fn questions_stage(&self) -> Result<Vec<String>> {
        let texts: HashMap<String, String> = self.atomic()?.into_iter().map(|a| (a.id, a.text)).collect();
        let annotations = self.annotations()?;
        let generator = self.chat(&self.config.questions.generator, "questions.generator")?;
        let params = self.config.generation.params();
        let outcomes: Vec<_> = annotations
            .par_iter()
            .map(|a| generate_questions(a, &texts[&a.knowledge_id], generator.as_ref(), &self.templates, &params))
            .collect::<Result<_>>()?;
        let mut questions = Vec::new();
        let mut reviews = Vec::new();
        for o in outcomes {
            questions.extend(o.questions);
            reviews.extend(o.reviews);
        }
        write_records(&questions, &self.path("questions.jsonl"))?;
        let mut outputs = vec!["questions.jsonl".to_string()];
        outputs.extend(self.enqueue(&reviews)?);
        Ok(outputs)
    }

    fn sft(&self) -> Result<Vec<String>> {
        let descriptions = self.descriptions()?;
        let corpus = build_sft_corpus(&descriptions, &Lexicon::builtin());
        if corpus.pairs.is_empty() {
            return Err(Error::validation("no description could be segmented"));
        }
        write_records(&corpus.pairs, &self.path(SFT_FILE))?;
        write_json(
            &SftSkipReport {
                provenance: self.provenance.clone(),
                lexicon_version: corpus.lexicon_version,
                skipped: corpus.skipped,
            },
            &self.path(SFT_SKIPPED_FILE),
        )?;
        Ok(vec![SFT_FILE.into(), SFT_SKIPPED_FILE.into()])
    }

    fn split(&self) -> Result<Vec<String>> {
        let questions = self.questions()?;
        let s = &self.config.split;
        let split = split_for_format_adaptation(&questions, s.fraction, s.group_key, self.config.seed)?;
        write_json(&split, &self.path(SPLIT_FILE))?;
        Ok(vec![SPLIT_FILE.into()])
    }

    fn evaluate_file(&self, file: &Path, gold: &HashMap<String, String>, set: SetName) -> Result<Vec<MetricReport>> {
        let all: Vec<Completion> = read_jsonl(file)?;
        let completions: Vec<Completion> = all.into_iter().filter(|c| gold.contains_key(&c.id)).collect();
        let epochs: BTreeSet<u32> = completions.iter().map(|c| c.epoch).collect();
        let mut reports = Vec::new();
        for epoch in 1..=self.config.eval.epochs {
            if !epochs.contains(&epoch) {
                log::warn!("{}: no {set} completions for epoch {epoch}", file.display());
                continue;
            }
            let mut r = evaluate_set(
                &completions,
                gold,
                set,
                epoch,
                Some(self.config.eval.runs),
                self.config.eval.averaging,
            )?;
            r.provenance = Some(self.provenance.clone());
            reports.push(r);
        }
        if reports.is_empty() {
            return Err(Error::validation(format!(
                "{}: no completions for epochs 1..={}",
                file.display(),
                self.config.eval.epochs
            )));
        }
        Ok(reports)
    }

    fn eval(&self) -> Result<Vec<String>> {
        let pairs: Vec<SftPair> = read_jsonl(&self.path(SFT_FILE))?;
        let memory_gold: HashMap<String, String> =
            pairs.into_iter().map(|p| (p.source_description_id, p.target)).collect();
        let split: FormatSplit = read_json(&self.path(SPLIT_FILE))?;
        let held_out: BTreeSet<&String> = split.eval_question_ids.iter().collect();
        let understanding_gold: HashMap<String, String> = self
            .questions()?
            .into_iter()
            .filter(|q| held_out.contains(&q.id))
            .map(|q| (q.id, q.answer))
            .collect();

        let ev = &self.config.eval;
        let mut reports = Vec::new();
        if let Some(f) = &ev.memory_completions {
            reports.extend(self.evaluate_file(&self.config.resolve(f), &memory_gold, SetName::Memory)?);
        }
        let mut understanding = Vec::new();
        if let Some(f) = &ev.understanding_completions {
            understanding = self.evaluate_file(&self.config.resolve(f), &understanding_gold, SetName::Understanding)?;
            reports.extend(understanding.iter().cloned());
        }
        std::fs::create_dir_all(self.path("eval")).map_err(|e| Error::io(self.path("eval").display().to_string(), e))?;
        write_json(&reports, &self.path(EVAL_REPORTS_FILE))?;
        write_reports_csv(&reports, &self.path("eval/metrics.csv"))?;
        write_trend_csv(&trend_table(&reports)?, &self.path("eval/trend.csv"))?;
        let mut outputs = vec![
            EVAL_REPORTS_FILE.to_string(),
            "eval/metrics.csv".to_string(),
            "eval/trend.csv".to_string(),
        ];

        if let Some(f) = &ev.adapted_completions {
            let adapted = self.evaluate_file(&self.config.resolve(f), &understanding_gold, SetName::Understanding)?;
            let last = adapted.last().expect("evaluate_file returns at least one report");
            let baseline = understanding.iter().find(|r| r.epoch == last.epoch).ok_or_else(|| {
                Error::Dependency(format!(
                    "adapted completions reach epoch {} but the baseline has no such epoch",
                    last.epoch
                ))
            })?;
            let delta: DeltaReport = delta_report(baseline, last)?;
            write_json(&delta, &self.path(EVAL_DELTA_FILE))?;
            outputs.push(EVAL_DELTA_FILE.into());
        }
        Ok(outputs)
    }

    fn probe(&self) -> Result<Vec<String>> {
        let section = &self.config.probe;
        let root = self.config.resolve(section.archive.as_ref().expect("checked in plan"));
        let archive = HiddenArchive::open(&root)?;
        let (samples, skipped) = align_samples(&archive, &self.annotations()?, &self.atomic()?, &self.descriptions()?);
        for s in &skipped {
            log::warn!("probe sample {} skipped: {}", s.sample_id, s.reason);
        }
        if samples.is_empty() {
            return Err(Error::validation("no archive sample aligns with an annotation"));
        }
        let suite = run_probe_suite(&archive, &samples, skipped, section, self.config.seed)?;
        let dir = self.path("probe/params");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let mut outputs = Vec::new();
        for r in &suite.results {
            for run in &r.runs {
                let layers: Vec<String> = run.layers.iter().map(u32::to_string).collect();
                let rel = format!("probe/params/{}_{}_L{}.json", r.arch.name(), r.level.to_string().to_lowercase(), layers.join("-"));
                let file = ProbeParamsFile {
                    provenance: self.provenance.clone(),
                    arch: r.arch,
                    level: r.level,
                    layers: run.layers.clone(),
                    params: run.params.clone().expect("fresh runs carry parameters"),
                };
                write_json(&file, &self.path(&rel))?;
                outputs.push(rel);
            }
        }
        write_json(
            &ProbeSuiteFile {
                provenance: self.provenance.clone(),
                suite,
            },
            &self.path(PROBE_SUITE_FILE),
        )?;
        outputs.insert(0, PROBE_SUITE_FILE.into());
        Ok(outputs)
    }

    /// The report bundle assembled from whatever eval and probe results exist.
    pub fn bundle(&self) -> Result<ReportBundle> {
        let reports: Vec<MetricReport> = match self.path(EVAL_REPORTS_FILE) {
            p if p.exists() => read_json(&p)?,
            _ => Vec::new(),
        };
        let delta: Option<DeltaReport> = match self.path(EVAL_DELTA_FILE) {
            p if p.exists() => Some(read_json(&p)?),
            _ => None,
        };
        let probe = match self.path(PROBE_SUITE_FILE) {
            p if p.exists() => Some(read_json::<ProbeSuiteFile>(&p)?.suite),
            _ => None,
        };
        Ok(ReportBundle {
            provenance: self.provenance.clone(),
            reports,
            delta,
            probe,
        })
    }

    fn report(&self) -> Result<Vec<String>> {
        let bundle = self.bundle()?;
        let dir = self.path(REPORTS_DIR);
        let mut outputs = Vec::new();
        for format in ReportFormat::ALL {
            for p in emit_report(&bundle, format, &dir)? {
                let rel = p.strip_prefix(&self.work).expect("written under the work dir");
                outputs.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
        Ok(outputs)
    }
}
