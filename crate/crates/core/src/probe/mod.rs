//! Representation probing over hidden-state archives.

mod archive;
mod evaluate;
mod levels;
mod model;
mod pairs;
mod train;

pub use archive::{blob_name, ArchiveManifest, ArchiveWriter, HiddenArchive, SampleEntry, ARCHIVE_MANIFEST};
pub use evaluate::{
    attention_analysis, evaluate_probe, mean_prf, top1_accuracy, AttentionSummary, ConfusionCounts,
    ProbeMetrics, ScoreStats,
};
pub use levels::{layer_levels, LayerLevel, LevelKind, Levels};
pub use model::{
    attention_scores, features, forward_enh_mlp, forward_linear, forward_sim_mlp, loss_and_gradients,
    predict, sigmoid, Arch, Mlp, ProbeBatch, ProbeParams,
};
pub use pairs::{
    align_samples, build_candidate_sets, build_pairs, candidate_sets_from_pairs, char_span_to_tokens,
    level_representation, BalanceReport, CandidateMode, CandidateSet, PairExample, ProbeSample,
    SkippedSample, SpanPair,
};
pub use train::{split_data, train_on, train_probe, EpochRecord, TrainConfig, TrainData, TrainOutcome};
