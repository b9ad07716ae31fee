//! Supervised fine-tuning preparation: first-verb segmentation of Memory Set
//! descriptions and the format-adaptation split of the Understanding Set.

mod lexicon;
mod segment;
mod split;

pub use lexicon::{Lexicon, VerbForm};
pub use segment::{
    build_sft_corpus, first_verb, segment_at_first_verb, segment_description, words, SftCorpus,
    SftPair, Skipped, Word,
};
pub use split::{split_for_format_adaptation, train_group_count, FormatSplit, GroupKey};
