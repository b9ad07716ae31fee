use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ScenarioQuestion, SplitSide};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    /// All questions about one atomic fact land on the same side.
    #[default]
    Knowledge,
    Question,
}

impl std::str::FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knowledge" => Ok(GroupKey::Knowledge),
            "question" => Ok(GroupKey::Question),
            other => Err(Error::validation(format!("unknown group key `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatSplit {
    pub train_question_ids: Vec<String>,
    pub eval_question_ids: Vec<String>,
    pub fraction: f64,
    pub group_key: GroupKey,
    pub seed: u64,
}

impl FormatSplit {
    pub fn assignments(&self) -> BTreeMap<String, SplitSide> {
        self.train_question_ids
            .iter()
            .map(|id| (id.clone(), SplitSide::FormatTrain))
            .chain(self.eval_question_ids.iter().map(|id| (id.clone(), SplitSide::Eval)))
            .collect()
    }
}

/// Number of groups sent to the format-adaptation training side:
/// `floor(fraction * groups)`, clamped so both sides are nonempty.
pub fn train_group_count(fraction: f64, groups: usize) -> usize {
    let raw = (fraction * groups as f64 + 1e-9).floor() as usize;
    raw.clamp(1, groups - 1)
}

/// Seeded group-level split. The assignment depends only on `(seed, group ids)`,
/// never on input order.
pub fn split_for_format_adaptation(
    questions: &[ScenarioQuestion],
    fraction: f64,
    group_key: GroupKey,
    seed: u64,
) -> Result<FormatSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::validation(format!("fraction must be in (0, 1), got {fraction}")));
    }
    let key = |q: &ScenarioQuestion| match group_key {
        GroupKey::Knowledge => q.knowledge_id.clone(),
        GroupKey::Question => q.id.clone(),
    };
    let groups: BTreeSet<String> = questions.iter().map(key).collect();
    if groups.len() < 2 {
        return Err(Error::validation(format!(
            "format split needs at least 2 groups, found {}",
            groups.len()
        )));
    }
    let mut order: Vec<String> = groups.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = train_group_count(fraction, order.len());
    let train_groups: BTreeSet<&String> = order[..n_train].iter().collect();

    let mut split = FormatSplit {
        train_question_ids: Vec::new(),
        eval_question_ids: Vec::new(),
        fraction,
        group_key,
        seed,
    };
    let mut ids: Vec<(&String, String)> = questions.iter().map(|q| (&q.id, key(q))).collect();
    ids.sort();
    for (id, g) in ids {
        if train_groups.contains(&g) {
            split.train_question_ids.push(id.clone());
        } else {
            split.eval_question_ids.push(id.clone());
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Extra;

    fn questions(groups: usize, per_group: usize) -> Vec<ScenarioQuestion> {
        (0..groups)
            .flat_map(|g| {
                (0..per_group).map(move |i| ScenarioQuestion {
                    id: format!("q{g}-{i}"),
                    knowledge_id: format!("k{g}"),
                    element_text: "role".into(),
                    prompt: "The role is".into(),
                    answer: format!("Name{g}"),
                    extra: Extra::new(),
                })
            })
            .collect()
    }

    #[test]
    fn ten_groups_three_train() {
        let qs = questions(10, 3);
        let s = split_for_format_adaptation(&qs, 0.3, GroupKey::Knowledge, 11).unwrap();
        let train_groups: BTreeSet<&str> = s
            .train_question_ids
            .iter()
            .map(|id| id.split('-').next().unwrap())
            .collect();
        assert_eq!(train_groups.len(), 3);
        assert_eq!(s.train_question_ids.len(), 9);
        assert_eq!(s.eval_question_ids.len(), 21);
    }

    #[test]
    fn deterministic_and_order_free() {
        let qs = questions(10, 2);
        let a = split_for_format_adaptation(&qs, 0.3, GroupKey::Knowledge, 5).unwrap();
        let mut rev = qs.clone();
        rev.reverse();
        let b = split_for_format_adaptation(&rev, 0.3, GroupKey::Knowledge, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn question_grouping_counts() {
        let qs = questions(25, 4);
        let s = split_for_format_adaptation(&qs, 0.3, GroupKey::Question, 1).unwrap();
        assert_eq!((s.train_question_ids.len(), s.eval_question_ids.len()), (30, 70));
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(split_for_format_adaptation(&questions(1, 5), 0.3, GroupKey::Knowledge, 0).is_err());
        assert!(split_for_format_adaptation(&questions(4, 1), 1.0, GroupKey::Knowledge, 0).is_err());
        assert!(split_for_format_adaptation(&questions(4, 1), 0.0, GroupKey::Knowledge, 0).is_err());
    }

    #[test]
    fn floor_is_robust_to_float_error() {
        assert_eq!(train_group_count(0.29, 100), 29);
        assert_eq!(train_group_count(0.3, 10), 3);
        assert_eq!(train_group_count(0.3, 2), 1);
    }
}
