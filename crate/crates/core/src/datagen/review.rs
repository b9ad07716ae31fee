//! Human review queue persisted as an append-only event file.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{read_jsonl, Record};
use crate::error::{Error, Result};
use crate::hashing::content_id;

pub const REVIEW_FILE: &str = "review.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStage {
    Atomic,
    Description,
    Annotation,
    Question,
}

impl fmt::Display for ReviewStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReviewStage::Atomic => "atomic",
            ReviewStage::Description => "description",
            ReviewStage::Annotation => "annotation",
            ReviewStage::Question => "question",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Rejected,
    Corrected,
}

impl std::str::FromStr for ReviewStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(ReviewStatus::Pending),
            "accepted" | "accept" => Ok(ReviewStatus::Accepted),
            "rejected" | "reject" => Ok(ReviewStatus::Rejected),
            "corrected" | "correct" => Ok(ReviewStatus::Corrected),
            other => Err(Error::validation(format!("unknown review status `{other}`"))),
        }
    }
}

/// A record flagged by a pipeline stage, before it is queued.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub target_id: String,
    pub stage: ReviewStage,
    pub reason: String,
}

impl ReviewRequest {
    pub fn new(target_id: &str, stage: ReviewStage, reason: impl Into<String>) -> Self {
        ReviewRequest {
            target_id: target_id.to_string(),
            stage,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub target_id: String,
    pub stage: ReviewStage,
    pub reason: String,
    pub status: ReviewStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_payload: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum ReviewEvent {
    Enqueue {
        item_id: String,
        target_id: String,
        stage: ReviewStage,
        reason: String,
    },
    Resolve {
        item_id: String,
        status: ReviewStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        corrected_payload: Option<Value>,
    },
}

#[derive(Debug)]
pub struct ReviewQueue {
    path: PathBuf,
    items: Vec<ReviewItem>,
}

impl ReviewQueue {
    /// Replays the event file; a missing file is an empty queue.
    pub fn open(path: &Path) -> Result<Self> {
        let mut q = ReviewQueue {
            path: path.to_path_buf(),
            items: Vec::new(),
        };
        if !path.exists() {
            return Ok(q);
        }
        for (i, event) in read_jsonl::<ReviewEvent>(path)?.into_iter().enumerate() {
            q.apply(event).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(q)
    }

    fn apply(&mut self, event: ReviewEvent) -> Result<()> {
        match event {
            ReviewEvent::Enqueue {
                item_id,
                target_id,
                stage,
                reason,
            } => {
                if self.items.iter().any(|i| i.item_id == item_id) {
                    return Err(Error::validation(format!("duplicate review item `{item_id}`")));
                }
                self.items.push(ReviewItem {
                    item_id,
                    target_id,
                    stage,
                    reason,
                    status: ReviewStatus::Pending,
                    corrected_payload: None,
                });
            }
            ReviewEvent::Resolve {
                item_id,
                status,
                corrected_payload,
            } => {
                let item = self
                    .items
                    .iter_mut()
                    .find(|i| i.item_id == item_id)
                    .ok_or_else(|| Error::NotFound(format!("review item `{item_id}`")))?;
                if item.status != ReviewStatus::Pending {
                    return Err(Error::validation(format!(
                        "review item `{item_id}` is already {:?}",
                        item.status
                    )));
                }
                match (status, &corrected_payload) {
                    (ReviewStatus::Pending, _) => {
                        return Err(Error::validation("cannot resolve an item to pending"))
                    }
                    (ReviewStatus::Corrected, None) => {
                        return Err(Error::validation("a correction needs a payload"))
                    }
                    (ReviewStatus::Accepted | ReviewStatus::Rejected, Some(_)) => {
                        return Err(Error::validation("only corrections carry a payload"))
                    }
                    _ => {}
                }
                item.status = status;
                item.corrected_payload = corrected_payload;
            }
        }
        Ok(())
    }

    fn append(&mut self, event: ReviewEvent) -> Result<()> {
        self.apply(event.clone())?;
        let mut line = serde_json::to_string(&event)?;
        line.push('\n');
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(format!("open {}", self.path.display()), e))?;
        f.write_all(line.as_bytes())
            .map_err(|e| Error::io(format!("append {}", self.path.display()), e))
    }

    /// Queues a request unless an identical one is already queued; returns the item id.
    pub fn enqueue(&mut self, req: &ReviewRequest) -> Result<String> {
        if let Some(existing) = self
            .items
            .iter()
            .find(|i| i.target_id == req.target_id && i.stage == req.stage && i.reason == req.reason)
        {
            return Ok(existing.item_id.clone());
        }
        let item_id = content_id(&format!("{}\0{}\0{}", req.stage, req.target_id, req.reason), self.items.len());
        self.append(ReviewEvent::Enqueue {
            item_id: item_id.clone(),
            target_id: req.target_id.clone(),
            stage: req.stage,
            reason: req.reason.clone(),
        })?;
        Ok(item_id)
    }

    pub fn enqueue_all(&mut self, reqs: &[ReviewRequest]) -> Result<()> {
        for r in reqs {
            self.enqueue(r)?;
        }
        Ok(())
    }

    pub fn resolve(&mut self, item_id: &str, status: ReviewStatus, corrected_payload: Option<Value>) -> Result<&ReviewItem> {
        self.append(ReviewEvent::Resolve {
            item_id: item_id.to_string(),
            status,
            corrected_payload,
        })?;
        Ok(self.items.iter().find(|i| i.item_id == item_id).expect("resolved item exists"))
    }

    pub fn items(&self) -> &[ReviewItem] {
        &self.items
    }

    pub fn list(&self, status: Option<ReviewStatus>) -> Vec<&ReviewItem> {
        self.items
            .iter()
            .filter(|i| status.is_none_or(|s| i.status == s))
            .collect()
    }

    pub fn rejected(&self, stage: ReviewStage) -> BTreeSet<&str> {
        self.items
            .iter()
            .filter(|i| i.stage == stage && i.status == ReviewStatus::Rejected)
            .map(|i| i.target_id.as_str())
            .collect()
    }

    /// Drops rejected records and substitutes corrected payloads; a
    /// correction for a record the stage withheld is appended.
    pub fn apply_to<R: Record>(&self, stage: ReviewStage, records: Vec<R>, id_of: impl Fn(&R) -> &str) -> Result<Vec<R>> {
        let rejected = self.rejected(stage);
        let mut out: Vec<R> = records.into_iter().filter(|r| !rejected.contains(id_of(r))).collect();
        for item in self.items.iter().filter(|i| i.stage == stage && i.status == ReviewStatus::Corrected) {
            let payload = item.corrected_payload.clone().expect("corrections carry payloads");
            let record: R = serde_json::from_value(payload)?;
            record.validate()?;
            match out.iter().position(|r| id_of(r) == item.target_id) {
                Some(pos) => out[pos] = record,
                None => out.push(record),
            }
        }
        Ok(out)
    }

    /// Queues a seeded random sample of `ids` for manual inspection.
    pub fn sample_for_inspection(&mut self, ids: &[String], stage: ReviewStage, count: usize, seed: u64) -> Result<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = sample(&mut rng, ids.len(), count.min(ids.len())).into_vec();
        picked.sort_unstable();
        picked
            .into_iter()
            .map(|i| self.enqueue(&ReviewRequest::new(&ids[i], stage, "inspection sample")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AtomicKnowledge, Criteria, Extra};

    fn fact(id: &str, text: &str) -> AtomicKnowledge {
        AtomicKnowledge {
            id: id.into(),
            text: text.into(),
            generator: "g".into(),
            criteria: Criteria::all(),
            extra: Extra::new(),
        }
    }

    #[test]
    fn lifecycle_and_persistence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(REVIEW_FILE);
        let mut q = ReviewQueue::open(&path).unwrap();
        let a = q.enqueue(&ReviewRequest::new("k1", ReviewStage::Atomic, "odd")).unwrap();
        let again = q.enqueue(&ReviewRequest::new("k1", ReviewStage::Atomic, "odd")).unwrap();
        assert_eq!(a, again);
        let b = q.enqueue(&ReviewRequest::new("k2", ReviewStage::Atomic, "odd")).unwrap();
        assert_eq!(q.resolve(&a, ReviewStatus::Accepted, None).unwrap().status, ReviewStatus::Accepted);
        assert!(q.resolve(&a, ReviewStatus::Rejected, None).is_err());
        assert!(q.resolve(&b, ReviewStatus::Corrected, None).is_err());
        q.resolve(&b, ReviewStatus::Rejected, None).unwrap();

        let reopened = ReviewQueue::open(&path).unwrap();
        assert_eq!(reopened.items(), q.items());
        assert_eq!(reopened.list(Some(ReviewStatus::Pending)).len(), 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);
    }

    #[test]
    fn rejection_and_correction_applied() {
        let dir = tempfile::tempdir().unwrap();
        let mut q = ReviewQueue::open(&dir.path().join(REVIEW_FILE)).unwrap();
        let r = q.enqueue(&ReviewRequest::new("k1", ReviewStage::Atomic, "x")).unwrap();
        let c = q.enqueue(&ReviewRequest::new("k2", ReviewStage::Atomic, "x")).unwrap();
        q.resolve(&r, ReviewStatus::Rejected, None).unwrap();
        let fixed = fact("k2", "Helen met Bo and Al.");
        q.resolve(&c, ReviewStatus::Corrected, Some(serde_json::to_value(&fixed).unwrap())).unwrap();
        let recs = vec![fact("k1", "A b."), fact("k2", "C d."), fact("k3", "E f.")];
        let out = q.apply_to(ReviewStage::Atomic, recs, |r| &r.id).unwrap();
        let ids: Vec<&str> = out.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["k2", "k3"]);
        assert_eq!(out[0].text, "Helen met Bo and Al.");
    }

    #[test]
    fn inspection_sample_is_seeded() {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = (0..20).map(|i| format!("k{i}")).collect();
        let mut q1 = ReviewQueue::open(&dir.path().join("a.jsonl")).unwrap();
        let mut q2 = ReviewQueue::open(&dir.path().join("b.jsonl")).unwrap();
        q1.sample_for_inspection(&ids, ReviewStage::Atomic, 5, 9).unwrap();
        q2.sample_for_inspection(&ids, ReviewStage::Atomic, 5, 9).unwrap();
        assert_eq!(q1.items(), q2.items());
        assert_eq!(q1.items().len(), 5);
    }
}
