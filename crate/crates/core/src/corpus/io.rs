use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::types::*;
use crate::error::{Error, Result};

/// Reads a line-delimited record file, validating every record.
pub fn read_records<T: Record>(path: &Path) -> Result<Vec<T>> {
    read_jsonl_with(path, |record: &T| record.validate())
}

/// Reads JSON lines without record-level validation (used for auxiliary files).
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl_with(path, |_: &T| Ok(()))
}

fn read_jsonl_with<T: DeserializeOwned>(
    path: &Path,
    check: impl Fn(&T) -> Result<()>,
) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        check(&record).map_err(|e| match e {
            Error::Invariant { field, message } => Error::RecordInvariant {
                path: path.to_path_buf(),
                line: line_no,
                field,
                message,
            },
            other => other,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Writes records one per line. The file is replaced atomically.
pub fn write_records<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    write_atomic(path, &buf)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::MalformedLine {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("create {}", parent.display()), e))?;
        }
    }
    let tmp = tmp_path(path);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(format!("create {}", tmp.display()), e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(format!("write {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("rename to {}", path.display()), e))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// All corpus files of one dataset directory.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub atomic: Vec<AtomicKnowledge>,
    pub descriptions: Vec<KnowledgeDescription>,
    pub annotations: Vec<ScenarioAnnotation>,
    pub questions: Vec<ScenarioQuestion>,
    pub manifest: Option<DatasetManifest>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Corpus {
    /// Loads whichever corpus files exist in `dir` and runs cross-record validation.
    pub fn load(dir: &Path) -> Result<Self> {
        fn opt<T: Record>(dir: &Path) -> Result<Vec<T>> {
            let p = dir.join(T::KIND.file_name());
            if p.exists() {
                read_records(&p)
            } else {
                Ok(Vec::new())
            }
        }
        let manifest_path = dir.join(MANIFEST_FILE);
        let corpus = Corpus {
            atomic: opt(dir)?,
            descriptions: opt(dir)?,
            annotations: opt(dir)?,
            questions: opt(dir)?,
            manifest: if manifest_path.exists() {
                Some(read_json(&manifest_path)?)
            } else {
                None
            },
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let atomic: HashMap<&str, &AtomicKnowledge> =
            self.atomic.iter().map(|a| (a.id.as_str(), a)).collect();
        if atomic.len() != self.atomic.len() {
            return Err(Error::invariant("atomic.id", "duplicate ids"));
        }

        let mut indexes: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
        for d in &self.descriptions {
            if !atomic.contains_key(d.knowledge_id.as_str()) {
                return Err(Error::invariant(
                    "knowledge_id",
                    format!("description {} references unknown knowledge {}", d.id, d.knowledge_id),
                ));
            }
            indexes.entry(&d.knowledge_id).or_default().push(d.index);
        }
        for (parent, mut idx) in indexes {
            idx.sort_unstable();
            if idx.iter().enumerate().any(|(i, &v)| v as usize != i + 1) {
                return Err(Error::invariant(
                    "index",
                    format!("descriptions of {parent} are not unique and contiguous from 1"),
                ));
            }
        }

        for a in &self.annotations {
            let Some(host) = atomic.get(a.knowledge_id.as_str()) else {
                return Err(Error::invariant(
                    "knowledge_id",
                    format!("annotation references unknown knowledge {}", a.knowledge_id),
                ));
            };
            a.validate_against(&host.text)?;
            if host.criteria.role_rich && a.m() < 3 {
                return Err(Error::invariant(
                    "criteria.role_rich",
                    format!("{} is flagged role-rich but has {} annotated pairs", host.id, a.m()),
                ));
            }
        }

        for q in &self.questions {
            if !atomic.contains_key(q.knowledge_id.as_str()) {
                return Err(Error::invariant(
                    "knowledge_id",
                    format!("question {} references unknown knowledge {}", q.id, q.knowledge_id),
                ));
            }
        }

        if let Some(m) = &self.manifest {
            let actual = self.counts();
            if m.counts != actual {
                return Err(Error::invariant(
                    "manifest.counts",
                    format!("manifest says {:?}, files contain {:?}", m.counts, actual),
                ));
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> Counts {
        Counts {
            atomic: self.atomic.len(),
            descriptions: self.descriptions.len(),
            questions: self.questions.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::resolve_span;

    const MORRISON: &str =
        "Captain James Morrison rescued endangered wildlife during a cruise in the Pacific Ocean.";

    fn atomic(id: &str, text: &str) -> AtomicKnowledge {
        AtomicKnowledge {
            id: id.into(),
            text: text.into(),
            generator: "stub".into(),
            criteria: Criteria::all(),
            extra: Extra::new(),
        }
    }

    #[test]
    fn reads_two_valid_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("atomic.jsonl");
        write_records(&[atomic("a", MORRISON), atomic("b", "Helen met Blake in Rome.")], &p).unwrap();
        let got: Vec<AtomicKnowledge> = read_records(&p).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].text, MORRISON);
    }

    #[test]
    fn table_row_parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("atomic.jsonl");
        let line = format!(
            r#"{{"id":"k1","text":"{MORRISON}","generator":"deepseek-v3","criteria":{{"fictional":true,"role_rich":true,"concise":true}}}}"#
        );
        fs::write(&p, line + "\n").unwrap();
        let got: Vec<AtomicKnowledge> = read_records(&p).unwrap();
        assert_eq!(got[0].generator, "deepseek-v3");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("atomic.jsonl");
        let good = serde_json::to_string(&atomic("a", MORRISON)).unwrap();
        fs::write(&p, format!("{good}\n{{not json\n")).unwrap();
        match read_records::<AtomicKnowledge>(&p) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed line, got {other:?}"),
        }
    }

    #[test]
    fn span_past_host_end_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let host = "Helen met Blake in Rome.";
        write_records(&[atomic("k", host)], &dir.path().join("atomic.jsonl")).unwrap();
        let line = r#"{"knowledge_id":"k","pairs":[{"element_text":"Rome.xxxx","element_span":{"char_start":19,"char_end":28},"argument_text":"Helen","argument_span":{"char_start":0,"char_end":5}}],"source":"model"}"#;
        fs::write(dir.path().join("annotations.jsonl"), format!("{line}\n")).unwrap();
        let err = Corpus::load(dir.path()).unwrap_err();
        match err {
            Error::Invariant { field, .. } => assert_eq!(field, "Span"),
            other => panic!("expected Span invariant, got {other:?}"),
        }
    }

    #[test]
    fn inverted_span_fails_at_read_time() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("annotations.jsonl");
        let line = r#"{"knowledge_id":"k","pairs":[{"element_text":"","element_span":{"char_start":3,"char_end":3},"argument_text":"H","argument_span":{"char_start":0,"char_end":1}}],"source":"model"}"#;
        fs::write(&p, format!("{line}\n")).unwrap();
        match read_records::<ScenarioAnnotation>(&p) {
            Err(Error::RecordInvariant { line, field, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(field, "Span");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_list_gives_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.jsonl");
        write_records::<ScenarioQuestion>(&[], &p).unwrap();
        assert_eq!(fs::read(&p).unwrap().len(), 0);
    }

    #[test]
    fn five_hundred_records_five_hundred_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("atomic.jsonl");
        let records: Vec<_> = (0..500)
            .map(|i| atomic(&format!("k{i}"), &format!("Agent {i} met Helen in Rome.")))
            .collect();
        write_records(&records, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 500);
    }

    #[test]
    fn unknown_fields_and_non_ascii_survive() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("atomic.jsonl");
        let line = r#"{"id":"k1","text":"Zoë Ångström rescued Émile near Zürich.","generator":"g","criteria":{"fictional":true,"role_rich":false,"concise":true},"batch":7,"note":{"by":"qa"}}"#;
        fs::write(&p, format!("{line}\n")).unwrap();
        let recs: Vec<AtomicKnowledge> = read_records(&p).unwrap();
        assert_eq!(recs[0].extra["batch"], 7);
        let out = dir.path().join("out.jsonl");
        write_records(&recs, &out).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), format!("{line}\n"));
    }

    #[test]
    fn corpus_checks_descriptions_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_records(&[atomic("k", MORRISON)], &dir.path().join("atomic.jsonl")).unwrap();
        let desc = |i: u32| KnowledgeDescription {
            id: format!("d{i}"),
            knowledge_id: "k".into(),
            text: MORRISON.into(),
            index: i,
            first_verb_index: None,
            extra: Extra::new(),
        };
        write_records(&[desc(1), desc(3)], &dir.path().join("descriptions.jsonl")).unwrap();
        assert!(Corpus::load(dir.path()).is_err());

        write_records(&[desc(1), desc(2)], &dir.path().join("descriptions.jsonl")).unwrap();
        let manifest = DatasetManifest {
            counts: Counts {
                atomic: 1,
                descriptions: 2,
                questions: 0,
            },
            ..Default::default()
        };
        write_json(&manifest, &dir.path().join(MANIFEST_FILE)).unwrap();
        Corpus::load(dir.path()).unwrap();

        let wrong = DatasetManifest {
            counts: Counts {
                atomic: 2,
                ..manifest.counts
            },
            ..manifest
        };
        write_json(&wrong, &dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(Corpus::load(dir.path()).is_err());
    }

    #[test]
    fn role_rich_needs_three_pairs() {
        let a = atomic("k", MORRISON);
        let pair = |surface: &str, arg: &str| ElementArgumentPair {
            element_text: surface.into(),
            element_span: resolve_span(MORRISON, surface, 1).unwrap(),
            argument_text: arg.into(),
            argument_span: resolve_span(MORRISON, arg, 1).unwrap(),
        };
        let ann = ScenarioAnnotation {
            knowledge_id: "k".into(),
            pairs: vec![pair("Captain", "James Morrison")],
            source: AnnotationSource::Model,
            extra: Extra::new(),
        };
        let corpus = Corpus {
            atomic: vec![a.clone()],
            annotations: vec![ann.clone()],
            ..Default::default()
        };
        assert!(corpus.validate().is_err());

        let mut relaxed = a;
        relaxed.criteria.role_rich = false;
        let corpus = Corpus {
            atomic: vec![relaxed],
            annotations: vec![ann],
            ..Default::default()
        };
        corpus.validate().unwrap();
    }
}
