//! On-disk hidden-state archive: `manifest.json` plus one little-endian f32
//! blob per (sample, layer), named `<sample_id>.L<layer>.f32`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{char_len, read_json, write_atomic, write_json, Extra, Span};
use crate::error::{Error, Result};

pub const ARCHIVE_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub text: String,
    /// 1-based transformer block indices, strictly increasing.
    pub layer_ids: Vec<u32>,
    pub n_tokens: usize,
    pub dim: usize,
    pub token_char_spans: Vec<Span>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl SampleEntry {
    pub fn validate(&self, sample_id: &str) -> Result<()> {
        let field = |f: &str| format!("{sample_id}.{f}");
        if self.dim == 0 {
            return Err(Error::invariant(field("dim"), "must be > 0"));
        }
        if self.token_char_spans.len() != self.n_tokens {
            return Err(Error::invariant(
                field("token_char_spans"),
                format!("{} spans for {} tokens", self.token_char_spans.len(), self.n_tokens),
            ));
        }
        if self.layer_ids.first() == Some(&0) || self.layer_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invariant(
                field("layer_ids"),
                "must be 1-based and strictly increasing",
            ));
        }
        let len = char_len(&self.text);
        let mut prev_end = 0;
        for s in &self.token_char_spans {
            if s.char_start >= s.char_end || s.char_end > len || s.char_start < prev_end {
                return Err(Error::invariant(
                    field("token_char_spans"),
                    format!("span {}..{} is empty, out of order, or outside the text", s.char_start, s.char_end),
                ));
            }
            prev_end = s.char_end;
        }
        Ok(())
    }

    pub fn blob_len(&self) -> usize {
        self.n_tokens * self.dim * 4
    }
}

pub type ArchiveManifest = BTreeMap<String, SampleEntry>;

pub fn blob_name(sample_id: &str, layer: u32) -> String {
    format!("{sample_id}.L{layer}.f32")
}

fn check_sample_id(id: &str) -> Result<()> {
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\']) {
        return Err(Error::invariant("sample_id", format!("`{id}` is not a safe file stem")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct HiddenArchive {
    root: PathBuf,
    manifest: ArchiveManifest,
}

impl HiddenArchive {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest: ArchiveManifest = read_json(&root.join(ARCHIVE_MANIFEST))?;
        for (id, entry) in &manifest {
            check_sample_id(id)?;
            entry.validate(id)?;
        }
        Ok(HiddenArchive {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &ArchiveManifest {
        &self.manifest
    }

    pub fn entry(&self, sample_id: &str) -> Result<&SampleEntry> {
        self.manifest
            .get(sample_id)
            .ok_or_else(|| Error::NotFound(format!("sample `{sample_id}` not in archive")))
    }

    /// Common hidden size; errors if samples disagree.
    pub fn dim(&self) -> Result<usize> {
        let mut dims = self.manifest.values().map(|e| e.dim);
        let first = dims.next().ok_or_else(|| Error::validation("archive is empty"))?;
        if dims.any(|d| d != first) {
            return Err(Error::invariant("dim", "samples disagree on hidden size"));
        }
        Ok(first)
    }

    /// `n_tokens x dim` matrix for one layer.
    pub fn read_layer(&self, sample_id: &str, layer: u32) -> Result<Array2<f32>> {
        let entry = self.entry(sample_id)?;
        if !entry.layer_ids.contains(&layer) {
            return Err(Error::NotFound(format!("layer {layer} missing for sample `{sample_id}`")));
        }
        let path = self.root.join(blob_name(sample_id, layer));
        let bytes = fs::read(&path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if bytes.len() != entry.blob_len() {
            return Err(Error::invariant(
                "blob",
                format!("{} has {} bytes, expected {}", path.display(), bytes.len(), entry.blob_len()),
            ));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Array2::from_shape_vec((entry.n_tokens, entry.dim), values)
            .map_err(|e| Error::invariant("blob", e.to_string()))
    }
}

/// Builds an archive directory sample by sample.
#[derive(Debug)]
pub struct ArchiveWriter {
    root: PathBuf,
    manifest: ArchiveManifest,
}

impl ArchiveWriter {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(format!("create {}", root.display()), e))?;
        Ok(ArchiveWriter {
            root: root.to_path_buf(),
            manifest: ArchiveManifest::new(),
        })
    }

    /// `layers` must be sorted by layer id; each matrix is `n_tokens x dim`.
    pub fn add_sample(
        &mut self,
        sample_id: &str,
        text: &str,
        token_char_spans: Vec<Span>,
        layers: &[(u32, Array2<f32>)],
    ) -> Result<()> {
        check_sample_id(sample_id)?;
        let (n_tokens, dim) = layers
            .first()
            .map(|(_, m)| m.dim())
            .ok_or_else(|| Error::validation("at least one layer required"))?;
        let entry = SampleEntry {
            text: text.to_string(),
            layer_ids: layers.iter().map(|(l, _)| *l).collect(),
            n_tokens,
            dim,
            token_char_spans,
            extra: Extra::new(),
        };
        entry.validate(sample_id)?;
        for (layer, m) in layers {
            if m.dim() != (n_tokens, dim) {
                return Err(Error::invariant("blob", format!("layer {layer} has shape {:?}", m.dim())));
            }
            let mut bytes = Vec::with_capacity(entry.blob_len());
            for v in m.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            write_atomic(&self.root.join(blob_name(sample_id, *layer)), &bytes)?;
        }
        self.manifest.insert(sample_id.to_string(), entry);
        Ok(())
    }

    pub fn finish(self) -> Result<HiddenArchive> {
        write_json(&self.manifest, &self.root.join(ARCHIVE_MANIFEST))?;
        Ok(HiddenArchive {
            root: self.root,
            manifest: self.manifest,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(pairs: &[(usize, usize)]) -> Vec<Span> {
        pairs.iter().map(|&(a, b)| Span::new(a, b).unwrap()).collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArchiveWriter::create(dir.path()).unwrap();
        let m1 = Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f32 * 0.1 - 0.25);
        let m2 = Array2::from_shape_fn((2, 3), |(i, j)| f32::from_bits(0x3f80_0001 + (i * 3 + j) as u32));
        w.add_sample("s1", "Hi Bo", spans(&[(0, 2), (3, 5)]), &[(1, m1.clone()), (4, m2.clone())])
            .unwrap();
        w.finish().unwrap();

        let a = HiddenArchive::open(dir.path()).unwrap();
        assert_eq!(a.entry("s1").unwrap().layer_ids, vec![1, 4]);
        let r1 = a.read_layer("s1", 1).unwrap();
        let r2 = a.read_layer("s1", 4).unwrap();
        assert!(r1.iter().zip(m1.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(r2.iter().zip(m2.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(fs::metadata(dir.path().join("s1.L1.f32")).unwrap().len(), 2 * 3 * 4);
        assert!(matches!(a.read_layer("s1", 2), Err(Error::NotFound(_))));
    }

    #[test]
    fn rejects_bad_manifests() {
        let base = SampleEntry {
            text: "Hi Bo".into(),
            layer_ids: vec![1, 2],
            n_tokens: 2,
            dim: 3,
            token_char_spans: spans(&[(0, 2), (3, 5)]),
            extra: Extra::new(),
        };
        base.validate("s").unwrap();
        let mut e = base.clone();
        e.layer_ids = vec![2, 2];
        assert!(e.validate("s").is_err());
        let mut e = base.clone();
        e.token_char_spans = spans(&[(3, 5), (0, 2)]);
        assert!(e.validate("s").is_err());
        let mut e = base.clone();
        e.token_char_spans = spans(&[(0, 2), (3, 6)]);
        assert!(e.validate("s").is_err());
        let mut e = base;
        e.layer_ids = vec![0, 1];
        assert!(e.validate("s").is_err());
    }

    #[test]
    fn truncated_blob_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArchiveWriter::create(dir.path()).unwrap();
        w.add_sample("s", "Hi", spans(&[(0, 2)]), &[(1, Array2::zeros((1, 4)))]).unwrap();
        w.finish().unwrap();
        fs::write(dir.path().join("s.L1.f32"), [0u8; 12]).unwrap();
        let a = HiddenArchive::open(dir.path()).unwrap();
        assert!(a.read_layer("s", 1).is_err());
    }
}
