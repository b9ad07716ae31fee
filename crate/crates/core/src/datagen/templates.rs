//! Prompt templates with `{placeholder}` substitution.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    AtomicGeneration,
    DescriptionExpansion,
    ValidateAtomic,
    ValidateDescription,
    Annotate,
    Question,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::AtomicGeneration,
        TemplateId::DescriptionExpansion,
        TemplateId::ValidateAtomic,
        TemplateId::ValidateDescription,
        TemplateId::Annotate,
        TemplateId::Question,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::AtomicGeneration => "atomic_generation",
            TemplateId::DescriptionExpansion => "description_expansion",
            TemplateId::ValidateAtomic => "validate_atomic",
            TemplateId::ValidateDescription => "validate_description",
            TemplateId::Annotate => "annotate",
            TemplateId::Question => "question",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateId::AtomicGeneration => include_str!("../../assets/templates/atomic_generation.txt"),
            TemplateId::DescriptionExpansion => include_str!("../../assets/templates/description_expansion.txt"),
            TemplateId::ValidateAtomic => include_str!("../../assets/templates/validate_atomic.txt"),
            TemplateId::ValidateDescription => include_str!("../../assets/templates/validate_description.txt"),
            TemplateId::Annotate => include_str!("../../assets/templates/annotate.txt"),
            TemplateId::Question => include_str!("../../assets/templates/question.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    texts: BTreeMap<TemplateId, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Templates::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Templates {
            texts: TemplateId::ALL.iter().map(|t| (*t, t.builtin().to_string())).collect(),
        }
    }

    /// Built-in set with any `<name>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut out = Templates::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", id.name()));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
                out.texts.insert(id, text);
            }
        }
        Ok(out)
    }

    pub fn text(&self, id: TemplateId) -> &str {
        &self.texts[&id]
    }

    /// Fingerprint over all template texts.
    pub fn version(&self) -> String {
        let joined: String = self.texts.iter().map(|(k, v)| format!("{k}\0{v}\0")).collect();
        sha256_hex(joined.as_bytes())[..12].to_string()
    }

    /// Substitutes every `{name}`; a placeholder without a value is an error.
    pub fn render(&self, id: TemplateId, vars: &[(&str, &str)]) -> Result<String> {
        render(self.text(id), vars).map_err(|e| match e {
            Error::Validation(m) => Error::validation(format!("template `{id}`: {m}")),
            other => other,
        })
    }
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after.find(|c: char| !is_name_char(c)).unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::validation(format!("unresolved placeholder `{{{name}}}`")))?;
            out.push_str(value);
            rest = &after[name_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitution_and_missing_values() {
        assert_eq!(render("a {x} b {x}{y}", &[("x", "1"), ("y", "2")]).unwrap(), "a 1 b 12");
        assert!(render("a {x}", &[]).is_err());
        assert_eq!(render("json {\"k\": 1} {}", &[]).unwrap(), "json {\"k\": 1} {}");
    }

    #[test]
    fn values_are_not_rescanned() {
        assert_eq!(render("{a}", &[("a", "{b}")]).unwrap(), "{b}");
    }

    #[test]
    fn builtin_templates_render() {
        let t = Templates::builtin();
        let p = t.render(TemplateId::AtomicGeneration, &[("count", "5")]).unwrap();
        assert!(p.contains("Write 5 new facts"));
        assert!(t.render(TemplateId::Annotate, &[]).is_err());
        for id in TemplateId::ALL {
            assert!(!t.text(id).is_empty());
        }
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("annotate.txt"), "Tag: {knowledge}").unwrap();
        let t = Templates::with_overrides(dir.path()).unwrap();
        assert_eq!(t.render(TemplateId::Annotate, &[("knowledge", "x")]).unwrap(), "Tag: x");
        assert_ne!(t.version(), Templates::builtin().version());
    }
}
