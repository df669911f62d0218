//! Operator instruction templates and response parsing.
//!
//! Each template is a UTF-8 body with `{{PLACEHOLDER}}` tokens plus a
//! worked one-shot example that is prepended to guide execution. The model
//! is asked to wrap its final prompt in `<prompt>…</prompt>`; parsing takes
//! the last complete marker span and falls back to the last non-empty line.
//! Marker tokens inside substituted values are escaped so a parent prompt
//! can never forge the delimiter.

use std::fs;
use std::path::Path;

use crate::config::{DeVariant, MutateScope, Prompt3Source};
use crate::error::{EvoError, OperatorError};
use crate::prompt::Prompt;

pub const OPEN_MARKER: &str = "<prompt>";
pub const CLOSE_MARKER: &str = "</prompt>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateKind {
    Ga,
    De,
    DeNoPrompt3,
    DeMutateAll,
    Resample,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::Ga,
        TemplateKind::De,
        TemplateKind::DeNoPrompt3,
        TemplateKind::DeMutateAll,
        TemplateKind::Resample,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            TemplateKind::Ga => "ga",
            TemplateKind::De => "de",
            TemplateKind::DeNoPrompt3 => "de_no_prompt3",
            TemplateKind::DeMutateAll => "de_mutate_all",
            TemplateKind::Resample => "resample",
        }
    }

    fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateKind::Ga => &["{{PROMPT1}}", "{{PROMPT2}}"],
            TemplateKind::De => &["{{PROMPT1}}", "{{PROMPT2}}", "{{PROMPT3}}", "{{BASIC_PROMPT}}"],
            TemplateKind::DeNoPrompt3 => &["{{PROMPT1}}", "{{PROMPT2}}", "{{BASIC_PROMPT}}"],
            TemplateKind::DeMutateAll => {
                &["{{PROMPT1}}", "{{PROMPT2}}", "{{PROMPT3}}", "{{BASIC_PROMPT}}"]
            }
            TemplateKind::Resample => &["{{INPUT_PROMPT}}"],
        }
    }
}

const ALL_PLACEHOLDERS: [&str; 5] = [
    "{{PROMPT1}}",
    "{{PROMPT2}}",
    "{{PROMPT3}}",
    "{{BASIC_PROMPT}}",
    "{{INPUT_PROMPT}}",
];

#[derive(Debug, Clone)]
pub struct OperatorTemplate {
    pub kind: TemplateKind,
    pub body: String,
    pub oneshot_example: String,
}

impl OperatorTemplate {
    pub fn new(
        kind: TemplateKind,
        body: String,
        oneshot_example: String,
    ) -> Result<OperatorTemplate, EvoError> {
        let required = kind.required_placeholders();
        for ph in required {
            let count = body.matches(ph).count();
            if count != 1 {
                return Err(OperatorError::Template(format!(
                    "{} template must contain {ph} exactly once, found {count}",
                    kind.file_stem()
                ))
                .into());
            }
        }
        for ph in ALL_PLACEHOLDERS {
            if !required.contains(&ph) && body.contains(ph) {
                return Err(OperatorError::Template(format!(
                    "{} template must not contain {ph}",
                    kind.file_stem()
                ))
                .into());
            }
        }
        Ok(OperatorTemplate {
            kind,
            body,
            oneshot_example,
        })
    }

    fn render(&self, values: &[(&str, &str)]) -> String {
        let mut text = self.body.clone();
        for (ph, value) in values {
            text = text.replace(ph, &escape_markers(value));
        }
        if self.oneshot_example.trim().is_empty() {
            text
        } else {
            format!("{}\n\n{text}", self.oneshot_example.trim_end())
        }
    }
}

fn escape_markers(value: &str) -> String {
    value
        .replace(OPEN_MARKER, "⟨prompt⟩")
        .replace(CLOSE_MARKER, "⟨/prompt⟩")
}

/// The five built-in templates, overridable per file from a directory.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub ga: OperatorTemplate,
    pub de: OperatorTemplate,
    pub de_no_prompt3: OperatorTemplate,
    pub de_mutate_all: OperatorTemplate,
    pub resample: OperatorTemplate,
}

impl TemplateSet {
    pub fn builtin() -> TemplateSet {
        TemplateSet {
            ga: OperatorTemplate::new(
                TemplateKind::Ga,
                include_str!("../templates/ga.txt").to_string(),
                include_str!("../templates/ga_oneshot.txt").to_string(),
            )
            .unwrap(),
            de: OperatorTemplate::new(
                TemplateKind::De,
                include_str!("../templates/de.txt").to_string(),
                include_str!("../templates/de_oneshot.txt").to_string(),
            )
            .unwrap(),
            de_no_prompt3: OperatorTemplate::new(
                TemplateKind::DeNoPrompt3,
                include_str!("../templates/de_no_prompt3.txt").to_string(),
                include_str!("../templates/de_no_prompt3_oneshot.txt").to_string(),
            )
            .unwrap(),
            de_mutate_all: OperatorTemplate::new(
                TemplateKind::DeMutateAll,
                include_str!("../templates/de_mutate_all.txt").to_string(),
                include_str!("../templates/de_mutate_all_oneshot.txt").to_string(),
            )
            .unwrap(),
            resample: OperatorTemplate::new(
                TemplateKind::Resample,
                include_str!("../templates/resample.txt").to_string(),
                String::new(),
            )
            .unwrap(),
        }
    }

    /// Builtins with per-kind overrides from `<dir>/<kind>.txt` and
    /// `<dir>/<kind>_oneshot.txt` where those files exist.
    pub fn from_dir(dir: &Path) -> Result<TemplateSet, EvoError> {
        let mut set = TemplateSet::builtin();
        for kind in TemplateKind::ALL {
            let body_path = dir.join(format!("{}.txt", kind.file_stem()));
            let oneshot_path = dir.join(format!("{}_oneshot.txt", kind.file_stem()));
            let slot = set.slot_mut(kind);
            let body = if body_path.exists() {
                fs::read_to_string(&body_path).map_err(|e| {
                    EvoError::Io(format!("cannot read {}: {e}", body_path.display()))
                })?
            } else {
                slot.body.clone()
            };
            let oneshot = if oneshot_path.exists() {
                fs::read_to_string(&oneshot_path).map_err(|e| {
                    EvoError::Io(format!("cannot read {}: {e}", oneshot_path.display()))
                })?
            } else {
                slot.oneshot_example.clone()
            };
            *slot = OperatorTemplate::new(kind, body, oneshot)?;
        }
        Ok(set)
    }

    fn slot_mut(&mut self, kind: TemplateKind) -> &mut OperatorTemplate {
        match kind {
            TemplateKind::Ga => &mut self.ga,
            TemplateKind::De => &mut self.de,
            TemplateKind::DeNoPrompt3 => &mut self.de_no_prompt3,
            TemplateKind::DeMutateAll => &mut self.de_mutate_all,
            TemplateKind::Resample => &mut self.resample,
        }
    }

    pub fn for_de_variant(&self, variant: DeVariant) -> Result<&OperatorTemplate, EvoError> {
        match (variant.mutate_scope, variant.prompt3_source) {
            (MutateScope::Diff, Prompt3Source::Best | Prompt3Source::Random) => Ok(&self.de),
            (MutateScope::Diff, Prompt3Source::Eliminate) => Ok(&self.de_no_prompt3),
            (MutateScope::All, Prompt3Source::Best | Prompt3Source::Random) => {
                Ok(&self.de_mutate_all)
            }
            (MutateScope::All, Prompt3Source::Eliminate) => Err(OperatorError::Template(
                "mutate_scope=all with prompt3_source=eliminate has no template".into(),
            )
            .into()),
        }
    }
}

/// GA instruction: cross over two parents, then mutate the result.
pub fn render_ga_instruction(
    set: &TemplateSet,
    parent1: &Prompt,
    parent2: &Prompt,
) -> Result<String, EvoError> {
    Ok(set.ga.render(&[
        ("{{PROMPT1}}", parent1.text.as_str()),
        ("{{PROMPT2}}", parent2.text.as_str()),
    ]))
}

/// DE instruction for the given variant; `prompt3` must be present exactly
/// when the variant uses one.
pub fn render_de_instruction(
    set: &TemplateSet,
    basic: &Prompt,
    donor1: &Prompt,
    donor2: &Prompt,
    prompt3: Option<&Prompt>,
    variant: DeVariant,
) -> Result<String, EvoError> {
    let needs_prompt3 = variant.prompt3_source != Prompt3Source::Eliminate;
    if needs_prompt3 != prompt3.is_some() {
        return Err(OperatorError::Template(format!(
            "variant {:?} expects prompt3 {} but it was {}",
            variant,
            if needs_prompt3 { "present" } else { "absent" },
            if prompt3.is_some() { "present" } else { "absent" },
        ))
        .into());
    }
    let template = set.for_de_variant(variant)?;
    let mut values = vec![
        ("{{PROMPT1}}", donor1.text.as_str()),
        ("{{PROMPT2}}", donor2.text.as_str()),
        ("{{BASIC_PROMPT}}", basic.text.as_str()),
    ];
    if let Some(p3) = prompt3 {
        values.push(("{{PROMPT3}}", p3.text.as_str()));
    }
    Ok(template.render(&values))
}

/// Resampling instruction: ask for a semantics-preserving variation.
pub fn render_resample_instruction(set: &TemplateSet, seed: &Prompt) -> Result<String, EvoError> {
    Ok(set
        .resample
        .render(&[("{{INPUT_PROMPT}}", seed.text.trim())]))
}

/// A parsed operator completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorResponse {
    pub raw: String,
    pub extracted: String,
    pub step_trace: Option<String>,
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Extract the new prompt from a completion: last complete
/// `<prompt>…</prompt>` span, else the last non-empty line.
pub fn parse_new_prompt(raw: &str) -> Result<OperatorResponse, EvoError> {
    if raw.trim().is_empty() {
        return Err(OperatorError::EmptyExtraction.into());
    }
    let marker_span = raw.rfind(CLOSE_MARKER).and_then(|end| {
        raw[..end]
            .rfind(OPEN_MARKER)
            .map(|start| (start, start + OPEN_MARKER.len(), end))
    });
    let (extracted, trace) = match marker_span {
        Some((trace_end, start, end)) => (normalize(&raw[start..end]), raw[..trace_end].trim()),
        None => {
            let line = raw
                .lines()
                .rev()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("");
            let offset = line.as_ptr() as usize - raw.as_ptr() as usize;
            (normalize(line), raw[..offset].trim())
        }
    };
    if extracted.is_empty() {
        return Err(OperatorError::EmptyExtraction.into());
    }
    Ok(OperatorResponse {
        raw: raw.to_string(),
        extracted,
        step_trace: if trace.is_empty() {
            None
        } else {
            Some(trace.to_string())
        },
    })
}
