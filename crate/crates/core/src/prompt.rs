//! Natural-language prompt rendering for the inference tasks.
//!
//! A prompt has five sections, concatenated with blank lines in between:
//! domain introduction, variable descriptions, causal mechanism,
//! observation, and the inference question. Vocabularies are data files,
//! not code: the sentences, variable names, and adjectives all come from a
//! [`DomainVocabulary`], so domains can be added or swapped without touching
//! the renderer.
//!
//! Counterbalancing flips which adjective denotes a cause's causally active
//! state. The four codes enumerate the 2x2 polarity assignments of the two
//! causes; the effect's polarity is fixed.

use crate::error::Error;
use crate::model::Variable;
use crate::stats::Domain;
use crate::tasks::{TaskId, TaskSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Vocabulary entry for one collider variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableVocab {
    /// Noun phrase used inside rendered sentences, e.g. "urbanization".
    pub name: String,
    /// Verbatim description block for the variables section: the definition
    /// sentence followed by the sentences introducing the two levels.
    pub description: String,
    /// Adjective denoting the causally active state (value 1) under the
    /// canonical polarity.
    pub present_adjective: String,
    /// Adjective denoting the inactive state (value 0).
    pub absent_adjective: String,
}

/// Everything needed to phrase the collider in one cover-story domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainVocabulary {
    pub domain: Domain,
    pub introduction: String,
    pub variables_preamble: String,
    pub mechanism_preamble: String,
    /// Sentence template with `{cause}` and `{effect}` slots; per-domain so
    /// verb agreement can follow the variable names.
    pub mechanism_template: String,
    /// Connective prefixed to the second mechanism sentence, e.g. "Also, ".
    pub mechanism_connective: String,
    pub observation_preamble: String,
    /// Question template with a `{query}` slot; must end with the fixed
    /// instruction sentence.
    pub question_template: String,
    pub cause1: VariableVocab,
    pub cause2: VariableVocab,
    pub effect: VariableVocab,
}

impl DomainVocabulary {
    pub fn from_json_str(text: &str) -> Result<Self, Error> {
        let vocab: DomainVocabulary = serde_json::from_str(text).map_err(|e| Error::Malformed {
            what: "vocabulary",
            detail: e.to_string(),
        })?;
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Malformed {
            what: "vocabulary",
            detail: format!("{}: {e}", path.display()),
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (slot, template, section) in [
            ("{cause}", &self.mechanism_template, "causal mechanism"),
            ("{effect}", &self.mechanism_template, "causal mechanism"),
            ("{query}", &self.question_template, "question"),
        ] {
            if !template.contains(slot) {
                return Err(Error::TemplateSlotUnresolved {
                    slot: slot.to_string(),
                    section,
                });
            }
        }
        for (field, value) in [
            ("introduction", &self.introduction),
            ("variables_preamble", &self.variables_preamble),
            ("mechanism_preamble", &self.mechanism_preamble),
            ("observation_preamble", &self.observation_preamble),
        ] {
            if value.trim().is_empty() {
                return Err(Error::Malformed {
                    what: "vocabulary",
                    detail: format!("{field} is empty"),
                });
            }
        }
        for var in [&self.cause1, &self.cause2, &self.effect] {
            if var.name.trim().is_empty()
                || var.description.trim().is_empty()
                || var.present_adjective.trim().is_empty()
                || var.absent_adjective.trim().is_empty()
            {
                return Err(Error::Malformed {
                    what: "vocabulary",
                    detail: "variable entries must be non-empty".into(),
                });
            }
        }
        Ok(())
    }

    fn entry(&self, var: Variable) -> &VariableVocab {
        match var {
            Variable::C1 => &self.cause1,
            Variable::C2 => &self.cause2,
            Variable::E => &self.effect,
        }
    }
}

/// One of the four adjective-polarity assignments for the two causes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterbalanceCode {
    pub code: u8,
    pub flip_c1: bool,
    pub flip_c2: bool,
}

impl CounterbalanceCode {
    pub const ALL: [CounterbalanceCode; 4] = [
        CounterbalanceCode { code: 1, flip_c1: false, flip_c2: false },
        CounterbalanceCode { code: 2, flip_c1: true, flip_c2: false },
        CounterbalanceCode { code: 3, flip_c1: false, flip_c2: true },
        CounterbalanceCode { code: 4, flip_c1: true, flip_c2: true },
    ];

    /// The canonical polarity: every variable keeps its vocabulary
    /// adjectives.
    pub fn canonical() -> Self {
        Self::ALL[0]
    }

    pub fn from_code(code: u8) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|c| c.code == code)
            .ok_or_else(|| Error::Malformed {
                what: "counterbalance code",
                detail: format!("{code} is not in 1-4"),
            })
    }

    fn flips(&self, var: Variable) -> bool {
        match var {
            Variable::C1 => self.flip_c1,
            Variable::C2 => self.flip_c2,
            Variable::E => false,
        }
    }
}

/// The rendered prompt sections, in document order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSections {
    pub introduction: String,
    pub variables: String,
    pub causal_mechanism: String,
    pub observation: String,
    pub question: String,
}

/// One fully rendered prompt with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub domain: Domain,
    pub counterbalance: u8,
    pub task_id: TaskId,
    pub sections: PromptSections,
    pub full_text: String,
}

fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Substitute slots and reject any `{...}` left unresolved.
fn fill(
    template: &str,
    substitutions: &[(&str, &str)],
    section: &'static str,
) -> Result<String, Error> {
    let mut text = template.to_string();
    for (slot, value) in substitutions {
        text = text.replace(slot, value);
    }
    if let Some(open) = text.find('{') {
        let tail = &text[open..];
        let end = tail.find('}').map(|i| open + i + 1).unwrap_or(text.len());
        return Err(Error::TemplateSlotUnresolved {
            slot: text[open..end].to_string(),
            section,
        });
    }
    Ok(text)
}

/// The phrase naming a variable's observed state, e.g. "normal urbanization".
fn phrase(vocab: &DomainVocabulary, cb: &CounterbalanceCode, var: Variable, value: bool) -> String {
    let entry = vocab.entry(var);
    let active = value != cb.flips(var);
    let adjective = if active {
        &entry.present_adjective
    } else {
        &entry.absent_adjective
    };
    format!("{adjective} {}", entry.name)
}

/// Render the prompt for one task under one counterbalance condition.
///
/// Evidence variables are listed in the fixed (C1, C2, E) order, joined with
/// " and "; unobserved variables are omitted. The question always asks for
/// the likelihood of the query variable's causally active state.
pub fn render_prompt(
    vocab: &DomainVocabulary,
    cb: &CounterbalanceCode,
    task: &TaskSpec,
) -> Result<PromptBundle, Error> {
    vocab.validate()?;

    let variables = format!(
        "{} {} {} {}",
        vocab.variables_preamble,
        vocab.cause1.description,
        vocab.cause2.description,
        vocab.effect.description
    );

    let effect_phrase = phrase(vocab, cb, Variable::E, true);
    let mut mechanism = vocab.mechanism_preamble.clone();
    for (i, cause) in [Variable::C1, Variable::C2].into_iter().enumerate() {
        let sentence = fill(
            &vocab.mechanism_template,
            &[
                ("{cause}", phrase(vocab, cb, cause, true).as_str()),
                ("{effect}", effect_phrase.as_str()),
            ],
            "causal mechanism",
        )?;
        if i == 0 {
            mechanism.push(' ');
            mechanism.push_str(&capitalize_first(&sentence));
        } else {
            mechanism.push(' ');
            mechanism.push_str(&vocab.mechanism_connective);
            mechanism.push_str(&sentence);
        }
    }

    let observed = task.query.evidence.observed();
    if observed.is_empty() {
        return Err(Error::Malformed {
            what: "task",
            detail: format!("task {} has no evidence to observe", task.id),
        });
    }
    let phrases: Vec<String> = observed
        .iter()
        .map(|(var, value)| phrase(vocab, cb, *var, *value))
        .collect();
    let observation = format!("{} {}.", vocab.observation_preamble, phrases.join(" and "));

    let query_phrase = phrase(vocab, cb, task.query.query_var, task.query.query_value);
    let question = fill(
        &vocab.question_template,
        &[("{query}", query_phrase.as_str())],
        "question",
    )?;

    let sections = PromptSections {
        introduction: vocab.introduction.clone(),
        variables,
        causal_mechanism: mechanism,
        observation,
        question,
    };
    let full_text = [
        sections.introduction.as_str(),
        sections.variables.as_str(),
        sections.causal_mechanism.as_str(),
        sections.observation.as_str(),
        sections.question.as_str(),
    ]
    .join("\n\n");

    Ok(PromptBundle {
        domain: vocab.domain,
        counterbalance: cb.code,
        task_id: task.id,
        sections,
        full_text,
    })
}

/// The full Cartesian product: every domain, all four counterbalance codes,
/// every task, in that nesting order.
pub fn prompt_matrix(
    vocabs: &[DomainVocabulary],
    tasks: &[TaskSpec],
) -> Result<Vec<PromptBundle>, Error> {
    if vocabs.is_empty() || tasks.is_empty() {
        return Err(Error::EmptyInput("prompt matrix needs vocabularies and tasks"));
    }
    let mut bundles = Vec::with_capacity(vocabs.len() * CounterbalanceCode::ALL.len() * tasks.len());
    for vocab in vocabs {
        for cb in &CounterbalanceCode::ALL {
            for task in tasks {
                bundles.push(render_prompt(vocab, cb, task)?);
            }
        }
    }
    Ok(bundles)
}
