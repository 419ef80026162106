//! Questionnaire schema documents.
//!
//! A schema file is UTF-8 JSON holding a version tag, one string table per
//! locale, the ordered questions (whose prompts and option labels are keys
//! into the string tables) and the visibility rules. See
//! `docs/questionnaire-format.md` at the repository root for a worked example.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::AnswerValue;

/// Locales every shipped schema must carry.
pub const REQUIRED_LOCALES: [&str; 2] = ["en", "es"];

const BUILTIN_SCHEMA: &str = include_str!("../../assets/questionnaire/screening-v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    SingleChoice,
    MultiChoice,
    YesNo,
    Number,
    FreeText,
}

impl QuestionKind {
    pub fn is_choice(self) -> bool {
        matches!(self, QuestionKind::SingleChoice | QuestionKind::MultiChoice)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionKind::SingleChoice => "single_choice",
            QuestionKind::MultiChoice => "multi_choice",
            QuestionKind::YesNo => "yes_no",
            QuestionKind::Number => "number",
            QuestionKind::FreeText => "free_text",
        }
    }

    /// Does `value` have the shape this kind expects? Option membership and
    /// ranges are checked separately.
    pub fn accepts(self, value: &AnswerValue) -> bool {
        matches!(
            (self, value),
            (QuestionKind::YesNo, AnswerValue::Bool(_))
                | (QuestionKind::Number, AnswerValue::Number(_))
                | (QuestionKind::FreeText, AnswerValue::Text(_))
                | (QuestionKind::SingleChoice, AnswerValue::Text(_))
                | (QuestionKind::MultiChoice, AnswerValue::List(_))
        )
    }
}

/// One string per locale.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocalizedText(pub BTreeMap<String, String>);

impl LocalizedText {
    pub fn get(&self, locale: &str) -> Option<&str> {
        self.0.get(locale).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChoiceOption {
    pub value: String,
    pub label: LocalizedText,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Question {
    pub id: String,
    pub kind: QuestionKind,
    pub prompt: LocalizedText,
    pub options: Vec<ChoiceOption>,
    pub required: bool,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Equality test against an earlier answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub question: String,
    pub equals: AnswerValue,
}

/// `target` is shown only when every condition holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRule {
    pub target: String,
    pub when: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionnaireSchema {
    pub version: String,
    pub locales: Vec<String>,
    pub questions: Vec<Question>,
    pub visibility_rules: Vec<VisibilityRule>,
    index: HashMap<String, usize>,
    conditions: Vec<Vec<Condition>>,
}

// On-disk shape.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDocument {
    version: String,
    strings: BTreeMap<String, BTreeMap<String, String>>,
    questions: Vec<QuestionDocument>,
    #[serde(default)]
    visibility_rules: Vec<VisibilityRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionDocument {
    id: String,
    kind: QuestionKind,
    prompt: String,
    #[serde(default)]
    options: Vec<OptionDocument>,
    #[serde(default = "default_required")]
    required: bool,
    #[serde(default)]
    min: Option<f64>,
    #[serde(default)]
    max: Option<f64>,
}

fn default_required() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionDocument {
    value: String,
    label: String,
}

fn schema_err(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

impl QuestionnaireSchema {
    /// The screening questionnaire shipped with the service.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_SCHEMA).expect("shipped questionnaire is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| schema_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SchemaDocument =
            serde_json::from_str(text).map_err(|e| schema_err(format!("malformed schema: {e}")))?;
        Self::from_document(doc)
    }

    fn from_document(doc: SchemaDocument) -> Result<Self> {
        for locale in REQUIRED_LOCALES {
            if !doc.strings.contains_key(locale) {
                return Err(schema_err(format!("missing string table for locale `{locale}`")));
            }
        }
        let locales: Vec<String> = doc.strings.keys().cloned().collect();
        let localize = |key: &str| -> Result<LocalizedText> {
            let mut text = BTreeMap::new();
            for (locale, table) in &doc.strings {
                let value = table
                    .get(key)
                    .filter(|s| !s.trim().is_empty())
                    .ok_or_else(|| schema_err(format!("string `{key}` missing for locale `{locale}`")))?;
                text.insert(locale.clone(), value.clone());
            }
            Ok(LocalizedText(text))
        };

        let mut questions = Vec::with_capacity(doc.questions.len());
        let mut index = HashMap::new();
        for (pos, q) in doc.questions.into_iter().enumerate() {
            if q.id.is_empty() {
                return Err(schema_err(format!("question #{pos} has an empty id")));
            }
            if index.insert(q.id.clone(), pos).is_some() {
                return Err(schema_err(format!("duplicate question id `{}`", q.id)));
            }
            if q.kind.is_choice() && q.options.len() < 2 {
                return Err(schema_err(format!(
                    "choice question `{}` needs at least two options",
                    q.id
                )));
            }
            if !q.kind.is_choice() && !q.options.is_empty() {
                return Err(schema_err(format!(
                    "question `{}` of kind {} cannot have options",
                    q.id,
                    q.kind.as_str()
                )));
            }
            if q.kind != QuestionKind::Number && (q.min.is_some() || q.max.is_some()) {
                return Err(schema_err(format!("only number questions take a range (`{}`)", q.id)));
            }
            let mut seen = HashSet::new();
            let mut options = Vec::with_capacity(q.options.len());
            for o in q.options {
                if !seen.insert(o.value.clone()) {
                    return Err(schema_err(format!("duplicate option `{}` in `{}`", o.value, q.id)));
                }
                options.push(ChoiceOption {
                    label: localize(&o.label)?,
                    value: o.value,
                });
            }
            questions.push(Question {
                prompt: localize(&q.prompt)?,
                id: q.id,
                kind: q.kind,
                options,
                required: q.required,
                min: q.min,
                max: q.max,
            });
        }

        let mut conditions = vec![Vec::new(); questions.len()];
        for rule in &doc.visibility_rules {
            let target = *index
                .get(&rule.target)
                .ok_or_else(|| schema_err(format!("rule targets unknown question `{}`", rule.target)))?;
            if rule.when.is_empty() {
                return Err(schema_err(format!("rule for `{}` has no conditions", rule.target)));
            }
            for cond in &rule.when {
                let source = *index.get(&cond.question).ok_or_else(|| {
                    schema_err(format!(
                        "rule for `{}` references unknown question `{}`",
                        rule.target, cond.question
                    ))
                })?;
                if source >= target {
                    return Err(schema_err(format!(
                        "rule for `{}` depends on `{}`, which does not come earlier",
                        rule.target, cond.question
                    )));
                }
                let source_q = &questions[source];
                if !source_q.kind.accepts(&cond.equals) {
                    return Err(schema_err(format!(
                        "rule for `{}` compares `{}` against a value of the wrong type",
                        rule.target, cond.question
                    )));
                }
                conditions[target].push(cond.clone());
            }
        }

        Ok(Self {
            version: doc.version,
            locales,
            questions,
            visibility_rules: doc.visibility_rules,
            index,
            conditions,
        })
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.index.get(id).map(|&i| &self.questions[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Conjunction guarding the question at `position` (empty when unconditioned).
    pub(crate) fn conditions_at(&self, position: usize) -> &[Condition] {
        &self.conditions[position]
    }

    pub fn supports_locale(&self, locale: &str) -> bool {
        self.locales.iter().any(|l| l == locale)
    }
}
