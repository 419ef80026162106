//! Bilingual screening questionnaire with conditional questions.
//!
//! Visibility is evaluated in one pass in question order: a question is shown
//! when every condition guarding it refers to a shown question whose answer
//! equals the expected value. Because conditions may only point backwards,
//! changing an answer can only affect questions after it.

mod schema;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use schema::{
    ChoiceOption, Condition, LocalizedText, Question, QuestionKind, QuestionnaireSchema, VisibilityRule,
    REQUIRED_LOCALES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Bool(bool),
    Number(f64),
    Text(String),
    List(Vec<String>),
}

impl AnswerValue {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            AnswerValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            AnswerValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            AnswerValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

/// Answers keyed by question id, stamped with the schema version they were
/// collected against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerSet {
    #[serde(default)]
    pub schema_version: String,
    #[serde(default)]
    pub answers: BTreeMap<String, AnswerValue>,
}

impl AnswerSet {
    pub fn new(schema_version: impl Into<String>) -> Self {
        Self {
            schema_version: schema_version.into(),
            answers: BTreeMap::new(),
        }
    }

    pub fn with(mut self, question: &str, value: AnswerValue) -> Self {
        self.answers.insert(question.to_string(), value);
        self
    }

    pub fn get(&self, question: &str) -> Option<&AnswerValue> {
        self.answers.get(question)
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    HiddenAnswered { question: String },
    TypeMismatch { question: String, expected: QuestionKind },
    InvalidOption { question: String, value: String },
    OutOfRange { question: String },
    MissingRequired { question: String },
    UnknownQuestion { question: String },
}

impl Violation {
    pub fn question(&self) -> &str {
        match self {
            Violation::HiddenAnswered { question }
            | Violation::TypeMismatch { question, .. }
            | Violation::InvalidOption { question, .. }
            | Violation::OutOfRange { question }
            | Violation::MissingRequired { question }
            | Violation::UnknownQuestion { question } => question,
        }
    }

    fn describe(&self) -> String {
        match self {
            Violation::HiddenAnswered { .. } => "answered although the question is hidden".into(),
            Violation::TypeMismatch { expected, .. } => format!("expected a {} answer", expected.as_str()),
            Violation::InvalidOption { value, .. } => format!("`{value}` is not one of the options"),
            Violation::OutOfRange { .. } => "number out of range".into(),
            Violation::MissingRequired { .. } => "required".into(),
            Violation::UnknownQuestion { .. } => "no such question".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// First violation as an error, pointing at the offending question.
    pub fn into_result(self) -> Result<()> {
        match self.violations.into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::validation(format!("answers.{}", v.question()), v.describe())),
        }
    }
}

fn visibility_mask(schema: &QuestionnaireSchema, answers: &AnswerSet) -> Vec<bool> {
    let mut visible = vec![false; schema.questions.len()];
    for pos in 0..schema.questions.len() {
        visible[pos] = schema.conditions_at(pos).iter().all(|cond| {
            let source = schema.position(&cond.question).expect("validated at load");
            visible[source] && answers.get(&cond.question) == Some(&cond.equals)
        });
    }
    visible
}

/// Ids of the questions shown for the given (possibly partial) answers, in
/// questionnaire order.
pub fn visible_questions<'s>(schema: &'s QuestionnaireSchema, answers: &AnswerSet) -> Result<Vec<&'s str>> {
    if let Some(unknown) = answers.answers.keys().find(|id| schema.question(id).is_none()) {
        return Err(Error::Schema(format!("answer refers to unknown question `{unknown}`")));
    }
    let mask = visibility_mask(schema, answers);
    Ok(schema
        .questions
        .iter()
        .zip(mask)
        .filter_map(|(q, shown)| shown.then_some(q.id.as_str()))
        .collect())
}

/// Checks answers against the schema. Never fails; problems are reported.
pub fn validate(schema: &QuestionnaireSchema, answers: &AnswerSet) -> ValidationReport {
    let mut violations = Vec::new();
    for id in answers.answers.keys() {
        if schema.question(id).is_none() {
            violations.push(Violation::UnknownQuestion { question: id.clone() });
        }
    }
    let mask = visibility_mask(schema, answers);
    for (q, shown) in schema.questions.iter().zip(mask) {
        let answer = answers.get(&q.id);
        match (shown, answer) {
            (false, Some(_)) => violations.push(Violation::HiddenAnswered { question: q.id.clone() }),
            (true, None) if q.required => violations.push(Violation::MissingRequired { question: q.id.clone() }),
            (true, Some(value)) => check_value(q, value, &mut violations),
            _ => {}
        }
    }
    ValidationReport { violations }
}

fn check_value(q: &Question, value: &AnswerValue, out: &mut Vec<Violation>) {
    if !q.kind.accepts(value) {
        out.push(Violation::TypeMismatch {
            question: q.id.clone(),
            expected: q.kind,
        });
        return;
    }
    let is_option = |v: &str| q.options.iter().any(|o| o.value == v);
    match value {
        AnswerValue::Text(v) if q.kind == QuestionKind::SingleChoice && !is_option(v) => {
            out.push(Violation::InvalidOption {
                question: q.id.clone(),
                value: v.clone(),
            });
        }
        AnswerValue::List(values) => {
            let mut seen = std::collections::HashSet::new();
            if let Some(bad) = values.iter().find(|v| !is_option(v) || !seen.insert(v.as_str())) {
                out.push(Violation::InvalidOption {
                    question: q.id.clone(),
                    value: bad.clone(),
                });
            }
        }
        AnswerValue::Number(n) => {
            let below = q.min.is_some_and(|min| *n < min);
            let above = q.max.is_some_and(|max| *n > max);
            if !n.is_finite() || below || above {
                out.push(Violation::OutOfRange { question: q.id.clone() });
            }
        }
        _ => {}
    }
}

/// Drops answers to questions that are not currently shown (and unknown ids).
pub fn prune_hidden(schema: &QuestionnaireSchema, answers: &AnswerSet) -> AnswerSet {
    let mask = visibility_mask(schema, answers);
    let kept = schema
        .questions
        .iter()
        .zip(mask)
        .filter(|(_, shown)| *shown)
        .filter_map(|(q, _)| answers.get(&q.id).map(|v| (q.id.clone(), v.clone())))
        .collect();
    AnswerSet {
        schema_version: answers.schema_version.clone(),
        answers: kept,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedOption {
    pub value: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedQuestion {
    pub id: String,
    pub kind: QuestionKind,
    pub prompt: String,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<RenderedOption>,
    /// Conditions that must all hold for the question to be shown.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub visible_when: Vec<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

/// A questionnaire with every string resolved to one locale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedForm {
    pub version: String,
    pub locale: String,
    pub questions: Vec<RenderedQuestion>,
}

pub fn render(schema: &QuestionnaireSchema, locale: &str) -> Result<RenderedForm> {
    if !schema.supports_locale(locale) {
        return Err(Error::UnsupportedLocale(locale.to_string()));
    }
    let text = |t: &LocalizedText| t.get(locale).expect("every locale validated at load").to_string();
    let questions = schema
        .questions
        .iter()
        .enumerate()
        .map(|(pos, q)| RenderedQuestion {
            id: q.id.clone(),
            kind: q.kind,
            prompt: text(&q.prompt),
            required: q.required,
            options: q
                .options
                .iter()
                .map(|o| RenderedOption {
                    value: o.value.clone(),
                    label: text(&o.label),
                })
                .collect(),
            visible_when: schema.conditions_at(pos).to_vec(),
            min: q.min,
            max: q.max,
        })
        .collect();
    Ok(RenderedForm {
        version: schema.version.clone(),
        locale: locale.to_string(),
        questions,
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::full_answers;
    use super::*;
    use proptest::prelude::*;

    fn three_question_schema() -> QuestionnaireSchema {
        QuestionnaireSchema::from_json(
            r#"{
              "version": "mini",
              "strings": {
                "en": {"d": "Diabetes?", "t": "Type?", "t1": "Type 1", "t2": "Type 2", "n": "Years?"},
                "es": {"d": "¿Diabetes?", "t": "¿Tipo?", "t1": "Tipo 1", "t2": "Tipo 2", "n": "¿Años?"}
              },
              "questions": [
                {"id": "has_diabetes", "kind": "yes_no", "prompt": "d"},
                {"id": "diabetes_type", "kind": "single_choice", "prompt": "t",
                 "options": [{"value": "Type 1", "label": "t1"}, {"value": "Type 2", "label": "t2"}]},
                {"id": "diabetes_duration", "kind": "number", "prompt": "n"}
              ],
              "visibility_rules": [
                {"target": "diabetes_type", "when": [{"question": "has_diabetes", "equals": true}]},
                {"target": "diabetes_duration", "when": [{"question": "has_diabetes", "equals": true}]}
              ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn diabetes_branch_shows_and_hides() {
        let schema = QuestionnaireSchema::builtin();
        let yes = AnswerSet::default().with("has_diabetes", AnswerValue::Bool(true));
        let shown = visible_questions(&schema, &yes).unwrap();
        assert!(shown.contains(&"diabetes_type") && shown.contains(&"diabetes_duration"));

        let no = AnswerSet::default().with("has_diabetes", AnswerValue::Bool(false));
        let shown = visible_questions(&schema, &no).unwrap();
        assert!(!shown.contains(&"diabetes_type") && !shown.contains(&"diabetes_duration"));
    }

    #[test]
    fn no_answers_shows_unconditioned_only() {
        let schema = QuestionnaireSchema::builtin();
        let shown = visible_questions(&schema, &AnswerSet::default()).unwrap();
        let unconditioned: Vec<&str> = schema
            .questions
            .iter()
            .filter(|q| !schema.visibility_rules.iter().any(|r| r.target == q.id))
            .map(|q| q.id.as_str())
            .collect();
        assert_eq!(shown, unconditioned);
    }

    #[test]
    fn unknown_answer_is_schema_error() {
        let schema = QuestionnaireSchema::builtin();
        let set = AnswerSet::default().with("shoe_size", AnswerValue::Number(9.0));
        assert!(matches!(visible_questions(&schema, &set), Err(Error::Schema(_))));
    }

    #[test]
    fn validate_examples() {
        let schema = three_question_schema();
        let hidden = AnswerSet::default()
            .with("has_diabetes", AnswerValue::Bool(false))
            .with("diabetes_type", AnswerValue::Text("Type 1".into()));
        assert_eq!(
            validate(&schema, &hidden).violations,
            vec![Violation::HiddenAnswered {
                question: "diabetes_type".into()
            }]
        );

        let ok = AnswerSet::default()
            .with("has_diabetes", AnswerValue::Bool(true))
            .with("diabetes_type", AnswerValue::Text("Type 1".into()))
            .with("diabetes_duration", AnswerValue::Number(16.0));
        assert!(validate(&schema, &ok).is_valid());

        let mismatch = AnswerSet::default().with("has_diabetes", AnswerValue::Number(1.0));
        assert!(validate(&schema, &mismatch)
            .violations
            .iter()
            .any(|v| matches!(v, Violation::TypeMismatch { question, .. } if question == "has_diabetes")));
    }

    #[test]
    fn validate_reports_missing_and_bad_options() {
        let schema = QuestionnaireSchema::builtin();
        assert!(validate(&schema, &full_answers(true)).is_valid());
        assert!(validate(&schema, &full_answers(false)).is_valid());

        let mut missing = full_answers(true);
        missing.answers.remove("diabetes_duration");
        assert_eq!(
            validate(&schema, &missing).violations,
            vec![Violation::MissingRequired {
                question: "diabetes_duration".into()
            }]
        );

        let bad = full_answers(false).with("last_eye_exam", AnswerValue::Text("yesterday".into()));
        assert!(matches!(
            validate(&schema, &bad).violations[..],
            [Violation::InvalidOption { .. }]
        ));

        let dup = full_answers(false).with("eye_problems", AnswerValue::List(vec!["none".into(), "none".into()]));
        assert!(!validate(&schema, &dup).is_valid());

        let range = full_answers(true).with("diabetes_duration", AnswerValue::Number(-3.0));
        assert!(matches!(
            validate(&schema, &range).violations[..],
            [Violation::OutOfRange { .. }]
        ));
    }

    #[test]
    fn report_error_points_at_question() {
        let schema = QuestionnaireSchema::builtin();
        let bad = full_answers(false).with("diabetes_type", AnswerValue::Text("type_1".into()));
        let err = validate(&schema, &bad).into_result().unwrap_err();
        assert_eq!(err.locator().as_deref(), Some("answers.diabetes_type"));
    }

    #[test]
    fn render_locales() {
        let schema = QuestionnaireSchema::builtin();
        let en = render(&schema, "en").unwrap();
        let es = render(&schema, "es").unwrap();
        let ids = |f: &RenderedForm| f.questions.iter().map(|q| (q.id.clone(), q.kind)).collect::<Vec<_>>();
        assert_eq!(ids(&en), ids(&es));
        assert_eq!(
            es.questions.iter().find(|q| q.id == "has_diabetes").unwrap().prompt,
            "¿Tiene diabetes?"
        );
        assert!(matches!(render(&schema, "fr"), Err(Error::UnsupportedLocale(_))));
    }

    #[test]
    fn answers_json_shape() {
        let set = full_answers(true);
        let json = serde_json::to_value(&set).unwrap();
        assert_eq!(json["answers"]["has_diabetes"], true);
        assert_eq!(json["answers"]["diabetes_duration"], 16.0);
        let back: AnswerSet = serde_json::from_value(json).unwrap();
        assert_eq!(back, set);
    }

    fn arb_value() -> impl Strategy<Value = AnswerValue> {
        prop_oneof![
            any::<bool>().prop_map(AnswerValue::Bool),
            (0u8..40).prop_map(|n| AnswerValue::Number(f64::from(n))),
            prop::sample::select(vec!["type_1", "some", "never", "cataract", "x"])
                .prop_map(|s| AnswerValue::Text(s.to_string())),
            prop::collection::vec(prop::sample::select(vec!["floaters", "none"]), 0..2)
                .prop_map(|v| AnswerValue::List(v.into_iter().map(String::from).collect())),
        ]
    }

    fn arb_answers() -> impl Strategy<Value = AnswerSet> {
        let ids: Vec<String> = QuestionnaireSchema::builtin()
            .questions
            .iter()
            .map(|q| q.id.clone())
            .collect();
        prop::collection::btree_map(prop::sample::select(ids), arb_value(), 0..10).prop_map(|answers| AnswerSet {
            schema_version: "screening-v1".into(),
            answers,
        })
    }

    proptest! {
        #[test]
        fn pruned_answers_have_no_hidden_violations(answers in arb_answers()) {
            let schema = QuestionnaireSchema::builtin();
            let pruned = prune_hidden(&schema, &answers);
            let report = validate(&schema, &pruned);
            let hidden = report.violations.iter().any(|v| matches!(v, Violation::HiddenAnswered { .. }));
            prop_assert!(!hidden);
        }

        #[test]
        fn changing_an_answer_only_affects_later_questions(answers in arb_answers(), pos in 0usize..10, value in arb_value()) {
            let schema = QuestionnaireSchema::builtin();
            let id = schema.questions[pos].id.clone();
            let changed = answers.clone().with(&id, value);
            let before = visibility_mask(&schema, &answers);
            let after = visibility_mask(&schema, &changed);
            prop_assert_eq!(&before[..=pos], &after[..=pos]);
        }
    }
}
