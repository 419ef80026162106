//! Result letters, dispatch log and follow-ups for graded visits.

mod templates;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{Language, Participant};
use crate::error::{Error, Result};
use crate::grading::{DrGrade, GradingRecord};
use crate::ids::VisitId;

pub use templates::{
    fill, parse_template, required_keys, LetterTemplate, LetterTemplates, MANIFEST_FILE, PLACEHOLDERS,
};

/// Locales letters are written in.
pub const LETTER_LOCALES: [&str; 2] = ["en", "es"];

/// Letter locale for a participant's preferred language. Only Spanish
/// speakers get the Spanish letter; everyone else gets English.
pub fn letter_locale(language: Language) -> &'static str {
    match language {
        Language::Spanish => "es",
        Language::English | Language::Both | Language::Other => "en",
    }
}

pub fn template_key(grade: DrGrade, locale: &str) -> String {
    format!("letter-{}-{}", grade.slug(), locale)
}

pub fn select_letter(grade: DrGrade, language: Language) -> String {
    template_key(grade, letter_locale(language))
}

fn grade_phrase(grade: DrGrade, locale: &str) -> &'static str {
    let es = locale == "es";
    match (grade, es) {
        (DrGrade::NoApparentDR, false) => "no apparent diabetic retinopathy",
        (DrGrade::NoApparentDR, true) => "sin retinopatía diabética aparente",
        (DrGrade::MildNPDR, false) => "mild non-proliferative diabetic retinopathy",
        (DrGrade::MildNPDR, true) => "retinopatía diabética no proliferativa leve",
        (DrGrade::ModerateNPDR, false) => "moderate non-proliferative diabetic retinopathy",
        (DrGrade::ModerateNPDR, true) => "retinopatía diabética no proliferativa moderada",
        (DrGrade::SevereNPDR, false) => "severe non-proliferative diabetic retinopathy",
        (DrGrade::SevereNPDR, true) => "retinopatía diabética no proliferativa severa",
        (DrGrade::ProliferativeDR, false) => "proliferative diabetic retinopathy",
        (DrGrade::ProliferativeDR, true) => "retinopatía diabética proliferativa",
        (DrGrade::MacularEdemaSuspected, false) => "suspected macular edema",
        (DrGrade::MacularEdemaSuspected, true) => "sospecha de edema macular",
        (DrGrade::OtherFindings, false) => "other findings that need attention",
        (DrGrade::OtherFindings, true) => "otros hallazgos que necesitan atención",
        (DrGrade::Ungradable, false) => "images could not be graded",
        (DrGrade::Ungradable, true) => "las imágenes no se pudieron evaluar",
    }
}

fn recommendation(grade: DrGrade, locale: &str) -> &'static str {
    let es = locale == "es";
    match (grade, es) {
        (DrGrade::NoApparentDR, false) => "Have your eyes screened again in one year.",
        (DrGrade::NoApparentDR, true) => "Hágase otro examen de los ojos en un año.",
        (DrGrade::MildNPDR, false) => "See an eye doctor within 12 months and keep your blood sugar under control.",
        (DrGrade::MildNPDR, true) => {
            "Vea a un médico de los ojos dentro de 12 meses y mantenga controlada su azúcar en la sangre."
        }
        (DrGrade::ModerateNPDR, false) => "See an eye doctor within 3 to 6 months.",
        (DrGrade::ModerateNPDR, true) => "Vea a un médico de los ojos dentro de 3 a 6 meses.",
        (DrGrade::SevereNPDR, false) => "See an eye doctor within one month.",
        (DrGrade::SevereNPDR, true) => "Vea a un médico de los ojos dentro de un mes.",
        (DrGrade::ProliferativeDR, false) => "See an eye doctor as soon as possible, within one week.",
        (DrGrade::ProliferativeDR, true) => "Vea a un médico de los ojos lo antes posible, dentro de una semana.",
        (DrGrade::MacularEdemaSuspected, false) => "See an eye doctor within one month.",
        (DrGrade::MacularEdemaSuspected, true) => "Vea a un médico de los ojos dentro de un mes.",
        (DrGrade::OtherFindings, false) => "See an eye doctor within 3 months for a full exam.",
        (DrGrade::OtherFindings, true) => "Vea a un médico de los ojos dentro de 3 meses para un examen completo.",
        (DrGrade::Ungradable, false) => "See an eye doctor for a full dilated eye exam.",
        (DrGrade::Ungradable, true) => "Vea a un médico de los ojos para un examen completo con dilatación.",
    }
}

fn grade_statement(record: &GradingRecord, locale: &str) -> String {
    let (left, right) = if locale == "es" {
        ("Ojo izquierdo", "Ojo derecho")
    } else {
        ("Left eye", "Right eye")
    };
    let not_graded = if locale == "es" { "no evaluado" } else { "not graded" };
    let eye = |e: &Option<crate::grading::EyeGrade>| {
        e.as_ref()
            .map(|e| grade_phrase(e.grade, locale).to_string())
            .unwrap_or_else(|| not_graded.to_string())
    };
    format!("{left}: {}. {right}: {}.", eye(&record.left), eye(&record.right))
}

/// A letter ready to print.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrintableLetter {
    pub visit_id: VisitId,
    pub template_key: String,
    pub subject: String,
    pub body: String,
    /// Self-contained page for the browser's print dialog.
    pub html: String,
}

pub fn render_letter(
    templates: &LetterTemplates,
    participant: &Participant,
    record: &GradingRecord,
) -> Result<PrintableLetter> {
    let grade = record.overall_grade();
    let locale = letter_locale(participant.language);
    let key = template_key(grade, locale);
    let template = templates.get(&key)?;
    let mut values = BTreeMap::new();
    values.insert("participant_name", participant.name.clone());
    values.insert("address_block", participant.address_block());
    values.insert("grade_statement", grade_statement(record, locale));
    values.insert("recommendation", recommendation(grade, locale).to_string());
    let subject = fill(&template.subject, &values);
    let body = fill(&template.body, &values);
    let html = print_page(locale, &subject, &body);
    Ok(PrintableLetter {
        visit_id: record.visit_id,
        template_key: key,
        subject,
        body,
        html,
    })
}

fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn print_page(locale: &str, subject: &str, body: &str) -> String {
    let paragraphs: String = body
        .split("\n\n")
        .filter(|p| !p.trim().is_empty())
        .map(|p| format!("<p>{}</p>\n", escape_html(p.trim()).replace('\n', "<br>\n")))
        .collect();
    format!(
        "<!DOCTYPE html>\n<html lang=\"{locale}\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n</head>\n\
         <body style=\"font-family: serif; max-width: 40em; margin: 2em auto\">\n{paragraphs}</body>\n</html>\n",
        escape_html(subject)
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LetterDispatch {
    pub visit_id: VisitId,
    pub template_key: String,
    pub rendered_at: DateTime<Utc>,
    pub sent: bool,
    pub sent_marked_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowUpChannel {
    PhoneCall,
    Text,
}

impl fmt::Display for FollowUpChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FollowUpChannel::PhoneCall => "phone_call",
            FollowUpChannel::Text => "text",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowUp {
    pub visit_id: VisitId,
    pub channel: FollowUpChannel,
    pub comment: String,
    pub created_at: DateTime<Utc>,
    pub staff_id: String,
}

/// Client input for a follow-up. The timestamp is always set by the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewFollowUp {
    pub channel: FollowUpChannel,
    #[serde(default)]
    pub comment: String,
}

impl NewFollowUp {
    pub fn validate(&self) -> Result<()> {
        if self.comment.chars().count() > 4000 {
            return Err(Error::validation("comment", "longer than 4000 characters"));
        }
        Ok(())
    }
}
