//! Participant and visit records, the visit lifecycle, and participant search.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ParticipantId, VisitId};
use crate::survey::AnswerSet;

/// Community organization running screenings. Ids, counters and data are
/// isolated per organization.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct OrganizationId(String);

impl OrganizationId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let ok =
            !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
        if ok {
            Ok(Self(id))
        } else {
            Err(Error::validation(
                "organization_id",
                "must be 1-64 characters of [A-Za-z0-9_-]",
            ))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for OrganizationId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<OrganizationId> for String {
    fn from(value: OrganizationId) -> Self {
        value.0
    }
}

impl fmt::Display for OrganizationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for OrganizationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OrganizationId({})", self.0)
    }
}

/// Declares a closed demographic category with a stable wire token and a
/// human label.
macro_rules! category {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $token:literal, $label:literal;)+ }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $token)] $variant,)+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant,)+];

            pub fn token(self) -> &'static str {
                match self { $($name::$variant => $token,)+ }
            }

            pub fn label(self) -> &'static str {
                match self { $($name::$variant => $label,)+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($token => Ok($name::$variant),)+
                    other => Err(Error::validation(
                        stringify!($name).to_lowercase(),
                        format!("unknown value `{other}`"),
                    )),
                }
            }
        }
    };
}

category!(Sex {
    Female => "female", "Female";
    Male => "male", "Male";
    Other => "other", "Other/Unreported";
});

category!(Ethnicity {
    HispanicLatino => "hispanic_latino", "Hispanic or Latino";
    BlackAfricanAmerican => "black_african_american", "Black or African American";
    White => "white", "White";
    AsianPacificIslander => "asian_pacific_islander", "Asian or Pacific Islander";
    NativeAmerican => "native_american", "Native American";
    Other => "other", "Other";
});

category!(Language {
    English => "english", "English";
    Spanish => "spanish", "Spanish";
    Both => "both", "Both";
    Other => "other", "Other";
});

category!(Insurance {
    None => "none", "No insurance";
    Private => "private", "Private insurance";
    Medicare => "medicare", "Medicare (65 years or older)";
    Medicaid => "medicaid", "Medicaid (T-19/ Forward card/ low-income)";
    MedicareMedicaid => "medicare_medicaid", "Medicare and Medicaid";
    Other => "other", "Other insurance (e.g. VA, TRICARE)";
});

category!(Eye {
    Left => "left", "Left";
    Right => "right", "Right";
});

impl Eye {
    /// Single-letter code used inside storage keys.
    pub fn key_code(self) -> char {
        match self {
            Eye::Left => 'L',
            Eye::Right => 'R',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: ParticipantId,
    pub name: String,
    pub first_name: String,
    pub last_name: String,
    pub date_of_birth: NaiveDate,
    pub sex: Sex,
    pub ethnicity: Ethnicity,
    pub language: Language,
    pub insurance: Insurance,
    pub city: String,
    pub state: String,
    pub zipcode: String,
    pub country: String,
    pub primary_phone: String,
    pub secondary_phone: Option<String>,
    pub email: Option<String>,
    pub organization_id: OrganizationId,
    pub created_at: DateTime<Utc>,
    pub version: u64,
}

impl Participant {
    /// Whole years of age on `on`.
    pub fn age_on(&self, on: NaiveDate) -> u32 {
        age_between(self.date_of_birth, on)
    }

    pub fn address_block(&self) -> String {
        format!(
            "{}\n{}, {} {}\n{}",
            self.name, self.city, self.state, self.zipcode, self.country
        )
    }
}

pub fn age_between(date_of_birth: NaiveDate, on: NaiveDate) -> u32 {
    let mut years = on.year() - date_of_birth.year();
    if (on.month(), on.day()) < (date_of_birth.month(), date_of_birth.day()) {
        years -= 1;
    }
    years.max(0) as u32
}

/// Registration form: everything but the id, which is allocated on save.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewParticipant {
    pub name: String,
    #[serde(default)]
    pub first_name: Option<String>,
    #[serde(default)]
    pub last_name: Option<String>,
    pub date_of_birth: NaiveDate,
    pub sex: Sex,
    pub ethnicity: Ethnicity,
    pub language: Language,
    pub insurance: Insurance,
    pub city: String,
    pub state: String,
    pub zipcode: String,
    pub country: String,
    pub primary_phone: String,
    #[serde(default)]
    pub secondary_phone: Option<String>,
    #[serde(default)]
    pub email: Option<String>,
}

fn required(field: &str, value: &str) -> Result<String> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        Err(Error::validation(field, "required"))
    } else {
        Ok(trimmed.to_string())
    }
}

fn optional(value: Option<&str>) -> Option<String> {
    value.map(str::trim).filter(|v| !v.is_empty()).map(str::to_string)
}

fn check_email(email: &Option<String>) -> Result<()> {
    match email {
        Some(e) if !e.contains('@') || e.starts_with('@') || e.ends_with('@') => {
            Err(Error::validation("email", "not an e-mail address"))
        }
        _ => Ok(()),
    }
}

fn split_name(name: &str) -> (String, String) {
    let mut parts = name.split_whitespace();
    let first = parts.next().unwrap_or_default().to_string();
    let last = parts.last().map(str::to_string).unwrap_or_else(|| first.clone());
    (first, last)
}

impl NewParticipant {
    /// Checks the form and produces the stored record.
    pub fn into_participant(
        self,
        participant_id: ParticipantId,
        organization_id: OrganizationId,
        now: DateTime<Utc>,
    ) -> Result<Participant> {
        let name = required("name", &self.name)?;
        let (first_guess, last_guess) = split_name(&name);
        let first_name = optional(self.first_name.as_deref()).unwrap_or(first_guess);
        let last_name = optional(self.last_name.as_deref()).unwrap_or(last_guess);
        if self.date_of_birth > now.date_naive() {
            return Err(Error::validation("date_of_birth", "in the future"));
        }
        let email = optional(self.email.as_deref());
        check_email(&email)?;
        Ok(Participant {
            participant_id,
            name,
            first_name,
            last_name,
            date_of_birth: self.date_of_birth,
            sex: self.sex,
            ethnicity: self.ethnicity,
            language: self.language,
            insurance: self.insurance,
            city: required("city", &self.city)?,
            state: required("state", &self.state)?,
            zipcode: required("zipcode", &self.zipcode)?,
            country: required("country", &self.country)?,
            primary_phone: required("primary_phone", &self.primary_phone)?,
            secondary_phone: optional(self.secondary_phone.as_deref()),
            email,
            organization_id,
            created_at: now,
            version: 1,
        })
    }
}

/// Partial update of a participant. `version` must equal the stored version;
/// a stale version is a conflicting concurrent edit. Empty strings clear the
/// optional fields.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantPatch {
    pub version: u64,
    /// Present only so that attempts to change the key are reported clearly.
    #[serde(default)]
    pub participant_id: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub first_name: Option<String>,
    #[serde(default)]
    pub last_name: Option<String>,
    #[serde(default)]
    pub date_of_birth: Option<NaiveDate>,
    #[serde(default)]
    pub sex: Option<Sex>,
    #[serde(default)]
    pub ethnicity: Option<Ethnicity>,
    #[serde(default)]
    pub language: Option<Language>,
    #[serde(default)]
    pub insurance: Option<Insurance>,
    #[serde(default)]
    pub city: Option<String>,
    #[serde(default)]
    pub state: Option<String>,
    #[serde(default)]
    pub zipcode: Option<String>,
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default)]
    pub primary_phone: Option<String>,
    #[serde(default)]
    pub secondary_phone: Option<String>,
    #[serde(default)]
    pub email: Option<String>,
}

impl ParticipantPatch {
    pub fn apply(&self, current: &Participant, now: DateTime<Utc>) -> Result<Participant> {
        if self.participant_id.is_some() {
            return Err(Error::validation("participant_id", "participant id is immutable"));
        }
        let mut next = current.clone();
        if let Some(name) = &self.name {
            next.name = required("name", name)?;
            let (first, last) = split_name(&next.name);
            next.first_name = first;
            next.last_name = last;
        }
        if let Some(first) = &self.first_name {
            next.first_name = required("first_name", first)?;
        }
        if let Some(last) = &self.last_name {
            next.last_name = required("last_name", last)?;
        }
        if let Some(dob) = self.date_of_birth {
            if dob > now.date_naive() {
                return Err(Error::validation("date_of_birth", "in the future"));
            }
            next.date_of_birth = dob;
        }
        if let Some(v) = self.sex {
            next.sex = v;
        }
        if let Some(v) = self.ethnicity {
            next.ethnicity = v;
        }
        if let Some(v) = self.language {
            next.language = v;
        }
        if let Some(v) = self.insurance {
            next.insurance = v;
        }
        if let Some(v) = &self.city {
            next.city = required("city", v)?;
        }
        if let Some(v) = &self.state {
            next.state = required("state", v)?;
        }
        if let Some(v) = &self.zipcode {
            next.zipcode = required("zipcode", v)?;
        }
        if let Some(v) = &self.country {
            next.country = required("country", v)?;
        }
        if let Some(v) = &self.primary_phone {
            next.primary_phone = required("primary_phone", v)?;
        }
        if let Some(v) = &self.secondary_phone {
            next.secondary_phone = optional(Some(v));
        }
        if let Some(v) = &self.email {
            next.email = optional(Some(v));
            check_email(&next.email)?;
        }
        next.version = current.version + 1;
        Ok(next)
    }
}

/// Lifecycle of one screening visit.
///
/// ```text
/// Surveyed -> Imaged -> Graded -> Notified -> Closed
///                        ^  |
///                        +--+   (grading edit)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisitState {
    Surveyed,
    Imaged,
    Graded,
    Notified,
    Closed,
}

impl VisitState {
    pub const ALL: [VisitState; 5] = [
        VisitState::Surveyed,
        VisitState::Imaged,
        VisitState::Graded,
        VisitState::Notified,
        VisitState::Closed,
    ];

    pub fn can_transition_to(self, target: VisitState) -> bool {
        use VisitState::*;
        matches!(
            (self, target),
            (Surveyed, Imaged) | (Imaged, Graded) | (Graded, Graded) | (Graded, Notified) | (Notified, Closed)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VisitState::Surveyed => "surveyed",
            VisitState::Imaged => "imaged",
            VisitState::Graded => "graded",
            VisitState::Notified => "notified",
            VisitState::Closed => "closed",
        }
    }
}

impl fmt::Display for VisitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub from: VisitState,
    pub to: VisitState,
    pub at: DateTime<Utc>,
    pub actor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub eye: Eye,
    pub storage_key: String,
    pub captured_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub visit_id: VisitId,
    pub participant_id: ParticipantId,
    pub organization_id: OrganizationId,
    pub answers: AnswerSet,
    pub image_refs: Vec<ImageRef>,
    pub state: VisitState,
    pub opened_at: DateTime<Utc>,
    /// Set when the survey answers are first saved.
    pub survey_taken_at: Option<DateTime<Utc>>,
    pub graded_at: Option<DateTime<Utc>>,
    /// Grading changed after a letter went out; staff must print a new one.
    #[serde(default)]
    pub requires_reissue: bool,
    pub version: u64,
    #[serde(default)]
    pub history: Vec<StateChange>,
}

impl Visit {
    /// Moment the visit counts as having happened: survey time, else opening.
    pub fn screened_at(&self) -> DateTime<Utc> {
        self.survey_taken_at.unwrap_or(self.opened_at)
    }

    /// Applies a lifecycle edge, recording it in the visit history.
    pub fn transition(&mut self, target: VisitState, actor: &str, at: DateTime<Utc>) -> Result<()> {
        if !self.state.can_transition_to(target) {
            return Err(Error::IllegalTransition {
                from: self.state.to_string(),
                to: target.to_string(),
            });
        }
        self.history.push(StateChange {
            from: self.state,
            to: target,
            at,
            actor: actor.to_string(),
        });
        self.state = target;
        self.version += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchField {
    Id,
    Name,
    DateOfBirth,
    Phone,
}

impl FromStr for SearchField {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id" => Ok(SearchField::Id),
            "name" => Ok(SearchField::Name),
            "date_of_birth" | "dob" => Ok(SearchField::DateOfBirth),
            "phone" => Ok(SearchField::Phone),
            other => Err(Error::validation("field", format!("unknown search field `{other}`"))),
        }
    }
}

/// Search predicate: names match first or last name ignoring case; ids,
/// dates of birth (`YYYY-MM-DD`) and phone numbers match exactly.
pub fn matches_search(participant: &Participant, field: SearchField, query: &str) -> bool {
    let query = query.trim();
    match field {
        SearchField::Id => participant.participant_id.to_string() == query,
        SearchField::Name => {
            let query = query.to_lowercase();
            participant.first_name.to_lowercase() == query || participant.last_name.to_lowercase() == query
        }
        SearchField::DateOfBirth => participant.date_of_birth.format("%Y-%m-%d").to_string() == query,
        SearchField::Phone => {
            participant.primary_phone == query || participant.secondary_phone.as_deref() == Some(query)
        }
    }
}
