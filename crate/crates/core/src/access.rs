//! Roles, the permission matrix, sessions, audit trail and grader redaction.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, RwLock};

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use chrono::{DateTime, Duration, NaiveDate, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::domain::{OrganizationId, Participant, Visit};
use crate::error::{Error, Result};
use crate::grading::{GraderView, GradingRecord};
use crate::survey::{AnswerSet, AnswerValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Screener,
    Grader,
    Staff,
    Admin,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Screener, Role::Grader, Role::Staff, Role::Admin];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Screener => "screener",
            Role::Grader => "grader",
            Role::Staff => "staff",
            Role::Admin => "admin",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::validation("role", format!("unknown role `{s}`")))
    }
}

/// Everything a caller can ask for. The API maps every route to one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Login,
    Logout,
    ReadQuestionnaire,
    RegisterParticipant,
    SearchParticipants,
    ReadParticipantPii,
    EditParticipant,
    OpenVisit,
    EditSurvey,
    AttachImage,
    FetchImage,
    /// Route-level permission to ask for a lifecycle change; the specific
    /// edge is checked again with one of the `Transition*` actions.
    TransitionVisit,
    TransitionToImaged,
    TransitionToGraded,
    TransitionToNotified,
    TransitionToClosed,
    GradingQueue,
    ListGraded,
    SubmitGrading,
    EditGrading,
    ViewPendingReports,
    RenderLetter,
    MarkSent,
    AddFollowUp,
    ListFollowUps,
    Export,
}

impl Action {
    pub const ALL: [Action; 26] = [
        Action::Login,
        Action::Logout,
        Action::ReadQuestionnaire,
        Action::RegisterParticipant,
        Action::SearchParticipants,
        Action::ReadParticipantPii,
        Action::EditParticipant,
        Action::OpenVisit,
        Action::EditSurvey,
        Action::AttachImage,
        Action::FetchImage,
        Action::TransitionVisit,
        Action::TransitionToImaged,
        Action::TransitionToGraded,
        Action::TransitionToNotified,
        Action::TransitionToClosed,
        Action::GradingQueue,
        Action::ListGraded,
        Action::SubmitGrading,
        Action::EditGrading,
        Action::ViewPendingReports,
        Action::RenderLetter,
        Action::MarkSent,
        Action::AddFollowUp,
        Action::ListFollowUps,
        Action::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::Login => "login",
            Action::Logout => "logout",
            Action::ReadQuestionnaire => "read_questionnaire",
            Action::RegisterParticipant => "register_participant",
            Action::SearchParticipants => "search_participants",
            Action::ReadParticipantPii => "read_participant_pii",
            Action::EditParticipant => "edit_participant",
            Action::OpenVisit => "open_visit",
            Action::EditSurvey => "edit_survey",
            Action::AttachImage => "attach_image",
            Action::FetchImage => "fetch_image",
            Action::TransitionVisit => "transition_visit",
            Action::TransitionToImaged => "transition_to_imaged",
            Action::TransitionToGraded => "transition_to_graded",
            Action::TransitionToNotified => "transition_to_notified",
            Action::TransitionToClosed => "transition_to_closed",
            Action::GradingQueue => "grading_queue",
            Action::ListGraded => "list_graded",
            Action::SubmitGrading => "submit_grading",
            Action::EditGrading => "edit_grading",
            Action::ViewPendingReports => "view_pending_reports",
            Action::RenderLetter => "render_letter",
            Action::MarkSent => "mark_sent",
            Action::AddFollowUp => "add_followup",
            Action::ListFollowUps => "list_followups",
            Action::Export => "export",
        }
    }
}

/// The static permission matrix. Each role owns one portal; nothing crosses
/// over. Admins can only export.
pub fn permits(role: Role, action: Action) -> bool {
    use Action::*;
    match action {
        Login | Logout => true,
        ReadQuestionnaire => matches!(role, Role::Screener | Role::Grader | Role::Staff),
        RegisterParticipant | SearchParticipants | EditParticipant | OpenVisit | EditSurvey | AttachImage
        | TransitionToImaged => role == Role::Screener,
        ReadParticipantPii => matches!(role, Role::Screener | Role::Staff),
        FetchImage => matches!(role, Role::Screener | Role::Grader),
        TransitionVisit => matches!(role, Role::Screener | Role::Grader | Role::Staff),
        TransitionToGraded | GradingQueue | ListGraded | SubmitGrading | EditGrading => role == Role::Grader,
        TransitionToNotified | TransitionToClosed | ViewPendingReports | RenderLetter | MarkSent | AddFollowUp
        | ListFollowUps => role == Role::Staff,
        Export => role == Role::Admin,
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub account_id: String,
    pub username: String,
    /// PHC-format argon2 hash.
    pub password_hash: String,
    pub role: Role,
    pub organization_id: OrganizationId,
    /// Further organizations a grader serves.
    #[serde(default)]
    pub extra_organizations: Vec<OrganizationId>,
}

impl fmt::Debug for Account {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Account")
            .field("account_id", &self.account_id)
            .field("username", &self.username)
            .field("role", &self.role)
            .field("organization_id", &self.organization_id)
            .finish_non_exhaustive()
    }
}

impl Account {
    /// Can this account see data of `org`? Admins see all organizations.
    pub fn serves(&self, org: &OrganizationId) -> bool {
        self.role == Role::Admin || &self.organization_id == org || self.extra_organizations.contains(org)
    }
}

pub fn hash_password(password: &str) -> Result<String> {
    let mut salt = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut salt);
    let salt = SaltString::encode_b64(&salt).map_err(|e| Error::Internal(e.to_string()))?;
    Argon2::default()
        .hash_password(password.as_bytes(), &salt)
        .map(|h| h.to_string())
        .map_err(|e| Error::Internal(format!("password hashing failed: {e}")))
}

pub fn verify_password(password: &str, hash: &str) -> bool {
    PasswordHash::new(hash)
        .map(|parsed| Argon2::default().verify_password(password.as_bytes(), &parsed).is_ok())
        .unwrap_or(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Allowed,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub actor: String,
    pub action: String,
    pub entity: String,
    pub timestamp: DateTime<Utc>,
    pub outcome: Decision,
    /// Prior values of an edited record, as JSON.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Append-only, totally ordered audit log.
#[derive(Debug, Default)]
pub struct AuditLog {
    events: Mutex<Vec<AuditEvent>>,
}

impl AuditLog {
    pub fn record(&self, actor: &str, action: &str, entity: &str, outcome: Decision, detail: Option<String>) {
        let mut events = self.events.lock().unwrap_or_else(|p| p.into_inner());
        let seq = events.len() as u64 + 1;
        events.push(AuditEvent {
            seq,
            actor: actor.to_string(),
            action: action.to_string(),
            entity: entity.to_string(),
            timestamp: Utc::now(),
            outcome,
            detail,
        });
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.events.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn count(&self, outcome: Decision) -> usize {
        self.events
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .iter()
            .filter(|e| e.outcome == outcome)
            .count()
    }
}

/// Bearer token handed out at login.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionToken(String);

impl SessionToken {
    fn generate() -> Self {
        let mut bytes = [0u8; 32];
        rand::thread_rng().fill_bytes(&mut bytes);
        Self(hex::encode(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for SessionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionToken(..)")
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub token: SessionToken,
    pub account_id: String,
    pub expires_at: DateTime<Utc>,
}

pub const DEFAULT_SESSION_TTL_HOURS: i64 = 12;

/// Accounts, sessions and the audit trail.
#[derive(Debug)]
pub struct AccessControl {
    accounts: RwLock<HashMap<String, Account>>,
    sessions: RwLock<HashMap<String, Session>>,
    session_ttl: Duration,
    audit: AuditLog,
}

impl Default for AccessControl {
    fn default() -> Self {
        Self::new(Duration::hours(DEFAULT_SESSION_TTL_HOURS))
    }
}

impl AccessControl {
    pub fn new(session_ttl: Duration) -> Self {
        Self {
            accounts: RwLock::default(),
            sessions: RwLock::default(),
            session_ttl,
            audit: AuditLog::default(),
        }
    }

    pub fn add_account(&self, account: Account) -> Result<()> {
        if account.username.trim().is_empty() {
            return Err(Error::validation("username", "required"));
        }
        PasswordHash::new(&account.password_hash)
            .map_err(|_| Error::validation("password_hash", "not a PHC password hash"))?;
        let mut accounts = self.accounts.write().unwrap_or_else(|p| p.into_inner());
        if accounts.contains_key(&account.username) {
            return Err(Error::validation("username", "already taken"));
        }
        if accounts.values().any(|a| a.account_id == account.account_id) {
            return Err(Error::validation("account_id", "already taken"));
        }
        accounts.insert(account.username.clone(), account);
        Ok(())
    }

    pub fn login(&self, username: &str, password: &str, now: DateTime<Utc>) -> Result<Session> {
        let account = self
            .accounts
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(username)
            .cloned();
        let Some(account) = account.filter(|a| verify_password(password, &a.password_hash)) else {
            tracing::warn!(username, "failed login");
            return Err(Error::Unauthenticated);
        };
        let session = Session {
            token: SessionToken::generate(),
            account_id: account.account_id.clone(),
            expires_at: now + self.session_ttl,
        };
        let mut sessions = self.sessions.write().unwrap_or_else(|p| p.into_inner());
        sessions.retain(|_, s| s.expires_at > now);
        sessions.insert(session.token.0.clone(), session.clone());
        self.audit.record(
            &account.account_id,
            Action::Login.name(),
            &account.account_id,
            Decision::Allowed,
            None,
        );
        Ok(session)
    }

    pub fn logout(&self, token: &str) {
        self.sessions.write().unwrap_or_else(|p| p.into_inner()).remove(token);
    }

    /// Resolves a bearer token. Expired and unknown tokens are rejected.
    pub fn authenticate(&self, token: &str, now: DateTime<Utc>) -> Result<Account> {
        let account_id = {
            let sessions = self.sessions.read().unwrap_or_else(|p| p.into_inner());
            match sessions.get(token) {
                Some(s) if s.expires_at > now => s.account_id.clone(),
                _ => return Err(Error::Unauthenticated),
            }
        };
        self.account_by_id(&account_id).ok_or(Error::Unauthenticated)
    }

    pub fn account_by_id(&self, account_id: &str) -> Option<Account> {
        self.accounts
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .find(|a| a.account_id == account_id)
            .cloned()
    }

    /// Matrix decision for `action` on `entity`, always audited.
    pub fn authorize(&self, account: &Account, action: Action, entity: &str) -> Decision {
        let decision = if permits(account.role, action) {
            Decision::Allowed
        } else {
            Decision::Denied
        };
        self.audit
            .record(&account.account_id, action.name(), entity, decision, None);
        decision
    }

    /// [`authorize`](Self::authorize) turned into a `Result`.
    pub fn require(&self, account: &Account, action: Action, entity: &str) -> Result<()> {
        match self.authorize(account, action, entity) {
            Decision::Allowed => Ok(()),
            Decision::Denied => Err(Error::Unauthorized(format!(
                "role {} may not {}",
                account.role,
                action.name()
            ))),
        }
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }
}

/// Decade band such as `40-49`.
pub fn age_band(age: u32) -> String {
    let low = age / 10 * 10;
    format!("{}-{}", low, low + 9)
}

const REDACTED: &str = "[redacted]";

fn pii_values(participant: &Participant) -> Vec<String> {
    let mut values = vec![
        participant.name.clone(),
        participant.first_name.clone(),
        participant.last_name.clone(),
        participant.primary_phone.clone(),
        participant.city.clone(),
        participant.zipcode.clone(),
        participant.date_of_birth.format("%Y-%m-%d").to_string(),
    ];
    values.extend(participant.secondary_phone.clone());
    values.extend(participant.email.clone());
    values.retain(|v| v.chars().count() >= 4);
    // Longest first so a full name is removed before its parts.
    values.sort_by_key(|v| std::cmp::Reverse(v.len()));
    values
}

fn scrub(text: &str, pii: &[String]) -> String {
    let mut out = text.to_string();
    for value in pii {
        let lower_value = value.to_lowercase();
        loop {
            let lower = out.to_lowercase();
            // Lowercasing can change byte lengths outside ASCII; fall back to
            // exact matching in that case.
            let found = if lower.len() == out.len() {
                lower.find(&lower_value).map(|i| (i, lower_value.len()))
            } else {
                out.find(value.as_str()).map(|i| (i, value.len()))
            };
            match found {
                Some((i, len)) => out.replace_range(i..i + len, REDACTED),
                None => break,
            }
        }
    }
    out
}

fn scrub_answers(answers: &AnswerSet, pii: &[String]) -> AnswerSet {
    let answers_out = answers
        .answers
        .iter()
        .map(|(id, value)| {
            let value = match value {
                AnswerValue::Text(t) => AnswerValue::Text(scrub(t, pii)),
                AnswerValue::List(items) => AnswerValue::List(items.iter().map(|t| scrub(t, pii)).collect()),
                other => other.clone(),
            };
            (id.clone(), value)
        })
        .collect();
    AnswerSet {
        schema_version: answers.schema_version.clone(),
        answers: answers_out,
    }
}

/// The de-identified view of a visit shown to graders: age band and sex
/// instead of identity, and survey text with any identifying value removed.
pub fn redact_for_grader(participant: &Participant, visit: &Visit, grading: Option<GradingRecord>) -> GraderView {
    let screened_on: NaiveDate = visit.screened_at().date_naive();
    let pii = pii_values(participant);
    GraderView {
        visit_id: visit.visit_id,
        organization_id: visit.organization_id.clone(),
        age_band: age_band(participant.age_on(screened_on)),
        sex: participant.sex,
        answers: scrub_answers(&visit.answers, &pii),
        image_refs: visit.image_refs.clone(),
        survey_taken_at: visit.survey_taken_at,
        grading,
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn account(id: &str, role: Role, org: &str) -> Account {
        Account {
            account_id: id.to_string(),
            username: id.to_string(),
            password_hash: hash_password("pw").unwrap(),
            role,
            organization_id: OrganizationId::new(org).unwrap(),
            extra_organizations: Vec::new(),
        }
    }
}
