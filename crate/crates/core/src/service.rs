//! The workflow operations of all four portals, with authorization and
//! auditing applied to every call.

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::access::{redact_for_grader, AccessControl, Account, Action, Decision, Role, Session};
use crate::domain::{
    matches_search, Eye, ImageRef, NewParticipant, OrganizationId, Participant, ParticipantPatch, SearchField, Visit,
    VisitState,
};
use crate::error::{Error, Result};
use crate::grading::{DrGrade, GraderView, GradingEdit, GradingRecord, GradingSubmission};
use crate::ids::{allocate_after, next_visit_id, ParticipantId, VisitId};
use crate::reporting::{self, FollowUp, LetterDispatch, LetterTemplates, NewFollowUp, PrintableLetter};
use crate::storage::export::{export_rows, import_rows, parse_csv, write_csv};
use crate::storage::objects::{MemoryObjectStore, ObjectStore, StorageKey};
use crate::storage::{Store, Tables, VisitKey};
use crate::survey::{self, AnswerSet, QuestionnaireSchema, RenderedForm};

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

/// `limit`/`offset` window over a list result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    #[serde(default = "default_limit")]
    pub limit: usize,
    #[serde(default)]
    pub offset: usize,
}

fn default_limit() -> usize {
    DEFAULT_PAGE_SIZE
}

impl Default for Page {
    fn default() -> Self {
        Self {
            limit: DEFAULT_PAGE_SIZE,
            offset: 0,
        }
    }
}

impl Page {
    pub fn validate(&self) -> Result<()> {
        if self.limit == 0 || self.limit > MAX_PAGE_SIZE {
            return Err(Error::validation(
                "limit",
                format!("must be between 1 and {MAX_PAGE_SIZE}"),
            ));
        }
        Ok(())
    }

    fn apply<T>(&self, items: impl IntoIterator<Item = T>) -> Vec<T> {
        items.into_iter().skip(self.offset).take(self.limit).collect()
    }
}

/// Body of a survey save: the full answer set and the visit version the
/// screener started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyUpdate {
    pub version: u64,
    pub answers: AnswerSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingDetail {
    pub view: GraderView,
    /// Every revision, oldest first.
    pub revisions: Vec<GradingRecord>,
}

/// A graded visit awaiting its letter, with the contact details staff need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingReport {
    pub visit_id: VisitId,
    pub state: VisitState,
    pub participant: Participant,
    pub grading: GradingRecord,
    pub overall_grade: DrGrade,
    pub template_key: String,
    pub active_dispatch: Option<LetterDispatch>,
    pub requires_reissue: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedLetter {
    pub letter: PrintableLetter,
    pub dispatch: LetterDispatch,
}

pub struct ScreeningService {
    store: Store,
    objects: Arc<dyn ObjectStore>,
    schema: QuestionnaireSchema,
    templates: LetterTemplates,
    access: AccessControl,
    clock: Clock,
}

impl std::fmt::Debug for ScreeningService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScreeningService")
            .field("schema", &self.schema.version)
            .field("templates", &self.templates.len())
            .finish_non_exhaustive()
    }
}

fn require_state(visit: &Visit, allowed: &[VisitState], what: &str) -> Result<()> {
    if allowed.contains(&visit.state) {
        Ok(())
    } else {
        Err(Error::IllegalState(format!(
            "cannot {what}: visit {} is {}",
            visit.visit_id, visit.state
        )))
    }
}

fn to_json<T: Serialize>(value: &T) -> Option<String> {
    serde_json::to_string(value).ok()
}

impl ScreeningService {
    pub fn new(
        store: Store,
        objects: Arc<dyn ObjectStore>,
        schema: QuestionnaireSchema,
        templates: LetterTemplates,
        access: AccessControl,
    ) -> Self {
        Self {
            store,
            objects,
            schema,
            templates,
            access,
            clock: Arc::new(Utc::now),
        }
    }

    /// Memory-only service with the shipped questionnaire and letters.
    pub fn in_memory() -> Self {
        Self::new(
            Store::in_memory(),
            Arc::new(MemoryObjectStore::default()),
            QuestionnaireSchema::builtin(),
            LetterTemplates::builtin(),
            AccessControl::default(),
        )
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    pub fn access(&self) -> &AccessControl {
        &self.access
    }

    pub fn schema(&self) -> &QuestionnaireSchema {
        &self.schema
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn record_change(&self, actor: &Account, action: Action, entity: &str, prior: Option<String>) {
        self.access
            .audit()
            .record(&actor.account_id, action.name(), entity, Decision::Allowed, prior);
    }

    /// Organization holding `vid` from the caller's point of view. Unknown
    /// and out-of-scope visits look the same.
    fn locate(&self, actor: &Account, vid: VisitId, hint: Option<&OrganizationId>) -> Result<OrganizationId> {
        if let Some(org) = hint {
            return if actor.serves(org) {
                Ok(org.clone())
            } else {
                Err(Error::UnknownVisit(vid.to_string()))
            };
        }
        if matches!(actor.role, Role::Screener | Role::Staff) {
            return Ok(actor.organization_id.clone());
        }
        let candidates: Vec<OrganizationId> = self.store.read(|t| {
            t.visits
                .keys()
                .filter(|(org, v)| *v == vid && actor.serves(org))
                .map(|(org, _)| org.clone())
                .collect()
        });
        match candidates.as_slice() {
            [] => Err(Error::UnknownVisit(vid.to_string())),
            [one] => Ok(one.clone()),
            _ => Err(Error::validation(
                "org",
                format!("{vid} exists in several organizations; pass `org`"),
            )),
        }
    }

    // Sessions.

    pub fn login(&self, username: &str, password: &str) -> Result<Session> {
        self.access.login(username, password, self.now())
    }

    pub fn logout(&self, token: &str) {
        self.access.logout(token);
    }

    pub fn authenticate(&self, token: &str) -> Result<Account> {
        self.access.authenticate(token, self.now())
    }

    // Screener portal.

    pub fn questionnaire(&self, actor: &Account, locale: &str) -> Result<RenderedForm> {
        self.access.require(actor, Action::ReadQuestionnaire, locale)?;
        survey::render(&self.schema, locale)
    }

    pub fn register_participant(&self, actor: &Account, form: NewParticipant) -> Result<Participant> {
        self.access.require(actor, Action::RegisterParticipant, "participant")?;
        let org = actor.organization_id.clone();
        let now = self.now();
        let participant = self.store.write(|t| {
            let pid = allocate_after(t.last_participant_id.get(&org).copied())?;
            let participant = form.into_participant(pid, org.clone(), now)?;
            t.last_participant_id.insert(org.clone(), pid);
            t.participants.insert((org.clone(), pid), participant.clone());
            Ok(participant)
        })?;
        self.record_change(
            actor,
            Action::RegisterParticipant,
            &participant.participant_id.to_string(),
            None,
        );
        Ok(participant)
    }

    pub fn get_participant(&self, actor: &Account, pid: ParticipantId) -> Result<Participant> {
        self.access
            .require(actor, Action::ReadParticipantPii, &pid.to_string())?;
        self.store.read(|t| t.participant(&actor.organization_id, pid).cloned())
    }

    pub fn edit_participant(
        &self,
        actor: &Account,
        pid: ParticipantId,
        patch: ParticipantPatch,
    ) -> Result<Participant> {
        self.access.require(actor, Action::EditParticipant, &pid.to_string())?;
        let org = actor.organization_id.clone();
        let now = self.now();
        let (prior, updated) = self.store.write(|t| {
            let current = t.participant(&org, pid)?;
            if patch.version != current.version {
                return Err(Error::Conflict {
                    entity: pid.to_string(),
                    expected: patch.version,
                    found: current.version,
                });
            }
            let updated = patch.apply(current, now)?;
            let prior = t.participants.insert((org.clone(), pid), updated.clone());
            Ok((prior, updated))
        })?;
        self.record_change(
            actor,
            Action::EditParticipant,
            &pid.to_string(),
            prior.as_ref().and_then(to_json),
        );
        Ok(updated)
    }

    pub fn search_participants(
        &self,
        actor: &Account,
        field: SearchField,
        query: &str,
        page: Page,
    ) -> Result<Vec<Participant>> {
        self.access.require(actor, Action::SearchParticipants, "participant")?;
        page.validate()?;
        if query.trim().is_empty() {
            return Err(Error::validation("q", "required"));
        }
        let org = &actor.organization_id;
        Ok(self.store.read(|t| {
            page.apply(
                t.participants
                    .iter()
                    .filter(|((o, _), p)| o == org && matches_search(p, field, query))
                    .map(|(_, p)| p.clone()),
            )
        }))
    }

    pub fn list_visits(&self, actor: &Account, pid: ParticipantId) -> Result<Vec<Visit>> {
        self.access
            .require(actor, Action::SearchParticipants, &pid.to_string())?;
        let org = &actor.organization_id;
        self.store.read(|t| {
            t.participant(org, pid)?;
            Ok(t.visits_of(org, pid).cloned().collect())
        })
    }

    pub fn open_visit(&self, actor: &Account, pid: ParticipantId) -> Result<Visit> {
        self.access.require(actor, Action::OpenVisit, &pid.to_string())?;
        let org = actor.organization_id.clone();
        let now = self.now();
        let version = self.schema.version.clone();
        let visit = self.store.write(|t| {
            t.participant(&org, pid)?;
            let vid = next_visit_id(pid, t.visits_of(&org, pid).count())?;
            let visit = Visit {
                visit_id: vid,
                participant_id: pid,
                organization_id: org.clone(),
                answers: AnswerSet::new(version),
                image_refs: Vec::new(),
                state: VisitState::Surveyed,
                opened_at: now,
                survey_taken_at: None,
                graded_at: None,
                requires_reissue: false,
                version: 1,
                history: Vec::new(),
            };
            t.visits.insert((org.clone(), vid), visit.clone());
            Ok(visit)
        })?;
        self.record_change(actor, Action::OpenVisit, &visit.visit_id.to_string(), None);
        Ok(visit)
    }

    /// Saves the survey. The answers must satisfy the questionnaire exactly:
    /// every shown required question answered, nothing hidden answered.
    /// Saving identical answers changes nothing.
    pub fn edit_survey(&self, actor: &Account, vid: VisitId, update: SurveyUpdate) -> Result<Visit> {
        self.access.require(actor, Action::EditSurvey, &vid.to_string())?;
        let mut answers = update.answers;
        if answers.schema_version.is_empty() {
            answers.schema_version = self.schema.version.clone();
        }
        if answers.schema_version != self.schema.version {
            return Err(Error::validation(
                "answers.schema_version",
                format!("expected `{}`", self.schema.version),
            ));
        }
        survey::validate(&self.schema, &answers).into_result()?;
        let org = actor.organization_id.clone();
        let now = self.now();
        let (prior, visit) = self.store.write(|t| {
            let visit = t.visit_mut(&org, vid)?;
            require_state(visit, &[VisitState::Surveyed, VisitState::Imaged], "edit the survey")?;
            if update.version != visit.version {
                return Err(Error::Conflict {
                    entity: vid.to_string(),
                    expected: update.version,
                    found: visit.version,
                });
            }
            if visit.survey_taken_at.is_some() && visit.answers == answers {
                return Ok((None, visit.clone()));
            }
            let prior = std::mem::replace(&mut visit.answers, answers);
            visit.survey_taken_at.get_or_insert(now);
            visit.version += 1;
            Ok((Some(prior), visit.clone()))
        })?;
        if let Some(prior) = prior {
            self.record_change(actor, Action::EditSurvey, &vid.to_string(), to_json(&prior));
        }
        Ok(visit)
    }

    pub fn attach_image(&self, actor: &Account, vid: VisitId, eye: Eye, bytes: &[u8]) -> Result<ImageRef> {
        self.access.require(actor, Action::AttachImage, &vid.to_string())?;
        if bytes.is_empty() {
            return Err(Error::validation("image", "empty upload"));
        }
        let org = actor.organization_id.clone();
        let now = self.now();
        let image = self.store.write(|t| {
            let visit = t.visit_mut(&org, vid)?;
            require_state(visit, &[VisitState::Surveyed, VisitState::Imaged], "attach images")?;
            let index = visit.image_refs.iter().filter(|i| i.eye == eye).count() as u32 + 1;
            let key = StorageKey::new(vid, eye, index);
            self.objects.put(&org, &key, bytes)?;
            let image = ImageRef {
                eye,
                storage_key: key.to_string(),
                captured_at: now,
            };
            visit.image_refs.push(image.clone());
            visit.version += 1;
            Ok(image)
        })?;
        self.record_change(actor, Action::AttachImage, &image.storage_key, None);
        Ok(image)
    }

    pub fn fetch_image(&self, actor: &Account, key: &str, hint: Option<&OrganizationId>) -> Result<Vec<u8>> {
        self.access.require(actor, Action::FetchImage, key)?;
        let key = StorageKey::parse(key)?;
        let org = self.locate(actor, key.visit_id(), hint)?;
        self.store.read(|t| {
            let visit = t.visit(&org, key.visit_id())?;
            if visit.image_refs.iter().any(|i| i.storage_key == key.as_str()) {
                Ok(())
            } else {
                Err(Error::NotFound(format!("image {key}")))
            }
        })?;
        self.objects.get(&org, &key)
    }

    /// Moves a visit along one lifecycle edge. The edge must exist, the
    /// caller's role must own it, and its precondition must hold.
    pub fn transition_visit(
        &self,
        actor: &Account,
        vid: VisitId,
        target: VisitState,
        hint: Option<&OrganizationId>,
    ) -> Result<Visit> {
        let org = self.locate(actor, vid, hint)?;
        let current = self.store.read(|t| t.visit(&org, vid).map(|v| v.state))?;
        if !current.can_transition_to(target) {
            return Err(Error::IllegalTransition {
                from: current.to_string(),
                to: target.to_string(),
            });
        }
        let action = match target {
            VisitState::Imaged => Action::TransitionToImaged,
            VisitState::Graded => Action::TransitionToGraded,
            VisitState::Notified => Action::TransitionToNotified,
            VisitState::Closed => Action::TransitionToClosed,
            VisitState::Surveyed => unreachable!("no edge leads back to surveyed"),
        };
        self.access.require(actor, action, &vid.to_string())?;
        let now = self.now();
        self.store.write(|t| {
            let key = (org.clone(), vid);
            let has_grading = t.latest_grading(&key).is_some();
            let sent = t.dispatches.get(&key).is_some_and(|d| d.last().is_some_and(|d| d.sent));
            let visit = t.visit_mut(&org, vid)?;
            let precondition = match target {
                VisitState::Imaged if visit.survey_taken_at.is_none() => Some("the survey has not been saved"),
                VisitState::Imaged if visit.image_refs.is_empty() => Some("no image is attached"),
                VisitState::Graded if !has_grading => Some("grades are recorded through the grading endpoints"),
                VisitState::Notified if !sent => Some("no letter has been marked as sent"),
                _ => None,
            };
            if let Some(reason) = precondition {
                return Err(Error::IllegalState(format!("cannot move {vid} to {target}: {reason}")));
            }
            visit.transition(target, &actor.account_id, now)?;
            Ok(visit.clone())
        })
    }

    // Grader portal.

    fn views(&self, actor: &Account, filter: impl Fn(&Visit) -> bool, with_grading: bool) -> Vec<GraderView> {
        self.store.read(|t| {
            let mut visits: Vec<&Visit> = t
                .visits
                .values()
                .filter(|v| actor.serves(&v.organization_id) && filter(v))
                .collect();
            visits.sort_by(|a, b| {
                (a.screened_at(), &a.organization_id, a.visit_id).cmp(&(
                    b.screened_at(),
                    &b.organization_id,
                    b.visit_id,
                ))
            });
            visits.into_iter().map(|v| grader_view(t, v, with_grading)).collect()
        })
    }

    /// Imaged visits of the grader's organizations, oldest first.
    pub fn grading_queue(&self, actor: &Account, page: Page) -> Result<Vec<GraderView>> {
        self.access.require(actor, Action::GradingQueue, "queue")?;
        page.validate()?;
        Ok(page.apply(self.views(actor, |v| v.state == VisitState::Imaged, false)))
    }

    pub fn graded_list(&self, actor: &Account, page: Page) -> Result<Vec<GraderView>> {
        self.access.require(actor, Action::ListGraded, "graded")?;
        page.validate()?;
        Ok(page.apply(self.views(actor, |v| v.state >= VisitState::Graded, true)))
    }

    pub fn grading_detail(
        &self,
        actor: &Account,
        vid: VisitId,
        hint: Option<&OrganizationId>,
    ) -> Result<GradingDetail> {
        self.access.require(actor, Action::ListGraded, &vid.to_string())?;
        let org = self.locate(actor, vid, hint)?;
        self.store.read(|t| {
            let visit = t.visit(&org, vid)?;
            Ok(GradingDetail {
                view: grader_view(t, visit, true),
                revisions: t.gradings.get(&(org.clone(), vid)).cloned().unwrap_or_default(),
            })
        })
    }

    /// Grades an imaged visit. Exactly one of several concurrent submissions
    /// wins; the others see the visit already graded.
    pub fn submit_grading(
        &self,
        actor: &Account,
        vid: VisitId,
        hint: Option<&OrganizationId>,
        submission: GradingSubmission,
    ) -> Result<GradingRecord> {
        self.access.require(actor, Action::SubmitGrading, &vid.to_string())?;
        submission.validate()?;
        let org = self.locate(actor, vid, hint)?;
        let now = self.now();
        self.store.write(|t| {
            let visit = t.visit_mut(&org, vid)?;
            require_state(visit, &[VisitState::Imaged], "grade")?;
            let record = GradingRecord::from_submission(vid, submission, &actor.account_id, now, 1)?;
            visit.transition(VisitState::Graded, &actor.account_id, now)?;
            visit.graded_at = Some(now);
            t.gradings.insert((org.clone(), vid), vec![record.clone()]);
            Ok(record)
        })
    }

    /// Appends a new grading revision. If a letter already went out the visit
    /// is flagged for a new letter.
    pub fn edit_grading(
        &self,
        actor: &Account,
        vid: VisitId,
        hint: Option<&OrganizationId>,
        edit: GradingEdit,
    ) -> Result<GradingRecord> {
        self.access.require(actor, Action::EditGrading, &vid.to_string())?;
        let submission = edit.submission();
        submission.validate()?;
        let org = self.locate(actor, vid, hint)?;
        let now = self.now();
        let (prior, record) = self.store.write(|t| {
            let key: VisitKey = (org.clone(), vid);
            let visit = t.visit(&org, vid)?;
            if visit.state < VisitState::Graded {
                return Err(Error::IllegalState(format!("visit {vid} has not been graded yet")));
            }
            let latest = t
                .latest_grading(&key)
                .ok_or_else(|| Error::IllegalState(format!("visit {vid} has no grading")))?
                .clone();
            if edit.revision != latest.revision {
                return Err(Error::Conflict {
                    entity: vid.to_string(),
                    expected: u64::from(edit.revision),
                    found: u64::from(latest.revision),
                });
            }
            let record = GradingRecord::from_submission(vid, submission, &actor.account_id, now, latest.revision + 1)?;
            let dispatched = t.dispatches.get(&key).is_some_and(|d| !d.is_empty());
            let visit = t.visit_mut(&org, vid)?;
            if visit.state == VisitState::Graded {
                visit.transition(VisitState::Graded, &actor.account_id, now)?;
            } else {
                visit.version += 1;
            }
            visit.graded_at = Some(now);
            if dispatched {
                visit.requires_reissue = true;
            }
            t.gradings.entry(key).or_default().push(record.clone());
            Ok((latest, record))
        })?;
        self.record_change(actor, Action::EditGrading, &vid.to_string(), to_json(&prior));
        Ok(record)
    }

    // Report distribution portal.

    /// Graded visits without a sent letter, plus notified visits whose
    /// grading changed after their letter went out.
    pub fn pending_reports(&self, actor: &Account, page: Page) -> Result<Vec<PendingReport>> {
        self.access.require(actor, Action::ViewPendingReports, "pending")?;
        page.validate()?;
        let org = &actor.organization_id;
        Ok(self.store.read(|t| {
            let mut reports: Vec<PendingReport> = t
                .visits
                .iter()
                .filter(|((o, _), v)| {
                    o == org
                        && (v.state == VisitState::Graded || (v.state >= VisitState::Notified && v.requires_reissue))
                })
                .filter_map(|(key, v)| {
                    let grading = t.latest_grading(key)?.clone();
                    let participant = t.participant(org, v.participant_id).ok()?.clone();
                    let overall = grading.overall_grade();
                    Some(PendingReport {
                        visit_id: v.visit_id,
                        state: v.state,
                        template_key: reporting::select_letter(overall, participant.language),
                        overall_grade: overall,
                        participant,
                        grading,
                        active_dispatch: t.dispatches.get(key).and_then(|d| d.last()).cloned(),
                        requires_reissue: v.requires_reissue,
                    })
                })
                .collect();
            reports.sort_by_key(|r| (r.grading.graded_at, r.visit_id));
            page.apply(reports)
        }))
    }

    /// Fills the letter for a graded visit and records an unsent dispatch.
    /// An earlier unsent dispatch is replaced, so at most one is pending.
    pub fn render_letter(&self, actor: &Account, vid: VisitId) -> Result<RenderedLetter> {
        self.access.require(actor, Action::RenderLetter, &vid.to_string())?;
        let org = actor.organization_id.clone();
        let now = self.now();
        self.store.write(|t| {
            let key: VisitKey = (org.clone(), vid);
            let visit = t.visit(&org, vid)?;
            if visit.state < VisitState::Graded {
                return Err(Error::IllegalState(format!("visit {vid} has not been graded yet")));
            }
            let grading = t
                .latest_grading(&key)
                .ok_or_else(|| Error::IllegalState(format!("visit {vid} has no grading")))?;
            let participant = t.participant(&org, visit.participant_id)?;
            let letter = reporting::render_letter(&self.templates, participant, grading)?;
            let dispatch = LetterDispatch {
                visit_id: vid,
                template_key: letter.template_key.clone(),
                rendered_at: now,
                sent: false,
                sent_marked_at: None,
            };
            let log = t.dispatches.entry(key).or_default();
            match log.last_mut() {
                Some(active) if !active.sent => *active = dispatch.clone(),
                _ => log.push(dispatch.clone()),
            }
            Ok(RenderedLetter { letter, dispatch })
        })
    }

    pub fn dispatches(&self, actor: &Account, vid: VisitId) -> Result<Vec<LetterDispatch>> {
        self.access
            .require(actor, Action::ViewPendingReports, &vid.to_string())?;
        let org = &actor.organization_id;
        self.store.read(|t| {
            t.visit(org, vid)?;
            Ok(t.dispatches.get(&(org.clone(), vid)).cloned().unwrap_or_default())
        })
    }

    /// Records that the pending letter was sent; a graded visit becomes
    /// notified.
    pub fn mark_sent(&self, actor: &Account, vid: VisitId) -> Result<LetterDispatch> {
        self.access.require(actor, Action::MarkSent, &vid.to_string())?;
        let org = actor.organization_id.clone();
        let now = self.now();
        self.store.write(|t| {
            let key: VisitKey = (org.clone(), vid);
            t.visit(&org, vid)?;
            let pending = t.dispatches.get(&key).and_then(|d| d.last()).is_some_and(|d| !d.sent);
            if !pending {
                return Err(Error::NoActiveDispatch(vid.to_string()));
            }
            let visit = t.visit_mut(&org, vid)?;
            if visit.state == VisitState::Graded {
                visit.transition(VisitState::Notified, &actor.account_id, now)?;
            } else {
                visit.version += 1;
            }
            visit.requires_reissue = false;
            let active = t
                .dispatches
                .get_mut(&key)
                .and_then(|d| d.last_mut())
                .expect("checked above");
            active.sent = true;
            active.sent_marked_at = Some(now);
            Ok(active.clone())
        })
    }

    pub fn add_followup(&self, actor: &Account, vid: VisitId, input: NewFollowUp) -> Result<FollowUp> {
        self.access.require(actor, Action::AddFollowUp, &vid.to_string())?;
        input.validate()?;
        let org = actor.organization_id.clone();
        let now = self.now();
        self.store.write(|t| {
            let visit = t.visit(&org, vid)?;
            if visit.state < VisitState::Notified {
                return Err(Error::IllegalState(format!(
                    "visit {vid} is {}; follow-ups start once the letter is sent",
                    visit.state
                )));
            }
            let followup = FollowUp {
                visit_id: vid,
                channel: input.channel,
                comment: input.comment,
                created_at: now,
                staff_id: actor.account_id.clone(),
            };
            t.followups
                .entry((org.clone(), vid))
                .or_default()
                .push(followup.clone());
            Ok(followup)
        })
    }

    /// Follow-ups of one visit, in the order they were logged.
    pub fn list_followups(&self, actor: &Account, vid: VisitId, page: Page) -> Result<Vec<FollowUp>> {
        self.access.require(actor, Action::ListFollowUps, &vid.to_string())?;
        page.validate()?;
        let org = &actor.organization_id;
        self.store.read(|t| {
            t.visit(org, vid)?;
            Ok(page.apply(t.followups.get(&(org.clone(), vid)).into_iter().flatten().cloned()))
        })
    }

    /// Follow-ups logged by the calling staff member, oldest first.
    pub fn my_followups(&self, actor: &Account, page: Page) -> Result<Vec<FollowUp>> {
        self.access.require(actor, Action::ListFollowUps, "followups")?;
        page.validate()?;
        let org = &actor.organization_id;
        Ok(self.store.read(|t| {
            let mut mine: Vec<FollowUp> = t
                .followups
                .iter()
                .filter(|((o, _), _)| o == org)
                .flat_map(|(_, f)| f.iter())
                .filter(|f| f.staff_id == actor.account_id)
                .cloned()
                .collect();
            mine.sort_by_key(|f| f.created_at);
            page.apply(mine)
        }))
    }

    // Data management portal.

    pub fn export_csv(&self, actor: &Account, org: Option<&OrganizationId>) -> Result<String> {
        self.access
            .require(actor, Action::Export, org.map_or("all", |o| o.as_str()))?;
        Ok(self.export_unchecked(org))
    }

    /// Export without an actor, for local maintenance commands.
    pub fn export_unchecked(&self, org: Option<&OrganizationId>) -> String {
        self.store.read(|t| write_csv(&export_rows(t, org)))
    }

    /// Loads an export document into `org`. Not reachable over the network.
    pub fn import_csv(&self, org: &OrganizationId, text: &str) -> Result<usize> {
        let rows = parse_csv(text)?;
        let version = self.schema.version.clone();
        self.store.write(|t| import_rows(t, &rows, org, &version))
    }
}

fn grader_view(t: &Tables, visit: &Visit, with_grading: bool) -> GraderView {
    let participant = t
        .participant(&visit.organization_id, visit.participant_id)
        .expect("referential integrity is enforced on write");
    let grading = with_grading
        .then(|| {
            t.latest_grading(&(visit.organization_id.clone(), visit.visit_id))
                .cloned()
        })
        .flatten();
    redact_for_grader(participant, visit, grading)
}
