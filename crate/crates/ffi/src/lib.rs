//! C ABI over the screening workflow core.
//!
//! Every function returns an [`MtocsStatus`]. On failure the core error code
//! and message of the calling thread can be read with
//! [`mtocs_last_error_code`] and [`mtocs_last_error_message`]. Strings
//! returned through `char **` out-parameters are owned by the caller and
//! released with [`mtocs_string_free`]; handles are released with their
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mtocs_core::access::{hash_password, Account};
use mtocs_core::analytics;
use mtocs_core::domain::{Eye, Language, NewParticipant, OrganizationId, VisitState};
use mtocs_core::grading::{DrGrade, GradingEdit, GradingSubmission};
use mtocs_core::ids::{allocate_after, ParticipantId, VisitId};
use mtocs_core::reporting::{self, NewFollowUp};
use mtocs_core::service::{Page, ScreeningService, SurveyUpdate};
use mtocs_core::survey::{self, AnswerSet, QuestionnaireSchema};
use mtocs_core::Error;
use serde::Deserialize;
use serde_json::Value;

/// Outcome of a call. Values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtocsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    InvalidJson = 4,
    Validation = 5,
    NotFound = 6,
    Conflict = 7,
    Unauthenticated = 8,
    Unauthorized = 9,
    Exhausted = 10,
    Analytics = 11,
    Backend = 12,
    Internal = 13,
    Panic = 14,
}

/// Opaque questionnaire handle.
pub struct MtocsSchema(QuestionnaireSchema);

/// Opaque in-memory service handle.
pub struct MtocsService(ScreeningService);

/// Rounded Likert summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MtocsLikert {
    pub count: u64,
    pub mean: f64,
    pub sd: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<(CString, CString)>> = const { RefCell::new(None) };
}

fn status_of(error: &Error) -> MtocsStatus {
    use MtocsStatus::*;
    match error {
        Error::Validation { .. }
        | Error::Schema(_)
        | Error::Format { .. }
        | Error::KeyPolicyViolation(_)
        | Error::UnsupportedLocale(_) => Validation,
        Error::UnknownParticipant(_) | Error::UnknownVisit(_) | Error::UnknownEntity { .. } | Error::NotFound(_) => {
            NotFound
        }
        Error::IllegalTransition { .. }
        | Error::IllegalState(_)
        | Error::Conflict { .. }
        | Error::NoActiveDispatch(_) => Conflict,
        Error::Unauthenticated => Unauthenticated,
        Error::Unauthorized(_) => Unauthorized,
        Error::IdExhausted | Error::VisitSequenceExhausted(_) => Exhausted,
        Error::InfeasibleTargets(_) | Error::EmptyInput(_) | Error::DivisionByZero | Error::JoinFailure(_) => Analytics,
        Error::BackendUnavailable(_) | Error::Io(_) => Backend,
        Error::MissingTemplate(_) | Error::Config(_) | Error::Internal(_) => Internal,
    }
}

fn set_error(code: &str, message: &str) {
    let clean = |s: &str| CString::new(s.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some((clean(code), clean(message))));
}

/// Failure carried out of a call body.
enum Fail {
    Status(MtocsStatus, &'static str, String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> MtocsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MtocsStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.code(), &e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(status, code, message))) => {
            set_error(code, &message);
            status
        }
        Err(_) => {
            set_error("panic", "internal panic");
            MtocsStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Status(
            MtocsStatus::NullArgument,
            "null_argument",
            format!("`{name}` is null"),
        ));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Fail::Status(
            MtocsStatus::InvalidUtf8,
            "invalid_utf8",
            format!("`{name}` is not UTF-8"),
        )
    })
}

fn json<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T, Fail> {
    serde_json::from_str(s).map_err(|e| Fail::Status(MtocsStatus::InvalidJson, "invalid_json", e.to_string()))
}

/// # Safety
/// `out` is null or points to `len` writable bytes.
unsafe fn write_buffer(value: &str, out: *mut c_char, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Status(
            MtocsStatus::NullArgument,
            "null_argument",
            "`out` is null".into(),
        ));
    }
    let bytes = value.as_bytes();
    if bytes.len() + 1 > len {
        return Err(Fail::Status(
            MtocsStatus::BufferTooSmall,
            "buffer_too_small",
            format!("need {} bytes", bytes.len() + 1),
        ));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), out.cast::<u8>(), bytes.len());
    *out.add(bytes.len()) = 0;
    Ok(())
}

/// # Safety
/// `out` is null or a valid place to store a pointer.
unsafe fn write_string(value: String, out: *mut *mut c_char) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Status(
            MtocsStatus::NullArgument,
            "null_argument",
            "`out` is null".into(),
        ));
    }
    let c = CString::new(value).map_err(|_| Error::Internal("output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Fail> {
    serde_json::to_string(value).map_err(|e| Error::Internal(e.to_string()).into())
}

/// Code of the last error on this thread (e.g. `id_exhausted`), or null.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mtocs_last_error_code() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |(c, _)| c.as_ptr()))
}

/// Message of the last error on this thread, or null.
#[no_mangle]
pub extern "C" fn mtocs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |(_, m)| m.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or came from this library and was not freed before.
#[no_mangle]
pub unsafe extern "C" fn mtocs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes the participant id after `current` (or the first id when
/// `current` is null) into `out`.
///
/// # Safety
/// `current` is null or a C string; `out` has `out_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mtocs_next_participant_id(
    current: *const c_char,
    out: *mut c_char,
    out_len: usize,
) -> MtocsStatus {
    guard(|| {
        let last: Option<ParticipantId> = if current.is_null() {
            None
        } else {
            Some(text(current, "current")?.parse()?)
        };
        write_buffer(&allocate_after(last)?.to_string(), out, out_len)
    })
}

/// Writes the visit id of visit number `seq` (1-999) of a participant.
///
/// # Safety
/// `participant_id` is a C string; `out` has `out_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mtocs_visit_id(
    participant_id: *const c_char,
    seq: u16,
    out: *mut c_char,
    out_len: usize,
) -> MtocsStatus {
    guard(|| {
        let pid: ParticipantId = text(participant_id, "participant_id")?.parse()?;
        write_buffer(&VisitId::new(pid, seq)?.to_string(), out, out_len)
    })
}

/// Writes the letter template key for a grade slug (`moderate-npdr`) and a
/// language token (`spanish`).
///
/// # Safety
/// Both inputs are C strings; `out` has `out_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mtocs_select_letter(
    grade: *const c_char,
    language: *const c_char,
    out: *mut c_char,
    out_len: usize,
) -> MtocsStatus {
    guard(|| {
        let grade: DrGrade = text(grade, "grade")?.parse()?;
        let language: Language = text(language, "language")?.parse()?;
        write_buffer(&reporting::select_letter(grade, language), out, out_len)
    })
}

/// `100 * part / whole`, rounded half-up to 2 decimals.
///
/// # Safety
/// `out` is a valid place to store a double.
#[no_mangle]
pub unsafe extern "C" fn mtocs_pct(part: u64, whole: u64, out: *mut f64) -> MtocsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Status(
                MtocsStatus::NullArgument,
                "null_argument",
                "`out` is null".into(),
            ));
        }
        *out = analytics::pct(part, whole)?.as_f64();
        Ok(())
    })
}

/// Count, mean and sample SD of 1-5 responses.
///
/// # Safety
/// `values` points to `len` bytes; `out` is a valid place to store the result.
#[no_mangle]
pub unsafe extern "C" fn mtocs_likert_summary(values: *const u8, len: usize, out: *mut MtocsLikert) -> MtocsStatus {
    guard(|| {
        if out.is_null() || (values.is_null() && len > 0) {
            return Err(Fail::Status(
                MtocsStatus::NullArgument,
                "null_argument",
                "null pointer".into(),
            ));
        }
        let values = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(values, len)
        };
        let s = analytics::likert_summary(values)?;
        *out = MtocsLikert {
            count: s.count,
            mean: s.mean.as_f64(),
            sd: s.sd.as_f64(),
        };
        Ok(())
    })
}

/// The shipped screening questionnaire.
#[no_mangle]
pub extern "C" fn mtocs_schema_builtin() -> *mut MtocsSchema {
    Box::into_raw(Box::new(MtocsSchema(QuestionnaireSchema::builtin())))
}

/// Parses and checks a questionnaire document.
///
/// # Safety
/// `json_text` is a C string; `out` is a valid place to store a pointer.
#[no_mangle]
pub unsafe extern "C" fn mtocs_schema_from_json(json_text: *const c_char, out: *mut *mut MtocsSchema) -> MtocsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Status(
                MtocsStatus::NullArgument,
                "null_argument",
                "`out` is null".into(),
            ));
        }
        let schema = QuestionnaireSchema::from_json(text(json_text, "json")?)?;
        *out = Box::into_raw(Box::new(MtocsSchema(schema)));
        Ok(())
    })
}

/// # Safety
/// `schema` is null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn mtocs_schema_free(schema: *mut MtocsSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

unsafe fn schema_ref<'a>(schema: *const MtocsSchema) -> Result<&'a QuestionnaireSchema, Fail> {
    schema
        .as_ref()
        .map(|s| &s.0)
        .ok_or_else(|| Fail::Status(MtocsStatus::NullArgument, "null_argument", "`schema` is null".into()))
}

/// JSON array of question ids shown for an answer set (JSON).
///
/// # Safety
/// `schema` is a live handle; `answers` a C string; `out` a valid place.
#[no_mangle]
pub unsafe extern "C" fn mtocs_schema_visible_questions(
    schema: *const MtocsSchema,
    answers: *const c_char,
    out: *mut *mut c_char,
) -> MtocsStatus {
    guard(|| {
        let schema = schema_ref(schema)?;
        let answers: AnswerSet = json(text(answers, "answers")?)?;
        write_string(to_json(&survey::visible_questions(schema, &answers)?)?, out)
    })
}

/// JSON validation report (`{"violations": [...]}`) for an answer set.
///
/// # Safety
/// `schema` is a live handle; `answers` a C string; `out` a valid place.
#[no_mangle]
pub unsafe extern "C" fn mtocs_schema_validate(
    schema: *const MtocsSchema,
    answers: *const c_char,
    out: *mut *mut c_char,
) -> MtocsStatus {
    guard(|| {
        let schema = schema_ref(schema)?;
        let answers: AnswerSet = json(text(answers, "answers")?)?;
        write_string(to_json(&survey::validate(schema, &answers))?, out)
    })
}

/// A service with in-memory storage, the shipped questionnaire and letters,
/// and no accounts.
#[no_mangle]
pub extern "C" fn mtocs_service_new_in_memory() -> *mut MtocsService {
    Box::into_raw(Box::new(MtocsService(ScreeningService::in_memory())))
}

/// # Safety
/// `service` is null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn mtocs_service_free(service: *mut MtocsService) {
    if !service.is_null() {
        drop(Box::from_raw(service));
    }
}

unsafe fn service_ref<'a>(service: *const MtocsService) -> Result<&'a ScreeningService, Fail> {
    service
        .as_ref()
        .map(|s| &s.0)
        .ok_or_else(|| Fail::Status(MtocsStatus::NullArgument, "null_argument", "`service` is null".into()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAccount {
    account_id: String,
    username: String,
    password: String,
    role: mtocs_core::access::Role,
    organization_id: OrganizationId,
    #[serde(default)]
    extra_organizations: Vec<OrganizationId>,
}

/// Adds an account from JSON
/// `{"account_id","username","password","role","organization_id"}`.
///
/// # Safety
/// `service` is a live handle; `account` a C string.
#[no_mangle]
pub unsafe extern "C" fn mtocs_service_add_account(service: *mut MtocsService, account: *const c_char) -> MtocsStatus {
    guard(|| {
        let svc = service_ref(service)?;
        let a: NewAccount = json(text(account, "account")?)?;
        svc.access().add_account(Account {
            account_id: a.account_id,
            username: a.username,
            password_hash: hash_password(&a.password)?,
            role: a.role,
            organization_id: a.organization_id,
            extra_organizations: a.extra_organizations,
        })?;
        Ok(())
    })
}

/// Logs in and returns a session token.
///
/// # Safety
/// `service` is a live handle; strings are C strings; `out_token` a valid place.
#[no_mangle]
pub unsafe extern "C" fn mtocs_service_login(
    service: *mut MtocsService,
    username: *const c_char,
    password: *const c_char,
    out_token: *mut *mut c_char,
) -> MtocsStatus {
    guard(|| {
        let svc = service_ref(service)?;
        let session = svc.login(text(username, "username")?, text(password, "password")?)?;
        write_string(session.token.as_str().to_string(), out_token)
    })
}

/// Arguments of [`mtocs_service_call`]; which fields matter depends on the
/// operation.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CallRequest {
    participant_id: Option<String>,
    visit_id: Option<String>,
    org: Option<OrganizationId>,
    #[serde(default)]
    page: Page,
    body: Option<Value>,
}

impl CallRequest {
    fn pid(&self) -> Result<ParticipantId, Fail> {
        Ok(self
            .participant_id
            .as_deref()
            .ok_or_else(|| Error::validation("participant_id", "required"))?
            .parse()?)
    }

    fn vid(&self) -> Result<VisitId, Fail> {
        Ok(self
            .visit_id
            .as_deref()
            .ok_or_else(|| Error::validation("visit_id", "required"))?
            .parse()?)
    }

    fn body<T: for<'de> Deserialize<'de>>(&self) -> Result<T, Fail> {
        let body = self.body.clone().ok_or_else(|| Error::validation("body", "required"))?;
        serde_json::from_value(body).map_err(|e| Fail::Status(MtocsStatus::InvalidJson, "invalid_json", e.to_string()))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Target {
    target: VisitState,
}

fn dispatch(svc: &ScreeningService, token: &str, op: &str, req: &CallRequest) -> Result<String, Fail> {
    let actor = svc.authenticate(token)?;
    let org = req.org.as_ref();
    match op {
        "register_participant" => to_json(&svc.register_participant(&actor, req.body::<NewParticipant>()?)?),
        "get_participant" => to_json(&svc.get_participant(&actor, req.pid()?)?),
        "list_visits" => to_json(&svc.list_visits(&actor, req.pid()?)?),
        "open_visit" => to_json(&svc.open_visit(&actor, req.pid()?)?),
        "edit_survey" => to_json(&svc.edit_survey(&actor, req.vid()?, req.body::<SurveyUpdate>()?)?),
        "transition_visit" => to_json(&svc.transition_visit(&actor, req.vid()?, req.body::<Target>()?.target, org)?),
        "grading_queue" => to_json(&svc.grading_queue(&actor, req.page)?),
        "grading_detail" => to_json(&svc.grading_detail(&actor, req.vid()?, org)?),
        "submit_grading" => to_json(&svc.submit_grading(&actor, req.vid()?, org, req.body::<GradingSubmission>()?)?),
        "edit_grading" => to_json(&svc.edit_grading(&actor, req.vid()?, org, req.body::<GradingEdit>()?)?),
        "pending_reports" => to_json(&svc.pending_reports(&actor, req.page)?),
        "render_letter" => to_json(&svc.render_letter(&actor, req.vid()?)?),
        "mark_sent" => to_json(&svc.mark_sent(&actor, req.vid()?)?),
        "add_followup" => to_json(&svc.add_followup(&actor, req.vid()?, req.body::<NewFollowUp>()?)?),
        "list_followups" => to_json(&svc.list_followups(&actor, req.vid()?, req.page)?),
        "export_csv" => to_json(&svc.export_csv(&actor, org)?),
        other => Err(Error::validation("op", format!("unknown operation `{other}`")).into()),
    }
}

/// Runs one workflow operation as the session's account. `request` is a
/// JSON object with any of `participant_id`, `visit_id`, `org`, `page` and
/// `body`; the result is written to `out` as JSON.
///
/// Operations: `register_participant`, `get_participant`, `list_visits`,
/// `open_visit`, `edit_survey`, `transition_visit`, `grading_queue`,
/// `grading_detail`, `submit_grading`, `edit_grading`, `pending_reports`,
/// `render_letter`, `mark_sent`, `add_followup`, `list_followups`,
/// `export_csv`.
///
/// # Safety
/// `service` is a live handle; strings are C strings; `request` may be
/// null; `out` is a valid place.
#[no_mangle]
pub unsafe extern "C" fn mtocs_service_call(
    service: *mut MtocsService,
    token: *const c_char,
    op: *const c_char,
    request: *const c_char,
    out: *mut *mut c_char,
) -> MtocsStatus {
    guard(|| {
        let svc = service_ref(service)?;
        let token = text(token, "token")?;
        let op = text(op, "op")?;
        let req: CallRequest = if request.is_null() {
            CallRequest::default()
        } else {
            json(text(request, "request")?)?
        };
        write_string(dispatch(svc, token, op, &req)?, out)
    })
}

/// Stores an image for one eye (`left` or `right`) of a visit and returns
/// its reference as JSON.
///
/// # Safety
/// `service` is a live handle; strings are C strings; `bytes` points to
/// `len` bytes; `out` is a valid place.
#[no_mangle]
pub unsafe extern "C" fn mtocs_service_attach_image(
    service: *mut MtocsService,
    token: *const c_char,
    visit_id: *const c_char,
    eye: *const c_char,
    bytes: *const u8,
    len: usize,
    out: *mut *mut c_char,
) -> MtocsStatus {
    guard(|| {
        let svc = service_ref(service)?;
        let actor = svc.authenticate(text(token, "token")?)?;
        let vid: VisitId = text(visit_id, "visit_id")?.parse()?;
        let eye: Eye = text(eye, "eye")?.parse()?;
        if bytes.is_null() && len > 0 {
            return Err(Fail::Status(
                MtocsStatus::NullArgument,
                "null_argument",
                "`bytes` is null".into(),
            ));
        }
        let data = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(bytes, len)
        };
        write_string(to_json(&svc.attach_image(&actor, vid, eye, data)?)?, out)
    })
}
