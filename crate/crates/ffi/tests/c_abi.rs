use std::ffi::{c_char, CStr, CString};
use std::ptr;

use mtocs_ffi::*;
use serde_json::{json, Value};

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_code() -> String {
    let p = mtocs_last_error_code();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

/// Takes ownership of a library string.
fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { mtocs_string_free(p) };
    s
}

fn buffer_call(f: impl Fn(*mut c_char, usize) -> MtocsStatus) -> Result<String, MtocsStatus> {
    let mut buf = [0 as c_char; 64];
    match f(buf.as_mut_ptr(), buf.len()) {
        MtocsStatus::Ok => Ok(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string()),
        other => Err(other),
    }
}

#[test]
fn participant_ids_follow_the_scheme() {
    assert_eq!(
        buffer_call(|o, l| unsafe { mtocs_next_participant_id(ptr::null(), o, l) }).unwrap(),
        "AAA001"
    );
    let next = |id: &str| buffer_call(|o, l| unsafe { mtocs_next_participant_id(c(id).as_ptr(), o, l) });
    assert_eq!(next("AAA001").unwrap(), "AAA002");
    assert_eq!(next("AAA999").unwrap(), "AAB000");
    assert_eq!(next("ZZZ999"), Err(MtocsStatus::Exhausted));
    assert_eq!(last_code(), "id_exhausted");
    assert_eq!(next("AA1"), Err(MtocsStatus::Validation));
}

#[test]
fn small_buffers_and_nulls_are_reported() {
    let mut tiny = [0 as c_char; 6];
    let status = unsafe { mtocs_next_participant_id(ptr::null(), tiny.as_mut_ptr(), tiny.len()) };
    assert_eq!(status, MtocsStatus::BufferTooSmall);
    assert_eq!(last_code(), "buffer_too_small");
    let status = unsafe { mtocs_visit_id(ptr::null(), 1, tiny.as_mut_ptr(), tiny.len()) };
    assert_eq!(status, MtocsStatus::NullArgument);
    assert_eq!(unsafe { mtocs_pct(1, 2, ptr::null_mut()) }, MtocsStatus::NullArgument);
    // Success clears the previous error.
    let mut out = 0.0;
    assert_eq!(unsafe { mtocs_pct(1, 2, &mut out) }, MtocsStatus::Ok);
    assert!(mtocs_last_error_code().is_null());
}

#[test]
fn visit_ids_and_letters() {
    let vid = |seq| buffer_call(|o, l| unsafe { mtocs_visit_id(c("AAA001").as_ptr(), seq, o, l) });
    assert_eq!(vid(1).unwrap(), "AAA001001");
    assert_eq!(vid(2).unwrap(), "AAA001002");
    assert_eq!(vid(0), Err(MtocsStatus::Validation));

    let letter =
        |g: &str, lang: &str| buffer_call(|o, l| unsafe { mtocs_select_letter(c(g).as_ptr(), c(lang).as_ptr(), o, l) });
    assert_eq!(letter("moderate-npdr", "spanish").unwrap(), "letter-moderate-npdr-es");
    assert_eq!(letter("ungradable", "other").unwrap(), "letter-ungradable-en");
    assert_eq!(letter("worse", "english"), Err(MtocsStatus::Validation));
}

#[test]
fn statistics() {
    let mut out = 0.0;
    assert_eq!(unsafe { mtocs_pct(378, 400, &mut out) }, MtocsStatus::Ok);
    assert_eq!(out, 94.5);
    assert_eq!(unsafe { mtocs_pct(1, 0, &mut out) }, MtocsStatus::Analytics);
    assert_eq!(last_code(), "division_by_zero");

    let values = [5u8, 5, 4, 3];
    let mut s = MtocsLikert::default();
    assert_eq!(
        unsafe { mtocs_likert_summary(values.as_ptr(), values.len(), &mut s) },
        MtocsStatus::Ok
    );
    assert_eq!((s.count, s.mean, s.sd), (4, 4.25, 0.96));
    let bad = [6u8];
    assert_eq!(
        unsafe { mtocs_likert_summary(bad.as_ptr(), 1, &mut s) },
        MtocsStatus::Validation
    );
    assert_eq!(
        unsafe { mtocs_likert_summary(ptr::null(), 0, &mut s) },
        MtocsStatus::Analytics
    );
}

#[test]
fn schema_branching() {
    let schema = mtocs_schema_builtin();
    let visible = |answers: Value| {
        let mut out = ptr::null_mut();
        let a = c(&answers.to_string());
        assert_eq!(
            unsafe { mtocs_schema_visible_questions(schema, a.as_ptr(), &mut out) },
            MtocsStatus::Ok
        );
        serde_json::from_str::<Vec<String>>(&take(out)).unwrap()
    };
    let yes = visible(json!({"answers": {"has_diabetes": true}}));
    let no = visible(json!({"answers": {"has_diabetes": false}}));
    assert!(yes.contains(&"diabetes_type".to_string()) && yes.contains(&"diabetes_duration".to_string()));
    assert!(!no.contains(&"diabetes_type".to_string()) && !no.contains(&"diabetes_duration".to_string()));

    let mut out = ptr::null_mut();
    let hidden = c(r#"{"answers": {"has_diabetes": false, "diabetes_type": "type_1"}}"#);
    assert_eq!(
        unsafe { mtocs_schema_validate(schema, hidden.as_ptr(), &mut out) },
        MtocsStatus::Ok
    );
    let report: Value = serde_json::from_str(&take(out)).unwrap();
    let violations = report["violations"].as_array().unwrap();
    assert!(violations.iter().any(|v| v["question"] == "diabetes_type"));

    let broken = c("{not json");
    assert_eq!(
        unsafe { mtocs_schema_validate(schema, broken.as_ptr(), &mut out) },
        MtocsStatus::InvalidJson
    );
    unsafe { mtocs_schema_free(schema) };

    let mut parsed = ptr::null_mut();
    let bad_schema = c(r#"{"version": "x", "strings": {}, "questions": []}"#);
    assert_eq!(
        unsafe { mtocs_schema_from_json(bad_schema.as_ptr(), &mut parsed) },
        MtocsStatus::Validation
    );
    assert!(parsed.is_null());
}

struct Svc(*mut MtocsService);

impl Drop for Svc {
    fn drop(&mut self) {
        unsafe { mtocs_service_free(self.0) };
    }
}

impl Svc {
    fn add(&self, id: &str, role: &str) -> String {
        let account = json!({
            "account_id": id, "username": id, "password": "pw", "role": role, "organization_id": "ucc"
        });
        assert_eq!(
            unsafe { mtocs_service_add_account(self.0, c(&account.to_string()).as_ptr()) },
            MtocsStatus::Ok
        );
        let mut token = ptr::null_mut();
        assert_eq!(
            unsafe { mtocs_service_login(self.0, c(id).as_ptr(), c("pw").as_ptr(), &mut token) },
            MtocsStatus::Ok
        );
        take(token)
    }

    fn call(&self, token: &str, op: &str, request: Value) -> Result<Value, (MtocsStatus, String)> {
        let mut out = ptr::null_mut();
        let req = c(&request.to_string());
        match unsafe { mtocs_service_call(self.0, c(token).as_ptr(), c(op).as_ptr(), req.as_ptr(), &mut out) } {
            MtocsStatus::Ok => Ok(serde_json::from_str(&take(out)).unwrap()),
            status => Err((status, last_code())),
        }
    }
}

#[test]
fn service_workflow() {
    let svc = Svc(mtocs_service_new_in_memory());
    let screener = svc.add("scr", "screener");
    let grader = svc.add("grd", "grader");
    let staff = svc.add("stf", "staff");

    let mut none = ptr::null_mut();
    let wrong = unsafe { mtocs_service_login(svc.0, c("scr").as_ptr(), c("nope").as_ptr(), &mut none) };
    assert_eq!(wrong, MtocsStatus::Unauthenticated);

    let form = json!({
        "name": "Ana Garcia", "date_of_birth": "1970-05-02", "sex": "female", "ethnicity": "hispanic_latino",
        "language": "spanish", "insurance": "none", "city": "Milwaukee", "state": "WI", "zipcode": "53204",
        "country": "USA", "primary_phone": "414-555-0101"
    });
    let p = svc
        .call(&screener, "register_participant", json!({"body": form}))
        .unwrap();
    assert_eq!(p["participant_id"], "AAA001");
    let v = svc
        .call(&screener, "open_visit", json!({"participant_id": "AAA001"}))
        .unwrap();
    assert_eq!(v["visit_id"], "AAA001001");

    // Letters before grading are refused.
    assert_eq!(
        svc.call(&staff, "render_letter", json!({"visit_id": "AAA001001"}))
            .unwrap_err()
            .0,
        MtocsStatus::Conflict
    );
    assert_eq!(
        svc.call(&grader, "register_participant", json!({"body": form}))
            .unwrap_err(),
        (MtocsStatus::Unauthorized, "unauthorized".to_string())
    );

    let answers = json!({"schema_version": "screening-v1", "answers": {
        "eye_problems": ["none"], "eye_surgery": false, "has_diabetes": true, "diabetes_type": "type_2",
        "diabetes_duration": 4, "diabetes_knowledge": "a_little", "family_history_diabetes": true,
        "hypertension": false, "last_eye_exam": "never"
    }});
    svc.call(
        &screener,
        "edit_survey",
        json!({"visit_id": "AAA001001", "body": {"version": 1, "answers": answers}}),
    )
    .unwrap();

    let img = b"\xff\xd8fundus";
    let mut out = ptr::null_mut();
    let status = unsafe {
        mtocs_service_attach_image(
            svc.0,
            c(&screener).as_ptr(),
            c("AAA001001").as_ptr(),
            c("left").as_ptr(),
            img.as_ptr(),
            img.len(),
            &mut out,
        )
    };
    assert_eq!(status, MtocsStatus::Ok);
    let image: Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(image["storage_key"], "AAA001001-L-1");

    let imaged = svc.call(
        &screener,
        "transition_visit",
        json!({"visit_id": "AAA001001", "body": {"target": "imaged"}}),
    );
    assert_eq!(imaged.unwrap()["state"], "imaged");

    let queue = svc.call(&grader, "grading_queue", json!({})).unwrap();
    assert_eq!(queue.as_array().unwrap().len(), 1);
    assert!(!queue.to_string().contains("Garcia"));

    let grading = json!({"left": {"grade": "moderate-npdr"}, "right": {"grade": "no-apparent-dr"}});
    svc.call(
        &grader,
        "submit_grading",
        json!({"visit_id": "AAA001001", "body": grading}),
    )
    .unwrap();
    let rendered = svc
        .call(&staff, "render_letter", json!({"visit_id": "AAA001001"}))
        .unwrap();
    assert_eq!(rendered["letter"]["template_key"], "letter-moderate-npdr-es");
    let sent = svc.call(&staff, "mark_sent", json!({"visit_id": "AAA001001"})).unwrap();
    assert_eq!(sent["sent"], true);
    let p = svc.call(&staff, "list_visits", json!({"participant_id": "AAA001"}));
    assert_eq!(p.unwrap_err().0, MtocsStatus::Unauthorized);
    svc.call(
        &staff,
        "add_followup",
        json!({"visit_id": "AAA001001", "body": {"channel": "phone_call"}}),
    )
    .unwrap();
    let followups = svc
        .call(&staff, "list_followups", json!({"visit_id": "AAA001001"}))
        .unwrap();
    assert_eq!(followups.as_array().unwrap().len(), 1);

    assert_eq!(
        svc.call("bogus", "grading_queue", json!({})).unwrap_err().0,
        MtocsStatus::Unauthenticated
    );
    assert_eq!(
        svc.call(&staff, "launch", json!({})).unwrap_err().0,
        MtocsStatus::Validation
    );
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/mtocs.h");
    for name in [
        "mtocs_last_error_code",
        "mtocs_last_error_message",
        "mtocs_string_free",
        "mtocs_next_participant_id",
        "mtocs_visit_id",
        "mtocs_select_letter",
        "mtocs_pct",
        "mtocs_likert_summary",
        "mtocs_schema_builtin",
        "mtocs_schema_from_json",
        "mtocs_schema_visible_questions",
        "mtocs_schema_validate",
        "mtocs_schema_free",
        "mtocs_service_new_in_memory",
        "mtocs_service_add_account",
        "mtocs_service_login",
        "mtocs_service_call",
        "mtocs_service_attach_image",
        "mtocs_service_free",
        "typedef struct MtocsService MtocsService",
        "MTOCS_STATUS_PANIC = 14",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
