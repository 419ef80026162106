#![allow(dead_code)]

use std::sync::Arc;

use chrono::NaiveDate;
use mtocs_core::access::{hash_password, Account, Role};
use mtocs_core::api;
use mtocs_core::domain::{Ethnicity, Insurance, Language, NewParticipant, OrganizationId, Sex};
use mtocs_core::service::ScreeningService;
use mtocs_core::survey::{AnswerSet, AnswerValue};
use tokio::sync::oneshot;

pub const PASSWORD: &str = "correct horse";

pub fn org(id: &str) -> OrganizationId {
    OrganizationId::new(id).unwrap()
}

/// An account that is not registered with any service; enough for direct
/// service calls, which take the acting account as an argument.
pub fn account(id: &str, role: Role, organization: &str) -> Account {
    Account {
        account_id: id.to_string(),
        username: id.to_string(),
        password_hash: String::new(),
        role,
        organization_id: org(organization),
        extra_organizations: Vec::new(),
    }
}

/// One login per role, all in organization `ucc`.
pub fn service_with_accounts() -> ScreeningService {
    let svc = ScreeningService::in_memory();
    let hash = hash_password(PASSWORD).unwrap();
    for role in Role::ALL {
        let mut a = account(role.as_str(), role, "ucc");
        a.password_hash = hash.clone();
        svc.access().add_account(a).unwrap();
    }
    svc
}

pub fn form(name: &str, language: Language) -> NewParticipant {
    NewParticipant {
        name: name.to_string(),
        first_name: None,
        last_name: None,
        date_of_birth: NaiveDate::from_ymd_opt(1964, 3, 9).unwrap(),
        sex: Sex::Female,
        ethnicity: Ethnicity::HispanicLatino,
        language,
        insurance: Insurance::Medicaid,
        city: "Milwaukee".into(),
        state: "WI".into(),
        zipcode: "53204".into(),
        country: "Mexico".into(),
        primary_phone: "414-555-0199".into(),
        secondary_phone: None,
        email: None,
    }
}

pub fn answers(has_diabetes: bool) -> AnswerSet {
    let mut set = AnswerSet::new("screening-v1")
        .with("eye_problems", AnswerValue::List(vec!["floaters".into()]))
        .with("eye_surgery", AnswerValue::Bool(false))
        .with("has_diabetes", AnswerValue::Bool(has_diabetes))
        .with("diabetes_knowledge", AnswerValue::Text("a_little".into()))
        .with("family_history_diabetes", AnswerValue::Bool(true))
        .with("hypertension", AnswerValue::Bool(true))
        .with("last_eye_exam", AnswerValue::Text("over_two_years".into()));
    if has_diabetes {
        set = set
            .with("diabetes_type", AnswerValue::Text("type_2".into()))
            .with("diabetes_duration", AnswerValue::Number(7.0));
    }
    set
}

/// A plain-HTTP server on an ephemeral port. Dropping it shuts the server
/// down.
pub struct TestServer {
    pub base: String,
    stop: Option<oneshot::Sender<()>>,
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
    }
}

pub async fn start_plaintext(svc: ScreeningService) -> TestServer {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = oneshot::channel::<()>();
    let app = api::router(Arc::new(svc));
    tokio::spawn(api::run(listener, app, None, async {
        let _ = stopped.await;
    }));
    TestServer {
        base: format!("http://{addr}"),
        stop: Some(stop),
    }
}
