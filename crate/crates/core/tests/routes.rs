//! Every route, called by every role, against the permission matrix.

mod common;

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use mtocs_core::access::{permits, Decision, Role};
use mtocs_core::api::{router, ROUTES};
use mtocs_core::service::ScreeningService;
use serde_json::Value;
use tower::ServiceExt;

fn concrete(path: &str) -> String {
    path.replace("{pid}", "AAA001")
        .replace("{vid}", "AAA001001")
        .replace("{key}", "AAA001001-L-1")
}

struct Reply {
    status: StatusCode,
    content_type: String,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|_| {
            panic!(
                "{} body is not JSON: {}",
                self.status,
                String::from_utf8_lossy(&self.body)
            )
        })
    }
}

async fn send(app: &Router, method: &str, path: &str, token: Option<&str>) -> Reply {
    let mut req = Request::builder()
        .method(Method::from_bytes(method.as_bytes()).unwrap())
        .uri(path);
    if let Some(token) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {token}"));
    }
    let req = req
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{}"))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let content_type = res
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let body = to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

fn setup() -> (Arc<ScreeningService>, Router, HashMap<Role, String>) {
    let svc = Arc::new(common::service_with_accounts());
    let tokens = Role::ALL
        .into_iter()
        .map(|r| {
            (
                r,
                svc.login(r.as_str(), common::PASSWORD)
                    .unwrap()
                    .token
                    .as_str()
                    .to_string(),
            )
        })
        .collect();
    (svc.clone(), router(svc), tokens)
}

#[tokio::test]
async fn every_route_enforces_the_matrix() {
    let (svc, app, tokens) = setup();
    for route in ROUTES {
        let path = concrete(route.path);
        let Some(action) = route.action else {
            continue;
        };
        let anonymous = send(&app, route.method, &path, None).await;
        assert_eq!(
            anonymous.status,
            StatusCode::UNAUTHORIZED,
            "{} {} without a token",
            route.method,
            route.path
        );
        assert_eq!(anonymous.json()["code"], "unauthenticated");
        let forged = send(&app, route.method, &path, Some("not-a-session")).await;
        assert_eq!(forged.status, StatusCode::UNAUTHORIZED);

        for role in Role::ALL {
            // Logging out ends the session, so do that last.
            if route.path == "/api/auth/logout" {
                continue;
            }
            let before = svc.access().audit().count(Decision::Denied);
            let reply = send(&app, route.method, &path, Some(&tokens[&role])).await;
            let what = format!("{role} {} {}", route.method, route.path);
            if permits(role, action) {
                assert!(
                    reply.status != StatusCode::UNAUTHORIZED && reply.status != StatusCode::FORBIDDEN,
                    "{what} was refused: {}",
                    reply.status
                );
            } else {
                assert_eq!(reply.status, StatusCode::FORBIDDEN, "{what}");
                assert_eq!(reply.json()["code"], "unauthorized", "{what}");
                assert_eq!(
                    svc.access().audit().count(Decision::Denied),
                    before + 1,
                    "{what} denial not audited"
                );
            }
            if !reply.status.is_success() {
                assert!(
                    reply.content_type.starts_with("application/json"),
                    "{what}: {}",
                    reply.content_type
                );
                assert!(reply.json()["code"].is_string(), "{what}");
            }
        }
    }
    for role in Role::ALL {
        let reply = send(&app, "POST", "/api/auth/logout", Some(&tokens[&role])).await;
        assert_eq!(reply.status, StatusCode::NO_CONTENT, "{role} logout");
        let again = send(&app, "GET", "/api/questionnaire", Some(&tokens[&role])).await;
        assert_eq!(again.status, StatusCode::UNAUTHORIZED, "{role} session survives logout");
    }
}

#[tokio::test]
async fn public_routes_need_no_session() {
    let (_, app, _) = setup();
    let health = send(&app, "GET", "/healthz", None).await;
    assert_eq!(health.status, StatusCode::OK);
    assert_eq!(health.json()["status"], "ok");
    // An empty object is not a login form.
    let login = send(&app, "POST", "/api/auth/login", None).await;
    assert_eq!(login.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(login.json()["code"], "validation_error");
}

#[tokio::test]
async fn unknown_routes_and_methods_answer_in_json() {
    let (_, app, tokens) = setup();
    let missing = send(&app, "GET", "/api/nothing-here", Some(&tokens[&Role::Admin])).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    assert_eq!(missing.json()["code"], "not_found");
    let wrong = send(&app, "DELETE", "/api/participants", Some(&tokens[&Role::Screener])).await;
    assert_eq!(wrong.status, StatusCode::METHOD_NOT_ALLOWED);
    assert_eq!(wrong.json()["code"], "method_not_allowed");
}

#[tokio::test]
async fn malformed_input_is_rejected_before_the_service() {
    let (_, app, tokens) = setup();
    let screener = &tokens[&Role::Screener];
    let bad_id = send(&app, "POST", "/api/participants/AA0001/visits", Some(screener)).await;
    assert_eq!(bad_id.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(bad_id.json()["code"], "validation_error");

    let req = Request::post("/api/participants")
        .header(header::AUTHORIZATION, format!("Bearer {screener}"))
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{\"name\": "))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);

    let req = Request::post("/api/participants")
        .header(header::AUTHORIZATION, format!("Bearer {screener}"))
        .body(Body::from("name=x"))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);
    let body: Value = serde_json::from_slice(&to_bytes(res.into_body(), usize::MAX).await.unwrap()).unwrap();
    assert_eq!(body["field"], "body");

    let paged = send(
        &app,
        "GET",
        "/api/participants?field=name&q=ana&limit=0",
        Some(screener),
    )
    .await;
    assert_eq!(paged.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[test]
fn route_table_matches_the_router() {
    // Every table entry is routable: a request never falls through to 404
    // or 405, which would mean the table and the router disagree.
    let runtime = tokio::runtime::Runtime::new().unwrap();
    runtime.block_on(async {
        let (_, app, tokens) = setup();
        for route in ROUTES {
            let reply = send(&app, route.method, &concrete(route.path), Some(&tokens[&Role::Admin])).await;
            assert_ne!(
                reply.status,
                StatusCode::METHOD_NOT_ALLOWED,
                "{} {}",
                route.method,
                route.path
            );
            if reply.status == StatusCode::NOT_FOUND {
                assert_ne!(
                    reply.json()["message"],
                    "no such route",
                    "{} {}",
                    route.method,
                    route.path
                );
            }
        }
    });
}
