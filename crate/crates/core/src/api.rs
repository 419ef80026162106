//! HTTP/JSON interface of the four portals.
//!
//! Every route except `/healthz` and login sits behind one middleware that
//! authenticates the bearer token and authorizes the route's [`Action`]
//! before any handler runs. Errors are always JSON of the form
//! `{"code": ..., "message": ..., "field": ...}`.

use std::future::Future;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, MatchedPath, Request, State};
use axum::http::{header, HeaderMap, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::access::{Account, Action, Decision, Role};
use crate::domain::{Eye, NewParticipant, OrganizationId, ParticipantPatch, SearchField, VisitState};
use crate::error::Error;
use crate::grading::{GradingEdit, GradingSubmission};
use crate::ids::{ParticipantId, VisitId};
use crate::reporting::NewFollowUp;
use crate::service::{Page, ScreeningService, SurveyUpdate};

/// Largest accepted image upload.
pub const MAX_IMAGE_BYTES: usize = 32 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

pub fn status_of(error: &Error) -> StatusCode {
    match error {
        Error::Validation { .. }
        | Error::Schema(_)
        | Error::KeyPolicyViolation(_)
        | Error::UnsupportedLocale(_)
        | Error::InfeasibleTargets(_)
        | Error::EmptyInput(_)
        | Error::DivisionByZero
        | Error::JoinFailure(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Format { .. } => StatusCode::BAD_REQUEST,
        Error::Unauthenticated => StatusCode::UNAUTHORIZED,
        Error::Unauthorized(_) => StatusCode::FORBIDDEN,
        Error::IllegalTransition { .. }
        | Error::IllegalState(_)
        | Error::Conflict { .. }
        | Error::NoActiveDispatch(_)
        | Error::IdExhausted
        | Error::VisitSequenceExhausted(_) => StatusCode::CONFLICT,
        Error::UnknownParticipant(_) | Error::UnknownVisit(_) | Error::UnknownEntity { .. } | Error::NotFound(_) => {
            StatusCode::NOT_FOUND
        }
        Error::BackendUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        Error::MissingTemplate(_) | Error::Config(_) | Error::Io(_) | Error::Internal(_) => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl From<Error> for ApiError {
    fn from(error: Error) -> Self {
        let status = status_of(&error);
        if status.is_server_error() {
            tracing::error!(code = error.code(), "{error}");
        }
        Self {
            status,
            body: ErrorBody {
                code: error.code().to_string(),
                message: error.to_string(),
                field: error.locator(),
            },
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        let status = match rejection {
            JsonRejection::MissingJsonContentType(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            JsonRejection::JsonSyntaxError(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self {
            status,
            body: ErrorBody {
                code: "validation_error".into(),
                message: rejection.body_text(),
                field: Some("body".into()),
            },
        }
    }
}

impl From<PathRejection> for ApiError {
    fn from(rejection: PathRejection) -> Self {
        Error::validation("path", rejection.body_text()).into()
    }
}

impl From<QueryRejection> for ApiError {
    fn from(rejection: QueryRejection) -> Self {
        Error::validation("query", rejection.body_text()).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
struct Json<T>(T);

impl<T: Serialize> IntoResponse for Json<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Path), rejection(ApiError))]
struct PathParam<T>(T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
struct Query<T>(T);

fn parse<T: std::str::FromStr<Err = Error>>(raw: &str) -> ApiResult<T> {
    raw.parse().map_err(ApiError::from)
}

/// One row of the route table: which action a route requires. `None` marks
/// the two public routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteSpec {
    pub method: &'static str,
    pub path: &'static str,
    pub action: Option<Action>,
}

const fn route(method: &'static str, path: &'static str, action: Action) -> RouteSpec {
    RouteSpec {
        method,
        path,
        action: Some(action),
    }
}

pub const ROUTES: &[RouteSpec] = &[
    RouteSpec {
        method: "GET",
        path: "/healthz",
        action: None,
    },
    RouteSpec {
        method: "POST",
        path: "/api/auth/login",
        action: None,
    },
    route("POST", "/api/auth/logout", Action::Logout),
    route("GET", "/api/questionnaire", Action::ReadQuestionnaire),
    route("POST", "/api/participants", Action::RegisterParticipant),
    route("GET", "/api/participants", Action::SearchParticipants),
    route("GET", "/api/participants/{pid}", Action::ReadParticipantPii),
    route("PATCH", "/api/participants/{pid}", Action::EditParticipant),
    route("POST", "/api/participants/{pid}/visits", Action::OpenVisit),
    route("GET", "/api/participants/{pid}/visits", Action::SearchParticipants),
    route("PUT", "/api/visits/{vid}/survey", Action::EditSurvey),
    route("POST", "/api/visits/{vid}/images", Action::AttachImage),
    route("POST", "/api/visits/{vid}/transition", Action::TransitionVisit),
    route("GET", "/api/images/{key}", Action::FetchImage),
    route("GET", "/api/grading/queue", Action::GradingQueue),
    route("GET", "/api/grading/graded", Action::ListGraded),
    route("GET", "/api/grading/{vid}", Action::ListGraded),
    route("POST", "/api/grading/{vid}", Action::SubmitGrading),
    route("PUT", "/api/grading/{vid}", Action::EditGrading),
    route("GET", "/api/reports/pending", Action::ViewPendingReports),
    route("GET", "/api/reports/followups", Action::ListFollowUps),
    route("POST", "/api/reports/{vid}/letter", Action::RenderLetter),
    route("GET", "/api/reports/{vid}/dispatches", Action::ViewPendingReports),
    route("POST", "/api/reports/{vid}/sent", Action::MarkSent),
    route("POST", "/api/reports/{vid}/followups", Action::AddFollowUp),
    route("GET", "/api/reports/{vid}/followups", Action::ListFollowUps),
    route("GET", "/api/export.csv", Action::Export),
];

fn required_action(method: &Method, path: &str) -> Option<Option<Action>> {
    ROUTES
        .iter()
        .find(|r| r.method == method.as_str() && r.path == path)
        .map(|r| r.action)
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

type AppState = Arc<ScreeningService>;

/// Authenticates and authorizes every routed request before its handler.
async fn guard(State(svc): State<AppState>, matched: MatchedPath, mut request: Request, next: Next) -> Response {
    let Some(action) = required_action(request.method(), matched.as_str()) else {
        tracing::error!(path = matched.as_str(), "route missing from the route table");
        return ApiError::from(Error::Internal("route is not covered by access control".into())).into_response();
    };
    let Some(action) = action else {
        return next.run(request).await;
    };
    let account = match bearer(request.headers()).map(|t| svc.authenticate(t)) {
        Some(Ok(account)) => account,
        _ => return ApiError::from(Error::Unauthenticated).into_response(),
    };
    let entity = request.uri().path().to_string();
    if svc.access().authorize(&account, action, &entity) == Decision::Denied {
        return ApiError::from(Error::Unauthorized(format!(
            "{} may not {}",
            account.role.as_str(),
            action.name()
        )))
        .into_response();
    }
    request.extensions_mut().insert(account);
    next.run(request).await
}

async fn not_found() -> ApiError {
    Error::NotFound("no such route".into()).into()
}

async fn method_not_allowed() -> ApiError {
    ApiError {
        status: StatusCode::METHOD_NOT_ALLOWED,
        body: ErrorBody {
            code: "method_not_allowed".into(),
            message: "method not allowed on this route".into(),
            field: None,
        },
    }
}

pub fn router(svc: AppState) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/api/auth/login", post(login))
        .route("/api/auth/logout", post(logout))
        .route("/api/questionnaire", get(questionnaire))
        .route("/api/participants", post(register).get(search))
        .route("/api/participants/{pid}", get(get_participant).patch(edit_participant))
        .route("/api/participants/{pid}/visits", post(open_visit).get(list_visits))
        .route("/api/visits/{vid}/survey", axum::routing::put(edit_survey))
        .route(
            "/api/visits/{vid}/images",
            post(attach_image).layer(DefaultBodyLimit::max(MAX_IMAGE_BYTES)),
        )
        .route("/api/visits/{vid}/transition", post(transition))
        .route("/api/images/{key}", get(fetch_image))
        .route("/api/grading/queue", get(grading_queue))
        .route("/api/grading/graded", get(graded_list))
        .route(
            "/api/grading/{vid}",
            get(grading_detail).post(submit_grading).put(edit_grading),
        )
        .route("/api/reports/pending", get(pending_reports))
        .route("/api/reports/followups", get(my_followups))
        .route("/api/reports/{vid}/letter", post(render_letter))
        .route("/api/reports/{vid}/dispatches", get(dispatches))
        .route("/api/reports/{vid}/sent", post(mark_sent))
        .route("/api/reports/{vid}/followups", post(add_followup).get(list_followups))
        .route("/api/export.csv", get(export_csv))
        .route_layer(middleware::from_fn_with_state(svc.clone(), guard));
    api.fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(svc)
}

// Handlers.

#[derive(Serialize)]
struct Health {
    status: &'static str,
}

async fn healthz() -> Json<Health> {
    Json(Health { status: "ok" })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoginRequest {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub account_id: String,
    pub role: Role,
    pub organization_id: OrganizationId,
    pub expires_at: DateTime<Utc>,
}

async fn login(State(svc): State<AppState>, Json(req): Json<LoginRequest>) -> ApiResult<Json<LoginResponse>> {
    // Password hashing is deliberately slow; keep it off the reactor.
    let session = tokio::task::spawn_blocking({
        let svc = svc.clone();
        move || svc.login(&req.username, &req.password)
    })
    .await
    .map_err(|e| Error::Internal(e.to_string()))??;
    let account = svc
        .access()
        .account_by_id(&session.account_id)
        .ok_or(Error::Unauthenticated)?;
    Ok(Json(LoginResponse {
        token: session.token.as_str().to_string(),
        account_id: account.account_id,
        role: account.role,
        organization_id: account.organization_id,
        expires_at: session.expires_at,
    }))
}

async fn logout(State(svc): State<AppState>, headers: HeaderMap) -> StatusCode {
    if let Some(token) = bearer(&headers) {
        svc.logout(token);
    }
    StatusCode::NO_CONTENT
}

#[derive(Debug, Deserialize)]
struct LocaleQuery {
    #[serde(default = "english")]
    locale: String,
}

fn english() -> String {
    "en".into()
}

async fn questionnaire(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    Query(q): Query<LocaleQuery>,
) -> ApiResult<Response> {
    Ok(Json(svc.questionnaire(&actor, &q.locale)?).into_response())
}

async fn register(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    Json(form): Json<NewParticipant>,
) -> ApiResult<Response> {
    Ok((StatusCode::CREATED, Json(svc.register_participant(&actor, form)?)).into_response())
}

#[derive(Debug, Deserialize)]
struct SearchQuery {
    field: String,
    q: String,
    #[serde(default = "default_limit")]
    limit: usize,
    #[serde(default)]
    offset: usize,
}

fn default_limit() -> usize {
    Page::default().limit
}

async fn search(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    Query(q): Query<SearchQuery>,
) -> ApiResult<Response> {
    let field: SearchField = parse(&q.field)?;
    Ok(Json(svc.search_participants(
        &actor,
        field,
        &q.q,
        Page {
            limit: q.limit,
            offset: q.offset,
        },
    )?)
    .into_response())
}

async fn get_participant(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(pid): PathParam<String>,
) -> ApiResult<Response> {
    let pid: ParticipantId = parse(&pid)?;
    Ok(Json(svc.get_participant(&actor, pid)?).into_response())
}

async fn edit_participant(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(pid): PathParam<String>,
    Json(patch): Json<ParticipantPatch>,
) -> ApiResult<Response> {
    let pid: ParticipantId = parse(&pid)?;
    Ok(Json(svc.edit_participant(&actor, pid, patch)?).into_response())
}

async fn open_visit(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(pid): PathParam<String>,
) -> ApiResult<Response> {
    let pid: ParticipantId = parse(&pid)?;
    Ok((StatusCode::CREATED, Json(svc.open_visit(&actor, pid)?)).into_response())
}

async fn list_visits(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(pid): PathParam<String>,
) -> ApiResult<Response> {
    let pid: ParticipantId = parse(&pid)?;
    Ok(Json(svc.list_visits(&actor, pid)?).into_response())
}

async fn edit_survey(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
    Json(update): Json<SurveyUpdate>,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    Ok(Json(svc.edit_survey(&actor, vid, update)?).into_response())
}

#[derive(Debug, Deserialize)]
struct EyeQuery {
    eye: String,
}

async fn attach_image(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
    Query(q): Query<EyeQuery>,
    body: axum::body::Bytes,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    let eye: Eye = parse(&q.eye).map_err(|_| Error::validation("eye", "expected `left` or `right`"))?;
    Ok((StatusCode::CREATED, Json(svc.attach_image(&actor, vid, eye, &body)?)).into_response())
}

/// Optional organization for graders serving several organizations.
#[derive(Debug, Default, Deserialize)]
struct OrgQuery {
    org: Option<String>,
}

impl OrgQuery {
    fn org(&self) -> ApiResult<Option<OrganizationId>> {
        self.org
            .as_deref()
            .map(|o| OrganizationId::new(o).map_err(ApiError::from))
            .transpose()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRequest {
    pub target: VisitState,
}

async fn transition(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
    Query(q): Query<OrgQuery>,
    Json(req): Json<TransitionRequest>,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    Ok(Json(svc.transition_visit(&actor, vid, req.target, q.org()?.as_ref())?).into_response())
}

async fn fetch_image(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(key): PathParam<String>,
    Query(q): Query<OrgQuery>,
) -> ApiResult<Response> {
    let bytes = svc.fetch_image(&actor, &key, q.org()?.as_ref())?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn grading_queue(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    Query(page): Query<Page>,
) -> ApiResult<Response> {
    Ok(Json(svc.grading_queue(&actor, page)?).into_response())
}

async fn graded_list(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    Query(page): Query<Page>,
) -> ApiResult<Response> {
    Ok(Json(svc.graded_list(&actor, page)?).into_response())
}

async fn grading_detail(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
    Query(q): Query<OrgQuery>,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    Ok(Json(svc.grading_detail(&actor, vid, q.org()?.as_ref())?).into_response())
}

async fn submit_grading(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
    Query(q): Query<OrgQuery>,
    Json(sub): Json<GradingSubmission>,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    let record = svc.submit_grading(&actor, vid, q.org()?.as_ref(), sub)?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

async fn edit_grading(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
    Query(q): Query<OrgQuery>,
    Json(edit): Json<GradingEdit>,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    Ok(Json(svc.edit_grading(&actor, vid, q.org()?.as_ref(), edit)?).into_response())
}

async fn pending_reports(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    Query(page): Query<Page>,
) -> ApiResult<Response> {
    Ok(Json(svc.pending_reports(&actor, page)?).into_response())
}

async fn my_followups(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    Query(page): Query<Page>,
) -> ApiResult<Response> {
    Ok(Json(svc.my_followups(&actor, page)?).into_response())
}

async fn render_letter(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    Ok(Json(svc.render_letter(&actor, vid)?).into_response())
}

async fn dispatches(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    Ok(Json(svc.dispatches(&actor, vid)?).into_response())
}

async fn mark_sent(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    Ok(Json(svc.mark_sent(&actor, vid)?).into_response())
}

async fn add_followup(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
    Json(input): Json<NewFollowUp>,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    Ok((StatusCode::CREATED, Json(svc.add_followup(&actor, vid, input)?)).into_response())
}

async fn list_followups(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    PathParam(vid): PathParam<String>,
    Query(page): Query<Page>,
) -> ApiResult<Response> {
    let vid: VisitId = parse(&vid)?;
    Ok(Json(svc.list_followups(&actor, vid, page)?).into_response())
}

async fn export_csv(
    State(svc): State<AppState>,
    Extension(actor): Extension<Account>,
    Query(q): Query<OrgQuery>,
) -> ApiResult<Response> {
    let csv = svc.export_csv(&actor, q.org()?.as_ref())?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

// Serving.

/// Loads a PEM certificate chain and private key.
pub fn tls_config(cert: &Path, key: &Path) -> crate::Result<Arc<rustls::ServerConfig>> {
    use rustls::pki_types::pem::PemObject;
    use rustls::pki_types::{CertificateDer, PrivateKeyDer};

    let bad = |what: &str, path: &Path, e: &dyn std::fmt::Display| {
        Error::Config(format!("bad TLS {what} {}: {e}", path.display()))
    };
    let certs = CertificateDer::pem_file_iter(cert)
        .map_err(|e| bad("certificate", cert, &e))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| bad("certificate", cert, &e))?;
    if certs.is_empty() {
        return Err(Error::Config(format!("no certificate in {}", cert.display())));
    }
    let key_der = PrivateKeyDer::from_pem_file(key).map_err(|e| bad("key", key, &e))?;
    let provider = Arc::new(rustls::crypto::ring::default_provider());
    let mut config = rustls::ServerConfig::builder_with_provider(provider)
        .with_safe_default_protocol_versions()
        .map_err(|e| Error::Config(e.to_string()))?
        .with_no_client_auth()
        .with_single_cert(certs, key_der)
        .map_err(|e| bad("certificate/key pair", cert, &e))?;
    config.alpn_protocols = vec![b"h2".to_vec(), b"http/1.1".to_vec()];
    Ok(Arc::new(config))
}

/// Serves `app` on `listener` until `shutdown` resolves. With `tls` set every
/// connection is TLS; otherwise plain HTTP, meant only for local development.
pub async fn run(
    listener: tokio::net::TcpListener,
    app: Router,
    tls: Option<Arc<rustls::ServerConfig>>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> crate::Result<()> {
    let Some(tls) = tls else {
        return axum::serve(listener, app)
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(Error::Io);
    };
    let acceptor = tokio_rustls::TlsAcceptor::from(tls);
    let service = hyper_util::service::TowerToHyperService::new(app);
    tokio::pin!(shutdown);
    loop {
        let (stream, peer) = tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok(conn) => conn,
                Err(e) => {
                    tracing::warn!("accept failed: {e}");
                    continue;
                }
            },
            () = &mut shutdown => return Ok(()),
        };
        let acceptor = acceptor.clone();
        let service = service.clone();
        tokio::spawn(async move {
            let stream = match acceptor.accept(stream).await {
                Ok(stream) => stream,
                Err(e) => {
                    tracing::debug!(%peer, "TLS handshake failed: {e}");
                    return;
                }
            };
            let io = hyper_util::rt::TokioIo::new(stream);
            let builder = hyper_util::server::conn::auto::Builder::new(hyper_util::rt::TokioExecutor::new());
            if let Err(e) = builder.serve_connection(io, service).await {
                tracing::debug!(%peer, "connection closed: {e}");
            }
        });
    }
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(svc: ScreeningService, addr: &str, tls: Option<Arc<rustls::ServerConfig>>) -> crate::Result<()> {
    let addr: SocketAddr = addr
        .parse()
        .map_err(|_| Error::Config(format!("`{addr}` is not a socket address")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, tls = tls.is_some(), "listening");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    };
    run(listener, router(Arc::new(svc)), tls, shutdown).await
}
