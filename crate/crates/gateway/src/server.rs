//! The HTTP front end. Handlers authenticate the caller, then run the
//! matching engine call on the blocking pool.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pgzone_core::catalog::{AuditQuery, AvuTriple, CollectionKind, Perm, ResourceKind, Role};
use pgzone_core::drivers::DriverKind;
use pgzone_core::{now_us, Error, ErrorClass, Zone};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::auth::Sessions;
use crate::wire::*;
use crate::GatewayError;

pub const REQUEST_ID: HeaderName = HeaderName::from_static("x-request-id");
const BODY_LIMIT: usize = 512 << 20;

tokio::task_local! {
    static CURRENT_REQUEST: String;
}

#[derive(Clone)]
pub struct AppState {
    pub zone: Arc<Zone>,
    pub sessions: Arc<Sessions>,
}

impl AppState {
    pub fn new(zone: Arc<Zone>) -> Self {
        AppState { zone, sessions: Arc::new(Sessions::default()) }
    }
}

pub struct ApiError {
    status: StatusCode,
    class: &'static str,
    kind: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, class: &'static str, kind: &str, message: impl Into<String>) -> Self {
        ApiError { status, class, kind: kind.to_string(), message: message.into() }
    }

    fn unauthenticated(message: &str) -> Self {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthenticated", "Unauthenticated", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "Invalid", message)
    }
}

/// Variant name of an engine error, e.g. `StaleInputs`.
fn variant_name(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_ascii_alphanumeric()).next().unwrap_or_default().to_string()
}

pub fn status_for(class: ErrorClass) -> (StatusCode, &'static str) {
    match class {
        ErrorClass::Unauthenticated => (StatusCode::UNAUTHORIZED, "unauthenticated"),
        ErrorClass::Denied => (StatusCode::FORBIDDEN, "denied"),
        ErrorClass::NotFound => (StatusCode::NOT_FOUND, "not_found"),
        ErrorClass::Conflict => (StatusCode::CONFLICT, "conflict"),
        ErrorClass::BadRequest => (StatusCode::BAD_REQUEST, "bad_request"),
        ErrorClass::Internal => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, class) = status_for(e.class());
        ApiError::new(status, class, &variant_name(&e), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let request_id = CURRENT_REQUEST.try_with(|id| id.clone()).unwrap_or_default();
        let body = ErrorBody { error: self.class.into(), kind: self.kind, message: self.message, request_id };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> pgzone_core::Result<T> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "Panic", e.to_string())),
    }
}

/// Authenticated user of the current request.
pub struct Caller(pub String);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let header = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .ok_or_else(|| ApiError::unauthenticated("missing bearer token"))?;
        let token =
            header.strip_prefix("Bearer ").ok_or_else(|| ApiError::unauthenticated("expected a bearer token"))?;
        state
            .sessions
            .resolve(token.trim(), now_us())
            .map(Caller)
            .ok_or_else(|| ApiError::unauthenticated("invalid or expired token"))
    }
}

/// JSON request body whose rejections use the common error shape.
pub struct JsonBody<T>(pub T);

impl<T: for<'de> Deserialize<'de>, S: Send + Sync> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        parse_json(&bytes).map(JsonBody)
    }
}

async fn request_id(req: Request, next: Next) -> Response {
    let id = req
        .headers()
        .get(&REQUEST_ID)
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty() && s.len() <= 64 && s.bytes().all(|b| b.is_ascii_graphic()))
        .map(str::to_string)
        .unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    let mut resp = CURRENT_REQUEST.scope(id.clone(), next.run(req)).await;
    if let Ok(v) = HeaderValue::from_str(&id) {
        resp.headers_mut().insert(REQUEST_ID, v);
    }
    resp
}

pub fn router(state: AppState) -> Router {
    let r = Router::new()
        .route("/login", post(login))
        .route("/data/{*path}", get(get_data).put(put_data).delete(delete_data).post(post_data))
        .route("/collections", post(make_collection))
        .route("/acl", post(set_acl))
        .route("/meta", post(add_meta))
        .route("/meta/query", get(query_meta))
        .route("/rules", get(list_rules).post(add_rules))
        .route("/rules/{name}", axum::routing::delete(remove_rule))
        .route("/workflows", post(attach_workflow))
        .route("/runs", post(run_workflow))
        .route("/runs/diff", get(diff_runs))
        .route("/runs/{id}", get(get_run).post(post_run))
        .route("/streams/{*coll}", get(read_stream).post(post_stream))
        .route("/audit", get(audit))
        .route("/admin/users", post(add_user))
        .route("/admin/resources", post(add_resource))
        .route("/admin/drivers", post(add_driver));
    #[cfg(feature = "test-hooks")]
    let r = r.route("/microservices", post(add_microservice));
    r.layer(DefaultBodyLimit::max(BODY_LIMIT)).layer(middleware::from_fn(request_id)).with_state(state)
}

fn logical(p: &str) -> String {
    format!("/{}", p.trim_start_matches('/'))
}

fn json_ok<T: Serialize>(status: StatusCode, v: T) -> Response {
    (status, Json(v)).into_response()
}

fn octets(bytes: Vec<u8>) -> Response {
    ([(CONTENT_TYPE, "application/octet-stream")], bytes).into_response()
}

async fn login(State(st): State<AppState>, JsonBody(req): JsonBody<LoginRequest>) -> ApiResult<Json<LoginResponse>> {
    let zone = st.zone.clone();
    let user = req.user.clone();
    blocking(move || zone.authenticate(&req.user, &req.secret)).await?;
    let s = st.sessions.issue(&user, now_us());
    Ok(Json(LoginResponse { token: s.token, user: s.user, expires_us: s.expires_us }))
}

#[derive(Deserialize)]
struct PutParams {
    resc: Option<String>,
}

async fn put_data(
    State(st): State<AppState>,
    Caller(user): Caller,
    Path(p): Path<String>,
    Query(q): Query<PutParams>,
    body: Bytes,
) -> ApiResult<Response> {
    let path = logical(&p);
    let obj = blocking(move || st.zone.put(&user, &path, &body, q.resc.as_deref())).await?;
    Ok(json_ok(StatusCode::CREATED, obj))
}

#[derive(Deserialize)]
struct GetParams {
    #[serde(default)]
    info: u8,
}

#[derive(Serialize)]
struct ObjectInfo {
    object: pgzone_core::catalog::DataObject,
    avus: Vec<AvuTriple>,
}

async fn get_data(
    State(st): State<AppState>,
    Caller(user): Caller,
    Path(p): Path<String>,
    Query(q): Query<GetParams>,
) -> ApiResult<Response> {
    let path = logical(&p);
    if q.info != 0 {
        let info = blocking(move || {
            let c = st.zone.catalog();
            let object = c.object(&path).ok_or_else(|| Error::NoSuchObject(path.clone()))?;
            if !c.check_access(&path, &user, Perm::Read)? {
                return Err(Error::PermissionDenied(format!("{user} may not read {path}")));
            }
            Ok(ObjectInfo { object, avus: c.avus(&path) })
        })
        .await?;
        return Ok(json_ok(StatusCode::OK, info));
    }
    let bytes = blocking(move || st.zone.get(&user, &path)).await?;
    Ok(octets(bytes))
}

async fn delete_data(State(st): State<AppState>, Caller(user): Caller, Path(p): Path<String>) -> ApiResult<StatusCode> {
    let path = logical(&p);
    blocking(move || st.zone.remove(&user, &path)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_data(
    State(st): State<AppState>,
    Caller(user): Caller,
    Path(p): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    if let Some(rest) = p.strip_suffix(":replicate") {
        let req: ReplicateRequest = parse_json(&body)?;
        let path = logical(rest);
        let rep = blocking(move || st.zone.replicate(&user, &path, &req.resource)).await?;
        return Ok(json_ok(StatusCode::CREATED, rep));
    }
    if let Some(rest) = p.strip_suffix(":verify") {
        let path = logical(rest);
        let checks = blocking(move || st.zone.verify_replicas(&user, &path)).await?;
        return Ok(json_ok(StatusCode::OK, checks));
    }
    Err(ApiError::bad_request("expected :replicate or :verify"))
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("bad JSON body: {e}")))
}

fn parse_or<T>(v: Option<T>, what: &str, s: &str) -> ApiResult<T> {
    v.ok_or_else(|| ApiError::bad_request(format!("unknown {what} {s:?}")))
}

async fn make_collection(
    State(st): State<AppState>,
    Caller(user): Caller,
    JsonBody(req): JsonBody<CollectionRequest>,
) -> ApiResult<StatusCode> {
    let kind = parse_or(CollectionKind::parse(&req.kind), "collection kind", &req.kind)?;
    blocking(move || st.zone.make_collection(&user, &req.path, kind, req.owner.as_deref())).await?;
    Ok(StatusCode::CREATED)
}

async fn set_acl(
    State(st): State<AppState>,
    Caller(user): Caller,
    JsonBody(req): JsonBody<AclRequest>,
) -> ApiResult<StatusCode> {
    let perm = match &req.perm {
        Some(p) => Some(parse_or(Perm::parse(p), "permission", p)?),
        None => None,
    };
    blocking(move || st.zone.set_acl(&user, &req.path, &req.principal, perm)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn add_meta(
    State(st): State<AppState>,
    Caller(user): Caller,
    JsonBody(req): JsonBody<MetaRequest>,
) -> ApiResult<StatusCode> {
    let triple = AvuTriple::new(req.name, req.value, req.comment);
    blocking(move || st.zone.add_avu(&user, &req.path, triple)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct MetaQuery {
    q: String,
}

#[derive(Serialize)]
struct Paths {
    paths: Vec<String>,
}

async fn query_meta(
    State(st): State<AppState>,
    Caller(user): Caller,
    Query(q): Query<MetaQuery>,
) -> ApiResult<Response> {
    let paths = blocking(move || st.zone.query_meta(&user, &q.q)).await?;
    Ok(json_ok(StatusCode::OK, Paths { paths }))
}

async fn list_rules(State(st): State<AppState>, Caller(_): Caller) -> Response {
    json_ok(StatusCode::OK, st.zone.list_rules())
}

async fn add_rules(
    State(st): State<AppState>,
    Caller(user): Caller,
    JsonBody(req): JsonBody<RulesRequest>,
) -> ApiResult<Response> {
    let added = blocking(move || {
        let added = st.zone.add_rule(&user, &req.text)?;
        Ok(RulesAdded { added, version: st.zone.rule_base_version() })
    })
    .await?;
    Ok(json_ok(StatusCode::CREATED, added))
}

async fn remove_rule(
    State(st): State<AppState>,
    Caller(user): Caller,
    Path(name): Path<String>,
) -> ApiResult<StatusCode> {
    blocking(move || st.zone.remove_rule(&user, &name)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[cfg(feature = "test-hooks")]
async fn add_microservice(
    State(st): State<AppState>,
    Caller(user): Caller,
    JsonBody(req): JsonBody<MicroServiceRequest>,
) -> ApiResult<StatusCode> {
    let result = req.result.clone();
    let ms = pgzone_core::engine::MicroService::new(&req.name, 0, move |_, _| Ok(result.clone())).optional_args(8);
    blocking(move || st.zone.register_microservice(&user, ms)).await?;
    Ok(StatusCode::CREATED)
}

async fn attach_workflow(
    State(st): State<AppState>,
    Caller(user): Caller,
    JsonBody(req): JsonBody<WorkflowRequest>,
) -> ApiResult<Response> {
    let wf = blocking(move || st.zone.attach_workflow(&user, &req.collection, &req.source)).await?;
    Ok(json_ok(StatusCode::CREATED, wf))
}

async fn run_workflow(
    State(st): State<AppState>,
    Caller(user): Caller,
    JsonBody(req): JsonBody<RunRequest>,
) -> ApiResult<Response> {
    let run = blocking(move || st.zone.run_workflow(&user, &req.workflow_id, req.bindings)).await?;
    Ok(json_ok(StatusCode::CREATED, run))
}

async fn get_run(State(st): State<AppState>, Caller(user): Caller, Path(id): Path<String>) -> ApiResult<Response> {
    let run = blocking(move || st.zone.run(&user, &id)).await?;
    Ok(json_ok(StatusCode::OK, run))
}

async fn post_run(
    State(st): State<AppState>,
    Caller(user): Caller,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let Some(id) = id.strip_suffix(":rerun").map(str::to_string) else {
        return Err(ApiError::bad_request("expected :rerun"));
    };
    let req: RerunRequest = if body.is_empty() { RerunRequest::default() } else { parse_json(&body)? };
    let run = blocking(move || st.zone.rerun(&user, &id, req.overrides)).await?;
    Ok(json_ok(StatusCode::CREATED, run))
}

#[derive(Deserialize)]
struct DiffParams {
    a: String,
    b: String,
}

async fn diff_runs(
    State(st): State<AppState>,
    Caller(user): Caller,
    Query(q): Query<DiffParams>,
) -> ApiResult<Response> {
    let d = blocking(move || st.zone.diff_runs(&user, &q.a, &q.b)).await?;
    Ok(json_ok(StatusCode::OK, d))
}

#[derive(Deserialize)]
struct StreamParams {
    from: Option<u64>,
    to: Option<u64>,
    #[serde(default)]
    stat: u8,
}

async fn read_stream(
    State(st): State<AppState>,
    Caller(user): Caller,
    Path(c): Path<String>,
    Query(q): Query<StreamParams>,
) -> ApiResult<Response> {
    let coll = logical(&c);
    if q.stat != 0 {
        let s = blocking(move || st.zone.stream_stat(&user, &coll)).await?;
        return Ok(json_ok(StatusCode::OK, s));
    }
    let (lo, hi) = (q.from.unwrap_or(0), q.to.unwrap_or(u64::MAX));
    let bytes = blocking(move || st.zone.stream_read(&user, &coll, lo, hi)).await?;
    Ok(octets(bytes))
}

async fn post_stream(
    State(st): State<AppState>,
    Caller(user): Caller,
    Path(c): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let Some(coll) = c.strip_suffix(":ingest").map(logical) else {
        return Err(ApiError::bad_request("expected :ingest"));
    };
    let seg = blocking(move || st.zone.stream_ingest(&user, &coll, &body)).await?;
    Ok(json_ok(StatusCode::CREATED, seg))
}

#[derive(Deserialize)]
struct AuditParams {
    event: Option<String>,
    actor: Option<String>,
    from: Option<u64>,
    to: Option<u64>,
}

async fn audit(State(st): State<AppState>, Caller(user): Caller, Query(q): Query<AuditParams>) -> ApiResult<Response> {
    let query = AuditQuery { from_us: q.from, to_us: q.to, event: q.event, actor: q.actor };
    let entries = blocking(move || st.zone.catalog().audit_query(&user, &query)).await?;
    Ok(json_ok(StatusCode::OK, entries))
}

async fn add_user(
    State(st): State<AppState>,
    Caller(user): Caller,
    JsonBody(req): JsonBody<UserRequest>,
) -> ApiResult<StatusCode> {
    let role = parse_or(Role::parse(&req.role), "role", &req.role)?;
    blocking(move || st.zone.catalog().create_user(&user, &req.name, role, &req.secret)).await?;
    Ok(StatusCode::CREATED)
}

async fn add_resource(
    State(st): State<AppState>,
    Caller(user): Caller,
    JsonBody(req): JsonBody<ResourceRequest>,
) -> ApiResult<StatusCode> {
    let kind = parse_or(ResourceKind::parse(&req.kind), "resource kind", &req.kind)?;
    blocking(move || {
        st.zone.register_resource(&user, &req.name, &req.driver, &req.root, kind)?;
        if req.default {
            st.zone.set_default_resource(&req.name)?;
        }
        Ok(())
    })
    .await?;
    Ok(StatusCode::CREATED)
}

async fn add_driver(
    State(st): State<AppState>,
    Caller(user): Caller,
    JsonBody(req): JsonBody<DriverRequest>,
) -> ApiResult<StatusCode> {
    let kind = parse_or(DriverKind::parse(&req.kind), "driver kind", &req.kind)?;
    blocking(move || st.zone.register_driver_kind(&user, &req.name, kind)).await?;
    Ok(StatusCode::CREATED)
}

/// A server running on its own runtime thread.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub state: AppState,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting, drains in-flight requests and checkpoints the journal.
    pub fn shutdown(mut self) -> Result<(), GatewayError> {
        self.stop()
    }

    fn stop(&mut self) -> Result<(), GatewayError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            t.join().map_err(|_| GatewayError::Serve("server thread panicked".into()))??;
            self.state.zone.catalog().checkpoint()?;
        }
        Ok(())
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

/// Binds `bind` and serves `zone` until the handle is shut down.
pub fn spawn(zone: Arc<Zone>, bind: &str) -> Result<ServerHandle, GatewayError> {
    let listener = std::net::TcpListener::bind(bind).map_err(|e| GatewayError::BindFailed(format!("{bind}: {e}")))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let state = AppState::new(zone);
    let app = router(state.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new().name("pgzone-gateway".into()).spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = rx.await;
                })
                .await
        })
    })?;
    Ok(ServerHandle { addr, state, shutdown: Some(tx), thread: Some(thread) })
}
