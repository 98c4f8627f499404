//! Blocking client for the gateway API, used by the `pg` command.

use std::collections::BTreeMap;
use std::time::Duration;

use pgzone_core::ruledsl::Value;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value as Json;
use ureq::http::{Method, Request};
use url::Url;

use crate::wire::*;

const MAX_BODY: u64 = 1 << 30;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{} ({status}): {}", body.kind, body.message)]
    Api { status: u16, body: ErrorBody },
    #[error("cannot reach server: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("{0}")]
    Usage(String),
}

impl ClientError {
    /// Exit status for the command line: 1 user error, 2 denied,
    /// 3 server or transport failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Api { status: 401 | 403, .. } => 2,
            ClientError::Api { status, .. } if *status >= 500 => 3,
            ClientError::Api { .. } | ClientError::Usage(_) => 1,
            ClientError::Transport(_) | ClientError::Decode(_) => 3,
        }
    }

    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.kind),
            _ => None,
        }
    }
}

/// Raw reply: status, request id and body.
#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub request_id: Option<String>,
    pub body: Vec<u8>,
}

pub struct Client {
    base: Url,
    agent: ureq::Agent,
    token: Option<String>,
}

impl Client {
    pub fn new(base: &str) -> Result<Client, ClientError> {
        let base = Url::parse(base).map_err(|e| ClientError::Usage(format!("bad server URL {base:?}: {e}")))?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Ok(Client { base, agent, token: None })
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    fn url(&self, segments: &[&str], query: &[(&str, String)]) -> Url {
        let mut u = self.base.clone();
        {
            let mut p = u.path_segments_mut().expect("http base URL");
            p.pop_if_empty();
            for s in segments {
                p.extend(s.split('/').filter(|s| !s.is_empty()));
            }
        }
        if !query.is_empty() {
            u.query_pairs_mut().extend_pairs(query.iter().map(|(k, v)| (*k, v.as_str())));
        }
        u
    }

    /// Sends one request and returns whatever came back.
    pub fn raw(&self, method: Method, url: Url, content_type: &str, body: Vec<u8>) -> Result<Reply, ClientError> {
        let mut req = Request::builder().method(method).uri(url.as_str()).header("content-type", content_type);
        if let Some(t) = &self.token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = req.body(body).map_err(|e| ClientError::Usage(e.to_string()))?;
        let mut resp = self.agent.run(req).map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let request_id = resp.headers().get("x-request-id").and_then(|v| v.to_str().ok()).map(str::to_string);
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_vec()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Reply { status, request_id, body })
    }

    fn call(
        &self,
        method: Method,
        segments: &[&str],
        query: &[(&str, String)],
        body: Option<Vec<u8>>,
        json: bool,
    ) -> Result<Vec<u8>, ClientError> {
        let url = self.url(segments, query);
        let ct = if json { "application/json" } else { "application/octet-stream" };
        let reply = self.raw(method, url, ct, body.unwrap_or_default())?;
        if (200..300).contains(&reply.status) {
            return Ok(reply.body);
        }
        let body = serde_json::from_slice::<ErrorBody>(&reply.body).unwrap_or_else(|_| ErrorBody {
            error: "unknown".into(),
            kind: "Unknown".into(),
            message: String::from_utf8_lossy(&reply.body).into_owned(),
            request_id: reply.request_id.clone().unwrap_or_default(),
        });
        Err(ClientError::Api { status: reply.status, body })
    }

    fn json<T: DeserializeOwned>(
        &self,
        method: Method,
        segments: &[&str],
        query: &[(&str, String)],
        body: Option<&impl Serialize>,
    ) -> Result<T, ClientError> {
        let body = body.map(|b| serde_json::to_vec(b).expect("serializable body"));
        let out = self.call(method, segments, query, body, true)?;
        let out = if out.is_empty() { b"null".to_vec() } else { out };
        serde_json::from_slice(&out).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub fn login(&mut self, user: &str, secret: &str) -> Result<LoginResponse, ClientError> {
        let req = LoginRequest { user: user.into(), secret: secret.into() };
        let r: LoginResponse = self.json(Method::POST, &["login"], &[], Some(&req))?;
        self.token = Some(r.token.clone());
        Ok(r)
    }

    pub fn put(&self, path: &str, bytes: Vec<u8>, resc: Option<&str>) -> Result<Json, ClientError> {
        let q: Vec<_> = resc.map(|r| ("resc", r.to_string())).into_iter().collect();
        let out = self.call(Method::PUT, &["data", path], &q, Some(bytes), false)?;
        serde_json::from_slice(&out).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub fn get(&self, path: &str) -> Result<Vec<u8>, ClientError> {
        self.call(Method::GET, &["data", path], &[], None, false)
    }

    pub fn info(&self, path: &str) -> Result<Json, ClientError> {
        self.json(Method::GET, &["data", path], &[("info", "1".into())], None::<&()>)
    }

    pub fn remove(&self, path: &str) -> Result<(), ClientError> {
        self.call(Method::DELETE, &["data", path], &[], None, false).map(drop)
    }

    fn suffixed(path: &str, verb: &str) -> String {
        format!("{}:{verb}", path.trim_end_matches('/'))
    }

    pub fn replicate(&self, path: &str, resource: &str) -> Result<Json, ClientError> {
        let req = ReplicateRequest { resource: resource.into() };
        self.json(Method::POST, &["data", &Self::suffixed(path, "replicate")], &[], Some(&req))
    }

    pub fn verify(&self, path: &str) -> Result<Json, ClientError> {
        self.json(Method::POST, &["data", &Self::suffixed(path, "verify")], &[], None::<&()>)
    }

    pub fn mkdir(&self, path: &str, kind: &str, owner: Option<&str>) -> Result<(), ClientError> {
        let req = CollectionRequest { path: path.into(), kind: kind.into(), owner: owner.map(str::to_string) };
        self.json(Method::POST, &["collections"], &[], Some(&req))
    }

    pub fn set_acl(&self, path: &str, principal: &str, perm: Option<&str>) -> Result<(), ClientError> {
        let req = AclRequest { path: path.into(), principal: principal.into(), perm: perm.map(str::to_string) };
        self.json(Method::POST, &["acl"], &[], Some(&req))
    }

    pub fn meta_add(&self, path: &str, name: &str, value: &str, comment: &str) -> Result<(), ClientError> {
        let req = MetaRequest { path: path.into(), name: name.into(), value: value.into(), comment: comment.into() };
        self.json(Method::POST, &["meta"], &[], Some(&req))
    }

    pub fn meta_query(&self, predicate: &str) -> Result<Vec<String>, ClientError> {
        let r: Json = self.json(Method::GET, &["meta", "query"], &[("q", predicate.into())], None::<&()>)?;
        serde_json::from_value(r["paths"].clone()).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub fn rule_add(&self, text: &str) -> Result<RulesAdded, ClientError> {
        self.json(Method::POST, &["rules"], &[], Some(&RulesRequest { text: text.into() }))
    }

    pub fn rule_remove(&self, name: &str) -> Result<(), ClientError> {
        self.call(Method::DELETE, &["rules", name], &[], None, true).map(drop)
    }

    pub fn rule_list(&self) -> Result<Json, ClientError> {
        self.json(Method::GET, &["rules"], &[], None::<&()>)
    }

    pub fn microservice_add(&self, name: &str, result: Value) -> Result<(), ClientError> {
        self.json(Method::POST, &["microservices"], &[], Some(&MicroServiceRequest { name: name.into(), result }))
    }

    pub fn wf_attach(&self, collection: &str, source: &str) -> Result<Json, ClientError> {
        let req = WorkflowRequest { collection: collection.into(), source: source.into() };
        self.json(Method::POST, &["workflows"], &[], Some(&req))
    }

    pub fn wf_run(&self, workflow_id: &str, bindings: BTreeMap<String, Value>) -> Result<Json, ClientError> {
        let req = RunRequest { workflow_id: workflow_id.into(), bindings };
        self.json(Method::POST, &["runs"], &[], Some(&req))
    }

    pub fn wf_rerun(&self, run_id: &str, overrides: BTreeMap<String, Value>) -> Result<Json, ClientError> {
        let req = RerunRequest { overrides };
        self.json(Method::POST, &["runs", &format!("{run_id}:rerun")], &[], Some(&req))
    }

    pub fn run(&self, run_id: &str) -> Result<Json, ClientError> {
        self.json(Method::GET, &["runs", run_id], &[], None::<&()>)
    }

    pub fn diff(&self, a: &str, b: &str) -> Result<Json, ClientError> {
        self.json(Method::GET, &["runs", "diff"], &[("a", a.into()), ("b", b.into())], None::<&()>)
    }

    pub fn stream_ingest(&self, coll: &str, bytes: Vec<u8>) -> Result<Json, ClientError> {
        let out = self.call(Method::POST, &["streams", &Self::suffixed(coll, "ingest")], &[], Some(bytes), false)?;
        serde_json::from_slice(&out).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub fn stream_read(&self, coll: &str, from: Option<u64>, to: Option<u64>) -> Result<Vec<u8>, ClientError> {
        let mut q = Vec::new();
        if let Some(f) = from {
            q.push(("from", f.to_string()));
        }
        if let Some(t) = to {
            q.push(("to", t.to_string()));
        }
        self.call(Method::GET, &["streams", coll], &q, None, false)
    }

    pub fn stream_stat(&self, coll: &str) -> Result<Json, ClientError> {
        self.json(Method::GET, &["streams", coll], &[("stat", "1".into())], None::<&()>)
    }

    pub fn audit(&self, event: Option<&str>, actor: Option<&str>) -> Result<Json, ClientError> {
        let mut q = Vec::new();
        if let Some(e) = event {
            q.push(("event", e.to_string()));
        }
        if let Some(a) = actor {
            q.push(("actor", a.to_string()));
        }
        self.json(Method::GET, &["audit"], &q, None::<&()>)
    }

    pub fn add_user(&self, name: &str, role: &str, secret: &str) -> Result<(), ClientError> {
        let req = UserRequest { name: name.into(), role: role.into(), secret: secret.into() };
        self.json(Method::POST, &["admin", "users"], &[], Some(&req))
    }

    pub fn add_resource(
        &self,
        name: &str,
        driver: &str,
        root: &str,
        kind: &str,
        default: bool,
    ) -> Result<(), ClientError> {
        let req =
            ResourceRequest { name: name.into(), driver: driver.into(), root: root.into(), kind: kind.into(), default };
        self.json(Method::POST, &["admin", "resources"], &[], Some(&req))
    }

    pub fn add_driver(&self, name: &str, kind: &str) -> Result<(), ClientError> {
        let req = DriverRequest { name: name.into(), kind: kind.into() };
        self.json(Method::POST, &["admin", "drivers"], &[], Some(&req))
    }

    /// URL for `segments` under the server base, for use with [`Client::raw`].
    pub fn endpoint(&self, segments: &[&str], query: &[(&str, String)]) -> Url {
        self.url(segments, query)
    }
}
