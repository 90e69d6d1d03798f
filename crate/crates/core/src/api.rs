//! Transport-independent request handling for the SensorThings-style REST
//! surface. The HTTP server only converts to and from these types.

use std::sync::Arc;

use base64::Engine;
use serde_json::{json, Map, Value};

use crate::access::{authenticate, Credentials, Principal};
use crate::model::wire::{render, self_link, RenderOptions};
use crate::model::{EntityId, EntityType, ModelError};
use crate::query::{evaluate, parse_query, EvalContext, QueryError};
use crate::store::{Batch, BatchOutcome, Store, StoreError};

/// Path prefix of every resource.
pub const SERVICE_PATH: &str = "/v1.1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Patch,
    Delete,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_uppercase().as_str() {
            "GET" => Some(Method::Get),
            "POST" => Some(Method::Post),
            "PATCH" => Some(Method::Patch),
            "DELETE" => Some(Method::Delete),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ApiRequest {
    pub method: Method,
    /// Absolute path with query string, e.g. `/v1.1/Sensors?$top=2`.
    pub target: String,
    /// Raw `Authorization` header value.
    pub authorization: Option<String>,
    pub body: Vec<u8>,
}

impl ApiRequest {
    pub fn get(target: impl Into<String>) -> Self {
        Self { method: Method::Get, target: target.into(), authorization: None, body: Vec::new() }
    }

    pub fn with_body(method: Method, target: impl Into<String>, body: &Value) -> Self {
        Self { method, target: target.into(), authorization: None, body: body.to_string().into_bytes() }
    }

    pub fn basic_auth(mut self, username: &str, password: &str) -> Self {
        let token = base64::engine::general_purpose::STANDARD.encode(format!("{username}:{password}"));
        self.authorization = Some(format!("Basic {token}"));
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Option<Value>,
}

impl ApiResponse {
    fn json(status: u16, body: Value) -> Self {
        Self { status, headers: Vec::new(), body: Some(body) }
    }

    fn error(status: u16, message: impl Into<String>, extra: Option<(&str, Value)>) -> Self {
        let mut err = Map::new();
        err.insert("code".into(), json!(status));
        err.insert("message".into(), Value::String(message.into()));
        if let Some((k, v)) = extra {
            err.insert(k.into(), v);
        }
        let mut r = Self::json(status, json!({ "error": err }));
        if status == 401 {
            r.headers.push(("WWW-Authenticate".into(), "Basic realm=\"borelog\"".into()));
        }
        r
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

fn store_status(e: &StoreError) -> u16 {
    match e.root() {
        StoreError::NotFound(_) => 404,
        StoreError::Validation(_) => 400,
        StoreError::DependencyMissing(_) | StoreError::Conflict(_) | StoreError::HasDependents { .. } => 409,
        StoreError::Forbidden { .. } => 403,
        StoreError::Unauthenticated { .. } => 401,
        StoreError::Model(ModelError::UnknownEntityType(_)) => 404,
        StoreError::Model(ModelError::ReadOnlyView(_)) => 400,
        StoreError::Batch { .. } | StoreError::Io(_) | StoreError::CorruptSnapshot(_) | StoreError::CorruptJournal { .. } => 500,
    }
}

fn store_error(e: StoreError) -> ApiResponse {
    let extra = match &e {
        StoreError::Batch { index, .. } => Some(("index", json!(index))),
        _ => None,
    };
    let violations = match e.root() {
        StoreError::Validation(v) | StoreError::DependencyMissing(v) | StoreError::Conflict(v) => Some(v.clone()),
        _ => None,
    };
    let mut r = ApiResponse::error(store_status(&e), e.to_string(), extra);
    if let (Some(v), Some(Value::Object(body))) = (violations, r.body.as_mut()) {
        if let Some(Value::Object(err)) = body.get_mut("error") {
            err.insert("violations".into(), serde_json::to_value(v).expect("violations serialize"));
        }
    }
    r
}

fn query_error(e: QueryError) -> ApiResponse {
    let status = match e {
        QueryError::NotFound(_) | QueryError::UnknownEntitySet(_) => 404,
        _ => 400,
    };
    ApiResponse::error(status, e.to_string(), None)
}

/// Parses a `Basic` authorization header. `Ok(None)` when absent.
pub fn parse_basic(header: Option<&str>) -> Result<Option<Credentials>, ()> {
    let Some(h) = header else { return Ok(None) };
    let (scheme, token) = h.trim().split_once(' ').ok_or(())?;
    if !scheme.eq_ignore_ascii_case("basic") {
        return Err(());
    }
    let bytes = base64::engine::general_purpose::STANDARD.decode(token.trim()).map_err(|_| ())?;
    let text = String::from_utf8(bytes).map_err(|_| ())?;
    let (username, password) = text.split_once(':').ok_or(())?;
    Ok(Some(Credentials { username: username.into(), password: password.into() }))
}

/// Splits `Set(id)` into its parts.
fn parse_entity_path(path: &str) -> Option<(&str, Option<EntityId>)> {
    match path.split_once('(') {
        None => Some((path, None)),
        Some((set, rest)) => {
            let id: u64 = rest.strip_suffix(')')?.parse().ok()?;
            (id > 0).then_some((set, Some(EntityId(id))))
        }
    }
}

pub struct Api {
    store: Arc<Store>,
    /// Base URL without the service path, e.g. `http://127.0.0.1:8080`.
    base_url: String,
}

impl Api {
    pub fn new(store: Arc<Store>, base_url: impl Into<String>) -> Self {
        Self { store, base_url: base_url.into().trim_end_matches('/').to_string() }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn service_root(&self) -> String {
        format!("{}{SERVICE_PATH}", self.base_url)
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        let principal = match parse_basic(req.authorization.as_deref()) {
            Err(()) => return ApiResponse::error(401, "malformed Authorization header", None),
            Ok(creds) => match authenticate(&self.store.graph(), creds.as_ref()) {
                Ok(p) => p,
                Err(e) => return ApiResponse::error(401, e.to_string(), None),
            },
        };
        self.handle_as(req, &principal)
    }

    /// Serves `req` for an already established principal; the
    /// Authorization header is ignored.
    pub fn handle_as(&self, req: &ApiRequest, principal: &Principal) -> ApiResponse {
        let Some(rest) = req.target.strip_prefix(SERVICE_PATH) else {
            return ApiResponse::error(404, format!("no resource at {}", req.target), None);
        };
        if !(rest.is_empty() || rest.starts_with('/') || rest.starts_with('?')) {
            return ApiResponse::error(404, format!("no resource at {}", req.target), None);
        }
        let rest = rest.trim_start_matches('/');
        match req.method {
            Method::Get if rest.is_empty() || rest.starts_with('?') => self.service_document(),
            Method::Get => self.get(rest, &principal),
            Method::Post if rest == "$batch" => self.batch(&req.body, &principal),
            Method::Post => self.post(rest, &req.body, &principal),
            Method::Patch => self.patch(rest, &req.body, &principal),
            Method::Delete => self.delete(rest, &principal),
        }
    }

    fn service_document(&self) -> ApiResponse {
        let root = self.service_root();
        let sets: Vec<Value> = EntityType::ALL
            .iter()
            .map(|t| json!({ "name": t.set_name(), "url": format!("{root}/{}", t.set_name()) }))
            .collect();
        ApiResponse::json(200, json!({ "value": sets }))
    }

    fn get(&self, target: &str, principal: &Principal) -> ApiResponse {
        let plan = match parse_query(target) {
            Ok(p) => p,
            Err(e) => return query_error(e),
        };
        let graph = self.store.graph();
        let root = self.service_root();
        let ctx = EvalContext { graph: &graph, principal, service_root: &root };
        match evaluate(&plan, &ctx) {
            Ok(v) => ApiResponse::json(200, v),
            Err(e) => query_error(e),
        }
    }

    fn parse_body(body: &[u8]) -> Result<Value, ApiResponse> {
        if body.iter().all(u8::is_ascii_whitespace) {
            return Err(ApiResponse::error(400, "request body is empty", None));
        }
        serde_json::from_slice(body).map_err(|e| ApiResponse::error(400, format!("invalid JSON body: {e}"), None))
    }

    fn render(&self, e: &crate::model::Entity) -> Value {
        let root = self.service_root();
        Value::Object(render(e, RenderOptions { service_root: &root, select: None }))
    }

    fn post(&self, target: &str, body: &[u8], principal: &Principal) -> ApiResponse {
        let Some((set, None)) = parse_entity_path(target) else {
            return ApiResponse::error(400, "POST targets an entity set", None);
        };
        let doc = match Self::parse_body(body) {
            Ok(d) => d,
            Err(r) => return r,
        };
        match self.store.create(set, &doc, principal) {
            Ok(e) => {
                let mut r = ApiResponse::json(201, self.render(&e));
                r.headers.push(("Location".into(), self_link(&self.service_root(), e.entity_type, e.id)));
                r
            }
            Err(e) => store_error(e),
        }
    }

    fn patch(&self, target: &str, body: &[u8], principal: &Principal) -> ApiResponse {
        let Some((set, Some(id))) = parse_entity_path(target) else {
            return ApiResponse::error(400, "PATCH targets one entity, e.g. Sensors(1)", None);
        };
        let doc = match Self::parse_body(body) {
            Ok(d) => d,
            Err(r) => return r,
        };
        match self.store.update(set, id, &doc, principal) {
            Ok(e) => ApiResponse::json(200, self.render(&e)),
            Err(e) => store_error(e),
        }
    }

    fn delete(&self, target: &str, principal: &Principal) -> ApiResponse {
        let Some((set, Some(id))) = parse_entity_path(target) else {
            return ApiResponse::error(400, "DELETE targets one entity, e.g. Sensors(1)", None);
        };
        match self.store.delete(set, id, principal) {
            Ok(()) => ApiResponse { status: 204, headers: Vec::new(), body: None },
            Err(e) => store_error(e),
        }
    }

    /// Creates a whole batch; responds with each local key's entity.
    fn batch(&self, body: &[u8], principal: &Principal) -> ApiResponse {
        let batch = if body.iter().all(u8::is_ascii_whitespace) {
            Batch::default()
        } else {
            let doc = match Self::parse_body(body) {
                Ok(d) => d,
                Err(r) => return r,
            };
            match Batch::from_value(doc) {
                Ok(b) => b,
                Err(e) => return ApiResponse::error(400, format!("invalid batch document: {e}"), None),
            }
        };
        match self.store.batch_create(&batch, principal) {
            Ok(outcome) => ApiResponse::json(201, batch_summary(&outcome, &self.service_root())),
            Err(e) => store_error(e),
        }
    }
}

/// `{"created": n, "ids": {localKey: {@iot.id, @iot.selfLink}}}`.
pub fn batch_summary(outcome: &BatchOutcome, service_root: &str) -> Value {
    let mut ids = Map::new();
    for (key, r) in &outcome.ids {
        ids.insert(
            key.clone(),
            json!({ "@iot.id": r.id, "@iot.selfLink": self_link(service_root, r.entity_type, r.id) }),
        );
    }
    json!({ "created": outcome.created.len(), "ids": ids })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_header() {
        let req = ApiRequest::get("/v1.1").basic_auth("admin", "pa:ss");
        let c = parse_basic(req.authorization.as_deref()).unwrap().unwrap();
        assert_eq!((c.username.as_str(), c.password.as_str()), ("admin", "pa:ss"));
        assert!(parse_basic(Some("Bearer x")).is_err());
        assert_eq!(parse_basic(None), Ok(None));
    }

    #[test]
    fn unknown_set_is_404() {
        let api = Api::new(Arc::new(Store::in_memory()), "http://localhost");
        assert_eq!(api.handle(&ApiRequest::get("/v1.1/Nope")).status, 404);
        assert_eq!(api.handle(&ApiRequest::get("/v1.1/Sensors")).status, 200);
        assert_eq!(api.handle(&ApiRequest::get("/other")).status, 404);
    }

    #[test]
    fn bad_credentials_are_401() {
        let api = Api::new(Arc::new(Store::in_memory()), "http://localhost");
        let r = api.handle(&ApiRequest::get("/v1.1/Sensors").basic_auth("who", "x"));
        assert_eq!(r.status, 401);
        assert!(r.header("www-authenticate").is_some());
    }
}
