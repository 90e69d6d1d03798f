use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::{HeaderMap, HeaderName, HeaderValue, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use borelog_core::api::{Api, ApiRequest, Method};
use borelog_core::Store;

/// Blocks serving requests until Ctrl-C. Prints `listening on <url>` once
/// bound so callers binding port 0 can find the address.
pub fn serve(store: Arc<Store>, bind: &str, base_url: Option<String>) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new().context("starting the runtime")?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
        let addr = listener.local_addr()?;
        let base = base_url.unwrap_or_else(|| format!("http://{addr}"));
        let api = Arc::new(Api::new(store, base));
        println!("listening on {}", api.service_root());
        let app = Router::new().fallback(handle).with_state(api);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")
    })
}

async fn handle(
    State(api): State<Arc<Api>>,
    method: axum::http::Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let Some(method) = Method::parse(method.as_str()) else {
        return (StatusCode::METHOD_NOT_ALLOWED, "method not allowed").into_response();
    };
    let req = ApiRequest {
        method,
        target: uri.path_and_query().map_or_else(|| uri.path().to_string(), |p| p.as_str().to_string()),
        authorization: headers.get(AUTHORIZATION).and_then(|v| v.to_str().ok()).map(str::to_string),
        body: body.to_vec(),
    };
    // Store writes take the single writer lock, so keep them off the async workers.
    let resp = match tokio::task::spawn_blocking(move || api.handle(&req)).await {
        Ok(r) => r,
        Err(_) => return (StatusCode::INTERNAL_SERVER_ERROR, "request handler failed").into_response(),
    };
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut out = match &resp.body {
        Some(v) => {
            let mut r = (status, serde_json::to_vec(v).expect("JSON values serialize")).into_response();
            r.headers_mut().insert(CONTENT_TYPE, HeaderValue::from_static("application/json"));
            r
        }
        None => status.into_response(),
    };
    for (k, v) in &resp.headers {
        if let (Ok(k), Ok(v)) = (HeaderName::try_from(k.as_str()), HeaderValue::try_from(v.as_str())) {
            out.headers_mut().insert(k, v);
        }
    }
    out
}
