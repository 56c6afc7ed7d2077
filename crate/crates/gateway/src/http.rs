//! The public HTTP API.
//!
//! | path | method | response |
//! |---|---|---|
//! | `/epsilon` | GET | `{eps, serial, sig}` |
//! | `/delta` | GET | `{delta, serial, sig}` |
//! | `/attest?nonce=<32 hex>` | GET | quote |
//! | `/pubkeypem` | GET | PEM text |
//! | `/insert` | POST `{envelope}` | `{status, count}` |
//! | `/query` | POST `{program}` | `{value, cost, remaining}` |
//!
//! Failures are `{error_kind, detail}` with 400 for bad input, 403 for an
//! exhausted budget and 503 when the enclave is unreachable.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use duet_enclave::boundary::{
    AttestRequest, ErrorPayload, FrameKind, InsertRequest, InsertResponse, PubKeyResponse,
    QueryRequest, ResponseFrame,
};
use duet_enclave::{Envelope, SignedBudget};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::relay::{Relay, RelayError};
use crate::store::{RecordLog, StoreError};

/// Every route the gateway serves.
pub const ROUTES: [(&str, &str); 6] = [
    ("GET", "/epsilon"),
    ("GET", "/delta"),
    ("GET", "/attest"),
    ("GET", "/pubkeypem"),
    ("POST", "/insert"),
    ("POST", "/query"),
];

/// Everything the untrusted side holds.
#[derive(Clone, Debug)]
pub struct Gateway {
    pub relay: Arc<Relay>,
    pub store: Arc<RecordLog>,
}

impl Gateway {
    pub fn new(relay: Relay, store: RecordLog) -> Self {
        Gateway {
            relay: Arc::new(relay),
            store: Arc::new(store),
        }
    }

    /// Serialized form of all gateway-held data, for audits.
    pub fn memory_dump(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for r in self.store.snapshot().iter() {
            out.extend(serde_json::to_vec(&r.envelope).expect("envelopes serialize"));
            out.push(b'\n');
        }
        out
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorPayload,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, detail: impl ToString) -> Self {
        ApiError {
            status,
            body: ErrorPayload {
                error_kind: kind.to_string(),
                detail: detail.to_string(),
            },
        }
    }

    fn bad_request(kind: &str, detail: impl ToString) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, kind, detail)
    }

    fn from_enclave(resp: &ResponseFrame) -> Self {
        match serde_json::from_slice::<ErrorPayload>(&resp.payload) {
            Ok(body) => ApiError {
                status: status_for(&body.error_kind),
                body,
            },
            Err(e) => ApiError::new(StatusCode::BAD_GATEWAY, "BoundaryProtocol", e),
        }
    }
}

/// HTTP status for an enclave error kind.
pub fn status_for(kind: &str) -> StatusCode {
    match kind {
        "BudgetExhausted" => StatusCode::FORBIDDEN,
        "EnclaveUnavailable" => StatusCode::SERVICE_UNAVAILABLE,
        "EvalError" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<RelayError> for ApiError {
    fn from(e: RelayError) -> Self {
        match e {
            RelayError::Unavailable => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "EnclaveUnavailable", e),
            RelayError::Protocol(_) => ApiError::new(StatusCode::BAD_GATEWAY, "BoundaryProtocol", e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("BadRequest", e))
}

async fn call(g: &Gateway, kind: FrameKind, payload: Vec<u8>) -> ApiResult<ResponseFrame> {
    let resp = g.relay.call(kind, payload).await?;
    if resp.ok {
        Ok(resp)
    } else {
        Err(ApiError::from_enclave(&resp))
    }
}

fn decode<T: DeserializeOwned>(resp: &ResponseFrame) -> ApiResult<T> {
    serde_json::from_slice(&resp.payload)
        .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "BoundaryProtocol", e))
}

fn raw_json(resp: ResponseFrame) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], resp.payload).into_response()
}

async fn budget(g: &Gateway) -> ApiResult<SignedBudget> {
    decode(&call(g, FrameKind::Budget, Vec::new()).await?)
}

async fn epsilon(State(g): State<Gateway>) -> ApiResult<Json<serde_json::Value>> {
    let b = budget(&g).await?;
    Ok(Json(json!({
        "eps": b.eps.to_string(),
        "serial": b.serial,
        "sig": hex::encode(b.sig),
    })))
}

async fn delta(State(g): State<Gateway>) -> ApiResult<Json<serde_json::Value>> {
    let b = budget(&g).await?;
    Ok(Json(json!({
        "delta": b.delta.to_string(),
        "serial": b.serial,
        "sig": hex::encode(b.sig),
    })))
}

async fn attest(
    State(g): State<Gateway>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let text = params
        .get("nonce")
        .ok_or_else(|| ApiError::bad_request("BadNonce", "missing `nonce` query parameter"))?;
    let nonce = <[u8; 16]>::try_from(hex::decode(text).unwrap_or_default().as_slice())
        .map_err(|_| ApiError::bad_request("BadNonce", "nonce must be 32 hex digits"))?;
    let payload = serde_json::to_vec(&AttestRequest { nonce }).expect("request serializes");
    Ok(raw_json(call(&g, FrameKind::Attest, payload).await?))
}

async fn pubkeypem(State(g): State<Gateway>) -> ApiResult<Response> {
    let key: PubKeyResponse = decode(&call(&g, FrameKind::PubKey, Vec::new()).await?)?;
    Ok(([(header::CONTENT_TYPE, "application/x-pem-file")], key.pem).into_response())
}

async fn insert(State(g): State<Gateway>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let req: InsertRequest = parse_body(&body)?;
    let env = Envelope::from_json(req.envelope)
        .map_err(|e| ApiError::bad_request("MalformedEnvelope", e))?;
    let payload = serde_json::to_vec(&InsertRequest {
        envelope: env.to_json(),
    })
    .expect("request serializes");
    let resp: InsertResponse = decode(&call(&g, FrameKind::Insert, payload).await?)?;
    let store = g.store.clone();
    tokio::task::spawn_blocking(move || store.append(env))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "StoreError", e))?
        .map_err(|e: StoreError| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "StoreError", e))?;
    Ok(Json(json!({"status": "ok", "count": resp.count})))
}

async fn query(State(g): State<Gateway>, body: Bytes) -> ApiResult<Response> {
    let req: QueryRequest = parse_body(&body)?;
    let payload = serde_json::to_vec(&req).expect("request serializes");
    Ok(raw_json(call(&g, FrameKind::Query, payload).await?))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

pub fn router(g: Gateway) -> Router {
    Router::new()
        .route("/epsilon", get(epsilon))
        .route("/delta", get(delta))
        .route("/attest", get(attest))
        .route("/pubkeypem", get(pubkeypem))
        .route("/insert", post(insert))
        .route("/query", post(query))
        .fallback(not_found)
        .with_state(g)
}
