//! HTTP front end: lifecycle, service registry, RNIS and Location Service.

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use mecsim::ids::{CellId, ContextId, SubscriptionId, UeId};
use mecsim::ran::{Aggregator, Measure};
use mecsim::services::{Callback, L2Query, ServiceRequest, ServiceResponse, UserQuery, ZoneSpec};
use mecsim::world::{ApiError, ExternalRequest};

use crate::{bump, Bridge, GatewayError};

/// Device name used for contexts created without `associateDevAppId`.
const HTTP_DEVICE: &str = "http-client";

pub(crate) async fn serve(listener: TcpListener, bridge: Bridge) {
    if let Err(e) = axum::serve(listener, router(bridge)).await {
        log::error!("HTTP server stopped: {e}");
    }
}

fn router(bridge: Bridge) -> Router {
    Router::new()
        .route("/v1/mx2/app_contexts", post(create_context))
        .route("/v1/mx2/app_contexts/{id}", delete(delete_context))
        .route("/v1/mp1/services", get(list_services))
        .route("/v1/rni/queries/layer2_meas", get(layer2))
        .route("/v1/location/queries/users", get(users))
        .route("/v1/location/subscriptions/area", post(subscribe))
        .route("/v1/location/subscriptions/area/{id}", put(modify).delete(unsubscribe))
        .fallback(|| async { problem(StatusCode::NOT_FOUND, "no such resource".into()) })
        .with_state(bridge)
}

struct HttpError(StatusCode, String);

impl From<GatewayError> for HttpError {
    fn from(e: GatewayError) -> Self {
        let code = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        HttpError(code, e.to_string())
    }
}

impl From<ApiError> for HttpError {
    fn from(e: ApiError) -> Self {
        GatewayError::Api(e).into()
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        problem(self.0, self.1)
    }
}

fn problem(code: StatusCode, detail: String) -> Response {
    let body = json!({
        "title": code.canonical_reason().unwrap_or("error"),
        "status": code.as_u16(),
        "detail": detail,
    });
    (code, Json(body)).into_response()
}

fn bad(msg: impl Into<String>) -> HttpError {
    HttpError(StatusCode::BAD_REQUEST, msg.into())
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, HttpError> {
    serde_json::from_slice(body).map_err(|e| bad(format!("malformed body: {e}")))
}

type Params = Query<Vec<(String, String)>>;

fn values<'a>(params: &'a [(String, String)], key: &'a str) -> impl Iterator<Item = &'a str> {
    params.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn parse_ids<T>(params: &[(String, String)], key: &str, wrap: fn(u32) -> T) -> Result<Vec<T>, HttpError> {
    values(params, key)
        .flat_map(|v| v.split(','))
        .map(|v| v.trim().parse().map(wrap).map_err(|_| bad(format!("{key}: '{v}' is not an id"))))
        .collect()
}

async fn service(bridge: &Bridge, request: ServiceRequest) -> Result<ServiceResponse, HttpError> {
    bump(&bridge.stats.http_requests);
    match bridge.call(|reply| ExternalRequest::Service { request, reply }).await?? {
        ServiceResponse::Error(e) => Err(ApiError::from(e).into()),
        r => Ok(r),
    }
}

fn unexpected(r: ServiceResponse) -> HttpError {
    HttpError(StatusCode::INTERNAL_SERVER_ERROR, format!("unexpected service response {r:?}"))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateContext {
    app_name: String,
    #[serde(default)]
    associate_dev_app_id: Option<String>,
}

async fn create_context(State(bridge): State<Bridge>, body: Bytes) -> Result<Response, HttpError> {
    bump(&bridge.stats.http_requests);
    let req: CreateContext = parse_body(&body)?;
    let device = req.associate_dev_app_id.unwrap_or_else(|| HTTP_DEVICE.to_string());
    let info = bridge
        .call(|reply| ExternalRequest::CreateContext {
            device,
            app_name: req.app_name,
            reply,
        })
        .await??;
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

async fn delete_context(State(bridge): State<Bridge>, Path(id): Path<String>) -> Result<StatusCode, HttpError> {
    bump(&bridge.stats.http_requests);
    let id = id.parse().map(ContextId).map_err(|_| bad(format!("'{id}' is not a context id")))?;
    bridge.call(|reply| ExternalRequest::DeleteContext { id, reply }).await??;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_services(State(bridge): State<Bridge>) -> Result<Response, HttpError> {
    bump(&bridge.stats.http_requests);
    let list = bridge.call(|reply| ExternalRequest::ListServices { reply }).await??;
    Ok(Json(list).into_response())
}

async fn layer2(State(bridge): State<Bridge>, Query(params): Params) -> Result<Response, HttpError> {
    let measures = values(&params, "measure")
        .flat_map(|v| v.split(','))
        .map(|m| m.trim().parse::<Measure>().map_err(|e| bad(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let aggregator = match values(&params, "aggregator").last() {
        None | Some("last_sample") => Aggregator::LastSample,
        Some("average") => Aggregator::Average,
        Some("moving_average") => {
            let w = values(&params, "window")
                .last()
                .ok_or_else(|| bad("moving_average needs window"))?;
            let w: f64 = w.parse().map_err(|_| bad(format!("window: '{w}' is not a number")))?;
            Aggregator::moving_average(w).map_err(|e| bad(e.to_string()))?
        }
        Some(other) => return Err(bad(format!("unknown aggregator '{other}'"))),
    };
    let q = L2Query {
        cells: parse_ids(&params, "cell_id", CellId)?,
        ues: parse_ids(&params, "ue_id", UeId)?,
        measures,
        aggregator,
    };
    match service(&bridge, ServiceRequest::Layer2(q)).await? {
        ServiceResponse::Layer2(r) => Ok(Json(r).into_response()),
        r => Err(unexpected(r)),
    }
}

async fn users(State(bridge): State<Bridge>, Query(params): Params) -> Result<Response, HttpError> {
    let q = UserQuery {
        ues: parse_ids(&params, "ue_id", UeId)?,
        cells: parse_ids(&params, "cell_id", CellId)?,
    };
    match service(&bridge, ServiceRequest::Users(q)).await? {
        ServiceResponse::Users(list) => Ok(Json(json!({ "userList": list })).into_response()),
        r => Err(unexpected(r)),
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Subscribe {
    ue_id: UeId,
    #[serde(flatten)]
    zone: ZoneSpec,
    callback_reference: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SubscriptionRef {
    subscription_id: SubscriptionId,
}

fn parse_sub_id(id: &str) -> Result<SubscriptionId, HttpError> {
    id.parse()
        .map(SubscriptionId)
        .map_err(|_| bad(format!("'{id}' is not a subscription id")))
}

async fn subscribe(State(bridge): State<Bridge>, body: Bytes) -> Result<Response, HttpError> {
    let req: Subscribe = parse_body(&body)?;
    if !(req.callback_reference.starts_with("http://") || req.callback_reference.starts_with("https://")) {
        return Err(bad("callbackReference must be an http(s) URL"));
    }
    let request = ServiceRequest::Subscribe {
        ue: req.ue_id,
        zone: req.zone,
        callback: Callback::Url(req.callback_reference),
    };
    match service(&bridge, request).await? {
        ServiceResponse::Subscribed(id) => {
            Ok((StatusCode::CREATED, Json(SubscriptionRef { subscription_id: id })).into_response())
        }
        r => Err(unexpected(r)),
    }
}

async fn modify(State(bridge): State<Bridge>, Path(id): Path<String>, body: Bytes) -> Result<Response, HttpError> {
    let id = parse_sub_id(&id)?;
    let zone: ZoneSpec = parse_body(&body)?;
    match service(&bridge, ServiceRequest::Modify { id, zone }).await? {
        ServiceResponse::Modified(id) => Ok(Json(SubscriptionRef { subscription_id: id }).into_response()),
        r => Err(unexpected(r)),
    }
}

async fn unsubscribe(State(bridge): State<Bridge>, Path(id): Path<String>) -> Result<StatusCode, HttpError> {
    let id = parse_sub_id(&id)?;
    match service(&bridge, ServiceRequest::Unsubscribe(id)).await? {
        ServiceResponse::Unsubscribed(_) => Ok(StatusCode::NO_CONTENT),
        r => Err(unexpected(r)),
    }
}
