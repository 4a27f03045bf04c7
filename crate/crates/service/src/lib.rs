//! HTTP layer over the in-memory indexes. Both routers hold their index
//! behind an `Arc` and never mutate it, so any number of requests can read
//! concurrently; updating means building a new index and swapping the Arc
//! into a fresh router.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Json, Response};
use axum::routing::{get, post};
pub use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::net::TcpListener;

use concord_core::model::Curie;
use concord_core::name_lookup::{LookupFilters, MatchedField, SearchIndex};
use concord_core::normalizer::{ConflationFlags, NormalizerIndex};

pub async fn bind(addr: SocketAddr) -> io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    Ok((listener, bound))
}

pub async fn serve(listener: TcpListener, router: Router) -> io::Result<()> {
    axum::serve(listener, router).await
}

// ---------------------------------------------------------------------
// Normalizer service

pub fn normalizer_router(index: Arc<NormalizerIndex>) -> Router {
    Router::new()
        .route("/get_normalized_nodes", post(get_normalized_nodes))
        .route("/status", get(status))
        .with_state(index)
}

#[derive(Debug, Deserialize)]
struct NormalizeRequest {
    curies: Vec<String>,
    #[serde(default)]
    conflate: bool,
    #[serde(default)]
    drug_chemical_conflate: bool,
}

/// Renders a batch lookup as a JSON object whose keys repeat `curies` in
/// input order, so the body is assembled by hand — `serde_json::Map` would
/// reorder them. Shared by the endpoint and the one-shot CLI.
pub fn normalized_nodes_json(
    index: &NormalizerIndex,
    curies: &[String],
    flags: ConflationFlags,
) -> String {
    let mut body = String::from("{");
    for (i, raw) in curies.iter().enumerate() {
        if i > 0 {
            body.push(',');
        }
        // A string that is not a curie cannot be a known identifier, so it
        // gets the same null as an unknown one.
        let result = Curie::parse(raw)
            .ok()
            .and_then(|curie| index.normalize(&curie, flags));
        body.push_str(&serde_json::to_string(raw).expect("string serializes"));
        body.push(':');
        body.push_str(&serde_json::to_string(&result).expect("result serializes"));
    }
    body.push('}');
    body
}

async fn get_normalized_nodes(
    State(index): State<Arc<NormalizerIndex>>,
    Json(request): Json<NormalizeRequest>,
) -> Response {
    let flags = ConflationFlags {
        gene_protein: request.conflate,
        drug_chemical: request.drug_chemical_conflate,
    };
    let body = normalized_nodes_json(&index, &request.curies, flags);
    (
        [(header::CONTENT_TYPE, "application/json")],
        body,
    )
        .into_response()
}

async fn status(State(index): State<Arc<NormalizerIndex>>) -> Response {
    Json(index.metadata()).into_response()
}

// ---------------------------------------------------------------------
// Name lookup service

pub fn name_lookup_router(index: Arc<SearchIndex>) -> Router {
    Router::new()
        .route("/lookup", get(lookup))
        .route("/synonyms", get(synonyms))
        .with_state(index)
}

fn default_limit() -> usize {
    10
}

#[derive(Debug, Deserialize)]
struct LookupParams {
    #[serde(default)]
    string: String,
    #[serde(default)]
    autocomplete: bool,
    #[serde(default = "default_limit")]
    limit: usize,
    biolink_type: Option<String>,
    /// Comma-separated curie prefixes.
    only_prefixes: Option<String>,
    /// Comma-separated taxon curies.
    only_taxa: Option<String>,
}

/// Wire shape of one search hit; the declared field order is the
/// serialized key order.
#[derive(Debug, Serialize)]
pub struct LookupHit {
    pub curie: Curie,
    pub label: String,
    pub synonyms: Vec<String>,
    pub types: Vec<String>,
    pub taxa: Vec<Curie>,
    pub score: f64,
    pub matched_field: MatchedField,
    pub matched_text: String,
}

pub fn lookup_hits(
    index: &SearchIndex,
    query: &str,
    autocomplete: bool,
    limit: usize,
    filters: &LookupFilters,
) -> Vec<LookupHit> {
    index
        .lookup(query, autocomplete, limit, filters)
        .into_iter()
        .map(|m| LookupHit {
            curie: m.document.curie,
            label: m.document.preferred_name,
            synonyms: m.document.names,
            types: m.document.types,
            taxa: m.document.taxa,
            score: m.score,
            matched_field: m.matched_field,
            matched_text: m.matched_text,
        })
        .collect()
}

fn split_csv(raw: &Option<String>) -> Vec<String> {
    raw.iter()
        .flat_map(|s| s.split(','))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(Value::from(message))).into_response()
}

async fn lookup(
    State(index): State<Arc<SearchIndex>>,
    Query(params): Query<LookupParams>,
) -> Response {
    let mut taxa = Vec::new();
    for raw in split_csv(&params.only_taxa) {
        match Curie::parse(&raw) {
            Ok(curie) => taxa.push(curie),
            Err(e) => return bad_request(format!("only_taxa: {e}")),
        }
    }
    let filters = LookupFilters {
        type_name: params.biolink_type.clone(),
        prefixes: split_csv(&params.only_prefixes),
        taxa,
    };
    let hits = lookup_hits(&index, &params.string, params.autocomplete, params.limit, &filters);
    Json(hits).into_response()
}

#[derive(Debug, Deserialize)]
struct SynonymsParams {
    preferred_curie: String,
}

async fn synonyms(
    State(index): State<Arc<SearchIndex>>,
    Query(params): Query<SynonymsParams>,
) -> Response {
    let curie = match Curie::parse(&params.preferred_curie) {
        Ok(curie) => curie,
        Err(e) => return bad_request(format!("preferred_curie: {e}")),
    };
    match index.synonyms_of(&curie) {
        Ok(names) => Json(names).into_response(),
        Err(e) => (StatusCode::NOT_FOUND, Json(Value::from(e.to_string()))).into_response(),
    }
}
