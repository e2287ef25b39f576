use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use bitext_cli::server::router;
use bitext_core::align::{align_bitext, Band, CostModel};
use bitext_core::assign::{assign, AssociationWeights};
use bitext_core::config::Config;
use bitext_core::model::{DocId, Document};
use bitext_core::query::QueryEngine;
use bitext_core::segment::{Normalizer, SegmentationRules};
use bitext_core::store::Archive;
use serde_json::Value;
use tower::ServiceExt;

const SOURCE: &str = "The red car stops. A red light shines.\n\nThe red car waits.";
const TARGET: &str = "Den röda bilen stannar. Ett rött ljus lyser.\n\nDen röda bilen väntar.";

fn app() -> Router {
    let doc = |id: &str, text: &str| {
        Document::new(DocId::new(id).unwrap(), "xx", text, &SegmentationRules::default(), &Normalizer::case_fold())
    };
    let b = align_bitext("cars", doc("cars.src", SOURCE), doc("cars.tgt", TARGET), &CostModel::default(), &Band::default())
        .unwrap();
    let mut archive = Archive::new(Config::default());
    archive.insert_bitext(b).unwrap();
    let lex = assign(archive.bitexts(), &Normalizer::case_fold(), &AssociationWeights::default(), 0.5).unwrap();
    archive.lexicon = Some(lex);
    router(Arc::new(QueryEngine::new(archive)))
}

async fn get(uri: &str) -> (StatusCode, Value) {
    let resp = app().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn whole_document_countertext_is_one_rung() {
    let len = SOURCE.chars().count();
    let (status, body) = get(&format!("/bitexts/cars/countertext?side=source&start=0&end={len}")).await;
    assert_eq!(status, StatusCode::OK);
    let rungs = body["rungs"].as_array().unwrap();
    assert_eq!(rungs.len(), 1);
    assert_eq!(rungs[0]["constituent"]["level"], "document");
    assert_eq!(rungs[0]["counterpart"]["span"]["end"], TARGET.chars().count());
}

#[tokio::test]
async fn countertext_climbs_from_a_word() {
    // "car" in the first sentence
    let (status, body) = get("/bitexts/cars/countertext?side=source&start=8&end=11").await;
    assert_eq!(status, StatusCode::OK);
    let levels: Vec<&str> =
        body["rungs"].as_array().unwrap().iter().map(|r| r["constituent"]["level"].as_str().unwrap()).collect();
    assert_eq!(levels.first(), Some(&"phrase"));
    assert_eq!(levels.last(), Some(&"document"));
}

#[tokio::test]
async fn unknown_word_is_not_found() {
    let (status, body) = get("/lexicon/counterwords?word=zebra&side=source").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "not_found");
}

#[tokio::test]
async fn counterwords_of_a_known_word() {
    let (status, body) = get("/lexicon/counterwords?word=RED").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["word"], "red");
    assert_eq!(body["report"]["frequency"], 3);
}

#[tokio::test]
async fn concordance_limit_keeps_total() {
    let (status, body) = get("/concordance?term=red&side=source&limit=2").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["total"], 3);
    assert_eq!(body["hits"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn multiword_concordance() {
    let (_, body) = get("/concordance?term=red%20car").await;
    assert_eq!(body["total"], 2);
}

#[tokio::test]
async fn malformed_parameters_are_bad_requests() {
    for uri in [
        "/bitexts/cars/countertext?side=source&start=x&end=3",
        "/bitexts/cars/countertext?side=sideways&start=0&end=3",
        "/bitexts/cars/countertext?side=source&start=5&end=3",
        "/bitexts/cars/countertext?side=source&start=0&end=9999",
        "/bitexts/cars/countertext?side=source",
        "/concordance?term=red&limit=0",
        "/concordance?term=red&limit=-1",
        "/concordance",
        "/lexicon/counterwords",
    ] {
        let (status, body) = get(uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert_eq!(body["error"]["code"], "bad_request", "{uri}");
    }
}

#[tokio::test]
async fn unknown_bitext_and_route_are_not_found() {
    assert_eq!(get("/bitexts/nope").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get("/bitexts/nope/countertext?side=source&start=0&end=1").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get("/nowhere").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn listings_and_reports() {
    let (_, summary) = get("/archive/summary").await;
    assert_eq!(summary["bitexts"], 1);
    let (_, list) = get("/bitexts").await;
    assert_eq!(list["bitexts"][0]["id"], "cars");
    let (_, b) = get("/bitexts/cars").await;
    assert_eq!(b["source"]["text"], SOURCE);
    assert!(!b["links"].as_array().unwrap().is_empty());
    let (_, forks) = get("/reports/forks").await;
    assert!(forks["forks"].as_array().unwrap().is_empty());
    let (status, phrases) = get("/reports/phrases?side=target").await;
    assert_eq!(status, StatusCode::OK);
    assert!(phrases["phrases"].is_array());
    let (_, stats) = get("/stats").await;
    assert_eq!(stats["source"]["token_count"], 12);
}
