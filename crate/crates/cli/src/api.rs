//! HTTP endpoint logic as plain functions from query parameters to a status
//! code and a JSON body. The router in [`crate::server`] only wires these up.

use std::collections::HashMap;
use std::str::FromStr;

use bitext_core::model::{Document, Side, Span};
use bitext_core::query::QueryEngine;
use bitext_core::Error;
use serde_json::{json, Value};

pub const DEFAULT_LIMIT: usize = 50;

pub type Params = HashMap<String, String>;

#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: Value,
}

impl Reply {
    fn ok(body: impl serde::Serialize) -> Reply {
        Reply { status: 200, body: serde_json::to_value(body).expect("response types serialize") }
    }

    fn error(status: u16, code: &str, message: impl Into<String>) -> Reply {
        Reply { status, body: json!({ "error": { "code": code, "message": message.into() } }) }
    }

    pub fn bad_request(message: impl Into<String>) -> Reply {
        Reply::error(400, "bad_request", message)
    }
}

impl From<Error> for Reply {
    fn from(e: Error) -> Reply {
        match e {
            Error::UnknownWord { .. } | Error::UnknownBitext(_) | Error::NoLexicon => {
                Reply::error(404, "not_found", e.to_string())
            }
            Error::Range { .. } | Error::Invalid(_) | Error::Ownership(_) => Reply::bad_request(e.to_string()),
            other => Reply::error(500, "internal", other.to_string()),
        }
    }
}

fn required<'a>(params: &'a Params, key: &str) -> Result<&'a str, Reply> {
    params
        .get(key)
        .map(String::as_str)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Reply::bad_request(format!("missing parameter {key:?}")))
}

fn parsed<T: FromStr>(params: &Params, key: &str, default: Option<T>) -> Result<T, Reply> {
    match (params.get(key), default) {
        (None, Some(d)) => Ok(d),
        (None, None) => Err(Reply::bad_request(format!("missing parameter {key:?}"))),
        (Some(v), _) => v.parse().map_err(|_| Reply::bad_request(format!("malformed parameter {key}={v:?}"))),
    }
}

fn run(f: impl FnOnce() -> Result<Reply, Reply>) -> Reply {
    f().unwrap_or_else(|r| r)
}

pub fn summary(engine: &QueryEngine) -> Reply {
    Reply::ok(engine.summary())
}

pub fn bitexts(engine: &QueryEngine) -> Reply {
    Reply::ok(json!({ "bitexts": engine.bitext_summaries() }))
}

fn document_json(doc: &Document) -> Value {
    let constituents: Vec<Value> = doc
        .tree()
        .iter()
        .map(|c| json!({ "id": c.id, "level": c.level, "span": c.span, "parent": c.parent }))
        .collect();
    json!({
        "id": doc.id(),
        "language": doc.language(),
        "text": doc.text(),
        "constituents": constituents,
    })
}

/// Texts, constituents and links of one bitext, for rendering.
pub fn bitext(engine: &QueryEngine, id: &str) -> Reply {
    let Some(b) = engine.archive().bitext(id) else {
        return Error::UnknownBitext(id.to_string()).into();
    };
    let links: Vec<Value> = b
        .links()
        .iter()
        .map(|l| {
            json!({
                "level": l.level,
                "shape": l.shape().ok(),
                "src": l.src,
                "tgt": l.tgt,
                "cost": l.cost,
            })
        })
        .collect();
    Reply::ok(json!({
        "id": b.id(),
        "source": document_json(b.source()),
        "target": document_json(b.target()),
        "links": links,
        "degraded": b.degraded(),
    }))
}

pub fn countertext(engine: &QueryEngine, id: &str, params: &Params) -> Reply {
    run(|| {
        let side: Side = parsed(params, "side", None)?;
        let start: usize = parsed(params, "start", None)?;
        let end: usize = parsed(params, "end", None)?;
        if start > end {
            return Err(Reply::bad_request("start must not exceed end"));
        }
        let span = Span::new(start, end);
        let rungs = engine.countertext(id, side, span)?;
        Ok(Reply::ok(json!({ "bitext": id, "side": side, "span": span, "rungs": rungs })))
    })
}

pub fn counterwords(engine: &QueryEngine, params: &Params) -> Reply {
    run(|| {
        let word = required(params, "word")?;
        let side: Side = parsed(params, "side", Some(Side::Source))?;
        Ok(Reply::ok(engine.counterwords(word, side)?))
    })
}

pub fn concordance(engine: &QueryEngine, params: &Params) -> Reply {
    run(|| {
        let term = required(params, "term")?;
        let side: Side = parsed(params, "side", Some(Side::Source))?;
        let limit: usize = parsed(params, "limit", Some(DEFAULT_LIMIT))?;
        if limit == 0 {
            return Err(Reply::bad_request("limit must be at least 1"));
        }
        Ok(Reply::ok(engine.concordance(term, side, limit)?))
    })
}

pub fn forks(engine: &QueryEngine) -> Reply {
    Reply::ok(json!({ "forks": engine.archive().forks }))
}

pub fn phrases(engine: &QueryEngine, params: &Params) -> Reply {
    run(|| {
        let side: Option<Side> = match params.get("side") {
            None => None,
            Some(_) => Some(parsed(params, "side", None)?),
        };
        let list: Vec<_> = engine.archive().phrases.iter().filter(|p| side.is_none_or(|s| p.side == s)).collect();
        Ok(Reply::ok(json!({ "phrases": list })))
    })
}

pub fn stats(engine: &QueryEngine) -> Reply {
    Reply::ok(engine.stats())
}
