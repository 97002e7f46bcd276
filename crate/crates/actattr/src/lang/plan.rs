//! Query-to-program planning: a deterministic template planner for the four
//! query families, and a client for an external planner endpoint that
//! returns program text over a one-shot JSON POST.

use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Program, REGISTRY};
use super::parser::{parse, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryFamily {
    LocationOrdinal,
    SizeSuperlative,
    WeightExtreme,
    DistanceExtreme,
}

impl QueryFamily {
    /// Short task label used in suite names and result tables.
    pub fn task(&self) -> &'static str {
        match self {
            QueryFamily::LocationOrdinal => "location",
            QueryFamily::SizeSuperlative => "size",
            QueryFamily::WeightExtreme => "weight",
            QueryFamily::DistanceExtreme => "distance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "location" => Some(QueryFamily::LocationOrdinal),
            "size" => Some(QueryFamily::SizeSuperlative),
            "weight" => Some(QueryFamily::WeightExtreme),
            "distance" => Some(QueryFamily::DistanceExtreme),
            _ => None,
        }
    }
}

/// A natural-language task over a paired scene, with the object id that a
/// correct answer must name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub family: QueryFamily,
    pub ground_truth: String,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("unrecognized query: {0}")]
    UnrecognizedQuery(String),
    #[error("planner endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("planner output invalid ({error}); raw response: {raw:?}")]
    PlannerOutputInvalid { error: ParseError, raw: String },
}

/// Ordinal vocabulary shared by query generation and template parsing.
/// Positive counts from the near end, negative from the far end.
pub const ORDINAL_WORDS: &[(&str, i64)] = &[
    ("first", 1),
    ("second", 2),
    ("third", 3),
    ("fourth", 4),
    ("fifth", 5),
    ("last", -1),
    ("second to last", -2),
    ("third to last", -3),
];

pub fn ordinal_word(n: i64) -> Option<&'static str> {
    ORDINAL_WORDS.iter().find(|(_, v)| *v == n).map(|(w, _)| *w)
}

fn parse_ordinal(text: &str) -> Option<(i64, &str)> {
    // Longest match first so "second to last" wins over "second".
    let mut best: Option<(&str, i64)> = None;
    for (w, v) in ORDINAL_WORDS {
        if text.starts_with(w) && best.map_or(true, |(bw, _)| w.len() > bw.len()) {
            best = Some((w, *v));
        }
    }
    best.map(|(w, v)| (v, &text[w.len()..]))
}

fn unrecognized(q: &Query) -> PlanError {
    PlanError::UnrecognizedQuery(q.text.clone())
}

fn quoted(name: &str) -> String {
    format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
}

fn finds(names: &[&str]) -> String {
    if names.len() == 1 {
        format!("find({})", quoted(names[0]))
    } else {
        let parts: Vec<String> = names.iter().map(|n| format!("find({})", quoted(n))).collect();
        format!("concat({})", parts.join(", "))
    }
}

/// Emit the canonical program for a recognized query. The emitted text is
/// parsed before being returned, so template output is valid by
/// construction.
pub fn plan_template(q: &Query) -> Result<Program, PlanError> {
    let text = match q.family {
        QueryFamily::WeightExtreme => plan_weight(q)?,
        QueryFamily::DistanceExtreme => plan_distance(q)?,
        QueryFamily::SizeSuperlative => plan_size(q)?,
        QueryFamily::LocationOrdinal => plan_location(q)?,
    };
    Ok(parse(&text).expect("template programs are valid by construction"))
}

pub(crate) fn candidate_list(q: &Query) -> Result<(Vec<&str>, &str), PlanError> {
    // "Out of the a, b, c, which one is ...?"
    let rest = q.text.strip_prefix("Out of the ").ok_or_else(|| unrecognized(q))?;
    let split = rest.find(", which one is ").ok_or_else(|| unrecognized(q))?;
    let names: Vec<&str> = rest[..split].split(", ").filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(unrecognized(q));
    }
    Ok((names, &rest[split + ", which one is ".len()..]))
}

fn plan_weight(q: &Query) -> Result<String, PlanError> {
    let (names, tail) = candidate_list(q)?;
    let dir = match tail {
        "the most lightweight?" => "min",
        "the heaviest?" => "max",
        _ => return Err(unrecognized(q)),
    };
    // Weighing is a long action chain, so the candidate set is built
    // defensively: every name is queried twice (a second detector pass
    // nearly squares away dropped detections) and `dedupe` collapses the
    // repeats. The placing surface is load-bearing for the whole episode;
    // it is queried three times and taken by largest box, which no
    // mislabeled tabletop object can outgrow.
    let queries: Vec<String> = names
        .iter()
        .flat_map(|n| {
            let f = format!("find({})", quoted(n));
            [f.clone(), f]
        })
        .collect();
    Ok(format!(
        "let ps = dedupe(concat({}))\nlet surface = select_superlative(concat(find(\"mat\"), find(\"mat\"), find(\"mat\")), area, max)\nanswer argbest({dir}, p in ps, do(go_to_object(p), pick_up(p), tap(measure_weight(), put_on(surface))))\n",
        queries.join(", "),
    ))
}

fn plan_distance(q: &Query) -> Result<String, PlanError> {
    let (names, tail) = candidate_list(q)?;
    let dir = match tail {
        "closer to me?" => "min",
        "farther from me?" => "max",
        _ => return Err(unrecognized(q)),
    };
    Ok(format!(
        "let ps = {}\nanswer argbest({dir}, p in ps, do(focus_on_patch(p), measure_distance(p)))\n",
        finds(&names),
    ))
}

fn plan_size(q: &Query) -> Result<String, PlanError> {
    // "Which is the largest mug in the image?"
    let rest = q
        .text
        .strip_prefix("Which is the ")
        .ok_or_else(|| unrecognized(q))?;
    let (extreme, rest) = if let Some(r) = rest.strip_prefix("largest ") {
        ("max", r)
    } else if let Some(r) = rest.strip_prefix("smallest ") {
        ("min", r)
    } else {
        return Err(unrecognized(q));
    };
    let name = rest
        .strip_suffix(" in the image?")
        .ok_or_else(|| unrecognized(q))?;
    if name.is_empty() {
        return Err(unrecognized(q));
    }
    Ok(format!(
        "let ps = find({})\nanswer select_superlative(ps, area, {extreme})\n",
        quoted(name),
    ))
}

fn plan_location(q: &Query) -> Result<String, PlanError> {
    // "Give me the second umbrella from the left." or
    // "Give me the second umbrella from the left at the second to last row."
    let rest = q
        .text
        .strip_prefix("Give me the ")
        .ok_or_else(|| unrecognized(q))?;
    let (pos, rest) = parse_ordinal(rest).ok_or_else(|| unrecognized(q))?;
    let rest = rest.strip_prefix(' ').ok_or_else(|| unrecognized(q))?;
    let split = rest.find(" from the ").ok_or_else(|| unrecognized(q))?;
    let name = &rest[..split];
    if name.is_empty() {
        return Err(unrecognized(q));
    }
    let rest = &rest[split + " from the ".len()..];
    let (direction, rest) = if let Some(r) = rest.strip_prefix("left") {
        ("from_left", r)
    } else if let Some(r) = rest.strip_prefix("right") {
        ("from_right", r)
    } else {
        return Err(unrecognized(q));
    };
    let row = if rest == "." {
        None
    } else {
        let r = rest
            .strip_prefix(" at the ")
            .and_then(|r| r.strip_suffix(" row."))
            .ok_or_else(|| unrecognized(q))?;
        let (row, leftover) = parse_ordinal(r).ok_or_else(|| unrecognized(q))?;
        if !leftover.is_empty() {
            return Err(unrecognized(q));
        }
        Some(row)
    };
    let select = match row {
        Some(r) => format!("select_ordinal(ps, {pos}, {direction}, row={r})"),
        None => format!("select_ordinal(ps, {pos}, {direction})"),
    };
    Ok(format!("let ps = find({})\nanswer {select}\n", quoted(name)))
}

/// The DSL reference handed to an external planner: grammar sketch plus the
/// registry, generated so it never drifts from the implementation.
pub fn api_documentation() -> String {
    let mut doc = String::from(
        "Program language (line-oriented):\n\
         \x20 let NAME = EXPR\n\
         \x20 for VAR in LIST { ... }\n\
         \x20 if COND { ... } else { ... }\n\
         \x20 answer EXPR        (produces the result and halts)\n\
         \x20 EXPR               (call evaluated for its effect)\n\
         Expressions: numbers, \"strings\", variables, comparisons\n\
         (< > <= >= ==), primitive calls, and\n\
         argbest(min|max, VAR in LIST, SCORE) which yields the element of\n\
         LIST whose SCORE is smallest or largest.\n\
         Bare keywords (no quotes needed): from_left from_right from_top\n\
         from_bottom x y area width height asc desc min max.\n\
         Every program must end every path with exactly one answer.\n\
         Primitives:\n",
    );
    for b in REGISTRY {
        doc.push_str("  ");
        doc.push_str(b.doc);
        doc.push('\n');
    }
    doc
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerClientConfig {
    pub timeout: Duration,
    /// Extra connection attempts after the first failure.
    pub retries: u32,
}

impl Default for PlannerClientConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(5),
            retries: 1,
        }
    }
}

#[derive(Serialize)]
struct PlanRequest<'a> {
    api_doc: &'a str,
    query: &'a str,
}

#[derive(Deserialize)]
struct PlanResponse {
    program_text: String,
}

/// Ask a remote planner for a program. The response must parse; invalid
/// output is returned as an error with the raw text attached, never
/// repaired.
pub fn plan_external(
    q: &Query,
    endpoint: &str,
    api_doc: &str,
    cfg: &PlannerClientConfig,
) -> Result<Program, PlanError> {
    let body = serde_json::to_string(&PlanRequest {
        api_doc,
        query: &q.text,
    })
    .expect("request serializes");
    let raw = post_json(endpoint, &body, cfg)?;
    let parsed: PlanResponse = serde_json::from_str(&raw).map_err(|e| {
        PlanError::PlannerOutputInvalid {
            error: ParseError::Syntax {
                line: 1,
                col: 1,
                message: format!("response is not a program_text document: {e}"),
            },
            raw: raw.clone(),
        }
    })?;
    match parse(&parsed.program_text) {
        Ok(p) => Ok(p),
        Err(error) => Err(PlanError::PlannerOutputInvalid {
            error,
            raw: parsed.program_text,
        }),
    }
}

fn connect(endpoint: &str, cfg: &PlannerClientConfig) -> Result<TcpStream, PlanError> {
    let addr = endpoint.trim_start_matches("http://");
    let addr = addr.split('/').next().unwrap_or(addr);
    let unreachable = |e: String| PlanError::EndpointUnreachable(format!("{addr}: {e}"));
    let mut last = String::from("no address");
    for _ in 0..=cfg.retries {
        let addrs = match addr.to_socket_addrs() {
            Ok(a) => a,
            Err(e) => {
                last = e.to_string();
                continue;
            }
        };
        for sock in addrs {
            match TcpStream::connect_timeout(&sock, cfg.timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(cfg.timeout)).ok();
                    s.set_write_timeout(Some(cfg.timeout)).ok();
                    return Ok(s);
                }
                Err(e) => last = e.to_string(),
            }
        }
    }
    Err(unreachable(last))
}

fn post_json(
    endpoint: &str,
    body: &str,
    cfg: &PlannerClientConfig,
) -> Result<String, PlanError> {
    let mut stream = connect(endpoint, cfg)?;
    let path = endpoint
        .trim_start_matches("http://")
        .find('/')
        .map(|i| &endpoint.trim_start_matches("http://")[i..])
        .unwrap_or("/plan");
    let host = endpoint
        .trim_start_matches("http://")
        .split('/')
        .next()
        .unwrap_or(endpoint);
    let request = format!(
        "POST {path} HTTP/1.1\r\nHost: {host}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len(),
    );
    let io_err = |e: std::io::Error| PlanError::EndpointUnreachable(e.to_string());
    stream.write_all(request.as_bytes()).map_err(io_err)?;
    let mut response = Vec::new();
    stream.read_to_end(&mut response).map_err(io_err)?;
    let text = String::from_utf8_lossy(&response);
    let (head, rest) = text
        .split_once("\r\n\r\n")
        .ok_or_else(|| PlanError::EndpointUnreachable("malformed HTTP response".into()))?;
    let status = head.lines().next().unwrap_or_default();
    let code = status.split_whitespace().nth(1).unwrap_or("");
    if code != "200" {
        return Err(PlanError::EndpointUnreachable(format!(
            "planner answered {status}"
        )));
    }
    let declared = head.lines().find_map(|l| {
        let lower = l.to_ascii_lowercase();
        let v = lower.strip_prefix("content-length:")?;
        v.trim().parse::<usize>().ok()
    });
    let body = match declared {
        Some(n) if n <= rest.len() => &rest[..n],
        _ => rest,
    };
    Ok(body.to_owned())
}
