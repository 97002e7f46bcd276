//! Result aggregation and rendering. All three formats come from one
//! [`RunOutput`] with rows sorted by (task, method) and no timestamps, so
//! equal inputs render byte-identical reports. The JSON form validates
//! against the schema bundled at `schemas/result.schema.json`.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::control::ControllerConfig;
use crate::scene::NoiseProfile;

use super::methods::MethodResult;

pub const RESULT_SCHEMA: &str = include_str!("../../schemas/result.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub episodes: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    /// Name of the schema file this document conforms to.
    pub schema: String,
    pub noise: NoiseProfile,
    /// Digest of the noise profile and controller configuration that
    /// produced the rows; reports with equal hashes are comparable.
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
    pub notes: Vec<String>,
}

pub fn config_hash(noise: &NoiseProfile, cfg: &ControllerConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(noise).expect("noise serializes"));
    hasher.update(serde_json::to_vec(cfg).expect("config serializes"));
    format!("{:x}", hasher.finalize())
}

/// Fold method results into a render-ready report.
pub fn collect(
    results: &[MethodResult],
    noise: &NoiseProfile,
    cfg: &ControllerConfig,
) -> RunOutput {
    let mut rows: Vec<ResultRow> = results
        .iter()
        .map(|r| ResultRow {
            task: r.task.clone(),
            method: r.method.clone(),
            seed: r.seed,
            episodes: r.episodes,
            correct: r.correct,
            accuracy: r.accuracy,
        })
        .collect();
    rows.sort_by(|a, b| (&a.task, &a.method, a.seed).cmp(&(&b.task, &b.method, b.seed)));
    RunOutput {
        schema: "result.schema.json".into(),
        noise: *noise,
        config_hash: config_hash(noise, cfg),
        rows,
        notes: vec![
            "The GPT-4o direct-answer baseline is omitted: this harness runs offline \
             without a hosted language model."
                .into(),
            "vqa_only answers with a uniform random guess over its listed items; it can \
             name objects but has no way to localize or rank them."
                .into(),
        ],
    }
}

pub fn render_json(out: &RunOutput) -> String {
    let mut text = serde_json::to_string_pretty(out).expect("report serializes");
    text.push('\n');
    text
}

pub fn render_csv(out: &RunOutput) -> String {
    let mut text = String::from("task,method,seed,episodes,correct,accuracy\n");
    for r in &out.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{:.4}\n",
            r.task, r.method, r.seed, r.episodes, r.correct, r.accuracy
        ));
    }
    text
}

pub fn render_markdown(out: &RunOutput) -> String {
    let mut text = String::from("# Method comparison\n\n");
    text.push_str(&format!(
        "Noise: miss {:.3}, merge {:.3}, jitter {:.1} px, mislabel {:.3}. Config hash `{}`.\n\n",
        out.noise.miss_rate,
        out.noise.merge_rate,
        out.noise.jitter_sigma,
        out.noise.mislabel_rate,
        &out.config_hash[..12],
    ));
    text.push_str("| task | method | seed | episodes | correct | accuracy |\n");
    text.push_str("|------|--------|------|----------|---------|----------|\n");
    for r in &out.rows {
        text.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.4} |\n",
            r.task, r.method, r.seed, r.episodes, r.correct, r.accuracy
        ));
    }
    text.push_str("\n## Notes\n\n");
    for note in &out.notes {
        text.push_str(&format!("- {note}\n"));
    }
    text
}

/// Structural validation against the subset of JSON Schema the bundled
/// schema uses: type, enum, required, properties, additionalProperties,
/// items, minimum, maximum. Returns the first violation with its path.
pub fn validate_against_schema(schema: &Value, doc: &Value) -> Result<(), String> {
    validate_at(schema, doc, "$")
}

fn validate_at(schema: &Value, doc: &Value, path: &str) -> Result<(), String> {
    let Some(rules) = schema.as_object() else {
        return Err(format!("{path}: schema node is not an object"));
    };

    if let Some(expected) = rules.get("type").and_then(Value::as_str) {
        let ok = match expected {
            "object" => doc.is_object(),
            "array" => doc.is_array(),
            "string" => doc.is_string(),
            "number" => doc.is_number(),
            "integer" => doc.as_f64().is_some_and(|v| v.fract() == 0.0),
            "boolean" => doc.is_boolean(),
            "null" => doc.is_null(),
            other => return Err(format!("{path}: unsupported schema type {other:?}")),
        };
        if !ok {
            return Err(format!("{path}: expected {expected}, got {doc}"));
        }
    }

    if let Some(allowed) = rules.get("enum").and_then(Value::as_array) {
        if !allowed.contains(doc) {
            return Err(format!("{path}: {doc} not in {allowed:?}"));
        }
    }

    if let Some(min) = rules.get("minimum").and_then(Value::as_f64) {
        match doc.as_f64() {
            Some(v) if v >= min => {}
            _ => return Err(format!("{path}: {doc} below minimum {min}")),
        }
    }
    if let Some(max) = rules.get("maximum").and_then(Value::as_f64) {
        match doc.as_f64() {
            Some(v) if v <= max => {}
            _ => return Err(format!("{path}: {doc} above maximum {max}")),
        }
    }

    if let Some(required) = rules.get("required").and_then(Value::as_array) {
        let obj = doc
            .as_object()
            .ok_or_else(|| format!("{path}: required fields on a non-object"))?;
        for key in required.iter().filter_map(Value::as_str) {
            if !obj.contains_key(key) {
                return Err(format!("{path}: missing required field {key:?}"));
            }
        }
    }

    if let Some(props) = rules.get("properties").and_then(Value::as_object) {
        if let Some(obj) = doc.as_object() {
            for (key, sub) in props {
                if let Some(value) = obj.get(key) {
                    validate_at(sub, value, &format!("{path}.{key}"))?;
                }
            }
            if rules.get("additionalProperties") == Some(&Value::Bool(false)) {
                for key in obj.keys() {
                    if !props.contains_key(key) {
                        return Err(format!("{path}: unexpected field {key:?}"));
                    }
                }
            }
        }
    }

    if let Some(item_schema) = rules.get("items") {
        if let Some(items) = doc.as_array() {
            for (i, item) in items.iter().enumerate() {
                validate_at(item_schema, item, &format!("{path}[{i}]"))?;
            }
        }
    }

    Ok(())
}
