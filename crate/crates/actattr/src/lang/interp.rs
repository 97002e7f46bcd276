//! Tree-walking evaluator. Programs run against any [`PrimitiveHost`], so
//! the same interpreter drives an in-process rig or a remote one over the
//! bridge; the trace records every host call either way.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    cluster_rows, select_ordinal, select_superlative, sort_patches, Axis, Dim, Extreme, GeomError,
    ImagePatch, SortKey, SortOrder,
};
use crate::rig::{HostCall, HostError, HostValue, PrimitiveHost};

use super::ast::{binding, CmpOp, Direction, Expr, Program, Stmt};
use super::printer::{expr_snippet, format_number};

/// Runtime value. Lists are heterogeneous in principle but in practice hold
/// patches (from `find`) or rows of patches (from `cluster_rows`).
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    Bool(bool),
    Patch(ImagePatch),
    List(Vec<Value>),
    Unit,
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Text(_) => "text",
            Value::Bool(_) => "bool",
            Value::Patch(_) => "patch",
            Value::List(_) => "list",
            Value::Unit => "unit",
        }
    }
}

/// One host call as the interpreter (or bridge session) saw it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: usize,
    pub effectful: bool,
    pub call: HostCall,
    pub result: Result<HostValue, HostError>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub entries: Vec<TraceEntry>,
}

impl EpisodeTrace {
    /// The robot-action entries only, in order.
    pub fn effectful(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter().filter(|e| e.effectful)
    }
}

/// Evaluation failure: a stable kind (primitive error kinds pass through
/// unchanged), the printed form of the failing node, and the trace prefix
/// up to and including the failing call.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at `{node}`: {message}")]
pub struct RuntimeError {
    pub kind: String,
    pub message: String,
    pub node: String,
    pub trace: EpisodeTrace,
    /// True when the failure came out of a host primitive (the world said
    /// no) rather than from the language itself. Recovery constructs may
    /// absorb host failures; interpreter errors always propagate.
    pub host: bool,
}

/// Two sightings of one object overlap far above this even under pixel
/// jitter; distinct objects in view never reach it. Used by `dedupe`.
const DEDUPE_IOU: f64 = 0.3;

#[derive(Debug, Clone, Copy)]
pub struct InterpConfig {
    /// Every statement and expression evaluation costs one step.
    pub step_budget: usize,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self { step_budget: 10_000 }
    }
}

/// A finished run: the answer text, the object id behind it when the answer
/// expression was a patch, and the full call trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub answer: String,
    pub answer_object: Option<String>,
    pub trace: EpisodeTrace,
    pub steps: usize,
}

enum Flow {
    Done,
    Answered(Value),
}

struct Interp<'h> {
    host: &'h mut dyn PrimitiveHost,
    scopes: Vec<HashMap<String, Value>>,
    trace: EpisodeTrace,
    steps: usize,
    budget: usize,
}

pub fn interpret(
    program: &Program,
    host: &mut dyn PrimitiveHost,
    cfg: &InterpConfig,
) -> Result<Outcome, RuntimeError> {
    let mut interp = Interp {
        host,
        scopes: vec![HashMap::new()],
        trace: EpisodeTrace::default(),
        steps: 0,
        budget: cfg.step_budget,
    };
    let flow = interp.run_block(&program.statements)?;
    let value = match flow {
        Flow::Answered(v) => v,
        // The parser guarantees answer coverage; reaching here means the
        // AST was built by hand and skipped validation.
        Flow::Done => {
            return Err(interp.error("NoAnswer", "program ended without an answer", "<program>"))
        }
    };
    let (answer, answer_object) = match value {
        Value::Patch(p) => {
            let id = p.object_id.clone();
            (id.clone().unwrap_or_else(|| p.label.clone()), id)
        }
        Value::Text(t) => (t, None),
        Value::Number(n) => (format_number(n), None),
        Value::Bool(b) => (b.to_string(), None),
        other => {
            return Err(interp.error(
                "InvalidAnswer",
                format!("cannot answer with a {}", other.type_name()),
                "<answer>",
            ))
        }
    };
    Ok(Outcome {
        answer,
        answer_object,
        trace: interp.trace,
        steps: interp.steps,
    })
}

impl Interp<'_> {
    fn error(&self, kind: &str, message: impl Into<String>, node: &str) -> RuntimeError {
        RuntimeError {
            kind: kind.to_owned(),
            message: message.into(),
            node: node.to_owned(),
            trace: self.trace.clone(),
            host: false,
        }
    }

    fn charge(&mut self, node: &Expr) -> Result<(), RuntimeError> {
        self.steps += 1;
        if self.steps > self.budget {
            Err(self.error(
                "BudgetExceeded",
                format!("step budget of {} exhausted", self.budget),
                &expr_snippet(node),
            ))
        } else {
            Ok(())
        }
    }

    fn charge_stmt(&mut self) -> Result<(), RuntimeError> {
        self.steps += 1;
        if self.steps > self.budget {
            Err(self.error(
                "BudgetExceeded",
                format!("step budget of {} exhausted", self.budget),
                "<statement>",
            ))
        } else {
            Ok(())
        }
    }

    fn lookup(&self, name: &str) -> Option<&Value> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    /// Bind-or-assign: rebinds the nearest enclosing `name`, or creates it
    /// in the innermost scope.
    fn assign(&mut self, name: &str, value: Value) {
        for scope in self.scopes.iter_mut().rev() {
            if let Some(slot) = scope.get_mut(name) {
                *slot = value;
                return;
            }
        }
        self.scopes
            .last_mut()
            .expect("scope stack never empty")
            .insert(name.to_owned(), value);
    }

    fn run_block(&mut self, stmts: &[Stmt]) -> Result<Flow, RuntimeError> {
        for s in stmts {
            if let Flow::Answered(v) = self.run_stmt(s)? {
                return Ok(Flow::Answered(v));
            }
        }
        Ok(Flow::Done)
    }

    fn run_stmt(&mut self, stmt: &Stmt) -> Result<Flow, RuntimeError> {
        self.charge_stmt()?;
        match stmt {
            Stmt::Let { name, value } => {
                let v = self.eval(value)?;
                self.assign(name, v);
                Ok(Flow::Done)
            }
            Stmt::Expr(e) => {
                self.eval(e)?;
                Ok(Flow::Done)
            }
            Stmt::Answer(e) => {
                let v = self.eval(e)?;
                Ok(Flow::Answered(v))
            }
            Stmt::ForEach { var, list, body } => {
                let items = match self.eval(list)? {
                    Value::List(items) => items,
                    other => {
                        return Err(self.error(
                            "TypeError",
                            format!("for-loop needs a list, got {}", other.type_name()),
                            &expr_snippet(list),
                        ))
                    }
                };
                for item in items {
                    self.scopes.push(HashMap::from([(var.clone(), item)]));
                    let flow = self.run_block(body);
                    self.scopes.pop();
                    if let Flow::Answered(v) = flow? {
                        return Ok(Flow::Answered(v));
                    }
                }
                Ok(Flow::Done)
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                let c = match self.eval(cond)? {
                    Value::Bool(b) => b,
                    other => {
                        return Err(self.error(
                            "TypeError",
                            format!("if-condition needs a bool, got {}", other.type_name()),
                            &expr_snippet(cond),
                        ))
                    }
                };
                let body = if c { then_body } else { else_body };
                self.scopes.push(HashMap::new());
                let flow = self.run_block(body);
                self.scopes.pop();
                flow
            }
        }
    }

    fn eval(&mut self, expr: &Expr) -> Result<Value, RuntimeError> {
        self.charge(expr)?;
        match expr {
            Expr::Number(n) => Ok(Value::Number(*n)),
            Expr::Text(s) => Ok(Value::Text(s.clone())),
            Expr::Var(name) => match self.lookup(name) {
                Some(v) => Ok(v.clone()),
                None => Err(self.error(
                    "UnboundVariable",
                    format!("`{name}` is not bound"),
                    name,
                )),
            },
            Expr::Compare { op, lhs, rhs } => {
                let node = || expr_snippet(expr);
                let a = self.eval(lhs)?;
                let b = self.eval(rhs)?;
                let result = match (op, &a, &b) {
                    (CmpOp::Eq, Value::Text(x), Value::Text(y)) => x == y,
                    (CmpOp::Eq, Value::Bool(x), Value::Bool(y)) => x == y,
                    (_, Value::Number(x), Value::Number(y)) => match op {
                        CmpOp::Lt => x < y,
                        CmpOp::Gt => x > y,
                        CmpOp::Le => x <= y,
                        CmpOp::Ge => x >= y,
                        CmpOp::Eq => x == y,
                    },
                    _ => {
                        return Err(self.error(
                            "TypeError",
                            format!(
                                "cannot compare {} {} {}",
                                a.type_name(),
                                op.token(),
                                b.type_name()
                            ),
                            &node(),
                        ))
                    }
                };
                Ok(Value::Bool(result))
            }
            Expr::ArgBest {
                dir,
                var,
                list,
                score,
            } => {
                let items = match self.eval(list)? {
                    Value::List(items) => items,
                    other => {
                        return Err(self.error(
                            "TypeError",
                            format!("argbest needs a list, got {}", other.type_name()),
                            &expr_snippet(expr),
                        ))
                    }
                };
                if items.is_empty() {
                    return Err(self.error(
                        "EmptyInput",
                        "argbest over an empty list",
                        &expr_snippet(expr),
                    ));
                }
                // A candidate whose score fails in the world (a host
                // error) drops out of the ranking: acting on a bogus
                // detection is how the program discovers it was bogus.
                // Language errors still propagate, and if every candidate
                // drops out the last world failure is the result.
                let mut best: Option<(f64, Value)> = None;
                let mut last_host_err: Option<RuntimeError> = None;
                for item in items {
                    self.scopes
                        .push(HashMap::from([(var.clone(), item.clone())]));
                    let scored = self.eval(score);
                    self.scopes.pop();
                    let s = match scored {
                        Ok(Value::Number(n)) => n,
                        Ok(other) => {
                            return Err(self.error(
                                "TypeError",
                                format!("argbest score must be a number, got {}", other.type_name()),
                                &expr_snippet(score),
                            ))
                        }
                        Err(e) if e.host => {
                            last_host_err = Some(e);
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    let replace = match &best {
                        None => true,
                        Some((b, _)) => match dir {
                            Direction::Min => s < *b,
                            Direction::Max => s > *b,
                        },
                    };
                    if replace {
                        best = Some((s, item));
                    }
                }
                match best {
                    Some((_, v)) => Ok(v),
                    None => {
                        let mut e = last_host_err.expect("no score and no error is impossible");
                        e.trace = self.trace.clone();
                        Err(e)
                    }
                }
            }
            Expr::Call { name, args } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(a)?);
                }
                let b = binding(name).expect("parser admits only registered primitives");
                if b.host {
                    self.call_host(name, vals, expr)
                } else {
                    self.call_builtin(name, vals, expr)
                }
            }
        }
    }

    fn call_host(
        &mut self,
        name: &str,
        mut vals: Vec<Value>,
        expr: &Expr,
    ) -> Result<Value, RuntimeError> {
        let node = expr_snippet(expr);
        let type_err = |me: &Self, want: &str, got: &Value| {
            me.error(
                "TypeError",
                format!("{name} expects {want}, got {}", got.type_name()),
                &node,
            )
        };
        let call = match name {
            "find" | "exists" => match vals.remove(0) {
                Value::Text(label) => {
                    if name == "find" {
                        HostCall::Find { label }
                    } else {
                        HostCall::Exists { label }
                    }
                }
                other => return Err(type_err(self, "a text label", &other)),
            },
            "visual_query" => {
                let question = match vals.remove(0) {
                    Value::Text(q) => q,
                    other => return Err(type_err(self, "a text question", &other)),
                };
                let patch = if vals.is_empty() {
                    None
                } else {
                    match vals.remove(0) {
                        Value::Patch(p) => Some(p),
                        other => return Err(type_err(self, "a patch", &other)),
                    }
                };
                HostCall::VisualQuery { question, patch }
            }
            "language_query" => match vals.remove(0) {
                Value::Text(question) => HostCall::LanguageQuery { question },
                other => return Err(type_err(self, "a text question", &other)),
            },
            "measure_weight" => HostCall::MeasureWeight,
            _ => {
                let patch = match vals.remove(0) {
                    Value::Patch(p) => p,
                    other => return Err(type_err(self, "a patch", &other)),
                };
                match name {
                    "go_to_object" => HostCall::GoToObject { patch },
                    "focus_on_patch" => HostCall::FocusOnPatch { patch },
                    "measure_distance" => HostCall::MeasureDistance { patch },
                    "pick_up" => HostCall::PickUp { patch },
                    "put_on" => HostCall::PutOn { patch },
                    other => unreachable!("unhandled host primitive {other}"),
                }
            }
        };
        let effectful = call.is_effectful();
        let result = self.host.call(&call);
        self.trace.entries.push(TraceEntry {
            seq: self.trace.entries.len(),
            effectful,
            call,
            result: result.clone(),
        });
        match result {
            Ok(v) => Ok(host_value(v)),
            Err(e) => {
                let mut err = self.error(&e.kind, e.message, &node);
                err.host = true;
                Err(err)
            }
        }
    }

    fn call_builtin(
        &mut self,
        name: &str,
        mut vals: Vec<Value>,
        expr: &Expr,
    ) -> Result<Value, RuntimeError> {
        let node = expr_snippet(expr);
        let geom = |me: &Self, e: GeomError| {
            let kind = match &e {
                GeomError::EmptyInput => "EmptyInput",
                GeomError::OrdinalOutOfRange { .. } => "OrdinalOutOfRange",
                GeomError::RowOutOfRange { .. } => "RowOutOfRange",
                _ => "InvalidArgument",
            };
            me.error(kind, e.to_string(), &node)
        };
        match name {
            "centroid" => {
                let p = self.want_patch(vals.remove(0), name, &node)?;
                let (u, v) = p.centroid();
                Ok(Value::List(vec![Value::Number(u), Value::Number(v)]))
            }
            "area" => {
                let p = self.want_patch(vals.remove(0), name, &node)?;
                Ok(Value::Number(p.area()))
            }
            "sort" => {
                let ps = self.want_patches(vals.remove(0), name, &node)?;
                let key = match self.want_text(vals.remove(0), name, &node)?.as_str() {
                    "x" => SortKey::X,
                    "y" => SortKey::Y,
                    "area" => SortKey::Area,
                    "width" => SortKey::Width,
                    "height" => SortKey::Height,
                    other => {
                        return Err(self.error(
                            "InvalidArgument",
                            format!("unknown sort key `{other}`"),
                            &node,
                        ))
                    }
                };
                let order = match self.want_text(vals.remove(0), name, &node)?.as_str() {
                    "asc" => SortOrder::Asc,
                    "desc" => SortOrder::Desc,
                    other => {
                        return Err(self.error(
                            "InvalidArgument",
                            format!("unknown sort order `{other}`"),
                            &node,
                        ))
                    }
                };
                let sorted = sort_patches(&ps, key, order).map_err(|e| geom(self, e))?;
                Ok(Value::List(sorted.into_iter().map(Value::Patch).collect()))
            }
            "cluster_rows" => {
                let ps = self.want_patches(vals.remove(0), name, &node)?;
                let gap = if vals.is_empty() {
                    None
                } else {
                    Some(self.want_number(vals.remove(0), name, &node)?)
                };
                let rows = cluster_rows(&ps, gap).map_err(|e| geom(self, e))?;
                Ok(Value::List(
                    rows.into_iter()
                        .map(|row| Value::List(row.into_iter().map(Value::Patch).collect()))
                        .collect(),
                ))
            }
            "select_ordinal" => {
                let ps = self.want_patches(vals.remove(0), name, &node)?;
                let pos = self.want_integer(vals.remove(0), name, &node)?;
                let axis = self.want_axis(vals.remove(0), &node)?;
                let row = if vals.is_empty() {
                    None
                } else {
                    Some(self.want_integer(vals.remove(0), name, &node)?)
                };
                let picked =
                    select_ordinal(&ps, pos, axis, row).map_err(|e| geom(self, e))?;
                Ok(Value::Patch(picked))
            }
            "select_superlative" => {
                let ps = self.want_patches(vals.remove(0), name, &node)?;
                let dim = match self.want_text(vals.remove(0), name, &node)?.as_str() {
                    "width" => Dim::Width,
                    "height" => Dim::Height,
                    "area" => Dim::Area,
                    other => {
                        return Err(self.error(
                            "InvalidArgument",
                            format!("unknown dimension `{other}`"),
                            &node,
                        ))
                    }
                };
                let extreme = match self.want_text(vals.remove(0), name, &node)?.as_str() {
                    "min" => Extreme::Min,
                    "max" => Extreme::Max,
                    other => {
                        return Err(self.error(
                            "InvalidArgument",
                            format!("unknown extreme `{other}`"),
                            &node,
                        ))
                    }
                };
                let picked = select_superlative(&ps, dim, extreme).map_err(|e| geom(self, e))?;
                Ok(Value::Patch(picked))
            }
            "count" => match vals.remove(0) {
                Value::List(items) => Ok(Value::Number(items.len() as f64)),
                other => Err(self.error(
                    "TypeError",
                    format!("count needs a list, got {}", other.type_name()),
                    &node,
                )),
            },
            "first" => match vals.remove(0) {
                Value::List(items) => items.into_iter().next().ok_or_else(|| {
                    self.error("EmptyInput", "first of an empty list", &node)
                }),
                other => Err(self.error(
                    "TypeError",
                    format!("first needs a list, got {}", other.type_name()),
                    &node,
                )),
            },
            "dedupe" => match vals.remove(0) {
                Value::List(items) => {
                    let mut kept: Vec<ImagePatch> = Vec::new();
                    for v in items {
                        let p = match v {
                            Value::Patch(p) => p,
                            other => {
                                return Err(self.error(
                                    "TypeError",
                                    format!("dedupe needs patches, got {}", other.type_name()),
                                    &node,
                                ))
                            }
                        };
                        if !kept.iter().any(|k| k.bbox.iou(&p.bbox) > DEDUPE_IOU) {
                            kept.push(p);
                        }
                    }
                    Ok(Value::List(kept.into_iter().map(Value::Patch).collect()))
                }
                other => Err(self.error(
                    "TypeError",
                    format!("dedupe needs a list, got {}", other.type_name()),
                    &node,
                )),
            },
            "concat" => match &vals[0] {
                Value::Text(_) => {
                    let mut out = String::new();
                    for v in vals {
                        match v {
                            Value::Text(t) => out.push_str(&t),
                            other => {
                                return Err(self.error(
                                    "TypeError",
                                    format!(
                                        "concat mixes text and {}",
                                        other.type_name()
                                    ),
                                    &node,
                                ))
                            }
                        }
                    }
                    Ok(Value::Text(out))
                }
                Value::List(_) => {
                    let mut out = Vec::new();
                    for v in vals {
                        match v {
                            Value::List(items) => out.extend(items),
                            other => {
                                return Err(self.error(
                                    "TypeError",
                                    format!(
                                        "concat mixes lists and {}",
                                        other.type_name()
                                    ),
                                    &node,
                                ))
                            }
                        }
                    }
                    Ok(Value::List(out))
                }
                other => Err(self.error(
                    "TypeError",
                    format!("concat needs texts or lists, got {}", other.type_name()),
                    &node,
                )),
            },
            "do" => Ok(vals.pop().expect("arity checked")),
            "tap" => Ok(vals.swap_remove(0)),
            other => unreachable!("unhandled builtin {other}"),
        }
    }

    fn want_patch(&self, v: Value, name: &str, node: &str) -> Result<ImagePatch, RuntimeError> {
        match v {
            Value::Patch(p) => Ok(p),
            other => Err(self.error(
                "TypeError",
                format!("{name} expects a patch, got {}", other.type_name()),
                node,
            )),
        }
    }

    fn want_patches(
        &self,
        v: Value,
        name: &str,
        node: &str,
    ) -> Result<Vec<ImagePatch>, RuntimeError> {
        match v {
            Value::List(items) => items
                .into_iter()
                .map(|i| self.want_patch(i, name, node))
                .collect(),
            other => Err(self.error(
                "TypeError",
                format!("{name} expects a patch list, got {}", other.type_name()),
                node,
            )),
        }
    }

    fn want_text(&self, v: Value, name: &str, node: &str) -> Result<String, RuntimeError> {
        match v {
            Value::Text(t) => Ok(t),
            other => Err(self.error(
                "TypeError",
                format!("{name} expects text, got {}", other.type_name()),
                node,
            )),
        }
    }

    fn want_number(&self, v: Value, name: &str, node: &str) -> Result<f64, RuntimeError> {
        match v {
            Value::Number(n) => Ok(n),
            other => Err(self.error(
                "TypeError",
                format!("{name} expects a number, got {}", other.type_name()),
                node,
            )),
        }
    }

    fn want_integer(&self, v: Value, name: &str, node: &str) -> Result<i64, RuntimeError> {
        let n = self.want_number(v, name, node)?;
        if n.fract() == 0.0 && n.abs() <= i64::MAX as f64 {
            Ok(n as i64)
        } else {
            Err(self.error(
                "InvalidArgument",
                format!("{name} expects an integer, got {n}"),
                node,
            ))
        }
    }

    fn want_axis(&self, v: Value, node: &str) -> Result<Axis, RuntimeError> {
        match v {
            Value::Text(t) => match t.as_str() {
                "from_left" => Ok(Axis::FromLeft),
                "from_right" => Ok(Axis::FromRight),
                "from_top" => Ok(Axis::FromTop),
                "from_bottom" => Ok(Axis::FromBottom),
                other => Err(self.error(
                    "InvalidArgument",
                    format!("unknown direction `{other}`"),
                    node,
                )),
            },
            other => Err(self.error(
                "TypeError",
                format!("direction must be text, got {}", other.type_name()),
                node,
            )),
        }
    }
}

fn host_value(v: HostValue) -> Value {
    match v {
        HostValue::Patches(ps) => Value::List(ps.into_iter().map(Value::Patch).collect()),
        HostValue::Bool(b) => Value::Bool(b),
        HostValue::Text(t) => Value::Text(t),
        // Programs see the chosen name; the unknown-item list stays visible
        // in the trace entry.
        HostValue::Language(ans) => Value::Text(ans.answer),
        HostValue::Servo(_) => Value::Unit,
        HostValue::Number(n) => Value::Number(n),
        HostValue::Unit => Value::Unit,
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse;
    use super::*;
    use crate::control::ControllerConfig;
    use crate::kb::KnowledgeBase;
    use crate::rig::Rig;
    use crate::scene::{CameraModel, CameraMount, NoiseProfile, Pose, RobotInit, SceneFile, SceneObject};

    fn scene(objects: Vec<SceneObject>) -> SceneFile {
        SceneFile {
            seed: 7,
            time_step: 0.1,
            camera: CameraModel {
                focal: 160.0,
                width: 320.0,
                height: 240.0,
                pose: CameraMount {
                    forward: 0.0,
                    lateral: 0.0,
                    height: 0.1,
                    yaw: 0.0,
                },
            },
            objects,
            robot: RobotInit {
                pose: Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
            },
        }
    }

    fn obj(id: &str, name: &str, x: f64, y: f64, half: f64, mass: f64) -> SceneObject {
        SceneObject {
            id: id.into(),
            name: name.into(),
            center: [x, y, half],
            extent: [half, half, half],
            mass,
            graspable: true,
        }
    }

    fn rig(objects: Vec<SceneObject>) -> Rig {
        Rig::new(
            &scene(objects),
            ControllerConfig::default(),
            NoiseProfile::zero(),
            KnowledgeBase::bundled(),
        )
        .unwrap()
    }

    fn run(rig: &mut Rig, text: &str) -> Result<Outcome, RuntimeError> {
        let p = parse(text).unwrap();
        interpret(&p, rig, &InterpConfig::default())
    }

    #[test]
    fn weight_extreme_program_finds_the_heaviest() {
        // Feather, dog, car on a mat; heaviest by actual measurement.
        let mut objects = vec![
            obj("f", "feather", -0.7, 2.0, 0.06, 0.005),
            obj("d", "dog", 0.0, 2.0, 0.06, 22.0),
            obj("c", "car", 0.7, 2.0, 0.06, 1450.0),
        ];
        objects.push(SceneObject {
            id: "m".into(),
            name: "mat".into(),
            center: [0.0, 2.0, 0.005],
            extent: [1.6, 0.8, 0.005],
            mass: 3.0,
            graspable: false,
        });
        // Objects must rest on the mat, not intersect it.
        for o in objects.iter_mut().take(3) {
            o.center[2] = 0.01 + 0.06;
        }
        let mut rig = rig(objects);
        let text = "let ps = concat(find(\"feather\"), find(\"dog\"), find(\"car\"))\nlet surface = first(find(\"mat\"))\nanswer argbest(max, p in ps, do(go_to_object(p), pick_up(p), tap(measure_weight(), put_on(surface))))\n";
        let out = run(&mut rig, text).unwrap();
        assert_eq!(out.answer, "c");
        assert_eq!(out.answer_object.as_deref(), Some("c"));
        // Per object: go_to_object, pick_up, measure_weight, put_on.
        let actions: Vec<&str> = out
            .trace
            .effectful()
            .map(|e| e.call.primitive_name())
            .collect();
        assert_eq!(
            actions,
            [
                "go_to_object", "pick_up", "measure_weight", "put_on",
                "go_to_object", "pick_up", "measure_weight", "put_on",
                "go_to_object", "pick_up", "measure_weight", "put_on",
            ]
        );
    }

    #[test]
    fn exists_guard_answers_not_found() {
        let mut rig = rig(vec![obj("a", "mug", 0.0, 2.0, 0.06, 0.3)]);
        let text = "if exists(\"umbrella\") {\n  answer first(find(\"umbrella\"))\n} else {\n  answer \"not found\"\n}\n";
        let out = run(&mut rig, text).unwrap();
        assert_eq!(out.answer, "not found");
        assert_eq!(out.answer_object, None);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mut rig = rig(vec![
            obj("a", "mug", -0.5, 2.0, 0.06, 0.3),
            obj("b", "mug", 0.5, 2.0, 0.06, 0.3),
        ]);
        let p = parse(
            "let ps = find(\"mug\")\nfor p in ps {\n  for q in ps {\n    area(q)\n  }\n}\nanswer \"done\"\n",
        )
        .unwrap();
        let err = interpret(&p, &mut rig, &InterpConfig { step_budget: 10 }).unwrap_err();
        assert_eq!(err.kind, "BudgetExceeded");
    }

    #[test]
    fn runtime_errors_carry_node_and_trace_prefix() {
        let mut rig = rig(vec![obj("a", "mug", 0.0, 2.0, 0.06, 0.3)]);
        let text = "let ps = find(\"mug\")\nanswer select_ordinal(ps, 5, from_left)\n";
        let err = run(&mut rig, text).unwrap_err();
        assert_eq!(err.kind, "OrdinalOutOfRange");
        assert!(err.node.contains("select_ordinal"), "node: {}", err.node);
        // The find call made it into the trace before the failure.
        assert_eq!(err.trace.entries.len(), 1);
        assert_eq!(err.trace.entries[0].call.primitive_name(), "find");
    }

    #[test]
    fn loop_updates_an_outer_binding() {
        let mut rig = rig(vec![
            obj("small", "mug", -0.5, 2.0, 0.04, 0.3),
            obj("big", "mug", 0.5, 2.0, 0.08, 0.3),
        ]);
        // The explicit compare-and-update pattern, without argbest.
        let text = "let ps = find(\"mug\")\nlet best = first(ps)\nfor p in ps {\n  if area(p) > area(best) {\n    let best = p\n  }\n}\nanswer best\n";
        let out = run(&mut rig, text).unwrap();
        assert_eq!(out.answer, "big");
    }

    #[test]
    fn argbest_ties_keep_the_first_element() {
        let mut rig = rig(vec![
            obj("a", "mug", -0.5, 2.0, 0.06, 0.3),
            obj("b", "mug", 0.5, 2.0, 0.06, 0.3),
        ]);
        let text = "let ps = find(\"mug\")\nanswer argbest(min, p in ps, 1)\n";
        let out = run(&mut rig, text).unwrap();
        assert_eq!(out.answer, "a");
    }

    #[test]
    fn effect_free_program_leaves_world_unchanged() {
        let mut rig = rig(vec![
            obj("a", "mug", -0.5, 2.0, 0.06, 0.3),
            obj("b", "book", 0.5, 2.0, 0.06, 0.5),
        ]);
        let before = rig.state_hash();
        let text = "let ps = concat(find(\"mug\"), find(\"book\"))\nlet rows = cluster_rows(ps)\nlet n = count(rows)\nif n > 0 {\n  answer select_superlative(ps, area, max)\n} else {\n  answer \"empty\"\n}\n";
        let p = parse(text).unwrap();
        assert!(!super::super::ast::has_effects(&p));
        let out = interpret(&p, &mut rig, &InterpConfig::default()).unwrap();
        assert_eq!(rig.state_hash(), before);
        assert!(out.answer == "a" || out.answer == "b");
    }

    #[test]
    fn interpretation_is_deterministic() {
        let objs = || {
            vec![
                obj("a", "mug", -0.5, 2.0, 0.05, 0.3),
                obj("b", "mug", 0.5, 2.0, 0.07, 0.3),
            ]
        };
        let text = "let ps = find(\"mug\")\nanswer argbest(min, p in ps, do(focus_on_patch(p), measure_distance(p)))\n";
        let mut r1 = rig(objs());
        let mut r2 = rig(objs());
        let o1 = run(&mut r1, text).unwrap();
        let o2 = run(&mut r2, text).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(r1.state_hash(), r2.state_hash());
    }

    #[test]
    fn distance_argbest_matches_ground_truth_minimum() {
        // True nearest by euclidean robot distance is the close mug.
        let mut rig = rig(vec![
            obj("near", "mug", -0.4, 1.5, 0.06, 0.3),
            obj("far", "mug", 0.6, 3.0, 0.06, 0.3),
        ]);
        let text = "let ps = find(\"mug\")\nanswer argbest(min, p in ps, do(focus_on_patch(p), measure_distance(p)))\n";
        let out = run(&mut rig, text).unwrap();
        assert_eq!(out.answer, "near");
    }

    #[test]
    fn visual_then_language_pipeline_answers_by_name() {
        let mut rig = rig(vec![
            obj("f", "feather", -0.7, 2.0, 0.06, 0.005),
            obj("d", "dog", 0.0, 2.0, 0.06, 22.0),
            obj("c", "car", 0.7, 2.0, 0.06, 1450.0),
        ]);
        let text = format!(
            "let items = visual_query(\"{}\")\nanswer language_query(concat(\"{} Items: \", items, \".\"))\n",
            crate::scene::LIST_ITEMS_QUESTION,
            crate::scene::HEAVIEST_QUESTION,
        );
        let out = run(&mut rig, &text).unwrap();
        assert_eq!(out.answer, "car");
    }
}
