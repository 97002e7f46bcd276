//! Program representation and the primitive registry.
//!
//! ASTs carry no source positions: the structure IS the program, and the
//! printer lays it out canonically. Parse errors report positions from the
//! token stream instead.

/// A complete program: an ordered statement list where every variable is
/// bound before use and every execution path ends in exactly one `answer`.
/// Both invariants are enforced by the parser.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub statements: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// Binds a new variable, or assigns if the name is already in scope.
    Let { name: String, value: Expr },
    ForEach {
        var: String,
        list: Expr,
        body: Vec<Stmt>,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    /// Produces the program's answer and halts execution.
    Answer(Expr),
    /// Expression evaluated for its effect, value discarded.
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Text(String),
    Var(String),
    Call {
        name: String,
        args: Vec<Expr>,
    },
    Compare {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// The active-measurement combinator: evaluates `score` once per element
    /// of `list` with `var` bound, and yields the element whose score is
    /// smallest (`min`) or largest (`max`). Ties keep the earliest element.
    ArgBest {
        dir: Direction,
        var: String,
        list: Box<Expr>,
        score: Box<Expr>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
}

impl CmpOp {
    pub fn token(&self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    pub fn token(&self) -> &'static str {
        match self {
            Direction::Min => "min",
            Direction::Max => "max",
        }
    }
}

/// One registered primitive: call shape plus whether it moves the robot.
#[derive(Debug, Clone, Copy)]
pub struct PrimitiveBinding {
    pub name: &'static str,
    pub min_args: usize,
    pub max_args: usize,
    /// True exactly for the robot actions; pure helpers and perception
    /// queries leave the world untouched.
    pub effectful: bool,
    /// Dispatched through the primitive host (vs. evaluated in-interpreter).
    pub host: bool,
    /// One-line signature summary for the generated API documentation.
    pub doc: &'static str,
}

macro_rules! prim {
    ($name:literal, $min:literal..$max:literal, effectful: $eff:literal, host: $host:literal, $doc:literal) => {
        PrimitiveBinding {
            name: $name,
            min_args: $min,
            max_args: $max,
            effectful: $eff,
            host: $host,
            doc: $doc,
        }
    };
}

/// Everything a program may call. Host primitives go through the
/// perception-action API; the rest are pure patch/list/text helpers.
pub const REGISTRY: &[PrimitiveBinding] = &[
    prim!("find", 1..1, effectful: false, host: true,
        "find(label) -> patches: detect objects matching the text label in the current view"),
    prim!("exists", 1..1, effectful: false, host: true,
        "exists(label) -> bool: whether any object matching the label is in view"),
    prim!("visual_query", 1..2, effectful: false, host: true,
        "visual_query(question[, patch]) -> text: ask the vision model; without a patch 'What are the items in this image?' lists names, with a patch 'What is this?' names it"),
    prim!("language_query", 1..1, effectful: false, host: true,
        "language_query(question) -> text: ask the language model a knowledge question, e.g. which listed item is heaviest"),
    prim!("go_to_object", 1..1, effectful: true, host: true,
        "go_to_object(patch): drive until the object is centered at standoff range"),
    prim!("focus_on_patch", 1..1, effectful: true, host: true,
        "focus_on_patch(patch): strafe until the object is centered, range unchanged"),
    prim!("measure_distance", 1..1, effectful: true, host: true,
        "measure_distance(patch) -> number: center the object, then read the rangefinder in meters"),
    prim!("pick_up", 1..1, effectful: true, host: true,
        "pick_up(patch) -> text: grasp the centered object in front of the robot, returns its id"),
    prim!("put_on", 1..1, effectful: true, host: true,
        "put_on(patch): place the held object onto the surface behind the patch"),
    prim!("measure_weight", 0..0, effectful: true, host: true,
        "measure_weight() -> number: weigh the held object in kilograms"),
    prim!("centroid", 1..1, effectful: false, host: false,
        "centroid(patch) -> [u, v]: pixel center of the patch"),
    prim!("area", 1..1, effectful: false, host: false,
        "area(patch) -> number: pixel area of the patch"),
    prim!("sort", 3..3, effectful: false, host: false,
        "sort(patches, key, order) -> patches: key is x|y|area|width|height, order is asc|desc"),
    prim!("cluster_rows", 1..2, effectful: false, host: false,
        "cluster_rows(patches[, gap]) -> rows: group into horizontal rows, top to bottom"),
    prim!("select_ordinal", 3..4, effectful: false, host: false,
        "select_ordinal(patches, n, direction[, row=r]) -> patch: the n-th patch counting from_left|from_right|from_top|from_bottom, negative n counts from the far end; row=r first restricts to the r-th row"),
    prim!("select_superlative", 3..3, effectful: false, host: false,
        "select_superlative(patches, dim, extreme) -> patch: dim is width|height|area, extreme is min|max"),
    prim!("count", 1..1, effectful: false, host: false,
        "count(list) -> number: element count"),
    prim!("first", 1..1, effectful: false, host: false,
        "first(list) -> element: the first element, error when empty"),
    prim!("dedupe", 1..1, effectful: false, host: false,
        "dedupe(patches) -> patches: drop any patch overlapping an earlier one (IoU above 0.3), collapsing repeated detections of one object"),
    prim!("concat", 2..8, effectful: false, host: false,
        "concat(a, b, ...) -> text|list: join texts or concatenate lists"),
    prim!("do", 1..8, effectful: false, host: false,
        "do(a, b, ...) -> last: evaluate in order, yield the last value"),
    prim!("tap", 1..8, effectful: false, host: false,
        "tap(a, b, ...) -> first: evaluate in order, yield the first value"),
];

pub fn binding(name: &str) -> Option<&'static PrimitiveBinding> {
    REGISTRY.iter().find(|b| b.name == name)
}

/// Words that cannot be variable names.
pub const RESERVED: &[&str] = &["let", "for", "in", "if", "else", "answer", "argbest", "row"];

/// Bare identifiers that read as string literals when no variable of that
/// name is in scope: the axis, sort-key, order, and extreme keywords.
pub const KEYWORD_LITERALS: &[&str] = &[
    "from_left",
    "from_right",
    "from_top",
    "from_bottom",
    "x",
    "y",
    "area",
    "width",
    "height",
    "asc",
    "desc",
    "min",
    "max",
];

/// Binder names may not collide with statement keywords, primitive names,
/// or the bare keyword literals; this keeps bare-identifier parsing
/// context-free and the printer's bare form unambiguous.
pub fn is_reserved(name: &str) -> bool {
    RESERVED.contains(&name) || binding(name).is_some() || is_keyword_literal(name)
}

pub fn is_keyword_literal(name: &str) -> bool {
    KEYWORD_LITERALS.contains(&name)
}

fn expr_has_effects(e: &Expr) -> bool {
    match e {
        Expr::Number(_) | Expr::Text(_) | Expr::Var(_) => false,
        Expr::Call { name, args } => {
            binding(name).map(|b| b.effectful).unwrap_or(false)
                || args.iter().any(expr_has_effects)
        }
        Expr::Compare { lhs, rhs, .. } => expr_has_effects(lhs) || expr_has_effects(rhs),
        Expr::ArgBest { list, score, .. } => expr_has_effects(list) || expr_has_effects(score),
    }
}

fn stmt_has_effects(s: &Stmt) -> bool {
    match s {
        Stmt::Let { value, .. } => expr_has_effects(value),
        Stmt::ForEach { list, body, .. } => {
            expr_has_effects(list) || body.iter().any(stmt_has_effects)
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
        } => {
            expr_has_effects(cond)
                || then_body.iter().any(stmt_has_effects)
                || else_body.iter().any(stmt_has_effects)
        }
        Stmt::Answer(e) | Stmt::Expr(e) => expr_has_effects(e),
    }
}

/// Whether the program contains any call to an effectful primitive. Programs
/// for which this is false cannot change the world.
pub fn has_effects(p: &Program) -> bool {
    p.statements.iter().any(stmt_has_effects)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique() {
        let mut names: Vec<&str> = REGISTRY.iter().map(|b| b.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), REGISTRY.len());
    }

    #[test]
    fn effectful_primitives_are_exactly_the_robot_actions() {
        let effectful: Vec<&str> = REGISTRY
            .iter()
            .filter(|b| b.effectful)
            .map(|b| b.name)
            .collect();
        assert_eq!(
            effectful,
            [
                "go_to_object",
                "focus_on_patch",
                "measure_distance",
                "pick_up",
                "put_on",
                "measure_weight"
            ]
        );
        // Every effectful primitive dispatches through the host.
        assert!(REGISTRY.iter().filter(|b| b.effectful).all(|b| b.host));
    }

    #[test]
    fn effect_analysis_sees_through_nesting() {
        let pure = Program {
            statements: vec![
                Stmt::Let {
                    name: "ps".into(),
                    value: Expr::Call {
                        name: "find".into(),
                        args: vec![Expr::Text("mug".into())],
                    },
                },
                Stmt::Answer(Expr::Var("ps".into())),
            ],
        };
        assert!(!has_effects(&pure));

        let acting = Program {
            statements: vec![Stmt::ForEach {
                var: "p".into(),
                list: Expr::Var("ps".into()),
                body: vec![Stmt::Expr(Expr::Call {
                    name: "go_to_object".into(),
                    args: vec![Expr::Var("p".into())],
                })],
            }],
        };
        assert!(has_effects(&acting));
    }
}
