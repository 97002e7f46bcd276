//! Random program generation for round-trip testing. Generated programs are
//! statically valid by construction (bound variables, registered primitives
//! with correct arity, answer coverage) but make no attempt at runtime type
//! sense; they exist to exercise the parser and printer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ast::{Direction, Expr, Program, Stmt, CmpOp, KEYWORD_LITERALS, REGISTRY};

struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    scopes: Vec<Vec<String>>,
    fresh: usize,
}

impl Gen<'_> {
    fn fresh_name(&mut self) -> String {
        self.fresh += 1;
        format!("v{}", self.fresh)
    }

    fn visible(&self) -> Vec<String> {
        self.scopes.iter().flatten().cloned().collect()
    }

    fn text(&mut self) -> String {
        const WORDS: &[&str] = &[
            "mug",
            "umbrella",
            "not found",
            "a \"quoted\" thing",
            "back\\slash",
            "line\nbreak",
            "tab\there",
            "",
        ];
        WORDS[self.rng.gen_range(0..WORDS.len())].to_owned()
    }

    fn number(&mut self) -> f64 {
        match self.rng.gen_range(0..4) {
            0 => self.rng.gen_range(-5i64..100) as f64,
            1 => self.rng.gen_range(-100i64..100) as f64 / 8.0,
            2 => 1e-6,
            _ => 2.5e3,
        }
    }

    fn expr(&mut self, depth: usize) -> Expr {
        let vars = self.visible();
        let max = if depth == 0 { 3 } else { 6 };
        match self.rng.gen_range(0..=max) {
            0 => Expr::Number(self.number()),
            1 => Expr::Text(self.text()),
            2 => {
                // Keyword literals print bare; make sure they round-trip.
                let k = KEYWORD_LITERALS[self.rng.gen_range(0..KEYWORD_LITERALS.len())];
                Expr::Text(k.to_owned())
            }
            3 => match vars.is_empty() {
                true => Expr::Number(self.number()),
                false => Expr::Var(vars[self.rng.gen_range(0..vars.len())].clone()),
            },
            4 => {
                let b = &REGISTRY[self.rng.gen_range(0..REGISTRY.len())];
                let n = self.rng.gen_range(b.min_args..=b.max_args.min(b.min_args + 2));
                let args = (0..n).map(|_| self.expr(depth - 1)).collect();
                Expr::Call {
                    name: b.name.to_owned(),
                    args,
                }
            }
            5 => {
                let ops = [CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge, CmpOp::Eq];
                Expr::Compare {
                    op: ops[self.rng.gen_range(0..ops.len())],
                    lhs: Box::new(self.expr(depth - 1)),
                    rhs: Box::new(self.expr(depth - 1)),
                }
            }
            _ => {
                let var = self.fresh_name();
                let list = Box::new(self.expr(depth - 1));
                self.scopes.push(vec![var.clone()]);
                let score = Box::new(self.expr(depth - 1));
                self.scopes.pop();
                Expr::ArgBest {
                    dir: if self.rng.gen() {
                        Direction::Min
                    } else {
                        Direction::Max
                    },
                    var,
                    list,
                    score,
                }
            }
        }
    }

    /// A statement that does not answer.
    fn stmt(&mut self, depth: usize) -> Stmt {
        match self.rng.gen_range(0..=3) {
            0 => {
                let value = self.expr(2);
                let name = self.fresh_name();
                self.scopes
                    .last_mut()
                    .expect("scope stack never empty")
                    .push(name.clone());
                Stmt::Let { name, value }
            }
            1 => Stmt::Expr(self.expr(2)),
            2 if depth > 0 => {
                let var = self.fresh_name();
                let list = self.expr(2);
                self.scopes.push(vec![var.clone()]);
                let body = self.block(depth - 1);
                self.scopes.pop();
                Stmt::ForEach { var, list, body }
            }
            _ if depth > 0 => {
                let cond = self.expr(2);
                self.scopes.push(Vec::new());
                let then_body = self.block(depth - 1);
                self.scopes.pop();
                self.scopes.push(Vec::new());
                let else_body = if self.rng.gen() {
                    self.block(depth - 1)
                } else {
                    Vec::new()
                };
                self.scopes.pop();
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                }
            }
            _ => Stmt::Expr(self.expr(1)),
        }
    }

    fn block(&mut self, depth: usize) -> Vec<Stmt> {
        let n = self.rng.gen_range(0..3);
        (0..n).map(|_| self.stmt(depth)).collect()
    }
}

/// A random statically-valid program.
pub fn gen_program(rng: &mut ChaCha8Rng) -> Program {
    let mut g = Gen {
        rng,
        scopes: vec![Vec::new()],
        fresh: 0,
    };
    let mut statements = Vec::new();
    let lead = g.rng.gen_range(0..4);
    for _ in 0..lead {
        statements.push(g.stmt(2));
    }
    // Finish with full answer coverage: either a plain answer or a branch
    // answering on both paths.
    if g.rng.gen_bool(0.25) {
        let cond = g.expr(2);
        g.scopes.push(Vec::new());
        let mut then_body = g.block(1);
        then_body.push(Stmt::Answer(g.expr(2)));
        g.scopes.pop();
        g.scopes.push(Vec::new());
        let mut else_body = g.block(1);
        else_body.push(Stmt::Answer(g.expr(2)));
        g.scopes.pop();
        statements.push(Stmt::If {
            cond,
            then_body,
            else_body,
        });
    } else {
        statements.push(Stmt::Answer(g.expr(2)));
    }
    Program { statements }
}
