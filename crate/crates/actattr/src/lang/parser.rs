//! Line-oriented concrete syntax.
//!
//! ```text
//! let ps = find("umbrella")
//! for p in ps {
//!   if area(p) > 100 {
//!     answer p
//!   }
//! }
//! answer "not found"
//! ```
//!
//! Statements end at newline; blocks use explicit braces with `{` closing
//! the header line and `}` (or `} else {`) on its own line. `#` starts a
//! comment. Scope and answer-path checking happen during the parse, so a
//! returned [`Program`] is ready to interpret.

use std::collections::HashSet;

use thiserror::Error;

use super::ast::{
    binding, is_keyword_literal, is_reserved, CmpOp, Direction, Expr, Program, Stmt,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: unknown primitive `{name}`")]
    UnknownPrimitive { line: usize, col: usize, name: String },
    #[error("{line}:{col}: `{name}` takes {expected} argument(s), got {got}")]
    ArityMismatch {
        line: usize,
        col: usize,
        name: String,
        expected: String,
        got: usize,
    },
    #[error("{line}:{col}: unbound variable `{name}`")]
    UnboundVariable { line: usize, col: usize, name: String },
    #[error("{line}:{col}: {message}")]
    AnswerPath { line: usize, col: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Assign,
    Lt,
    Gt,
    Le,
    Ge,
    EqEq,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format!("number {n}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Assign => "`=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        col,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut toks = Vec::new();
    let mut chars: Vec<char> = text.chars().collect();
    // A trailing newline simplifies the "statements end at newline" rule.
    if chars.last() != Some(&'\n') {
        chars.push('\n');
    }
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        let mut push = |tok: Tok| toks.push(Token { tok, line: tline, col: tcol });
        match c {
            '\n' => {
                push(Tok::Newline);
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            ' ' | '\t' | '\r' => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
                continue;
            }
            '(' => push(Tok::LParen),
            ')' => push(Tok::RParen),
            '{' => push(Tok::LBrace),
            '}' => push(Tok::RBrace),
            ',' => push(Tok::Comma),
            '<' | '>' | '=' => {
                let two = i + 1 < chars.len() && chars[i + 1] == '=';
                push(match (c, two) {
                    ('<', true) => Tok::Le,
                    ('<', false) => Tok::Lt,
                    ('>', true) => Tok::Ge,
                    ('>', false) => Tok::Gt,
                    ('=', true) => Tok::EqEq,
                    _ => Tok::Assign,
                });
                if two {
                    i += 1;
                    col += 1;
                }
            }
            '"' => {
                let mut s = String::new();
                let mut j = i + 1;
                let mut jcol = col + 1;
                loop {
                    if j >= chars.len() || chars[j] == '\n' {
                        return Err(syntax(line, col, "unterminated string"));
                    }
                    match chars[j] {
                        '"' => break,
                        '\\' => {
                            let esc = chars.get(j + 1).copied().unwrap_or('\n');
                            s.push(match esc {
                                '"' => '"',
                                '\\' => '\\',
                                'n' => '\n',
                                't' => '\t',
                                _ => {
                                    return Err(syntax(
                                        line,
                                        jcol,
                                        format!("unknown escape `\\{esc}`"),
                                    ))
                                }
                            });
                            j += 2;
                            jcol += 2;
                        }
                        ch => {
                            s.push(ch);
                            j += 1;
                            jcol += 1;
                        }
                    }
                }
                push(Tok::Str(s));
                col += j - i;
                i = j + 1;
                col += 1;
                continue;
            }
            '-' => {
                // No arithmetic in the grammar, so `-` only ever introduces
                // a negative number literal.
                if !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                    return Err(syntax(line, col, "`-` must start a number"));
                }
                let (tok, len) = lex_number(&chars[i..], line, col)?;
                push(tok);
                i += len;
                col += len;
                continue;
            }
            d if d.is_ascii_digit() => {
                let (tok, len) = lex_number(&chars[i..], line, col)?;
                push(tok);
                i += len;
                col += len;
                continue;
            }
            a if a.is_ascii_alphabetic() || a == '_' => {
                let mut j = i;
                while j < chars.len()
                    && (chars[j].is_ascii_alphanumeric() || chars[j] == '_')
                {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                push(Tok::Ident(word));
                col += j - i;
                i = j;
                continue;
            }
            other => return Err(syntax(line, col, format!("unexpected character `{other}`"))),
        }
        i += 1;
        col += 1;
    }
    toks.push(Token { tok: Tok::Eof, line, col });
    Ok(toks)
}

fn lex_number(rest: &[char], line: usize, col: usize) -> Result<(Tok, usize), ParseError> {
    let mut j = 0;
    if rest[0] == '-' {
        j = 1;
    }
    while j < rest.len() && rest[j].is_ascii_digit() {
        j += 1;
    }
    if j < rest.len() && rest[j] == '.' {
        j += 1;
        while j < rest.len() && rest[j].is_ascii_digit() {
            j += 1;
        }
    }
    if j < rest.len() && (rest[j] == 'e' || rest[j] == 'E') {
        j += 1;
        if j < rest.len() && (rest[j] == '+' || rest[j] == '-') {
            j += 1;
        }
        while j < rest.len() && rest[j].is_ascii_digit() {
            j += 1;
        }
    }
    let text: String = rest[..j].iter().collect();
    match text.parse::<f64>() {
        Ok(n) if n.is_finite() => Ok((Tok::Num(n), j)),
        _ => Err(syntax(line, col, format!("bad number literal `{text}`"))),
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    scopes: Vec<HashSet<String>>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<Token, ParseError> {
        let t = self.next();
        if &t.tok == want {
            Ok(t)
        } else {
            Err(syntax(
                t.line,
                t.col,
                format!("expected {what}, found {}", t.tok.describe()),
            ))
        }
    }

    fn expect_newline(&mut self) -> Result<(), ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Newline | Tok::Eof => Ok(()),
            other => Err(syntax(
                t.line,
                t.col,
                format!("expected end of line, found {}", other.describe()),
            )),
        }
    }

    fn skip_blank_lines(&mut self) {
        while self.peek().tok == Tok::Newline {
            self.pos += 1;
        }
    }

    fn in_scope(&self, name: &str) -> bool {
        self.scopes.iter().any(|s| s.contains(name))
    }

    fn bind(&mut self, name: &str) {
        if !self.in_scope(name) {
            self.scopes
                .last_mut()
                .expect("scope stack is never empty")
                .insert(name.to_owned());
        }
    }

    fn binder_name(&mut self, what: &str) -> Result<String, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Ident(name) if !is_reserved(&name) => Ok(name),
            Tok::Ident(name) => Err(syntax(
                t.line,
                t.col,
                format!("`{name}` is reserved and cannot name a {what}"),
            )),
            other => Err(syntax(
                t.line,
                t.col,
                format!("expected {what} name, found {}", other.describe()),
            )),
        }
    }

    /// Statements until `}` or EOF. Returns the block plus whether every
    /// path through it answers. A statement after a point where all paths
    /// have answered is unreachable and rejected.
    fn parse_block(&mut self, top_level: bool) -> Result<(Vec<Stmt>, bool), ParseError> {
        let mut stmts = Vec::new();
        let mut terminated = false;
        loop {
            self.skip_blank_lines();
            let t = self.peek().clone();
            match t.tok {
                Tok::Eof if top_level => break,
                Tok::RBrace if !top_level => break,
                Tok::Eof => {
                    return Err(syntax(t.line, t.col, "unexpected end of input, missing `}`"))
                }
                Tok::RBrace => {
                    return Err(syntax(t.line, t.col, "`}` without matching `{`"))
                }
                _ => {}
            }
            if terminated {
                return Err(ParseError::AnswerPath {
                    line: t.line,
                    col: t.col,
                    message: "unreachable statement: every path above already answered".into(),
                });
            }
            let (stmt, answers) = self.parse_stmt()?;
            terminated |= answers;
            stmts.push(stmt);
        }
        Ok((stmts, terminated))
    }

    fn parse_stmt(&mut self) -> Result<(Stmt, bool), ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(w) if w == "let" => {
                self.next();
                let name = self.binder_name("variable")?;
                self.expect(&Tok::Assign, "`=`")?;
                let value = self.parse_expr()?;
                self.expect_newline()?;
                self.bind(&name);
                Ok((Stmt::Let { name, value }, false))
            }
            Tok::Ident(w) if w == "for" => {
                self.next();
                let var = self.binder_name("loop variable")?;
                let kw = self.next();
                if kw.tok != Tok::Ident("in".into()) {
                    return Err(syntax(
                        kw.line,
                        kw.col,
                        format!("expected `in`, found {}", kw.tok.describe()),
                    ));
                }
                let list = self.parse_expr()?;
                self.expect(&Tok::LBrace, "`{`")?;
                self.expect_newline()?;
                self.scopes.push(HashSet::from([var.clone()]));
                let (body, _) = self.parse_block(false)?;
                self.scopes.pop();
                self.expect(&Tok::RBrace, "`}`")?;
                self.expect_newline()?;
                Ok((Stmt::ForEach { var, list, body }, false))
            }
            Tok::Ident(w) if w == "if" => {
                self.next();
                let cond = self.parse_expr()?;
                self.expect(&Tok::LBrace, "`{`")?;
                self.expect_newline()?;
                self.scopes.push(HashSet::new());
                let (then_body, then_answers) = self.parse_block(false)?;
                self.scopes.pop();
                self.expect(&Tok::RBrace, "`}`")?;
                let mut else_body = Vec::new();
                let mut else_answers = false;
                if self.peek().tok == Tok::Ident("else".into()) {
                    self.next();
                    self.expect(&Tok::LBrace, "`{`")?;
                    self.expect_newline()?;
                    self.scopes.push(HashSet::new());
                    let (body, answers) = self.parse_block(false)?;
                    self.scopes.pop();
                    self.expect(&Tok::RBrace, "`}`")?;
                    else_body = body;
                    else_answers = answers;
                }
                self.expect_newline()?;
                let both = then_answers && else_answers;
                Ok((Stmt::If { cond, then_body, else_body }, both))
            }
            Tok::Ident(w) if w == "answer" => {
                self.next();
                let value = self.parse_expr()?;
                self.expect_newline()?;
                Ok((Stmt::Answer(value), true))
            }
            _ => {
                let value = self.parse_expr()?;
                self.expect_newline()?;
                Ok((Stmt::Expr(value), false))
            }
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.parse_primary()?;
        let op = match self.peek().tok {
            Tok::Lt => CmpOp::Lt,
            Tok::Gt => CmpOp::Gt,
            Tok::Le => CmpOp::Le,
            Tok::Ge => CmpOp::Ge,
            Tok::EqEq => CmpOp::Eq,
            _ => return Ok(lhs),
        };
        self.next();
        let rhs = self.parse_primary()?;
        Ok(Expr::Compare {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        })
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Num(n) => Ok(Expr::Number(n)),
            Tok::Str(s) => Ok(Expr::Text(s)),
            Tok::LParen => {
                let e = self.parse_expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "argbest" => self.parse_argbest(),
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    self.parse_call(name, t.line, t.col)
                } else if self.in_scope(&name) {
                    Ok(Expr::Var(name))
                } else if is_keyword_literal(&name) {
                    Ok(Expr::Text(name))
                } else {
                    Err(ParseError::UnboundVariable {
                        line: t.line,
                        col: t.col,
                        name,
                    })
                }
            }
            other => Err(syntax(
                t.line,
                t.col,
                format!("expected an expression, found {}", other.describe()),
            )),
        }
    }

    fn parse_argbest(&mut self) -> Result<Expr, ParseError> {
        self.expect(&Tok::LParen, "`(`")?;
        let d = self.next();
        let dir = match &d.tok {
            Tok::Ident(w) if w == "min" => Direction::Min,
            Tok::Ident(w) if w == "max" => Direction::Max,
            other => {
                return Err(syntax(
                    d.line,
                    d.col,
                    format!("expected `min` or `max`, found {}", other.describe()),
                ))
            }
        };
        self.expect(&Tok::Comma, "`,`")?;
        let var = self.binder_name("argbest variable")?;
        let kw = self.next();
        if kw.tok != Tok::Ident("in".into()) {
            return Err(syntax(
                kw.line,
                kw.col,
                format!("expected `in`, found {}", kw.tok.describe()),
            ));
        }
        let list = self.parse_expr()?;
        self.expect(&Tok::Comma, "`,`")?;
        self.scopes.push(HashSet::from([var.clone()]));
        let score = self.parse_expr()?;
        self.scopes.pop();
        self.expect(&Tok::RParen, "`)`")?;
        Ok(Expr::ArgBest {
            dir,
            var,
            list: Box::new(list),
            score: Box::new(score),
        })
    }

    fn parse_call(&mut self, name: String, line: usize, col: usize) -> Result<Expr, ParseError> {
        let Some(b) = binding(&name) else {
            return Err(ParseError::UnknownPrimitive { line, col, name });
        };
        self.expect(&Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                // `row=` marks the optional row argument of select_ordinal,
                // and is mandatory in that position.
                let marker = self.peek().clone();
                if marker.tok == Tok::Ident("row".into()) {
                    self.next();
                    self.expect(&Tok::Assign, "`=`")?;
                    if name != "select_ordinal" || args.len() != 3 {
                        return Err(syntax(
                            marker.line,
                            marker.col,
                            "`row=` is only valid as the 4th argument of select_ordinal",
                        ));
                    }
                } else if name == "select_ordinal" && args.len() == 3 {
                    return Err(syntax(
                        marker.line,
                        marker.col,
                        "the 4th argument of select_ordinal must be written `row=...`",
                    ));
                }
                args.push(self.parse_expr()?);
                if self.peek().tok == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(&Tok::RParen, "`)`")?;
        if args.len() < b.min_args || args.len() > b.max_args {
            let expected = if b.min_args == b.max_args {
                format!("{}", b.min_args)
            } else {
                format!("{} to {}", b.min_args, b.max_args)
            };
            return Err(ParseError::ArityMismatch {
                line,
                col,
                name,
                expected,
                got: args.len(),
            });
        }
        Ok(Expr::Call { name, args })
    }
}

/// Parse program text. The result satisfies every static invariant: all
/// variables bound before use, all primitives known with correct arity, and
/// exactly one `answer` reachable on every execution path.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        scopes: vec![HashSet::new()],
    };
    let (statements, terminated) = p.parse_block(true)?;
    if !terminated {
        let t = p.peek().clone();
        return Err(ParseError::AnswerPath {
            line: t.line,
            col: t.col,
            message: "not every path through the program reaches an `answer`".into(),
        });
    }
    Ok(Program { statements })
}
