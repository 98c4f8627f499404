use super::ast::*;
use super::lexer::{tokenize, Spanned, Tok};
use super::SyntaxError;

const MAX_DEPTH: usize = 256;

const KEYWORDS: &[&str] = &[
    "rule",
    "priority",
    "on",
    "when",
    "do",
    "if",
    "else",
    "foreach",
    "in",
    "procedure",
    "true",
    "false",
    "matches",
    "allow",
    "deny",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub fn parse_rules(text: &str) -> Result<Vec<RuleAst>, SyntaxError> {
    let mut p = Parser::new(text)?;
    let mut rules = Vec::new();
    while !p.at(&Tok::Eof) {
        rules.push(p.rule()?);
    }
    Ok(rules)
}

pub fn parse_procedure(text: &str) -> Result<ProcedureAst, SyntaxError> {
    let mut p = Parser::new(text)?;
    let proc_ = p.procedure()?;
    p.expect(Tok::Eof, "end of input")?;
    Ok(proc_)
}

/// Parses a standalone expression (used by tests and tooling).
pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    p.expect(Tok::Eof, "end of input")?;
    Ok(e)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self, SyntaxError> {
        Ok(Parser { toks: tokenize(text)?, pos: 0, depth: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: &[&str]) -> SyntaxError {
        let sp = &self.toks[self.pos];
        SyntaxError {
            line: sp.line,
            column: sp.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: sp.tok.to_string(),
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), SyntaxError> {
        if self.at(&t) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(&[what]))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.at_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(&[&format!("`{kw}`")]))
        }
    }

    fn name(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.err(&[what])),
        }
    }

    fn var(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Var(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.err(&["variable"])),
        }
    }

    fn signed_int(&mut self) -> Result<i64, SyntaxError> {
        let negative = if self.at(&Tok::Minus) {
            self.bump();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Int(v) => {
                let value = if negative {
                    if v > i64::MAX as u64 + 1 {
                        return Err(self.err(&["64-bit integer"]));
                    }
                    (v as i128).wrapping_neg() as i64
                } else {
                    i64::try_from(v).map_err(|_| self.err(&["64-bit integer"]))?
                };
                self.bump();
                Ok(value)
            }
            _ => Err(self.err(&["integer"])),
        }
    }

    fn enter(&mut self) -> Result<(), SyntaxError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let mut e = self.err(&["shallower nesting"]);
            e.found = format!("nesting deeper than {MAX_DEPTH}");
            return Err(e);
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn rule(&mut self) -> Result<RuleAst, SyntaxError> {
        self.expect_kw("rule")?;
        let name = self.name("rule name")?;
        let priority = if self.at_kw("priority") {
            self.bump();
            self.signed_int()?
        } else {
            0
        };
        self.expect_kw("on")?;
        let pep = match self.peek() {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.bump();
                s
            }
            _ => return Err(self.err(&["PEP name"])),
        };
        let condition = if self.at_kw("when") {
            self.bump();
            self.expr()?
        } else {
            Expr::Bool(true)
        };
        self.expect_kw("do")?;
        let mut actions = vec![self.item()?];
        while self.at(&Tok::Semi) {
            self.bump();
            if self.at(&Tok::Eof) || self.at_kw("rule") {
                break;
            }
            actions.push(self.item()?);
        }
        if !(self.at(&Tok::Eof) || self.at_kw("rule")) {
            return Err(self.err(&["`;`", "`rule`", "end of input"]));
        }
        Ok(RuleAst { name, priority, pep, condition, actions })
    }

    fn procedure(&mut self) -> Result<ProcedureAst, SyntaxError> {
        self.expect_kw("procedure")?;
        let name = self.name("procedure name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut params: Vec<String> = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                let dup = matches!(self.peek(), Tok::Var(v) if params.contains(v));
                if dup {
                    return Err(self.err(&["distinct parameter name"]));
                }
                params.push(self.var()?);
                if self.at(&Tok::Comma) {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        let body = self.block()?;
        Ok(ProcedureAst { name, params, body })
    }

    fn block(&mut self) -> Result<ActionChain, SyntaxError> {
        self.expect(Tok::LBrace, "`{`")?;
        self.enter()?;
        let mut items = Vec::new();
        if !self.at(&Tok::RBrace) {
            items.push(self.item()?);
            while self.at(&Tok::Semi) {
                self.bump();
                if self.at(&Tok::RBrace) {
                    break;
                }
                items.push(self.item()?);
            }
        }
        self.expect(Tok::RBrace, "`}`")?;
        self.leave();
        Ok(items)
    }

    fn item(&mut self) -> Result<Action, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(k) if k == "allow" => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Action::Allow)
            }
            Tok::Ident(k) if k == "deny" => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let reason = match self.peek() {
                    Tok::Str(s) => s.clone(),
                    _ => return Err(self.err(&["string literal"])),
                };
                self.bump();
                self.expect(Tok::RParen, "`)`")?;
                Ok(Action::Deny(reason))
            }
            Tok::Ident(k) if k == "if" => {
                self.bump();
                let cond = self.expr()?;
                let then = self.block()?;
                let otherwise = if self.at_kw("else") {
                    self.bump();
                    Some(self.block()?)
                } else {
                    None
                };
                Ok(Action::If { cond, then, otherwise })
            }
            Tok::Ident(k) if k == "foreach" => {
                self.bump();
                let var = self.var()?;
                self.expect_kw("in")?;
                let iter = self.expr()?;
                let body = self.block()?;
                Ok(Action::Foreach { var, iter, body })
            }
            Tok::Var(v) => {
                self.bump();
                self.expect(Tok::Assign, "`=`")?;
                let value = match (self.peek(), self.peek_at(1)) {
                    (Tok::Ident(k), Tok::LParen) if !is_keyword(k) => Rhs::Call(self.call()?),
                    _ => Rhs::Expr(self.expr()?),
                };
                Ok(Action::Assign { var: v, value })
            }
            Tok::Ident(k) if !is_keyword(&k) => Ok(Action::Call(self.call()?)),
            _ => Err(self.err(&["micro-service call", "assignment", "`if`", "`foreach`", "`allow`", "`deny`"])),
        }
    }

    fn call(&mut self) -> Result<Call, SyntaxError> {
        let name = self.name("micro-service name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if !self.at(&Tok::RParen) {
            loop {
                args.push(self.expr()?);
                if self.at(&Tok::Comma) {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)` or `,`")?;
        Ok(Call { name, args })
    }

    pub fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(1)
    }

    fn binop_at(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::OrOr => BinOp::Or,
            Tok::AndAnd => BinOp::And,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Ident(k) if k == "matches" => BinOp::Matches,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            _ => return None,
        })
    }

    /// Precedence climbing; every level is left-associative.
    fn binary(&mut self, min_prec: u8) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop_at() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            self.enter()?;
            let rhs = self.binary(prec + 1)?;
            self.leave();
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.at(&Tok::Bang) {
            self.bump();
            self.enter()?;
            let inner = self.unary()?;
            self.leave();
            return Ok(Expr::Not(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::Int(_) | Tok::Minus => Ok(Expr::Int(self.signed_int()?)),
            Tok::Ident(k) if k == "true" => {
                self.bump();
                Ok(Expr::Bool(true))
            }
            Tok::Ident(k) if k == "false" => {
                self.bump();
                Ok(Expr::Bool(false))
            }
            Tok::Var(v) => {
                self.bump();
                Ok(Expr::Var(v))
            }
            Tok::LParen => {
                self.bump();
                self.enter()?;
                let e = self.expr()?;
                self.leave();
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => Err(self.err(&["expression"])),
        }
    }
}
