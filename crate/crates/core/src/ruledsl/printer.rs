use std::fmt::Write;

use super::ast::*;

pub fn print_rules(rules: &[RuleAst]) -> String {
    rules.iter().map(print_rule).collect::<Vec<_>>().join("\n")
}

pub fn print_rule(rule: &RuleAst) -> String {
    let mut out = format!("rule {}", rule.name);
    if rule.priority != 0 {
        let _ = write!(out, " priority {}", rule.priority);
    }
    let _ = write!(out, " on {}", rule.pep);
    if rule.condition != Expr::Bool(true) {
        out.push_str(" when ");
        out.push_str(&print_expr(&rule.condition));
    }
    out.push_str(" do ");
    out.push_str(&chain(&rule.actions));
    out
}

pub fn print_procedure(p: &ProcedureAst) -> String {
    let params: Vec<String> = p.params.iter().map(|v| format!("${v}")).collect();
    format!("procedure {}({}) {}", p.name, params.join(", "), block(&p.body))
}

fn chain(items: &[Action]) -> String {
    items.iter().map(action).collect::<Vec<_>>().join("; ")
}

fn block(items: &[Action]) -> String {
    if items.is_empty() {
        "{ }".to_string()
    } else {
        format!("{{ {} }}", chain(items))
    }
}

fn action(a: &Action) -> String {
    match a {
        Action::Call(c) => call(c),
        Action::Assign { var, value: Rhs::Expr(e) } => format!("${var} = {}", print_expr(e)),
        Action::Assign { var, value: Rhs::Call(c) } => format!("${var} = {}", call(c)),
        Action::If { cond, then, otherwise } => {
            let mut s = format!("if {} {}", print_expr(cond), block(then));
            if let Some(o) = otherwise {
                s.push_str(" else ");
                s.push_str(&block(o));
            }
            s
        }
        Action::Foreach { var, iter, body } => {
            format!("foreach ${var} in {} {}", print_expr(iter), block(body))
        }
        Action::Allow => "allow()".to_string(),
        Action::Deny(reason) => format!("deny({})", quote(reason)),
    }
}

fn call(c: &Call) -> String {
    let args: Vec<String> = c.args.iter().map(print_expr).collect();
    format!("{}({})", c.name, args.join(", "))
}

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Prints with the minimum parentheses needed to reparse to the same tree.
pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    expr_into(e, 0, &mut out);
    out
}

fn expr_into(e: &Expr, min_prec: u8, out: &mut String) {
    match e {
        Expr::Str(s) => out.push_str(&quote(s)),
        Expr::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Expr::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Expr::Var(v) => {
            out.push('$');
            out.push_str(v);
        }
        Expr::Not(inner) => {
            out.push('!');
            expr_into(inner, NOT_PRECEDENCE, out);
        }
        Expr::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            let paren = prec < min_prec;
            if paren {
                out.push('(');
            }
            expr_into(lhs, prec, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            expr_into(rhs, prec + 1, out);
            if paren {
                out.push(')');
            }
        }
    }
}
