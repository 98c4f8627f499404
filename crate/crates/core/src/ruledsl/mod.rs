//! The rule and procedure language.
//!
//! ```text
//! ruleset   := { rule }
//! rule      := "rule" IDENT ["priority" INT] "on" PEP ["when" expr] "do" chain
//! procedure := "procedure" IDENT "(" [VAR {"," VAR}] ")" "{" chain "}"
//! chain     := item { ";" item }
//! item      := call | VAR "=" (call | expr) | if | foreach | "allow()" | "deny(" STRING ")"
//! ```
//!
//! Operator precedence from tightest: `!`, `* /`, `+ -`, comparisons and
//! `matches`, `&&`, `||`. `#` starts a comment that runs to end of line.

mod ast;
mod eval;
mod lexer;
mod parser;
mod printer;

use std::fmt;

pub use ast::*;
pub use eval::{eval_expr, EvalError, Scope};
pub use parser::{is_keyword, parse_expr, parse_procedure, parse_rules};
pub use printer::{print_expr, print_procedure, print_rule, print_rules, quote};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "syntax error at line {}, column {}: expected {}, found {}",
            self.line,
            self.column,
            self.expected.join(" or "),
            self.found
        )
    }
}

impl std::error::Error for SyntaxError {}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use proptest::prelude::*;

    use super::*;

    #[test]
    fn archive_rule_parses() {
        let rules =
            parse_rules(r#"rule r1 on pep.data.remove.pre when $coll.path matches "/archive/*" do deny("permanent")"#)
                .unwrap();
        assert_eq!(rules.len(), 1);
        let r = &rules[0];
        assert_eq!(r.name, "r1");
        assert_eq!(r.priority, 0);
        assert_eq!(r.pep, "pep.data.remove.pre");
        assert_eq!(
            r.condition,
            Expr::binary(BinOp::Matches, Expr::Var("coll.path".into()), Expr::Str("/archive/*".into()))
        );
        assert_eq!(r.actions, vec![Action::Deny("permanent".into())]);
    }

    #[test]
    fn empty_text_is_empty_ruleset() {
        assert_eq!(parse_rules("").unwrap(), vec![]);
        assert_eq!(parse_rules("  # only a comment\n").unwrap(), vec![]);
    }

    #[test]
    fn truncated_rule_reports_end_of_input() {
        let err = parse_rules("rule r1 on").unwrap_err();
        assert_eq!(err.found, "end of input");
        assert_eq!((err.line, err.column), (1, 11));
        assert_eq!(err.expected, vec!["PEP name".to_string()]);
    }

    #[test]
    fn priority_and_defaults() {
        let r = &parse_rules("rule a priority -3 on pep.data.get.pre do allow()").unwrap()[0];
        assert_eq!(r.priority, -3);
        assert_eq!(r.condition, Expr::Bool(true));
    }

    #[test]
    fn multiple_rules_and_trailing_semicolon() {
        let rules = parse_rules(
            "rule a on pep.data.get.pre do audit_msg(\"x\"); allow();\nrule b on pep.data.put.pre do deny(\"no\")",
        )
        .unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].actions.len(), 2);
    }

    #[test]
    fn procedure_double() {
        let p = parse_procedure(r#"procedure double($n) { $r = $n * 2; put_int("out", $r) }"#).unwrap();
        assert_eq!(p.name, "double");
        assert_eq!(p.params, vec!["n".to_string()]);
        assert_eq!(p.body.len(), 2);
        assert_eq!(
            p.body[1],
            Action::Call(Call { name: "put_int".into(), args: vec![Expr::Str("out".into()), Expr::Var("r".into())] })
        );
    }

    #[test]
    fn nested_blocks() {
        let p = parse_procedure(
            r#"procedure walk($xs) {
                foreach $x in $xs {
                    if $x matches "*.dat" { audit_msg($x) } else { if true { } }
                }
            }"#,
        )
        .unwrap();
        let Action::Foreach { body, .. } = &p.body[0] else { panic!("expected foreach") };
        let Action::If { then, otherwise, .. } = &body[0] else { panic!("expected if") };
        assert_eq!(then.len(), 1);
        let inner = &otherwise.as_ref().unwrap()[0];
        assert!(matches!(inner, Action::If { then, otherwise: None, .. } if then.is_empty()));
    }

    #[test]
    fn duplicate_params_rejected() {
        let err = parse_procedure("procedure p($a, $a) { }").unwrap_err();
        assert_eq!(err.expected, vec!["distinct parameter name".to_string()]);
    }

    #[test]
    fn assignment_from_call() {
        let p = parse_procedure("procedure p() { $c = checksum(\"/a\"); $d = true }").unwrap();
        assert!(matches!(&p.body[0], Action::Assign { value: Rhs::Call(_), .. }));
        assert!(matches!(&p.body[1], Action::Assign { value: Rhs::Expr(Expr::Bool(true)), .. }));
    }

    #[test]
    fn precedence_and_printing() {
        let e = parse_expr("$a + $b * 2").unwrap();
        assert_eq!(print_expr(&e), "$a + $b * 2");
        let e = parse_expr("($a + $b) * 2").unwrap();
        assert_eq!(print_expr(&e), "($a + $b) * 2");
        let e = parse_expr("$a - ($b - $c)").unwrap();
        assert_eq!(print_expr(&e), "$a - ($b - $c)");
        let e = parse_expr("!$x == false || $y && $z").unwrap();
        assert_eq!(print_expr(&e), "!$x == false || $y && $z");
        let e = parse_expr("!($x && $y)").unwrap();
        assert_eq!(print_expr(&e), "!($x && $y)");
        assert_eq!(parse_expr(&print_expr(&e)).unwrap(), e);
    }

    #[test]
    fn quoting_round_trips() {
        let e = Expr::Str("say \"hi\"\\\nbye".into());
        let printed = print_expr(&e);
        assert_eq!(printed, r#""say \"hi\"\\\nbye""#);
        assert_eq!(parse_expr(&printed).unwrap(), e);
    }

    #[test]
    fn deep_nesting_is_a_syntax_error_not_a_crash() {
        let text = "(".repeat(100_000);
        assert!(parse_expr(&text).is_err());
        let text = "!".repeat(100_000);
        assert!(parse_expr(&text).is_err());
    }

    #[test]
    fn integer_limits() {
        assert_eq!(parse_expr("-9223372036854775808").unwrap(), Expr::Int(i64::MIN));
        assert!(parse_expr("9223372036854775808").is_err());
        assert_eq!(print_expr(&Expr::Int(i64::MIN)), "-9223372036854775808");
    }

    fn scope(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn evaluation() {
        let s = scope(&[("x", Value::Int(7)), ("p", Value::from("/archive/x"))]);
        let ev = |t: &str| eval_expr(&parse_expr(t).unwrap(), &s);
        assert_eq!(ev("1 + 2"), Ok(Value::Int(3)));
        assert_eq!(ev("$p matches \"/archive/*\""), Ok(Value::Bool(true)));
        assert_eq!(ev("$x / 0"), Err(EvalError::DivisionByZero));
        assert_eq!(ev("$x / 2 * 2 + $x - 1"), Ok(Value::Int(12)));
        assert_eq!(ev("\"a\" + \"b\" == \"ab\""), Ok(Value::Bool(true)));
        assert_eq!(ev("\"a\" < \"b\""), Ok(Value::Bool(true)));
        assert_eq!(ev("$nope"), Err(EvalError::UnboundVariable("nope".into())));
        assert!(matches!(ev("1 == \"1\""), Err(EvalError::TypeMismatch { .. })));
        assert!(matches!(ev("1 && true"), Err(EvalError::TypeMismatch { .. })));
        assert_eq!(ev("9223372036854775807 + 1"), Err(EvalError::Overflow("+")));
    }

    #[test]
    fn short_circuit_skips_right_operand() {
        let s = scope(&[]);
        // The right operand would fail with an unbound variable if evaluated.
        let e = parse_expr("false && $missing").unwrap();
        assert_eq!(eval_expr(&e, &s), Ok(Value::Bool(false)));
        let e = parse_expr("true || $missing").unwrap();
        assert_eq!(eval_expr(&e, &s), Ok(Value::Bool(true)));
        let e = parse_expr("true && $missing").unwrap();
        assert!(eval_expr(&e, &s).is_err());
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z_][a-z0-9_]{0,6}".prop_filter("keyword", |s| !is_keyword(s))
    }

    fn var_name() -> impl Strategy<Value = String> {
        prop_oneof![ident(), Just("user.name".to_string()), Just("obj.path".to_string()), Just("coll.path".to_string()),]
    }

    fn expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            ".{0,8}".prop_map(Expr::Str),
            any::<i64>().prop_map(Expr::Int),
            any::<bool>().prop_map(Expr::Bool),
            var_name().prop_map(Expr::Var),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            let op = prop_oneof![
                Just(BinOp::Or),
                Just(BinOp::And),
                Just(BinOp::Eq),
                Just(BinOp::Ne),
                Just(BinOp::Lt),
                Just(BinOp::Le),
                Just(BinOp::Gt),
                Just(BinOp::Ge),
                Just(BinOp::Matches),
                Just(BinOp::Add),
                Just(BinOp::Sub),
                Just(BinOp::Mul),
                Just(BinOp::Div),
            ];
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Not(Box::new(e))),
                (op, inner.clone(), inner).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            ]
        })
    }

    fn call() -> impl Strategy<Value = Call> {
        (ident(), prop::collection::vec(expr(), 0..3)).prop_map(|(name, args)| Call { name, args })
    }

    fn chain(nonempty: bool) -> impl Strategy<Value = ActionChain> {
        let leaf = prop_oneof![
            call().prop_map(Action::Call),
            (var_name(), expr()).prop_map(|(var, e)| Action::Assign { var, value: Rhs::Expr(e) }),
            (var_name(), call()).prop_map(|(var, c)| Action::Assign { var, value: Rhs::Call(c) }),
            Just(Action::Allow),
            ".{0,8}".prop_map(Action::Deny),
        ];
        let item = leaf.prop_recursive(3, 16, 3, |inner| {
            let block = prop::collection::vec(inner, 0..3);
            prop_oneof![
                (expr(), block.clone(), prop::option::of(block.clone()))
                    .prop_map(|(cond, then, otherwise)| Action::If { cond, then, otherwise }),
                (ident(), expr(), block).prop_map(|(var, iter, body)| Action::Foreach { var, iter, body }),
            ]
        });
        prop::collection::vec(item, if nonempty { 1..4 } else { 0..4 })
    }

    fn rule() -> impl Strategy<Value = RuleAst> {
        (ident(), any::<i64>(), "pep\\.[a-z]{1,5}\\.[a-z]{1,5}", expr(), chain(true))
            .prop_map(|(name, priority, pep, condition, actions)| RuleAst { name, priority, pep, condition, actions })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn rule_print_parse_fixpoint(rules in prop::collection::vec(rule(), 0..4)) {
            let text = print_rules(&rules);
            let back = parse_rules(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            prop_assert_eq!(back, rules);
        }

        #[test]
        fn procedure_print_parse_fixpoint(
            name in ident(),
            params in prop::collection::btree_set(ident(), 0..4),
            body in chain(false),
        ) {
            let p = ProcedureAst { name, params: params.into_iter().collect(), body };
            let text = print_procedure(&p);
            prop_assert_eq!(parse_procedure(&text).unwrap(), p);
        }

        #[test]
        fn parser_is_total(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
            let text = String::from_utf8_lossy(&bytes);
            let _ = parse_rules(&text);
            let _ = parse_procedure(&text);
        }

        #[test]
        fn eval_is_deterministic(e in expr(), x in any::<i64>()) {
            let s = scope(&[("user.name", Value::from("alice")), ("obj.path", Value::from("/a/b")), ("coll.path", Value::Int(x))]);
            prop_assert_eq!(eval_expr(&e, &s), eval_expr(&e, &s));
        }
    }
}
