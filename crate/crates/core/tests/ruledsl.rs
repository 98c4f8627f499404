use pgzone_core::ruledsl::{parse_rules, print_rule, print_rules, Action, BinOp, Expr};
use pgzone_core::Zone;

const CORPUS: &str = include_str!("data/policies.rule");

#[test]
fn corpus_round_trips() {
    let rules = parse_rules(CORPUS).unwrap();
    assert!(rules.len() >= 20, "{} rules", rules.len());
    for r in &rules {
        let text = print_rule(r);
        assert_eq!(parse_rules(&text).unwrap(), vec![r.clone()], "{text}");
    }
    let printed = print_rules(&rules);
    assert_eq!(parse_rules(&printed).unwrap(), rules);
    assert_eq!(print_rules(&parse_rules(&printed).unwrap()), printed);
}

#[test]
fn corpus_structure() {
    let rules = parse_rules(CORPUS).unwrap();
    let r = rules.iter().find(|r| r.name == "negative_priority").unwrap();
    assert_eq!(r.priority, -10);
    let product = Expr::binary(BinOp::Mul, Expr::Int(2), Expr::Int(3));
    let sum = Expr::binary(BinOp::Add, Expr::Int(1), product);
    let left = Expr::binary(BinOp::Ge, sum, Expr::Int(7));
    let right = Expr::binary(BinOp::Ne, Expr::Str("a\"b".into()), Expr::Str("a\\b".into()));
    assert_eq!(r.condition, Expr::binary(BinOp::And, left, right));
    assert_eq!(r.actions, vec![Action::Allow]);

    let fanout = rules.iter().find(|r| r.name == "run_fanout").unwrap();
    assert!(matches!(&fanout.actions[2], Action::Foreach { var, body, .. } if var == "p" && body.len() == 1));
    let remove_trace = rules.iter().find(|r| r.name == "remove_trace").unwrap();
    assert_eq!(remove_trace.condition, Expr::Bool(true));
}

#[test]
fn corpus_loads_into_a_zone() {
    let z = Zone::in_memory();
    z.catalog().bootstrap_admin("root", "pw").unwrap();
    let names = z.add_rule("root", CORPUS).unwrap();
    assert_eq!(names.len(), parse_rules(CORPUS).unwrap().len());
    assert_eq!(z.list_rules().rules.len(), names.len());
}

#[test]
fn every_prefix_of_the_corpus_is_handled() {
    let mut ends: Vec<usize> = CORPUS.char_indices().map(|(i, _)| i).collect();
    ends.push(CORPUS.len());
    for end in ends {
        let _ = parse_rules(&CORPUS[..end]);
    }
}
