use lexrag_core::query::{render_query_with, ParseErrorKind};
use lexrag_core::{parse_query, render_query, DefaultOperator, ParseOptions, QueryAst};
use lexrag_testkit::{random_ast, roundtrip_tokens};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn flat_leaves(ast: &QueryAst) -> bool {
    match ast {
        QueryAst::Term { .. } | QueryAst::Phrase { .. } => true,
        QueryAst::And(c) | QueryAst::Or(c) => c.iter().all(QueryAst::is_leaf),
        QueryAst::Not(_) => false,
    }
}

#[test]
fn render_then_parse_is_identity() {
    let tokens = roundtrip_tokens();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..2_000 {
        let ast = random_ast(&mut rng, &tokens, 4, 8);
        ast.check().unwrap();
        let text = render_query(&ast);
        for op in [DefaultOperator::Or, DefaultOperator::And] {
            let opts = ParseOptions::default().with_default_operator(op);
            assert_eq!(parse_query(&text, opts).as_ref(), Ok(&ast), "{text}");
            let terse = render_query_with(&ast, opts);
            assert_eq!(parse_query(&terse, opts).as_ref(), Ok(&ast), "{terse}");
        }
    }
}

#[test]
fn malformed_inputs_report_positions() {
    let cases: &[(&str, ParseErrorKind, usize)] = &[
        ("", ParseErrorKind::EmptyQuery, 0),
        ("   ", ParseErrorKind::EmptyQuery, 0),
        ("(vivaldi", ParseErrorKind::UnclosedParenthesis, 0),
        ("vivaldi)", ParseErrorKind::UnmatchedParenthesis, 7),
        ("\"antonio vivaldi", ParseErrorKind::UnterminatedQuote, 0),
        ("AND vivaldi", ParseErrorKind::DanglingOperator("AND"), 0),
        ("vivaldi OR", ParseErrorKind::DanglingOperator("OR"), 8),
        ("NOT vivaldi", ParseErrorKind::NoPositiveClause, 0),
        ("opera OR NOT vivaldi", ParseErrorKind::NegationNeedsAnd, 9),
        ("^2", ParseErrorKind::MisplacedBoost, 0),
        ("vivaldi^x", ParseErrorKind::InvalidBoost("x".into()), 7),
        ("vivaldi^0", ParseErrorKind::InvalidBoost("0".into()), 7),
        ("title:", ParseErrorKind::FieldWithoutTarget(lexrag_core::Field::Title), 0),
        ("!!! ???", ParseErrorKind::NoSearchableTerms, 0),
    ];
    for (input, kind, position) in cases {
        let err = parse_query(input, ParseOptions::default()).unwrap_err();
        assert_eq!((&err.kind, err.position), (kind, *position), "{input:?}");
        assert!(err.to_string().contains(&format!("position {position}")));
    }
}

#[test]
fn operators_off_rejects_boolean_syntax() {
    let off = ParseOptions::default().without_boolean_ops();
    for input in ["a AND b", "a OR b", "a NOT b", "(a b)", "a)", "title:(a b)"] {
        let err = parse_query(input, off).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Disabled(_)), "{input}: {err}");
    }
    let ok = parse_query("title:vivaldi \"four seasons\" opera^2", off).unwrap();
    assert!(flat_leaves(&ok));
    // lower-case words are ordinary terms
    assert!(parse_query("cats and dogs", off).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn parser_is_total(input in "[a-zA-Z0-9 ()\"^:.é\\-]{0,40}|(AND|OR|NOT|title:|content:|\\(|\\)|\"|\\^2|x| ){0,12}") {
        for opts in [ParseOptions::default(), ParseOptions::default().without_boolean_ops()] {
            match parse_query(&input, opts) {
                Ok(ast) => prop_assert!(ast.check().is_ok()),
                Err(e) => prop_assert!(e.position <= input.len()),
            }
        }
    }

    #[test]
    fn operators_off_accepts_only_flat_clauses(input in "(vivaldi|opera|title:|content:|\"a b\"|\\^3| ){1,10}") {
        let off = ParseOptions::default().without_boolean_ops();
        if let Ok(ast) = parse_query(&input, off) {
            prop_assert!(flat_leaves(&ast), "{:?}", ast);
            prop_assert_eq!(parse_query(&input, ParseOptions::default()).ok(), Some(ast));
        }
    }
}
