use proptest::prelude::*;

use statevc_core::kernel::{
    exec_history, exec_one, parse, BinaryOp, Builtin, Environment, Expr, Literal, Program, Stmt,
    UnaryOp, Value,
};

fn name() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "c", "xs", "total", "_tmp"]).prop_map(String::from)
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        (0i64..=i64::MAX).prop_map(Literal::Int),
        prop::sample::select(vec![0.0, 0.5, 1.25, 3.0, 1e20, 1e-7, 123456.789])
            .prop_map(Literal::Float),
        "[a-z \"\\\\\n\t]{0,6}".prop_map(Literal::Str),
        any::<bool>().prop_map(Literal::Bool),
        Just(Literal::None),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![literal().prop_map(Expr::Literal), name().prop_map(Expr::Name)];
    leaf.prop_recursive(4, 24, 3, |inner| {
        let binop = prop::sample::select(vec![
            BinaryOp::Add,
            BinaryOp::Sub,
            BinaryOp::Mul,
            BinaryOp::Div,
            BinaryOp::Mod,
            BinaryOp::Eq,
            BinaryOp::Ne,
            BinaryOp::Lt,
            BinaryOp::Le,
            BinaryOp::Gt,
            BinaryOp::Ge,
            BinaryOp::And,
            BinaryOp::Or,
        ]);
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..3).prop_map(Expr::List),
            (prop::sample::select(vec![UnaryOp::Neg, UnaryOp::Not]), inner.clone())
                .prop_map(|(op, e)| Expr::Unary(op, Box::new(e))),
            (binop, inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::Index(Box::new(l), Box::new(r))),
            (prop::sample::select(Builtin::ALL.to_vec()), prop::collection::vec(inner, 0..3))
                .prop_map(|(b, args)| Expr::Call(b, args)),
        ]
    })
}

fn stmt() -> impl Strategy<Value = Stmt> {
    prop_oneof![
        (name(), expr()).prop_map(|(n, e)| Stmt::Assign(n, e)),
        name().prop_map(Stmt::Delete),
        expr().prop_map(Stmt::Print),
        expr().prop_map(Stmt::Expr),
    ]
}

fn program() -> impl Strategy<Value = Program> {
    prop::collection::vec(stmt(), 0..5).prop_map(|statements| Program { statements })
}

/// Cell sources that mostly run without error over a few shared names.
fn cell_source() -> impl Strategy<Value = String> {
    let v = prop::sample::select(vec!["a", "b", "c"]);
    let line = (v.clone(), v, 0i64..5, 0usize..7).prop_map(|(x, y, k, form)| match form {
        0 => format!("{x} = {k}"),
        1 => format!("{x} = {y} + {k}"),
        2 => format!("print({y})"),
        3 => format!("{x} = [{y}, {k}]"),
        4 => format!("del {x}"),
        5 => format!("{y} / {k}"),
        _ => format!("{x} = str({y})"),
    });
    prop::collection::vec(line, 1..4).prop_map(|l| l.join("\n"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pretty_print_round_trips(p in program()) {
        let text = p.to_string();
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e} in {text:?}")))?;
        prop_assert_eq!(back, p);
    }

    #[test]
    fn execution_is_deterministic(h in prop::collection::vec(cell_source(), 0..8)) {
        prop_assert_eq!(exec_history(&h), exec_history(&h));
    }

    #[test]
    fn history_composes(h in prop::collection::vec(cell_source(), 0..8), c in cell_source()) {
        let mut longer = h.clone();
        longer.push(c.clone());
        let (env, outs) = exec_history(&longer);
        let step = exec_one(exec_history(&h).0, &c);
        prop_assert_eq!(env, step.env);
        prop_assert_eq!(outs.last().unwrap(), &step.output);
    }

    #[test]
    fn outputs_are_prefix_stable(h in prop::collection::vec(cell_source(), 0..8)) {
        let (_, outs) = exec_history(&h);
        for n in 0..=h.len() {
            prop_assert_eq!(&exec_history(&h[..n]).1[..], &outs[..n]);
        }
    }

    #[test]
    fn arbitrary_programs_never_panic(p in program()) {
        let r = exec_one(Environment::default(), &p.to_string());
        prop_assert!(r.output.error || r.failure.is_none());
    }
}

#[test]
fn worked_histories() {
    let (env, outs) = exec_history(&["a = 2", "b = a * a", "print(b)"]);
    assert_eq!(env.get("b"), Some(&Value::Int(4)));
    let texts: Vec<&str> = outs.iter().map(|o| o.text.as_str()).collect();
    assert_eq!(texts, ["", "", "4"]);
    let (env, _) = exec_history(&["x = 1", "x = x + 1"]);
    assert_eq!(env.get("x"), Some(&Value::Int(2)));
    assert_eq!(exec_history::<&str>(&[]).0, Environment::default());
}

#[test]
fn print_then_bare_expression() {
    let mut env = Environment::default();
    env.set("x", Value::Int(3));
    let r = exec_one(env.clone(), "print(x)\nx + 1");
    assert_eq!(r.output.text, "3\n4");
    assert_eq!(r.env, env);
}
