//! Random well-typed programs only ever end in declared ways, and always
//! leave the robot commanded to stop.

use std::sync::atomic::AtomicBool;

use blockbot_core::msg::{LedColor, RosMessage};
use blockbot_core::program::{validate, BinOp, BlockProgram, Expr, SensorKey, Stmt};
use blockbot_core::runtime::{execute, DirectLink, ErrorKind, RunOptions, StopReason, Termination};
use blockbot_core::sim::{Scenario, Simulator};
use blockbot_core::topics;
use proptest::prelude::*;

fn num() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-4i32..8).prop_map(|n| Expr::num(n as f64 / 4.0)),
        prop::sample::select(vec!["a", "b"]).prop_map(Expr::var),
        prop::sample::select(vec![SensorKey::SonarLeft, SensorKey::SonarRight, SensorKey::IrLeft, SensorKey::IrRight])
            .prop_map(Expr::GetSensor),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        (prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]), inner.clone(), inner).prop_map(
            |(op, l, r)| match (op, &r) {
                // literal zero divisors are rejected statically
                (BinOp::Div, Expr::Num(z)) if *z == 0.0 => Expr::binop(op, l, Expr::num(1.0)),
                _ => Expr::binop(op, l, r),
            },
        )
    })
}

fn boolean() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        any::<bool>().prop_map(Expr::Bool),
        prop::sample::select(vec![SensorKey::BumperLeft, SensorKey::BumperRight]).prop_map(Expr::GetSensor),
        (prop::sample::select(vec![BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge, BinOp::Eq, BinOp::Ne]), num(), num())
            .prop_map(|(op, l, r)| Expr::binop(op, l, r)),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        (prop::sample::select(vec![BinOp::And, BinOp::Or]), inner.clone(), inner)
            .prop_map(|(op, l, r)| Expr::binop(op, l, r))
    })
}

/// A number expression whose literal form (if any) is non-negative.
fn arg() -> impl Strategy<Value = Expr> {
    num().prop_map(|e| match e {
        Expr::Num(x) => Expr::num(x.abs()),
        e => e,
    })
}

fn small() -> impl Strategy<Value = Expr> {
    (0u32..6).prop_map(|n| Expr::num(n as f64 * 0.05))
}

fn stmt() -> impl Strategy<Value = Stmt> {
    let leaf = prop_oneof![
        arg().prop_map(|distance_m| Stmt::MoveForward { distance_m }),
        small().prop_map(|distance_m| Stmt::MoveBackward { distance_m }),
        (0u32..4).prop_map(|n| Stmt::TurnLeft { angle_deg: Expr::num(n as f64 * 30.0) }),
        arg().prop_map(|angle_deg| Stmt::TurnRight { angle_deg }),
        prop::sample::select(LedColor::ALL.to_vec()).prop_map(|c| Stmt::LedOn { color: Expr::str(c.as_str()) }),
        Just(Stmt::LedOff),
        small().prop_map(|seconds| Stmt::Wait { seconds }),
        (prop::sample::select(vec!["a", "b"]), num()).prop_map(|(n, value)| Stmt::SetVar { name: n.into(), value }),
        prop_oneof![num(), boolean()].prop_map(|value| Stmt::Print { value }),
        Just(Stmt::Print { value: Expr::twist(0.1, 0.2) }),
    ];
    leaf.prop_recursive(3, 16, 3, |inner| {
        let body = prop::collection::vec(inner, 0..3);
        prop_oneof![
            ((0u32..3), body.clone()).prop_map(|(n, body)| Stmt::Repeat { count: Expr::num(n as f64), body }),
            (boolean(), body.clone()).prop_map(|(cond, body)| Stmt::While { cond, body }),
            (boolean(), body.clone(), body).prop_map(|(cond, then, otherwise)| Stmt::If { cond, then, otherwise }),
        ]
    })
}

fn program() -> impl Strategy<Value = BlockProgram> {
    (prop::collection::vec(stmt(), 0..5), prop::option::weighted(0.1, any::<bool>())).prop_map(|(body, behaviour)| {
        let mut blocks = vec![
            Stmt::SetVar { name: "a".into(), value: Expr::num(1.0) },
            Stmt::SetVar { name: "b".into(), value: Expr::num(0.0) },
        ];
        blocks.extend(body);
        match behaviour {
            Some(true) => blocks.push(Stmt::Teleop),
            Some(false) => blocks.push(Stmt::Wander { threshold_m: None, forward_speed: None, turn_speed: None }),
            None => {}
        }
        BlockProgram::new("fuzz", blocks)
    })
}

fn arena() -> Scenario {
    Scenario::from_json(r#"{"bounds":{"min_x":-2.5,"min_y":-2.5,"max_x":2.5,"max_y":2.5}}"#).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn valid_programs_end_in_declared_ways(p in program()) {
        prop_assert_eq!(validate(&p), vec![]);
        let mut link = DirectLink::new(Simulator::from_scenario(&arena()).unwrap()).unwrap();
        let opts = RunOptions { max_sim_seconds: 8.0, ..RunOptions::default() };
        let term = execute(&p, &mut link, &opts, &AtomicBool::new(false), &mut |_| {});
        match &term {
            Termination::Finished | Termination::Stopped(StopReason::TimeLimit) => {}
            Termination::Error(e) => prop_assert!(
                matches!(e.kind, ErrorKind::DivisionByZero | ErrorKind::InvalidArgument),
                "undeclared failure: {:?}", e
            ),
            other => prop_assert!(false, "unexpected {:?}", other),
        }
        let last = link.published(topics::CMD_VEL).last().cloned().cloned();
        if let Some(RosMessage::Twist(t)) = last {
            prop_assert!(t.is_zero());
        }
    }
}
