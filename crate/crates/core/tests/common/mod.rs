//! Shared proptest strategies for block programs.
#![allow(dead_code)]

use blockbot_core::program::{BinOp, BlockProgram, Expr, GainExprs, SensorKey, Stmt};
use proptest::prelude::*;

pub fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}"
}

pub fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1000i32..1000).prop_map(f64::from),
        prop::num::f64::POSITIVE | prop::num::f64::NEGATIVE | prop::num::f64::NORMAL | prop::num::f64::ZERO,
    ]
}

pub fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        finite().prop_map(Expr::Num),
        ".{0,8}".prop_map(Expr::Str),
        any::<bool>().prop_map(Expr::Bool),
        ident().prop_map(Expr::Var),
        prop::sample::select(SensorKey::ALL.to_vec()).prop_map(Expr::GetSensor),
        (ident(), "[a-z.]{1,12}").prop_map(|(var, selector)| Expr::FieldGet { var, selector }),
    ];
    leaf.prop_recursive(4, 24, 6, |inner| {
        prop_oneof![
            (prop::sample::select(BinOp::ALL.to_vec()), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::binop(op, l, r)),
            prop::collection::vec(inner, 6).prop_map(|mut v| {
                let mut b = || Box::new(v.remove(0));
                Expr::MakeTwist { lx: b(), ly: b(), lz: b(), ax: b(), ay: b(), az: b() }
            }),
        ]
    })
}

fn gains(e: BoxedStrategy<Expr>) -> impl Strategy<Value = GainExprs> {
    (e.clone(), e.clone(), e).prop_map(|(kp, ki, kd)| GainExprs { kp, ki, kd })
}

pub fn stmt() -> impl Strategy<Value = Stmt> {
    let e = expr().boxed();
    let leaf = prop_oneof![
        e.clone().prop_map(|distance_m| Stmt::MoveForward { distance_m }),
        e.clone().prop_map(|distance_m| Stmt::MoveBackward { distance_m }),
        e.clone().prop_map(|angle_deg| Stmt::TurnLeft { angle_deg }),
        e.clone().prop_map(|angle_deg| Stmt::TurnRight { angle_deg }),
        e.clone().prop_map(|color| Stmt::LedOn { color }),
        Just(Stmt::LedOff),
        Just(Stmt::Teleop),
        e.clone().prop_map(|seconds| Stmt::Wait { seconds }),
        (ident(), e.clone()).prop_map(|(name, value)| Stmt::SetVar { name, value }),
        e.clone().prop_map(|value| Stmt::Print { value }),
        e.clone().prop_map(|url| Stmt::RosConnect { url }),
        (ident(), e.clone(), e.clone()).prop_map(|(id, topic, msg_type)| Stmt::CreatePublisher { id, topic, msg_type }),
        (ident(), e.clone(), e.clone()).prop_map(|(id, topic, msg_type)| Stmt::CreateSubscriber {
            id,
            topic,
            msg_type
        }),
        (ident(), e.clone()).prop_map(|(id, value)| Stmt::Publish { id, value }),
        (prop::option::of(e.clone()), prop::option::of(e.clone()), prop::option::of(e.clone())).prop_map(
            |(threshold_m, forward_speed, turn_speed)| Stmt::Wander { threshold_m, forward_speed, turn_speed }
        ),
        (gains(e.clone()), gains(e.clone())).prop_map(|(left, right)| Stmt::SetPid { left, right }),
    ];
    leaf.prop_recursive(3, 32, 4, move |inner| {
        let body = prop::collection::vec(inner, 0..4);
        prop_oneof![
            (e.clone(), body.clone()).prop_map(|(count, body)| Stmt::Repeat { count, body }),
            (e.clone(), body.clone()).prop_map(|(cond, body)| Stmt::While { cond, body }),
            (e.clone(), body.clone(), body.clone()).prop_map(|(cond, then, otherwise)| Stmt::If {
                cond,
                then,
                otherwise
            }),
            (ident(), ident(), body).prop_map(|(id, var, body)| Stmt::OnMessage { id, var, body }),
        ]
    })
}

pub fn program() -> impl Strategy<Value = BlockProgram> {
    (".{0,10}", prop::collection::vec(stmt(), 0..6)).prop_map(|(name, blocks)| BlockProgram::new(&name, blocks))
}
