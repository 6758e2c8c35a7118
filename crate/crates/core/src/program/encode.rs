//! Canonical JSON form. Key order is fixed; integral numbers print without a
//! fraction; optional fields are omitted when absent; `if` omits an empty
//! `else`.

use serde_json::{json, Map, Value};

use super::*;
use crate::msg::json_number;

pub(super) fn program(p: &BlockProgram) -> Value {
    json!({"version": p.version, "name": p.name, "blocks": stmts(&p.blocks)})
}

fn stmts(list: &[Stmt]) -> Value {
    Value::Array(list.iter().map(stmt).collect())
}

fn tagged(t: &str, fields: Vec<(&str, Value)>) -> Value {
    let mut m = Map::new();
    m.insert("type".into(), Value::String(t.into()));
    for (k, v) in fields {
        m.insert(k.into(), v);
    }
    Value::Object(m)
}

fn stmt(s: &Stmt) -> Value {
    let t = s.tag();
    let f = match s {
        Stmt::MoveForward { distance_m } | Stmt::MoveBackward { distance_m } => vec![("distance_m", expr(distance_m))],
        Stmt::TurnLeft { angle_deg } | Stmt::TurnRight { angle_deg } => vec![("angle_deg", expr(angle_deg))],
        Stmt::LedOn { color } => vec![("color", expr(color))],
        Stmt::LedOff | Stmt::Teleop => vec![],
        Stmt::Repeat { count, body } => vec![("count", expr(count)), ("body", stmts(body))],
        Stmt::While { cond, body } => vec![("cond", expr(cond)), ("body", stmts(body))],
        Stmt::If { cond, then, otherwise } => {
            let mut f = vec![("cond", expr(cond)), ("then", stmts(then))];
            if !otherwise.is_empty() {
                f.push(("else", stmts(otherwise)));
            }
            f
        }
        Stmt::Wait { seconds } => vec![("seconds", expr(seconds))],
        Stmt::SetVar { name, value } => vec![("name", json!(name)), ("value", expr(value))],
        Stmt::Print { value } => vec![("value", expr(value))],
        Stmt::RosConnect { url } => vec![("url", expr(url))],
        Stmt::CreatePublisher { id, topic, msg_type } | Stmt::CreateSubscriber { id, topic, msg_type } => {
            vec![("id", json!(id)), ("topic", expr(topic)), ("msg_type", expr(msg_type))]
        }
        Stmt::Publish { id, value } => vec![("id", json!(id)), ("value", expr(value))],
        Stmt::OnMessage { id, var, body } => vec![("id", json!(id)), ("var", json!(var)), ("body", stmts(body))],
        Stmt::Wander { threshold_m, forward_speed, turn_speed } => {
            [("threshold_m", threshold_m), ("forward_speed", forward_speed), ("turn_speed", turn_speed)]
                .into_iter()
                .filter_map(|(k, e)| e.as_ref().map(|e| (k, expr(e))))
                .collect()
        }
        Stmt::SetPid { left, right } => vec![("left", gains(left)), ("right", gains(right))],
    };
    tagged(t, f)
}

fn gains(g: &GainExprs) -> Value {
    json!({"kp": expr(&g.kp), "ki": expr(&g.ki), "kd": expr(&g.kd)})
}

fn expr(e: &Expr) -> Value {
    let t = e.tag();
    let f = match e {
        // non-finite literals cannot be written; they become null and fail
        // to parse back
        Expr::Num(x) => vec![("value", json_number(*x).unwrap_or(Value::Null))],
        Expr::Str(s) => vec![("value", json!(s))],
        Expr::Bool(b) => vec![("value", json!(b))],
        Expr::Var(name) => vec![("name", json!(name))],
        Expr::Binop { op, lhs, rhs } => vec![("op", json!(op.symbol())), ("lhs", expr(lhs)), ("rhs", expr(rhs))],
        Expr::GetSensor(k) => vec![("which", json!(k.as_str()))],
        Expr::FieldGet { var, selector } => vec![("var", json!(var)), ("selector", json!(selector))],
        Expr::MakeTwist { lx, ly, lz, ax, ay, az } => vec![
            ("lx", expr(lx)),
            ("ly", expr(ly)),
            ("lz", expr(lz)),
            ("ax", expr(ax)),
            ("ay", expr(ay)),
            ("az", expr(az)),
        ],
    };
    tagged(t, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_square_text() {
        let p = BlockProgram::new(
            "square",
            vec![Stmt::Repeat {
                count: Expr::num(4.0),
                body: vec![
                    Stmt::MoveForward { distance_m: Expr::num(1.0) },
                    Stmt::TurnLeft { angle_deg: Expr::num(90.0) },
                ],
            }],
        );
        assert_eq!(
            serialize_document(&p),
            r#"{"version":1,"name":"square","blocks":[{"type":"repeat","count":{"type":"num","value":4},"body":[{"type":"move_forward","distance_m":{"type":"num","value":1}},{"type":"turn_left","angle_deg":{"type":"num","value":90}}]}]}"#
        );
        assert_eq!(parse_document(&serialize_document(&p)).unwrap(), p);
    }
}
