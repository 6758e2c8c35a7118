use std::f64::consts::{FRAC_PI_2, PI};

use blockbot_core::msg::{RosMessage, TwistMsg, WheelGains};
use blockbot_core::sim::geometry::{clearance, raycast_range, Point};
use blockbot_core::sim::*;
use proptest::prelude::*;

fn arena() -> Scenario {
    Scenario::from_json(
        r#"{"bounds":{"min_x":-2.5,"min_y":-2.5,"max_x":2.5,"max_y":2.5},
            "obstacles":[{"kind":"box","min_x":1.0,"min_y":1.0,"max_x":1.5,"max_y":1.4},
                         {"kind":"segment","x1":-1.5,"y1":-1.0,"x2":-0.5,"y2":-1.8}],
            "seed":11}"#,
    )
    .unwrap()
}

/// Closed-loop wheel response as an ODE in (v, I), RK4 at `h`. Starts just
/// after the derivative impulse of the step.
fn continuous_wheel(g: WheelGains, tau: f64, sp: f64, t_end: f64, h: f64) -> f64 {
    let f = |v: f64, i: f64| {
        let e = sp - v;
        ((sp - v) / tau + g.kp * e + g.ki * i) / (1.0 + g.kd)
    };
    let mut v = sp * g.kd / (1.0 + g.kd);
    let mut i = 0.0;
    let n = (t_end / h).round() as usize;
    for _ in 0..n {
        let (k1v, k1i) = (f(v, i), sp - v);
        let (k2v, k2i) = (f(v + 0.5 * h * k1v, i + 0.5 * h * k1i), sp - (v + 0.5 * h * k1v));
        let (k3v, k3i) = (f(v + 0.5 * h * k2v, i + 0.5 * h * k2i), sp - (v + 0.5 * h * k2v));
        let (k4v, k4i) = (f(v + h * k3v, i + h * k3i), sp - (v + h * k3v));
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        i += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
    }
    v
}

fn discrete_wheel(g: WheelGains, tau: f64, sp: f64, t_end: f64, dt: f64) -> f64 {
    let mut v = 0.0;
    let mut s = PidState::default();
    for _ in 0..(t_end / dt).round() as usize {
        let (u, n) = pid_step(&g, &s, sp, v, dt, 1.0);
        s = n;
        v = wheel_update(v, sp, u, tau, dt);
    }
    v
}

#[test]
fn pid_step_response_settles_within_two_percent() {
    let g = WheelGains::new(4.0, 2.0, 0.05);
    let oracle = continuous_wheel(g, 0.1, 0.5, 1.0, 1e-3);
    assert!((oracle - 0.5).abs() <= 0.01, "oracle {oracle}");
    for dt in [1e-3, 1e-2] {
        let v = discrete_wheel(g, 0.1, 0.5, 1.0, dt);
        assert!((v - 0.5).abs() <= 0.01, "dt {dt}: {v}");
        assert!((v - oracle).abs() < 2e-3, "dt {dt}: {v} vs {oracle}");
    }
}

#[test]
fn simulator_wheel_settles_with_tuned_gains() {
    let mut sim = Simulator::from_scenario(&Scenario::default()).unwrap();
    let g = WheelGains::new(4.0, 2.0, 0.05);
    sim.enqueue(Command::SetPid(PidGains { left: g, right: g }));
    sim.enqueue(Command::CmdVel(TwistMsg::planar(0.5, 0.0)));
    for _ in 0..100 {
        sim.step();
    }
    let w = sim.state().wheel_velocity;
    assert!((w.left - 0.5).abs() <= 0.01 && (w.right - 0.5).abs() <= 0.01, "{w:?}");
}

#[test]
fn zero_gains_leave_plant_lag() {
    let g = WheelGains::default();
    let v = discrete_wheel(g, 0.1, 0.5, 0.1, 1e-3);
    // pure lag: 0.5·(1 − e^{-1}) at t = τ
    let lag = 0.5 * (1.0 - (-1.0f64).exp());
    assert!((v - lag).abs() < 1e-3, "{v} vs {lag}");
}

#[test]
fn tuned_gains_settle_faster_than_defaults() {
    let t90 = |g: WheelGains| {
        let (mut v, mut s, dt) = (0.0, PidState::default(), 1e-3);
        for k in 0..5000 {
            let (u, n) = pid_step(&g, &s, 0.5, v, dt, 1.0);
            s = n;
            v = wheel_update(v, 0.5, u, 0.1, dt);
            if v >= 0.45 {
                return k;
            }
        }
        usize::MAX
    };
    let defaults = SimConfig::default().gains.left;
    assert!(t90(WheelGains::new(4.0, 2.0, 0.05)) < t90(defaults));
}

#[test]
fn straight_run_matches_recurrence_oracle() {
    let mut sim = Simulator::from_scenario(&Scenario::default()).unwrap();
    sim.enqueue(Command::CmdVel(TwistMsg::planar(0.2, 0.0)));
    for _ in 0..500 {
        sim.step();
    }
    // same difference equations, scalar form
    let g = SimConfig::default().gains.left;
    let (dt, tau) = (0.01, 0.1);
    let (mut v, mut x, mut integral, mut prev) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..500 {
        let e = 0.2 - v;
        integral = (integral + e * dt).clamp(-1.0, 1.0);
        let u = g.kp * e + g.ki * integral + g.kd * (e - prev) / dt;
        prev = e;
        v += dt * ((0.2 - v) / tau + u);
        x += v * dt;
    }
    let odom = sim.state().odom_pose;
    assert!((odom.x - x).abs() < 1e-6, "{} vs {x}", odom.x);
    assert!(odom.y.abs() < 1e-12 && odom.theta == 0.0);
    // lag costs a little distance against the ideal 1 m
    assert!(x < 1.0 && x > 0.95);
}

#[test]
fn wall_contact_sets_bumper_without_penetration() {
    let s = Scenario::from_json(r#"{"obstacles":[{"kind":"segment","x1":0.3,"y1":-2,"x2":0.3,"y2":2}]}"#).unwrap();
    let mut sim = Simulator::from_scenario(&s).unwrap();
    sim.enqueue(Command::CmdVel(TwistMsg::planar(0.3, 0.0)));
    let mut pressed = false;
    for _ in 0..100 {
        for e in sim.step() {
            if let RosMessage::Bumper(b) = e.msg {
                pressed |= b.left || b.right;
            }
        }
        let p = sim.state().true_pose;
        assert!(clearance(sim.world(), Point { x: p.x, y: p.y }) >= 0.2 - 1e-9);
    }
    assert!(pressed);
}

#[test]
fn oblique_contact_presses_one_side() {
    // wall ahead-left: contact bearing is positive
    let s = Scenario::from_json(
        r#"{"obstacles":[{"kind":"segment","x1":-1,"y1":0.35,"x2":3,"y2":0.35}],"spawn":{"x":0,"y":0,"theta":0.6}}"#,
    )
    .unwrap();
    let mut sim = Simulator::from_scenario(&s).unwrap();
    sim.enqueue(Command::CmdVel(TwistMsg::planar(0.3, 0.0)));
    let mut seen = (false, false);
    for _ in 0..200 {
        sim.step();
        let b = sim.state().bumper;
        seen.0 |= b.left;
        seen.1 |= b.right;
    }
    assert_eq!(seen, (true, false));
}

#[test]
fn determinism_bit_identical() {
    let run = || {
        let mut sim = Simulator::from_scenario(&arena()).unwrap();
        let mut trace = Vec::new();
        for k in 0..3000u32 {
            if k % 37 == 0 {
                let v = ((k as f64) * 0.013).sin() * 0.6;
                let w = ((k as f64) * 0.007).cos() * 1.5;
                sim.enqueue(Command::CmdVel(TwistMsg::planar(v, w)));
            }
            for e in sim.step() {
                trace.push(e.msg.serialize().unwrap());
            }
            let p = sim.state().true_pose;
            trace.push(format!("{:?}", (p.x.to_bits(), p.y.to_bits(), p.theta.to_bits())));
        }
        trace
    };
    assert_eq!(run(), run());
}

#[test]
fn noisy_runs_repeat_per_seed() {
    let mut s = arena();
    s.noise = NoiseConfig { range_std: 0.02, odom_std: 0.05 };
    let run = |s: &Scenario| {
        let mut sim = Simulator::from_scenario(s).unwrap();
        sim.enqueue(Command::CmdVel(TwistMsg::planar(0.2, 0.3)));
        (0..300).flat_map(|_| sim.step()).map(|e| e.msg.serialize().unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(&s), run(&s));
    let mut other = s.clone();
    other.seed += 1;
    assert_ne!(run(&s), run(&other));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_arc_is_step_invariant(
        x in -5.0..5.0f64, y in -5.0..5.0f64, th in -3.1..3.1f64,
        v in -1.0..1.0f64, w in -3.0..3.0f64, t in 0.01..5.0f64,
        n in 1usize..=10_000,
    ) {
        let start = Pose2D::new(x, y, th);
        let whole = integrate_pose(start, v, w, t);
        let mut p = start;
        for _ in 0..n {
            p = integrate_pose(p, v, w, t / n as f64);
        }
        prop_assert!((p.x - whole.x).abs() < 1e-9);
        prop_assert!((p.y - whole.y).abs() < 1e-9);
        let dth = normalize_angle(p.theta - whole.theta);
        prop_assert!(dth.abs() < 1e-9);
        prop_assert!(p.theta > -PI && p.theta <= PI);
    }

    #[test]
    fn footprint_never_penetrates(cmds in prop::collection::vec((-1.0..1.0f64, -3.0..3.0f64), 1..20)) {
        let mut sim = Simulator::from_scenario(&arena()).unwrap();
        for (v, w) in cmds {
            sim.enqueue(Command::CmdVel(TwistMsg::planar(v, w)));
            for _ in 0..50 {
                sim.step();
                let s = sim.state();
                let gap = clearance(sim.world(), Point { x: s.true_pose.x, y: s.true_pose.y });
                prop_assert!(gap >= 0.2 - 1e-9, "gap {}", gap);
                prop_assert_eq!(s.odom_pose, s.true_pose);
                prop_assert!(s.wheel_velocity.left.abs() <= 1.0 && s.wheel_velocity.right.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn adding_obstacles_never_increases_range(
        x in -1.0..1.0f64, y in -1.0..1.0f64, th in -3.1..3.1f64,
        obs in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, any::<bool>()), 1..6),
    ) {
        let mut world = WorldModel::default();
        let pose = Pose2D::new(x, y, th);
        let mut last = raycast_range(&world, pose, 0.5, 0.02, 4.0, 9);
        for (a, b, c, d, is_box) in obs {
            world.obstacles.push(if is_box {
                Obstacle::Box { min_x: a.min(c), min_y: b.min(d), max_x: a.max(c), max_y: b.max(d) }
            } else {
                Obstacle::Segment { x1: a, y1: b, x2: c, y2: d }
            });
            let r = raycast_range(&world, pose, 0.5, 0.02, 4.0, 9);
            prop_assert!(r <= last);
            last = r;
        }
    }
}

#[test]
fn quarter_arc_closed_form() {
    let p = integrate_pose(Pose2D::default(), 1.0, FRAC_PI_2, 1.0);
    assert!((p.x - 2.0 / PI).abs() < 1e-9);
    assert!((p.y - 2.0 / PI).abs() < 1e-9);
    assert!((p.theta - FRAC_PI_2).abs() < 1e-9);
}

#[test]
fn rig_is_mirror_symmetric() {
    let rig = SensorRig::default();
    for (l, r) in [(SensorId::SonarLeft, SensorId::SonarRight), (SensorId::IrLeft, SensorId::IrRight)] {
        let (l, r) = (rig.get(l).unwrap(), rig.get(r).unwrap());
        assert_eq!(l.mount.x, r.mount.x);
        assert_eq!(l.mount.y, -r.mount.y);
        assert_eq!(l.mount.theta, -r.mount.theta);
        assert_eq!(l.field_of_view, r.field_of_view);
    }
}
