use crate::msg::WheelGains;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
}

/// One PID update. Returns the control (wheel acceleration, m/s²) and the
/// next controller state. The integral is clamped to `±integral_limit`.
pub fn pid_step(
    gains: &WheelGains,
    state: &PidState,
    setpoint: f64,
    measured: f64,
    dt: f64,
    integral_limit: f64,
) -> (f64, PidState) {
    debug_assert!(dt > 0.0);
    let error = setpoint - measured;
    let integral = (state.integral + error * dt).clamp(-integral_limit, integral_limit);
    let derivative = (error - state.prev_error) / dt;
    let control = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    (control, PidState { integral, prev_error: error })
}

/// Wheel plant: first-order lag toward the setpoint plus the PID
/// acceleration. Explicit Euler, `dt` is the sim step.
pub fn wheel_update(velocity: f64, setpoint: f64, control: f64, time_constant: f64, dt: f64) -> f64 {
    velocity + dt * ((setpoint - velocity) / time_constant + control)
}
