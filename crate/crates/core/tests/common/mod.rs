use dynid::control::PidGains;

/// Per-joint gains for the default six-joint template.
pub fn arm_gains() -> PidGains {
    let per = |base: f64, arm: f64, wrist: f64| vec![base, arm, arm, wrist, wrist, wrist];
    PidGains {
        kp: per(60.0, 400.0, 20.0),
        ki: per(120.0, 800.0, 80.0),
        kd: per(15.0, 50.0, 3.0),
        ..PidGains::default()
    }
}
