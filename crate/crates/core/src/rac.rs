//! Barrier-function robust adaptive controller.
//!
//! The tracking error is kept inside an exponentially shrinking envelope
//! `o(t)`. The command grows without bound as `|e| → o`, and the adaptive
//! gain `θ̂` integrates the squared barrier term with leakage `δ`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_positive, Error, Result};

/// Exponential performance envelope
/// `(shoot - bound) e^{-rate t} + bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpcParams {
    #[serde(rename = "shoot_mps")]
    pub shoot: f64,
    #[serde(rename = "bound_mps")]
    pub bound: f64,
    #[serde(rename = "rate_per_s")]
    pub rate: f64,
}

impl PpcParams {
    pub fn new(shoot: f64, bound: f64, rate: f64) -> Result<Self> {
        let p = Self { shoot, bound, rate };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("bound_mps", self.bound)?;
        require_positive("rate_per_s", self.rate)?;
        if !(self.shoot.is_finite() && self.shoot > self.bound) {
            return Err(invalid(
                "shoot_mps",
                format!("must exceed bound_mps ({}), got {}", self.bound, self.shoot),
            ));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> f64 {
        ppc_bound(t, self)
    }
}

pub fn ppc_bound(t: f64, p: &PpcParams) -> f64 {
    (p.shoot - p.bound) * (-p.rate * t).exp() + p.bound
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RacGains {
    /// Proportional gain, rpm per m/s.
    pub k: f64,
    pub gamma: f64,
    #[serde(rename = "delta_per_s")]
    pub delta: f64,
    pub theta_hat0: f64,
}

impl Default for RacGains {
    fn default() -> Self {
        Self {
            k: 2000.0,
            gamma: 1.0,
            delta: 1.0,
            theta_hat0: 0.01,
        }
    }
}

impl RacGains {
    pub fn validate(&self) -> Result<()> {
        require_positive("k", self.k)?;
        require_positive("gamma", self.gamma)?;
        require_positive("delta_per_s", self.delta)?;
        require_positive("theta_hat0", self.theta_hat0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveState {
    pub theta_hat: f64,
    pub gains: RacGains,
}

impl AdaptiveState {
    pub fn new(gains: RacGains) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            theta_hat: gains.theta_hat0,
            gains,
        })
    }

    pub fn reset(&mut self) {
        self.theta_hat = self.gains.theta_hat0;
    }
}

fn barrier_ratio(e: f64, o: f64, op: &'static str) -> Result<f64> {
    let denom = o * o - e * e;
    if denom > 0.0 {
        Ok(e / denom)
    } else {
        Err(Error::Contract(format!(
            "{op} called with |e| = {} outside the envelope o = {o}",
            e.abs()
        )))
    }
}

/// One forward-Euler step of
/// `θ̂' = -δ θ̂ + γ (e / (o² - e²))²`.
pub fn adaptive_update(s: &AdaptiveState, e: f64, o: f64, dt: f64) -> Result<AdaptiveState> {
    if !(dt > 0.0 && dt * s.gains.delta < 1.0) {
        return Err(Error::Contract(format!(
            "adaptive step needs 0 < dt·delta < 1, got dt = {dt}"
        )));
    }
    let q = barrier_ratio(e, o, "adaptive_update")?;
    let rate = -s.gains.delta * s.theta_hat + s.gains.gamma * q * q;
    Ok(AdaptiveState {
        theta_hat: s.theta_hat + dt * rate,
        gains: s.gains,
    })
}

/// `n = -k e / 2 - γ θ̂ e / (o² - e²)`
pub fn rac_command(e: f64, o: f64, s: &AdaptiveState) -> Result<f64> {
    let q = barrier_ratio(e, o, "rac_command")?;
    Ok(-0.5 * s.gains.k * e - s.gains.gamma * q * s.theta_hat)
}

/// `log(o² / (o² - e²))`, or `None` once the error has reached the
/// envelope.
pub fn blf_value(e: f64, o: f64) -> Option<f64> {
    let denom = o * o - e * e;
    if denom > 0.0 {
        Some((o * o / denom).ln())
    } else {
        None
    }
}

/// `log(o²/(o²-e²)) < e²/(o²-e²)` for `0 < |e| < o`.
pub fn log_bound_holds(e: f64, o: f64) -> bool {
    let denom = o * o - e * e;
    let ratio = e * e / denom;
    // ln(1 + x) < x; ln_1p keeps precision when e²/(o²-e²) is tiny.
    ratio.ln_1p() < ratio
}

/// Analysis constants for offline bound plots. Never read by the
/// controller itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub epsilon: f64,
    /// Disturbance intensity bound.
    pub f_star: f64,
    /// Plant input gain `K_v / τ`.
    pub a: f64,
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("epsilon", self.epsilon)?;
        require_positive("f_star", self.f_star)?;
        require_positive("a", self.a)
    }

    /// `θ* = ε f*² / (γ A)`
    pub fn theta_star(&self, gains: &RacGains) -> f64 {
        self.epsilon * self.f_star * self.f_star / (gains.gamma * self.a)
    }

    /// Decay rate `min(A k, δ)` of the Lyapunov bound.
    pub fn decay_rate(&self, gains: &RacGains) -> f64 {
        (self.a * gains.k).min(gains.delta)
    }

    /// Constant term `1/(4ε) + A δ θ*² / 2` of the Lyapunov bound.
    pub fn offset(&self, gains: &RacGains) -> f64 {
        let th = self.theta_star(gains);
        0.25 / self.epsilon + 0.5 * self.a * gains.delta * th * th
    }

    /// Ultimate bound `ℓ / μ` on the Lyapunov function.
    pub fn ultimate_bound(&self, gains: &RacGains) -> f64 {
        self.offset(gains) / self.decay_rate(gains)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(k: f64, gamma: f64, delta: f64, theta: f64) -> AdaptiveState {
        AdaptiveState {
            theta_hat: theta,
            gains: RacGains {
                k,
                gamma,
                delta,
                theta_hat0: theta.max(1e-3),
            },
        }
    }

    #[test]
    fn envelope_endpoints() {
        let p = PpcParams::new(0.10, 0.04, 0.1).unwrap();
        assert_eq!(ppc_bound(0.0, &p), 0.10);
        let far = ppc_bound(20.0 / p.rate, &p);
        assert!((far - p.bound).abs() <= (p.shoot - p.bound) * (-20f64).exp() * 1.0001);
        assert!(far > p.bound);
    }

    #[test]
    fn envelope_rejects_bad_params() {
        assert!(PpcParams::new(0.04, 0.04, 0.1).is_err());
        assert!(PpcParams::new(0.1, 0.0, 0.1).is_err());
        assert!(PpcParams::new(0.1, 0.04, 0.0).is_err());
        assert!(PpcParams::new(f64::NAN, 0.04, 0.1).is_err());
    }

    #[test]
    fn command_cases() {
        assert_eq!(
            rac_command(0.0, 0.1, &state(100.0, 1.0, 1.0, 0.5)).unwrap(),
            0.0
        );
        let n = rac_command(0.01, 0.1, &state(100.0, 1.0, 1.0, 0.0)).unwrap();
        assert!((n + 0.5).abs() < 1e-15);
        // -(k e / 2) = -2.5; barrier term 2 · (0.05 / 0.0075) · 0.3 = 4.
        let expected: f64 = -(2.5 + 2.0 * (0.05 / 0.0075) * 0.3);
        assert!((expected + 6.5).abs() < 1e-12);
        let n = rac_command(0.05, 0.1, &state(100.0, 2.0, 1.0, 0.3)).unwrap();
        assert!((n - expected).abs() < 1e-12, "{n}");
    }

    #[test]
    fn command_outside_envelope_is_contract_error() {
        let s = state(100.0, 1.0, 1.0, 0.1);
        assert!(matches!(rac_command(0.1, 0.1, &s), Err(Error::Contract(_))));
        assert!(matches!(
            adaptive_update(&s, -0.2, 0.1, 1e-3),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn blf_cases() {
        assert_eq!(blf_value(0.0, 0.1), Some(0.0));
        assert_eq!(blf_value(0.1, 0.1), None);
        assert_eq!(blf_value(-0.2, 0.1), None);
        let v = blf_value(0.06, 0.1).unwrap();
        assert!((v - 1.5625f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn blf_grows_toward_boundary() {
        let mut prev = 0.0;
        for i in 1..1000 {
            let v = blf_value(0.1 * i as f64 / 1000.0, 0.1).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn leakage_decay() {
        let mut s = state(1.0, 1.0, 2.0, 0.5);
        let dt = 1e-3;
        for _ in 0..1000 {
            s = adaptive_update(&s, 0.0, 0.1, dt).unwrap();
        }
        let exact = 0.5 * (-2.0f64).exp();
        assert!((s.theta_hat - exact).abs() < 1e-3 * 0.5);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let (e, o, gamma, delta): (f64, f64, f64, f64) = (0.02, 0.05, 1.5, 0.7);
        let q = e / (o * o - e * e);
        let theta = gamma / delta * q * q;
        let s = state(10.0, gamma, delta, theta);
        let next = adaptive_update(&s, e, o, 1e-3).unwrap();
        assert!((next.theta_hat - theta).abs() <= 1e-12 * theta);
    }

    fn integrate(s0: AdaptiveState, err: impl Fn(f64) -> f64, o: f64, dt: f64, t_end: f64) -> f64 {
        let n = (t_end / dt).round() as usize;
        let mut s = s0;
        for i in 0..n {
            s = adaptive_update(&s, err(i as f64 * dt), o, dt).unwrap();
        }
        s.theta_hat
    }

    #[test]
    fn euler_is_first_order() {
        // Against a dt/100 reference, halving dt halves the error.
        let s0 = state(100.0, 1.3, 0.8, 0.05);
        let err = |t: f64| 0.02 * (3.0 * t).sin();
        let o = 0.06;
        let reference = integrate(s0, err, o, 1e-5, 1.0);
        let e1 = (integrate(s0, err, o, 1e-3, 1.0) - reference).abs();
        let e2 = (integrate(s0, err, o, 5e-4, 1.0) - reference).abs();
        let order = (e1 / e2).log2();
        assert!((order - 1.0).abs() < 0.1, "{order}");
    }

    #[test]
    fn euler_leakage_error_matches_closed_form() {
        // Zero error: Euler gives θ0 (1 - δ dt)^n exactly.
        let s0 = state(1.0, 1.0, 1.0, 0.3);
        let got = integrate(s0, |_| 0.0, 0.1, 1e-3, 1.0);
        let expected = 0.3 * (1.0f64 - 1e-3).powi(1000);
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn diagnostics() {
        let g = RacGains::default();
        let d = DiagnosticsConfig {
            epsilon: 0.5,
            f_star: 0.01,
            a: 2.5e-4 / 0.8,
        };
        let th = 0.5 * 1e-4 / (1.0 * d.a);
        assert!((d.theta_star(&g) - th).abs() < 1e-15);
        assert_eq!(d.decay_rate(&g), (d.a * 2000.0).min(1.0));
        assert!((d.offset(&g) - (0.5 + 0.5 * d.a * th * th)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn log_bound_always_holds(o in 1e-4f64..10.0, frac in 1e-9f64..(1.0 - 1e-9), neg: bool) {
            let e = if neg { -frac * o } else { frac * o };
            prop_assert!(log_bound_holds(e, o));
        }

        #[test]
        fn envelope_monotone(shoot in 0.02f64..1.0, f in 0.05f64..0.95, rate in 0.01f64..2.0,
                             x in 0.0f64..1.0, dt in 1e-3f64..1.0) {
            // Past rate·t ≈ 30 the decaying term drops below one ulp of
            // the bound and the envelope rounds to it.
            let p = PpcParams::new(shoot, shoot * f, rate).unwrap();
            let t = x * 20.0 / rate;
            let (a, b) = (ppc_bound(t, &p), ppc_bound(t + dt, &p));
            prop_assert!(b < a);
            prop_assert!(a > p.bound && a <= p.shoot);
        }

        #[test]
        fn command_opposes_error(e in -0.099f64..0.099, th in 0.0f64..5.0) {
            let n = rac_command(e, 0.1, &state(2000.0, 1.0, 1.0, th)).unwrap();
            prop_assert!(n * e <= 0.0);
        }

        #[test]
        fn theta_stays_non_negative(th in 0.0f64..1.0, delta in 0.01f64..999.0,
                                    frac in -0.99f64..0.99) {
            let s = state(1.0, 1.0, delta, th);
            let next = adaptive_update(&s, frac * 0.1, 0.1, 1e-3).unwrap();
            prop_assert!(next.theta_hat >= 0.0);
        }
    }
}
