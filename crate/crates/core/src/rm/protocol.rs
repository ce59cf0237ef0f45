use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A frequency law `ω(t)` with possible jump discontinuities at known times.
///
/// `omega` is left-continuous; `omega_right` gives the right limit, which is what a
/// stage sitting on the start of a segment must see.
pub trait FrequencyLaw: Sync {
    fn omega(&self, t: f64) -> f64;

    fn omega_right(&self, t: f64) -> f64 {
        self.omega(t)
    }

    /// Times where `ω` or its derivative is discontinuous.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// `ω` as seen from inside the segment starting at `seg_start`.
    fn omega_on(&self, t: f64, seg_start: f64) -> f64 {
        if t <= seg_start {
            self.omega_right(t)
        } else {
            self.omega(t)
        }
    }
}

/// Trap frequency protocol. `ω(t) = ω0` up to and including `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrequencyProtocol {
    Constant {
        omega0: f64,
    },
    /// `ω0` for `t ≤ t_switch`, `ω1` afterwards.
    SuddenSwitch {
        omega0: f64,
        omega1: f64,
        #[serde(default)]
        t_switch: f64,
    },
    LinearRamp {
        omega0: f64,
        omega1: f64,
        t_ramp: f64,
    },
    /// `ω0 + amplitude·sin(Ω t)`.
    Sinusoidal {
        omega0: f64,
        amplitude: f64,
        omega_drive: f64,
    },
}

impl FrequencyProtocol {
    pub fn omega0(&self) -> f64 {
        match *self {
            FrequencyProtocol::Constant { omega0 }
            | FrequencyProtocol::SuddenSwitch { omega0, .. }
            | FrequencyProtocol::LinearRamp { omega0, .. }
            | FrequencyProtocol::Sinusoidal { omega0, .. } => omega0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ModelInvalid(msg));
        let omega0 = self.omega0();
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return bad(format!("omega0 must be positive, got {omega0}"));
        }
        match *self {
            FrequencyProtocol::Constant { .. } => Ok(()),
            FrequencyProtocol::SuddenSwitch { omega1, t_switch, .. } => {
                if !(omega1 > 0.0 && omega1.is_finite()) {
                    return bad(format!("omega1 must be positive, got {omega1}"));
                }
                if !(t_switch >= 0.0 && t_switch.is_finite()) {
                    return bad(format!("t_switch must be non-negative, got {t_switch}"));
                }
                Ok(())
            }
            FrequencyProtocol::LinearRamp { omega1, t_ramp, .. } => {
                if !(omega1 > 0.0 && omega1.is_finite()) {
                    return bad(format!("omega1 must be positive, got {omega1}"));
                }
                if !(t_ramp > 0.0 && t_ramp.is_finite()) {
                    return bad(format!("t_ramp must be positive, got {t_ramp}"));
                }
                Ok(())
            }
            FrequencyProtocol::Sinusoidal { amplitude, omega_drive, .. } => {
                if !(amplitude.abs() < omega0) {
                    return bad(format!("|amplitude| must be below omega0, got {amplitude}"));
                }
                if !omega_drive.is_finite() {
                    return bad("omega_drive must be finite".into());
                }
                Ok(())
            }
        }
    }

    /// Smallest `ω(t)` over `[0, t_final]`.
    pub fn min_omega(&self, t_final: f64) -> f64 {
        match *self {
            FrequencyProtocol::Constant { omega0 } => omega0,
            FrequencyProtocol::SuddenSwitch { omega0, omega1, t_switch } => {
                if t_final > t_switch {
                    omega0.min(omega1)
                } else {
                    omega0
                }
            }
            FrequencyProtocol::LinearRamp { .. } => self.omega(0.0).min(self.omega(t_final)),
            FrequencyProtocol::Sinusoidal { omega0, amplitude, omega_drive } => {
                let mut lo = omega0.min(self.omega(t_final));
                if omega_drive != 0.0 && amplitude != 0.0 {
                    // sin(Ωt) reaches −sign(A) at Ωt = ∓π/2 + 2πm
                    let target = if amplitude * omega_drive > 0.0 { 1.5 } else { 0.5 };
                    let first = target * std::f64::consts::PI / omega_drive.abs();
                    if first <= t_final {
                        lo = lo.min(omega0 - amplitude.abs());
                    }
                }
                lo
            }
        }
    }
}

impl FrequencyLaw for FrequencyProtocol {
    fn omega(&self, t: f64) -> f64 {
        match *self {
            FrequencyProtocol::Constant { omega0 } => omega0,
            FrequencyProtocol::SuddenSwitch { omega0, omega1, t_switch } => {
                if t <= t_switch {
                    omega0
                } else {
                    omega1
                }
            }
            FrequencyProtocol::LinearRamp { omega0, omega1, t_ramp } => {
                if t <= 0.0 {
                    omega0
                } else if t >= t_ramp {
                    omega1
                } else {
                    omega0 + (omega1 - omega0) * t / t_ramp
                }
            }
            FrequencyProtocol::Sinusoidal { omega0, amplitude, omega_drive } => {
                if t <= 0.0 {
                    omega0
                } else {
                    omega0 + amplitude * (omega_drive * t).sin()
                }
            }
        }
    }

    fn omega_right(&self, t: f64) -> f64 {
        match *self {
            FrequencyProtocol::SuddenSwitch { omega0, omega1, t_switch } => {
                if t < t_switch {
                    omega0
                } else {
                    omega1
                }
            }
            _ => self.omega(t),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            FrequencyProtocol::SuddenSwitch { t_switch, .. } => vec![t_switch],
            FrequencyProtocol::LinearRamp { t_ramp, .. } => vec![0.0, t_ramp],
            _ => Vec::new(),
        }
    }
}

/// The relative-motion frequency `ω̃(t) = √(ω(t)² − K/μ)` of a Moshinsky pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedFrequency {
    pub base: FrequencyProtocol,
    pub k: f64,
    pub mass: f64,
}

impl ShiftedFrequency {
    fn shift(&self, w: f64) -> f64 {
        (w * w - self.k / self.mass).max(0.0).sqrt()
    }

    /// Refuses protocols where the relative motion becomes unbound during the run.
    pub fn validated(base: FrequencyProtocol, k: f64, mass: f64, t_final: f64) -> Result<Self> {
        base.validate()?;
        let w = base.min_omega(t_final);
        if w * w - k / mass <= 0.0 {
            return Err(Error::ModelInvalid(format!(
                "relative motion unbound: min ω² = {} ≤ K/μ = {}",
                w * w,
                k / mass
            )));
        }
        Ok(Self { base, k, mass })
    }
}

impl FrequencyLaw for ShiftedFrequency {
    fn omega(&self, t: f64) -> f64 {
        self.shift(self.base.omega(t))
    }

    fn omega_right(&self, t: f64) -> f64 {
        self.shift(self.base.omega_right(t))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.base.breakpoints()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sudden_switch_limits() {
        let p = FrequencyProtocol::SuddenSwitch { omega0: 1.0, omega1: 1.2, t_switch: 0.0 };
        assert_eq!(p.omega(0.0), 1.0);
        assert_eq!(p.omega_right(0.0), 1.2);
        assert_eq!(p.omega_on(0.0, 0.0), 1.2);
        assert_eq!(p.omega(1e-9), 1.2);
    }

    #[test]
    fn sinusoidal_minimum() {
        let p = FrequencyProtocol::Sinusoidal { omega0: 1.0, amplitude: 0.3, omega_drive: 2.0 };
        assert_eq!(p.min_omega(0.1), p.omega(0.1).min(1.0));
        assert!((p.min_omega(10.0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn unbound_relative_motion_is_refused() {
        let p = FrequencyProtocol::SuddenSwitch { omega0: 1.0, omega1: 0.5, t_switch: 1.0 };
        assert!(ShiftedFrequency::validated(p.clone(), 0.2, 0.5, 0.5).is_ok());
        assert!(matches!(
            ShiftedFrequency::validated(p, 0.2, 0.5, 2.0),
            Err(Error::ModelInvalid(_))
        ));
    }

    #[test]
    fn serde_shape() {
        let p: FrequencyProtocol =
            serde_json::from_str(r#"{"kind":"sudden_switch","omega0":1.0,"omega1":1.2}"#).unwrap();
        assert_eq!(p, FrequencyProtocol::SuddenSwitch { omega0: 1.0, omega1: 1.2, t_switch: 0.0 });
    }
}
