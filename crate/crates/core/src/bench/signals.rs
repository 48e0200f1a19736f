use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    Step,
    Sine,
    Ramp,
    Triangle,
    RampThenStep,
    RampThenZero,
    StepThenZero,
    SinePlusStep,
}

impl SignalKind {
    pub const ALL: [SignalKind; 8] = [
        SignalKind::Step,
        SignalKind::Sine,
        SignalKind::Ramp,
        SignalKind::Triangle,
        SignalKind::RampThenStep,
        SignalKind::RampThenZero,
        SignalKind::StepThenZero,
        SignalKind::SinePlusStep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SignalKind::Step => "step",
            SignalKind::Sine => "sine",
            SignalKind::Ramp => "ramp",
            SignalKind::Triangle => "triangle",
            SignalKind::RampThenStep => "ramp-then-step",
            SignalKind::RampThenZero => "ramp-then-zero",
            SignalKind::StepThenZero => "step-then-zero",
            SignalKind::SinePlusStep => "sine-plus-step",
        }
    }

    /// Kinds with a jump, which break the Lipschitz assumption at the switch.
    pub fn is_discontinuous(&self) -> bool {
        matches!(self, SignalKind::RampThenZero | SignalKind::StepThenZero)
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SignalKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown { kind: "signal", name: s.to_string() })
    }
}

/// A scalar test input. Unset parameters default to: sine period `T/2`
/// samples, switch at `T/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub kind: SignalKind,
    #[serde(default = "unit")]
    pub amplitude: f64,
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default)]
    pub switch_fraction: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

impl SignalSpec {
    pub fn new(kind: SignalKind) -> Self {
        Self { kind, amplitude: 1.0, period: None, switch_fraction: None }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Index of the switch point for the piecewise kinds.
    pub fn switch_index(&self, horizon: usize) -> usize {
        let frac = self.switch_fraction.unwrap_or(0.5);
        ((horizon as f64) * frac).round() as usize
    }

    /// Lipschitz constant in time (per step) of the generated sequence,
    /// ignoring the jump of the discontinuous kinds.
    pub fn lipschitz(&self, horizon: usize) -> f64 {
        let a = self.amplitude.abs();
        let t = horizon as f64;
        let sw = self.switch_index(horizon).max(1) as f64;
        let period = self.period.unwrap_or(t / 2.0);
        match self.kind {
            SignalKind::Step | SignalKind::StepThenZero => 0.0,
            SignalKind::Sine | SignalKind::SinePlusStep => a * 2.0 * PI / period,
            SignalKind::Ramp => a / t,
            SignalKind::Triangle => 2.0 * a / t,
            SignalKind::RampThenStep | SignalKind::RampThenZero => a / sw,
        }
    }
}

/// Generates `u_0 .. u_{T-1}`.
pub fn make_signal(spec: &SignalSpec, horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("signal horizon must be positive".into()));
    }
    if !spec.amplitude.is_finite() {
        return Err(Error::InvalidArgument("signal amplitude must be finite".into()));
    }
    if let Some(p) = spec.period {
        if !(p > 0.0) {
            return Err(Error::InvalidArgument("sine period must be positive".into()));
        }
    }
    let a = spec.amplitude;
    let t_total = horizon as f64;
    let period = spec.period.unwrap_or(t_total / 2.0);
    let sw = spec.switch_index(horizon);
    let sine = |t: usize| (2.0 * PI * t as f64 / period).sin();
    let ramp_to_switch = |t: usize| (t as f64 / sw.max(1) as f64).min(1.0);
    Ok((0..horizon)
        .map(|t| match spec.kind {
            SignalKind::Step => a,
            SignalKind::Sine => a * sine(t),
            SignalKind::Ramp => a * t as f64 / t_total,
            SignalKind::Triangle => a * (1.0 - (2.0 * t as f64 / t_total - 1.0).abs()),
            SignalKind::RampThenStep => {
                if t < sw {
                    a * ramp_to_switch(t)
                } else {
                    a
                }
            }
            SignalKind::RampThenZero => {
                if t < sw {
                    a * ramp_to_switch(t)
                } else {
                    0.0
                }
            }
            SignalKind::StepThenZero => {
                if t < sw {
                    a
                } else {
                    0.0
                }
            }
            SignalKind::SinePlusStep => a * (1.0 + sine(t)),
        })
        .collect())
}

/// The scalar signal as input vectors of dimension `n_u` (every input
/// channel receives the same signal).
pub fn as_inputs(signal: &[f64], n_u: usize) -> Vec<DVector<f64>> {
    signal.iter().map(|&v| DVector::from_element(n_u, v)).collect()
}
