//! Per-pipe hydraulics: Reynolds number, Colebrook-White friction factor,
//! Darcy-Weisbach head loss, the explicit turbulent flow and its analytic
//! partial derivatives.
//!
//! Roughness enters the turbulent-flow expression through its absolute
//! value, which keeps the calibration merit symmetric along roughness axes.
//! All singular situations (`head_loss == 0`) are reported as errors rather
//! than NaN.

use crate::error::{Error, Result};
use crate::network::{FluidProperties, Pipe};

/// Flows with a Reynolds number at or above this are treated as turbulent.
pub const TURBULENT_RE_MIN: f64 = 4000.0;

const LN10: f64 = std::f64::consts::LN_10;

/// Precomputed geometry of one pipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeHydraulics {
    /// Diameter d in m.
    pub diameter: f64,
    /// Cross section pi d^2 / 4 in m2.
    pub cross_section: f64,
    /// Resistance k = l / (2 d g A^2) in s2/m5.
    pub resistance: f64,
    /// Roughness height in m.
    pub roughness: f64,
}

impl PipeHydraulics {
    pub fn new(length: f64, diameter: f64, gravity: f64, roughness: f64) -> Self {
        let cross_section = std::f64::consts::PI * diameter * diameter / 4.0;
        let resistance = length / (2.0 * diameter * gravity * cross_section * cross_section);
        Self {
            diameter,
            cross_section,
            resistance,
            roughness,
        }
    }

    /// Geometry of a network pipe; fails when the roughness is unset.
    pub fn from_pipe(pipe: &Pipe, fluid: &FluidProperties) -> Result<Self> {
        let roughness = pipe.roughness.ok_or_else(|| Error::MissingRoughness {
            pipe: pipe.id.clone(),
        })?;
        Ok(Self::new(
            pipe.length,
            pipe.diameter,
            fluid.gravity,
            roughness,
        ))
    }

    /// Same geometry with the roughness replaced, for calibration trials.
    pub fn with_roughness(&self, roughness: f64) -> Self {
        Self { roughness, ..*self }
    }
}

/// Reynolds number `rho d |Q| / (A eta)`.
pub fn reynolds(flow: f64, pipe: &PipeHydraulics, fluid: &FluidProperties) -> f64 {
    fluid.density * pipe.diameter * flow.abs() / (pipe.cross_section * fluid.dynamic_viscosity)
}

/// Positive solution of the implicit Colebrook-White equation
/// `1/sqrt(lambda) + (2/ln 10) ln(eps/(3.7 d) + 2.51/(Re sqrt(lambda))) = 0`.
///
/// Solved by fixed-point iteration on `w = 1/sqrt(lambda)`, which contracts
/// for `Re >= 4000`. The returned factor satisfies the equation to better
/// than 1e-12.
pub fn friction_factor_cw(reynolds: f64, roughness: f64, diameter: f64) -> Result<f64> {
    if reynolds < TURBULENT_RE_MIN {
        return Err(Error::NotTurbulent { reynolds });
    }
    let rel = roughness.abs() / (3.7 * diameter);
    let mut w = 10.0_f64;
    for _ in 0..100 {
        let next = -(2.0 / LN10) * (rel + 2.51 * w / reynolds).ln();
        if next <= 0.0 || !next.is_finite() {
            return Err(Error::FrictionNoConvergence {
                reynolds,
                relative_roughness: rel * 3.7,
            });
        }
        let done = (next - w).abs() <= 1e-14 * w.abs();
        w = next;
        if done {
            return Ok(1.0 / (w * w));
        }
    }
    Err(Error::FrictionNoConvergence {
        reynolds,
        relative_roughness: rel * 3.7,
    })
}

/// Darcy-Weisbach head loss `lambda k |Q| Q` in m.
pub fn headloss_dw(flow: f64, lambda: f64, resistance: f64) -> f64 {
    lambda * resistance * flow.abs() * flow
}

/// Argument of the natural logarithm in the turbulent-flow expression:
/// `|eps|/(3.7 d) + 2.51 (eta A)/(rho d) sqrt(k/|dh|)`.
pub fn log_argument(
    roughness: f64,
    head_loss: f64,
    pipe: &PipeHydraulics,
    fluid: &FluidProperties,
) -> Result<f64> {
    if head_loss == 0.0 {
        return Err(Error::ZeroHeadLoss);
    }
    Ok(log_argument_unchecked(roughness, head_loss, pipe, fluid))
}

fn log_argument_unchecked(
    roughness: f64,
    head_loss: f64,
    pipe: &PipeHydraulics,
    fluid: &FluidProperties,
) -> f64 {
    roughness.abs() / (3.7 * pipe.diameter)
        + 2.51 * fluid.dynamic_viscosity * pipe.cross_section / (fluid.density * pipe.diameter)
            * (pipe.resistance / head_loss.abs()).sqrt()
}

/// Explicit turbulent flow through a pipe under head loss `dh`:
/// `-sign(dh) (2/ln 10) sqrt(|dh|/k) ln(l(|eps|, dh))`.
///
/// Defined as zero at `dh == 0` (a loss-free pipe carries no flow) and odd
/// in the head loss.
pub fn turbulent_flow(
    roughness: f64,
    head_loss: f64,
    pipe: &PipeHydraulics,
    fluid: &FluidProperties,
) -> f64 {
    if head_loss == 0.0 {
        return 0.0;
    }
    let arg = log_argument_unchecked(roughness, head_loss, pipe, fluid);
    -head_loss.signum() * (2.0 / LN10) * (head_loss.abs() / pipe.resistance).sqrt() * arg.ln()
}

/// Partial derivative of the turbulent flow with respect to the roughness.
///
/// Always opposite in sign to the head loss: a rougher pipe carries less
/// flow for the same loss.
pub fn d_flow_d_roughness(
    roughness: f64,
    head_loss: f64,
    pipe: &PipeHydraulics,
    fluid: &FluidProperties,
) -> Result<f64> {
    if head_loss == 0.0 {
        return Err(Error::ZeroHeadLoss);
    }
    let arg = log_argument_unchecked(roughness, head_loss, pipe, fluid);
    Ok(
        -(2.0 / LN10) * head_loss.signum() * (head_loss.abs() / pipe.resistance).sqrt()
            / (3.7 * pipe.diameter * arg),
    )
}

/// Partial derivative of the turbulent flow with respect to the head loss.
///
/// This is the bare `d f_t / d dh`; chaining onto unknown nodal heads via
/// the constant incidence factors is the caller's job. Even in the head
/// loss, and positive whenever the logarithm argument is below one.
pub fn d_flow_d_headloss(
    roughness: f64,
    head_loss: f64,
    pipe: &PipeHydraulics,
    fluid: &FluidProperties,
) -> Result<f64> {
    if head_loss == 0.0 {
        return Err(Error::ZeroHeadLoss);
    }
    let arg = log_argument_unchecked(roughness, head_loss, pipe, fluid);
    let dh_abs = head_loss.abs();
    Ok(-(1.0 / LN10)
        * ((1.0 / (pipe.resistance * dh_abs)).sqrt() * arg.ln()
            - 2.51 * fluid.dynamic_viscosity * pipe.cross_section
                / (fluid.density * pipe.diameter)
                / (dh_abs * arg)))
}
