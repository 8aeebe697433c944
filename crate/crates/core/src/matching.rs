//! Matching control: drive the modulation angle with the DC voltage,
//! θ̇_v = η v_dc, m = μ(−sin θ_v, cos θ_v).
//!
//! In this form the DC capacitor plays the role of a synchronous machine's
//! rotor: the closed loop is structurally a swing equation with inertia
//! C_dc/η², damping G_dc/η² and mechanical torque i_dc/η. The machine-side
//! identification (field current i_f, mutual inductance L_m) enters only
//! through μ = −2η L_m i_f; none of the machine electromagnetics is
//! simulated.

use crate::frames::AlphaBeta;
use crate::plant::{ConverterParams, ModulationCommand};
use crate::{Error, Result};

/// Oscillator state of the matching controller. ξ stays on the unit circle
/// (skew-symmetric generator); it is renormalized after every step, which
/// also removes any angle-wrap bookkeeping. θ_v = atan2(−ξ_α, ξ_β).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchingState {
    pub xi: AlphaBeta,
}

impl MatchingState {
    /// State at virtual angle θ_v: ξ = (−sin θ_v, cos θ_v).
    pub fn from_angle(theta_v: f64) -> Self {
        MatchingState { xi: AlphaBeta::new(-theta_v.sin(), theta_v.cos()) }
    }

    pub fn theta_v(&self) -> f64 {
        f64::atan2(-self.xi.alpha, self.xi.beta)
    }

    pub fn renormalized(&self) -> Self {
        let n = self.xi.norm();
        MatchingState { xi: self.xi.scale(1.0 / n) }
    }
}

/// Advances the virtual angle by η·v_dc·dt (exact rotation over the step,
/// treating v_dc as constant) and returns m = μ·ξ. ‖m‖ = μ at every step;
/// v_dc ≤ 0 simply rotates the other way.
pub fn matching_step(
    p: &ConverterParams,
    st: &MatchingState,
    v_dc: f64,
    dt: f64,
) -> (ModulationCommand, MatchingState) {
    let next = MatchingState { xi: st.xi.rotate(p.eta * v_dc * dt) }.renormalized();
    (ModulationCommand { m_ab: next.xi.scale(p.mu) }, next)
}

/// Equivalent synchronous-machine quantities of the matched closed loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivalentMachine {
    /// C_dc/η² — synthetic inertia.
    pub inertia_eq: f64,
    /// G_dc/η² — synthetic damping.
    pub damping_eq: f64,
    /// i_dc/η — mechanical torque.
    pub torque_m_eq: f64,
    /// i_x/η — virtual electrical torque.
    pub tau_e_v: f64,
    /// ω_v = η v_dc — virtual rotor speed.
    pub omega_v: f64,
}

pub fn equivalent_machine(p: &ConverterParams, v_dc: f64, i_x: f64) -> EquivalentMachine {
    EquivalentMachine {
        inertia_eq: p.c_dc / (p.eta * p.eta),
        damping_eq: p.g_dc / (p.eta * p.eta),
        torque_m_eq: p.i_dc / p.eta,
        tau_e_v: i_x / p.eta,
        omega_v: p.eta * v_dc,
    }
}

const EPS_AMP: f64 = 1e-9;

/// Closed-loop dynamics of the modulated terminal voltage v_x = ½μ v_dc ξ:
///
/// (4C_dc/μ²) v̇_x = (2i_dc/μ) v_x/‖v_x‖ − Υ i_ab
///                  + (−(4G_dc/μ²) I + (8C_dc η/μ³)‖v_x‖ J) v_x
///
/// with Υ = v_x v_xᵀ/(v_xᵀv_x). This is an analysis view of the merged
/// DC/oscillator dynamics, not the simulation path — it is singular at
/// ‖v_x‖ = 0, which the real closed loop (started from v_dc = 0) passes
/// through without trouble.
pub fn vx_terminal_deriv(p: &ConverterParams, v_x: AlphaBeta, i_ab: AlphaBeta) -> Result<AlphaBeta> {
    let norm = v_x.norm();
    if norm <= EPS_AMP {
        return Err(Error::Singular("vx_terminal_deriv at ‖v_x‖ ≈ 0".into()));
    }
    let mu2 = p.mu * p.mu;
    let lhs_coeff = 4.0 * p.c_dc / mu2;
    let radial = v_x.scale(2.0 * p.i_dc / (p.mu * norm));
    let proj = v_x.scale(v_x.dot(i_ab) / v_x.norm_sq());
    let linear = v_x.scale(-4.0 * p.g_dc / mu2) + v_x.perp().scale(8.0 * p.c_dc * p.eta / (mu2 * p.mu) * norm);
    Ok((radial - proj + linear).scale(1.0 / lhs_coeff))
}
