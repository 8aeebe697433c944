//! The reviewed grid-forming controller families: cascaded inner loop,
//! droop reference generation, Van der Pol virtual oscillator, polar virtual
//! oscillator, and open-loop polar modulation.
//!
//! Naming: `n_f` is always the frequency droop gain ((rad/s)/W) and `n_a`
//! the amplitude droop gain (V/var), regardless of which letter the
//! originating scheme used.
//!
//! Controller states advance once per grid step dt via the discrete step
//! functions below; between controller updates the plant integrates one RK4
//! step with the command held (zero-order hold). There is no separate
//! controller rate.

use crate::frames::{AlphaBeta, SQRT_3_OVER_2};
use crate::plant::{ConverterParams, ModulationCommand};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

const EPS_DIV: f64 = 1e-6;

/// Gains of the cascaded voltage/current inner loop, derived from the design
/// poles λ0 (voltage, critically damped double pole) and λ_ℓ (current).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InnerLoopGains {
    pub k_pc: f64,
    pub k_ic: f64,
    pub k_pl: f64,
    pub lambda0: f64,
    pub lambda_l: f64,
}

/// K_pc = −2Cλ0, K_ic = Cλ0², K_pl = −Lλ_ℓ, requiring λ0 < 0 and the current
/// loop at least ten times faster (|λ_ℓ| ≥ 10|λ0|).
pub fn inner_gains_from_poles(lambda0: f64, lambda_l: f64, p: &ConverterParams) -> Result<InnerLoopGains> {
    if !(lambda0 < 0.0) {
        return Err(Error::Config("lambda0 must be negative".into()));
    }
    if !(lambda_l <= 10.0 * lambda0) {
        return Err(Error::Config("current-loop pole must satisfy |lambda_l| >= 10|lambda0|".into()));
    }
    Ok(InnerLoopGains {
        k_pc: -2.0 * p.c * lambda0,
        k_ic: p.c * lambda0 * lambda0,
        k_pl: -p.l * lambda_l,
        lambda0,
        lambda_l,
    })
}

/// Integral state of the inner loop.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InnerLoopState {
    pub int_ec: AlphaBeta,
}

/// Plant measurements consumed by the inner loop.
#[derive(Clone, Copy, Debug)]
pub struct InnerLoopMeas {
    pub v_ab: AlphaBeta,
    pub i_ab: AlphaBeta,
    pub i_load: AlphaBeta,
    pub v_dc: f64,
}

/// One discrete inner-loop step: computes m (clamped) and advances ∫e_c.
pub fn inner_loop_step(
    g: &InnerLoopGains,
    r: f64,
    st: &InnerLoopState,
    v_ref: AlphaBeta,
    meas: &InnerLoopMeas,
    dt: f64,
) -> Result<(ModulationCommand, InnerLoopState, bool)> {
    let (m_raw, e_c) = inner_loop_output(g, r, st, v_ref, meas)?;
    let (m, sat) = ModulationCommand::clamped(m_raw);
    let next = InnerLoopState { int_ec: st.int_ec + e_c.scale(dt) };
    Ok((m, next, sat))
}

/// Pure algebra of the inner loop: given the integral state, the reference
/// and the measurements, returns the unclamped modulation command and the
/// voltage error e_c = v_ref − v_ab.
///
/// Sign convention: both PI loops act positively on their errors
/// (e_c = v_ref − v, e_ℓ = i_ref − i), which is the negative-feedback
/// stabilizing direction; the feedback-linearizing output is
/// m = (2/v_dc)(v + R i + K_pl e_ℓ). `r` is the filter resistance.
pub fn inner_loop_output(
    g: &InnerLoopGains,
    r: f64,
    st: &InnerLoopState,
    v_ref: AlphaBeta,
    meas: &InnerLoopMeas,
) -> Result<(AlphaBeta, AlphaBeta)> {
    if meas.v_dc <= EPS_DIV {
        return Err(Error::Singular("inner loop undefined for v_dc ≈ 0".into()));
    }
    let e_c = v_ref - meas.v_ab;
    let i_ref = e_c.scale(g.k_pc) + st.int_ec.scale(g.k_ic) + meas.i_load;
    let e_l = i_ref - meas.i_ab;
    let m = (meas.v_ab + meas.i_ab.scale(r) + e_l.scale(g.k_pl)).scale(2.0 / meas.v_dc);
    Ok((m, e_c))
}

/// Droop law parameters. ω = ω₀ + n_f(P₀ − P); v̂ = v̂₀ + n_a(Q₀ − Q).
///
/// `v0_hat` is the αβ-frame amplitude the droop reference outputs directly
/// (the reference is v̂·(−sin θ, cos θ) with no extra scaling).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DroopParams {
    pub omega0: f64,
    pub v0_hat: f64,
    pub p0: f64,
    pub q0: f64,
    pub n_f: f64,
    pub n_a: f64,
}

/// Angle/amplitude state shared by the polar-form reference generators.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PolarRefState {
    pub theta: f64,
    pub v_hat: f64,
}

/// Droop frequency for a power measurement.
pub fn droop_omega(d: &DroopParams, p_meas: f64) -> f64 {
    d.omega0 + d.n_f * (d.p0 - p_meas)
}

/// Droop amplitude for a reactive-power measurement; clamped at 0 (flag).
pub fn droop_amplitude(d: &DroopParams, q_meas: f64) -> (f64, bool) {
    let v = d.v0_hat + d.n_a * (d.q0 - q_meas);
    if v < 0.0 {
        (0.0, true)
    } else {
        (v, false)
    }
}

/// One droop reference step: advances θ by the drooped frequency and emits
/// v_ref = v̂·(−sin θ, cos θ) with the (algebraic) drooped amplitude.
pub fn droop_reference(
    d: &DroopParams,
    st: &PolarRefState,
    p_meas: f64,
    q_meas: f64,
    dt: f64,
) -> (AlphaBeta, PolarRefState, bool) {
    let theta = st.theta + droop_omega(d, p_meas) * dt;
    let (v_hat, clamped) = droop_amplitude(d, q_meas);
    let v_ref = AlphaBeta::new(-theta.sin(), theta.cos()).scale(v_hat);
    (v_ref, PolarRefState { theta, v_hat }, clamped)
}

/// Van der Pol oscillator parameters (per-axis oscillator, load-current
/// coupling κ).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VdpVocParams {
    pub mu_vdp: f64,
    pub kappa: f64,
    pub omega0: f64,
}

/// Two Van der Pol oscillators, one per αβ axis. The canonical
/// initialization x1a = −x2a = x1b = x2b = 1 puts them 90° apart with equal
/// amplitudes √2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VdpVocState {
    pub x1a: f64,
    pub x2a: f64,
    pub x1b: f64,
    pub x2b: f64,
}

impl VdpVocState {
    pub fn canonical_init() -> Self {
        VdpVocState { x1a: 1.0, x2a: -1.0, x1b: 1.0, x2b: 1.0 }
    }
}

/// ẋ₁ = ω₀x₂; ẋ₂ = −ω₀x₁ + μ(1 − x₁²)x₂ + κ·i_load (per axis).
pub fn vdp_deriv(pr: &VdpVocParams, st: &VdpVocState, i_load: AlphaBeta) -> VdpVocState {
    VdpVocState {
        x1a: pr.omega0 * st.x2a,
        x2a: -pr.omega0 * st.x1a + pr.mu_vdp * (1.0 - st.x1a * st.x1a) * st.x2a + pr.kappa * i_load.alpha,
        x1b: pr.omega0 * st.x2b,
        x2b: -pr.omega0 * st.x1b + pr.mu_vdp * (1.0 - st.x1b * st.x1b) * st.x2b + pr.kappa * i_load.beta,
    }
}

/// Normalized reference from the oscillator states:
/// v_ref = v̂_ref·√(3/2)/√(x1a²+x1b²) · (x1a, x1b), with v̂_ref the phase
/// amplitude.
pub fn vdp_reference(st: &VdpVocState, v_ref_amp_phase: f64) -> Result<AlphaBeta> {
    let denom = (st.x1a * st.x1a + st.x1b * st.x1b).sqrt();
    if denom < 1e-12 {
        return Err(Error::Singular("degenerate Van der Pol oscillator state".into()));
    }
    let gain = v_ref_amp_phase * SQRT_3_OVER_2 / denom;
    Ok(AlphaBeta::new(st.x1a * gain, st.x1b * gain))
}

/// One VdP VOC step (RK4 on the oscillator states, load held over the step)
/// returning the normalized voltage reference.
pub fn vdp_voc_step(
    pr: &VdpVocParams,
    st: &VdpVocState,
    i_load: AlphaBeta,
    v_ref_amp_phase: f64,
    dt: f64,
) -> Result<(AlphaBeta, VdpVocState)> {
    let add = |a: &VdpVocState, b: &VdpVocState, h: f64| VdpVocState {
        x1a: a.x1a + h * b.x1a,
        x2a: a.x2a + h * b.x2a,
        x1b: a.x1b + h * b.x1b,
        x2b: a.x2b + h * b.x2b,
    };
    let k1 = vdp_deriv(pr, st, i_load);
    let k2 = vdp_deriv(pr, &add(st, &k1, 0.5 * dt), i_load);
    let k3 = vdp_deriv(pr, &add(st, &k2, 0.5 * dt), i_load);
    let k4 = vdp_deriv(pr, &add(st, &k3, dt), i_load);
    let next = VdpVocState {
        x1a: st.x1a + dt / 6.0 * (k1.x1a + 2.0 * k2.x1a + 2.0 * k3.x1a + k4.x1a),
        x2a: st.x2a + dt / 6.0 * (k1.x2a + 2.0 * k2.x2a + 2.0 * k3.x2a + k4.x2a),
        x1b: st.x1b + dt / 6.0 * (k1.x1b + 2.0 * k2.x1b + 2.0 * k3.x1b + k4.x1b),
        x2b: st.x2b + dt / 6.0 * (k1.x2b + 2.0 * k2.x2b + 2.0 * k3.x2b + k4.x2b),
    };
    let v_ref = vdp_reference(&next, v_ref_amp_phase)?;
    Ok((v_ref, next))
}

/// Polar VOC: droop-driven angle with a first-order amplitude lag,
/// θ̇ = ω₀ + n_f(P₀−P), v̂̇ = λ_osc(v̂₀ + n_a(Q₀−Q) − v̂).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PolarVocParams {
    pub droop: DroopParams,
    pub lambda_osc: f64,
}

/// One polar VOC step. The amplitude lag is integrated exactly over the step
/// (measurements held); the output is v_ref = √(3/2)·v̂·(−sin θ, cos θ) with
/// v̂₀ a phase amplitude.
pub fn polar_voc_step(
    pr: &PolarVocParams,
    st: &PolarRefState,
    p_meas: f64,
    q_meas: f64,
    dt: f64,
) -> (AlphaBeta, PolarRefState) {
    let theta = st.theta + droop_omega(&pr.droop, p_meas) * dt;
    let (target, _) = droop_amplitude(&pr.droop, q_meas);
    let v_hat = target + (st.v_hat - target) * (-pr.lambda_osc * dt).exp();
    let v_ref = AlphaBeta::new(-theta.sin(), theta.cos()).scale(v_hat * SQRT_3_OVER_2);
    (v_ref, PolarRefState { theta, v_hat })
}

/// Which amplitude the open-loop lag tracks. The open-loop reading (the
/// modulation amplitude itself) is the default; the alternative feeds back
/// the measured capacitor amplitude normalized by v_dc,ref — the source
/// text is ambiguous between the two, so both are provided.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpenLoopFeedback {
    #[default]
    Modulation,
    Capacitor,
}

/// Open-loop polar modulation: m = v̂_m·√(3/2)·(−sin θ_m, cos θ_m) with
/// θ̇_m = ω_ref and v̂̇_m = λ_m(v̂_m,ref − v̂_fb).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OpenLoopParams {
    /// Dimensionless modulation amplitude reference, e.g. 2·v̂_ref/v_dc,ref.
    pub v_m_ref: f64,
    pub lambda_m: f64,
    pub omega_ref: f64,
    #[serde(default)]
    pub feedback: OpenLoopFeedback,
    /// Used only by the capacitor-feedback variant for normalization.
    pub v_dc_ref: f64,
}

/// One open-loop modulation step. `v_cap_amp` is the measured αβ capacitor
/// amplitude (only read by the capacitor-feedback variant).
pub fn open_loop_modulation_step(
    pr: &OpenLoopParams,
    st: &PolarRefState,
    v_cap_amp: f64,
    dt: f64,
) -> (ModulationCommand, PolarRefState) {
    let theta = st.theta + pr.omega_ref * dt;
    let fb = match pr.feedback {
        OpenLoopFeedback::Modulation => st.v_hat,
        OpenLoopFeedback::Capacitor => 2.0 * (v_cap_amp / SQRT_3_OVER_2) / pr.v_dc_ref,
    };
    let v_hat = st.v_hat + pr.lambda_m * (pr.v_m_ref - fb) * dt;
    let m_ab = AlphaBeta::new(-theta.sin(), theta.cos()).scale(v_hat * SQRT_3_OVER_2);
    let (m, _) = ModulationCommand::clamped(m_ab);
    (m, PolarRefState { theta, v_hat })
}
