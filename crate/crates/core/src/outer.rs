//! High-level (outer) control: amplitude tracking via the modulation gain μ,
//! frequency tracking via the DC source current and via the gain η, and
//! reactive-power response shaping.
//!
//! All controllers are exposed both as derivative functions (for embedding
//! the controller states into the closed-loop ODE) and as discrete step
//! functions at the sample rate dt.

use crate::plant::ConverterParams;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Guard against division by a collapsed DC voltage.
pub const EPS_DIV: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Amplitude tracking through μ (three-level cascade)
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AmpTrackParams {
    /// P gain of the current-amplitude loop (î_ℓ → v̂_x,ref).
    pub k_p: f64,
    /// I gain of the current-amplitude loop.
    pub k_i: f64,
    /// μ-loop gain: μ̇ = (K_x/v_dc)(v̂_x,ref − v̂_x); K_x = 2λ_x.
    pub k_x: f64,
    /// Pole of the v̂_x loop; must be at least ten times faster than the
    /// current-amplitude loop pole `lambda0`.
    pub lambda_x: f64,
    /// Double pole of the current-amplitude loop (negative).
    pub lambda0: f64,
    /// P gain of the optional capacitor-voltage-amplitude loop.
    pub k_cp: f64,
    /// I gain of the optional capacitor-voltage-amplitude loop.
    pub k_ci: f64,
}

impl AmpTrackParams {
    /// Gains used in the bench runs: K_p = 0.15, K_i = 11.25 place a double
    /// pole at λ0 = −K_p/(2L) = −150 for L = 5e-4; K_x = 2e5, λ_x = 1e5.
    /// The voltage loop reuses the current-loop gains.
    pub fn bench() -> Self {
        AmpTrackParams {
            k_p: 0.15,
            k_i: 11.25,
            k_x: 2.0e5,
            lambda_x: 1.0e5,
            lambda0: -150.0,
            k_cp: 0.15,
            k_ci: 11.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_p > 0.0 && self.k_i > 0.0 && self.k_x > 0.0) {
            return Err(Error::Config("amplitude-tracking gains must be positive".into()));
        }
        if self.lambda_x.abs() < 10.0 * self.lambda0.abs() {
            return Err(Error::Config(format!(
                "v_x loop must be at least 10x faster than the amplitude loop: |lambda_x| = {} < 10|lambda0| = {}",
                self.lambda_x.abs(),
                10.0 * self.lambda0.abs()
            )));
        }
        Ok(())
    }
}

/// Integrator states of the cascade plus the dynamic modulation gain.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AmpTrackState {
    /// ∫(î_ℓ,ref − î_ℓ) dt.
    pub int_el: f64,
    /// ∫(v̂_ref − v̂) dt (voltage cascade only).
    pub int_ec: f64,
    /// Current modulation gain, kept in [0, 1].
    pub mu_dyn: f64,
}

impl AmpTrackState {
    pub fn new(mu0: f64) -> Self {
        AmpTrackState { int_el: 0.0, int_ec: 0.0, mu_dyn: mu0 }
    }
}

/// What the cascade tracks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmpTarget {
    /// Inductor-current amplitude reference î_ℓ,ref in amperes (αβ norm).
    CurrentAmp(f64),
    /// Capacitor-voltage amplitude reference v̂_ref in volts (αβ norm);
    /// engages the extra voltage loop producing î_ℓ,ref.
    VoltageAmp(f64),
}

/// Instantaneous measurements fed to the cascade (all αβ norms).
#[derive(Clone, Copy, Debug)]
pub struct AmpTrackMeas {
    /// ‖i_αβ‖ — inductor current amplitude.
    pub il_amp: f64,
    /// ‖v_αβ‖ — capacitor voltage amplitude (also the feedforward of the
    /// current loop).
    pub v_amp: f64,
    /// ‖i_load‖ — load current amplitude (feedforward of the voltage loop).
    pub iload_amp: f64,
    pub v_dc: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AmpTrackDeriv {
    pub d_int_el: f64,
    pub d_int_ec: f64,
    pub d_mu: f64,
}

/// Continuous-time cascade law. Errors are defined as reference minus
/// measurement so all gains enter with positive sign:
///
///   î_ℓ,ref  = î_load + K_cp e_c + K_ci ∫e_c       (voltage target only)
///   v̂_x,ref = K_p e_ℓ + K_i ∫e_ℓ + v̂
///   μ̇       = (K_x/v_dc)(v̂_x,ref − ½μ v_dc)
///
/// μ is confined to [0, 1]: at a bound with the law pushing outward, μ̇ and
/// both integrators freeze and the returned flag is set. The flag is also
/// set (with all derivatives zero) when v_dc ≤ ε_div.
pub fn amp_track_deriv(
    p: &AmpTrackParams,
    st: &AmpTrackState,
    target: AmpTarget,
    meas: &AmpTrackMeas,
) -> (AmpTrackDeriv, bool) {
    if meas.v_dc <= EPS_DIV {
        return (AmpTrackDeriv::default(), true);
    }
    let (il_ref, e_c) = match target {
        AmpTarget::CurrentAmp(r) => (r, 0.0),
        AmpTarget::VoltageAmp(v_ref) => {
            let e_c = v_ref - meas.v_amp;
            (meas.iload_amp + p.k_cp * e_c + p.k_ci * st.int_ec, e_c)
        }
    };
    let e_l = il_ref - meas.il_amp;
    let vx_ref = p.k_p * e_l + p.k_i * st.int_el + meas.v_amp;
    let d_mu = p.k_x / meas.v_dc * (vx_ref - 0.5 * st.mu_dyn * meas.v_dc);
    let clamped = (st.mu_dyn >= 1.0 && d_mu > 0.0) || (st.mu_dyn <= 0.0 && d_mu < 0.0);
    if clamped {
        (AmpTrackDeriv { d_int_el: 0.0, d_int_ec: 0.0, d_mu: 0.0 }, true)
    } else {
        (AmpTrackDeriv { d_int_el: e_l, d_int_ec: e_c, d_mu }, false)
    }
}

/// Discrete (explicit Euler) version of [`amp_track_deriv`]. Returns the μ
/// to apply, the advanced state and the hold/saturation flag.
pub fn amp_track_step(
    p: &AmpTrackParams,
    st: &AmpTrackState,
    target: AmpTarget,
    meas: &AmpTrackMeas,
    dt: f64,
) -> (f64, AmpTrackState, bool) {
    let (d, flagged) = amp_track_deriv(p, st, target, meas);
    let next = AmpTrackState {
        int_el: st.int_el + dt * d.d_int_el,
        int_ec: st.int_ec + dt * d.d_int_ec,
        mu_dyn: (st.mu_dyn + dt * d.d_mu).clamp(0.0, 1.0),
    };
    (next.mu_dyn, next, flagged)
}

// ---------------------------------------------------------------------------
// Frequency tracking via the DC current source (PID)
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IdcPidParams {
    pub k_p: f64,
    pub k_i: f64,
    pub k_d: f64,
    /// Low-pass cutoff of the derivative branch in 1/s.
    pub n_filter: f64,
}

impl IdcPidParams {
    /// Bench gains: K_p = 0.3, K_i = 20, K_d = 0.001, N = 10 s⁻¹.
    pub fn bench() -> Self {
        IdcPidParams { k_p: 0.3, k_i: 20.0, k_d: 0.001, n_filter: 10.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_filter > 0.0) {
            return Err(Error::Config("PID derivative filter cutoff must be positive".into()));
        }
        Ok(())
    }
}

/// Integrator and filtered-derivative states. `prev_e` backs the
/// backward-difference ė of the discrete step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdcPidState {
    pub int_e: f64,
    pub z: f64,
    pub prev_e: f64,
}

/// PID output for error e = v_dc_ref − v_dc with ė supplied by the caller
/// (inside the closed-loop ODE, ė = −v̇_dc from the plant derivative).
/// Returns (i_dc correction, d_int_e, d_z). The output is pure feedback: the
/// caller adds it to its nominal bias, i_dc = i_dc,nominal + correction.
pub fn idc_pid_output(p: &IdcPidParams, st: &IdcPidState, e: f64, e_dot: f64) -> (f64, f64, f64) {
    let cmd = p.k_p * e + p.k_i * st.int_e + st.z;
    let d_z = p.n_filter * (p.k_d * e_dot - st.z);
    (cmd, e, d_z)
}

/// Discrete PID step with backward-difference ė (the paper's low-pass
/// D-branch, discretized at the controller rate).
pub fn idc_pid_step(p: &IdcPidParams, st: &IdcPidState, v_dc_ref: f64, v_dc: f64, dt: f64) -> (f64, IdcPidState) {
    let e = v_dc_ref - v_dc;
    let e_dot = (e - st.prev_e) / dt;
    let (cmd, d_int, d_z) = idc_pid_output(p, st, e, e_dot);
    (cmd, IdcPidState { int_e: st.int_e + dt * d_int, z: st.z + dt * d_z, prev_e: e })
}

/// Equivalent synthetic inertia with the derivative branch active:
/// (C_dc + K_d)/η² — strictly larger than the plant's own C_dc/η².
pub fn idc_pid_equivalent_inertia(p: &IdcPidParams, conv: &ConverterParams) -> f64 {
    (conv.c_dc + p.k_d) / (conv.eta * conv.eta)
}

// ---------------------------------------------------------------------------
// Frequency tracking via the gain η
// ---------------------------------------------------------------------------

/// Which η law drives the update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaLaw {
    /// η̇ = (τ/v_dc)(ω_ref − ω) − (η/v_dc)v̇_dc. The closed loop obeys
    /// ω̇ = τ(ω_ref − ω) exactly.
    Exact,
    /// η̇ = [(τ/v_dc)(ω_ref − ω) + η G_dc/C_dc − (J η/v_dc)v̇_dc]/(1 + J):
    /// renders the frequency a swing equation with inertia C_dc(1+J)/η² and
    /// damping τC_dc/η², i.e. virtual-synchronous-machine behavior.
    Vsm,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EtaTrackParams {
    /// Frequency-loop rate (Exact) / damping (Vsm), 1/s.
    pub tau: f64,
    /// Extra inertia factor J ≥ 0 of the Vsm law.
    pub j_extra: f64,
    pub law: EtaLaw,
}

impl EtaTrackParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config("eta controller needs tau > 0".into()));
        }
        if self.j_extra < 0.0 {
            return Err(Error::Config("eta controller needs j_extra >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtaTrackState {
    pub eta_dyn: f64,
}

/// η̇ per the selected law; the flag reports a hold because v_dc ≤ ε_div.
/// `v_dc_dot` must come from the plant derivative of the same evaluation,
/// not from differencing measurements.
pub fn eta_track_deriv(
    p: &EtaTrackParams,
    conv: &ConverterParams,
    st: &EtaTrackState,
    omega_ref: f64,
    v_dc: f64,
    v_dc_dot: f64,
) -> (f64, bool) {
    if v_dc <= EPS_DIV {
        return (0.0, true);
    }
    let omega = st.eta_dyn * v_dc;
    let d_eta = match p.law {
        EtaLaw::Exact => p.tau / v_dc * (omega_ref - omega) - st.eta_dyn / v_dc * v_dc_dot,
        EtaLaw::Vsm => {
            (p.tau / v_dc * (omega_ref - omega) + st.eta_dyn * conv.g_dc / conv.c_dc
                - p.j_extra * st.eta_dyn / v_dc * v_dc_dot)
                / (1.0 + p.j_extra)
        }
    };
    (d_eta, false)
}

/// Discrete (explicit Euler) η update. Returns the η to apply, the advanced
/// state and the hold flag.
pub fn eta_track_step(
    p: &EtaTrackParams,
    conv: &ConverterParams,
    st: &EtaTrackState,
    omega_ref: f64,
    v_dc: f64,
    v_dc_dot: f64,
    dt: f64,
) -> (f64, EtaTrackState, bool) {
    let (d_eta, held) = eta_track_deriv(p, conv, st, omega_ref, v_dc, v_dc_dot);
    let next = EtaTrackState { eta_dyn: st.eta_dyn + dt * d_eta };
    (next.eta_dyn, next, held)
}

// ---------------------------------------------------------------------------
// Reactive-power response shaping
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactiveMode {
    /// μ = μ₀ + k_μ Q_x (resistive droop).
    Mu,
    /// η = η₀ + k_η Q_x (inductive droop).
    Eta,
    /// i_dc = i_dc,0 + k_i Q_x (governor law).
    Idc,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReactiveShapeParams {
    pub mode: ReactiveMode,
    /// μ₀ | η₀ | i_dc,0 depending on mode.
    pub base: f64,
    /// k_μ | k_η | k_i depending on mode.
    pub gain: f64,
}

impl ReactiveShapeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0) {
            return Err(Error::Config("reactive shaping gain must be positive".into()));
        }
        Ok(())
    }
}

/// Floor used when clamping the strictly-positive quantities μ and η.
const POSITIVE_FLOOR: f64 = 1e-12;

/// Effective (μ | η | i_dc) = base + gain·Q_x, clamped to the mode's valid
/// range (μ ∈ (0, 1], η > 0, i_dc ≥ 0); the flag reports a clamp.
pub fn reactive_shape(p: &ReactiveShapeParams, q_x: f64) -> (f64, bool) {
    let raw = p.base + p.gain * q_x;
    let clamped = match p.mode {
        ReactiveMode::Mu => raw.clamp(POSITIVE_FLOOR, 1.0),
        ReactiveMode::Eta => raw.max(POSITIVE_FLOOR),
        ReactiveMode::Idc => raw.max(0.0),
    };
    (clamped, clamped != raw)
}

/// Validity range of the reactive power under shaping: ±base/gain for the
/// μ and i_dc modes. The η mode has no such range.
pub fn reactive_limits(p: &ReactiveShapeParams) -> Result<(f64, f64)> {
    match p.mode {
        ReactiveMode::Mu | ReactiveMode::Idc => {
            let q = p.base / p.gain;
            Ok((-q, q))
        }
        ReactiveMode::Eta => Err(Error::Config("no reactive-power limit applies to eta-mode shaping".into())),
    }
}

/// Resolves the algebraic loop of μ-mode shaping. With v_x = ½μ v_dc ξ the
/// reactive power is itself proportional to μ: Q_x = μ·s where
/// s = ½ v_dc (ξ_β i_α − ξ_α i_β). Then μ = μ₀ + k_μ μ s has the closed form
/// μ = μ₀/(1 − k_μ s), singular as Q_x approaches the ±μ₀/k_μ limit.
pub fn solve_mu_feedback(mu0: f64, k_mu: f64, s: f64) -> Result<f64> {
    let denom = 1.0 - k_mu * s;
    if denom.abs() < 1e-9 {
        return Err(Error::Singular("mu-mode reactive feedback at its power limit".into()));
    }
    Ok(mu0 / denom)
}
