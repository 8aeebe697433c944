//! Averaged three-phase DC/AC converter model: DC link capacitor behind a
//! controlled current source, modulation block, RLC output filter, and
//! piecewise-constant load schedules.
//!
//! All AC quantities live in the power-invariant αβ frame. The γ components
//! of the filter evolve autonomously (they are driven by neither the
//! modulation nor the load under balanced operation) and are carried along
//! only so their decay can be checked.

use crate::frames::AlphaBeta;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Electrical constants of one converter plus the matching-control gains.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConverterParams {
    /// DC-link capacitance, farads.
    pub c_dc: f64,
    /// DC-side conductance, siemens.
    pub g_dc: f64,
    /// Nominal DC current source, amperes. Outer loops may override it per
    /// step; this field stores the nominal value.
    pub i_dc: f64,
    /// Filter resistance, ohms.
    pub r: f64,
    /// Filter inductance, henries.
    pub l: f64,
    /// Output capacitance, farads.
    pub c: f64,
    /// Matching gain, rad/(V·s): the virtual angle obeys θ̇_v = η v_dc.
    pub eta: f64,
    /// Modulation amplitude, dimensionless in (0, 1].
    pub mu: f64,
}

impl ConverterParams {
    /// The 10-kW-range bench parameters used throughout the test scenarios:
    /// nominal v_dc = i_dc/G_dc = 1000 V, 50 Hz, 165 V phase amplitude.
    pub fn nominal() -> Self {
        let v_dc_ref = 1000.0;
        let omega_ref = 100.0 * std::f64::consts::PI;
        let v_hat_ref = 165.0;
        ConverterParams {
            c_dc: 1e-3,
            g_dc: 0.1,
            i_dc: 100.0,
            r: 0.1,
            l: 5e-4,
            c: 1e-5,
            eta: omega_ref / v_dc_ref,
            mu: 2.0 * v_hat_ref / v_dc_ref,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            (self.c_dc, "c_dc"),
            (self.g_dc, "g_dc"),
            (self.r, "r"),
            (self.l, "l"),
            (self.c, "c"),
            (self.eta, "eta"),
        ];
        for (v, name) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be strictly positive")));
            }
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::Config("mu must lie in (0, 1]".into()));
        }
        if !(self.i_dc >= 0.0) || !self.i_dc.is_finite() {
            return Err(Error::Config("i_dc must be non-negative".into()));
        }
        Ok(())
    }
}

/// Dynamic state of one converter.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantState {
    pub v_dc: f64,
    /// Filter inductor current, amperes.
    pub i_ab: AlphaBeta,
    /// Output capacitor voltage, volts.
    pub v_ab: AlphaBeta,
    pub i_gamma: f64,
    pub v_gamma: f64,
}

impl PlantState {
    pub fn is_finite(&self) -> bool {
        self.v_dc.is_finite()
            && self.i_ab.is_finite()
            && self.v_ab.is_finite()
            && self.i_gamma.is_finite()
            && self.v_gamma.is_finite()
    }
}

/// Time derivative of [`PlantState`].
pub type PlantDeriv = PlantState;

/// One segment of a piecewise-constant load: admittance G_load = [[g, −b],
/// [b, g]] plus an optional constant current, active on [t_start, t_next).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LoadSegment {
    pub t_start: f64,
    pub g: f64,
    pub b: f64,
    #[serde(default)]
    pub i_const: AlphaBeta,
}

/// Piecewise-constant load schedule. Segments are half-open [t_start,
/// t_next): a step takes effect exactly at its start time.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LoadModel {
    pub schedule: Vec<LoadSegment>,
}

impl LoadModel {
    /// Open circuit for all time.
    pub fn open_circuit() -> Self {
        LoadModel { schedule: vec![LoadSegment { t_start: 0.0, g: 0.0, b: 0.0, i_const: AlphaBeta::ZERO }] }
    }

    /// A single constant admittance from t = 0.
    pub fn constant(g: f64, b: f64) -> Self {
        LoadModel { schedule: vec![LoadSegment { t_start: 0.0, g, b, i_const: AlphaBeta::ZERO }] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::Config("load schedule is empty".into()));
        }
        for w in self.schedule.windows(2) {
            if !(w[1].t_start > w[0].t_start) {
                return Err(Error::Config("load schedule times must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn active_segment(&self, t: f64) -> Result<&LoadSegment> {
        let mut active = None;
        for seg in &self.schedule {
            if t >= seg.t_start {
                active = Some(seg);
            } else {
                break;
            }
        }
        active.ok_or_else(|| Error::Config(format!("no active load segment at t = {t}")))
    }

    /// True if some segment boundary lies in the half-open window (t0, t1].
    pub fn has_step_in(&self, t0: f64, t1: f64) -> bool {
        self.schedule.iter().any(|s| s.t_start > t0 && s.t_start <= t1)
    }
}

/// Load current drawn at the capacitor node:
/// i_load = G_load·v + i_const of the active segment.
pub fn load_current(load: &LoadModel, t: f64, v_ab: AlphaBeta) -> Result<AlphaBeta> {
    let seg = load.active_segment(t)?;
    Ok(segment_current(seg, v_ab))
}

pub fn segment_current(seg: &LoadSegment, v_ab: AlphaBeta) -> AlphaBeta {
    AlphaBeta {
        alpha: seg.g * v_ab.alpha - seg.b * v_ab.beta + seg.i_const.alpha,
        beta: seg.b * v_ab.alpha + seg.g * v_ab.beta + seg.i_const.beta,
    }
}

/// Modulation command. Components are duty-cycle averages; the averaged model
/// is only meaningful for ‖m‖ ≤ 1.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModulationCommand {
    pub m_ab: AlphaBeta,
}

impl ModulationCommand {
    /// Radially clamps ‖m‖ to 1. Returns the (possibly scaled) command and
    /// whether clamping occurred; callers surface the flag in the trace.
    pub fn clamped(m_ab: AlphaBeta) -> (Self, bool) {
        let n = m_ab.norm();
        if n > 1.0 {
            (ModulationCommand { m_ab: m_ab.scale(1.0 / n) }, true)
        } else {
            (ModulationCommand { m_ab }, false)
        }
    }
}

/// Modulation block port quantities: i_x = ½ m·i (DC side), v_x = ½ m v_dc
/// (AC side). The block is lossless: v_x·i = i_x·v_dc.
pub fn modulation_io(m: &ModulationCommand, state: &PlantState) -> (f64, AlphaBeta) {
    let i_x = 0.5 * m.m_ab.dot(state.i_ab);
    let v_x = m.m_ab.scale(0.5 * state.v_dc);
    (i_x, v_x)
}

/// Averaged converter dynamics:
///
/// C_dc v̇_dc = −G_dc v_dc + i_dc − ½ m·i_ab
/// L  di_ab   = −R i_ab + ½ m v_dc − v_ab
/// C  dv_ab   = −i_load + i_ab
///
/// `i_dc_eff` is the effective DC source current (nominal unless an outer
/// loop overrides it).
pub fn converter_deriv(
    p: &ConverterParams,
    state: &PlantState,
    m: &ModulationCommand,
    i_dc_eff: f64,
    i_load: AlphaBeta,
) -> PlantDeriv {
    let (i_x, v_x) = modulation_io(m, state);
    let (di_gamma, dv_gamma) = gamma_deriv(p, state.i_gamma, state.v_gamma);
    PlantDeriv {
        v_dc: (-p.g_dc * state.v_dc + i_dc_eff - i_x) / p.c_dc,
        i_ab: AlphaBeta {
            alpha: (-p.r * state.i_ab.alpha + v_x.alpha - state.v_ab.alpha) / p.l,
            beta: (-p.r * state.i_ab.beta + v_x.beta - state.v_ab.beta) / p.l,
        },
        v_ab: AlphaBeta {
            alpha: (state.i_ab.alpha - i_load.alpha) / p.c,
            beta: (state.i_ab.beta - i_load.beta) / p.c,
        },
        i_gamma: di_gamma,
        v_gamma: dv_gamma,
    }
}

/// γ-component dynamics: L di_γ = −R i_γ − v_γ, C dv_γ = i_γ. Asymptotically
/// stable and decoupled from everything else.
pub fn gamma_deriv(p: &ConverterParams, i_gamma: f64, v_gamma: f64) -> (f64, f64) {
    ((-p.r * i_gamma - v_gamma) / p.l, i_gamma / p.c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn modulation_io_examples() {
        let mut st = PlantState::default();
        let (ix, vx) = modulation_io(&ModulationCommand::default(), &st);
        assert_eq!(ix, 0.0);
        assert_eq!(vx, AlphaBeta::ZERO);

        st.v_dc = 1000.0;
        st.i_ab = AlphaBeta::new(0.0, 10.0);
        let m = ModulationCommand { m_ab: AlphaBeta::new(0.0, 0.33) };
        let (ix, vx) = modulation_io(&m, &st);
        assert_relative_eq!(ix, 1.65, max_relative = 1e-12);
        assert_relative_eq!(vx.beta, 165.0, max_relative = 1e-12);
        assert_eq!(vx.alpha, 0.0);
    }

    #[test]
    fn modulation_block_is_lossless() {
        // v_x·i = i_x·v_dc for arbitrary inputs.
        let st = PlantState {
            v_dc: 734.5,
            i_ab: AlphaBeta::new(3.2, -7.9),
            v_ab: AlphaBeta::new(80.0, 12.0),
            ..Default::default()
        };
        let m = ModulationCommand { m_ab: AlphaBeta::new(0.21, -0.47) };
        let (ix, vx) = modulation_io(&m, &st);
        assert_relative_eq!(vx.dot(st.i_ab), ix * st.v_dc, max_relative = 1e-12);
    }

    #[test]
    fn load_current_examples() {
        let load = LoadModel::constant(1.0, 0.0);
        let i = load_current(&load, 0.0, AlphaBeta::new(2.0, 0.0)).unwrap();
        assert_eq!(i, AlphaBeta::new(2.0, 0.0));

        let load = LoadModel::constant(0.0, 1.0);
        let i = load_current(&load, 0.0, AlphaBeta::new(1.0, 0.0)).unwrap();
        assert_eq!(i, AlphaBeta::new(0.0, 1.0));
    }

    #[test]
    fn load_step_is_half_open() {
        let load = LoadModel {
            schedule: vec![
                LoadSegment { t_start: 0.0, g: 1.0, b: 0.0, i_const: AlphaBeta::ZERO },
                LoadSegment { t_start: 0.5, g: 2.0, b: 0.0, i_const: AlphaBeta::ZERO },
            ],
        };
        let v = AlphaBeta::new(1.0, 0.0);
        assert_eq!(load_current(&load, 0.5 - 1e-9, v).unwrap().alpha, 1.0);
        // Exactly at the boundary the new segment applies.
        assert_eq!(load_current(&load, 0.5, v).unwrap().alpha, 2.0);
    }

    #[test]
    fn open_circuit_dc_equilibrium() {
        let p = ConverterParams::nominal();
        let st = PlantState { v_dc: p.i_dc / p.g_dc, ..Default::default() };
        let d = converter_deriv(&p, &st, &ModulationCommand::default(), p.i_dc, AlphaBeta::ZERO);
        assert_eq!(d.v_dc, 0.0);
        assert_eq!(d.i_ab, AlphaBeta::ZERO);
        assert_eq!(d.v_ab, AlphaBeta::ZERO);
    }

    #[test]
    fn deriv_hand_evaluation() {
        let p = ConverterParams::nominal();
        let st = PlantState { v_dc: 1000.0, ..Default::default() };
        let m = ModulationCommand { m_ab: AlphaBeta::new(0.0, 0.33) };
        let d = converter_deriv(&p, &st, &m, p.i_dc, AlphaBeta::ZERO);
        assert_relative_eq!(d.v_dc, 0.0, epsilon = 1e-9);
        assert_eq!(d.i_ab.alpha, 0.0);
        assert_relative_eq!(d.i_ab.beta, 330000.0, max_relative = 1e-12);
    }

    #[test]
    fn energy_bookkeeping_identity() {
        // d/dt S = −G_dc v_dc² − R‖i‖² + i_dc v_dc − i_load·v for any state
        // and modulation: the modulation block cancels out exactly.
        let p = ConverterParams::nominal();
        let st = PlantState {
            v_dc: 612.0,
            i_ab: AlphaBeta::new(14.0, -3.0),
            v_ab: AlphaBeta::new(-55.0, 91.0),
            ..Default::default()
        };
        let m = ModulationCommand { m_ab: AlphaBeta::new(-0.4, 0.25) };
        let i_load = AlphaBeta::new(2.5, 7.0);
        let d = converter_deriv(&p, &st, &m, p.i_dc, i_load);
        let s_dot = p.c_dc * st.v_dc * d.v_dc
            + p.l * st.i_ab.dot(d.i_ab)
            + p.c * st.v_ab.dot(d.v_ab);
        let expected = -p.g_dc * st.v_dc * st.v_dc - p.r * st.i_ab.norm_sq()
            + p.i_dc * st.v_dc
            - i_load.dot(st.v_ab);
        assert_relative_eq!(s_dot, expected, max_relative = 1e-12);
    }

    #[test]
    fn gamma_examples() {
        let p = ConverterParams::nominal();
        assert_eq!(gamma_deriv(&p, 0.0, 0.0), (0.0, 0.0));
        let (di, dv) = gamma_deriv(&p, 1.0, 0.0);
        assert_relative_eq!(di, -p.r / p.l, max_relative = 1e-12);
        assert_relative_eq!(dv, 1.0 / p.c, max_relative = 1e-12);
    }

    #[test]
    fn clamp_behavior() {
        let (m, sat) = ModulationCommand::clamped(AlphaBeta::new(3.0, 4.0));
        assert!(sat);
        assert_relative_eq!(m.m_ab.norm(), 1.0, max_relative = 1e-12);
        let (m, sat) = ModulationCommand::clamped(AlphaBeta::new(0.1, 0.2));
        assert!(!sat);
        assert_eq!(m.m_ab, AlphaBeta::new(0.1, 0.2));
    }

    #[test]
    fn params_validation() {
        assert!(ConverterParams::nominal().validate().is_ok());
        let mut p = ConverterParams::nominal();
        p.mu = 1.5;
        assert!(p.validate().is_err());
        p = ConverterParams::nominal();
        p.l = 0.0;
        assert!(p.validate().is_err());
    }
}
