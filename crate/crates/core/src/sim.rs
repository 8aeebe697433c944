//! Fixed-step integration, trace recording, and signal estimators.
//!
//! Classical RK4 on a uniform grid. Load steps are scheduled on grid points
//! and the derivative is evaluated pointwise in time, so a step at t_s shows
//! up as a derivative discontinuity exactly at sample index t_s/dt. Fixed
//! step keeps runs bit-deterministic and events exact; the scenarios of
//! interest are ≤ a few seconds, so adaptivity buys nothing.

use crate::frames::AlphaBeta;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Integration configuration.
///
/// The default dt = 1 µs resolves the stiffest subsystem in the bench
/// parameter set (output capacitor C = 10 µF against load conductances up to
/// ~1 S, τ ≈ 10 µs) with ≥ 10 steps per time constant.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Record every n-th step (decimation).
    pub record_every: usize,
    /// Relative tolerance for steady-state detection.
    pub steady_tol: f64,
    /// Window length (seconds) over which steadiness is required.
    pub steady_window: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 1e-6, t_end: 1.0, record_every: 10, steady_tol: 1e-4, steady_window: 0.05 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Config("t_end must be positive".into()));
        }
        if self.record_every < 1 {
            return Err(Error::Config("record_every must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// A continuous-time system integrated by [`integrate`]. Controller states
/// are co-integrated with the plant (same dt, same scheme); `project` runs
/// once after each accepted step for renormalization/clamping.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn deriv(&self, t: f64, x: &[f64], dx: &mut [f64]);
    fn project(&self, _t: f64, _x: &mut [f64]) {}
}

/// Scratch buffers for RK4 so repeated stepping does not allocate.
pub struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub fn new(dim: usize) -> Self {
        Rk4Scratch {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

/// One classical RK4 step in place, followed by the system's projection.
pub fn rk4_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, dt: f64, x: &mut [f64], s: &mut Rk4Scratch) {
    let n = x.len();
    sys.deriv(t, x, &mut s.k1);
    for i in 0..n {
        s.tmp[i] = x[i] + 0.5 * dt * s.k1[i];
    }
    sys.deriv(t + 0.5 * dt, &s.tmp, &mut s.k2);
    for i in 0..n {
        s.tmp[i] = x[i] + 0.5 * dt * s.k2[i];
    }
    sys.deriv(t + 0.5 * dt, &s.tmp, &mut s.k3);
    for i in 0..n {
        s.tmp[i] = x[i] + dt * s.k3[i];
    }
    sys.deriv(t + dt, &s.tmp, &mut s.k4);
    for i in 0..n {
        x[i] += dt / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
    sys.project(t + dt, x);
}

/// Integrates `sys` from `x0` over the configured grid, invoking `observer`
/// with (step index, t, state) at t = 0 and after every `record_every`-th
/// step. Errors out with the last valid time if the state goes non-finite.
pub fn integrate<S, F>(sys: &S, x0: &[f64], cfg: &SimConfig, mut observer: F) -> Result<Vec<f64>>
where
    S: OdeSystem + ?Sized,
    F: FnMut(usize, f64, &[f64]),
{
    cfg.validate()?;
    assert_eq!(x0.len(), sys.dim());
    let mut x = x0.to_vec();
    let mut scratch = Rk4Scratch::new(x.len());
    let steps = cfg.steps();
    observer(0, 0.0, &x);
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        rk4_step(sys, t, cfg.dt, &mut x, &mut scratch);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { t_last_valid: t });
        }
        if (k + 1) % cfg.record_every == 0 {
            observer(k + 1, (k + 1) as f64 * cfg.dt, &x);
        }
    }
    Ok(x)
}

/// Uniformly sampled trace of one converter run. Columns marked "derived"
/// are recomputable from the recorded states and the scenario config.
#[derive(Clone, Debug, Default)]
pub struct SimTrace {
    /// Sample spacing (dt · record_every).
    pub dt_sample: f64,
    pub t: Vec<f64>,
    pub v_dc: Vec<f64>,
    pub i_ab: Vec<AlphaBeta>,
    pub v_ab: Vec<AlphaBeta>,
    pub m: Vec<AlphaBeta>,
    /// Derived: modulation-block power P_x = v_x·i, Q_x per Akagi.
    pub p_x: Vec<f64>,
    pub q_x: Vec<f64>,
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    pub amp_vx: Vec<f64>,
    pub amp_v: Vec<f64>,
    pub amp_il: Vec<f64>,
    /// Instantaneous frequency estimate of v_ab (cross-product formula,
    /// central differences); endpoints copy their neighbors.
    pub omega_est: Vec<f64>,
    /// 1 where a load-segment boundary fell inside the preceding sample
    /// interval.
    pub event: Vec<u8>,
    /// Effective DC source current (differs from nominal under outer loops).
    pub i_dc_eff: Vec<f64>,
    pub i_load: Vec<AlphaBeta>,
    /// Any modulation clamp during the run.
    pub saturated: bool,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Fills `omega_est` from `v_ab` by central differences.
    pub fn fill_omega_est(&mut self) {
        self.omega_est = estimate_omega_series(&self.v_ab, self.dt_sample);
    }

    /// Samples with t in [t0, t1).
    pub fn range(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let lo = self.t.partition_point(|&t| t < t0);
        let hi = self.t.partition_point(|&t| t < t1);
        lo..hi
    }

    /// CSV export with the fixed column schema. Floats are written in
    /// shortest round-trip decimal form.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "t,v_dc,i_alpha,i_beta,v_alpha,v_beta,m_alpha,m_beta,P_x,Q_x,P_load,Q_load,amp_vx,amp_v,amp_il,omega_est,event"
        )?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.t[k],
                self.v_dc[k],
                self.i_ab[k].alpha,
                self.i_ab[k].beta,
                self.v_ab[k].alpha,
                self.v_ab[k].beta,
                self.m[k].alpha,
                self.m[k].beta,
                self.p_x[k],
                self.q_x[k],
                self.p_load[k],
                self.q_load[k],
                self.amp_vx[k],
                self.amp_v[k],
                self.amp_il[k],
                self.omega_est[k],
                self.event[k],
            )?;
        }
        Ok(())
    }
}

/// Instantaneous-frequency series ω(t) = (z_α ż_β − z_β ż_α)/‖z‖² using
/// central differences; samples where ‖z‖ < 1e-9 yield NaN.
pub fn estimate_omega_series(z: &[AlphaBeta], dt: f64) -> Vec<f64> {
    let n = z.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    for k in 1..n - 1 {
        let dz_a = (z[k + 1].alpha - z[k - 1].alpha) / (2.0 * dt);
        let dz_b = (z[k + 1].beta - z[k - 1].beta) / (2.0 * dt);
        let nsq = z[k].norm_sq();
        out[k] = if nsq < 1e-18 { f64::NAN } else { (z[k].alpha * dz_b - z[k].beta * dz_a) / nsq };
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    out
}

/// Mean amplitude and instantaneous frequency over a window of αβ samples.
///
/// Amplitude = mean ‖z‖; ω = mean of the cross-product estimate with central
/// differences (robust to phase wrap, unlike unwrapping atan2).
pub fn estimate_amp_freq(z: &[AlphaBeta], dt: f64) -> Result<(f64, f64)> {
    if z.len() < 3 {
        return Err(Error::Config("amplitude/frequency window needs ≥ 3 samples".into()));
    }
    if z.iter().any(|s| s.norm() < 1e-9) {
        return Err(Error::AmplitudeUndefined);
    }
    let amp = z.iter().map(|s| s.norm()).sum::<f64>() / z.len() as f64;
    let mut omega_sum = 0.0;
    for k in 1..z.len() - 1 {
        let dz_a = (z[k + 1].alpha - z[k - 1].alpha) / (2.0 * dt);
        let dz_b = (z[k + 1].beta - z[k - 1].beta) / (2.0 * dt);
        omega_sum += (z[k].alpha * dz_b - z[k].beta * dz_a) / z[k].norm_sq();
    }
    Ok((amp, omega_sum / (z.len() - 2) as f64))
}

/// Values reported at a detected steady state (means over the last window).
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct SteadyValues {
    pub v_dc: f64,
    pub omega: f64,
    pub amp_v: f64,
    pub amp_il: f64,
    pub amp_vx: f64,
    pub p_x: f64,
    pub q_x: f64,
    pub p_load: f64,
    pub q_load: f64,
}

fn window_steady(trace: &SimTrace, range: std::ops::Range<usize>, tol: f64) -> bool {
    let spread_ok = |vals: &[f64]| -> bool {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in vals {
            if !v.is_finite() {
                return false;
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let scale = lo.abs().max(hi.abs()).max(1e-9);
        (hi - lo) <= tol * scale
    };
    spread_ok(&trace.v_dc[range.clone()])
        && spread_ok(&trace.amp_v[range.clone()])
        && spread_ok(&trace.amp_il[range.clone()])
        && spread_ok(&trace.omega_est[range])
}

fn steady_means(trace: &SimTrace, range: std::ops::Range<usize>) -> SteadyValues {
    let n = range.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    SteadyValues {
        v_dc: mean(&trace.v_dc[range.clone()]),
        omega: mean(&trace.omega_est[range.clone()]),
        amp_v: mean(&trace.amp_v[range.clone()]),
        amp_il: mean(&trace.amp_il[range.clone()]),
        amp_vx: mean(&trace.amp_vx[range.clone()]),
        p_x: mean(&trace.p_x[range.clone()]),
        q_x: mean(&trace.q_x[range.clone()]),
        p_load: mean(&trace.p_load[range.clone()]),
        q_load: mean(&trace.q_load[range]),
    }
}

/// Scans for the first time after which v_dc, amplitudes, and the frequency
/// estimate all vary by less than `steady_tol` (relative) over
/// `steady_window`. Returns the settle time plus steady values averaged over
/// the trailing window, or None.
pub fn detect_steady_state(trace: &SimTrace, cfg: &SimConfig) -> Option<(f64, SteadyValues)> {
    let n = trace.len();
    let win = (cfg.steady_window / trace.dt_sample).round() as usize;
    if win < 3 || n < win + 1 {
        return None;
    }
    // The trailing window must itself be steady, otherwise there is nothing
    // to report.
    if !window_steady(trace, n - win..n, cfg.steady_tol) {
        return None;
    }
    // Coarse forward scan, then refine to single-sample resolution.
    let stride = (win / 8).max(1);
    let mut coarse = n - win;
    let mut k = 0;
    while k + win <= n {
        if window_steady(trace, k..k + win, cfg.steady_tol) {
            coarse = k;
            break;
        }
        k += stride;
    }
    let mut first = coarse;
    while first > 0 && first > coarse.saturating_sub(stride) {
        if window_steady(trace, first - 1..first - 1 + win, cfg.steady_tol) {
            first -= 1;
        } else {
            break;
        }
    }
    Some((trace.t[first], steady_means(trace, n - win..n)))
}
