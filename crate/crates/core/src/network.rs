//! Two-converter networks: a tree (one line between two loaded buses) and a
//! star (two lines into a common resistive load). Both converters run
//! matching control.
//!
//! Line-current sign convention: positive from converter 1 toward
//! converter 2 (tree), and from each converter toward the star point (star).
//! KCL at the buses therefore reads C v̇₁ = i₁ − i_net − i_load,1 and
//! C v̇₂ = i₂ + i_net − i_load,2 for the tree.

use crate::frames::AlphaBeta;
use crate::matching::MatchingState;
use crate::plant::{converter_deriv, load_current, ConverterParams, LoadModel, ModulationCommand, PlantState};
use crate::sim::{integrate, OdeSystem, SimConfig};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub enum NetworkTopology {
    /// Two loaded buses joined by one line.
    Tree { loads: [LoadModel; 2] },
    /// Two lines into a common resistive load node with no capacitor there:
    /// v_load = R_load (i_net,1 + i_net,2) holds algebraically.
    Star { r_load: f64 },
}

#[derive(Clone, Debug)]
pub struct NetworkParams {
    pub conv: [ConverterParams; 2],
    pub r_net: f64,
    pub l_net: f64,
    pub topology: NetworkTopology,
}

impl NetworkParams {
    /// Line element values used in the bench networks: R_net = 5R, L_net = L/10.
    pub fn bench_line(conv: &ConverterParams) -> (f64, f64) {
        (5.0 * conv.r, conv.l / 10.0)
    }

    pub fn line_count(&self) -> usize {
        match self.topology {
            NetworkTopology::Tree { .. } => 1,
            NetworkTopology::Star { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.conv {
            c.validate()?;
        }
        if !(self.r_net > 0.0) {
            return Err(Error::Config("r_net must be positive".into()));
        }
        if !(self.l_net > 0.0) {
            return Err(Error::Config("l_net must be positive".into()));
        }
        match &self.topology {
            NetworkTopology::Tree { loads } => {
                for l in loads {
                    l.validate()?;
                }
            }
            NetworkTopology::Star { r_load } => {
                if !(*r_load > 0.0) {
                    return Err(Error::Config("star load resistance must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NetworkState {
    pub plants: [PlantState; 2],
    pub ctrl: [MatchingState; 2],
    /// One line current (tree) or two (star), see the sign convention above.
    pub i_net: Vec<AlphaBeta>,
}

/// Voltage of the star point, eliminated algebraically.
pub fn star_load_voltage(r_load: f64, i_net: &[AlphaBeta]) -> AlphaBeta {
    (i_net[0] + i_net[1]).scale(r_load)
}

/// Builds a validated network with the paper initialization: both DC buses
/// at 1000 V, virtual angles at zero, everything else de-energized.
pub fn build_network(
    conv: [ConverterParams; 2],
    r_net: f64,
    l_net: f64,
    topology: NetworkTopology,
) -> Result<(NetworkParams, NetworkState)> {
    let np = NetworkParams { conv, r_net, l_net, topology };
    np.validate()?;
    let plant = PlantState { v_dc: 1000.0, ..Default::default() };
    let ns = NetworkState {
        plants: [plant, plant],
        ctrl: [MatchingState::from_angle(0.0), MatchingState::from_angle(0.0)],
        i_net: vec![AlphaBeta::ZERO; np.line_count()],
    };
    Ok((np, ns))
}

/// Modulation commands of both converters at the current state.
pub fn network_modulations(np: &NetworkParams, ns: &NetworkState) -> [ModulationCommand; 2] {
    [
        ModulationCommand { m_ab: ns.ctrl[0].xi.scale(np.conv[0].mu) },
        ModulationCommand { m_ab: ns.ctrl[1].xi.scale(np.conv[1].mu) },
    ]
}

/// Time derivative of the full network state. The matching controllers are
/// co-integrated: dξ/dt = η v_dc J ξ (the integrator renormalizes ξ after
/// each step).
pub fn network_deriv(np: &NetworkParams, ns: &NetworkState, t: f64) -> Result<NetworkState> {
    if ns.i_net.len() != np.line_count() {
        return Err(Error::Config(format!(
            "state has {} line currents but the topology needs {}",
            ns.i_net.len(),
            np.line_count()
        )));
    }
    let m = network_modulations(np, ns);

    // Effective current drawn from each bus capacitor = local load + line
    // injection (per the sign convention), so the per-converter derivative
    // can be reused unchanged.
    let (bus_draw, d_inet): ([AlphaBeta; 2], Vec<AlphaBeta>) = match &np.topology {
        NetworkTopology::Tree { loads } => {
            let i_net = ns.i_net[0];
            let il0 = load_current(&loads[0], t, ns.plants[0].v_ab)?;
            let il1 = load_current(&loads[1], t, ns.plants[1].v_ab)?;
            let di = (ns.plants[0].v_ab - ns.plants[1].v_ab - i_net.scale(np.r_net)).scale(1.0 / np.l_net);
            ([il0 + i_net, il1 - i_net], vec![di])
        }
        NetworkTopology::Star { r_load } => {
            let v_load = star_load_voltage(*r_load, &ns.i_net);
            let di: Vec<AlphaBeta> = (0..2)
                .map(|k| (ns.plants[k].v_ab - v_load - ns.i_net[k].scale(np.r_net)).scale(1.0 / np.l_net))
                .collect();
            ([ns.i_net[0], ns.i_net[1]], di)
        }
    };

    let mut d_plants = [PlantState::default(); 2];
    let mut d_ctrl = [MatchingState { xi: AlphaBeta::ZERO }; 2];
    for k in 0..2 {
        d_plants[k] = converter_deriv(&np.conv[k], &ns.plants[k], &m[k], np.conv[k].i_dc, bus_draw[k]);
        let omega = np.conv[k].eta * ns.plants[k].v_dc;
        d_ctrl[k] = MatchingState { xi: ns.ctrl[k].xi.perp().scale(omega) };
    }
    Ok(NetworkState { plants: d_plants, ctrl: d_ctrl, i_net: d_inet })
}

// Flat layout per converter: [v_dc, i_a, i_b, v_a, v_b, xi_a, xi_b]; the
// line currents follow after both converters. γ components are identically
// zero in the balanced network runs and are not carried.
const PER_CONV: usize = 7;

pub fn pack_state(ns: &NetworkState, x: &mut [f64]) {
    for k in 0..2 {
        let o = k * PER_CONV;
        x[o] = ns.plants[k].v_dc;
        x[o + 1] = ns.plants[k].i_ab.alpha;
        x[o + 2] = ns.plants[k].i_ab.beta;
        x[o + 3] = ns.plants[k].v_ab.alpha;
        x[o + 4] = ns.plants[k].v_ab.beta;
        x[o + 5] = ns.ctrl[k].xi.alpha;
        x[o + 6] = ns.ctrl[k].xi.beta;
    }
    for (j, i) in ns.i_net.iter().enumerate() {
        x[2 * PER_CONV + 2 * j] = i.alpha;
        x[2 * PER_CONV + 2 * j + 1] = i.beta;
    }
}

pub fn unpack_state(np: &NetworkParams, x: &[f64]) -> NetworkState {
    let mut plants = [PlantState::default(); 2];
    let mut ctrl = [MatchingState { xi: AlphaBeta::ZERO }; 2];
    for k in 0..2 {
        let o = k * PER_CONV;
        plants[k] = PlantState {
            v_dc: x[o],
            i_ab: AlphaBeta::new(x[o + 1], x[o + 2]),
            v_ab: AlphaBeta::new(x[o + 3], x[o + 4]),
            i_gamma: 0.0,
            v_gamma: 0.0,
        };
        ctrl[k] = MatchingState { xi: AlphaBeta::new(x[o + 5], x[o + 6]) };
    }
    let i_net = (0..np.line_count())
        .map(|j| AlphaBeta::new(x[2 * PER_CONV + 2 * j], x[2 * PER_CONV + 2 * j + 1]))
        .collect();
    NetworkState { plants, ctrl, i_net }
}

pub struct NetworkSystem {
    pub params: NetworkParams,
}

impl OdeSystem for NetworkSystem {
    fn dim(&self) -> usize {
        2 * PER_CONV + 2 * self.params.line_count()
    }

    fn deriv(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let ns = unpack_state(&self.params, x);
        match network_deriv(&self.params, &ns, t) {
            Ok(d) => pack_state(&d, dx),
            // poison the state so the integrator reports divergence rather
            // than silently continuing (cannot happen on validated configs)
            Err(_) => dx.fill(f64::NAN),
        }
    }

    fn project(&self, _t: f64, x: &mut [f64]) {
        for k in 0..2 {
            let o = k * PER_CONV;
            let n = (x[o + 5] * x[o + 5] + x[o + 6] * x[o + 6]).sqrt();
            x[o + 5] /= n;
            x[o + 6] /= n;
        }
    }
}

/// Decimated network trace; columns suffixed `_1`/`_2` per converter.
#[derive(Clone, Debug, Default)]
pub struct NetworkTrace {
    pub dt_sample: f64,
    pub t: Vec<f64>,
    pub v_dc: [Vec<f64>; 2],
    pub i_ab: [Vec<AlphaBeta>; 2],
    pub v_ab: [Vec<AlphaBeta>; 2],
    pub m: [Vec<AlphaBeta>; 2],
    pub i_net: Vec<Vec<AlphaBeta>>,
}

impl NetworkTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t");
        for k in 1..=2 {
            header += &format!(",v_dc_{k},i_alpha_{k},i_beta_{k},v_alpha_{k},v_beta_{k},m_alpha_{k},m_beta_{k}");
        }
        for j in 1..=self.i_net.len() {
            header += &format!(",inet{j}_alpha,inet{j}_beta");
        }
        writeln!(w, "{header}")?;
        for i in 0..self.len() {
            let mut line = format!("{}", self.t[i]);
            for k in 0..2 {
                line += &format!(
                    ",{},{},{},{},{},{},{}",
                    self.v_dc[k][i],
                    self.i_ab[k][i].alpha,
                    self.i_ab[k][i].beta,
                    self.v_ab[k][i].alpha,
                    self.v_ab[k][i].beta,
                    self.m[k][i].alpha,
                    self.m[k][i].beta
                );
            }
            for line_cur in &self.i_net {
                line += &format!(",{},{}", line_cur[i].alpha, line_cur[i].beta);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Integrates the network over the configured grid and records a decimated
/// trace. Returns the trace and the final state.
pub fn simulate_network(
    np: &NetworkParams,
    ns0: &NetworkState,
    cfg: &SimConfig,
) -> Result<(NetworkTrace, NetworkState)> {
    np.validate()?;
    let sys = NetworkSystem { params: np.clone() };
    let mut x0 = vec![0.0; sys.dim()];
    pack_state(ns0, &mut x0);
    let mut trace = NetworkTrace {
        dt_sample: cfg.dt * cfg.record_every as f64,
        i_net: vec![Vec::new(); np.line_count()],
        ..Default::default()
    };
    let x_end = integrate(&sys, &x0, cfg, |_, t, x| {
        let ns = unpack_state(np, x);
        let m = network_modulations(np, &ns);
        trace.t.push(t);
        for k in 0..2 {
            trace.v_dc[k].push(ns.plants[k].v_dc);
            trace.i_ab[k].push(ns.plants[k].i_ab);
            trace.v_ab[k].push(ns.plants[k].v_ab);
            trace.m[k].push(m[k].m_ab);
        }
        for (j, i) in ns.i_net.iter().enumerate() {
            trace.i_net[j].push(*i);
        }
    })?;
    Ok((trace, unpack_state(np, &x_end)))
}
