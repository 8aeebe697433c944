//! `gfm` — scenario runner and analysis front-end.
//!
//! Exit codes: 0 success, 2 config parse error, 3 validation error,
//! 4 divergence (partial trace is still written), 1 anything else.

use clap::{Parser, Subcommand};
use gfm_core::analysis;
use gfm_core::plant::ConverterParams;
use gfm_core::scenario::{run_scenario, run_sweep, ScenarioArtifacts, ScenarioConfig, SweepConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gfm", about = "Averaged three-phase DC/AC converter simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Output directory for trace/summary artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override the scenario integration step (seconds).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Reserved; simulations are deterministic and take no randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario config; writes <name>.csv and <name>_summary.json.
    Simulate { config: PathBuf },
    /// Run a sweep config; writes <name>_sweep.csv and <name>_sweep.json.
    Sweep { config: PathBuf },
    /// Closed-form analyses at the nominal converter parameters.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCmd,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Steady-state DC voltage, terminal amplitude and frequency at P_x.
    SteadyState {
        #[arg(long, default_value_t = 0.0)]
        p_x: f64,
        /// Report the low-voltage root of the quadratic instead (not an
        /// operating point of interest).
        #[arg(long)]
        unstable_branch: bool,
    },
    /// Local droop slopes dP/dv̂_x and dP/dω at the steady state for P_x.
    DroopCoeffs {
        #[arg(long, default_value_t = 0.0)]
        p_x: f64,
    },
    /// Maximum deliverable power and the corresponding operating point.
    MaxPower,
    /// Lyapunov decrease condition at the dq equilibrium for load (g, b).
    Lyapunov {
        #[arg(long)]
        g: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        b: f64,
    },
    /// Internal-model manifold of the AC circuit for load (g, b).
    Manifold {
        #[arg(long)]
        g: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        b: f64,
        /// Synchronous frequency; defaults to the equilibrium's.
        #[arg(long)]
        omega: Option<f64>,
    },
}

const EXIT_PARSE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn read_file(path: &Path) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| fail(EXIT_PARSE, format!("cannot read {}: {e}", path.display())))
}

fn simulate(path: &Path, out: &Path, dt: Option<f64>) -> ExitCode {
    let text = match read_file(path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let mut cfg: ScenarioConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_PARSE, format!("{}: {e}", path.display())),
    };
    if let Some(dt) = dt {
        cfg.sim.dt_seconds = dt;
    }
    if let Err(e) = cfg.validate() {
        return fail(EXIT_VALIDATION, e);
    }
    let artifacts = match run_scenario(&cfg) {
        Ok(a) => a,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    if let Err(e) = std::fs::create_dir_all(out) {
        return fail(1, e);
    }
    let csv_path = out.join(format!("{}.csv", cfg.name));
    let json_path = out.join(format!("{}_summary.json", cfg.name));
    let write = |summary_json: String, write_csv: &dyn Fn(&mut dyn std::io::Write) -> gfm_core::Result<()>| {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
        write_csv(&mut f)?;
        std::fs::write(&json_path, &summary_json)?;
        println!("{summary_json}");
        Ok::<(), anyhow::Error>(())
    };
    match artifacts {
        ScenarioArtifacts::Single { trace, summary } => {
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            if let Err(e) = write(json, &|w| trace.write_csv(w)) {
                return fail(1, e);
            }
            if let Some(t) = summary.diverged_at_seconds {
                return fail(EXIT_DIVERGENCE, format!("state diverged at t = {t} s (partial trace written)"));
            }
        }
        ScenarioArtifacts::Network { trace, summary } => {
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            if let Err(e) = write(json, &|w| trace.write_csv(w)) {
                return fail(1, e);
            }
        }
    }
    ExitCode::SUCCESS
}

fn sweep(path: &Path, out: &Path, dt: Option<f64>) -> ExitCode {
    let text = match read_file(path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let mut sw: SweepConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_PARSE, format!("{}: {e}", path.display())),
    };
    if let Some(dt) = dt {
        if let Some(slot) = sw.scenario.pointer_mut("/sim/dt_seconds") {
            *slot = serde_json::json!(dt);
        }
    }
    let base: ScenarioConfig = match serde_json::from_value(sw.scenario.clone()) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_PARSE, format!("sweep scenario template: {e}")),
    };
    if let Err(e) = base.validate() {
        return fail(EXIT_VALIDATION, e);
    }
    let points = match run_sweep(&sw) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    if let Err(e) = std::fs::create_dir_all(out) {
        return fail(1, e);
    }
    let p = base.converter_params();
    let csv_path = out.join(format!("{}_sweep.csv", base.name));
    let json_path = out.join(format!("{}_sweep.json", base.name));
    let run = || -> anyhow::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
        gfm_core::scenario::write_sweep_csv(&mut f, &p, &points)?;
        let json = serde_json::to_string_pretty(&points)?;
        std::fs::write(&json_path, &json)?;
        println!("{json}");
        Ok(())
    };
    if let Err(e) = run() {
        return fail(1, e);
    }
    ExitCode::SUCCESS
}

fn analyze(what: &AnalyzeCmd) -> ExitCode {
    let p = ConverterParams::nominal();
    let result: Result<serde_json::Value, gfm_core::Error> = (|| match what {
        AnalyzeCmd::SteadyState { p_x, unstable_branch } => {
            let prof = if *unstable_branch {
                analysis::steady_state_profile_unstable_branch(&p, *p_x)?
            } else {
                analysis::steady_state_profile(&p, *p_x)?
            };
            Ok(serde_json::json!({
                "p_x_watts": prof.p_x,
                "v_dc_volts": prof.v_dc_ss,
                "vx_amp_volts": prof.vx_amp,
                "omega_rad_per_second": prof.omega,
                "f_hz": prof.omega / (2.0 * std::f64::consts::PI),
            }))
        }
        AnalyzeCmd::DroopCoeffs { p_x } => {
            let prof = analysis::steady_state_profile(&p, *p_x)?;
            let (d_vx, d_omega) = analysis::droop_coefficients(&p, &prof);
            Ok(serde_json::json!({
                "at_p_x_watts": p_x,
                "dp_dvx_watts_per_volt": d_vx,
                "dp_domega_watts_per_rad_per_second": d_omega,
            }))
        }
        AnalyzeCmd::MaxPower => {
            let (p_max, vx, omega) = analysis::max_power(&p);
            Ok(serde_json::json!({
                "p_max_watts": p_max,
                "vx_amp_volts": vx,
                "omega_rad_per_second": omega,
                "v_dc_volts": p.i_dc / (2.0 * p.g_dc),
            }))
        }
        AnalyzeCmd::Lyapunov { g, b } => {
            let eq = analysis::dq_equilibrium(&p, *g, *b)?;
            let rep = analysis::lyapunov_condition(&p, &eq, *g, *b);
            Ok(serde_json::json!({
                "equilibrium": eq,
                "condition_lhs": rep.condition_lhs,
                "condition_rhs": rep.condition_rhs,
                "holds": rep.holds,
                "max_eig_symmetric_part": rep.max_eig_sym,
            }))
        }
        AnalyzeCmd::Manifold { g, b, omega } => {
            let omega_s = match omega {
                Some(w) => *w,
                None => analysis::dq_equilibrium(&p, *g, *b)?.omega_s,
            };
            let rep = analysis::internal_model_manifold(&p, *g, *b, omega_s)?;
            let f: Vec<Vec<f64>> = (0..4).map(|i| (0..2).map(|j| rep.f[(i, j)]).collect()).collect();
            Ok(serde_json::json!({
                "omega_s_rad_per_second": omega_s,
                "f_matrix_rows": f,
                "sylvester_residual": rep.sylvester_residual,
                "a_hurwitz": rep.a_hurwitz,
                "spectral_abscissa": rep.spectral_abscissa,
            }))
        }
    })();
    match result {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_VALIDATION, e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::Simulate { config } => simulate(config, &cli.out, cli.dt),
        Cmd::Sweep { config } => sweep(config, &cli.out, cli.dt),
        Cmd::Analyze { what } => analyze(what),
    }
}
