//! Command-line surface: duality analysis, energy reports, feedback and
//! observer design, closed-loop simulation, and network energy sweeps.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{Complex, DMatrix, DVector};
use serde_json::json;

use netlab::energy::{estimability_condition, target_control_energy, target_observation_energy};
use netlab::error::Error;
use netlab::gramian::{
    duality_report, infinite_horizon_gramian, finite_horizon_gramians, Horizon, SystemBundle,
};
use netlab::netgen::{run_sweep, sweep_csv, NetworkModel, SweepConfig};
use netlab::numkernel::{parse_matrix_sections, render_matrix, ToleranceConfig};
use netlab::observer::{assemble_closed_loop, simulate_closed_loop, synthesize_functional_observer, FunctionalObserver};
use netlab::target_control::{place_target_poles, setpoint_feedforward, sigma_set};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "netlab", version, about = "Target control and estimation in linear networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct TolArgs {
    /// Relative rank tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

impl TolArgs {
    fn config(&self) -> ToleranceConfig {
        ToleranceConfig {
            rank_rel_tol: self.tol,
            ..ToleranceConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Duality report for a system file (rank tests, gap, strong flag).
    Analyze {
        #[arg(long)]
        system: PathBuf,
        /// Finite analysis horizon; mutually exclusive with --infinite.
        #[arg(long, conflicts_with = "infinite")]
        t1: Option<f64>,
        /// Steady-state horizon (requires Hurwitz A).
        #[arg(long)]
        infinite: bool,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Target control/observation energies (infinite horizon by default).
    Energy {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, conflicts_with = "infinite")]
        t1: Option<f64>,
        #[arg(long)]
        infinite: bool,
        /// Sampling time for the estimability condition number kappa.
        #[arg(long)]
        kappa_dt: Option<f64>,
        /// Final sampling time for kappa (default 10).
        #[arg(long, default_value_t = 10.0)]
        kappa_t: f64,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Feedback and observer synthesis.
    #[command(subcommand)]
    Design(DesignCommand),
    /// Integrate a closed-loop file and write a CSV trace.
    Simulate {
        /// Multi-section file: A, B, C, F, N, J, D, E, T, optional R.
        #[arg(long = "loop")]
        loop_file: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Energy scaling sweep over network sizes.
    Sweep {
        /// One of barabasi_albert, newman_watts, chain.
        #[arg(long)]
        model: String,
        /// Comma-separated node counts.
        #[arg(long)]
        sizes: String,
        #[arg(long, default_value_t = 20)]
        realizations: usize,
        /// Fraction of target nodes r/n (non-chain models).
        #[arg(long, default_value_t = 0.3)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Preferential attachment count for barabasi_albert.
        #[arg(long, default_value_t = 3)]
        ba_m0: usize,
        /// Ring neighbors per node for newman_watts.
        #[arg(long, default_value_t = 2)]
        nw_ring: usize,
        /// Shortcut probability for newman_watts.
        #[arg(long, default_value_t = 0.2)]
        nw_p: f64,
        #[arg(long)]
        out: PathBuf,
        /// Optional PNG chart of the mean energies versus n.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DesignCommand {
    /// Partial pole placement on the Sigma-set.
    Feedback {
        #[arg(long)]
        system: PathBuf,
        /// Comma-separated poles; complex entries as re+imi / re-imi.
        #[arg(long, allow_hyphen_values = true)]
        poles: String,
        /// Target setpoint; adds a feedforward reference to the report.
        #[arg(long)]
        setpoint: Option<f64>,
        /// Write the gain K as a matrix file.
        #[arg(long)]
        gain_out: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Functional observer for the loop signal -Kx.
    Observer {
        #[arg(long)]
        system: PathBuf,
        /// Gain file (matrix format) with the K designed beforehand.
        #[arg(long)]
        gain: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        obs_poles: String,
        /// Write the five observer matrices as one multi-section file.
        #[arg(long)]
        obs_out: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
}

fn parse_complex(tok: &str) -> Result<Complex<f64>, Error> {
    let s: String = tok.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::Input(format!("cannot parse pole '{tok}'"));
    if let Some(body) = s.strip_suffix('i') {
        // split at the last +/- that is not an exponent sign or leading
        let bytes = body.as_bytes();
        let mut split = None;
        for i in (1..bytes.len()).rev() {
            let c = bytes[i] as char;
            if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
                split = Some(i);
                break;
            }
        }
        match split {
            Some(i) => {
                let re: f64 = body[..i].parse().map_err(|_| bad())?;
                let im_str = &body[i..];
                let im: f64 = if im_str == "+" {
                    1.0
                } else if im_str == "-" {
                    -1.0
                } else {
                    im_str.parse().map_err(|_| bad())?
                };
                Ok(Complex::new(re, im))
            }
            None => {
                let im: f64 = body.parse().map_err(|_| bad())?;
                Ok(Complex::new(0.0, im))
            }
        }
    } else {
        Ok(Complex::new(s.parse().map_err(|_| bad())?, 0.0))
    }
}

fn parse_pole_list(s: &str) -> Result<Vec<Complex<f64>>, Error> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(parse_complex)
        .collect()
}

fn complex_json(v: &[Complex<f64>]) -> serde_json::Value {
    json!(v.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>())
}

fn load_system(path: &PathBuf, cfg: &ToleranceConfig) -> Result<SystemBundle, Error> {
    SystemBundle::parse(&fs::read_to_string(path)?, cfg)
}

fn energy_value(v: Option<f64>) -> serde_json::Value {
    match v {
        Some(x) => json!(x),
        None => json!("undefined"),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Analyze {
            system,
            t1,
            infinite,
            tol,
        } => {
            let cfg = tol.config();
            cfg.validate()?;
            let sys = load_system(&system, &cfg)?;
            let horizon = match (t1, infinite) {
                (Some(t), false) => Horizon::Finite(t),
                (None, true) => Horizon::Infinite,
                (None, false) => Horizon::Finite(10.0),
                (Some(_), true) => unreachable!("clap conflicts"),
            };
            let report = duality_report(sys.c_required()?, &sys.a, &sys.f, horizon, &cfg)?;
            let mut out = serde_json::to_value(&report).expect("report serializes");
            out["schema_version"] = json!(SCHEMA_VERSION);
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
        }
        Command::Energy {
            system,
            t1,
            infinite,
            kappa_dt,
            kappa_t,
            tol,
        } => {
            let cfg = tol.config();
            cfg.validate()?;
            let sys = load_system(&system, &cfg)?;
            let (w_c, w_o) = match (t1, infinite) {
                (Some(t), false) => {
                    finite_horizon_gramians(&sys.a, sys.b_required()?, sys.c_required()?, t, 64)?
                }
                _ => {
                    let w_c = infinite_horizon_gramian(
                        &sys.a,
                        &(sys.b_required()? * sys.b_required()?.transpose()),
                    )?;
                    let w_o = infinite_horizon_gramian(
                        &sys.a.transpose(),
                        &(sys.c_required()?.transpose() * sys.c_required()?),
                    )?;
                    (w_c, w_o)
                }
            };
            let e_tc = target_control_energy(&w_c, &sys.f, &cfg).ok();
            let e_to = target_observation_energy(&w_o, &sys.f, &cfg).ok().map(|(e, _)| e);
            let kappa = match kappa_dt {
                Some(dt) => Some(
                    estimability_condition(sys.c_required()?, &sys.a, &sys.f, dt, kappa_t, &cfg)?
                        .kappa,
                ),
                None => None,
            };
            let out = json!({
                "schema_version": SCHEMA_VERSION,
                "e_tc": energy_value(e_tc),
                "e_to": energy_value(e_to),
                "kappa": energy_value(kappa),
                "e_tc_defined": e_tc.is_some(),
                "e_to_defined": e_to.is_some(),
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
        }
        Command::Design(DesignCommand::Feedback {
            system,
            poles,
            setpoint,
            gain_out,
            tol,
        }) => {
            let cfg = tol.config();
            cfg.validate()?;
            let sys = load_system(&system, &cfg)?;
            let b = sys.b_required()?;
            let desired = parse_pole_list(&poles)?;
            let sigma = sigma_set(&sys.a, &sys.f, &cfg)?;
            let mut design = place_target_poles(&sys.a, b, &sys.f, &desired, &cfg)?;
            if let Some(z) = setpoint {
                let z_star = DVector::from_element(sys.f.nrows(), z);
                design.feedforward_r =
                    Some(setpoint_feedforward(&sys.a, b, &design.k, &sys.f, &z_star)?);
            }
            if let Some(path) = gain_out {
                fs::write(path, render_matrix(&design.k))?;
            }
            let out = json!({
                "schema_version": SCHEMA_VERSION,
                "sigma_eigenvalues": complex_json(&sigma.eigenvalues()),
                "placed": complex_json(&design.placed),
                "achieved_spectrum": complex_json(&design.achieved_spectrum),
                "gain": (0..design.k.nrows())
                    .map(|i| design.k.row(i).iter().cloned().collect::<Vec<f64>>())
                    .collect::<Vec<_>>(),
                "feedforward_r": design
                    .feedforward_r
                    .as_ref()
                    .map(|r| r.iter().cloned().collect::<Vec<f64>>()),
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
        }
        Command::Design(DesignCommand::Observer {
            system,
            gain,
            obs_poles,
            obs_out,
            tol,
        }) => {
            let cfg = tol.config();
            cfg.validate()?;
            let sys = load_system(&system, &cfg)?;
            let c = sys.c_required()?;
            let k = netlab::numkernel::parse_matrix(&fs::read_to_string(gain)?)?;
            let poles = parse_pole_list(&obs_poles)?;
            let obs = synthesize_functional_observer(c, &sys.a, &k, &poles, &cfg)?;
            let (r2, r3) = obs.condition_residuals(c, &sys.a, &k);
            if let Some(path) = obs_out {
                fs::write(path, obs.render())?;
            }
            let out = json!({
                "schema_version": SCHEMA_VERSION,
                "order": obs.n0,
                "hurwitz": obs.is_hurwitz(),
                "residual_dynamics": r2,
                "residual_gain": r3,
                "observer_poles": complex_json(
                    &obs.n_mat.clone().complex_eigenvalues().iter().cloned().collect::<Vec<_>>()
                ),
            });
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
        }
        Command::Simulate {
            loop_file,
            t,
            dt,
            out,
        } => {
            let text = fs::read_to_string(&loop_file)?;
            let sections = parse_matrix_sections(&text)?;
            let get = |name: &str| -> Result<DMatrix<f64>, Error> {
                sections
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, m)| m.clone())
                    .ok_or_else(|| Error::Input(format!("loop file is missing section {name}")))
            };
            let a = get("A")?;
            let b = get("B")?;
            let c = get("C")?;
            let f = get("F")?;
            let obs = FunctionalObserver::new(get("N")?, get("J")?, get("D")?, get("E")?, get("T")?)?;
            let reference = get("R").ok().map(|m| DVector::from_column_slice(m.as_slice()));
            let x0 = get("X0")
                .ok()
                .map(|m| DVector::from_column_slice(m.as_slice()))
                .unwrap_or_else(|| DVector::zeros(a.nrows()));
            let w0 = get("W0")
                .ok()
                .map(|m| DVector::from_column_slice(m.as_slice()))
                .unwrap_or_else(|| DVector::zeros(obs.n0));
            let cl = assemble_closed_loop(&a, &b, &c, &obs, reference)?;
            let run = simulate_closed_loop(&cl, &f, &x0, &w0, t, dt)?;

            let mut csv = String::new();
            csv.push_str("t");
            for i in 0..a.nrows() {
                csv.push_str(&format!(",x{}", i + 1));
            }
            for i in 0..obs.n0 {
                csv.push_str(&format!(",w{}", i + 1));
            }
            for i in 0..f.nrows() {
                csv.push_str(&format!(",z{}", i + 1));
            }
            csv.push_str(",err\n");
            for (k, &tk) in run.trajectory.times.iter().enumerate() {
                csv.push_str(&format!("{tk:e}"));
                for v in run.trajectory.states[k].iter() {
                    csv.push_str(&format!(",{v:e}"));
                }
                for v in run.z[k].iter() {
                    csv.push_str(&format!(",{v:e}"));
                }
                csv.push_str(&format!(",{:e}\n", run.estimation_error_norm[k]));
            }
            fs::write(&out, csv)?;
            eprintln!(
                "wrote {} samples to {} (separation error {:.3e})",
                run.trajectory.times.len(),
                out.display(),
                cl.separation_error
            );
        }
        Command::Sweep {
            model,
            sizes,
            realizations,
            ratio,
            seed,
            alpha,
            ba_m0,
            nw_ring,
            nw_p,
            out,
            plot,
        } => {
            let cfg = ToleranceConfig::default();
            let (net_model, chain_preset) = match model.as_str() {
                "barabasi_albert" => (NetworkModel::BarabasiAlbert { m0: ba_m0 }, false),
                "newman_watts" => (
                    NetworkModel::NewmanWatts {
                        ring_degree: nw_ring,
                        p: nw_p,
                    },
                    false,
                ),
                "chain" => (NetworkModel::Chain, true),
                other => {
                    return Err(Error::Input(format!(
                        "unknown model '{other}' (expected barabasi_albert, newman_watts, chain)"
                    )))
                }
            };
            let sizes: Vec<usize> = sizes
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::Input(format!("invalid size '{t}'")))
                })
                .collect::<Result<_, _>>()?;
            let sweep_cfg = SweepConfig {
                model: net_model,
                sizes,
                realizations,
                ratio,
                seed,
                alpha,
                chain_preset,
            };
            let result = run_sweep(&sweep_cfg, &cfg)?;
            fs::write(&out, sweep_csv(&result))?;
            if let Some(path) = plot {
                netlab::netgen::plot_sweep(&result, &path)?;
            }
            let out_json = json!({
                "schema_version": SCHEMA_VERSION,
                "aggregates": result
                    .aggregates
                    .iter()
                    .map(|a| json!({
                        "model": a.model,
                        "n": a.n,
                        "mean_e_tc": energy_value(a.mean_e_tc),
                        "mean_e_to": energy_value(a.mean_e_to),
                        "geo_mean_e_tc": energy_value(a.geo_mean_e_tc),
                        "geo_mean_e_to": energy_value(a.geo_mean_e_to),
                        "defined_e_tc": a.defined_e_tc,
                        "defined_e_to": a.defined_e_to,
                    }))
                    .collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&out_json).unwrap());
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Dimension(_) | Error::Input(_) | Error::Parse { .. } | Error::Io(_) => 2,
        Error::Infeasible(_) => 3,
        Error::Numerical(_) | Error::Diverged(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
