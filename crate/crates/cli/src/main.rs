use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mecwpt::sim::sweep::{charge_cell, convergence_rows, offload_cell, ChargeScheme, OffloadScheme};
use mecwpt::sim::{rows_to_csv, run_profile, run_sweep, run_validation, Axis, ExperimentConfig, Row};
use mecwpt::{realize, ConfigError};

#[derive(Parser)]
#[command(name = "mecwpt", version, about = "Edge offloading and wireless charging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte-Carlo realizations (overrides the config).
    #[arg(long, global = true)]
    realizations: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Offload and charge once in every cell; writes a summary and solver traces.
    Run(Common),
    /// Sweep one axis over Monte-Carlo realizations.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// scheme | data | latency | energy | network-size | charging-time | power-control
        #[arg(long)]
        axis: Option<String>,
    },
    /// Optimal, equal-K and isotropic charging against the number of users.
    CompareSchemes(Common),
    /// Multi-block run over the configured mode schedule.
    Profile(Common),
    /// Quick property checks; exits 1 when any check fails.
    Validate(Common),
}

enum Failure {
    Config(ConfigError),
    Infeasible(String),
    Other(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

struct Session {
    cfg: ExperimentConfig,
    out: PathBuf,
    quiet: bool,
}

impl Session {
    fn open(c: &Common) -> Result<Self, Failure> {
        let mut cfg = match &c.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(r) = c.realizations {
            if r == 0 {
                return Err(ConfigError::Invalid("--realizations must be positive".into()).into());
            }
            cfg.realizations = Some(r);
        }
        let out = c
            .out
            .clone()
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { cfg, out, quiet: c.quiet })
    }

    fn write(&self, name: &str, rows: &[Row]) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, rows_to_csv(rows)).with_context(|| format!("writing {}", path.display()))?;
        self.note(format!("wrote {} rows to {}", rows.len(), path.display()));
        Ok(path)
    }

    fn note(&self, msg: String) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    /// In strict mode any infeasible cell fails the run.
    fn check_strict(&self, rows: &[Row]) -> Result<(), Failure> {
        let bad: f64 = rows.iter().filter(|r| r.metric == "infeasible_cells").map(|r| r.value).sum();
        if self.cfg.strict && bad > 0.0 {
            return Err(Failure::Infeasible(format!("{bad} infeasible cell solves")));
        }
        if bad > 0.0 {
            log::warn!("{bad} cell solves were infeasible");
        }
        Ok(())
    }
}

fn cmd_run(s: &Session) -> Result<(), Failure> {
    let mut cfg = s.cfg.clone();
    cfg.solver.offload.record_trace = true;
    cfg.solver.charge.record_trace = true;
    let p = cfg.system_params()?;
    let reqs = cfg.requests(p.users_per_cell)?;
    let data: Vec<f64> = reqs.iter().map(|r| r.data_bits).collect();
    let energy: Vec<f64> = reqs.iter().map(|r| r.energy_req).collect();
    let n = cfg.realizations_or(1);
    let (mut summary, mut traces) = (Vec::new(), Vec::new());
    for r in 0..n as u64 {
        let seed = cfg.seed.wrapping_add(r);
        let (_, chans) = realize(&p, seed).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for cell in 0..p.n_cells {
            let x = cell as f64;
            let row = |scheme: &str, metric: &str, value: f64| Row {
                axis_value: x,
                seed,
                scheme: scheme.into(),
                metric: metric.into(),
                value,
            };
            let off = offload_cell(OffloadScheme::Partial, &chans, cell, &data, &p, &cfg.solver);
            let t_c = match &off {
                Ok(sol) => {
                    summary.push(row("partial", "energy_weighted", sol.objective()));
                    summary.push(row("partial", "energy_users", sol.energy.users));
                    summary.push(row("partial", "energy_mec", sol.energy.mec));
                    summary.push(row("partial", "t_charge", sol.times.t_charge));
                    summary.push(row("partial", "outer_iterations", sol.log.outer_iterations as f64));
                    summary.push(row("partial", "inner_iterations", sol.log.inner_iterations as f64));
                    sol.times.t_charge
                }
                Err(e) => {
                    log::warn!("seed {seed} cell {cell}: {e}");
                    summary.push(row("partial", "infeasible_cells", 1.0));
                    0.0
                }
            };
            let ch = charge_cell(ChargeScheme::Optimal, &chans, cell, &energy, t_c, &p, &cfg.solver);
            summary.push(row("optimal", "received_energy", ch.total_received()));
            summary.push(row("optimal", "active_beams", ch.active_beams as f64));
            summary.push(row("optimal", "iterations", ch.iterations as f64));
            if let (Ok(sol), 0) = (&off, cell) {
                traces.extend(convergence_rows(sol, &ch, seed));
            }
        }
    }
    s.write("run.csv", &summary)?;
    s.write("convergence.csv", &traces)?;
    s.check_strict(&summary)
}

fn sweep(s: &Session, axis: Axis, file: &str) -> Result<(), Failure> {
    let rows = run_sweep(&s.cfg, axis)?;
    s.write(file, &rows)?;
    s.check_strict(&rows)
}

fn cmd_sweep(s: &Session, axis: Option<&str>) -> Result<(), Failure> {
    let axis = match axis {
        Some(name) => Axis::parse(name).ok_or_else(|| {
            let known: Vec<&str> = Axis::ALL.iter().map(|a| a.name()).collect();
            ConfigError::Invalid(format!("unknown axis `{name}` (expected one of {})", known.join(", ")))
        })?,
        None => s
            .cfg
            .sweep
            .as_ref()
            .map(|sw| sw.axis)
            .ok_or_else(|| ConfigError::Invalid("no sweep axis given on the command line or in the config".into()))?,
    };
    sweep(s, axis, &format!("sweep_{}.csv", axis.name().replace('-', "_")))
}

fn cmd_profile(s: &Session) -> Result<(), Failure> {
    let run = run_profile(&s.cfg)?;
    s.write("profile.csv", &run.rows)?;
    for (cell, l) in run.ledgers.iter().enumerate() {
        let req: f64 = l.users.iter().map(|u| u.requested).sum();
        s.note(format!("cell {cell}: received {:.4e} J of {:.4e} J requested", l.total_received(), req));
    }
    s.check_strict(&run.rows)
}

fn cmd_validate(s: &Session) -> Result<(), Failure> {
    let n = s.cfg.realizations_or(3);
    let checks = run_validation(&s.cfg, n)?;
    let mut failed = 0;
    for c in &checks {
        if !c.passed {
            failed += 1;
        }
        if !s.quiet || !c.passed {
            println!("{:<18} {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
        }
    }
    if failed > 0 {
        return Err(Failure::Other(anyhow::anyhow!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<(), Failure> {
    match cmd {
        Command::Run(c) => cmd_run(&Session::open(c)?),
        Command::Sweep { common, axis } => cmd_sweep(&Session::open(common)?, axis.as_deref()),
        Command::CompareSchemes(c) => sweep(&Session::open(c)?, Axis::Scheme, "compare_schemes.csv"),
        Command::Profile(c) => cmd_profile(&Session::open(c)?),
        Command::Validate(c) => cmd_validate(&Session::open(c)?),
    }
}

fn quiet(cmd: &Command) -> bool {
    match cmd {
        Command::Run(c) | Command::CompareSchemes(c) | Command::Profile(c) | Command::Validate(c) => c.quiet,
        Command::Sweep { common, .. } => common.quiet,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if quiet(&cli.command) { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("error: infeasible: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
