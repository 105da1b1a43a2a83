use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use cbrisk_core::fault::{build_phase_matrices, FaultSpec, FaultTarget, FaultType};
use cbrisk_core::network::{bus_label, load_dynamics, parse_cdf, PowerSystem};
use cbrisk_core::powerflow::{init_machine_internals, solve_power_flow, OperatingPoint};
use cbrisk_core::report::{render_csv, render_json, render_trajectory, top_table, ReportDocument, RunManifest};
use cbrisk_core::risk::{rank_deterministic_lll, rank_elements, RankingReport, TimeDomainEvaluator};
use cbrisk_core::sampling::{cochran_size, CampaignConfig, CampaignMode};
use cbrisk_core::sim::{simulate_scenario, SimSettings};
use cbrisk_core::Error;

#[derive(Parser)]
#[command(name = "cbrisk", version, about = "Transient stability risk ranking of circuit breakers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank line breakers by average risk of faults along each line.
    RankLines(CampaignArgs),
    /// Rank bus breaker groups by average risk of faults at each bus.
    RankBuses(CampaignArgs),
    /// Rank buses under a single deterministic bolted three-phase fault.
    RankBusesDet(CampaignArgs),
    /// Solve and print the base-case power flow.
    Powerflow(SystemArgs),
    /// Simulate one fault scenario and optionally dump the trajectory.
    SimulateOne(SimulateArgs),
    /// Parse and validate the input files.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SystemArgs {
    /// IEEE common data format case file.
    #[arg(long)]
    system: PathBuf,
    /// Machine dynamics JSON sidecar.
    #[arg(long = "dyn")]
    dynamics: PathBuf,
}

#[derive(Args)]
struct CampaignArgs {
    #[command(flatten)]
    input: SystemArgs,
    /// Samples per element (default: Cochran size at 95% / 2%).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output stem; writes <out>.csv, <out>.json and <out>.run.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Campaign configuration JSON; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: SystemArgs,
    /// Line id (e.g. Line_0006_0013) or bus (Bus_0006 or 6).
    #[arg(long)]
    element: String,
    /// Fault position along a line, percent from the from bus.
    #[arg(long, default_value_t = 50)]
    location: u8,
    #[arg(long, default_value = "LLL")]
    ftype: FaultType,
    /// Fault clearing time, seconds.
    #[arg(long, default_value_t = 0.9)]
    fct: f64,
    /// Write the trajectory to <out>.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long = "dyn")]
    dynamics: Option<PathBuf>,
}

/// Failure classes with their exit codes.
enum Failure {
    /// Missing or invalid input, unwritable output.
    Input(String),
    /// Base-case power flow failed.
    PowerFlow(String),
    /// Numerical failure during analysis.
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::PowerFlow(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::PowerFlow(m) | Failure::Numerical(m) => m,
        }
    }
}

fn input_error(context: &str, e: Error) -> Failure {
    Failure::Input(format!("{context}: {e}"))
}

fn numerical(e: Error) -> Failure {
    Failure::Numerical(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn load_system(args: &SystemArgs) -> Result<PowerSystem, Failure> {
    let cdf = read(&args.system)?;
    let dynamics = read(&args.dynamics)?;
    PowerSystem::from_texts(&cdf, &dynamics).map_err(|e| input_error(&args.system.display().to_string(), e))
}

fn base_power_flow(system: &PowerSystem) -> Result<OperatingPoint, Failure> {
    solve_power_flow(system, &vec![1.0; system.n_buses()]).map_err(|e| match e {
        Error::NonConvergence { .. } | Error::SingularJacobian(_) => Failure::PowerFlow(format!("base case: {e}")),
        e => numerical(e),
    })
}

fn campaign_config(args: &CampaignArgs, mode: CampaignMode) -> Result<CampaignConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => serde_json::from_str(&read(p)?)
            .map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?,
        None => CampaignConfig {
            n_samples: cochran_size(0.95, 0.02, 0.5).map_err(numerical)?,
            ..CampaignConfig::default()
        },
    };
    cfg.mode = mode;
    if let Some(n) = args.samples {
        cfg.n_samples = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| input_error("configuration", e))?;
    Ok(cfg)
}

fn rank(args: &CampaignArgs, mode: CampaignMode) -> Result<(), Failure> {
    let cfg = campaign_config(args, mode)?;
    let system = load_system(&args.input)?;
    base_power_flow(&system)?;
    let stem = args.out.clone().unwrap_or_else(|| {
        PathBuf::from(match mode {
            CampaignMode::LineFaults => "lines",
            CampaignMode::BusFaults => "buses",
            CampaignMode::DeterministicLll => "det",
        })
    });

    // fail on an unwritable destination before spending time on the run
    for ext in [".csv", ".json", ".run.json"] {
        let path = with_ext(&stem, ext);
        std::fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    let threads = if args.threads == 0 { available_cores() } else { args.threads };
    let started = Instant::now();
    let evaluator = TimeDomainEvaluator::new(&system);
    let report: RankingReport = match mode {
        CampaignMode::DeterministicLll => rank_deterministic_lll(&system, &cfg, &evaluator, threads),
        _ => rank_elements(&system, &cfg, &evaluator, threads),
    }
    .map_err(numerical)?;
    let elapsed = started.elapsed().as_secs_f64();

    let manifest = RunManifest::new(&system.name, &cfg, &report);
    let run = RunManifest {
        wall_clock_s: Some(elapsed),
        threads: Some(threads),
        ..manifest.clone()
    };
    let doc = ReportDocument { manifest, report };
    write(&with_ext(&stem, ".csv"), &render_csv(&doc.report))?;
    write(&with_ext(&stem, ".json"), &render_json(&doc).map_err(numerical)?)?;
    write(&with_ext(&stem, ".run.json"), &(serde_json::to_string_pretty(&run).map_err(|e| numerical(e.into()))? + "\n"))?;

    let r = &doc.report;
    println!("{} elements x {} samples in {elapsed:.1} s", r.entries.len() + r.flagged.len(), r.n_samples);
    print!("{}", top_table(r, 5));
    for f in &r.flagged {
        println!("flagged {}: {} scenarios rejected ({})", f.element, f.n_rejected, f.reason);
    }
    if r.fct_clamps + r.load_clamps > 0 {
        println!("clamped draws: {} clearing times, {} bus loads", r.fct_clamps, r.load_clamps);
    }
    Ok(())
}

fn available_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn powerflow(args: &SystemArgs) -> Result<(), Failure> {
    let system = load_system(args)?;
    let op = base_power_flow(&system)?;
    println!("{}: converged in {} iterations, max mismatch {:.2e} pu", system.name, op.iterations, op.max_mismatch);
    println!("{:>9} {:>8} {:>9} {:>9} {:>9}", "bus", "|V| pu", "angle deg", "P gen MW", "Q gen MVAr");
    for (b, (v, s)) in system.buses.iter().zip(op.v.iter().zip(&op.s_gen)) {
        println!(
            "{:>9} {:>8.4} {:>9.3} {:>9.2} {:>9.2}",
            bus_label(b.id),
            v.norm(),
            v.arg().to_degrees(),
            s.re * system.system_mva,
            s.im * system.system_mva
        );
    }
    let (g, l) = (op.total_generation(), op.total_load());
    println!("generation {:.2} MW, load {:.2} MW, losses {:.2} MW", g.re * system.system_mva, l.re * system.system_mva, (g - l).re * system.system_mva);
    Ok(())
}

fn parse_target(system: &PowerSystem, element: &str, location: u8) -> Result<FaultTarget, Failure> {
    if system.branch(element).is_some() {
        if !(1..=100).contains(&location) {
            return Err(Failure::Input(format!("location {location} must lie in 1..=100")));
        }
        return Ok(FaultTarget::Line { id: element.into(), fraction: location as f64 / 100.0 });
    }
    let bus = element.strip_prefix("Bus_").unwrap_or(element).parse::<u32>().ok().filter(|b| system.bus_index(*b).is_some());
    bus.map(FaultTarget::Bus).ok_or_else(|| Failure::Input(format!("unknown element {element}")))
}

fn simulate_one(args: &SimulateArgs) -> Result<(), Failure> {
    let system = load_system(&args.input)?;
    let target = parse_target(&system, &args.element, args.location)?;
    let op = base_power_flow(&system)?;
    let internals = init_machine_internals(&system, &op).map_err(numerical)?;
    let phases = build_phase_matrices(&system, &op, &FaultSpec::bolted(target, args.ftype)).map_err(|e| match e {
        Error::UnknownElement(_) => input_error("simulate-one", e),
        e => numerical(e),
    })?;
    let traj = simulate_scenario(&system, &internals, &phases, args.fct, &SimSettings::default()).map_err(|e| match e {
        Error::Domain(_) => input_error("simulate-one", e),
        e => numerical(e),
    })?;
    println!(
        "{} {} fault, clearing {} s: delta_max {:.2} deg, {}",
        args.element,
        args.ftype,
        args.fct,
        traj.delta_max_deg,
        if traj.unstable { "unstable" } else { "stable" }
    );
    if let Some(stem) = &args.out {
        let buses: Vec<u32> = system.machines.iter().map(|m| m.bus).collect();
        write(&with_ext(stem, ".csv"), &render_trajectory(&traj, &buses))?;
    }
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<(), Failure> {
    let label = args.system.display().to_string();
    let system = parse_cdf(&read(&args.system)?).map_err(|e| input_error(&label, e))?;
    println!(
        "{}: {} buses, {} branches ({} lines), load {:.1} MW / {:.1} MVAr",
        system.name,
        system.n_buses(),
        system.branches.len(),
        system.n_lines(),
        system.total_load_mw(),
        system.total_load_mvar()
    );
    if let Some(p) = &args.dynamics {
        let d = load_dynamics(&read(p)?, &system).map_err(|e| input_error(&p.display().to_string(), e))?;
        let system = system.with_dynamics(d).map_err(|e| input_error(&p.display().to_string(), e))?;
        println!("{} machines, {} breakers", system.machines.len(), system.breakers.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RankLines(a) => rank(a, CampaignMode::LineFaults),
        Command::RankBuses(a) => rank(a, CampaignMode::BusFaults),
        Command::RankBusesDet(a) => rank(a, CampaignMode::DeterministicLll),
        Command::Powerflow(a) => powerflow(a),
        Command::SimulateOne(a) => simulate_one(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
