//! Command-line front end: single runs, convergence and scaling studies,
//! and the communication audit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slidemesh::driver::{
    audit_run, convergence_study, scaling_study, worker_main, write_audit_csv, write_convergence_csv,
    write_scaling_csv,
    Backend, RunConfig, MAX_WORKERS_ENV,
};
use slidemesh::partition::write_trace_csv;
use slidemesh::{run_case, Error};

#[derive(Parser)]
#[command(name = "slidemesh", version, about = "DGSEM solver for planar sliding meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Number of ranks; overrides the configuration.
    #[arg(long)]
    ranks: Option<usize>,
    /// Rank hosting: in-process threads or worker processes.
    #[arg(long, value_parser = parse_backend)]
    backend: Option<Backend>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case to its end time and report errors and conservation.
    Run(Common),
    /// Convergence study over the configured refinement levels and degrees.
    Converge(Common),
    /// Timing study over the configured rank counts.
    Scale(Common),
    /// Run with a message trace and check it against the expected traffic.
    Audit(Common),
    /// One rank of a multi-process run.
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        result: PathBuf,
    },
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure classes mapped to exit codes.
enum Failure {
    Error(Error),
    /// The run finished but violated a checked invariant.
    Violation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Error(e)
    }
}

fn load(c: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(n) = c.ranks {
        cfg.parallel.ranks = n;
    }
    if let Some(b) = c.backend {
        cfg.parallel.backend = b;
    }
    if let Some(dir) = &c.out {
        cfg.output.dir = Some(dir.clone());
    }
    cfg.validate()?;
    let out = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("slidemesh-out"));
    Ok((cfg, out))
}

fn fmt_vars(v: &[f64; 4]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(" ")
}

fn run(c: &Common) -> Result<(), Failure> {
    let (mut cfg, out) = load(c)?;
    cfg.output.dir = Some(out.clone());
    let o = run_case(&cfg)?;
    let r = &o.report;
    println!("case          {}", cfg.case.exact.name());
    println!("steps         {} x dt {:.6e} -> t = {:.6e}", o.plan.n_steps, o.plan.dt, o.field.time);
    println!("ranks         {} ({:?})", cfg.parallel.ranks, cfg.parallel.backend);
    println!("L2            {}", fmt_vars(&r.norms.l2));
    println!("Linf          {}", fmt_vars(&r.norms.linf));
    println!("mass drift    {:.3e}", r.mass_drift);
    println!("energy drift  {:.3e}", r.energy_drift);
    println!("rebuilds      {}", o.rebuilds);
    println!("wall          {:.3} s, PID {:.3e} s", r.wall_seconds, r.pid);
    println!("output        {}", out.display());
    Ok(())
}

fn converge(c: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(c)?;
    let rows = convergence_study(&cfg, &cfg.study.levels, &cfg.study.degrees)?;
    std::fs::create_dir_all(&out).map_err(Error::from)?;
    let path = out.join("convergence.csv");
    write_convergence_csv(&path, &rows)?;
    println!("{:>3} {:>6} {:>12} {:>12} {:>8}", "N", "n", "L2(rho)", "Linf(rho)", "order");
    for r in &rows {
        let order = r.order.map_or("-".to_string(), |o| format!("{o:.2}"));
        let flag = if r.non_monotone { "  non-monotone" } else { "" };
        println!(
            "{:>3} {:>6} {:>12.4e} {:>12.4e} {:>8}{flag}",
            r.degree, r.n_elements_1d, r.l2_rho, r.linf_rho, order
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn scale(c: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(c)?;
    let ranks = match c.ranks {
        Some(n) => (1..=n).collect(),
        None => cfg.study.ranks.clone(),
    };
    let study = scaling_study(&cfg, &ranks)?;
    std::fs::create_dir_all(&out).map_err(Error::from)?;
    let path = out.join("scaling.csv");
    write_scaling_csv(&path, &study)?;
    println!("{:>5} {:>10} {:>12} {:>10}", "ranks", "layout", "PID mean", "eff.");
    for r in &study.rows {
        println!("{:>5} {:>10} {:>12.4e} {:>10.3}", r.ranks, r.layout, r.pid[1], r.efficiency);
    }
    for (n, o) in &study.overhead {
        println!("sliding / conforming at {n} ranks: {o:.3}");
    }
    if !study.skipped.is_empty() {
        println!("skipped rank counts above {MAX_WORKERS_ENV}: {:?}", study.skipped);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn audit(c: &Common) -> Result<(), Failure> {
    let (mut cfg, out) = load(c)?;
    cfg.output.dir = None;
    let a = audit_run(&cfg)?;
    std::fs::create_dir_all(&out).map_err(Error::from)?;
    let trace_path = out.join("trace.csv");
    write_trace_csv(&trace_path, &a.run.trace)?;
    write_audit_csv(&out.join("audit.csv"), &a)?;
    let r = &a.report;
    println!("messages               {}", r.messages);
    println!("data bytes             {}", r.data_bytes);
    println!("init collectives       {}", r.init_collectives);
    println!("collectives after init {}", r.collectives_after_init);
    println!("stages checked         {}", r.stages_checked);
    println!("topology changes       {}", a.run.topology_changes());
    println!("wrote {}", trace_path.display());
    if r.passed() {
        println!("audit passed");
        Ok(())
    } else {
        for v in r.violations.iter().take(20) {
            eprintln!("violation: {v}");
        }
        Err(Failure::Violation(format!("audit found {} violations", r.violations.len())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => run(c),
        Command::Converge(c) => converge(c),
        Command::Scale(c) => scale(c),
        Command::Audit(c) => audit(c),
        Command::Worker { job, rank, result } => worker_main(job, *rank, result).map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
