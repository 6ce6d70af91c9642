use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use seccache::builder::{assemble_subproblem, BuildOptions, Mode};
use seccache::config::{Config, Scheme};
use seccache::harness::{deliver, plan, run_point, run_sweep, trial_seed, MetricsWriter, SINGLE_POINT};
use seccache::placement::CachePlacement;
use seccache::scenario::Scenario;

#[derive(Parser)]
#[command(name = "seccache", version, about = "Secure cache placement and robust delivery simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimize the cache placement of one period; writes placement.json,
    /// scenario.json and, for GBD schemes, gbd_trace.csv.
    CacheOptimize {
        config: PathBuf,
        /// Trial index whose period is optimized.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Also dump the slot-0 Slacked subproblem at the final placement.
        #[arg(long)]
        dump_conic: bool,
    },
    /// Deliver every slot of a period with a fixed placement; writes delivery.jsonl.
    Deliver {
        config: PathBuf,
        placement: PathBuf,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run the experiment scheme at the configured point; writes metrics.csv.
    Simulate { config: PathBuf },
    /// Run every sweep value and scheme; writes metrics.csv as rows finish.
    Sweep { config: PathBuf },
}

fn out_dir(cfg: &Config) -> anyhow::Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn period(cfg: &Config, trial: usize) -> seccache::Result<Scenario> {
    Scenario::generate(cfg, trial_seed(cfg.experiment.seed, trial), cfg.experiment.slots, 0)
}

fn cache_optimize(cfg: &Config, trial: usize, dump_conic: bool) -> anyhow::Result<()> {
    let dir = out_dir(cfg)?;
    let sc = period(cfg, trial)?;
    write(&dir.join("scenario.json"), &sc.to_json()?)?;
    let p = plan(cfg, cfg.experiment.scheme, &sc)?;
    write(&dir.join("placement.json"), &p.placement.to_json()?)?;
    if let Some(trace) = &p.trace {
        write(&dir.join("gbd_trace.csv"), &trace.to_csv()?)?;
    }
    if dump_conic {
        let mu = cfg.solver.mu_factor * sc.topology.p_total();
        let opts = BuildOptions { mode: Mode::Slacked, mu, robust: cfg.experiment.scheme != Scheme::NonRobust };
        let sp = assemble_subproblem(&sc.topology, &sc.library, &sc.requests, &sc.slots[0], &p.placement, &opts)?;
        write(&dir.join("subproblem.txt"), &conic::dump::dump_problem(&sp.problem))?;
    }
    println!("placement {}", p.placement);
    if let Some(s) = p.gbd_status {
        println!("status {s:?} iterations {}", p.iterations);
    }
    println!("solves {} failures {}", p.solves, p.failures);
    Ok(())
}

fn deliver_cmd(cfg: &Config, placement: &Path, trial: usize) -> anyhow::Result<()> {
    let text = fs::read_to_string(placement).with_context(|| format!("reading {}", placement.display()))?;
    let q = CachePlacement::from_json(&text)?;
    let sc = period(cfg, trial)?;
    let dir = out_dir(cfg)?;
    let slots = deliver(cfg, cfg.experiment.scheme, &sc, &q)?;
    let path = dir.join("delivery.jsonl");
    let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    for s in &slots {
        serde_json::to_writer(&mut f, &s.record)?;
        f.write_all(b"\n")?;
    }
    eprintln!("wrote {}", path.display());
    let served = slots.iter().filter(|s| s.served).count();
    println!("served {served} of {} slots", slots.len());
    Ok(())
}

fn metrics_files(cfg: &Config) -> anyhow::Result<(MetricsWriter<fs::File>, MetricsWriter<fs::File>)> {
    let dir = out_dir(cfg)?;
    let m = MetricsWriter::new(fs::File::create(dir.join("metrics.csv"))?, false)?;
    let t = MetricsWriter::new(fs::File::create(dir.join("timing.csv"))?, true)?;
    Ok((m, t))
}

fn simulate(cfg: &Config) -> anyhow::Result<()> {
    let (mut m, mut t) = metrics_files(cfg)?;
    let p = run_point(cfg, cfg.experiment.scheme, SINGLE_POINT, 0.0)?;
    m.write(&p.row)?;
    t.write(&p.row)?;
    print_row(&p.row);
    Ok(())
}

fn sweep(cfg: &Config) -> anyhow::Result<()> {
    let (mut m, mut t) = metrics_files(cfg)?;
    run_sweep(cfg, |row| {
        m.write(row)?;
        t.write(row)?;
        print_row(row);
        Ok(())
    })?;
    Ok(())
}

fn print_row(r: &seccache::harness::MetricsRow) {
    println!(
        "{}={} {} power {:.4e} W ({:.2} dBm) p_out {:.3} N_BL {:.2} N_EL {:.2} failures {}/{} {:.1}s",
        r.axis, r.value, r.scheme, r.power_w, r.power_dbm, r.p_out, r.n_bl, r.n_el, r.solver_failures, r.solves, r.wall_s
    );
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<seccache::Error>() {
        Some(seccache::Error::Config(_) | seccache::Error::Uncertainty(_)) => 2,
        Some(seccache::Error::FailureBudget { .. }) => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let path = match &cli.cmd {
        Cmd::CacheOptimize { config, .. } | Cmd::Deliver { config, .. } | Cmd::Simulate { config } | Cmd::Sweep { config } => config,
    };
    let cfg = Config::load(path)?;
    match cli.cmd {
        Cmd::CacheOptimize { trial, dump_conic, .. } => cache_optimize(&cfg, trial, dump_conic),
        Cmd::Deliver { placement, trial, .. } => deliver_cmd(&cfg, &placement, trial),
        Cmd::Simulate { .. } => simulate(&cfg),
        Cmd::Sweep { .. } => sweep(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
