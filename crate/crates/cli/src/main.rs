//! `mmal`: replay logs, run k-sweeps and period comparisons, generate
//! synthetic scenarios and serve the decision endpoints.
//!
//! Exit codes: 0 success, 1 invalid input (validation, config, parse),
//! 2 file I/O failure, 64 command line usage error.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmal_core::harness::{
    generate_synthetic, k_sweep, legacy_log, load_events, load_scenario, period_compare, replay, report_emit,
    save_scenario, write_events, HarnessError, KpiReport, ReportFormat, Scenario, SyntheticSpec,
};
use mmal_core::{ControllerConfig, Exec, SubstitutionStrategy};
use mmal_service::{ServiceConfig, ServiceError};

#[derive(Parser)]
#[command(name = "mmal", version, about = "Body buffer resequencing: replay, sweep, compare, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay an event log; writes the decision log and a KPI report.
    Replay {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        events: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Replay one log once per k (last_k_equal, 0 = no substitution).
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Defaults to `events.jsonl` in the scenario directory.
        #[arg(long)]
        events: Option<PathBuf>,
        /// `a..b` (inclusive), `a..=b` or a comma list.
        #[arg(long, default_value = "0..5", value_parser = parse_ks)]
        k: Ks,
        /// Seed of the paint shop repaint draw.
        #[arg(long)]
        seed: Option<u64>,
        /// Run the k values one after another.
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare two periods of the same plant.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Log of the earlier period.
        #[arg(long)]
        old: PathBuf,
        /// Log of the later period (`--events` is an alias).
        #[arg(long, alias = "events")]
        new: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a synthetic scenario with its event log and a legacy-controlled log.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        cars: usize,
        #[arg(long, default_value_t = 20)]
        colors: usize,
        /// Buffer fill level at which arrivals and departures alternate.
        #[arg(long, default_value_t = 60)]
        occupancy: usize,
        #[arg(long, default_value_t = 0.5)]
        shuffle: f64,
    },
    /// Serve the decision endpoints.
    Serve {
        #[arg(long, env = "SCENARIO_DIR")]
        scenario: PathBuf,
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "HOST", default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Directory for `decisions.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario directory and list every violation.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario strategy: `name` or `name:k`.
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "both", value_parser = parse_format)]
    format: ReportFormat,
}

#[derive(Clone, Debug)]
struct Ks(Vec<usize>);

fn parse_ks(s: &str) -> Result<Ks, String> {
    let num = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("bad k {x:?}"));
    let ks = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty range {s:?}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    Ok(Ks(ks))
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

enum Failure {
    Invalid(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Io(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match &e {
            HarnessError::Io { .. } => Failure::Io(e.to_string()),
            HarnessError::Validation(report) => {
                let mut msg = e.to_string();
                for v in &report.violations {
                    msg.push_str(&format!("\n  - {v}"));
                }
                Failure::Invalid(msg)
            }
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Harness(h) => h.into(),
            ServiceError::Io(e) => Failure::Io(e.to_string()),
            ServiceError::Config(m) => Failure::Invalid(m),
        }
    }
}

fn load(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(s) = &args.strategy {
        let (name, k) = match s.split_once(':') {
            Some((name, k)) => (name, Some(k.parse().map_err(|_| Failure::Invalid(format!("bad k in {s:?}")))?)),
            None => (s.as_str(), None),
        };
        SubstitutionStrategy::from_name(name, 0).map_err(Failure::Invalid)?;
        scenario.config.strategy = name.to_string();
        if let Some(k) = k {
            scenario.config.k = k;
        }
    }
    Ok(scenario)
}

fn controller(scenario: &Scenario) -> Result<ControllerConfig, Failure> {
    Ok(scenario.config.controller()?)
}

fn print_written(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Replay {
            scenario,
            events,
            output,
        } => {
            let s = load(&scenario)?;
            let events = load_events(&events)?;
            let cfg = controller(&s)?;
            let out = replay(&events, s.compile()?, s.config.buffer, cfg)?;
            std::fs::create_dir_all(&output.out).map_err(|e| Failure::Io(format!("{}: {e}", output.out.display())))?;
            let log = output.out.join("decisions.jsonl");
            write_events(&log, &out.log)?;
            let report = KpiReport::from_outcome(&out, &s, "replay", &cfg)?;
            println!(
                "{} cars left the buffer ({} still inside, {} inconsistent events); ABS {:.3}, aABS {:.3}",
                report.leaving.cars, report.cars_remaining, report.inconsistent_events, report.leaving.abs, report.leaving.aabs
            );
            print_written(&[log]);
            print_written(&report_emit(&report, &output.out, output.format)?);
        }
        Command::Sweep {
            scenario,
            events,
            k,
            seed,
            sequential,
            output,
        } => {
            let mut s = load(&scenario)?;
            if let Some(seed) = seed {
                s.config.paintshop.rng_seed = seed;
            }
            let events = load_events(&events.unwrap_or_else(|| scenario.scenario.join("events.jsonl")))?;
            let exec = if sequential { Exec::Sequential } else { Exec::default() };
            let report = k_sweep(&events, &s, &s.compile()?, &k.0, &s.config.paintshop, exec)?;
            println!("{:>3} {:>8} {:>8} {:>8} {:>10}", "k", "ABS", "aABS", "batches", "<=6 colors");
            for r in &report.rows {
                println!(
                    "{:>3} {:>8.3} {:>8.3} {:>8} {:>10.3}",
                    r.k, r.abs, r.aabs, r.batch_count, r.differentiation_mass_le_6
                );
            }
            let mut written = report_emit(&report, &output.out, output.format)?;
            for r in &report.rows {
                let path = output.out.join(format!("k{}.json", r.k));
                let text = serde_json::to_string_pretty(r).expect("serializable") + "\n";
                std::fs::write(&path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                written.push(path);
            }
            print_written(&written);
        }
        Command::Compare {
            scenario,
            old,
            new,
            output,
        } => {
            let s = load(&scenario)?;
            let (old, new) = (load_events(&old)?, load_events(&new)?);
            let cmp = period_compare(&old, &new, &s, &s.compile()?, controller(&s)?)?;
            let pct = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{:+.1}%", 100.0 * v));
            println!(
                "aABS {} (implied changeover reduction {}), CPC {}, index width {}",
                pct(cmp.aabs_gain),
                cmp.implied_cpc_reduction.map_or("n/a".into(), |v| format!("{:.1}%", 100.0 * v)),
                pct(cmp.cpc_change),
                pct(cmp.index_width_change)
            );
            print_written(&report_emit(&cmp, &output.out, output.format)?);
        }
        Command::Generate {
            out,
            seed,
            cars,
            colors,
            occupancy,
            shuffle,
        } => {
            if colors < 2 {
                return Err(Failure::Invalid("need at least two colors".into()));
            }
            let (s, events) = generate_synthetic(&SyntheticSpec {
                n_cars: cars,
                n_colors: colors,
                seed,
                target_occupancy: occupancy,
                blend_shuffle_strength: shuffle,
                ..SyntheticSpec::default()
            });
            save_scenario(&out, &s)?;
            write_events(&out.join("events.jsonl"), &events)?;
            let legacy = legacy_log(&events, &s.catalog, s.config.buffer);
            write_events(&out.join("legacy_events.jsonl"), &legacy)?;
            println!("wrote scenario {} ({} orders) to {}", s.config.scenario_id, s.catalog.orders.len(), out.display());
        }
        Command::Serve {
            scenario,
            port,
            host,
            out,
        } => {
            let decision_log = match &out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
                    Some(dir.join("decisions.jsonl"))
                }
                None => std::env::var_os("DECISION_LOG").map(PathBuf::from),
            };
            // fail fast on a broken scenario instead of serving 503 forever
            load_scenario(&scenario)?;
            let config = ServiceConfig {
                scenario_dir: scenario,
                decision_log,
                host,
                port,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
            rt.block_on(async {
                let (addr, server) = mmal_service::bind(config).await?;
                println!("listening on http://{addr}");
                let _ = std::io::stdout().flush();
                server.await.map_err(ServiceError::Io)
            })?;
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            println!(
                "{}: {} orders, {} constraints, {} colors, {} body types: ok",
                scenario.display(),
                s.catalog.orders.len(),
                s.catalog.constraints.len(),
                s.catalog.colors.len(),
                s.catalog.body_types.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(64);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "error".into()),
        )
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
