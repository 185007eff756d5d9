//! Command-line front end: single runs, SMC/PID comparison, the canonical road cases
//! and parameter sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use epb_abs::sim::acceptance::{evaluate, suite_jobs, Criterion, SuiteRuns};
use epb_abs::sim::{write_csv, ControllerKind, RunMetrics, RunOutput, ScenarioSpec, Simulator};
use epb_abs::Error;
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "epb-abs", version, about = "Rear-wheel ABS on an electric parking brake actuator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Controller, `smc` or `pid`; overrides the scenario.
        #[arg(long, value_parser = parse_controller)]
        controller: Option<ControllerKind>,
    },
    /// Run one scenario with both controllers and write the differences.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Run the canonical road cases and write the acceptance report.
    PaperSuite {
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override a scenario value on every run, `key=value` with a dotted key.
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, String)>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Run one scenario for each value of a parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Controller, `smc` or `pid`; overrides the scenario.
        #[arg(long, value_parser = parse_controller)]
        controller: Option<ControllerKind>,
        /// Dotted key to vary, for example `upper.eps1`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file; the single-friction case when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a scenario value, `key=value` with a dotted key.
    #[arg(long = "set", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

fn parse_controller(s: &str) -> Result<ControllerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical { .. } => Failure::Numerical(e.to_string()),
            Error::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn load(scenario: Option<&Path>, overrides: &[(String, String)]) -> CliResult<ScenarioSpec<f64>> {
    Ok(match scenario {
        Some(path) => ScenarioSpec::from_file(path, overrides)?,
        None => ScenarioSpec::from_toml_str(&ScenarioSpec::<f64>::default().to_toml()?, overrides)?,
    })
}

fn with_controller(mut spec: ScenarioSpec<f64>, controller: Option<ControllerKind>) -> ScenarioSpec<f64> {
    if let Some(c) = controller {
        spec.controller = c;
    }
    spec
}

/// Runs a scenario; on a numerical abort the partial trace is still written.
fn execute(spec: &ScenarioSpec<f64>, dir: &Path) -> CliResult<RunOutput<f64>> {
    let sim = Simulator::new(spec.clone())?;
    match sim.run() {
        Ok(out) => {
            write_run(dir, spec, &out)?;
            Ok(out)
        }
        Err(abort) => {
            fs::create_dir_all(dir)?;
            write_csv(&abort.trace, fs::File::create(dir.join("trace.csv"))?)?;
            fs::write(dir.join("scenario.toml"), spec.to_toml()?)?;
            Err(abort.error.into())
        }
    }
}

fn write_run(dir: &Path, spec: &ScenarioSpec<f64>, out: &RunOutput<f64>) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    write_csv(&out.trace, std::io::BufWriter::new(fs::File::create(dir.join("trace.csv"))?))?;
    fs::write(dir.join("metrics.txt"), out.metrics.to_text())?;
    fs::write(dir.join("metrics.json"), out.metrics.to_json()? + "\n")?;
    fs::write(dir.join("scenario.toml"), spec.to_toml()?)?;
    Ok(())
}

fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Failure::Io(e.to_string()))
}

fn summary(m: &RunMetrics) -> String {
    format!(
        "{} ({}): stopping distance {:.3} m in {:.3} s, lock events {}",
        m.scenario, m.controller, m.stopping_distance_m, m.stop_time_s, m.lock_events
    )
}

fn simulate(common: &Common, controller: Option<ControllerKind>) -> CliResult<()> {
    let spec = with_controller(load(common.scenario.as_deref(), &common.overrides)?, controller);
    let out = execute(&spec, &common.out)?;
    println!("{}", summary(&out.metrics));
    Ok(())
}

/// Scalar metrics compared between runs, with how to read them.
fn headline(m: &RunMetrics) -> Vec<(&'static str, f64)> {
    let worst = |f: fn(&epb_abs::sim::SegmentMetrics) -> Option<f64>| m.worst(f).unwrap_or(f64::NAN);
    vec![
        ("stopping_distance_m", m.stopping_distance_m),
        ("stop_time_s", m.stop_time_s),
        ("lock_events", m.lock_events as f64),
        ("slip_err_max", worst(|s| s.slip_err.as_ref().map(|e| e.max))),
        ("slip_err_mean", worst(|s| s.slip_err.as_ref().map(|e| e.mean))),
        ("torque_err_max", worst(|s| s.torque_err.as_ref().map(|e| e.max))),
        ("slip_excursion_max", m.segments.iter().map(|s| s.slip_excursion).fold(0.0, f64::max)),
    ]
}

fn compare(common: &Common) -> CliResult<()> {
    let base = load(common.scenario.as_deref(), &common.overrides)?;
    let runs: Vec<(ControllerKind, ScenarioSpec<f64>)> = [ControllerKind::Smc, ControllerKind::Pid]
        .into_iter()
        .map(|c| (c, with_controller(base.clone(), Some(c))))
        .collect();
    let outs = runs
        .par_iter()
        .map(|(c, spec)| execute(spec, &common.out.join(c.to_string())))
        .collect::<CliResult<Vec<_>>>()?;
    let (smc, pid) = (&outs[0], &outs[1]);

    let mut text = String::new();
    let mut json = serde_json::Map::new();
    for ((key, a), (_, b)) in headline(&smc.metrics).into_iter().zip(headline(&pid.metrics)) {
        text += &format!("{key}.smc = {a}\n{key}.pid = {b}\n{key}.delta = {}\n", b - a);
        json.insert(key.into(), serde_json::json!({ "smc": a, "pid": b, "delta": b - a }));
    }
    fs::write(common.out.join("deltas.txt"), text)?;
    let json = serde_json::to_string_pretty(&json).map_err(|e| Failure::Io(e.to_string()))?;
    fs::write(common.out.join("deltas.json"), json + "\n")?;

    // row-by-row differences while both runs are active, PID minus SMC
    let mut rows = String::from("t,v_x,x,slip_r,t_cmd,t_act\n");
    for (a, b) in smc.trace.iter().zip(&pid.trace) {
        let cells = [a.t, b.v_x - a.v_x, b.x - a.x, b.slip_r - a.slip_r, b.t_cmd - a.t_cmd, b.t_act - a.t_act];
        let line: Vec<String> = cells.iter().map(|v| epb_abs::sim::format_sig9(*v)).collect();
        rows += &line.join(",");
        rows.push('\n');
    }
    fs::write(common.out.join("trace_deltas.csv"), rows)?;
    println!("{}\n{}", summary(&smc.metrics), summary(&pid.metrics));
    Ok(())
}

fn report(criteria: &[Criterion], runs: &SuiteRuns) -> String {
    let mut s = String::from("# Acceptance report\n\n| # | criterion | result | measured |\n|---|---|---|---|\n");
    for c in criteria {
        let verdict = if c.pass { "pass" } else { "fail" };
        s += &format!("| {} | {} | {verdict} | {} |\n", c.id, c.name, c.detail);
    }
    s += "\n## Runs\n\n";
    for out in [&runs.single, &runs.high_to_low, &runs.low_to_high, &runs.schedule, &runs.pid_high_to_low] {
        s += &format!("- {}\n", summary(&out.metrics));
    }
    s
}

fn paper_suite(out: &Path, overrides: &[(String, String)], jobs: usize) -> CliResult<bool> {
    let specs = suite_jobs(overrides)?;
    let started = Instant::now();
    let outputs = pool(jobs)?.install(|| {
        specs
            .par_iter()
            .map(|s| Simulator::new(s.clone())?.run().map_err(|a| a.error))
            .collect::<Result<Vec<_>, Error>>()
    })?;
    let elapsed = started.elapsed();
    // the first five jobs are the reported runs; the rest feed the numerics row
    for (spec, run) in specs.iter().zip(&outputs).take(5) {
        let name = match spec.controller {
            ControllerKind::Smc => spec.name.clone(),
            ControllerKind::Pid => format!("{}_pid", spec.name),
        };
        write_run(&out.join(name), spec, run)?;
    }
    let runs = SuiteRuns::new(specs, outputs, elapsed)?;
    let criteria = evaluate(&runs)?;
    fs::write(out.join("report.md"), report(&criteria, &runs))?;
    let json = serde_json::to_string_pretty(&criteria).map_err(|e| Failure::Io(e.to_string()))?;
    fs::write(out.join("report.json"), json + "\n")?;
    for c in &criteria {
        println!("criterion {:>2} {}: {}: {}", c.id, c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail);
    }
    Ok(criteria.iter().all(|c| c.pass))
}

fn sweep(
    common: &Common,
    controller: Option<ControllerKind>,
    param: &str,
    values: &[String],
    jobs: usize,
) -> CliResult<()> {
    let specs = values
        .iter()
        .map(|v| {
            let mut o = common.overrides.clone();
            o.push((param.to_string(), v.clone()));
            load(common.scenario.as_deref(), &o).map(|s| with_controller(s, controller))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let outs = pool(jobs)?.install(|| {
        specs
            .par_iter()
            .zip(values)
            .map(|(spec, v)| execute(spec, &common.out.join(format!("{param}={v}"))))
            .collect::<Vec<_>>()
    });
    let mut table = String::from("value,status");
    for (key, _) in headline(&RunMetrics::default()) {
        table += &format!(",{key}");
    }
    table.push('\n');
    let mut numerical = None;
    for (v, out) in values.iter().zip(outs) {
        match out {
            Ok(out) => {
                let cells: Vec<String> = headline(&out.metrics).iter().map(|(_, x)| x.to_string()).collect();
                table += &format!("{v},ok,{}\n", cells.join(","));
                println!("{param}={v}: {}", summary(&out.metrics));
            }
            Err(Failure::Numerical(msg)) => {
                table += &format!("{v},aborted{}\n", ",".repeat(7));
                eprintln!("{param}={v}: {msg}");
                numerical = Some(msg);
            }
            Err(other) => return Err(other),
        }
    }
    fs::write(common.out.join("sweep.csv"), table)?;
    numerical.map_or(Ok(()), |msg| Err(Failure::Numerical(msg)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common, controller } => simulate(common, *controller),
        Command::Compare { common } => compare(common),
        Command::PaperSuite { out, overrides, jobs } => paper_suite(out, overrides, *jobs).map(|_| ()),
        Command::Sweep { common, controller, param, values, jobs } => sweep(common, *controller, param, values, *jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Validation(msg) | Failure::Numerical(msg) | Failure::Io(msg)) = &f;
            eprintln!("epb-abs: {msg}");
            ExitCode::from(f.code())
        }
    }
}
