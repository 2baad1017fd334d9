//! `udc`: run single simulations or scenario matrices and export CSV tables.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use log::{error, info};

use udc::config::{load_config, ConfigFile, SimConfig};
use udc::forwarding::{ProtocolKind, SuppressionMode};
use udc::metrics::sensing_accuracy;
use udc::scenario::{
    run_matrix, write_drop_table, write_series_csv, write_summary_csv, MatrixSpec, ProtocolChoice, RunSpec,
    SummaryRow,
};
use udc::SimReport;

#[derive(Debug, Parser)]
#[command(name = "udc", version, about = "Urban vehicular data-collection simulator")]
struct Args {
    /// TOML configuration; a `[matrix]` table turns it into a scenario matrix.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Run the 4 density x 5 protocol x 3 seed replication matrix.
    #[arg(long)]
    replication: bool,

    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Nodes per km of road.
    #[arg(long, value_name = "F", allow_negative_numbers = true)]
    density: Option<f64>,

    /// `udc`, `slotted1`, or a UDC variant such as `udc-weak`.
    #[arg(long, value_name = "NAME")]
    protocol: Option<String>,

    /// basic, weak, moderate or strong.
    #[arg(long, value_name = "NAME")]
    suppression: Option<String>,

    #[arg(long, value_name = "PATH", default_value = "results")]
    out_dir: PathBuf,

    /// Concurrent runs; defaults to the number of CPUs.
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,

    /// Print the run plan and exit.
    #[arg(long)]
    dry_run: bool,

    /// Also record per-reception and mobility logs.
    #[arg(long)]
    trace: bool,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let plan = match build_plan(&args) {
        Ok(plan) => plan,
        Err(e) => {
            error!("{e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    if args.dry_run {
        for spec in &plan {
            println!("{}", spec.run_id);
        }
        println!("{} run(s) planned", plan.len());
        return ExitCode::SUCCESS;
    }

    match execute(&args, &plan) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            error!("{failed} of {} run(s) failed", plan.len());
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}

/// Loads the configuration, applies flag overrides and expands the matrix.
fn build_plan(args: &Args) -> anyhow::Result<Vec<RunSpec>> {
    let ConfigFile { mut base, matrix } = match &args.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => ConfigFile {
            base: SimConfig::default(),
            matrix: None,
        },
    };
    let mut matrix = if args.replication {
        Some(MatrixSpec::replication())
    } else {
        matrix
    };

    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    if let Some(d) = args.density {
        base.mobility.density = d;
    }
    if let Some(name) = &args.protocol {
        match name.parse::<ProtocolKind>() {
            Ok(kind) => base.protocol.kind = kind,
            Err(_) => name.parse::<ProtocolChoice>()?.apply(&mut base),
        }
    }
    if let Some(name) = &args.suppression {
        base.protocol.suppression = name.parse::<SuppressionMode>()?;
    }
    base.trace |= args.trace;

    if let Some(m) = &mut matrix {
        // A flag pins its axis to the single given value.
        if let Some(seed) = args.seed {
            m.seeds = vec![seed];
        }
        if let Some(d) = args.density {
            m.densities = vec![d];
        }
        if args.protocol.is_some() || args.suppression.is_some() {
            m.protocols = vec![base.protocol.label()];
        }
        m.validate()?;
    }
    base.validate()?;
    let plan = match matrix {
        Some(m) => m.plan(&base),
        None => vec![RunSpec::single(base)],
    };
    for spec in &plan {
        spec.config.validate().with_context(|| format!("run {}", spec.run_id))?;
    }
    Ok(plan)
}

/// Runs the plan and writes all outputs. Returns the number of failed runs.
fn execute(args: &Args, plan: &[RunSpec]) -> anyhow::Result<usize> {
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let parallel = args
        .parallel
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    info!("{} run(s) on {parallel} thread(s) into {}", plan.len(), args.out_dir.display());

    let outcomes = run_matrix(plan, parallel, |spec, report| {
        write_run(&args.out_dir.join(&spec.run_id), spec, report)?;
        info!(
            "{}: {} lineages, {} transmissions, {:.2}s",
            spec.run_id,
            report.lineages.len(),
            report.transmissions.len(),
            report.wall_clock.seconds
        );
        Ok(())
    });

    let mut rows: Vec<SummaryRow> = Vec::with_capacity(outcomes.len());
    let mut failed = 0;
    for o in outcomes {
        match o.result {
            Ok(row) => rows.push(row),
            Err(e) => {
                failed += 1;
                error!("{}: {e}", o.run_id);
            }
        }
    }

    let out = &args.out_dir;
    write_summary_csv(&rows, create(&out.join("summary.csv"))?)?;
    write_series_csv(&rows, |r| Some(r.sensing_mean), create(&out.join("sensing_by_density.csv"))?)?;
    write_series_csv(&rows, |r| r.efficiency, create(&out.join("efficiency_by_density.csv"))?)?;
    write_drop_table(&rows, create(&out.join("drop_reasons.csv"))?)?;
    Ok(failed)
}

fn write_run(dir: &Path, spec: &RunSpec, report: &SimReport) -> udc::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), spec.config.to_toml()?)?;
    report.write_json(create(&dir.join("report.json"))?)?;
    report.write_transmissions_csv(create(&dir.join("transmissions.csv"))?)?;
    sensing_accuracy(report).write_csv(create(&dir.join("sensing_accuracy.csv"))?)?;
    if report.trace.is_some() {
        report.write_mobility_csv(create(&dir.join("mobility.csv"))?)?;
    }
    Ok(())
}

fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new)
}
