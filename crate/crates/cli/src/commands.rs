//! Command-line front-end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use graph_approx::bounds::{BoundCheckReport, JacksonConstants};
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig, Scale};
use crate::experiments::{decay_fit, run_decay, run_skip, run_surgery, CurveOutcome};
use crate::output::OutputDir;
use crate::suites::{run_all, NodeRange, SuitePlan};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "graph-approx",
    version,
    about = "Graph approximation bounds and GCN energy experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every inequality on random instances; exits 1 on a violation.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Random instances per suite.
        #[arg(long)]
        instances: Option<usize>,
        /// Scale a named constant, e.g. `Cr=0.5` or `Cr'=0.5` (testing hook).
        #[arg(long, value_name = "NAME=FACTOR")]
        corrupt_constant: Vec<String>,
    },
    /// High-frequency energy decay under the classical filters.
    Decay {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sizes: SizeArgs,
    },
    /// Energy under filters whose top eigenvalue is replaced by `a`.
    Surgery {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sizes: SizeArgs,
    },
    /// Skip-connection variants: depth table and direction histograms.
    Skip {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sizes: SizeArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration file; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Also write SVG figures.
    #[arg(long)]
    pub svg: bool,
}

/// Overrides for the experiment sizes.
#[derive(Debug, Clone, Default, Args)]
pub struct SizeArgs {
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub weight_frobenius: Option<f64>,
    /// Use the full experiment sizes instead of the desk preset.
    #[arg(long)]
    pub paper_scale: bool,
    /// Edge-list or dense CSV graph used for every trial.
    #[arg(long)]
    pub graph: Option<PathBuf>,
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Verify { common, .. }
            | Command::Decay { common, .. }
            | Command::Surgery { common, .. }
            | Command::Skip { common, .. } => common,
        }
    }

    fn experiment(&self) -> Experiment {
        match self {
            Command::Verify { .. } => Experiment::Verify,
            Command::Decay { .. } => Experiment::Decay,
            Command::Surgery { .. } => Experiment::Surgery,
            Command::Skip { .. } => Experiment::Skip,
        }
    }
}

/// Parses `Cr=0.5` style overrides into the verify settings.
fn apply_corruption(config: &mut ExperimentConfig, spec: &str) -> Result<(), CliError> {
    let (name, value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("expected NAME=FACTOR, got {spec:?}")))?;
    let factor: f64 = value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad factor in {spec:?}")))?;
    if !(factor.is_finite() && factor > 0.0) {
        return Err(CliError::Config(format!(
            "factor must be positive in {spec:?}"
        )));
    }
    match name.trim() {
        "Cr" => config.verify.cr_scale = factor,
        "Cr'" | "Crp" | "Cr_prime" => config.verify.cr_prime_scale = factor,
        other => return Err(CliError::Config(format!("unknown constant {other:?}"))),
    }
    Ok(())
}

/// Resolves the configuration from the file and the command-line overrides.
pub fn resolve_config(command: &Command) -> Result<ExperimentConfig, CliError> {
    let common = command.common();
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.experiment = command.experiment();
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    match command {
        Command::Verify {
            instances,
            corrupt_constant,
            ..
        } => {
            if let Some(n) = instances {
                config.verify.instances = *n;
            }
            for spec in corrupt_constant {
                apply_corruption(&mut config, spec)?;
            }
        }
        Command::Decay { sizes, .. }
        | Command::Surgery { sizes, .. }
        | Command::Skip { sizes, .. } => {
            if sizes.paper_scale {
                config.scale = Scale::Paper;
            }
            if sizes.nodes.is_some() {
                config.graph.num_nodes = sizes.nodes;
            }
            if sizes.trials.is_some() {
                config.gcn.trials = sizes.trials;
            }
            if let Some(depth) = sizes.depth {
                config.gcn.depth = depth;
                config.gcn.table_depths.retain(|&k| k <= depth);
            }
            if let Some(w) = sizes.weight_frobenius {
                config.gcn.weight_frobenius = w;
            }
            if sizes.graph.is_some() {
                config.graph.file = sizes.graph.clone();
            }
        }
    }
    config.validate()?;
    Ok(config)
}

fn summary_entry(report: &BoundCheckReport) -> serde_json::Value {
    json!({
        "name": report.name,
        "instances": report.instances,
        "applicable": report.applicable,
        "worst_margin": report.worst_margin,
        "violated": report.violated,
    })
}

fn print_report(report: &BoundCheckReport) {
    let status = if !report.applicable {
        "n/a "
    } else if report.violated {
        "FAIL"
    } else {
        "ok  "
    };
    let margin = report
        .worst_margin
        .map_or("-".to_string(), |m| format!("{m:.3e}"));
    println!(
        "{status} {:<30} instances={:<6} worst_margin={margin}",
        report.name, report.instances
    );
}

fn verify(config: &ExperimentConfig, out: &mut OutputDir) -> Result<bool, CliError> {
    let v = &config.verify;
    let plan = SuitePlan {
        instances: v.instances,
        nodes: NodeRange::new(v.min_nodes, v.max_nodes),
        max_r: v.max_r,
        constants: JacksonConstants {
            cr_prime_scale: v.cr_prime_scale,
            cr_scale: v.cr_scale,
        },
        seed: config.seed,
    };
    let reports = run_all(&plan)?;
    let mut violated = false;
    for report in &reports {
        out.report(report)?;
        print_report(report);
        violated |= report.violated;
    }
    let summary = json!({
        "seed": config.seed,
        "violated": violated,
        "reports": reports.iter().map(summary_entry).collect::<Vec<_>>(),
    });
    out.raw(
        "summary.json",
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(violated)
}

fn print_curves(outcome: &CurveOutcome) {
    for curve in &outcome.curves {
        let (slope, _, r2) = decay_fit(curve);
        let last = curve.rows.last().map_or(f64::NAN, |r| r.mean_ln_eh);
        println!(
            "{:<8} slope={slope:.4} r2={r2:.4} final_mean_ln_Eh={last:.3}",
            curve.label
        );
    }
    if let Some(bound) = &outcome.bound {
        print_report(bound);
    }
}

fn execute(command: &Command) -> Result<bool, CliError> {
    let config = resolve_config(command)?;
    let common = command.common();
    let mut out = OutputDir::create(&common.out_dir)?;
    let violated = match command {
        Command::Verify { .. } => verify(&config, &mut out)?,
        Command::Decay { .. } => {
            let outcome = run_decay(&config, &mut out, common.svg)?;
            print_curves(&outcome);
            outcome.violated()
        }
        Command::Surgery { .. } => {
            let outcome = run_surgery(&config, &mut out, common.svg)?;
            print_curves(&outcome);
            outcome.violated()
        }
        Command::Skip { .. } => {
            let outcome = run_skip(&config, &mut out, common.svg)?;
            for row in &outcome.rows {
                println!(
                    "{:<8} K={:<3} median_ln_Eh={:.3}",
                    row.variant.name(),
                    row.depth,
                    row.median_ln_eh
                );
            }
            for (variant, hist) in &outcome.histograms {
                println!(
                    "{:<8} direction-1 share={:.4}",
                    variant.name(),
                    hist.first().copied().unwrap_or(f64::NAN)
                );
            }
            false
        }
    };
    eprintln!(
        "wrote {} files under {}",
        out.written().len(),
        common.out_dir.display()
    );
    Ok(violated)
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let jobs = cli.command.common().jobs;
    if jobs == 0 {
        eprintln!("error: configuration error: --jobs must be positive");
        return 2;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(&cli.command)) {
        Ok(false) => 0,
        Ok(true) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(args).unwrap().command
    }

    #[test]
    fn overrides_reach_the_config() {
        let cmd = parse(&[
            "graph-approx",
            "verify",
            "--seed",
            "9",
            "--instances",
            "3",
            "--corrupt-constant",
            "Cr=0.5",
        ]);
        let config = resolve_config(&cmd).unwrap();
        assert_eq!(
            (config.seed, config.verify.instances, config.verify.cr_scale),
            (9, 3, 0.5)
        );
        let cmd = parse(&["graph-approx", "skip", "--depth", "10"]);
        let config = resolve_config(&cmd).unwrap();
        assert_eq!(config.gcn.table_depths, vec![1, 5, 10]);
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for args in [
            &["graph-approx", "verify", "--corrupt-constant", "Cx=0.5"][..],
            &["graph-approx", "verify", "--corrupt-constant", "Cr=-1"][..],
            &["graph-approx", "decay", "--trials", "0"][..],
        ] {
            assert_eq!(
                resolve_config(&parse(args)).unwrap_err().exit_code(),
                2,
                "{args:?}"
            );
        }
    }
}
