use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use critdrift::config::RunConfig;
use critdrift::report::ExperimentReport;
use critdrift::spec::{parse_domain, parse_field};
use critdrift::{run, table};
use critdrift_core::Grid;

#[derive(Parser)]
#[command(name = "critdrift", version, about = "Discrete experiments on elliptic equations with critical drifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lorentz and small-scale norms of a sampled field.
    Norm {
        #[command(flatten)]
        common: Common,
        /// Small-scale radius (repeatable).
        #[arg(long = "r")]
        radii: Vec<f64>,
    },
    /// Sample fields, print summary norms and optionally write a field table.
    Field {
        #[command(flatten)]
        common: Common,
        /// Write the first field as `x,y,z,value...` CSV.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Solve the primal or dual problem.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: Option<String>,
        /// Right-hand side field spec; vector specs are read as `div G`.
        #[arg(long)]
        rhs: Option<String>,
        /// Estimate the smallest energy-normalized singular value.
        #[arg(long)]
        sigma: bool,
    },
    /// Run a named lab experiment.
    Lab {
        experiment: String,
        #[command(flatten)]
        common: Common,
    },
    /// Re-read a JSON report, print its verdict summary and re-emit its files.
    Report {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    domain: Option<String>,
    /// Field spec (repeatable).
    #[arg(long = "field")]
    fields: Vec<String>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self, experiment: &str) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::default(),
        };
        if self.config.is_none() || !experiment.is_empty() {
            c.experiment = experiment.into();
        }
        if let Some(d) = &self.domain {
            c.domain = d.clone();
        }
        if !self.fields.is_empty() {
            c.fields = self.fields.clone();
        }
        if let Some(h) = self.h {
            c.grid.h = h;
            c.grid.refinements.clear();
        }
        if let Some(p) = self.p {
            c.exponents.p = p;
        }
        if let Some(q) = self.q {
            c.exponents.q = Some(q);
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        Ok(c)
    }
}

fn finish(report: &ExperimentReport) -> anyhow::Result<ExitCode> {
    let dir = &report.config.output_dir;
    report.write(dir)?;
    report.emit_plotdata(dir)?;
    println!("{}", serde_json::to_string_pretty(&report.summary())?);
    Ok(if report.has_counterexample() { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Norm { common, radii } => {
            let mut c = common.config("norm")?;
            if !radii.is_empty() {
                c.lab.radii = radii;
            }
            finish(&run(&c)?)
        }
        Command::Field { common, table: path } => {
            let c = common.config("field")?;
            if let Some(path) = path {
                let g = std::sync::Arc::new(Grid::build(parse_domain(&c.domain)?, c.grid.h)?);
                let spec = parse_field(c.fields.first().context("--field is required with --table")?)?;
                if spec.is_vector() {
                    table::write_vector(&path, &spec.drift(&g)?.field)?;
                } else {
                    table::write_scalar(&path, &spec.scalar(&g)?)?;
                }
            }
            finish(&run(&c)?)
        }
        Command::Solve { common, kind, rhs, sigma } => {
            let mut c = common.config("solve")?;
            if let Some(k) = kind {
                c.solver.kind = k;
            }
            if let Some(r) = rhs {
                c.solver.rhs = r;
            }
            c.solver.sigma |= sigma;
            finish(&run(&c)?)
        }
        Command::Lab { experiment, common } => finish(&run(&common.config(&experiment)?)?),
        Command::Report { path, out } => {
            let mut report = ExperimentReport::read(&path)?;
            if let Some(o) = out {
                report.config.output_dir = o;
            }
            finish(&report)
        }
    }
}
