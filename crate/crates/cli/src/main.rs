use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kpzlab_core::harness::{
    field_dump, run_experiment, summarize_report, write_report, write_table, ExperimentConfig, ExperimentKind,
    ExperimentReport, FieldKind, NoiseSection, ReportFormat,
};
use kpzlab_core::noise::{ModelParams, NoiseSpec};
use kpzlab_core::LabError;

#[derive(Parser)]
#[command(name = "kpzlab", version, about = "Half-space KPZ growth and directed polymer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV and JSON files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of the summary printed to stdout.
    #[arg(long, default_value = "text", value_parser = ["text", "json", "csv"])]
    format: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Growth rule: quadratic or polymer.
    #[arg(long)]
    psi: Option<String>,
    /// Noise family: rademacher, gaussian, uniform or binomial.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    noise_parameter: Option<f64>,
    #[arg(long = "N")]
    n: Option<u64>,
    #[arg(long = "A", allow_hyphen_values = true)]
    boundary: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Lattice horizon of the dump.
    #[arg(long = "T")]
    horizon: Option<u64>,
    /// CSV path of the field; defaults to `<out>/field.csv` or stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel power sums and V, or the local-time bound chain.
    Kernels(Common),
    /// One interface trajectory as (x, t, f_raw, f_tilted).
    Simulate(SimulateArgs),
    /// Bound scans of the partition function.
    Polymer(Common),
    /// Mean of the renormalization term against V t.
    Renorm(Common),
    /// Distributional comparison of a growth model with the polymer.
    Compare(Common),
    /// Euler samples of the stochastic heat equation.
    She(Common),
}

enum Failure {
    Usage(String),
    Run(LabError),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Config(_) | LabError::Io { .. } => Failure::Usage(e.to_string()),
            other => Failure::Run(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("kpzlab: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("kpzlab: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn expect_kind(cfg: &ExperimentConfig, sub: &str, allowed: &[ExperimentKind]) -> Result<(), Failure> {
    if allowed.contains(&cfg.kind) {
        Ok(())
    } else {
        let names: Vec<_> = allowed.iter().map(|k| k.name()).collect();
        Err(Failure::Usage(format!(
            "`{sub}` runs {} experiments, but the config has kind = \"{}\"",
            names.join(" or "),
            cfg.kind.name()
        )))
    }
}

fn run(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Kernels(c) => {
            let cfg = load(&c)?;
            expect_kind(&cfg, "kernels", &[ExperimentKind::Kernels, ExperimentKind::LocalTimeScan])?;
            finish(&c, &cfg, run_experiment(&cfg)?)
        }
        Command::Polymer(c) => {
            let cfg = load(&c)?;
            expect_kind(&cfg, "polymer", &[ExperimentKind::BoundScan])?;
            let report = run_experiment(&cfg)?;
            if let Some(dir) = &cfg.output_dir {
                std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
                write_table(&field_dump(&cfg, FieldKind::Polymer)?, &dir.join("polymer_field.csv"))?;
            }
            finish(&c, &cfg, report)
        }
        Command::Renorm(c) => {
            let cfg = load(&c)?;
            expect_kind(&cfg, "renorm", &[ExperimentKind::RenormMean])?;
            let report = run_experiment(&cfg)?;
            if let Some(dir) = &cfg.output_dir {
                std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
                write_table(&field_dump(&cfg, FieldKind::Renorm)?, &dir.join("delta.csv"))?;
                write_v_record(&report, &dir.join("renorm.json"))?;
            }
            finish(&c, &cfg, report)
        }
        Command::Compare(c) => {
            let cfg = load(&c)?;
            expect_kind(&cfg, "compare", &[ExperimentKind::Invariance])?;
            finish(&c, &cfg, run_experiment(&cfg)?)
        }
        Command::She(c) => {
            let cfg = load(&c)?;
            expect_kind(&cfg, "she", &[ExperimentKind::SheCompare])?;
            finish(&c, &cfg, run_experiment(&cfg)?)
        }
        Command::Simulate(s) => simulate(s),
    }
}

fn simulate(s: SimulateArgs) -> Result<bool, Failure> {
    let mut cfg = load(&s.common)?;
    if let Some(psi) = s.psi {
        cfg.psi = psi;
    }
    if s.noise.is_some() || s.noise_parameter.is_some() {
        let family = s.noise.unwrap_or_else(|| cfg.noise.family.clone());
        let spec = NoiseSpec::from_name(&family, s.noise_parameter.or(cfg.noise.parameter))?;
        cfg.noise = NoiseSection::new(spec, cfg.noise.seed);
    }
    if s.n.is_some() || s.beta.is_some() || s.boundary.is_some() {
        let m = cfg.model;
        cfg.model = ModelParams::new(
            s.n.unwrap_or(m.n()),
            s.beta.unwrap_or(m.beta()),
            s.boundary.unwrap_or(m.boundary()),
        )
        .and_then(|p| p.with_window(m.a(), m.b()))?;
    }
    if let Some(t) = s.horizon {
        cfg.field.t_max = t;
        cfg.field.x_max = cfg.field.x_max.max(cfg.model.x_window());
    }
    // Points of other experiment kinds may fall outside a changed window.
    cfg.points.retain(|p| p.x <= cfg.model.a() && p.t <= cfg.model.b());
    cfg.validate()?;
    let table = field_dump(&cfg, FieldKind::Interface)?;
    let target = s.csv.or_else(|| cfg.output_dir.as_ref().map(|d| d.join("field.csv")));
    match target {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Failure::Usage(format!("{}: {e}", parent.display())))?;
            }
            write_table(&table, &path)?;
            eprintln!("wrote {} rows to {}", table.rows.len(), path.display());
        }
        None => print!("{}", table.to_csv()?),
    }
    Ok(true)
}

fn write_v_record(report: &ExperimentReport, path: &Path) -> Result<(), Failure> {
    let Some(t) = report.table("v_report") else {
        return Ok(());
    };
    let col = |name: &str| t.column(name).and_then(|c| c.first().copied());
    let record = serde_json::json!({
        "c": col("c"),
        "V": col("V"),
        "truncation": col("truncation").map(|v| v as u64),
        "tail_bound": col("tail_bound"),
    });
    let text = serde_json::to_string_pretty(&record).expect("plain JSON value");
    std::fs::write(path, text + "\n").map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn finish(c: &Common, cfg: &ExperimentConfig, report: ExperimentReport) -> Result<bool, Failure> {
    let format: ReportFormat = c.format.parse()?;
    print!("{}", summarize_report(&report, format)?);
    if let Some(dir) = &cfg.output_dir {
        write_report(&report, dir)?;
    }
    Ok(report.passed())
}
