use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfplate::cli::{
    compare_quadratures, parse_pattern, parse_problem, parse_quadrature, run, ConfigOverrides,
    FileConfig, RunConfig,
};
use mfplate::error::{Error, Result};

#[derive(Parser)]
#[command(name = "mfplate", version, about = "Meshfree Reissner-Mindlin plate benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark over a thickness/refinement grid.
    Run(RunArgs),
    /// Run the qc3/st6/st3 integration schemes on identical meshes.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Benchmark: patch | circle | square | parallelogram
    #[arg(long)]
    problem: Option<String>,
    /// Comma-separated normalized thicknesses, e.g. 0.1,0.01,0.001,0.0001
    #[arg(long, value_delimiter = ',')]
    t_over_l: Option<Vec<f64>>,
    /// Basis support parameter
    #[arg(long)]
    gamma: Option<f64>,
    /// Integration scheme: qc3 | st3 | st6
    #[arg(long)]
    quadrature: Option<String>,
    /// Number of refinement levels (1..=levels)
    #[arg(long)]
    levels: Option<usize>,
    /// Comma-separated mesh file stems (overrides generated meshes)
    #[arg(long, value_delimiter = ',')]
    mesh: Option<Vec<PathBuf>>,
    /// Mesh family: structured | unstructured
    #[arg(long)]
    mesh_pattern: Option<String>,
    /// Parallelogram skew angle in degrees
    #[arg(long)]
    skew_deg: Option<f64>,
    /// Seed for unstructured mesh jitter
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// VTK output path (directory, or file for a single run)
    #[arg(long)]
    vtk: Option<PathBuf>,
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

fn resolve(args: RunArgs) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut set = ConfigOverrides::default();
    if let Some(p) = &args.problem {
        config.problem = parse_problem(p)?;
        set.problem = true;
    }
    if let Some(t) = &args.t_over_l {
        config.t_over_l = t.clone();
        set.t_over_l = true;
    }
    if let Some(g) = args.gamma {
        config.gamma = g;
        set.gamma = true;
    }
    if let Some(q) = &args.quadrature {
        config.quadrature = parse_quadrature(q)?;
        set.quadrature = true;
    }
    if let Some(l) = args.levels {
        config.levels = l;
        set.levels = true;
    }
    if let Some(m) = &args.mesh {
        config.mesh_files = m.clone();
        set.mesh_files = true;
    }
    if let Some(p) = &args.mesh_pattern {
        config.pattern = parse_pattern(p)?;
        set.pattern = true;
    }
    if let Some(s) = args.skew_deg {
        config.skew_deg = s;
        set.skew_deg = true;
    }
    if let Some(s) = args.seed {
        config.seed = s;
        set.seed = true;
    }
    if let Some(o) = &args.out {
        config.out = Some(o.clone());
        set.out = true;
    }
    if let Some(v) = &args.vtk {
        config.vtk = Some(v.clone());
        set.vtk = true;
    }
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        let file: FileConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config = config.merge_file(&file, &set)?;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => resolve(args).and_then(|c| run(&c)),
        Command::Compare(args) => resolve(args).and_then(|c| compare_quadratures(&c)),
    };
    match outcome {
        Ok(artifacts) => {
            print!("{}", artifacts.csv);
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
