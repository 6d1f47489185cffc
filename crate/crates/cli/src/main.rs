use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rand::SeedableRng;

use sbartds::config::RunConfig;
use sbartds::data::write_csv;
use sbartds::diagnostics::{summarize_trace, Trace};
use sbartds::output::{self, Manifest};
use sbartds::simulation::{gen_mixture, MixtureDesign};
use sbartds::{pipeline, ChainRng};

#[derive(Parser)]
#[command(name = "sbartds", version, about = "Conditional density estimation with soft-tree tilted base models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the commented default configuration.
    Init {
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Generate data from the synthetic mixture design.
    Simulate {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sampler and write all outputs.
    Fit {
        /// A TOML configuration, or a manifest.json from an earlier run.
        #[arg(long)]
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print posterior summaries of a finished fit.
    Summarize {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Print convergence diagnostics of a finished fit.
    Diagnose {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<sbartds::Error>()) {
        Some(err) if err.is_numerical() => 3,
        Some(_) => 2,
        None => 1,
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Init { out, force } => init(out.as_deref(), force),
        Command::Simulate { n, p, seed, out } => simulate(n, p, seed, &out),
        Command::Fit { config, out, seed } => fit(&config, out, seed),
        Command::Summarize { dir } => summarize(&dir),
        Command::Diagnose { dir } => diagnose(&dir),
    }
}

fn init(out: Option<&Path>, force: bool) -> anyhow::Result<()> {
    let text = RunConfig::default_toml();
    match out {
        None => print!("{text}"),
        Some(path) => {
            if path.exists() && !force {
                bail!("{} exists; pass --force to overwrite", path.display());
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn simulate(n: usize, p: usize, seed: u64, out: &Path) -> anyhow::Result<()> {
    let design = MixtureDesign { n, p };
    design.validate().map_err(sbartds::Error::Config)?;
    let mut rng = ChainRng::seed_from_u64(seed);
    let data = gen_mixture(&mut rng, &design);
    write_csv(out, &data.predictor_names(), "y", &data.x, &data.y)?;
    log::info!("wrote {n} rows with {p} predictors to {}", out.display());
    Ok(())
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        let manifest = Manifest::load(path).with_context(|| format!("reading manifest {}", path.display()))?;
        Ok(manifest.config)
    } else {
        Ok(RunConfig::load(path)?)
    }
}

fn fit(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    if let Some(s) = seed {
        cfg.mcmc.seed = s;
    }
    let report = pipeline::fit(&cfg)?;
    log::info!(
        "{} draws from {} chain(s) written to {}",
        report.manifest.n_draws,
        report.manifest.chains,
        report.out_dir.display()
    );
    Ok(())
}

fn print_csv(path: &Path) -> anyhow::Result<()> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let rows: Vec<Vec<String>> = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().enumerate().map(|(c, v)| fmt_cell(c, v)).collect()))
        .collect::<Result<_, _>>()?;
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect::<Vec<_>>().join("  ")
    };
    println!("{}", line(&header));
    for r in &rows {
        println!("{}", line(r));
    }
    Ok(())
}

/// The first column is a label; numeric cells elsewhere get 4 decimals.
fn fmt_cell(col: usize, s: &str) -> String {
    match s.parse::<f64>() {
        Ok(v) if col > 0 => format!("{v:.4}"),
        _ => s.to_string(),
    }
}

fn summarize(dir: &Path) -> anyhow::Result<()> {
    let m = Manifest::load(&dir.join(output::MANIFEST))?;
    println!("{} {}: {} observations, {} draws, seed {}", m.package, m.version, m.n_obs, m.n_draws, m.seed);
    println!("\nsplitting proportions");
    print_csv(&dir.join(output::SPLIT_PROPORTIONS))?;
    println!("\nbase model coefficients (standardized scale)");
    print_csv(&dir.join(output::BASE_COEFFICIENTS))?;
    println!("\npredictive mean by query point");
    print_csv(&dir.join(output::PREDICTIVE_MEAN))?;
    Ok(())
}

fn diagnose(dir: &Path) -> anyhow::Result<()> {
    let m = Manifest::load(&dir.join(output::MANIFEST))?;
    for (c, (t, b)) in m.tree_acceptance.iter().zip(&m.basis_acceptance).enumerate() {
        println!("chain {c}: tree acceptance {t:.3}, basis acceptance {b:.3}");
    }
    let trace = Trace::read(dir)?;
    println!("\n{:>16}  {:>12}  {:>10}  {:>7}", "parameter", "mean", "mcse", "rhat");
    for d in summarize_trace(&trace) {
        println!("{:>16}  {:>12.4}  {:>10.4}  {:>7.3}", d.name, d.mean, d.mcse, d.rhat);
    }
    Ok(())
}
