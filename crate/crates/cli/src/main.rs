//! `poreuq` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use poreuq::geometry::PoreParams;
use poreuq::pipeline::{self, RunConfig, SolveCache};
use poreuq::{par, Error, Result};

#[derive(Parser)]
#[command(name = "poreuq", version, about = "Pore-scale UQ and sensitivity pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Hyper-range preset: narrow or physical.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Prior model: p0, p1 or p2.
    #[arg(long, global = true)]
    model: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw training samples (samples.csv).
    Sample,
    /// Solve the cell problem for one parameter set, or for every training sample.
    Solve {
        /// `R,theta,d,l` of a single pore.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        params: Option<Vec<f64>>,
    },
    /// Sample, solve and fit surrogates (surrogates/).
    Fit,
    /// QoI densities from fitted surrogates (densities/).
    Density,
    /// Sensitivity indices from fitted surrogates (mi.csv, trace.csv, sobol.csv, corr.csv).
    Gsa,
    /// Cramér tests against the reference model (cramer.csv).
    Compare,
    /// Every stage.
    Pipeline,
}

fn config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &c.out {
        cfg.out = v.clone();
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = &c.preset {
        cfg.preset = v.clone();
    }
    if let Some(v) = &c.model {
        cfg.model = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli.common)?;
    let dir = cfg.out.clone();
    std::fs::create_dir_all(&dir)?;
    let model = cfg.prior()?;
    par::with_jobs(cfg.jobs, || match cli.command {
        Command::Sample => pipeline::stage_sample(&cfg, &model, &dir).map(|_| ()),
        Command::Solve { params: Some(v) } => {
            if v.len() != 4 {
                return Err(poreuq::Error::InvalidArgument(format!(
                    "--params takes R,theta,d,l; got {} values",
                    v.len()
                )));
            }
            let p = PoreParams::new(v[0], v[1], v[2], v[3]);
            let e = cfg.solver_config().solve(&p)?;
            println!(
                "{}",
                serde_json::json!({"DL": e.dl, "DT": e.dt, "geff": e.geff, "porosity": e.porosity})
            );
            Ok(())
        }
        Command::Solve { params: None } => {
            let cache = SolveCache::new(cfg.cache_dir())?;
            let batch = pipeline::stage_sample(&cfg, &model, &dir)?;
            pipeline::stage_solve(&cfg, &batch, &cache, &dir).map(|_| ())
        }
        Command::Fit => {
            let cache = SolveCache::new(cfg.cache_dir())?;
            pipeline::train_model(&cfg, &model, &cache, &dir).map(|_| ())
        }
        Command::Density => {
            let s = pipeline::load_surrogates(&dir)?;
            pipeline::stage_density(&cfg, &pipeline::mi_samples(&cfg, &model, &s)?, &dir)
        }
        Command::Gsa => {
            let s = pipeline::load_surrogates(&dir)?;
            let samples = pipeline::mi_samples(&cfg, &model, &s)?;
            pipeline::stage_gsa(&cfg, &model, &s, &samples, &dir).map(|_| ())
        }
        Command::Compare => {
            let reference = cfg
                .reference_prior()?
                .ok_or_else(|| Error::Config("cramer.reference is none".into()))?;
            let own = pipeline::load_surrogates(&dir)?;
            let rdir = dir.join("reference");
            let theirs = match pipeline::load_surrogates(&rdir) {
                Ok(s) => s,
                Err(_) => {
                    let mut rcfg = cfg.clone();
                    rcfg.model = reference.kind.name().to_ascii_lowercase();
                    let cache = SolveCache::new(cfg.cache_dir())?;
                    pipeline::train_model(&rcfg, &reference, &cache, &rdir)?.0
                }
            };
            pipeline::stage_compare(&cfg, (&model, &own), (&reference, &theirs), &dir).map(|_| ())
        }
        Command::Pipeline => pipeline::run_pipeline(&cfg).map(|_| ()),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}
