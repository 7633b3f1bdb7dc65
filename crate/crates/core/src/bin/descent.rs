use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use descent::config::RunConfig;
use descent::harness::{self, CacheAction, Outcome};
use descent::Result;

#[derive(Parser)]
#[command(name = "descent", version, about = "Light-cone geometry and representation checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; overrides `threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for random point batches; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    Identities,
    Represent,
    Injectivity,
    CompareOracle,
    Cache {
        #[arg(value_enum, default_value = "build")]
        action: Action,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Action {
    Build,
    Clear,
}

fn run(cli: &Cli) -> Result<Outcome> {
    let path = cli.config.as_ref().ok_or_else(|| descent::DescentError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    harness::init_threads(cfg.threads);
    match cli.cmd {
        Cmd::Identities => harness::cmd_identities(&cfg),
        Cmd::Represent => harness::cmd_represent(&cfg),
        Cmd::Injectivity => harness::cmd_injectivity(&cfg),
        Cmd::CompareOracle => harness::cmd_compare_oracle(&cfg),
        Cmd::Cache { action } => harness::cmd_cache(
            &cfg,
            match action {
                Action::Build => CacheAction::Build,
                Action::Clear => CacheAction::Clear,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = run(&cli);
    match &r {
        Ok(o) => {
            for c in &o.checks {
                println!("{} {} = {:.3e} (tol {:.1e})", if c.pass { "ok  " } else { "FAIL" }, c.name, c.value, c.tol);
            }
            let verb = if matches!(cli.cmd, Cmd::Cache { action: Action::Clear }) { "removed" } else { "wrote" };
            for f in &o.files {
                println!("{verb} {}", f.display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(harness::exit_code(&r) as u8)
}
