//! Drives the batch commands from a TOML file, as the `descent` binary does.
//! Usage: `cargo run --example run_config -- configs/lapse_manufactured.toml`.
use descent::config::RunConfig;
use descent::harness::{cmd_compare_oracle, cmd_represent, exit_code};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/lapse_manufactured.toml".into());
    let mut cfg = RunConfig::load(path.as_ref())?;
    cfg.output.dir = std::env::temp_dir().join("descent-run-config");
    for (name, r) in [("represent", cmd_represent(&cfg)), ("compare-oracle", cmd_compare_oracle(&cfg))] {
        println!("{name}: exit {}", exit_code(&r));
        if let Ok(o) = r {
            for c in o.checks {
                println!("  {:28} {:.3e} <= {:.1e} {}", c.name, c.value, c.tol, if c.pass { "ok" } else { "FAIL" });
            }
        }
    }
    Ok(())
}
