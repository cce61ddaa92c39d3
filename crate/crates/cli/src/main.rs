use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qme_core::runner::{self, RunOptions, RunRecord, SCENARIOS};
use qme_core::Result;

/// Run relaxation scenarios for spin-1/2 chains by exact diagonalization.
#[derive(Parser)]
#[command(name = "qme", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios.
    List,
    /// Print the TOML of a built-in scenario or config file, overrides applied.
    Config {
        source: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Run one scenario.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat a scenario over values of one numeric key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted key path, e.g. `model.j_h` or `states.*.dt`.
        #[arg(long)]
        axis: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    /// Built-in scenario id or path to a TOML config.
    source: String,
    #[arg(long)]
    outdir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Replaces `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key, e.g. `--set model.n_sites=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn table(&self) -> Result<toml::Table> {
        let mut sets = self.sets.clone();
        if let Some(seed) = self.seed {
            sets.push(format!("master_seed={seed}"));
        }
        runner::load_table(&self.source, &sets)
    }

    fn options(&self) -> RunOptions {
        RunOptions { outdir: self.outdir.clone(), threads: self.threads, dry: false }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::List => {
            let width = SCENARIOS.iter().map(|s| s.id.len()).max().unwrap_or(0);
            for s in SCENARIOS {
                let cfg = s.config();
                println!("{:width$}  {}", s.id, cfg.description);
                if let Some(sw) = &cfg.sweep {
                    let vals: Vec<String> = sw.values.iter().map(|v| v.to_string()).collect();
                    println!("{:width$}  sweep: {} over {}", "", sw.axis, vals.join(", "));
                }
            }
        }
        Command::Config { source, sets } => {
            let cfg = runner::load_config(&source, &sets)?;
            print!("{}", cfg.to_toml());
        }
        Command::Run { common } => {
            let table = common.table()?;
            let cfg = runner::config::from_table(table)?;
            let rec = runner::run(&cfg, &common.options())?;
            report(&rec);
        }
        Command::Sweep { common, axis, values } => {
            let table = common.table()?;
            let rec = runner::sweep(&table, axis.as_deref(), values.as_deref(), &common.options())?;
            for (v, r) in rec.values.iter().zip(&rec.runs) {
                println!("{} = {v}", rec.axis);
                report(r);
            }
            if let Some(p) = rec.summary_path {
                println!("sweep summary: {}", p.display());
            }
        }
    }
    Ok(())
}

fn report(rec: &RunRecord) {
    println!("{}  dim {}  {} states  {:.1}s", rec.config.scenario, rec.dim, rec.states.len(), rec.wall_clock_seconds);
    if !rec.states.is_empty() {
        println!("  {:<16} {:>10} {:>10} {:>10} {:>10}", "state", "e/N", "IPR", "delta0", "beta");
        for s in &rec.states {
            println!(
                "  {:<16} {:>10.4} {:>10.3e} {:>10.4} {:>10.4}",
                s.label, s.energy_density.mean, s.ipr.mean, s.delta0.mean, s.beta.mean
            );
        }
    }
    for inv in &rec.inversions {
        println!("  inversion ({}): {} overtakes {} at {:.3}", inv.diagnostic, inv.farther, inv.closer, inv.time);
    }
    if let Some(g) = &rec.grid {
        println!(
            "  grid of {}: spearman(ln IPR, delta0) = {:.3}, spearman(variance, delta0) = {:.3}",
            g.points.len(),
            g.spearman_log_ipr_delta0,
            g.spearman_variance_delta0
        );
    }
    if let Some(dir) = &rec.output_dir {
        println!("  artifacts: {}", dir.display());
    }
}
