//! `stablab`: runs configured stability scenarios and writes their artifacts.
//!
//! Exit status is 0 when every scenario assertion holds, 2 when one fails,
//! and 1 on configuration or runtime errors.

mod artifacts;
mod config;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stablab_core::mesh::{generate, DomainSpec};

use crate::artifacts::Artifacts;

#[derive(Parser)]
#[command(name = "stablab", version, about = "Finite-element stability laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a configuration file.
    Run {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Run only refinement level K (mesh size h/2^K).
        #[arg(long, value_name = "K")]
        mesh_level: Option<u32>,
    },
    /// Parse a configuration and print it with defaults filled in.
    Validate { config: PathBuf },
    /// Mesh a domain given as `kind:key=value,...` and save it.
    Mesh {
        domain: String,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            output_dir,
            seed,
            mesh_level,
        } => run(config, output_dir, seed, mesh_level),
        Command::Validate { config } => match config::load(&config) {
            Ok(cfg) => {
                for (k, v) in cfg.echo() {
                    println!("{k} = {v}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Mesh { domain, output } => {
            let spec: DomainSpec = match domain.parse() {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            match generate::<f64>(&spec).and_then(|m| m.save(&output).map(|_| m)) {
                Ok(m) => {
                    println!(
                        "{}: {} nodes, {} triangles",
                        output.display(),
                        m.n_nodes(),
                        m.n_triangles()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}

fn run(path: PathBuf, output_dir: Option<PathBuf>, seed: Option<u64>, level: Option<u32>) -> ExitCode {
    let mut cfg = match config::load(&path) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(dir) = output_dir {
        cfg.set_output_dir(dir);
    }
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    if let Some(k) = level {
        if k >= cfg.mesh_levels {
            return fail(format!("--mesh-level {k} is outside 0..{}", cfg.mesh_levels));
        }
        cfg.set_only_level(k);
    }
    let mut out = match Artifacts::create(&cfg.output_dir) {
        Ok(a) => a,
        Err(e) => return fail(format!("output directory {}: {e}", cfg.output_dir.display())),
    };
    let report = match scenario::run(&cfg, &mut out) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Err(e) = out.write("run.report", &report.render(&cfg)) {
        return fail(e);
    }
    let root = out.root().to_path_buf();
    if let Err(e) = out.finish() {
        return fail(format!("MANIFEST: {e}"));
    }
    if report.passed() {
        println!("{}: pass ({})", cfg.scenario.name(), root.display());
        ExitCode::SUCCESS
    } else {
        for f in report.failures() {
            eprintln!("assertion failed: {f}");
        }
        println!("{}: fail ({})", cfg.scenario.name(), root.display());
        ExitCode::from(2)
    }
}
