//! Batch driver around the core library. Every run writes `report.json`
//! (shared check schema), `data/*.csv` and `summary.txt` into the output
//! directory; identical config and seed reproduce the artifacts byte for
//! byte. Audit failures exit nonzero and name the violated check.

mod artifacts;
mod commands;

use anyhow::{Context, Result};
use artifacts::Artifacts;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "korn-lab", version, about = "cover, decomposition and constant audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output directory for report.json, summary.txt and data/.
    #[arg(long, default_value = "korn-lab-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build a Whitney cover and audit its structural invariants.
    Whitney {
        /// Builtin name or path to a domain spec JSON.
        #[arg(long, default_value = "l_shape2d")]
        domain: String,
        #[arg(long, default_value_t = 6)]
        max_level: u8,
        /// Interior points sampled for coverage and overlap counting.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Root the cover, measure shadows and the dilation constant.
    Tree {
        #[arg(long, default_value = "l_shape2d")]
        domain: String,
        #[arg(long, default_value_t = 6)]
        max_level: u8,
        #[command(flatten)]
        out: OutArg,
    },
    /// Split random admissible fields into per-cube pieces and audit.
    Decompose {
        #[arg(long, default_value = "l_shape3d")]
        domain: String,
        #[arg(long, default_value_t = 4)]
        max_level: u8,
        /// Quadrature nodes per axis and cube.
        #[arg(long, default_value_t = 3)]
        order: usize,
        /// Number of random input fields.
        #[arg(long, default_value_t = 3)]
        fields: usize,
        /// Norm exponents for the piece-mass ratios.
        #[arg(long, value_delimiter = ',', default_values_t = [1.5, 2.0, 3.0])]
        q: Vec<f64>,
        /// Distance weight exponents.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0])]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Estimate the tree averaging operator norm across weights.
    Hardy {
        #[arg(long, default_value = "l_shape2d")]
        domain: String,
        #[arg(long, default_value_t = 6)]
        max_level: u8,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
        beta: Vec<f64>,
        /// Random nonnegative trial fields per weight.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Estimate the inequality constant across mesh sizes.
    Korn {
        #[arg(long, default_value = "unit_cube")]
        domain: String,
        /// Element sizes; the domain box must tile evenly by each.
        #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.125])]
        mesh: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Truncated energies of the closed-form field on the power cusp.
    Cusp {
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        s: f64,
        /// Truncation heights, swept largest to smallest.
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
        eps: Vec<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run every command with fixed presets.
    All {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

fn run() -> Result<bool> {
    if let Ok(v) = std::env::var("KORN_LAB_THREADS") {
        let n: usize = v
            .parse()
            .context("KORN_LAB_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Whitney {
            domain,
            max_level,
            samples,
            seed,
            out,
        } => {
            let mut art = Artifacts::create(&out.out)?;
            commands::whitney(&mut art, "", &domain, max_level, samples, seed)?;
            art.finish(
                "whitney",
                json!({"domain": domain, "max_level": max_level, "samples": samples, "seed": seed}),
            )
        }
        Command::Tree {
            domain,
            max_level,
            out,
        } => {
            let mut art = Artifacts::create(&out.out)?;
            commands::tree(&mut art, "", &domain, max_level)?;
            art.finish("tree", json!({"domain": domain, "max_level": max_level}))
        }
        Command::Decompose {
            domain,
            max_level,
            order,
            fields,
            q,
            beta,
            seed,
            out,
        } => {
            let mut art = Artifacts::create(&out.out)?;
            commands::decompose(
                &mut art, "", &domain, max_level, order, fields, &q, &beta, seed,
            )?;
            art.finish(
                "decompose",
                json!({
                    "domain": domain, "max_level": max_level, "order": order,
                    "fields": fields, "q": q, "beta": beta, "seed": seed
                }),
            )
        }
        Command::Hardy {
            domain,
            max_level,
            order,
            q,
            beta,
            trials,
            seed,
            out,
        } => {
            let mut art = Artifacts::create(&out.out)?;
            commands::hardy(
                &mut art, "", &domain, max_level, order, q, &beta, trials, seed,
            )?;
            art.finish(
                "hardy",
                json!({
                    "domain": domain, "max_level": max_level, "order": order,
                    "q": q, "beta": beta, "trials": trials, "seed": seed
                }),
            )
        }
        Command::Korn {
            domain,
            mesh,
            beta,
            seed,
            out,
        } => {
            let mut art = Artifacts::create(&out.out)?;
            commands::korn(&mut art, "", &domain, &mesh, beta, seed)?;
            art.finish(
                "korn",
                json!({"domain": domain, "mesh": mesh, "beta": beta, "seed": seed}),
            )
        }
        Command::Cusp { gamma, s, eps, out } => {
            let mut art = Artifacts::create(&out.out)?;
            commands::cusp(&mut art, "", gamma, s, &eps)?;
            art.finish("cusp", json!({"gamma": gamma, "s": s, "eps": eps}))
        }
        Command::All { seed, out } => {
            let mut art = Artifacts::create(&out.out)?;
            commands::all(&mut art, seed)?;
            art.finish("all", json!({"seed": seed}))
        }
    }
}

fn main() {
    match run() {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
