use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use rmline_core::bench::{generate, run_experiment, write_csv, ExperimentConfig, GeneratorKind};
use rmline_core::offline::opt_cost;
use rmline_core::verify::{check_all_lemmas, final_ratio_check};
use rmline_core::{run_online, Instance, Scalar};

#[derive(Parser)]
#[command(name = "rmline", version, about = "Online bipartite matching on the line: run, verify, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance as JSON.
    Gen {
        #[arg(long)]
        kind: GeneratorKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the online algorithm and print costs and the online matching.
    Run {
        #[arg(long)]
        instance: PathBuf,
        /// Also write the full per-phase trace here.
        #[arg(long)]
        emit_trace: Option<PathBuf>,
        /// Override the instance's t.
        #[arg(long)]
        t: Option<Scalar>,
    },
    /// Run the algorithm and the full check suite; exits nonzero if any check fails.
    Verify {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Run a configured experiment and write one CSV row per run.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_instance(path: &PathBuf) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Instance::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Gen { kind, n, seed, out } => {
            let inst = generate(kind, n, seed)?;
            fs::write(&out, inst.to_json() + "\n").with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Run { instance, emit_trace, t } => {
            let mut inst = read_instance(&instance)?;
            if let Some(t) = t {
                inst = inst.with_t(t)?;
            }
            let trace = run_online(&inst)?;
            let (ratio, ratio_norm) = final_ratio_check(&trace)?;
            let online: Vec<_> = trace
                .phases
                .iter()
                .map(|p| json!({"phase": p.phase, "server": p.server, "request": p.request, "class": p.class}))
                .collect();
            let out = json!({
                "n": inst.n(),
                "t": inst.t(),
                "w_online": trace.online_cost,
                "w_opt": opt_cost(&inst),
                "ratio": ratio,
                "ratio_norm": ratio_norm,
                "online": online,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            if let Some(p) = emit_trace {
                let doc = json!({"instance": inst.to_raw(), "trace": trace});
                fs::write(&p, serde_json::to_string_pretty(&doc)? + "\n")
                    .with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Verify { instance } => {
            let inst = read_instance(&instance)?;
            let report = check_all_lemmas(&run_online(&inst)?);
            println!("{}", report.to_json());
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Experiment { config, out } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = ExperimentConfig::from_json(&text)?
                .with_arithmetic_override(std::env::var("RM_ARITH").ok().as_deref())?;
            let Some(out) = out.or_else(|| cfg.output.clone().map(PathBuf::from)) else {
                bail!("no output path: pass --out or set \"output\" in the config");
            };
            let rows = run_experiment(&cfg)?;
            let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_csv(&rows, file)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
