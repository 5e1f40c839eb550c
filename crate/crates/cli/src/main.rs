use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use affordkit_cli::{
    cmd_annotate, cmd_evaluate, cmd_gen_mini, cmd_lift, cmd_render, format_point3, write_report,
    LiftArgs, RunConfig,
};
use affordkit_review::ServeConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "affordkit", version, about = "Affordance heatmap benchmark and annotation toolkit")]
struct Cli {
    /// JSON config with evaluation / loss / ransac / pipeline sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for record- and sequence-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// RANSAC seed; overrides ransac.rng_seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory (meaning depends on the subcommand).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score predictions (`<predictions>/<id>.ahm`) against a dataset.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Fail the run when more than this many records could not be scored.
        #[arg(long)]
        max_errors: Option<usize>,
    },
    /// Render ground-truth heatmaps for every record in a records.jsonl file.
    Render {
        #[arg(long)]
        records: PathBuf,
        /// Defaults to the config's evaluation sigma.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Run the contact-point pipeline over a sequences.jsonl file.
    Annotate {
        #[arg(long)]
        sequences: PathBuf,
    },
    /// Back-project a pixel at a given depth into the camera frame.
    #[command(allow_negative_numbers = true)]
    Lift {
        #[arg(long)]
        u: f64,
        #[arg(long)]
        v: f64,
        #[arg(long)]
        depth: f64,
        #[arg(long)]
        fx: f64,
        #[arg(long)]
        fy: f64,
        #[arg(long)]
        cx: f64,
        #[arg(long)]
        cy: f64,
    },
    /// Write the synthetic mini benchmark with baseline predictions.
    GenMini {
        #[arg(long, default_value_t = 20)]
        records: usize,
    },
    /// Start the review service.
    Serve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = RunConfig::load_or_default(cli.config.as_deref())?.with_seed(cli.seed);
    match cli.command {
        Command::Evaluate {
            dataset,
            predictions,
            max_errors,
        } => {
            let report = cmd_evaluate(&dataset, &predictions, &cfg, cli.threads)?;
            let out = cli.out.unwrap_or_else(|| PathBuf::from("report.json"));
            let table = write_report(&report, &out)?;
            print!("{table}");
            for e in &report.errors {
                match &e.record_id {
                    Some(id) => eprintln!("error: {id}: {}", e.message),
                    None => eprintln!("error: {}", e.message),
                }
            }
            println!(
                "{} scored, {} errors, report written to {}",
                report.records.len(),
                report.errors.len(),
                out.display()
            );
            if max_errors.is_some_and(|m| report.errors.len() > m) {
                eprintln!("error count {} exceeds --max-errors", report.errors.len());
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Render { records, sigma } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("heatmaps"));
            let summary = cmd_render(&records, sigma.unwrap_or(cfg.evaluation.sigma), &out)?;
            for e in &summary.errors {
                eprintln!("skipped: {e}");
            }
            println!("{} heatmaps written to {}", summary.written.len(), out.display());
        }
        Command::Annotate { sequences } => {
            let pipeline = cfg.pipeline_config()?;
            let out = cli.out.unwrap_or_else(|| PathBuf::from("annotations.jsonl"));
            let s = cmd_annotate(&sequences, &pipeline, &out, cli.threads)?;
            println!(
                "ok {}  low_confidence {}  failed {}  -> {}",
                s.ok,
                s.low_confidence,
                s.failed,
                out.display()
            );
        }
        Command::Lift {
            u,
            v,
            depth,
            fx,
            fy,
            cx,
            cy,
        } => {
            let p = cmd_lift(&LiftArgs {
                u,
                v,
                depth,
                fx,
                fy,
                cx,
                cy,
            })?;
            println!("{}", format_point3(&p));
        }
        Command::GenMini { records } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("mini"));
            let config = cmd_gen_mini(&out, records, cli.seed.unwrap_or(2024))?;
            println!(
                "{records} records written to {} (config: {})",
                out.display(),
                config.display()
            );
        }
        Command::Serve {
            dataset,
            log,
            port,
            static_dir,
            host,
        } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(affordkit_review::serve(ServeConfig {
                dataset,
                log,
                addr: SocketAddr::new(host, port),
                static_dir,
            }))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
