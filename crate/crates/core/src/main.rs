use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparfsim::cli::accuracy::{self, AccuracySpec};
use sparfsim::cli::config::{load_scenarios, Overrides};
use sparfsim::cli::presets::preset;
use sparfsim::cli::verify::{run_verify, Mutation, VerifyOptions};
use sparfsim::cli::write_stage_csv;
use sparfsim::layout::{FlashGeometry, KvLayout, LayoutConfig};
use sparfsim::system::sweep::{run_sweep, write_csv, SweepItem};
use sparfsim::system::ScenarioReport;
use sparfsim::{Error, Result};

#[derive(Parser)]
#[command(name = "sparfsim", version, about = "Sparse-attention computational-storage inference simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct OverrideArgs {
    /// Replace every scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of CSDs (and SSDs for the baselines).
    #[arg(long)]
    csd_count: Option<usize>,
    /// Kept fraction of embeddings and tokens; 1 is dense.
    #[arg(long)]
    ratio: Option<f64>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            csd_count: a.csd_count,
            ratio: a.ratio,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario file and print a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-head decode stage breakdown (instinfer only).
        #[arg(long)]
        stages: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Simulate every scenario in a file (an object or an array).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run a named sweep grid.
    Preset {
        /// fig-throughput, fig-breakdown, fig-scaling or fig-compression
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csd_count: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Run the self-check suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Inject a known fault; the suite should then fail.
        #[arg(long)]
        mutate: Option<Mutation>,
    },
    /// Output error of sparse attention against dense on Gaussian heads.
    Accuracy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        head_dim: usize,
        #[arg(long, default_value_t = 1024)]
        seq_len: usize,
        #[arg(long, default_value_t = 64)]
        heads: usize,
        /// Comma-separated subset of 1, 0.5, 0.25, 0.125, 0.0625.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 0.5, 0.25, 0.125, 0.0625])]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        embedding_group: usize,
        #[arg(long, default_value_t = 16)]
        token_group: usize,
    },
    /// Replay a JSON-lines layout trace and print one event per line.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long, default_value_t = 1)]
        heads: usize,
        #[arg(long, default_value_t = 128)]
        head_dim: usize,
        #[arg(long, default_value_t = 4096)]
        max_context: usize,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Parse(format!("cannot create {}: {e}", path.display())))
}

fn simulate_to(items: &[SweepItem], out: &Path) -> Result<Vec<ScenarioReport>> {
    let reports = run_sweep(items)?;
    let mut w = create(out)?;
    write_csv(&mut w, items, &reports)?;
    w.flush()?;
    Ok(reports)
}

fn summarize(items: &[SweepItem], reports: &[ScenarioReport]) {
    for (it, r) in items.iter().zip(reports) {
        let sh = r.breakdown.shares();
        println!(
            "{:<32} {:<13} csd={:<2} bs={:<4} ratio={:<6} {:>10.2} tok/s  prefill {:.3}s  decode {:.3}s  kv {:>5.1}%  tier {}",
            it.id,
            r.system.name(),
            r.csd_count,
            r.workload.batch,
            r.ratio,
            r.throughput(),
            r.prefill_s,
            r.decode_s,
            100.0 * sh[1],
            r.kv_tier.name(),
        );
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            stages,
            overrides,
        } => {
            let mut items = load_scenarios(&config)?;
            if items.len() != 1 {
                return Err(Error::Parse(format!(
                    "run expects one scenario, {} has {} (use sweep)",
                    config.display(),
                    items.len()
                )));
            }
            Overrides::from(overrides).apply(&mut items);
            let reports = simulate_to(&items, &out)?;
            summarize(&items, &reports);
            if let Some(path) = stages {
                let mut w = create(&path)?;
                write_stage_csv(&mut w, &items[0].scenario)?;
                w.flush()?;
            }
        }
        Command::Sweep { config, out, overrides } => {
            let mut items = load_scenarios(&config)?;
            Overrides::from(overrides).apply(&mut items);
            let reports = simulate_to(&items, &out)?;
            summarize(&items, &reports);
        }
        Command::Preset {
            name,
            out,
            seed,
            csd_count,
            ratio,
        } => {
            let mut items = preset(&name, seed)?;
            Overrides {
                seed: None,
                csd_count,
                ratio,
            }
            .apply(&mut items);
            let reports = simulate_to(&items, &out)?;
            summarize(&items, &reports);
        }
        Command::Verify { seed, mutate } => {
            let report = run_verify(&VerifyOptions { mutation: mutate, seed });
            for c in &report.checks {
                match &c.result {
                    Ok(()) => println!("PASS {:<30} {:>7.2}s", c.name, c.seconds),
                    Err(msg) => println!("FAIL {:<30} {:>7.2}s  {msg}", c.name, c.seconds),
                }
            }
            println!("{} checks, {} failed", report.checks.len(), report.failures());
            return Ok(report.passed());
        }
        Command::Accuracy {
            out,
            seed,
            head_dim,
            seq_len,
            heads,
            ratios,
            embedding_group,
            token_group,
        } => {
            let mut spec = AccuracySpec::new(seed, head_dim, seq_len, heads, ratios);
            spec.embedding_group = embedding_group;
            spec.token_group = token_group;
            let rows = accuracy::accuracy(&spec)?;
            let mut w = create(&out)?;
            accuracy::write_csv(&mut w, &spec, &rows)?;
            w.flush()?;
            for r in &rows {
                println!(
                    "ratio {:<7} r={:<4} k={:<5} mean rel err {:.3e}  max sparq delta {:.3e}",
                    r.ratio, r.kept_embeddings, r.kept_tokens, r.mean_rel_error, r.max_sparq_delta
                );
            }
        }
        Command::Replay {
            trace,
            layers,
            heads,
            head_dim,
            max_context,
            channels,
            out,
        } => {
            let mut geometry = FlashGeometry::default();
            if let Some(c) = channels {
                geometry.channels = c;
            }
            let mut layout = KvLayout::new(LayoutConfig::new(geometry, layers, heads, head_dim, max_context))?;
            let input = File::open(&trace)
                .map_err(|e| Error::Parse(format!("cannot open {}: {e}", trace.display())))?;
            let events = sparfsim::layout::trace::replay(&mut layout, BufReader::new(input))?;
            let mut sink: Box<dyn Write> = match out {
                Some(p) => Box::new(create(&p)?),
                None => Box::new(io::stdout().lock()),
            };
            for e in &events {
                writeln!(sink, "{}", serde_json::to_string(e)?)?;
            }
            sink.flush()?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    if let Ok(n) = std::env::var("SPARFSIM_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: SPARFSIM_THREADS must be a positive integer, got `{n}`");
                return ExitCode::from(2);
            }
        }
    }
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
