//! Thin CLI over the wavecell library.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use wavecell::bench::{format_summary, run_benchmark, summarize, write_csv, BenchSuite};
use wavecell::{
    io, validate_model, Arena, Engine, LoadProfile, LstmModel, ModelConfig, OverheadModel,
    Strategy,
};

#[derive(Parser)]
#[command(name = "wavecell", version, about = "Stacked-LSTM inference engine benchmark tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random model file.
    GenModel {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 32)]
        hidden: usize,
        #[arg(long, default_value_t = 9)]
        input: usize,
        #[arg(long, default_value_t = 128)]
        steps: usize,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic sample windows and labels.
    GenData {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        steps: usize,
        #[arg(long, default_value_t = 9)]
        dims: usize,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long)]
        out_samples: PathBuf,
        #[arg(long)]
        out_labels: PathBuf,
    },
    /// Classify every window in a dataset and report latency and accuracy.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// seq | coarse | fine
        #[arg(long, default_value = "coarse")]
        executor: Strategy,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value_t = 20)]
        overhead_us: u64,
        /// Optional background load on the worker pool, fraction in [0, 1].
        #[arg(long)]
        utilization: Option<f64>,
    },
    /// Run the benchmark matrix and write one CSV record per inference.
    Bench {
        #[arg(long, default_value_t = 42)]
        model_seed: u64,
        /// "default" or a path to a TOML suite file.
        #[arg(long, default_value = "default")]
        suite: String,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value_t = 20)]
        overhead_us: u64,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a model file's shape invariants and weight finiteness.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> wavecell::Result<()> {
    match command {
        Command::GenModel {
            seed,
            layers,
            hidden,
            input,
            steps,
            classes,
            out,
        } => {
            let config = ModelConfig::new(layers, hidden, input, steps, classes)?;
            let model = LstmModel::generate(seed, &config);
            io::save_model(&model, &out)?;
            println!(
                "wrote {} (L={layers} H={hidden} D={input} T={steps} C={classes}, {} parameters)",
                out.display(),
                config.param_count()
            );
            Ok(())
        }
        Command::GenData {
            seed,
            count,
            steps,
            dims,
            classes,
            out_samples,
            out_labels,
        } => {
            let windows = io::generate_windows(seed, count, steps, dims);
            let labels = io::generate_labels(seed, count, classes);
            io::write_dataset(&out_samples, &out_labels, &windows, &labels)?;
            println!(
                "wrote {count} windows of {steps}x{dims} to {} and labels to {}",
                out_samples.display(),
                out_labels.display()
            );
            Ok(())
        }
        Command::Infer {
            model,
            samples,
            labels,
            executor,
            workers,
            overhead_us,
            utilization,
        } => {
            let model = io::load_model(&model)?;
            validate_model(&model)?;
            let dataset = io::load_dataset(&samples, &labels, &model.config)?;
            let engine = Engine::new(OverheadModel::new(
                Duration::from_micros(overhead_us),
                workers,
            ));
            let mut arena = Arena::new(&model.config, workers)?;
            let load = match utilization {
                Some(u) => Some(engine.simulate_load(&LoadProfile::new(u)?)?),
                None => None,
            };

            let mut latencies = Vec::with_capacity(dataset.len());
            let mut correct = 0usize;
            for (idx, (window, label)) in dataset.iter().enumerate() {
                let result = engine.run(&model, window, executor, &mut arena)?;
                let latency_us = result.telemetry.latency.as_secs_f64() * 1e6;
                latencies.push(latency_us);
                let hit = result.class == *label;
                correct += usize::from(hit);
                println!(
                    "window {idx:>4}: predicted {} label {} {} {:>10.1} us ({} units)",
                    result.class,
                    label,
                    if hit { "ok  " } else { "miss" },
                    latency_us,
                    result.telemetry.dispatched_units
                );
            }
            drop(load);
            if !latencies.is_empty() {
                let total: f64 = latencies.iter().sum();
                println!(
                    "accuracy {}/{} ({:.1}%), median latency {:.1} us, total {:.1} us",
                    correct,
                    latencies.len(),
                    100.0 * correct as f64 / latencies.len() as f64,
                    wavecell::bench::median(&latencies),
                    total
                );
            }
            Ok(())
        }
        Command::Bench {
            model_seed,
            suite,
            workers,
            overhead_us,
            reps,
            out,
        } => {
            let suite = if suite == "default" {
                BenchSuite::default_matrix(workers, overhead_us, reps, model_seed)
            } else {
                let mut s = BenchSuite::from_toml_file(&suite)?;
                s.workers = workers;
                s.reps = reps;
                s.model_seed = model_seed;
                s
            };
            println!(
                "running {} cells x {} reps = {} records...",
                suite.record_count() / suite.reps,
                suite.reps,
                suite.record_count()
            );
            let records = run_benchmark(&suite)?;
            write_csv(&records, &out)?;
            println!("wrote {} records to {}", records.len(), out.display());
            print!("{}", format_summary(&summarize(&records)));
            Ok(())
        }
        Command::Validate { model } => {
            let model = io::load_model(&model)?;
            validate_model(&model)?;
            let cfg = &model.config;
            println!(
                "model ok: L={} H={} D={} T={} C={}, {} parameters",
                cfg.num_layers,
                cfg.hidden_units,
                cfg.input_dim,
                cfg.time_steps,
                cfg.num_classes,
                cfg.param_count()
            );
            Ok(())
        }
    }
}
