// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{EmbedderKind, GeneratorKind, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "qvf",
    version,
    about = "Quantum-verified post-training data pipeline"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct GeneratorArgs {
    #[arg(long, value_enum)]
    generator: Option<GeneratorKind>,
    /// Base URL of the generation service.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl GeneratorArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(k) = self.generator {
            cfg.generator.kind = k;
        }
        if let Some(e) = &self.endpoint {
            cfg.generator.endpoint = Some(e.clone());
        }
        if let Some(r) = self.mutation_rate {
            cfg.generator.mutation_rate = r;
        }
        if let Some(t) = self.temperature {
            cfg.sampling.temperature = t;
        }
        if let Some(m) = self.max_in_flight {
            cfg.generator.max_in_flight = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
    }
}

#[derive(Args, Default)]
struct ExecArgs {
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// External worker executable for non-qlang programs.
    #[arg(long)]
    worker: Option<String>,
    /// Argument passed to the worker (repeatable).
    #[arg(long = "worker-arg", allow_hyphen_values = true)]
    worker_args: Vec<String>,
}

impl ExecArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = self.pool_size {
            cfg.pool_size = p;
        }
        if let Some(t) = self.timeout_ms {
            cfg.exec_timeout_ms = t;
        }
        if let Some(w) = &self.worker {
            cfg.worker = Some(qvf_core::sandbox::WorkerCommand {
                program: w.clone(),
                args: self.worker_args.clone(),
            });
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize tasks with their reference solutions and tests.
    Generate {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Template families to cycle through (ids or t1..t4).
        #[arg(long, value_delimiter = ',')]
        families: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw candidate completions for every task.
    Sample {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        gen: GeneratorArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute candidates against their tests and write buckets A and B.
    Verify {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Mine chosen/rejected preference pairs from a bucket directory.
    MineDpo {
        #[arg(long)]
        buckets: PathBuf,
        #[arg(long)]
        n_per_prompt: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        embedder: Option<EmbedderKind>,
        #[arg(long)]
        embed_endpoint: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out groups per task and compute standardized advantages.
    GrpoBatch {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        group_size: Option<usize>,
        #[command(flatten)]
        gen: GeneratorArgs,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// pass@k over a benchmark file.
    Eval {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        /// Values of k (repeatable or comma separated).
        #[arg(long = "k", value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        /// One sample per task at temperature 0.
        #[arg(long)]
        greedy: bool,
        #[command(flatten)]
        gen: GeneratorArgs,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// SLERP-merge two tensor files.
    Merge {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        parallel_threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a task file into a benchmark file.
    MakeBench {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate {
            count,
            seed,
            families,
            out,
        } => {
            if let Some(c) = count {
                cfg.count = c;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(f) = families {
                cfg.families = f;
            }
            cfg.validate()?;
            commands::generate(&cfg, &out)
        }
        Command::Sample { tasks, n, gen, out } => {
            gen.apply(&mut cfg);
            if let Some(n) = n {
                cfg.n_per_prompt = n;
            }
            cfg.validate()?;
            commands::sample(&cfg, &tasks, &out)
        }
        Command::Verify {
            tasks,
            candidates,
            exec,
            out_dir,
        } => {
            exec.apply(&mut cfg);
            cfg.validate()?;
            commands::verify(&cfg, &tasks, &candidates, &out_dir)
        }
        Command::MineDpo {
            buckets,
            n_per_prompt,
            seed,
            embedder,
            embed_endpoint,
            out,
        } => {
            if let Some(n) = n_per_prompt {
                cfg.n_per_prompt = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(k) = embedder {
                cfg.embedder.kind = k;
            }
            if let Some(e) = embed_endpoint {
                cfg.embedder.endpoint = Some(e);
            }
            cfg.validate()?;
            commands::mine_dpo(&cfg, &buckets, &out)
        }
        Command::GrpoBatch {
            tasks,
            group_size,
            gen,
            exec,
            out,
        } => {
            gen.apply(&mut cfg);
            exec.apply(&mut cfg);
            if let Some(g) = group_size {
                cfg.group_size = g;
            }
            cfg.validate()?;
            commands::grpo_batch(&cfg, &tasks, &out)
        }
        Command::Eval {
            bench,
            n,
            ks,
            greedy,
            gen,
            exec,
            out,
        } => {
            gen.apply(&mut cfg);
            exec.apply(&mut cfg);
            if let Some(n) = n {
                cfg.eval.n = n;
            }
            if let Some(ks) = ks {
                cfg.eval.ks = ks;
            }
            if greedy {
                cfg.eval.n = 1;
                cfg.eval.ks = vec![1];
                cfg.sampling.temperature = 0.0;
            }
            cfg.validate()?;
            commands::eval(&cfg, &bench, &out)
        }
        Command::Merge {
            a,
            b,
            t,
            parallel_threshold,
            out,
        } => {
            if let Some(t) = t {
                cfg.merge.t = t;
            }
            if let Some(p) = parallel_threshold {
                cfg.merge.parallel_threshold = p;
            }
            cfg.validate()?;
            commands::merge(&cfg, &a, &b, &out)
        }
        Command::MakeBench { tasks, out } => {
            cfg.validate()?;
            commands::make_bench(&cfg, &tasks, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config(e.to_string().trim().to_string());
            eprintln!("{}", err.diagnostic());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.diagnostic());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
