use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use al_harness::classifier::{BuiltinLearner, ClassifierSpec, DEFAULT_EMBEDDING_DIM};
use al_harness::runner::run_crosseval;
use al_harness::{generate_synthetic_corpus, run_grid, summarize, GridConfig, Result, SyntheticSpec, Vocabulary};

#[derive(Parser)]
#[command(name = "alharness", version, about = "Batch active-learning simulations for abusive-language classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct GridArgs {
    /// Grid TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Parallel runs (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Run this seed only.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl GridArgs {
    fn load(&self) -> Result<GridConfig> {
        let mut grid = GridConfig::load(&self.config)?;
        if let Some(w) = self.workers {
            grid.workers = w;
        }
        if let Some(s) = self.seed {
            grid.seeds = vec![s];
        }
        if let Some(out) = &self.out {
            grid.output_dir = out.clone();
        }
        Ok(grid)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Rebalance every dataset of a grid and write the splits as JSONL.
    Prepare(GridArgs),
    /// Run the whole grid.
    Run(GridArgs),
    /// Rebuild summaries from an output directory.
    Summarize {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on one dataset, evaluate on another.
    Crosseval(GridArgs),
    /// Write a synthetic labeled corpus as JSONL with `text` and `label`.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with synthetic corpus parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        imbalance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        domain_shift: Option<f64>,
    },
    /// Serve the plugin protocol on stdin/stdout with the builtin classifier.
    PluginMock {
        /// Vocabulary JSON used to featurize incoming text.
        #[arg(long)]
        vocab: PathBuf,
        /// Classifier spec JSON; defaults to logistic.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EMBEDDING_DIM)]
        embedding_dim: usize,
        #[arg(long, default_value_t = 7)]
        embedding_seed: u64,
    },
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| al_harness::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Prepare(args) => {
            let grid = args.load()?;
            for data in grid.prepare()? {
                let path = grid
                    .output_dir
                    .join("prepared")
                    .join(format!("{}-{}.jsonl", data.name, data.imbalance));
                if let Some(dir) = path.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| al_harness::Error::Io {
                        path: dir.to_path_buf(),
                        source: e,
                    })?;
                }
                data.write_jsonl(&path)?;
                println!("{}", path.display());
            }
        }
        Cmd::Run(args) => {
            let grid = args.load()?;
            let report = run_grid(&grid)?;
            print_rows(&report.experiments);
        }
        Cmd::Summarize { out } => {
            let rows = summarize(&out)?;
            print_rows(&rows);
        }
        Cmd::Crosseval(args) => {
            let grid = args.load()?;
            let rows = run_crosseval(&grid)?;
            print_rows(&rows);
        }
        Cmd::Synth {
            out,
            config,
            size,
            imbalance,
            seed,
            domain_shift,
        } => {
            let mut spec: SyntheticSpec = match config {
                Some(p) => toml::from_str(&read_to_string(&p)?)?,
                None => SyntheticSpec::default(),
            };
            spec.size = size.unwrap_or(spec.size);
            spec.imbalance = imbalance.unwrap_or(spec.imbalance);
            spec.seed = seed.unwrap_or(spec.seed);
            spec.domain_shift = domain_shift.unwrap_or(spec.domain_shift);
            let docs = generate_synthetic_corpus(&spec, "synthetic")?;
            let file = File::create(&out).map_err(|e| al_harness::Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let mut w = BufWriter::new(file);
            for d in &docs {
                let row = serde_json::json!({ "text": d.text, "label": d.label as u8 });
                writeln!(w, "{row}").map_err(|e| al_harness::Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
            }
            w.flush().map_err(|e| al_harness::Error::Io {
                path: out.clone(),
                source: e,
            })?;
        }
        Cmd::PluginMock {
            vocab,
            spec,
            embedding_dim,
            embedding_seed,
        } => {
            let vocab = Vocabulary::load(&vocab)?;
            let spec: ClassifierSpec = match spec {
                Some(p) => serde_json::from_str(&read_to_string(&p)?)?,
                None => ClassifierSpec::default(),
            };
            let learner = BuiltinLearner::new(spec, &vocab, embedding_dim, embedding_seed);
            let stdin = io::stdin();
            al_harness::plugin::serve(stdin.lock(), io::stdout().lock(), learner, &vocab)?;
        }
    }
    Ok(())
}

fn print_rows(rows: &[al_harness::runner::ExperimentSummary]) {
    let mut w = csv::Writer::from_writer(io::stdout());
    for r in rows {
        let _ = w.serialize(r.row());
    }
    let _ = w.flush();
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
