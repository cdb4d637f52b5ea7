//! `bootscan`: command-line driver for the boot-sequence anomaly
//! detection pipeline and its evaluation harness.
//!
//! Exit codes: 0 the analyzed sequence is legitimate (or the command has
//! no verdict), 3 malicious, 1 operational error, 2 usage error.

mod service;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use bootscan_core::align::ScoringScheme;
use bootscan_core::config::PipelineConfig;
use bootscan_core::ensemble::{Manifest, ReferenceStore, DEFAULT_CAPACITY};
use bootscan_core::eval::{self, VerdictRecord};
use bootscan_core::synth::{self, CorpusConfig};
use bootscan_core::trace::{parse_strace, Alphabet, Label, SequenceFile};

#[derive(Parser)]
#[command(
    name = "bootscan",
    version,
    about = "Boot-time syscall sequence anomaly detector and evaluation harness"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Global flags layered over the config file (or the defaults).
#[derive(Args)]
struct Overrides {
    /// TOML pipeline configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Bagging seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum preprocessed sequence length.
    #[arg(long, global = true)]
    max_len: Option<usize>,
    /// Confidence interval I; a sample is malicious iff p < I.
    #[arg(long, global = true)]
    confidence: Option<f64>,
    /// Scoring scheme as "match,mismatch,gap_test,gap_ref".
    #[arg(long, global = true)]
    scheme: Option<String>,
}

impl Overrides {
    /// Config file (or defaults) with the flag overrides applied.
    /// Invalid flag values are usage errors.
    fn resolve(&self) -> Result<PipelineConfig, UsageError> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)
                .map_err(|e| UsageError(format!("--config {}: {e}", path.display())))?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.plan.seed = seed;
        }
        if let Some(max_len) = self.max_len {
            config.max_len = max_len;
        }
        if let Some(confidence) = self.confidence {
            config.confidence = confidence;
        }
        if let Some(spec) = &self.scheme {
            config.scheme = parse_scheme(spec)?;
        }
        config
            .validate()
            .map_err(|e| UsageError(e.to_string()))?;
        Ok(config)
    }
}

struct UsageError(String);

fn parse_scheme(spec: &str) -> Result<ScoringScheme, UsageError> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(UsageError(format!(
            "--scheme expects match,mismatch,gap_test,gap_ref, got \"{spec}\""
        )));
    }
    let mut values = [0i32; 4];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| UsageError(format!("--scheme: \"{part}\" is not an integer")))?;
    }
    ScoringScheme::new(values[0], values[1], values[2], values[3])
        .map_err(|e| UsageError(e.to_string()))
}

fn parse_label(s: &str) -> Result<Label, String> {
    s.parse().map_err(|e: bootscan_core::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Convert an strace log into a sequence file.
    Ingest {
        /// strace output to parse.
        input: PathBuf,
        /// Sequence file to write.
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        app_id: String,
        #[arg(long, default_value = "unknown")]
        device_id: String,
        #[arg(long, default_value = "unknown", value_parser = parse_label)]
        label: Label,
        /// Abort on the first malformed line instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Reference store maintenance.
    Store {
        #[command(subcommand)]
        action: StoreCommand,
    },
    /// Analyze one sequence file against a reference store.
    Analyze {
        /// Sequence file to analyze.
        sequence: PathBuf,
        /// Reference store directory.
        #[arg(long)]
        store: PathBuf,
        /// Alphabet file (one syscall name per line).
        #[arg(long)]
        alphabet: PathBuf,
        /// App to compare against; defaults to the sequence file header.
        #[arg(long)]
        app_id: Option<String>,
    },
    /// Estimate the false-positive rate of a corpus by three-fold
    /// cross-validation over its legitimate samples.
    CrossValidate {
        /// Corpus directory (as written by `synth`).
        corpus: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// TPR/FPR as a function of the confidence interval, at a fixed
    /// analysis length.
    SweepConfidence {
        corpus: PathBuf,
        /// Analysis length the sweep is evaluated at.
        #[arg(long, default_value_t = 1000)]
        length: usize,
        /// Comma-separated I values; defaults to the built-in grid.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        /// Write the CSV report here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// TPR/FPR as a function of the analyzed sequence length.
    SweepLength {
        corpus: PathBuf,
        /// Comma-separated lengths; defaults to the built-in grid.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<usize>,
        /// Write the CSV report here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Pairwise alignment-score matrix over sequence files, as CSV.
    ExportMatrix {
        /// Sequence files to score against each other.
        #[arg(num_args = 2..)]
        files: Vec<PathBuf>,
        #[arg(long)]
        alphabet: PathBuf,
        /// Write the CSV matrix here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Generate a reproducible synthetic corpus.
    Synth {
        /// Directory to write the corpus into.
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        profiles: usize,
        #[arg(long, default_value_t = 30)]
        legit_per_app: usize,
        #[arg(long, default_value_t = 30)]
        malicious_per_app: usize,
        #[arg(long, default_value_t = 3200)]
        base_length: usize,
        /// Use the full evaluation-scale preset (19 apps, 150 + 150).
        #[arg(long, conflicts_with_all = ["profiles", "legit_per_app", "malicious_per_app"])]
        full_scale: bool,
    },
    /// Run the analysis service.
    Serve {
        /// Listen address; port 0 picks a free port.
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Reference store directory.
        #[arg(long)]
        store: PathBuf,
        /// Alphabet file.
        #[arg(long)]
        alphabet: PathBuf,
    },
}

#[derive(Subcommand)]
enum StoreCommand {
    /// Admit a verified legitimate sequence file into a store directory.
    Add {
        /// Store directory; one subdirectory per app.
        store: PathBuf,
        /// Sequence file to admit.
        sequence: PathBuf,
        /// Confirm the sample was verified as legitimate.
        #[arg(long)]
        verified: bool,
        /// Per-app capacity used when creating a new app directory.
        #[arg(long, default_value_t = DEFAULT_CAPACITY)]
        capacity: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.overrides.resolve() {
        Ok(config) => config,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command, &config) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command, config: &PipelineConfig) -> anyhow::Result<ExitCode> {
    match command {
        Command::Ingest {
            input,
            output,
            app_id,
            device_id,
            label,
            strict,
        } => {
            let reader = BufReader::new(
                File::open(&input).with_context(|| format!("open {}", input.display()))?,
            );
            let (events, diag) = parse_strace(reader, strict)?;
            let file = SequenceFile {
                app_id,
                device_id,
                label,
                names: events.into_iter().map(|e| e.name).collect(),
            };
            file.write_to(&output)?;
            eprintln!(
                "{} events, {} skipped, {} blank, {} malformed -> {}",
                diag.events,
                diag.skipped_lines,
                diag.blank_lines,
                diag.malformed_lines,
                output.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Store { action } => match action {
            StoreCommand::Add {
                store,
                sequence,
                verified,
                capacity,
            } => store_add(&store, &sequence, verified, capacity),
        },
        Command::Analyze {
            sequence,
            store,
            alphabet,
            app_id,
        } => analyze(&sequence, &store, &alphabet, app_id.as_deref(), config),
        Command::CrossValidate { corpus, output } => {
            let (corpus, _) = synth::load_corpus(&corpus)?;
            let report = eval::cross_validate(&corpus, config)?;
            emit(output.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepConfidence {
            corpus,
            length,
            grid,
            output,
        } => {
            let (corpus, _) = synth::load_corpus(&corpus)?;
            let grid = if grid.is_empty() {
                eval::default_confidence_grid()
            } else {
                grid
            };
            let report = eval::sweep_confidence(&corpus, &grid, length, config)?;
            emit(output.as_deref(), &report.to_csv())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepLength {
            corpus,
            grid,
            output,
        } => {
            let (corpus, _) = synth::load_corpus(&corpus)?;
            let grid = if grid.is_empty() {
                eval::default_length_grid()
            } else {
                grid
            };
            let report = eval::sweep_length(&corpus, &grid, config)?;
            emit(output.as_deref(), &report.to_csv())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportMatrix {
            files,
            alphabet,
            output,
        } => {
            let alphabet = Alphabet::read_from(&alphabet)?;
            let mut samples = Vec::with_capacity(files.len());
            for path in &files {
                let file = SequenceFile::read_from(path)?;
                let (raw, _) = file.encode(&alphabet);
                samples.push(bootscan_core::trace::preprocess(&raw, config.max_len)?);
            }
            let csv = eval::export_score_matrix(&samples, &config.scheme)?;
            emit(output.as_deref(), &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth {
            out_dir,
            profiles,
            legit_per_app,
            malicious_per_app,
            base_length,
            full_scale,
        } => {
            let mut corpus_config = if full_scale {
                CorpusConfig::full_scale()
            } else {
                CorpusConfig {
                    profiles,
                    legit_per_app,
                    malicious_per_app,
                    base_length,
                    ..Default::default()
                }
            };
            // --seed overrides the corpus seed too, so one flag pins the
            // whole experiment.
            if config.plan.seed != 0 {
                corpus_config.seed = config.plan.seed;
            }
            corpus_config.max_len = config.max_len;
            let corpus = synth::generate(&corpus_config)?;
            synth::write_corpus(&corpus, &corpus_config, &out_dir)?;
            println!(
                "corpus fingerprint {:016x} -> {}",
                synth::corpus_fingerprint(&corpus),
                out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            addr,
            store,
            alphabet,
        } => {
            let alphabet = Alphabet::read_from(&alphabet)?;
            let store = ReferenceStore::load(&store, &alphabet, config.max_len)?;
            service::serve(&addr, store, alphabet, config.clone())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn analyze(
    sequence: &Path,
    store_dir: &Path,
    alphabet_path: &Path,
    app_id: Option<&str>,
    config: &PipelineConfig,
) -> anyhow::Result<ExitCode> {
    let alphabet = Alphabet::read_from(alphabet_path)?;
    let file = SequenceFile::read_from(sequence)?;
    let app_id = app_id.unwrap_or(&file.app_id).to_string();
    let store = ReferenceStore::load(store_dir, &alphabet, config.max_len)?;
    let (raw, unknown) = file.encode(&alphabet);
    if unknown > 0 {
        eprintln!("{unknown} syscall name(s) not in the alphabet, mapped to UNKNOWN");
    }
    let (verdict, _) = eval::analyze(&raw, &store, &app_id, config)?;
    let record = VerdictRecord::from_verdict(&app_id, &file.device_id, &verdict);
    println!("{}", serde_json::to_string(&record)?);
    Ok(if verdict.label == Label::Malicious {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn store_add(
    store: &Path,
    sequence: &Path,
    verified: bool,
    capacity: usize,
) -> anyhow::Result<ExitCode> {
    let file = SequenceFile::read_from(sequence)?;
    if file.label != Label::Legitimate {
        bail!("only legitimate sequences may enter the store (got label {})", file.label);
    }
    if !verified {
        bail!("refusing unverified sample; pass --verified after review");
    }
    if capacity == 0 {
        bail!("--capacity must be >= 1");
    }
    let app_dir = store.join(&file.app_id);
    std::fs::create_dir_all(&app_dir)?;
    let manifest_path = app_dir.join("manifest.json");
    let mut manifest = if manifest_path.exists() {
        Manifest::read_from(&manifest_path)?
    } else {
        Manifest {
            capacity,
            entries: Vec::new(),
        }
    };

    let mut seq_no = manifest.entries.len();
    let file_name = loop {
        let candidate = format!("seq_{seq_no:06}.seq");
        if !app_dir.join(&candidate).exists() {
            break candidate;
        }
        seq_no += 1;
    };
    file.write_to(&app_dir.join(&file_name))?;
    manifest.entries.push(file_name.clone());
    while manifest.entries.len() > manifest.capacity {
        let evicted = manifest.entries.remove(0);
        std::fs::remove_file(app_dir.join(&evicted)).ok();
        eprintln!("evicted oldest entry {evicted}");
    }
    manifest.write_to(&manifest_path)?;
    println!(
        "{} -> {} ({} of {} slots used)",
        sequence.display(),
        app_dir.join(&file_name).display(),
        manifest.entries.len(),
        manifest.capacity
    );
    Ok(ExitCode::SUCCESS)
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| anyhow!("write {}: {e}", path.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}
