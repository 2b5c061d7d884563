use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rectex_core::blackbox::{serve_oracle, train_forest, RandomForest};
use rectex_core::data::{load_dataset, split, LoadOptions};
use rectex_core::pipeline::{self, PurityRow, SweepRow};
use rectex_core::synthetic::{planted_dataset, PlantedSpec};
use rectex_core::{Classifier, RuleSetDocument, RunConfig};

/// Rule-like explanations of black-box tabular classifiers.
#[derive(Parser)]
#[command(name = "rectex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file.
    #[arg(short, long)]
    config: PathBuf,

    /// Override a setting, e.g. `--set rank=6`. Relative paths resolve
    /// against the working directory.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Override the output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::from_file(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        let cwd = Path::new(".");
        for o in &self.overrides {
            let Some((k, v)) = o.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {o:?}");
            };
            config.set(k.trim(), v.trim(), cwd)?;
        }
        if let Some(out) = &self.output {
            config.output = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract rule sets for every category and write the reports.
    Extract {
        #[command(flatten)]
        config: ConfigArgs,
        /// Start from contribution matrices written by `explain-dump`.
        #[arg(long)]
        contributions: Option<PathBuf>,
    },
    /// Macro F1 for each NMF rank, sharing one set of contributions.
    Ksweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long, value_delimiter = ',', default_values_t = [2, 4, 6, 8, 10])]
        k: Vec<usize>,
    },
    /// Cluster purity of the embedded explanations for each cluster count.
    Purity {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long, value_delimiter = ',', default_values_t = [2, 3, 4, 5, 6, 7])]
        r: Vec<usize>,
    },
    /// Train the configured forest, report accuracy and save it as JSON.
    TrainModel {
        #[command(flatten)]
        config: ConfigArgs,
        /// Where to write the model; defaults to `<output>/model.json`.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Write the catalog and the contribution matrix of every category.
    ExplainDump {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render a structured rule set as a text report.
    Render { rules: PathBuf },
    /// Answer prediction requests on stdin/stdout with a saved forest.
    ServeOracle {
        #[arg(long)]
        model: PathBuf,
    },
    /// Write a dataset labeled by a planted rectangle.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 600)]
        rows: usize,
        #[arg(long, default_value_t = 2)]
        noise: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Extract {
            config,
            contributions,
        } => {
            let config = config.load()?;
            let run = match &contributions {
                Some(dir) => pipeline::run_from_contributions(&config, dir)?,
                None => pipeline::run_extract(&config)?,
            };
            pipeline::write_outputs(&config, &run)?;
            write!(out, "{}", run.document.render()?)?;
            writeln!(out, "\nwrote {}", config.output.display())?;
        }
        Command::Ksweep { config, k } => {
            let config = config.load()?;
            let rows = pipeline::run_ksweep(&config, &k)?;
            write_sweep(&mut out, &rows)?;
        }
        Command::Purity { config, r } => {
            let config = config.load()?;
            let rows = pipeline::run_purity(&config, &r)?;
            write_purity(&mut out, &rows)?;
        }
        Command::TrainModel { config, model_out } => {
            let config = config.load()?;
            let forest_config = config
                .forest_config()
                .context("train-model needs model = forest")?;
            let options = LoadOptions {
                delimiter: config.delimiter,
                label_column: config.label_column.clone(),
            };
            let data = load_dataset(&config.dataset, &options)?;
            let (train, test) = split(&data, config.train_fraction, config.seed)?;
            let forest = train_forest(&train, &forest_config)?;
            let path = model_out.unwrap_or_else(|| config.output.join("model.json"));
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, forest.to_json())
                .with_context(|| format!("writing {}", path.display()))?;
            for (name, part) in [("train", &train), ("test", &test)] {
                if let Some(acc) = rectex_core::blackbox::accuracy(&forest, part)? {
                    writeln!(out, "{name} accuracy: {acc:.4} ({} rows)", part.len())?;
                }
            }
            writeln!(out, "wrote {}", path.display())?;
        }
        Command::ExplainDump { config } => {
            let config = config.load()?;
            let prepared = pipeline::prepare(&config)?;
            let matrices = pipeline::contributions(&config, &prepared)?;
            pipeline::write_contributions(&config.output, &prepared.catalog, &matrices)?;
            writeln!(
                out,
                "wrote {} contribution matrices ({} features x {} instances) to {}",
                matrices.len(),
                prepared.catalog.len(),
                prepared.train.len(),
                config.output.display()
            )?;
        }
        Command::Render { rules } => {
            let text = std::fs::read_to_string(&rules)
                .with_context(|| format!("reading {}", rules.display()))?;
            write!(out, "{}", RuleSetDocument::from_json(&text)?.render()?)?;
        }
        Command::ServeOracle { model } => {
            drop(out);
            let text = std::fs::read_to_string(&model)
                .with_context(|| format!("reading {}", model.display()))?;
            let forest = RandomForest::from_json(&text)?;
            let stdin = io::stdin();
            serve_oracle(
                &forest as &dyn Classifier,
                stdin.lock(),
                BufWriter::new(io::stdout().lock()),
            )?;
            return Ok(());
        }
        Command::Synth {
            out: path,
            rows,
            noise,
            seed,
        } => {
            let spec = PlantedSpec {
                rows,
                noise_attributes: noise,
                seed,
                ..Default::default()
            };
            let (data, _) = planted_dataset(&spec)?;
            data.save(&path, &LoadOptions::with_label("class"))?;
            writeln!(
                out,
                "wrote {} rows to {} (category A iff {} < x1 & x2 <= {})",
                rows,
                path.display(),
                spec.lower,
                spec.upper
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_sweep(out: &mut impl Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "k\tmacro_f1_train\tmacro_f1_test")?;
    for row in rows {
        match &row.result {
            Ok((train, test)) => writeln!(out, "{}\t{train:.4}\t{test:.4}", row.k)?,
            Err(e) => writeln!(out, "{}\tfailed: {e}", row.k)?,
        }
    }
    Ok(())
}

fn write_purity(out: &mut impl Write, rows: &[PurityRow]) -> Result<()> {
    writeln!(out, "r\tclusters\tmedian\tmean\tmin")?;
    for row in rows {
        match &row.summary {
            Ok(s) => writeln!(
                out,
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}",
                s.r, s.clusters, s.median, s.mean, s.min
            )?,
            Err(e) => writeln!(out, "{}\tfailed: {e}", row.r)?,
        }
    }
    Ok(())
}
