//! Command-line driver: one JSON manifest per experiment, one subcommand per
//! pipeline stage.

pub mod commands;
pub mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use seedner_core::{LabelSpace, SizeLadder};

use commands::{Format, RunOptions};
use manifest::ExperimentManifest;

#[derive(Debug, Parser)]
#[command(
    name = "seedner",
    version,
    about = "Synthetic NER data from a few seed examples"
)]
pub struct Cli {
    /// Experiment manifest (JSON).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Override every RNG seed in the manifest.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Concurrent provider calls.
    #[arg(long, global = true, default_value_t = 8)]
    pub parallelism: usize,

    /// Use the offline mock provider instead of the configured endpoint.
    #[arg(long, global = true)]
    pub mock: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prompt the provider and store one raw response per call (resumable).
    Generate,
    /// Validate, deduplicate and compile raw responses into a dataset.
    Harvest {
        /// Raw responses; defaults to responses.jsonl in the output directory.
        #[arg(long)]
        responses: Option<PathBuf>,
    },
    /// Cut nested size-ladder subsets out of a dataset.
    Subset {
        dataset: PathBuf,
        /// Rung sizes; defaults to the manifest ladder.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        types: Option<Vec<String>>,
    },
    /// Convert between JSONL and CoNLL.
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum)]
        from: Option<Format>,
        #[arg(long, value_enum)]
        to: Option<Format>,
        /// Entity types, e.g. PER,ORG,LOC; defaults to the manifest label space.
        #[arg(long, value_delimiter = ',')]
        types: Option<Vec<String>>,
    },
    /// Print the usable-rate table for harvest reports.
    Stats {
        /// Report files or output directories; defaults to the manifest's.
        reports: Vec<PathBuf>,
    },
    /// Exact-span precision, recall and F1 of predictions against gold.
    Evaluate {
        gold: PathBuf,
        pred: PathBuf,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        types: Option<Vec<String>>,
    },
}

impl Cli {
    fn options(&self) -> RunOptions {
        RunOptions {
            parallelism: self.parallelism.max(1),
            force_mock: self.mock,
        }
    }

    fn load_manifest(&self) -> Result<Option<ExperimentManifest>> {
        let Some(path) = &self.manifest else {
            return Ok(None);
        };
        let mut manifest = ExperimentManifest::load(path)?;
        if let Some(seed) = self.seed {
            manifest.reseed(seed);
        }
        Ok(Some(manifest))
    }

    fn require_manifest(&self) -> Result<ExperimentManifest> {
        match self.load_manifest()? {
            Some(m) => Ok(m),
            None => bail!("this subcommand needs --manifest"),
        }
    }

    fn space(&self, types: &Option<Vec<String>>) -> Result<LabelSpace> {
        if let Some(types) = types {
            return LabelSpace::from_types(types).context("invalid --types");
        }
        Ok(self
            .load_manifest()?
            .map(|m| m.label_space)
            .unwrap_or_default())
    }
}

/// Runs one subcommand, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let opts = cli.options();
    match &cli.command {
        Command::Generate => {
            let manifest = cli.require_manifest()?;
            let outcome = commands::generate(&manifest, &opts)?;
            writeln!(
                out,
                "{}: {} planned, {} reused, {} issued, {} failed, {} truncated",
                outcome.responses_path.display(),
                outcome.planned,
                outcome.reused,
                outcome.issued,
                outcome.summary.failed,
                outcome.summary.truncated,
            )?;
            if outcome.failed() > 0 {
                bail!(
                    "{} of {} calls failed; rerun generate to retry them",
                    outcome.failed(),
                    outcome.issued
                );
            }
        }
        Command::Harvest { responses } => {
            let manifest = cli.require_manifest()?;
            let outcome = commands::harvest(&manifest, responses.as_deref(), &opts)?;
            let r = &outcome.report;
            writeln!(
                out,
                "{} candidates, {} accepted, {} rejected, usable rate {:.1}%",
                r.candidates_seen,
                r.accepted_count,
                r.rejected(),
                r.usable_rate * 100.0
            )?;
            writeln!(out, "report: {}", outcome.report_path.display())?;
            match &outcome.dataset {
                Some(ds) => writeln!(
                    out,
                    "dataset: {} ({} datapoints)",
                    outcome.dataset_path.display(),
                    ds.len()
                )?,
                None => bail!("no candidate survived validation; nothing to compile"),
            }
        }
        Command::Subset {
            dataset,
            sizes,
            out_dir,
            types,
        } => {
            let manifest = cli.load_manifest()?;
            let mut ladder = manifest
                .as_ref()
                .map(|m| m.ladder.clone())
                .unwrap_or_default();
            if let Some(sizes) = sizes {
                ladder = SizeLadder::new(sizes.clone(), ladder.rng_seed)?;
            }
            if let Some(seed) = cli.seed {
                ladder.rng_seed = seed;
            }
            let out_dir = out_dir
                .clone()
                .unwrap_or_else(|| dataset.parent().unwrap_or(Path::new(".")).to_path_buf());
            for (path, len, clipped) in
                commands::subset(dataset, &ladder, &cli.space(types)?, &out_dir)?
            {
                let note = if clipped { " (clipped)" } else { "" };
                writeln!(out, "{}: {len}{note}", path.display())?;
            }
        }
        Command::Convert {
            input,
            output,
            from,
            to,
            types,
        } => {
            let n = commands::convert(input, output, &cli.space(types)?, *from, *to)?;
            writeln!(out, "{}: {n} datapoints", output.display())?;
        }
        Command::Stats { reports } => {
            let paths = if reports.is_empty() {
                vec![cli.require_manifest()?.report_path()]
            } else {
                reports.clone()
            };
            write!(out, "{}", commands::stats(&paths)?)?;
        }
        Command::Evaluate {
            gold,
            pred,
            json,
            out: json_out,
            types,
        } => {
            let report = commands::evaluate_files(gold, pred, &cli.space(types)?)?;
            let body = serde_json::to_string_pretty(&report)?;
            if let Some(path) = json_out {
                std::fs::write(path, body.clone() + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            if *json {
                writeln!(out, "{body}")?;
            } else {
                write!(out, "{}", report.to_table())?;
            }
        }
    }
    Ok(())
}
