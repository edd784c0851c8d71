use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use seedner_core::datasets::{export_conll, import_conll};
use seedner_core::gateway::write_response;
use seedner_core::harvest::usable_rate_table;
use seedner_core::{
    compile, evaluate, plan_calls, remap_labels, run_plan, subset_ladder, ChatClient, Dataset,
    EvalReport, HarvestReport, Harvester, LabelSpace, MockProvider, Provider, ProviderKind,
    RawResponse, RemapPolicy, RunSummary, SizeLadder,
};

use crate::manifest::{ExperimentManifest, ProviderSpec};

/// Runtime knobs that do not belong in the manifest.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub parallelism: usize,
    /// Answer every call with the mock provider, whatever the manifest says.
    pub force_mock: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallelism: 8,
            force_mock: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateOutcome {
    pub responses_path: PathBuf,
    pub planned: usize,
    /// Calls answered by an earlier run and left alone.
    pub reused: usize,
    pub issued: usize,
    pub summary: RunSummary,
}

impl GenerateOutcome {
    pub fn failed(&self) -> usize {
        self.summary.failed
    }
}

/// The organic dataset in the manifest's label space.
pub fn load_organic(manifest: &ExperimentManifest) -> Result<Dataset> {
    let path = &manifest.organic_path;
    let organic = Dataset::load(path, &manifest.label_space)
        .with_context(|| format!("loading organic data {}", path.display()))?;
    if organic.space == manifest.label_space {
        return Ok(organic);
    }
    tracing::info!(
        from = ?organic.space.entity_types(),
        to = ?manifest.label_space.entity_types(),
        "remapping organic data into the manifest label space"
    );
    Ok(remap_labels(
        &organic,
        &manifest.label_space,
        &RemapPolicy::default(),
    )?)
}

fn build_provider(
    manifest: &ExperimentManifest,
    opts: &RunOptions,
) -> Result<(Box<dyn Provider>, ProviderKind)> {
    let mock = |profile| -> Result<(Box<dyn Provider>, ProviderKind)> {
        let provider = MockProvider::new(profile, manifest.label_space.clone())?;
        Ok((Box::new(provider), ProviderKind::Structured))
    };
    match &manifest.provider {
        ProviderSpec::Mock(profile) => mock(profile.clone()),
        ProviderSpec::OpenaiCompatible(_) if opts.force_mock => {
            mock(seedner_core::InjectionProfile {
                rng_seed: manifest.plan.rng_seed,
                ..Default::default()
            })
        }
        ProviderSpec::OpenaiCompatible(config) => {
            let kind = config.provider_kind();
            let client = ChatClient::from_env(config.clone())?;
            Ok((Box::new(client), kind))
        }
    }
}

/// Reads whatever an earlier run left behind. A torn final line from an
/// interrupted write is skipped rather than treated as an error.
fn read_existing(path: &Path) -> Result<Vec<RawResponse>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("opening {}", path.display())),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawResponse>(&line) {
            Ok(r) => out.push(r),
            Err(e) => tracing::warn!(line = i + 1, error = %e, "skipping unreadable response line"),
        }
    }
    Ok(out)
}

fn write_sorted(path: &Path, responses: &BTreeMap<usize, RawResponse>) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(
            File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?,
        );
        for response in responses.values() {
            write_response(&mut w, response)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("replacing {}", path.display()))
}

/// Issues every planned call that has no successful response on disk yet,
/// appending replies as they arrive, then rewrites the file in call order.
pub fn generate(manifest: &ExperimentManifest, opts: &RunOptions) -> Result<GenerateOutcome> {
    manifest.record()?;
    let organic = load_organic(manifest)?;
    let (provider, kind) = build_provider(manifest, opts)?;
    let path = manifest.responses_path();

    let mut done: BTreeMap<usize, RawResponse> = BTreeMap::new();
    for r in read_existing(&path)? {
        if r.call_index < manifest.plan.calls && !r.is_error() {
            done.entry(r.call_index).or_insert(r);
        }
    }
    let reused = done.len();
    write_sorted(&path, &done)?;

    let bundles: Vec<_> = plan_calls(&manifest.plan, &organic, kind)?
        .into_iter()
        .filter(|b| !done.contains_key(&b.call_index))
        .collect();
    tracing::info!(
        planned = manifest.plan.calls,
        reused,
        issuing = bundles.len(),
        provider = %provider.name(),
        "starting generation"
    );

    let mut append = BufWriter::new(
        OpenOptions::new()
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?,
    );
    let mut fresh = Vec::with_capacity(bundles.len());
    let mut write_error = None;
    let summary = run_plan(&bundles, provider.as_ref(), opts.parallelism, |response| {
        if write_error.is_none() {
            if let Err(e) = write_response(&mut append, &response).and_then(|_| append.flush()) {
                write_error = Some(e);
            }
        }
        fresh.push(response);
    });
    drop(append);
    if let Some(e) = write_error {
        return Err(e).with_context(|| format!("appending to {}", path.display()));
    }

    for r in fresh {
        done.insert(r.call_index, r);
    }
    write_sorted(&path, &done)?;

    Ok(GenerateOutcome {
        responses_path: path,
        planned: manifest.plan.calls,
        reused,
        issued: bundles.len(),
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct HarvestOutcome {
    pub report: HarvestReport,
    pub report_path: PathBuf,
    pub dataset: Option<Dataset>,
    pub dataset_path: PathBuf,
}

fn generator_name(manifest: &ExperimentManifest, opts: &RunOptions) -> String {
    match &manifest.provider {
        ProviderSpec::OpenaiCompatible(c) if !opts.force_mock => c.model_name.clone(),
        _ => "mock".to_string(),
    }
}

/// Validates and deduplicates the raw responses, writes the report and, if
/// anything survived, the compiled synthetic dataset with its sidecar.
pub fn harvest(
    manifest: &ExperimentManifest,
    responses: Option<&Path>,
    opts: &RunOptions,
) -> Result<HarvestOutcome> {
    let organic = load_organic(manifest)?;
    let responses_path = responses
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest.responses_path());
    let file = File::open(&responses_path)
        .with_context(|| format!("opening {}", responses_path.display()))?;
    let raw = seedner_core::gateway::read_responses(BufReader::new(file))
        .with_context(|| format!("reading {}", responses_path.display()))?;

    let report = Harvester::new(&manifest.label_space, manifest.validation)
        .seeds(&organic.points)
        .run(raw, &manifest.plan);
    fs::create_dir_all(&manifest.output_dir)?;
    let report_path = manifest.report_path();
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", report_path.display()))?;

    let dataset_path = manifest.dataset_path();
    let dataset = if report.accepted.is_empty() {
        None
    } else {
        let name = format!("{}-synthetic", manifest.language.to_lowercase());
        let ds = compile(
            &report,
            manifest.plan.compile_cap,
            manifest.plan.rng_seed,
            &name,
            &manifest.label_space,
            &generator_name(manifest, opts),
        )?;
        ds.save(&dataset_path)?;
        Some(ds)
    };
    Ok(HarvestOutcome {
        report,
        report_path,
        dataset,
        dataset_path,
    })
}

/// Writes one dataset per ladder rung next to `out_dir/<stem>_<size>.jsonl`.
pub fn subset(
    dataset_path: &Path,
    ladder: &SizeLadder,
    space: &LabelSpace,
    out_dir: &Path,
) -> Result<Vec<(PathBuf, usize, bool)>> {
    let dataset = read_dataset(dataset_path, space, None)?;
    let stem = dataset_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for rung in subset_ladder(&dataset, ladder)? {
        let path = out_dir.join(format!("{stem}_{}.jsonl", rung.requested));
        rung.dataset.save(&path)?;
        if rung.clipped {
            tracing::warn!(
                requested = rung.requested,
                available = rung.dataset.len(),
                "rung clipped to dataset size"
            );
        }
        written.push((path, rung.dataset.len(), rung.clipped));
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Jsonl,
    Conll,
}

impl Format {
    pub fn infer(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => Ok(Format::Jsonl),
            Some("conll" | "iob" | "bio" | "tsv" | "txt") => Ok(Format::Conll),
            _ => bail!(
                "cannot tell the format of {} from its extension; pass it explicitly",
                path.display()
            ),
        }
    }
}

fn read_dataset(path: &Path, space: &LabelSpace, format: Option<Format>) -> Result<Dataset> {
    let format = match format {
        Some(f) => f,
        None => Format::infer(path)?,
    };
    let ds = match format {
        Format::Jsonl => Dataset::load(path, space),
        Format::Conll => import_conll(path, space),
    };
    ds.with_context(|| format!("reading {}", path.display()))
}

pub fn convert(
    input: &Path,
    output: &Path,
    space: &LabelSpace,
    from: Option<Format>,
    to: Option<Format>,
) -> Result<usize> {
    let dataset = read_dataset(input, space, from)?;
    let to = match to {
        Some(f) => f,
        None => Format::infer(output)?,
    };
    match to {
        Format::Jsonl => dataset.save(output)?,
        Format::Conll => export_conll(&dataset, output)?,
    }
    Ok(dataset.len())
}

fn report_label(path: &Path) -> String {
    let named_default = path.file_name().and_then(|n| n.to_str()) == Some("harvest_report.json");
    let source = if named_default {
        path.parent().and_then(|p| p.file_name())
    } else {
        path.file_stem()
    };
    source
        .and_then(|s| s.to_str())
        .unwrap_or("report")
        .to_string()
}

/// Usable-rate table over one or more harvest reports. A directory stands
/// for the `harvest_report.json` inside it.
pub fn stats(paths: &[PathBuf]) -> Result<String> {
    let mut reports = Vec::with_capacity(paths.len());
    for path in paths {
        let path = if path.is_dir() {
            path.join("harvest_report.json")
        } else {
            path.clone()
        };
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let report: HarvestReport =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        reports.push((report_label(&path), report));
    }
    let rows: Vec<(String, &HarvestReport)> = reports
        .iter()
        .map(|(label, r)| (label.clone(), r))
        .collect();
    Ok(usable_rate_table(&rows))
}

/// Scores a prediction file against gold. The prediction is read in the
/// gold label space unless it carries its own sidecar.
pub fn evaluate_files(gold: &Path, pred: &Path, space: &LabelSpace) -> Result<EvalReport> {
    let gold = read_dataset(gold, space, None)?;
    let pred = read_dataset(pred, &gold.space, None)?;
    Ok(evaluate(&gold, &pred)?)
}
