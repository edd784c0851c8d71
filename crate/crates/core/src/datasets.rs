//! Dataset container, JSONL and CoNLL interchange, cross-family label
//! remapping, compilation of harvested data and data-size ladders.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{decode_spans, CorpusError, DataPoint, LabelSpace, Tag, TagId};
use crate::harvest::HarvestReport;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset name must not be empty")]
    EmptyName,
    #[error("datapoint {index} is invalid: {message}")]
    InvalidPoint { index: usize, message: String },
    #[error("entity type {0:?} has no counterpart in the target label space")]
    UnmappedType(String),
    #[error("nothing to compile: the harvest accepted no datapoints")]
    NothingToCompile,
    #[error("compile cap must be at least 1")]
    ZeroCap,
    #[error("size ladder must be non-empty and strictly increasing, got {0:?}")]
    InvalidLadder(Vec<usize>),
    #[error("token {token:?} cannot be written as CoNLL")]
    UnwritableToken { token: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),
}

impl DatasetError {
    fn io(path: &Path, source: io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceKind {
    /// Human-annotated or human-validated.
    #[default]
    Organic,
    /// Produced by a generator model.
    Synthetic,
    /// Automatically labeled, e.g. from knowledge-base cross links.
    Automatic,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    #[serde(default)]
    pub generator: Option<String>,
    #[serde(default)]
    pub rng_seed: Option<u64>,
}

impl Provenance {
    pub fn organic() -> Self {
        Self::default()
    }

    pub fn synthetic(generator: impl Into<String>, rng_seed: u64) -> Self {
        Self {
            kind: ProvenanceKind::Synthetic,
            generator: Some(generator.into()),
            rng_seed: Some(rng_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub space: LabelSpace,
    pub points: Vec<DataPoint>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset, checking every point against `space`.
    pub fn new(
        name: impl Into<String>,
        space: LabelSpace,
        points: Vec<DataPoint>,
        provenance: Provenance,
    ) -> Result<Self, DatasetError> {
        let name = name.into();
        if name.is_empty() {
            return Err(DatasetError::EmptyName);
        }
        for (index, point) in points.iter().enumerate() {
            point
                .check(&space)
                .map_err(|message| DatasetError::InvalidPoint { index, message })?;
        }
        Ok(Self {
            name,
            space,
            points,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn derived(&self, name: String, points: Vec<DataPoint>) -> Self {
        Self {
            name,
            space: self.space.clone(),
            points,
            provenance: self.provenance.clone(),
        }
    }

    /// Writes `<path>` as JSONL plus the `<stem>.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        export_jsonl(self, path)?;
        let meta = DatasetMeta::describe(self);
        let sidecar = sidecar_path(path);
        let body = serde_json::to_string_pretty(&meta)?;
        fs::write(&sidecar, body + "\n").map_err(|e| DatasetError::io(&sidecar, e))
    }

    /// Reads a JSONL dataset. Name, label space and provenance come from the
    /// sidecar when one exists, otherwise from `fallback_space` and the file
    /// stem.
    pub fn load(path: &Path, fallback_space: &LabelSpace) -> Result<Self, DatasetError> {
        let sidecar = sidecar_path(path);
        match fs::read_to_string(&sidecar) {
            Ok(text) => {
                let meta: DatasetMeta = serde_json::from_str(&text)?;
                let mut ds = import_jsonl(path, &meta.space)?;
                ds.name = meta.name;
                ds.provenance = Provenance {
                    kind: meta.provenance,
                    generator: meta.generator,
                    rng_seed: meta.rng_seed,
                };
                Ok(ds)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => import_jsonl(path, fallback_space),
            Err(e) => Err(DatasetError::io(&sidecar, e)),
        }
    }
}

/// Contents of the `<dataset>.meta.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub space: LabelSpace,
    pub provenance: ProvenanceKind,
    pub generator: Option<String>,
    pub rng_seed: Option<u64>,
    pub counts: DatasetCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub datapoints: usize,
    pub tokens: usize,
    pub entities: BTreeMap<String, usize>,
}

impl DatasetMeta {
    pub fn describe(ds: &Dataset) -> Self {
        let mut entities: BTreeMap<String, usize> = ds
            .space
            .entity_types()
            .iter()
            .map(|t| (t.clone(), 0))
            .collect();
        for point in &ds.points {
            // points were validated on construction
            if let Ok(spans) = decode_spans(&point.tags, &ds.space) {
                for span in spans {
                    *entities.entry(span.entity_type).or_default() += 1;
                }
            }
        }
        Self {
            name: ds.name.clone(),
            space: ds.space.clone(),
            provenance: ds.provenance.kind,
            generator: ds.provenance.generator.clone(),
            rng_seed: ds.provenance.rng_seed,
            counts: DatasetCounts {
                datapoints: ds.len(),
                tokens: ds.points.iter().map(DataPoint::len).sum(),
                entities,
            },
        }
    }
}

/// `data/train.jsonl` → `data/train.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

fn stem_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "dataset".to_string())
}

pub fn read_jsonl<R: BufRead>(
    reader: R,
    space: &LabelSpace,
) -> Result<Vec<DataPoint>, DatasetError> {
    let mut points = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let point: DataPoint = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        point.check(space).map_err(|message| DatasetError::Parse {
            line: line_no,
            message,
        })?;
        points.push(point);
    }
    Ok(points)
}

pub fn write_jsonl<W: Write>(mut writer: W, points: &[DataPoint]) -> io::Result<()> {
    for point in points {
        serde_json::to_writer(&mut writer, point)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Reads a JSONL file of `{"id"?, "tokens", "ner_tags"}` lines as an organic
/// dataset named after the file stem.
pub fn import_jsonl(path: &Path, space: &LabelSpace) -> Result<Dataset, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let points = read_jsonl(BufReader::new(file), space)?;
    Dataset::new(
        stem_name(path),
        space.clone(),
        points,
        Provenance::organic(),
    )
}

pub fn export_jsonl(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    write_jsonl(BufWriter::new(file), &dataset.points).map_err(|e| DatasetError::io(path, e))
}

/// Parses `token<TAB>tag` lines with blank-line sentence breaks. Lines
/// without a tab are split on their last whitespace run; `-DOCSTART-` lines
/// are skipped.
pub fn read_conll<R: Read>(
    mut reader: R,
    space: &LabelSpace,
) -> Result<Vec<DataPoint>, DatasetError> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| DatasetError::Parse {
            line: 0,
            message: e.to_string(),
        })?;

    let mut points = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut blank_run = 0usize;
    let flush = |tokens: &mut Vec<String>, tags: &mut Vec<TagId>, points: &mut Vec<DataPoint>| {
        if !tokens.is_empty() {
            points.push(DataPoint::new(std::mem::take(tokens), std::mem::take(tags)));
        }
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            blank_run += 1;
            if blank_run == 2 {
                tracing::warn!(line = line_no, "skipping empty CoNLL sentence");
            }
            flush(&mut tokens, &mut tags, &mut points);
            continue;
        }
        blank_run = 0;
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        let (token, tag) = match line.split_once('\t') {
            Some((token, rest)) => (token, rest.rsplit('\t').next().unwrap_or(rest)),
            None => line
                .trim()
                .rsplit_once(char::is_whitespace)
                .ok_or_else(|| DatasetError::Parse {
                    line: line_no,
                    message: format!("expected `token<TAB>tag`, got {line:?}"),
                })?,
        };
        let token = token.trim();
        let tag = tag.trim();
        let id = space.id(tag).ok_or_else(|| DatasetError::Parse {
            line: line_no,
            message: format!("unknown tag name {tag:?}"),
        })?;
        if token.is_empty() {
            return Err(DatasetError::Parse {
                line: line_no,
                message: "empty token".to_string(),
            });
        }
        tokens.push(token.to_string());
        tags.push(id);
    }
    flush(&mut tokens, &mut tags, &mut points);
    Ok(points)
}

pub fn write_conll<W: Write>(
    mut writer: W,
    points: &[DataPoint],
    space: &LabelSpace,
) -> Result<(), DatasetError> {
    let io_err = |e| DatasetError::io(Path::new("<conll>"), e);
    for (i, point) in points.iter().enumerate() {
        if i > 0 {
            writer.write_all(b"\n").map_err(io_err)?;
        }
        for (token, &tag) in point.tokens.iter().zip(&point.tags) {
            if token.contains('\t') || token.trim() != token {
                return Err(DatasetError::UnwritableToken {
                    token: token.clone(),
                });
            }
            let name = space.name(tag).ok_or(CorpusError::InvalidTagId {
                id: tag,
                position: 0,
                size: space.len(),
            })?;
            writeln!(writer, "{token}\t{name}").map_err(io_err)?;
        }
    }
    writer.flush().map_err(io_err)
}

pub fn import_conll(path: &Path, space: &LabelSpace) -> Result<Dataset, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let points = read_conll(BufReader::new(file), space)?;
    Dataset::new(
        stem_name(path),
        space.clone(),
        points,
        Provenance::organic(),
    )
}

pub fn export_conll(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    write_conll(BufWriter::new(file), &dataset.points, &dataset.space)
}

/// How entity types of a source space are carried into a target space.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemapPolicy {
    /// Explicit source → target renames; `None` erases the type to `O`.
    /// Types not listed map to the same-named target type when it exists.
    pub mapping: BTreeMap<String, Option<String>>,
    /// Fail instead of erasing types with no target counterpart.
    pub strict: bool,
}

impl RemapPolicy {
    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::default()
        }
    }

    pub fn rename(mut self, from: impl Into<String>, to: impl Into<String>) -> Self {
        self.mapping.insert(from.into(), Some(to.into()));
        self
    }

    pub fn erase(mut self, ty: impl Into<String>) -> Self {
        self.mapping.insert(ty.into(), None);
        self
    }
}

/// Moves a dataset into `target`. Spans of erased types become `O`; all other
/// spans keep their boundaries. Tags are mapped position by position, so
/// BIO-inconsistent input stays byte-identical under an identity mapping.
pub fn remap_labels(
    dataset: &Dataset,
    target: &LabelSpace,
    policy: &RemapPolicy,
) -> Result<Dataset, DatasetError> {
    let source = &dataset.space;
    let mut type_map: Vec<Option<usize>> = Vec::with_capacity(source.entity_types().len());
    for ty in source.entity_types() {
        let mapped = match policy.mapping.get(ty) {
            Some(None) => None,
            Some(Some(name)) => Some(
                target
                    .type_index(name)
                    .ok_or_else(|| DatasetError::UnmappedType(name.clone()))?,
            ),
            None => match target.type_index(ty) {
                Some(t) => Some(t),
                None if policy.strict => return Err(DatasetError::UnmappedType(ty.clone())),
                None => None,
            },
        };
        type_map.push(mapped);
    }

    let mut points = Vec::with_capacity(dataset.len());
    for point in &dataset.points {
        let mut out = Vec::with_capacity(point.tags.len());
        let mut prev_src: Option<Tag> = None;
        let mut prev_out: Option<usize> = None;
        for (pos, &id) in point.tags.iter().enumerate() {
            let tag = source.tag(id).ok_or(CorpusError::InvalidTagId {
                id,
                position: pos,
                size: source.len(),
            })?;
            let (new_id, new_ty) = match tag {
                Tag::Outside => (0, None),
                Tag::Begin(t) => match type_map[t] {
                    Some(nt) => (target.begin_id(nt), Some(nt)),
                    None => (0, None),
                },
                Tag::Inside(t) => match type_map[t] {
                    Some(nt) => {
                        let continues_in_source = prev_src.and_then(Tag::entity) == Some(t);
                        // a merged type must not glue two source spans together
                        if !continues_in_source && prev_out == Some(nt) {
                            (target.begin_id(nt), Some(nt))
                        } else {
                            (target.inside_id(nt), Some(nt))
                        }
                    }
                    None => (0, None),
                },
            };
            out.push(new_id);
            prev_src = Some(tag);
            prev_out = new_ty;
        }
        points.push(DataPoint {
            id: point.id.clone(),
            tokens: point.tokens.clone(),
            tags: out,
        });
    }

    Ok(Dataset {
        name: dataset.name.clone(),
        space: target.clone(),
        points,
        provenance: dataset.provenance.clone(),
    })
}

/// Turns a harvest into a dataset, sampling down to `cap` points when the
/// harvest is larger. Sampled points keep their harvest order.
pub fn compile(
    report: &HarvestReport,
    cap: usize,
    rng_seed: u64,
    name: &str,
    space: &LabelSpace,
    generator: &str,
) -> Result<Dataset, DatasetError> {
    if cap == 0 {
        return Err(DatasetError::ZeroCap);
    }
    if report.accepted.is_empty() {
        return Err(DatasetError::NothingToCompile);
    }
    let points = if report.accepted.len() <= cap {
        report.accepted.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut picked = index::sample(&mut rng, report.accepted.len(), cap).into_vec();
        picked.sort_unstable();
        picked
            .into_iter()
            .map(|i| report.accepted[i].clone())
            .collect()
    };
    Dataset::new(
        name,
        space.clone(),
        points,
        Provenance::synthetic(generator, rng_seed),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeLadder {
    pub sizes: Vec<usize>,
    pub rng_seed: u64,
}

impl Default for SizeLadder {
    fn default() -> Self {
        Self {
            sizes: vec![100, 500, 1000, 2500, 5000],
            rng_seed: 0,
        }
    }
}

impl SizeLadder {
    pub fn new(sizes: Vec<usize>, rng_seed: u64) -> Result<Self, DatasetError> {
        let ladder = Self { sizes, rng_seed };
        ladder.validate()?;
        Ok(ladder)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let increasing = self.sizes.windows(2).all(|w| w[0] < w[1]);
        if self.sizes.is_empty() || self.sizes[0] == 0 || !increasing {
            return Err(DatasetError::InvalidLadder(self.sizes.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rung {
    pub requested: usize,
    /// The dataset was smaller than `requested`.
    pub clipped: bool,
    pub dataset: Dataset,
}

/// Nested subsets: one seeded shuffle, then a prefix per rung.
pub fn subset_ladder(dataset: &Dataset, ladder: &SizeLadder) -> Result<Vec<Rung>, DatasetError> {
    ladder.validate()?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(ladder.rng_seed));

    Ok(ladder
        .sizes
        .iter()
        .map(|&requested| {
            let size = requested.min(dataset.len());
            let points = order[..size]
                .iter()
                .map(|&i| dataset.points[i].clone())
                .collect();
            Rung {
                requested,
                clipped: size < requested,
                dataset: dataset.derived(format!("{}-{}", dataset.name, requested), points),
            }
        })
        .collect())
}
