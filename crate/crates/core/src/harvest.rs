//! Turning raw model text into validated datapoints.
//!
//! Extraction is a tolerant scan rather than a strict document parse: every
//! balanced `{...}` region is tried as JSON on its own, so one broken object
//! does not cost the rest of the response, and an object cut off by the
//! token limit is still counted (as run-on/incomplete).

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{
    accept_candidate, validate_datapoint, Candidate, DataPoint, ErrorClass, LabelSpace,
    ValidationPolicy, Verdict,
};
use crate::gateway::{FinishReason, RawResponse};
use crate::seedgen::GenerationPlan;

/// A candidate together with where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub call_index: usize,
    pub candidate: Candidate,
    /// The object was still open when the text ended.
    pub incomplete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseShape {
    /// `{"data": [...]}`
    DataObject,
    /// `[...]`
    BareArray,
    /// A single datapoint object.
    SingleObject,
    /// Objects recovered by scanning surrounding prose, fences or a
    /// truncated wrapper.
    Scanned,
    /// Nothing datapoint-like was found.
    NoObject,
    /// The call itself failed.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractDiagnostics {
    pub shape: ResponseShape,
    pub objects: usize,
    pub incomplete_tail: bool,
}

fn is_datapoint_like(value: &Value) -> bool {
    value
        .as_object()
        .is_some_and(|o| o.contains_key("tokens") || o.contains_key("ner_tags"))
}

fn mentions_datapoint_keys(text: &str) -> bool {
    text.contains("\"tokens\"") || text.contains("\"ner_tags\"")
}

/// Finds the candidates in one response. Total over arbitrary text; a
/// response with nothing recognizable yields a single
/// [`Candidate::NoObject`].
pub fn extract_candidates(raw: &RawResponse) -> (Vec<Extracted>, ExtractDiagnostics) {
    let make = |candidate, incomplete| Extracted {
        call_index: raw.call_index,
        candidate,
        incomplete,
    };

    if raw.finish_reason == FinishReason::Error {
        return (
            vec![make(Candidate::NoObject, false)],
            ExtractDiagnostics {
                shape: ResponseShape::Failed,
                objects: 0,
                incomplete_tail: false,
            },
        );
    }

    let mut out = Vec::new();
    let mut incomplete_tail = false;
    let shape = match serde_json::from_str::<Value>(raw.text.trim()) {
        Ok(Value::Object(obj)) if obj.get("data").is_some_and(Value::is_array) => {
            for item in obj["data"].as_array().into_iter().flatten() {
                out.push(make(Candidate::from_json(item), false));
            }
            ResponseShape::DataObject
        }
        Ok(Value::Array(items)) => {
            for item in &items {
                out.push(make(Candidate::from_json(item), false));
            }
            ResponseShape::BareArray
        }
        Ok(value) if is_datapoint_like(&value) => {
            out.push(make(Candidate::from_json(&value), false));
            ResponseShape::SingleObject
        }
        _ => {
            let scan = scan_objects(&raw.text);
            out.extend(scan.candidates.into_iter().map(|c| make(c, false)));
            if scan.incomplete_tail {
                out.push(make(Candidate::Unreadable, true));
                incomplete_tail = true;
            }
            ResponseShape::Scanned
        }
    };

    let objects = out.len();
    if out.is_empty() {
        out.push(make(Candidate::NoObject, false));
        return (
            out,
            ExtractDiagnostics {
                shape: ResponseShape::NoObject,
                objects: 0,
                incomplete_tail: false,
            },
        );
    }
    (
        out,
        ExtractDiagnostics {
            shape,
            objects,
            incomplete_tail,
        },
    )
}

struct Scan {
    candidates: Vec<Candidate>,
    incomplete_tail: bool,
}

/// Balanced-brace scan. String state is only tracked inside objects so that
/// stray quotes in surrounding prose cannot desynchronize it.
fn scan_objects(text: &str) -> Scan {
    let bytes = text.as_bytes();
    let mut open: Vec<usize> = Vec::new();
    let mut closed: Vec<(usize, usize)> = Vec::new();
    let mut in_string = false;
    let mut escaped = false;

    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' if !open.is_empty() => in_string = true,
            b'{' => open.push(i),
            b'}' => {
                if let Some(start) = open.pop() {
                    closed.push((start, i));
                }
            }
            _ => {}
        }
    }
    closed.sort_unstable();

    let mut candidates = Vec::new();
    let mut consumed_end: Option<usize> = None;
    for (idx, &(start, end)) in closed.iter().enumerate() {
        if consumed_end.is_some_and(|e| start <= e) {
            continue;
        }
        let slice = &text[start..=end];
        match serde_json::from_str::<Value>(slice) {
            Ok(value) if is_datapoint_like(&value) => {
                candidates.push(Candidate::from_json(&value));
                consumed_end = Some(end);
            }
            Ok(Value::Object(obj)) if obj.get("data").is_some_and(Value::is_array) => {
                for item in obj["data"].as_array().into_iter().flatten() {
                    candidates.push(Candidate::from_json(item));
                }
                consumed_end = Some(end);
            }
            Ok(_) => continue,
            Err(_) => {
                let has_inner_datapoint = closed[idx + 1..]
                    .iter()
                    .take_while(|&&(s, _)| s < end)
                    .any(|&(s, e)| e < end && mentions_datapoint_keys(&text[s..=e]));
                if has_inner_datapoint || !mentions_datapoint_keys(slice) {
                    continue;
                }
                candidates.push(Candidate::Unreadable);
                consumed_end = Some(end);
            }
        }
    }

    // Only the innermost unclosed object can be a cut-off datapoint; outer
    // unclosed ones are wrappers. Text already claimed by closed objects
    // does not count towards it.
    let incomplete_tail = open.last().is_some_and(|&start| {
        let from = match closed.iter().map(|&(_, e)| e).filter(|&e| e > start).max() {
            Some(e) => e + 1,
            None => start,
        };
        mentions_datapoint_keys(&text[from..])
    });

    Scan {
        candidates,
        incomplete_tail,
    }
}

/// Validates one extracted candidate. A cut-off object is always
/// run-on/incomplete.
pub fn classify(extracted: &Extracted, space: &LabelSpace, policy: &ValidationPolicy) -> Verdict {
    if extracted.incomplete {
        return Verdict::Reject(ErrorClass::RunOnIncomplete);
    }
    validate_datapoint(&extracted.candidate, space, policy)
}

/// Why a candidate did not make it into the harvest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    MalformedStructure,
    EmptyOrContinuation,
    UnequalLengths,
    OutOfVocabTag,
    RunOnIncomplete,
    /// Same key as an earlier candidate or a prior datapoint.
    Duplicate,
    /// Same key as an organic seed example.
    SeedOverlap,
}

impl From<ErrorClass> for RejectReason {
    fn from(class: ErrorClass) -> Self {
        match class {
            ErrorClass::MalformedStructure => RejectReason::MalformedStructure,
            ErrorClass::EmptyOrContinuation => RejectReason::EmptyOrContinuation,
            ErrorClass::UnequalLengths => RejectReason::UnequalLengths,
            ErrorClass::OutOfVocabTag => RejectReason::OutOfVocabTag,
            ErrorClass::RunOnIncomplete => RejectReason::RunOnIncomplete,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupOutcome {
    pub kept: Vec<DataPoint>,
    pub duplicates: usize,
    pub seed_overlaps: usize,
}

/// Keyed uniqueness filter; see [`DataPoint::dedup_key`].
#[derive(Debug, Clone, Default)]
pub struct DedupFilter {
    seeds: HashSet<String>,
    seen: HashSet<String>,
}

impl DedupFilter {
    pub fn new(seeds: &[DataPoint], prior: &[DataPoint]) -> Self {
        Self {
            seeds: seeds.iter().map(DataPoint::dedup_key).collect(),
            seen: prior.iter().map(DataPoint::dedup_key).collect(),
        }
    }

    /// `Ok` if the point is new; it is remembered.
    pub fn admit(&mut self, point: &DataPoint) -> Result<(), RejectReason> {
        let key = point.dedup_key();
        if self.seeds.contains(&key) {
            return Err(RejectReason::SeedOverlap);
        }
        if !self.seen.insert(key) {
            return Err(RejectReason::Duplicate);
        }
        Ok(())
    }
}

pub fn dedup_detailed(
    candidates: Vec<DataPoint>,
    seeds: &[DataPoint],
    prior: &[DataPoint],
) -> DedupOutcome {
    let mut filter = DedupFilter::new(seeds, prior);
    let mut out = DedupOutcome::default();
    for point in candidates {
        match filter.admit(&point) {
            Ok(()) => out.kept.push(point),
            Err(RejectReason::SeedOverlap) => out.seed_overlaps += 1,
            Err(_) => out.duplicates += 1,
        }
    }
    out
}

/// Keeps the first occurrence of each key, dropping anything already present
/// among `seeds` or `prior`.
pub fn dedup(
    candidates: Vec<DataPoint>,
    seeds: &[DataPoint],
    prior: &[DataPoint],
) -> Vec<DataPoint> {
    dedup_detailed(candidates, seeds, prior).kept
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HarvestReport {
    #[serde(skip)]
    pub accepted: Vec<DataPoint>,
    pub accepted_count: usize,
    pub reject_counts: BTreeMap<RejectReason, usize>,
    pub candidates_seen: usize,
    /// n·k from the plan.
    pub requested: usize,
    pub usable_rate: f64,
    pub calls_planned: usize,
    pub calls_missing: usize,
    pub calls_failed: usize,
    pub calls_truncated: usize,
    /// Responses whose call index was already seen or lies outside the plan.
    pub responses_ignored: usize,
}

impl HarvestReport {
    pub fn rejected(&self) -> usize {
        self.reject_counts.values().sum()
    }

    pub fn rejected_as(&self, reason: RejectReason) -> usize {
        self.reject_counts.get(&reason).copied().unwrap_or(0)
    }

    /// accepted + rejected == candidates_seen
    pub fn is_conserved(&self) -> bool {
        self.accepted_count + self.rejected() == self.candidates_seen
    }
}

/// Harvest configuration: label space, validation policy and the datapoints
/// generated output must not repeat.
#[derive(Debug, Clone)]
pub struct Harvester<'a> {
    space: &'a LabelSpace,
    policy: ValidationPolicy,
    seeds: &'a [DataPoint],
    prior: &'a [DataPoint],
}

impl<'a> Harvester<'a> {
    pub fn new(space: &'a LabelSpace, policy: ValidationPolicy) -> Self {
        Self {
            space,
            policy,
            seeds: &[],
            prior: &[],
        }
    }

    pub fn seeds(mut self, seeds: &'a [DataPoint]) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn prior(mut self, prior: &'a [DataPoint]) -> Self {
        self.prior = prior;
        self
    }

    /// Folds a response stream into a report. Responses are processed in
    /// call-index order whatever order they arrive in; calls of the plan
    /// with no response count as one empty candidate each.
    pub fn run<I>(&self, responses: I, plan: &GenerationPlan) -> HarvestReport
    where
        I: IntoIterator<Item = RawResponse>,
    {
        let mut by_call: BTreeMap<usize, RawResponse> = BTreeMap::new();
        let mut report = HarvestReport {
            requested: plan.requested_total(),
            calls_planned: plan.calls,
            ..HarvestReport::default()
        };
        for response in responses {
            if response.call_index >= plan.calls || by_call.contains_key(&response.call_index) {
                report.responses_ignored += 1;
                continue;
            }
            by_call.insert(response.call_index, response);
        }

        let mut filter = DedupFilter::new(self.seeds, self.prior);
        let reject = |report: &mut HarvestReport, reason: RejectReason| {
            *report.reject_counts.entry(reason).or_default() += 1;
        };

        for call in 0..plan.calls {
            let Some(response) = by_call.get(&call) else {
                report.calls_missing += 1;
                report.candidates_seen += 1;
                reject(&mut report, RejectReason::EmptyOrContinuation);
                continue;
            };
            match response.finish_reason {
                FinishReason::Error => report.calls_failed += 1,
                FinishReason::Length => report.calls_truncated += 1,
                FinishReason::Stop => {}
            }
            let (candidates, _) = extract_candidates(response);
            for extracted in candidates {
                report.candidates_seen += 1;
                if extracted.incomplete {
                    reject(&mut report, RejectReason::RunOnIncomplete);
                    continue;
                }
                match accept_candidate(&extracted.candidate, self.space, &self.policy) {
                    Err(class) => reject(&mut report, class.into()),
                    Ok(point) => match filter.admit(&point) {
                        Ok(()) => report.accepted.push(point),
                        Err(reason) => reject(&mut report, reason),
                    },
                }
            }
        }

        report.accepted_count = report.accepted.len();
        report.usable_rate = if report.requested == 0 {
            0.0
        } else {
            report.accepted_count.min(report.requested) as f64 / report.requested as f64
        };
        report
    }
}

/// Convenience wrapper around [`Harvester`].
pub fn harvest_run<I>(
    responses: I,
    space: &LabelSpace,
    policy: &ValidationPolicy,
    plan: &GenerationPlan,
) -> HarvestReport
where
    I: IntoIterator<Item = RawResponse>,
{
    Harvester::new(space, *policy).run(responses, plan)
}

/// Plain-text usable-rate table, one row per labelled report.
pub fn usable_rate_table(rows: &[(String, &HarvestReport)]) -> String {
    const REASONS: [RejectReason; 7] = [
        RejectReason::UnequalLengths,
        RejectReason::RunOnIncomplete,
        RejectReason::EmptyOrContinuation,
        RejectReason::MalformedStructure,
        RejectReason::OutOfVocabTag,
        RejectReason::Duplicate,
        RejectReason::SeedOverlap,
    ];
    let headers = [
        "source",
        "requested",
        "seen",
        "accepted",
        "usable",
        "unequal",
        "run-on",
        "empty",
        "malformed",
        "oov-tag",
        "dup",
        "seed",
    ];
    let mut table: Vec<Vec<String>> = vec![headers.iter().map(|h| h.to_string()).collect()];
    for (label, report) in rows {
        let mut row = vec![
            label.clone(),
            report.requested.to_string(),
            report.candidates_seen.to_string(),
            report.accepted_count.to_string(),
            format!("{:.1}%", report.usable_rate * 100.0),
        ];
        row.extend(REASONS.iter().map(|&r| report.rejected_as(r).to_string()));
        table.push(row);
    }
    render_table(&table)
}

pub(crate) fn render_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                let _ = write!(line, "{cell}{}", " ".repeat(pad));
            } else {
                let _ = write!(line, "  {}{cell}", " ".repeat(pad));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
