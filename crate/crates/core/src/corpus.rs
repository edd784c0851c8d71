//! Core NER domain types: label spaces, datapoints, BIO span coding and
//! per-candidate validation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer tag id as it appears in the `ner_tags` field.
pub type TagId = u32;

pub const OUTSIDE: &str = "O";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),
    #[error("tag id {id} at position {position} is outside the label space (size {size})")]
    InvalidTagId {
        id: TagId,
        position: usize,
        size: usize,
    },
    #[error("unknown tag name {0:?}")]
    UnknownTagName(String),
    #[error("unknown entity type {0:?}")]
    UnknownEntityType(String),
    #[error("span {0} lies outside a sequence of length {1}")]
    SpanOutOfBounds(EntitySpan, usize),
    #[error("spans {0} and {1} overlap")]
    OverlappingSpans(EntitySpan, EntitySpan),
    #[error("inside tag {tag} at position {position} does not continue an entity")]
    OrphanInside { tag: String, position: usize },
}

/// A decoded tag, with entity types referenced by their index in
/// [`LabelSpace::entity_types`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Outside,
    Begin(usize),
    Inside(usize),
}

impl Tag {
    pub fn entity(self) -> Option<usize> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }
}

/// Ordered BIO tag inventory. Index 0 is always `O`; every entity type owns
/// exactly one `B-` and one `I-` tag.
///
/// Serialized as the plain list of tag names, e.g.
/// `["O","B-PER","I-PER","B-ORG","I-ORG","B-LOC","I-LOC"]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    names: Vec<String>,
    entity_types: Vec<String>,
    tags: Vec<Tag>,
    begin_ids: Vec<TagId>,
    inside_ids: Vec<TagId>,
}

impl LabelSpace {
    /// Builds the conventional layout `O, B-T1, I-T1, B-T2, I-T2, ...`.
    pub fn from_types<S: AsRef<str>>(types: &[S]) -> Result<Self, CorpusError> {
        let mut names = vec![OUTSIDE.to_string()];
        for t in types {
            names.push(format!("B-{}", t.as_ref()));
            names.push(format!("I-{}", t.as_ref()));
        }
        Self::from_names(names)
    }

    /// Validates an explicit id → name table.
    pub fn from_names<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
    ) -> Result<Self, CorpusError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.first().map(String::as_str) != Some(OUTSIDE) {
            return Err(CorpusError::InvalidLabelSpace(
                "tag 0 must be \"O\"".to_string(),
            ));
        }
        let mut entity_types: Vec<String> = Vec::new();
        let mut tags = Vec::with_capacity(names.len());
        let mut seen = BTreeSet::new();
        for (i, name) in names.iter().enumerate() {
            if !seen.insert(name.as_str()) {
                return Err(CorpusError::InvalidLabelSpace(format!(
                    "duplicate tag {name:?}"
                )));
            }
            if i == 0 {
                tags.push(Tag::Outside);
                continue;
            }
            let (is_begin, ty) = match (name.strip_prefix("B-"), name.strip_prefix("I-")) {
                (Some(ty), _) => (true, ty),
                (_, Some(ty)) => (false, ty),
                _ => {
                    return Err(CorpusError::InvalidLabelSpace(format!(
                        "tag {name:?} is neither O nor B-/I- prefixed"
                    )))
                }
            };
            if ty.is_empty() {
                return Err(CorpusError::InvalidLabelSpace(format!(
                    "tag {name:?} has an empty entity type"
                )));
            }
            let idx = match entity_types.iter().position(|t| t == ty) {
                Some(idx) => idx,
                None => {
                    entity_types.push(ty.to_string());
                    entity_types.len() - 1
                }
            };
            tags.push(if is_begin {
                Tag::Begin(idx)
            } else {
                Tag::Inside(idx)
            });
        }

        let mut begin_ids = vec![None; entity_types.len()];
        let mut inside_ids = vec![None; entity_types.len()];
        for (id, tag) in tags.iter().enumerate() {
            match *tag {
                Tag::Begin(t) => begin_ids[t] = Some(id as TagId),
                Tag::Inside(t) => inside_ids[t] = Some(id as TagId),
                Tag::Outside => {}
            }
        }
        let mut begins = Vec::with_capacity(entity_types.len());
        let mut insides = Vec::with_capacity(entity_types.len());
        for (t, ty) in entity_types.iter().enumerate() {
            match (begin_ids[t], inside_ids[t]) {
                (Some(b), Some(i)) => {
                    begins.push(b);
                    insides.push(i);
                }
                _ => {
                    return Err(CorpusError::InvalidLabelSpace(format!(
                        "entity type {ty:?} needs both B-{ty} and I-{ty}"
                    )))
                }
            }
        }

        Ok(Self {
            names,
            entity_types,
            tags,
            begin_ids: begins,
            inside_ids: insides,
        })
    }

    /// PER / ORG / LOC, ids `O=0, B-PER=1, I-PER=2, B-ORG=3, I-ORG=4, B-LOC=5, I-LOC=6`.
    pub fn three_type() -> Self {
        Self::from_types(&["PER", "ORG", "LOC"]).expect("static label space")
    }

    /// The three-type space plus `B-DATE=7, I-DATE=8`.
    pub fn four_type() -> Self {
        Self::from_types(&["PER", "ORG", "LOC", "DATE"]).expect("static label space")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn name(&self, id: TagId) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<TagId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| i as TagId)
    }

    pub fn tag(&self, id: TagId) -> Option<Tag> {
        self.tags.get(id as usize).copied()
    }

    pub fn type_index(&self, entity_type: &str) -> Option<usize> {
        self.entity_types.iter().position(|t| t == entity_type)
    }

    pub fn begin_id(&self, type_index: usize) -> TagId {
        self.begin_ids[type_index]
    }

    pub fn inside_id(&self, type_index: usize) -> TagId {
        self.inside_ids[type_index]
    }

    pub fn contains(&self, id: TagId) -> bool {
        (id as usize) < self.names.len()
    }
}

impl Default for LabelSpace {
    fn default() -> Self {
        Self::three_type()
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = CorpusError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::from_names(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.names
    }
}

/// One sentence: tokens plus the parallel tag-id sequence.
///
/// Wire shape is `{"id": "...", "tokens": [...], "ner_tags": [...]}` with the
/// id omitted when absent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataPoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub tokens: Vec<String>,
    #[serde(rename = "ner_tags")]
    pub tags: Vec<TagId>,
}

impl DataPoint {
    pub fn new(tokens: Vec<String>, tags: Vec<TagId>) -> Self {
        Self {
            id: None,
            tokens,
            tags,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks every datapoint invariant against `space`.
    pub fn check(&self, space: &LabelSpace) -> Result<(), String> {
        if self.tokens.len() != self.tags.len() {
            return Err(format!(
                "{} tokens but {} tags",
                self.tokens.len(),
                self.tags.len()
            ));
        }
        if let Some(pos) = self.tokens.iter().position(|t| !is_valid_token(t)) {
            return Err(format!("token {pos} is empty or contains a newline"));
        }
        if let Some(pos) = self.tags.iter().position(|&t| !space.contains(t)) {
            return Err(format!(
                "tag {} at position {pos} is outside the label space",
                self.tags[pos]
            ));
        }
        Ok(())
    }

    /// Key used for duplicate detection: tokens joined with single spaces
    /// after collapsing all whitespace runs. Case-sensitive.
    pub fn dedup_key(&self) -> String {
        let mut key = String::new();
        for piece in self.tokens.iter().flat_map(|t| t.split_whitespace()) {
            if !key.is_empty() {
                key.push(' ');
            }
            key.push_str(piece);
        }
        key
    }
}

pub(crate) fn is_valid_token(token: &str) -> bool {
    !token.is_empty() && !token.contains(['\n', '\r'])
}

/// An entity mention covering tokens `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

impl EntitySpan {
    pub fn new(entity_type: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            entity_type: entity_type.into(),
            start,
            end,
        }
    }
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.entity_type, self.start, self.end)
    }
}

/// How `I-X` tags that do not continue an `X` entity are treated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BioMode {
    /// The orphan `I-X` opens a new span of type X.
    #[default]
    Lenient,
    /// The orphan `I-X` is reported as an error.
    Strict,
}

/// Lenient BIO decoding.
pub fn decode_spans(tags: &[TagId], space: &LabelSpace) -> Result<Vec<EntitySpan>, CorpusError> {
    decode_spans_with(tags, space, BioMode::Lenient)
}

pub fn decode_spans_with(
    tags: &[TagId],
    space: &LabelSpace,
    mode: BioMode,
) -> Result<Vec<EntitySpan>, CorpusError> {
    let mut spans = Vec::new();
    // (type index, start) of the span currently open
    let mut open: Option<(usize, usize)> = None;

    for (pos, &id) in tags.iter().enumerate() {
        let tag = space.tag(id).ok_or(CorpusError::InvalidTagId {
            id,
            position: pos,
            size: space.len(),
        })?;
        match tag {
            Tag::Outside => {
                if let Some((ty, start)) = open.take() {
                    spans.push(EntitySpan::new(&space.entity_types[ty], start, pos - 1));
                }
            }
            Tag::Begin(ty) => {
                if let Some((prev, start)) = open.take() {
                    spans.push(EntitySpan::new(&space.entity_types[prev], start, pos - 1));
                }
                open = Some((ty, pos));
            }
            Tag::Inside(ty) => match open {
                Some((prev, _)) if prev == ty => {}
                _ => {
                    if mode == BioMode::Strict {
                        return Err(CorpusError::OrphanInside {
                            tag: space.names[id as usize].clone(),
                            position: pos,
                        });
                    }
                    if let Some((prev, start)) = open.take() {
                        spans.push(EntitySpan::new(&space.entity_types[prev], start, pos - 1));
                    }
                    open = Some((ty, pos));
                }
            },
        }
    }
    if let Some((ty, start)) = open {
        spans.push(EntitySpan::new(
            &space.entity_types[ty],
            start,
            tags.len() - 1,
        ));
    }
    Ok(spans)
}

/// Writes spans back to a BIO tag sequence of the given length.
pub fn encode_spans(
    spans: &[EntitySpan],
    length: usize,
    space: &LabelSpace,
) -> Result<Vec<TagId>, CorpusError> {
    let mut ordered: Vec<&EntitySpan> = spans.iter().collect();
    ordered.sort_by_key(|s| (s.start, s.end));
    for pair in ordered.windows(2) {
        if pair[1].start <= pair[0].end {
            return Err(CorpusError::OverlappingSpans(
                pair[0].clone(),
                pair[1].clone(),
            ));
        }
    }

    let mut tags = vec![0; length];
    for span in ordered {
        if span.start > span.end || span.end >= length {
            return Err(CorpusError::SpanOutOfBounds(span.clone(), length));
        }
        let ty = space
            .type_index(&span.entity_type)
            .ok_or_else(|| CorpusError::UnknownEntityType(span.entity_type.clone()))?;
        tags[span.start] = space.begin_id(ty);
        for tag in &mut tags[span.start + 1..=span.end] {
            *tag = space.inside_id(ty);
        }
    }
    Ok(tags)
}

/// Response-quality classes a rejected candidate can fall into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorClass {
    MalformedStructure,
    EmptyOrContinuation,
    UnequalLengths,
    OutOfVocabTag,
    RunOnIncomplete,
}

impl ErrorClass {
    /// All classes in precedence order: when several apply, the earliest wins.
    pub const PRECEDENCE: [ErrorClass; 5] = [
        ErrorClass::MalformedStructure,
        ErrorClass::EmptyOrContinuation,
        ErrorClass::UnequalLengths,
        ErrorClass::OutOfVocabTag,
        ErrorClass::RunOnIncomplete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::MalformedStructure => "MalformedStructure",
            ErrorClass::EmptyOrContinuation => "EmptyOrContinuation",
            ErrorClass::UnequalLengths => "UnequalLengths",
            ErrorClass::OutOfVocabTag => "OutOfVocabTag",
            ErrorClass::RunOnIncomplete => "RunOnIncomplete",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject(ErrorClass),
}

impl Verdict {
    pub fn is_accept(self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// A structurally parsed, not yet validated, datapoint candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Candidate {
    /// The response held no recognizable datapoint object at all.
    NoObject,
    /// An object was found but could not be read as a datapoint
    /// (invalid JSON, missing fields, wrong field types).
    Unreadable,
    Fields {
        id: Option<String>,
        tokens: Vec<String>,
        tags: Vec<i64>,
    },
}

impl Candidate {
    /// Reads a candidate out of a parsed JSON value. Anything that is not an
    /// object with a string-array `tokens` and integer-array `ner_tags` is
    /// [`Candidate::Unreadable`].
    pub fn from_json(value: &serde_json::Value) -> Self {
        use serde_json::Value;

        let Some(obj) = value.as_object() else {
            return Candidate::Unreadable;
        };
        let tokens = obj.get("tokens").and_then(Value::as_array).and_then(|arr| {
            arr.iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()
        });
        let tags = obj
            .get("ner_tags")
            .and_then(Value::as_array)
            .and_then(|arr| arr.iter().map(Value::as_i64).collect::<Option<Vec<_>>>());
        let id = match obj.get("id") {
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Number(n)) => Some(n.to_string()),
            _ => None,
        };
        match (tokens, tags) {
            (Some(tokens), Some(tags)) => Candidate::Fields { id, tokens, tags },
            _ => Candidate::Unreadable,
        }
    }

    pub fn from_datapoint(point: &DataPoint) -> Self {
        Candidate::Fields {
            id: point.id.clone(),
            tokens: point.tokens.clone(),
            tags: point.tags.iter().map(|&t| t as i64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationPolicy {
    /// Candidates longer than this are treated as run-on output.
    pub max_tokens: usize,
    /// A token repeated this many times in a row marks a degenerate run-on.
    pub max_repeat_run: usize,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self {
            max_tokens: 256,
            max_repeat_run: 20,
        }
    }
}

/// Classifies a candidate. Total and deterministic; when several classes
/// apply, the first in [`ErrorClass::PRECEDENCE`] is reported.
pub fn validate_datapoint(
    candidate: &Candidate,
    space: &LabelSpace,
    policy: &ValidationPolicy,
) -> Verdict {
    let (tokens, tags) = match candidate {
        Candidate::Unreadable => return Verdict::Reject(ErrorClass::MalformedStructure),
        Candidate::NoObject => return Verdict::Reject(ErrorClass::EmptyOrContinuation),
        Candidate::Fields { tokens, tags, .. } => (tokens, tags),
    };
    if tokens.iter().any(|t| !is_valid_token(t)) {
        return Verdict::Reject(ErrorClass::MalformedStructure);
    }
    if tokens.is_empty() {
        return Verdict::Reject(ErrorClass::EmptyOrContinuation);
    }
    if tokens.len() != tags.len() {
        return Verdict::Reject(ErrorClass::UnequalLengths);
    }
    if tags
        .iter()
        .any(|&t| t < 0 || t as u64 >= space.len() as u64)
    {
        return Verdict::Reject(ErrorClass::OutOfVocabTag);
    }
    if tokens.len() > policy.max_tokens || longest_repeat_run(tokens) >= policy.max_repeat_run {
        return Verdict::Reject(ErrorClass::RunOnIncomplete);
    }
    Verdict::Accept
}

fn longest_repeat_run(tokens: &[String]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for (i, tok) in tokens.iter().enumerate() {
        run = if i > 0 && tokens[i - 1] == *tok {
            run + 1
        } else {
            1
        };
        best = best.max(run);
    }
    best
}

/// Converts an accepted candidate into a datapoint.
pub fn accept_candidate(
    candidate: &Candidate,
    space: &LabelSpace,
    policy: &ValidationPolicy,
) -> Result<DataPoint, ErrorClass> {
    match validate_datapoint(candidate, space, policy) {
        Verdict::Reject(class) => Err(class),
        Verdict::Accept => match candidate {
            Candidate::Fields { id, tokens, tags } => Ok(DataPoint {
                id: id.clone(),
                tokens: tokens.clone(),
                tags: tags.iter().map(|&t| t as TagId).collect(),
            }),
            _ => unreachable!("only field candidates are accepted"),
        },
    }
}
