//! Offline provider that fabricates responses with a controlled mix of
//! response-quality defects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FinishReason, Provider, RawResponse};
use crate::corpus::{LabelSpace, TagId};
use crate::seedgen::PromptBundle;

const SYLLABLES: [&str; 16] = [
    "ka", "li", "mo", "ra", "ne", "tu", "si", "wa", "do", "be", "gi", "lu", "fa", "zo", "pe", "ha",
];
const REPEATED: [&str; 4] = ["ò", "à", "na", "-"];
const CONTINUATIONS: [&str; 3] = [
    "",
    "<EOS_TOKEN>",
    "<EOS_TOKEN>include a mix of names, locations, organizations and dates so that the dataset covers many entity types",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResponseClass {
    WellFormatted,
    UnequalLengths,
    RunOnIncomplete,
    EmptyOrContinuation,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("proportion for {0:?} is negative or not finite")]
    Negative(ResponseClass),
    #[error("proportions sum to {0}, expected 1")]
    BadSum(f64),
}

/// Share of each response class among the mock's candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionProfile {
    pub well_formatted: f64,
    pub unequal_lengths: f64,
    pub run_on_incomplete: f64,
    pub empty_or_continuation: f64,
    pub rng_seed: u64,
}

impl Default for InjectionProfile {
    fn default() -> Self {
        Self::only(ResponseClass::WellFormatted, 0)
    }
}

impl InjectionProfile {
    pub fn new(
        well_formatted: f64,
        unequal_lengths: f64,
        run_on_incomplete: f64,
        empty_or_continuation: f64,
        rng_seed: u64,
    ) -> Result<Self, ProfileError> {
        let profile = Self {
            well_formatted,
            unequal_lengths,
            run_on_incomplete,
            empty_or_continuation,
            rng_seed,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn only(class: ResponseClass, rng_seed: u64) -> Self {
        let mut p = Self {
            well_formatted: 0.0,
            unequal_lengths: 0.0,
            run_on_incomplete: 0.0,
            empty_or_continuation: 0.0,
            rng_seed,
        };
        match class {
            ResponseClass::WellFormatted => p.well_formatted = 1.0,
            ResponseClass::UnequalLengths => p.unequal_lengths = 1.0,
            ResponseClass::RunOnIncomplete => p.run_on_incomplete = 1.0,
            ResponseClass::EmptyOrContinuation => p.empty_or_continuation = 1.0,
        }
        p
    }

    fn weights(&self) -> [(ResponseClass, f64); 4] {
        [
            (ResponseClass::WellFormatted, self.well_formatted),
            (ResponseClass::UnequalLengths, self.unequal_lengths),
            (ResponseClass::RunOnIncomplete, self.run_on_incomplete),
            (
                ResponseClass::EmptyOrContinuation,
                self.empty_or_continuation,
            ),
        ]
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        for (class, w) in self.weights() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(ProfileError::Negative(class));
            }
        }
        let sum: f64 = self.weights().iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ProfileError::BadSum(sum));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> ResponseClass {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (class, w) in self.weights() {
            acc += w;
            if u < acc {
                return class;
            }
        }
        // rounding slack at the top of the range
        self.weights()
            .iter()
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(c, _)| *c)
            .unwrap_or(ResponseClass::WellFormatted)
    }
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    pub profile: InjectionProfile,
    pub space: LabelSpace,
}

impl MockProvider {
    pub fn new(profile: InjectionProfile, space: LabelSpace) -> Result<Self, ProfileError> {
        profile.validate()?;
        Ok(Self { profile, space })
    }
}

impl Provider for MockProvider {
    fn respond(&self, bundle: &PromptBundle) -> RawResponse {
        mock_complete(bundle, &self.profile, &self.space)
    }

    fn name(&self) -> String {
        "mock".to_string()
    }
}

#[derive(Serialize)]
struct MockPoint {
    id: String,
    tokens: Vec<String>,
    ner_tags: Vec<TagId>,
}

/// Fabricates the reply to one call. A pure function of the profile, the
/// bundle's call index and its requested count.
pub fn mock_complete(
    bundle: &PromptBundle,
    profile: &InjectionProfile,
    space: &LabelSpace,
) -> RawResponse {
    let mut rng = ChaCha8Rng::seed_from_u64(profile.rng_seed ^ 0x5eed_6e65_725f_6d6b);
    rng.set_stream(bundle.call_index as u64);

    let classes: Vec<ResponseClass> = (0..bundle.requested)
        .map(|_| profile.draw(&mut rng))
        .collect();
    let respond = |text: String, finish_reason| RawResponse {
        call_index: bundle.call_index,
        text,
        finish_reason,
        latency_ms: 0,
        error: None,
    };

    if classes
        .iter()
        .all(|&c| c == ResponseClass::EmptyOrContinuation)
    {
        let text = CONTINUATIONS[rng.random_range(0..CONTINUATIONS.len())];
        return respond(text.to_string(), FinishReason::Stop);
    }

    let mut objects = Vec::with_capacity(classes.len());
    let mut truncated = false;
    for (j, &class) in classes.iter().enumerate() {
        let id = format!("{}", bundle.call_index * 1000 + j);
        let (mut tokens, mut tags) = sentence(&mut rng, space);
        match class {
            ResponseClass::WellFormatted => {}
            ResponseClass::UnequalLengths => {
                if tags.len() > 1 && rng.random_bool(0.5) {
                    let cut = rng.random_range(1..tags.len().min(3));
                    tags.truncate(tags.len() - cut);
                } else {
                    let extra = rng.random_range(1..=3);
                    tags.extend(std::iter::repeat_n(0, extra));
                }
            }
            ResponseClass::RunOnIncomplete => {
                let last = j + 1 == classes.len();
                if last && rng.random_bool(0.5) {
                    let json = serde_json::to_string(&MockPoint {
                        id,
                        tokens,
                        ner_tags: tags,
                    })
                    .expect("mock serialization");
                    objects.push(cut_inside_tags(&json, &mut rng));
                    truncated = true;
                    break;
                }
                let word = REPEATED[rng.random_range(0..REPEATED.len())];
                let times = rng.random_range(20..=40);
                tokens.extend(std::iter::repeat_n(word.to_string(), times));
                tags.extend(std::iter::repeat_n(0, times));
            }
            ResponseClass::EmptyOrContinuation => {
                tokens.clear();
                tags.clear();
            }
        }
        objects.push(
            serde_json::to_string(&MockPoint {
                id,
                tokens,
                ner_tags: tags,
            })
            .expect("mock serialization"),
        );
    }

    let style = rng.random_range(0..10);
    let text = match (style, truncated) {
        (0..=6, false) => format!("{{\"data\": [\n  {}\n]}}", objects.join(",\n  ")),
        (0..=6, true) => format!("{{\"data\": [\n  {}", objects.join(",\n  ")),
        (7 | 8, false) => format!("[{}]", objects.join(", ")),
        (7 | 8, true) => format!("[{}", objects.join(", ")),
        (_, false) => format!(
            "Here are the new datapoints:\n```json\n{}\n```",
            objects.join("\n")
        ),
        (_, true) => format!(
            "Here are the new datapoints:\n```json\n{}",
            objects.join("\n")
        ),
    };
    let finish = if truncated {
        FinishReason::Length
    } else {
        FinishReason::Stop
    };
    respond(text, finish)
}

fn cut_inside_tags<R: Rng>(json: &str, rng: &mut R) -> String {
    let marker = "\"ner_tags\":[";
    let start = json.find(marker).expect("serialized tags") + marker.len();
    let inner_len = json.len() - start - 2; // drop the closing `]}`
    let keep = if inner_len == 0 {
        0
    } else {
        rng.random_range(0..inner_len)
    };
    json[..start + keep].to_string()
}

fn word<R: Rng>(rng: &mut R, capitalize: bool) -> String {
    let syllables = rng.random_range(1..=3);
    let mut w: String = (0..syllables)
        .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
        .collect();
    if capitalize {
        w[..1].make_ascii_uppercase();
    }
    w
}

fn sentence<R: Rng>(rng: &mut R, space: &LabelSpace) -> (Vec<String>, Vec<TagId>) {
    let len = rng.random_range(4..=14);
    let types = space.entity_types().len();
    let mut tokens = Vec::with_capacity(len + 1);
    let mut tags = Vec::with_capacity(len + 1);
    while tokens.len() < len {
        let room = len - tokens.len();
        if types > 0 && rng.random_bool(0.25) {
            let ty = rng.random_range(0..types);
            let width = rng.random_range(1..=room.min(3));
            for k in 0..width {
                tokens.push(word(rng, true));
                tags.push(if k == 0 {
                    space.begin_id(ty)
                } else {
                    space.inside_id(ty)
                });
            }
        } else {
            tokens.push(word(rng, false));
            tags.push(0);
        }
    }
    tokens.push(".".to_string());
    tags.push(0);
    (tokens, tags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(call_index: usize, requested: usize) -> PromptBundle {
        PromptBundle {
            call_index,
            system_text: String::new(),
            user_text: String::new(),
            requested,
        }
    }

    #[test]
    fn profile_validation() {
        assert!(InjectionProfile::new(0.6, 0.2, 0.1, 0.1, 0).is_ok());
        assert!(matches!(
            InjectionProfile::new(0.6, 0.2, 0.1, 0.2, 0),
            Err(ProfileError::BadSum(_))
        ));
        assert_eq!(
            InjectionProfile::new(1.1, -0.1, 0.0, 0.0, 0),
            Err(ProfileError::Negative(ResponseClass::UnequalLengths))
        );
        assert!(InjectionProfile::new(f64::NAN, 1.0, 0.0, 0.0, 0).is_err());
    }

    #[test]
    fn byte_identical_on_repeat() {
        let profile = InjectionProfile::new(0.4, 0.2, 0.2, 0.2, 9).unwrap();
        let space = LabelSpace::four_type();
        for i in 0..20 {
            assert_eq!(
                mock_complete(&bundle(i, 20), &profile, &space),
                mock_complete(&bundle(i, 20), &profile, &space)
            );
        }
        assert_ne!(
            mock_complete(&bundle(0, 20), &profile, &space).text,
            mock_complete(&bundle(1, 20), &profile, &space).text
        );
    }

    #[test]
    fn all_empty_profile_yields_no_objects() {
        let profile = InjectionProfile::only(ResponseClass::EmptyOrContinuation, 1);
        for i in 0..10 {
            let r = mock_complete(&bundle(i, 20), &profile, &LabelSpace::three_type());
            assert!(!r.text.contains('{'));
            assert_eq!(r.finish_reason, FinishReason::Stop);
        }
    }

    #[test]
    fn truncation_sets_length() {
        let profile = InjectionProfile::only(ResponseClass::RunOnIncomplete, 2);
        let space = LabelSpace::three_type();
        let truncated: Vec<_> = (0..40)
            .map(|i| mock_complete(&bundle(i, 5), &profile, &space))
            .filter(|r| r.finish_reason == FinishReason::Length)
            .collect();
        assert!(!truncated.is_empty());
        for r in truncated {
            assert!(!r.text.trim_end().ends_with('}') && !r.text.trim_end().ends_with(']'));
        }
    }
}
