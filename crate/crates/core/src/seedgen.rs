//! Seed sampling and prompt rendering for generation calls.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DataPoint;
use crate::datasets::Dataset;

pub const SYSTEM_PROMPT_STRUCTURED: &str = "You are a helpful model that helps build text-based datasets, but does not produce any conversation besides the text it is asked to produce.";

pub const SYSTEM_PROMPT_OPEN: &str = "You are a helpful model that helps build text-based datasets, but does not produce any conversation besides the text it is asked to produce. You only output JSON strings.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeedError {
    #[error("cannot sample {requested} seeds from a dataset of {available}")]
    NotEnoughData { requested: usize, available: usize },
    #[error("a prompt needs at least one seed example")]
    NoSeeds,
    #[error("invalid generation plan: {0}")]
    InvalidPlan(String),
}

/// The call schedule: `calls` prompts, each carrying `seeds_per_call`
/// examples and asking for `requested_per_call` new datapoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPlan {
    #[serde(rename = "m")]
    pub seeds_per_call: usize,
    #[serde(rename = "n")]
    pub requested_per_call: usize,
    #[serde(rename = "k")]
    pub calls: usize,
    #[serde(default = "default_cap")]
    pub compile_cap: usize,
    /// Filled from the experiment manifest when omitted.
    #[serde(default)]
    pub language: String,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_cap() -> usize {
    5000
}

impl GenerationPlan {
    /// 10 seeds, 20 requested, 500 calls, cap 5000.
    pub fn standard(language: impl Into<String>, rng_seed: u64) -> Self {
        Self {
            seeds_per_call: 10,
            requested_per_call: 20,
            calls: 500,
            compile_cap: default_cap(),
            language: language.into(),
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), SeedError> {
        let bad = |what: &str| Err(SeedError::InvalidPlan(format!("{what} must be at least 1")));
        if self.seeds_per_call == 0 {
            return bad("m");
        }
        if self.requested_per_call == 0 {
            return bad("n");
        }
        if self.calls == 0 {
            return bad("k");
        }
        if self.compile_cap == 0 {
            return bad("compile_cap");
        }
        Ok(())
    }

    /// Upper bound on harvested datapoints, n·k.
    pub fn requested_total(&self) -> usize {
        self.requested_per_call * self.calls
    }
}

/// Selects the system prompt. Providers with an enforced JSON output mode get
/// the short variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Structured,
    #[default]
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub call_index: usize,
    pub system_text: String,
    pub user_text: String,
    /// The n the prompt asks for.
    pub requested: usize,
}

/// Draws `m` distinct datapoints without replacement.
pub fn sample_seeds<R: Rng + ?Sized>(
    dataset: &Dataset,
    m: usize,
    rng: &mut R,
) -> Result<Vec<DataPoint>, SeedError> {
    if m > dataset.len() {
        return Err(SeedError::NotEnoughData {
            requested: m,
            available: dataset.len(),
        });
    }
    Ok(index::sample(rng, dataset.len(), m)
        .into_iter()
        .map(|i| dataset.points[i].clone())
        .collect())
}

#[derive(Serialize)]
struct SeedExample<'a> {
    tokens: &'a [String],
    ner_tags: &'a [u32],
}

pub fn build_prompt(
    seeds: &[DataPoint],
    n: usize,
    language: &str,
    kind: ProviderKind,
) -> Result<PromptBundle, SeedError> {
    if seeds.is_empty() {
        return Err(SeedError::NoSeeds);
    }
    let mut user_text = format!(
        "Help me make a {language} Named Entity Recognition dataset. \
         Please give me {n} new datapoints, formatted as a single JSON object. \
         Make sure the examples are unique and diverse. \
         Here are some examples to get you started:\n"
    );
    for seed in seeds {
        let example = SeedExample {
            tokens: &seed.tokens,
            ner_tags: &seed.tags,
        };
        user_text.push('\n');
        user_text.push_str(&serde_json::to_string(&example).expect("seed serialization"));
    }
    let system_text = match kind {
        ProviderKind::Structured => SYSTEM_PROMPT_STRUCTURED,
        ProviderKind::Open => SYSTEM_PROMPT_OPEN,
    };
    Ok(PromptBundle {
        call_index: 0,
        system_text: system_text.to_string(),
        user_text,
        requested: n,
    })
}

/// The rng for one call: ChaCha keyed by the plan seed, on the stream
/// numbered by the call index.
pub fn call_rng(rng_seed: u64, call_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(call_index as u64);
    rng
}

/// Renders the prompt for one call. Depends only on the plan, the dataset
/// and `call_index`.
pub fn plan_call(
    plan: &GenerationPlan,
    dataset: &Dataset,
    kind: ProviderKind,
    call_index: usize,
) -> Result<PromptBundle, SeedError> {
    let mut rng = call_rng(plan.rng_seed, call_index);
    let seeds = sample_seeds(dataset, plan.seeds_per_call, &mut rng)?;
    let mut bundle = build_prompt(&seeds, plan.requested_per_call, &plan.language, kind)?;
    bundle.call_index = call_index;
    Ok(bundle)
}

pub fn plan_calls(
    plan: &GenerationPlan,
    dataset: &Dataset,
    kind: ProviderKind,
) -> Result<Vec<PromptBundle>, SeedError> {
    plan.validate()?;
    (0..plan.calls)
        .map(|i| plan_call(plan, dataset, kind, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSpace;
    use crate::datasets::Provenance;
    use std::collections::HashSet;

    fn corpus(n: usize) -> Dataset {
        let points = (0..n)
            .map(|i| {
                DataPoint::new(
                    vec![
                        format!("Navn{i}"),
                        "bor".into(),
                        "i".into(),
                        "Odense".into(),
                    ],
                    vec![1, 0, 0, 5],
                )
            })
            .collect();
        Dataset::new(
            "da",
            LabelSpace::three_type(),
            points,
            Provenance::organic(),
        )
        .unwrap()
    }

    #[test]
    fn samples_distinct_and_reproducibly() {
        let ds = corpus(100);
        let a = sample_seeds(&ds, 10, &mut call_rng(4, 0)).unwrap();
        let b = sample_seeds(&ds, 10, &mut call_rng(4, 0)).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 10);
        assert_eq!(a, b);
        assert_ne!(a, sample_seeds(&ds, 10, &mut call_rng(4, 1)).unwrap());
        assert_eq!(
            sample_seeds(&ds, 101, &mut call_rng(4, 0)),
            Err(SeedError::NotEnoughData {
                requested: 101,
                available: 100
            })
        );
    }

    #[test]
    fn prompt_text() {
        let seeds = corpus(2).points;
        let bundle = build_prompt(&seeds, 20, "Danish", ProviderKind::Open).unwrap();
        assert!(bundle.user_text.starts_with(
            "Help me make a Danish Named Entity Recognition dataset. Please give me 20 new datapoints, formatted as a single JSON object."
        ));
        assert!(bundle
            .user_text
            .contains("Make sure the examples are unique and diverse."));
        assert!(bundle
            .user_text
            .contains("Here are some examples to get you started:\n\n{\"tokens\":[\"Navn0\""));
        assert_eq!(bundle.user_text.matches("\"tokens\":").count(), 2);
        assert!(bundle
            .system_text
            .ends_with("You only output JSON strings."));

        let structured = build_prompt(&seeds, 20, "Danish", ProviderKind::Structured).unwrap();
        assert!(!structured.system_text.contains("JSON"));
        assert_eq!(structured.user_text, bundle.user_text);

        assert_eq!(
            build_prompt(&[], 20, "Danish", ProviderKind::Open),
            Err(SeedError::NoSeeds)
        );
    }

    #[test]
    fn token_named_tokens_does_not_confuse_the_count() {
        let seeds = vec![DataPoint::new(
            vec!["tokens".into(), ":".into()],
            vec![0, 0],
        )];
        let bundle = build_prompt(&seeds, 5, "Swahili", ProviderKind::Open).unwrap();
        assert_eq!(bundle.user_text.matches("\"tokens\":").count(), 1);
    }

    #[test]
    fn plan_calls_is_order_independent() {
        let ds = corpus(50);
        let mut plan = GenerationPlan::standard("Danish", 11);
        plan.calls = 40;
        let all = plan_calls(&plan, &ds, ProviderKind::Open).unwrap();
        assert_eq!(all.len(), 40);
        assert!(all
            .iter()
            .enumerate()
            .all(|(i, b)| b.call_index == i && b.requested == 20));
        assert_eq!(all, plan_calls(&plan, &ds, ProviderKind::Open).unwrap());
        for i in (0..40).rev() {
            assert_eq!(
                plan_call(&plan, &ds, ProviderKind::Open, i).unwrap(),
                all[i]
            );
        }
        plan.calls = 1;
        assert_eq!(plan_calls(&plan, &ds, ProviderKind::Open).unwrap().len(), 1);
    }

    #[test]
    fn paper_scale_plan() {
        let plan = GenerationPlan::standard("Yoruba", 0);
        assert_eq!(
            (plan.seeds_per_call, plan.requested_per_call, plan.calls),
            (10, 20, 500)
        );
        assert_eq!(plan.requested_total(), 10_000);
        assert_eq!(plan.compile_cap, 5000);
        let bundles = plan_calls(&plan, &corpus(30), ProviderKind::Structured).unwrap();
        assert_eq!(bundles.len(), 500);
    }

    #[test]
    fn invalid_plans() {
        let mut plan = GenerationPlan::standard("Igbo", 0);
        plan.calls = 0;
        assert!(matches!(
            plan_calls(&plan, &corpus(20), ProviderKind::Open),
            Err(SeedError::InvalidPlan(_))
        ));
        let plan = GenerationPlan::standard("Igbo", 0);
        assert!(matches!(
            plan_calls(&plan, &corpus(5), ProviderKind::Open),
            Err(SeedError::NotEnoughData { .. })
        ));
    }

    #[test]
    fn plan_serializes_with_short_names() {
        let plan: GenerationPlan =
            serde_json::from_str(r#"{"m":10,"n":20,"k":50,"language":"Danish","rng_seed":3}"#)
                .unwrap();
        assert_eq!(plan.compile_cap, 5000);
        assert_eq!(plan.calls, 50);
    }
}
