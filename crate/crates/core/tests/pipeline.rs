use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seedner_core::gateway::ResponseClass;
use seedner_core::{
    extract_candidates, harvest_run, mock_complete, plan_calls, Candidate, DataPoint, Dataset,
    FinishReason, GenerationPlan, Harvester, InjectionProfile, LabelSpace, PromptBundle,
    Provenance, ProviderKind, RawResponse, RejectReason, ValidationPolicy,
};

fn organic(n: usize) -> Dataset {
    let points = (0..n)
        .map(|i| {
            DataPoint::new(
                vec![
                    format!("Navn{i}"),
                    "bor".into(),
                    "i".into(),
                    "Aarhus".into(),
                    ".".into(),
                ],
                vec![1, 0, 0, 5, 0],
            )
        })
        .collect();
    Dataset::new(
        "organic",
        LabelSpace::three_type(),
        points,
        Provenance::organic(),
    )
    .unwrap()
}

fn plan(m: usize, n: usize, k: usize, seed: u64) -> GenerationPlan {
    GenerationPlan {
        seeds_per_call: m,
        requested_per_call: n,
        calls: k,
        compile_cap: 5000,
        language: "Danish".into(),
        rng_seed: seed,
    }
}

#[test]
fn prompt_seeds_are_recoverable_from_the_prompt() {
    let ds = organic(30);
    for bundle in plan_calls(&plan(10, 20, 25, 3), &ds, ProviderKind::Open).unwrap() {
        let raw = RawResponse {
            call_index: bundle.call_index,
            text: bundle.user_text.clone(),
            finish_reason: FinishReason::Stop,
            latency_ms: 0,
            error: None,
        };
        let (found, _) = extract_candidates(&raw);
        assert_eq!(found.len(), 10);
        let keys: HashSet<String> = found
            .iter()
            .map(|e| match &e.candidate {
                Candidate::Fields { tokens, .. } => tokens.join(" "),
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(keys.len(), 10, "seeds within a call are distinct");
        let organic_keys: HashSet<String> = ds.points.iter().map(|p| p.dedup_key()).collect();
        assert!(keys.is_subset(&organic_keys));
    }
}

#[test]
fn mock_reject_share_tracks_profile() {
    let space = LabelSpace::three_type();
    let profile = InjectionProfile::new(0.6, 0.4, 0.0, 0.0, 17).unwrap();
    // 50 calls of 20 candidates: 1000 candidates
    let responses: Vec<RawResponse> = (0..50)
        .map(|i| {
            let bundle = PromptBundle {
                call_index: i,
                system_text: String::new(),
                user_text: String::new(),
                requested: 20,
            };
            mock_complete(&bundle, &profile, &space)
        })
        .collect();
    let report = harvest_run(
        responses,
        &space,
        &ValidationPolicy::default(),
        &plan(10, 20, 50, 17),
    );
    assert_eq!(report.candidates_seen, 1000);
    assert!(report.is_conserved());
    let share = report.rejected_as(RejectReason::UnequalLengths) as f64 / 1000.0;
    assert!((share - 0.4).abs() <= 0.05, "unequal share {share}");
    assert_eq!(report.rejected_as(RejectReason::RunOnIncomplete), 0);
}

#[test]
fn each_injected_class_lands_in_its_bucket() {
    let space = LabelSpace::four_type();
    let cases = [
        (ResponseClass::WellFormatted, None),
        (
            ResponseClass::UnequalLengths,
            Some(RejectReason::UnequalLengths),
        ),
        (
            ResponseClass::RunOnIncomplete,
            Some(RejectReason::RunOnIncomplete),
        ),
        (
            ResponseClass::EmptyOrContinuation,
            Some(RejectReason::EmptyOrContinuation),
        ),
    ];
    for (class, reason) in cases {
        let profile = InjectionProfile::only(class, 4);
        let responses: Vec<_> = (0..20)
            .map(|i| {
                let bundle = PromptBundle {
                    call_index: i,
                    system_text: String::new(),
                    user_text: String::new(),
                    requested: 10,
                };
                mock_complete(&bundle, &profile, &space)
            })
            .collect();
        let report = harvest_run(
            responses,
            &space,
            &ValidationPolicy::default(),
            &plan(1, 10, 20, 4),
        );
        assert!(report.is_conserved());
        match reason {
            None => assert_eq!(
                report.rejected(),
                report.rejected_as(RejectReason::Duplicate)
            ),
            Some(r) => {
                assert_eq!(report.accepted_count, 0, "{class:?}");
                assert_eq!(report.rejected_as(r), report.candidates_seen, "{class:?}");
            }
        }
    }
}

#[test]
fn harvest_ignores_arrival_order() {
    let space = LabelSpace::three_type();
    let profile = InjectionProfile::new(0.5, 0.2, 0.2, 0.1, 9).unwrap();
    let mut responses: Vec<_> = (0..30)
        .map(|i| {
            let bundle = PromptBundle {
                call_index: i,
                system_text: String::new(),
                user_text: String::new(),
                requested: 8,
            };
            mock_complete(&bundle, &profile, &space)
        })
        .collect();
    let p = plan(1, 8, 30, 9);
    let in_order = harvest_run(responses.clone(), &space, &ValidationPolicy::default(), &p);
    responses.reverse();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in (1..responses.len()).rev() {
        responses.swap(i, rng.random_range(0..=i));
    }
    let shuffled = harvest_run(responses, &space, &ValidationPolicy::default(), &p);
    assert_eq!(in_order, shuffled);
    assert_eq!(in_order.accepted, shuffled.accepted);
}

#[test]
fn seeds_and_repeats_never_reach_the_output() {
    let space = LabelSpace::three_type();
    let ds = organic(15);
    let seed_json: Vec<String> = ds
        .points
        .iter()
        .map(|p| serde_json::json!({"tokens": p.tokens, "ner_tags": p.tags}).to_string())
        .collect();
    let fresh = r#"{"tokens": ["Ny", "sætning", "."], "ner_tags": [0, 0, 0]}"#;
    let text = format!("{{\"data\": [{}, {fresh}, {fresh}]}}", seed_json.join(", "));
    let raw = RawResponse {
        call_index: 0,
        text,
        finish_reason: FinishReason::Stop,
        latency_ms: 0,
        error: None,
    };
    let report = Harvester::new(&space, ValidationPolicy::default())
        .seeds(&ds.points)
        .run([raw], &plan(1, 20, 1, 0));
    assert_eq!(report.accepted_count, 1);
    assert_eq!(report.rejected_as(RejectReason::SeedOverlap), 15);
    assert_eq!(report.rejected_as(RejectReason::Duplicate), 1);
    assert!(report.is_conserved());
}
