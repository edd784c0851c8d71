//! Fixture generators shared by the benchmarks.

use seedner_core::{
    mock_complete, DataPoint, InjectionProfile, LabelSpace, PromptBundle, RawResponse,
};

/// Deterministic pseudo-random tag sequences (xorshift), `count` sentences of
/// 8 to 40 tokens under the four-type space.
pub fn tagged_corpus(count: usize, seed: u64) -> Vec<DataPoint> {
    let mut state = seed | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    (0..count)
        .map(|i| {
            let len = 8 + (next() % 33) as usize;
            let tags = (0..len).map(|_| (next() % 9) as u32).collect();
            DataPoint::new((0..len).map(|j| format!("w{i}_{j}")).collect(), tags)
        })
        .collect()
}

/// Mock responses for `calls` prompts of `requested` datapoints each.
pub fn mock_responses(
    calls: usize,
    requested: usize,
    profile: &InjectionProfile,
) -> Vec<RawResponse> {
    let space = LabelSpace::four_type();
    (0..calls)
        .map(|call_index| {
            let bundle = PromptBundle {
                call_index,
                system_text: String::new(),
                user_text: String::new(),
                requested,
            };
            mock_complete(&bundle, profile, &space)
        })
        .collect()
}
