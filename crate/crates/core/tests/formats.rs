mod common;

use std::collections::HashSet;

use common::{names_of, oracle_spans, random_tags};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seedner_core::datasets::{read_conll, read_jsonl, write_conll, write_jsonl};
use seedner_core::{
    decode_spans, remap_labels, subset_ladder, DataPoint, Dataset, LabelSpace, Provenance,
    RemapPolicy, SizeLadder,
};

const ALPHABET: &[&str] = &[
    "a", "b", "Z", "æ", "ø", "å", "ẹ̀", "ṣ", "ಕ", "த", "\"", "\\", "{", "}", "[", ",", ":", "'",
    "-", "0", "é", "ß", "🙂",
];

fn token<R: Rng>(rng: &mut R) -> String {
    let len = rng.random_range(1..=6);
    (0..len)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
        .collect()
}

fn random_point<R: Rng>(rng: &mut R, i: usize) -> DataPoint {
    let len = rng.random_range(1..=25);
    let tokens = (0..len).map(|_| token(rng)).collect();
    let point = DataPoint::new(tokens, random_tags(rng, len));
    if rng.random_bool(0.5) {
        point.with_id(format!("p{i}"))
    } else {
        point
    }
}

fn random_points(seed: u64, count: usize) -> Vec<DataPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| random_point(&mut rng, i)).collect()
}

#[test]
fn jsonl_round_trip_is_exact() {
    let space = LabelSpace::four_type();
    let points = random_points(7, 1000);
    let mut first = Vec::new();
    write_jsonl(&mut first, &points).unwrap();
    let back = read_jsonl(first.as_slice(), &space).unwrap();
    assert_eq!(back, points);
    let mut second = Vec::new();
    write_jsonl(&mut second, &back).unwrap();
    assert_eq!(first, second);
}

#[test]
fn conll_round_trip_drops_only_ids() {
    let space = LabelSpace::four_type();
    let points = random_points(8, 1000);
    let mut buf = Vec::new();
    write_conll(&mut buf, &points, &space).unwrap();
    let back = read_conll(buf.as_slice(), &space).unwrap();
    assert_eq!(back.len(), points.len());
    for (a, b) in points.iter().zip(&back) {
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.tags, b.tags);
    }
}

#[test]
fn saved_dataset_reloads_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("syn.jsonl");
    let ds = Dataset::new(
        "syn",
        LabelSpace::four_type(),
        random_points(9, 50),
        Provenance::synthetic("mock", 4),
    )
    .unwrap();
    ds.save(&path).unwrap();
    // the fallback space is ignored in favour of the sidecar
    let back = Dataset::load(&path, &LabelSpace::three_type()).unwrap();
    assert_eq!(back, ds);
}

fn spans_of(tags: &[u32]) -> Vec<(String, usize, usize)> {
    oracle_spans(&names_of(tags))
}

#[test]
fn remap_preserves_surviving_spans() {
    let source = LabelSpace::four_type();
    let target = LabelSpace::from_types(&["PER", "LOC"]).unwrap();
    let policy = RemapPolicy::default().rename("ORG", "PER").erase("DATE");
    let points = random_points(10, 2000);
    let ds = Dataset::new("src", source, points, Provenance::organic()).unwrap();
    let out = remap_labels(&ds, &target, &policy).unwrap();

    for (before, after) in ds.points.iter().zip(&out.points) {
        let expected: Vec<_> = spans_of(&before.tags)
            .into_iter()
            .filter(|s| s.0 != "DATE")
            .map(|(t, a, b)| (if t == "ORG" { "PER".to_string() } else { t }, a, b))
            .collect();
        let got: Vec<_> = decode_spans(&after.tags, &target)
            .unwrap()
            .into_iter()
            .map(|s| (s.entity_type, s.start, s.end))
            .collect();
        assert_eq!(got, expected, "tags {:?}", before.tags);
        assert_eq!(before.tokens, after.tokens);
    }
}

fn numbered(n: usize) -> Dataset {
    let points = (0..n)
        .map(|i| DataPoint::new(vec![format!("w{i}")], vec![0]).with_id(i.to_string()))
        .collect();
    Dataset::new(
        "num",
        LabelSpace::three_type(),
        points,
        Provenance::organic(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn ladder_rungs_nest(
        n in 0usize..400,
        mut sizes in prop::collection::btree_set(1usize..600, 1..6),
        seed in any::<u64>(),
    ) {
        let sizes: Vec<usize> = std::mem::take(&mut sizes).into_iter().collect();
        let ds = numbered(n);
        let rungs = subset_ladder(&ds, &SizeLadder::new(sizes.clone(), seed).unwrap()).unwrap();
        prop_assert_eq!(rungs.len(), sizes.len());
        for (rung, &size) in rungs.iter().zip(&sizes) {
            prop_assert_eq!(rung.dataset.len(), size.min(n));
            prop_assert_eq!(rung.clipped, size > n);
            let ids: HashSet<_> = rung.dataset.points.iter().map(|p| p.id.clone()).collect();
            prop_assert_eq!(ids.len(), rung.dataset.len());
        }
        for pair in rungs.windows(2) {
            let small = &pair[0].dataset.points;
            prop_assert_eq!(&pair[1].dataset.points[..small.len()], &small[..]);
        }
    }
}
