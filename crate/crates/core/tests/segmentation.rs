mod common;

use std::fs;
use std::path::PathBuf;

use dialign::model::serialize;
use dialign::recommend::RecommenderRegistry;
use dialign::segment::{render, segment, to_dialogues, RawSegmentation};
use common::votes::{expected_utterances, renderable};
use proptest::prelude::*;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/segment")
}

fn cases() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(golden_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .map(|p| {
            let stem = p.file_stem().unwrap().to_str().unwrap().to_string();
            (stem, String::from_utf8(fs::read(&p).unwrap()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn golden(stem: &str, kind: &str) -> String {
    fs::read_to_string(golden_dir().join(format!("{stem}.{kind}.json"))).unwrap()
}

#[test]
fn corpus_has_enough_cases() {
    assert!(cases().len() >= 20);
}

#[test]
fn segmentation_matches_golden() {
    for (stem, raw) in cases() {
        let expected: serde_json::Value = serde_json::from_str(&golden(&stem, "segmentation")).unwrap();
        let got = serde_json::to_value(segment(&raw)).unwrap();
        assert_eq!(got, expected, "case {stem}");
    }
}

#[test]
fn datasets_match_golden_bytes() {
    for (stem, raw) in cases() {
        let out = to_dialogues(&segment(&raw), &stem, &RecommenderRegistry::default());
        assert_eq!(serialize(&out.collection), golden(&stem, "dataset"), "case {stem}");
    }
}

#[test]
fn spans_cover_the_utterance_lines() {
    for (stem, raw) in cases() {
        let lines: Vec<&str> = raw.split('\n').collect();
        let seg = segment(&raw);
        for (utts, spans) in seg.dialogues.iter().zip(&seg.source_line_spans) {
            for (u, &(a, b)) in utts.iter().zip(spans) {
                let joined = lines[a - 1..b]
                    .iter()
                    .map(|l| l.trim())
                    .collect::<Vec<_>>()
                    .join(" ");
                assert_eq!(&joined, u, "case {stem}");
            }
        }
    }
}

#[test]
fn segmenting_twice_is_stable() {
    for (stem, raw) in cases() {
        let c = to_dialogues(&segment(&raw), &stem, &RecommenderRegistry::default()).collection;
        let again = segment(&render(&c));
        assert_eq!(again.dialogues, segment(&raw).dialogues, "case {stem}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn render_then_segment_recovers_utterances(
        c in common::strategies::collection(&common::mixed_schema())
            .prop_filter("separator-only utterance", renderable)
    ) {
        let seg: RawSegmentation = segment(&render(&c));
        prop_assert_eq!(seg.dialogues, expected_utterances(&c));
    }
}
