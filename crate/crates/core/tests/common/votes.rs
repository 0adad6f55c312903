//! Small annotation instances built from raw vote tables.

use std::collections::BTreeMap;

use dialign::agreement::AnnotationSet;
use dialign::segment::normalize_utterance;
use dialign::{Cardinality, Dialogue, DialogueCollection, LabelDef, LabelSchema, LabelValue, Turn};
use proptest::prelude::*;

pub const CATEGORIES: [&str; 3] = ["A", "B", "C"];

pub fn single_schema(labels: usize) -> LabelSchema {
    LabelSchema::new(
        (0..labels)
            .map(|l| LabelDef::classification(format!("l{l}"), Cardinality::Single, CATEGORIES))
            .collect(),
    )
    .unwrap()
}

/// `votes[label][annotator][turn]` category indices into copies of one dialogue.
pub fn build_set(votes: &[Vec<Vec<usize>>], schema: &LabelSchema) -> AnnotationSet {
    let annotators = votes[0].len();
    let turns = votes[0][0].len();
    let copies = (0..annotators).map(|a| {
        let mut d = Dialogue::new("d", "d");
        for t in 0..turns {
            let mut turn = Turn::new(format!("utterance {t}"), "");
            for (l, def) in schema.labels.iter().enumerate() {
                turn.labels.insert(
                    def.name.clone(),
                    LabelValue::classes([CATEGORIES[votes[l][a][t]]]),
                );
            }
            d.push_turn(turn);
        }
        (format!("annotator-{a}"), d)
    });
    AnnotationSet::new("d", copies).unwrap()
}

/// Up to 3 annotators, 5 turns and 3 categories, one or two labels.
pub fn small_instance() -> impl Strategy<Value = Vec<Vec<Vec<usize>>>> {
    (2usize..=3, 1usize..=5, 1usize..=2).prop_flat_map(|(annotators, turns, labels)| {
        proptest::collection::vec(
            proptest::collection::vec(proptest::collection::vec(0usize..3, turns), annotators),
            labels,
        )
    })
}

/// Mixed-schema copies of one dialogue: `(annotator values per turn per label)`.
pub fn mixed_instance() -> impl Strategy<Value = Vec<Vec<BTreeMap<String, LabelValue>>>> {
    let schema = super::mixed_schema();
    (2usize..=5, 1usize..=5).prop_flat_map(move |(annotators, turns)| {
        proptest::collection::vec(
            proptest::collection::vec(super::strategies::labels_for(&schema), turns),
            annotators,
        )
    })
}

pub fn build_mixed(copies: &[Vec<BTreeMap<String, LabelValue>>], names: &[String]) -> AnnotationSet {
    let dialogues = copies.iter().zip(names).map(|(turns, name)| {
        let mut d = Dialogue::new("d", "d");
        for (t, labels) in turns.iter().enumerate() {
            d.push_turn(Turn {
                usr: format!("u{t}"),
                labels: labels.clone(),
                ..Turn::default()
            });
        }
        (name.clone(), d)
    });
    AnnotationSet::new("d", dialogues).unwrap()
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("annotator-{i}")).collect()
}

/// `votes[label][annotator][turn]` view of a mixed instance, blanks filled in.
pub fn mixed_votes(copies: &[Vec<BTreeMap<String, LabelValue>>], schema: &LabelSchema) -> Vec<Vec<Vec<LabelValue>>> {
    schema
        .labels
        .iter()
        .map(|def| {
            copies
                .iter()
                .map(|turns| {
                    turns
                        .iter()
                        .map(|l| l.get(&def.name).cloned().unwrap_or_else(|| def.empty_value()))
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Utterances a render of `c` should segment back into.
pub fn expected_utterances(c: &DialogueCollection) -> Vec<Vec<String>> {
    c.dialogues
        .iter()
        .map(|d| {
            d.turns
                .iter()
                .flat_map(|t| [normalize_utterance(&t.usr), normalize_utterance(&t.sys)])
                .filter(|u| !u.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|d| !d.is_empty())
        .collect()
}

/// An utterance that is exactly the separator cannot be written as text.
pub fn renderable(c: &DialogueCollection) -> bool {
    c.dialogues.iter().flat_map(|d| &d.turns).all(|t| {
        normalize_utterance(&t.usr) != "===" && normalize_utterance(&t.sys) != "==="
    })
}
