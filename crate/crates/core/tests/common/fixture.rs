//! Synthetic corpus shaped like a small crowdsourced annotation batch:
//! 154 dialogues whose turn counts have mean 3.5 and standard deviation
//! 1.55, three classification labels per turn, and noisy annotator copies.

use dialign::{Cardinality, Dialogue, DialogueCollection, LabelDef, LabelSchema, LabelValue, Turn};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const DIALOGUES: usize = 154;
pub const TURN_MEAN: f64 = 3.5;
pub const TURN_SD: f64 = 1.55;
/// Allowed deviation of the generated sample from the target moments.
pub const MOMENT_TOLERANCE: f64 = 0.05;

pub fn schema() -> LabelSchema {
    LabelSchema::new(vec![
        LabelDef::classification(
            "user_act",
            Cardinality::Multi,
            ["inform", "request", "confirm", "deny", "greet", "bye"],
        ),
        LabelDef::classification("domain", Cardinality::Single, ["hotel", "restaurant", "taxi", "train"]),
        LabelDef::classification("sentiment", Cardinality::Single, ["positive", "neutral", "negative"]),
    ])
    .unwrap()
}

pub fn moments(counts: &[usize]) -> (f64, f64) {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let var = counts
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Turn counts drawn from a rounded normal (at least one turn), taking the
/// first seed whose sample moments are within [`MOMENT_TOLERANCE`].
pub fn turn_counts(seed: u64) -> Vec<usize> {
    let normal = Normal::new(TURN_MEAN, TURN_SD).unwrap();
    for attempt in 0.. {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let counts: Vec<usize> = (0..DIALOGUES)
            .map(|_| normal.sample(&mut rng).round().max(1.0) as usize)
            .collect();
        let (mean, sd) = moments(&counts);
        if (mean - TURN_MEAN).abs() <= MOMENT_TOLERANCE && (sd - TURN_SD).abs() <= MOMENT_TOLERANCE {
            return counts;
        }
    }
    unreachable!()
}

const WORDS: &[&str] = &[
    "i", "need", "a", "cheap", "hotel", "in", "the", "north", "book", "table", "for", "two",
    "please", "thanks", "what", "time", "does", "train", "leave", "taxi", "to", "restaurant",
];

fn sentence(rng: &mut impl Rng) -> String {
    let n = rng.random_range(3..12);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_value(def: &LabelDef, rng: &mut impl Rng) -> LabelValue {
    match def.effective_cardinality() {
        Cardinality::Single => LabelValue::classes([def.values.choose(rng).unwrap().clone()]),
        Cardinality::Multi => {
            let k = rng.random_range(1..=2);
            LabelValue::classes(def.values.choose_multiple(rng, k).cloned())
        }
    }
}

/// The gold dataset.
pub fn dataset(seed: u64) -> DialogueCollection {
    let schema = schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut c = DialogueCollection::new("fixture");
    for (n, turns) in turn_counts(seed).into_iter().enumerate() {
        let mut d = Dialogue::new(format!("dialogue-{:04}", n + 1), format!("Dialogue {}", n + 1));
        for _ in 0..turns {
            let mut t = Turn::new(sentence(&mut rng), sentence(&mut rng));
            for def in &schema.labels {
                t.labels.insert(def.name.clone(), random_value(def, &mut rng));
            }
            d.push_turn(t);
        }
        c.dialogues.push(d);
    }
    c
}

/// Annotator copies of `gold`; every label is replaced by a random value
/// with probability `noise`.
pub fn annotator_copies(
    gold: &DialogueCollection,
    annotators: usize,
    noise: f64,
    seed: u64,
) -> Vec<(String, DialogueCollection)> {
    let schema = schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..annotators)
        .map(|a| {
            let mut copy = gold.clone();
            for d in &mut copy.dialogues {
                for t in &mut d.turns {
                    for def in &schema.labels {
                        if rng.random_bool(noise) {
                            t.labels.insert(def.name.clone(), random_value(def, &mut rng));
                        }
                    }
                }
            }
            (format!("annotator-{}", a + 1), copy)
        })
        .collect()
}
