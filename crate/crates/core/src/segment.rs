//! Raw transcript segmentation.
//!
//! Grammar: utterances are separated by one or more blank (whitespace-only)
//! lines, dialogues by a line whose trimmed content is exactly `===`.
//! Lines inside one utterance are trimmed and joined with a single space.
//! Utterances alternate user, system, user, ... starting with the user.

use serde::Serialize;

use crate::model::{generated_dialogue_id, Dialogue, DialogueCollection, Turn};
use crate::recommend::{RecommenderFailure, RecommenderRegistry};

const DIALOGUE_SEPARATOR: &str = "===";

/// Utterances of each dialogue, with the source lines each one came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RawSegmentation {
    pub dialogues: Vec<Vec<String>>,
    /// 1-based, inclusive `(first line, last line)` per utterance.
    pub source_line_spans: Vec<Vec<(usize, usize)>>,
}

impl RawSegmentation {
    pub fn utterance_count(&self) -> usize {
        self.dialogues.iter().map(Vec::len).sum()
    }
}

/// Splits raw text into dialogues and utterances. Never fails; CRLF input is
/// normalized first.
pub fn segment(raw: &str) -> RawSegmentation {
    let normalized = raw.replace("\r\n", "\n");
    let mut out = RawSegmentation::default();
    let mut dialogue: Vec<String> = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut utterance: Vec<&str> = Vec::new();
    let mut start = 0;
    let mut end = 0;

    for (i, line) in normalized.split('\n').enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed == DIALOGUE_SEPARATOR {
            close_utterance(&mut utterance, &mut dialogue, &mut spans, start, end);
            if !dialogue.is_empty() {
                out.dialogues.push(std::mem::take(&mut dialogue));
                out.source_line_spans.push(std::mem::take(&mut spans));
            }
        } else if trimmed.is_empty() {
            close_utterance(&mut utterance, &mut dialogue, &mut spans, start, end);
        } else {
            if utterance.is_empty() {
                start = lineno;
            }
            end = lineno;
            utterance.push(trimmed);
        }
    }
    close_utterance(&mut utterance, &mut dialogue, &mut spans, start, end);
    if !dialogue.is_empty() {
        out.dialogues.push(dialogue);
        out.source_line_spans.push(spans);
    }
    out
}

fn close_utterance(
    utterance: &mut Vec<&str>,
    dialogue: &mut Vec<String>,
    spans: &mut Vec<(usize, usize)>,
    start: usize,
    end: usize,
) {
    if !utterance.is_empty() {
        dialogue.push(utterance.join(" "));
        spans.push((start, end));
        utterance.clear();
    }
}

/// A recommender failure on a specific turn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnFailure {
    pub dialogue_id: String,
    pub turn: usize,
    #[serde(flatten)]
    pub failure: RecommenderFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmented {
    pub collection: DialogueCollection,
    pub failures: Vec<TurnFailure>,
}

/// Pairs utterances into user-first turns and fills labels from the
/// registry. An odd utterance count leaves the last turn's `sys` empty.
pub fn to_dialogues(
    seg: &RawSegmentation,
    name: &str,
    registry: &RecommenderRegistry,
) -> Segmented {
    let mut collection = DialogueCollection::new(name);
    let mut failures = Vec::new();
    for (n, utterances) in seg.dialogues.iter().enumerate() {
        let id = generated_dialogue_id(n + 1);
        let mut dialogue = Dialogue::new(id.clone(), format!("Dialogue {}", n + 1));
        for pair in utterances.chunks(2) {
            let usr = pair[0].clone();
            let sys = pair.get(1).cloned().unwrap_or_default();
            let suggestions = registry.suggest_all(&usr);
            let turn = Turn {
                usr,
                sys,
                labels: suggestions.values,
                ..Turn::default()
            };
            let index = dialogue.push_turn(turn).index;
            failures.extend(suggestions.failures.into_iter().map(|failure| TurnFailure {
                dialogue_id: id.clone(),
                turn: index,
                failure,
            }));
        }
        collection.dialogues.push(dialogue);
    }
    Segmented {
        collection,
        failures,
    }
}

/// Writes a collection back out in the segmentation grammar, labels dropped.
///
/// Utterances are normalized the way [`segment`] would read them: each line
/// trimmed, blank lines removed, lines joined with a space. Empty system
/// responses and empty dialogues are skipped.
pub fn render(collection: &DialogueCollection) -> String {
    collection
        .dialogues
        .iter()
        .map(|d| {
            d.turns
                .iter()
                .flat_map(|t| [t.usr.as_str(), t.sys.as_str()])
                .map(normalize_utterance)
                .filter(|u| !u.is_empty())
                .collect::<Vec<_>>()
                .join("\n\n")
        })
        .filter(|d| !d.is_empty())
        .collect::<Vec<_>>()
        .join(&format!("\n{DIALOGUE_SEPARATOR}\n"))
}

/// The form an utterance takes after a render/segment round trip.
pub fn normalize_utterance(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}
