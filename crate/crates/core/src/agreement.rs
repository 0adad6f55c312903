//! Inter-annotator disagreement detection and resolution.
//!
//! Several annotators label copies of the same dialogue. For every
//! (turn, label) item where their values differ we build a [`VoteTally`]
//! with per-option vote shares and a majority default the arbiter can
//! accept with one keystroke. [`kappa`] and [`stats`] summarise agreement.
//!
//! Kappa is Cohen's pairwise statistic. Items are turns, categories are
//! whole label values (exact equality), and the final figure is the
//! unweighted mean over annotator pairs and labels. [`KappaReport::per_turn`]
//! splits that mean into one contribution per turn; the mean of the per-turn
//! contributions equals the pooled kappa.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{
    parse_dialogue_value, to_canonical_json, validate_value, Cardinality, Dialogue, LabelDef,
    LabelKind, LabelSchema, LabelValue, ParseError, ValidationError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("dialogue `{dialogue_id}` has {found} annotator copies, at least 2 are needed")]
    TooFewAnnotators { dialogue_id: String, found: usize },
    #[error("annotator `{annotator}` has {found} turns in `{dialogue_id}`, expected {expected}")]
    TurnCountMismatch {
        dialogue_id: String,
        annotator: String,
        expected: usize,
        found: usize,
    },
    #[error("annotator `{annotator}` has different utterance text on turn {turn} of `{dialogue_id}`")]
    UtteranceTextMismatch {
        dialogue_id: String,
        annotator: String,
        turn: usize,
    },
    #[error("annotator `{annotator}` appears twice for `{dialogue_id}`")]
    DuplicateAnnotator {
        dialogue_id: String,
        annotator: String,
    },
}

/// Annotator copies of one dialogue with identical turn structure.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    dialogue_id: String,
    annotators: BTreeMap<String, Dialogue>,
}

impl AnnotationSet {
    pub fn new(
        dialogue_id: impl Into<String>,
        copies: impl IntoIterator<Item = (String, Dialogue)>,
    ) -> Result<Self, AlignError> {
        let dialogue_id = dialogue_id.into();
        let mut annotators = BTreeMap::new();
        for (annotator, dialogue) in copies {
            if annotators.contains_key(&annotator) {
                return Err(AlignError::DuplicateAnnotator {
                    dialogue_id,
                    annotator,
                });
            }
            annotators.insert(annotator, dialogue);
        }
        if annotators.len() < 2 {
            return Err(AlignError::TooFewAnnotators {
                dialogue_id,
                found: annotators.len(),
            });
        }
        let (_, reference) = annotators.iter().next().expect("at least two");
        for (annotator, d) in &annotators {
            if d.turns.len() != reference.turns.len() {
                return Err(AlignError::TurnCountMismatch {
                    dialogue_id,
                    annotator: annotator.clone(),
                    expected: reference.turns.len(),
                    found: d.turns.len(),
                });
            }
            if let Some(turn) = d
                .turns
                .iter()
                .zip(&reference.turns)
                .position(|(a, b)| a.usr != b.usr || a.sys != b.sys)
            {
                return Err(AlignError::UtteranceTextMismatch {
                    dialogue_id,
                    annotator: annotator.clone(),
                    turn,
                });
            }
        }
        Ok(AnnotationSet {
            dialogue_id,
            annotators,
        })
    }

    pub fn dialogue_id(&self) -> &str {
        &self.dialogue_id
    }

    pub fn annotators(&self) -> &BTreeMap<String, Dialogue> {
        &self.annotators
    }

    pub fn annotator_count(&self) -> usize {
        self.annotators.len()
    }

    pub fn turn_count(&self) -> usize {
        self.reference().turns.len()
    }

    fn reference(&self) -> &Dialogue {
        self.annotators.values().next().expect("at least two")
    }

    /// Every annotator's value for `def` on `turn`, blank when absent.
    pub fn votes(&self, turn: usize, def: &LabelDef) -> Vec<LabelValue> {
        self.annotators
            .values()
            .map(|d| d.turns[turn].value_or_empty(def))
            .collect()
    }

    /// Adds more annotator copies, re-checking alignment.
    pub fn extend(
        self,
        copies: impl IntoIterator<Item = (String, Dialogue)>,
    ) -> Result<Self, AlignError> {
        let id = self.dialogue_id.clone();
        AnnotationSet::new(id, self.annotators.into_iter().chain(copies))
    }
}

/// Groups annotator dialogues by dialogue id, in order of first appearance.
pub fn align(
    copies: impl IntoIterator<Item = (String, Dialogue)>,
) -> Result<Vec<AnnotationSet>, AlignError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<(String, Dialogue)>> = BTreeMap::new();
    for (annotator, dialogue) in copies {
        if !groups.contains_key(&dialogue.id) {
            order.push(dialogue.id.clone());
        }
        groups
            .entry(dialogue.id.clone())
            .or_default()
            .push((annotator, dialogue));
    }
    order
        .into_iter()
        .map(|id| {
            let copies = groups.remove(&id).expect("grouped above");
            AnnotationSet::new(id, copies)
        })
        .collect()
}

/// One candidate shown to the arbiter. For slot-value labels `slot` names
/// the slot and an empty `value` stands for "slot left out".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOption {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    pub value: LabelValue,
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTally {
    #[serde(rename = "turn")]
    pub turn_index: usize,
    pub label: String,
    pub options: Vec<VoteOption>,
    pub default: LabelValue,
    pub tie: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionStatus {
    Unresolved,
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    #[serde(flatten)]
    pub tally: VoteTally,
    pub status: ResolutionStatus,
    pub resolved_value: Option<LabelValue>,
}

impl Disagreement {
    pub fn is_accepted(&self) -> bool {
        self.status == ResolutionStatus::Accepted
    }
}

/// Output of [`majority_default`].
#[derive(Debug, Clone, PartialEq)]
pub struct Majority {
    pub default: LabelValue,
    pub options: Vec<VoteOption>,
    pub tie: bool,
}

/// Tallies votes and picks the value pre-selected for the arbiter.
///
/// * multi-choice classification: a class is in the default iff more than
///   half the annotators chose it; exactly half excludes it and flags a tie.
/// * single-choice classification: the most-voted option (the blank
///   selection is an option too); ties go to the earliest class in the
///   schema, blank last.
/// * slot-value: the same plurality rule per slot over value strings, with
///   "slot left out" as an option; ties go to the smallest string, left-out
///   last.
pub fn majority_default(votes: &[LabelValue], def: &LabelDef) -> Majority {
    let options = tally_options(votes, def);
    let (default, tie) = default_from_options(&options, def, votes.len());
    Majority {
        default,
        options,
        tie,
    }
}

fn tally_options(votes: &[LabelValue], def: &LabelDef) -> Vec<VoteOption> {
    let n = votes.len();
    let option = |slot: Option<String>, value: LabelValue, count: usize| VoteOption {
        slot,
        value,
        count,
        share: count as f64 / n as f64,
    };
    match def.kind {
        LabelKind::Classification => {
            let mut counts = vec![0usize; def.values.len()];
            let mut blank = 0;
            for v in votes {
                if let LabelValue::Classification { selected } = v {
                    if selected.is_empty() {
                        blank += 1;
                    }
                    for class in selected {
                        if let Some(i) = def.position(class) {
                            counts[i] += 1;
                        }
                    }
                }
            }
            let mut options: Vec<VoteOption> = def
                .values
                .iter()
                .zip(counts)
                .filter(|(_, c)| *c > 0)
                .map(|(class, c)| option(None, LabelValue::classes([class.as_str()]), c))
                .collect();
            if def.effective_cardinality() == Cardinality::Single && blank > 0 {
                options.push(option(None, def.empty_value(), blank));
            }
            options
        }
        LabelKind::SlotValue => {
            let mut options = Vec::new();
            for slot in &def.values {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                let mut absent = 0;
                for v in votes {
                    match v {
                        LabelValue::SlotValue { pairs } => match pairs.get(slot) {
                            Some(value) => *counts.entry(value.as_str()).or_default() += 1,
                            None => absent += 1,
                        },
                        LabelValue::Classification { .. } => absent += 1,
                    }
                }
                if counts.is_empty() {
                    continue;
                }
                for (value, c) in counts {
                    options.push(option(
                        Some(slot.clone()),
                        LabelValue::slots([(slot.as_str(), value)]),
                        c,
                    ));
                }
                if absent > 0 {
                    options.push(option(Some(slot.clone()), def.empty_value(), absent));
                }
            }
            options
        }
    }
}

/// Recomputes the default and tie flag from a stored options list.
/// Options must be in the order produced by [`majority_default`].
pub fn default_from_options(
    options: &[VoteOption],
    def: &LabelDef,
    n_annotators: usize,
) -> (LabelValue, bool) {
    match (def.kind, def.effective_cardinality()) {
        (LabelKind::Classification, Cardinality::Multi) => {
            let mut selected = BTreeSet::new();
            let mut tie = false;
            for o in options {
                if let LabelValue::Classification { selected: s } = &o.value {
                    match (2 * o.count).cmp(&n_annotators) {
                        std::cmp::Ordering::Greater => selected.extend(s.iter().cloned()),
                        std::cmp::Ordering::Equal => tie = true,
                        std::cmp::Ordering::Less => {}
                    }
                }
            }
            (LabelValue::Classification { selected }, tie)
        }
        (LabelKind::Classification, Cardinality::Single) => match plurality(options.iter()) {
            Some((winner, tie)) => (winner.value.clone(), tie),
            None => (def.empty_value(), false),
        },
        (LabelKind::SlotValue, _) => {
            let mut pairs = BTreeMap::new();
            let mut tie = false;
            let mut slots: Vec<&str> = Vec::new();
            for o in options {
                if let Some(s) = o.slot.as_deref() {
                    if !slots.contains(&s) {
                        slots.push(s);
                    }
                }
            }
            for slot in slots {
                let Some((winner, slot_tie)) =
                    plurality(options.iter().filter(|o| o.slot.as_deref() == Some(slot)))
                else {
                    continue;
                };
                tie |= slot_tie;
                if let LabelValue::SlotValue { pairs: p } = &winner.value {
                    pairs.extend(p.iter().map(|(k, v)| (k.clone(), v.clone())));
                }
            }
            (LabelValue::SlotValue { pairs }, tie)
        }
    }
}

/// First option with the highest count, and whether another option shares it.
fn plurality<'a>(options: impl Iterator<Item = &'a VoteOption>) -> Option<(&'a VoteOption, bool)> {
    let mut best: Option<(&VoteOption, bool)> = None;
    for o in options {
        best = match best {
            None => Some((o, false)),
            Some((b, _)) if o.count > b.count => Some((o, false)),
            Some((b, _)) if o.count == b.count => Some((b, true)),
            keep => keep,
        };
    }
    best
}

/// Every (turn, label) item on which the annotators do not all agree,
/// ordered by turn then schema label order.
pub fn detect(set: &AnnotationSet, schema: &LabelSchema) -> Vec<Disagreement> {
    let mut out = Vec::new();
    for turn in 0..set.turn_count() {
        for def in &schema.labels {
            let votes = set.votes(turn, def);
            if votes.windows(2).all(|w| w[0] == w[1]) {
                continue;
            }
            let m = majority_default(&votes, def);
            out.push(Disagreement {
                tally: VoteTally {
                    turn_index: turn,
                    label: def.name.clone(),
                    options: m.options,
                    default: m.default,
                    tie: m.tie,
                },
                status: ResolutionStatus::Unresolved,
                resolved_value: None,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcceptError {
    #[error("turn {turn} label `{label}` is already accepted")]
    AlreadyAccepted { turn: usize, label: String },
    #[error("invalid resolution: {0}")]
    InvalidValue(#[from] ValidationError),
}

/// Marks a disagreement accepted, with the arbiter's value or the default.
pub fn accept(
    d: &mut Disagreement,
    def: &LabelDef,
    value: Option<LabelValue>,
) -> Result<(), AcceptError> {
    if d.is_accepted() {
        return Err(AcceptError::AlreadyAccepted {
            turn: d.tally.turn_index,
            label: d.tally.label.clone(),
        });
    }
    let value = value.unwrap_or_else(|| d.tally.default.clone());
    validate_value(def, &value)?;
    d.status = ResolutionStatus::Accepted;
    d.resolved_value = Some(value);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaReport {
    /// Mean pairwise Cohen's kappa over annotator pairs and labels.
    pub kappa: f64,
    /// Contribution of each turn; the mean of these equals `kappa`.
    pub per_turn: Vec<f64>,
}

/// Agreement counts for one annotator pair on one label, in exact integers.
struct PairCounts {
    items: u64,
    agree: u64,
    /// Σ over categories of count_a × count_b.
    chance: u64,
}

impl PairCounts {
    fn new(a: &[&LabelValue], b: &[&LabelValue]) -> Self {
        let mut ca: BTreeMap<&LabelValue, u64> = BTreeMap::new();
        let mut cb: BTreeMap<&LabelValue, u64> = BTreeMap::new();
        let mut agree = 0;
        for (x, y) in a.iter().zip(b) {
            *ca.entry(x).or_default() += 1;
            *cb.entry(y).or_default() += 1;
            if x == y {
                agree += 1;
            }
        }
        let chance = ca
            .iter()
            .map(|(k, n)| n * cb.get(k).copied().unwrap_or(0))
            .sum();
        PairCounts {
            items: a.len() as u64,
            agree,
            chance,
        }
    }

    /// κ = (p_o − p_e)/(1 − p_e) = (n·agree − Σ)/(n² − Σ).
    /// When p_e = 1 both annotators used one shared category throughout, so
    /// p_o = 1 too and κ is 1.
    fn kappa(&self) -> f64 {
        let n2 = self.items * self.items;
        if n2 == self.chance {
            return 1.0;
        }
        (self.items as f64 * self.agree as f64 - self.chance as f64)
            / (n2 as f64 - self.chance as f64)
    }

    /// (1[agree on item] − p_e)/(1 − p_e); averages over items to `kappa`.
    fn item_contribution(&self, agreed: bool) -> f64 {
        let n2 = self.items * self.items;
        if n2 == self.chance {
            return 1.0;
        }
        let n2 = n2 as f64;
        let pe = self.chance as f64 / n2;
        (if agreed { 1.0 } else { 0.0 } - pe) / (1.0 - pe)
    }
}

/// Pooled pairwise kappa and its per-turn decomposition.
///
/// A dialogue without turns, or a schema without labels, has nothing to
/// disagree on and reports κ = 1.
pub fn kappa(set: &AnnotationSet, schema: &LabelSchema) -> KappaReport {
    let dialogues: Vec<&Dialogue> = set.annotators.values().collect();
    let n_turns = set.turn_count();
    let mut total = 0.0;
    let mut groups = 0usize;
    let mut per_turn = vec![0.0; n_turns];
    for def in &schema.labels {
        let outcomes: Vec<Vec<LabelValue>> = dialogues
            .iter()
            .map(|d| d.turns.iter().map(|t| t.value_or_empty(def)).collect())
            .collect();
        for i in 0..dialogues.len() {
            for j in i + 1..dialogues.len() {
                let a: Vec<&LabelValue> = outcomes[i].iter().collect();
                let b: Vec<&LabelValue> = outcomes[j].iter().collect();
                groups += 1;
                if n_turns == 0 {
                    total += 1.0;
                    continue;
                }
                let counts = PairCounts::new(&a, &b);
                total += counts.kappa();
                for (t, slot) in per_turn.iter_mut().enumerate() {
                    *slot += counts.item_contribution(a[t] == b[t]);
                }
            }
        }
    }
    if groups == 0 {
        return KappaReport {
            kappa: 1.0,
            per_turn: vec![1.0; n_turns],
        };
    }
    for v in &mut per_turn {
        *v /= groups as f64;
    }
    KappaReport {
        kappa: total / groups as f64,
        per_turn,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub kappa: f64,
    pub total_annotations: usize,
    pub total_errors: usize,
    pub accuracy: f64,
}

impl AgreementStats {
    /// Pretty JSON with a trailing newline; the CLI and the server both emit
    /// exactly this text.
    pub fn to_canonical_json(&self) -> String {
        to_canonical_json(self)
    }
}

/// The statistics panel. `disagreements` must come from [`detect`] on the
/// same set; their defaults are the majority values accuracy is measured
/// against.
pub fn stats(
    set: &AnnotationSet,
    schema: &LabelSchema,
    disagreements: &[Disagreement],
) -> AgreementStats {
    let n_annotators = set.annotator_count();
    let n_turns = set.turn_count();
    let n_labels = schema.len();
    let defaults: BTreeMap<(usize, &str), &LabelValue> = disagreements
        .iter()
        .map(|d| ((d.tally.turn_index, d.tally.label.as_str()), &d.tally.default))
        .collect();
    let mut accuracy_sum = 0.0;
    for turn in 0..n_turns {
        if n_labels == 0 {
            accuracy_sum += 1.0;
            continue;
        }
        let mut matches = 0usize;
        for def in &schema.labels {
            let votes = set.votes(turn, def);
            matches += match defaults.get(&(turn, def.name.as_str())) {
                Some(default) => votes.iter().filter(|v| v == default).count(),
                None => votes.len(),
            };
        }
        accuracy_sum += matches as f64 / (n_annotators * n_labels) as f64;
    }
    AgreementStats {
        kappa: kappa(set, schema).kappa,
        total_annotations: n_annotators * n_turns * n_labels,
        total_errors: disagreements.len(),
        accuracy: if n_turns == 0 {
            1.0
        } else {
            accuracy_sum / n_turns as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0} disagreements are still unresolved")]
pub struct UnresolvedRemaining(pub usize);

/// Merges the annotator copies: agreed items come from the copies,
/// disputed items take their resolved value. A blank resolution leaves the
/// label out.
pub fn export_resolved(
    set: &AnnotationSet,
    disagreements: &[Disagreement],
) -> Result<Dialogue, UnresolvedRemaining> {
    let open = disagreements.iter().filter(|d| !d.is_accepted()).count();
    if open > 0 {
        return Err(UnresolvedRemaining(open));
    }
    let mut merged = set.reference().clone();
    for d in disagreements {
        let turn = &mut merged.turns[d.tally.turn_index];
        match d.resolved_value.clone() {
            Some(v) if !v.is_empty() => {
                turn.labels.insert(d.tally.label.clone(), v);
            }
            _ => {
                turn.labels.remove(&d.tally.label);
            }
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Accept(#[from] AcceptError),
    #[error(transparent)]
    Unresolved(#[from] UnresolvedRemaining),
    #[error("no disagreement on turn {turn} label `{label}`")]
    UnknownDisagreement { turn: usize, label: String },
    #[error("corrupt session: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// An arbiter's working state for one dialogue.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionSession {
    set: AnnotationSet,
    disagreements: Vec<Disagreement>,
    stats: AgreementStats,
}

#[derive(Serialize)]
struct SessionDoc<'a> {
    dialogue_id: &'a str,
    annotators: &'a BTreeMap<String, Dialogue>,
    disagreements: &'a [Disagreement],
    stats: &'a AgreementStats,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionFile {
    dialogue_id: String,
    annotators: BTreeMap<String, Value>,
    disagreements: Vec<Disagreement>,
    #[allow(dead_code)]
    stats: Value,
}

impl ResolutionSession {
    pub fn new(set: AnnotationSet, schema: &LabelSchema) -> Self {
        let disagreements = detect(&set, schema);
        let stats = stats(&set, schema, &disagreements);
        ResolutionSession {
            set,
            disagreements,
            stats,
        }
    }

    pub fn set(&self) -> &AnnotationSet {
        &self.set
    }

    pub fn disagreements(&self) -> &[Disagreement] {
        &self.disagreements
    }

    pub fn stats(&self) -> &AgreementStats {
        &self.stats
    }

    pub fn unresolved(&self) -> usize {
        self.disagreements.iter().filter(|d| !d.is_accepted()).count()
    }

    pub fn kappa_report(&self, schema: &LabelSchema) -> KappaReport {
        kappa(&self.set, schema)
    }

    pub fn accept(
        &mut self,
        schema: &LabelSchema,
        turn: usize,
        label: &str,
        value: Option<LabelValue>,
    ) -> Result<&Disagreement, SessionError> {
        let unknown = || SessionError::UnknownDisagreement {
            turn,
            label: label.to_string(),
        };
        let def = schema.get(label).ok_or_else(unknown)?;
        let d = self
            .disagreements
            .iter_mut()
            .find(|d| d.tally.turn_index == turn && d.tally.label == label)
            .ok_or_else(unknown)?;
        accept(d, def, value)?;
        Ok(d)
    }

    /// Accepts the default of every open disagreement; ties only when
    /// `break_ties` is set. Returns the tallies of ties left open.
    pub fn accept_majority(&mut self, schema: &LabelSchema, break_ties: bool) -> Vec<VoteTally> {
        let mut ties = Vec::new();
        for d in &mut self.disagreements {
            if d.is_accepted() {
                continue;
            }
            if d.tally.tie && !break_ties {
                ties.push(d.tally.clone());
                continue;
            }
            let def = schema.get(&d.tally.label).expect("detected against schema");
            accept(d, def, None).expect("defaults are valid and the item is open");
        }
        ties
    }

    /// Adds annotator copies; accepted resolutions of items that are still
    /// disputed afterwards are kept.
    pub fn add_annotators(
        self,
        schema: &LabelSchema,
        copies: impl IntoIterator<Item = (String, Dialogue)>,
    ) -> Result<Self, SessionError> {
        let previous = self.disagreements;
        let mut next = ResolutionSession::new(self.set.extend(copies)?, schema);
        for d in &mut next.disagreements {
            if let Some(old) = previous.iter().find(|o| {
                o.tally.turn_index == d.tally.turn_index && o.tally.label == d.tally.label
            }) {
                d.status = old.status;
                d.resolved_value = old.resolved_value.clone();
            }
        }
        Ok(next)
    }

    pub fn export(&self) -> Result<Dialogue, UnresolvedRemaining> {
        export_resolved(&self.set, &self.disagreements)
    }

    pub fn to_json(&self) -> String {
        to_canonical_json(&SessionDoc {
            dialogue_id: &self.set.dialogue_id,
            annotators: &self.set.annotators,
            disagreements: &self.disagreements,
            stats: &self.stats,
        })
    }

    /// Reads a session file. Tallies and statistics are recomputed from the
    /// annotator copies and must agree with what the file recorded.
    pub fn from_json(json: &str, schema: &LabelSchema) -> Result<Self, SessionError> {
        let file: SessionFile =
            serde_json::from_str(json).map_err(|e| SessionError::Corrupt(e.to_string()))?;
        let copies = file
            .annotators
            .into_iter()
            .map(|(id, v)| {
                let d = parse_dialogue_value(v, schema, &format!("annotators.{id}"))?;
                Ok((id, d))
            })
            .collect::<Result<Vec<_>, ParseError>>()?;
        let set = AnnotationSet::new(file.dialogue_id, copies)?;
        let mut session = ResolutionSession::new(set, schema);
        if session.disagreements.len() != file.disagreements.len() {
            return Err(SessionError::Corrupt(format!(
                "{} disagreements recorded, {} found",
                file.disagreements.len(),
                session.disagreements.len()
            )));
        }
        for (fresh, stored) in session.disagreements.iter_mut().zip(file.disagreements) {
            if fresh.tally.turn_index != stored.tally.turn_index
                || fresh.tally.label != stored.tally.label
                || fresh.tally.default != stored.tally.default
                || fresh.tally.tie != stored.tally.tie
            {
                return Err(SessionError::Corrupt(format!(
                    "recorded tally for turn {} label `{}` does not match the annotations",
                    stored.tally.turn_index, stored.tally.label
                )));
            }
            match (stored.status, stored.resolved_value) {
                (ResolutionStatus::Accepted, Some(v)) => {
                    let def = schema.get(&fresh.tally.label).expect("detected against schema");
                    validate_value(def, &v).map_err(|e| SessionError::Corrupt(e.to_string()))?;
                    fresh.status = ResolutionStatus::Accepted;
                    fresh.resolved_value = Some(v);
                }
                (ResolutionStatus::Unresolved, None) => {}
                _ => {
                    return Err(SessionError::Corrupt(
                        "status and resolved_value disagree".into(),
                    ))
                }
            }
        }
        Ok(session)
    }
}

#[derive(Serialize)]
struct StatsReport<'a> {
    overall: AgreementStats,
    dialogues: Vec<DialogueStats<'a>>,
}

#[derive(Serialize)]
struct DialogueStats<'a> {
    dialogue_id: &'a str,
    #[serde(flatten)]
    stats: &'a AgreementStats,
}

/// Pools several dialogues: kappa and accuracy are averaged over all turns,
/// counts are summed.
pub fn pooled_stats(sessions: &[ResolutionSession], schema: &LabelSchema) -> AgreementStats {
    let turns: usize = sessions.iter().map(|s| s.set().turn_count()).sum();
    let (mut kappa_sum, mut acc_sum) = (0.0, 0.0);
    for s in sessions {
        kappa_sum += s.kappa_report(schema).per_turn.iter().sum::<f64>();
        acc_sum += s.stats().accuracy * s.set().turn_count() as f64;
    }
    let mean = |sum: f64| if turns == 0 { 1.0 } else { sum / turns as f64 };
    AgreementStats {
        kappa: mean(kappa_sum),
        total_annotations: sessions.iter().map(|s| s.stats().total_annotations).sum(),
        total_errors: sessions.iter().map(|s| s.stats().total_errors).sum(),
        accuracy: mean(acc_sum),
    }
}

/// Statistics text for a batch of annotator copies. A single dialogue gives
/// its [`AgreementStats`] object; several give `{"overall", "dialogues"}`.
pub fn stats_report(
    copies: impl IntoIterator<Item = (String, Dialogue)>,
    schema: &LabelSchema,
) -> Result<String, AlignError> {
    let sessions: Vec<ResolutionSession> = align(copies)?
        .into_iter()
        .map(|set| ResolutionSession::new(set, schema))
        .collect();
    Ok(match sessions.as_slice() {
        [one] => one.stats().to_canonical_json(),
        many => to_canonical_json(&StatsReport {
            overall: pooled_stats(many, schema),
            dialogues: many
                .iter()
                .map(|s| DialogueStats {
                    dialogue_id: s.set().dialogue_id(),
                    stats: s.stats(),
                })
                .collect(),
        }),
    })
}
