//! Proptest generators for valid data under [`super::mixed_schema`].

use std::collections::{BTreeMap, BTreeSet};

use dialign::{Dialogue, DialogueCollection, LabelDef, LabelKind, LabelSchema, LabelValue, Turn};
use proptest::prelude::*;
use proptest::sample::subsequence;

/// Free text with spaces, tabs, newlines, CR, separators-looking runs and
/// non-ASCII characters.
pub fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 \t\n\r=.,!?'\"\\\\/{}éü漢😀-]{0,40}"
}

pub fn nonblank_text() -> impl Strategy<Value = String> {
    ("[a-zA-Z0-9漢é]", text(), "[a-zA-Z0-9漢é]").prop_map(|(a, b, c)| format!("{a}{b}{c}"))
}

pub fn value_for(def: &LabelDef) -> BoxedStrategy<LabelValue> {
    match def.kind {
        LabelKind::Classification => {
            let values = def.values.clone();
            let max = match def.effective_cardinality() {
                dialign::Cardinality::Single => 1,
                dialign::Cardinality::Multi => values.len(),
            };
            subsequence(values, 0..=max)
                .prop_map(LabelValue::classes)
                .boxed()
        }
        LabelKind::SlotValue => {
            let slots = def.values.clone();
            proptest::collection::vec((subsequence(slots.clone(), 0..=1), nonblank_text()), 0..4)
                .prop_map(|pairs| {
                    LabelValue::slots(
                        pairs
                            .into_iter()
                            .filter_map(|(s, v)| s.into_iter().next().map(|s| (s, v)))
                            .collect::<BTreeMap<_, _>>(),
                    )
                })
                .boxed()
        }
    }
}

pub fn labels_for(schema: &LabelSchema) -> BoxedStrategy<BTreeMap<String, LabelValue>> {
    let per_label: Vec<BoxedStrategy<Option<(String, LabelValue)>>> = schema
        .labels
        .iter()
        .map(|def| {
            let name = def.name.clone();
            proptest::option::of(value_for(def).prop_map(move |v| (name.clone(), v))).boxed()
        })
        .collect();
    per_label
        .prop_map(|entries| entries.into_iter().flatten().collect())
        .boxed()
}

pub fn turn(schema: &LabelSchema) -> impl Strategy<Value = Turn> {
    (nonblank_text(), text(), labels_for(schema)).prop_map(|(usr, sys, labels)| Turn {
        usr,
        sys,
        labels,
        ..Turn::default()
    })
}

pub fn collection(schema: &LabelSchema) -> impl Strategy<Value = DialogueCollection> {
    let turn = turn(schema);
    let dialogue = (
        "[a-z0-9-]{1,12}",
        text(),
        proptest::collection::vec(turn, 0..6),
    );
    (text(), proptest::collection::vec(dialogue, 0..5)).prop_map(|(name, dialogues)| {
        let mut c = DialogueCollection::new(name);
        let mut seen = BTreeSet::new();
        for (id, dname, turns) in dialogues {
            if !seen.insert(id.clone()) {
                continue;
            }
            let mut d = Dialogue::new(id, dname);
            for t in turns {
                d.push_turn(t);
            }
            c.dialogues.push(d);
        }
        c
    })
}
