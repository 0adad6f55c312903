//! Dialogue data model, label schema and canonical JSON format.
//!
//! A [`DialogueCollection`] is an ordered list of [`Dialogue`]s, each an
//! ordered list of [`Turn`]s. A turn holds one user query, one system
//! response and a map of label values keyed by label name. The set of
//! permitted labels is described by a [`LabelSchema`], loaded from a
//! declarative JSON config file.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::recommend::{RecommenderBinding, ResponseGenerator};

/// Version written into every canonical dataset file.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Classification,
    SlotValue,
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelKind::Classification => f.write_str("classification"),
            LabelKind::SlotValue => f.write_str("slot_value"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cardinality {
    Single,
    Multi,
}

/// One entry of the label schema.
///
/// For classification labels `values` lists the permitted classes; for
/// slot-value labels it lists the permitted slot names.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelDef {
    pub name: String,
    pub kind: LabelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<Cardinality>,
    pub values: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommender: Option<RecommenderBinding>,
}

impl LabelDef {
    pub fn classification(
        name: impl Into<String>,
        cardinality: Cardinality,
        values: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        LabelDef {
            name: name.into(),
            kind: LabelKind::Classification,
            cardinality: Some(cardinality),
            values: values.into_iter().map(Into::into).collect(),
            recommender: None,
        }
    }

    pub fn slot_value(
        name: impl Into<String>,
        slots: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        LabelDef {
            name: name.into(),
            kind: LabelKind::SlotValue,
            cardinality: None,
            values: slots.into_iter().map(Into::into).collect(),
            recommender: None,
        }
    }

    pub fn with_recommender(mut self, binding: RecommenderBinding) -> Self {
        self.recommender = Some(binding);
        self
    }

    /// Cardinality with the `multi` default applied.
    pub fn effective_cardinality(&self) -> Cardinality {
        self.cardinality.unwrap_or(Cardinality::Multi)
    }

    /// The value an annotator implicitly chose by leaving this label blank.
    pub fn empty_value(&self) -> LabelValue {
        match self.kind {
            LabelKind::Classification => LabelValue::Classification {
                selected: BTreeSet::new(),
            },
            LabelKind::SlotValue => LabelValue::SlotValue {
                pairs: BTreeMap::new(),
            },
        }
    }

    /// Position of a class or slot name in `values`.
    pub fn position(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

/// The annotation vocabulary: which labels exist and how they are recommended.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LabelSchema {
    pub labels: Vec<LabelDef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_generator: Option<ResponseGenerator>,
}

impl LabelSchema {
    /// Builds a schema from already-constructed definitions, checking the same
    /// invariants as [`load_schema`].
    pub fn new(labels: Vec<LabelDef>) -> Result<Self, SchemaError> {
        let schema = LabelSchema {
            labels,
            response_generator: None,
        };
        schema.check()?;
        Ok(schema)
    }

    pub fn get(&self, name: &str) -> Option<&LabelDef> {
        self.labels.iter().find(|l| l.name == name)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self) -> Result<(), SchemaError> {
        let mut seen = HashSet::new();
        for def in &self.labels {
            if def.name.trim().is_empty() {
                return Err(SchemaError::EmptyName);
            }
            if !seen.insert(def.name.as_str()) {
                return Err(SchemaError::DuplicateLabel(def.name.clone()));
            }
            if def.values.is_empty() {
                return Err(SchemaError::EmptyValues(def.name.clone()));
            }
            let mut values = HashSet::new();
            for v in &def.values {
                if v.is_empty() || !values.insert(v.as_str()) {
                    return Err(SchemaError::DuplicateValue {
                        label: def.name.clone(),
                        value: v.clone(),
                    });
                }
            }
            match (def.kind, def.cardinality) {
                (LabelKind::SlotValue, Some(_)) => {
                    return Err(SchemaError::CardinalityOnSlotLabel(def.name.clone()))
                }
                (LabelKind::Classification, None) => {
                    return Err(SchemaError::MissingCardinality(def.name.clone()))
                }
                _ => {}
            }
            if let Some(binding) = &def.recommender {
                binding
                    .check_against(def)
                    .map_err(|reason| SchemaError::InvalidRecommender {
                        label: def.name.clone(),
                        reason,
                    })?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("malformed schema config: {0}")]
    Malformed(String),
    #[error("label with empty name")]
    EmptyName,
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("label `{0}` has no values")]
    EmptyValues(String),
    #[error("label `{label}` has an empty or duplicate value `{value}`")]
    DuplicateValue { label: String, value: String },
    #[error("slot-value label `{0}` must not declare a cardinality")]
    CardinalityOnSlotLabel(String),
    #[error("classification label `{0}` has no cardinality")]
    MissingCardinality(String),
    #[error("label `{label}` binds unknown recommender type `{kind}`")]
    UnknownRecommenderType { label: String, kind: String },
    #[error("label `{label}` has an invalid recommender: {reason}")]
    InvalidRecommender { label: String, reason: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaConfig {
    labels: Vec<LabelConfig>,
    #[serde(default)]
    response_generator: Option<ResponseGenerator>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelConfig {
    name: String,
    kind: LabelKind,
    #[serde(default)]
    cardinality: Option<Cardinality>,
    values: Vec<String>,
    #[serde(default)]
    recommender: Option<Value>,
}

/// Parses a label-schema config file.
///
/// `cardinality` defaults to `multi` for classification labels. Recommender
/// bindings are resolved by their `type` field and checked against the
/// label's permitted values.
pub fn load_schema(config: &str) -> Result<LabelSchema, SchemaError> {
    let raw: SchemaConfig =
        serde_json::from_str(config).map_err(|e| SchemaError::Malformed(e.to_string()))?;
    let mut labels = Vec::with_capacity(raw.labels.len());
    for l in raw.labels {
        let cardinality = match (l.kind, l.cardinality) {
            (LabelKind::Classification, None) => Some(Cardinality::Multi),
            (LabelKind::SlotValue, Some(_)) => {
                return Err(SchemaError::CardinalityOnSlotLabel(l.name));
            }
            (_, c) => c,
        };
        let recommender = match l.recommender {
            None => None,
            Some(v) => Some(RecommenderBinding::from_config(&l.name, v)?),
        };
        labels.push(LabelDef {
            name: l.name,
            kind: l.kind,
            cardinality,
            values: l.values,
            recommender,
        });
    }
    let schema = LabelSchema {
        labels,
        response_generator: raw.response_generator,
    };
    schema.check()?;
    Ok(schema)
}

/// A label value: a set of classes, or a map of slot name to value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelValue {
    Classification { selected: BTreeSet<String> },
    SlotValue { pairs: BTreeMap<String, String> },
}

impl LabelValue {
    pub fn classes<I, S>(classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LabelValue::Classification {
            selected: classes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn slots<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        LabelValue::SlotValue {
            pairs: pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }

    pub fn kind(&self) -> LabelKind {
        match self {
            LabelValue::Classification { .. } => LabelKind::Classification,
            LabelValue::SlotValue { .. } => LabelKind::SlotValue,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            LabelValue::Classification { selected } => selected.is_empty(),
            LabelValue::SlotValue { pairs } => pairs.is_empty(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("label values always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("label `{label}` expects a {expected} value, got {found}")]
    KindMismatch {
        label: String,
        expected: LabelKind,
        found: LabelKind,
    },
    #[error("label `{label}` has no class `{class}`")]
    UnknownClass { label: String, class: String },
    #[error("label `{label}` is single-choice but {count} classes are selected")]
    CardinalityViolation { label: String, count: usize },
    #[error("label `{label}` has no slot `{slot}`")]
    UnknownSlot { label: String, slot: String },
    #[error("label `{label}` slot `{slot}` has an empty value")]
    EmptySlotValue { label: String, slot: String },
}

/// Checks a value against the definition of the label it is stored under.
pub fn validate_value(def: &LabelDef, value: &LabelValue) -> Result<(), ValidationError> {
    if value.kind() != def.kind {
        return Err(ValidationError::KindMismatch {
            label: def.name.clone(),
            expected: def.kind,
            found: value.kind(),
        });
    }
    match value {
        LabelValue::Classification { selected } => {
            if let Some(class) = selected.iter().find(|c| def.position(c).is_none()) {
                return Err(ValidationError::UnknownClass {
                    label: def.name.clone(),
                    class: class.clone(),
                });
            }
            if def.effective_cardinality() == Cardinality::Single && selected.len() > 1 {
                return Err(ValidationError::CardinalityViolation {
                    label: def.name.clone(),
                    count: selected.len(),
                });
            }
        }
        LabelValue::SlotValue { pairs } => {
            for (slot, v) in pairs {
                if def.position(slot).is_none() {
                    return Err(ValidationError::UnknownSlot {
                        label: def.name.clone(),
                        slot: slot.clone(),
                    });
                }
                if v.is_empty() {
                    return Err(ValidationError::EmptySlotValue {
                        label: def.name.clone(),
                        slot: slot.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// One user query, the system response and the labels attached to the query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Turn {
    pub index: usize,
    pub usr: String,
    pub sys: String,
    pub labels: BTreeMap<String, LabelValue>,
    /// Labels absent from the schema, kept verbatim when ingestion was told to
    /// allow them. Written back out alongside `labels`.
    pub opaque_labels: BTreeMap<String, Value>,
}

impl Turn {
    pub fn new(usr: impl Into<String>, sys: impl Into<String>) -> Self {
        Turn {
            usr: usr.into(),
            sys: sys.into(),
            ..Turn::default()
        }
    }

    /// Value of `def` on this turn, treating an absent label as blank.
    pub fn value_or_empty(&self, def: &LabelDef) -> LabelValue {
        self.labels
            .get(&def.name)
            .cloned()
            .unwrap_or_else(|| def.empty_value())
    }
}

impl Serialize for Turn {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(4))?;
        map.serialize_entry("index", &self.index)?;
        map.serialize_entry("usr", &self.usr)?;
        map.serialize_entry("sys", &self.sys)?;
        map.serialize_entry("labels", &MergedLabels(self))?;
        map.end()
    }
}

struct MergedLabels<'a>(&'a Turn);

impl Serialize for MergedLabels<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let turn = self.0;
        let mut entries: Vec<(&str, LabelEntry<'_>)> = turn
            .labels
            .iter()
            .map(|(k, v)| (k.as_str(), LabelEntry::Known(v)))
            .chain(
                turn.opaque_labels
                    .iter()
                    .map(|(k, v)| (k.as_str(), LabelEntry::Opaque(v))),
            )
            .collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut map = serializer.serialize_map(Some(entries.len()))?;
        for (k, v) in entries {
            match v {
                LabelEntry::Known(v) => map.serialize_entry(k, v)?,
                LabelEntry::Opaque(v) => map.serialize_entry(k, v)?,
            }
        }
        map.end()
    }
}

enum LabelEntry<'a> {
    Known(&'a LabelValue),
    Opaque(&'a Value),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dialogue {
    pub id: String,
    pub name: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Dialogue {
            id: id.into(),
            name: name.into(),
            turns: Vec::new(),
        }
    }

    /// Appends a turn, assigning its index.
    pub fn push_turn(&mut self, mut turn: Turn) -> &Turn {
        turn.index = self.turns.len();
        self.turns.push(turn);
        self.turns.last().expect("just pushed")
    }

    /// Rewrites turn indices to 0..n-1.
    pub fn reindex(&mut self) {
        for (i, t) in self.turns.iter_mut().enumerate() {
            t.index = i;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DialogueCollection {
    pub schema_version: u32,
    pub name: String,
    pub dialogues: Vec<Dialogue>,
}

impl DialogueCollection {
    pub fn new(name: impl Into<String>) -> Self {
        DialogueCollection {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            dialogues: Vec::new(),
        }
    }

    pub fn dialogue(&self, id: &str) -> Option<&Dialogue> {
        self.dialogues.iter().find(|d| d.id == id)
    }

    pub fn dialogue_mut(&mut self, id: &str) -> Option<&mut Dialogue> {
        self.dialogues.iter_mut().find(|d| d.id == id)
    }

    /// Smallest `dialogue-NNNN` id not yet in use.
    pub fn next_dialogue_id(&self) -> String {
        let used: HashSet<&str> = self.dialogues.iter().map(|d| d.id.as_str()).collect();
        (1..)
            .map(generated_dialogue_id)
            .find(|id| !used.contains(id.as_str()))
            .expect("unbounded counter")
    }

    /// Checks every invariant of the data model against `schema`.
    pub fn validate(&self, schema: &LabelSchema) -> Result<(), ParseError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ParseError::violation(
                "schema_version",
                format!("unsupported schema version {}", self.schema_version),
            ));
        }
        let mut ids = HashSet::new();
        for (i, d) in self.dialogues.iter().enumerate() {
            let path = format!("dialogues[{i}]");
            if !ids.insert(d.id.as_str()) {
                return Err(ParseError::violation(
                    format!("{path}.id"),
                    format!("duplicate dialogue id `{}`", d.id),
                ));
            }
            validate_dialogue(d, schema, &path)?;
        }
        Ok(())
    }
}

/// Id assigned to the n-th generated dialogue (1-based).
pub fn generated_dialogue_id(n: usize) -> String {
    format!("dialogue-{n:04}")
}

/// Checks one dialogue. `path` prefixes error locations.
pub fn validate_dialogue(d: &Dialogue, schema: &LabelSchema, path: &str) -> Result<(), ParseError> {
    if d.id.is_empty() {
        return Err(ParseError::violation(format!("{path}.id"), "empty dialogue id"));
    }
    for (j, t) in d.turns.iter().enumerate() {
        let tpath = format!("{path}.turns[{j}]");
        validate_turn(t, schema, &tpath)?;
        if t.index != j {
            return Err(ParseError::violation(
                format!("{tpath}.index"),
                format!("expected index {j}, found {}", t.index),
            ));
        }
    }
    Ok(())
}

/// Checks one turn, ignoring its index.
pub fn validate_turn(t: &Turn, schema: &LabelSchema, path: &str) -> Result<(), ParseError> {
    if t.usr.trim().is_empty() {
        return Err(ParseError::violation(format!("{path}.usr"), "empty user query"));
    }
    for (name, value) in &t.labels {
        let def = schema.get(name).ok_or_else(|| ParseError::UnknownLabel {
            name: name.clone(),
            path: format!("{path}.labels.{name}"),
        })?;
        validate_value(def, value)
            .map_err(|e| ParseError::violation(format!("{path}.labels.{name}"), e.to_string()))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation at `{path}`: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("unknown label `{name}` at `{path}`")]
    UnknownLabel { name: String, path: String },
}

impl ParseError {
    fn violation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        ParseError::SchemaViolation {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Location of the offending entry, when known.
    pub fn path(&self) -> Option<&str> {
        match self {
            ParseError::MalformedJson(_) => None,
            ParseError::SchemaViolation { path, .. } | ParseError::UnknownLabel { path, .. } => {
                Some(path)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Keep labels missing from the schema instead of rejecting the file.
    pub allow_unknown_labels: bool,
}

/// A label that was accepted only because unknown labels were allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestWarning {
    pub path: String,
    pub label: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireCollection {
    #[serde(default)]
    schema_version: Option<u32>,
    #[serde(default)]
    name: String,
    dialogues: Vec<WireDialogue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDialogue {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    turns: Vec<WireTurn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTurn {
    #[serde(default)]
    index: Option<usize>,
    usr: String,
    #[serde(default)]
    sys: String,
    #[serde(default)]
    labels: BTreeMap<String, Value>,
}

fn from_json<T: serde::de::DeserializeOwned>(json: &str) -> Result<T, ParseError> {
    let mut de = serde_json::Deserializer::from_str(json);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => ParseError::violation(path, inner.to_string()),
            _ => ParseError::MalformedJson(inner.to_string()),
        }
    })?;
    de.end()
        .map_err(|e| ParseError::MalformedJson(e.to_string()))?;
    Ok(value)
}

/// Parses a canonical dataset file, rejecting labels absent from `schema`.
pub fn parse(json: &str, schema: &LabelSchema) -> Result<DialogueCollection, ParseError> {
    parse_with(json, schema, ParseOptions::default()).map(|(c, _)| c)
}

/// Parses a dataset file. Unknown labels are kept opaquely and reported as
/// warnings when `options.allow_unknown_labels` is set.
pub fn parse_with(
    json: &str,
    schema: &LabelSchema,
    options: ParseOptions,
) -> Result<(DialogueCollection, Vec<IngestWarning>), ParseError> {
    let wire: WireCollection = from_json(json)?;
    let schema_version = wire.schema_version.unwrap_or(SCHEMA_VERSION);
    if schema_version != SCHEMA_VERSION {
        return Err(ParseError::violation(
            "schema_version",
            format!("unsupported schema version {schema_version}"),
        ));
    }
    let mut warnings = Vec::new();
    let mut used: HashSet<String> = HashSet::new();
    for (i, d) in wire.dialogues.iter().enumerate() {
        if let Some(id) = &d.id {
            if id.is_empty() {
                return Err(ParseError::violation(
                    format!("dialogues[{i}].id"),
                    "empty dialogue id",
                ));
            }
            if !used.insert(id.clone()) {
                return Err(ParseError::violation(
                    format!("dialogues[{i}].id"),
                    format!("duplicate dialogue id `{id}`"),
                ));
            }
        }
    }
    let mut counter = 1;
    let mut dialogues = Vec::with_capacity(wire.dialogues.len());
    for (i, d) in wire.dialogues.into_iter().enumerate() {
        let path = format!("dialogues[{i}]");
        let id = match d.id {
            Some(id) => id,
            None => {
                while used.contains(&generated_dialogue_id(counter)) {
                    counter += 1;
                }
                let id = generated_dialogue_id(counter);
                used.insert(id.clone());
                id
            }
        };
        let name = d.name.unwrap_or_else(|| id.clone());
        let turns = d
            .turns
            .into_iter()
            .enumerate()
            .map(|(j, t)| {
                convert_turn(t, j, schema, options, &format!("{path}.turns[{j}]"), &mut warnings)
            })
            .collect::<Result<Vec<_>, _>>()?;
        dialogues.push(Dialogue { id, name, turns });
    }
    Ok((
        DialogueCollection {
            schema_version,
            name: wire.name,
            dialogues,
        },
        warnings,
    ))
}

/// Parses a single dialogue object (the element type of `dialogues`).
/// A missing id is an error here since there is no collection to number it in.
pub fn parse_dialogue_value(
    value: Value,
    schema: &LabelSchema,
    path: &str,
) -> Result<Dialogue, ParseError> {
    let d: WireDialogue = serde_path_to_error::deserialize(value).map_err(|e| {
        ParseError::violation(format!("{path}.{}", e.path()), e.into_inner().to_string())
    })?;
    let id = d
        .id
        .filter(|id| !id.is_empty())
        .ok_or_else(|| ParseError::violation(format!("{path}.id"), "missing dialogue id"))?;
    let mut warnings = Vec::new();
    let turns = d
        .turns
        .into_iter()
        .enumerate()
        .map(|(j, t)| {
            convert_turn(
                t,
                j,
                schema,
                ParseOptions::default(),
                &format!("{path}.turns[{j}]"),
                &mut warnings,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dialogue {
        name: d.name.unwrap_or_else(|| id.clone()),
        id,
        turns,
    })
}

/// Parses a single turn object as sent by an editor. The index is taken
/// from the caller, not the body.
pub fn parse_turn_value(
    value: Value,
    index: usize,
    schema: &LabelSchema,
) -> Result<Turn, ParseError> {
    let t: WireTurn = serde_path_to_error::deserialize(value)
        .map_err(|e| ParseError::violation(e.path().to_string(), e.into_inner().to_string()))?;
    let mut warnings = Vec::new();
    let t = WireTurn { index: None, ..t };
    convert_turn(t, index, schema, ParseOptions::default(), "", &mut warnings)
}

fn convert_turn(
    t: WireTurn,
    position: usize,
    schema: &LabelSchema,
    options: ParseOptions,
    path: &str,
    warnings: &mut Vec<IngestWarning>,
) -> Result<Turn, ParseError> {
    let join = |field: &str| {
        if path.is_empty() {
            field.to_string()
        } else {
            format!("{path}.{field}")
        }
    };
    if let Some(index) = t.index {
        if index != position {
            return Err(ParseError::violation(
                join("index"),
                format!("expected index {position}, found {index}"),
            ));
        }
    }
    if t.usr.trim().is_empty() {
        return Err(ParseError::violation(join("usr"), "empty user query"));
    }
    let mut labels = BTreeMap::new();
    let mut opaque_labels = BTreeMap::new();
    for (name, raw) in t.labels {
        let lpath = join(&format!("labels.{name}"));
        let Some(def) = schema.get(&name) else {
            if options.allow_unknown_labels {
                tracing::warn!(label = %name, path = %lpath, "keeping label missing from schema");
                warnings.push(IngestWarning {
                    path: lpath,
                    label: name.clone(),
                });
                opaque_labels.insert(name, raw);
                continue;
            }
            return Err(ParseError::UnknownLabel { name, path: lpath });
        };
        let value: LabelValue = serde_json::from_value(raw)
            .map_err(|e| ParseError::violation(lpath.clone(), e.to_string()))?;
        validate_value(def, &value).map_err(|e| ParseError::violation(lpath, e.to_string()))?;
        labels.insert(name, value);
    }
    Ok(Turn {
        index: position,
        usr: t.usr,
        sys: t.sys,
        labels,
        opaque_labels,
    })
}

/// Canonical JSON text: two-space indentation, LF line endings, trailing newline.
/// Field order is fixed by the types and label maps are sorted by name.
pub fn serialize(collection: &DialogueCollection) -> String {
    to_canonical_json(collection)
}

pub(crate) fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("model types always serialize");
    out.push('\n');
    out
}
