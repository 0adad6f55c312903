#![allow(dead_code)]

pub mod api;
pub mod fixture;
pub mod oracle;
pub mod strategies;
pub mod votes;
pub mod stub;

use dialign::{Cardinality, LabelDef, LabelSchema};

/// One label of each shape.
pub fn mixed_schema() -> LabelSchema {
    LabelSchema::new(vec![
        LabelDef::classification("uact", Cardinality::Multi, ["inform", "request", "greet", "bye"]),
        LabelDef::classification("domain", Cardinality::Single, ["hotel", "restaurant", "taxi"]),
        LabelDef::slot_value("slots", ["area", "price", "day"]),
    ])
    .unwrap()
}
