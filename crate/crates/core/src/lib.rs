//! Dialogue annotation toolkit.
//!
//! Turns raw transcripts into labelled dialogue datasets, suggests labels
//! through pluggable recommenders, and resolves disagreements between
//! annotators with majority defaults and Cohen's kappa statistics.

pub mod agreement;
pub mod cli;
pub mod error;
pub mod model;
pub mod recommend;
pub mod segment;
pub mod server;
pub mod store;

pub use model::{
    load_schema, parse, parse_with, serialize, validate_value, Cardinality, Dialogue,
    DialogueCollection, LabelDef, LabelKind, LabelSchema, LabelValue, ParseError, ParseOptions,
    SchemaError, Turn, ValidationError,
};
pub use recommend::{Recommender, RecommenderBinding, RecommenderRegistry};
pub use error::ApiError;
pub use store::Store;
