//! Coverage-guided, generator-based fuzzing engine that aims mutations at
//! input substructures whose types statically influence uncovered branches.
//!
//! The pipeline: parse a typed mini-IR program, statically compute which
//! record types can flow into each branch condition (and at what
//! dependency distance), then fuzz with generators whose random draws are
//! recorded as an execution-indexed, type-annotated choice sequence. The
//! targeted mutator picks a type with probability inversely proportional
//! to its distance, mutates the draws annotated with that type, and
//! adapts distances by whether the type matched anything.

pub mod analysis;
pub mod bench;
pub mod corpus_io;
pub mod engine;
pub mod generator;
pub mod interp;
pub mod ir;
pub mod mutation;
pub mod report;

pub use analysis::{analyze, Analysis, DistanceMap, StringTable};
pub use engine::{fuzz_campaign, Budget, CampaignOptions, Corpus};
pub use generator::{generate, Fci, GenConfig, GeneratorRegistry};
pub use interp::{run, CoverageSet, ExternRegistry, TestResult, Value};
pub use ir::{enumerate_code_targets, parse_program, pretty_print, CodeTarget, Program};
pub use mutation::{mutate, Mode};
