//! Memorized vs non-memorized behavior analysis over recorded language-model
//! inference traces.
//!
//! The pipeline: build prompts for a dataset ([`corpus`]), run a model
//! elsewhere to produce a trace file ([`trace`]), label each sample by exact
//! match against its gold answer ([`classify`]), then contrast the two groups
//! at the text, probability and representation level ([`analysis`]).
//! [`report`] wires these steps into file-in, file-out commands and
//! [`plot`] renders the SVG figures.

pub mod analysis;
pub mod classify;
pub mod corpus;
pub mod plot;
pub mod report;
pub mod trace;
