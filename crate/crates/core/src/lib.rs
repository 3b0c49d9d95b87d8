//! Hybrid human/machine coding of qualitative text.
//!
//! The crate is organised around a paragraph-level [`corpus::Corpus`]:
//!
//! * [`corpus`] ingests text files and round-trips the one-unit-per-row table.
//! * [`textprep`] tokenizes, stems, removes stop words and tags tokens.
//! * [`topics`], [`embeddings`], [`semnet`] and [`heatmap`] are exploratory
//!   analyses over the prepared corpus.
//! * [`coder`] trains per-code classifiers, tunes them for recall, scales
//!   codes to uncoded units and measures reliability.

pub mod coder;
pub mod corpus;
pub mod embeddings;
pub mod heatmap;
pub mod semnet;
pub mod synth;
pub mod textprep;
pub mod topics;

pub(crate) mod rng;
