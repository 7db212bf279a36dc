//! Decision engine over probabilistic factor profiles extracted from
//! earnings-call transcripts.

pub mod ingest;
pub mod labeler;
pub mod schema;
pub mod analogy;
pub mod btmodel;
pub mod cli;
pub mod decide;
pub mod evalx;
pub mod extractor;
