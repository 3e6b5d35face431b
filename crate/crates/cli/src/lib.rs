//! Operator tools for the MCL delivery stack: a TCP server, a fetch client,
//! warehouse ingestion and the `mcl-sim` scenario runner. The binaries are
//! thin wrappers over this library.

pub mod manifest;
pub mod profile;
pub mod scenario;
pub mod serve;
pub mod stream;
