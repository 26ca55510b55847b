//! Challenge harness: configuration, entries, scoring and the stage pipeline.

mod config;
mod entry;
pub mod pipeline;
mod scoring;

pub use config::{read_json, write_json, CorpusSource, InterfererSource, PipelineConfig};
pub use entry::{
    ingest_entry, read_predictions, Coverage, Entry, EntryKind, EntryMetadata, IngestedEntry, PredictionRow,
    ProcessorDecl,
};
pub use pipeline::{run_all, RunSummary, Workspace};
pub use scoring::{
    mean, mean_si, rank_and_cap, score_prediction, score_prediction_table, Leaderboard, LeaderboardRow,
    PredictionScore, ScoredEntry, SquaredError, PANEL_ENTRIES_PER_TEAM,
};
