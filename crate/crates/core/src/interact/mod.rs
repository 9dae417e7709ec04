//! Line-prompt refinement sessions.

mod prompt;
mod session;
mod snapshot;

pub use prompt::{expand_prompt, gather_neighbours, resample_polyline, Prompt, PromptRegion, PROMPT_NEIGHBOURS, PROMPT_REACH};
pub use session::{align_polylines, HistoryEntry, PromptOutcome, Session, SessionAssets};
pub use snapshot::{cloud_hash, mesh_hash, AssetHashes, AssetStore, SessionSnapshot, SNAPSHOT_SCHEMA_VERSION};
