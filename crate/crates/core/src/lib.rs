//! Grid-partitioned HTM anomaly detection over binary mask streams.

pub mod aggregation;
pub mod config;
pub mod encoder;
pub mod error;
pub mod grid;
pub mod heatmap;
pub mod netpbm;
pub mod rng;
pub mod runner;
pub mod sdr;
pub mod snapshot;
pub mod spatial_pooler;
pub mod synthetic;
pub mod temporal_memory;

pub use error::{Error, Result, SnapshotError};
pub use sdr::{Frame, Mask, Sdr};
pub use spatial_pooler::{SpParams, SpatialPooler};
pub use temporal_memory::{TemporalMemory, TmParams, TmStepResult};
pub use aggregation::{aggregate_mean, aggregate_nonzero_mean, moving_average, AggregationKind};
pub use encoder::{active_pixel_stats, CellInput, EncoderConfig, GridEncoder};
pub use grid::{CellCoord, CellOverride, CellUnit, FrameResult, GridConfig, GridModel, SnapshotInfo};
pub use synthetic::{generate, Event, NoiseSpec, ObjectTrack, Path, Scenario};
pub use config::{InputSource, KeyValues, Outputs, RunConfig};
pub use heatmap::{render_heatmap, score_color};
pub use netpbm::RgbImage;
