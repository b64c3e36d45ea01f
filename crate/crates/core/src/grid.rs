//! The grid engine: one spatial pooler + temporal memory pipeline per cell.
//!
//! Per frame and per cell the engine encodes the window, pools it, pushes the
//! pooled SDR into a fixed-length history, feeds the concatenated history to
//! the temporal memory and reads back a raw anomaly score. A cell that just
//! went from empty to occupied has its score zeroed when suppression is on,
//! since nothing inside the cell could have predicted the arrival.
//!
//! Cells share no mutable state, so within a frame they may run in parallel;
//! results are always assembled in row-major cell order.

use std::collections::{BTreeMap, VecDeque};

use crate::aggregation::{AggregationKind, MovingAverage};
use crate::encoder::{EncoderConfig, GridEncoder};
use crate::error::{Error, Result, SnapshotError};
use crate::rng::derive_seed;
use crate::sdr::{Mask, Sdr};
use crate::snapshot::{self, Decoder, Encoder};
use crate::spatial_pooler::{snapshot_kind, SpParams, SpatialPooler};
use crate::temporal_memory::{TemporalMemory, TmParams};

pub type CellCoord = (usize, usize);

/// Parameters that replace the grid defaults for a single cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellOverride {
    pub sp: Option<SpParams>,
    pub tm: Option<TmParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub encoder: EncoderConfig,
    /// How many past pooler outputs the temporal memory sees at once; 1 disables multistep input.
    pub multistep_n: usize,
    /// `input_width` is derived from the encoder and the seed is mixed with the cell coordinate.
    pub default_sp: SpParams,
    /// `column_count` is derived as pooler columns times `multistep_n`.
    pub default_tm: TmParams,
    pub per_cell_overrides: BTreeMap<CellCoord, CellOverride>,
    pub suppression_enabled: bool,
    pub aggregation: AggregationKind,
    pub smoothing_window: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            multistep_n: 2,
            default_sp: SpParams::default(),
            default_tm: TmParams::default(),
            per_cell_overrides: BTreeMap::new(),
            suppression_enabled: true,
            aggregation: AggregationKind::default(),
            smoothing_window: 200,
        }
    }
}

impl GridConfig {
    pub fn grid_size(&self) -> (usize, usize) {
        self.encoder.grid_size()
    }

    /// The pooler and memory parameters cell `coord` actually runs with.
    pub fn cell_params(&self, coord: CellCoord) -> (SpParams, TmParams) {
        let o = self.per_cell_overrides.get(&coord);
        let mut sp = o
            .and_then(|o| o.sp.clone())
            .unwrap_or_else(|| self.default_sp.clone());
        let mut tm = o
            .and_then(|o| o.tm.clone())
            .unwrap_or_else(|| self.default_tm.clone());
        let key = [coord.0 as u64, coord.1 as u64];
        sp.input_width = self.encoder.cell_input_width();
        sp.seed = derive_seed(sp.seed, &[key[0], key[1], 1]);
        tm.column_count = sp.column_count * self.multistep_n;
        tm.seed = derive_seed(tm.seed, &[key[0], key[1], 2]);
        (sp, tm)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut push = |e: Error| match e {
            Error::Validation(v) => errs.extend(v),
            Error::Config(m) => errs.push(m),
            other => errs.push(other.to_string()),
        };
        if let Err(e) = self.encoder.validate() {
            push(e);
        }
        if self.multistep_n == 0 {
            push(Error::Config("grid.multistep_n must be at least 1".into()));
        }
        if self.smoothing_window == 0 {
            push(Error::Config("aggregation.smoothing_window must be at least 1".into()));
        }
        if errs.is_empty() {
            let (rows, cols) = self.grid_size();
            for &(r, c) in self.per_cell_overrides.keys() {
                if r >= rows || c >= cols {
                    errs.push(format!(
                        "override for cell ({r},{c}) lies outside the {rows}x{cols} grid"
                    ));
                }
            }
            let mut seen = Vec::new();
            let coords = std::iter::once((0, 0)).chain(self.per_cell_overrides.keys().copied());
            for coord in coords {
                let (sp, tm) = self.cell_params(coord);
                for e in [sp.validate().err(), tm.validate().err()].into_iter().flatten() {
                    let msg = format!("cell {coord:?}: {e}");
                    if !seen.contains(&msg) {
                        seen.push(msg.clone());
                        errs.push(msg);
                    }
                }
            }
        }
        match errs.len() {
            0 => Ok(()),
            1 => Err(Error::Config(errs.pop().unwrap())),
            _ => Err(Error::Validation(errs)),
        }
    }

    fn encode(&self, enc: &mut Encoder) {
        self.encoder.encode(enc);
        enc.usize(self.multistep_n);
        self.default_sp.encode(enc);
        self.default_tm.encode(enc);
        enc.usize(self.per_cell_overrides.len());
        for (&(r, c), o) in &self.per_cell_overrides {
            enc.usize(r);
            enc.usize(c);
            enc.bool(o.sp.is_some());
            if let Some(sp) = &o.sp {
                sp.encode(enc);
            }
            enc.bool(o.tm.is_some());
            if let Some(tm) = &o.tm {
                tm.encode(enc);
            }
        }
        enc.bool(self.suppression_enabled);
        enc.u8(match self.aggregation {
            AggregationKind::Mean => 0,
            AggregationKind::NonZeroMean => 1,
        });
        enc.usize(self.smoothing_window);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, SnapshotError> {
        let encoder = EncoderConfig::decode(dec)?;
        let multistep_n = dec.usize()?;
        let default_sp = SpParams::decode(dec)?;
        let default_tm = TmParams::decode(dec)?;
        let n = dec.len(18)?;
        let mut per_cell_overrides = BTreeMap::new();
        for _ in 0..n {
            let coord = (dec.usize()?, dec.usize()?);
            let sp = if dec.bool()? { Some(SpParams::decode(dec)?) } else { None };
            let tm = if dec.bool()? { Some(TmParams::decode(dec)?) } else { None };
            per_cell_overrides.insert(coord, CellOverride { sp, tm });
        }
        let suppression_enabled = dec.bool()?;
        let aggregation = match dec.u8()? {
            0 => AggregationKind::Mean,
            1 => AggregationKind::NonZeroMean,
            k => return Err(SnapshotError::Malformed(format!("aggregation kind {k}"))),
        };
        let smoothing_window = dec.usize()?;
        Ok(Self {
            encoder,
            multistep_n,
            default_sp,
            default_tm,
            per_cell_overrides,
            suppression_enabled,
            aggregation,
            smoothing_window,
        })
    }
}

/// Per-cell state.
#[derive(Debug, Clone, PartialEq)]
pub struct CellUnit {
    coord: CellCoord,
    sp: SpatialPooler,
    tm: TemporalMemory,
    /// Last `multistep_n` pooler outputs, oldest first.
    history: VecDeque<Sdr>,
    prev_empty: Vec<bool>,
}

impl CellUnit {
    fn new(coord: CellCoord, config: &GridConfig) -> Result<Self> {
        let (sp, tm) = config.cell_params(coord);
        let columns = sp.column_count;
        Ok(Self {
            coord,
            sp: SpatialPooler::new(sp)?,
            tm: TemporalMemory::new(tm)?,
            history: (0..config.multistep_n).map(|_| Sdr::zeros(columns)).collect(),
            prev_empty: vec![false; config.encoder.class_count],
        })
    }

    pub fn coord(&self) -> CellCoord {
        self.coord
    }

    pub fn spatial_pooler(&self) -> &SpatialPooler {
        &self.sp
    }

    pub fn temporal_memory(&self) -> &TemporalMemory {
        &self.tm
    }

    pub fn history(&self) -> impl Iterator<Item = &Sdr> {
        self.history.iter()
    }

    /// The input the temporal memory saw on the latest step.
    pub fn tm_input(&self) -> Sdr {
        Sdr::concatenate(&self.history).expect("history is never empty")
    }

    fn step(&mut self, encoder: &GridEncoder, planes: &[Mask], ctx: StepContext) -> Result<CellOutcome> {
        let input = encoder.encode_cell(planes, self.coord);
        let pooled = self.sp.compute(&input.combined(), ctx.learn)?;
        self.history.pop_front();
        self.history.push_back(pooled);
        let result = self.tm.compute(&self.tm_input(), ctx.learn)?;

        let entered = self
            .prev_empty
            .iter()
            .zip(&input.was_empty)
            .any(|(&before, &now)| before && !now);
        self.prev_empty.clone_from(&input.was_empty);
        let reported = if ctx.suppress && entered {
            0.0
        } else {
            result.anomaly_score
        };
        Ok(CellOutcome {
            raw: result.anomaly_score,
            reported,
            certainty: result.predictive_column_count,
            entered,
        })
    }

    fn encode(&self, enc: &mut Encoder) {
        enc.usize(self.coord.0);
        enc.usize(self.coord.1);
        self.sp.encode(enc);
        self.tm.encode(enc);
        enc.usize(self.history.len());
        for s in &self.history {
            enc.usize(s.width());
            enc.u32s(s.active());
        }
        enc.bools(&self.prev_empty);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, SnapshotError> {
        let coord = (dec.usize()?, dec.usize()?);
        let sp = SpatialPooler::decode(dec)?;
        let tm = TemporalMemory::decode(dec)?;
        let n = dec.len(16)?;
        let mut history = VecDeque::with_capacity(n);
        for _ in 0..n {
            let width = dec.usize()?;
            let active = dec.u32s()?;
            let sdr = Sdr::new(width, active)
                .map_err(|e| SnapshotError::Malformed(format!("history SDR: {e}")))?;
            history.push_back(sdr);
        }
        let prev_empty = dec.bools()?;
        Ok(Self {
            coord,
            sp,
            tm,
            history,
            prev_empty,
        })
    }
}

#[derive(Clone, Copy)]
struct StepContext {
    learn: bool,
    suppress: bool,
}

struct CellOutcome {
    raw: f64,
    reported: f64,
    certainty: usize,
    entered: bool,
}

/// Output for one frame. Per-cell vectors are row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_index: u64,
    pub grid_size: (usize, usize),
    /// Temporal memory anomaly per cell.
    pub raw_scores: Vec<f64>,
    /// Raw scores after transition suppression; these feed the aggregate.
    pub reported_scores: Vec<f64>,
    /// Predictive column count per cell; fewer predictions means higher certainty.
    pub certainty: Vec<usize>,
    /// Cells that went from empty to occupied (in any class) on this frame.
    pub entered: Vec<bool>,
    pub aggregate: f64,
    pub aggregate_smoothed: f64,
}

impl FrameResult {
    pub fn index_of(&self, coord: CellCoord) -> usize {
        coord.0 * self.grid_size.1 + coord.1
    }

    pub fn raw(&self, coord: CellCoord) -> f64 {
        self.raw_scores[self.index_of(coord)]
    }

    pub fn reported(&self, coord: CellCoord) -> f64 {
        self.reported_scores[self.index_of(coord)]
    }
}

/// The streaming engine. Frames must be fed strictly in order.
#[derive(Debug, Clone)]
pub struct GridModel {
    config: GridConfig,
    encoder: GridEncoder,
    cells: Vec<CellUnit>,
    frame_index: u64,
    smoother: MovingAverage,
    parallel: bool,
}

impl PartialEq for GridModel {
    fn eq(&self, other: &Self) -> bool {
        // `parallel` is an execution choice, not model state.
        self.config == other.config
            && self.cells == other.cells
            && self.frame_index == other.frame_index
            && self.smoother == other.smoother
    }
}

impl GridModel {
    pub fn new(config: GridConfig) -> Result<Self> {
        config.validate()?;
        let encoder = GridEncoder::new(config.encoder.clone())?;
        let (rows, cols) = config.grid_size();
        let cells = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|coord| CellUnit::new(coord, &config))
            .collect::<Result<Vec<_>>>()?;
        let smoother = MovingAverage::new(config.smoothing_window)?;
        Ok(Self {
            config,
            encoder,
            cells,
            frame_index: 0,
            smoother,
            parallel: cfg!(feature = "parallel"),
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn encoder(&self) -> &GridEncoder {
        &self.encoder
    }

    pub fn grid_size(&self) -> (usize, usize) {
        self.config.grid_size()
    }

    pub fn cells(&self) -> &[CellUnit] {
        &self.cells
    }

    pub fn cell(&self, coord: CellCoord) -> &CellUnit {
        &self.cells[coord.0 * self.grid_size().1 + coord.1]
    }

    /// Number of frames processed so far.
    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    /// Processes cells concurrently within each frame when built with the `parallel` feature.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel && cfg!(feature = "parallel");
    }

    pub fn is_parallel(&self) -> bool {
        self.parallel
    }

    /// Restarts the smoothed aggregate, e.g. when a calibration period ends.
    pub fn reset_smoothing(&mut self) {
        self.smoother.clear();
    }

    pub fn step(&mut self, planes: &[Mask], learn: bool) -> Result<FrameResult> {
        self.encoder.check_planes(planes)?;
        let ctx = StepContext {
            learn,
            suppress: self.config.suppression_enabled,
        };
        let encoder = &self.encoder;
        let outcomes: Vec<CellOutcome> = if self.parallel {
            par_step(&mut self.cells, encoder, planes, ctx)?
        } else {
            self.cells
                .iter_mut()
                .map(|cell| cell.step(encoder, planes, ctx))
                .collect::<Result<_>>()?
        };

        let mut result = FrameResult {
            frame_index: self.frame_index,
            grid_size: self.grid_size(),
            raw_scores: Vec::with_capacity(outcomes.len()),
            reported_scores: Vec::with_capacity(outcomes.len()),
            certainty: Vec::with_capacity(outcomes.len()),
            entered: Vec::with_capacity(outcomes.len()),
            aggregate: 0.0,
            aggregate_smoothed: 0.0,
        };
        for o in outcomes {
            result.raw_scores.push(o.raw);
            result.reported_scores.push(o.reported);
            result.certainty.push(o.certainty);
            result.entered.push(o.entered);
        }
        result.aggregate = self.config.aggregation.apply(&result.reported_scores)?;
        result.aggregate_smoothed = self.smoother.push(result.aggregate);
        self.frame_index += 1;
        Ok(result)
    }

    pub fn snapshot(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u8(snapshot_kind::GRID);
        self.config.encode(&mut enc);
        enc.u64(self.frame_index);
        self.smoother.encode(&mut enc);
        enc.usize(self.cells.len());
        for cell in &self.cells {
            cell.encode(&mut enc);
        }
        snapshot::seal(&enc.into_inner())
    }

    /// Rebuilds a model from [`GridModel::snapshot`] output. Nothing is
    /// returned unless the whole snapshot validates.
    pub fn restore(bytes: &[u8]) -> Result<Self> {
        let (_, payload) = snapshot::open(bytes)?;
        let mut dec = Decoder::new(payload);
        if dec.u8()? != snapshot_kind::GRID {
            return Err(SnapshotError::Malformed("not a grid snapshot".into()).into());
        }
        let config = GridConfig::decode(&mut dec)?;
        config
            .validate()
            .map_err(|e| SnapshotError::Malformed(format!("config: {e}")))?;
        let frame_index = dec.u64()?;
        let smoother = MovingAverage::decode(&mut dec)?;
        let n = dec.len(1)?;
        let cells = (0..n)
            .map(|_| CellUnit::decode(&mut dec))
            .collect::<Result<Vec<_>, _>>()?;
        if !dec.is_finished() {
            return Err(SnapshotError::Malformed("trailing bytes".into()).into());
        }
        let (rows, cols) = config.grid_size();
        let consistent = cells.len() == rows * cols
            && cells.iter().enumerate().all(|(i, cell)| {
                let (sp, tm) = config.cell_params((i / cols, i % cols));
                cell.coord == (i / cols, i % cols)
                    && cell.sp.params() == &sp
                    && cell.tm.params() == &tm
                    && cell.history.len() == config.multistep_n
                    && cell.history.iter().all(|s| s.width() == sp.column_count)
                    && cell.prev_empty.len() == config.encoder.class_count
            });
        if !consistent || smoother.window() != config.smoothing_window {
            return Err(SnapshotError::Malformed("cell state disagrees with config".into()).into());
        }
        let encoder = GridEncoder::new(config.encoder.clone())?;
        Ok(Self {
            config,
            encoder,
            cells,
            frame_index,
            smoother,
            parallel: cfg!(feature = "parallel"),
        })
    }
}

#[cfg(feature = "parallel")]
fn par_step(
    cells: &mut [CellUnit],
    encoder: &GridEncoder,
    planes: &[Mask],
    ctx: StepContext,
) -> Result<Vec<CellOutcome>> {
    use rayon::prelude::*;
    cells
        .par_iter_mut()
        .map(|cell| cell.step(encoder, planes, ctx))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn par_step(
    cells: &mut [CellUnit],
    encoder: &GridEncoder,
    planes: &[Mask],
    ctx: StepContext,
) -> Result<Vec<CellOutcome>> {
    cells
        .iter_mut()
        .map(|cell| cell.step(encoder, planes, ctx))
        .collect()
}

/// Summary of a grid snapshot, for inspection tools.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotInfo {
    pub format_version: u32,
    pub byte_len: usize,
    pub frames_processed: u64,
    pub grid_size: (usize, usize),
    pub cell_size: (usize, usize),
    pub class_count: usize,
    pub multistep_n: usize,
    pub suppression_enabled: bool,
    pub aggregation: AggregationKind,
    pub smoothing_window: usize,
    pub override_count: usize,
    pub segment_count: usize,
    pub synapse_count: usize,
}

impl SnapshotInfo {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (envelope, _) = snapshot::open(bytes)?;
        let model = GridModel::restore(bytes)?;
        let c = &model.config;
        Ok(Self {
            format_version: envelope.version,
            byte_len: bytes.len(),
            frames_processed: model.frame_index,
            grid_size: c.grid_size(),
            cell_size: c.encoder.cell_size,
            class_count: c.encoder.class_count,
            multistep_n: c.multistep_n,
            suppression_enabled: c.suppression_enabled,
            aggregation: c.aggregation,
            smoothing_window: c.smoothing_window,
            override_count: c.per_cell_overrides.len(),
            segment_count: model.cells.iter().map(|u| u.tm.segment_count()).sum(),
            synapse_count: model.cells.iter().map(|u| u.tm.synapse_count()).sum(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GridConfig {
        GridConfig {
            encoder: EncoderConfig {
                frame_size: (24, 36),
                ..EncoderConfig::default()
            },
            default_sp: SpParams {
                column_count: 64,
                active_columns: 8,
                ..SpParams::default()
            },
            ..GridConfig::default()
        }
    }

    #[test]
    fn one_unit_per_cell() {
        let m = GridModel::new(GridConfig::default()).unwrap();
        assert_eq!(m.cells().len(), 100);
        assert_eq!(m.cell((3, 7)).coord(), (3, 7));
        let m = GridModel::new(small()).unwrap();
        assert_eq!(m.grid_size(), (2, 3));
        let u = m.cell((1, 2));
        assert_eq!(u.temporal_memory().params().column_count, 128);
        assert_eq!(u.spatial_pooler().params().input_width, 144);
        assert!(u.history().all(|s| s.width() == 64 && s.is_empty()));
    }

    #[test]
    fn cells_get_distinct_seeds() {
        let m = GridModel::new(small()).unwrap();
        assert_ne!(
            m.cell((0, 0)).spatial_pooler().potential_pool(0),
            m.cell((0, 1)).spatial_pooler().potential_pool(0)
        );
    }

    #[test]
    fn out_of_grid_override_is_a_config_error() {
        let mut cfg = small();
        cfg.per_cell_overrides.insert((2, 0), CellOverride::default());
        assert!(matches!(GridModel::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn bad_config_lists_every_problem() {
        let mut cfg = small();
        cfg.multistep_n = 0;
        cfg.smoothing_window = 0;
        match GridModel::new(cfg) {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_planes() {
        let mut m = GridModel::new(small()).unwrap();
        assert!(matches!(m.step(&[], true), Err(Error::Contract(_))));
        assert!(matches!(
            m.step(&[Mask::new(24, 24)], true),
            Err(Error::Contract(_))
        ));
        assert_eq!(m.frame_index(), 0);
    }

    #[test]
    fn corrupted_snapshot_is_rejected() {
        let mut m = GridModel::new(small()).unwrap();
        m.step(&[Mask::new(24, 36)], true).unwrap();
        let bytes = m.snapshot();
        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 1;
        assert!(matches!(
            GridModel::restore(&bad),
            Err(Error::Snapshot(SnapshotError::Checksum))
        ));
        assert!(GridModel::restore(&bytes[..bytes.len() - 3]).is_err());
        let tm_only = m.cell((0, 0)).temporal_memory().to_snapshot();
        assert!(GridModel::restore(&tm_only).is_err());
    }

    #[test]
    fn snapshot_info_summarizes() {
        let mut m = GridModel::new(small()).unwrap();
        for _ in 0..3 {
            m.step(&[Mask::new(24, 36)], true).unwrap();
        }
        let info = SnapshotInfo::from_bytes(&m.snapshot()).unwrap();
        assert_eq!(info.frames_processed, 3);
        assert_eq!(info.grid_size, (2, 3));
        assert_eq!(info.multistep_n, 2);
        assert!(info.segment_count > 0);
    }
}
