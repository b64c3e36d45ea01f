//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The page drives three things: a synthetic lane scenario with optional
//! frame repeat / skip events (stepped incrementally so the page can animate),
//! the two aggregation rules over the same run, and active-pixel statistics
//! with and without the empty pattern.

use gridhtm::{
    aggregate_mean, render_heatmap, EncoderConfig, Event, Frame, FrameResult, GridConfig,
    GridModel, NoiseSpec, ObjectTrack, Path, Scenario,
};
use wasm_bindgen::prelude::*;

pub const FRAME: (usize, usize) = (36, 96);
pub const PERIOD: usize = 16;
/// Frame at which the repeat or skip starts.
pub const EVENT_AT: usize = PERIOD * 40 + 3;
const TAIL: usize = 140;

fn lane(repeat: bool, skip: bool, noise: f64) -> Scenario {
    let mut events = Vec::new();
    if repeat {
        events.push(Event::FrameRepeat {
            start_frame: EVENT_AT,
            duration: 20,
        });
    }
    if skip {
        // After a repeat the skip lands once it is over.
        let at = if repeat { EVENT_AT + 20 } else { EVENT_AT };
        events.push(Event::FrameSkip {
            at_frame: at,
            skipped_count: 100,
        });
    }
    Scenario {
        frame_size: FRAME,
        frame_count: EVENT_AT + TAIL + if skip { 100 } else { 0 },
        objects: vec![ObjectTrack {
            shape: (6, 6),
            path: Path::LinearLoop {
                start: (15, 0),
                velocity: (0, 6),
            },
            class_index: 0,
        }],
        events,
        noise: NoiseSpec {
            pixel_flip_probability: noise,
            object_dropout_probability: 0.0,
        },
        seed: 1,
        ..Scenario::default()
    }
}

fn grid_config() -> GridConfig {
    GridConfig {
        encoder: EncoderConfig {
            frame_size: FRAME,
            ..EncoderConfig::default()
        },
        ..GridConfig::default()
    }
}

fn rgba(rgb: &[u8]) -> Vec<u8> {
    rgb.chunks(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// One run of the lane scenario, advanced a batch of frames at a time.
#[wasm_bindgen]
pub struct GridDemo {
    model: GridModel,
    frames: Vec<Frame>,
    results: Vec<FrameResult>,
}

#[wasm_bindgen]
impl GridDemo {
    /// `noise` is the per-pixel flip probability.
    #[wasm_bindgen(constructor)]
    pub fn new(repeat: bool, skip: bool, noise: f64) -> Result<GridDemo, JsError> {
        let frames = gridhtm::generate(&lane(repeat, skip, noise.clamp(0.0, 0.5)))?;
        Ok(GridDemo {
            model: GridModel::new(grid_config())?,
            results: Vec::with_capacity(frames.len()),
            frames,
        })
    }

    /// Processes up to `count` more frames; returns how many are done.
    pub fn advance(&mut self, count: usize) -> Result<usize, JsError> {
        let end = (self.results.len() + count).min(self.frames.len());
        for i in self.results.len()..end {
            let r = self.model.step(&self.frames[i], true)?;
            self.results.push(r);
        }
        Ok(self.results.len())
    }

    pub fn total_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn processed_frames(&self) -> usize {
        self.results.len()
    }

    pub fn event_frame(&self) -> usize {
        EVENT_AT
    }

    pub fn width(&self) -> usize {
        FRAME.1
    }

    pub fn height(&self) -> usize {
        FRAME.0
    }

    /// Non-zero-mean aggregate of every processed frame.
    pub fn nonzero_mean_series(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.aggregate).collect()
    }

    /// Plain mean over all cells of every processed frame.
    pub fn mean_series(&self) -> Vec<f64> {
        self.results
            .iter()
            .map(|r| aggregate_mean(&r.reported_scores).unwrap_or(0.0))
            .collect()
    }

    /// Heatmap of a processed frame as RGBA pixels, one pixel per frame pixel.
    pub fn heatmap_rgba(&self, frame: usize) -> Vec<u8> {
        let cell = self.model.config().encoder.cell_size;
        match self.results.get(frame) {
            Some(r) => rgba(&render_heatmap(r, cell).data),
            None => Vec::new(),
        }
    }

    /// Input mask of a frame as RGBA pixels, white where set.
    pub fn mask_rgba(&self, frame: usize) -> Vec<u8> {
        let Some(planes) = self.frames.get(frame) else {
            return Vec::new();
        };
        let (rows, cols) = FRAME;
        let mut out = Vec::with_capacity(rows * cols * 4);
        for r in 0..rows {
            for c in 0..cols {
                let v = if planes.iter().any(|p| p.get(r, c)) { 255 } else { 0 };
                out.extend([v, v, v, 255]);
            }
        }
        out
    }
}

/// Per-cell `[mean, std_dev, ...]` of active input bits over a three-car
/// traffic scenario, with the empty pattern and minimum sparsity on or off.
#[wasm_bindgen]
pub fn traffic_pixel_stats(noise: f64, empty_pattern: bool) -> Result<Vec<f64>, JsError> {
    let car = |shape, start, speed| ObjectTrack {
        shape,
        path: Path::LinearLoop {
            start,
            velocity: (0, speed),
        },
        class_index: 0,
    };
    let scenario = Scenario {
        frame_size: FRAME,
        frame_count: 400,
        objects: vec![
            car((6, 10), (14, 0), 3),
            car((5, 8), (15, 40), 5),
            car((7, 12), (13, 70), 2),
        ],
        noise: NoiseSpec {
            pixel_flip_probability: noise.clamp(0.0, 0.5),
            object_dropout_probability: 0.0,
        },
        seed: 3,
        ..Scenario::default()
    };
    let mut enc = EncoderConfig {
        frame_size: FRAME,
        ..EncoderConfig::default()
    };
    if !empty_pattern {
        enc.min_sparsity = 0;
        enc.empty_pattern_sparsity = 0;
    }
    let frames = gridhtm::generate(&scenario)?;
    let stats = gridhtm::runner::pixel_stats(&enc, &frames, None)?;
    Ok(stats.iter().flat_map(|s| [s.mean, s.std_dev]).collect())
}
