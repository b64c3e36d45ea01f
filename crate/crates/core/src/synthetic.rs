//! Deterministic synthetic mask streams: rectangular objects on scripted
//! paths, frame repeats and skips, and segmentation-style noise.
//!
//! Frames are produced on a timeline of `frame_count` steps. A
//! [`Event::FrameRepeat`] makes a run of timeline frames copies of its first
//! frame; a [`Event::FrameSkip`] drops timeline frames from the output while
//! objects keep moving. Object rendering wraps around the frame edges.
//! All randomness is keyed by (seed, source timeline frame), so a repeated
//! frame is an exact copy and deleting frames never shifts the noise of the
//! frames that remain.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::sdr::{Frame, Mask};

const DROPOUT_KEY: u64 = 0xD0;
const FLIP_KEY: u64 = 0xF1;

#[derive(Debug, Clone, PartialEq)]
pub enum Path {
    /// `start + velocity * t`, wrapped into the frame.
    LinearLoop { start: (i64, i64), velocity: (i64, i64) },
    Stationary { position: (i64, i64) },
    /// Explicit per-frame positions, cycled when the timeline is longer.
    Scripted { positions: Vec<(i64, i64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    /// (rows, cols) of the filled rectangle.
    pub shape: (usize, usize),
    pub path: Path,
    pub class_index: usize,
}

impl ObjectTrack {
    /// Top-left corner at timeline step `t`, wrapped into `frame`.
    pub fn position(&self, t: usize, frame: (usize, usize)) -> (usize, usize) {
        let (r, c) = match &self.path {
            Path::LinearLoop { start, velocity } => (
                start.0 + velocity.0 * t as i64,
                start.1 + velocity.1 * t as i64,
            ),
            Path::Stationary { position } => *position,
            Path::Scripted { positions } => positions[t % positions.len()],
        };
        (
            r.rem_euclid(frame.0 as i64) as usize,
            c.rem_euclid(frame.1 as i64) as usize,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// Timeline frames `start_frame..start_frame + duration` all show frame `start_frame`.
    FrameRepeat { start_frame: usize, duration: usize },
    /// Timeline frames `at_frame..at_frame + skipped_count` are not emitted.
    FrameSkip { at_frame: usize, skipped_count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    pub pixel_flip_probability: f64,
    /// Chance that an object is missing from a single frame.
    pub object_dropout_probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frame_size: (usize, usize),
    /// Timeline length; skipped frames count toward it.
    pub frame_count: usize,
    pub class_count: usize,
    pub objects: Vec<ObjectTrack>,
    pub events: Vec<Event>,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            frame_size: (120, 120),
            frame_count: 1000,
            class_count: 1,
            objects: Vec::new(),
            events: Vec::new(),
            noise: NoiseSpec::default(),
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let (rows, cols) = self.frame_size;
        if rows == 0 || cols == 0 {
            errs.push("scenario frame size must be positive".to_string());
        }
        if self.frame_count == 0 {
            errs.push("scenario.frame_count must be positive".to_string());
        }
        if self.class_count == 0 {
            errs.push("scenario.class_count must be positive".to_string());
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.shape.0 == 0 || o.shape.1 == 0 || o.shape.0 > rows || o.shape.1 > cols {
                errs.push(format!(
                    "object {i}: shape {}x{} does not fit a {rows}x{cols} frame",
                    o.shape.0, o.shape.1
                ));
            }
            if o.class_index >= self.class_count {
                errs.push(format!(
                    "object {i}: class {} but scenario has {} classes",
                    o.class_index, self.class_count
                ));
            }
            let inside = |&(r, c): &(i64, i64)| r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols;
            match &o.path {
                Path::Stationary { position } if !inside(position) => {
                    errs.push(format!("object {i}: position {position:?} outside the frame"))
                }
                Path::Scripted { positions } if positions.is_empty() => {
                    errs.push(format!("object {i}: scripted path has no positions"))
                }
                Path::Scripted { positions } => {
                    if let Some(p) = positions.iter().find(|p| !inside(p)) {
                        errs.push(format!("object {i}: scripted position {p:?} outside the frame"));
                    }
                }
                _ => {}
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            let (start, len, what) = match *e {
                Event::FrameRepeat { start_frame, duration } => (start_frame, duration, "repeat"),
                Event::FrameSkip { at_frame, skipped_count } => (at_frame, skipped_count, "skip"),
            };
            if len == 0 {
                errs.push(format!("event {i}: {what} length must be positive"));
            }
            if start.saturating_add(len) > self.frame_count {
                errs.push(format!(
                    "event {i}: {what} window {start}..{} exceeds frame_count {}",
                    start.saturating_add(len),
                    self.frame_count
                ));
            }
        }
        for (name, p) in [
            ("pixel_flip_probability", self.noise.pixel_flip_probability),
            ("object_dropout_probability", self.noise.object_dropout_probability),
        ] {
            if !(0.0..1.0).contains(&p) {
                errs.push(format!("noise.{name} must be in [0, 1), got {p}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Timeline frame that timeline step `t` displays.
    fn source_of(&self, t: usize) -> usize {
        self.events
            .iter()
            .filter_map(|e| match *e {
                Event::FrameRepeat { start_frame, duration }
                    if (start_frame..start_frame + duration).contains(&t) =>
                {
                    Some(start_frame)
                }
                _ => None,
            })
            .min()
            .unwrap_or(t)
    }

    fn is_skipped(&self, t: usize) -> bool {
        self.events.iter().any(|e| {
            matches!(*e, Event::FrameSkip { at_frame, skipped_count }
                if (at_frame..at_frame + skipped_count).contains(&t))
        })
    }

    /// Timeline index of every emitted frame, in output order.
    pub fn emitted_timeline(&self) -> Vec<usize> {
        (0..self.frame_count).filter(|&t| !self.is_skipped(t)).collect()
    }

    pub fn emitted_count(&self) -> usize {
        (0..self.frame_count).filter(|&t| !self.is_skipped(t)).count()
    }

    /// Renders timeline frame `t` with noise applied.
    pub fn render(&self, t: usize) -> Frame {
        let (rows, cols) = self.frame_size;
        let mut planes = vec![Mask::new(rows, cols); self.class_count];
        let mut dropout = seeded(derive_seed(self.seed, &[DROPOUT_KEY, t as u64]));
        for obj in &self.objects {
            if self.noise.object_dropout_probability > 0.0
                && dropout.random_bool(self.noise.object_dropout_probability)
            {
                continue;
            }
            let (r0, c0) = obj.position(t, self.frame_size);
            let plane = &mut planes[obj.class_index];
            for dr in 0..obj.shape.0 {
                for dc in 0..obj.shape.1 {
                    plane.set((r0 + dr) % rows, (c0 + dc) % cols, true);
                }
            }
        }
        if self.noise.pixel_flip_probability > 0.0 {
            let p = self.noise.pixel_flip_probability;
            for (class, plane) in planes.iter_mut().enumerate() {
                let mut rng = seeded(derive_seed(self.seed, &[FLIP_KEY, t as u64, class as u64]));
                for r in 0..rows {
                    for c in 0..cols {
                        if rng.random_bool(p) {
                            plane.flip(r, c);
                        }
                    }
                }
            }
        }
        planes
    }

    /// Lazily yields the emitted frames.
    pub fn frames(&self) -> Result<impl Iterator<Item = Frame> + '_> {
        self.validate()?;
        Ok((0..self.frame_count)
            .filter(|&t| !self.is_skipped(t))
            .map(|t| self.render(self.source_of(t))))
    }
}

/// All emitted frames of `scenario`.
pub fn generate(scenario: &Scenario) -> Result<Vec<Frame>> {
    Ok(scenario.frames()?.collect())
}
