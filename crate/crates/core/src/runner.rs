//! File-level driver: mask directories in, score CSV, heatmaps and snapshots out.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{InputSource, RunConfig};
use crate::encoder::{active_pixel_stats, EncoderConfig};
use crate::error::{Error, Result};
use crate::grid::{FrameResult, GridModel};
use crate::heatmap::render_heatmap;
use crate::netpbm::{read_pbm, write_pbm, write_ppm};
use crate::sdr::Frame;
use crate::synthetic::Scenario;

/// `<class>/<frame:08>.pbm` (or `.ppm`) relative to a sequence directory.
pub fn frame_file(dir: &Path, class: Option<usize>, frame: usize, ext: &str) -> PathBuf {
    let name = format!("{frame:08}.{ext}");
    match class {
        Some(c) => dir.join(c.to_string()).join(name),
        None => dir.join(name),
    }
}

/// A directory of per-class PBM planes, checked for a complete, gap-free layout.
#[derive(Debug, Clone)]
pub struct MaskSequence {
    dir: PathBuf,
    class_count: usize,
    frame_count: usize,
}

impl MaskSequence {
    pub fn open(dir: &Path, class_count: usize) -> Result<Self> {
        let mut errs = Vec::new();
        let mut counts = Vec::new();
        for class in 0..class_count {
            let class_dir = dir.join(class.to_string());
            let entries = match fs::read_dir(&class_dir) {
                Ok(e) => e,
                Err(e) => {
                    errs.push(Error::io(&class_dir, e).to_string());
                    continue;
                }
            };
            let mut frames = Vec::new();
            for entry in entries {
                let entry = entry.map_err(|e| Error::io(&class_dir, e))?;
                let name = entry.file_name();
                let name = name.to_string_lossy();
                match name
                    .strip_suffix(".pbm")
                    .filter(|s| s.len() == 8)
                    .and_then(|s| s.parse::<usize>().ok())
                {
                    Some(i) => frames.push(i),
                    None => errs.push(format!(
                        "{}: not a `<8-digit frame>.pbm` mask file",
                        entry.path().display()
                    )),
                }
            }
            frames.sort_unstable();
            if let Some(gap) = frames.iter().enumerate().find(|&(i, &f)| i != f) {
                errs.push(format!(
                    "{}: frame {:08} missing",
                    class_dir.display(),
                    gap.0
                ));
            }
            counts.push(frames.len());
        }
        if counts.len() == class_count && counts.windows(2).any(|w| w[0] != w[1]) {
            errs.push(format!(
                "{}: classes hold different frame counts {counts:?}",
                dir.display()
            ));
        }
        match errs.len() {
            0 => Ok(Self {
                dir: dir.to_path_buf(),
                class_count,
                frame_count: counts.first().copied().unwrap_or(0),
            }),
            1 => Err(Error::Config(errs.pop().unwrap())),
            _ => Err(Error::Validation(errs)),
        }
    }

    pub fn len(&self) -> usize {
        self.frame_count
    }

    pub fn is_empty(&self) -> bool {
        self.frame_count == 0
    }

    /// Reads frame `index`, checking every plane is `size` (rows, cols).
    pub fn read(&self, index: usize, size: (usize, usize)) -> Result<Frame> {
        (0..self.class_count)
            .map(|class| {
                let path = frame_file(&self.dir, Some(class), index, "pbm");
                let mask = read_pbm(&path)?;
                if (mask.rows(), mask.cols()) != size {
                    return Err(Error::format(
                        &path,
                        format!(
                            "mask is {}x{}, expected {}x{}",
                            mask.rows(),
                            mask.cols(),
                            size.0,
                            size.1
                        ),
                    ));
                }
                Ok(mask)
            })
            .collect()
    }

    pub fn read_all(&self, size: (usize, usize)) -> Result<Vec<Frame>> {
        (0..self.frame_count).map(|i| self.read(i, size)).collect()
    }
}

/// Writes frames as `<dir>/<class>/<frame:08>.pbm`; returns the frame count.
pub fn write_mask_sequence(dir: &Path, frames: impl IntoIterator<Item = Frame>) -> Result<usize> {
    let mut n = 0;
    for (i, frame) in frames.into_iter().enumerate() {
        for (class, plane) in frame.iter().enumerate() {
            let path = frame_file(dir, Some(class), i, "pbm");
            if i == 0 {
                let parent = path.parent().expect("class directory");
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_pbm(&path, plane)?;
        }
        n += 1;
    }
    Ok(n)
}

/// Streams a scenario to disk without holding the whole sequence in memory.
pub fn generate_to_dir(scenario: &Scenario, dir: &Path) -> Result<usize> {
    for class in 0..scenario.class_count {
        let d = dir.join(class.to_string());
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    write_mask_sequence(dir, scenario.frames()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub frames_processed: usize,
    pub rows_written: usize,
}

struct ScoreWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl ScoreWriter {
    fn create(path: &Path, cells: Option<(usize, usize)>) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        let mut header = String::from("frame,aggregate,aggregate_smoothed");
        if let Some((rows, cols)) = cells {
            for r in 0..rows {
                for c in 0..cols {
                    header.push_str(&format!(",cell_r{r}_c{c}"));
                }
            }
        }
        w.line(&header)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    fn row(&mut self, frame: usize, r: &FrameResult, cells: bool) -> Result<()> {
        let mut s = format!("{frame},{},{}", r.aggregate, r.aggregate_smoothed);
        if cells {
            for v in &r.reported_scores {
                s.push(',');
                s.push_str(&v.to_string());
            }
        }
        self.line(&s)
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Streams the input through the grid and writes the requested outputs.
///
/// Frames before `calibration_frames` train the model but write nothing; the
/// smoothed aggregate restarts when scoring begins.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let mut model = match &config.restore {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            GridModel::restore(&bytes)?
        }
        None => GridModel::new(config.grid.clone())?,
    };
    let enc = model.config().encoder.clone();

    let masks;
    let mut generated;
    let (total, mut next): (usize, Box<dyn FnMut(usize) -> Result<Frame>>) = match &config.input {
        InputSource::Masks(dir) => {
            masks = MaskSequence::open(dir, enc.class_count)?;
            let size = enc.frame_size;
            let seq = &masks;
            (masks.len(), Box::new(move |i| seq.read(i, size)))
        }
        InputSource::Scenario(s) => {
            check_scenario_fits(s, &enc)?;
            generated = s.frames()?;
            (
                s.emitted_count(),
                Box::new(move |_| Ok(generated.next().expect("frame count is known"))),
            )
        }
    };

    let out = &config.outputs;
    let mut scores = match &out.scores {
        Some(p) => Some(ScoreWriter::create(
            p,
            out.cell_scores.then(|| model.grid_size()),
        )?),
        None => None,
    };
    if let Some(d) = &out.heatmaps {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let cell_px = out.heatmap_cell_size.unwrap_or(enc.cell_size);

    let mut rows = 0;
    for i in 0..total {
        if i == config.calibration_frames && i > 0 {
            model.reset_smoothing();
        }
        let frame = next(i)?;
        let result = model.step(&frame, config.learn)?;
        if i < config.calibration_frames {
            continue;
        }
        if let Some(w) = &mut scores {
            w.row(i, &result, out.cell_scores)?;
        }
        if let Some(d) = &out.heatmaps {
            write_ppm(&frame_file(d, None, i, "ppm"), &render_heatmap(&result, cell_px))?;
        }
        rows += 1;
    }
    if let Some(w) = scores {
        w.finish()?;
    }
    if let Some(p) = &out.snapshot {
        if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(p, model.snapshot()).map_err(|e| Error::io(p, e))?;
    }
    Ok(RunSummary {
        frames_processed: total,
        rows_written: rows,
    })
}

fn check_scenario_fits(s: &Scenario, enc: &EncoderConfig) -> Result<()> {
    let mut errs = Vec::new();
    if s.frame_size != enc.frame_size {
        errs.push(format!(
            "scenario frames are {}x{} but the encoder expects {}x{}",
            s.frame_size.0, s.frame_size.1, enc.frame_size.0, enc.frame_size.1
        ));
    }
    if s.class_count != enc.class_count {
        errs.push(format!(
            "scenario has {} classes but the encoder expects {}",
            s.class_count, enc.class_count
        ));
    }
    match errs.len() {
        0 => Ok(()),
        1 => Err(Error::Config(errs.pop().unwrap())),
        _ => Err(Error::Validation(errs)),
    }
}

/// Active-bit statistics for one cell, as reported by `stats`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub cell: (usize, usize),
    pub mean: f64,
    pub std_dev: f64,
}

/// Statistics for `cell`, or for every cell in row-major order.
pub fn pixel_stats(
    config: &EncoderConfig,
    frames: &[Frame],
    cell: Option<(usize, usize)>,
) -> Result<Vec<CellStats>> {
    let (rows, cols) = config.grid_size();
    let cells: Vec<(usize, usize)> = match cell {
        Some(c) => vec![c],
        None => (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect(),
    };
    cells
        .into_iter()
        .map(|c| {
            let (mean, std_dev) = active_pixel_stats(config, frames, c)?;
            Ok(CellStats {
                cell: c,
                mean,
                std_dev,
            })
        })
        .collect()
}

/// Loads every frame of a run input, for whole-sequence reports.
pub fn load_frames(input: &InputSource, enc: &EncoderConfig) -> Result<Vec<Frame>> {
    match input {
        InputSource::Masks(dir) => MaskSequence::open(dir, enc.class_count)?.read_all(enc.frame_size),
        InputSource::Scenario(s) => {
            check_scenario_fits(s, enc)?;
            crate::synthetic::generate(s)
        }
    }
}
