//! Splits per-class mask planes into grid cells and turns each cell window
//! into an SDR.
//!
//! A window with fewer than `min_sparsity` set pixels counts as empty and is
//! replaced by a fixed per-class "empty pattern" of `empty_pattern_sparsity`
//! bits. The cell size caps how many bits a window can contribute and the
//! empty pattern puts a floor under it, so the bit count per cell stays in a
//! narrow band.

use rand::seq::index;

use crate::error::{contract, Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::sdr::{Mask, Sdr};
use crate::snapshot::{Decoder, Encoder};
use crate::SnapshotError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    /// (rows, cols) in pixels.
    pub frame_size: (usize, usize),
    pub cell_size: (usize, usize),
    pub class_count: usize,
    /// A window with strictly fewer set pixels than this is empty.
    pub min_sparsity: usize,
    pub empty_pattern_sparsity: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            frame_size: (120, 120),
            cell_size: (12, 12),
            class_count: 1,
            min_sparsity: 5,
            empty_pattern_sparsity: 5,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let (fr, fc) = self.frame_size;
        let (cr, cc) = self.cell_size;
        if fr == 0 || fc == 0 {
            errs.push("encoder frame size must be positive".to_string());
        }
        if cr == 0 || cc == 0 {
            errs.push("encoder cell size must be positive".to_string());
        } else if fr % cr != 0 || fc % cc != 0 {
            errs.push(format!(
                "frame {fr}x{fc} is not a multiple of cell {cr}x{cc}; pad the masks upstream"
            ));
        }
        if self.class_count == 0 {
            errs.push("encoder.class_count must be positive".to_string());
        }
        if self.empty_pattern_sparsity > cr * cc {
            errs.push(format!(
                "encoder.empty_pattern_sparsity ({}) exceeds cell pixel count ({})",
                self.empty_pattern_sparsity,
                cr * cc
            ));
        }
        match errs.len() {
            0 => Ok(()),
            1 => Err(Error::Config(errs.pop().unwrap())),
            _ => Err(Error::Validation(errs)),
        }
    }

    /// Grid dimensions in cells.
    pub fn grid_size(&self) -> (usize, usize) {
        (
            self.frame_size.0 / self.cell_size.0,
            self.frame_size.1 / self.cell_size.1,
        )
    }

    pub fn cell_pixels(&self) -> usize {
        self.cell_size.0 * self.cell_size.1
    }

    /// Width of the concatenated per-class SDR a cell feeds to its pooler.
    pub fn cell_input_width(&self) -> usize {
        self.cell_pixels() * self.class_count
    }

    pub(crate) fn encode(&self, enc: &mut Encoder) {
        enc.usize(self.frame_size.0);
        enc.usize(self.frame_size.1);
        enc.usize(self.cell_size.0);
        enc.usize(self.cell_size.1);
        enc.usize(self.class_count);
        enc.usize(self.min_sparsity);
        enc.usize(self.empty_pattern_sparsity);
        enc.u64(self.seed);
    }

    pub(crate) fn decode(dec: &mut Decoder<'_>) -> Result<Self, SnapshotError> {
        Ok(Self {
            frame_size: (dec.usize()?, dec.usize()?),
            cell_size: (dec.usize()?, dec.usize()?),
            class_count: dec.usize()?,
            min_sparsity: dec.usize()?,
            empty_pattern_sparsity: dec.usize()?,
            seed: dec.u64()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellInput {
    pub cell_coord: (usize, usize),
    /// One SDR per class plane, each `cell_pixels` wide.
    pub per_class: Vec<Sdr>,
    /// Emptiness verdict per class, taken before substitution.
    pub was_empty: Vec<bool>,
}

impl CellInput {
    /// Per-class SDRs joined in class order.
    pub fn combined(&self) -> Sdr {
        Sdr::concatenate(&self.per_class).expect("at least one class")
    }

    pub fn any_empty(&self) -> bool {
        self.was_empty.iter().any(|&e| e)
    }

    pub fn active_count(&self) -> usize {
        self.per_class.iter().map(Sdr::count).sum()
    }
}

/// An [`EncoderConfig`] with its empty patterns drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEncoder {
    config: EncoderConfig,
    empty_patterns: Vec<Sdr>,
}

impl GridEncoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let width = config.cell_pixels();
        let empty_patterns = (0..config.class_count)
            .map(|class| {
                let mut rng = seeded(derive_seed(config.seed, &[0xE4, class as u64]));
                let bits = index::sample(&mut rng, width, config.empty_pattern_sparsity)
                    .into_iter()
                    .map(|i| i as u32)
                    .collect();
                Sdr::from_unsorted(width, bits).expect("indices within cell")
            })
            .collect();
        Ok(Self {
            config,
            empty_patterns,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn empty_pattern(&self, class: usize) -> &Sdr {
        &self.empty_patterns[class]
    }

    pub fn check_planes(&self, planes: &[Mask]) -> Result<()> {
        contract!(
            planes.len() == self.config.class_count,
            "expected {} class planes, got {}",
            self.config.class_count,
            planes.len()
        );
        let (rows, cols) = self.config.frame_size;
        for (i, p) in planes.iter().enumerate() {
            contract!(
                p.rows() == rows && p.cols() == cols,
                "plane {i} is {}x{}, expected {rows}x{cols}",
                p.rows(),
                p.cols()
            );
        }
        Ok(())
    }

    /// Encodes one cell. `planes` must already satisfy [`Self::check_planes`].
    pub fn encode_cell(&self, planes: &[Mask], cell: (usize, usize)) -> CellInput {
        let (cr, cc) = self.config.cell_size;
        let mut per_class = Vec::with_capacity(planes.len());
        let mut was_empty = Vec::with_capacity(planes.len());
        for (class, plane) in planes.iter().enumerate() {
            let window = Sdr::from_bitmap_window(plane, (cell.0 * cr, cell.1 * cc), (cr, cc))
                .expect("cell window inside validated frame");
            if window.count() < self.config.min_sparsity {
                per_class.push(self.empty_patterns[class].clone());
                was_empty.push(true);
            } else {
                per_class.push(window);
                was_empty.push(false);
            }
        }
        CellInput {
            cell_coord: cell,
            per_class,
            was_empty,
        }
    }

    /// Encodes every cell, row-major.
    pub fn encode_frame(&self, planes: &[Mask]) -> Result<Vec<CellInput>> {
        self.check_planes(planes)?;
        let (rows, cols) = self.config.grid_size();
        Ok((0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|cell| self.encode_cell(planes, cell))
            .collect())
    }
}

/// Mean and population standard deviation of a cell's post-substitution
/// active-bit count (summed over classes) across `frames`.
pub fn active_pixel_stats(
    config: &EncoderConfig,
    frames: &[Vec<Mask>],
    cell: (usize, usize),
) -> Result<(f64, f64)> {
    contract!(!frames.is_empty(), "active_pixel_stats needs at least one frame");
    let encoder = GridEncoder::new(config.clone())?;
    let (rows, cols) = config.grid_size();
    contract!(
        cell.0 < rows && cell.1 < cols,
        "cell {cell:?} outside {rows}x{cols} grid"
    );
    let mut counts = Vec::with_capacity(frames.len());
    for planes in frames {
        encoder.check_planes(planes)?;
        counts.push(encoder.encode_cell(planes, cell).active_count() as f64);
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
