//! Per-cell score heatmaps: green at 0, red at 1, linear in between.

use crate::grid::FrameResult;
use crate::netpbm::RgbImage;

/// Colour for one score, clamped to [0, 1] and rounded half up.
pub fn score_color(score: f64) -> [u8; 3] {
    let s = score.clamp(0.0, 1.0);
    let channel = |x: f64| (255.0 * x + 0.5).floor() as u8;
    [channel(s), channel(1.0 - s), 0]
}

/// Paints each cell's reported score over a `cell_size` block of pixels.
pub fn render_heatmap(result: &FrameResult, cell_size: (usize, usize)) -> RgbImage {
    let (rows, cols) = result.grid_size;
    let (ch, cw) = cell_size;
    let mut image = RgbImage::new(rows * ch, cols * cw);
    for r in 0..rows {
        for c in 0..cols {
            let rgb = score_color(result.reported_scores[r * cols + c]);
            for y in r * ch..(r + 1) * ch {
                for x in c * cw..(c + 1) * cw {
                    image.put(y, x, rgb);
                }
            }
        }
    }
    image
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(scores: Vec<f64>, grid_size: (usize, usize)) -> FrameResult {
        let n = scores.len();
        FrameResult {
            frame_index: 0,
            grid_size,
            raw_scores: scores.clone(),
            reported_scores: scores,
            certainty: vec![0; n],
            entered: vec![false; n],
            aggregate: 0.0,
            aggregate_smoothed: 0.0,
        }
    }

    #[test]
    fn ramp_endpoints_and_midpoint() {
        assert_eq!(score_color(0.0), [0, 255, 0]);
        assert_eq!(score_color(1.0), [255, 0, 0]);
        assert_eq!(score_color(0.5), [128, 128, 0]);
    }

    #[test]
    fn blocks_follow_row_major_cells() {
        let img = render_heatmap(&result(vec![0.0, 1.0, 0.5, 0.25], (2, 2)), (3, 2));
        assert_eq!((img.rows, img.cols), (6, 4));
        assert_eq!(img.pixel(0, 0), [0, 255, 0]);
        assert_eq!(img.pixel(2, 3), [255, 0, 0]);
        assert_eq!(img.pixel(3, 1), [128, 128, 0]);
        assert_eq!(img.pixel(5, 2), [64, 191, 0]);
    }
}
