//! Sparse distributed representations and binary mask planes.
//!
//! An [`Sdr`] is stored as its sorted list of active bit indices. Every
//! contract in the crate is stated on that index set, so two SDRs are equal
//! exactly when their widths and active sets are equal.

use std::fmt;

use crate::error::{contract, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Sdr {
    width: usize,
    active: Vec<u32>,
}

impl Sdr {
    /// Builds an SDR from a strictly increasing list of active indices.
    pub fn new(width: usize, active: Vec<u32>) -> Result<Self> {
        contract!(width > 0, "SDR width must be positive");
        contract!(
            active.windows(2).all(|w| w[0] < w[1]),
            "SDR active indices must be strictly increasing"
        );
        if let Some(&last) = active.last() {
            contract!(
                (last as usize) < width,
                "SDR index {last} out of range for width {width}"
            );
        }
        Ok(Self { width, active })
    }

    /// Sorts and deduplicates `active` before validating it.
    pub fn from_unsorted(width: usize, mut active: Vec<u32>) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        Self::new(width, active)
    }

    /// The all-zero SDR.
    pub fn zeros(width: usize) -> Self {
        assert!(width > 0, "SDR width must be positive");
        Self {
            width,
            active: Vec::new(),
        }
    }

    pub(crate) fn from_sorted_unchecked(width: usize, active: Vec<u32>) -> Self {
        debug_assert!(active.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(active.last().map_or(true, |&i| (i as usize) < width));
        Self { width, active }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn active(&self) -> &[u32] {
        &self.active
    }

    pub fn count(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn sparsity(&self) -> f64 {
        self.active.len() as f64 / self.width as f64
    }

    pub fn contains(&self, index: u32) -> bool {
        self.active.binary_search(&index).is_ok()
    }

    /// Dense boolean view, one entry per bit.
    pub fn to_dense(&self) -> Vec<bool> {
        let mut dense = vec![false; self.width];
        for &i in &self.active {
            dense[i as usize] = true;
        }
        dense
    }

    /// Number of bits active in both SDRs.
    pub fn overlap(&self, other: &Sdr) -> Result<usize> {
        contract!(
            self.width == other.width,
            "overlap of SDRs with widths {} and {}",
            self.width,
            other.width
        );
        let (mut i, mut j, mut n) = (0, 0, 0);
        let (a, b) = (&self.active, &other.active);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(n)
    }

    /// Joins SDRs end to end; part `k` is shifted by the widths of the parts before it.
    pub fn concatenate<'a, I>(parts: I) -> Result<Sdr>
    where
        I: IntoIterator<Item = &'a Sdr>,
    {
        let mut width = 0usize;
        let mut active = Vec::new();
        let mut any = false;
        for part in parts {
            any = true;
            let offset = width as u32;
            active.extend(part.active.iter().map(|&i| i + offset));
            width += part.width;
        }
        contract!(any, "cannot concatenate an empty sequence of SDRs");
        Ok(Sdr::from_sorted_unchecked(width, active))
    }

    /// Row-major flattening of a rectangular window of `bitmap`.
    pub fn from_bitmap_window(
        bitmap: &Mask,
        origin: (usize, usize),
        size: (usize, usize),
    ) -> Result<Sdr> {
        let (r0, c0) = origin;
        let (rows, cols) = size;
        contract!(rows > 0 && cols > 0, "window size must be positive");
        contract!(
            r0 + rows <= bitmap.rows() && c0 + cols <= bitmap.cols(),
            "window {rows}x{cols} at ({r0},{c0}) exceeds {}x{} bitmap",
            bitmap.rows(),
            bitmap.cols()
        );
        let mut active = Vec::new();
        for r in 0..rows {
            let row = bitmap.row(r0 + r);
            for (c, &set) in row[c0..c0 + cols].iter().enumerate() {
                if set {
                    active.push((r * cols + c) as u32);
                }
            }
        }
        Ok(Sdr::from_sorted_unchecked(rows * cols, active))
    }
}

impl fmt::Debug for Sdr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sdr({}; {:?})", self.width, self.active)
    }
}

/// A 2-D binary plane, one bool per pixel in row-major order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        contract!(
            bits.len() == rows * cols,
            "mask of {rows}x{cols} needs {} bits, got {}",
            rows * cols,
            bits.len()
        );
        Ok(Self { rows, cols, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.cols + col] = value;
    }

    pub fn flip(&mut self, row: usize, col: usize) {
        let i = row * self.cols + col;
        self.bits[i] = !self.bits[i];
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.bits[row * self.cols..(row + 1) * self.cols]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mask {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let line: String = self
                .row(r)
                .iter()
                .map(|&b| if b { '#' } else { '.' })
                .collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// One frame: a mask plane per segmentation class.
pub type Frame = Vec<Mask>;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sdr(width: usize, active: &[u32]) -> Sdr {
        Sdr::new(width, active.to_vec()).unwrap()
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(sdr(10, &[1, 3, 5]).overlap(&sdr(10, &[3, 5, 7])).unwrap(), 2);
        let a = sdr(10, &[0, 4, 9]);
        assert_eq!(a.overlap(&a).unwrap(), 3);
        assert_eq!(sdr(10, &[]).overlap(&a).unwrap(), 0);
    }

    #[test]
    fn overlap_rejects_width_mismatch() {
        assert!(sdr(10, &[1]).overlap(&sdr(11, &[1])).is_err());
    }

    #[test]
    fn new_validates_indices() {
        assert!(Sdr::new(4, vec![4]).is_err());
        assert!(Sdr::new(4, vec![2, 1]).is_err());
        assert!(Sdr::new(4, vec![1, 1]).is_err());
        assert!(Sdr::new(0, vec![]).is_err());
        assert_eq!(Sdr::from_unsorted(4, vec![3, 1, 3]).unwrap(), sdr(4, &[1, 3]));
    }

    #[test]
    fn concatenate_examples() {
        let out = Sdr::concatenate([&sdr(4, &[0]), &sdr(4, &[1])]).unwrap();
        assert_eq!(out, sdr(8, &[0, 5]));

        let single = sdr(7, &[2, 6]);
        assert_eq!(Sdr::concatenate([&single]).unwrap(), single);

        let parts = [sdr(2, &[1]), sdr(2, &[0]), sdr(2, &[1])];
        assert_eq!(Sdr::concatenate(&parts).unwrap(), sdr(6, &[1, 2, 5]));

        assert!(Sdr::concatenate(std::iter::empty::<&Sdr>()).is_err());
    }

    #[test]
    fn bitmap_window_examples() {
        let mut m = Mask::new(4, 4);
        m.set(1, 1, true);
        assert_eq!(
            Sdr::from_bitmap_window(&m, (0, 0), (2, 2)).unwrap(),
            sdr(4, &[3])
        );
        assert!(Sdr::from_bitmap_window(&m, (2, 2), (2, 2)).unwrap().is_empty());

        let full = Mask::from_bits(3, 3, vec![true; 9]).unwrap();
        let all = Sdr::from_bitmap_window(&full, (0, 0), (3, 3)).unwrap();
        assert_eq!(all.active(), &[0, 1, 2, 3, 4, 5, 6, 7, 8]);

        assert!(Sdr::from_bitmap_window(&m, (3, 0), (2, 2)).is_err());
        assert!(Sdr::from_bitmap_window(&m, (0, 3), (1, 2)).is_err());
    }

    fn arb_sdr(width: usize) -> impl Strategy<Value = Sdr> {
        proptest::collection::btree_set(0..width as u32, 0..width)
            .prop_map(move |s| Sdr::new(width, s.into_iter().collect()).unwrap())
    }

    proptest! {
        #[test]
        fn concatenate_is_associative(a in arb_sdr(5), b in arb_sdr(7), c in arb_sdr(3)) {
            let bc = Sdr::concatenate([&b, &c]).unwrap();
            let nested = Sdr::concatenate([&a, &bc]).unwrap();
            let flat = Sdr::concatenate([&a, &b, &c]).unwrap();
            prop_assert_eq!(nested, flat);
        }

        #[test]
        fn overlap_bounded_and_commutative(a in arb_sdr(40), b in arb_sdr(40)) {
            let ab = a.overlap(&b).unwrap();
            prop_assert_eq!(ab, b.overlap(&a).unwrap());
            prop_assert!(ab <= a.count().min(b.count()));
            prop_assert!((0.0..=1.0).contains(&a.sparsity()));
        }

        #[test]
        fn bitmap_window_is_injective(
            x in proptest::collection::vec(any::<bool>(), 12),
            y in proptest::collection::vec(any::<bool>(), 12),
        ) {
            let mx = Mask::from_bits(3, 4, x.clone()).unwrap();
            let my = Mask::from_bits(3, 4, y.clone()).unwrap();
            let sx = Sdr::from_bitmap_window(&mx, (0, 0), (3, 4)).unwrap();
            let sy = Sdr::from_bitmap_window(&my, (0, 0), (3, 4)).unwrap();
            prop_assert_eq!(x == y, sx == sy);
            prop_assert_eq!(sx.to_dense(), x);
        }
    }
}
