//! Spatial pooler with global inhibition.
//!
//! Each column owns a fixed potential pool over the input bits with one
//! permanence per pooled bit. A column's overlap is the number of connected
//! synapses (permanence at or above the connected threshold) that land on an
//! active input bit; the `active_columns` best columns win.

use rand::seq::index;
use rand::Rng;

use crate::error::{contract, Error, Result, SnapshotError};
use crate::rng::{seeded, ChaCha8Rng};
use crate::sdr::Sdr;
use crate::snapshot::{self, Decoder, Encoder};

/// Half-width of the band around the connected threshold that initial permanences are drawn from.
pub const INITIAL_PERMANENCE_SPREAD: f32 = 0.1;

/// Exponential moving average window for column duty cycles when boosting is on.
pub const DUTY_CYCLE_PERIOD: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SpParams {
    pub input_width: usize,
    pub column_count: usize,
    /// Winners per step.
    pub active_columns: usize,
    /// Fraction of the input each column may connect to.
    pub potential_fraction: f64,
    pub connected_threshold: f32,
    pub permanence_increment: f32,
    pub permanence_decrement: f32,
    /// Minimum raw overlap for a column to compete.
    pub stimulus_threshold: u32,
    pub boosting_enabled: bool,
    /// Only read when `boosting_enabled` is set.
    pub boost_strength: f32,
    pub seed: u64,
}

impl Default for SpParams {
    fn default() -> Self {
        Self {
            input_width: 144,
            column_count: 256,
            active_columns: 16,
            potential_fraction: 0.85,
            connected_threshold: 0.2,
            permanence_increment: 0.05,
            permanence_decrement: 0.008,
            stimulus_threshold: 1,
            boosting_enabled: false,
            boost_strength: 2.0,
            seed: 0,
        }
    }
}

impl SpParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.input_width == 0 {
            errs.push("sp.input_width must be positive".to_string());
        }
        if self.column_count == 0 {
            errs.push("sp.column_count must be positive".to_string());
        }
        if self.active_columns == 0 || self.active_columns > self.column_count {
            errs.push(format!(
                "sp.active_columns ({}) must be in 1..={}",
                self.active_columns, self.column_count
            ));
        }
        if !(self.potential_fraction > 0.0 && self.potential_fraction <= 1.0) {
            errs.push("sp.potential_fraction must be in (0, 1]".to_string());
        }
        if !(self.connected_threshold > 0.0 && self.connected_threshold < 1.0) {
            errs.push("sp.connected_threshold must be in (0, 1)".to_string());
        }
        if !(self.permanence_increment > 0.0) {
            errs.push("sp.permanence_increment must be > 0".to_string());
        }
        if !(self.permanence_decrement >= 0.0) {
            errs.push("sp.permanence_decrement must be >= 0".to_string());
        }
        if !self.boost_strength.is_finite() || self.boost_strength < 0.0 {
            errs.push("sp.boost_strength must be finite and >= 0".to_string());
        }
        match errs.len() {
            0 => Ok(()),
            1 => Err(Error::Config(errs.pop().unwrap())),
            _ => Err(Error::Validation(errs)),
        }
    }

    /// Number of input bits in each column's potential pool.
    pub fn pool_size(&self) -> usize {
        ((self.potential_fraction * self.input_width as f64).round() as usize).clamp(1, self.input_width)
    }

    pub(crate) fn encode(&self, enc: &mut Encoder) {
        enc.usize(self.input_width);
        enc.usize(self.column_count);
        enc.usize(self.active_columns);
        enc.f64(self.potential_fraction);
        enc.f32(self.connected_threshold);
        enc.f32(self.permanence_increment);
        enc.f32(self.permanence_decrement);
        enc.u32(self.stimulus_threshold);
        enc.bool(self.boosting_enabled);
        enc.f32(self.boost_strength);
        enc.u64(self.seed);
    }

    pub(crate) fn decode(dec: &mut Decoder<'_>) -> Result<Self, SnapshotError> {
        Ok(Self {
            input_width: dec.usize()?,
            column_count: dec.usize()?,
            active_columns: dec.usize()?,
            potential_fraction: dec.f64()?,
            connected_threshold: dec.f32()?,
            permanence_increment: dec.f32()?,
            permanence_decrement: dec.f32()?,
            stimulus_threshold: dec.u32()?,
            boosting_enabled: dec.bool()?,
            boost_strength: dec.f32()?,
            seed: dec.u64()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialPooler {
    params: SpParams,
    pool_size: usize,
    /// `column_count * pool_size` input indices, each column's slice sorted ascending.
    pools: Vec<u32>,
    /// Permanence for the matching entry of `pools`.
    permanences: Vec<f32>,
    /// For each input bit, the ascending `pools` slots that hold it. Derived from `pools`.
    slots_by_input: Vec<Vec<u32>>,
    active_duty_cycles: Vec<f32>,
    boost_factors: Vec<f32>,
    step_count: u64,
}

fn index_slots(input_width: usize, pools: &[u32]) -> Vec<Vec<u32>> {
    let mut slots = vec![Vec::new(); input_width];
    for (slot, &bit) in pools.iter().enumerate() {
        slots[bit as usize].push(slot as u32);
    }
    slots
}

impl SpatialPooler {
    pub fn new(params: SpParams) -> Result<Self> {
        params.validate()?;
        let pool_size = params.pool_size();
        let mut rng: ChaCha8Rng = seeded(params.seed);
        let mut pools = Vec::with_capacity(params.column_count * pool_size);
        let mut permanences = Vec::with_capacity(params.column_count * pool_size);
        let lo = (params.connected_threshold - INITIAL_PERMANENCE_SPREAD).max(0.0);
        let hi = (params.connected_threshold + INITIAL_PERMANENCE_SPREAD).min(1.0);
        for _ in 0..params.column_count {
            let mut pool: Vec<u32> = index::sample(&mut rng, params.input_width, pool_size)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            pool.sort_unstable();
            for _ in 0..pool_size {
                permanences.push(rng.random_range(lo..=hi));
            }
            pools.extend(pool);
        }
        let column_count = params.column_count;
        Ok(Self {
            slots_by_input: index_slots(params.input_width, &pools),
            params,
            pool_size,
            pools,
            permanences,
            active_duty_cycles: vec![0.0; column_count],
            boost_factors: vec![1.0; column_count],
            step_count: 0,
        })
    }

    pub fn params(&self) -> &SpParams {
        &self.params
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn potential_pool(&self, column: usize) -> &[u32] {
        &self.pools[column * self.pool_size..(column + 1) * self.pool_size]
    }

    pub fn permanences(&self, column: usize) -> &[f32] {
        &self.permanences[column * self.pool_size..(column + 1) * self.pool_size]
    }

    pub fn boost_factors(&self) -> &[f32] {
        &self.boost_factors
    }

    /// Connected-synapse overlap of every column with `input`.
    pub fn overlaps(&self, input: &Sdr) -> Result<Vec<u32>> {
        self.check_width(input)?;
        Ok(self.raw_overlaps(input))
    }

    fn check_width(&self, input: &Sdr) -> Result<()> {
        contract!(
            input.width() == self.params.input_width,
            "spatial pooler expects input width {}, got {}",
            self.params.input_width,
            input.width()
        );
        Ok(())
    }

    fn raw_overlaps(&self, input: &Sdr) -> Vec<u32> {
        let threshold = self.params.connected_threshold;
        let mut overlaps = vec![0u32; self.params.column_count];
        for &bit in input.active() {
            for &slot in &self.slots_by_input[bit as usize] {
                if self.permanences[slot as usize] >= threshold {
                    overlaps[slot as usize / self.pool_size] += 1;
                }
            }
        }
        overlaps
    }

    pub fn compute(&mut self, input: &Sdr, learn: bool) -> Result<Sdr> {
        self.check_width(input)?;
        let overlaps = self.raw_overlaps(input);

        let mut candidates: Vec<(f32, u32)> = overlaps
            .iter()
            .enumerate()
            .filter(|&(_, &o)| o >= self.params.stimulus_threshold)
            .map(|(c, &o)| {
                let score = if self.params.boosting_enabled {
                    o as f32 * self.boost_factors[c]
                } else {
                    o as f32
                };
                (score, c as u32)
            })
            .collect();
        candidates.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        candidates.truncate(self.params.active_columns);
        let mut winners: Vec<u32> = candidates.into_iter().map(|(_, c)| c).collect();
        winners.sort_unstable();

        if learn {
            self.learn(&input.to_dense(), &winners);
            if self.params.boosting_enabled {
                self.update_boosting(&winners);
            }
        }
        self.step_count += 1;
        Ok(Sdr::from_sorted_unchecked(self.params.column_count, winners))
    }

    fn learn(&mut self, dense: &[bool], winners: &[u32]) {
        let (inc, dec) = (
            self.params.permanence_increment,
            self.params.permanence_decrement,
        );
        for &c in winners {
            let range = c as usize * self.pool_size..(c as usize + 1) * self.pool_size;
            for (&i, p) in self.pools[range.clone()]
                .iter()
                .zip(&mut self.permanences[range])
            {
                let next = if dense[i as usize] { *p + inc } else { *p - dec };
                *p = next.clamp(0.0, 1.0);
            }
        }
    }

    fn update_boosting(&mut self, winners: &[u32]) {
        let period = DUTY_CYCLE_PERIOD.min(self.step_count + 1) as f32;
        let target = self.params.active_columns as f32 / self.params.column_count as f32;
        let mut active = vec![false; self.params.column_count];
        for &c in winners {
            active[c as usize] = true;
        }
        for (c, duty) in self.active_duty_cycles.iter_mut().enumerate() {
            let now = if active[c] { 1.0 } else { 0.0 };
            *duty = (*duty * (period - 1.0) + now) / period;
            self.boost_factors[c] = (-self.params.boost_strength * (*duty - target)).exp();
        }
    }

    pub(crate) fn encode(&self, enc: &mut Encoder) {
        self.params.encode(enc);
        enc.u32s(&self.pools);
        enc.usize(self.permanences.len());
        for &p in &self.permanences {
            enc.f32(p);
        }
        enc.usize(self.active_duty_cycles.len());
        for (&d, &b) in self.active_duty_cycles.iter().zip(&self.boost_factors) {
            enc.f32(d);
            enc.f32(b);
        }
        enc.u64(self.step_count);
    }

    pub(crate) fn decode(dec: &mut Decoder<'_>) -> Result<Self, SnapshotError> {
        let params = SpParams::decode(dec)?;
        params
            .validate()
            .map_err(|e| SnapshotError::Malformed(e.to_string()))?;
        let pool_size = params.pool_size();
        let pools = dec.u32s()?;
        let n = dec.len(4)?;
        let permanences = (0..n).map(|_| dec.f32()).collect::<Result<Vec<_>, _>>()?;
        let cols = dec.len(8)?;
        let mut active_duty_cycles = Vec::with_capacity(cols);
        let mut boost_factors = Vec::with_capacity(cols);
        for _ in 0..cols {
            active_duty_cycles.push(dec.f32()?);
            boost_factors.push(dec.f32()?);
        }
        let step_count = dec.u64()?;
        let expected = params.column_count * pool_size;
        if pools.len() != expected
            || permanences.len() != expected
            || cols != params.column_count
            || pools.iter().any(|&i| i as usize >= params.input_width)
        {
            return Err(SnapshotError::Malformed(
                "spatial pooler arrays disagree with parameters".into(),
            ));
        }
        Ok(Self {
            slots_by_input: index_slots(params.input_width, &pools),
            params,
            pool_size,
            pools,
            permanences,
            active_duty_cycles,
            boost_factors,
            step_count,
        })
    }

    /// Standalone sealed snapshot of this pooler.
    pub fn to_snapshot(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u8(snapshot_kind::SPATIAL_POOLER);
        self.encode(&mut enc);
        snapshot::seal(&enc.into_inner())
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        let (_, payload) = snapshot::open(bytes)?;
        let mut dec = Decoder::new(payload);
        if dec.u8()? != snapshot_kind::SPATIAL_POOLER {
            return Err(SnapshotError::Malformed("not a spatial pooler snapshot".into()).into());
        }
        let sp = Self::decode(&mut dec)?;
        if !dec.is_finished() {
            return Err(SnapshotError::Malformed("trailing bytes".into()).into());
        }
        Ok(sp)
    }
}

pub(crate) mod snapshot_kind {
    pub const SPATIAL_POOLER: u8 = 1;
    pub const TEMPORAL_MEMORY: u8 = 2;
    pub const GRID: u8 = 3;
}
