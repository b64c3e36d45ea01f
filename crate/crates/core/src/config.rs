//! Flat `key = value` configuration text.
//!
//! Keys carry dotted section prefixes (`grid.multistep_n = 2`) and mirror the
//! fields of [`GridConfig`], [`Scenario`] and [`RunConfig`]. `#` starts a
//! comment. Later assignments (for example `--set` flags) replace earlier ones.
//! Every unknown key and every unparsable value is reported, not just the first.
//!
//! Pairs are written `rows,cols`; scripted positions are whitespace-separated
//! pairs. Per-cell overrides use `cell.<row>.<col>.sp.<field>` and
//! `cell.<row>.<col>.tm.<field>`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use crate::aggregation::AggregationKind;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::grid::{CellOverride, GridConfig};
use crate::spatial_pooler::SpParams;
use crate::synthetic::{Event, NoiseSpec, ObjectTrack, Path, Scenario};
use crate::temporal_memory::TmParams;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: String,
}

/// An ordered set of key/value assignments with their origin for diagnostics.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, Entry>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses configuration text; `source` names it in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut kv = Self::new();
        let mut errs = Vec::new();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = format!("{source}:{}", n + 1);
            match split_assignment(line) {
                Some((k, v)) => {
                    if !seen.insert(k.to_string()) {
                        errs.push(format!("{origin}: key `{k}` assigned twice"));
                    }
                    kv.set(k, v, &origin);
                }
                None => errs.push(format!("{origin}: expected `key = value`, got `{line}`")),
            }
        }
        finish(errs)?;
        Ok(kv)
    }

    pub fn set(&mut self, key: &str, value: &str, origin: &str) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                origin: origin.to_string(),
            },
        );
    }

    /// Applies a `key=value` command-line override.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = split_assignment(assignment).ok_or_else(|| {
            Error::Config(format!("override `{assignment}` is not of the form key=value"))
        })?;
        self.set(k, v, "command line");
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Renders the assignments as configuration text, one per line, sorted by key.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, e)| format!("{k} = {}\n", e.value))
            .collect()
    }

    /// Only the keys under `prefix.`, with the prefix removed.
    pub fn section(&self, prefix: &str) -> KeyValues {
        let p = format!("{prefix}.");
        KeyValues {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, e)| k.strip_prefix(&p).map(|rest| (rest.to_string(), e.clone())))
                .collect(),
        }
    }
}

fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    let valid_key = !k.is_empty()
        && k.split('.').all(|part| {
            !part.is_empty() && part.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        });
    valid_key.then_some((k, v))
}

fn finish(errs: Vec<String>) -> Result<()> {
    match errs.len() {
        0 => Ok(()),
        1 => Err(Error::Config(errs.into_iter().next().unwrap())),
        _ => Err(Error::Validation(errs)),
    }
}

/// Tracks which keys were consumed so leftovers can be reported as unknown.
struct Reader<'a> {
    kv: &'a KeyValues,
    used: BTreeSet<String>,
    errs: Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(kv: &'a KeyValues) -> Self {
        Self {
            kv,
            used: BTreeSet::new(),
            errs: Vec::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<(&'a str, &'a str)> {
        let e = self.kv.entries.get(key)?;
        self.used.insert(key.to_string());
        Some((e.value.as_str(), e.origin.as_str()))
    }

    fn read<T>(&mut self, key: &str, parse: impl FnOnce(&str) -> std::result::Result<T, String>) -> Option<T> {
        let (value, origin) = self.raw(key)?;
        match parse(value) {
            Ok(v) => Some(v),
            Err(m) => {
                self.errs.push(format!("{origin}: `{key}`: {m}"));
                None
            }
        }
    }

    fn field(&mut self, key: &str, field: FieldMut<'_>) {
        let Some((value, origin)) = self.raw(key) else {
            return;
        };
        if let Err(m) = field.assign(value) {
            self.errs.push(format!("{origin}: `{key}`: {m}"));
        }
    }

    fn fields(&mut self, prefix: &str, fields: Vec<(&'static str, FieldMut<'_>)>) {
        for (name, f) in fields {
            self.field(&format!("{prefix}.{name}"), f);
        }
    }

    fn mark_used_prefix(&mut self, prefix: &str) {
        let p = format!("{prefix}.");
        for k in self.kv.entries.keys().filter(|k| k.starts_with(&p)) {
            self.used.insert(k.clone());
        }
    }

    fn finish(mut self) -> Result<()> {
        for (k, e) in &self.kv.entries {
            if !self.used.contains(k) {
                self.errs.push(format!("{}: unknown key `{k}`", e.origin));
            }
        }
        finish(self.errs)
    }
}

fn parse_value<T: FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    s.parse::<T>().map_err(|e| format!("invalid value `{s}` ({e})"))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

fn parse_pair<T: FromStr>(s: &str) -> std::result::Result<(T, T), String>
where
    T::Err: Display,
{
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    Ok((parse_value(a.trim())?, parse_value(b.trim())?))
}

enum FieldMut<'a> {
    Usize(&'a mut usize),
    U32(&'a mut u32),
    U64(&'a mut u64),
    F32(&'a mut f32),
    F64(&'a mut f64),
    Bool(&'a mut bool),
    Pair(&'a mut (usize, usize)),
    Aggregation(&'a mut AggregationKind),
}

impl FieldMut<'_> {
    fn assign(self, s: &str) -> std::result::Result<(), String> {
        match self {
            FieldMut::Usize(f) => *f = parse_value(s)?,
            FieldMut::U32(f) => *f = parse_value(s)?,
            FieldMut::U64(f) => *f = parse_value(s)?,
            FieldMut::F32(f) => *f = parse_value(s)?,
            FieldMut::F64(f) => *f = parse_value(s)?,
            FieldMut::Bool(f) => *f = parse_bool(s)?,
            FieldMut::Pair(f) => *f = parse_pair(s)?,
            FieldMut::Aggregation(f) => *f = parse_value(s)?,
        }
        Ok(())
    }

    fn render(&self) -> String {
        match self {
            FieldMut::Usize(f) => f.to_string(),
            FieldMut::U32(f) => f.to_string(),
            FieldMut::U64(f) => f.to_string(),
            FieldMut::F32(f) => f.to_string(),
            FieldMut::F64(f) => f.to_string(),
            FieldMut::Bool(f) => f.to_string(),
            FieldMut::Pair(f) => format!("{},{}", f.0, f.1),
            FieldMut::Aggregation(f) => f.to_string(),
        }
    }
}

fn encoder_fields(e: &mut EncoderConfig) -> Vec<(&'static str, FieldMut<'_>)> {
    vec![
        ("frame_size", FieldMut::Pair(&mut e.frame_size)),
        ("cell_size", FieldMut::Pair(&mut e.cell_size)),
        ("class_count", FieldMut::Usize(&mut e.class_count)),
        ("min_sparsity", FieldMut::Usize(&mut e.min_sparsity)),
        ("empty_pattern_sparsity", FieldMut::Usize(&mut e.empty_pattern_sparsity)),
        ("seed", FieldMut::U64(&mut e.seed)),
    ]
}

// `input_width` is derived from the encoder, so it is not a key.
fn sp_fields(p: &mut SpParams) -> Vec<(&'static str, FieldMut<'_>)> {
    vec![
        ("column_count", FieldMut::Usize(&mut p.column_count)),
        ("active_columns", FieldMut::Usize(&mut p.active_columns)),
        ("potential_fraction", FieldMut::F64(&mut p.potential_fraction)),
        ("connected_threshold", FieldMut::F32(&mut p.connected_threshold)),
        ("permanence_increment", FieldMut::F32(&mut p.permanence_increment)),
        ("permanence_decrement", FieldMut::F32(&mut p.permanence_decrement)),
        ("stimulus_threshold", FieldMut::U32(&mut p.stimulus_threshold)),
        ("boosting_enabled", FieldMut::Bool(&mut p.boosting_enabled)),
        ("boost_strength", FieldMut::F32(&mut p.boost_strength)),
        ("seed", FieldMut::U64(&mut p.seed)),
    ]
}

// `column_count` is derived from the pooler and `grid.multistep_n`.
fn tm_fields(p: &mut TmParams) -> Vec<(&'static str, FieldMut<'_>)> {
    vec![
        ("cells_per_column", FieldMut::Usize(&mut p.cells_per_column)),
        ("max_segments_per_cell", FieldMut::Usize(&mut p.max_segments_per_cell)),
        ("max_synapses_per_segment", FieldMut::Usize(&mut p.max_synapses_per_segment)),
        ("initial_permanence", FieldMut::F32(&mut p.initial_permanence)),
        ("connected_threshold", FieldMut::F32(&mut p.connected_threshold)),
        ("permanence_increment", FieldMut::F32(&mut p.permanence_increment)),
        ("permanence_decrement", FieldMut::F32(&mut p.permanence_decrement)),
        ("predicted_decrement", FieldMut::F32(&mut p.predicted_decrement)),
        ("activation_threshold", FieldMut::U32(&mut p.activation_threshold)),
        ("min_threshold", FieldMut::U32(&mut p.min_threshold)),
        ("new_synapse_count", FieldMut::U32(&mut p.new_synapse_count)),
        ("seed", FieldMut::U64(&mut p.seed)),
    ]
}

fn grid_fields(g: &mut GridConfig) -> Vec<(&'static str, FieldMut<'_>)> {
    vec![
        ("grid.multistep_n", FieldMut::Usize(&mut g.multistep_n)),
        ("grid.suppression_enabled", FieldMut::Bool(&mut g.suppression_enabled)),
        ("aggregation.kind", FieldMut::Aggregation(&mut g.aggregation)),
        ("aggregation.smoothing_window", FieldMut::Usize(&mut g.smoothing_window)),
    ]
}

fn read_grid(r: &mut Reader<'_>) -> GridConfig {
    let mut g = GridConfig::default();
    for (key, f) in grid_fields(&mut g) {
        r.field(key, f);
    }
    r.fields("encoder", encoder_fields(&mut g.encoder));
    r.fields("sp", sp_fields(&mut g.default_sp));
    r.fields("tm", tm_fields(&mut g.default_tm));

    let cell_keys: BTreeSet<(usize, usize)> = r
        .kv
        .keys()
        .filter_map(|k| {
            let mut parts = k.strip_prefix("cell.")?.splitn(3, '.');
            let row = parts.next()?.parse().ok()?;
            let col = parts.next()?.parse().ok()?;
            Some((row, col))
        })
        .collect();
    for (row, col) in cell_keys {
        let prefix = format!("cell.{row}.{col}");
        let section = r.kv.section(&prefix);
        let mut o = CellOverride::default();
        if section.keys().any(|k| k.starts_with("sp.")) {
            let mut sp = g.default_sp.clone();
            r.fields(&format!("{prefix}.sp"), sp_fields(&mut sp));
            o.sp = Some(sp);
        }
        if section.keys().any(|k| k.starts_with("tm.")) {
            let mut tm = g.default_tm.clone();
            r.fields(&format!("{prefix}.tm"), tm_fields(&mut tm));
            o.tm = Some(tm);
        }
        if o.sp.is_some() || o.tm.is_some() {
            g.per_cell_overrides.insert((row, col), o);
        }
    }
    g
}

impl GridConfig {
    /// Builds a grid configuration from the `grid.`, `aggregation.`,
    /// `encoder.`, `sp.`, `tm.` and `cell.` keys; any other key is an error.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut r = Reader::new(kv);
        let g = read_grid(&mut r);
        r.finish()?;
        g.validate()?;
        Ok(g)
    }

    /// Every setting as configuration text that reads back to an equal config.
    pub fn to_key_values(&self) -> KeyValues {
        let mut g = self.clone();
        let mut kv = KeyValues::new();
        let mut put = |prefix: &str, fields: Vec<(&'static str, FieldMut<'_>)>| {
            for (name, f) in fields {
                let key = if prefix.is_empty() {
                    name.to_string()
                } else {
                    format!("{prefix}.{name}")
                };
                kv.set(&key, &f.render(), "generated");
            }
        };
        put("", grid_fields(&mut g));
        put("encoder", encoder_fields(&mut g.encoder));
        put("sp", sp_fields(&mut g.default_sp));
        put("tm", tm_fields(&mut g.default_tm));
        for (&(row, col), o) in &mut g.per_cell_overrides {
            if let Some(sp) = &mut o.sp {
                put(&format!("cell.{row}.{col}.sp"), sp_fields(sp));
            }
            if let Some(tm) = &mut o.tm {
                put(&format!("cell.{row}.{col}.tm"), tm_fields(tm));
            }
        }
        kv
    }
}

/// Indices `n` for which some key `<prefix>.<n>` or `<prefix>.<n>.…` exists.
fn indexed(kv: &KeyValues, prefix: &str) -> BTreeSet<usize> {
    let p = format!("{prefix}.");
    kv.keys()
        .filter_map(|k| k.strip_prefix(&p)?.split('.').next()?.parse().ok())
        .collect()
}

fn parse_path(r: &mut Reader<'_>, prefix: &str) -> Option<Path> {
    let kind = r.read(&format!("{prefix}.path"), |s| Ok(s.to_string()))?;
    let pair = |s: &str| parse_pair::<i64>(s);
    match kind.as_str() {
        "linear_loop" => {
            let start = r.read(&format!("{prefix}.start"), pair);
            let velocity = r.read(&format!("{prefix}.velocity"), pair);
            match (start, velocity) {
                (Some(start), Some(velocity)) => Some(Path::LinearLoop { start, velocity }),
                _ => {
                    r.errs.push(format!("{prefix}: linear_loop needs `start` and `velocity`"));
                    None
                }
            }
        }
        "stationary" => match r.read(&format!("{prefix}.position"), pair) {
            Some(position) => Some(Path::Stationary { position }),
            None => {
                r.errs.push(format!("{prefix}: stationary needs `position`"));
                None
            }
        },
        "scripted" => {
            let positions = r.read(&format!("{prefix}.positions"), |s| {
                s.split_whitespace().map(pair).collect::<std::result::Result<Vec<_>, _>>()
            });
            match positions {
                Some(positions) => Some(Path::Scripted { positions }),
                None => {
                    r.errs.push(format!("{prefix}: scripted needs `positions`"));
                    None
                }
            }
        }
        other => {
            r.errs.push(format!(
                "{prefix}.path: unknown path `{other}` (linear_loop, stationary or scripted)"
            ));
            None
        }
    }
}

fn parse_event(r: &mut Reader<'_>, prefix: &str) -> Option<Event> {
    let kind = r.read(&format!("{prefix}.kind"), |s| Ok(s.to_string()))?;
    let num = |r: &mut Reader<'_>, name: &str| {
        let key = format!("{prefix}.{name}");
        let v = r.read(&key, parse_value::<usize>);
        if v.is_none() && !r.kv.contains(&key) {
            r.errs.push(format!("{prefix}: {kind} needs `{name}`"));
        }
        v
    };
    match kind.as_str() {
        "repeat" => {
            let start_frame = num(r, "start_frame");
            let duration = num(r, "duration");
            Some(Event::FrameRepeat {
                start_frame: start_frame?,
                duration: duration?,
            })
        }
        "skip" => {
            let at_frame = num(r, "at_frame");
            let skipped_count = num(r, "skipped_count");
            Some(Event::FrameSkip {
                at_frame: at_frame?,
                skipped_count: skipped_count?,
            })
        }
        other => {
            r.errs.push(format!("{prefix}.kind: unknown event `{other}` (repeat or skip)"));
            None
        }
    }
}

fn read_scenario(r: &mut Reader<'_>) -> Scenario {
    let mut s = Scenario::default();
    r.field("scenario.frame_size", FieldMut::Pair(&mut s.frame_size));
    r.field("scenario.frame_count", FieldMut::Usize(&mut s.frame_count));
    r.field("scenario.class_count", FieldMut::Usize(&mut s.class_count));
    r.field("scenario.seed", FieldMut::U64(&mut s.seed));
    let mut noise = NoiseSpec::default();
    r.field("noise.pixel_flip_probability", FieldMut::F64(&mut noise.pixel_flip_probability));
    r.field(
        "noise.object_dropout_probability",
        FieldMut::F64(&mut noise.object_dropout_probability),
    );
    s.noise = noise;
    for i in indexed(r.kv, "object") {
        let prefix = format!("object.{i}");
        let shape = r.read(&format!("{prefix}.shape"), parse_pair::<usize>);
        let class_index = r
            .read(&format!("{prefix}.class_index"), parse_value::<usize>)
            .unwrap_or(0);
        let path = parse_path(r, &prefix);
        if shape.is_none() && !r.kv.contains(&format!("{prefix}.shape")) {
            r.errs.push(format!("{prefix}: missing `shape`"));
        }
        if let (Some(shape), Some(path)) = (shape, path) {
            s.objects.push(ObjectTrack {
                shape,
                path,
                class_index,
            });
        }
    }
    for i in indexed(r.kv, "event") {
        if let Some(e) = parse_event(r, &format!("event.{i}")) {
            s.events.push(e);
        }
    }
    s
}

impl Scenario {
    /// Builds a scenario from `scenario.`, `noise.`, `object.<n>.` and `event.<n>.` keys.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut r = Reader::new(kv);
        let s = read_scenario(&mut r);
        r.finish()?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let mut put = |k: &str, v: String| kv.set(k, &v, "generated");
        let pair = |p: (i64, i64)| format!("{},{}", p.0, p.1);
        put("scenario.frame_size", format!("{},{}", self.frame_size.0, self.frame_size.1));
        put("scenario.frame_count", self.frame_count.to_string());
        put("scenario.class_count", self.class_count.to_string());
        put("scenario.seed", self.seed.to_string());
        put("noise.pixel_flip_probability", self.noise.pixel_flip_probability.to_string());
        put(
            "noise.object_dropout_probability",
            self.noise.object_dropout_probability.to_string(),
        );
        for (i, o) in self.objects.iter().enumerate() {
            let p = format!("object.{i}");
            put(&format!("{p}.shape"), format!("{},{}", o.shape.0, o.shape.1));
            put(&format!("{p}.class_index"), o.class_index.to_string());
            match &o.path {
                Path::LinearLoop { start, velocity } => {
                    put(&format!("{p}.path"), "linear_loop".into());
                    put(&format!("{p}.start"), pair(*start));
                    put(&format!("{p}.velocity"), pair(*velocity));
                }
                Path::Stationary { position } => {
                    put(&format!("{p}.path"), "stationary".into());
                    put(&format!("{p}.position"), pair(*position));
                }
                Path::Scripted { positions } => {
                    put(&format!("{p}.path"), "scripted".into());
                    let list: Vec<String> = positions.iter().map(|&q| pair(q)).collect();
                    put(&format!("{p}.positions"), list.join(" "));
                }
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            let p = format!("event.{i}");
            match *e {
                Event::FrameRepeat {
                    start_frame,
                    duration,
                } => {
                    put(&format!("{p}.kind"), "repeat".into());
                    put(&format!("{p}.start_frame"), start_frame.to_string());
                    put(&format!("{p}.duration"), duration.to_string());
                }
                Event::FrameSkip {
                    at_frame,
                    skipped_count,
                } => {
                    put(&format!("{p}.kind"), "skip".into());
                    put(&format!("{p}.at_frame"), at_frame.to_string());
                    put(&format!("{p}.skipped_count"), skipped_count.to_string());
                }
            }
        }
        kv
    }
}

/// Where a run reads its frames from.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    /// Directory holding `<class>/<frame:08>.pbm` planes.
    Masks(PathBuf),
    /// Frames generated in memory from a scenario.
    Scenario(Scenario),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outputs {
    /// CSV of `frame,aggregate,aggregate_smoothed`.
    pub scores: Option<PathBuf>,
    /// Adds one `cell_r{r}_c{c}` column per cell to the scores CSV.
    pub cell_scores: bool,
    /// Directory receiving one `<frame:08>.ppm` heatmap per scored frame.
    pub heatmaps: Option<PathBuf>,
    /// Pixels per cell in heatmaps; the encoder cell size when unset.
    pub heatmap_cell_size: Option<(usize, usize)>,
    /// Model snapshot written after the last frame.
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: InputSource,
    /// Continue from a saved model instead of a fresh one; its grid settings win.
    pub restore: Option<PathBuf>,
    pub grid: GridConfig,
    pub outputs: Outputs,
    pub learn: bool,
    /// Leading frames that train the model but produce no output rows.
    pub calibration_frames: usize,
}

impl RunConfig {
    /// Reads the run keys (`input.`, `output.`, `run.`) plus every grid key.
    /// `input.scenario` names a scenario file; relative paths resolve against `base_dir`.
    /// Scenario keys may also appear inline when neither input key is given.
    pub fn from_key_values(kv: &KeyValues, base_dir: &std::path::Path) -> Result<Self> {
        let mut r = Reader::new(kv);
        let mut grid = read_grid(&mut r);
        let path = |s: &str| -> std::result::Result<PathBuf, String> {
            if s.is_empty() {
                Err("empty path".into())
            } else {
                Ok(base_dir.join(s))
            }
        };
        let masks = r.read("input.masks", path);
        let scenario_file = r.read("input.scenario", path);
        let restore = r.read("input.restore", path);
        let inline_scenario = ["scenario", "noise", "object", "event"]
            .iter()
            .any(|p| kv.keys().any(|k| k.starts_with(&format!("{p}."))));

        let input = match (masks, scenario_file) {
            (Some(_), Some(_)) => {
                r.errs
                    .push("set only one of `input.masks` and `input.scenario`".into());
                None
            }
            (Some(dir), None) => Some(InputSource::Masks(dir)),
            (None, Some(file)) => match load_scenario(&file) {
                Ok(s) => Some(InputSource::Scenario(s)),
                Err(e) => {
                    r.errs.push(e.to_string());
                    None
                }
            },
            (None, None) if inline_scenario => {
                let s = read_scenario(&mut r);
                match s.validate() {
                    Ok(()) => Some(InputSource::Scenario(s)),
                    Err(e) => {
                        r.errs.extend(error_lines(e));
                        None
                    }
                }
            }
            (None, None) => {
                r.errs
                    .push("no input: set `input.masks` or `input.scenario`".into());
                None
            }
        };
        if input.as_ref().is_some_and(|i| !matches!(i, InputSource::Scenario(_))) && inline_scenario {
            for p in ["scenario", "noise", "object", "event"] {
                r.mark_used_prefix(p);
            }
            r.errs
                .push("scenario keys given alongside `input.masks`".into());
        }

        let mut outputs = Outputs {
            scores: r.read("output.scores", path),
            heatmaps: r.read("output.heatmaps", path),
            snapshot: r.read("output.snapshot", path),
            ..Outputs::default()
        };
        r.field("output.cell_scores", FieldMut::Bool(&mut outputs.cell_scores));
        outputs.heatmap_cell_size = r.read("output.heatmap_cell_size", parse_pair::<usize>);
        if outputs.heatmap_cell_size.is_some_and(|(h, w)| h == 0 || w == 0) {
            r.errs.push("`output.heatmap_cell_size` must be positive".into());
        }
        let mut learn = true;
        let mut calibration_frames = 0;
        r.field("run.learn", FieldMut::Bool(&mut learn));
        r.field("run.calibration_frames", FieldMut::Usize(&mut calibration_frames));

        // A generated stream fixes the frame geometry unless the encoder says otherwise.
        if let Some(InputSource::Scenario(s)) = &input {
            if !kv.contains("encoder.frame_size") {
                grid.encoder.frame_size = s.frame_size;
            }
            if !kv.contains("encoder.class_count") {
                grid.encoder.class_count = s.class_count;
            }
        }
        if restore.is_none() {
            if let Err(e) = grid.validate() {
                r.errs.extend(error_lines(e));
            }
        }
        if let Some(InputSource::Masks(dir)) = &input {
            if !dir.is_dir() {
                r.errs
                    .push(format!("input directory {} does not exist", dir.display()));
            }
        }
        if let Some(p) = &restore {
            if !p.is_file() {
                r.errs
                    .push(format!("snapshot {} does not exist", p.display()));
            }
        }
        r.finish()?;
        Ok(Self {
            input: input.expect("errors reported above"),
            restore,
            grid,
            outputs,
            learn,
            calibration_frames,
        })
    }

    /// Reads a configuration file, applies `overrides` (`key=value`), and builds the run.
    pub fn load(file: Option<&std::path::Path>, overrides: &[String]) -> Result<Self> {
        let (mut kv, base) = match file {
            Some(f) => {
                let text = std::fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
                let base = f.parent().map(PathBuf::from).unwrap_or_default();
                (KeyValues::parse(&text, &f.display().to_string())?, base)
            }
            None => (KeyValues::new(), PathBuf::new()),
        };
        // Paths given on the command line are relative to the working directory.
        for o in overrides {
            let mut one = KeyValues::new();
            one.set_assignment(o)?;
            for (k, e) in one.entries {
                let value = if PATH_KEYS.contains(&k.as_str()) {
                    absolute(&e.value)
                } else {
                    e.value
                };
                kv.set(&k, &value, &e.origin);
            }
        }
        Self::from_key_values(&kv, &base)
    }
}

const PATH_KEYS: [&str; 6] = [
    "input.masks",
    "input.scenario",
    "input.restore",
    "output.scores",
    "output.heatmaps",
    "output.snapshot",
];

fn absolute(p: &str) -> String {
    let path = std::path::Path::new(p);
    if path.is_absolute() || p.is_empty() {
        return p.to_string();
    }
    std::env::current_dir()
        .map(|d| d.join(path).display().to_string())
        .unwrap_or_else(|_| p.to_string())
}

fn error_lines(e: Error) -> Vec<String> {
    match e {
        Error::Validation(v) => v,
        Error::Config(m) => vec![m],
        other => vec![other.to_string()],
    }
}

/// Reads a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_key_values(&KeyValues::parse(&text, &path.display().to_string())?)
}
