//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path as FsPath;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gridhtm::runner;
use gridhtm::{
    aggregate_mean, aggregate_nonzero_mean, generate, EncoderConfig, Event, Frame, FrameResult,
    GridConfig, GridModel, InputSource, Mask, NoiseSpec, ObjectTrack, Outputs, Path, RunConfig,
    Scenario,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FRAME: (usize, usize) = (36, 96);
const PERIOD: usize = 16;
const WARMUP: usize = PERIOD * 50 + 3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(n: usize) -> GridConfig {
    GridConfig {
        encoder: EncoderConfig {
            frame_size: FRAME,
            ..EncoderConfig::default()
        },
        multistep_n: n,
        ..GridConfig::default()
    }
}

/// A 6x6 blob crossing the middle row of cells, wrapping every 16 frames.
fn lane(frame_count: usize, noise: NoiseSpec, events: Vec<Event>) -> Scenario {
    Scenario {
        frame_size: FRAME,
        frame_count,
        objects: vec![ObjectTrack {
            shape: (6, 6),
            path: Path::LinearLoop {
                start: (15, 0),
                velocity: (0, 6),
            },
            class_index: 0,
        }],
        events,
        noise,
        seed: 1,
        ..Scenario::default()
    }
}

fn flips(p: f64) -> NoiseSpec {
    NoiseSpec {
        pixel_flip_probability: p,
        object_dropout_probability: 0.0,
    }
}

fn run(model: &mut GridModel, frames: &[Frame]) -> Vec<FrameResult> {
    frames.iter().map(|f| model.step(f, true).unwrap()).collect()
}

fn run_fresh(n: usize, frames: &[Frame]) -> Vec<FrameResult> {
    run(&mut GridModel::new(config(n)).unwrap(), frames)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 0 {
        (xs[m - 1] + xs[m]) / 2.0
    } else {
        xs[m]
    }
}

fn aggregation_rules() -> Outcome {
    let s = [0.0, 0.0, 0.5, 1.0];
    let mut ok = aggregate_mean(&s).unwrap() == 0.375
        && aggregate_nonzero_mean(&s).unwrap() == 0.75
        && aggregate_nonzero_mean(&[0.0; 7]).unwrap() == 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..40);
        let mut xs: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random_bool(0.4) {
                    0.0
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let nz = aggregate_nonzero_mean(&xs).unwrap();
        if nz < aggregate_mean(&xs).unwrap() {
            violations += 1;
        }
        xs.extend(std::iter::repeat_n(0.0, rng.random_range(1..20)));
        if aggregate_nonzero_mean(&xs).unwrap() != nz {
            violations += 1;
        }
    }
    ok &= violations == 0;
    outcome(ok, format!("{violations} property violations over 1000 sets"))
}

fn noisy_vs_clean() -> Outcome {
    let frames = 90 * PERIOD;
    let stats = |p: f64| {
        let results = run_fresh(2, &generate(&lane(frames, flips(p), vec![])).unwrap());
        let tail = &results[frames / 2..];
        let series = |f: fn(&[f64]) -> gridhtm::Result<f64>| {
            median(tail.iter().map(|r| f(&r.reported_scores).unwrap()).collect())
        };
        (series(aggregate_nonzero_mean), series(aggregate_mean))
    };
    let (nz_clean, mean_clean) = stats(0.0);
    let (nz_noisy, mean_noisy) = stats(0.02);
    let nz_shift = nz_noisy - nz_clean;
    let mean_shift = (mean_noisy - mean_clean).abs();
    let ratio = nz_shift / mean_shift;
    outcome(
        nz_shift > 0.0 && ratio > 2.0,
        format!(
            "nonzero-mean median {nz_clean:.4} -> {nz_noisy:.4}, mean median {mean_clean:.4} -> {mean_noisy:.4}, shift ratio {ratio:.2}"
        ),
    )
}

fn convergence() -> Outcome {
    let results = run_fresh(2, &generate(&lane(50 * PERIOD, flips(0.0), vec![])).unwrap());
    let cycle_mean = |rs: &[FrameResult]| {
        let all: Vec<f64> = rs.iter().flat_map(|r| r.raw_scores.iter().copied()).collect();
        all.iter().sum::<f64>() / all.len() as f64
    };
    let first_frame_full = results[0].raw_scores.iter().all(|&s| s == 1.0);
    let first = cycle_mean(&results[..PERIOD]);
    let last = cycle_mean(&results[results.len() - PERIOD..]);
    outcome(
        first_frame_full && last < 0.1,
        format!(
            "frame 0 all cells 1.0: {first_frame_full}; first-cycle mean {first:.4}, final-cycle mean {last:.4}"
        ),
    )
}

/// Largest reported score in `window`, over cells the object occupies in
/// either stream during that window.
fn object_window_max(
    a: &[FrameResult],
    b: &[FrameResult],
    fa: &[Frame],
    fb: &[Frame],
    window: std::ops::Range<usize>,
) -> (f64, f64) {
    let (rows, cols) = a[0].grid_size;
    let mut occupied = vec![false; rows * cols];
    for t in window.clone() {
        for frame in [&fa[t], &fb[t]] {
            for r in 0..rows {
                for c in 0..cols {
                    if (r * 12..(r + 1) * 12)
                        .any(|y| (c * 12..(c + 1) * 12).any(|x| frame[0].get(y, x)))
                    {
                        occupied[r * cols + c] = true;
                    }
                }
            }
        }
    }
    let max = |rs: &[FrameResult]| {
        window
            .clone()
            .flat_map(|t| {
                (0..rows * cols)
                    .filter(|&i| occupied[i])
                    .map(move |i| rs[t].reported_scores[i])
            })
            .fold(0.0, f64::max)
    };
    (max(a), max(b))
}

fn frame_repeat() -> Outcome {
    let count = WARMUP + 40;
    let repeat = vec![Event::FrameRepeat {
        start_frame: WARMUP,
        duration: 20,
    }];
    let frozen = generate(&lane(count, flips(0.0), repeat)).unwrap();
    let control = generate(&lane(count, flips(0.0), vec![])).unwrap();
    let margin = |n: usize| {
        let (f, c) = object_window_max(
            &run_fresh(n, &frozen),
            &run_fresh(n, &control),
            &frozen,
            &control,
            WARMUP..WARMUP + 20,
        );
        (f, c, f - c)
    };
    let (f2, c2, m2) = margin(2);
    let (f1, c1, m1) = margin(1);
    outcome(
        m2 >= 0.3,
        format!(
            "n=2 repeat max {f2:.4} vs control {c2:.4} (margin {m2:.4}); n=1 repeat max {f1:.4} vs control {c1:.4} (margin {m1:.4})"
        ),
    )
}

fn frame_skip() -> Outcome {
    let skip = vec![Event::FrameSkip {
        at_frame: WARMUP,
        skipped_count: 100,
    }];
    let frames = generate(&lane(WARMUP + 140, flips(0.0), skip)).unwrap();
    let results = run_fresh(2, &frames);
    let at_skip = results[WARMUP].aggregate;
    let mut before: Vec<f64> = results[WARMUP - 200..WARMUP]
        .iter()
        .map(|r| r.aggregate)
        .collect();
    before.sort_by(f64::total_cmp);
    let p95 = before[(0.95 * 200.0_f64).ceil() as usize - 1];
    outcome(
        at_skip > 0.0 && at_skip >= 2.0 * p95,
        format!("aggregate on the skip frame {at_skip:.4}, p95 of the preceding 200 frames {p95:.4}"),
    )
}

fn transition_suppression() -> Outcome {
    let noise = NoiseSpec {
        pixel_flip_probability: 0.01,
        object_dropout_probability: 0.05,
    };
    let frames = generate(&lane(400, noise, vec![])).unwrap();
    let mut on = config(2);
    on.suppression_enabled = true;
    let mut off = on.clone();
    off.suppression_enabled = false;
    let a = run(&mut GridModel::new(on).unwrap(), &frames);
    let b = run(&mut GridModel::new(off).unwrap(), &frames);
    let mut arrivals = 0;
    let mut nonzero_when_on = 0;
    let mut raw_positive_when_off = 0;
    for (ra, rb) in a.iter().zip(&b) {
        for i in 0..ra.entered.len() {
            if ra.entered[i] {
                arrivals += 1;
                if ra.reported_scores[i] != 0.0 {
                    nonzero_when_on += 1;
                }
                if rb.entered[i] && rb.raw_scores[i] > 0.0 {
                    raw_positive_when_off += 1;
                }
            }
        }
    }
    outcome(
        arrivals > 0 && nonzero_when_on == 0 && raw_positive_when_off > 0,
        format!(
            "{arrivals} arrivals, {nonzero_when_on} unsuppressed, {raw_positive_when_off} with raw > 0 when disabled"
        ),
    )
}

fn variance_reduction() -> Outcome {
    let car = |shape, start, speed| ObjectTrack {
        shape,
        path: Path::LinearLoop {
            start,
            velocity: (0, speed),
        },
        class_index: 0,
    };
    let traffic = Scenario {
        frame_size: FRAME,
        frame_count: 400,
        objects: vec![
            car((6, 10), (14, 0), 3),
            car((5, 8), (15, 40), 5),
            car((7, 12), (13, 70), 2),
        ],
        noise: flips(0.005),
        seed: 3,
        ..Scenario::default()
    };
    let frames = generate(&traffic).unwrap();
    let cell = (1, 4);
    let enabled = EncoderConfig {
        frame_size: FRAME,
        ..EncoderConfig::default()
    };
    let disabled = EncoderConfig {
        min_sparsity: 0,
        empty_pattern_sparsity: 0,
        ..enabled.clone()
    };
    let (m_on, sd_on) = gridhtm::active_pixel_stats(&enabled, &frames, cell).unwrap();
    let (m_off, sd_off) = gridhtm::active_pixel_stats(&disabled, &frames, cell).unwrap();
    outcome(
        sd_on < sd_off,
        format!(
            "cell {cell:?}: enabled mean {m_on:.2} std {sd_on:.3}, disabled mean {m_off:.2} std {sd_off:.3}"
        ),
    )
}

fn dir_files(dir: &FsPath) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = lane(300, flips(0.02), vec![]);
    let end_to_end = |tag: &str| {
        let d = tmp.path().join(tag);
        let cfg = RunConfig {
            input: InputSource::Scenario(scenario.clone()),
            restore: None,
            grid: config(2),
            outputs: Outputs {
                scores: Some(d.join("scores.csv")),
                cell_scores: true,
                heatmaps: Some(d.join("heat")),
                heatmap_cell_size: None,
                snapshot: None,
            },
            learn: true,
            calibration_frames: 50,
        };
        runner::run(&cfg).unwrap();
        (fs::read(d.join("scores.csv")).unwrap(), dir_files(&d.join("heat")))
    };
    let (csv_a, ppm_a) = end_to_end("a");
    let (csv_b, ppm_b) = end_to_end("b");
    let files_equal = csv_a == csv_b && ppm_a == ppm_b && ppm_a.len() == 250;

    let frames = generate(&scenario).unwrap();
    let mut par = GridModel::new(config(2)).unwrap();
    let mut seq = par.clone();
    par.set_parallel(true);
    seq.set_parallel(false);
    let same_results = run(&mut par, &frames) == run(&mut seq, &frames);
    let same_state = par.snapshot() == seq.snapshot();
    outcome(
        files_equal && same_results && same_state,
        format!(
            "CSV and {} heatmaps identical: {files_equal}; parallel == sequential results: {same_results}, state: {same_state}",
            ppm_a.len()
        ),
    )
}

fn locality() -> Outcome {
    let target = (1, 3);
    let clean = generate(&lane(300, flips(0.0), vec![])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut perturbed = clean.clone();
    for f in &mut perturbed {
        for r in target.0 * 12..(target.0 + 1) * 12 {
            for c in target.1 * 12..(target.1 + 1) * 12 {
                if rng.random_bool(0.1) {
                    f[0].flip(r, c);
                }
            }
        }
    }
    let a = run_fresh(2, &clean);
    let b = run_fresh(2, &perturbed);
    let t = a[0].index_of(target);
    let mut differing_others = 0;
    let mut target_differs = false;
    for (ra, rb) in a.iter().zip(&b) {
        for i in 0..ra.raw_scores.len() {
            if i == t {
                target_differs |= ra.raw_scores[i] != rb.raw_scores[i];
            } else if ra.raw_scores[i] != rb.raw_scores[i] {
                differing_others += 1;
            }
        }
    }
    outcome(
        differing_others == 0 && target_differs,
        format!("{differing_others} differing scores outside cell {target:?}; cell itself differs: {target_differs}"),
    )
}

fn snapshot_round_trip() -> Outcome {
    let frames = generate(&lane(500, flips(0.02), vec![])).unwrap();
    let mut model = GridModel::new(config(2)).unwrap();
    run(&mut model, &frames[..400]);
    let snap = model.snapshot();
    let mut restored = GridModel::restore(&snap).unwrap();
    let expected = run(&mut model, &frames[400..]);
    let got = run(&mut restored, &frames[400..]);
    let first_diff = expected.iter().zip(&got).position(|(a, b)| a != b);
    outcome(
        got.len() == 100 && first_diff.is_none(),
        format!("{} byte snapshot at frame 400; first differing frame after restore: {first_diff:?}", snap.len()),
    )
}

fn dilution() -> Outcome {
    let frames = generate(&lane(PERIOD * 15, flips(0.0), vec![])).unwrap();
    let blank: Frame = vec![Mask::new(FRAME.0, FRAME.1)];
    let mut worst = Vec::new();
    let mut ok = true;
    for n in 1..=3 {
        let mut model = GridModel::new(config(n)).unwrap();
        run(&mut model, &frames[..PERIOD * 12]);
        let mut worst_fraction: f64 = 0.0;
        for f in &frames[PERIOD * 12..] {
            let mut dropped = model.clone();
            dropped.step(&blank, true).unwrap();
            model.step(f, true).unwrap();
            for (clean, drop) in model.cells().iter().zip(dropped.cells()) {
                let (a, b) = (clean.tm_input(), drop.tm_input());
                let lost = a.active().iter().filter(|i| !b.contains(**i)).count();
                ok &= lost * n <= a.count();
                worst_fraction = worst_fraction.max(lost as f64 / a.count() as f64);
            }
        }
        worst.push(format!("n={n} worst {worst_fraction:.3}"));
    }
    outcome(ok, format!("changed fraction of TM input bits: {}", worst.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 11] = [
        ("aggregation rules", 1, aggregation_rules),
        ("noisy vs clean aggregation contrast", 60, noisy_vs_clean),
        ("sequence learning convergence", 120, convergence),
        ("frame-repeat detection", 180, frame_repeat),
        ("frame-skip detection", 120, frame_skip),
        ("transition suppression", 60, transition_suppression),
        ("active-pixel variance reduction", 60, variance_reduction),
        ("determinism and parallel equivalence", 120, determinism),
        ("locality", 60, locality),
        ("snapshot round-trip", 60, snapshot_round_trip),
        ("temporal-noise dilution", 30, dilution),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(limit);
        let (pass, detail) = match result {
            Ok(o) => (o.pass && in_time, o.detail),
            Err(_) => (false, "panicked".to_string()),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name} [{:.2}s, limit {limit}s]: {detail}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
        );
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
