use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gridhtm::config::load_scenario;
use gridhtm::runner::{generate_to_dir, load_frames, pixel_stats, run};
use gridhtm::{KeyValues, RunConfig, Scenario, SnapshotInfo};

/// Grid HTM anomaly detection over binary segmentation-mask streams.
#[derive(Parser)]
#[command(name = "gridhtm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream masks through the grid and write scores, heatmaps and a snapshot.
    Run(RunArgs),
    /// Render a synthetic scenario to `<out>/<class>/<frame:08>.pbm`.
    Generate(GenerateArgs),
    /// Describe a saved model snapshot.
    SnapshotInfo {
        snapshot: PathBuf,
    },
    /// Report per-cell active-bit mean and standard deviation over an input.
    Stats(StatsArgs),
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory of `<class>/<frame:08>.pbm` masks (input.masks).
    #[arg(long, conflicts_with = "scenario")]
    masks: Option<PathBuf>,
    /// Scenario file to generate frames from (input.scenario).
    #[arg(long)]
    scenario: Option<PathBuf>,
}

impl Common {
    /// `--set` values first, then the dedicated flags, so flags win.
    fn overrides(&self, extra: Vec<String>) -> Vec<String> {
        let mut o = self.set.clone();
        if let Some(p) = &self.masks {
            o.push(format!("input.masks={}", p.display()));
        }
        if let Some(p) = &self.scenario {
            o.push(format!("input.scenario={}", p.display()));
        }
        o.extend(extra);
        o
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Scores CSV (output.scores).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Add per-cell columns to the scores CSV (output.cell_scores).
    #[arg(long)]
    cell_scores: bool,
    /// Heatmap directory (output.heatmaps).
    #[arg(long)]
    heatmaps: Option<PathBuf>,
    /// Snapshot written after the last frame (output.snapshot).
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Continue from a saved snapshot (input.restore).
    #[arg(long)]
    restore: Option<PathBuf>,
    /// Frames that only train the model (run.calibration_frames).
    #[arg(long)]
    calibration_frames: Option<usize>,
    /// Freeze learning (run.learn = false).
    #[arg(long)]
    no_learn: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override a scenario key; may be repeated.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    common: Common,
    /// Only this cell, as `row,col`.
    #[arg(long, value_parser = parse_cell)]
    cell: Option<(usize, usize)>,
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected row,col")?;
    let n = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x}: {e}"));
    Ok((n(r)?, n(c)?))
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut extra = Vec::new();
    let mut flag = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            extra.push(format!("{k}={v}"));
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    flag("output.scores", path(&a.scores));
    flag("output.heatmaps", path(&a.heatmaps));
    flag("output.snapshot", path(&a.snapshot));
    flag("input.restore", path(&a.restore));
    flag("run.calibration_frames", a.calibration_frames.map(|n| n.to_string()));
    flag("output.cell_scores", a.cell_scores.then(|| "true".into()));
    flag("run.learn", a.no_learn.then(|| "false".into()));
    let config = RunConfig::load(a.common.config.as_deref(), &a.common.overrides(extra))?;
    let summary = run(&config)?;
    println!(
        "processed {} frames, wrote {} score rows",
        summary.frames_processed, summary.rows_written
    );
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let scenario = match (&a.scenario, a.set.is_empty()) {
        (Some(p), true) => load_scenario(p)?,
        (file, _) => {
            let mut kv = match file {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    KeyValues::parse(&text, &p.display().to_string())?
                }
                None => KeyValues::new(),
            };
            for s in &a.set {
                kv.set_assignment(s)?;
            }
            Scenario::from_key_values(&kv)?
        }
    };
    let n = generate_to_dir(&scenario, &a.out)?;
    println!(
        "wrote {n} frames x {} classes to {}",
        scenario.class_count,
        a.out.display()
    );
    Ok(())
}

fn cmd_snapshot_info(path: PathBuf) -> Result<()> {
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let i = SnapshotInfo::from_bytes(&bytes)?;
    println!("format version     {}", i.format_version);
    println!("size               {} bytes", i.byte_len);
    println!("frames processed   {}", i.frames_processed);
    println!("grid               {} x {} cells", i.grid_size.0, i.grid_size.1);
    println!("cell size          {} x {} px", i.cell_size.0, i.cell_size.1);
    println!("classes            {}", i.class_count);
    println!("multistep n        {}", i.multistep_n);
    println!("suppression        {}", i.suppression_enabled);
    println!("aggregation        {}", i.aggregation);
    println!("smoothing window   {}", i.smoothing_window);
    println!("cell overrides     {}", i.override_count);
    println!("segments           {}", i.segment_count);
    println!("synapses           {}", i.synapse_count);
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let config = RunConfig::load(a.common.config.as_deref(), &a.common.overrides(Vec::new()))?;
    let enc = &config.grid.encoder;
    if let Some((r, c)) = a.cell {
        let (rows, cols) = enc.grid_size();
        if r >= rows || c >= cols {
            bail!("cell {r},{c} is outside the {rows}x{cols} grid");
        }
    }
    let frames = load_frames(&config.input, enc)?;
    if frames.is_empty() {
        bail!("input holds no frames");
    }
    println!("row,col,mean,std_dev");
    for s in pixel_stats(enc, &frames, a.cell)? {
        println!("{},{},{:.4},{:.4}", s.cell.0, s.cell.1, s.mean, s.std_dev);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Generate(a) => cmd_generate(a),
        Command::SnapshotInfo { snapshot } => cmd_snapshot_info(snapshot),
        Command::Stats(a) => cmd_stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
