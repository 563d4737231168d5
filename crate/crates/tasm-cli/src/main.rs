//! Command-line front end: ingest, metadata, scan, tuning, calibration,
//! and benchmarking over a store root directory.
//!
//! Videos live at `<root>/<video>/`, the semantic index at
//! `<root>/.index/`. Configuration comes from an optional `key = value`
//! file with flags taking precedence. Errors print a machine-readable
//! `ERR <code>: <message>` line on stderr; exit codes are 0 (success),
//! 2 (usage), 3 (data), 4 (internal invariant violation).

use std::collections::BTreeSet;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use tasm::bench::{run_benchmark, write_report_csv, BenchConfig};
use tasm::cost::{self, CostParams};
use tasm::error::Error;
use tasm::geometry::{uniform_layout, FrameDims, LayoutConfig};
use tasm::query::{LabelPredicate, QuerySpec};
use tasm::roi::{median_background, roi_ingest, BgSubDetector, RoiConfig};
use tasm::store::{LayoutPlan, VideoStore};
use tasm::synth::{scenes, SceneSpec, WorkloadPattern, WorkloadSpec};
use tasm::tuner::{run_strategy, write_event_log, Strategy, TunerConfig};
use tasm::y8::{read_y8, write_y8};
use tasm::SemanticIndex;

#[derive(Parser)]
#[command(name = "tasm", about = "Tiled storage engine for labeled frame sequences")]
struct Cli {
    /// Store root directory (overrides the config file).
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encode a .y8 file into a tiled store.
    Ingest {
        input: PathBuf,
        /// Video name; defaults to the input file stem.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        gop_len: Option<u32>,
        /// `none`, `uniform:RxC`, or `roi`.
        #[arg(long, default_value = "none")]
        layout: String,
    },
    /// Insert one labeled bounding box into the semantic index.
    AddMetadata {
        video: String,
        frame: u32,
        label: String,
        x1: u32,
        y1: u32,
        x2: u32,
        y2: u32,
    },
    /// Subframe selection: write one .y8 file per matching region.
    Scan {
        video: String,
        /// CNF predicate: clauses joined by `&`, labels by `|`.
        #[arg(long)]
        pred: String,
        /// Frame range `a..b` (half-open).
        #[arg(long)]
        frames: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a workload file under a tuning strategy.
    Tune {
        video: String,
        /// `regret`, `more`, or `all`.
        #[arg(long)]
        strategy: String,
        /// CSV with header `pred,start,end`.
        #[arg(long)]
        workload: PathBuf,
        /// Event-log CSV path (default `<video>.events.csv`).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Fit decode cost coefficients from a samples CSV.
    Calibrate {
        /// CSV with header `pixels,tiles,seconds`.
        #[arg(long)]
        samples: PathBuf,
    },
    /// Run a synthetic benchmark and write the report CSV.
    Bench {
        /// Scene preset: `sparse[:FRAMES]` or `dense[:FRAMES]`.
        #[arg(long)]
        scene: String,
        /// Workload pattern `w1`..`w6`.
        #[arg(long)]
        workload: String,
        /// Comma-separated strategies (default: all four).
        #[arg(long)]
        strategies: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reassemble full frames into a .y8 file.
    Stitch {
        video: String,
        /// Frame range `a..b` (half-open); the whole video when absent.
        #[arg(long)]
        frames: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw boxes around labels and write the stitched frames.
    Annotate {
        video: String,
        /// Comma-separated labels.
        #[arg(long)]
        labels: String,
        #[arg(long)]
        frames: Option<String>,
        /// Pixel value for the 1-px box borders.
        #[arg(long, default_value_t = 255)]
        value: u8,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Settings merged from defaults, the config file, then flags.
struct Config {
    root: PathBuf,
    layout: LayoutConfig,
    tuner: TunerConfig,
    params: CostParams,
    gop_len: u32,
}

impl Config {
    fn load(cli: &Cli) -> Result<Self, Error> {
        let mut cfg = Config {
            root: PathBuf::from("store"),
            layout: LayoutConfig::default(),
            tuner: TunerConfig::default(),
            params: CostParams::default(),
            gop_len: 30,
        };
        if let Some(path) = &cli.config {
            for line in fs::read_to_string(path)?.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| Error::Corrupt {
                    what: "config file",
                    detail: format!("bad line `{line}`"),
                })?;
                cfg.set(k.trim(), v.trim())?;
            }
        }
        if let Some(root) = &cli.root {
            cfg.root = root.clone();
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let bad = |detail: String| Error::Corrupt {
            what: "config file",
            detail,
        };
        let parse_u32 = |v: &str| v.parse::<u32>().map_err(|e| bad(e.to_string()));
        let parse_f64 = |v: &str| v.parse::<f64>().map_err(|e| bad(e.to_string()));
        match key {
            "root" => self.root = PathBuf::from(value),
            "align" => self.layout.align = parse_u32(value)?,
            "min_tile_w" => self.layout.min_tile_w = parse_u32(value)?,
            "min_tile_h" => self.layout.min_tile_h = parse_u32(value)?,
            "alpha" => self.tuner.alpha = parse_f64(value)?,
            "eta" => self.tuner.eta = parse_f64(value)?,
            "max_candidate_labels" => {
                self.tuner.max_candidate_labels =
                    value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
            }
            "gop_len" => self.gop_len = parse_u32(value)?,
            "beta" => self.params.beta = parse_f64(value)?,
            "gamma" => self.params.gamma = parse_f64(value)?,
            "enc_beta" => self.params.enc_beta = parse_f64(value)?,
            "enc_fixed" => self.params.enc_fixed = parse_f64(value)?,
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    fn index(&self) -> Result<SemanticIndex, Error> {
        SemanticIndex::open(self.root.join(".index"))
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::PredicateParse { .. } | Error::EmptyInput(_) | Error::InvalidVideoName(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other),
        }
    }
}

fn parse_range(s: &str) -> Result<Range<u32>, CliError> {
    let err = || CliError::Usage(format!("bad frame range `{s}`, expected `a..b`"));
    let (a, b) = s.split_once("..").ok_or_else(err)?;
    let start = a.trim().parse().map_err(|_| err())?;
    let end = b.trim().parse().map_err(|_| err())?;
    if start >= end {
        return Err(err());
    }
    Ok(start..end)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn read_workload_csv(path: &Path, video: &str) -> Result<Vec<QuerySpec>, CliError> {
    let bad = |detail: String| {
        CliError::Data(Error::Corrupt {
            what: "workload csv",
            detail,
        })
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["pred", "start", "end"] {
        return Err(bad("expected header pred,start,end".to_string()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let pred = LabelPredicate::parse(rec.get(0).unwrap_or_default())?;
        let start: u32 = rec
            .get(1)
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| bad("bad start".to_string()))?;
        let end: u32 = rec
            .get(2)
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| bad("bad end".to_string()))?;
        out.push(QuerySpec::new(video, pred, Some(start..end)));
    }
    Ok(out)
}

fn parse_scene(spec: &str) -> Result<SceneSpec, CliError> {
    let mut parts = spec.split(':');
    let preset = parts.next().unwrap_or_default();
    let frames: u32 = match parts.next() {
        Some(n) => n
            .parse()
            .map_err(|_| CliError::Usage(format!("bad scene frame count in `{spec}`")))?,
        None => 1800,
    };
    let dims = FrameDims::new(640, 320);
    match preset {
        "sparse" => Ok(scenes::sparse(dims, frames)),
        "dense" => Ok(scenes::dense(dims, frames)),
        other => Err(CliError::Usage(format!(
            "unknown scene preset `{other}` (sparse|dense)"
        ))),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli)?;
    match &cli.cmd {
        Cmd::Ingest {
            input,
            name,
            gop_len,
            layout,
        } => {
            let frames = read_y8(input)?;
            let name = match name {
                Some(n) => n.clone(),
                None => input
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| CliError::Usage("cannot derive video name".into()))?,
            };
            let gop_len = gop_len.unwrap_or(cfg.gop_len);
            let index = cfg.index()?;
            let store = match layout.as_str() {
                "none" => {
                    let store = VideoStore::ingest(
                        &cfg.root,
                        &name,
                        &frames,
                        gop_len,
                        &LayoutPlan::Untiled,
                        &cfg.layout,
                    )?;
                    store.register_with(&index)?;
                    store
                }
                "roi" => {
                    let stride = gop_len;
                    let samples: Vec<&[u8]> = (0..frames.frame_count())
                        .step_by(stride as usize)
                        .take(5)
                        .map(|f| frames.frame(f))
                        .collect();
                    let roi_cfg = RoiConfig {
                        alpha: cfg.tuner.alpha,
                        ..RoiConfig::default()
                    };
                    let detector = BgSubDetector::new(median_background(&samples), roi_cfg);
                    roi_ingest(
                        &cfg.root,
                        &name,
                        &frames,
                        gop_len,
                        &detector,
                        &roi_cfg,
                        &cfg.layout,
                        &index,
                    )?
                }
                uniform => {
                    let grid = uniform
                        .strip_prefix("uniform:")
                        .ok_or_else(|| {
                            CliError::Usage(format!(
                                "unknown layout `{uniform}` (none|uniform:RxC|roi)"
                            ))
                        })?;
                    let (r, c) = grid.split_once('x').ok_or_else(|| {
                        CliError::Usage(format!("bad uniform grid `{grid}`, expected RxC"))
                    })?;
                    let rows: u32 = r
                        .parse()
                        .map_err(|_| CliError::Usage(format!("bad rows `{r}`")))?;
                    let cols: u32 = c
                        .parse()
                        .map_err(|_| CliError::Usage(format!("bad cols `{c}`")))?;
                    let l = uniform_layout(rows, cols, frames.dims, &cfg.layout)?;
                    let store = VideoStore::ingest(
                        &cfg.root,
                        &name,
                        &frames,
                        gop_len,
                        &LayoutPlan::Fixed(l),
                        &cfg.layout,
                    )?;
                    store.register_with(&index)?;
                    store
                }
            };
            println!(
                "ingested {} ({} frames, {} SOTs) into {}",
                name,
                store.frame_count(),
                store.sot_count(),
                cfg.root.display()
            );
        }
        Cmd::AddMetadata {
            video,
            frame,
            label,
            x1,
            y1,
            x2,
            y2,
        } => {
            let index = cfg.index()?;
            index.add_metadata(video, *frame, label, *x1, *y1, *x2, *y2)?;
        }
        Cmd::Scan {
            video,
            pred,
            frames,
            out,
        } => {
            let index = cfg.index()?;
            let store = VideoStore::open(&cfg.root, video)?;
            let pred = LabelPredicate::parse(pred)?;
            let range = frames.as_deref().map(parse_range).transpose()?;
            let regions = store.scan(&index, &pred, range)?;
            fs::create_dir_all(out).map_err(Error::from)?;
            for (i, r) in regions.iter().enumerate() {
                let path = out.join(format!(
                    "region_{i:05}_f{}_{}_{}x{}.y8",
                    r.frame,
                    sanitize(&r.label),
                    r.x,
                    r.y
                ));
                let seq = tasm::FrameSeq::from_data(FrameDims::new(r.w, r.h), r.pixels.clone())?;
                write_y8(&path, &seq)?;
            }
            println!("{} regions", regions.len());
        }
        Cmd::Tune {
            video,
            strategy,
            workload,
            log,
        } => {
            let strategy = Strategy::from_str(strategy)
                .map_err(|_| CliError::Usage(format!("unknown strategy `{strategy}`")))?;
            let index = cfg.index()?;
            let store = VideoStore::open(&cfg.root, video)?;
            let queries = read_workload_csv(workload, video)?;
            let (runs, actions) = run_strategy(
                strategy,
                &store,
                &index,
                &queries,
                &cfg.tuner,
                &cfg.layout,
                &cfg.params,
            )?;
            let log = log
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("{video}.events.csv")));
            write_event_log(&log, &actions)?;
            let decode: f64 = runs.iter().map(|r| r.measured_s).sum();
            let retile: f64 = runs.iter().map(|r| r.retile_s).sum();
            println!(
                "{} queries, {} retiles, decode {:.4}s, retile {:.4}s, events in {}",
                runs.len(),
                actions.len(),
                decode,
                retile,
                log.display()
            );
        }
        Cmd::Calibrate { samples } => {
            let samples = cost::read_calibration_csv(samples)?;
            let fit = cost::calibrate(&samples)?;
            if fit.clamped {
                eprintln!("warning: negative coefficient clamped to 0");
            }
            println!("beta = {:.6e}", fit.beta);
            println!("gamma = {:.6e}", fit.gamma);
            println!("R2 = {:.6}", fit.r_squared);
        }
        Cmd::Bench {
            scene,
            workload,
            strategies,
            seed,
            repeats,
            out,
        } => {
            let scene = parse_scene(scene)?;
            let pattern = WorkloadPattern::from_str(workload)
                .map_err(|_| CliError::Usage(format!("unknown workload `{workload}`")))?;
            // Primary labels in scene order, deduplicated.
            let labels: Vec<String> = {
                let mut seen = BTreeSet::new();
                scene
                    .objects
                    .iter()
                    .map(|o| o.label.clone())
                    .filter(|l| seen.insert(l.clone()))
                    .collect()
            };
            let wl = WorkloadSpec::analog(pattern, "bench", scene.length, cfg.gop_len, &labels)?;
            let strategies: Vec<Strategy> = match strategies {
                None => Strategy::ALL.to_vec(),
                Some(s) => s
                    .split(',')
                    .map(|p| {
                        Strategy::from_str(p.trim()).map_err(|_| {
                            CliError::Usage(format!("unknown strategy `{}`", p.trim()))
                        })
                    })
                    .collect::<Result<_, _>>()?,
            };
            let bench_cfg = BenchConfig {
                repeats: *repeats,
                gop_len: cfg.gop_len,
                tuner: cfg.tuner.clone(),
                layout: cfg.layout,
                params: None,
                ..BenchConfig::default()
            };
            let work = cfg.root.join(".bench").join(format!("{workload}_{seed}"));
            if work.exists() {
                fs::remove_dir_all(&work).map_err(Error::from)?;
            }
            let report = run_benchmark(&scene, &wl, &strategies, &bench_cfg, *seed, &work)?;
            write_report_csv(&report, out)?;
            for s in &strategies {
                if let Some(c) = report.cum_norm_at(*s, 0) {
                    println!("{s}: cumulative normalized cost {c:.3}");
                }
            }
            println!("report written to {}", out.display());
        }
        Cmd::Stitch { video, frames, out } => {
            let store = VideoStore::open(&cfg.root, video)?;
            let range = frames.as_deref().map(parse_range).transpose()?;
            let seq = store.stitch(range)?;
            write_y8(out, &seq)?;
            println!("{} frames written to {}", seq.frame_count(), out.display());
        }
        Cmd::Annotate {
            video,
            labels,
            frames,
            value,
            out,
        } => {
            let index = cfg.index()?;
            let store = VideoStore::open(&cfg.root, video)?;
            let labels: BTreeSet<String> = labels
                .split(',')
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            let range = frames.as_deref().map(parse_range).transpose()?;
            let tmp = std::env::temp_dir().join(format!("tasm-annotate-{}", std::process::id()));
            if tmp.exists() {
                fs::remove_dir_all(&tmp).map_err(Error::from)?;
            }
            let result = store.annotate_and_stitch(&index, &labels, range, *value, &tmp);
            let cleanup = fs::remove_dir_all(&tmp);
            let (seq, stats) = result?;
            cleanup.map_err(Error::from)?;
            write_y8(out, &seq)?;
            println!(
                "{} frames written to {} ({} tiles re-encoded, {} reused)",
                seq.frame_count(),
                out.display(),
                stats.reencoded.len(),
                stats.reused.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            eprintln!("ERR 2: invalid usage");
            return ExitCode::from(2);
        }
    };
    let outcome = std::panic::catch_unwind(|| run(&cli));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(CliError::Usage(msg))) => {
            eprintln!("ERR 2: {msg}");
            ExitCode::from(2)
        }
        Ok(Err(CliError::Data(e))) => {
            eprintln!("ERR 3: {e}");
            ExitCode::from(3)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            eprintln!("ERR 4: internal invariant violation: {msg}");
            ExitCode::from(4)
        }
    }
}
