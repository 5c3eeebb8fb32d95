//! `voe`: generate datasets, score them with a built-in agent, evaluate score
//! files and dump frames for inspection.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use voe_core::generator::{generate_test_set, generate_train_set, GenConfig};
use voe_core::metrics::build_report;
use voe_core::reasoner::Agent;
use voe_core::storage::{self, DepthBits, ScoreRecord, WriteOptions};
use voe_core::world::{DEFAULT_FRAMES, DEFAULT_RESOLUTION, MAX_OBJECTS};
use voe_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "voe", version, about = "Violation-of-expectation benchmark toolkit")]
struct Cli {
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the paired test set.
    GenTest(GenTest),
    /// Generate the wall/no-wall training set.
    GenTrain(GenTrain),
    /// Score every video of a dataset with a built-in agent.
    Score(Score),
    /// Compute metrics from a score file.
    Eval(Eval),
    /// Write RGB | depth | mask composites of one video.
    Dump(Dump),
}

#[derive(Args)]
struct Output {
    /// Replace the output if it already exists.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Render {
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: u32,
    #[arg(long, default_value_t = DEFAULT_FRAMES)]
    frames: usize,
    /// Store depth as 8-bit instead of 16-bit.
    #[arg(long)]
    depth8: bool,
}

#[derive(Args)]
struct GenTest {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Pairs per test group.
    #[arg(long)]
    pairs: usize,
    #[command(flatten)]
    render: Render,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GenTrain {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Scenes per training group.
    #[arg(long)]
    count: usize,
    #[command(flatten)]
    render: Render,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Score {
    #[arg(long)]
    dataset: PathBuf,
    /// explainer or predictive
    #[arg(long, value_parser = parse_agent)]
    agent: Agent,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    /// Machine-readable JSON report.
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Dump {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    video: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    output: Output,
}

fn parse_agent(s: &str) -> Result<Agent, String> {
    Agent::parse(s).ok_or_else(|| {
        let names: Vec<_> = Agent::ALL.iter().map(|a| a.name()).collect();
        format!("unknown agent {s:?}; expected one of {}", names.join(", "))
    })
}

/// Failures before any side effect map to the usage exit code.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: could not start worker pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let result = match cli.command {
        Command::GenTest(a) => gen_test(a),
        Command::GenTrain(a) => gen_train(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Dump(a) => dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

/// Refuses to overwrite unless forced, and clears a forced directory.
fn claim_dir(path: &Path, force: bool) -> Outcome {
    let occupied = path.exists() && (!path.is_dir() || fs::read_dir(path).map_err(|e| io(path, e))?.next().is_some());
    if occupied && !force {
        return Err(Failure::Usage(format!("{} already exists; pass --force to replace it", path.display())));
    }
    if occupied {
        if path.is_dir() {
            fs::remove_dir_all(path).map_err(|e| io(path, e))?;
        } else {
            fs::remove_file(path).map_err(|e| io(path, e))?;
        }
    }
    fs::create_dir_all(path).map_err(|e| io(path, e))?;
    Ok(())
}

fn check_file(path: &Path, force: bool) -> Outcome {
    if path.is_dir() {
        return Err(Failure::Usage(format!("{} is a directory", path.display())));
    }
    if path.exists() && !force {
        return Err(Failure::Usage(format!("{} already exists; pass --force to replace it", path.display())));
    }
    Ok(())
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(Error::Io { path: path.to_path_buf(), source: e })
}

fn config(seed: u64, pairs: usize, train: usize, r: &Render) -> Result<GenConfig, Failure> {
    let c = GenConfig {
        master_seed: seed,
        pairs_per_group: pairs,
        train_scenes_per_group: train,
        resolution: r.resolution,
        frames: r.frames,
    };
    c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(c)
}

fn write_options(r: &Render) -> WriteOptions {
    WriteOptions { depth_bits: if r.depth8 { DepthBits::Eight } else { DepthBits::Sixteen } }
}

fn gen_test(a: GenTest) -> Outcome {
    let c = config(a.seed, a.pairs, 1, &a.render)?;
    claim_dir(&a.out, a.output.force)?;
    let ds = generate_test_set(&c)?;
    let m = storage::write_dataset(&ds, &a.out, write_options(&a.render))?;
    println!("wrote {} videos to {}", m.videos.len(), a.out.display());
    Ok(())
}

fn gen_train(a: GenTrain) -> Outcome {
    let c = config(a.seed, 1, a.count, &a.render)?;
    claim_dir(&a.out, a.output.force)?;
    let ds = generate_train_set(&c)?;
    let m = storage::write_dataset(&ds, &a.out, write_options(&a.render))?;
    println!("wrote {} videos to {}", m.videos.len(), a.out.display());
    Ok(())
}

fn score(a: Score) -> Outcome {
    check_file(&a.out, a.output.force)?;
    let manifest = storage::read_manifest(&a.dataset)?;
    let records: Vec<ScoreRecord> = manifest
        .videos
        .par_iter()
        .map(|v| {
            let obs = storage::read_video_files(&a.dataset.join(&v.video_id))?;
            let s = a.agent.score(&obs);
            Ok(ScoreRecord {
                video_id: v.video_id.clone(),
                s: s.s,
                s_img: Some(s.s_img),
                s_dyn: Some(s.s_dyn),
                agent: a.agent.name().to_string(),
            })
        })
        .collect::<Result<_, Error>>()?;
    storage::write_scores(&a.out, &records)?;
    println!("scored {} videos with {}", records.len(), a.agent.name());
    Ok(())
}

fn eval(a: Eval) -> Outcome {
    check_file(&a.report, a.output.force)?;
    let scored = storage::ingest_scores(&a.scores, &a.dataset)?;
    let report = build_report(&scored)?;
    let mut json = serde_json::to_string_pretty(&report).expect("reports serialize");
    json.push('\n');
    fs::write(&a.report, json).map_err(|e| io(&a.report, e))?;
    print!("{report}");
    Ok(())
}

/// Distinct colours for mask ids; background black.
fn id_color(id: u8) -> [u8; 3] {
    const COLORS: [[u8; 3]; MAX_OBJECTS + 2] = [
        [0, 0, 0],
        [90, 90, 90],
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
    ];
    COLORS.get(id as usize).copied().unwrap_or([255, 255, 255])
}

fn dump(a: Dump) -> Outcome {
    let manifest = storage::read_manifest(&a.dataset)?;
    if manifest.find(&a.video).is_none() {
        return Err(Failure::Runtime(Error::UnknownVideo(a.video)));
    }
    claim_dir(&a.out, a.output.force)?;
    let obs = storage::read_video(&a.dataset, &a.video)?;
    let cam = obs.camera;
    let (w, h) = (cam.width as usize, cam.height as usize);
    for (f, (frame, mask)) in obs.frames.iter().zip(&obs.masks).enumerate() {
        let mut img = vec![0u8; 3 * 3 * w * h];
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                let near = 1.0 - (frame.depth[i] as f64 - cam.near) / (cam.far - cam.near);
                let g = (255.0 * near.clamp(0.0, 1.0)).round() as u8;
                let px = [[frame.rgb[3 * i], frame.rgb[3 * i + 1], frame.rgb[3 * i + 2]], [g; 3], id_color(mask.ids[i])];
                for (k, p) in px.iter().enumerate() {
                    let o = 3 * (row * 3 * w + k * w + col);
                    img[o..o + 3].copy_from_slice(p);
                }
            }
        }
        let bytes = storage::encode_rgb_png(3 * w as u32, h as u32, &img)?;
        let path = a.out.join(format!("frame_{f:03}.png"));
        fs::write(&path, bytes).map_err(|e| io(&path, e))?;
    }
    println!("wrote {} composites to {}", obs.frames.len(), a.out.display());
    Ok(())
}
