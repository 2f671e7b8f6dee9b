//! Command-line entry point. Exit codes: 0 success, 1 usage error, 2 data
//! error.

use std::ffi::OsString;
use std::io::{BufRead, BufReader, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::curation::{
    filter_percentile, score_dataset, BaselineFeaturizer, ClusterParams, CurationReport, EmbeddingSource,
    ImageEmbeddings, PrecomputedEmbeddings, REPORT_FILE,
};
use crate::dataset::{Manifest, ManifestEntry, MANIFEST_FILE};
use crate::model::{integrate_clamped, HandFrame, JointVector, RigConfig, JOINT_COUNT};
use crate::retarget::RetargetSession;
use crate::sampler::{sample_dataset, write_samples, Modalities, SampleSpec, SAMPLES_FILE};
use crate::sim::http::StaticFiles;
use crate::sim::{
    decode_message, serve_stream, simulate, Profile, ServerConfig, SimulateConfig, StreamMessage, DEFAULT_PORT,
};

pub const RIG_ENV: &str = "DEXKIT_RIG";

#[derive(Debug, Parser)]
#[command(
    name = "dexkit",
    version,
    about = "Dexterous teleoperation data pipeline: retargeting, recording, curation and sampling"
)]
pub struct Cli {
    /// Rig configuration JSON; defaults to the built-in Allegro rig.
    #[arg(long, global = true, env = RIG_ENV, value_name = "FILE")]
    pub rig: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulation loop and stream server.
    Serve(ServeArgs),
    /// Run a seeded headless session into a dataset directory.
    Simulate(SimulateArgs),
    /// Retarget a recorded hand stream into joint targets.
    Retarget(RetargetArgs),
    /// Score every demonstration and write curation_report.json.
    Curate(CurateArgs),
    /// Write a manifest retaining the lowest-scoring P percent.
    Filter(FilterArgs),
    /// Build windowed training samples from a manifest.
    Sample(SampleArgs),
    /// Print a summary of a curation report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value_t = 30.0)]
    pub tick_hz: f64,
    /// Synthetic operator (unscrew, open-close or hold) driving the hand
    /// while no client streams frames.
    #[arg(long)]
    pub profile: Option<Profile>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Additional synthetic streams simulated every tick (load testing).
    #[arg(long, default_value_t = 0)]
    pub streams: usize,
    /// Dataset directory that gesture-delimited episodes are recorded into.
    #[arg(long, value_name = "DIR")]
    pub record: Option<PathBuf>,
    /// Report served at /curation_report.json; defaults to the one in the
    /// recording directory.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Directory served over HTTP (for example the operator UI build).
    #[arg(long = "static", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
    /// Stop after this many seconds instead of running until killed.
    #[arg(long, value_name = "SECONDS")]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub episodes: usize,
    #[arg(long, default_value_t = 30.0)]
    pub tick_hz: f64,
    /// Synthetic operator motion: unscrew, open-close or hold.
    #[arg(long, default_value = "unscrew")]
    pub profile: Profile,
    /// Length of each demonstration, seconds.
    #[arg(long, default_value_t = 4.0)]
    pub duration: f64,
    /// Output dataset directory.
    #[arg(long, default_value = "dataset", value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetargetArgs {
    /// JSON lines of hand frames (`{"t","vertices"}` or `hand_frame` messages).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// JSON lines of joint targets.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Dataset directory or manifest file.
    #[arg(long, default_value = "dataset", value_name = "PATH")]
    pub dataset: PathBuf,
    /// Directory with features_top.csv and features_wrist.csv to use instead
    /// of image features.
    #[arg(long, value_name = "DIR")]
    pub features: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub min_cluster_size: usize,
    /// Defaults to curation_report.json next to the manifest.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Percentage of demonstrations to retain, in (0, 100).
    #[arg(long)]
    pub percentile: f64,
    /// Dataset directory or manifest file.
    #[arg(long, default_value = "dataset", value_name = "PATH")]
    pub dataset: PathBuf,
    /// Defaults to curation_report.json next to the manifest.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Defaults to manifest_p<P>.json next to the manifest.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Dataset directory or manifest file.
    #[arg(long, default_value = "dataset", value_name = "PATH")]
    pub dataset: PathBuf,
    /// Observation modalities: all, nt (no top), nw (no wrist), ne (no effort).
    #[arg(long, default_value = "all")]
    pub variant: String,
    #[arg(long, default_value_t = 3)]
    pub obs_steps: usize,
    #[arg(long, default_value_t = 8)]
    pub action_horizon: usize,
    #[arg(long, default_value_t = 16)]
    pub prediction_horizon: usize,
    /// Defaults to samples.jsonl next to the manifest.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report file, or a dataset directory containing one.
    #[arg(long, default_value = "dataset", value_name = "PATH")]
    pub report: PathBuf,
    /// Number of highest-scoring demonstrations to list.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

/// One output line of `retarget`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetargetRecord {
    pub t: f64,
    pub q_target: JointVector,
    pub dq: JointVector,
    /// Per finger, `index, middle, ring, thumb`.
    pub converged: [bool; 4],
    pub residual: [f64; 4],
}

/// Failure of the input data as opposed to the invocation.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct DataError(String);

fn data<E: Into<anyhow::Error>>(e: E) -> anyhow::Error {
    DataError(format!("{:#}", e.into())).into()
}

fn is_data_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.is::<DataError>())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let code = if is_data_error(&e) { 2 } else { 1 };
            let _ = writeln!(err, "error: {e:#}");
            code
        }
    }
}

fn load_rig(path: Option<&Path>) -> anyhow::Result<RigConfig> {
    match path {
        None => Ok(RigConfig::default()),
        Some(path) => {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("cannot read rig config {}", path.display()))?;
            RigConfig::from_json(&text).map_err(|e| data(anyhow!("rig config {}: {e}", path.display())))
        }
    }
}

fn require_exists(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.exists() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

/// Manifest file and its directory for a dataset path.
fn manifest_location(dataset: &Path) -> anyhow::Result<(PathBuf, PathBuf)> {
    require_exists(dataset, "dataset")?;
    let file = if dataset.is_dir() { dataset.join(MANIFEST_FILE) } else { dataset.to_path_buf() };
    require_exists(&file, "manifest")?;
    let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((file, root))
}

fn load_manifest(dataset: &Path) -> anyhow::Result<(Manifest, PathBuf, PathBuf)> {
    let (file, root) = manifest_location(dataset)?;
    let (manifest, _) = Manifest::load(&file).map_err(data)?;
    Ok((manifest, root, file))
}

fn execute(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let rig = load_rig(cli.rig.as_deref())?;
    match cli.command {
        Command::Serve(args) => serve(args, rig, out),
        Command::Simulate(args) => {
            let config = SimulateConfig {
                seed: args.seed,
                episodes: args.episodes,
                tick_hz: args.tick_hz,
                profile: args.profile,
                demo_duration: args.duration,
                rig,
                ..SimulateConfig::default()
            };
            if !(args.tick_hz > 0.0) || !(args.duration > 0.0) {
                bail!("--tick-hz and --duration must be positive");
            }
            let summary = simulate(&config, &args.out).map_err(data)?;
            writeln!(
                out,
                "wrote {} episodes ({} frames, {} samples) to {}{}",
                summary.episode_ids.len(),
                summary.frames,
                summary.samples,
                args.out.display(),
                if summary.report_written { "" } else { "; fewer than 3 episodes, no curation report" }
            )?;
            Ok(())
        }
        Command::Retarget(args) => retarget(args, rig, out),
        Command::Curate(args) => {
            let (manifest, root, _) = load_manifest(&args.dataset)?;
            if let Some(dir) = &args.features {
                require_exists(dir, "features directory")?;
            }
            if args.min_cluster_size < 2 {
                bail!("--min-cluster-size must be at least 2");
            }
            let params = ClusterParams { min_cluster_size: args.min_cluster_size, ..ClusterParams::default() };
            let precomputed;
            let featurizer = BaselineFeaturizer;
            let images = ImageEmbeddings(&featurizer);
            let source: &dyn EmbeddingSource = match &args.features {
                Some(dir) => {
                    precomputed = PrecomputedEmbeddings::load(dir).map_err(data)?;
                    &precomputed
                }
                None => &images,
            };
            let report = score_dataset(&manifest, &root, source, params).map_err(data)?;
            let path = args.out.unwrap_or_else(|| root.join(REPORT_FILE));
            std::fs::write(&path, report.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
            writeln!(out, "scored {} demonstrations into {}", report.demos.len(), path.display())?;
            Ok(())
        }
        Command::Filter(args) => {
            if !(args.percentile > 0.0 && args.percentile < 100.0) {
                bail!("--percentile must lie strictly between 0 and 100, got {}", args.percentile);
            }
            let (manifest, root, _) = load_manifest(&args.dataset)?;
            let report_path = args.report.unwrap_or_else(|| root.join(REPORT_FILE));
            require_exists(&report_path, "report")?;
            let report = read_report(&report_path)?;
            let (retained, _) = filter_percentile(&report, args.percentile).map_err(data)?;
            let missing: Vec<&String> =
                retained.iter().filter(|id| !manifest.episodes.iter().any(|e| &e.id == *id)).collect();
            if !missing.is_empty() {
                return Err(data(anyhow!("report ids missing from the manifest: {missing:?}")));
            }
            let out_path = args.out.unwrap_or_else(|| root.join(format!("manifest_p{}.json", args.percentile)));
            let filtered = rebase(&manifest.restricted_to(&retained), &root, &out_path)?;
            filtered.save(&out_path).with_context(|| format!("cannot write {}", out_path.display()))?;
            writeln!(
                out,
                "retained {} of {} demonstrations in {}",
                filtered.episodes.len(),
                report.demos.len(),
                out_path.display()
            )?;
            Ok(())
        }
        Command::Sample(args) => {
            let mask = Modalities::variant(&args.variant)
                .ok_or_else(|| anyhow!("unknown variant {:?} (expected all, nt, nw or ne)", args.variant))?;
            let spec = SampleSpec {
                obs_steps: args.obs_steps,
                action_horizon: args.action_horizon,
                prediction_horizon: args.prediction_horizon,
                mask,
            };
            spec.validate()?;
            let (manifest, root, _) = load_manifest(&args.dataset)?;
            let samples = sample_dataset(&manifest, &root, &spec).map_err(data)?;
            let path = args.out.unwrap_or_else(|| root.join(SAMPLES_FILE));
            write_samples(&path, &samples).map_err(data)?;
            writeln!(out, "wrote {} samples to {}", samples.len(), path.display())?;
            Ok(())
        }
        Command::Report(args) => {
            let path = if args.report.is_dir() { args.report.join(REPORT_FILE) } else { args.report.clone() };
            require_exists(&path, "report")?;
            let report = read_report(&path)?;
            write!(out, "{}", summarize(&report, args.top))?;
            Ok(())
        }
    }
}

fn read_report(path: &Path) -> anyhow::Result<CurationReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    CurationReport::from_json(&text).map_err(|e| data(anyhow!("report {}: {e}", path.display())))
}

/// Paths of `manifest` (relative to `root`) re-expressed for a manifest
/// written at `target`.
fn rebase(manifest: &Manifest, root: &Path, target: &Path) -> anyhow::Result<Manifest> {
    let target_dir = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let same = match (root.canonicalize(), target_dir.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        return Ok(manifest.clone());
    }
    let base = root.canonicalize().with_context(|| format!("cannot resolve {}", root.display()))?;
    Ok(Manifest {
        episodes: manifest
            .episodes
            .iter()
            .map(|e| ManifestEntry { id: e.id.clone(), path: base.join(&e.path).to_string_lossy().into_owned() })
            .collect(),
    })
}

pub fn summarize(report: &CurationReport, top: usize) -> String {
    let n = report.demos.len();
    let mut text = format!("{n} demonstrations\n");
    let noise = |f: fn(&crate::curation::DemoScore) -> i64| report.demos.iter().filter(|d| f(d) < 0).count();
    text += &format!("noise points: top {}, wrist {}\n", noise(|d| d.label_top), noise(|d| d.label_wrist));
    let p = &report.percentiles;
    text += &format!("retained: p90 {}, p70 {}, p50 {}\n", p.p90.len(), p.p70.len(), p.p50.len());
    if n > 0 {
        let mean = report.demos.iter().map(|d| d.outlier_score).sum::<f64>() / n as f64;
        text += &format!("outlier score: mean {mean:.4}\n");
    }
    text += &format!("{:<16} {:>8} {:>8} {:>8}\n", "id", "score", "top", "wrist");
    for d in report.demos.iter().take(top) {
        text += &format!("{:<16} {:>8.4} {:>8.4} {:>8.4}\n", d.id, d.outlier_score, d.score_top, d.score_wrist);
    }
    text
}

fn parse_frame_line(line: &str) -> anyhow::Result<HandFrame> {
    if let Ok(frame) = serde_json::from_str::<HandFrame>(line) {
        crate::model::validate_hand_frame(&frame)?;
        return Ok(frame);
    }
    match decode_message(line)? {
        StreamMessage::HandFrame { t, vertices, .. } => Ok(HandFrame { t, vertices }),
        other => bail!("expected a hand frame, found {}", other.tag()),
    }
}

fn retarget(args: RetargetArgs, rig: RigConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    require_exists(&args.input, "input")?;
    let input = std::fs::File::open(&args.input).with_context(|| format!("cannot open {}", args.input.display()))?;
    let mut session = RetargetSession::new(rig.clone());
    let mut q = rig.clamp(&[0.0; JOINT_COUNT]);
    let mut lines = Vec::new();
    let mut last_t: Option<f64> = None;
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", args.input.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: anyhow::Error| data(anyhow!("{} line {}: {e:#}", args.input.display(), i + 1));
        let frame = parse_frame_line(&line).map_err(at)?;
        if last_t.is_some_and(|p| !(frame.t > p)) {
            return Err(at(anyhow!("frame time {} does not increase", frame.t)));
        }
        last_t = Some(frame.t);
        let (result, command) = session.step(&frame, &q).map_err(|e| at(e.into()))?;
        q = integrate_clamped(&q, &command.dq, &rig.joint_limits);
        let record = RetargetRecord {
            t: frame.t,
            q_target: result.q_target,
            dq: command.dq,
            converged: std::array::from_fn(|k| result.ik[k].converged),
            residual: std::array::from_fn(|k| result.ik[k].residual),
        };
        lines.push(serde_json::to_string(&record)?);
    }
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    std::fs::write(&args.out, text).with_context(|| format!("cannot write {}", args.out.display()))?;
    writeln!(out, "retargeted {} frames into {}", lines.len(), args.out.display())?;
    Ok(())
}

fn serve(args: ServeArgs, rig: RigConfig, out: &mut dyn Write) -> anyhow::Result<()> {
    if !(args.tick_hz > 0.0) {
        bail!("--tick-hz must be positive");
    }
    if let Some(dir) = &args.static_dir {
        require_exists(dir, "static directory")?;
    }
    let report = args.report.clone().or_else(|| args.record.as_ref().map(|d| d.join(REPORT_FILE)));
    let config = ServerConfig {
        addr: SocketAddr::new(args.host, args.port),
        tick_hz: args.tick_hz,
        rig,
        seed: args.seed,
        profile: args.profile,
        load_streams: args.streams,
        record_dir: args.record.clone(),
        static_files: StaticFiles { report, root: args.static_dir.clone() },
        ..ServerConfig::default()
    };
    let server = serve_stream(config).map_err(data)?;
    writeln!(out, "listening on {} (json lines, websocket and http)", server.local_addr())?;
    out.flush()?;
    match args.duration {
        Some(seconds) => {
            std::thread::sleep(Duration::from_secs_f64(seconds.max(0.0)));
            let stats = server.stats();
            server.shutdown().map_err(data)?;
            writeln!(
                out,
                "{} ticks, mean busy {:?}, max busy {:?}, {} overruns",
                stats.ticks, stats.mean_busy, stats.max_busy, stats.overruns
            )?;
        }
        None => server.wait().map_err(data)?,
    }
    Ok(())
}
