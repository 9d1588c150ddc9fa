use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use scenediar::eval::{self, format_table, F1Report};
use scenediar::io;
use scenediar::pattern_miner::{
    assign_utterances, coverage_stats, extract_patterns, merge_patterns, ShotSequence,
};
use scenediar::pipeline::{
    run_pipeline, Diarization, Mode, PipelineConfig, PipelineInputs, ShotInput,
};
use scenediar::shot_analysis::{self, FrameDescriptor, ShotConfig};
use scenediar::synth::{generate_synthetic_episode, SyntheticEpisodeConfig};

#[derive(Parser)]
#[command(
    name = "scenediar",
    version,
    about = "Speaker diarization guided by dialogue shot patterns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect shot cuts and label recurring shots.
    Shots(ShotsArgs),
    /// Mine dialogue patterns and report speech coverage.
    Patterns(PatternsArgs),
    /// Run the diarization pipeline.
    Diarize(DiarizeArgs),
    /// Score shots, shot similarity or diarization output.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Generate a synthetic episode with planted ground truth.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct FrameArgs {
    /// Cut threshold on adjacent-frame similarity.
    #[arg(long, default_value_t = 0.5)]
    tau1: f64,
    /// Similarity threshold between shot boundary frames.
    #[arg(long, default_value_t = 0.8)]
    tau2: f64,
    /// Block grid as ROWSxCOLS.
    #[arg(long, default_value = "5x6")]
    grid: String,
    /// HSV bins as H,S,V.
    #[arg(long, default_value = "8,4,4")]
    bins: String,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
    /// Compare each shot only with this many preceding shots.
    #[arg(long)]
    lookback: Option<usize>,
}

impl FrameArgs {
    fn config(&self) -> Result<ShotConfig> {
        let (r, c) = self
            .grid
            .split_once(['x', 'X'])
            .context("--grid must look like 5x6")?;
        let bins: Vec<usize> = self
            .bins
            .split(',')
            .map(|b| b.trim().parse())
            .collect::<Result<_, _>>()
            .context("--bins must look like 8,4,4")?;
        if bins.len() != 3 {
            bail!("--bins needs three values");
        }
        let config = ShotConfig {
            cut_threshold: self.tau1,
            similarity_threshold: self.tau2,
            block_rows: r.trim().parse()?,
            block_cols: c.trim().parse()?,
            bins_h: bins[0],
            bins_s: bins[1],
            bins_v: bins[2],
            lookback_shots: self.lookback,
        };
        config.validate()?;
        Ok(config)
    }

    fn load(&self, input: &Path) -> Result<(Vec<FrameDescriptor>, ShotConfig)> {
        let config = self.config()?;
        let frames = if input.is_dir() {
            shot_analysis::load_frame_dir(input, self.fps, &config)?
        } else {
            io::read_histograms(input, &config)?
        };
        Ok((frames, config))
    }
}

#[derive(Args)]
struct ShotsArgs {
    /// Directory of NNNNNN.ppm frames or a histogram CSV/JSONL file.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    frames: FrameArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PatternsArgs {
    #[arg(long)]
    shots: PathBuf,
    #[arg(long)]
    segments: PathBuf,
    /// Let length-2 alternations count as dialogue occurrences.
    #[arg(long)]
    extended: bool,
    /// Keep patterns sharing a shot label separate.
    #[arg(long)]
    no_merge: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the coverage report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DiarizeArgs {
    /// Labeled shots (JSONL).
    #[arg(long, conflicts_with = "frames_input")]
    shots: Option<PathBuf>,
    /// Frame directory or histogram file, segmented on the fly.
    #[arg(long = "frames")]
    frames_input: Option<PathBuf>,
    #[command(flatten)]
    frame_args: FrameArgs,
    #[arg(long)]
    segments: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Labeled training embeddings for the within-class covariance.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value = "cst2s")]
    mode: Mode,
    #[arg(long)]
    extended: bool,
    #[arg(long)]
    no_merge: bool,
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value = "episode")]
    recording: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Diarization error rate over the hypothesis-labeled segments.
    Der {
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        hyp: PathBuf,
        /// Segments file; its speaker column is the default reference.
        #[arg(long)]
        segments: PathBuf,
        /// `segment_id,dialogue` file for per-dialogue and single-show DER.
        #[arg(long)]
        per_dialogue: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Cut detection F1 between two shot files.
    Cuts {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        /// Frame tolerance when matching cuts.
        #[arg(long, default_value_t = 1)]
        tolerance: u64,
        #[arg(long)]
        json: bool,
    },
    /// Shot similarity F1 between two labeled shot files.
    Sim {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Distinct speaker counts per system.
    Speakers {
        #[arg(long)]
        segments: PathBuf,
        /// Hypothesis files, optionally as NAME=PATH.
        #[arg(long, required = true)]
        hyp: Vec<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// JSON generator configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn emit<T: Serialize>(json: bool, value: &T, table: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{}", table());
    }
    Ok(())
}

fn f1_table(name: &str, r: &F1Report) -> String {
    format_table(
        &["metric", "precision", "recall", "f1"],
        &[vec![
            name.to_string(),
            pct(r.precision),
            pct(r.recall),
            pct(r.f1),
        ]],
    )
}

fn cmd_shots(args: ShotsArgs) -> Result<()> {
    let (frames, config) = args.frames.load(&args.input)?;
    let shots = shot_analysis::detect_cuts(&frames, &config)?;
    let labeling = shot_analysis::detect_similar_shots(&shots, &frames, &config)?;
    io::write_shots(&args.out, &shots, &labeling)?;
    log::info!(
        "{} frames, {} shots, {} labels",
        frames.len(),
        shots.len(),
        labeling.num_labels()
    );
    Ok(())
}

fn cmd_patterns(args: PatternsArgs) -> Result<()> {
    let (shots, labeling) = io::read_shots(&args.shots)?;
    let segments = io::read_segments(&args.segments)?;
    let seq = ShotSequence::from_shots(&shots, &labeling)?;
    let mut ps = assign_utterances(&extract_patterns(&seq, args.extended), &segments);
    if !args.no_merge {
        ps = merge_patterns(&ps);
    }
    if let Some(out) = &args.out {
        io::write_patterns(out, &ps)?;
    }
    let report = coverage_stats(&ps, &segments);
    emit(args.json, &report, || {
        format_table(
            &[
                "patterns",
                "coverage (%)",
                "spch/patt (s.)",
                "# of spk/patt",
            ],
            &[vec![
                report.num_patterns.to_string(),
                pct(report.coverage),
                format!("{:.2}", report.speech_per_pattern),
                report
                    .speakers_per_pattern
                    .map_or("-".into(), |s| format!("{s:.2}")),
            ]],
        )
    })
}

fn cmd_diarize(args: DiarizeArgs) -> Result<()> {
    let shots = match (&args.shots, &args.frames_input) {
        (Some(path), None) => {
            let (shots, labeling) = io::read_shots(path)?;
            ShotInput::Labeled { shots, labeling }
        }
        (None, Some(input)) => {
            let (frames, config) = args.frame_args.load(input)?;
            ShotInput::Frames { frames, config }
        }
        _ => bail!("give exactly one of --shots or --frames"),
    };
    let segments = io::read_segments(&args.segments)?;
    let inputs = PipelineInputs {
        shots,
        embeddings: io::read_embeddings(&args.embeddings)?,
        training: args.train.as_deref().map(io::read_training).transpose()?,
        segments: segments.clone(),
    };
    let config = PipelineConfig {
        mode: args.mode,
        extended: args.extended,
        merge: !args.no_merge,
        normalize: args.normalize,
        epsilon: args.epsilon,
    };
    let run = run_pipeline(&inputs, &config)?;
    io::write_artifacts(&args.out, &args.recording, &run, &segments)?;
    log::info!(
        "{} patterns, {:.1}% coverage, {} speakers",
        run.manifest.num_patterns,
        100.0 * run.manifest.coverage.coverage,
        run.manifest.num_speakers
    );
    Ok(())
}

#[derive(Serialize)]
struct DerOutput {
    overall: eval::DerReport,
    per_dialogue: Option<Vec<(usize, eval::DerReport)>>,
    single_show_der: Option<f64>,
}

fn cmd_eval(cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Der {
            reference,
            hyp,
            segments,
            per_dialogue,
            json,
        } => {
            let segs = io::read_segments(&segments)?;
            let reference = match reference {
                Some(p) => io::read_diarization(&p, &segs)?,
                None => Diarization::reference(&segs),
            };
            let hyp = io::read_diarization(&hyp, &segs)?;
            let overall = eval::der(&reference, &hyp, &segs)?;
            let (per, single) = match per_dialogue {
                Some(p) => {
                    let map = io::read_dialogue_map(&p)?;
                    let per = eval::per_dialogue_der(&reference, &hyp, &segs, &map)?;
                    let reports: Vec<_> = per.iter().map(|(_, r)| r.clone()).collect();
                    let single = eval::single_show_der(&reports)?;
                    (Some(per), Some(single))
                }
                None => (None, None),
            };
            let out = DerOutput {
                overall,
                per_dialogue: per,
                single_show_der: single,
            };
            emit(json, &out, || {
                let mut rows = vec![vec![
                    "all".to_string(),
                    format!("{:.2}", out.overall.total),
                    pct(out.overall.der),
                ]];
                for (d, r) in out.per_dialogue.iter().flatten() {
                    rows.push(vec![
                        format!("dialogue {d}"),
                        format!("{:.2}", r.total),
                        pct(r.der),
                    ]);
                }
                if let Some(s) = out.single_show_der {
                    rows.push(vec!["single-show".into(), String::new(), pct(s)]);
                }
                format_table(&["scope", "speech (s.)", "DER (%)"], &rows)
            })
        }
        EvalCommand::Cuts {
            reference,
            hyp,
            tolerance,
            json,
        } => {
            let (r, _) = io::read_shots(&reference)?;
            let (h, _) = io::read_shots(&hyp)?;
            let report = eval::f1_cuts(&eval::cut_frames(&r), &eval::cut_frames(&h), tolerance);
            emit(json, &report, || f1_table("cuts", &report))
        }
        EvalCommand::Sim {
            reference,
            hyp,
            json,
        } => {
            let (rs, rl) = io::read_shots(&reference)?;
            let (hs, hl) = io::read_shots(&hyp)?;
            let aligned = eval::align_labeling(&rs, &hs, &hl)?;
            let report = eval::f1_similarity(&rl, &aligned)?;
            emit(json, &report, || f1_table("similarity", &report))
        }
        EvalCommand::Speakers {
            segments,
            hyp,
            json,
        } => {
            let segs = io::read_segments(&segments)?;
            let reference = Diarization::reference(&segs);
            let systems = hyp
                .iter()
                .map(|h| {
                    let (name, path) = h.split_once('=').unwrap_or((h.as_str(), h.as_str()));
                    Ok((
                        name.to_string(),
                        io::read_diarization(Path::new(path), &segs)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<(&str, &Diarization)> =
                systems.iter().map(|(n, d)| (n.as_str(), d)).collect();
            let has_ref = !reference.labels.is_empty();
            let rows = eval::speaker_count_report(&refs, has_ref.then_some(&reference));
            emit(json, &rows, || {
                format_table(
                    &["system", "# speakers", "reference"],
                    &rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.system.clone(),
                                r.hypothesized.to_string(),
                                r.reference.map_or("-".into(), |n| n.to_string()),
                            ]
                        })
                        .collect::<Vec<_>>(),
                )
            })
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut config: SyntheticEpisodeConfig = match &args.config {
        Some(p) => io::read_json(p)?,
        None => SyntheticEpisodeConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let episode = generate_synthetic_episode(&config)?;
    io::write_synthetic(&args.out, &episode)?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Shots(a) => cmd_shots(a),
        Command::Patterns(a) => cmd_patterns(a),
        Command::Diarize(a) => cmd_diarize(a),
        Command::Eval(c) => cmd_eval(c),
        Command::Synth(a) => cmd_synth(a),
    }
}
