use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use edgetrack::edgebox::write_pool_csv;
use edgetrack::eval::{
    load_sequence_with, mixed_corpus, parse_gt_line, read_trajectory, save_sequence, subsample, summary_csv,
    synth_sequence, write_report, write_trajectory, MetricReport, SceneSpec, Sequence,
};
use edgetrack::tracker::{inspect_proposals, track_sequence, CandidateSet, TrackerConfig, LOG_HEADER};
use edgetrack::{BoundingBox, Frame};

mod overlay;

#[derive(Parser)]
#[command(name = "edgetrack", version, about = "Model-free tracking on instance-specific edge-box proposals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track sequences from their first ground-truth box.
    Track(TrackArgs),
    /// Score trajectories against ground truth.
    Eval(EvalArgs),
    /// Dump and draw the proposal pool of a single frame.
    Proposals(ProposalArgs),
    /// Render a synthetic scene, or a mixed-motion corpus, in the OTB layout.
    Synth(SynthArgs),
    /// Run every test-set/update-set combination over a set of sequences.
    Ablate(AblateArgs),
}

#[derive(Args, Clone, Default)]
struct TrackerFlags {
    /// Flat key=value settings file, applied before any other flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting; repeatable and applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["ssvm", "ncc"])]
    core: Option<String>,
    #[arg(long = "test-set", value_parser = ["E", "R", "ER"])]
    test_set: Option<String>,
    #[arg(long = "update-set", value_parser = ["E", "R", "ER"])]
    update_set: Option<String>,
    /// Size of the re-ranked proposal set.
    #[arg(long = "H")]
    h: Option<usize>,
    #[arg(long, value_parser = ["on", "off"])]
    rerank: Option<String>,
    #[arg(long, value_parser = ["2640", "480"])]
    feature: Option<String>,
}

impl TrackerFlags {
    fn resolve(&self) -> Result<TrackerConfig> {
        let mut cfg = TrackerConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        let named = [
            ("seed", self.seed.map(|s| s.to_string())),
            ("core", self.core.clone()),
            ("test_set", self.test_set.clone()),
            ("update_set", self.update_set.clone()),
            ("H", self.h.map(|h| h.to_string())),
            ("rerank", self.rerank.clone()),
            ("feature", self.feature.clone()),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{kv}`"))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct SequenceFlags {
    /// Sequence directory (OTB layout); repeatable.
    #[arg(long = "seq", required = true)]
    seqs: Vec<PathBuf>,
    /// Ground-truth file overriding the one inside a single --seq directory.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Keep every n-th frame, to emulate a lower frame rate.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    stride: u64,
}

impl SequenceFlags {
    fn check(&self) -> Result<()> {
        if self.gt.is_some() && self.seqs.len() > 1 {
            bail!("--gt applies to a single --seq");
        }
        Ok(())
    }

    fn load(&self, dir: &Path) -> Result<Sequence> {
        let seq = load_sequence_with(dir, self.gt.as_deref()).with_context(|| format!("loading {}", dir.display()))?;
        Ok(if self.stride > 1 {
            subsample(&seq, self.stride as usize)
        } else {
            seq
        })
    }

    fn manifest_lines(&self) -> String {
        let mut s: String = self.seqs.iter().map(|p| format!("# seq={}\n", p.display())).collect();
        if let Some(gt) = &self.gt {
            s.push_str(&format!("# gt={}\n", gt.display()));
        }
        s.push_str(&format!("# stride={}\n", self.stride));
        s
    }
}

#[derive(Args)]
struct TrackArgs {
    #[command(flatten)]
    seqs: SequenceFlags,
    #[command(flatten)]
    tracker: TrackerFlags,
    #[arg(long)]
    out: PathBuf,
    /// Initial box "x,y,w,h" (0-based) for sequences without ground truth.
    #[arg(long)]
    init: Option<String>,
    /// Also write the re-ranked proposal set of every frame.
    #[arg(long = "dump-proposals")]
    dump_proposals: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    seqs: SequenceFlags,
    /// Trajectory file (single sequence) or directory holding `<name>.txt`.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also draw precision and success plots.
    #[arg(long)]
    svg: bool,
    /// Report frames per second from the `<name>.log.csv` next to each
    /// trajectory. Off by default so reports stay reproducible.
    #[arg(long)]
    fps: bool,
}

#[derive(Args)]
struct ProposalArgs {
    #[arg(long)]
    frame: PathBuf,
    /// Previous estimate "x,y,w,h" (0-based); anchors the area bounds and
    /// serves as the re-ranker's positive.
    #[arg(long)]
    prev: String,
    /// Number of top proposals drawn on the overlay.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tracker: TrackerFlags,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene file of key=value lines.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Override one scene setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Render the built-in mixed-motion corpus of this many scenes instead.
    #[arg(long)]
    corpus: Option<usize>,
    /// Frames per corpus scene.
    #[arg(long, default_value_t = 30)]
    frames: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    seqs: SequenceFlags,
    #[command(flatten)]
    tracker: TrackerFlags,
    #[arg(long)]
    out: PathBuf,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_manifest(out: &Path, command: &str, extra: &str, cfg: Option<&TrackerConfig>) -> Result<()> {
    let mut text = format!("# edgetrack {command}\n{extra}");
    if let Some(cfg) = cfg {
        text.push_str(&cfg.to_text());
    }
    write_file(&out.join("manifest.txt"), text)
}

fn parse_box(s: &str) -> Result<BoundingBox> {
    parse_gt_line(s, false)?.ok_or_else(|| anyhow!("`{s}` is not a box with positive size"))
}

fn gts(seq: &Sequence) -> Vec<Option<BoundingBox>> {
    (0..seq.len()).map(|i| seq.gt(i)).collect()
}

/// Runs `job` on every sequence in parallel, reports failures on stderr
/// and fails if any sequence did.
fn per_sequence<T: Send>(dirs: &[PathBuf], job: impl Fn(&Path) -> Result<T> + Sync) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = dirs.par_iter().map(|d| job(d)).collect();
    let mut ok = Vec::new();
    let mut failed = 0;
    for (dir, r) in dirs.iter().zip(results) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                eprintln!("error: {}: {e:#}", dir.display());
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} sequences failed", dirs.len());
    }
    Ok(ok)
}

fn track(args: &TrackArgs) -> Result<()> {
    args.seqs.check()?;
    let cfg = args.tracker.resolve()?;
    let init = args.init.as_deref().map(parse_box).transpose()?;
    create_dir(&args.out)?;
    let mut extra = args.seqs.manifest_lines();
    if let Some(b) = &init {
        extra.push_str(&format!("# init={},{},{},{}\n", b.x, b.y, b.w, b.h));
    }
    write_manifest(&args.out, "track", &extra, Some(&cfg))?;

    per_sequence(&args.seqs.seqs, |dir| {
        let seq = args.seqs.load(dir)?;
        let first = init
            .or_else(|| seq.gt(0))
            .ok_or_else(|| anyhow!("no ground truth for the first frame; pass --init"))?;
        let mut dump = if args.dump_proposals {
            let path = args.out.join(format!("{}.proposals.csv", seq.name));
            let mut w = BufWriter::new(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
            writeln!(w, "frame,x,y,w,h,objectness")?;
            Some(w)
        } else {
            None
        };
        let mut dump_error = None;
        let result = track_sequence(&seq, &first, &cfg, |step| {
            if let Some(w) = dump.as_mut() {
                if let Err(e) = write_pool_csv(w, step.log.frame, &step.proposals) {
                    dump_error.get_or_insert(e);
                }
            }
        })?;
        if let Some(e) = dump_error {
            return Err(e.into());
        }
        if let Some(mut w) = dump {
            w.flush()?;
        }
        write_trajectory(&args.out.join(format!("{}.txt", seq.name)), &result.boxes)?;
        let mut log = format!("{LOG_HEADER}\n");
        for l in &result.logs {
            log.push_str(&l.csv_row());
            log.push('\n');
        }
        write_file(&args.out.join(format!("{}.log.csv", seq.name)), log)?;
        println!("{}: {} frames, {:.2} fps", seq.name, result.boxes.len(), result.fps());
        Ok(())
    })?;
    Ok(())
}

/// Frames per second from a per-frame log: frames over summed stage time.
fn fps_from_log(path: &Path) -> Result<f64> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
    let stages: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.ends_with("_ms"))
        .map(|(i, _)| i)
        .collect();
    let (mut frames, mut ms) = (0usize, 0.0);
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        for &i in &stages {
            ms += cols.get(i).and_then(|v| v.parse::<f64>().ok()).unwrap_or(0.0);
        }
        frames += 1;
    }
    Ok(if ms > 0.0 { frames as f64 / (ms / 1e3) } else { 0.0 })
}

fn eval(args: &EvalArgs) -> Result<()> {
    args.seqs.check()?;
    if args.pred.is_file() && args.seqs.seqs.len() > 1 {
        bail!("a single --pred file needs a single --seq");
    }
    create_dir(&args.out)?;
    write_manifest(
        &args.out,
        "eval",
        &format!("{}# pred={}\n", args.seqs.manifest_lines(), args.pred.display()),
        None,
    )?;
    let reports = per_sequence(&args.seqs.seqs, |dir| {
        let seq = args.seqs.load(dir)?;
        let (pred_path, log_path) = if args.pred.is_dir() {
            (args.pred.join(format!("{}.txt", seq.name)), args.pred.join(format!("{}.log.csv", seq.name)))
        } else {
            (args.pred.clone(), args.pred.with_extension("log.csv"))
        };
        let pred = read_trajectory(&pred_path)?;
        let fps = if args.fps { fps_from_log(&log_path)? } else { 0.0 };
        let report = MetricReport::compute(&seq.name, &pred, &gts(&seq), fps)?;
        write_report(&args.out, &report, args.svg)?;
        Ok(report)
    })?;
    let mean = MetricReport::mean("mean", &reports)?;
    let mut all = reports;
    all.push(mean);
    let summary = summary_csv(&all);
    write_file(&args.out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn proposals(args: &ProposalArgs) -> Result<()> {
    let cfg = args.tracker.resolve()?;
    let prev = parse_box(&args.prev)?;
    let frame = Frame::load(&args.frame)?;
    let pool = inspect_proposals(&frame, &prev, &cfg)?;
    create_dir(&args.out)?;
    write_manifest(
        &args.out,
        "proposals",
        &format!("# frame={}\n# prev={}\n# k={}\n", args.frame.display(), args.prev, args.k),
        Some(&cfg),
    )?;
    let mut csv = String::from("rank,x,y,w,h,objectness,rerank_score\n");
    for (i, p) in pool.iter().enumerate() {
        let r = p.rerank_score.map(|s| s.to_string()).unwrap_or_default();
        csv.push_str(&format!("{i},{},{},{},{},{},{r}\n", p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h, p.objectness));
    }
    write_file(&args.out.join("proposals.csv"), csv)?;
    let mut img = frame.to_rgb_image();
    let top: Vec<BoundingBox> = pool.iter().take(args.k).map(|p| p.bbox).collect();
    let drawn = overlay::draw_boxes(&mut img, &top, overlay::HIGHLIGHT);
    let path = args.out.join("overlay.png");
    img.save(&path).with_context(|| format!("writing {}", path.display()))?;
    println!("{} proposals, {drawn} drawn", pool.len());
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.scene {
        Some(p) => SceneSpec::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SceneSpec::default(),
    };
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{kv}`"))?;
        spec.set(k.trim(), v.trim())?;
    }
    create_dir(&args.out)?;
    match args.corpus {
        None => {
            spec.validate()?;
            save_sequence(&synth_sequence(&spec, args.seed)?, &args.out)?;
            write_manifest(&args.out, "synth", &format!("# seed={}\n", args.seed), None)?;
            write_file(&args.out.join("scene.txt"), spec.to_text())?;
            println!("{}: {} frames", spec.name, spec.frames);
        }
        Some(n) => {
            let scenes = mixed_corpus(n, args.frames);
            scenes.par_iter().enumerate().try_for_each(|(i, s)| -> Result<()> {
                let dir = args.out.join(&s.name);
                save_sequence(&synth_sequence(s, args.seed + i as u64)?, &dir)?;
                write_file(&dir.join("scene.txt"), s.to_text())
            })?;
            write_manifest(
                &args.out,
                "synth",
                &format!("# seed={}\n# corpus={n}\n# frames={}\n", args.seed, args.frames),
                None,
            )?;
            println!("{n} scenes of {} frames", args.frames);
        }
    }
    Ok(())
}

fn ablate(args: &AblateArgs) -> Result<()> {
    args.seqs.check()?;
    let base = args.tracker.resolve()?;
    create_dir(&args.out)?;
    write_manifest(&args.out, "ablate", &args.seqs.manifest_lines(), Some(&base))?;
    let seqs = per_sequence(&args.seqs.seqs, |dir| {
        let seq = args.seqs.load(dir)?;
        if seq.gt(0).is_none() {
            bail!("no ground truth for the first frame");
        }
        Ok(seq)
    })?;

    let mut grid = String::from("update\\test,R,E,ER\n");
    let mut detail = format!("update_set,test_set,{}\n", edgetrack::eval::SUMMARY_HEADER);
    for update in CandidateSet::ALL {
        grid.push_str(&update.to_string());
        for test in CandidateSet::ALL {
            let cfg = TrackerConfig {
                test_set: test,
                update_set: update,
                ..base.clone()
            };
            let reports = seqs
                .par_iter()
                .map(|s| -> Result<MetricReport> {
                    let r = track_sequence(s, &s.gt(0).expect("checked above"), &cfg, |_| {})?;
                    Ok(MetricReport::from_boxes(&s.name, &r.boxes, &gts(s), 0.0)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let mean = MetricReport::mean("mean", &reports)?;
            grid.push_str(&format!(",{:.3}/{:.3}", mean.auc, mean.precision_score_20));
            for r in reports.iter().chain([&mean]) {
                detail.push_str(&format!("{update},{test},{}\n", r.summary_line()));
            }
        }
        grid.push('\n');
    }
    write_file(&args.out.join("ablation.csv"), &grid)?;
    write_file(&args.out.join("ablation_detail.csv"), detail)?;
    print!("{grid}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Track(a) => track(a),
        Command::Eval(a) => eval(a),
        Command::Proposals(a) => proposals(a),
        Command::Synth(a) => synth(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
