//! The `faup` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or model errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::faucodes::{format_rule_tables, Emotion};
use crate::imaging::{CannyParams, WORKING_HEIGHT, WORKING_WIDTH};
use crate::pipeline::{
    bench_compare, classify_full, classify_pruned, detect_transitions, load_bundle, save_bundle,
    train, FeatureMode, PatchValues, PipelineConfig, TrainedBundle,
};
use crate::ruleengine::{build_absence_tree, build_transition_tree};
use crate::synthgen::{
    generate_dataset, generate_sequence, load_dataset, load_sequence, neutral_template,
    read_landmarks, read_rendering, write_dataset, write_sequence, LabeledSample, SynthConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "faup",
    version,
    about = "Facial expression recognition with action-unit search-space pruning",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset (or a transition sequence).
    Synth(SynthArgs),
    /// Train the six not-emotion detectors and their pruned counterparts.
    Train(TrainArgs),
    /// Classify one landmark file.
    Classify(ClassifyArgs),
    /// Compare the full and pruned paths over a dataset.
    Bench(BenchArgs),
    /// Detect emotion transitions in a landmark sequence.
    Transitions(TransitionsArgs),
    /// Print the rule tables or an induced decision tree.
    Rules(RulesArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Samples per emotion.
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    /// Gaussian noise sigma on active points, normalized units.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// AU displacement magnitude, normalized units.
    #[arg(long, default_value_t = 0.1)]
    intensity: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write rendered PGM faces with pixel landmarks.
    #[arg(long)]
    render: bool,
    /// Render width in pixels.
    #[arg(long, default_value_t = WORKING_WIDTH)]
    width: usize,
    /// Render height in pixels.
    #[arg(long, default_value_t = WORKING_HEIGHT)]
    height: usize,
    /// Write a transition sequence through these emotions instead of a dataset (comma-separated).
    #[arg(long, value_delimiter = ',', value_parser = parse_emotion)]
    sequence: Vec<Emotion>,
    /// Frames per state of a sequence.
    #[arg(long, default_value_t = 5)]
    frames: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Landmark,
    Image,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CannyOn {
    /// Canny on the PCA reconstruction.
    Pca,
    /// Canny on the resized image.
    Raw,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PatchArg {
    Edges,
    Luminance,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory written by `faup synth`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Landmark)]
    mode: ModeArg,
    /// PCA components in image mode (capped at training size - 1).
    #[arg(long, default_value_t = 10)]
    components: usize,
    #[arg(long = "svm-c", default_value_t = 1.0)]
    svm_c: f64,
    /// Seed of the train/test split.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Fraction of each class used for training.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    split: f64,
    /// AU presence threshold [default: 0.5 x dataset intensity, or 0.05 when unrecorded].
    #[arg(long)]
    tau: Option<f64>,
    /// Working width for image mode.
    #[arg(long, default_value_t = WORKING_WIDTH)]
    width: usize,
    /// Working height for image mode.
    #[arg(long, default_value_t = WORKING_HEIGHT)]
    height: usize,
    /// Patch radius in pixels (window side 2r+1).
    #[arg(long, default_value_t = 3)]
    patch_radius: usize,
    #[arg(long, default_value_t = 1.4)]
    canny_sigma: f64,
    /// Low hysteresis threshold, fraction of the largest gradient.
    #[arg(long, default_value_t = 0.1)]
    canny_low: f64,
    /// High hysteresis threshold, fraction of the largest gradient.
    #[arg(long, default_value_t = 0.3)]
    canny_high: f64,
    #[arg(long, value_enum, default_value_t = CannyOn::Pca)]
    canny_on: CannyOn,
    #[arg(long, value_enum, default_value_t = PatchArg::Edges)]
    patch_values: PatchArg,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// A `.landmarks` file; a sibling `.pgm`/`.pixlandmarks` pair is used in image mode.
    #[arg(long)]
    input: PathBuf,
    /// Neutral face [default: `neutral.landmarks` next to or above the input, else the template].
    #[arg(long)]
    neutral: Option<PathBuf>,
    /// Previous emotional state.
    #[arg(long, value_parser = parse_emotion)]
    prior: Option<Emotion>,
    /// Use the pruned path.
    #[arg(long)]
    pruned: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Tab-separated report to write.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct TransitionsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sequence directory written by `faup synth --sequence`.
    #[arg(long)]
    sequence: PathBuf,
    /// Initial state [default: classify the first frame].
    #[arg(long, value_parser = parse_emotion)]
    initial: Option<Emotion>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TreeKind {
    Absence,
    Transition,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("what").required(true).args(["dump", "tree"])))]
struct RulesArgs {
    /// Print the AU tables.
    #[arg(long)]
    dump: bool,
    /// Print an induced decision tree.
    #[arg(long, value_enum)]
    tree: Option<TreeKind>,
    /// Print the tree as Graphviz dot.
    #[arg(long, requires = "tree")]
    dot: bool,
}

fn parse_emotion(s: &str) -> Result<Emotion, String> {
    s.parse::<Emotion>().map_err(|e| e.to_string())
}

/// A data or model failure, reported with exit code 2.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<String, Failure>;

fn load_model(path: &Path) -> Result<TrainedBundle, Failure> {
    load_bundle(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Classify(a) => classify(a),
        Command::Bench(a) => bench(a),
        Command::Transitions(a) => transitions(a),
        Command::Rules(a) => rules(a),
    };
    match outcome {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn synth(a: SynthArgs) -> Outcome {
    let cfg = SynthConfig {
        per_class: a.per_class,
        noise_sigma: a.noise,
        intensity: a.intensity,
        seed: a.seed,
        render: a.render,
        width: a.width,
        height: a.height,
    };
    if !a.sequence.is_empty() {
        let seq = generate_sequence(&a.sequence, a.frames, &cfg)?;
        write_sequence(&a.out, &seq, cfg.intensity)?;
        return Ok(format!(
            "wrote {} frames to {} (transitions at {:?})\n",
            seq.frames.len(),
            a.out.display(),
            seq.boundaries
        ));
    }
    let samples = generate_dataset(&cfg)?;
    write_dataset(&a.out, &samples, &cfg)?;
    Ok(format!(
        "wrote {} samples to {}\n",
        samples.len(),
        a.out.display()
    ))
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let data = load_dataset(&a.data)?;
    let config = PipelineConfig {
        mode: match a.mode {
            ModeArg::Landmark => FeatureMode::Landmark,
            ModeArg::Image => FeatureMode::Image,
        },
        width: a.width,
        height: a.height,
        components: a.components,
        patch_radius: a.patch_radius,
        canny: CannyParams {
            sigma: a.canny_sigma,
            low: a.canny_low,
            high: a.canny_high,
        },
        canny_on_pca: matches!(a.canny_on, CannyOn::Pca),
        patch_values: match a.patch_values {
            PatchArg::Edges => PatchValues::Edges,
            PatchArg::Luminance => PatchValues::Luminance,
        },
        svm_c: a.svm_c,
        seed: a.seed,
        split_ratio: a.split,
        tau: a.tau.unwrap_or_else(|| 0.5 * data.intensity.unwrap_or(0.1)),
    };
    let (bundle, split) = train(&data.samples, &config)?;
    save_bundle(&bundle, &a.out)?;
    let mut full_ok = 0;
    let mut pruned_ok = 0;
    for &i in &split.test {
        let s = &data.samples[i];
        full_ok += usize::from(classify_full(&bundle, s)?.emotion == s.emotion);
        pruned_ok += usize::from(classify_pruned(&bundle, s, None)?.emotion == s.emotion);
    }
    let n = split.test.len().max(1) as f64;
    let mut out = format!(
        "trained on {} samples, tested on {}\ntest accuracy: full {:.1}%, pruned {:.1}%\n",
        split.train.len(),
        split.test.len(),
        100.0 * full_ok as f64 / n,
        100.0 * pruned_ok as f64 / n
    );
    out.push_str("detector\tsv_count\tmargin\n");
    for d in &bundle.detectors {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.4}",
            d.emotion.absence_label(),
            d.model.sv_count,
            d.model.margin
        );
    }
    let _ = writeln!(out, "model written to {}", a.out.display());
    Ok(out)
}

/// `neutral.landmarks` in the input's directory or its parent.
fn find_neutral(input: &Path) -> Option<PathBuf> {
    let dir = input.parent()?;
    [
        dir.join("neutral.landmarks"),
        dir.parent()?.join("neutral.landmarks"),
    ]
    .into_iter()
    .find(|p| p.exists())
}

fn classify(a: ClassifyArgs) -> Outcome {
    let bundle = load_model(&a.model)?;
    let expressive = read_landmarks(&a.input)?;
    let neutral = match a.neutral.or_else(|| find_neutral(&a.input)) {
        Some(p) => read_landmarks(&p)?,
        None => neutral_template(),
    };
    let sample = LabeledSample {
        neutral,
        expressive,
        emotion: Emotion::Surprise,
        rendering: read_rendering(&a.input)?,
    };
    let mut out = String::new();
    if a.pruned {
        let d = classify_pruned(&bundle, &sample, a.prior)?;
        let _ = writeln!(out, "emotion\t{}", d.emotion);
        let _ = writeln!(out, "points_examined\t{}", d.points_examined);
        let _ = writeln!(out, "fallback\t{}", d.fallback);
        let accepted: Vec<&str> = Emotion::ALL
            .into_iter()
            .filter(|e| d.accepted[e.index()])
            .map(|e| e.name())
            .collect();
        let _ = writeln!(out, "accepted\t{}", accepted.join(","));
        let _ = writeln!(out, "present_aus\t{}", d.observation.present());
        let _ = writeln!(out, "rule_decision\t{}", d.rule_decision);
        if let Some(t) = d.transition {
            let _ = writeln!(out, "transition_tree\t{t}");
        }
    } else {
        let d = classify_full(&bundle, &sample)?;
        let _ = writeln!(out, "emotion\t{}", d.emotion);
        let _ = writeln!(out, "low_confidence\t{}", d.low_confidence);
        for (e, s) in Emotion::ALL.iter().zip(d.scores) {
            let _ = writeln!(out, "score_{}\t{s:.6}", e.absence_label());
        }
    }
    Ok(out)
}

fn bench(a: BenchArgs) -> Outcome {
    let bundle = load_model(&a.model)?;
    let data = load_dataset(&a.data)?;
    let report = bench_compare(&bundle, &data.samples)?;
    fs::write(&a.report, report.to_tsv())
        .map_err(|e| Failure(format!("{}: {e}", a.report.display())))?;
    Ok(report.summary())
}

fn transitions(a: TransitionsArgs) -> Outcome {
    let bundle = load_model(&a.model)?;
    let seq = load_sequence(&a.sequence)?;
    let events = detect_transitions(&bundle, &seq, a.initial)?;
    let mut out = String::from("frame\tfrom\tto\tevidence\theuristic\n");
    for e in &events {
        let present: Vec<String> = e.evidence.present.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\tP: {{{}}} A: {}\t{}",
            e.frame,
            e.from,
            e.to,
            present.join(" / "),
            e.evidence.absent,
            e.heuristic
        );
    }
    Ok(out)
}

fn rules(a: RulesArgs) -> Outcome {
    if a.dump {
        return Ok(format_rule_tables());
    }
    let tree = match a.tree.expect("group requires one") {
        TreeKind::Absence => build_absence_tree(),
        TreeKind::Transition => build_transition_tree(Emotion::Surprise)?,
    };
    Ok(if a.dot { tree.to_dot() } else { tree.to_text() })
}
