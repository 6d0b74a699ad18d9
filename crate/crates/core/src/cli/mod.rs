//! `gesture` command-line interface.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 argument error, 3 the
//! benchmark saw Mahalanobis accuracy fall below Euclidean.

pub mod bench;
pub mod track;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::classifier::{load_model, save_model, train, GestureModel, NeighborIndex, TrainConfig};
use crate::correlation::{find_peaks, ncc};
use crate::error::Error;
use crate::imgio::{
    load_dataset, read_pgm_file, synth_dataset, write_dataset, SynthParams, NEUTRAL_LABEL,
    SYNTH_GRID_CAPACITY,
};
use crate::metrics::{Metric, DEFAULT_SHRINKAGE};
use crate::subspace::{Retain, DEFAULT_VARIANCE_FRACTION};

use self::bench::{run_benchmark, BenchConfig};
use self::track::{track_step, TrackState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REGRESSION: i32 = 3;

/// File written next to the class directories by `synth`.
pub const SYNTH_METADATA_FILE: &str = "metadata.tsv";

#[derive(Debug, Parser)]
#[command(
    name = "gesture",
    version,
    about = "Facial gesture recognition and intensity scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic expression dataset
    Synth(SynthArgs),
    /// Train a face-space model from a labeled dataset directory
    Train(TrainArgs),
    /// Classify images by minimum distance to the class references
    Classify(ClassifyArgs),
    /// Find template occurrences in frames by normalized cross-correlation
    Locate(LocateArgs),
    /// Score expression intensity relative to the neutral class
    Intensity(IntensityArgs),
    /// Compare the four distance measures on synthetic data
    Bench(BenchArgs),
    /// Track motion across a frame sequence by frame differencing
    Track(TrackArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    per_class: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of principal components to keep
    #[arg(long, conflicts_with = "fraction", value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    /// Cumulative variance fraction to retain
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SHRINKAGE)]
    lambda: f64,
    #[arg(long, default_value = "md", value_parser = parse_metric)]
    metric: Metric,
    #[arg(long, default_value = NEUTRAL_LABEL)]
    neutral: String,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Append the distance to every class
    #[arg(long)]
    all: bool,
    /// Compare with every training image of DATA instead of class means
    #[arg(long, requires = "data")]
    nn: bool,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct LocateArgs {
    #[arg(long)]
    template: PathBuf,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    threshold: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    min_sep: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    max_peaks: u64,
    /// Classify the best-peak window of each frame with this model
    #[arg(long)]
    classify_model: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    #[arg(required = true)]
    frames: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct IntensityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    header: bool,
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Training images per class; the test split has the same size unless
    /// --test-per-class is given
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 0.15)]
    sigma: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_SHRINKAGE)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_VARIANCE_FRACTION)]
    fraction: f64,
    #[arg(long)]
    header: bool,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    header: bool,
    #[arg(required = true)]
    frames: Vec<PathBuf>,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure of a subcommand, mapped onto the exit-code contract.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
    Regression(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

/// Runs the CLI with `args` (including the program name), writing TSV to
/// `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(rendered.as_bytes());
            } else {
                let _ = out.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Classify(a) => cmd_classify(a, out),
        Command::Locate(a) => cmd_locate(a, out),
        Command::Intensity(a) => cmd_intensity(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Track(a) => cmd_track(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_RUNTIME
        }
        Err(Failure::Regression(m)) => {
            let _ = writeln!(err, "regression: {m}");
            EXIT_REGRESSION
        }
    }
}

/// Process entry point used by the `gesture` binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let code = run(std::env::args_os(), &mut out, &mut err);
    let _ = out.flush();
    code
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> CmdResult {
    if a.classes > SYNTH_GRID_CAPACITY {
        return Err(Failure::Usage(format!(
            "--classes {} exceeds the generator capacity of {SYNTH_GRID_CAPACITY}",
            a.classes
        )));
    }
    if a.classes < 2 || a.per_class < 1 || a.width < 8 || a.height < 8 {
        return Err(Failure::Usage(
            "need --classes >= 2, --per-class >= 1, --width and --height >= 8".into(),
        ));
    }
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(Failure::Usage(format!(
            "--sigma must be >= 0, got {}",
            a.sigma
        )));
    }
    let params = SynthParams {
        classes: a.classes,
        per_class: a.per_class,
        width: a.width,
        height: a.height,
        noise_sigma: a.sigma,
        seed: a.seed,
    };
    let data = synth_dataset(&params)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_dataset(&a.out, &data)?;
    let meta = a.out.join(SYNTH_METADATA_FILE);
    fs::write(&meta, params.metadata()).map_err(|e| Error::io(&meta, e))?;
    writeln!(
        out,
        "wrote {} images in {} classes to {}",
        data.len(),
        data.labels().len(),
        a.out.display()
    )?;
    Ok(())
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> CmdResult {
    let retain = match (a.k, a.fraction) {
        (Some(k), _) => Retain::Components(k as usize),
        (None, Some(f)) if f > 0.0 && f <= 1.0 => Retain::Fraction(f),
        (None, Some(f)) => {
            return Err(Failure::Usage(format!(
                "--fraction must lie in (0, 1], got {f}"
            )))
        }
        (None, None) => Retain::Fraction(DEFAULT_VARIANCE_FRACTION),
    };
    if !(0.0..=1.0).contains(&a.lambda) {
        return Err(Failure::Usage(format!(
            "--lambda must lie in [0, 1], got {}",
            a.lambda
        )));
    }
    let data = load_dataset(&a.data)?;
    let model = train(
        &data,
        &TrainConfig {
            retain,
            lambda: a.lambda,
            metric: a.metric,
            neutral_label: a.neutral,
        },
    )?;
    fs::write(&a.out, save_model(&model)).map_err(|e| Error::io(&a.out, e))?;
    writeln!(
        out,
        "k={} classes={} n={}",
        model.k(),
        model.classes().len(),
        data.len()
    )?;
    Ok(())
}

fn read_model(path: &Path) -> Result<GestureModel, Failure> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_model(&bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Attaches the offending file to an error message.
fn at(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

fn cmd_classify(a: ClassifyArgs, out: &mut dyn Write) -> CmdResult {
    let model = read_model(&a.model)?;
    let train_data = match (&a.nn, &a.data) {
        (true, Some(dir)) => Some(load_dataset(dir)?),
        _ => None,
    };
    let index = train_data
        .as_ref()
        .map(|d| NeighborIndex::new(&model, d))
        .transpose()?;
    if a.header {
        write!(out, "path\tlabel\tdistance")?;
        if a.all {
            write!(out, "\tdistances")?;
        }
        writeln!(out)?;
    }
    for path in &a.images {
        let img = read_pgm_file(path).map_err(at(path))?;
        let result = match &index {
            Some(index) => index.classify(&img),
            None => model.classify(&img),
        }
        .map_err(at(path))?;
        write!(
            out,
            "{}\t{}\t{:.6}",
            path.display(),
            result.label,
            result.distance
        )?;
        if a.all {
            for (label, d) in &result.per_class {
                write!(out, "\t{label}={d:.6}")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

fn cmd_locate(a: LocateArgs, out: &mut dyn Write) -> CmdResult {
    let template = read_pgm_file(&a.template).map_err(at(&a.template))?;
    let model = a.classify_model.as_deref().map(read_model).transpose()?;
    if a.header {
        write!(out, "path\trow\tcol\tscore")?;
        if model.is_some() {
            write!(out, "\tlabel")?;
        }
        writeln!(out)?;
    }
    for path in &a.frames {
        let frame = read_pgm_file(path).map_err(at(path))?;
        let map = ncc(&frame, &template).map_err(at(path))?;
        let peaks = find_peaks(&map, a.threshold, a.min_sep as usize, a.max_peaks as usize);
        let label = match (&model, peaks.first()) {
            (Some(m), Some(best)) => {
                let window = frame
                    .crop(best.row, best.col, template.width(), template.height())
                    .map_err(at(path))?;
                Some(m.classify(&window).map_err(at(path))?.label)
            }
            _ => None,
        };
        for (i, p) in peaks.iter().enumerate() {
            write!(
                out,
                "{}\t{}\t{}\t{:.6}",
                path.display(),
                p.row,
                p.col,
                p.score
            )?;
            if let Some(label) = &label {
                if i == 0 {
                    write!(out, "\t{label}")?;
                } else {
                    write!(out, "\t-")?;
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn cmd_intensity(a: IntensityArgs, out: &mut dyn Write) -> CmdResult {
    let model = read_model(&a.model)?;
    if a.header {
        writeln!(out, "path\traw\tscore")?;
    }
    for path in &a.images {
        let img = read_pgm_file(path).map_err(at(path))?;
        let v = model.intensity(&img).map_err(at(path))?;
        writeln!(out, "{}\t{:.6}\t{:.6}", path.display(), v.raw, v.score)?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> CmdResult {
    if a.classes < 2 || a.classes > SYNTH_GRID_CAPACITY {
        return Err(Failure::Usage(format!(
            "--classes must lie in [2, {SYNTH_GRID_CAPACITY}], got {}",
            a.classes
        )));
    }
    if a.per_class < 1 || a.test_per_class == Some(0) || a.width < 8 || a.height < 8 {
        return Err(Failure::Usage(
            "need --per-class >= 1, --test-per-class >= 1, --width and --height >= 8".into(),
        ));
    }
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(Failure::Usage(format!(
            "--sigma must be >= 0, got {}",
            a.sigma
        )));
    }
    if !(0.0..=1.0).contains(&a.lambda) || !(a.fraction > 0.0 && a.fraction <= 1.0) {
        return Err(Failure::Usage(
            "--lambda must lie in [0, 1] and --fraction in (0, 1]".into(),
        ));
    }
    if a.seeds.is_empty() {
        return Err(Failure::Usage("--seeds needs at least one seed".into()));
    }
    let report = run_benchmark(&BenchConfig {
        classes: a.classes,
        train_per_class: a.per_class,
        test_per_class: a.test_per_class.unwrap_or(a.per_class),
        width: a.width,
        height: a.height,
        sigma: a.sigma,
        seeds: a.seeds,
        retain: Retain::Fraction(a.fraction),
        lambda: a.lambda,
    })?;
    out.write_all(report.to_tsv(a.header).as_bytes())?;
    if !report.ordering_holds() {
        return Err(Failure::Regression(format!(
            "mean md accuracy {:.6} < mean ed accuracy {:.6}",
            report.row(Metric::Mahalanobis).mean,
            report.row(Metric::Euclidean).mean
        )));
    }
    Ok(())
}

fn cmd_track(a: TrackArgs, out: &mut dyn Write) -> CmdResult {
    let mut state = TrackState::new(a.alpha).map_err(|e| Failure::Usage(e.to_string()))?;
    if !a.threshold.is_finite() {
        return Err(Failure::Usage("--threshold must be finite".into()));
    }
    let mut frames = a.frames;
    frames.sort();
    if a.header {
        writeln!(out, "path\ttop\tleft\tbottom\tright")?;
    }
    for path in &frames {
        let frame = read_pgm_file(path).map_err(at(path))?;
        let (next, bbox) = track_step(state, &frame, a.threshold).map_err(at(path))?;
        state = next;
        match bbox {
            Some(b) => writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                path.display(),
                b.top,
                b.left,
                b.bottom,
                b.right
            )?,
            None => writeln!(out, "{}\t-", path.display())?,
        }
    }
    Ok(())
}
