use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dstft::gradcheck::{run_gradcheck, GradcheckConfig};
use dstft::io::{
    generate_piecewise_sine, read_signal, write_layout, write_signal_csv, write_spectrogram,
    write_trace, SegmentSpec, SignalFormat, SpectrogramFormat,
};
use dstft::{
    current_threads, dstft_forward, init_uniform, run_from, Combiner, FrameLayout, OptimizerConfig,
    WindowKind,
};

/// Differentiable STFT with continuous frame positions and window lengths.
///
/// All positions, hops, supports and window lengths are in samples;
/// frequencies in Hz; durations in seconds.
#[derive(Debug, Parser)]
#[command(name = "dstft", version)]
struct Cli {
    /// Worker threads for per-frame work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0, value_name = "COUNT")]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a piecewise sinusoid and write it as csv_float.
    Gen(GenArgs),
    /// Classical spectrogram on a uniform integer grid.
    Stft(StftArgs),
    /// Adapt frame positions and window lengths by gradient ascent.
    Adapt(AdaptArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Comma-separated segments FREQ_HZ:DURATION_S:AMPLITUDE.
    #[arg(long, required = true, value_delimiter = ',', value_parser = parse_segment)]
    segments: Vec<SegmentSpec>,
    /// Sample rate in Hz.
    #[arg(long, default_value_t = 1000.0, value_parser = positive)]
    fs: f64,
    /// Amplitude of the additive uniform noise (signal units).
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    noise: f64,
    /// Seed of the noise generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restart every segment on the global sample clock instead of
    /// continuing the phase of the previous segment.
    #[arg(long)]
    phase_reset: bool,
    /// Output csv_float path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StftArgs {
    /// Input signal (.wav = 16-bit PCM mono, anything else csv_float).
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Window support N and DFT size, in samples.
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(2..))]
    support: u64,
    /// Hop between frames, in samples.
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    hop: u64,
    /// Tapering function: hann or gauss.
    #[arg(long, default_value = "hann", value_parser = parse_window)]
    window: WindowKind,
    /// Magnitude CSV output (bins x frames).
    #[arg(long)]
    out_spec: Option<PathBuf>,
    /// Log-magnitude PGM output.
    #[arg(long)]
    out_img: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AdaptArgs {
    /// Input signal (.wav = 16-bit PCM mono, anything else csv_float).
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Window support N and DFT size, in samples.
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(2..))]
    support: u64,
    /// Number of frames T.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    frames: u64,
    /// Maximum number of ascent steps.
    #[arg(long, default_value_t = 500)]
    iters: usize,
    /// Position step size, in samples per unit gradient.
    #[arg(long, default_value_t = 0.1, value_parser = non_negative)]
    lr_pos: f64,
    /// Window-length step size, in samples per unit gradient.
    #[arg(long, default_value_t = 0.1, value_parser = non_negative)]
    lr_len: f64,
    /// Gradient combiner: minnorm or weighted:ALPHA with ALPHA in [0, 1].
    #[arg(long, default_value = "minnorm", value_parser = parse_combiner)]
    combiner: Combiner,
    /// Share one hop and one window length across all frames.
    #[arg(long)]
    share: bool,
    /// Relative change of the combined objective counted as stalled.
    #[arg(long, default_value_t = 1e-9, value_parser = positive_or_inf)]
    tol: f64,
    /// Tapering function: hann or gauss.
    #[arg(long, default_value = "hann", value_parser = parse_window)]
    window: WindowKind,
    /// Smallest window length, in samples (at least 2).
    #[arg(long, default_value_t = 2.0, value_parser = positive)]
    lambda_min: f64,
    /// Combine the raw objective gradients instead of unit-norm ones.
    #[arg(long)]
    raw_gradients: bool,
    /// Magnitude CSV of the final spectrogram.
    #[arg(long)]
    out_spec: Option<PathBuf>,
    /// Log-magnitude PGM of the final spectrogram.
    #[arg(long)]
    out_img: Option<PathBuf>,
    /// Per-iteration trace CSV.
    #[arg(long)]
    out_trace: Option<PathBuf>,
    /// Final layout CSV.
    #[arg(long)]
    out_layout: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Seed of the first instance; case k uses SEED + k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random instances.
    #[arg(long, default_value_t = 100)]
    cases: usize,
    /// Finite-difference step, in samples.
    #[arg(long, default_value_t = 1e-4, value_parser = positive)]
    step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4, value_parser = non_negative)]
    rtol: f64,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("'{s}' is not a number"))
}

fn positive(s: &str) -> Result<f64, String> {
    match parse_f64(s)? {
        v if v.is_finite() && v > 0.0 => Ok(v),
        v => Err(format!("{v} must be a positive finite number")),
    }
}

fn positive_or_inf(s: &str) -> Result<f64, String> {
    match parse_f64(s)? {
        v if v > 0.0 => Ok(v),
        v => Err(format!("{v} must be positive")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match parse_f64(s)? {
        v if v.is_finite() && v >= 0.0 => Ok(v),
        v => Err(format!("{v} must be a finite number >= 0")),
    }
}

fn parse_segment(s: &str) -> Result<SegmentSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [f, d, a] = parts[..] else {
        return Err(format!("segment '{s}' is not FREQ:DURATION:AMPLITUDE"));
    };
    let (f, d, a) = (parse_f64(f)?, parse_f64(d)?, parse_f64(a)?);
    if !(f.is_finite() && f >= 0.0) {
        return Err(format!("segment '{s}': frequency must be >= 0 Hz"));
    }
    if !(d.is_finite() && d > 0.0) {
        return Err(format!("segment '{s}': duration must be > 0 s"));
    }
    if !a.is_finite() {
        return Err(format!("segment '{s}': amplitude must be finite"));
    }
    Ok(SegmentSpec::new(f, d, a))
}

fn parse_window(s: &str) -> Result<WindowKind, String> {
    s.parse().map_err(|e: dstft::Error| e.to_string())
}

fn parse_combiner(s: &str) -> Result<Combiner, String> {
    s.parse().map_err(|e: dstft::Error| e.to_string())
}

/// Failure after argument parsing. Flag combinations that clap cannot see
/// (frequency against sample rate, lambda-min against support) are usage
/// errors and exit with 2; everything else exits with 1.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<dstft::Error> for Failure {
    fn from(e: dstft::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

/// Rejects output paths whose directory does not exist, before any work.
fn check_outputs<'a>(paths: impl IntoIterator<Item = &'a Option<PathBuf>>) -> CmdResult {
    for path in paths.into_iter().flatten() {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        if !dir.is_dir() {
            return Err(Failure::Usage(format!(
                "{}: directory {} does not exist",
                path.display(),
                dir.display()
            )));
        }
        if path.is_dir() {
            return Err(Failure::Usage(format!(
                "{}: is a directory",
                path.display()
            )));
        }
    }
    Ok(())
}

fn load(path: &Path) -> Result<dstft::Signal, Failure> {
    Ok(read_signal(path, SignalFormat::from_path(path))?)
}

fn write_outputs(
    spec_path: &Option<PathBuf>,
    img_path: &Option<PathBuf>,
    spec: &dstft::ComplexSpectrogram,
    layout: &FrameLayout,
) -> CmdResult {
    if let Some(p) = spec_path {
        write_spectrogram(spec, layout, p, SpectrogramFormat::CsvMagnitude)?;
    }
    if let Some(p) = img_path {
        write_spectrogram(spec, layout, p, SpectrogramFormat::PgmLogMagnitude)?;
    }
    Ok(())
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or("-".into(), |p| p.display().to_string())
}

fn cmd_gen(a: &GenArgs) -> CmdResult {
    check_outputs([&Some(a.out.clone())])?;
    let nyquist = 0.5 * a.fs;
    if let Some(seg) = a.segments.iter().find(|s| s.frequency >= nyquist) {
        return Err(Failure::Usage(format!(
            "segment frequency {} Hz is not below the Nyquist frequency {nyquist} Hz",
            seg.frequency
        )));
    }
    let signal = generate_piecewise_sine(&a.segments, a.fs, !a.phase_reset, a.noise, a.seed)?;
    write_signal_csv(&signal, &a.out)?;
    println!("M = {} samples", signal.len());
    println!("duration = {} s", signal.duration());
    Ok(())
}

fn cmd_stft(a: &StftArgs) -> CmdResult {
    check_outputs([&a.out_spec, &a.out_img])?;
    let signal = load(&a.input)?;
    let (n, hop) = (a.support as usize, a.hop as usize);
    let m = signal.len();
    let frames = if m < n { 1 } else { (m - n) / hop + 1 };
    let layout = FrameLayout::uniform(n, 0, hop, frames, a.window)?;
    let spec = dstft_forward(&signal, &layout)?;
    write_outputs(&a.out_spec, &a.out_img, &spec, &layout)?;
    println!("M = {m} samples, N = {n}, hop = {hop}, T = {frames} frames");
    Ok(())
}

fn print_value(label: &str, v: &dstft::ObjectiveValue) {
    println!(
        "{label}: K = {:.6}  C = {:.6}  combined = {:.6}",
        v.kurtosis, v.coverage, v.combined
    );
}

fn cmd_adapt(a: &AdaptArgs) -> CmdResult {
    check_outputs([&a.out_spec, &a.out_img, &a.out_trace, &a.out_layout])?;
    let mut config = OptimizerConfig::new(a.support as usize);
    config.window = a.window;
    config.lr_position = a.lr_pos;
    config.lr_length = a.lr_len;
    config.max_iters = a.iters;
    config.tolerance = a.tol;
    config.combiner = a.combiner;
    config.share_parameters = a.share;
    config.normalize_gradients = !a.raw_gradients;
    config.lambda_min = a.lambda_min;
    config
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;

    let signal = load(&a.input)?;
    let init = init_uniform(
        signal.len(),
        a.frames as usize,
        config.support,
        config.window,
    )?;
    let (layout, trace) = run_from(&signal, init, &config)?;
    let spec = dstft_forward(&signal, &layout)?;

    write_outputs(&a.out_spec, &a.out_img, &spec, &layout)?;
    if let Some(p) = &a.out_trace {
        write_trace(&trace, p)?;
    }
    if let Some(p) = &a.out_layout {
        write_layout(&layout, p)?;
    }
    let (first, last) = (trace.first(), trace.last());
    if let (Some(first), Some(last)) = (first, last) {
        print_value("initial", &first.value);
        print_value("final", &last.value);
        println!(
            "iterations = {}{}",
            last.iteration,
            if trace.converged { " (converged)" } else { "" }
        );
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CmdResult {
    if a.cases == 0 {
        eprintln!("warning: --cases 0 checks nothing; passing vacuously");
    }
    let report = run_gradcheck(&GradcheckConfig {
        seed: a.seed,
        cases: a.cases,
        step: a.step,
        rtol: a.rtol,
    })?;
    for c in &report.classes {
        let seed = c.worst_seed.map_or("-".into(), |s| s.to_string());
        println!(
            "{:<10} {:<9} worst rel err {:.3e}  (seed {seed}, {} checks)",
            c.loss.to_string(),
            c.param.to_string(),
            c.worst,
            c.checks
        );
    }
    if report.skipped_kinks > 0 {
        println!("skipped {} coverage probes at kinks", report.skipped_kinks);
    }
    if report.passed() {
        println!("PASS: all errors below {:e}", a.rtol);
        return Ok(());
    }
    let mut msg = format!(
        "{} checks at or above rtol {:e}:",
        report.failures.len(),
        a.rtol
    );
    for f in &report.failures {
        let _ = write!(
            msg,
            "\n  seed {} {} {} frame {}: analytic {:e} numeric {:e} rel err {:.3e}",
            f.seed, f.loss, f.param, f.frame, f.analytic, f.numeric, f.rel_err
        );
    }
    Err(Failure::Runtime(msg))
}

fn banner(cli: &Cli) -> String {
    let mut b = format!(
        "dstft {} threads={}",
        env!("CARGO_PKG_VERSION"),
        current_threads()
    );
    let _ = match &cli.command {
        Command::Gen(a) => {
            let segs: Vec<String> = a
                .segments
                .iter()
                .map(|s| format!("{}:{}:{}", s.frequency, s.duration, s.amplitude))
                .collect();
            write!(
                b,
                " gen segments={} fs={} noise={} seed={} phase_reset={} out={}",
                segs.join(","),
                a.fs,
                a.noise,
                a.seed,
                a.phase_reset,
                a.out.display()
            )
        }
        Command::Stft(a) => write!(
            b,
            " stft in={} support={} hop={} window={} out_spec={} out_img={}",
            a.input.display(),
            a.support,
            a.hop,
            a.window,
            opt_path(&a.out_spec),
            opt_path(&a.out_img)
        ),
        Command::Adapt(a) => write!(
            b,
            " adapt in={} support={} frames={} iters={} lr_pos={} lr_len={} combiner={} \
             share={} tol={:e} window={} lambda_min={} raw_gradients={} out_spec={} \
             out_img={} out_trace={} out_layout={}",
            a.input.display(),
            a.support,
            a.frames,
            a.iters,
            a.lr_pos,
            a.lr_len,
            a.combiner,
            a.share,
            a.tol,
            a.window,
            a.lambda_min,
            a.raw_gradients,
            opt_path(&a.out_spec),
            opt_path(&a.out_img),
            opt_path(&a.out_trace),
            opt_path(&a.out_layout)
        ),
        Command::Gradcheck(a) => write!(
            b,
            " gradcheck seed={} cases={} step={:e} rtol={:e}",
            a.seed, a.cases, a.step, a.rtol
        ),
    };
    b
}

#[cfg(feature = "parallel")]
fn init_threads(threads: usize) -> CmdResult {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn init_threads(threads: usize) -> CmdResult {
    if threads > 1 {
        eprintln!("warning: built without the parallel feature; running on 1 thread");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads(cli.threads).and_then(|()| {
        eprintln!("{}", banner(&cli));
        match &cli.command {
            Command::Gen(a) => cmd_gen(a),
            Command::Stft(a) => cmd_stft(a),
            Command::Adapt(a) => cmd_adapt(a),
            Command::Gradcheck(a) => cmd_gradcheck(a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
