//! Test-signal synthesis and file formats.
//!
//! Formats:
//!
//! * `csv_float`: one sample per line, optional `# sample_rate=<hz>` header
//!   (default rate 1.0). Other `#` lines and blank lines are ignored.
//! * `wav_pcm16_mono`: 16-bit PCM, one channel; samples are divided by 32768.
//! * `csv_mag`: `# N=<int> T=<int>` then one row per frequency bin with one
//!   comma-separated magnitude per frame, 17 significant digits.
//! * `pgm_logmag`: binary P5 image, width T, height N, row 0 is the highest
//!   bin, pixels linear in `log10(|S| + 1e-12)` over the data range.
//! * trace CSV: `iter,frame,t,lambda,K,C,combined`, one row per iteration
//!   and frame.
//! * layout CSV: `frame,t,lambda`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layout::FrameLayout;
use crate::optimizer::OptimizationTrace;
use crate::signal::Signal;
use crate::stft::ComplexSpectrogram;

/// Floor added to magnitudes before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// One constant-frequency piece of a piecewise sinusoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub frequency: f64,
    pub duration: f64,
    pub amplitude: f64,
}

impl SegmentSpec {
    pub fn new(frequency: f64, duration: f64, amplitude: f64) -> Self {
        SegmentSpec {
            frequency,
            duration,
            amplitude,
        }
    }

    /// Number of samples this segment occupies at `sample_rate`.
    pub fn sample_count(&self, sample_rate: f64) -> usize {
        (self.duration * sample_rate).round() as usize
    }
}

/// Sample rate of the reference piecewise sinusoid.
pub const REFERENCE_SAMPLE_RATE: f64 = 1000.0;
/// Uniform noise amplitude of the reference piecewise sinusoid.
pub const REFERENCE_NOISE: f64 = 0.05;

/// 50, 120 and 80 Hz pieces lasting 1400, 750 and 1946 samples at 1 kHz
/// (4096 samples in total). The changes of frequency fall inside frames of
/// a uniform 256-sample tiling.
pub fn reference_segments() -> Vec<SegmentSpec> {
    vec![
        SegmentSpec::new(50.0, 1.4, 1.0),
        SegmentSpec::new(120.0, 0.75, 1.0),
        SegmentSpec::new(80.0, 1.946, 1.0),
    ]
}

/// The reference signal: [`reference_segments`] at 1 kHz, phase continuous,
/// with uniform noise drawn from `seed`.
pub fn reference_signal(seed: u64) -> Signal {
    generate_piecewise_sine(
        &reference_segments(),
        REFERENCE_SAMPLE_RATE,
        true,
        REFERENCE_NOISE,
        seed,
    )
    .expect("reference segments are valid")
}

/// Concatenates sinusoidal segments. With `phase_continuous` each segment
/// starts at the phase where the previous one ended; otherwise every segment
/// is `sin(2 pi f n / fs)` on the global sample clock. Uniform noise in
/// `[-noise, noise]` is added from a generator seeded with `seed`.
pub fn generate_piecewise_sine(
    segments: &[SegmentSpec],
    sample_rate: f64,
    phase_continuous: bool,
    noise: f64,
    seed: u64,
) -> Result<Signal> {
    if segments.is_empty() {
        return Err(Error::Signal("no segments given".into()));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::Signal(format!(
            "sample rate {sample_rate} must be positive"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::Signal(format!(
            "noise amplitude {noise} must be >= 0"
        )));
    }
    let nyquist = 0.5 * sample_rate;
    for (i, seg) in segments.iter().enumerate() {
        if !(seg.frequency.is_finite() && seg.frequency >= 0.0 && seg.frequency < nyquist) {
            return Err(Error::Signal(format!(
                "segment {i}: frequency {} Hz not in [0, {nyquist}) Hz",
                seg.frequency
            )));
        }
        if !(seg.duration.is_finite() && seg.duration > 0.0) {
            return Err(Error::Signal(format!(
                "segment {i}: duration {} s must be positive",
                seg.duration
            )));
        }
        if !seg.amplitude.is_finite() {
            return Err(Error::Signal(format!(
                "segment {i}: amplitude is not finite"
            )));
        }
    }

    let mut samples = Vec::new();
    let mut phase = 0.0;
    for seg in segments {
        let count = seg.sample_count(sample_rate);
        let step = 2.0 * PI * seg.frequency / sample_rate;
        let start = samples.len();
        for j in 0..count {
            let angle = if phase_continuous {
                phase + step * j as f64
            } else {
                step * (start + j) as f64
            };
            samples.push(seg.amplitude * angle.sin());
        }
        phase = (phase + step * count as f64) % (2.0 * PI);
    }
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &mut samples {
            *s += rng.random_range(-noise..=noise);
        }
    }
    Signal::new(samples, sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalFormat {
    WavPcm16Mono,
    CsvFloat,
}

impl SignalFormat {
    /// `.wav` files are read as PCM, everything else as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("wav") => SignalFormat::WavPcm16Mono,
            _ => SignalFormat::CsvFloat,
        }
    }
}

pub fn read_signal(path: &Path, format: SignalFormat) -> Result<Signal> {
    match format {
        SignalFormat::WavPcm16Mono => read_wav(path),
        SignalFormat::CsvFloat => read_csv_signal(path),
    }
}

fn read_wav(path: &Path) -> Result<Signal> {
    let wav_err = |msg: String| Error::Wav {
        path: path.to_path_buf(),
        msg,
    };
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.len() == 0 {
        return Err(Error::EmptySignal);
    }
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_err(format!(
            "expected a mono file, found {} channels",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(wav_err(format!(
            "expected 16-bit integer PCM, found {}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .samples::<i16>()
        .enumerate()
        .map(|(i, s)| {
            s.map(|v| v as f64 / 32768.0)
                .map_err(|e| wav_err(format!("sample {i} (data byte {}): {e}", 2 * i)))
        })
        .collect::<Result<Vec<f64>>>()?;
    if samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    Signal::new(samples, spec.sample_rate as f64)
}

fn read_csv_signal(path: &Path) -> Result<Signal> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_signal(&text, path)
}

fn parse_csv_signal(text: &str, path: &Path) -> Result<Signal> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut sample_rate = 1.0;
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("sample_rate=") {
                sample_rate = value
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(idx + 1, format!("malformed sample rate '{value}'")))?;
            }
            continue;
        }
        let x: f64 = line
            .parse()
            .map_err(|_| parse_err(idx + 1, format!("malformed float '{line}'")))?;
        samples.push(x);
    }
    if samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    Signal::new(samples, sample_rate).map_err(|e| match e {
        Error::Signal(msg) => parse_err(0, msg),
        other => other,
    })
}

/// Writes `csv_float` with a sample-rate header.
pub fn write_signal_csv(signal: &Signal, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(signal.len() * 24);
    let _ = writeln!(out, "# sample_rate={}", signal.sample_rate());
    for s in signal.samples() {
        let _ = writeln!(out, "{s}");
    }
    write_file(path, out.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrogramFormat {
    CsvMagnitude,
    PgmLogMagnitude,
}

pub fn write_spectrogram(
    spec: &ComplexSpectrogram,
    layout: &FrameLayout,
    path: &Path,
    format: SpectrogramFormat,
) -> Result<()> {
    let bytes = match format {
        SpectrogramFormat::CsvMagnitude => csv_magnitudes(spec, layout).into_bytes(),
        SpectrogramFormat::PgmLogMagnitude => pgm_log_magnitudes(spec),
    };
    write_file(path, &bytes)
}

fn csv_magnitudes(spec: &ComplexSpectrogram, layout: &FrameLayout) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# N={} T={}", layout.support, spec.frames());
    for f in 0..spec.bins() {
        for i in 0..spec.frames() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", spec.magnitude(i, f));
        }
        out.push('\n');
    }
    out
}

/// Encodes the log-magnitude spectrogram as a binary PGM.
pub fn pgm_log_magnitudes(spec: &ComplexSpectrogram) -> Vec<u8> {
    let (frames, bins) = (spec.frames(), spec.bins());
    let logs: Vec<f64> = spec
        .rows()
        .flatten()
        .map(|c| (c.norm() + LOG_FLOOR).log10())
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{frames} {bins}\n255\n").into_bytes();
    out.reserve(frames * bins);
    for f in (0..bins).rev() {
        for i in 0..frames {
            let pixel = if hi > lo {
                (255.0 * (logs[i * bins + f] - lo) / (hi - lo)).round() as u8
            } else {
                0
            };
            out.push(pixel);
        }
    }
    out
}

/// Reads a `csv_mag` file back as `(N, magnitudes[bin][frame])`.
pub fn read_spectrogram_csv(path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?;
    let mut support = None;
    for field in header.trim_start_matches('#').split_whitespace() {
        if let Some(v) = field.strip_prefix("N=") {
            support = v.parse().ok();
        }
    }
    let support = support.ok_or_else(|| parse_err(1, format!("bad header '{header}'")))?;
    let rows = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| {
            l.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(idx + 1, format!("malformed float '{v}'")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((support, rows))
}

pub fn write_trace(trace: &OptimizationTrace, path: &Path) -> Result<()> {
    let mut out = String::from("iter,frame,t,lambda,K,C,combined\n");
    for rec in &trace.records {
        let v = &rec.value;
        for (i, (t, l)) in rec
            .layout
            .positions
            .iter()
            .zip(&rec.layout.lengths)
            .enumerate()
        {
            let _ = writeln!(
                out,
                "{},{i},{t},{l},{},{},{}",
                rec.iteration, v.kurtosis, v.coverage, v.combined
            );
        }
    }
    write_file(path, out.as_bytes())
}

pub fn write_layout(layout: &FrameLayout, path: &Path) -> Result<()> {
    let mut out = String::from("frame,t,lambda\n");
    for (i, (t, l)) in layout.positions.iter().zip(&layout.lengths).enumerate() {
        let _ = writeln!(out, "{i},{t},{l}");
    }
    write_file(path, out.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
