//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;

use common::{l2, max_abs, max_diff, naive_dstft, noise_signal, rng};
use dstft::gradcheck::{run_gradcheck, GradcheckConfig};
use dstft::io::{
    reference_signal, write_layout, write_spectrogram, write_trace, SpectrogramFormat,
};
use dstft::{
    classical_stft, combine_objectives, coverage_objective, dstft_forward, kurtosis_objective, run,
    Combiner, ComplexSpectrogram, FrameLayout, GradientSet, OptimizerConfig, Signal, WindowKind,
};

const ORACLE_RTOL: f64 = 1e-12;
const ORACLE_SEEDS: u64 = 50;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);

const GRAD_CASES: usize = 100;
const GRAD_STEP: f64 = 1e-4;
const GRAD_RTOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(30);

const CROSSINGS: u64 = 100;
const EPSILONS: [f64; 3] = [1e-2, 1e-3, 1e-4];
/// Successive differences must shrink by a factor within [10/10, 10*10].
const RATIO_BAND: (f64, f64) = (1.0, 100.0);
const SLOPE_STEP: f64 = 1e-5;
const SLOPE_RTOL: f64 = 1e-3;

const SCALE_RTOL: f64 = 1e-10;
const COVERAGE_FUZZ: u64 = 10_000;
const GRID_STEP: f64 = 1e-4;
const GRID_TOL: f64 = 1e-3;

const REF_SUPPORT: usize = 256;
const REF_FRAMES: usize = 16;
const REF_ITERS: usize = 500;
const REF_MIN_COVERAGE: f64 = 0.9;
const REF_BUDGET: Duration = Duration::from_secs(60);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// 1. Integer positions with lambda = N reproduce the classical transform.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_naive = 0.0f64;
    for seed in 0..ORACLE_SEEDS {
        let mut r = rng(1000 + seed);
        let n = [16usize, 64, 256][(seed % 3) as usize];
        let m = r.random_range(n..=1024);
        let signal = noise_signal(&mut r, m);
        let window = if seed % 2 == 0 {
            WindowKind::Hann
        } else {
            WindowKind::Gaussian
        };
        let mut starts: Vec<i64> = (0..8)
            .map(|_| r.random_range(-(n as i64)..m as i64))
            .collect();
        starts.sort_unstable();
        starts.dedup();
        let layout = FrameLayout::new(
            n,
            starts.iter().map(|&b| b as f64).collect(),
            vec![n as f64; starts.len()],
            window,
        )
        .unwrap();
        let fast = dstft_forward(&signal, &layout).unwrap();
        let slow = classical_stft(&signal, &starts, n, window, n as f64).unwrap();
        let naive = naive_dstft(&signal, &layout);
        for (i, naive_row) in naive.iter().enumerate() {
            // normwise: bin errors relative to the frame's largest bin
            let scale = max_abs(slow.row(i)).max(f64::MIN_POSITIVE);
            worst = worst.max(max_diff(fast.row(i), slow.row(i)) / scale);
            worst_naive = worst_naive.max(max_diff(naive_row, slow.row(i)) / scale);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= ORACLE_RTOL && worst_naive <= ORACLE_RTOL && elapsed < ORACLE_BUDGET,
        format!(
            "{ORACLE_SEEDS} signals, worst rel err {worst:.2e} (test-side sum {worst_naive:.2e}), \
             tol {ORACLE_RTOL:e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// 2. Analytic gradients against central differences.
fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let report = run_gradcheck(&GradcheckConfig {
        seed: 0,
        cases: GRAD_CASES,
        step: GRAD_STEP,
        rtol: GRAD_RTOL,
    })
    .unwrap();
    let elapsed = start.elapsed();
    let worst = report.classes.iter().map(|c| c.worst).fold(0.0, f64::max);
    let all_checked = report.classes.iter().all(|c| c.checks > 0);
    outcome(
        report.passed() && all_checked && elapsed < GRAD_BUDGET,
        format!(
            "{GRAD_CASES} cases, step {GRAD_STEP:e}, worst rel err {worst:.2e} < {GRAD_RTOL:e}, \
             {} failures, {:.2}s",
            report.failures.len(),
            elapsed.as_secs_f64()
        ),
    )
}

struct Crossing {
    signal: Signal,
    layout: FrameLayout,
    frame: usize,
    p: f64,
}

/// A random Hann layout with one frame sitting on the integer `p`. Half of
/// the crossings use the full length lambda = N.
fn crossing(seed: u64) -> Crossing {
    let mut r = rng(5000 + seed);
    let n = [16usize, 32, 64][r.random_range(0..3)];
    let m = r.random_range(2 * n..=4 * n);
    let signal = noise_signal(&mut r, m);
    let p = r.random_range(0..(m - n) as i64) as f64;
    let lambda = if seed.is_multiple_of(2) {
        n as f64
    } else {
        r.random_range(0.3 * n as f64..n as f64)
    };
    let layout = FrameLayout::new(n, vec![p], vec![lambda], WindowKind::Hann).unwrap();
    Crossing {
        signal,
        layout,
        frame: 0,
        p,
    }
}

fn frame_at(c: &Crossing, t: f64) -> Vec<Complex64> {
    let mut l = c.layout.clone();
    l.positions[c.frame] = t;
    dstft_forward(&c.signal, &l).unwrap().row(c.frame).to_vec()
}

/// 3. The jump across an integer position vanishes linearly.
fn continuity() -> Outcome {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for seed in 0..CROSSINGS {
        let c = crossing(seed);
        let gaps: Vec<f64> = EPSILONS
            .iter()
            .map(|&e| {
                let d: Vec<Complex64> = frame_at(&c, c.p - e)
                    .iter()
                    .zip(frame_at(&c, c.p + e))
                    .map(|(a, b)| a - b)
                    .collect();
                l2(&d)
            })
            .collect();
        for w in gaps.windows(2) {
            let ratio = w[0] / w[1];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    outcome(
        lo >= RATIO_BAND.0 && hi <= RATIO_BAND.1,
        format!(
            "{CROSSINGS} crossings, eps {EPSILONS:?}, successive ratios in [{lo:.4}, {hi:.4}] \
             (band [{}, {}])",
            RATIO_BAND.0, RATIO_BAND.1
        ),
    )
}

/// 4. One-sided slopes agree at integer positions.
fn differentiability() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..CROSSINGS {
        let c = crossing(seed);
        let h = SLOPE_STEP;
        let (below, at, above) = (
            frame_at(&c, c.p - h),
            frame_at(&c, c.p),
            frame_at(&c, c.p + h),
        );
        let fwd: Vec<Complex64> = above.iter().zip(&at).map(|(a, b)| (a - b) / h).collect();
        let bwd: Vec<Complex64> = at.iter().zip(&below).map(|(a, b)| (a - b) / h).collect();
        let diff: Vec<Complex64> = fwd.iter().zip(&bwd).map(|(a, b)| a - b).collect();
        worst = worst.max(l2(&diff) / l2(&fwd).max(l2(&bwd)));
    }
    outcome(
        worst < SLOPE_RTOL,
        format!("{CROSSINGS} crossings, step {SLOPE_STEP:e}, worst slope mismatch {worst:.2e} < {SLOPE_RTOL:e}"),
    )
}

fn random_layout(r: &mut impl Rng, n: usize, m: usize, frames: usize) -> FrameLayout {
    let mut positions: Vec<f64> = (0..frames)
        .map(|_| r.random_range(-(n as f64)..m as f64))
        .collect();
    positions.sort_by(f64::total_cmp);
    positions.dedup();
    let lengths = (0..positions.len())
        .map(|_| r.random_range(1e-3..=n as f64))
        .collect();
    FrameLayout::new(n, positions, lengths, WindowKind::Hann).unwrap()
}

fn min_norm_grid(g1: &GradientSet, g2: &GradientSet) -> (f64, f64) {
    let steps = (1.0 / GRID_STEP).round() as usize;
    (0..=steps)
        .map(|k| {
            let gamma = k as f64 * GRID_STEP;
            let norm = g1
                .flat()
                .zip(g2.flat())
                .map(|(a, b)| (gamma * a + (1.0 - gamma) * b).powi(2))
                .sum::<f64>()
                .sqrt();
            (gamma, norm)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

/// 5. Objective values and the combiner.
fn objectives() -> Outcome {
    let mut r = rng(7);
    let mut notes = Vec::new();
    let mut pass = true;

    // scale invariance of the weighted kurtosis
    let mut scale_err = 0.0f64;
    for _ in 0..20 {
        let n = 64;
        let signal = noise_signal(&mut r, 600);
        let layout = random_layout(&mut r, n, 600, 6);
        let k = kurtosis_objective(&dstft_forward(&signal, &layout).unwrap(), &layout).unwrap();
        for c in [1e-3, -2.5, 1e4] {
            let kc =
                kurtosis_objective(&dstft_forward(&signal.scaled(c), &layout).unwrap(), &layout)
                    .unwrap();
            scale_err = scale_err.max((kc - k).abs() / k);
        }
    }
    pass &= scale_err <= SCALE_RTOL;
    notes.push(format!("scale {scale_err:.1e}"));

    // flat and one-hot spectra
    let f = 32usize;
    let layout =
        FrameLayout::new(f, vec![0.0, 7.0, 30.0], vec![f as f64; 3], WindowKind::Hann).unwrap();
    let flat = ComplexSpectrogram::from_rows(
        (0..3)
            .map(|i| {
                (0..f)
                    .map(|b| Complex64::from_polar(0.5 + i as f64, 0.37 * b as f64))
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    let k_flat = kurtosis_objective(&flat, &layout).unwrap();
    let one_hot = ComplexSpectrogram::from_rows(
        (0..3)
            .map(|i| {
                let mut row = vec![Complex64::new(0.0, 0.0); f];
                row[(5 * i + 3) % f] = Complex64::new(1.5 * (i + 1) as f64, -0.5);
                row
            })
            .collect(),
    )
    .unwrap();
    let k_hot = kurtosis_objective(&one_hot, &layout).unwrap();
    let flat_ok = (k_flat - 1.0).abs() < 1e-12;
    let hot_ok = (k_hot - f as f64).abs() < 1e-12 * f as f64;
    pass &= flat_ok && hot_ok;
    notes.push(format!(
        "flat K {k_flat:.15}, one-hot K {k_hot:.12} (F = {f})"
    ));

    // coverage bounds
    let mut outside = 0;
    for _ in 0..COVERAGE_FUZZ {
        let n = r.random_range(2..=128usize);
        let m = r.random_range(1..=1024usize);
        let frames = r.random_range(1..=12usize);
        let layout = random_layout(&mut r, n, m, frames);
        let c = coverage_objective(&layout, m);
        if !(0.0..=1.0).contains(&c) {
            outside += 1;
        }
    }
    pass &= outside == 0;
    notes.push(format!("coverage outside [0,1]: {outside}/{COVERAGE_FUZZ}"));

    // min-norm closed form against a dense grid
    let mut gamma_err = 0.0f64;
    let mut norm_err = 0.0f64;
    for _ in 0..100 {
        let t = r.random_range(1..=6usize);
        let mut g = || GradientSet {
            d_t: (0..t).map(|_| r.random_range(-1.0..1.0)).collect(),
            d_lambda: (0..t).map(|_| r.random_range(-1.0..1.0)).collect(),
        };
        let (g1, g2) = (g(), g());
        let out = combine_objectives(&g1, &g2, Combiner::MinNorm).unwrap();
        let (gamma_grid, norm_grid) = min_norm_grid(&g1, &g2);
        let norm = out.norm_sq().sqrt();
        // recover gamma from out = g2 + gamma (g1 - g2)
        let d: Vec<f64> = g1.flat().zip(g2.flat()).map(|(a, b)| a - b).collect();
        let dd: f64 = d.iter().map(|x| x * x).sum();
        let gamma = out
            .flat()
            .zip(g2.flat())
            .zip(&d)
            .map(|((o, b), x)| (o - b) * x)
            .sum::<f64>()
            / dd;
        gamma_err = gamma_err.max((gamma - gamma_grid).abs());
        norm_err = norm_err.max((norm - norm_grid).abs());
        pass &= norm <= norm_grid + 1e-12;
    }
    pass &= gamma_err <= GRID_TOL && norm_err <= GRID_TOL;
    notes.push(format!(
        "min-norm vs grid: gamma {gamma_err:.1e}, norm {norm_err:.1e} (tol {GRID_TOL:e})"
    ));

    outcome(pass, notes.join("; "))
}

struct ReferenceRun {
    initial: dstft::ObjectiveValue,
    last: dstft::ObjectiveValue,
    elapsed: Duration,
    files: Vec<(String, Vec<u8>)>,
}

fn reference_run(dir: &Path) -> ReferenceRun {
    let signal = reference_signal(0);
    let mut config = OptimizerConfig::new(REF_SUPPORT);
    config.max_iters = REF_ITERS;
    let start = Instant::now();
    let (layout, trace) = run(&signal, &config, REF_FRAMES).unwrap();
    let elapsed = start.elapsed();
    let spec = dstft_forward(&signal, &layout).unwrap();
    fs::create_dir_all(dir).unwrap();
    let names = ["trace.csv", "layout.csv", "spec.csv", "spec.pgm"];
    write_trace(&trace, &dir.join(names[0])).unwrap();
    write_layout(&layout, &dir.join(names[1])).unwrap();
    write_spectrogram(
        &spec,
        &layout,
        &dir.join(names[2]),
        SpectrogramFormat::CsvMagnitude,
    )
    .unwrap();
    write_spectrogram(
        &spec,
        &layout,
        &dir.join(names[3]),
        SpectrogramFormat::PgmLogMagnitude,
    )
    .unwrap();
    ReferenceRun {
        initial: trace.first().unwrap().value,
        last: trace.last().unwrap().value,
        elapsed,
        files: names
            .iter()
            .map(|n| (n.to_string(), fs::read(dir.join(n)).unwrap()))
            .collect(),
    }
}

/// 6. The reference adaptation improves every objective that should improve.
fn adaptation(run: &ReferenceRun) -> Outcome {
    let (a, b) = (&run.initial, &run.last);
    outcome(
        b.combined > a.combined
            && b.coverage >= REF_MIN_COVERAGE
            && b.kurtosis > a.kurtosis
            && run.elapsed < REF_BUDGET,
        format!(
            "M = 4096, N = {REF_SUPPORT}, T = {REF_FRAMES}, {REF_ITERS} iters: combined {:.6} -> {:.6}, \
             K {:.6} -> {:.6}, C {:.6} -> {:.6} (>= {REF_MIN_COVERAGE}), {:.2}s",
            a.combined,
            b.combined,
            a.kurtosis,
            b.kurtosis,
            a.coverage,
            b.coverage,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn same_files(a: &ReferenceRun, b: &ReferenceRun) -> Vec<String> {
    a.files
        .iter()
        .zip(&b.files)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.clone())
        .collect()
}

/// 7. Repeating the reference run reproduces every byte.
fn determinism(first: &ReferenceRun, root: &Path) -> Outcome {
    let second = reference_run(&root.join("repeat"));
    let differing = same_files(first, &second);
    outcome(
        differing.is_empty(),
        format!(
            "{} files compared, differing: {differing:?}",
            first.files.len()
        ),
    )
}

/// 8. The thread count does not change any output.
#[cfg(feature = "parallel")]
fn thread_independence(root: &Path) -> Outcome {
    let pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
    };
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    // at least four workers so the comparison also splits work on small hosts
    let many = cores.max(4);
    let single = pool(1).install(|| reference_run(&root.join("threads-1")));
    let multi = pool(many).install(|| reference_run(&root.join("threads-n")));
    let differing = same_files(&single, &multi);
    outcome(
        differing.is_empty(),
        format!("1 vs {many} threads ({cores} cores), differing files: {differing:?}"),
    )
}

#[cfg(not(feature = "parallel"))]
fn thread_independence(_root: &Path) -> Outcome {
    outcome(true, "sequential build, single code path".into())
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    let mut report = |id: usize, name: &str, o: Outcome| {
        println!(
            "[{}] criterion {id} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push(o.pass);
    };
    report(1, "oracle equivalence", oracle_equivalence());
    report(2, "gradient correctness", gradient_correctness());
    report(3, "continuity at integers", continuity());
    report(4, "differentiability at integers", differentiability());
    report(5, "objective correctness", objectives());
    let reference = reference_run(&root.path().join("first"));
    report(6, "end-to-end adaptation", adaptation(&reference));
    report(7, "determinism", determinism(&reference, root.path()));
    report(
        8,
        "thread-count independence",
        thread_independence(root.path()),
    );

    let failed = results.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
