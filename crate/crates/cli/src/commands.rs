use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use specconsist::audio_io::{read_wav, synth, write_wav, Encoding, SynthKind, WavMeta};
use specconsist::{
    consistency_measure, gd_reconstruct, griffin_lim, istft, stft, ConsistencyKernel, Error,
    EvalReport, InitKind, LossKind, MagnitudeField, PhaseField, Signal, SolveTrace, Spectrogram,
    StftConfig,
};

use crate::config::{Method, RunConfig};
use crate::matrix::{read_matrix, to_full_width};
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct AnalyzeReport {
    pub input: PathBuf,
    pub sample_rate: u32,
    pub samples: usize,
    pub frames: usize,
    pub bins: usize,
    pub energy: f64,
    pub consistency_measure: f64,
    pub config: RunConfig,
}

/// STFT of a WAV file and the consistency of that STFT (which should sit
/// at rounding level).
pub fn cmd_analyze(input: &Path, cfg: &RunConfig) -> Result<AnalyzeReport, CliError> {
    let config = cfg.stft_config()?;
    let kernel = ConsistencyKernel::new(&config);
    let (signal, meta) = read_wav(input, cfg.io.downmix)?;
    let spec = stft(&signal, &config)?;
    Ok(AnalyzeReport {
        input: input.to_path_buf(),
        sample_rate: meta.sample_rate,
        samples: signal.len(),
        frames: spec.frames(),
        bins: spec.bins(),
        energy: spec.energy(),
        consistency_measure: consistency_measure(&spec, &kernel)?,
        config: cfg.clone(),
    })
}

/// A magnitude to reconstruct, plus whatever the input says about the
/// original signal.
struct Problem {
    mag: MagnitudeField,
    reference: Option<Signal>,
    reference_phase: Option<PhaseField>,
    meta: WavMeta,
}

fn is_wav(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn load_problem(input: &Path, cfg: &RunConfig, config: &StftConfig) -> Result<Problem, CliError> {
    if is_wav(input) {
        let (signal, meta) = read_wav(input, cfg.io.downmix)?;
        let spec = stft(&signal, config)?;
        return Ok(Problem {
            mag: spec.magnitude(),
            reference_phase: Some(spec.phase()),
            reference: Some(signal),
            meta,
        });
    }
    let values = to_full_width(read_matrix(input)?, config.window_len(), false)?;
    let mag = MagnitudeField::new(values)?;
    let length = mag.dim().0 * config.hop();
    Ok(Problem {
        mag,
        reference: None,
        reference_phase: None,
        meta: WavMeta::mono(cfg.io.matrix_sample_rate, Encoding::Float32, length),
    })
}

fn load_phase(path: &Path, config: &StftConfig) -> Result<PhaseField, CliError> {
    let values = to_full_width(read_matrix(path)?, config.window_len(), true)?;
    Ok(PhaseField::new(values)?)
}

fn run_solver(
    problem: &Problem,
    method: Method,
    loss: LossKind,
    cfg: &RunConfig,
    kernel: &ConsistencyKernel,
) -> Result<(PhaseField, SolveTrace), CliError> {
    let config = kernel.config();
    let mut opts = cfg.solver.clone();
    let given_init = cfg
        .io
        .init_phase
        .as_deref()
        .map(|p| load_phase(p, config))
        .transpose()?;
    opts.initial_phase = match opts.init {
        InitKind::NoisyPhase => Some(
            given_init
                .or_else(|| problem.reference_phase.clone())
                .ok_or_else(|| {
                    CliError::Usage("init noisy needs --init-phase for a matrix input".into())
                })?,
        ),
        InitKind::Provided => Some(
            given_init.ok_or_else(|| CliError::Usage("init provided needs --init-phase".into()))?,
        ),
        InitKind::Zeros | InitKind::RandomUniform => None,
    };

    match method {
        Method::Gla => {
            if cfg.io.target_phase.is_some() {
                return Err(CliError::Usage("gla does not take a target phase".into()));
            }
            Ok(griffin_lim(&problem.mag, &opts, config)?)
        }
        Method::Gd => {
            let target = match (loss.needs_target(), &cfg.io.target_phase) {
                (false, Some(_)) => {
                    return Err(CliError::Usage(
                        "the ec loss does not take a target phase".into(),
                    ))
                }
                (false, None) => None,
                (true, Some(path)) => Some(load_phase(path, config)?),
                (true, None) => Some(problem.reference_phase.clone().ok_or_else(|| {
                    CliError::Usage(format!(
                        "loss {loss} needs --target-phase for a matrix input"
                    ))
                })?),
            };
            Ok(gd_reconstruct(
                &problem.mag,
                loss,
                target.as_ref(),
                &opts,
                kernel,
            )?)
        }
    }
}

/// Result of one solver run, scored against the reference when there is one.
struct Outcome {
    signal: Signal,
    trace: SolveTrace,
    eval: Option<EvalReport>,
}

fn evaluate(
    problem: &Problem,
    phase: &PhaseField,
    trace: SolveTrace,
    cfg: &RunConfig,
    kernel: &ConsistencyKernel,
) -> Result<Outcome, CliError> {
    let config = kernel.config();
    let estimate = Spectrogram::from_polar(&problem.mag, phase, config)?
        .with_sample_rate(problem.meta.sample_rate)
        .with_signal_len(problem.meta.length);
    let signal = istft(&estimate, config)?;
    let eval = problem
        .reference
        .as_ref()
        .map(|reference| {
            EvalReport::compute(
                reference,
                &signal,
                &estimate,
                kernel,
                cfg.metrics.search_radius,
            )
        })
        .transpose()?;
    Ok(Outcome {
        signal,
        trace,
        eval,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ReconstructReport {
    pub input: PathBuf,
    pub method: Method,
    /// `None` for Griffin-Lim, whose traced loss is the inconsistency.
    pub loss: Option<LossKind>,
    pub frames: usize,
    pub bins: usize,
    pub iterations_run: usize,
    pub best_iter: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `final_loss / (frames·bins)`.
    pub final_loss_per_bin: f64,
    pub initial_consistency: f64,
    pub final_consistency: f64,
    pub step_scale: f64,
    pub clipped_samples: usize,
    pub eval: Option<EvalReport>,
    pub config: RunConfig,
}

fn write_trace(path: &Path, trace: &SolveTrace) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "loss", "consistency_measure", "step_size"])?;
    w.write_record([
        "0".to_string(),
        trace.initial_loss.to_string(),
        trace.initial_consistency.to_string(),
        "0".to_string(),
    ])?;
    for r in &trace.records {
        w.write_record([
            r.iter.to_string(),
            r.loss.to_string(),
            r.consistency_measure.to_string(),
            r.step_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `out.wav`, `trace.csv` and `report.json` into `out_dir`. A
/// diverging solver still leaves its partial `trace.csv` behind.
pub fn cmd_reconstruct(
    input: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<ReconstructReport, CliError> {
    let config = cfg.stft_config()?;
    let kernel = ConsistencyKernel::new(&config);
    let problem = load_problem(input, cfg, &config)?;
    std::fs::create_dir_all(out_dir)?;
    let trace_path = out_dir.join("trace.csv");

    let (phase, trace) = match run_solver(&problem, cfg.method, cfg.loss, cfg, &kernel) {
        Err(CliError::Core(Error::Divergence { iteration, trace })) => {
            write_trace(&trace_path, &trace)?;
            return Err(CliError::Core(Error::Divergence { iteration, trace }));
        }
        other => other?,
    };
    write_trace(&trace_path, &trace)?;
    let outcome = evaluate(&problem, &phase, trace, cfg, &kernel)?;
    let clipped_samples = write_wav(&outcome.signal, &problem.meta, out_dir.join("out.wav"))?;

    let (frames, bins) = problem.mag.dim();
    let trace = &outcome.trace;
    let report = ReconstructReport {
        input: input.to_path_buf(),
        method: cfg.method,
        loss: (cfg.method == Method::Gd).then_some(cfg.loss),
        frames,
        bins,
        iterations_run: trace.records.len(),
        best_iter: trace.best_iter,
        initial_loss: trace.initial_loss,
        final_loss: trace.final_loss(),
        final_loss_per_bin: trace.final_loss() / (frames * bins) as f64,
        initial_consistency: trace.initial_consistency,
        final_consistency: trace.final_consistency(),
        step_scale: trace.step_scale,
        clipped_samples,
        eval: outcome.eval,
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report always serializes");
    std::fs::write(out_dir.join("report.json"), json + "\n")?;
    Ok(report)
}

/// One column of a comparison: Griffin-Lim or descent on a loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompareEntry {
    Gla,
    Loss(LossKind),
}

impl fmt::Display for CompareEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompareEntry::Gla => f.write_str("gla"),
            CompareEntry::Loss(l) => l.fmt(f),
        }
    }
}

impl FromStr for CompareEntry {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        if s == "gla" {
            return Ok(CompareEntry::Gla);
        }
        s.parse()
            .map(CompareEntry::Loss)
            .map_err(|_| CliError::Usage(format!("unknown loss '{s}'")))
    }
}

pub const COMPARE_HEADER: [&str; 6] = [
    "file",
    "loss",
    "final_loss",
    "consistency_measure",
    "aligned_snr_db",
    "spectral_convergence_db",
];

#[derive(Clone, Debug)]
pub struct CompareOutcome {
    pub csv: String,
    pub files: usize,
    pub rows: usize,
}

fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("SPECCONSIST_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "SPECCONSIST_THREADS must be a positive integer, got '{v}'"
            ))),
        },
    }
}

fn compare_file(
    path: &Path,
    entries: &[CompareEntry],
    cfg: &RunConfig,
    kernel: &ConsistencyKernel,
) -> Result<Vec<[String; 6]>, CliError> {
    let problem = load_problem(path, cfg, kernel.config())?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    entries
        .iter()
        .map(|entry| {
            let (method, loss) = match entry {
                CompareEntry::Gla => (Method::Gla, LossKind::Ec),
                CompareEntry::Loss(l) => (Method::Gd, *l),
            };
            let (phase, trace) = run_solver(&problem, method, loss, cfg, kernel)?;
            let final_loss = trace.final_loss();
            let outcome = evaluate(&problem, &phase, trace, cfg, kernel)?;
            let eval = outcome.eval.expect("wav inputs carry a reference");
            Ok([
                name.clone(),
                entry.to_string(),
                final_loss.to_string(),
                eval.consistency_measure.to_string(),
                eval.aligned_snr_db.to_string(),
                eval.spectral_convergence_db.to_string(),
            ])
        })
        .collect()
}

/// Runs every entry on every `.wav` file directly inside `corpus`. Rows are
/// ordered by file path, then by entry order, whatever the thread count.
pub fn cmd_compare(
    corpus: &Path,
    entries: &[CompareEntry],
    cfg: &RunConfig,
) -> Result<CompareOutcome, CliError> {
    if cfg.io.target_phase.is_some() || cfg.io.init_phase.is_some() {
        return Err(CliError::Usage(
            "compare uses each file's own phase; drop --target-phase/--init-phase".into(),
        ));
    }
    if cfg.solver.init == InitKind::Provided {
        return Err(CliError::Usage(
            "compare does not support init provided".into(),
        ));
    }
    let config = cfg.stft_config()?;
    let kernel = ConsistencyKernel::new(&config);
    let mut files = Vec::new();
    for entry in std::fs::read_dir(corpus)? {
        let path = entry?.path();
        if path.is_file() && is_wav(&path) {
            files.push(path);
        }
    }
    files.sort();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let per_file: Vec<Result<Vec<[String; 6]>, CliError>> = pool.install(|| {
        files
            .par_iter()
            .map(|f| compare_file(f, entries, cfg, &kernel))
            .collect()
    });

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COMPARE_HEADER)?;
    let mut rows = 0;
    for result in per_file {
        for row in result? {
            w.write_record(&row)?;
            rows += 1;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    Ok(CompareOutcome {
        csv: String::from_utf8(bytes).expect("csv output is utf-8"),
        files: files.len(),
        rows,
    })
}

/// Renders a test signal to `out` and returns the number of clipped samples.
pub fn cmd_synth(
    kind: &SynthKind,
    sample_rate: u32,
    duration: f64,
    encoding: Encoding,
    out: &Path,
) -> Result<usize, CliError> {
    let signal = synth(kind, sample_rate, duration)?;
    let meta = WavMeta::mono(sample_rate, encoding, signal.len());
    Ok(write_wav(&signal, &meta, out)?)
}
