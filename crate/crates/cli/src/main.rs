use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specconsist::audio_io::{Encoding, SynthKind};
use specconsist::{InitKind, LossKind};
use specconsist_cli::{
    cmd_analyze, cmd_compare, cmd_reconstruct, cmd_synth, CliError, CompareEntry, Method,
    RunConfig, EXIT_OK, EXIT_WARNING,
};

/// Spectrogram consistency analysis and phase reconstruction.
#[derive(Parser)]
#[command(name = "specconsist", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the consistency of a WAV file's STFT.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild a signal from the magnitude of a WAV file or matrix file.
    Reconstruct {
        input: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Output directory for out.wav, trace.csv and report.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run several losses over every WAV file in a directory.
    Compare {
        corpus: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Comma-separated losses; `gla` selects Griffin-Lim. Default: gla and every loss.
        #[arg(long, value_delimiter = ',')]
        losses: Vec<String>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a deterministic test signal.
    Synth {
        kind: SynthArg,
        #[command(flatten)]
        shape: SynthFlags,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
        /// Seconds.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, value_enum, default_value_t = EncodingArg::Pcm16)]
        encoding: EncodingArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SynthFlags {
    #[arg(long, value_delimiter = ',')]
    freq: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    amplitude: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    phase: Vec<f64>,
    /// Chirp start frequency.
    #[arg(long)]
    f0: Option<f64>,
    /// Chirp end frequency.
    #[arg(long)]
    f1: Option<f64>,
    /// Impulse position in samples.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunFlags {
    /// JSON run configuration; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long, value_parser = parse_loss)]
    loss: Option<LossKind>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Matrix file holding the phase compared against.
    #[arg(long)]
    target_phase: Option<PathBuf>,
    /// Matrix file holding the starting phase.
    #[arg(long)]
    init_phase: Option<PathBuf>,
    /// Average multi-channel input down to mono.
    #[arg(long)]
    downmix: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Gla,
    Gd,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Zeros,
    Random,
    Noisy,
    Provided,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthArg {
    Sine,
    Multisine,
    Chirp,
    Noise,
    Impulse,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Pcm16,
    Float32,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: specconsist::Error| e.to_string())
}

impl RunFlags {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if let Some(solver) = self.solver {
            cfg.method = match solver {
                SolverArg::Gla => Method::Gla,
                SolverArg::Gd => Method::Gd,
            };
        }
        if let Some(loss) = self.loss {
            cfg.loss = loss;
        }
        if let Some(iters) = self.iters {
            cfg.solver.max_iters = iters;
        }
        if let Some(init) = self.init {
            cfg.solver.init = match init {
                InitArg::Zeros => InitKind::Zeros,
                InitArg::Random => InitKind::RandomUniform,
                InitArg::Noisy => InitKind::NoisyPhase,
                InitArg::Provided => InitKind::Provided,
            };
        }
        if self.target_phase.is_some() {
            cfg.io.target_phase = self.target_phase;
        }
        if self.init_phase.is_some() {
            cfg.io.init_phase = self.init_phase;
        }
        cfg.io.downmix |= self.downmix;
        cfg.resolve()
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn synth_kind(kind: SynthArg, shape: SynthFlags) -> Result<SynthKind, CliError> {
    let SynthFlags {
        freq,
        amplitude,
        phase,
        f0,
        f1,
        index,
        seed,
    } = shape;
    let amp = amplitude.first().copied().unwrap_or(1.0);
    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| CliError::Usage(format!("this signal needs --{flag}")))
    };
    Ok(match kind {
        SynthArg::Sine => SynthKind::Sine {
            freq: need(freq.first().copied(), "freq")?,
            phase: phase.first().copied().unwrap_or(0.0),
            amplitude: amp,
        },
        SynthArg::Multisine if freq.is_empty() => SynthKind::default_multisine(),
        SynthArg::Multisine => {
            let default_amp = 1.0 / freq.len() as f64;
            SynthKind::Multisine {
                components: freq
                    .iter()
                    .enumerate()
                    .map(|(i, &f)| {
                        (
                            f,
                            amplitude.get(i).copied().unwrap_or(default_amp),
                            phase.get(i).copied().unwrap_or(0.0),
                        )
                    })
                    .collect(),
            }
        }
        SynthArg::Chirp => SynthKind::Chirp {
            f0: need(f0, "f0")?,
            f1: need(f1, "f1")?,
            amplitude: amp,
        },
        SynthArg::Noise => SynthKind::Noise {
            seed,
            amplitude: amp,
        },
        SynthArg::Impulse => SynthKind::Impulse { index },
    })
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Analyze { input, run, out } => {
            let cfg = run.resolve()?;
            let report = cmd_analyze(&input, &cfg)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write_or_print(out.as_deref(), &(json + "\n"))?;
        }
        Command::Reconstruct { input, run, out } => {
            let cfg = run.resolve()?;
            let report = cmd_reconstruct(&input, &cfg, &out)?;
            eprintln!(
                "consistency {:.3e} -> {:.3e}, loss {:.6e} -> {:.6e}; wrote {}",
                report.initial_consistency,
                report.final_consistency,
                report.initial_loss,
                report.final_loss,
                out.display()
            );
            if report.clipped_samples > 0 {
                eprintln!("warning: {} samples clipped", report.clipped_samples);
            }
        }
        Command::Compare {
            corpus,
            run,
            losses,
            out,
        } => {
            let cfg = run.resolve()?;
            let entries = if losses.is_empty() {
                std::iter::once(CompareEntry::Gla)
                    .chain(LossKind::ALL.into_iter().map(CompareEntry::Loss))
                    .collect()
            } else {
                losses
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<Vec<CompareEntry>, _>>()?
            };
            let outcome = cmd_compare(&corpus, &entries, &cfg)?;
            write_or_print(out.as_deref(), &outcome.csv)?;
            if outcome.files == 0 {
                eprintln!("warning: no .wav files in {}", corpus.display());
                return Ok(EXIT_WARNING);
            }
        }
        Command::Synth {
            kind,
            shape,
            sample_rate,
            duration,
            encoding,
            out,
        } => {
            let kind = synth_kind(kind, shape)?;
            let encoding = match encoding {
                EncodingArg::Pcm16 => Encoding::Pcm16,
                EncodingArg::Float32 => Encoding::Float32,
            };
            let clipped = cmd_synth(&kind, sample_rate, duration, encoding, &out)?;
            if clipped > 0 {
                eprintln!("warning: {clipped} samples clipped");
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
