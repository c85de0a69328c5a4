use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use unitary_designs::crypto::{attack_suite, build_scheme, security_report, CryptoOptions, SecurityMode};
use unitary_designs::ensembles::{clifford_ensemble, design_order_defect, haar_ensemble, pauli_ensemble, subsample, DesignCertificate, UnitaryEnsemble};
use unitary_designs::harness::{rows_to_csv, run_experiment, ExperimentConfig, ExperimentKind, ExperimentReport};
use unitary_designs::norms::SearchOptions;
use unitary_designs::{Error, Result};

#[derive(Parser)]
#[command(name = "udesign", about = "Unitary design certification, subsampling experiments and encryption defects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an ensemble to a file.
    Gen {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify the design order of an ensemble, or run the lemma suite.
    Certify {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 1)]
        t: usize,
        /// Run the lemma checks at (t, d) instead of certifying the ensemble.
        #[arg(long)]
        lemmas: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment from a JSON config.
    Scale {
        #[arg(long)]
        config: PathBuf,
        /// `.csv` writes the scaling rows; anything else gets the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an encryption scheme and report its security defects.
    Crypto {
        #[command(flatten)]
        source: SourceArgs,
        /// no-side-info, full or k-bounded:K
        #[arg(long, default_value = "no-side-info")]
        mode: String,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Version,
}

#[derive(Args)]
struct SourceArgs {
    /// pauli, clifford, clifford:m, haar or file:path
    #[arg(long)]
    source: String,
    #[arg(long)]
    d: Option<usize>,
    /// Qubit count for the Clifford source.
    #[arg(long)]
    m: Option<usize>,
    /// Subsample size; for haar, the number of draws.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

impl SourceArgs {
    fn load(&self) -> Result<UnitaryEnsemble> {
        let need_d = || self.d.ok_or_else(|| invalid("--d is required for this source"));
        let parent = match self.source.split_once(':') {
            None if self.source == "pauli" => pauli_ensemble(need_d()?)?,
            None if self.source == "clifford" => {
                clifford_ensemble(self.m.ok_or_else(|| invalid("--m is required for the clifford source"))?)?
            }
            None if self.source == "haar" => {
                let n = self.n.ok_or_else(|| invalid("--n is required for the haar source"))?;
                return haar_ensemble(need_d()?, n, self.seed);
            }
            Some(("clifford", m)) => clifford_ensemble(m.parse().map_err(|_| invalid(format!("bad source {:?}", self.source)))?)?,
            Some(("file", path)) => UnitaryEnsemble::read_file(path.as_ref())?,
            _ => return Err(invalid(format!("unrecognized source {:?}", self.source))),
        };
        if let Some(d) = self.d {
            if d != parent.d() {
                return Err(invalid(format!("source has dimension {}, --d says {d}", parent.d())));
            }
        }
        match self.n {
            Some(n) => subsample(&parent, n, self.seed),
            None => Ok(parent),
        }
    }
}

#[derive(Serialize)]
struct CertifyOutput {
    source: String,
    d: usize,
    n: usize,
    certificate: DesignCertificate,
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
            _ => {}
        },
    }
    Ok(())
}

fn parse_mode(s: &str) -> Result<SecurityMode> {
    match s {
        "no-side-info" => Ok(SecurityMode::NoSideInfo),
        "full" => Ok(SecurityMode::Full),
        _ => s
            .strip_prefix("k-bounded:")
            .and_then(|k| k.parse().ok())
            .filter(|&k| k > 0)
            .map(SecurityMode::KBounded)
            .ok_or_else(|| invalid(format!("unrecognized mode {s:?}"))),
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen { source, out } => source.load()?.write_file(&out),
        Command::Certify { source, t, lemmas, out } => {
            if lemmas {
                let d = source.d.ok_or_else(|| invalid("--d is required with --lemmas"))?;
                let cfg = ExperimentConfig {
                    kind: ExperimentKind::CertifyLemmas { t },
                    d,
                    n_grid: vec![1, 2, 4],
                    seeds: vec![source.seed],
                    restarts: 16,
                    tolerances: Default::default(),
                    source: if source.source == "clifford" {
                        format!("clifford:{}", source.m.unwrap_or(1))
                    } else {
                        source.source.clone()
                    },
                    exhaustive: false,
                };
                return emit(&run_experiment(&cfg)?.to_json()?, out.as_ref());
            }
            let ens = source.load()?;
            let output = CertifyOutput {
                source: ens.provenance().to_string(),
                d: ens.d(),
                n: ens.len(),
                certificate: design_order_defect(&ens, t)?,
            };
            emit(&serde_json::to_string_pretty(&output)?, out.as_ref())
        }
        Command::Scale { config, out } => {
            let cfg = ExperimentConfig::read_file(&config)?;
            let report = run_experiment(&cfg)?;
            let csv = out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "csv"));
            match (&report, csv) {
                (ExperimentReport::Scaling(res), true) => emit(&rows_to_csv(&res.rows), out.as_ref()),
                (_, true) => Err(invalid("CSV output is only available for scaling experiments")),
                _ => emit(&report.to_json()?, out.as_ref()),
            }
        }
        Command::Crypto {
            source,
            mode,
            restarts,
            out,
        } => {
            let mode = parse_mode(&mode)?;
            let scheme = build_scheme(&source.load()?)?;
            let opts = CryptoOptions {
                search: SearchOptions::with_restarts(restarts, source.seed),
                ..Default::default()
            };
            let attacks = attack_suite(scheme.d(), source.seed)?;
            let report = security_report(&scheme, &attacks, mode, &opts)?;
            emit(&serde_json::to_string_pretty(&report)?, out.as_ref())
        }
        Command::Version => {
            println!("udesign {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::NonConvergence { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
