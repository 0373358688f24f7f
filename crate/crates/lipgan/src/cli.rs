//! Argument parsing and the three commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use lipgan_core::ot::{verify_duality, DiscreteDist, OtError, MAX_ATOMS};
use lipgan_core::train::{train, TrainError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{ExperimentConfig, SEED_ENV};
use crate::dist_io::{load_dist, DistIoError};
use crate::output::{report_json, write_curves, write_field};
use crate::suites::{random_dist, run_suite, Suite};

pub const EXIT_OK: i32 = 0;
/// A check ran and failed, or an output could not be written.
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NAN: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

/// Largest `max_gap` accepted by `duality`.
pub const DUALITY_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "lipgan", version, about = "Lipschitz GAN experiments and optimal-transport checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a critic/generator pair from a TOML config.
    Train {
        config: PathBuf,
        /// Output directory for curves.csv, field.csv and report.json.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compare the primal W1 with both dual forms.
    Duality {
        /// Real and fake distributions as CSV (x1..xd, mass).
        #[arg(num_args = 2, value_names = ["REAL", "FAKE"], required_unless_present = "random")]
        files: Vec<PathBuf>,
        /// Draw a random instance with N atoms per side in D dimensions.
        #[arg(long, num_args = 2, value_names = ["N", "D"], conflicts_with = "files")]
        random: Option<Vec<usize>>,
        /// Seed for --random; falls back to LIPGAN_SEED, then 0.
        #[arg(long, requires = "random")]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run a property suite.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(short, long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first) and runs the command. `seed_env` is
/// the value of `LIPGAN_SEED`, if set.
pub fn run<I, T>(args: I, seed_env: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Train { config, out } => cmd_train(&config, &out, seed_env),
        Command::Duality { files, random, seed, out } => {
            let instance = match random {
                Some(nd) => {
                    let seed = match seed.map(Ok).or_else(|| seed_env.map(parse_seed)).unwrap_or(Ok(0)) {
                        Ok(s) => s,
                        Err(msg) => return fail(EXIT_CONFIG, msg),
                    };
                    Instance::Random { n: nd[0], d: nd[1], seed }
                }
                None => Instance::Files(&files[0], &files[1]),
            };
            cmd_duality(instance, &out)
        }
        Command::Verify { suite, out } => cmd_verify(suite, &out),
    }
}

fn parse_seed(v: &str) -> Result<u64, String> {
    v.trim().parse().map_err(|_| format!("{SEED_ENV}: `{v}` is not an unsigned 64-bit integer"))
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("lipgan: {msg}");
    code
}

fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}

pub fn cmd_train(config: &Path, out: &Path, seed_env: Option<&str>) -> i32 {
    let prepared = ExperimentConfig::load(config).and_then(|mut c| {
        c.apply_seed_override(seed_env)?;
        c.resolve()?;
        let tc = c.to_train_config()?;
        Ok((c, tc))
    });
    let (echo, cfg) = match prepared {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", config.display())),
    };
    let report = match train(cfg.clone()) {
        Ok(r) => r,
        Err(e @ TrainError::NonFinite { .. }) => return fail(EXIT_NAN, format!("training aborted: {e}")),
        Err(e @ TrainError::Config(_)) => return fail(EXIT_CONFIG, e),
        Err(e) => return fail(EXIT_FAILED, e),
    };
    let written = std::fs::create_dir_all(out)
        .and_then(|_| {
            let mut w = create(&out.join("curves.csv"))?;
            write_curves(&report, &mut w)?;
            w.flush()
        })
        .and_then(|_| {
            let mut w = create(&out.join("field.csv"))?;
            write_field(report.field.as_ref(), &mut w)?;
            w.flush()
        })
        .and_then(|_| write_json(&out.join("report.json"), &report_json(&echo, &cfg, &report)));
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_FAILED, format!("{}: {e}", out.display())),
    }
}

pub enum Instance<'a> {
    Files(&'a Path, &'a Path),
    Random { n: usize, d: usize, seed: u64 },
}

pub fn cmd_duality(instance: Instance<'_>, out: &Path) -> i32 {
    let mut doc = serde_json::Map::new();
    let (p, q) = match instance {
        Instance::Files(a, b) => match (load_dist(a), load_dist(b)) {
            (Ok(p), Ok(q)) => (p, q),
            (Err(e), _) | (_, Err(e)) => {
                let code = match e {
                    DistIoError::Invalid(OtError::Capacity { .. }) => EXIT_CAPACITY,
                    _ => EXIT_CONFIG,
                };
                return fail(code, e);
            }
        },
        Instance::Random { n, d, seed } => {
            if n > MAX_ATOMS {
                return fail(EXIT_CAPACITY, OtError::Capacity { atoms: n, cap: MAX_ATOMS });
            }
            if n == 0 || d == 0 {
                return fail(EXIT_CONFIG, "--random: N and D must be positive");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_dist(&mut rng, n, d);
            let q = random_dist(&mut rng, n, d);
            doc.insert("instance".into(), json!({ "seed": seed, "real": dist_json(&p), "fake": dist_json(&q) }));
            (p, q)
        }
    };
    let report = match verify_duality(&p, &q) {
        Ok(r) => r,
        Err(e @ OtError::Capacity { .. }) => return fail(EXIT_CAPACITY, e),
        Err(e) => return fail(EXIT_FAILED, e),
    };
    let passed = report.within(DUALITY_TOL);
    doc.insert("primal".into(), json!(report.primal));
    doc.insert("kr".into(), json!(report.kr));
    doc.insert("compact".into(), json!(report.compact));
    doc.insert("max_gap".into(), json!(report.max_gap));
    doc.insert("tolerance".into(), json!(DUALITY_TOL));
    doc.insert("passed".into(), json!(passed));
    if let Err(e) = write_json(out, &serde_json::Value::Object(doc)) {
        return fail(EXIT_FAILED, format!("{}: {e}", out.display()));
    }
    if passed {
        EXIT_OK
    } else {
        fail(EXIT_FAILED, format!("duality gap {} exceeds {DUALITY_TOL}", report.max_gap))
    }
}

fn dist_json(d: &DiscreteDist) -> serde_json::Value {
    json!({ "atoms": d.atoms(), "masses": d.masses() })
}

pub fn cmd_verify(suite: Suite, out: &Path) -> i32 {
    let report = run_suite(suite);
    let value = serde_json::to_value(&report).expect("report serializes");
    if let Err(e) = write_json(out, &value) {
        return fail(EXIT_FAILED, format!("{}: {e}", out.display()));
    }
    for p in report.properties.iter().filter(|p| !p.passed) {
        eprintln!("lipgan: {} failed: {} (threshold {})", p.name, p.value, p.threshold);
    }
    if report.passed {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}
