//! Report files written by `lipgan train`.

use std::io::Write;

use lipgan_core::field::FieldGrid;
use lipgan_core::train::{mlp_forward, mode_coverage, sample_noise, SyntheticSpec, TrainConfig, TrainReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, SCHEMA_VERSION};

/// Samples drawn from the trained generator for the coverage summary.
pub const COVERAGE_SAMPLES: usize = 1000;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_curves<W: Write>(report: &TrainReport, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "disc_loss", "gen_loss", "mean_f_real", "mean_f_fake", "k_hat"])?;
    for (i, r) in report.records.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend([r.disc_loss, r.gen_loss, r.mean_f_real, r.mean_f_fake, r.k_hat].map(fmt_f64));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_field<W: Write>(field: Option<&FieldGrid>, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x1", "x2", "f", "g1", "g2"])?;
    if let Some(grid) = field {
        for ((p, v), g) in grid.points().iter().zip(&grid.values).zip(&grid.grads) {
            w.write_record([p[0], p[1], *v, g[0], g[1]].map(fmt_f64))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn modes(spec: &SyntheticSpec) -> Option<Vec<Vec<f64>>> {
    match spec {
        SyntheticSpec::GaussianMixture { components } => Some(components.iter().map(|c| c.mean.clone()).collect()),
        SyntheticSpec::DiscretePoints { atoms, .. } => Some(atoms.clone()),
        _ => None,
    }
}

/// Fraction of generated samples nearest to each mode of the real data,
/// for mixtures and point sets trained with a learned generator.
pub fn generated_coverage(cfg: &TrainConfig, report: &TrainReport) -> Option<Vec<f64>> {
    if cfg.fake_data.is_some() {
        return None;
    }
    let modes = modes(&cfg.data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c0de);
    let z = sample_noise(COVERAGE_SAMPLES, cfg.generator.input_dim, &mut rng);
    let samples: Vec<Vec<f64>> = z.row_iter().map(|r| mlp_forward(&cfg.generator, &report.gen_params, r)).collect();
    mode_coverage(samples.iter().map(Vec::as_slice), &modes).ok()
}

pub fn report_json(echo: &ExperimentConfig, cfg: &TrainConfig, report: &TrainReport) -> Value {
    let last = report.records.last().map(|r| {
        json!({
            "disc_loss": r.disc_loss,
            "gen_loss": r.gen_loss,
            "mean_f_real": r.mean_f_real,
            "mean_f_fake": r.mean_f_fake,
            "k_hat": r.k_hat,
        })
    });
    let min_disc = report.records.iter().map(|r| r.disc_loss).reduce(f64::min);
    let max_k = report.records.iter().map(|r| r.k_hat).reduce(f64::max);
    json!({
        "schema": SCHEMA_VERSION,
        "config": echo,
        "drift": report.drift,
        "drift_window": cfg.drift_window.min(report.records.len()),
        "summary": {
            "iterations": report.records.len(),
            "final": last,
            "min_disc_loss": min_disc,
            "max_k_hat": max_k,
            "mode_coverage": generated_coverage(cfg, report),
        },
    })
}
