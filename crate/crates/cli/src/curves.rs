//! CSV curves: the participation crossing and the slope thresholds.

use std::io::Write;

use distopt::optimizer::{OptimizationResult, OptimizerConfig};
use distopt::sequence::{last_increment_before, SequenceTrace};
use distopt::thresholds::{tau_tp1, x_l_kappa, x_u_kappa, ExtensionContext};
use distopt::{Distribution, Error, Participation, ProducerTransform};
use serde::Serialize;

use crate::error::CliError;

pub const CROSSING_HEADER: [&str; 3] = ["j", "n", "m"];
pub const THRESHOLD_HEADER: [&str; 9] =
    ["n_r2", "x_l_kappa", "x_u_kappa", "alt_x_u_kappa", "kappa_r2", "kappa_ar2", "tp1_ratio", "tp2_ratio", "tau"];

/// Block scale factors for the threshold curve.
pub fn scale_grid() -> impl Iterator<Item = f64> {
    (1..=40).map(|i| i as f64 / 20.0)
}

#[derive(Debug, Serialize)]
struct CrossingRow {
    j: usize,
    n: f64,
    m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub n_r2: f64,
    pub x_l_kappa: f64,
    pub x_u_kappa: f64,
    pub alt_x_u_kappa: f64,
    pub kappa_r2: f64,
    pub kappa_ar2: f64,
    pub tp1_ratio: f64,
    pub tp2_ratio: f64,
    pub tau: f64,
}

/// One row per prefix of `trace`; pass the full sequence to see the crossing.
pub fn write_crossing<W: Write>(out: W, trace: &SequenceTrace) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CROSSING_HEADER)?;
    for s in trace.steps() {
        w.serialize(CrossingRow { j: s.step_index, n: s.n_after, m: s.m_after })?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(())
}

/// Threshold rows for `block` scaled over the grid, measured at the result's D*.
pub fn threshold_rows(
    r: &OptimizationResult,
    block: &Distribution,
    cfg: &OptimizerConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<Vec<ThresholdRow>, CliError> {
    let prior = last_increment_before(&r.d_star, &r.trace)?
        .map(|(d_a, inc)| Ok::<_, Error>((d_a, Distribution::singleton(inc.point, inc.weight)?)))
        .transpose()?;
    let mut rows = Vec::new();
    for s in scale_grid() {
        let scaled = block.scaled(s);
        let ctx = match ExtensionContext::from_distributions(
            &r.d_star,
            prior.as_ref().map(|(a, b)| (a, b)),
            &scaled,
            model,
            t,
            cfg.consumer_mode,
            cfg.iota,
        ) {
            Ok(c) => c,
            Err(Error::DegenerateDenominator(_) | Error::ZeroVolumeChange) => continue,
            Err(e) => return Err(e.into()),
        };
        let row = (|| -> distopt::Result<ThresholdRow> {
            let (xu, alt) = x_u_kappa(&ctx)?;
            Ok(ThresholdRow {
                n_r2: ctx.n_r2,
                x_l_kappa: x_l_kappa(&ctx)?,
                x_u_kappa: xu,
                alt_x_u_kappa: alt,
                kappa_r2: ctx.kappa_r2,
                kappa_ar2: ctx.kappa_ar2,
                tp1_ratio: ctx.tp1_ratio,
                tp2_ratio: ctx.tp2_ratio,
                tau: tau_tp1(&ctx)?,
            })
        })();
        match row {
            Ok(row) => rows.push(row),
            Err(Error::DegenerateDenominator(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(rows)
}

pub fn write_thresholds<W: Write>(out: W, rows: &[ThresholdRow]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(THRESHOLD_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(())
}
