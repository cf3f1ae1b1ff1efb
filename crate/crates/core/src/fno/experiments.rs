use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mode::PrecisionMode;
use super::task::ToyTask;
use super::train::{train, Model, ModelConfig, TrainConfig, TrainMode};
use crate::error::Result;
use crate::grid::{sample, Grid, MultiTone, TestFunction};
use crate::precision::PrecisionSystem;
use crate::spectral::{dft_modes, FreqIndex};
use crate::stats::spearman;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub modes: usize,
    pub precision: String,
    pub final_test_loss: Option<f64>,
    pub diverged: bool,
}

/// Final test loss for every `(K, precision)` pair, trained from the same
/// initial seed. Runs in parallel; rows follow the input order.
pub fn mode_ablation(
    task: &ToyTask,
    cutoffs: &[usize],
    precisions: &[PrecisionMode],
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    let jobs: Vec<(usize, &PrecisionMode)> =
        cutoffs.iter().flat_map(|&k| precisions.iter().map(move |p| (k, p))).collect();
    jobs.into_par_iter()
        .map(|(k, p)| {
            let mcfg = ModelConfig { modes: k, ..model.clone() };
            let mut m = Model::new(&mcfg, task.grid, cfg.seed)?;
            let trace = train(task, &mut m, &TrainMode::Fixed(p.clone()), cfg)?;
            Ok(AblationRow {
                modes: k,
                precision: p.to_string(),
                final_test_loss: trace.final_test_loss,
                diverged: trace.diverged,
            })
        })
        .collect()
}

/// Per-cutoff loss gap `mixed − full`, where both precisions were run.
pub fn ablation_gaps(rows: &[AblationRow]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.precision == "full") {
        for o in rows.iter().filter(|o| o.modes == r.modes && o.precision != "full") {
            if let (Some(a), Some(b)) = (o.final_test_loss, r.final_test_loss) {
                out.push((r.modes, a - b));
            }
        }
    }
    out
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], mut w: W) -> Result<()> {
    writeln!(w, "modes,precision,final_test_loss,diverged")?;
    for r in rows {
        let loss = r.final_test_loss.map(|l| l.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", r.modes, r.precision, loss, r.diverged)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub freq: u32,
    pub amplitude: f64,
    /// `|2 ĉ_half − 2 ĉ_exact|`, the error in the recovered tone.
    pub abs_err: f64,
    /// `100 · abs_err / amplitude`; zero for a zero amplitude.
    pub pct_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub seed: u64,
    pub rows: Vec<FrequencyRow>,
    /// Spearman correlation of frequency against `pct_err`.
    pub spearman: Option<f64>,
}

/// Tone amplitudes recovered from the exact spectrum of a decaying multi-tone
/// signal, and the half-precision error at each tone frequency.
pub fn synthetic_frequency_experiment(seed: u64, max_freq: u32, m: usize, scale: f64) -> Result<FrequencyReport> {
    let grid = Grid::new(1, m)?;
    let tone = MultiTone::decaying(seed, max_freq, scale);
    let field = sample(&TestFunction::MultiTone(tone.clone()), &grid)?;
    let modes: Vec<FreqIndex> = tone.tones.iter().map(|t| FreqIndex(vec![t.freq as i64])).collect();
    let exact = dft_modes(&field, &modes, &PrecisionSystem::Exact)?;
    let half = dft_modes(&field, &modes, &PrecisionSystem::EmuHalf)?;
    let rows: Vec<FrequencyRow> = tone
        .tones
        .iter()
        .zip(exact.iter().zip(&half))
        .map(|(t, (e, h))| {
            let abs_err = 2.0 * (h - e).norm();
            FrequencyRow {
                freq: t.freq,
                amplitude: t.amplitude,
                abs_err,
                pct_err: if t.amplitude > 0.0 { 100.0 * abs_err / t.amplitude } else { 0.0 },
            }
        })
        .collect();
    let freqs: Vec<f64> = rows.iter().map(|r| r.freq as f64).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.pct_err).collect();
    Ok(FrequencyReport { seed, spearman: spearman(&freqs, &errs), rows })
}

/// Mean Spearman statistic over `seeds`; seeds with an undefined statistic are skipped.
pub fn frequency_trend(seeds: &[u64], max_freq: u32, m: usize, scale: f64) -> Result<(Vec<FrequencyReport>, Option<f64>)> {
    let reports = seeds
        .par_iter()
        .map(|&s| synthetic_frequency_experiment(s, max_freq, m, scale))
        .collect::<Result<Vec<_>>>()?;
    let stats: Vec<f64> = reports.iter().filter_map(|r| r.spearman).collect();
    let mean = (!stats.is_empty()).then(|| stats.iter().sum::<f64>() / stats.len() as f64);
    Ok((reports, mean))
}

pub fn write_frequency_csv<W: Write>(reports: &[FrequencyReport], mut w: W) -> Result<()> {
    writeln!(w, "freq,amplitude,abs_err,pct_err")?;
    for r in reports {
        for row in &r.rows {
            writeln!(w, "{},{},{},{}", row.freq, row.amplitude, row.abs_err, row.pct_err)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_recovers_amplitudes() {
        let tone = MultiTone::decaying(3, 10, 1.0);
        let grid = Grid::new(1, 256).unwrap();
        let field = sample(&TestFunction::MultiTone(tone.clone()), &grid).unwrap();
        for t in &tone.tones {
            let c = dft_modes(&field, &[FreqIndex(vec![t.freq as i64])], &PrecisionSystem::Exact).unwrap()[0];
            assert!((2.0 * c.norm() - t.amplitude).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_signal_has_zero_error() {
        let r = synthetic_frequency_experiment(1, 10, 256, 0.0).unwrap();
        assert_eq!(r.rows.len(), 10);
        assert!(r.rows.iter().all(|x| x.abs_err == 0.0 && x.pct_err == 0.0));
    }
}
