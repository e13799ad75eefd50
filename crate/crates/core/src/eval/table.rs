use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of the reported tables, in dB.
pub const TABLE_SNR_LEVELS: [f64; 6] = [15.0, 10.0, 5.0, 0.0, -5.0, -10.0];

/// One per-utterance score labelled with its test condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub noise: String,
    pub snr_db: f64,
    pub value: f64,
}

/// Noise × SNR grid of mean scores with equal-weight margins over the cells
/// that are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub metric: String,
    pub noises: Vec<String>,
    pub snr_levels: Vec<f64>,
    pub cells: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
    pub row_avg: Vec<Option<f64>>,
    pub col_avg: Vec<Option<f64>>,
    pub grand_avg: Option<f64>,
}

fn mean_present<'a>(it: impl Iterator<Item = &'a Option<f64>>) -> Option<f64> {
    let (sum, n) = it.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups `records` into a table. Rows follow the first appearance of each
/// noise type; columns follow `snr_levels`.
pub fn make_table(metric: &str, records: &[ScoreRecord], snr_levels: &[f64]) -> Result<ScoreTable> {
    let mut noises: Vec<String> = Vec::new();
    for r in records {
        if !noises.contains(&r.noise) {
            noises.push(r.noise.clone());
        }
    }
    let (rows, cols) = (noises.len(), snr_levels.len());
    let mut sums = vec![vec![0.0; cols]; rows];
    let mut counts = vec![vec![0usize; cols]; rows];
    for r in records {
        if !r.value.is_finite() {
            return Err(Error::NonFinite(format!("{} score for {} at {} dB", metric, r.noise, r.snr_db)));
        }
        let col = snr_levels
            .iter()
            .position(|s| (s - r.snr_db).abs() < 1e-9)
            .ok_or_else(|| Error::invalid(format!("SNR {} dB is not a table column", r.snr_db)))?;
        let row = noises.iter().position(|n| *n == r.noise).unwrap_or(0);
        sums[row][col] += r.value;
        counts[row][col] += 1;
    }
    let cells: Vec<Vec<Option<f64>>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| s.iter().zip(c).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect())
        .collect();
    for (noise, row) in noises.iter().zip(&cells) {
        for (snr, cell) in snr_levels.iter().zip(row) {
            if cell.is_none() {
                log::warn!("{metric}: no utterances for {noise} at {snr} dB; cell left empty");
            }
        }
    }
    let row_avg = cells.iter().map(|r| mean_present(r.iter())).collect();
    let col_avg = (0..cols).map(|c| mean_present(cells.iter().map(|r| &r[c]))).collect();
    let grand_avg = mean_present(cells.iter().flatten());
    Ok(ScoreTable {
        metric: metric.to_string(),
        noises,
        snr_levels: snr_levels.to_vec(),
        cells,
        counts,
        row_avg,
        col_avg,
        grand_avg,
    })
}

impl ScoreTable {
    fn render(&self, fmt: impl Fn(f64) -> String) -> String {
        let cell = |v: &Option<f64>| v.map(&fmt).unwrap_or_else(|| "NA".into());
        let mut out = String::from("noise");
        for s in &self.snr_levels {
            let _ = write!(out, ",{s}");
        }
        out.push_str(",Avg\n");
        for ((noise, row), avg) in self.noises.iter().zip(&self.cells).zip(&self.row_avg) {
            out.push_str(noise);
            for v in row {
                let _ = write!(out, ",{}", cell(v));
            }
            let _ = writeln!(out, ",{}", cell(avg));
        }
        out.push_str("Avg");
        for v in &self.col_avg {
            let _ = write!(out, ",{}", cell(v));
        }
        let _ = writeln!(out, ",{}", cell(&self.grand_avg));
        out
    }

    /// Two-decimal CSV in the reporting layout.
    pub fn to_csv(&self) -> String {
        self.render(|v| format!("{v:.2}"))
    }

    /// Same layout at full (round-trip) precision.
    pub fn to_csv_full(&self) -> String {
        self.render(|v| format!("{v:?}"))
    }
}
