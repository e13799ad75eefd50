//! Objective metrics, paired significance tests and score tables.

mod metrics;
mod resample;
mod stoi;
mod table;
mod ttest;

pub use metrics::{evaluate, score_all, seg_snr, si_sdr, Metric, MetricResult, SEG_SNR_RANGE, SI_SDR_CAP_DB};
pub use resample::resample_poly;
pub use stoi::stoi;
pub use table::{make_table, ScoreRecord, ScoreTable, TABLE_SNR_LEVELS};
pub use ttest::{paired_ttest, TTestResult, ALPHA};
