use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::disentangle::ClusteringMetrics;
use crate::error::Result;

/// One logged training step.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: usize,
    pub l_ord: f64,
    pub l_stft: f64,
    pub l_nce: f64,
    pub l_sem: f64,
    pub total: f64,
    pub clean_mse: f64,
    /// One entry per stage; empty for the continuous variant.
    pub perplexity: Vec<f64>,
    pub clustering: Option<ClusteringMetrics>,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Header plus one line per record; perplexity columns follow the stage count
/// of the first record.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let stages = records.first().map_or(0, |r| r.perplexity.len());
    let mut out = String::from("step,l_ord,l_stft,l_nce,l_sem,total,clean_mse");
    for i in 1..=stages {
        write!(out, ",perplexity_{i}").expect("write to string");
    }
    out.push_str(",accuracy,macro_recall,macro_f1\n");
    for r in records {
        write!(out, "{}", r.step).expect("write to string");
        for v in [r.l_ord, r.l_stft, r.l_nce, r.l_sem, r.total, r.clean_mse] {
            write!(out, ",{}", fmt_f64(v)).expect("write to string");
        }
        for i in 0..stages {
            write!(out, ",{}", opt(r.perplexity.get(i).copied())).expect("write to string");
        }
        let c = r.clustering;
        for v in [
            c.map(|m| m.accuracy),
            c.map(|m| m.macro_recall),
            c.map(|m| m.macro_f1),
        ] {
            write!(out, ",{}", opt(v)).expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn write_metrics_csv(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    fs::write(path, metrics_csv(records))?;
    Ok(())
}

/// Least-squares slope of `y` against `x`; zero for fewer than two points.
pub fn linear_fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..n {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Slope of the total loss over the logged steps.
pub fn loss_slope(records: &[MetricsRecord]) -> f64 {
    let x: Vec<f64> = records.iter().map(|r| r.step as f64).collect();
    let y: Vec<f64> = records.iter().map(|r| r.total).collect();
    linear_fit_slope(&x, &y)
}
