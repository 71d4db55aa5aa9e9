//! Keypoint similarity scores and the thresholded AP report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.2;

/// Thresholds averaged into AP: 0.50, 0.55, ..., 0.95.
pub fn ap_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| 0.5 + 0.05 * i as f64)
}

/// Per-sample distances between predicted and true keypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    /// Euclidean distance per keypoint, in voxels.
    pub distances: Vec<f64>,
    pub visibility: Vec<bool>,
    /// Branch volume S, in voxels.
    pub branch_volume_s: f64,
    pub branch_mean_radius: f64,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<()> {
        if self.distances.len() != self.visibility.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}: {} distances for {} visibility flags",
                self.sample_id,
                self.distances.len(),
                self.visibility.len()
            )));
        }
        if self.distances.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidArgument(format!("{}: negative or NaN distance", self.sample_id)));
        }
        if !(self.branch_volume_s > 0.0) {
            return Err(Error::InvalidArgument(format!("{}: S must be positive", self.sample_id)));
        }
        Ok(())
    }
}

pub fn oks_k(d: f64, s: f64, lambda: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("S must be positive, got {s}")));
    }
    Ok((-d * d / (2.0 * s * lambda * lambda)).exp())
}

pub fn e_d(d: f64) -> f64 {
    (-d * d).exp()
}

/// Mean OKS over visible keypoints; `None` when nothing is visible.
pub fn oks_sample(rec: &EvalRecord, lambda: f64) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut n = 0;
    for (&d, &v) in rec.distances.iter().zip(&rec.visibility) {
        if v {
            sum += oks_k(d, rec.branch_volume_s, lambda)?;
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Fraction of scores strictly above `tau`.
pub fn ap_tau(scores: &[f64], tau: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset("no scored samples".into()));
    }
    Ok(scores.iter().filter(|&&s| s > tau).count() as f64 / scores.len() as f64)
}

fn mean_ap(scores: &[f64]) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let t = ap_thresholds();
    Some(t.iter().map(|&tau| ap_tau(scores, tau).expect("nonempty")).sum::<f64>() / t.len() as f64)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub lambda: f64,
    /// Score samples without visible keypoints as 0 instead of leaving them out.
    pub invisible_as_zero: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            invisible_as_zero: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinCounts {
    pub small: usize,
    pub medium: usize,
    pub large: usize,
}

/// All scores are fractions in `[0, 1]`; `None` marks an empty subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub ap_k1: Option<f64>,
    pub ap_k2: Option<f64>,
    pub e_d: Option<f64>,
    pub e_d_k1: Option<f64>,
    pub e_d_k2: Option<f64>,
    pub records: usize,
    pub scored: usize,
    pub bin_counts: BinCounts,
}

/// Radius bin: small `(0, 2]`, medium `(2, 3]`, large above 3.
fn bin(radius: f64) -> Result<usize> {
    if radius > 0.0 && radius <= 2.0 {
        Ok(0)
    } else if radius > 2.0 && radius <= 3.0 {
        Ok(1)
    } else if radius > 3.0 {
        Ok(2)
    } else {
        Err(Error::InvalidArgument(format!("branch radius {radius} outside every size bin")))
    }
}

pub fn full_report(records: &[EvalRecord], cfg: &MetricsConfig) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::EmptyDataset("no evaluation records".into()));
    }
    let mut scores = Vec::new();
    let mut bins: [Vec<f64>; 3] = Default::default();
    let mut per_kp: [Vec<f64>; 2] = Default::default();
    let mut ed_all = Vec::new();
    let mut ed_kp: [Vec<f64>; 2] = Default::default();
    for r in records {
        r.validate()?;
        let b = bin(r.branch_mean_radius)?;
        let score = match oks_sample(r, cfg.lambda)? {
            Some(s) => Some(s),
            None if cfg.invisible_as_zero => Some(0.0),
            None => None,
        };
        if let Some(s) = score {
            scores.push(s);
            bins[b].push(s);
        }
        for (k, (&d, &v)) in r.distances.iter().zip(&r.visibility).enumerate() {
            if !v {
                continue;
            }
            let e = e_d(d);
            ed_all.push(e);
            if k < 2 {
                per_kp[k].push(oks_k(d, r.branch_volume_s, cfg.lambda)?);
                ed_kp[k].push(e);
            }
        }
    }
    if scores.is_empty() {
        return Err(Error::EmptyDataset("no record has a visible keypoint".into()));
    }
    Ok(MetricsReport {
        ap: mean_ap(&scores).expect("nonempty"),
        ap50: ap_tau(&scores, 0.5)?,
        ap75: ap_tau(&scores, 0.75)?,
        ap_s: mean_ap(&bins[0]),
        ap_m: mean_ap(&bins[1]),
        ap_l: mean_ap(&bins[2]),
        ap_k1: mean_ap(&per_kp[0]),
        ap_k2: mean_ap(&per_kp[1]),
        e_d: mean(&ed_all),
        e_d_k1: mean(&ed_kp[0]),
        e_d_k2: mean(&ed_kp[1]),
        records: records.len(),
        scored: scores.len(),
        bin_counts: BinCounts {
            small: bins[0].len(),
            medium: bins[1].len(),
            large: bins[2].len(),
        },
    })
}

pub const CSV_HEADER: &str = "variant,AP,AP50,AP75,AP_S,AP_M,AP_L,AP_k1,AP_k2,E_d,E_d_k1,E_d_k2,records,scored";

/// One CSV row per named report, scores in percent, empty cells for undefined values.
pub fn reports_csv(rows: &[(String, MetricsReport)]) -> String {
    let pct = |v: Option<f64>| v.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_default();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (name, r) in rows {
        let cells = [
            pct(Some(r.ap)),
            pct(Some(r.ap50)),
            pct(Some(r.ap75)),
            pct(r.ap_s),
            pct(r.ap_m),
            pct(r.ap_l),
            pct(r.ap_k1),
            pct(r.ap_k2),
            pct(r.e_d),
            pct(r.e_d_k1),
            pct(r.e_d_k2),
        ];
        out.push_str(&format!("{name},{},{},{}\n", cells.join(","), r.records, r.scored));
    }
    out
}
