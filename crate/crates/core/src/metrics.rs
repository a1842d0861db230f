//! Scale-invariant SDR / SIR / SAR and per-corpus reporting.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::audio::AudioBuffer;
use crate::error::{invalid, Error, Result};

/// Every ratio is clamped to `±DB_CAP`.
pub const DB_CAP: f64 = 100.0;
/// Gram eigenvalues below this fraction of the largest are discarded.
pub const PINV_RCOND: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiMetrics {
    pub si_sdr: f64,
    pub si_sir: f64,
    pub si_sar: f64,
}

impl SiMetrics {
    pub fn minus(&self, other: &Self) -> Self {
        Self { si_sdr: self.si_sdr - other.si_sdr, si_sir: self.si_sir - other.si_sir, si_sar: self.si_sar - other.si_sar }
    }
}

/// `estimate = target + interference + artifacts`
#[derive(Clone, Debug, PartialEq)]
pub struct SiComponents {
    pub target: Vec<f64>,
    pub interference: Vec<f64>,
    pub artifacts: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn capped_db(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        return if num > 0.0 { DB_CAP } else { 0.0 };
    }
    if num <= 0.0 {
        return -DB_CAP;
    }
    (10.0 * (num / den).log10()).clamp(-DB_CAP, DB_CAP)
}

/// Solves `G c = b` for the symmetric 2x2 Gram matrix with a truncated
/// eigen-decomposition pseudo-inverse.
fn gram_solve(g11: f64, g12: f64, g22: f64, b1: f64, b2: f64) -> (f64, f64) {
    let mean = 0.5 * (g11 + g22);
    let radius = (0.25 * (g11 - g22) * (g11 - g22) + g12 * g12).sqrt();
    let (l1, l2) = (mean + radius, mean - radius);
    // unit eigenvector of l1; the second is its rotation
    let (v1x, v1y) = if g12.abs() > 0.0 {
        let (x, y) = (l1 - g22, g12);
        let n = x.hypot(y);
        (x / n, y / n)
    } else if g11 >= g22 {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let (v2x, v2y) = (-v1y, v1x);
    let mut c = (0.0, 0.0);
    for (l, vx, vy) in [(l1, v1x, v1y), (l2, v2x, v2y)] {
        if l > PINV_RCOND * l1 && l > 0.0 {
            let w = (vx * b1 + vy * b2) / l;
            c.0 += w * vx;
            c.1 += w * vy;
        }
    }
    c
}

fn check_inputs(estimate: &[f64], target: &[f64], interference: &[f64]) -> Result<()> {
    if estimate.len() != target.len() || estimate.len() != interference.len() {
        return Err(invalid(format!(
            "signal lengths differ: {}, {}, {}",
            estimate.len(),
            target.len(),
            interference.len()
        )));
    }
    if target.iter().all(|&v| v == 0.0) {
        return Err(Error::UndefinedMetric(String::from("target reference is silent")));
    }
    Ok(())
}

/// Orthogonal decomposition of `estimate` against the target and
/// interference references.
pub fn si_components(estimate: &[f64], target: &[f64], interference: &[f64]) -> Result<SiComponents> {
    check_inputs(estimate, target, interference)?;
    let ss = dot(target, target);
    let alpha = dot(estimate, target) / ss;
    let (c1, c2) = gram_solve(
        ss,
        dot(target, interference),
        dot(interference, interference),
        dot(estimate, target),
        dot(estimate, interference),
    );
    let n = estimate.len();
    let mut out = SiComponents {
        target: Vec::with_capacity(n),
        interference: Vec::with_capacity(n),
        artifacts: Vec::with_capacity(n),
    };
    for i in 0..n {
        let st = alpha * target[i];
        let proj = c1 * target[i] + c2 * interference[i];
        out.target.push(st);
        out.interference.push(proj - st);
        out.artifacts.push(estimate[i] - proj);
    }
    Ok(out)
}

/// SI-SDR, SI-SIR and SI-SAR in dB, each capped at `±DB_CAP`.
pub fn si_decompose(estimate: &[f64], target: &[f64], interference: &[f64]) -> Result<SiMetrics> {
    let c = si_components(estimate, target, interference)?;
    let energy = |v: &[f64]| dot(v, v);
    let st = energy(&c.target);
    let distortion: f64 = estimate.iter().zip(&c.target).map(|(e, t)| (e - t) * (e - t)).sum();
    let projected: f64 = c.target.iter().zip(&c.interference).map(|(t, i)| (t + i) * (t + i)).sum();
    Ok(SiMetrics {
        si_sdr: capped_db(st, distortion),
        si_sir: capped_db(st, energy(&c.interference)),
        si_sar: capped_db(projected, energy(&c.artifacts)),
    })
}

fn flatten(a: &AudioBuffer) -> Vec<f64> {
    a.channels().iter().flatten().copied().collect()
}

/// Multichannel metrics: channels are concatenated before projection.
pub fn si_decompose_audio(estimate: &AudioBuffer, target: &AudioBuffer, interference: &AudioBuffer) -> Result<SiMetrics> {
    estimate.assert_same_shape(target)?;
    estimate.assert_same_shape(interference)?;
    si_decompose(&flatten(estimate), &flatten(target), &flatten(interference))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ItemMetrics {
    pub name: String,
    pub processed: SiMetrics,
    pub mixture: SiMetrics,
    /// `processed - mixture`
    pub delta: SiMetrics,
}

/// Scores a foreground estimate and, as the baseline, the mixture itself.
pub fn evaluate_item(
    name: impl Into<String>,
    estimate: &AudioBuffer,
    mixture: &AudioBuffer,
    foreground: &AudioBuffer,
    background: &AudioBuffer,
) -> Result<ItemMetrics> {
    let processed = si_decompose_audio(estimate, foreground, background)?;
    let baseline = si_decompose_audio(mixture, foreground, background)?;
    Ok(ItemMetrics { name: name.into(), processed, mixture: baseline, delta: processed.minus(&baseline) })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanStd {
    pub mean: f64,
    /// population standard deviation
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Aggregate {
    pub delta_si_sdr: MeanStd,
    pub delta_si_sir: MeanStd,
    pub si_sar: MeanStd,
    pub processed_si_sdr: MeanStd,
    pub processed_si_sir: MeanStd,
    pub mixture_si_sdr: MeanStd,
    pub mixture_si_sir: MeanStd,
    pub mixture_si_sar: MeanStd,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SkippedItem {
    pub name: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub items: Vec<ItemMetrics>,
    pub skipped: Vec<SkippedItem>,
    pub aggregate: Aggregate,
}

impl MetricReport {
    pub fn new(items: Vec<ItemMetrics>, skipped: Vec<SkippedItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(invalid("no item could be evaluated"));
        }
        let col = |f: &dyn Fn(&ItemMetrics) -> f64| MeanStd::of(&items.iter().map(f).collect::<Vec<_>>());
        let aggregate = Aggregate {
            delta_si_sdr: col(&|m| m.delta.si_sdr),
            delta_si_sir: col(&|m| m.delta.si_sir),
            si_sar: col(&|m| m.processed.si_sar),
            processed_si_sdr: col(&|m| m.processed.si_sdr),
            processed_si_sir: col(&|m| m.processed.si_sir),
            mixture_si_sdr: col(&|m| m.mixture.si_sdr),
            mixture_si_sir: col(&|m| m.mixture.si_sir),
            mixture_si_sar: col(&|m| m.mixture.si_sar),
        };
        Ok(Self { items, skipped, aggregate })
    }

    /// `(label, value)` rows in table order.
    pub fn rows(&self) -> [(&'static str, MeanStd); 6] {
        let a = &self.aggregate;
        [
            ("ΔSI-SDR", a.delta_si_sdr),
            ("ΔSI-SIR", a.delta_si_sir),
            ("SI-SAR", a.si_sar),
            ("mixture SI-SDR", a.mixture_si_sdr),
            ("mixture SI-SIR", a.mixture_si_sir),
            ("mixture SI-SAR", a.mixture_si_sar),
        ]
    }

    /// Aligned plain-text table, one row per aggregate column.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (label, v) in self.rows() {
            out.push_str(&format!("{label:<16} {:>7.2} ± {:>5.2} dB\n", v.mean, v.std));
        }
        out.push_str(&format!("items {:>11}\n", self.items.len()));
        if !self.skipped.is_empty() {
            out.push_str(&format!("skipped {:>9}\n", self.skipped.len()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn exact_scaled_copy_hits_the_cap() {
        let s = [1.0, -2.0, 0.5, 3.0];
        let n = [0.3, 0.1, -1.0, 0.2];
        let est: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        let m = si_decompose(&est, &s, &n).unwrap();
        assert_eq!(m.si_sdr, DB_CAP);
    }

    #[test]
    fn orthonormal_half_interference() {
        let s = [1.0, 0.0, 0.0];
        let n = [0.0, 1.0, 0.0];
        let est = [1.0, 0.5, 0.0];
        let m = si_decompose(&est, &s, &n).unwrap();
        let want = 10.0 * 4f64.log10();
        assert!((m.si_sdr - want).abs() < 1e-12);
        assert!((m.si_sir - want).abs() < 1e-12);
        assert_eq!(m.si_sar, DB_CAP);
    }

    #[test]
    fn hand_projection() {
        let c = si_components(&[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(c.artifacts, vec![0.0, 0.0]);
        let m = si_decompose(&[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(m.si_sdr.abs() < 1e-12 && m.si_sir.abs() < 1e-12);
    }

    #[test]
    fn silent_target_is_undefined() {
        assert!(matches!(si_decompose(&[1.0], &[0.0], &[1.0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(si_decompose(&[1.0, 2.0], &[1.0], &[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn dependent_references_use_the_pseudo_inverse() {
        let s = [1.0, 2.0, 3.0];
        let n = [2.0, 4.0, 6.0];
        let est = [1.0, 2.5, 3.0];
        let c = si_components(&est, &s, &n).unwrap();
        for i in 0..3 {
            let sum = c.target[i] + c.interference[i] + c.artifacts[i];
            assert!((sum - est[i]).abs() < 1e-12);
        }
        let m = si_decompose(&est, &s, &n).unwrap();
        assert_eq!(m.si_sir, DB_CAP);
    }

    #[test]
    fn gram_solve_inverts_a_regular_matrix() {
        let (c1, c2) = gram_solve(2.0, 1.0, 3.0, 5.0, 10.0);
        assert!((2.0 * c1 + c2 - 5.0).abs() < 1e-12);
        assert!((c1 + 3.0 * c2 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn single_item_report_has_zero_spread() {
        let a = AudioBuffer::mono(8000, vec![1.0, 0.0, 0.5]).unwrap();
        let b = AudioBuffer::mono(8000, vec![0.0, 1.0, 0.5]).unwrap();
        let mix = a.add(&b).unwrap();
        let est = AudioBuffer::mono(8000, vec![1.0, 0.2, 0.6]).unwrap();
        let item = evaluate_item("x", &est, &mix, &a, &b).unwrap();
        let report = MetricReport::new(vec![item.clone()], vec![]).unwrap();
        assert_eq!(report.aggregate.delta_si_sdr.mean, item.delta.si_sdr);
        assert_eq!(report.aggregate.delta_si_sdr.std, 0.0);
        assert!(report.to_text().contains("ΔSI-SDR"));
    }

    #[test]
    fn mixture_as_estimate_gives_zero_deltas() {
        let a = AudioBuffer::mono(8000, vec![1.0, 0.0, 0.5, 0.1]).unwrap();
        let b = AudioBuffer::mono(8000, vec![0.0, 1.0, 0.5, -0.4]).unwrap();
        let mix = a.add(&b).unwrap();
        let item = evaluate_item("x", &mix, &mix, &a, &b).unwrap();
        assert_eq!(item.delta, SiMetrics::default());
    }

    #[test]
    fn empty_report_is_rejected() {
        assert!(MetricReport::new(vec![], vec![]).is_err());
    }

    #[test]
    fn population_std() {
        let m = MeanStd::of(&[1.0, 3.0]);
        assert_eq!((m.mean, m.std), (2.0, 1.0));
    }
}
