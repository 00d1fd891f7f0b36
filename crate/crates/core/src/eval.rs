//! Pitch decoding, offset calibration and accuracy metrics.
//!
//! An equivariant encoder fixes pitch only up to a constant bin offset, so
//! predictions are `f_ref * 2^((bin + shift) / bins_per_octave)` where
//! `shift` is estimated once from tones of known pitch.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedAudio, EvalSet};
use crate::error::{Error, Result};
use crate::frontend::Frontend;
use crate::io::csv_error;
use crate::losses::PitchPosterior;
use crate::model::Encoder;

/// Half-width of the window averaged around the argmax.
pub const DECODE_RADIUS: usize = 2;
/// Tolerance of the accuracy metrics.
pub const CENTS_THRESHOLD: f64 = 50.0;

/// Anything that maps an input frame to a posterior over output bins.
pub trait PitchModel {
    fn posterior(&self, frame: &[f64]) -> Result<PitchPosterior>;
    /// Input bin aligned with output bin 0.
    fn output_offset(&self) -> usize;
}

impl PitchModel for Encoder {
    fn posterior(&self, frame: &[f64]) -> Result<PitchPosterior> {
        self.encode(frame)
    }

    fn output_offset(&self) -> usize {
        self.config().crop_offset()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Frequency of output bin 0 before the shift.
    pub f_ref_hz: f64,
    pub bins_per_octave: f64,
    pub shift_bins: f64,
}

impl Calibration {
    /// Zero-shift calibration for `model` on `frontend`'s grid.
    pub fn identity(frontend: &Frontend, model: &impl PitchModel) -> Self {
        let cfg = frontend.config();
        Self {
            f_ref_hz: cfg.f_min * (model.output_offset() as f64 / cfg.bins_per_octave()).exp2(),
            bins_per_octave: cfg.bins_per_octave(),
            shift_bins: 0.0,
        }
    }

    pub fn bin_to_hz(&self, bin: f64) -> f64 {
        self.f_ref_hz * ((bin + self.shift_bins) / self.bins_per_octave).exp2()
    }

    /// Uncalibrated output bin of a frequency.
    pub fn hz_to_bin(&self, hz: f64) -> f64 {
        self.bins_per_octave * (hz / self.f_ref_hz).log2()
    }
}

/// Argmax refined by the mass-weighted mean of its neighbourhood.
pub fn raw_bin(y: &PitchPosterior) -> f64 {
    let p = y.probs();
    let c = y.argmax();
    let (lo, hi) = (c.saturating_sub(DECODE_RADIUS), (c + DECODE_RADIUS).min(p.len() - 1));
    let mass: f64 = p[lo..=hi].iter().sum();
    if mass <= 0.0 {
        return c as f64;
    }
    (lo..=hi).map(|i| i as f64 * p[i]).sum::<f64>() / mass
}

pub fn decode_pitch(y: &PitchPosterior, calibration: &Calibration) -> f64 {
    calibration.bin_to_hz(raw_bin(y))
}

/// `1200 log2(est / reference)`; infinite for a non-positive estimate.
pub fn cents(est: f64, reference: f64) -> f64 {
    if est > 0.0 {
        1200.0 * (est / reference).log2()
    } else {
        f64::INFINITY
    }
}

fn voiced_pairs<'a>(est: &'a [f64], reference: &'a [f64]) -> Result<impl Iterator<Item = f64> + 'a> {
    if est.len() != reference.len() {
        return Err(Error::Shape(format!("{} estimates for {} references", est.len(), reference.len())));
    }
    if !reference.iter().any(|&r| r > 0.0) {
        return Err(Error::Domain("no voiced reference frames".into()));
    }
    Ok(est.iter().zip(reference).filter(|(_, &r)| r > 0.0).map(|(&e, &r)| cents(e, r)))
}

/// Raw pitch accuracy over voiced reference frames.
pub fn rpa(est: &[f64], reference: &[f64]) -> Result<f64> {
    let errs: Vec<f64> = voiced_pairs(est, reference)?.collect();
    Ok(errs.iter().filter(|c| c.abs() <= CENTS_THRESHOLD).count() as f64 / errs.len() as f64)
}

/// Raw chroma accuracy: like [`rpa`] with octave errors forgiven.
pub fn rca(est: &[f64], reference: &[f64]) -> Result<f64> {
    let errs: Vec<f64> = voiced_pairs(est, reference)?.collect();
    let ok = errs
        .iter()
        .filter(|c| c.is_finite() && ((*c + 600.0).rem_euclid(1200.0) - 600.0).abs() <= CENTS_THRESHOLD)
        .count();
    Ok(ok as f64 / errs.len() as f64)
}

/// Model input frames at the annotated times, paired with reference f0.
pub fn annotated_frames(frontend: &Frontend, item: &AnnotatedAudio) -> Result<Vec<(Vec<f64>, f64)>> {
    let sr = frontend.config().sample_rate;
    if (item.sample_rate - sr).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{}: sample rate {} does not match frontend rate {sr}",
            item.name, item.sample_rate
        )));
    }
    Ok(item
        .annotations
        .iter()
        .map(|a| {
            let center = (a.time_sec * sr).round().max(0.0) as usize;
            (frontend.input_frame(&item.samples, center), a.f0_hz)
        })
        .collect())
}

/// Median of `true_bin - raw_bin` over voiced frames of `set`.
pub fn calibrate<M: PitchModel>(model: &M, frontend: &Frontend, set: &EvalSet) -> Result<Calibration> {
    let base = Calibration::identity(frontend, model);
    let mut diffs = Vec::new();
    for item in &set.items {
        for (frame, f0) in annotated_frames(frontend, item)? {
            if f0 > 0.0 {
                diffs.push(base.hz_to_bin(f0) - raw_bin(&model.posterior(&frame)?));
            }
        }
    }
    if diffs.is_empty() {
        return Err(Error::Domain("calibration set has no voiced frames".into()));
    }
    diffs.sort_by(f64::total_cmp);
    let mid = diffs.len() / 2;
    let median = if diffs.len() % 2 == 1 { diffs[mid] } else { 0.5 * (diffs[mid - 1] + diffs[mid]) };
    Ok(Calibration {
        shift_bins: median,
        ..base
    })
}

/// Per-frame predictions and references for one set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub set: String,
    pub rpa: f64,
    pub rca: f64,
    pub frames: usize,
    pub estimates_hz: Vec<f64>,
    pub references_hz: Vec<f64>,
}

impl EvalReport {
    /// Signed cents errors of voiced frames.
    pub fn cents_errors(&self) -> Vec<f64> {
        self.estimates_hz
            .iter()
            .zip(&self.references_hz)
            .filter(|(_, &r)| r > 0.0)
            .map(|(&e, &r)| cents(e, r))
            .collect()
    }

    /// Writes `frame,reference_hz,estimate_hz,cents` rows.
    pub fn write_cents_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["frame", "reference_hz", "estimate_hz", "cents"])
            .map_err(|e| csv_error(path, e))?;
        for (i, (&e, &r)) in self.estimates_hz.iter().zip(&self.references_hz).enumerate() {
            let c = if r > 0.0 { cents(e, r).to_string() } else { String::new() };
            w.write_record([i.to_string(), r.to_string(), e.to_string(), c])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn evaluate<M: PitchModel>(model: &M, calibration: &Calibration, frontend: &Frontend, set: &EvalSet) -> Result<EvalReport> {
    let (mut estimates_hz, mut references_hz) = (Vec::new(), Vec::new());
    for item in &set.items {
        for (frame, f0) in annotated_frames(frontend, item)? {
            estimates_hz.push(decode_pitch(&model.posterior(&frame)?, calibration));
            references_hz.push(f0);
        }
    }
    Ok(EvalReport {
        set: set.name.clone(),
        rpa: rpa(&estimates_hz, &references_hz)?,
        rca: rca(&estimates_hz, &references_hz)?,
        frames: estimates_hz.len(),
        estimates_hz,
        references_hz,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalRow {
    pub train_set: String,
    pub eval_set: String,
    pub rpa: f64,
    pub rca: f64,
}

/// A trained model with the name of the set it was trained on.
pub struct NamedModel<'a, M> {
    pub train_set: String,
    pub model: &'a M,
    pub calibration: Calibration,
    pub frontend: &'a Frontend,
}

/// Every model on every set, in model-major order.
pub fn cross_eval<M: PitchModel>(models: &[NamedModel<'_, M>], sets: &[EvalSet]) -> Result<Vec<CrossEvalRow>> {
    let mut rows = Vec::new();
    for m in models {
        for set in sets {
            let r = evaluate(m.model, &m.calibration, m.frontend, set)?;
            rows.push(CrossEvalRow {
                train_set: m.train_set.clone(),
                eval_set: set.name.clone(),
                rpa: r.rpa,
                rca: r.rca,
            });
        }
    }
    Ok(rows)
}

pub fn write_cross_eval_csv(path: &Path, rows: &[CrossEvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Column-aligned text table of `rows`.
pub fn format_table(rows: &[CrossEvalRow]) -> String {
    let tw = rows.iter().map(|r| r.train_set.len()).chain([9]).max().unwrap_or(9);
    let ew = rows.iter().map(|r| r.eval_set.len()).chain([8]).max().unwrap_or(8);
    let mut out = format!("{:<tw$}  {:<ew$}  {:>6}  {:>6}\n", "train_set", "eval_set", "rpa", "rca");
    for r in rows {
        let _ = writeln!(out, "{:<tw$}  {:<ew$}  {:>6.4}  {:>6.4}", r.train_set, r.eval_set, r.rpa, r.rca);
    }
    out
}
