//! Seeded synthetic tone sets and their on-disk layout.
//!
//! A dataset directory holds `manifest.json`, one `tone_NNNN.wav` per tone
//! and a matching `tone_NNNN.csv` with `time_sec,f0_hz` rows.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{synth_tone, HarmonicToneSpec};
use crate::io::{read_annotations, read_wav, write_annotations, write_wav, Annotation};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub tones: usize,
    pub num_harmonics: usize,
    /// Range of per-tone harmonic decay, drawn uniformly.
    pub amplitude_decay: [f64; 2],
    pub noise_snr_db: Option<f64>,
    pub duration_sec: f64,
    pub sample_rate: f64,
    /// Spacing of annotated frames.
    pub annotation_hop_sec: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            f0_min_hz: 65.0,
            f0_max_hz: 1000.0,
            tones: 512,
            num_harmonics: 6,
            amplitude_decay: [0.5, 0.9],
            noise_snr_db: None,
            duration_sec: 1.5,
            sample_rate: 16_000.0,
            annotation_hop_sec: 0.1,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.f0_min_hz > 0.0 && self.f0_max_hz >= self.f0_min_hz && self.f0_max_hz.is_finite()) {
            return bad(format!("invalid f0 range [{}, {}]", self.f0_min_hz, self.f0_max_hz));
        }
        if self.tones == 0 {
            return bad("dataset needs at least one tone".into());
        }
        let [lo, hi] = self.amplitude_decay;
        if !(lo > 0.0 && hi >= lo && hi <= 1.0) {
            return bad(format!("amplitude decay range [{lo}, {hi}] outside (0, 1]"));
        }
        if self.annotation_hop_sec.is_nan() || self.annotation_hop_sec <= 0.0 {
            return bad("annotation hop must be positive".into());
        }
        self.tone_spec(self.f0_max_hz, hi).validate().map_err(|e| Error::Config(e.to_string()))
    }

    fn tone_spec(&self, f0: f64, decay: f64) -> HarmonicToneSpec {
        HarmonicToneSpec {
            f0,
            num_harmonics: self.num_harmonics,
            amplitude_decay: decay,
            duration: self.duration_sec,
            sample_rate: self.sample_rate,
            noise_snr_db: self.noise_snr_db,
        }
    }

    /// Annotated times: every hop inside the central region that leaves
    /// half a second of signal on both sides, or the midpoint alone.
    pub fn annotation_times(&self) -> Vec<f64> {
        let (lo, hi) = (0.5f64.min(self.duration_sec / 2.0), (self.duration_sec - 0.5).max(self.duration_sec / 2.0));
        let n = ((hi - lo) / self.annotation_hop_sec + 1e-9).floor() as usize;
        (0..=n).map(|i| lo + i as f64 * self.annotation_hop_sec).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToneRecord {
    pub id: usize,
    pub f0_hz: f64,
    pub amplitude_decay: f64,
    pub samples: Vec<f64>,
}

impl ToneRecord {
    pub fn file_stem(&self) -> String {
        format!("tone_{:04}", self.id)
    }
}

/// Tones with log-uniform f0; identical for identical `(spec, seed)`.
pub fn generate(spec: &DatasetSpec, seed: u64) -> Result<Vec<ToneRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (spec.f0_min_hz.ln(), spec.f0_max_hz.ln());
    let [dlo, dhi] = spec.amplitude_decay;
    (0..spec.tones)
        .map(|id| {
            let f0_hz = if hi > lo { rng.random_range(lo..=hi).exp() } else { spec.f0_min_hz };
            let amplitude_decay = if dhi > dlo { rng.random_range(dlo..=dhi) } else { dlo };
            let samples = synth_tone(&spec.tone_spec(f0_hz, amplitude_decay), &mut rng)?;
            Ok(ToneRecord {
                id,
                f0_hz,
                amplitude_decay,
                samples,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub wav: String,
    pub annotation: String,
    pub f0_hz: f64,
    pub amplitude_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub spec: DatasetSpec,
    pub tones: Vec<ManifestEntry>,
}

/// Writes WAVs, annotation CSVs and the manifest into `dir`.
pub fn write_dataset(dir: &Path, spec: &DatasetSpec, seed: u64, records: &[ToneRecord]) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let times = spec.annotation_times();
    let mut tones = Vec::with_capacity(records.len());
    for r in records {
        let stem = r.file_stem();
        let (wav, annotation) = (format!("{stem}.wav"), format!("{stem}.csv"));
        write_wav(&dir.join(&wav), &r.samples, spec.sample_rate.round() as u32)?;
        let rows: Vec<Annotation> = times
            .iter()
            .map(|&time_sec| Annotation { time_sec, f0_hz: r.f0_hz })
            .collect();
        write_annotations(&dir.join(&annotation), &rows)?;
        tones.push(ManifestEntry {
            id: r.id,
            wav,
            annotation,
            f0_hz: r.f0_hz,
            amplitude_decay: r.amplitude_decay,
        });
    }
    let manifest = Manifest {
        seed,
        spec: spec.clone(),
        tones,
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse(&path, e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Audio with reference pitch annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedAudio {
    pub name: String,
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub annotations: Vec<Annotation>,
}

/// Named collection of annotated recordings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub name: String,
    pub items: Vec<AnnotatedAudio>,
}

impl EvalSet {
    /// In-memory set annotated like [`write_dataset`] would.
    pub fn from_records(name: impl Into<String>, spec: &DatasetSpec, records: &[ToneRecord]) -> Self {
        let times = spec.annotation_times();
        Self {
            name: name.into(),
            items: records
                .iter()
                .map(|r| AnnotatedAudio {
                    name: r.file_stem(),
                    samples: r.samples.clone(),
                    sample_rate: spec.sample_rate,
                    annotations: times.iter().map(|&time_sec| Annotation { time_sec, f0_hz: r.f0_hz }).collect(),
                })
                .collect(),
        }
    }

    /// Loads a directory written by [`write_dataset`]; the set is named
    /// after the directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;
        let items = manifest
            .tones
            .iter()
            .map(|t| {
                let audio = read_wav(&dir.join(&t.wav))?;
                Ok(AnnotatedAudio {
                    name: t.wav.clone(),
                    samples: audio.samples,
                    sample_rate: f64::from(audio.sample_rate),
                    annotations: read_annotations(&dir.join(&t.annotation))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: dir_name(dir),
            items,
        })
    }
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| PathBuf::from(dir).display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetSpec {
        DatasetSpec {
            tones: 3,
            duration_sec: 0.2,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small(), 5).unwrap();
        assert_eq!(a, generate(&small(), 5).unwrap());
        assert_ne!(a, generate(&small(), 6).unwrap());
        assert!(a.iter().all(|r| (65.0..=1000.0).contains(&r.f0_hz)));
    }

    #[test]
    fn rejects_aliasing_spec() {
        let spec = DatasetSpec {
            num_harmonics: 12,
            ..small()
        };
        assert!(matches!(generate(&spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn annotation_times_cover_center() {
        let t = DatasetSpec::default().annotation_times();
        assert_eq!(t.len(), 6);
        assert!((t[0] - 0.5).abs() < 1e-12 && (t[5] - 1.0).abs() < 1e-9);
        assert_eq!(small().annotation_times(), vec![0.1]);
    }

    #[test]
    fn write_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small();
        let recs = generate(&spec, 1).unwrap();
        write_dataset(dir.path(), &spec, 1, &recs).unwrap();
        let set = EvalSet::load(dir.path()).unwrap();
        assert_eq!(set.items.len(), 3);
        assert_eq!(set.items[0].annotations[0].f0_hz, recs[0].f0_hz);
        for (a, b) in set.items[1].samples.iter().zip(&recs[1].samples) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}
