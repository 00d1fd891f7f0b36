//! Siamese self-supervised training on synthetic tones.
//!
//! Each batch item is a wide frame cropped into `(x, x_k)` with a known
//! shift `k`, both independently augmented, plus a third augmentation of
//! `x` for the invariance term. The three branches share parameters. Loss
//! weights are rebalanced every step from per-loss gradient norms taken over
//! all parameters.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataset::{self, DatasetSpec, EvalSet};
use crate::error::{Error, Result};
use crate::eval::{calibrate, Calibration};
use crate::frontend::{augment, sample_shifted_pair, Frontend, FrontendConfig, ShiftedPair};
use crate::grad::{Tape, Tensor};
use crate::losses::{
    objective_terms, pesto_baseline_objective, pesto_ot_objective, update_lambdas, LossKind, LossState,
    ObjectiveOutput, PitchPosterior, LAMBDA_MAX, LAMBDA_MIN,
};
use crate::model::{Encoder, EncoderConfig, ForwardNodes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// `lambda_ot L_ot + lambda_inv L_inv`.
    PestoOt,
    /// `lambda_equiv L_equiv + lambda_sce L_sce + lambda_inv L_inv`.
    PestoBaseline,
}

impl Objective {
    pub fn terms(self) -> &'static [LossKind] {
        objective_terms(self == Objective::PestoBaseline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    /// Largest pitch shift between the two branches, in bins.
    pub k_max: usize,
    /// Base of the power-series projection; baseline objective only.
    pub alpha: f64,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub log_interval: u64,
    pub checkpoint_path: PathBuf,
    pub ema_decay: f64,
    pub gain_range_db: [f64; 2],
    pub noise_std: f64,
    /// Consecutive aborted attempts at one step before training fails.
    pub max_retries: u32,
    /// Known-pitch tones used to fix the output bin offset after training.
    pub calibration_tones: usize,
    pub frontend: FrontendConfig,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::PestoOt,
            steps: 5000,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_betas: [0.9, 0.999],
            adam_eps: 1e-8,
            k_max: 24,
            alpha: 1.02,
            seed: 0,
            dataset: DatasetSpec {
                tones: 2000,
                ..DatasetSpec::default()
            },
            log_interval: 100,
            checkpoint_path: PathBuf::from("model.oteq"),
            ema_decay: crate::losses::DEFAULT_EMA_DECAY,
            gain_range_db: [-6.0, 6.0],
            noise_std: 0.01,
            max_retries: 10,
            calibration_tones: 64,
            frontend: FrontendConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every invariant before any compute.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning rate {} must be finite and nonnegative", self.learning_rate));
        }
        if self.adam_betas.iter().any(|b| !(0.0..1.0).contains(b)) || self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad(format!("invalid Adam betas {:?} or eps {}", self.adam_betas, self.adam_eps));
        }
        if self.objective == Objective::PestoBaseline && !(self.alpha.is_finite() && self.alpha > 1.0) {
            return bad(format!("alpha = {} must exceed 1 for the baseline objective", self.alpha));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad(format!("ema decay {} outside (0, 1)", self.ema_decay));
        }
        if self.log_interval == 0 || self.max_retries == 0 || self.calibration_tones == 0 {
            return bad("log_interval, max_retries and calibration_tones must be positive".into());
        }
        let [g0, g1] = self.gain_range_db;
        if !(g0.is_finite() && g1.is_finite() && g0 <= g1) || !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("invalid augmentation settings".into());
        }
        if self.k_max > self.frontend.k_max {
            return bad(format!("k_max {} exceeds frontend padding {}", self.k_max, self.frontend.k_max));
        }
        if self.encoder.n_bins_in != self.frontend.n_bins {
            return bad(format!(
                "encoder expects {} bins, frontend produces {}",
                self.encoder.n_bins_in, self.frontend.n_bins
            ));
        }
        if self.dataset.sample_rate != self.frontend.sample_rate {
            return bad("dataset and frontend sample rates differ".into());
        }
        self.encoder.validate()?;
        self.dataset.validate()?;
        let lo = self.frontend.bin_of(self.dataset.f0_min_hz);
        let hi = self.frontend.bin_of(self.dataset.f0_max_hz);
        let first = self.encoder.crop_offset() as f64;
        let last = first + self.encoder.n_bins_out as f64 - 1.0;
        if !(lo >= first && hi <= last) {
            return bad(format!(
                "f0 range [{}, {}] Hz maps to input bins [{lo:.1}, {hi:.1}], outside the output range [{first}, {last}]",
                self.dataset.f0_min_hz, self.dataset.f0_max_hz
            ));
        }
        Frontend::new(self.frontend.clone()).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn metrics_path(&self) -> PathBuf {
        let mut p = self.checkpoint_path.clone().into_os_string();
        p.push(".metrics.jsonl");
        PathBuf::from(p)
    }
}

/// Adam first and second moments, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn apply(&mut self, params: &mut [Tensor], grads: &[Vec<f64>], lr: f64, [b1, b2]: [f64; 2], eps: f64) {
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub encoder: Encoder,
    pub adam: AdamState,
    pub loss_state: LossState,
    /// Completed steps.
    pub step: u64,
}

/// One training example: a shifted pair plus an extra view of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub pair: ShiftedPair,
    pub x_aug: Vec<f64>,
}

/// Batch-mean loss values and per-loss parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    pub terms: Vec<LossKind>,
    pub values: Vec<f64>,
    /// `grads[t][p]`: gradient of term `t` with respect to parameter tensor `p`.
    pub grads: Vec<Vec<Vec<f64>>>,
    pub overflow: bool,
}

impl BatchGradients {
    pub fn value(&self, kind: LossKind) -> Option<f64> {
        self.terms.iter().position(|&k| k == kind).map(|i| self.values[i])
    }

    pub fn grad(&self, kind: LossKind) -> Option<&[Vec<f64>]> {
        self.terms.iter().position(|&k| k == kind).map(|i| self.grads[i].as_slice())
    }

    pub fn grad_norm(&self, kind: LossKind) -> Option<f64> {
        self.grad(kind).map(|g| g.iter().flatten().map(|x| x * x).sum::<f64>().sqrt())
    }
}

/// One line of the metrics log. Terms absent from the objective are null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub loss_total: f64,
    pub loss_ot: Option<f64>,
    pub loss_inv: Option<f64>,
    pub loss_equiv: Option<f64>,
    pub loss_sce: Option<f64>,
    pub lambda_ot: Option<f64>,
    pub lambda_inv: Option<f64>,
    pub lambda_equiv: Option<f64>,
    pub lambda_sce: Option<f64>,
    pub grad_norm_ot: Option<f64>,
    pub grad_norm_inv: Option<f64>,
    pub grad_norm_equiv: Option<f64>,
    pub grad_norm_sce: Option<f64>,
    pub overflow_flag: bool,
    /// Aborted attempts before this step succeeded.
    pub retries: u32,
}

pub struct Trainer {
    config: TrainConfig,
    frontend: Frontend,
    /// Compressed wide frame at the center of each training tone.
    frames: Vec<Vec<f64>>,
    state: TrainState,
}

impl Trainer {
    /// Validates `config`, builds the dataset and initializes parameters.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(u64::MAX);
        let encoder = Encoder::init(config.encoder.clone(), &mut rng)?;
        let state = TrainState {
            adam: AdamState::new(encoder.params()),
            encoder,
            loss_state: LossState::new(config.ema_decay),
            step: 0,
        };
        Self::resume(config, state)
    }

    /// Continues from `state` under `config`.
    pub fn resume(config: TrainConfig, state: TrainState) -> Result<Self> {
        config.validate()?;
        if state.encoder.config() != &config.encoder {
            return Err(Error::Config("checkpoint encoder does not match the config".into()));
        }
        let frontend = Frontend::new(config.frontend.clone())?;
        let frames = dataset::generate(&config.dataset, config.seed)?
            .iter()
            .map(|r| frontend.wide_frame(&r.samples, r.samples.len() / 2))
            .collect();
        Ok(Self {
            config,
            frontend,
            frames,
            state,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn frontend(&self) -> &Frontend {
        &self.frontend
    }

    pub fn encoder(&self) -> &Encoder {
        &self.state.encoder
    }

    /// Random stream for attempt `retry` of step `step`.
    pub fn step_rng(&self, step: u64, retry: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(1 + (step << 16) + u64::from(retry));
        rng
    }

    /// Draws a batch: tone, shift and three independent augmentations per item.
    pub fn sample_batch(&self, rng: &mut impl Rng) -> Result<Vec<TrainItem>> {
        let cfg = &self.config;
        let gain = (cfg.gain_range_db[0], cfg.gain_range_db[1]);
        (0..cfg.batch_size)
            .map(|_| {
                let wide = &self.frames[rng.random_range(0..self.frames.len())];
                let pair = sample_shifted_pair(wide, cfg.frontend.n_bins, cfg.k_max, rng)?;
                let (x, a) = augment(&pair.x, rng, gain, cfg.noise_std);
                let (x_k, b) = augment(&pair.x_k, rng, gain, cfg.noise_std);
                let (x_aug, c) = augment(&pair.x, rng, gain, cfg.noise_std);
                Ok(TrainItem {
                    pair: ShiftedPair {
                        x,
                        x_k,
                        augmentations: vec![a, b, c],
                        ..pair
                    },
                    x_aug,
                })
            })
            .collect()
    }

    fn objective(&self, y: &PitchPosterior, yk: &PitchPosterior, ya: &PitchPosterior, k: i64) -> Result<ObjectiveOutput> {
        let ls = &self.state.loss_state;
        match self.config.objective {
            Objective::PestoOt => pesto_ot_objective(y, yk, ya, k, self.config.k_max, ls),
            Objective::PestoBaseline => pesto_baseline_objective(y, yk, ya, k, self.config.k_max, self.config.alpha, ls),
        }
    }

    /// Per-loss values and parameter gradients averaged over `batch`.
    /// Fails with [`Error::NonFiniteLoss`] if any term or gradient is not
    /// finite.
    pub fn gradients(&self, batch: &[TrainItem]) -> Result<BatchGradients> {
        let enc = &self.state.encoder;
        let terms = self.config.objective.terms().to_vec();
        let shapes: Vec<usize> = enc.params().iter().map(Tensor::len).collect();
        let mut grads: Vec<Vec<Vec<f64>>> = terms
            .iter()
            .map(|_| shapes.iter().map(|&n| vec![0.0; n]).collect())
            .collect();
        let mut values = vec![0.0; terms.len()];
        let mut overflow = false;
        let scale = 1.0 / batch.len() as f64;
        let non_finite = |kind: LossKind| Error::NonFiniteLoss {
            component: kind.name().to_string(),
            step: self.state.step,
        };
        for item in batch {
            let mut branches: Vec<(Tape, ForwardNodes)> = Vec::with_capacity(3);
            let mut posts = Vec::with_capacity(3);
            for x in [&item.pair.x, &item.pair.x_k, &item.x_aug] {
                let mut tape = Tape::new();
                let nodes = enc.forward(&mut tape, x, true)?;
                let probs = tape.value(nodes.probs).data().to_vec();
                posts.push(PitchPosterior::new(probs).map_err(|_| non_finite(terms[0]))?);
                branches.push((tape, nodes));
            }
            let out = self.objective(&posts[0], &posts[1], &posts[2], item.pair.k)?;
            if let Some(kind) = out.non_finite() {
                return Err(non_finite(kind));
            }
            overflow |= out.overflow;
            for (t, c) in out.components.iter().enumerate() {
                values[t] += scale * c.value;
                for ((tape, nodes), seed) in branches.iter().zip([&c.grad_y, &c.grad_yk, &c.grad_yaug]) {
                    if seed.iter().all(|&g| g == 0.0) {
                        continue;
                    }
                    if seed.iter().any(|g| !g.is_finite()) {
                        return Err(non_finite(c.kind));
                    }
                    let g = tape.backward_with_seed(nodes.probs, seed)?;
                    for (acc, pg) in grads[t].iter_mut().zip(enc.param_grads(nodes, &g)) {
                        acc.iter_mut().zip(pg).for_each(|(a, b)| *a += scale * b);
                    }
                }
            }
        }
        for (t, g) in grads.iter().enumerate() {
            if g.iter().flatten().any(|x| !x.is_finite()) {
                return Err(non_finite(terms[t]));
            }
        }
        Ok(BatchGradients {
            terms,
            values,
            grads,
            overflow,
        })
    }

    /// One optimizer step on `batch`. On error the state is unchanged.
    pub fn train_step(&mut self, batch: &[TrainItem]) -> Result<MetricsRecord> {
        let bg = self.gradients(batch)?;
        let ls = self.state.loss_state.clone();
        let mut total = vec![Vec::new(); bg.grads[0].len()];
        for (p, slot) in total.iter_mut().enumerate() {
            *slot = vec![0.0; bg.grads[0][p].len()];
            for (t, &kind) in bg.terms.iter().enumerate() {
                let lambda = ls.lambda(kind);
                slot.iter_mut().zip(&bg.grads[t][p]).for_each(|(a, g)| *a += lambda * g);
            }
        }
        let mut params = self.state.encoder.params().to_vec();
        let mut adam = self.state.adam.clone();
        let cfg = &self.config;
        adam.apply(&mut params, &total, cfg.learning_rate, cfg.adam_betas, cfg.adam_eps);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss {
                component: "params".into(),
                step: self.state.step,
            });
        }
        let norms: Vec<(LossKind, f64)> = bg.terms.iter().map(|&k| (k, bg.grad_norm(k).expect("term present"))).collect();
        let record = self.record(&bg, &ls, &norms);
        self.state.encoder.params_mut().clone_from_slice(&params);
        self.state.adam = adam;
        self.state.loss_state = update_lambdas(&ls, &norms);
        debug_assert!(LossKind::ALL
            .iter()
            .all(|&k| (LAMBDA_MIN..=LAMBDA_MAX).contains(&self.state.loss_state.lambda(k))));
        self.state.step += 1;
        Ok(record)
    }

    fn record(&self, bg: &BatchGradients, ls: &LossState, norms: &[(LossKind, f64)]) -> MetricsRecord {
        let used = |k: LossKind| bg.terms.contains(&k);
        let lambda = |k: LossKind| used(k).then(|| ls.lambda(k));
        let norm = |k: LossKind| norms.iter().find(|(n, _)| *n == k).map(|(_, v)| *v);
        MetricsRecord {
            step: self.state.step + 1,
            loss_total: bg.terms.iter().zip(&bg.values).map(|(&k, v)| ls.lambda(k) * v).sum(),
            loss_ot: bg.value(LossKind::Ot),
            loss_inv: bg.value(LossKind::Inv),
            loss_equiv: bg.value(LossKind::Equiv),
            loss_sce: bg.value(LossKind::Sce),
            lambda_ot: lambda(LossKind::Ot),
            lambda_inv: lambda(LossKind::Inv),
            lambda_equiv: lambda(LossKind::Equiv),
            lambda_sce: lambda(LossKind::Sce),
            grad_norm_ot: norm(LossKind::Ot),
            grad_norm_inv: norm(LossKind::Inv),
            grad_norm_equiv: norm(LossKind::Equiv),
            grad_norm_sce: norm(LossKind::Sce),
            overflow_flag: bg.overflow,
            retries: 0,
        }
    }

    /// Samples a batch and steps, redrawing after a non-finite abort up to
    /// `max_retries` times.
    pub fn step(&mut self) -> Result<MetricsRecord> {
        let step = self.state.step;
        let mut last = None;
        for retry in 0..self.config.max_retries {
            let batch = self.sample_batch(&mut self.step_rng(step, retry))?;
            match self.train_step(&batch) {
                Ok(mut rec) => {
                    rec.retries = retry;
                    return Ok(rec);
                }
                Err(e @ Error::NonFiniteLoss { .. }) => {
                    warn!("step {step}: {e}; retrying with a new batch");
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Runs until `config.steps`, passing every `log_interval`-th record and
    /// the final one to `on_log`.
    pub fn run(&mut self, mut on_log: impl FnMut(&Self, &MetricsRecord) -> Result<()>) -> Result<()> {
        while self.state.step < self.config.steps {
            let rec = self.step()?;
            if rec.step % self.config.log_interval == 0 || rec.step == self.config.steps {
                on_log(self, &rec)?;
            }
        }
        Ok(())
    }

    /// Offset calibration on fresh known-pitch tones from the training
    /// distribution.
    pub fn calibrate(&self) -> Result<Calibration> {
        let spec = DatasetSpec {
            tones: self.config.calibration_tones,
            ..self.config.dataset.clone()
        };
        let records = dataset::generate(&spec, self.config.seed ^ 0x00ca_1b4a_7e00)?;
        let set = EvalSet::from_records("calibration", &spec, &records);
        calibrate(&self.state.encoder, &self.frontend, &set)
    }

    /// Parameters, optimizer moments and loss balancing state.
    pub fn to_checkpoint(&self, calibration: Option<&Calibration>) -> Checkpoint {
        let s = &self.state;
        let mut ckpt = Checkpoint::new(serde_json::json!({
            "encoder": self.config.encoder,
            "frontend": self.config.frontend,
            "train": self.config,
            "step": s.step,
            "adam_t": s.adam.t,
            "loss_state": s.loss_state,
            "calibration": calibration,
        }));
        s.encoder.write_tensors(&mut ckpt);
        let names = self.config.encoder.param_names();
        for (prefix, moments) in [("adam.m", &s.adam.m), ("adam.v", &s.adam.v)] {
            for (name, buf) in names.iter().zip(moments) {
                ckpt.push(format!("{prefix}.{name}"), Tensor::vector(buf.clone()));
            }
        }
        ckpt
    }
}

fn meta<T: serde::de::DeserializeOwned>(ckpt: &Checkpoint, key: &str) -> Result<T> {
    serde_json::from_value(ckpt.metadata[key].clone()).map_err(|e| Error::Format {
        offset: 0,
        message: format!("metadata `{key}`: {e}"),
    })
}

/// Restores the training state stored by [`Trainer::to_checkpoint`].
pub fn state_from_checkpoint(ckpt: &Checkpoint) -> Result<TrainState> {
    let encoder = Encoder::from_checkpoint(ckpt)?;
    let names = encoder.config().param_names();
    let moments = |prefix: &str| {
        names
            .iter()
            .map(|n| ckpt.require(&format!("{prefix}.{n}")).map(|t| t.data().to_vec()))
            .collect::<Result<Vec<_>>>()
    };
    Ok(TrainState {
        adam: AdamState {
            m: moments("adam.m")?,
            v: moments("adam.v")?,
            t: meta(ckpt, "adam_t")?,
        },
        loss_state: meta(ckpt, "loss_state")?,
        step: meta(ckpt, "step")?,
        encoder,
    })
}

/// Trained encoder with the frontend and calibration needed for inference.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub encoder: Encoder,
    pub frontend: Frontend,
    pub calibration: Calibration,
}

impl TrainedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let encoder = Encoder::from_checkpoint(ckpt)?;
        let frontend = Frontend::new(meta(ckpt, "frontend")?)?;
        let calibration = match meta::<Option<Calibration>>(ckpt, "calibration")? {
            Some(c) => c,
            None => Calibration::identity(&frontend, &encoder),
        };
        Ok(Self {
            encoder,
            frontend,
            calibration,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }
}

/// Writes metrics records as JSON lines.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path, append: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        let line = serde_json::to_string(rec).map_err(|e| Error::parse(&self.path, e.to_string()))?;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Parses a metrics log written by [`MetricsWriter`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1))))
        .collect()
}

/// Full training run: resumes from `config.checkpoint_path` when `resume`
/// is set, checkpoints at every logged step, calibrates at the end.
pub fn train(config: TrainConfig, resume: bool) -> Result<TrainedModel> {
    let path = config.checkpoint_path.clone();
    let mut trainer = if resume {
        Trainer::resume(config, state_from_checkpoint(&Checkpoint::read(&path)?)?)?
    } else {
        Trainer::new(config)?
    };
    let mut metrics = MetricsWriter::create(&trainer.config().metrics_path(), resume)?;
    info!(
        "training {:?} from step {} to {}",
        trainer.config().objective,
        trainer.state().step,
        trainer.config().steps
    );
    trainer.run(|t, rec| {
        metrics.write(rec)?;
        info!("step {} loss {:.5}", rec.step, rec.loss_total);
        t.to_checkpoint(None).write(&path)
    })?;
    let calibration = trainer.calibrate()?;
    trainer.to_checkpoint(Some(&calibration)).write(&path)?;
    Ok(TrainedModel {
        encoder: trainer.encoder().clone(),
        frontend: trainer.frontend().clone(),
        calibration,
    })
}
