//! Training objectives on pitch posteriors.
//!
//! Every loss returns its value together with closed-form gradients with
//! respect to the posteriors it consumes; the trainer feeds those into the
//! encoder tape. Cross-entropies use a probability floor: each argument of a
//! logarithm is mixed as `(1 - N eps) q + eps`, which keeps one-hot targets
//! finite and stays on the simplex.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{grad_raw, translate, translate_adjoint};

/// Probability floor inside every logarithm.
pub const PROB_FLOOR: f64 = 1e-8;

/// Tolerance on the total mass of a posterior.
pub const POSTERIOR_TOL: f64 = 1e-7;

/// Probability vector over log-frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchPosterior(Vec<f64>);

impl PitchPosterior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Shape("empty posterior".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain("posterior entries must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > POSTERIOR_TOL {
            return Err(Error::Domain(format!("posterior sums to {total}")));
        }
        Ok(Self(probs))
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        Self(crate::grad::softmax(logits))
    }

    pub fn one_hot(n: usize, bin: usize) -> Self {
        let mut v = vec![0.0; n];
        v[bin] = 1.0;
        Self(v)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

/// Value of a two-argument loss and its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
}

/// [`PairLoss`] plus the overflow report of the power-series projection.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivLoss {
    pub value: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
    /// Set when any `alpha^i`, the projections, or their ratio is not finite.
    pub overflow: bool,
}

fn same_len(y: &PitchPosterior, y_k: &PitchPosterior) -> Result<()> {
    if y.len() != y_k.len() {
        return Err(Error::Shape(format!("posteriors of length {} and {}", y.len(), y_k.len())));
    }
    Ok(())
}

/// Wasserstein-2 distance between `y` and `y_k` shifted back by `k`, both
/// zero-padded by `k_max` bins.
pub fn ot_loss(y: &PitchPosterior, y_k: &PitchPosterior, k: i64, k_max: usize) -> Result<PairLoss> {
    same_len(y, y_k)?;
    let n = y.len();
    let a = translate(&y.0, 0, k_max)?;
    let b = translate(&y_k.0, -k, k_max)?;
    let grid: Vec<f64> = (0..a.len()).map(|i| i as f64).collect();
    let (cost, ga, gb) = grad_raw(&grid, &a, &grid, &b, 2.0);
    let value = cost.max(0.0).sqrt();
    // the distance is not differentiable at zero; use the zero subgradient
    let s = if value > 0.0 { 0.5 / value } else { 0.0 };
    let grad_a = translate_adjoint(&ga, n, 0, k_max).into_iter().map(|g| s * g).collect();
    let grad_b = translate_adjoint(&gb, n, -k, k_max).into_iter().map(|g| s * g).collect();
    Ok(PairLoss { value, grad_a, grad_b })
}

fn huber(d: f64) -> (f64, f64) {
    if d.abs() <= 1.0 {
        (0.5 * d * d, d)
    } else {
        (d.abs() - 0.5, d.signum())
    }
}

/// Power-series equivariance loss: both posteriors are projected with
/// `(alpha, alpha^2, ..., alpha^n)` and the ratio of projections is compared
/// with `alpha^k` through a unit huber.
pub fn equiv_loss(y: &PitchPosterior, y_k: &PitchPosterior, k: i64, alpha: f64) -> Result<EquivLoss> {
    same_len(y, y_k)?;
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must be > 1")));
    }
    let powers: Vec<f64> = (1..=y.len()).map(|i| alpha.powi(i as i32)).collect();
    let mut overflow = powers.iter().any(|p| !p.is_finite());
    let project = |v: &[f64]| v.iter().zip(&powers).map(|(a, b)| a * b).sum::<f64>();
    let (ey, eyk) = (project(&y.0), project(&y_k.0));
    let ratio = eyk / ey;
    let target = alpha.powi(k as i32);
    let (value, slope) = huber(ratio - target);
    overflow |= !(ey.is_finite() && eyk.is_finite() && ratio.is_finite() && value.is_finite());
    let grad_a = powers.iter().map(|p| -slope * eyk * p / (ey * ey)).collect();
    let grad_b = powers.iter().map(|p| slope * p / ey).collect();
    Ok(EquivLoss { value, grad_a, grad_b, overflow })
}

/// `0.5 * [CE(p, q) + CE(q, p)]` with floored logarithms, and its gradient.
fn symmetric_ce(p: &[f64], q: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let shrink = 1.0 - p.len() as f64 * PROB_FLOOR;
    let floor = |v: f64| shrink * v + PROB_FLOOR;
    let mut value = 0.0;
    let mut gp = vec![0.0; p.len()];
    let mut gq = vec![0.0; q.len()];
    for i in 0..p.len() {
        let (fp, fq) = (floor(p[i]), floor(q[i]));
        let (lp, lq) = (fp.ln(), fq.ln());
        value -= 0.5 * (p[i] * lq + q[i] * lp);
        gp[i] = -0.5 * (lq + q[i] * shrink / fp);
        gq[i] = -0.5 * (lp + p[i] * shrink / fq);
    }
    (value, gp, gq)
}

/// Symmetrized cross-entropy between `y` and `y_k` shifted back by `k`, on
/// the `k_max`-padded domain.
pub fn sce_loss(y: &PitchPosterior, y_k: &PitchPosterior, k: i64, k_max: usize) -> Result<PairLoss> {
    same_len(y, y_k)?;
    let n = y.len();
    let a = translate(&y.0, 0, k_max)?;
    let b = translate(&y_k.0, -k, k_max)?;
    let (value, ga, gb) = symmetric_ce(&a, &b);
    Ok(PairLoss {
        value,
        grad_a: translate_adjoint(&ga, n, 0, k_max),
        grad_b: translate_adjoint(&gb, n, -k, k_max),
    })
}

/// Symmetrized cross-entropy between posteriors of two pitch-preserving
/// augmentations of the same frame.
pub fn inv_loss(y_a: &PitchPosterior, y_b: &PitchPosterior) -> Result<PairLoss> {
    same_len(y_a, y_b)?;
    let (value, grad_a, grad_b) = symmetric_ce(&y_a.0, &y_b.0);
    Ok(PairLoss { value, grad_a, grad_b })
}

/// Loss terms that can enter an objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ot,
    Inv,
    Equiv,
    Sce,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Ot, LossKind::Inv, LossKind::Equiv, LossKind::Sce];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ot => "ot",
            LossKind::Inv => "inv",
            LossKind::Equiv => "equiv",
            LossKind::Sce => "sce",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

pub const LAMBDA_MIN: f64 = 1e-3;
pub const LAMBDA_MAX: f64 = 1e3;
pub const DEFAULT_EMA_DECAY: f64 = 0.99;

/// Loss weights balanced by running gradient norms.
///
/// Each weight is `ema_ref / (ema_i + 1e-8)`, clipped to
/// `[LAMBDA_MIN, LAMBDA_MAX]`, where `ema_ref` belongs to the first loss
/// passed to [`update_lambdas`] and that loss keeps weight 1. EMAs start at
/// zero and are bias-corrected by the number of updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossState {
    pub lambda_ot: f64,
    pub lambda_inv: f64,
    pub lambda_equiv: f64,
    pub lambda_sce: f64,
    /// Raw EMA accumulators indexed like [`LossKind::ALL`].
    pub grad_norm_ema: [f64; 4],
    pub ema_decay: f64,
    pub updates: u64,
}

impl Default for LossState {
    fn default() -> Self {
        Self::new(DEFAULT_EMA_DECAY)
    }
}

impl LossState {
    pub fn new(ema_decay: f64) -> Self {
        assert!(ema_decay > 0.0 && ema_decay < 1.0, "ema decay must lie in (0, 1)");
        Self {
            lambda_ot: 1.0,
            lambda_inv: 1.0,
            lambda_equiv: 1.0,
            lambda_sce: 1.0,
            grad_norm_ema: [0.0; 4],
            ema_decay,
            updates: 0,
        }
    }

    pub fn lambda(&self, kind: LossKind) -> f64 {
        match kind {
            LossKind::Ot => self.lambda_ot,
            LossKind::Inv => self.lambda_inv,
            LossKind::Equiv => self.lambda_equiv,
            LossKind::Sce => self.lambda_sce,
        }
    }

    pub fn set_lambda(&mut self, kind: LossKind, value: f64) {
        match kind {
            LossKind::Ot => self.lambda_ot = value,
            LossKind::Inv => self.lambda_inv = value,
            LossKind::Equiv => self.lambda_equiv = value,
            LossKind::Sce => self.lambda_sce = value,
        }
    }

    /// Bias-corrected EMA of a loss's gradient norm.
    pub fn grad_norm_ema(&self, kind: LossKind) -> f64 {
        if self.updates == 0 {
            return 0.0;
        }
        let correction = 1.0 - self.ema_decay.powi(self.updates.min(i32::MAX as u64) as i32);
        self.grad_norm_ema[kind.slot()] / correction
    }
}

/// Folds one observation of per-loss gradient norms into the state and
/// recomputes the weights. The first entry is the reference loss.
pub fn update_lambdas(state: &LossState, grad_norms: &[(LossKind, f64)]) -> LossState {
    if grad_norms.is_empty() {
        return state.clone();
    }
    if let Some((kind, g)) = grad_norms.iter().find(|(_, g)| !(g.is_finite() && *g >= 0.0)) {
        warn!("ignoring gradient norm update: {} norm is {g}", kind.name());
        return state.clone();
    }
    let mut next = state.clone();
    next.updates += 1;
    let d = next.ema_decay;
    for &(kind, g) in grad_norms {
        let e = &mut next.grad_norm_ema[kind.slot()];
        *e = d * *e + (1.0 - d) * g;
    }
    let (reference, _) = grad_norms[0];
    let target = next.grad_norm_ema(reference);
    next.set_lambda(reference, 1.0);
    for &(kind, _) in &grad_norms[1..] {
        let lambda = target / (next.grad_norm_ema(kind) + 1e-8);
        next.set_lambda(kind, lambda.clamp(LAMBDA_MIN, LAMBDA_MAX));
    }
    next
}

/// One weighted term of an objective with its gradients on the three
/// branches (`y`, `y_k`, `y_aug`). Unused branches carry zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub kind: LossKind,
    pub value: f64,
    pub lambda: f64,
    pub grad_y: Vec<f64>,
    pub grad_yk: Vec<f64>,
    pub grad_yaug: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveOutput {
    pub total: f64,
    pub components: Vec<Component>,
    /// Overflow reported by the power-series loss, if present.
    pub overflow: bool,
    /// λ-weighted gradients of `total`.
    pub grad_y: Vec<f64>,
    pub grad_yk: Vec<f64>,
    pub grad_yaug: Vec<f64>,
}

impl ObjectiveOutput {
    fn assemble(components: Vec<Component>, overflow: bool) -> Self {
        let n = components[0].grad_y.len();
        let mut out = ObjectiveOutput {
            total: 0.0,
            components: Vec::new(),
            overflow,
            grad_y: vec![0.0; n],
            grad_yk: vec![0.0; n],
            grad_yaug: vec![0.0; n],
        };
        for c in &components {
            out.total += c.lambda * c.value;
            for (dst, src) in [
                (&mut out.grad_y, &c.grad_y),
                (&mut out.grad_yk, &c.grad_yk),
                (&mut out.grad_yaug, &c.grad_yaug),
            ] {
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += c.lambda * s);
            }
        }
        out.components = components;
        out
    }

    pub fn value(&self, kind: LossKind) -> Option<f64> {
        self.components.iter().find(|c| c.kind == kind).map(|c| c.value)
    }

    /// First component whose value is not finite.
    pub fn non_finite(&self) -> Option<LossKind> {
        self.components.iter().find(|c| !c.value.is_finite()).map(|c| c.kind)
    }
}

fn component(kind: LossKind, state: &LossState, value: f64, y: Vec<f64>, yk: Vec<f64>, yaug: Vec<f64>) -> Component {
    Component {
        kind,
        value,
        lambda: state.lambda(kind),
        grad_y: y,
        grad_yk: yk,
        grad_yaug: yaug,
    }
}

/// `lambda_ot * L_ot(y, y_k, k) + lambda_inv * L_inv(y, y_aug)`.
pub fn pesto_ot_objective(
    y: &PitchPosterior,
    y_k: &PitchPosterior,
    y_aug: &PitchPosterior,
    k: i64,
    k_max: usize,
    state: &LossState,
) -> Result<ObjectiveOutput> {
    same_len(y, y_aug)?;
    let zeros = vec![0.0; y.len()];
    let ot = ot_loss(y, y_k, k, k_max)?;
    let inv = inv_loss(y, y_aug)?;
    let components = vec![
        component(LossKind::Ot, state, ot.value, ot.grad_a, ot.grad_b, zeros.clone()),
        component(LossKind::Inv, state, inv.value, inv.grad_a, zeros, inv.grad_b),
    ];
    Ok(ObjectiveOutput::assemble(components, false))
}

/// `lambda_equiv * L_equiv + lambda_sce * L_sce + lambda_inv * L_inv`.
pub fn pesto_baseline_objective(
    y: &PitchPosterior,
    y_k: &PitchPosterior,
    y_aug: &PitchPosterior,
    k: i64,
    k_max: usize,
    alpha: f64,
    state: &LossState,
) -> Result<ObjectiveOutput> {
    same_len(y, y_aug)?;
    let zeros = vec![0.0; y.len()];
    let equiv = equiv_loss(y, y_k, k, alpha)?;
    let sce = sce_loss(y, y_k, k, k_max)?;
    let inv = inv_loss(y, y_aug)?;
    let components = vec![
        component(LossKind::Equiv, state, equiv.value, equiv.grad_a, equiv.grad_b, zeros.clone()),
        component(LossKind::Sce, state, sce.value, sce.grad_a, sce.grad_b, zeros.clone()),
        component(LossKind::Inv, state, inv.value, inv.grad_a, zeros, inv.grad_b),
    ];
    Ok(ObjectiveOutput::assemble(components, equiv.overflow))
}

/// Gradient norm weighting order: the first objective term is the reference.
pub fn objective_terms(baseline: bool) -> &'static [LossKind] {
    if baseline {
        &[LossKind::Equiv, LossKind::Sce, LossKind::Inv]
    } else {
        &[LossKind::Ot, LossKind::Inv]
    }
}

/// One `(alpha, n)` cell of the numerical stability comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCell {
    pub alpha: f64,
    pub n_bins: usize,
    /// `alpha^n`, the largest power in the projection vector.
    pub max_power: f64,
    pub equiv_overflow: bool,
    pub equiv_finite: bool,
    pub ot_finite: bool,
    /// Largest OT loss over the probe pairs.
    pub ot_max: f64,
}

/// Evaluates both equivariance losses on adversarial one-hot pairs (mass at
/// the extreme bins, shifts of `0` and `±k_max`) for every `(alpha, n)`.
pub fn stability_sweep(alphas: &[f64], n_bins: &[usize], k_max: usize) -> Result<Vec<StabilityCell>> {
    let mut cells = Vec::with_capacity(alphas.len() * n_bins.len());
    let k = k_max as i64;
    for &alpha in alphas {
        for &n in n_bins {
            if n == 0 {
                return Err(Error::Domain("bin count must be positive".into()));
            }
            let (lo, hi) = (PitchPosterior::one_hot(n, 0), PitchPosterior::one_hot(n, n - 1));
            let pairs = [(&hi, &hi, 0), (&hi, &lo, k), (&lo, &hi, -k), (&lo, &lo, 0)];
            let mut cell = StabilityCell {
                alpha,
                n_bins: n,
                max_power: alpha.powi(n as i32),
                equiv_overflow: false,
                equiv_finite: true,
                ot_finite: true,
                ot_max: 0.0,
            };
            for (a, b, shift) in pairs {
                let e = equiv_loss(a, b, shift, alpha)?;
                cell.equiv_overflow |= e.overflow;
                cell.equiv_finite &= e.value.is_finite()
                    && e.grad_a.iter().chain(&e.grad_b).all(|g| g.is_finite());
                let o = ot_loss(a, b, shift, k_max)?;
                cell.ot_finite &= o.value.is_finite() && o.grad_a.iter().chain(&o.grad_b).all(|g| g.is_finite());
                cell.ot_max = cell.ot_max.max(o.value);
            }
            cells.push(cell);
        }
    }
    Ok(cells)
}
