//! Discrete one-dimensional optimal transport.
//!
//! In one dimension the optimal coupling between two distributions is the
//! monotone one, so the `p`-Wasserstein cost is an integral over quantile
//! levels of `|F_mu^-1(r) - F_nu^-1(r)|^p`. For discrete inputs the integrand
//! is piecewise constant and changes only at the cumulative weights of either
//! distribution; summing over the merged level sequence gives the exact cost.
//!
//! Positions used for pitch posteriors are the integer bin grid `0..n`.

pub mod lp;

use crate::error::{Error, Result};

pub use lp::{lp_ot_oracle, monotone_coupling, TransportPlan};

/// Tolerance on the total mass of a simplex vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Negative weights above this bound are treated as round-off and clamped.
pub const CLAMP_TOL: f64 = 1e-12;

/// Nonnegative weights on a strictly increasing 1D grid, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validates and builds a distribution.
    ///
    /// Weights in `[-1e-12, 0)` are clamped to zero and the result is
    /// renormalized; the total must already be within `1e-9` of one.
    pub fn new(positions: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Shape("distribution must have at least one atom".into()));
        }
        if positions.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("positions must be finite".into()));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("positions must be strictly increasing".into()));
        }
        let weights = clamp_roundoff(weights)?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { positions, weights })
    }

    /// Distribution on the bin grid `0, 1, ..., n-1`.
    pub fn on_grid(weights: Vec<f64>) -> Result<Self> {
        let positions = (0..weights.len()).map(|i| i as f64).collect();
        Self::new(positions, weights)
    }

    /// Unit mass at a single position.
    pub fn dirac(position: f64) -> Self {
        Self {
            positions: vec![position],
            weights: vec![1.0],
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn clamp_roundoff(weights: Vec<f64>) -> Result<Vec<f64>> {
    weights
        .into_iter()
        .map(|w| {
            if !w.is_finite() {
                Err(Error::DegenerateInput(format!("non-finite weight {w}")))
            } else if w >= 0.0 {
                Ok(w)
            } else if w >= -CLAMP_TOL {
                Ok(0.0)
            } else {
                Err(Error::DegenerateInput(format!("negative weight {w}")))
            }
        })
        .collect()
}

/// Rescales nonnegative weights onto the probability simplex.
pub fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    let clamped = clamp_roundoff(weights.to_vec())?;
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput("weights have no positive mass".into()));
    }
    Ok(clamped.into_iter().map(|w| w / total).collect())
}

/// `F(t)`: total weight at positions `<= t`.
pub fn cdf(dist: &DiscreteDistribution, t: f64) -> f64 {
    let mut acc = 0.0;
    for (&p, &w) in dist.positions.iter().zip(&dist.weights) {
        if p > t {
            break;
        }
        acc += w;
    }
    acc.min(1.0)
}

/// `F^-1(r)`: smallest atom position whose cumulative weight reaches `r`.
pub fn quantile(dist: &DiscreteDistribution, r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Domain(format!("quantile level {r} outside (0, 1]")));
    }
    let mut acc = 0.0;
    for (&p, &w) in dist.positions.iter().zip(&dist.weights) {
        acc += w;
        if acc >= r {
            return Ok(p);
        }
    }
    // cumulative sum can fall short of 1 by round-off
    Ok(*dist.positions.last().expect("non-empty distribution"))
}

fn check_order(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::Domain(format!("Wasserstein order p = {p} must be >= 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Mu,
    Nu,
}

/// One merged quantile level together with the segment that ends there.
#[derive(Debug, Clone, Copy)]
struct Segment {
    side: Side,
    index: usize,
    /// `|x_i - y_j|^p` for the atoms active on `(r_{l-1}, r_l]`.
    cost: f64,
    length: f64,
}

/// Walks both cumulative-weight sequences in merged order. Equal levels are
/// taken `mu` first unless `nu_first` is set. The flag in the result reports
/// whether any cross-side tie occurred.
fn sweep(
    xs: &[f64],
    wa: &[f64],
    ys: &[f64],
    wb: &[f64],
    p: f64,
    nu_first: bool,
) -> (Vec<Segment>, bool) {
    let (n, m) = (wa.len(), wb.len());
    let mut segments = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ca, mut cb) = (wa[0], wb[0]);
    let mut prev = 0.0;
    let mut tie = false;
    let pow = |d: f64| if p == 2.0 { d * d } else if p == 1.0 { d.abs() } else { d.abs().powf(p) };
    while i < n || j < m {
        if i < n && j < m && ca == cb {
            tie = true;
        }
        let take_mu = j >= m || (i < n && if nu_first { ca < cb } else { ca <= cb });
        let level = if take_mu { ca } else { cb };
        let cost = pow(xs[i.min(n - 1)] - ys[j.min(m - 1)]);
        let length = (level - prev).max(0.0);
        if take_mu {
            segments.push(Segment { side: Side::Mu, index: i, cost, length });
            i += 1;
            if i < n {
                ca += wa[i];
            }
        } else {
            segments.push(Segment { side: Side::Nu, index: j, cost, length });
            j += 1;
            if j < m {
                cb += wb[j];
            }
        }
        prev = prev.max(level);
    }
    (segments, tie)
}

pub(crate) fn cost_raw(xs: &[f64], wa: &[f64], ys: &[f64], wb: &[f64], p: f64) -> f64 {
    sweep(xs, wa, ys, wb, p, false)
        .0
        .iter()
        .map(|s| s.cost * s.length)
        .sum()
}

/// Gradient of the cost with respect to both weight vectors. Quantile
/// positions are piecewise constant in the levels, so only the levels
/// themselves carry derivative. At cross-side ties the cost has a kink; the
/// gradients of both tie orders are averaged, which is a subgradient and is
/// zero in the tangent space when `mu == nu`.
pub(crate) fn grad_raw(
    xs: &[f64],
    wa: &[f64],
    ys: &[f64],
    wb: &[f64],
    p: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let (segments, tie) = sweep(xs, wa, ys, wb, p, false);
    let total = segments.iter().map(|s| s.cost * s.length).sum();
    let (mut ga, mut gb) = level_gradients(&segments, wa.len(), wb.len());
    if tie {
        let (other, _) = sweep(xs, wa, ys, wb, p, true);
        let (oa, ob) = level_gradients(&other, wa.len(), wb.len());
        for (g, o) in ga.iter_mut().zip(oa).chain(gb.iter_mut().zip(ob)) {
            *g = 0.5 * (*g + o);
        }
    }
    (total, ga, gb)
}

fn level_gradients(segments: &[Segment], n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    // d cost / d r_l = c_l - c_{l+1}
    let mut level_grad_a = vec![0.0; n];
    let mut level_grad_b = vec![0.0; m];
    for (l, seg) in segments.iter().enumerate() {
        let next = segments.get(l + 1).map_or(0.0, |s| s.cost);
        let g = seg.cost - next;
        match seg.side {
            Side::Mu => level_grad_a[seg.index] = g,
            Side::Nu => level_grad_b[seg.index] = g,
        }
    }
    // level i is the cumulative sum of weights 0..=i
    let suffix = |mut v: Vec<f64>| {
        for i in (0..v.len().saturating_sub(1)).rev() {
            v[i] += v[i + 1];
        }
        v
    };
    (suffix(level_grad_a), suffix(level_grad_b))
}

/// Exact `p`-Wasserstein transport cost `W_p^p` over merged quantile levels.
pub fn wasserstein_p(mu: &DiscreteDistribution, nu: &DiscreteDistribution, p: f64) -> Result<f64> {
    check_order(p)?;
    Ok(cost_raw(&mu.positions, &mu.weights, &nu.positions, &nu.weights, p))
}

/// `W_p = cost^(1/p)`.
pub fn wasserstein_distance(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    p: f64,
) -> Result<f64> {
    Ok(wasserstein_p(mu, nu, p)?.powf(1.0 / p))
}

/// Gradient of [`wasserstein_p`] with respect to `mu.weights` and `nu.weights`.
///
/// Defined up to a constant offset per vector: only the component tangent to
/// the simplex is meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct WassersteinGrad {
    pub cost: f64,
    pub grad_mu: Vec<f64>,
    pub grad_nu: Vec<f64>,
}

pub fn wasserstein_grad(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    p: f64,
) -> Result<WassersteinGrad> {
    check_order(p)?;
    let (cost, grad_mu, grad_nu) =
        grad_raw(&mu.positions, &mu.weights, &nu.positions, &nu.weights, p);
    Ok(WassersteinGrad { cost, grad_mu, grad_nu })
}

/// Removes the mean, leaving the component tangent to the simplex.
pub fn project_tangent(grad: &[f64]) -> Vec<f64> {
    let mean = grad.iter().sum::<f64>() / grad.len() as f64;
    grad.iter().map(|g| g - mean).collect()
}

/// Circular shift to the right by `k` (negative `k` shifts left).
pub fn circular_shift(v: &[f64], k: i64) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    let s = k.rem_euclid(n as i64) as usize;
    for (i, &x) in v.iter().enumerate() {
        out[(i + s) % n] = x;
    }
    out
}

/// Pads `y` with `k_max` zeros on both sides, then shifts right by `k`.
///
/// Output length is `y.len() + 2 * k_max`; nothing wraps around for
/// `|k| <= k_max`.
pub fn translate(y: &[f64], k: i64, k_max: usize) -> Result<Vec<f64>> {
    if k.unsigned_abs() as usize > k_max {
        return Err(Error::ShiftOutOfRange { k, k_max });
    }
    let mut padded = vec![0.0; y.len() + 2 * k_max];
    padded[k_max..k_max + y.len()].copy_from_slice(y);
    Ok(circular_shift(&padded, k))
}

/// Maps a gradient on the output of [`translate`] back onto `y`.
pub(crate) fn translate_adjoint(grad: &[f64], n: usize, k: i64, k_max: usize) -> Vec<f64> {
    let len = grad.len() as i64;
    (0..n)
        .map(|i| grad[((k_max + i) as i64 + k).rem_euclid(len) as usize])
        .collect()
}
