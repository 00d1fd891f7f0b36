//! Closed-form loss gradients against central differences, taken through a
//! softmax so every perturbation stays on the simplex.

use oteq::grad::{finite_diff_check, softmax};
use oteq::losses::{
    equiv_loss, inv_loss, ot_loss, pesto_baseline_objective, pesto_ot_objective, sce_loss, LossState,
    PitchPosterior,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn logits(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn softmax_vjp(z: &[f64], g: &[f64]) -> Vec<f64> {
    let s = softmax(z);
    let dot: f64 = s.iter().zip(g).map(|(a, b)| a * b).sum();
    s.iter().zip(g).map(|(si, gi)| si * (gi - dot)).collect()
}

/// Checks `f(softmax(za), softmax(zb))` in both arguments.
fn check_pair(
    za: &[f64],
    zb: &[f64],
    f: impl Fn(&PitchPosterior, &PitchPosterior) -> (f64, Vec<f64>, Vec<f64>),
) -> f64 {
    let pa = PitchPosterior::from_logits(za);
    let pb = PitchPosterior::from_logits(zb);
    let (_, ga, gb) = f(&pa, &pb);
    let ea = finite_diff_check(
        |z| f(&PitchPosterior::from_logits(z), &pb).0,
        &softmax_vjp(za, &ga),
        za,
        1e-6,
    );
    let eb = finite_diff_check(
        |z| f(&pa, &PitchPosterior::from_logits(z)).0,
        &softmax_vjp(zb, &gb),
        zb,
        1e-6,
    );
    ea.max(eb)
}

#[test]
fn ot_loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let n = rng.random_range(4..24);
        let k_max = rng.random_range(1..6);
        let k = rng.random_range(-(k_max as i64)..=k_max as i64);
        let (za, zb) = (logits(&mut rng, n), logits(&mut rng, n));
        let err = check_pair(&za, &zb, |a, b| {
            let o = ot_loss(a, b, k, k_max).unwrap();
            (o.value, o.grad_a, o.grad_b)
        });
        assert!(err < 1e-4, "n {n} k {k}: {err}");
    }
}

#[test]
fn sce_and_inv_loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let n = rng.random_range(3..20);
        let k_max = rng.random_range(0..5);
        let k = rng.random_range(-(k_max as i64)..=k_max as i64);
        let (za, zb) = (logits(&mut rng, n), logits(&mut rng, n));
        let err = check_pair(&za, &zb, |a, b| {
            let o = sce_loss(a, b, k, k_max).unwrap();
            (o.value, o.grad_a, o.grad_b)
        });
        assert!(err < 1e-4, "sce: {err}");
        let err = check_pair(&za, &zb, |a, b| {
            let o = inv_loss(a, b).unwrap();
            (o.value, o.grad_a, o.grad_b)
        });
        assert!(err < 1e-4, "inv: {err}");
    }
}

#[test]
fn equiv_loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let n = rng.random_range(3..30);
        let alpha = rng.random_range(1.01..1.3);
        let k = rng.random_range(-4..=4);
        let (za, zb) = (logits(&mut rng, n), logits(&mut rng, n));
        let err = check_pair(&za, &zb, |a, b| {
            let o = equiv_loss(a, b, k, alpha).unwrap();
            (o.value, o.grad_a, o.grad_b)
        });
        assert!(err < 1e-4, "alpha {alpha} k {k}: {err}");
    }
}

#[test]
fn objective_gradients_are_weighted_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let state = LossState {
        lambda_ot: 1.0,
        lambda_inv: 0.37,
        lambda_equiv: 1.0,
        lambda_sce: 2.2,
        ..LossState::default()
    };
    for _ in 0..10 {
        let n = 12;
        let (z1, z2, z3) = (logits(&mut rng, n), logits(&mut rng, n), logits(&mut rng, n));
        let k = rng.random_range(-3..=3);
        for baseline in [false, true] {
            let eval = |a: &[f64], b: &[f64], c: &[f64]| {
                let (pa, pb, pc) = (
                    PitchPosterior::from_logits(a),
                    PitchPosterior::from_logits(b),
                    PitchPosterior::from_logits(c),
                );
                if baseline {
                    pesto_baseline_objective(&pa, &pb, &pc, k, 3, 1.2, &state).unwrap()
                } else {
                    pesto_ot_objective(&pa, &pb, &pc, k, 3, &state).unwrap()
                }
            };
            let out = eval(&z1, &z2, &z3);
            let e1 = finite_diff_check(|z| eval(z, &z2, &z3).total, &softmax_vjp(&z1, &out.grad_y), &z1, 1e-6);
            let e2 = finite_diff_check(|z| eval(&z1, z, &z3).total, &softmax_vjp(&z2, &out.grad_yk), &z2, 1e-6);
            let e3 = finite_diff_check(|z| eval(&z1, &z2, z).total, &softmax_vjp(&z3, &out.grad_yaug), &z3, 1e-6);
            assert!(e1.max(e2).max(e3) < 1e-4, "baseline {baseline}: {e1} {e2} {e3}");
        }
    }
}
