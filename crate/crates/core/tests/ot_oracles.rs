use oteq::grad::finite_diff_check;
use oteq::ot::lp::power_cost_matrix;
use oteq::ot::{
    cdf, lp_ot_oracle, monotone_coupling, project_tangent, quantile, translate, wasserstein_distance,
    wasserstein_grad, wasserstein_p, DiscreteDistribution,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dist(rng: &mut impl Rng, n: usize, spread: f64) -> DiscreteDistribution {
    let mut positions: Vec<f64> = (0..n).map(|_| rng.random_range(-spread..spread)).collect();
    positions.sort_by(f64::total_cmp);
    positions.dedup();
    let raw: Vec<f64> = positions.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DiscreteDistribution::new(positions, raw.iter().map(|w| w / total).collect()).unwrap()
}

#[test]
fn merged_levels_match_lp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let mu = random_dist(&mut rng, n, 10.0);
        let nu = random_dist(&mut rng, m, 10.0);
        for p in [1.0, 2.0] {
            let closed = wasserstein_p(&mu, &nu, p).unwrap();
            let cost = power_cost_matrix(&mu, &nu, p);
            let lp = lp_ot_oracle(&mu, &nu, &cost).unwrap();
            assert!((closed - lp.cost).abs() < 1e-6, "case {case} p {p}: {closed} vs {}", lp.cost);
            for (got, want) in lp.row_sums().iter().zip(mu.weights()) {
                assert!((got - want).abs() < 1e-9);
            }
            for (got, want) in lp.col_sums().iter().zip(nu.weights()) {
                assert!((got - want).abs() < 1e-9);
            }
            assert!(lp.plan.iter().flatten().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn lp_plan_is_monotone_for_strictly_convex_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let mu = random_dist(&mut rng, n, 5.0);
        let nu = random_dist(&mut rng, m, 5.0);
        let cost = power_cost_matrix(&mu, &nu, 2.0);
        let lp = lp_ot_oracle(&mu, &nu, &cost).unwrap();
        let nw = monotone_coupling(&mu, &nu, &cost);
        assert!((lp.cost - nw.cost).abs() < 1e-9);
        for (a, b) in lp.plan.iter().flatten().zip(nw.plan.iter().flatten()) {
            assert!((a - b).abs() < 1e-9, "{:?}\n{:?}", lp.plan, nw.plan);
        }
        // p = 1 optimum need not be unique; costs still agree
        let cost1 = power_cost_matrix(&mu, &nu, 1.0);
        let lp1 = lp_ot_oracle(&mu, &nu, &cost1).unwrap();
        assert!((lp1.cost - monotone_coupling(&mu, &nu, &cost1).cost).abs() < 1e-9);
    }
}

/// Central differences along simplex-preserving directions `e_t - 1/n`.
fn tangent_fd_error(mu: &DiscreteDistribution, nu: &DiscreteDistribution, p: f64, eps: f64) -> f64 {
    let g = wasserstein_grad(mu, nu, p).unwrap();
    let mut worst = 0.0f64;
    for (which, (dist, grad)) in [(mu, &g.grad_mu), (nu, &g.grad_nu)].into_iter().enumerate() {
        let n = dist.len();
        let tangent = project_tangent(grad);
        for t in 0..n {
            let f = |w: &[f64]| {
                let d = DiscreteDistribution::new(dist.positions().to_vec(), w.to_vec()).unwrap();
                if which == 0 {
                    wasserstein_p(&d, nu, p).unwrap()
                } else {
                    wasserstein_p(mu, &d, p).unwrap()
                }
            };
            let step = |s: f64| -> Vec<f64> {
                dist.weights()
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w + s * (if i == t { 1.0 } else { 0.0 } - 1.0 / n as f64))
                    .collect()
            };
            let numeric = (f(&step(eps)) - f(&step(-eps))) / (2.0 * eps);
            let err = (tangent[t] - numeric).abs() / (tangent[t].abs() + numeric.abs() + 1e-12);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn wasserstein_grad_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let mu = random_dist(&mut rng, 5, 10.0);
        let nu = random_dist(&mut rng, 5, 10.0);
        for p in [1.0, 1.5, 2.0, 3.0] {
            let err = tangent_fd_error(&mu, &nu, p, 1e-6);
            assert!(err < 1e-4, "p {p}: relative error {err}");
        }
    }
}

#[test]
fn wasserstein_grad_through_softmax_uses_fd_check() {
    // same gradient, checked with the library harness on unconstrained logits
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let nu = random_dist(&mut rng, 6, 4.0);
        let positions: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let logits: Vec<f64> = (0..7).map(|_| rng.random_range(-1.5..1.5)).collect();
        let f = |z: &[f64]| {
            let w = oteq::grad::softmax(z);
            let d = DiscreteDistribution::new(positions.clone(), w).unwrap();
            wasserstein_p(&d, &nu, 2.0).unwrap()
        };
        let w = oteq::grad::softmax(&logits);
        let d = DiscreteDistribution::new(positions.clone(), w.clone()).unwrap();
        let g = wasserstein_grad(&d, &nu, 2.0).unwrap().grad_mu;
        let dot: f64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
        let analytic: Vec<f64> = w.iter().zip(&g).map(|(s, gi)| s * (gi - dot)).collect();
        assert!(finite_diff_check(f, &analytic, &logits, 1e-6) < 1e-4);
    }
}

#[test]
fn translation_moves_distance_linearly() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let k_max = 24;
    for _ in 0..100 {
        let n = 256 - 2 * k_max;
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let w = oteq::ot::normalize(&w).unwrap();
        let base = DiscreteDistribution::on_grid(translate(&w, 0, k_max).unwrap()).unwrap();
        let k: i64 = rng.random_range(-24..=24);
        let moved = DiscreteDistribution::on_grid(translate(&w, k, k_max).unwrap()).unwrap();
        let d = wasserstein_distance(&base, &moved, 2.0).unwrap();
        assert!((d - k.abs() as f64).abs() < 1e-9, "k {k}: {d}");
    }
}

#[test]
fn wasserstein_symmetric_and_shift_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let k_max = 6;
    for _ in 0..100 {
        let n = 20;
        let a = oteq::ot::normalize(&(0..n).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>()).unwrap();
        let b = oteq::ot::normalize(&(0..n).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>()).unwrap();
        let k = rng.random_range(-6..=6);
        for p in [1.0, 2.0] {
            let da = DiscreteDistribution::on_grid(translate(&a, 0, k_max).unwrap()).unwrap();
            let db = DiscreteDistribution::on_grid(translate(&b, 0, k_max).unwrap()).unwrap();
            let sa = DiscreteDistribution::on_grid(translate(&a, k, k_max).unwrap()).unwrap();
            let sb = DiscreteDistribution::on_grid(translate(&b, k, k_max).unwrap()).unwrap();
            let base = wasserstein_p(&da, &db, p).unwrap();
            assert_eq!(base, wasserstein_p(&db, &da, p).unwrap());
            assert!((base - wasserstein_p(&sa, &sb, p).unwrap()).abs() < 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn cdf_quantile_galois_connection(
        raw in prop::collection::vec(0.01f64..1.0, 1..12),
        r in 1e-9f64..=1.0,
    ) {
        let w = oteq::ot::normalize(&raw).unwrap();
        let d = DiscreteDistribution::on_grid(w).unwrap();
        let q = quantile(&d, r).unwrap();
        prop_assert!(cdf(&d, q) >= r - 1e-12);
        for &p in d.positions() {
            let back = quantile(&d, cdf(&d, p).max(1e-300)).unwrap();
            prop_assert!(back <= p);
        }
        // monotone and right-continuous on the atoms
        let values: Vec<f64> = d.positions().iter().map(|&p| cdf(&d, p)).collect();
        prop_assert!(values.windows(2).all(|v| v[0] <= v[1]));
        prop_assert!((cdf(&d, *d.positions().last().unwrap()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_is_symmetric_and_nonnegative(
        a in prop::collection::vec(0.01f64..1.0, 1..10),
        b in prop::collection::vec(0.01f64..1.0, 1..10),
        p in 1.0f64..4.0,
    ) {
        let da = DiscreteDistribution::on_grid(oteq::ot::normalize(&a).unwrap()).unwrap();
        let db = DiscreteDistribution::on_grid(oteq::ot::normalize(&b).unwrap()).unwrap();
        let ab = wasserstein_p(&da, &db, p).unwrap();
        prop_assert_eq!(ab, wasserstein_p(&db, &da, p).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(wasserstein_p(&da, &da, p).unwrap(), 0.0);
    }
}
