//! Calibration examples and invariants of the convergence diagnostics.

use ndarray::Array2;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

use irtm::diagnostics::{ci_coverage, ess_rank_normalized, geweke_z, mse_theta, split_rhat};
use irtm::rng::RngStream;

fn iid(n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

#[test]
fn iid_ess_is_close_to_n() {
    let mut rng = RngStream::new(1, 0);
    for _ in 0..20 {
        let ess = ess_rank_normalized(&[iid(1000, &mut rng)]).unwrap().ess;
        assert!((800.0..=1200.0).contains(&ess), "{ess}");
    }
}

#[test]
fn ar1_ess_matches_closed_form() {
    let mut rng = RngStream::new(2, 0);
    let rho = 0.9f64;
    let target = 10_000.0 * (1.0 - rho) / (1.0 + rho);
    let mut x = 0.0;
    let chain: Vec<f64> = (0..10_000)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = rho * x + e;
            x
        })
        .collect();
    let ess = ess_rank_normalized(&[chain]).unwrap().ess;
    assert!((ess - target).abs() <= 0.25 * target, "{ess} vs {target}");
}

#[test]
fn stationary_rhat_is_one() {
    let mut rng = RngStream::new(3, 0);
    let chains: Vec<Vec<f64>> = (0..4).map(|_| iid(10_000, &mut rng)).collect();
    let r = split_rhat(&chains).unwrap().rhat;
    assert!((0.99..=1.01).contains(&r), "{r}");
}

#[test]
fn rhat_grows_with_level_shift() {
    let mut rng = RngStream::new(4, 0);
    let base: Vec<Vec<f64>> = (0..4).map(|_| iid(500, &mut rng)).collect();
    let mut last = 0.0;
    for shift in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let mut chains = base.clone();
        chains[0].iter_mut().for_each(|v| *v += shift);
        let r = split_rhat(&chains).unwrap().rhat;
        assert!(r >= last, "R̂ {r} after {last} at shift {shift}");
        last = r;
    }
    assert!(last > 1.1);
}

#[test]
fn geweke_windows_default_and_shift() {
    let mut rng = RngStream::new(5, 0);
    let mut chain = iid(2000, &mut rng);
    chain[1000..].iter_mut().for_each(|v| *v += 1.0);
    let g = geweke_z(&chain, 0.1, 0.5).unwrap();
    assert!(g.z.abs() > 3.0 && g.p < 0.01);
}

#[test]
fn calibrated_interval_coverage() {
    let mut rng = RngStream::new(6, 0);
    let truth: Vec<f64> = iid(4000, &mut rng);
    // posterior centred on an estimate whose error is N(0, 1)
    let draws: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            let centre = t + iid(1, &mut rng)[0];
            iid(400, &mut rng).into_iter().map(|z| centre + z).collect()
        })
        .collect();
    let c = ci_coverage(&draws, &truth, 0.95).unwrap();
    assert!((c - 0.95).abs() < 0.02, "{c}");
}

fn chains_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5, 4usize..200).prop_flat_map(|(m, n)| prop::collection::vec(prop::collection::vec(-1e3f64..1e3, n), m))
}

proptest! {
    #[test]
    fn ess_stays_below_antithetic_bound(chains in chains_strategy()) {
        let total = (chains.len() * chains[0].len()) as f64;
        let e = ess_rank_normalized(&chains).unwrap();
        prop_assert!(e.ess > 0.0 && e.ess <= 1.5 * total, "ess {} of {}", e.ess, total);
    }

    #[test]
    fn iid_rhat_not_below_one(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let chains: Vec<Vec<f64>> = (0..4).map(|_| iid(400, &mut rng)).collect();
        prop_assert!(split_rhat(&chains).unwrap().rhat > 0.98);
    }

    #[test]
    fn mse_matches_naive_loop_and_is_permutation_invariant(
        (n, d, values, perm) in (1usize..30, 1usize..4).prop_flat_map(|(n, d)| (
            Just(n),
            Just(d),
            prop::collection::vec(-5.0f64..5.0, 2 * n * d),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        ))
    ) {
        let est = Array2::from_shape_vec((n, d), values[..n * d].to_vec()).unwrap();
        let truth = Array2::from_shape_vec((n, d), values[n * d..].to_vec()).unwrap();
        let mut naive = 0.0;
        for i in 0..n {
            for j in 0..d {
                naive += (est[[i, j]] - truth[[i, j]]).powi(2);
            }
        }
        naive /= (n * d) as f64;
        let m = mse_theta(&est, &truth).unwrap();
        prop_assert!((m - naive).abs() <= 1e-12 * naive.max(1.0));
        let pe = est.select(ndarray::Axis(0), &perm);
        let pt = truth.select(ndarray::Axis(0), &perm);
        prop_assert!((mse_theta(&pe, &pt).unwrap() - m).abs() <= 1e-12 * m.max(1.0));
    }
}
