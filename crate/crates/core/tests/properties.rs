use multiband::estimation::support_mask;
use multiband::experiment::{derive_seed, SyntheticConfig, Trial};
use multiband::metrics::nmse_db;
use multiband::reconstruction::reconstruct;
use multiband::sampling::acquire;
use multiband::spectral::{
    partition_subbands, random_psd_spec, total_bandwidth, FrequencyGrid, PsdSpec, RandomPsdParams,
};
use multiband::synthesis::{
    empirical_cross_correlation, mix, random_mixing_matrix, synthesize_latent, synthesize_latents,
    MixingMatrix, PhaseDraw, Role, SignalEnsemble,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn params(t: usize) -> RandomPsdParams {
    RandomPsdParams {
        max_blocks: 3,
        level_range: (0.5, 2.0),
        width_range: (1, (t / 16).max(2)),
    }
}

fn specs_for(t: usize, m: usize, seed: u64) -> Vec<PsdSpec> {
    let g = FrequencyGrid::new(t).unwrap();
    (0..m)
        .map(|i| random_psd_spec(g, derive_seed(seed, i as u64), &params(t)).unwrap())
        .collect()
}

fn trial(t: usize, n: usize, m: usize, seed: u64) -> Trial {
    let cfg = SyntheticConfig {
        t,
        n,
        m,
        psd: params(t),
    };
    Trial::generate(&cfg, seed).unwrap()
}

fn grid_len() -> impl Strategy<Value = usize> {
    prop_oneof![Just(32usize), Just(64), Just(96), Just(128), Just(200)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn subbands_tile_the_union_of_supports(t in grid_len(), m in 1usize..5, seed in any::<u64>()) {
        let specs = specs_for(t, m, seed);
        let plan = partition_subbands(&specs).unwrap();
        let mut covered = vec![false; t];
        for w in plan.subbands.windows(2) {
            prop_assert!(w[0].hi <= w[1].lo);
        }
        for sb in &plan.subbands {
            for k in sb.lo..sb.hi {
                covered[k] = true;
                let active: Vec<usize> = (0..m).filter(|&i| specs[i].level(k) > 0.0).collect();
                prop_assert_eq!(&active, &sb.active);
            }
        }
        for (k, c) in covered.iter().enumerate() {
            prop_assert_eq!(*c, specs.iter().any(|s| s.level(k) > 0.0));
        }
    }

    #[test]
    fn bandwidth_identity(t in grid_len(), m in 1usize..5, seed in any::<u64>()) {
        let specs = specs_for(t, m, seed);
        let plan = partition_subbands(&specs).unwrap();
        let b: usize = specs.iter().map(|s| s.support_size()).sum();
        prop_assert_eq!(plan.total_samples(), b);
        prop_assert_eq!(total_bandwidth(&specs).unwrap(), b);
    }

    #[test]
    fn sample_count_equals_bandwidth(m in 1usize..4, extra in 0usize..4, seed in any::<u64>()) {
        let tr = trial(64, m + extra, m, seed);
        let s = acquire(&tr.observed, &tr.plan, &tr.mixing).unwrap();
        prop_assert_eq!(s.count(), total_bandwidth(&tr.specs).unwrap());
    }

    #[test]
    fn source_order_does_not_matter(seed in any::<u64>()) {
        let tr = trial(64, 5, 3, seed);
        let perm = [2usize, 0, 1];
        let specs: Vec<PsdSpec> = perm.iter().map(|&i| tr.specs[i].clone()).collect();
        let u = MixingMatrix::new(tr.mixing.columns(&perm)).unwrap();
        prop_assert_eq!(total_bandwidth(&specs).unwrap(), total_bandwidth(&tr.specs).unwrap());
        let plan = partition_subbands(&specs).unwrap();
        let rec = reconstruct(&acquire(&tr.observed, &plan, &u).unwrap(), &plan, &u).unwrap();
        prop_assert!(nmse_db(tr.observed.data(), rec.signals.data()).unwrap() < -200.0);
    }

    #[test]
    fn mixing_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let tr = trial(32, 4, 2, seed);
        let other = trial(32, 4, 2, seed ^ 1).latent;
        let combo = SignalEnsemble::new(
            Role::Latent,
            tr.latent.data() * a + other.data() * b,
        ).unwrap();
        let lhs = mix(&tr.mixing, &combo).unwrap();
        let rhs = mix(&tr.mixing, &tr.latent).unwrap().data() * a
            + mix(&tr.mixing, &other).unwrap().data() * b;
        prop_assert!((lhs.data() - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn nmse_is_scale_invariant(seed in any::<u64>(), alpha in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let x = trial(32, 3, 2, seed).observed.into_data();
        let y = x.map(|v| v + 0.01 * v.sin());
        let base = nmse_db(&x, &y).unwrap();
        let scaled = nmse_db(&(&x * alpha), &(&y * alpha)).unwrap();
        prop_assert!((base - scaled).abs() < 1e-9);
    }

    #[test]
    fn reconstruction_is_linear_in_samples(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let tr = trial(64, 5, 2, seed);
        let x2 = mix(
            &tr.mixing,
            &synthesize_latents(&tr.specs, &PhaseDraw::draw(2, tr.plan.grid, seed ^ 7)).unwrap(),
        ).unwrap();
        let s1 = acquire(&tr.observed, &tr.plan, &tr.mixing).unwrap();
        let s2 = acquire(&x2, &tr.plan, &tr.mixing).unwrap();
        let combined = reconstruct(&s1.combine(a, &s2, b).unwrap(), &tr.plan, &tr.mixing).unwrap();
        let r1 = reconstruct(&s1, &tr.plan, &tr.mixing).unwrap().signals.into_data();
        let r2 = reconstruct(&s2, &tr.plan, &tr.mixing).unwrap().signals.into_data();
        let expected = r1 * a + r2 * b;
        prop_assert!((combined.signals.data() - &expected).norm() <= 1e-9 * (1.0 + expected.norm()));
    }

    #[test]
    fn resampling_a_reconstruction_is_idempotent(seed in any::<u64>()) {
        let tr = trial(64, 6, 3, seed);
        let s = acquire(&tr.observed, &tr.plan, &tr.mixing).unwrap();
        let rec = reconstruct(&s, &tr.plan, &tr.mixing).unwrap().signals;
        let again = acquire(&rec, &tr.plan, &tr.mixing).unwrap();
        for (x, y) in s.subbands.iter().zip(&again.subbands) {
            prop_assert_eq!(&x.times, &y.times);
            prop_assert!((&x.values - &y.values).norm() <= 1e-10 * (1.0 + x.values.norm()));
        }
    }

    #[test]
    fn higher_threshold_keeps_fewer_bins(psd in prop::collection::vec(0.0f64..10.0, 64), lo in 0.01f64..0.5, step in 0.0f64..0.5) {
        prop_assume!(psd.iter().any(|&p| p > 0.0));
        let wide = support_mask(&psd, lo).unwrap();
        let narrow = support_mask(&psd, lo + step).unwrap();
        for k in 0..psd.len() {
            prop_assert!(!narrow[k] || wide[k]);
        }
    }
}

#[test]
fn sources_sharing_support_are_uncorrelated_on_average() {
    let g = FrequencyGrid::new(64).unwrap();
    let spec = random_psd_spec(g, 5, &params(64)).unwrap();
    let draws = 2000;
    let max_lag = 4;
    let mut acc = vec![0.0; 2 * max_lag + 1];
    for d in 0..draws {
        let p = PhaseDraw::draw(2, g, derive_seed(77, d));
        let a = synthesize_latent(&spec, &p.row(0)).unwrap();
        let b = synthesize_latent(&spec, &p.row(1)).unwrap();
        let r = empirical_cross_correlation(&a, &b, max_lag).unwrap();
        acc.iter_mut()
            .zip(r)
            .for_each(|(s, v)| *s += v / draws as f64);
    }
    let power = spec.mean_power();
    for v in acc {
        assert!(v.abs() < 0.1 * power, "{v} vs power {power}");
    }
}

#[test]
fn covariance_approaches_mixing_model() {
    let t = 64;
    let g = FrequencyGrid::new(t).unwrap();
    let specs = specs_for(t, 3, 21);
    let u = random_mixing_matrix(5, 3, 4).unwrap();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        3,
        specs.iter().map(PsdSpec::mean_power),
    ));
    let model = u.matrix() * d * u.matrix().transpose();
    let draws = 2000;
    let mut cov = DMatrix::zeros(5, 5);
    for i in 0..draws {
        let x = mix(
            &u,
            &synthesize_latents(&specs, &PhaseDraw::draw(3, g, derive_seed(3, i))).unwrap(),
        )
        .unwrap();
        cov += x.data() * x.data().transpose() / (t * draws as usize) as f64;
    }
    let rel = (&cov - &model).norm() / model.norm();
    assert!(rel < 0.05, "relative deviation {rel}");
}
