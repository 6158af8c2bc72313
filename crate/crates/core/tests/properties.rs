use num_complex::Complex64;
use proptest::prelude::*;

use pass_bt::codebook::{generate_codeword, Codebook, GuardDistance};
use pass_bt::mwmu::{lemma1_bruteforce, mwmu_sum_rate, DigitalPrecoder, WaveguideArray};
use pass_bt::noma::{sic_order, sic_rates};
use pass_bt::oracle::{fixed_pinching_bound, fixed_pinching_layout, matched_resolution, OracleBudget, OracleGrid};
use pass_bt::physics::{
    channel_coefficient, dbm_to_watts, derive_params, received_signal_swsu, Point3, SystemParams, Waveguide,
};
use pass_bt::swsu::{run_3sbt, SamplingRange, Stage, SwsuSetup, TrainingHyperparams};

fn params() -> SystemParams {
    derive_params(28e9, 1.4, 3.0, dbm_to_watts(20.0), dbm_to_watts(-90.0)).unwrap()
}

fn waveguide() -> Waveguide {
    Waveguide::new(0, 5.0, 3.0, -0.5, -0.5, 10.5).unwrap()
}

fn wrapped(phase: f64) -> f64 {
    let r = phase.rem_euclid(2.0 * std::f64::consts::PI);
    r.min(2.0 * std::f64::consts::PI - r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficient_magnitude_follows_inverse_distance(
        ux in 0.0..10.0f64, uy in 0.0..10.0f64, ax in 0.0..10.0f64,
    ) {
        let p = params();
        let wg = waveguide();
        let user = Point3::ground(ux, uy);
        let antenna = wg.antenna_at(ax);
        let h = channel_coefficient(&user, &antenna, &wg.feed, &p).unwrap();
        let scaled = h.norm() * user.distance(&antenna);
        prop_assert!((scaled - p.eta.sqrt()).abs() <= 1e-12 * p.eta.sqrt());
    }

    #[test]
    fn received_signal_ignores_antenna_order(
        ux in 0.0..10.0f64, uy in 0.0..10.0f64,
        xs in prop::collection::vec(0.0..10.0f64, 2..12),
        rot in 1usize..11,
    ) {
        let p = params();
        let wg = waveguide();
        let user = Point3::ground(ux, uy);
        let mut shuffled = xs.clone();
        shuffled.rotate_left(rot % xs.len());
        shuffled.reverse();
        let a = received_signal_swsu(&user, &wg, &xs, &p).unwrap();
        let b = received_signal_swsu(&user, &wg, &shuffled, &p).unwrap();
        prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300));
    }

    #[test]
    fn received_power_below_coherent_bound(
        ux in 0.0..10.0f64, uy in 0.0..10.0f64,
        xs in prop::collection::vec(0.0..10.0f64, 1..12),
    ) {
        let p = params();
        let wg = waveguide();
        let user = Point3::ground(ux, uy);
        let r = received_signal_swsu(&user, &wg, &xs, &p).unwrap();
        let sum: f64 = xs.iter().map(|&x| p.eta.sqrt() / user.distance(&wg.antenna_at(x))).sum();
        let bound = p.total_power / xs.len() as f64 * sum * sum;
        prop_assert!(r.norm_sqr() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn codewords_are_aligned_spaced_and_prefix_stable(
        x in 0.0..10.0f64, y in 0.0..10.0f64, short in 1usize..18,
    ) {
        let p = params();
        let wg = waveguide();
        let guard = GuardDistance::half_wavelength(&p);
        let psi = Point3::ground(x, y);
        let full = generate_codeword(&psi, &wg, 18, guard, &p).unwrap();
        let prefix = generate_codeword(&psi, &wg, short, guard, &p).unwrap();
        prop_assert_eq!(&full.positions[..short], &prefix.positions[..]);
        for &ax in &full.positions {
            let phase = p.k0() * psi.distance(&wg.antenna_at(ax)) + p.kg() * (ax - wg.feed.x).abs();
            prop_assert!(wrapped(phase) <= 1e-6);
        }
        for (i, a) in full.positions.iter().enumerate() {
            for b in &full.positions[i + 1..] {
                prop_assert!((a - b).abs() >= guard.meters() - 1e-12);
            }
        }
    }

    #[test]
    fn sic_rates_respect_the_decoding_minimum(
        gains in prop::collection::vec(1e-12..1e-6f64, 2..4),
    ) {
        let m = gains.len();
        let alpha: Vec<f64> = if m == 2 { vec![0.7, 0.3] } else { vec![0.5, 0.3, 0.2] };
        let noise = vec![1e-12; m];
        let sic = sic_rates(&gains, &alpha, &noise, None).unwrap();
        let order = sic_order(&gains);
        for p in 0..m {
            let rest: f64 = alpha[p + 1..].iter().sum();
            for &j in &order[p..] {
                let r_jm = (1.0 + gains[j] * alpha[p] / (gains[j] * rest + noise[j])).log2();
                prop_assert!(sic.rates[order[p]] <= r_jm + 1e-12);
            }
        }
        prop_assert!((sic.sum_rate - sic.rates.iter().sum::<f64>()).abs() <= 1e-12);
    }

    #[test]
    fn sic_sum_rate_survives_user_relabelling(
        gains in prop::collection::vec(1e-12..1e-6f64, 3),
    ) {
        let alpha = [0.5, 0.3, 0.2];
        let noise = [1e-12; 3];
        let a = sic_rates(&gains, &alpha, &noise, None).unwrap();
        let permuted = [gains[2], gains[0], gains[1]];
        let b = sic_rates(&permuted, &alpha, &noise, None).unwrap();
        prop_assert!((a.sum_rate - b.sum_rate).abs() <= 1e-9);
    }

    #[test]
    fn one_hot_sum_rate_ignores_a_stream_rotation(
        re in prop::collection::vec(-1e-5..1e-5f64, 4),
        im in prop::collection::vec(-1e-5..1e-5f64, 4),
        theta in 0.0..std::f64::consts::TAU,
    ) {
        let effective: Vec<Vec<Complex64>> = (0..2)
            .map(|m| (0..2).map(|q| Complex64::new(re[2 * m + q], im[2 * m + q])).collect())
            .collect();
        let noise = [1e-12, 1e-12];
        let w = DigitalPrecoder::one_hot(&[0, 1], 2).unwrap();
        let mut rotated = w.clone();
        for c in &mut rotated.columns[1] {
            *c *= Complex64::from_polar(1.0, theta);
        }
        let (_, a) = mwmu_sum_rate(&effective, &w, &noise);
        let (_, b) = mwmu_sum_rate(&effective, &rotated, &noise);
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn closest_waveguide_allocation_dominates(
        ux in 2.0..8.0f64, uy in 0.0..5.0f64, n in 2usize..8,
    ) {
        let p = params();
        let array = WaveguideArray::new(vec![
            Waveguide::new(0, 2.0, 3.0, 0.0, 0.0, 10.5).unwrap(),
            Waveguide::new(1, 8.0, 3.0, 0.0, 0.0, 10.5).unwrap(),
        ]).unwrap();
        prop_assume!(((uy - 2.0).abs() - (uy - 8.0).abs()).abs() >= 0.5);
        let user = Point3::ground(ux, uy);
        let o = lemma1_bruteforce(&user, &array, n, GuardDistance::half_wavelength(&p), &p).unwrap();
        let closest = if (uy - 2.0).abs() < (uy - 8.0).abs() { 0 } else { 1 };
        let all_on = o.allocations.iter().position(|a| a[closest] == n).unwrap();
        for v in &o.exact {
            prop_assert!(o.exact[all_on] >= v * (1.0 - 1e-6));
        }
    }

    #[test]
    fn fixed_layout_never_beats_its_bound(ux in 1.0..9.0f64, uy in 0.0..10.0f64, n in 1usize..18) {
        let p = params();
        let wg = waveguide();
        let user = Point3::ground(ux, uy);
        let layout: Vec<f64> = fixed_pinching_layout(&user, &wg, n, &p).iter().map(|a| a.x).collect();
        let r = received_signal_swsu(&user, &wg, &layout, &p).unwrap();
        let realistic = (1.0 + r.norm_sqr() / p.noise_power).log2();
        prop_assert!(realistic <= fixed_pinching_bound(&user, &wg, n, &p).unwrap() + 1e-9);
    }
}

#[test]
fn eta_scales_with_inverse_square_frequency() {
    let at = |f: f64| derive_params(f, 1.4, 3.0, 1.0, 1e-12).unwrap().eta;
    let ratio = at(5e9) / at(28e9);
    assert!((ratio - 5.6f64.powi(2)).abs() <= 1e-9 * ratio);
}

fn small_setup() -> SwsuSetup {
    SwsuSetup {
        params: params(),
        waveguide: Waveguide::new(0, 5.0, 3.0, 0.0, 0.0, 10.5).unwrap(),
        region: SamplingRange::new((4.0, 6.0), (3.0, 5.0)).unwrap(),
        hp: TrainingHyperparams { k: 2, l1: 3, l2: 3, d_es: 0.05, n: 18 },
        noise_seed: None,
    }
}

#[test]
fn training_is_deterministic_contained_and_counted() {
    let setup = small_setup();
    let guard = GuardDistance::half_wavelength(&setup.params);
    let user = Point3::ground(5.3, 3.7);
    let a = run_3sbt(&user, &setup, &mut Codebook::new(18, guard).unwrap()).unwrap();
    let b = run_3sbt(&user, &setup, &mut Codebook::new(18, guard).unwrap()).unwrap();
    assert_eq!(a, b);
    let (k1, k2) = setup.hp.exhaustive_grid(&setup.region);
    assert_eq!(a.measurements as usize, 2 * (3 + 3) + k1 * k2);
    assert!(setup.region.contains_range(&a.final_range));
    let stage2: Vec<usize> = a.trace.iter().filter(|r| r.stage == Stage::Fine).map(|r| r.active_antennas).collect();
    assert!(stage2.windows(2).all(|w| w[0] <= w[1]));
    assert!(a.trace.iter().all(|r| r.active_antennas <= setup.hp.n));
}

#[test]
fn exhaustive_search_is_never_beaten_by_training() {
    let setup = small_setup();
    let guard = GuardDistance::half_wavelength(&setup.params);
    let res = matched_resolution(&setup.hp, &setup.region);
    let grid = OracleGrid::build(&setup.region, res, 18, &setup.waveguide, guard, &setup.params, OracleBudget::new(1 << 22).unwrap())
        .unwrap();
    let mut cb = Codebook::new(18, guard).unwrap();
    for (x, y) in [(4.2, 3.1), (5.0, 4.0), (5.9, 4.9), (4.7, 3.6)] {
        let user = Point3::ground(x, y);
        let trained = run_3sbt(&user, &setup, &mut cb).unwrap();
        let oracle = grid.best_for(&user, &setup.params).unwrap();
        assert!(oracle.metric >= trained.best_metric * (1.0 - 1e-12), "{x},{y}");
    }
}
