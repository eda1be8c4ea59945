mod common;

use common::{fit_default, random_dataset, sim};
use didmed::cli_io::{Closed, TransformKind};
use didmed::controlled_effects::cde_curve;
use didmed::model_core::KernelConfig;
use didmed::natural_effects::natural_effects;
use didmed::simulation::{
    child_seed, run_monte_carlo, run_replication, summarize, compute_truths, Estimator, Panel, Setting,
    SimulationConfig, Target,
};
use didmed::MediatorKind;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kind_strategy() -> impl Strategy<Value = MediatorKind> {
    prop_oneof![
        Just(MediatorKind::Continuous),
        Just(MediatorKind::Discrete { levels: 2 }),
        Just(MediatorKind::Discrete { levels: 3 }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn permuting_units_leaves_estimates_unchanged(seed in 0u64..10_000, n in 200usize..500, kind in kind_strategy()) {
        let data = random_dataset(seed, n, 2, kind);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabc));
        let shuffled = data.permuted(&order).unwrap();
        let a = natural_effects(&data, &fit_default(&data)).unwrap();
        let b = natural_effects(&shuffled, &fit_default(&shuffled)).unwrap();
        for (x, y) in a.effects().iter().zip(b.effects()) {
            prop_assert_eq!(x.point, y.point);
            prop_assert_eq!(x.se, y.se);
        }
    }

    #[test]
    fn effect_rows_are_internally_consistent(seed in 0u64..10_000, n in 200usize..600, kind in kind_strategy()) {
        let data = random_dataset(seed, n, 2, kind);
        let fx = natural_effects(&data, &fit_default(&data)).unwrap();
        prop_assert_eq!(fx.nie.point + fx.nde.point, fx.te.point);
        for e in fx.effects() {
            prop_assert!(e.se >= 0.0 && e.se.is_finite());
            prop_assert!((e.ci_low - (e.point - 1.96 * e.se)).abs() <= 1e-12 * e.point.abs().max(1.0));
            prop_assert!((e.ci_high - (e.point + 1.96 * e.se)).abs() <= 1e-12 * e.point.abs().max(1.0));
            prop_assert!((0.0..=1.0).contains(&e.p_value));
        }
    }

    #[test]
    fn swapping_arms_negates_the_curve(seed in 0u64..1000) {
        let data = sim(Setting::Binary, Panel::O, 800, seed);
        let nu = fit_default(&data);
        let kernel = KernelConfig::default();
        let forward = cde_curve(&[0.0, 1.0], &data, &nu, &kernel).unwrap();
        let back = didmed::controlled_effects::contrast_curve(&[0.0, 1.0], (0, 1), &data, &nu, &kernel).unwrap();
        for (f, b) in forward.points.iter().zip(&back.points) {
            prop_assert_eq!(f.cde, -b.cde);
            prop_assert_eq!(f.se_cde, b.se_cde);
        }
    }

    #[test]
    fn ordinal_recode_is_monotone_and_in_range(
        mut cuts in proptest::collection::vec(-5.0f64..5.0, 1..5),
        a in -10.0f64..10.0,
        b in -10.0f64..10.0,
        left in proptest::collection::vec(any::<bool>(), 5),
    ) {
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let t = TransformKind::OrdinalRecode {
            breakpoints: cuts.clone(),
            closed: left[..cuts.len()].iter().map(|&l| if l { Closed::Left } else { Closed::Right }).collect(),
        };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (la, lb) = (t.apply(lo), t.apply(hi));
        prop_assert!(la <= lb);
        prop_assert!(lb <= cuts.len() as f64 && la >= 0.0);
        prop_assert_eq!(la.fract(), 0.0);
    }

    #[test]
    fn log1p_fixes_zero_and_preserves_order(a in 0.0f64..1e6, b in 0.0f64..1e6) {
        let t = TransformKind::Log1p;
        prop_assert_eq!(t.apply(0.0), 0.0);
        prop_assert_eq!(a <= b, t.apply(a) <= t.apply(b));
    }

    #[test]
    fn replication_seeds_do_not_collide(base in any::<u64>(), n in 50usize..10_000) {
        let mut seeds: Vec<u64> = (0..200).map(|r| child_seed(base, Setting::Continuous, Panel::O, n, r)).collect();
        seeds.extend((0..200).map(|r| child_seed(base, Setting::Binary, Panel::O, n, r)));
        seeds.sort();
        seeds.dedup();
        prop_assert_eq!(seeds.len(), 400);
    }
}

#[test]
fn employment_recode_matches_the_documented_levels() {
    let t = TransformKind::EmploymentFourLevel;
    assert_eq!(t.apply(0.0), 0.0);
    assert_eq!(t.apply(0.2), 1.0);
    assert_eq!(t.apply(0.5), 1.0);
    assert_eq!(t.apply(0.75), 2.0);
    assert_eq!(t.apply(0.999), 2.0);
    assert_eq!(t.apply(1.0), 3.0);
}

fn small_grid() -> SimulationConfig {
    let mut config = SimulationConfig::single(Setting::Continuous, Panel::O, 300, 6, 77);
    config.settings = vec![Setting::Continuous, Setting::Binary];
    config.panels = vec![Panel::O, Panel::B];
    config.oracle_draws = 1_000_000;
    config
}

#[test]
fn simulation_is_identical_across_thread_counts() {
    let config = small_grid();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let report = pool.install(|| run_monte_carlo(&config)).unwrap();
        serde_json::to_string(&report).unwrap()
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(1));
}

#[test]
fn filtering_the_grid_keeps_replications() {
    let full = run_monte_carlo(&small_grid()).unwrap();
    let single = run_monte_carlo(&{
        let mut c = small_grid();
        c.settings = vec![Setting::Binary];
        c.panels = vec![Panel::B];
        c
    })
    .unwrap();
    let a = full.cell(Setting::Binary, Panel::B, 300).unwrap();
    let b = single.cell(Setting::Binary, Panel::B, 300).unwrap();
    assert_eq!(serde_json::to_string(a).unwrap(), serde_json::to_string(b).unwrap());
}

#[test]
fn one_replication_report_is_the_hand_run() {
    let config = SimulationConfig {
        oracle_draws: 1_000_000,
        ..SimulationConfig::single(Setting::Binary, Panel::O, 400, 1, 5)
    };
    let report = run_monte_carlo(&config).unwrap();
    let cell = config.cells()[0];
    let rep = run_replication(&config, cell, 0);
    let truths = compute_truths(
        &config.model(cell.setting, cell.panel),
        config.oracle_draws,
        config.truth_seed(cell.setting, cell.panel),
    )
    .unwrap();
    let by_hand = summarize(cell, truths.clone(), std::slice::from_ref(&rep));
    assert_eq!(
        serde_json::to_string(&report.cells[0]).unwrap(),
        serde_json::to_string(&by_hand).unwrap()
    );
    for d in &rep.draws {
        let m = report.cells[0].metric(d.estimator, d.target).unwrap();
        assert_eq!(m.bias, d.point - d.target.truth(&truths).value);
        assert_eq!(m.avg_se, d.se);
    }
    assert!(report.cells[0].metric(Estimator::Proposed, Target::TauDe0).is_some());
}
