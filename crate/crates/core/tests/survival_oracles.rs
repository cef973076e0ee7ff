use mmsurv_core::graph::Graph;
use mmsurv_core::rng::{self, Rng};
use mmsurv_core::survival::{
    bin_edges, concordance_index, discrete_nll, km_estimator, median_risk_split, SurvivalRecord,
};
use mmsurv_core::{Error, Tensor};
use proptest::prelude::*;
use rand::Rng as _;

/// Enumerates every ordered pair: `i` is comparable with `j` when `i` has an
/// event strictly before `j`'s time.
fn brute_force_counts(risks: &[f64], recs: &[SurvivalRecord]) -> (u64, u64, u64) {
    let (mut conc, mut tied, mut comp) = (0, 0, 0);
    for i in 0..recs.len() {
        for j in 0..recs.len() {
            if recs[i].event && recs[i].time < recs[j].time {
                comp += 1;
                if risks[i] > risks[j] {
                    conc += 1;
                } else if risks[i] == risks[j] {
                    tied += 1;
                }
            }
        }
    }
    (conc, tied, comp)
}

fn random_instance(r: &mut Rng) -> (Vec<f64>, Vec<SurvivalRecord>) {
    let n = r.random_range(2..=200);
    // Small integer grids force tied times and tied risks.
    let time_levels = r.random_range(2..40);
    let risk_levels = r.random_range(2..60);
    let recs = (0..n)
        .map(|_| {
            SurvivalRecord::new(
                r.random_range(0..time_levels) as f64 * 0.5 + 0.1,
                r.random_bool(0.6),
            )
        })
        .collect();
    let risks = (0..n)
        .map(|_| {
            if r.random_bool(0.5) {
                r.random_range(0..risk_levels) as f64
            } else {
                r.random_range(-3.0..3.0)
            }
        })
        .collect();
    (risks, recs)
}

#[test]
fn c_index_agrees_exactly_with_pair_enumeration() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 200 {
        let (risks, recs) = random_instance(&mut rng::stream(seed, 100));
        seed += 1;
        let (conc, tied, comp) = brute_force_counts(&risks, &recs);
        match concordance_index(&risks, &recs) {
            Ok(c) => {
                let expected = (2 * conc + tied) as f64 / (2 * comp) as f64;
                assert_eq!(c, expected, "instance {}", seed - 1);
                checked += 1;
            }
            Err(Error::UndefinedMetric(_)) => assert_eq!(comp, 0),
            Err(e) => panic!("{e}"),
        }
    }
}

fn records(times: &[f64], events: &[bool]) -> Vec<SurvivalRecord> {
    times
        .iter()
        .zip(events)
        .map(|(t, e)| SurvivalRecord::new(*t, *e))
        .collect()
}

#[test]
fn c_index_hand_example() {
    let recs = records(&[1.0, 2.0, 3.0], &[true, false, true]);
    assert_eq!(concordance_index(&[0.8, 0.9, 0.2], &recs).unwrap(), 0.5);
}

#[test]
fn c_index_without_comparable_pairs_is_undefined() {
    let recs = records(&[1.0, 2.0], &[false, false]);
    assert!(matches!(
        concordance_index(&[0.1, 0.2], &recs),
        Err(Error::UndefinedMetric(_))
    ));
}

#[test]
fn km_hand_example() {
    let km = km_estimator(&records(&[1.0, 2.0, 3.0], &[true, false, true])).unwrap();
    assert_eq!(km.survival_at(1.0), 2.0 / 3.0);
    assert_eq!(km.survival_at(2.0), 2.0 / 3.0);
    assert_eq!(km.survival_at(3.0), 0.0);
    assert_eq!(km.survival_at(0.5), 1.0);
}

#[test]
fn km_without_censoring_is_the_empirical_fraction() {
    for seed in 0..100 {
        let mut r = rng::stream(seed, 101);
        let n = r.random_range(1..150);
        let times: Vec<f64> = (0..n).map(|_| r.random_range(0..30) as f64).collect();
        let km = km_estimator(&records(&times, &vec![true; n])).unwrap();
        for &t in &times {
            let survivors = times.iter().filter(|s| **s > t).count();
            assert_eq!(
                km.survival_at(t),
                survivors as f64 / n as f64,
                "seed {seed}"
            );
        }
    }
}

#[test]
fn km_with_censoring_matches_the_product_limit() {
    for seed in 0..100 {
        let mut r = rng::stream(seed, 102);
        let n = r.random_range(1..120);
        let times: Vec<f64> = (0..n).map(|_| r.random_range(0..25) as f64).collect();
        let events: Vec<bool> = (0..n).map(|_| r.random_bool(0.6)).collect();
        let km = km_estimator(&records(&times, &events)).unwrap();
        let mut distinct = times.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut s = 1.0;
        for t in distinct {
            let at_risk = times.iter().filter(|x| **x >= t).count() as f64;
            let deaths = times
                .iter()
                .zip(&events)
                .filter(|(x, e)| **x == t && **e)
                .count() as f64;
            s *= 1.0 - deaths / at_risk;
            assert!((km.survival_at(t) - s).abs() <= 1e-12, "seed {seed} t {t}");
        }
    }
}

#[test]
fn median_split_partitions_every_index() {
    let risks = [0.3, 0.1, 0.9, 0.5, 0.5, 0.2];
    let (low, high) = median_risk_split(&risks).unwrap();
    assert_eq!(low, vec![0, 1, 5]);
    assert_eq!(high, vec![2, 3, 4]);
    let (low, high) = median_risk_split(&[1.0, 1.0, 1.0]).unwrap();
    assert_eq!((low.len(), high.len()), (3, 0));
}

#[test]
fn bin_edges_are_event_time_quantiles() {
    let recs = records(
        &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        &[true, true, true, true, false, true, true, true],
    );
    let edges = bin_edges(&recs, 4).unwrap();
    assert_eq!(edges.len(), 3);
    assert!(edges.windows(2).all(|w| w[0] <= w[1]));
}

fn nll_of(hazards: &[f64], rec: SurvivalRecord) -> f64 {
    let mut g = Graph::new();
    let h = g.constant(Tensor::matrix(1, hazards.len(), hazards.to_vec()).unwrap());
    let l = discrete_nll(&mut g, h, &[rec]).unwrap();
    g.value(l).item()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn c_index_is_invariant_to_monotone_transforms(seed in 0u64..10_000) {
        let (risks, recs) = random_instance(&mut rng::stream(seed, 103));
        if let Ok(c) = concordance_index(&risks, &recs) {
            let mapped: Vec<f64> = risks.iter().map(|r| (0.5 * r).exp() * 3.0 - 1.0).collect();
            prop_assert_eq!(concordance_index(&mapped, &recs).unwrap(), c);
        }
    }

    #[test]
    fn negated_risks_give_one_minus_c(seed in 0u64..10_000) {
        let (risks, recs) = random_instance(&mut rng::stream(seed, 104));
        if let Ok(c) = concordance_index(&risks, &recs) {
            let neg: Vec<f64> = risks.iter().map(|r| -r).collect();
            let flipped = concordance_index(&neg, &recs).unwrap();
            prop_assert!((c + flipped - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn km_is_non_increasing_and_bounded(seed in 0u64..10_000) {
        let mut r = rng::stream(seed, 105);
        let n = r.random_range(1..80);
        let recs: Vec<SurvivalRecord> = (0..n)
            .map(|_| SurvivalRecord::new(r.random_range(0.0..10.0), r.random_bool(0.5)))
            .collect();
        let km = km_estimator(&recs).unwrap();
        prop_assert!(km.survival.iter().all(|s| (0.0..=1.0).contains(s)));
        prop_assert!(km.survival.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(km.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn event_nll_falls_as_its_hazard_rises(
        base in proptest::collection::vec(0.05f64..0.95, 4),
        bin in 0usize..4,
        bump in 0.01f64..0.04,
    ) {
        let mut rec = SurvivalRecord::new(1.0, true);
        rec.bin = bin;
        let mut up = base.clone();
        up[bin] += bump;
        prop_assert!(nll_of(&up, rec) < nll_of(&base, rec));
        // Surviving an earlier bin becomes less likely as its hazard rises.
        if bin > 0 {
            let mut earlier = base.clone();
            earlier[0] += bump;
            prop_assert!(nll_of(&earlier, rec) > nll_of(&base, rec));
        }
    }

    #[test]
    fn censored_nll_rises_with_any_hazard_up_to_its_bin(
        base in proptest::collection::vec(0.05f64..0.95, 4),
        bin in 0usize..4,
        k in 0usize..4,
        bump in 0.01f64..0.04,
    ) {
        let mut rec = SurvivalRecord::new(1.0, false);
        rec.bin = bin;
        let mut up = base.clone();
        up[k] += bump;
        let (a, b) = (nll_of(&up, rec), nll_of(&base, rec));
        if k <= bin {
            prop_assert!(a > b);
        } else {
            prop_assert_eq!(a, b);
        }
    }
}
