//! Property tests for the transport solver, the admissibility weights,
//! and the metrics.

use proptest::prelude::*;

use potalign_core::mat::Mat;
use potalign_core::metrics::{accuracy, cavg, eer, TrialScores};
use potalign_core::ot::{
    exact_ot_oracle, pairwise_feature_cost, sinkhorn, transport_value, uniform_marginal,
    CostMatrix, CostMetric,
};
use potalign_core::pot::{
    hard_weight, soft_weight, weighted_transport_value, PotParams, WeightMatrix,
};

fn cost_matrix_strategy(
    max_n: usize,
    max_m: usize,
) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        (
            Just(n),
            Just(m),
            proptest::collection::vec(0.0f64..2.0, n * m),
        )
    })
}

fn square_cost_strategy(max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2..=max_n).prop_flat_map(|n| (Just(n), proptest::collection::vec(0.0f64..2.0, n * n)))
}

fn to_cost(n: usize, m: usize, data: Vec<f64>) -> CostMatrix {
    CostMatrix::new(Mat::from_vec(n, m, data).unwrap()).unwrap()
}

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn converged_sinkhorn_marginals_match((n, m, data) in cost_matrix_strategy(5, 5),
                                          raw_mu in proptest::collection::vec(0.05f64..1.0, 5),
                                          raw_nu in proptest::collection::vec(0.05f64..1.0, 5)) {
        let cost = to_cost(n, m, data);
        let mu = normalized(raw_mu[..n].to_vec());
        let nu = normalized(raw_nu[..m].to_vec());
        let out = sinkhorn(&cost, &mu, &nu, 0.2, 20_000, 1e-7).unwrap();
        prop_assert!(out.converged);
        prop_assert!(out.coupling.marginal_violation() < 1e-7);
        prop_assert!((out.coupling.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transport_value_is_monotone_in_epsilon((n, data) in square_cost_strategy(4),
                                              eps_pair in (0.02f64..0.2, 1.5f64..8.0)) {
        let cost = to_cost(n, n, data);
        let mean = cost.mean().max(1e-6);
        let (lo_frac, ratio) = eps_pair;
        let eps1 = lo_frac * mean;
        let eps2 = eps1 * ratio;
        let u = uniform_marginal(n);
        let v1 = transport_value(
            &cost,
            &sinkhorn(&cost, &u, &u, eps1, 200_000, 1e-9).unwrap().coupling,
        )
        .unwrap();
        let v2 = transport_value(
            &cost,
            &sinkhorn(&cost, &u, &u, eps2, 200_000, 1e-9).unwrap().coupling,
        )
        .unwrap();
        prop_assert!(v1 <= v2 + 1e-9, "eps {eps1} -> {v1}, eps {eps2} -> {v2}");
    }

    #[test]
    fn sinkhorn_tracks_the_permutation_oracle((n, data) in square_cost_strategy(6)) {
        let cost = to_cost(n, n, data);
        let eps = (0.005 * cost.max()).max(1e-6);
        let u = uniform_marginal(n);
        let run = sinkhorn(&cost, &u, &u, eps, 500_000, 1e-9).unwrap();
        prop_assert!(run.converged);
        let approx = transport_value(&cost, &run.coupling).unwrap();
        let (_, exact) = exact_ot_oracle(&cost).unwrap();
        prop_assert!((approx - exact).abs() <= 0.01 * exact.abs().max(1e-9),
                     "approx {approx} vs exact {exact}");
    }

    #[test]
    fn euclidean_cost_symmetry_and_triangle(rows in proptest::collection::vec(
        proptest::collection::vec(-3.0f64..3.0, 3), 3)) {
        let a = Mat::from_rows(&rows).unwrap();
        let forward = pairwise_feature_cost(&a, &a, CostMetric::Euclidean).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(forward.values()[(i, j)], forward.values()[(j, i)]);
            }
        }
        // Triangle inequality on every index triple (stabilizer gives
        // each term at most 1e-6 of slack).
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let direct = forward.values()[(i, k)];
                    let via = forward.values()[(i, j)] + forward.values()[(j, k)];
                    prop_assert!(direct <= via + 1e-6);
                }
            }
        }
    }

    #[test]
    fn soft_weight_tends_to_hard_weight((n, m, data) in cost_matrix_strategy(4, 4)) {
        // Keep costs at least 1e-3 away from the threshold; at scale 1e4
        // that puts the sigmoid below 1e-4 of its limit.
        let b = 1.0;
        let data: Vec<f64> = data
            .into_iter()
            .map(|c| if (c - b).abs() < 1e-3 { b + 2e-3 } else { c })
            .collect();
        let cost = to_cost(n, m, data);
        let soft = soft_weight(&cost, &PotParams::new(b, 1e4).unwrap());
        let hard = hard_weight(&cost, &PotParams::new(b, 1e4).unwrap());
        for (s, h) in soft.weights().iter().zip(hard.weights().iter()) {
            prop_assert!((s - h).abs() < 1e-4);
        }
    }

    #[test]
    fn soft_weight_is_symmetric_about_threshold(delta in 1e-6f64..5.0, b in -1.0f64..3.0,
                                                scale in 0.0f64..50.0) {
        // Negative costs cannot enter a CostMatrix, so evaluate around a
        // threshold that keeps both sides nonnegative.
        let b_eff = b.abs() + delta + 1.0;
        let params = PotParams::new(b_eff, scale).unwrap();
        let cost = to_cost(1, 2, vec![b_eff - delta, b_eff + delta]);
        let w = soft_weight(&cost, &params);
        let sum = w.weights()[(0, 0)] + w.weights()[(0, 1)];
        prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {sum}");
    }

    #[test]
    fn unit_weights_reduce_to_plain_transport((n, m, data) in cost_matrix_strategy(4, 4)) {
        let cost = to_cost(n, m, data);
        let mu = uniform_marginal(n);
        let nu = uniform_marginal(m);
        let run = sinkhorn(&cost, &mu, &nu, 0.3, 5000, 1e-8).unwrap();
        let ones = WeightMatrix::ones(n, m);
        let wv = weighted_transport_value(&cost, &run.coupling, &ones).unwrap();
        let v = transport_value(&cost, &run.coupling).unwrap();
        prop_assert!((wv - v).abs() <= 1e-12);
    }

    #[test]
    fn raising_a_cost_never_raises_its_soft_weight((n, m, data) in cost_matrix_strategy(3, 3),
                                                   bump in 0.01f64..2.0,
                                                   idx in 0usize..9) {
        let idx = idx % (n * m);
        let cost = to_cost(n, m, data.clone());
        let mut bumped = data;
        bumped[idx] += bump;
        let cost_b = to_cost(n, m, bumped);
        let p = PotParams::new(1.0, 5.0).unwrap();
        let w = soft_weight(&cost, &p);
        let wb = soft_weight(&cost_b, &p);
        let (i, j) = (idx / m, idx % m);
        prop_assert!(wb.weights()[(i, j)] <= w.weights()[(i, j)]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eer_is_invariant_under_increasing_transforms(
        rows in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 2..20),
        labels in proptest::collection::vec(0usize..3, 20),
        gain in 0.1f64..10.0, offset in -5.0f64..5.0) {
        let n = rows.len();
        let trials = TrialScores::new(
            Mat::from_rows(&rows).unwrap(),
            labels[..n].to_vec(),
        ).unwrap();
        let base = eer(&trials).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));

        let map = |f: &dyn Fn(f64) -> f64| {
            let mapped: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().map(|&s| f(s)).collect())
                .collect();
            TrialScores::new(Mat::from_rows(&mapped).unwrap(), labels[..n].to_vec()).unwrap()
        };
        let affine = map(&|s| gain * s + offset);
        prop_assert!((eer(&affine).unwrap() - base).abs() < 1e-12);
        let cubic = map(&|s| s * s * s);
        prop_assert!((eer(&cubic).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn cavg_stays_in_unit_interval_and_improves_with_corrections(
        rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 4..24),
        raw_labels in proptest::collection::vec(0usize..3, 24)) {
        let n = rows.len();
        // Force at least two languages.
        let mut labels = raw_labels[..n].to_vec();
        labels[0] = 0;
        labels[1] = 1;
        let trials = TrialScores::new(Mat::from_rows(&rows).unwrap(), labels.clone()).unwrap();
        let threshold = 0.5;
        let before = cavg(&trials, 0.5, threshold).unwrap();
        prop_assert!((0.0..=1.0).contains(&before));

        // Correct one erroneous score toward the truth, if any exists.
        let mut fixed = rows.clone();
        let mut changed = false;
        'outer: for (i, row) in rows.iter().enumerate() {
            for (j, &s) in row.iter().enumerate() {
                let is_target = labels[i] == j;
                if is_target && s < threshold {
                    fixed[i][j] = threshold + 0.25;
                    changed = true;
                    break 'outer;
                }
                if !is_target && s >= threshold {
                    fixed[i][j] = threshold - 0.25;
                    changed = true;
                    break 'outer;
                }
            }
        }
        if changed {
            let trials_fixed =
                TrialScores::new(Mat::from_rows(&fixed).unwrap(), labels).unwrap();
            let after = cavg(&trials_fixed, 0.5, threshold).unwrap();
            prop_assert!(after <= before + 1e-12, "{after} > {before}");
        }
    }

    #[test]
    fn accuracy_counts_matches(bits in proptest::collection::vec(proptest::bool::ANY, 1..40)) {
        let truth: Vec<usize> = (0..bits.len()).collect();
        let predictions: Vec<usize> = bits
            .iter()
            .enumerate()
            .map(|(i, &hit)| if hit { i } else { i + 1 })
            .collect();
        let expected = bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64;
        prop_assert_eq!(accuracy(&predictions, &truth).unwrap(), expected);
    }
}
