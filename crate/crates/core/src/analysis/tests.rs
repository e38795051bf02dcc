use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::net::{mlp, Activation, MlpOptions};

#[test]
fn tv_of_identical_distributions_is_zero() {
    let p = vec![0.2, 0.3, 0.5];
    assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
}

#[test]
fn tv_of_disjoint_support_is_one() {
    assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
}

#[test]
fn tv_hand_value() {
    // ½(|0.5−0.8| + |0.5−0.2|) = 0.3
    let d = tv_distance(&[0.5, 0.5], &[0.8, 0.2]).unwrap();
    assert!((d - 0.3).abs() < 1e-15);
}

#[test]
fn tv_rejects_non_distributions() {
    assert!(tv_distance(&[0.5, 0.6], &[0.5, 0.5]).is_err(), "sums to 1.1");
    assert!(tv_distance(&[-0.1, 1.1], &[0.5, 0.5]).is_err(), "negative mass");
    assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err(), "support mismatch");
    assert!(tv_distance(&[], &[]).is_err(), "empty");
}

proptest! {
    #[test]
    fn tv_is_a_bounded_metric(raw in proptest::collection::vec(0.01f64..1.0, 9)) {
        let norm = |xs: &[f64]| -> Vec<f64> {
            let s: f64 = xs.iter().sum();
            xs.iter().map(|x| x / s).collect()
        };
        let p = norm(&raw[0..3]);
        let q = norm(&raw[3..6]);
        let r = norm(&raw[6..9]);
        let pq = tv_distance(&p, &q).unwrap();
        let qp = tv_distance(&q, &p).unwrap();
        let pr = tv_distance(&p, &r).unwrap();
        let rq = tv_distance(&r, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!((pq - qp).abs() < 1e-15, "symmetry");
        prop_assert!(pq <= pr + rq + 1e-12, "triangle inequality");
    }
}

/// Identity-feature gridworld net with a handcrafted linear head:
/// Q0 = 0, Q1 = head · (x, y, ξ).
fn linear_grid_net(head: [f64; 3]) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = mlp(3, &[3], 2, Activation::Identity, &MlpOptions::default(), &mut rng).unwrap();
    let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    net.layers[0].weights.copy_from_slice(&eye);
    net.layers[0].bias.iter_mut().for_each(|b| *b = 0.0);
    net.layers[1].weights[..3].iter_mut().for_each(|w| *w = 0.0);
    net.layers[1].weights[3..].copy_from_slice(&head);
    net.layers[1].bias.iter_mut().for_each(|b| *b = 0.0);
    net
}

/// Net whose first layer zeroes the ξ input column: provably tag-invariant.
fn xi_blind_net(seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mlp(
        3,
        &[8],
        2,
        Activation::Tanh,
        &MlpOptions { baseline_head: false, zero_input_cols: vec![2] },
        &mut rng,
    )
    .unwrap()
}

#[test]
fn tag_blind_policy_has_zero_constant() {
    let k = grid_lipschitz(&xi_blind_net(1), PolicyKind::Greedy).unwrap();
    assert_eq!(k, 0.0);
    let k = grid_lipschitz(&xi_blind_net(1), PolicyKind::Softmax).unwrap();
    assert_eq!(k, 0.0);
}

#[test]
fn one_state_flip_gives_one_tenth() {
    // Q1 = ξ − 100(x + y): greedy differs between ξ = ±5 exactly at (0,0),
    // where the observation distance is |(0,0,5) − (0,0,−5)| = 10.
    let net = linear_grid_net([-100.0, -100.0, 1.0]);
    let k = grid_lipschitz(&net, PolicyKind::Greedy).unwrap();
    assert!((k - 0.1).abs() < 1e-15, "k = {k}");
}

#[test]
fn mean_policy_tv_is_zero_for_tag_blind_nets() {
    for kind in [PolicyKind::Greedy, PolicyKind::Softmax] {
        assert_eq!(grid_mean_policy_tv(&xi_blind_net(3), kind).unwrap(), 0.0);
    }
}

#[test]
fn mean_policy_tv_counts_flipped_states() {
    // Same net as the constant test: the greedy action flips at (0,0) only,
    // so the mean over the nine positions is exactly 1/9.
    let net = linear_grid_net([-100.0, -100.0, 1.0]);
    let tv = grid_mean_policy_tv(&net, PolicyKind::Greedy).unwrap();
    assert!((tv - 1.0 / 9.0).abs() < 1e-15, "tv = {tv}");
}

#[test]
fn constant_is_symmetric_in_the_tag_labels() {
    let net = linear_grid_net([-100.0, -100.0, 1.0]);
    let states = grid_state_sample();
    let forward = lipschitz_constant(
        &net,
        PolicyKind::Greedy,
        &Observer::grid(),
        &[Randomizer::XiTag(5.0), Randomizer::XiTag(-5.0)],
        &states,
        ObservationMetric::L2,
    )
    .unwrap();
    let reversed = lipschitz_constant(
        &net,
        PolicyKind::Greedy,
        &Observer::grid(),
        &[Randomizer::XiTag(-5.0), Randomizer::XiTag(5.0)],
        &states,
        ObservationMetric::L2,
    )
    .unwrap();
    assert_eq!(forward, reversed);
}

#[test]
fn degenerate_randomizer_pairs_are_an_error() {
    let net = xi_blind_net(2);
    let err = lipschitz_constant(
        &net,
        PolicyKind::Greedy,
        &Observer::grid(),
        &[Randomizer::XiTag(5.0), Randomizer::XiTag(5.0)],
        &grid_state_sample(),
        ObservationMetric::L2,
    );
    assert!(err.is_err());
}

#[test]
fn zero_constant_zeroes_both_bounds() {
    let b = prop1_bounds(&BoundInputs { k: 0.0, r_max: 1.0, gamma: 0.9, delta: 10.0, horizon: None }).unwrap();
    assert_eq!(b.tight, 0.0);
    assert_eq!(b.loose, 0.0);
}

#[test]
fn saturated_undiscounted_bound_is_twice_the_horizon() {
    // Every min(1, (t+1)KΔ) term saturates; γ = 1 over T = 10 terms.
    let b = prop1_bounds(&BoundInputs { k: 0.1, r_max: 1.0, gamma: 1.0, delta: 10.0, horizon: Some(10) }).unwrap();
    assert_eq!(b.tight, 20.0);
    assert_eq!(b.loose, f64::INFINITY);
}

#[test]
fn loose_bound_closed_form() {
    let b = prop1_bounds(&BoundInputs { k: 0.001, r_max: 1.0, gamma: 0.9, delta: 1.0, horizon: None }).unwrap();
    assert!((b.loose - 0.2).abs() < 1e-15);
    // As K·Δ → 0 the two bounds coincide, so compare up to rounding.
    assert!(b.tight <= b.loose * (1.0 + 1e-12));
}

#[test]
fn finite_horizon_bound_hand_sum() {
    // γ = 0.5, c = 0.4, T = 3: 0.4 + 0.5·0.8 + 0.25·1 = 1.05; doubled = 2.1.
    let b = prop1_bounds(&BoundInputs { k: 0.4, r_max: 1.0, gamma: 0.5, delta: 1.0, horizon: Some(3) }).unwrap();
    assert!((b.tight - 2.1).abs() < 1e-12);
}

#[test]
fn bound_input_validation() {
    let ok = BoundInputs { k: 1.0, r_max: 1.0, gamma: 0.9, delta: 1.0, horizon: None };
    assert!(prop1_bounds(&BoundInputs { gamma: 1.1, ..ok }).is_err(), "gamma > 1");
    assert!(prop1_bounds(&BoundInputs { k: -1.0, ..ok }).is_err(), "negative K");
    assert!(prop1_bounds(&BoundInputs { gamma: 1.0, horizon: None, ..ok }).is_err(), "infinite undiscounted sum");
}

proptest! {
    #[test]
    fn infinite_series_matches_brute_force(gamma in 0.0f64..0.99, c in 1e-4f64..2.0) {
        let closed = saturating_series(gamma, c);
        let mut brute = 0.0;
        let mut weight = 1.0;
        let mut t = 0usize;
        while weight > 1e-18 && t < 2_000_000 {
            brute += weight * 1.0f64.min((t + 1) as f64 * c);
            weight *= gamma;
            t += 1;
        }
        prop_assert!((closed - brute).abs() <= 1e-9 * brute.max(1.0), "{closed} vs {brute}");
    }

    #[test]
    fn tight_never_exceeds_loose_below_gamma_one(
        k in 0.0f64..3.0,
        r_max in 0.0f64..5.0,
        gamma in 0.0f64..0.999,
        delta in 0.0f64..20.0,
        horizon in proptest::option::of(1usize..500),
    ) {
        let b = prop1_bounds(&BoundInputs { k, r_max, gamma, delta, horizon }).unwrap();
        prop_assert!(b.tight <= b.loose * (1.0 + 1e-12) + 1e-12, "{} > {}", b.tight, b.loose);
    }
}

#[test]
fn observation_blind_policy_scores_identically_everywhere() {
    // Constant outputs: the greedy action never varies, so every domain sees
    // the same deterministic rollout.
    let net = linear_grid_net([0.0, 0.0, 0.0]);
    let grid = evaluate_grid(&net, &Sim::grid(), &xi_domains(), 3, EvalMode::Greedy, 9).unwrap();
    assert_eq!(grid.rows.len(), 2);
    assert_eq!(grid.rows[0].mean, grid.rows[1].mean);
    assert_eq!(grid.rows[0].std, 0.0, "deterministic rollouts");
    assert_eq!(grid.gap(), 0.0);
}

#[test]
fn evaluation_is_order_stable() {
    let net = xi_blind_net(3);
    let a = evaluate_grid(&net, &Sim::grid(), &xi_domains(), 5, EvalMode::Sample, 4).unwrap();
    let b = evaluate_grid(&net, &Sim::grid(), &xi_domains(), 5, EvalMode::Sample, 4).unwrap();
    assert_eq!(a, b, "parallel scheduling must not leak into results");
}

#[test]
fn eval_csv_shape() {
    let net = linear_grid_net([1.5, 0.0, 0.0]);
    let grid = evaluate_grid(&net, &Sim::grid(), &xi_domains(), 2, EvalMode::Greedy, 0).unwrap();
    let csv = grid.to_csv_string();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "xi,mean,std,episodes");
    assert_eq!(lines.count(), 2);
}

#[test]
fn grid_presets_have_documented_shapes() {
    let plane = rb_plane(5);
    assert_eq!(plane.len(), 25);
    assert!(plane.iter().all(|d| matches!(d, Randomizer::BackgroundColor([_, g, _]) if *g == 1.0)));

    let diag = gray_diagonal(11);
    assert_eq!(diag.len(), 11);
    assert_eq!(diag[0], Randomizer::BackgroundColor([0.0, 0.0, 0.0]));
    assert_eq!(diag[10], Randomizer::BackgroundColor([1.0, 1.0, 1.0]));
    assert!((0..10).all(|i| {
        let (Randomizer::BackgroundColor(a), Randomizer::BackgroundColor(b)) = (&diag[i], &diag[i + 1]) else {
            return false;
        };
        (b[0] - a[0] - 0.1).abs() < 1e-12
    }));
}

#[test]
fn discretizing_spaces() {
    let tags = discretize_space(&RandomizationSpace::xi_pair(), 7).unwrap();
    assert_eq!(tags, xi_domains());

    let small = RandomizationSpace::rgb_small();
    let corners = discretize_space(&small, 2).unwrap();
    assert_eq!(corners.len(), 8);
    assert!(corners.contains(&Randomizer::BackgroundColor([0.5, 0.5, 0.5])));
    assert!(corners.contains(&Randomizer::BackgroundColor([1.0, 1.0, 1.0])));
    assert!(corners.iter().all(|c| small.contains(c)));

    let split = discretize_space(&RandomizationSpace::rgb_split(), 2).unwrap();
    assert_eq!(split.len(), 16);

    assert!(discretize_space(&small, 1).is_err());
}

#[test]
fn optimal_linear_policy_walks_rruu() {
    // Q1 = 1.5 − x: right while x < 2, then up. Avoids the fire cell.
    let net = linear_grid_net([-1.0, 0.0, 0.0]);
    let mut net = net;
    net.layers[1].bias[1] = 1.5;
    assert_eq!(grid_greedy_path(&net, 5.0).unwrap(), vec![1, 1, 0, 0]);
    assert_eq!(grid_greedy_return(&net, 5.0).unwrap(), 1.0);
    assert_eq!(grid_return_gap(&net).unwrap(), 0.0);
}

#[test]
fn wall_hugging_policy_pays_the_invalid_penalty() {
    // Always right: two free moves, then eight invalid ones at the wall.
    let net = linear_grid_net([0.0, 0.0, 0.0]);
    let mut net = net;
    net.layers[1].bias[1] = 1.0;
    assert_eq!(grid_greedy_return(&net, 5.0).unwrap(), -8.0);
}

#[test]
fn same_path_probability_counts_agreeing_seeds() {
    let invariant = xi_blind_net(4);
    let flipper = linear_grid_net([-100.0, -100.0, 1.0]);
    assert_eq!(same_path_probability(&[invariant.clone()]).unwrap(), 1.0);
    assert_eq!(
        same_path_probability(&[invariant.clone(), flipper.clone()]).unwrap(),
        0.5
    );
    assert_eq!(same_path_probability(&[flipper]).unwrap(), 0.0);
    assert!(same_path_probability(&[]).is_err());
}

#[test]
fn non_gridworld_checkpoints_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = mlp(4, &[4], 2, Activation::Tanh, &MlpOptions::default(), &mut rng).unwrap();
    assert!(grid_greedy_path(&net, 5.0).is_err());
    assert!(same_path_probability(&[net]).is_err());
}

#[test]
fn single_domain_value_std_is_zero() {
    let net = xi_blind_net(6);
    let s = value_std(&net, &Observer::grid(), &grid_state_sample(), &[Randomizer::XiTag(5.0)]).unwrap();
    assert_eq!(s, 0.0);
}

#[test]
fn tag_blind_network_has_exactly_zero_value_spread() {
    let net = xi_blind_net(7);
    let s = value_std(&net, &Observer::grid(), &grid_state_sample(), &xi_domains()).unwrap();
    assert_eq!(s, 0.0, "zeroed ξ column ⇒ bit-identical values");
}

#[test]
fn tag_sensitive_network_has_positive_value_spread() {
    let net = linear_grid_net([0.0, 0.0, 1.0]);
    let s = value_std(&net, &Observer::grid(), &grid_state_sample(), &xi_domains()).unwrap();
    assert!(s > 0.0);
}

#[test]
fn rollout_state_collection_includes_start_and_terminal() {
    let mut net = linear_grid_net([-1.0, 0.0, 0.0]);
    net.layers[1].bias[1] = 1.5;
    let states = greedy_rollout_states(&net, &Sim::grid(), &Randomizer::XiTag(5.0), 0).unwrap();
    assert_eq!(states.len(), 5, "start plus four moves");
    assert!(matches!(states[0], ObsState::Grid(s) if s.x == 0 && s.y == 0));
    assert!(matches!(states[4], ObsState::Grid(s) if s.x == 2 && s.y == 2));
}

#[test]
fn lemma_holds_trivially_on_equal_joints() {
    let p = vec![vec![0.25, 0.25], vec![0.25, 0.25]];
    let c = lemma1_check(&p, &p).unwrap();
    assert_eq!(c.lhs, 0.0);
    assert_eq!(c.rhs, 0.0);
    assert!(c.holds);
}

#[test]
fn factorized_joints_with_shared_conditional_meet_the_bound_exactly() {
    // p(x,y) = p(x)c(y), q(x,y) = q(x)c(y): joint TV equals marginal TV and
    // the conditional term vanishes.
    let c = [0.3, 0.7];
    let px = [0.6, 0.4];
    let qx = [0.1, 0.9];
    let joint = |m: &[f64; 2]| -> Vec<Vec<f64>> {
        m.iter().map(|&mx| c.iter().map(|&cy| mx * cy).collect()).collect()
    };
    let out = lemma1_check(&joint(&px), &joint(&qx)).unwrap();
    let marginal = tv_distance(&px, &qx).unwrap();
    assert!((out.lhs - marginal).abs() < 1e-15);
    assert!((out.rhs - marginal).abs() < 1e-15);
    assert!(out.holds);
}

#[test]
fn lemma_rejects_invalid_joints() {
    let good = vec![vec![0.5, 0.5]];
    assert!(lemma1_check(&[vec![0.7, 0.7]], &good).is_err(), "not normalized");
    assert!(lemma1_check(&[vec![0.5], vec![0.5, 0.0]], &good).is_err(), "ragged");
    assert!(lemma1_check(&[vec![1.2, -0.2]], &good).is_err(), "negative");
    assert!(lemma1_check(&good, &[vec![0.5], vec![0.5]]).is_err(), "shape mismatch");
}

#[test]
fn lemma_survives_a_hundred_thousand_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut random_joint = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
        let mut m: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random::<f64>()).collect())
            .collect();
        let total: f64 = m.iter().flatten().sum();
        m.iter_mut().flatten().for_each(|v| *v /= total);
        m
    };
    for i in 0..100_000 {
        let rows = 2 + (i % 3);
        let cols = 2 + (i % 2);
        let p = random_joint(rows, cols);
        let q = random_joint(rows, cols);
        let out = lemma1_check(&p, &q).unwrap();
        assert!(out.holds, "violated at instance {i}: lhs {} rhs {}", out.lhs, out.rhs);
    }
}

#[test]
fn feature_dump_row_and_column_counts() {
    let net = xi_blind_net(8);
    let states = &grid_state_sample()[..2];
    let dump = feature_dump(&net, &Observer::grid(), states, &xi_domains()).unwrap();
    assert_eq!(dump.rows.len(), 4, "2 states × 2 domains");
    let csv = dump.to_csv_string();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    // state_id, xi, f_1..f_8, value
    assert_eq!(header.split(',').count(), 11);
    assert_eq!(header.split(',').next().unwrap(), "state_id");
    assert!(header.ends_with("value"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn duplicated_domains_duplicate_rows() {
    let net = xi_blind_net(9);
    let states = &grid_state_sample()[..1];
    let twice = [Randomizer::XiTag(5.0), Randomizer::XiTag(5.0)];
    let dump = feature_dump(&net, &Observer::grid(), states, &twice).unwrap();
    assert_eq!(dump.rows.len(), 2);
    assert_eq!(dump.rows[0].features, dump.rows[1].features);
    assert_eq!(dump.rows[0].value, dump.rows[1].value);
}

#[test]
fn tag_blind_features_have_zero_cross_domain_distance() {
    let net = xi_blind_net(10);
    let dump = feature_dump(&net, &Observer::grid(), &grid_state_sample(), &xi_domains()).unwrap();
    assert_eq!(dump.mean_cross_domain_distance(), 0.0);

    let sensitive = linear_grid_net([0.0, 0.0, 1.0]);
    let dump = feature_dump(&sensitive, &Observer::grid(), &grid_state_sample(), &xi_domains()).unwrap();
    assert!(dump.mean_cross_domain_distance() > 0.0);
}

#[test]
fn dumps_share_one_checkpoint_hash_and_differ_across_checkpoints() {
    let a = feature_dump(&xi_blind_net(11), &Observer::grid(), &grid_state_sample(), &xi_domains()).unwrap();
    let b = feature_dump(&xi_blind_net(12), &Observer::grid(), &grid_state_sample(), &xi_domains()).unwrap();
    assert_ne!(a.checkpoint_hash, b.checkpoint_hash);
}

#[test]
fn mixed_domain_families_are_rejected() {
    let net = xi_blind_net(13);
    let mixed = [Randomizer::XiTag(5.0), Randomizer::BackgroundColor([1.0, 1.0, 1.0])];
    assert!(feature_dump(&net, &Observer::grid(), &grid_state_sample(), &mixed).is_err());
}

#[test]
fn export_writes_the_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.csv");
    let net = xi_blind_net(14);
    let dump = export_features(&net, &Observer::grid(), &grid_state_sample()[..2], &xi_domains(), &path).unwrap();
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(written, dump.to_csv_string());
}
