//! Acceptance gates for the whole testbed, one test per claim. Each prints a
//! single PASS/FAIL line (visible with `--nocapture`) carrying the measured
//! numbers and the pinned tolerance.
//!
//! The three cartpole studies train for hours on one core and are `#[ignore]`d;
//! run them explicitly with
//! `cargo test --release --test acceptance -- --ignored --nocapture`.
//! They share one training battery through the harness cache, so the first one
//! to run pays the training cost and the other two reuse its checkpoints.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use invar_rl::agents::{
    compute_returns, dqn_loss, pg_loss, DqnLossCfg, ObsBranch, OutputRegTarget, PgLossCfg,
    RegKind, Regime, TrajStep, Trajectory, Transition,
};
use invar_rl::analysis::lemma1_check;
use invar_rl::config::parse_config;
use invar_rl::harness::{
    csv_without_wall, run_bounds, run_eval, run_export, run_repro, run_train, RunManifest,
    ReproPreset, ReproSummary,
};
use invar_rl::net::{
    load_checkpoint, mlp, save_checkpoint, softmax_logprob, Activation, MlpOptions, NetworkParams,
};
use invar_rl::randomize::{Observer, Randomizer};

fn verdict(name: &str, ok: bool, detail: &str) {
    println!("{} {name} — {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

/// Persistent scratch root so the gridworld/cartpole batteries are trained
/// once and reused across test invocations.
fn out_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

// ---------------------------------------------------------------- gradients

/// Mutable view of one parameter coordinate, in the same structural order as
/// `Gradient::flatten`: weights then bias, layer by layer, baseline head last.
fn slot_mut(p: &mut NetworkParams, mut i: usize) -> &mut f64 {
    for l in &mut p.layers {
        if i < l.weights.len() {
            return &mut l.weights[i];
        }
        i -= l.weights.len();
        if i < l.bias.len() {
            return &mut l.bias[i];
        }
        i -= l.bias.len();
    }
    let b = p.baseline_head.as_mut().expect("index past last layer");
    if i < b.weights.len() {
        return &mut b.weights[i];
    }
    &mut b.bias[i - b.weights.len()]
}

fn param_count(p: &NetworkParams) -> usize {
    let mut n = 0;
    for l in &p.layers {
        n += l.weights.len() + l.bias.len();
    }
    if let Some(b) = &p.baseline_head {
        n += b.weights.len() + b.bias.len();
    }
    n
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

/// Central finite differences of `f` over every parameter coordinate.
fn fd_gradient(params: &NetworkParams, f: &dyn Fn(&NetworkParams) -> f64) -> Vec<f64> {
    let h = 1e-5;
    (0..param_count(params))
        .map(|i| {
            let mut plus = params.clone();
            *slot_mut(&mut plus, i) += h;
            let mut minus = params.clone();
            *slot_mut(&mut minus, i) -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

fn rand_obs(dim: usize, rng: &mut ChaCha8Rng) -> Arc<Vec<f64>> {
    Arc::new((0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
}

#[test]
fn gradients_match_central_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;

    // Ten TD-loss instances across penalty kinds, discounts, and widths.
    for i in 0..10 {
        let in_dim = 3 + i % 4;
        let actions = 2 + i % 3;
        let act = if i % 2 == 0 { Activation::Relu } else { Activation::Tanh };
        let opts = MlpOptions::default();
        let params = mlp(in_dim, &[6, 5], actions, act, &opts, &mut rng).unwrap();
        let target = mlp(in_dim, &[6, 5], actions, act, &opts, &mut rng).unwrap();

        let batch: Vec<Transition> = (0..4)
            .map(|j| Transition {
                obs_ref: rand_obs(in_dim, &mut rng),
                obs_sampled: rand_obs(in_dim, &mut rng),
                action: rng.random_range(0..actions),
                reward: rng.random::<f64>() * 2.0 - 1.0,
                next_obs_ref: rand_obs(in_dim, &mut rng),
                next_obs_sampled: rand_obs(in_dim, &mut rng),
                terminal: j == 0,
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();

        let (reg, lambda) = match i % 3 {
            0 => (RegKind::Feature, 1.3),
            1 => (RegKind::Output, 0.8),
            _ => (RegKind::None, 0.0),
        };
        let cfg = DqnLossCfg {
            gamma: [0.9, 0.99, 1.0][i % 3],
            lambda,
            branch: ObsBranch::Ref,
            reg,
            stop_grad_ref: false,
            double_q: false,
            dropout: 0.0,
        };

        let mut dummy = ChaCha8Rng::seed_from_u64(0);
        let (_, grad) = dqn_loss(&params, &target, &refs, &cfg, &mut dummy).unwrap();
        let fd = fd_gradient(&params, &|p| {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            dqn_loss(p, &target, &refs, &cfg, &mut r).unwrap().0.total
        });
        worst = worst.max(rel_err(&grad.flatten(), &fd));
    }

    // Ten policy-gradient instances. The analytic gradient treats the
    // advantage in the policy term as a constant, so the finite-difference
    // objective freezes it at the base parameters too; the baseline's squared
    // error stays live.
    for i in 0..10 {
        let in_dim = 3 + i % 3;
        let actions = 2 + i % 3;
        let act = if i % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let opts = MlpOptions { baseline_head: true, ..Default::default() };
        let params = mlp(in_dim, &[6, 4], actions, act, &opts, &mut rng).unwrap();

        let steps: Vec<TrajStep> = (0..5)
            .map(|_| TrajStep {
                obs_ref: rand_obs(in_dim, &mut rng),
                obs_sampled: rand_obs(in_dim, &mut rng),
                action: rng.random_range(0..actions),
                reward: rng.random::<f64>() * 2.0 - 1.0,
            })
            .collect();
        let traj = Trajectory { steps, phi_sampled: Randomizer::XiTag(-5.0) };

        let (reg, lambda, target) = match i % 4 {
            0 => (RegKind::Feature, 0.9, OutputRegTarget::Logits),
            1 => (RegKind::Output, 1.6, OutputRegTarget::Logits),
            2 => (RegKind::Output, 0.4, OutputRegTarget::Probs),
            _ => (RegKind::None, 0.0, OutputRegTarget::Logits),
        };
        let cfg = PgLossCfg {
            gamma: [0.9, 0.99, 1.0][i % 3],
            lambda,
            branch: ObsBranch::Ref,
            reg,
            stop_grad_ref: false,
            output_target: target,
            dropout: 0.0,
        };

        let returns = compute_returns(
            &traj.steps.iter().map(|s| s.reward).collect::<Vec<_>>(),
            cfg.gamma,
        );
        let frozen_adv: Vec<f64> = traj
            .steps
            .iter()
            .zip(&returns)
            .map(|(s, &ret)| {
                ret - params.forward(&s.obs_ref).unwrap().baseline_out().unwrap()
            })
            .collect();

        let objective = |p: &NetworkParams| {
            let mut rl = 0.0;
            let mut pen = 0.0;
            for ((s, &ret), &adv0) in traj.steps.iter().zip(&returns).zip(&frozen_adv) {
                let trace = p.forward(&s.obs_ref).unwrap();
                let (probs, logp) = softmax_logprob(trace.output()).unwrap();
                let adv = ret - trace.baseline_out().unwrap();
                rl += -adv0 * logp[s.action] + adv * adv;
                if cfg.reg != RegKind::None && cfg.lambda > 0.0 {
                    let samp = p.forward(&s.obs_sampled).unwrap();
                    let sq = |a: &[f64], b: &[f64]| {
                        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
                    };
                    pen += match (cfg.reg, cfg.output_target) {
                        (RegKind::Feature, _) => sq(p.feature(&trace), p.feature(&samp)),
                        (RegKind::Output, OutputRegTarget::Logits) => {
                            sq(trace.output(), samp.output())
                        }
                        (RegKind::Output, OutputRegTarget::Probs) => {
                            sq(&probs, &softmax_logprob(samp.output()).unwrap().0)
                        }
                        (RegKind::None, _) => unreachable!(),
                    };
                }
            }
            rl + cfg.lambda * pen
        };

        let mut dummy = ChaCha8Rng::seed_from_u64(0);
        let (parts, grad) = pg_loss(&params, &traj, &cfg, &mut dummy).unwrap();
        assert!((parts.total - objective(&params)).abs() < 1e-12);
        let fd = fd_gradient(&params, &objective);
        worst = worst.max(rel_err(&grad.flatten(), &fd));
    }

    verdict(
        "gradcheck",
        worst < 1e-4,
        &format!("20 loss instances, max relative error {worst:.2e} (tol 1e-4)"),
    );
}

// ------------------------------------------------------------ TV inequality

#[test]
fn joint_tv_decomposition_holds_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0usize;
    let trials = 100_000;

    let random_joint = |nx: usize, ny: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        let sharpen = rng.random_range(1..4) * 2;
        let mut joint: Vec<Vec<f64>> = (0..nx)
            .map(|_| (0..ny).map(|_| rng.random::<f64>().powi(sharpen)).collect())
            .collect();
        if rng.random::<f64>() < 0.1 {
            let row = rng.random_range(0..nx);
            joint[row].iter_mut().for_each(|v| *v = 0.0);
        }
        let total: f64 = joint.iter().flatten().sum();
        if total == 0.0 {
            joint[0][0] = 1.0;
            return joint;
        }
        joint.iter_mut().flatten().for_each(|v| *v /= total);
        joint
    };

    for _ in 0..trials {
        let nx = rng.random_range(2..6);
        let ny = rng.random_range(2..6);
        let p = random_joint(nx, ny, &mut rng);
        let q = if rng.random::<f64>() < 0.05 {
            p.clone()
        } else {
            random_joint(nx, ny, &mut rng)
        };
        if !lemma1_check(&p, &q).unwrap().holds {
            violations += 1;
        }
    }

    verdict(
        "tv-decomposition",
        violations == 0,
        &format!("{violations} violations on {trials} random joint pairs"),
    );
}

// ------------------------------------------------------------- bound sweep

#[test]
fn bound_sweep_is_valid_and_monotone() {
    let out = run_repro(ReproPreset::GridworldBound, &out_root()).unwrap();
    let ReproSummary::GridworldBound { per_lambda } = out.summary else {
        panic!("wrong summary variant")
    };

    let lambdas: Vec<f64> = per_lambda.iter().map(|r| r.lambda).collect();
    assert_eq!(lambdas, vec![0.01, 0.1, 1.0, 10.0]);
    assert!(per_lambda.iter().all(|r| r.seeds == 10));

    let tights: Vec<f64> = per_lambda.iter().map(|r| r.median_tight).collect();
    let gaps: Vec<f64> = per_lambda.iter().map(|r| r.median_gap).collect();
    let all_within = per_lambda.iter().all(|r| r.frac_within == 1.0);

    verdict(
        "return-gap bound",
        all_within && non_increasing(&tights) && non_increasing(&gaps),
        &format!(
            "gap within tight bound on 40/40 cells: {all_within}; median tight {tights:?} \
             and median gap {gaps:?} non-increasing over lambda {lambdas:?}"
        ),
    );
}

// --------------------------------------------------------------- same path

#[test]
fn regularized_agents_keep_the_same_path() {
    let out = run_repro(ReproPreset::GridworldPaths, &out_root()).unwrap();
    let ReproSummary::GridworldPaths {
        regularized_same_path,
        regularized_seeds,
        randomized_same_path,
        randomized_seeds,
    } = out.summary
    else {
        panic!("wrong summary variant")
    };

    assert_eq!((regularized_seeds, randomized_seeds), (20, 50));
    verdict(
        "same-path probability",
        regularized_same_path == 1.0 && randomized_same_path < 1.0,
        &format!(
            "regularized {regularized_same_path} over {regularized_seeds} seeds (needs exactly 1), \
             randomized {randomized_same_path} over {randomized_seeds} seeds (needs < 1)"
        ),
    );
}

// ------------------------------------------------- cartpole studies (long)

// The three studies below share one training battery through the harness
// cache; the lock keeps concurrent test threads from racing on it.
static STUDY: Mutex<()> = Mutex::new(());

fn study_lock() -> std::sync::MutexGuard<'static, ()> {
    STUDY.lock().unwrap_or_else(|e| e.into_inner())
}

#[test]
#[ignore = "multi-hour cartpole battery; run with --release -- --ignored --nocapture"]
fn interpolation_variance_and_mean_ordering() {
    let _guard = study_lock();
    let out = run_repro(ReproPreset::CartpoleGrid, &out_root()).unwrap();
    let ReproSummary::CartpoleGrid { regimes } = out.summary else {
        panic!("wrong summary variant")
    };

    let find = |r: Regime| regimes.iter().find(|s| s.regime == r).unwrap();
    let reg = find(Regime::Regularized);
    let rand = find(Regime::Randomized);
    verdict(
        "interpolation variance",
        reg.median_std < rand.median_std && reg.median_mean >= rand.median_mean,
        &format!(
            "across-domain return std regularized {:.3} < randomized {:.3}; \
             mean regularized {:.2} >= randomized {:.2} (5-seed medians)",
            reg.median_std, rand.median_std, reg.median_mean, rand.median_mean
        ),
    );
}

#[test]
#[ignore = "multi-hour cartpole battery; run with --release -- --ignored --nocapture"]
fn value_std_ordering() {
    let _guard = study_lock();
    let out = run_repro(ReproPreset::ValueStd, &out_root()).unwrap();
    let ReproSummary::ValueStd { regimes } = out.summary else {
        panic!("wrong summary variant")
    };

    let find = |r: Regime| regimes.iter().find(|s| s.regime == r).unwrap().median_value_std;
    let (normal, rand, reg) = (
        find(Regime::Normal),
        find(Regime::Randomized),
        find(Regime::Regularized),
    );
    verdict(
        "value-std ordering",
        reg < rand && rand < normal,
        &format!("regularized {reg:.3} < randomized {rand:.3} < normal {normal:.3} (5-seed medians)"),
    );
}

#[test]
#[ignore = "multi-hour cartpole battery; run with --release -- --ignored --nocapture"]
fn far_domain_extrapolation_fails() {
    let _guard = study_lock();
    let out = run_repro(ReproPreset::CartpoleExtrapolation, &out_root()).unwrap();
    let ReproSummary::CartpoleExtrapolation { regimes } = out.summary else {
        panic!("wrong summary variant")
    };

    let mut detail = String::new();
    let mut ok = true;
    for s in &regimes {
        let ratio = s.median_far_return / s.median_reference_return;
        ok &= ratio < 0.5;
        detail.push_str(&format!(
            "{:?}: far {:.1} / reference {:.1} = {:.2}; ",
            s.regime, s.median_far_return, s.median_reference_return, ratio
        ));
    }
    verdict(
        "extrapolation failure",
        ok && regimes.len() == 2,
        &format!("{detail}(each ratio must be < 0.5)"),
    );
}

// ---------------------------------------------------------------- tradeoff

#[test]
fn output_penalty_trades_return_for_invariance() {
    let out = run_repro(ReproPreset::OutputRegTradeoff, &out_root()).unwrap();
    let ReproSummary::OutputRegTradeoff { per_lambda } = out.summary else {
        panic!("wrong summary variant")
    };

    let lambdas: Vec<f64> = per_lambda.iter().map(|r| r.lambda).collect();
    assert_eq!(lambdas, vec![0.01, 0.1, 1.0, 10.0]);
    assert!(per_lambda.iter().all(|r| r.seeds == 10));

    let returns: Vec<f64> = per_lambda.iter().map(|r| r.median_final_return).collect();
    let tvs: Vec<f64> = per_lambda.iter().map(|r| r.median_policy_tv).collect();
    verdict(
        "output-penalty tradeoff",
        non_increasing(&returns) && non_increasing(&tvs),
        &format!(
            "median final return {returns:?} and median cross-domain policy TV {tvs:?} \
             both non-increasing over lambda {lambdas:?} (10-seed medians)"
        ),
    );
}

// ------------------------------------------------------------- determinism

const DET_CONFIG: &str = r#"
name = "determinism"
master_seed = 99
environment = "gridworld"

[agent]
regime = "regularized"
lambda = 0.5
episodes = 60

[analysis]
seeds = 2
eval_episodes = 5
"#;

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn artifacts_are_deterministic_and_checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let mut cfg = parse_config(DET_CONFIG).unwrap();
        cfg.out_dir = dir.path().join(sub);
        let manifest = run_train(&cfg).unwrap();
        assert!(
            manifest.all_ok(),
            "training failed: {:?}",
            manifest.failed_cells().collect::<Vec<_>>()
        );
        let eval = run_eval(&cfg, &manifest).unwrap();
        assert!(eval.errors.is_empty(), "eval errors: {:?}", eval.errors);
        run_bounds(&cfg, &manifest).unwrap();
        run_export(&cfg, &manifest).unwrap();
        (cfg, manifest)
    };
    let (ca, ma) = run("a");
    let (cb, mb) = run("b");

    assert!(ma.content_equals(&mb), "manifests differ beyond wall clock");
    assert_eq!(ma.config_hash, mb.config_hash);

    // Byte-identical artifacts across the two runs, wall-clock columns aside.
    // The resolved config records its own out_dir, the one line that rightly
    // differs between the two run directories.
    let mut compared = 0;
    let sans_out_dir = |p: &Path| {
        String::from_utf8(read(p))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("out_dir = "))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        sans_out_dir(&ca.out_dir.join("config.toml")),
        sans_out_dir(&cb.out_dir.join("config.toml")),
        "config.toml differs beyond out_dir"
    );
    assert_eq!(
        read(&ca.out_dir.join("bounds.json")),
        read(&cb.out_dir.join("bounds.json")),
        "bounds.json differs"
    );
    compared += 2;
    for cell in &ma.cells {
        let pair = |rel: &PathBuf| (ca.out_dir.join(rel), cb.out_dir.join(rel));
        let (a, b) = pair(cell.metrics.as_ref().unwrap());
        let strip = |p: &Path| csv_without_wall(&String::from_utf8(read(p)).unwrap());
        assert_eq!(strip(&a), strip(&b), "metrics differ for {}", cell.cell);
        let (a, b) = pair(cell.checkpoint.as_ref().unwrap());
        assert_eq!(read(&a), read(&b), "checkpoints differ for {}", cell.cell);
        for artifact in ["eval-xi_pair.csv", "features.csv"] {
            let rel = PathBuf::from(&cell.cell).join(artifact);
            let (a, b) = pair(&rel);
            assert_eq!(read(&a), read(&b), "{artifact} differs for {}", cell.cell);
            compared += 1;
        }
        compared += 2;
    }

    // Save/load round trip preserves forward outputs bit-exactly.
    let ck_path = ca.out_dir.join(ma.cells[0].checkpoint.as_ref().unwrap());
    let ck = load_checkpoint(&ck_path).unwrap();
    let observer = Observer::grid();
    let state = invar_rl::randomize::grid_state_sample()[0].clone();
    let obs = observer.apply(&Randomizer::XiTag(5.0), &state).unwrap();
    let before = ck.net.forward(&obs).unwrap().output().to_vec();

    let copy_path = dir.path().join("roundtrip.json");
    save_checkpoint(&copy_path, &ck).unwrap();
    let reloaded = load_checkpoint(&copy_path).unwrap();
    assert_eq!(ck.net, reloaded.net);
    assert_eq!(ck.provenance, reloaded.provenance);
    let after = reloaded.net.forward(&obs).unwrap().output().to_vec();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();

    // A second training of the same config must also be a manifest reload.
    let loaded = RunManifest::load(&ca.out_dir.join("manifest.json")).unwrap();
    assert!(loaded.content_equals(&ma));

    verdict(
        "determinism",
        bits(&before) == bits(&after),
        &format!(
            "{compared} artifacts byte-identical across independent runs; \
             checkpoint round trip forward outputs bit-exact"
        ),
    );
}
