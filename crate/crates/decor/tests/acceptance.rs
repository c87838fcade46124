//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`) and
//! enforcing its runtime budget.

// negated comparisons are deliberate: a NaN mean must fail the criterion
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::time::{Duration, Instant};

use decor::accountant::{
    calibrate_binary_search, calibrate_closed_form, compose_and_convert, step_epsilon_bound,
    step_epsilon_exact, Adversary, NoiseConfig,
};
use decor::engine::{consensus_distance, run, Algorithm, SimConfig, StepsizeSpec};
use decor::graph::{
    algebraic_connectivity, build_topology, metropolis_weights, random_connected_graph,
    weight_heterogeneity, MixingMatrix, Topology,
};
use decor::noise::{correlated_noise_matrix, SeedSet};
use decor::problems::{
    logistic_problem, synthetic_least_squares, synthetic_libsvm_dataset, Problem,
};
use decor::rng::KeyedRng;
use decor::sweep::{run_sweep, SweepConfig, SweepGrids};

fn check(name: &str, budget: Duration, body: impl FnOnce() -> Result<(), String>) {
    let start = Instant::now();
    let result = body();
    let elapsed = start.elapsed();
    match &result {
        Ok(()) => println!("[{name}] PASS in {elapsed:.2?} (budget {budget:.0?})"),
        Err(msg) => println!("[{name}] FAIL in {elapsed:.2?}: {msg}"),
    }
    if let Err(msg) = result {
        panic!("{name}: {msg}");
    }
    assert!(
        elapsed <= budget,
        "{name} passed but exceeded its runtime budget: {elapsed:.2?} > {budget:.2?}"
    );
}

fn random_noise(rng: &mut KeyedRng) -> NoiseConfig {
    NoiseConfig::new(
        0.2 + 3.0 * rng.next_f64(),
        4.0 * rng.next_f64(),
        0.2 + 2.0 * rng.next_f64(),
    )
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn criterion_01_accountant_exactness_on_complete_graphs() {
    check(
        "criterion 1: accountant exactness",
        Duration::from_secs(1),
        || {
            let mut rng = KeyedRng::new(101);
            for n in [2usize, 4, 8, 16, 32] {
                let g = build_topology(Topology::Complete, n).unwrap();
                for _ in 0..50 {
                    let noise = random_noise(&mut rng);
                    let eps = step_epsilon_exact(&g, &noise, Adversary::Eavesdropper)
                        .map_err(|e| e.to_string())?;
                    let vc = noise.sigma_cdp * noise.sigma_cdp;
                    let vr = noise.sigma_cor * noise.sigma_cor;
                    let closed =
                        2.0 * noise.clip * noise.clip * (vc + vr) / (vc * (vc + n as f64 * vr));
                    if (eps - closed).abs() > 1e-10 * closed.max(1.0) {
                        return Err(format!("n = {n}: exact {eps} vs Sherman-Morrison {closed}"));
                    }
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_02_bound_dominates_exact() {
    check(
        "criterion 2: bound dominance",
        Duration::from_secs(5),
        || {
            let mut rng = KeyedRng::new(202);
            let kinds = [
                Topology::Ring,
                Topology::Grid2dTorus,
                Topology::Complete,
                Topology::Star,
            ];
            for kind in kinds {
                for n in [4usize, 8, 16] {
                    let g = build_topology(kind, n).unwrap();
                    for _ in 0..20 {
                        let noise = random_noise(&mut rng);
                        for adv in [Adversary::Eavesdropper, Adversary::CuriousUsers] {
                            let exact =
                                step_epsilon_exact(&g, &noise, adv).map_err(|e| e.to_string())?;
                            let bound =
                                step_epsilon_bound(&g, &noise, adv).map_err(|e| e.to_string())?;
                            if bound < exact - 1e-10 * exact.max(1.0) {
                                return Err(format!(
                                    "{}:{n} {adv:?}: bound {bound} < exact {exact}",
                                    kind.name()
                                ));
                            }
                            if kind == Topology::Complete
                                && adv == Adversary::Eavesdropper
                                && (bound - exact).abs() > 1e-10 * exact.max(1.0)
                            {
                                return Err(format!(
                                    "complete:{n}: bound {bound} != exact {exact}"
                                ));
                            }
                        }
                    }
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_03_hand_computed_ring_anchors() {
    check(
        "criterion 3: hand-computed anchors",
        Duration::from_secs(1),
        || {
            let g = build_topology(Topology::Ring, 4).unwrap();
            let noise = NoiseConfig::new(1.0, 1.0, 1.0);
            let eaves = step_epsilon_exact(&g, &noise, Adversary::Eavesdropper)
                .map_err(|e| e.to_string())?;
            if (eaves - 14.0 / 15.0).abs() > 1e-10 {
                return Err(format!("eavesdropper: {eaves} != 14/15"));
            }
            let curious = step_epsilon_exact(&g, &noise, Adversary::CuriousUsers)
                .map_err(|e| e.to_string())?;
            if (curious - 1.25).abs() > 1e-10 {
                return Err(format!("curious users: {curious} != 5/4"));
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_04_calibration_round_trips() {
    check(
        "criterion 4: calibration round-trip",
        Duration::from_secs(10),
        || {
            // binary search recovers a planted sigma_cor on random graphs
            let mut rng = KeyedRng::new(404);
            for trial in 0..50u64 {
                let n = 4 + (trial % 9) as usize;
                let g = random_connected_graph(n, 0.3, 1000 + trial);
                let sigma_cdp = 0.3 + 2.0 * rng.next_f64();
                let clip = 0.3 + 2.0 * rng.next_f64();
                let planted = 0.2 + 20.0 * rng.next_f64();
                let noise = NoiseConfig::new(sigma_cdp, planted, clip);
                let target = step_epsilon_exact(&g, &noise, Adversary::Eavesdropper)
                    .map_err(|e| e.to_string())?;
                let found = calibrate_binary_search(
                    &g,
                    sigma_cdp,
                    clip,
                    target,
                    Adversary::Eavesdropper,
                    None,
                )
                .map_err(|e| e.to_string())?;
                if (found - planted).abs() > 1e-5 * planted {
                    return Err(format!(
                        "trial {trial}: planted {planted}, recovered {found} (n = {n})"
                    ));
                }
            }

            // closed-form calibration composes back under the target budget
            let (steps, delta) = (1000usize, 1e-5);
            for kind in [
                Topology::Ring,
                Topology::Grid2dTorus,
                Topology::Complete,
                Topology::Star,
            ] {
                for n in [4usize, 16] {
                    let g = build_topology(kind, n).unwrap();
                    for eps_target in [1.0, 3.0, 10.0] {
                        for adv in [Adversary::Eavesdropper, Adversary::CuriousUsers] {
                            let result =
                                calibrate_closed_form(&g, adv, 1.0, steps, eps_target, delta);
                            if kind == Topology::Star && adv == Adversary::CuriousUsers {
                                // deleting the hub disconnects the star
                                match result {
                                    Err(e) if e.code() == "graph-not-sufficiently-connected" => {
                                        continue
                                    }
                                    other => {
                                        return Err(format!(
                                        "star + curious should fail connectivity, got {other:?}"
                                    ))
                                    }
                                }
                            }
                            let cal = result.map_err(|e| e.to_string())?;
                            let eps_step = step_epsilon_exact(&g, &cal.noise, adv)
                                .map_err(|e| e.to_string())?;
                            let achieved = compose_and_convert(eps_step, steps, delta)
                                .map_err(|e| e.to_string())?;
                            if achieved > eps_target * (1.0 + 1e-12) {
                                return Err(format!(
                                    "{}:{n} {adv:?} target {eps_target}: achieved {achieved}",
                                    kind.name()
                                ));
                            }
                        }
                    }
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_05_noise_reduction_lemma() {
    check(
        "criterion 5: noise-reduction lemma",
        Duration::from_secs(30),
        || {
            let (d, sigma, trials) = (8usize, 1.0f64, 10_000u64);
            for kind in [Topology::Ring, Topology::Grid2dTorus, Topology::Complete] {
                let g = build_topology(kind, 16).unwrap();
                let w = metropolis_weights(&g);
                let h = weight_heterogeneity(&g, &w).unwrap();
                let seeds = SeedSet::from_master(505, &g);
                let mut frob_nw = 0.0;
                let mut frob_n = 0.0;
                for round in 0..trials {
                    let n_mat = correlated_noise_matrix(&seeds, &g, round, d, sigma).unwrap();
                    frob_n += n_mat.norm_squared();
                    frob_nw += (&n_mat * w.matrix()).norm_squared();
                }
                let denom = 2.0 * g.edge_count() as f64 * d as f64 * sigma * sigma;
                let reduction = frob_nw / (trials as f64 * denom);
                if (reduction - h).abs() > 0.03 * h + 1e-12 {
                    return Err(format!(
                        "{}: E||NW||^2/(2|E|d sigma^2) = {reduction} vs h = {h}",
                        kind.name()
                    ));
                }
                let mean_n = frob_n / trials as f64;
                if (mean_n - denom).abs() > 0.03 * denom {
                    return Err(format!("{}: E||N||^2 = {mean_n} vs {denom}", kind.name()));
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_06_exact_cancellation_cdp_equivalence() {
    check(
        "criterion 6: CDP equivalence on complete graph",
        Duration::from_secs(10),
        || {
            let g = build_topology(Topology::Complete, 16).unwrap();
            let w = MixingMatrix::uniform(16);
            let problem = synthetic_least_squares(16, 10, 3);
            let steps = 500usize;
            let decor_cfg = SimConfig {
                algorithm: Algorithm::Decor,
                steps,
                stepsize: StepsizeSpec::Constant(0.02),
                noise: NoiseConfig::new(0.5, 2.0, 1.0),
                master_seed: 606,
                init_scale: 0.0,
                loss_gap: None,
                batch_size: 1,
            };
            let cdp_cfg = SimConfig {
                algorithm: Algorithm::CdpBaseline,
                noise: NoiseConfig::new(0.5, 0.0, 1.0),
                ..decor_cfg.clone()
            };
            let a = run(&problem, &g, &w, &decor_cfg).map_err(|e| e.to_string())?;
            let b = run(&problem, &g, &w, &cdp_cfg).map_err(|e| e.to_string())?;
            for (ra, rb) in a.trace.rows.iter().zip(&b.trace.rows) {
                if !rel_close(ra.loss, rb.loss, 1e-12)
                    || !rel_close(ra.grad_norm_sq, rb.grad_norm_sq, 1e-12)
                    || !rel_close(ra.consensus, rb.consensus, 1e-12)
                {
                    return Err(format!(
                        "round {}: ({}, {}, {}) vs ({}, {}, {})",
                        ra.round,
                        ra.loss,
                        ra.grad_norm_sq,
                        ra.consensus,
                        rb.loss,
                        rb.grad_norm_sq,
                        rb.consensus
                    ));
                }
            }
            for i in 0..16 {
                for k in 0..10 {
                    if !rel_close(a.final_models[i][k], b.final_models[i][k], 1e-12) {
                        return Err(format!("final model mismatch at user {i} coordinate {k}"));
                    }
                }
            }
            Ok(())
        },
    );
}

fn mean_final_loss(rows: &[decor::sweep::SweepRow], algorithm: &str, epsilon: f64) -> f64 {
    let losses: Vec<f64> = rows
        .iter()
        .filter(|r| r.algorithm == algorithm && r.epsilon == epsilon)
        .map(|r| r.final_loss)
        .collect();
    assert!(!losses.is_empty());
    losses.iter().sum::<f64>() / losses.len() as f64
}

#[test]
fn criterion_07_privacy_utility_tradeoff() {
    check(
        "criterion 7: privacy-utility trade-off",
        Duration::from_secs(300),
        || {
            let epsilons = [3.0, 10.0, 30.0];
            let cfg = SweepConfig {
                epsilons: epsilons.to_vec(),
                delta: 1e-5,
                steps: 2000,
                seeds: vec![1, 2, 3, 4],
                adversary: Adversary::Eavesdropper,
                grids: SweepGrids {
                    etas: vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.05],
                    clips: vec![0.3, 1.0],
                    sigma_cdp_candidates: 8,
                },
                ..SweepConfig::default()
            };
            let problem = synthetic_least_squares(16, 10, 0);
            for kind in [Topology::Ring, Topology::Grid2dTorus, Topology::Complete] {
                let g = build_topology(kind, 16).unwrap();
                let w = metropolis_weights(&g);
                let rows = run_sweep(&problem, &g, &w, kind.name(), &cfg);
                for &eps in &epsilons {
                    let decor_loss = mean_final_loss(&rows, "decor", eps);
                    let ldp_loss = mean_final_loss(&rows, "ldp", eps);
                    let cdp_loss = mean_final_loss(&rows, "cdp", eps);
                    if !(decor_loss <= ldp_loss) {
                        return Err(format!(
                            "{} eps = {eps}: decor {decor_loss} > ldp {ldp_loss}",
                            kind.name()
                        ));
                    }
                    if kind != Topology::Ring && !(decor_loss <= 2.0 * cdp_loss) {
                        return Err(format!(
                            "{} eps = {eps}: decor {decor_loss} > 2x cdp {cdp_loss}",
                            kind.name()
                        ));
                    }
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_08_spectral_identities() {
    check(
        "criterion 8: spectral identities",
        Duration::from_secs(10),
        || {
            for n in 3..=32usize {
                let g = build_topology(Topology::Ring, n).unwrap();
                let a = algebraic_connectivity(&g).map_err(|e| e.to_string())?;
                let closed = 2.0 * (1.0 - (std::f64::consts::TAU / n as f64).cos());
                if (a - closed).abs() > 1e-9 {
                    return Err(format!("ring {n}: {a} vs closed form {closed}"));
                }
            }
            for seed in 0..100u64 {
                let n = 3 + (seed % 20) as usize;
                let g = random_connected_graph(n, 0.3, 7000 + seed);
                let w = metropolis_weights(&g);
                let h = weight_heterogeneity(&g, &w).unwrap();
                let cap = 2.0 / g.min_degree() as f64;
                if h > cap + 1e-12 {
                    return Err(format!("seed {seed}: h = {h} > 2/k_min = {cap}"));
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_09_gradient_correctness() {
    check(
        "criterion 9: gradient correctness",
        Duration::from_secs(10),
        || {
            // logistic gradients against central finite differences
            let data = synthetic_libsvm_dataset(80, 8, 909);
            let p = logistic_problem(&data, 1e-3, 8, 1).unwrap();
            let mut rng = KeyedRng::new(909);
            let h = 1e-6;
            for trial in 0..20 {
                let user = trial % 8;
                let sample = rng.next_index(p.sample_count(user));
                let x: Vec<f64> = (0..8).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
                let grad = p.sample_gradient(user, sample, &x);
                for k in 0..8 {
                    let mut hi = x.clone();
                    let mut lo = x.clone();
                    hi[k] += h;
                    lo[k] -= h;
                    let fd = (p.sample_loss(user, sample, &hi) - p.sample_loss(user, sample, &lo))
                        / (2.0 * h);
                    if (fd - grad[k]).abs() > 1e-6 * grad[k].abs().max(1.0) {
                        return Err(format!(
                            "trial {trial} coordinate {k}: finite difference {fd} vs analytic {}",
                            grad[k]
                        ));
                    }
                }
            }

            // least-squares closed-form minimizer beats random points
            let ls = synthetic_least_squares(16, 10, 909);
            let x_star = ls.minimizer().unwrap();
            let f_star = ls.global_loss(&x_star);
            for _ in 0..100 {
                let x: Vec<f64> = (0..10).map(|_| 6.0 * rng.next_f64() - 3.0).collect();
                if ls.global_loss(&x) < f_star {
                    return Err("random point beats the closed-form minimizer".into());
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_10_pl_schedule_convergence_sanity() {
    check(
        "criterion 10: PL-schedule convergence sanity",
        Duration::from_secs(60),
        || {
            let g = build_topology(Topology::Ring, 16).unwrap();
            let w = metropolis_weights(&g);
            let problem = synthetic_least_squares(16, 10, 0);
            let steps = 2000usize;
            let cal = calibrate_closed_form(&g, Adversary::Eavesdropper, 1.0, steps, 10.0, 1e-5)
                .map_err(|e| e.to_string())?;
            let cfg = SimConfig {
                algorithm: Algorithm::Decor,
                steps,
                stepsize: StepsizeSpec::PlSchedule,
                noise: cal.noise,
                master_seed: 1010,
                init_scale: 0.0,
                loss_gap: None,
                batch_size: 1,
            };
            let out = run(&problem, &g, &w, &cfg).map_err(|e| e.to_string())?;
            let rows = &out.trace.rows;

            let loss_at_tenth = rows[steps / 10].loss;
            let tail: Vec<f64> = rows[steps - steps / 10..].iter().map(|r| r.loss).collect();
            let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
            if !(tail_mean < loss_at_tenth) {
                return Err(format!(
                    "tail mean {tail_mean} not below loss at round T/10 = {loss_at_tenth}"
                ));
            }

            let consensus_at_10 = rows[10].consensus;
            for r in rows {
                if r.consensus > 1e3 * consensus_at_10 {
                    return Err(format!(
                        "round {}: consensus {} exceeds 1e3 x round-10 value {consensus_at_10}",
                        r.round, r.consensus
                    ));
                }
            }
            let _ = consensus_distance(&out.final_models);
            Ok(())
        },
    );
}
