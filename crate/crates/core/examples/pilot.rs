// Calibration pilot (temporary; not part of the deliverable).
use als_sensing::als::*;
use als_sensing::diagnostics::*;
use als_sensing::experiments::*;
use als_sensing::init::InitKind;
use als_sensing::sensing::*;
use als_sensing::stream::*;
use rayon::prelude::*;
use std::time::Instant;

fn crit4_5(seed: u64) {
    let t0 = Instant::now();
    let trials = 100u64;
    let results: Vec<(bool, f64, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let job = TrajectoryJob {
                m: Some(384),
                oversampling: None,
                stop: Some(StopRule::new(50, 0.0, 1e-6).unwrap()),
                seed: derive_seed(&StreamKey::new(seed, Lane::Trial).trial(t)),
                ..TrajectoryJob::new(64, 64, 0)
            };
            let run = run_trajectory(&job).unwrap();
            let ok = run
                .trajectory
                .records
                .iter()
                .any(|r| r.t <= 50 && r.sin_v <= 1e-6);
            // criterion 5: once cos >= 0.9, contraction ratio of sin per iteration
            let mut max_ratio: f64 = 0.0;
            let mut started = false;
            let mut prev_sin = f64::NAN;
            for r in &run.trajectory.records {
                if started && !prev_sin.is_nan() && prev_sin > 0.0 {
                    max_ratio = max_ratio.max(r.sin_v / prev_sin);
                }
                if r.cos_v >= 0.9 {
                    started = true;
                }
                prev_sin = r.sin_v;
            }
            // iterations to cos >= 0.9
            let it09 = run
                .trajectory
                .records
                .iter()
                .find(|r| r.cos_v >= 0.9)
                .map(|r| r.t)
                .unwrap_or(999);
            (ok, if ok { max_ratio } else { f64::NAN }, it09)
        })
        .collect();
    let succ = results.iter().filter(|r| r.0).count();
    let worst_ratio = results
        .iter()
        .filter(|r| r.0)
        .map(|r| r.1)
        .fold(0.0f64, f64::max);
    println!(
        "crit4 seed={seed}: {}/{} success, worst phase-2 ratio {:.4}, elapsed {:?}",
        succ,
        trials,
        worst_ratio,
        t0.elapsed()
    );
}

fn crit6(seed: u64) {
    let t0 = Instant::now();
    for n in [16usize, 32, 64, 128] {
        let trials = 30u64;
        let mut iters: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let job = TrajectoryJob {
                    oversampling: Some(3.0),
                    stop: Some(StopRule::new(200, 0.0, 1e-8).unwrap()),
                    seed: derive_seed(&StreamKey::new(seed + n as u64, Lane::Trial).trial(t)),
                    ..TrajectoryJob::new(n, n, 0)
                };
                let run = run_trajectory(&job).unwrap();
                run.trajectory
                    .records
                    .iter()
                    .find(|r| r.cos_v >= 0.9)
                    .map(|r| r.t as f64)
                    .unwrap_or(f64::NAN)
            })
            .collect();
        let med = median(&mut iters);
        let lnn = (n as f64).ln();
        let bound = 4.0 * lnn / lnn.ln() + 10.0;
        println!("crit6 n={n}: median iters to cos>=0.9 = {med}, bound {bound:.1}");
    }
    println!("crit6 elapsed {:?}", t0.elapsed());
}

fn crit7(seed: u64, trials: usize) {
    let t0 = Instant::now();
    for init in [InitKind::RandomSphere, InitKind::Spectral] {
        let mut cfg = ExperimentConfig::desk_scale(seed, init);
        cfg.trials = trials;
        let result = run_sweep(&cfg).unwrap();
        println!("== init {} ({trials} trials) ==", init.label());
        for c in &result.cells {
            print!("n={:3} os={:.2}: {:.2} | ", c.n, c.oversampling, c.success_frac);
            if c.oversampling == 3.0 {
                println!();
            }
        }
    }
    println!("crit7 elapsed {:?}", t0.elapsed());
}

fn crit8(seed: u64) {
    let t0 = Instant::now();
    let trials = 50u64;
    let succ: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let job = TrajectoryJob {
                rank: 5,
                oversampling: Some(2.0),
                stop: Some(StopRule::new(60, 0.0, 1e-6).unwrap()),
                seed: derive_seed(&StreamKey::new(seed, Lane::Trial).trial(t)),
                ..TrajectoryJob::new(64, 64, 0)
            };
            let run = run_rank_r_trajectory(&job).unwrap();
            usize::from(
                run.trajectory
                    .records
                    .iter()
                    .any(|r| r.t <= 60 && r.sin_v <= 1e-6),
            )
        })
        .sum();
    println!("crit8 (rank5 n=64 m={}): {succ}/{trials} success, elapsed {:?}",
        measurements_for(2.0, 64, 64, 5), t0.elapsed());
}

fn crit9(seed: u64, n: usize, os: f64, runs: u64) {
    let t0 = Instant::now();
    let ok: usize = (0..runs)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(&StreamKey::new(seed, Lane::Trial).trial(t));
            let m = (os * (2 * n) as f64) as usize;
            let dims = ProblemDims::new(n, n, m, 1).unwrap();
            let op = SensingOperator::build_dense(dims, StreamKey::new(trial_seed, Lane::Measurement))
                .into_canonical();
            let aux = AuxiliaryOperator::build(&op, StreamKey::new(trial_seed, Lane::AuxResample))
                .unwrap();
            let v0 = sphere_sample(&StreamKey::new(trial_seed, Lane::Init), n).unwrap();
            let stop = StopRule::new(60, 1e-10, 0.0).unwrap();
            let coupling = coupled_run(&op, &aux, v0.view(), &stop).unwrap();
            let all_phase1_ok = coupling
                .records
                .iter()
                .filter(|r| r.phase1)
                .all(|r| r.satisfied);
            let p1 = coupling.records.iter().filter(|r| r.phase1).count();
            let viol = coupling.records.iter().filter(|r| r.phase1 && !r.satisfied).count();
            if viol > 0 {
                eprintln!("  run {t}: {viol}/{p1} phase-1 records violated");
            }
            usize::from(all_phase1_ok)
        })
        .sum();
    println!("crit9 n={n} os={os}: {ok}/{runs} coupled runs fully satisfied, elapsed {:?}", t0.elapsed());
}

fn perp_decrease_mc(seed: u64) {
    let n = 64usize;
    let m = 12 * n;
    let trials = 100u64;
    let ok: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(&StreamKey::new(seed, Lane::Trial).trial(t));
            let dims = ProblemDims::new(n, n, m, 1).unwrap();
            let op = SensingOperator::build_dense(dims, StreamKey::new(trial_seed, Lane::Measurement));
            let u_star = sphere_sample(&StreamKey::new(trial_seed, Lane::Trial).matrix(0), n).unwrap();
            let v_star = sphere_sample(&StreamKey::new(trial_seed, Lane::Trial).matrix(1), n).unwrap();
            let y = op.forward_rank1(u_star.view(), v_star.view()).unwrap();
            let truth = GroundTruth::rank1(u_star.clone(), v_star.clone());
            let v = sphere_sample(&StreamKey::new(trial_seed, Lane::Init), n).unwrap();
            let u_half = ls_update_u(&op, &y, v.view()).unwrap();
            let vv = par_perp(v.view(), v_star.view());
            let uu = par_perp(u_half.view(), u_star.view());
            let _ = truth;
            usize::from(uu.perp_norm / vv.perp_norm <= 0.25)
        })
        .sum();
    println!("perp_decrease n={n} m={m}: {ok}/{trials} with ratio <= 0.25");
}

fn recursion_mc(seed: u64) {
    let n = 64usize;
    let m = 12 * n;
    let trials = 50u64;
    let results: Vec<(bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(&StreamKey::new(seed, Lane::Trial).trial(t));
            let dims = ProblemDims::new(n, n, m, 1).unwrap();
            let op = SensingOperator::build_dense(dims, StreamKey::new(trial_seed, Lane::Measurement));
            let rip = estimate_rip(&op, 100, &StreamKey::new(trial_seed, Lane::Trial).matrix(50)).unwrap();
            let delta = rip.estimate.delta_hat;
            let u_star = sphere_sample(&StreamKey::new(trial_seed, Lane::Trial).matrix(0), n).unwrap();
            let v_star = sphere_sample(&StreamKey::new(trial_seed, Lane::Trial).matrix(1), n).unwrap();
            let y = op.forward_rank1(u_star.view(), v_star.view()).unwrap();
            let truth = GroundTruth::rank1(u_star.clone(), v_star.clone());
            let v0 = sphere_sample(&StreamKey::new(trial_seed, Lane::Init), n).unwrap();
            let stop = StopRule::new(50, 0.0, 1e-8).unwrap();
            let boundary = 1.0 / (n as f64).ln();
            let mut all_ok = true;
            let mut prev_v = v0.clone();
            let out = als_run_observed(
                &op,
                &y,
                &v0.clone().insert_axis(ndarray::Axis(1)),
                &stop,
                Some(&truth),
                |state| {
                    let vp_view = par_perp(prev_v.view(), v_star.view());
                    if vp_view.parallel_norm < boundary {
                        // phase-1 iteration: check the recursion flags
                        let u1 = state.u.column(0);
                        let u1_view = par_perp(u1, u_star.view());
                        let alpha = 0.25;
                        let beta = (4.0 * delta * delta).min(alpha * 0.999);
                        if let Ok(check) = check_convergence_recursion(
                            alpha,
                            beta,
                            vp_view.parallel_norm,
                            vp_view.perp_norm,
                            u1_view.parallel_norm,
                            u1_view.perp_norm,
                        ) {
                            if !(check.lower_satisfied && check.upper_satisfied) {
                                all_ok = false;
                            }
                        }
                    }
                    prev_v = state.v.column(0).to_owned();
                },
            )
            .unwrap();
            let _ = out;
            (all_ok, delta)
        })
        .collect();
    let ok = results.iter().filter(|r| r.0).count();
    let mean_delta: f64 = results.iter().map(|r| r.1).sum::<f64>() / trials as f64;
    println!("recursion_mc n={n} m={m}: {ok}/{trials} all-phase1-ok, mean delta_hat {mean_delta:.3}");
}

fn lemma3_mc(seed: u64) {
    let n = 64usize;
    let m = 4096usize;
    let seeds = 50u64;
    let ok: usize = (0..seeds)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(&StreamKey::new(seed, Lane::Trial).trial(t));
            let dims = ProblemDims::new(n, n, m, 1).unwrap();
            let op = SensingOperator::build_dense(dims, StreamKey::new(trial_seed, Lane::Measurement))
                .into_canonical();
            let aux = AuxiliaryOperator::build(&op, StreamKey::new(trial_seed, Lane::AuxResample)).unwrap();
            let v0 = sphere_sample(&StreamKey::new(trial_seed, Lane::Init), n).unwrap();
            let stop = StopRule::new(1, 0.0, 0.0).unwrap();
            let coupling = coupled_run(&op, &aux, v0.view(), &stop).unwrap();
            let cfg = DiagConfig::new(1, n as f64).unwrap();
            let rows = check_concentration_bounds(&op, &aux, &coupling, &cfg).unwrap();
            let e1_rows: Vec<_> = rows.iter().filter(|r| r.name.starts_with("cross_e1_sum")).collect();
            usize::from(e1_rows.iter().all(|r| r.satisfied))
        })
        .sum();
    println!("lemma3 n={n} m={m}: {ok}/{seeds} within 4 sqrt(n1/m)");
}

fn main() {
    let which: Vec<String> = std::env::args().skip(1).collect();
    let all = which.is_empty();
    let has = |s: &str| all || which.iter().any(|w| w == s);
    if has("crit4") {
        crit4_5(1001);
    }
    if has("crit6") {
        crit6(2001);
    }
    if has("crit7") {
        crit7(3001, which.iter().find_map(|w| w.parse().ok()).unwrap_or(15));
    }
    if has("crit8") {
        crit8(4001);
    }
    if has("crit9") {
        crit9(5001, 64, 8.0, 20);
        crit9(5002, 128, 8.0, 20);
    }
    if has("perp") {
        perp_decrease_mc(6001);
    }
    if has("recursion") {
        recursion_mc(7001);
    }
    if has("lemma3") {
        lemma3_mc(8001);
    }
}
