use als_sensing::als::*;
use als_sensing::diagnostics::*;
use als_sensing::sensing::*;
use als_sensing::stream::*;
use rayon::prelude::*;

fn main() {
    // perp-decrease ratio distribution at n=64, m=12n
    let n = 64usize;
    let m = 12 * n;
    let mut ratios: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|t| {
            let trial_seed = derive_seed(&StreamKey::new(6001, Lane::Trial).trial(t));
            let dims = ProblemDims::new(n, n, m, 1).unwrap();
            let op = SensingOperator::build_dense(dims, StreamKey::new(trial_seed, Lane::Measurement));
            let u_star = sphere_sample(&StreamKey::new(trial_seed, Lane::Trial).matrix(0), n).unwrap();
            let v_star = sphere_sample(&StreamKey::new(trial_seed, Lane::Trial).matrix(1), n).unwrap();
            let y = op.forward_rank1(u_star.view(), v_star.view()).unwrap();
            let v = sphere_sample(&StreamKey::new(trial_seed, Lane::Init), n).unwrap();
            let u_half = ls_update_u(&op, &y, v.view()).unwrap();
            let vv = par_perp(v.view(), v_star.view());
            let uu = par_perp(u_half.view(), u_star.view());
            uu.perp_norm / vv.perp_norm
        })
        .collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("perp ratios: min={:.3} q25={:.3} med={:.3} q75={:.3} q95={:.3} max={:.3}",
        ratios[0], ratios[24], ratios[49], ratios[74], ratios[94], ratios[99]);

    // criterion 9 with v-side records only
    for (seed, n) in [(5001u64, 64usize), (5002, 128)] {
        let ok: usize = (0..20u64)
            .into_par_iter()
            .map(|t| {
                let trial_seed = derive_seed(&StreamKey::new(seed, Lane::Trial).trial(t));
                let m = 8 * 2 * n;
                let dims = ProblemDims::new(n, n, m, 1).unwrap();
                let op = SensingOperator::build_dense(dims, StreamKey::new(trial_seed, Lane::Measurement)).into_canonical();
                let aux = AuxiliaryOperator::build(&op, StreamKey::new(trial_seed, Lane::AuxResample)).unwrap();
                let v0 = sphere_sample(&StreamKey::new(trial_seed, Lane::Init), n).unwrap();
                let stop = StopRule::new(60, 1e-10, 0.0).unwrap();
                let coupling = coupled_run(&op, &aux, v0.view(), &stop).unwrap();
                usize::from(coupling.records.iter()
                    .filter(|r| r.phase1 && r.side == FactorSide::V)
                    .all(|r| r.satisfied))
            })
            .sum();
        println!("crit9 v-side only, n={n} seed={seed}: {ok}/20");
    }
}
