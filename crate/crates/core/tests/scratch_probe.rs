use phgd::dynamics::*;
use phgd::games::{ElFarolParams, HiddenGame};
use phgd::repmaps::{MapSpec, ProductRepMap};
use phgd::ratefit::percentile;
use phgd::sweep::run_many;

#[test]
#[ignore]
fn probe_mp_flow_seeds() {
    let game = HiddenGame::matching_pennies(0.75).unwrap();
    for seed in 30..42u64 {
        let maps = ProductRepMap::sample(&MapSpec::Mp, 2, seed).unwrap();
        let w: Vec<f64> = maps.players().iter().flat_map(|p| [p.w1().get(0,0), p.w2().get(0,0)]).collect();
        let x0 = vec![vec![1.25], vec![2.25]];
        match phgf_integrate(x0, &game, &maps, 1e-3, 50.0) {
            Ok(f) => {
                let mono = f.energies.windows(2).all(|p| p[1] <= p[0] + 1e-10);
                println!("seed {seed}: w={w:?} mono={mono} final={:.2e}", f.final_err);
            }
            Err(e) => println!("seed {seed}: w={w:?} FAILED {e}"),
        }
    }
}

#[test]
#[ignore]
fn probe_elfarol_init_range() {
    let ef = HiddenGame::el_farol(ElFarolParams::default(), 0.5).unwrap();
    for range in [1.0f64, 1.5, 2.0, 2.5] {
        for alg in [Algorithm::Phgd, Algorithm::Gd] {
            let seeds: Vec<u64> = (0..20).collect();
            let recs: Vec<_> = run_many(&seeds, |&seed| {
                let maps = ProductRepMap::sample(&MapSpec::ElFarol, 30, 1000 + seed).unwrap();
                let x0 = sample_init(&maps, range, 2000 + seed);
                run(alg, &ef, &maps, x0, &StepSchedule::Constant(0.01), &NoiseModel::None, seed,
                    &RunSettings { max_iters: 10_000, stop_tol: -1.0, record_every: 50, ..Default::default() }).unwrap()
            });
            let finals: Vec<f64> = recs.iter().map(|r| r.final_err()).collect();
            let med = percentile(&finals, 0.5);
            // plateau statistic for this alg
            let curve: Vec<(u64, f64)> = (0..=200u64).map(|k| {
                let n = k * 50;
                let vals: Vec<f64> = recs.iter().filter_map(|r| r.rows.iter().find(|row| row.n == n).map(|row| row.err)).collect();
                (n, percentile(&vals, 0.5))
            }).collect();
            let q = |lo: f64, hi: f64| {
                let vals: Vec<f64> = curve.iter().filter(|(n, _)| { let t = *n as f64 / 10_000.0; t >= lo && t < hi }).map(|(_, e)| *e).collect();
                percentile(&vals, 0.5)
            };
            println!("range {range} {:?}: median_final={med:.3e} mid={:.3e} last={:.3e} last/mid={:.3}",
                alg, q(0.375, 0.625), q(0.75, 1.01), q(0.75, 1.01)/q(0.375, 0.625));
        }
    }
}
