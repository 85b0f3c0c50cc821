//! Runtime invariant suites. Each check re-derives a documented property of
//! one module from scratch and reports pass/fail; the full level adds the
//! expensive statistical checks.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{self, Algorithm, NoiseModel, RunSettings, StepSchedule};
use crate::games::{self, ElFarolParams, HiddenGame};
use crate::merit;
use crate::numkit::{self, DenseMatrix};
use crate::repmaps::{MapSpec, ProductRepMap};
use crate::{flatten, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub millis: u128,
}

fn check(name: &str, body: impl FnOnce() -> (bool, String)) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = body();
    CheckResult { name: name.to_string(), passed, detail, millis: start.elapsed().as_millis() }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseMatrix::new(rows, cols, data).expect("finite draw")
}

/// Eigenvalues of a symmetric 2x2 or 3x3 matrix from the closed-form roots of
/// its characteristic polynomial; the independent oracle for the SVD.
pub fn eig_sym_characteristic(m: &DenseMatrix) -> Vec<f64> {
    let n = m.rows();
    assert!(n == m.cols() && (n == 2 || n == 3));
    if n == 2 {
        let (a, b, c, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
        let tr = a + d;
        let det = a * d - b * c;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        let mut eig = vec![(tr + disc) / 2.0, (tr - disc) / 2.0];
        eig.sort_by(|x, y| y.partial_cmp(x).expect("finite eigenvalues"));
        return eig;
    }
    // Trigonometric solution of the cubic for symmetric 3x3 matrices.
    let q = (m.get(0, 0) + m.get(1, 1) + m.get(2, 2)) / 3.0;
    let mut b = m.clone();
    for i in 0..3 {
        b.set(i, i, b.get(i, i) - q);
    }
    let p2: f64 = b.data().iter().map(|x| x * x).sum::<f64>() / 6.0;
    let p = p2.sqrt();
    if p == 0.0 {
        return vec![q, q, q];
    }
    let det_b = b.get(0, 0) * (b.get(1, 1) * b.get(2, 2) - b.get(1, 2) * b.get(2, 1))
        - b.get(0, 1) * (b.get(1, 0) * b.get(2, 2) - b.get(1, 2) * b.get(2, 0))
        + b.get(0, 2) * (b.get(1, 0) * b.get(2, 1) - b.get(1, 1) * b.get(2, 0));
    let r = (det_b / (2.0 * p * p * p)).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let mut eig = vec![
        q + 2.0 * p * phi.cos(),
        q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos(),
        q + 2.0 * p * (phi + 4.0 * std::f64::consts::PI / 3.0).cos(),
    ];
    eig.sort_by(|x, y| y.partial_cmp(x).expect("finite eigenvalues"));
    eig
}

fn suite_games() -> Vec<(HiddenGame, ProductRepMap)> {
    let n_small = 6;
    vec![
        (
            HiddenGame::matching_pennies(0.75).unwrap(),
            ProductRepMap::sample(&MapSpec::Mp, 2, 11).unwrap(),
        ),
        (
            HiddenGame::rock_paper_scissors(0.2).unwrap(),
            ProductRepMap::sample(&MapSpec::Rps, 2, 12).unwrap(),
        ),
        (
            HiddenGame::shapley(0.2, 0.5).unwrap(),
            ProductRepMap::sample(&MapSpec::Shapley, 2, 13).unwrap(),
        ),
        (
            HiddenGame::el_farol(
                ElFarolParams { n_players: n_small, capacity: 3, ..Default::default() },
                0.5,
            )
            .unwrap(),
            ProductRepMap::sample(&MapSpec::ElFarol, n_small, 14).unwrap(),
        ),
        (HiddenGame::kl_demo(), ProductRepMap::sample(&MapSpec::KlDemo, 1, 15).unwrap()),
    ]
}

fn svd_reconstruction(level: Level) -> CheckResult {
    check("numkit/svd-reconstruction", || {
        let trials = if matches!(level, Level::Full) { 400 } else { 120 };
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let (r, c) = (rng.random_range(1..=6), rng.random_range(1..=6));
            let m = random_matrix(&mut rng, r, c);
            let f = match numkit::svd(&m) {
                Ok(f) => f,
                Err(e) => return (false, format!("svd failed: {e}")),
            };
            let err = f.reconstruct().sub(&m).unwrap().max_abs() / (1.0 + f.sigma_max());
            worst = worst.max(err);
        }
        (worst <= 1e-10, format!("worst relative reconstruction error {worst:.2e}"))
    })
}

fn penrose_conditions(level: Level) -> CheckResult {
    check("numkit/penrose-conditions", || {
        let trials = if matches!(level, Level::Full) { 1000 } else { 300 };
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let (r, c) = (rng.random_range(1..=6), rng.random_range(1..=6));
            let m = random_matrix(&mut rng, r, c);
            let p = match numkit::pinv_default(&m) {
                Ok(p) => p,
                Err(e) => return (false, format!("pinv failed: {e}")),
            };
            let mp = m.matmul(&p).unwrap();
            let pm = p.matmul(&m).unwrap();
            let v = [
                mp.matmul(&m).unwrap().sub(&m).unwrap().max_abs(),
                pm.matmul(&p).unwrap().sub(&p).unwrap().max_abs(),
                mp.sub(&mp.transpose()).unwrap().max_abs(),
                pm.sub(&pm.transpose()).unwrap().max_abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            worst = worst.max(v);
        }
        (worst <= 1e-9, format!("{trials} matrices, worst Penrose violation {worst:.2e}"))
    })
}

fn pinv_involution() -> CheckResult {
    check("numkit/pinv-involution", || {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let n = rng.random_range(1..=5);
            let m = random_matrix(&mut rng, n, n);
            let f = numkit::svd(&m).unwrap();
            if f.sigma_min() < 1e-3 {
                continue;
            }
            let pp = numkit::pinv_default(&numkit::pinv_default(&m).unwrap()).unwrap();
            worst = worst.max(pp.sub(&m).unwrap().max_abs());
        }
        (worst <= 1e-8, format!("worst double-pinv deviation {worst:.2e}"))
    })
}

fn sigma_vs_char_poly() -> CheckResult {
    check("numkit/sigma-vs-characteristic-polynomial", || {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let n = if rng.random_range(0..2) == 0 { 2 } else { 3 };
            let m = random_matrix(&mut rng, n, n);
            let f = numkit::svd(&m).unwrap();
            let gram = m.transpose().matmul(&m).unwrap();
            for (s, e) in f.sigma.iter().zip(eig_sym_characteristic(&gram)) {
                worst = worst.max((s - e.max(0.0).sqrt()).abs());
            }
        }
        (worst <= 1e-8, format!("worst sigma mismatch {worst:.2e}"))
    })
}

fn jacobian_vs_fd(level: Level) -> CheckResult {
    check("repmaps/jacobian-vs-finite-differences", || {
        let points = if matches!(level, Level::Full) { 100 } else { 30 };
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        let mut worst = 0.0f64;
        for spec in [MapSpec::Mp, MapSpec::Rps, MapSpec::ElFarol, MapSpec::KlDemo] {
            let m = crate::repmaps::sample_map(&spec, 21).unwrap();
            for _ in 0..points {
                let x: Vec<f64> =
                    (0..m.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let j = m.jacobian(&x).unwrap();
                let fd = m.jacobian_fd(&x, 1e-5).unwrap();
                let rel = j.sub(&fd).unwrap().max_abs() / (1e-6 * (1.0 + j.max_abs()));
                worst = worst.max(rel);
            }
        }
        (worst <= 1.0, format!("worst error / tolerance ratio {worst:.3}"))
    })
}

fn head_output_invariants() -> CheckResult {
    check("repmaps/head-output-invariants", || {
        let mut rng = ChaCha8Rng::seed_from_u64(105);
        let soft = crate::repmaps::sample_map(&MapSpec::Rps, 31).unwrap();
        let sig = crate::repmaps::sample_map(&MapSpec::ElFarol, 32).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let z = soft.eval(&x).unwrap();
            if (z.iter().sum::<f64>() - 1.0).abs() > 1e-12 || z.iter().any(|&v| v <= 0.0) {
                return (false, format!("softmax output violated the simplex: {z:?}"));
            }
            let zs = sig.eval(&x).unwrap();
            if !(0.0 < zs[0] && zs[0] < 1.0) {
                return (false, format!("sigmoid output left (0,1): {}", zs[0]));
            }
            let pre: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let jh = crate::repmaps::Activation::Softmax.local_jacobian(&pre);
            for r in 0..3 {
                let s: f64 = (0..3).map(|c| jh.get(r, c)).sum();
                if s.abs() > 1e-12 {
                    return (false, format!("softmax derivative row sum {s:e}"));
                }
            }
        }
        (true, "softmax/sigmoid outputs and derivative row sums all in range".into())
    })
}

fn sampling_determinism() -> CheckResult {
    check("repmaps/sampling-determinism", || {
        for spec in [MapSpec::Mp, MapSpec::Rps, MapSpec::ElFarol] {
            let a = ProductRepMap::sample(&spec, 2, 77).unwrap();
            let b = ProductRepMap::sample(&spec, 2, 77).unwrap();
            for (pa, pb) in a.players().iter().zip(b.players()) {
                if pa.w1().data() != pb.w1().data() || pa.w2().data() != pb.w2().data() {
                    return (false, format!("spec {spec:?} resampled differently"));
                }
            }
        }
        (true, "identical seeds reproduce identical weights".into())
    })
}

fn stationarity_at_reference() -> CheckResult {
    check("games/stationarity-at-reference", || {
        let mut worst = 0.0f64;
        for (game, _) in suite_games() {
            let g = game.field(game.z_star()).unwrap();
            let t = game.project_tangent(&g);
            let n = crate::numkit::norm2(&flatten(&t));
            worst = worst.max(n);
        }
        (worst <= 1e-9, format!("worst tangent field norm at z*: {worst:.2e}"))
    })
}

fn fields_are_gradients(level: Level) -> CheckResult {
    check("games/fields-are-gradients", || {
        let points = if matches!(level, Level::Full) { 100 } else { 20 };
        let mut rng = ChaCha8Rng::seed_from_u64(106);
        let mut worst = 0.0f64;
        for (game, _) in suite_games() {
            if matches!(game.params(), games::GameParams::KlDemo) {
                continue; // interior-only field; covered by its own unit tests
            }
            for _ in 0..points {
                let z = game.sample_domain_point(&mut rng);
                let g = game.field(&z).unwrap();
                let h = 1e-6;
                for i in 0..game.n_players() {
                    for k in 0..z[i].len() {
                        let mut zp = z.clone();
                        zp[i][k] += h;
                        let mut zm = z.clone();
                        zm[i][k] -= h;
                        let fd = (game.scalar_loss(i, &zp).unwrap()
                            - game.scalar_loss(i, &zm).unwrap())
                            / (2.0 * h);
                        worst = worst.max((fd - g[i][k]).abs());
                    }
                }
            }
        }
        (worst <= 1e-7, format!("worst field vs loss-gradient deviation {worst:.2e}"))
    })
}

fn monotonicity_probes(level: Level) -> CheckResult {
    check("games/monotonicity-probes", || {
        let pairs = if matches!(level, Level::Full) { 1000 } else { 400 };
        let mp = HiddenGame::matching_pennies(0.75).unwrap();
        let (q, v) = games::monotonicity_probe(&mp, pairs, 200);
        if q < 0.75 - 1e-6 || v != 0 {
            return (false, format!("matching pennies quotient {q}"));
        }
        let rps = HiddenGame::rock_paper_scissors(0.2).unwrap();
        let (q, v) = games::monotonicity_probe(&rps, pairs, 201);
        if q < 0.2 - 1e-6 || v != 0 {
            return (false, format!("rock-paper-scissors quotient {q}"));
        }
        // The congestion coupling reduces the observed modulus below mu; the
        // field stays strongly monotone with a healthy margin.
        let ef = HiddenGame::el_farol(ElFarolParams::default(), 0.5).unwrap();
        let (q_ef, _) = games::monotonicity_probe(&ef, pairs.min(400), 202);
        if q_ef <= 0.2 {
            return (false, format!("el farol quotient {q_ef}"));
        }
        // Shapley at mu = 0.5: strongly monotone with modulus mu - 0.3606.
        let sh = HiddenGame::shapley(0.2, 0.5).unwrap();
        let (q_sh, _) = games::monotonicity_probe(&sh, pairs, 203);
        if q_sh <= 0.1 {
            return (false, format!("shapley quotient {q_sh}"));
        }
        (true, format!("quotients: MP ok, RPS ok, ElFarol {q_ef:.3}, Shapley {q_sh:.3}"))
    })
}

fn poisson_binomial_exact(level: Level) -> CheckResult {
    check("games/poisson-binomial-exact", || {
        let (max_n, vectors) = if matches!(level, Level::Full) { (12, 50) } else { (9, 15) };
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let mut worst = 0.0f64;
        for _ in 0..vectors {
            let n = rng.random_range(1..=max_n);
            let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
            for c in 0..=n + 1 {
                let dp = games::poisson_binomial_tail(&probs, c);
                let mut brute = 0.0;
                for mask in 0u32..(1 << n) {
                    if (mask.count_ones() as usize) < c {
                        continue;
                    }
                    let mut p = 1.0;
                    for (j, &pj) in probs.iter().enumerate() {
                        p *= if mask >> j & 1 == 1 { pj } else { 1.0 - pj };
                    }
                    brute += p;
                }
                worst = worst.max((dp - brute).abs());
            }
        }
        (worst <= 1e-12, format!("worst tail deviation from enumeration {worst:.2e}"))
    })
}

fn poisson_binomial_monotone() -> CheckResult {
    check("games/poisson-binomial-monotone", || {
        let mut rng = ChaCha8Rng::seed_from_u64(108);
        for _ in 0..50 {
            let n = rng.random_range(1..=10);
            let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
            for c in 1..=n {
                if games::poisson_binomial_tail(&probs, c)
                    > games::poisson_binomial_tail(&probs, c - 1) + 1e-15
                {
                    return (false, "tail increased in the threshold".into());
                }
            }
            let c = rng.random_range(1..=n);
            let base = games::poisson_binomial_tail(&probs, c);
            for k in 0..n {
                let mut bumped = probs.clone();
                bumped[k] = (bumped[k] + 0.05).min(1.0);
                if games::poisson_binomial_tail(&bumped, c) + 1e-15 < base {
                    return (false, "tail decreased in a probability".into());
                }
            }
        }
        (true, "tail monotone in threshold and probabilities".into())
    })
}

fn preconditioner_right_inverse() -> CheckResult {
    check("dynamics/preconditioner-right-inverse", || {
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        // Full row rank: J P J^T must be the identity.
        for _ in 0..50 {
            let j = random_matrix(&mut rng, 3, 5);
            let p = dynamics::precondition(&j).unwrap();
            let q = j.matmul(&p).unwrap().matmul(&j.transpose()).unwrap();
            let dev = q.sub(&DenseMatrix::identity(3)).unwrap().max_abs();
            if dev > 1e-9 {
                return (false, format!("right-inverse deviation {dev:e}"));
            }
        }
        // Rank-deficient softmax heads: J P J^T is the orthogonal projector
        // onto range(J).
        let maps = ProductRepMap::sample(&MapSpec::Rps, 2, 5).unwrap();
        for _ in 0..25 {
            let x: Profile =
                (0..2).map(|_| (0..5).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
            for j in maps.jacobians(&x).unwrap() {
                let p = dynamics::precondition(&j).unwrap();
                let q = j.matmul(&p).unwrap().matmul(&j.transpose()).unwrap();
                let sym = q.sub(&q.transpose()).unwrap().max_abs();
                let idem = q.matmul(&q).unwrap().sub(&q).unwrap().max_abs();
                let w: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                let jw = j.matvec(&w).unwrap();
                let qjw = q.matvec(&jw).unwrap();
                let fix = qjw.iter().zip(&jw).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if sym > 1e-9 || idem > 1e-9 || fix > 1e-9 {
                    return (
                        false,
                        format!("projector violation: sym {sym:e} idem {idem:e} fix {fix:e}"),
                    );
                }
            }
        }
        (true, "identity on full row rank, range projector otherwise".into())
    })
}

fn covariant_preconditioning() -> CheckResult {
    check("dynamics/covariant-preconditioning", || {
        let mut rng = ChaCha8Rng::seed_from_u64(110);
        let mut worst = 0.0f64;
        for (game, maps) in suite_games() {
            for _ in 0..25 {
                let x: Profile = maps
                    .input_dims()
                    .iter()
                    .map(|&d| (0..d).map(|_| rng.random_range(-0.8..0.8)).collect())
                    .collect();
                let z_hat = game.sample_domain_point(&mut rng);
                let z = maps.eval(&x).unwrap();
                let jacobians = maps.jacobians(&x).unwrap();
                let mut dev = 0.0f64;
                let mut scale = 0.0f64;
                for i in 0..game.n_players() {
                    let diff: Vec<f64> =
                        z[i].iter().zip(&z_hat[i]).map(|(a, b)| a - b).collect();
                    scale += diff.iter().map(|v| v * v).sum::<f64>();
                    let grad = jacobians[i].transpose().matvec(&diff).unwrap();
                    let p = dynamics::precondition(&jacobians[i]).unwrap();
                    let lhs = jacobians[i].matvec(&p.matvec(&grad).unwrap()).unwrap();
                    // Range projection of the energy difference.
                    let f = numkit::svd(&jacobians[i]).unwrap();
                    let cutoff = numkit::DEFAULT_RANK_TOL
                        * f.sigma_max()
                        * jacobians[i].rows().max(jacobians[i].cols()) as f64;
                    let mut proj = vec![0.0; diff.len()];
                    for (k, &s) in f.sigma.iter().enumerate() {
                        if s <= cutoff {
                            continue;
                        }
                        let coeff: f64 =
                            (0..diff.len()).map(|r| f.u.get(r, k) * diff[r]).sum();
                        for (r, pj) in proj.iter_mut().enumerate() {
                            *pj += coeff * f.u.get(r, k);
                        }
                    }
                    for k in 0..diff.len() {
                        dev = dev.max((lhs[k] - proj[k]).abs());
                    }
                }
                worst = worst.max(dev / (1.0 + scale.sqrt()));
            }
        }
        (worst <= 1e-8, format!("worst covariant identity deviation {worst:.2e}"))
    })
}

fn fixed_points() -> CheckResult {
    check("dynamics/fixed-points", || {
        let game = HiddenGame::matching_pennies(0.75).unwrap();
        let maps = ProductRepMap::sample(&MapSpec::Mp, 2, 33).unwrap();
        let x0: Profile = vec![vec![0.0], vec![0.0]];
        let mut state = dynamics::IterState::new(x0.clone(), &maps, 0).unwrap();
        for _ in 0..10 {
            dynamics::phgd_step(
                &mut state,
                &game,
                &maps,
                &StepSchedule::Constant(0.05),
                &NoiseModel::None,
            )
            .unwrap();
        }
        let moved = crate::profile_dist2(&state.x, &x0).sqrt();
        (moved <= 1e-12, format!("drift from the zero-field point {moved:.2e}"))
    })
}

fn noise_unbiasedness() -> CheckResult {
    check("dynamics/noise-unbiasedness", || {
        let game = HiddenGame::matching_pennies(0.75).unwrap();
        let maps = ProductRepMap::sample(&MapSpec::Mp, 2, 34).unwrap();
        let x: Profile = vec![vec![0.4], vec![-0.3]];
        let v = dynamics::control_field(&game, &maps, &x).unwrap();
        let sigma = 0.5;
        let draws = 100_000;
        let mut state = dynamics::IterState::new(x.clone(), &maps, 99).unwrap();
        let mut sums = [0.0f64; 2];
        for _ in 0..draws {
            let q = dynamics::stochastic_gradient(
                &mut state,
                &game,
                &maps,
                &NoiseModel::GaussianControl { sigma },
            )
            .unwrap();
            sums[0] += q[0][0] - v[0][0];
            sums[1] += q[1][0] - v[1][0];
        }
        let bound = 5.0 * sigma / (draws as f64).sqrt();
        let worst = sums.iter().map(|s| (s / draws as f64).abs()).fold(0.0, f64::max);
        (worst <= bound, format!("empirical noise mean {worst:.2e} vs bound {bound:.2e}"))
    })
}

fn flow_energy_monotone() -> CheckResult {
    check("dynamics/flow-energy-monotone", || {
        let configs = vec![
            (
                HiddenGame::matching_pennies(0.75).unwrap(),
                ProductRepMap::sample(&MapSpec::Mp, 2, 41).unwrap(),
                vec![vec![1.0], vec![-0.7]],
            ),
            (
                HiddenGame::rock_paper_scissors(0.2).unwrap(),
                ProductRepMap::sample(&MapSpec::Rps, 2, 42).unwrap(),
                vec![vec![0.3, -0.2, 0.4, 0.1, -0.5], vec![-0.1, 0.2, 0.3, -0.4, 0.2]],
            ),
        ];
        for (game, maps, x0) in configs {
            let flow = match dynamics::phgf_integrate(x0, &game, &maps, 1e-3, 5.0) {
                Ok(f) => f,
                Err(e) => return (false, format!("flow failed: {e}")),
            };
            for w in flow.energies.windows(2) {
                if w[1] > w[0] + 1e-10 {
                    return (false, format!("energy increased {} -> {}", w[0], w[1]));
                }
            }
        }
        (true, "energy nonincreasing along both flows".into())
    })
}

fn metric_nonnegativity() -> CheckResult {
    check("merit/metric-nonnegativity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        for (game, maps) in suite_games() {
            let x: Profile = maps
                .input_dims()
                .iter()
                .map(|&d| (0..d).map(|_| rng.random_range(-0.5..0.5)).collect())
                .collect();
            let z = maps.eval(&x).unwrap();
            if merit::energy_profiles(&z, game.z_star()) < 0.0
                || merit::tgap_latent(&z, &game).unwrap() < 0.0
                || merit::tgap_control(&x, &game, &maps).unwrap() < 0.0
            {
                return (false, "negative metric".into());
            }
            if merit::tgap_latent(game.z_star(), &game).unwrap() > 1e-9 {
                return (false, "tangent gap nonzero at z*".into());
            }
        }
        (true, "metrics nonnegative, zero at reference equilibria".into())
    })
}

fn tangent_gap_identifies_solutions() -> CheckResult {
    check("merit/tangent-gap-identifies-solutions", || {
        let mut rng = ChaCha8Rng::seed_from_u64(112);
        let games = [
            HiddenGame::matching_pennies(0.75).unwrap(),
            HiddenGame::rock_paper_scissors(0.2).unwrap(),
            HiddenGame::el_farol(
                ElFarolParams { n_players: 6, capacity: 3, ..Default::default() },
                0.5,
            )
            .unwrap(),
        ];
        for game in &games {
            if merit::tgap_latent(game.z_star(), game).unwrap() > 1e-9 {
                return (false, "gap nonzero at the solution".into());
            }
            let mut tested = 0;
            while tested < 100 {
                let z = game.sample_domain_point(&mut rng);
                if crate::profile_dist2(&z, game.z_star()).sqrt() < 1e-2 {
                    continue;
                }
                tested += 1;
                if merit::tgap_latent(&z, game).unwrap() <= 1e-6 {
                    return (false, format!("gap vanished away from z* at {z:?}"));
                }
            }
        }
        (true, "tangent gap zero exactly at solutions".into())
    })
}

fn sandwich_inequality() -> CheckResult {
    check("merit/sandwich-inequality", || {
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        for (game, maps) in suite_games() {
            for _ in 0..100 {
                let x: Profile = maps
                    .input_dims()
                    .iter()
                    .map(|&d| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                let (lo, mid, hi) = merit::sandwich_probe(&x, &game, &maps).unwrap();
                let slack = 1e-8 * (1.0 + mid.abs());
                if lo > mid + slack || mid > hi + slack {
                    return (
                        false,
                        format!("sandwich violated: {lo:e} <= {mid:e} <= {hi:e}"),
                    );
                }
            }
        }
        (true, "sigma_min * tgap <= ||V|| <= sigma_max * tgap at every probe".into())
    })
}

fn gap_monotone_in_samples() -> CheckResult {
    check("merit/gap-monotone-in-samples", || {
        let game = HiddenGame::rock_paper_scissors(0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(114);
        let z_hat = game.sample_domain_point(&mut rng);
        let mut prev = f64::NEG_INFINITY;
        for samples in [1, 8, 32, 128] {
            let g = merit::gap_restricted(&z_hat, &game, samples, 5, 55);
            if g < prev - 1e-15 {
                return (false, format!("gap shrank with more samples: {prev} -> {g}"));
            }
            prev = g;
        }
        (true, "gap estimate nondecreasing in the sample budget".into())
    })
}

fn template_residual_bounded() -> CheckResult {
    check("merit/template-residual-bounded", || {
        let game = HiddenGame::matching_pennies(0.75).unwrap();
        let maps = ProductRepMap::sample(&MapSpec::Mp, 2, 51).unwrap();
        let x0: Profile = vec![vec![1.25], vec![2.25]];
        let max_residual = |gamma: f64| -> f64 {
            let rec = dynamics::run(
                Algorithm::Phgd,
                &game,
                &maps,
                x0.clone(),
                &StepSchedule::Constant(gamma),
                &NoiseModel::None,
                0,
                &RunSettings {
                    max_iters: 2000,
                    record_template: true,
                    stop_tol: 0.0,
                    ..Default::default()
                },
            )
            .unwrap();
            merit::template_check(&rec, &game, game.z_star())
                .unwrap()
                .iter()
                .map(|t| t.r)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let r1 = max_residual(0.01);
        let r2 = max_residual(0.005);
        if !r1.is_finite() || !r2.is_finite() {
            return (false, format!("non-finite residuals: {r1} {r2}"));
        }
        let ratio = r1 / r2;
        if !(0.25..=4.0).contains(&ratio) {
            return (false, format!("step-halving ratio {ratio} outside [1/4, 4]"));
        }
        (true, format!("max residuals {r1:.3e} / {r2:.3e}, ratio {ratio:.2}"))
    })
}

/// Runs the invariant suites of every module and returns one row per check.
pub fn run_checks(level: Level) -> Vec<CheckResult> {
    let mut results = vec![
        svd_reconstruction(level),
        penrose_conditions(level),
        pinv_involution(),
        sigma_vs_char_poly(),
        jacobian_vs_fd(level),
        head_output_invariants(),
        sampling_determinism(),
        stationarity_at_reference(),
        fields_are_gradients(level),
        monotonicity_probes(level),
        poisson_binomial_exact(level),
        poisson_binomial_monotone(),
        preconditioner_right_inverse(),
        covariant_preconditioning(),
        fixed_points(),
        flow_energy_monotone(),
        metric_nonnegativity(),
        tangent_gap_identifies_solutions(),
        sandwich_inequality(),
        gap_monotone_in_samples(),
        template_residual_bounded(),
    ];
    if matches!(level, Level::Full) {
        results.push(noise_unbiasedness());
    }
    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let results = run_checks(Level::Quick);
        for r in &results {
            assert!(r.passed, "{} failed: {}", r.name, r.detail);
        }
        assert!(results.len() >= 20);
    }
}
