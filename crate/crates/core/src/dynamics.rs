//! The discrete recursions (preconditioned, plain, and scalar-preconditioned
//! gradient descent), the continuous preconditioned flow, step-size
//! schedules, and the stochastic gradient oracle.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::games::HiddenGame;
use crate::merit;
use crate::numkit::{self, DenseMatrix};
use crate::repmaps::ProductRepMap;
use crate::Profile;

/// Step-size sequences; the counter `n` starts at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `gamma_n = gamma0 / sqrt(n)`.
    InvSqrt(f64),
    /// `gamma_n = gamma / n`.
    Harmonic(f64),
}

impl StepSchedule {
    pub fn gamma(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        match self {
            StepSchedule::Constant(g) => *g,
            StepSchedule::InvSqrt(g0) => g0 / (n as f64).sqrt(),
            StepSchedule::Harmonic(g) => g / n as f64,
        }
    }
}

/// Gradient oracle noise. `None` is equivalent to a zero-variance Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    /// I.i.d. zero-mean Gaussian added to every control-layer gradient
    /// coordinate.
    GaussianControl { sigma: f64 },
}

impl NoiseModel {
    fn sigma(&self) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::GaussianControl { sigma } => *sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Phgd,
    Gd,
    Nhgd,
    Phgf,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Phgd => "PHGD",
            Algorithm::Gd => "GD",
            Algorithm::Nhgd => "NHGD",
            Algorithm::Phgf => "PHGF",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "PHGD" => Some(Algorithm::Phgd),
            "GD" => Some(Algorithm::Gd),
            "NHGD" => Some(Algorithm::Nhgd),
            "PHGF" => Some(Algorithm::Phgf),
            _ => None,
        }
    }
}

/// Mutable state of one trajectory. The cached latent profile always equals
/// the map image of the control profile.
#[derive(Debug, Clone)]
pub struct IterState {
    pub n: u64,
    pub x: Profile,
    pub z: Profile,
    rng: ChaCha8Rng,
}

impl IterState {
    pub fn new(x: Profile, maps: &ProductRepMap, noise_seed: u64) -> Result<Self> {
        let z = maps.eval(&x)?;
        Ok(Self { n: 0, x, z, rng: ChaCha8Rng::seed_from_u64(noise_seed) })
    }
}

/// The control-layer field `V_i(x) = J_i(x_i)^T g_i(phi(x))`.
pub fn control_field(game: &HiddenGame, maps: &ProductRepMap, x: &Profile) -> Result<Profile> {
    let z = maps.eval(x)?;
    let g = game.field(&z)?;
    let jacobians = maps.jacobians(x)?;
    jacobians
        .iter()
        .zip(&g)
        .map(|(j, gi)| j.transpose().matvec(gi))
        .collect()
}

/// The per-player preconditioner `P = (J^T J)^+`, symmetric positive
/// semidefinite by construction.
pub fn precondition(j: &DenseMatrix) -> Result<DenseMatrix> {
    let gram = j.transpose().matmul(j)?;
    numkit::pinv_default(&gram)
}

fn draw_noise(rng: &mut ChaCha8Rng, sigma: f64, dims: &[usize]) -> Profile {
    let normal = rand_distr::StandardNormal;
    dims.iter()
        .map(|&d| {
            (0..d)
                .map(|_| {
                    let v: f64 = normal.sample(rng);
                    sigma * v
                })
                .collect()
        })
        .collect()
}

fn profile_is_finite(p: &Profile) -> bool {
    p.iter().all(|block| block.iter().all(|v| v.is_finite()))
}

/// Draws the stochastic gradient `q = V(x) + noise` at the current state.
pub(crate) fn stochastic_gradient(
    state: &mut IterState,
    game: &HiddenGame,
    maps: &ProductRepMap,
    noise: &NoiseModel,
) -> Result<Profile> {
    let v = control_field(game, maps, &state.x)?;
    let sigma = noise.sigma();
    if sigma == 0.0 {
        return Ok(v);
    }
    let xi = draw_noise(&mut state.rng, sigma, &maps.input_dims());
    Ok(v.iter()
        .zip(&xi)
        .map(|(vi, xii)| vi.iter().zip(xii).map(|(a, b)| a + b).collect())
        .collect())
}

fn apply_step(
    state: &mut IterState,
    maps: &ProductRepMap,
    gamma: f64,
    direction: &Profile,
) -> Result<Profile> {
    for (xi, di) in state.x.iter_mut().zip(direction) {
        for (xv, dv) in xi.iter_mut().zip(di) {
            *xv -= gamma * dv;
        }
    }
    if !profile_is_finite(&state.x) {
        return Err(Error::NonFiniteIterate(state.n + 1));
    }
    let z = maps.eval(&state.x).map_err(|_| Error::NonFiniteIterate(state.n + 1))?;
    if !profile_is_finite(&z) {
        return Err(Error::NonFiniteIterate(state.n + 1));
    }
    state.z = z.clone();
    state.n += 1;
    Ok(z)
}

/// One preconditioned step: `x_i <- x_i - gamma_n P_i q_i`. Returns the
/// stochastic gradient that was applied.
pub fn phgd_step(
    state: &mut IterState,
    game: &HiddenGame,
    maps: &ProductRepMap,
    schedule: &StepSchedule,
    noise: &NoiseModel,
) -> Result<Profile> {
    let q = stochastic_gradient(state, game, maps, noise)?;
    let jacobians = maps.jacobians(&state.x)?;
    let mut direction = Vec::with_capacity(q.len());
    for (j, qi) in jacobians.iter().zip(&q) {
        let p = precondition(j)?;
        direction.push(p.matvec(qi)?);
    }
    let gamma = schedule.gamma(state.n + 1);
    apply_step(state, maps, gamma, &direction)?;
    Ok(q)
}

/// Plain gradient descent baseline (`P_i = I`).
pub fn gd_step(
    state: &mut IterState,
    game: &HiddenGame,
    maps: &ProductRepMap,
    schedule: &StepSchedule,
    noise: &NoiseModel,
) -> Result<Profile> {
    let q = stochastic_gradient(state, game, maps, noise)?;
    let gamma = schedule.gamma(state.n + 1);
    apply_step(state, maps, gamma, &q)?;
    Ok(q)
}

/// Scalar-preconditioned baseline for fully one-dimensional players:
/// `x_i <- x_i - gamma_n q_i / |phi_i'(x_i)|^2`.
pub fn nhgd_step(
    state: &mut IterState,
    game: &HiddenGame,
    maps: &ProductRepMap,
    schedule: &StepSchedule,
    noise: &NoiseModel,
) -> Result<Profile> {
    for m in maps.players() {
        if m.input_dim() != 1 || m.output_dim() != 1 {
            return Err(Error::NotSeparable);
        }
    }
    let q = stochastic_gradient(state, game, maps, noise)?;
    let jacobians = maps.jacobians(&state.x)?;
    let mut direction = Vec::with_capacity(q.len());
    for (j, qi) in jacobians.iter().zip(&q) {
        let d = j.get(0, 0);
        if d.abs() < 1e-12 {
            return Err(Error::DerivativeVanished(1e-12));
        }
        direction.push(vec![qi[0] / (d * d)]);
    }
    let gamma = schedule.gamma(state.n + 1);
    apply_step(state, maps, gamma, &direction)?;
    Ok(q)
}

/// A recorded trajectory row. `gamma` is the step size that produced this
/// state (zero on the initial row).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajRow {
    pub n: u64,
    pub gamma: f64,
    pub err: f64,
    pub energy: f64,
    pub tgap_latent: f64,
    pub tgap_control: f64,
    pub walltime_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    MaxItersReached,
    ToleranceReached,
    NonFinite { at: u64 },
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        !matches!(self, RunStatus::NonFinite { .. })
    }
}

/// Per-step raw data needed by the template-inequality checker.
#[derive(Debug, Clone)]
pub struct TemplateStep {
    /// Latent profile before the step.
    pub z: Profile,
    /// Step size used.
    pub gamma: f64,
    /// Stochastic gradient applied at the step.
    pub q: Profile,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub algorithm: Algorithm,
    pub rows: Vec<TrajRow>,
    pub status: RunStatus,
    pub template: Option<Vec<TemplateStep>>,
    /// Final control profile (last finite iterate).
    pub final_x: Profile,
}

impl TrajectoryRecord {
    pub fn final_err(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.err)
    }
}

/// Knobs of a single trajectory run.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub max_iters: u64,
    pub stop_tol: f64,
    pub record_every: u64,
    /// Energy test point; defaults to the game's reference equilibrium.
    pub z_hat: Option<Profile>,
    /// Record per-step raw data for the template checker.
    pub record_template: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { max_iters: 10_000, stop_tol: 1e-12, record_every: 1, z_hat: None, record_template: false }
    }
}

fn make_row(
    game: &HiddenGame,
    maps: &ProductRepMap,
    state: &IterState,
    gamma: f64,
    z_hat: Option<&Profile>,
    started: Instant,
) -> TrajRow {
    let err = merit::energy_profiles(&state.z, game.z_star());
    let energy = z_hat.map_or(err, |zh| merit::energy_profiles(&state.z, zh));
    let tgl = merit::tgap_latent(&state.z, game).unwrap_or(f64::NAN);
    let tgc = merit::tgap_control(&state.x, game, maps).unwrap_or(f64::NAN);
    TrajRow {
        n: state.n,
        gamma,
        err,
        energy,
        tgap_latent: tgl,
        tgap_control: tgc,
        walltime_us: started.elapsed().as_micros() as u64,
    }
}

/// Runs a discrete algorithm until `max_iters` or the stop tolerance and
/// records metric rows every `record_every` steps. Step failures truncate the
/// record and are reported in the status instead of aborting the caller.
pub fn run(
    algorithm: Algorithm,
    game: &HiddenGame,
    maps: &ProductRepMap,
    x0: Profile,
    schedule: &StepSchedule,
    noise: &NoiseModel,
    noise_seed: u64,
    settings: &RunSettings,
) -> Result<TrajectoryRecord> {
    assert!(settings.record_every >= 1);
    let started = Instant::now();
    let mut state = IterState::new(x0, maps, noise_seed)?;
    let mut rows = vec![make_row(game, maps, &state, 0.0, settings.z_hat.as_ref(), started)];
    let mut template: Vec<TemplateStep> = Vec::new();
    let mut status = RunStatus::MaxItersReached;

    if rows[0].err <= settings.stop_tol {
        status = RunStatus::ToleranceReached;
    } else {
        for _ in 0..settings.max_iters {
            let gamma = schedule.gamma(state.n + 1);
            let z_before = settings.record_template.then(|| state.z.clone());
            let step_result = match algorithm {
                Algorithm::Phgd => phgd_step(&mut state, game, maps, schedule, noise),
                Algorithm::Gd => gd_step(&mut state, game, maps, schedule, noise),
                Algorithm::Nhgd => nhgd_step(&mut state, game, maps, schedule, noise),
                Algorithm::Phgf => {
                    return Err(Error::ShapeMismatch(
                        "the continuous flow runs through phgf_integrate".into(),
                    ))
                }
            };
            match step_result {
                Ok(q) => {
                    if let Some(z) = z_before {
                        template.push(TemplateStep { z, gamma, q });
                    }
                }
                Err(Error::NonFiniteIterate(at)) => {
                    status = RunStatus::NonFinite { at };
                    break;
                }
                Err(e) => return Err(e),
            }
            let due = state.n % settings.record_every == 0 || state.n == settings.max_iters;
            let err_now = merit::energy_profiles(&state.z, game.z_star());
            if err_now <= settings.stop_tol {
                rows.push(make_row(game, maps, &state, gamma, settings.z_hat.as_ref(), started));
                status = RunStatus::ToleranceReached;
                break;
            }
            if due {
                rows.push(make_row(game, maps, &state, gamma, settings.z_hat.as_ref(), started));
            }
        }
    }

    if settings.record_template {
        // Terminal sentinel so every completed step has a successor state;
        // its zero step size marks it as not-a-step.
        let zeros = maps.input_dims().iter().map(|&d| vec![0.0; d]).collect();
        template.push(TemplateStep { z: state.z.clone(), gamma: 0.0, q: zeros });
    }
    Ok(TrajectoryRecord {
        algorithm,
        rows,
        status,
        template: settings.record_template.then_some(template),
        final_x: state.x,
    })
}

/// Trajectory of the continuous preconditioned flow under classical RK4.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub dt: f64,
    /// Energy `0.5 * ||phi(x) - z*||^2` after every step, starting at t = 0.
    pub energies: Vec<f64>,
    pub final_x: Profile,
    pub final_err: f64,
}

fn flow_rhs(game: &HiddenGame, maps: &ProductRepMap, x: &Profile) -> Result<Profile> {
    let v = control_field(game, maps, x)?;
    let jacobians = maps.jacobians(x)?;
    let mut out = Vec::with_capacity(v.len());
    for (j, vi) in jacobians.iter().zip(&v) {
        let p = precondition(j)?;
        let pv = p.matvec(vi)?;
        out.push(pv.iter().map(|a| -a).collect());
    }
    Ok(out)
}

fn profile_axpy(x: &Profile, a: f64, d: &Profile) -> Profile {
    x.iter()
        .zip(d)
        .map(|(xi, di)| xi.iter().zip(di).map(|(xv, dv)| xv + a * dv).collect())
        .collect()
}

/// Integrates the preconditioned flow with fixed-step RK4, recording the
/// energy after every step.
pub fn phgf_integrate(
    x0: Profile,
    game: &HiddenGame,
    maps: &ProductRepMap,
    dt: f64,
    t_end: f64,
) -> Result<FlowTrajectory> {
    assert!(dt > 0.0 && t_end >= dt);
    let steps = (t_end / dt).round() as u64;
    let mut x = x0;
    let mut energies = Vec::with_capacity(steps as usize + 1);
    let z0 = maps.eval(&x)?;
    energies.push(merit::energy_profiles(&z0, game.z_star()));
    for n in 0..steps {
        let k1 = flow_rhs(game, maps, &x)?;
        let k2 = flow_rhs(game, maps, &profile_axpy(&x, dt / 2.0, &k1))?;
        let k3 = flow_rhs(game, maps, &profile_axpy(&x, dt / 2.0, &k2))?;
        let k4 = flow_rhs(game, maps, &profile_axpy(&x, dt, &k3))?;
        for (i, xi) in x.iter_mut().enumerate() {
            for (k, xv) in xi.iter_mut().enumerate() {
                *xv += dt / 6.0 * (k1[i][k] + 2.0 * k2[i][k] + 2.0 * k3[i][k] + k4[i][k]);
            }
        }
        if !profile_is_finite(&x) {
            return Err(Error::NonFiniteIterate(n + 1));
        }
        let z = maps.eval(&x)?;
        energies.push(merit::energy_profiles(&z, game.z_star()));
    }
    let z = maps.eval(&x)?;
    let final_err = merit::energy_profiles(&z, game.z_star());
    Ok(FlowTrajectory { dt, energies, final_x: x, final_err })
}

/// Uniform initial control profile in `[-range, range]` per coordinate,
/// deterministic for a given seed.
pub fn sample_init(maps: &ProductRepMap, range: f64, seed: u64) -> Profile {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    maps.input_dims()
        .iter()
        .map(|&d| (0..d).map(|_| rng.random_range(-range..=range)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{ElFarolParams, HiddenGame};
    use crate::repmaps::{identity_map, MapSpec, ProductRepMap};
    use crate::{flatten, profile_dist2};

    fn mp_setup(map_seed: u64) -> (HiddenGame, ProductRepMap) {
        (
            HiddenGame::matching_pennies(0.75).unwrap(),
            ProductRepMap::sample(&MapSpec::Mp, 2, map_seed).unwrap(),
        )
    }

    #[test]
    fn control_field_reduces_to_latent_field_for_identity_maps() {
        let game = HiddenGame::matching_pennies(0.75).unwrap();
        let maps = identity_map(&[1, 1]);
        let x = vec![vec![0.3], vec![0.8]];
        let v = control_field(&game, &maps, &x).unwrap();
        let g = game.field(&x).unwrap();
        assert_eq!(flatten(&v), flatten(&g));
    }

    #[test]
    fn control_field_vanishes_at_zero_bias_equilibrium() {
        let (game, maps) = mp_setup(2);
        let v = control_field(&game, &maps, &vec![vec![0.0], vec![0.0]]).unwrap();
        assert!(flatten(&v).iter().all(|c| c.abs() <= 1e-9));
    }

    #[test]
    fn control_field_matches_loss_finite_differences() {
        let (game, maps) = mp_setup(3);
        let x = vec![vec![0.7], vec![-0.4]];
        let v = control_field(&game, &maps, &x).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x.clone();
            xp[i][0] += h;
            let mut xm = x.clone();
            xm[i][0] -= h;
            let lp = game.scalar_loss(i, &maps.eval(&xp).unwrap()).unwrap();
            let lm = game.scalar_loss(i, &maps.eval(&xm).unwrap()).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - v[i][0]).abs() <= 1e-6 * (1.0 + v[i][0].abs()));
        }
    }

    #[test]
    fn precondition_identity_and_wide_row() {
        let p = precondition(&DenseMatrix::identity(3)).unwrap();
        assert!(p.sub(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-12);

        let j = DenseMatrix::new(1, 2, vec![2.0, 0.0]).unwrap();
        let p = precondition(&j).unwrap();
        let expect = DenseMatrix::from_rows(&[vec![0.25, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(p.sub(&expect).unwrap().max_abs() < 1e-12);
        let jpj = j.matmul(&p).unwrap().matmul(&j.transpose()).unwrap();
        assert!((jpj.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn precondition_right_inverse_full_row_rank() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let j = DenseMatrix::new(3, 5, data).unwrap();
        let p = precondition(&j).unwrap();
        let jpj = j.matmul(&p).unwrap().matmul(&j.transpose()).unwrap();
        assert!(jpj.sub(&DenseMatrix::identity(3)).unwrap().max_abs() <= 1e-9);
    }

    #[test]
    fn phgd_on_identity_maps_is_latent_gradient_descent() {
        let game = HiddenGame::matching_pennies(0.75).unwrap();
        let maps = identity_map(&[1, 1]);
        let x0 = vec![vec![0.6], vec![0.4]];
        let schedule = StepSchedule::Constant(0.05);

        let mut a = IterState::new(x0.clone(), &maps, 0).unwrap();
        phgd_step(&mut a, &game, &maps, &schedule, &NoiseModel::None).unwrap();

        let g = game.field(&x0).unwrap();
        let expect = profile_axpy(&x0, -0.05, &g);
        assert!(profile_dist2(&a.x, &expect) < 1e-28);

        let mut b = IterState::new(x0, &maps, 0).unwrap();
        gd_step(&mut b, &game, &maps, &schedule, &NoiseModel::None).unwrap();
        assert!(profile_dist2(&a.x, &b.x) < 1e-28);
    }

    #[test]
    fn zero_field_point_is_fixed() {
        let (game, maps) = mp_setup(4);
        let x0 = vec![vec![0.0], vec![0.0]];
        let mut state = IterState::new(x0.clone(), &maps, 0).unwrap();
        phgd_step(&mut state, &game, &maps, &StepSchedule::Constant(0.01), &NoiseModel::None)
            .unwrap();
        assert_eq!(state.n, 1);
        assert!(profile_dist2(&state.x, &x0) <= 1e-24);
    }

    #[test]
    fn nhgd_coincides_with_phgd_for_scalar_maps() {
        let (game, maps) = mp_setup(3);
        let x0 = vec![vec![1.25], vec![2.25]];
        let schedule = StepSchedule::Constant(0.01);
        let mut a = IterState::new(x0.clone(), &maps, 0).unwrap();
        let mut b = IterState::new(x0, &maps, 0).unwrap();
        for _ in 0..50 {
            phgd_step(&mut a, &game, &maps, &schedule, &NoiseModel::None).unwrap();
            nhgd_step(&mut b, &game, &maps, &schedule, &NoiseModel::None).unwrap();
        }
        assert!(profile_dist2(&a.x, &b.x).sqrt() <= 1e-12);
    }

    #[test]
    fn nhgd_rejects_multidimensional_players() {
        let game = HiddenGame::rock_paper_scissors(0.2).unwrap();
        let maps = ProductRepMap::sample(&MapSpec::Rps, 2, 1).unwrap();
        let mut state = IterState::new(sample_init(&maps, 0.5, 0), &maps, 0).unwrap();
        let r = nhgd_step(&mut state, &game, &maps, &StepSchedule::Constant(0.01), &NoiseModel::None);
        assert!(matches!(r, Err(Error::NotSeparable)));
    }

    #[test]
    fn phgd_error_decreases_on_matching_pennies() {
        let (game, maps) = mp_setup(12);
        // Start near the latent region the sigmoid reaches from moderate
        // controls; the error must shrink monotonically over 100 steps.
        let x0 = vec![vec![1.25], vec![2.25]];
        let settings = RunSettings { max_iters: 100, ..Default::default() };
        let rec = run(
            Algorithm::Phgd,
            &game,
            &maps,
            x0,
            &StepSchedule::Constant(0.01),
            &NoiseModel::None,
            0,
            &settings,
        )
        .unwrap();
        assert!(rec.status.is_ok());
        for w in rec.rows.windows(2) {
            assert!(
                w[1].err <= w[0].err + 1e-12,
                "err increased: {} -> {} at n={}",
                w[0].err,
                w[1].err,
                w[1].n
            );
        }
    }

    #[test]
    fn gd_energy_not_monotone_on_matching_pennies() {
        let (game, maps) = mp_setup(12);
        let x0 = vec![vec![1.25], vec![2.25]];
        let settings = RunSettings { max_iters: 3000, ..Default::default() };
        let rec = run(
            Algorithm::Gd,
            &game,
            &maps,
            x0,
            &StepSchedule::Constant(0.01),
            &NoiseModel::None,
            0,
            &settings,
        )
        .unwrap();
        let increases = rec.rows.windows(2).filter(|w| w[1].err > w[0].err + 1e-14).count();
        assert!(increases > 0, "plain descent should overshoot somewhere along the run");
    }

    #[test]
    fn run_with_zero_iters_records_initial_row_only() {
        let (game, maps) = mp_setup(6);
        let settings = RunSettings { max_iters: 0, ..Default::default() };
        let rec = run(
            Algorithm::Phgd,
            &game,
            &maps,
            vec![vec![0.5], vec![0.5]],
            &StepSchedule::Constant(0.01),
            &NoiseModel::None,
            0,
            &settings,
        )
        .unwrap();
        assert_eq!(rec.rows.len(), 1);
        assert_eq!(rec.rows[0].n, 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let (game, maps) = mp_setup(7);
        let settings = RunSettings { max_iters: 200, ..Default::default() };
        let go = || {
            run(
                Algorithm::Phgd,
                &game,
                &maps,
                vec![vec![1.0], vec![-0.5]],
                &StepSchedule::InvSqrt(0.1),
                &NoiseModel::GaussianControl { sigma: 0.05 },
                42,
                &settings,
            )
            .unwrap()
        };
        let (a, b) = (go(), go());
        assert_eq!(a.rows.len(), b.rows.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.err, rb.err);
            assert_eq!(ra.tgap_control, rb.tgap_control);
        }
    }

    #[test]
    fn noise_is_unbiased() {
        let dims = vec![1usize, 1];
        let sigma = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sums = vec![0.0f64; 2];
        for _ in 0..n {
            let xi = draw_noise(&mut rng, sigma, &dims);
            sums[0] += xi[0][0];
            sums[1] += xi[1][0];
        }
        let bound = 5.0 * sigma / (n as f64).sqrt();
        for s in sums {
            assert!((s / n as f64).abs() <= bound);
        }
    }

    #[test]
    fn phgf_constant_at_equilibrium() {
        let (game, maps) = mp_setup(8);
        let x0 = vec![vec![0.0], vec![0.0]];
        let flow = phgf_integrate(x0, &game, &maps, 1e-2, 1.0).unwrap();
        assert!(flow.energies.iter().all(|e| *e <= 1e-18));
    }

    #[test]
    fn phgf_energy_decreases_on_matching_pennies() {
        let (game, maps) = mp_setup(3);
        let x0 = vec![vec![1.0], vec![-0.8]];
        let flow = phgf_integrate(x0, &game, &maps, 1e-3, 5.0).unwrap();
        for w in flow.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn phgf_rk4_order() {
        let (game, maps) = mp_setup(3);
        let x0 = vec![vec![0.9], vec![-0.6]];
        let reference = phgf_integrate(x0.clone(), &game, &maps, 1e-4, 1.0).unwrap();
        let coarse = phgf_integrate(x0.clone(), &game, &maps, 8e-3, 1.0).unwrap();
        let fine = phgf_integrate(x0, &game, &maps, 4e-3, 1.0).unwrap();
        let e_coarse = profile_dist2(&coarse.final_x, &reference.final_x).sqrt();
        let e_fine = profile_dist2(&fine.final_x, &reference.final_x).sqrt();
        let ratio = e_coarse / e_fine.max(1e-300);
        assert!(
            (8.0..40.0).contains(&ratio),
            "halving dt should shrink the error about 16x, got {ratio}"
        );
    }
}
