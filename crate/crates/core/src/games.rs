//! The latent game suite: per-player loss gradients, strong-monotonicity
//! moduli, latent domains, reference equilibria, and the Poisson-binomial
//! machinery behind the congestion game.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkit::dot;
use crate::{profile_dist2, Profile};

/// Membership slack for latent domains. Representation-map outputs satisfy
/// the constraints structurally; anything larger signals an upstream bug.
pub const DOMAIN_TOL: f64 = 1e-9;

/// KL target distribution of the logit-embedding demo.
pub const KL_TARGET: [f64; 3] = [0.5, 1.0 / 3.0, 1.0 / 6.0];

/// One player's latent domain.
#[derive(Debug, Clone, PartialEq)]
pub enum PlayerDomain {
    /// The cube `[0, 1]^dim`.
    Box01(usize),
    /// The `(dim-1)`-simplex embedded in `R^dim`.
    Simplex(usize),
}

impl PlayerDomain {
    pub fn dim(&self) -> usize {
        match self {
            PlayerDomain::Box01(d) | PlayerDomain::Simplex(d) => *d,
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        match self {
            PlayerDomain::Box01(_) => z.iter().all(|&v| (-tol..=1.0 + tol).contains(&v)),
            PlayerDomain::Simplex(_) => {
                z.iter().all(|&v| v >= -tol) && (z.iter().sum::<f64>() - 1.0).abs() <= tol
            }
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            PlayerDomain::Box01(d) => (0..*d).map(|_| rng.random_range(0.0..=1.0)).collect(),
            PlayerDomain::Simplex(d) => {
                // Exponential spacings give the uniform (Dirichlet-1) law.
                let draws: Vec<f64> =
                    (0..*d).map(|_| -f64::ln(1.0 - rng.random_range(0.0..1.0))).collect();
                let total: f64 = draws.iter().sum();
                draws.iter().map(|v| v / total).collect()
            }
        }
    }

    /// Orthogonal projection onto the domain's affine hull tangent space
    /// (for the simplex: remove the all-ones component).
    pub fn project_affine_tangent(&self, v: &[f64]) -> Vec<f64> {
        match self {
            PlayerDomain::Box01(_) => v.to_vec(),
            PlayerDomain::Simplex(d) => {
                let mean = v.iter().sum::<f64>() / *d as f64;
                v.iter().map(|x| x - mean).collect()
            }
        }
    }
}

/// Parameters of the El Farol congestion game. Payoffs: `s` for staying home,
/// `b` for visiting a crowded bar, `g` for visiting an uncrowded one, with
/// `b < s < g`; the bar is crowded when at least `capacity` others visit.
#[derive(Debug, Clone, PartialEq)]
pub struct ElFarolParams {
    pub n_players: usize,
    pub capacity: usize,
    pub s: f64,
    pub b: f64,
    pub g: f64,
}

impl Default for ElFarolParams {
    fn default() -> Self {
        Self { n_players: 30, capacity: 18, s: 0.5, b: 0.0, g: 1.0 }
    }
}

/// Which latent game drives the vector field.
#[derive(Debug, Clone, PartialEq)]
pub enum GameParams {
    MatchingPennies,
    RockPaperScissors,
    Shapley { beta: f64 },
    ElFarol(ElFarolParams),
    KlDemo,
}

/// Zero-sum payoff matrix of the cyclic three-strategy game.
pub const RPS_MATRIX: [[f64; 3]; 3] = [[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]];

pub fn shapley_matrices(beta: f64) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    (
        [[1.0, 0.0, beta], [beta, 1.0, 0.0], [0.0, beta, 1.0]],
        [[-beta, 1.0, 0.0], [0.0, -beta, 1.0], [1.0, 0.0, -beta]],
    )
}

fn matvec3(a: &[[f64; 3]; 3], v: &[f64]) -> Vec<f64> {
    (0..3).map(|i| (0..3).map(|j| a[i][j] * v[j]).sum()).collect()
}

fn matvec3_t(a: &[[f64; 3]; 3], v: &[f64]) -> Vec<f64> {
    (0..3).map(|i| (0..3).map(|j| a[j][i] * v[j]).sum()).collect()
}

/// A latent game: the vector field `g`, its modulus, the latent domain, and
/// the reference equilibrium the merit functions measure against.
#[derive(Debug, Clone)]
pub struct HiddenGame {
    params: GameParams,
    mu: f64,
    domain: Vec<PlayerDomain>,
    z_star: Profile,
    reg_center: Profile,
}

impl HiddenGame {
    pub fn matching_pennies(mu: f64) -> Result<Self> {
        validate_mu(mu)?;
        let z_star = vec![vec![0.5], vec![0.5]];
        Ok(Self {
            params: GameParams::MatchingPennies,
            mu,
            domain: vec![PlayerDomain::Box01(1), PlayerDomain::Box01(1)],
            reg_center: z_star.clone(),
            z_star,
        })
    }

    pub fn rock_paper_scissors(mu: f64) -> Result<Self> {
        validate_mu(mu)?;
        let uniform = vec![1.0 / 3.0; 3];
        let z_star = vec![uniform.clone(), uniform];
        Ok(Self {
            params: GameParams::RockPaperScissors,
            mu,
            domain: vec![PlayerDomain::Simplex(3), PlayerDomain::Simplex(3)],
            reg_center: z_star.clone(),
            z_star,
        })
    }

    pub fn shapley(beta: f64, mu: f64) -> Result<Self> {
        validate_mu(mu)?;
        if !(0.0..1.0).contains(&beta) || beta == 0.0 {
            return Err(Error::DomainViolation(format!("shapley beta must lie in (0,1), got {beta}")));
        }
        let uniform = vec![1.0 / 3.0; 3];
        let z_star = vec![uniform.clone(), uniform];
        Ok(Self {
            params: GameParams::Shapley { beta },
            mu,
            domain: vec![PlayerDomain::Simplex(3), PlayerDomain::Simplex(3)],
            reg_center: z_star.clone(),
            z_star,
        })
    }

    /// Builds the congestion game. The regularizer is centered at the
    /// classic mixed equilibrium `capacity/n`; the reference equilibrium is
    /// the exact stationary point of the regularized field, computed by a
    /// damped best-response iteration.
    pub fn el_farol(params: ElFarolParams, mu: f64) -> Result<Self> {
        if mu <= 0.0 {
            return Err(Error::DomainViolation(format!(
                "el farol requires a positive regularizer modulus, got {mu}"
            )));
        }
        if params.capacity > params.n_players {
            return Err(Error::DomainViolation(format!(
                "capacity {} exceeds player count {}",
                params.capacity, params.n_players
            )));
        }
        if !(params.b < params.s && params.s < params.g) {
            return Err(Error::DomainViolation(format!(
                "payoffs must satisfy b < s < g, got b={} s={} g={}",
                params.b, params.s, params.g
            )));
        }
        let n = params.n_players;
        let center = params.capacity as f64 / n as f64;
        let z_star = el_farol_fixed_point(&params, mu)?;
        Ok(Self {
            mu,
            domain: vec![PlayerDomain::Box01(1); n],
            z_star: z_star.into_iter().map(|v| vec![v]).collect(),
            reg_center: vec![vec![center]; n],
            params: GameParams::ElFarol(params),
        })
    }

    /// Single-player KL minimization toward [`KL_TARGET`] on the 2-simplex.
    /// The Hessian `diag(1/z_k)` dominates the identity there, so the field
    /// is 1-strongly monotone on the interior.
    pub fn kl_demo() -> Self {
        Self {
            params: GameParams::KlDemo,
            mu: 1.0,
            domain: vec![PlayerDomain::Simplex(3)],
            z_star: vec![KL_TARGET.to_vec()],
            reg_center: vec![KL_TARGET.to_vec()],
        }
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn n_players(&self) -> usize {
        self.domain.len()
    }

    pub fn latent_dims(&self) -> Vec<usize> {
        self.domain.iter().map(PlayerDomain::dim).collect()
    }

    pub fn domain(&self) -> &[PlayerDomain] {
        &self.domain
    }

    pub fn z_star(&self) -> &Profile {
        &self.z_star
    }

    /// Center of the quadratic regularizer; coincides with `z_star` except
    /// for the congestion game.
    pub fn reg_center(&self) -> &Profile {
        &self.reg_center
    }

    pub fn check_domain(&self, z: &Profile) -> Result<()> {
        if z.len() != self.n_players() {
            return Err(Error::ShapeMismatch(format!(
                "{} players, got {} latent blocks",
                self.n_players(),
                z.len()
            )));
        }
        for (i, (zi, d)) in z.iter().zip(&self.domain).enumerate() {
            if !d.contains(zi, DOMAIN_TOL) {
                return Err(Error::DomainViolation(format!("player {i} latent point {zi:?}")));
            }
        }
        Ok(())
    }

    /// The game's vector field `g(z) = (grad_{z_i} loss_i(z))_i`.
    pub fn field(&self, z: &Profile) -> Result<Profile> {
        self.check_domain(z)?;
        let mu = self.mu;
        match &self.params {
            GameParams::MatchingPennies => {
                let (z1, z2) = (z[0][0], z[1][0]);
                Ok(vec![
                    vec![-2.0 * (2.0 * z2 - 1.0) + mu * (z1 - 0.5)],
                    vec![2.0 * (2.0 * z1 - 1.0) + mu * (z2 - 0.5)],
                ])
            }
            GameParams::RockPaperScissors => {
                let g1: Vec<f64> = matvec3(&RPS_MATRIX, &z[1])
                    .iter()
                    .zip(&z[0])
                    .map(|(av, zi)| -av + mu * (zi - 1.0 / 3.0))
                    .collect();
                let g2: Vec<f64> = matvec3_t(&RPS_MATRIX, &z[0])
                    .iter()
                    .zip(&z[1])
                    .map(|(av, zi)| av + mu * (zi - 1.0 / 3.0))
                    .collect();
                Ok(vec![g1, g2])
            }
            GameParams::Shapley { beta } => {
                let (a, b) = shapley_matrices(*beta);
                let g1: Vec<f64> = matvec3(&a, &z[1])
                    .iter()
                    .zip(&z[0])
                    .map(|(av, zi)| -av + mu * (zi - 1.0 / 3.0))
                    .collect();
                let g2: Vec<f64> = matvec3_t(&b, &z[0])
                    .iter()
                    .zip(&z[1])
                    .map(|(bv, zi)| -bv + mu * (zi - 1.0 / 3.0))
                    .collect();
                Ok(vec![g1, g2])
            }
            GameParams::ElFarol(p) => {
                let n = p.n_players;
                let center = p.capacity as f64 / n as f64;
                let mut g = Vec::with_capacity(n);
                for i in 0..n {
                    let others: Vec<f64> =
                        (0..n).filter(|&j| j != i).map(|j| z[j][0]).collect();
                    let tail = poisson_binomial_tail(&others, p.capacity);
                    g.push(vec![
                        (p.s - p.g) + tail * (p.g - p.b) + mu * (z[i][0] - center),
                    ]);
                }
                Ok(g)
            }
            GameParams::KlDemo => {
                if z[0].iter().any(|&v| v <= 0.0) {
                    return Err(Error::DomainViolation(
                        "KL field needs a strictly interior simplex point".into(),
                    ));
                }
                Ok(vec![z[0]
                    .iter()
                    .zip(KL_TARGET)
                    .map(|(&zk, pk)| (zk / pk).ln() + 1.0)
                    .collect()])
            }
        }
    }

    /// One player's scalar loss; the field above is its exact gradient.
    ///
    /// The loss formulas extend smoothly beyond the latent domain, and this
    /// accessor deliberately does not enforce membership so that finite
    /// differences across the simplex's affine constraint stay well-defined;
    /// domain enforcement lives in [`Self::field`].
    pub fn scalar_loss(&self, player: usize, z: &Profile) -> Result<f64> {
        let reg = self.mu / 2.0 * profile_dist2(z, &self.reg_center);
        match &self.params {
            GameParams::MatchingPennies => {
                let bilinear = (2.0 * z[0][0] - 1.0) * (2.0 * z[1][0] - 1.0);
                Ok(if player == 0 { -bilinear } else { bilinear } + reg)
            }
            GameParams::RockPaperScissors => {
                let bilinear = dot(&z[0], &matvec3(&RPS_MATRIX, &z[1]));
                Ok(if player == 0 { -bilinear } else { bilinear } + reg)
            }
            GameParams::Shapley { beta } => {
                let (a, b) = shapley_matrices(*beta);
                let m = if player == 0 { &a } else { &b };
                Ok(-dot(&z[0], &matvec3(m, &z[1])) + reg)
            }
            GameParams::ElFarol(p) => {
                let others: Vec<f64> = (0..p.n_players)
                    .filter(|&j| j != player)
                    .map(|j| z[j][0])
                    .collect();
                let tail = poisson_binomial_tail(&others, p.capacity);
                let expected_payoff =
                    p.s + z[player][0] * (p.g - p.s + tail * (p.b - p.g));
                Ok(-expected_payoff + reg)
            }
            GameParams::KlDemo => Ok(z[0]
                .iter()
                .zip(KL_TARGET)
                .map(|(&zk, pk)| if zk > 0.0 { zk * (zk / pk).ln() } else { 0.0 })
                .sum()),
        }
    }

    /// The gradient of the regularizer block `mu * (z_i - center_i)`.
    pub fn reg_grad(z_i: &[f64], z_star_i: &[f64], mu: f64) -> Result<Vec<f64>> {
        if z_i.len() != z_star_i.len() {
            return Err(Error::ShapeMismatch(format!(
                "regularizer blocks of length {} and {}",
                z_i.len(),
                z_star_i.len()
            )));
        }
        Ok(z_i.iter().zip(z_star_i).map(|(z, c)| mu * (z - c)).collect())
    }

    pub fn sample_domain_point(&self, rng: &mut ChaCha8Rng) -> Profile {
        self.domain.iter().map(|d| d.sample(rng)).collect()
    }

    /// Tangent projection of a per-player vector with respect to the latent
    /// domain's affine hull.
    pub fn project_tangent(&self, v: &Profile) -> Profile {
        v.iter()
            .zip(&self.domain)
            .map(|(vi, d)| d.project_affine_tangent(vi))
            .collect()
    }
}

fn validate_mu(mu: f64) -> Result<()> {
    if mu < 0.0 || !mu.is_finite() {
        return Err(Error::DomainViolation(format!("modulus must be >= 0, got {mu}")));
    }
    Ok(())
}

/// Exact tail probability `P(sum of independent Bernoulli(probs) >= c)` by
/// dynamic programming over counts, O(n*c) time.
pub fn poisson_binomial_tail(probs: &[f64], c: usize) -> f64 {
    debug_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
    if c == 0 {
        return 1.0;
    }
    if c > probs.len() {
        return 0.0;
    }
    // dp[k] = P(count == k) over processed players, k < c; mass that crosses
    // c is absorbed into `tail` and stays there.
    let mut dp = vec![0.0; c];
    dp[0] = 1.0;
    let mut tail = 0.0;
    for &p in probs {
        tail += dp[c - 1] * p;
        for k in (1..c).rev() {
            dp[k] = dp[k] * (1.0 - p) + dp[k - 1] * p;
        }
        dp[0] *= 1.0 - p;
    }
    tail.clamp(0.0, 1.0)
}

/// Stationary point of the regularized congestion field, found by a damped
/// best-response iteration. The damping must be small: the best-response map
/// has steep slope along the all-ones direction.
pub fn el_farol_fixed_point(params: &ElFarolParams, mu: f64) -> Result<Vec<f64>> {
    let n = params.n_players;
    let center = params.capacity as f64 / n as f64;
    let mut z = vec![center; n];
    let damping = 0.1;
    for _ in 0..50_000 {
        let mut max_delta = 0.0f64;
        let mut next = vec![0.0; n];
        for i in 0..n {
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| z[j]).collect();
            let tail = poisson_binomial_tail(&others, params.capacity);
            let br = (center - ((params.s - params.g) + tail * (params.g - params.b)) / mu)
                .clamp(0.0, 1.0);
            next[i] = (1.0 - damping) * z[i] + damping * br;
            max_delta = max_delta.max((next[i] - z[i]).abs());
        }
        z = next;
        if max_delta < 1e-14 {
            return Ok(z);
        }
    }
    Err(Error::IterationLimit(50_000))
}

/// Samples `pairs` random domain pairs and returns the smallest monotonicity
/// quotient `<g(z)-g(z'), z-z'> / ||z-z'||^2` together with the number of
/// pairs falling below `mu - 1e-9`. Simplex-domain displacements are tangent
/// by construction.
pub fn monotonicity_probe(game: &HiddenGame, pairs: usize, seed: u64) -> (f64, usize) {
    assert!(pairs >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_quotient = f64::INFINITY;
    let mut violations = 0;
    let mut done = 0;
    while done < pairs {
        let za = game.sample_domain_point(&mut rng);
        let zb = game.sample_domain_point(&mut rng);
        let d2 = profile_dist2(&za, &zb);
        if d2 < 1e-24 {
            continue;
        }
        let ga = game.field(&za).expect("sampled point lies in domain");
        let gb = game.field(&zb).expect("sampled point lies in domain");
        let mut inner = 0.0;
        for i in 0..game.n_players() {
            for k in 0..za[i].len() {
                inner += (ga[i][k] - gb[i][k]) * (za[i][k] - zb[i][k]);
            }
        }
        let q = inner / d2;
        min_quotient = min_quotient.min(q);
        if q < game.mu() - 1e-9 {
            violations += 1;
        }
        done += 1;
    }
    (min_quotient, violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flatten;
    use proptest::prelude::*;

    fn fd_field_check(game: &HiddenGame, z: &Profile, tol: f64) {
        let g = game.field(z).unwrap();
        let h = 1e-6;
        for i in 0..game.n_players() {
            for k in 0..z[i].len() {
                let mut zp = z.clone();
                zp[i][k] += h;
                let mut zm = z.clone();
                zm[i][k] -= h;
                let fd = (game.scalar_loss(i, &zp).unwrap() - game.scalar_loss(i, &zm).unwrap())
                    / (2.0 * h);
                assert!(
                    (fd - g[i][k]).abs() <= tol,
                    "player {i} coord {k}: fd {fd} vs g {}",
                    g[i][k]
                );
            }
        }
    }

    #[test]
    fn reg_grad_cases() {
        assert_eq!(
            HiddenGame::reg_grad(&[0.5, 0.5], &[0.5, 0.5], 0.75).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(HiddenGame::reg_grad(&[1.0], &[0.3], 0.0).unwrap(), vec![0.0]);
        let g = HiddenGame::reg_grad(&[1.0, 1.0], &[0.5, 0.5], 0.75).unwrap();
        assert!((g[0] - 0.375).abs() < 1e-15 && (g[1] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn matching_pennies_field_values() {
        let game = HiddenGame::matching_pennies(0.75).unwrap();
        let g = game.field(&vec![vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(flatten(&g), vec![0.0, 0.0]);

        let g = game.field(&vec![vec![1.0], vec![1.0]]).unwrap();
        assert!((g[0][0] - (-1.625)).abs() < 1e-15);
        assert!((g[1][0] - 2.375).abs() < 1e-15);

        let game0 = HiddenGame::matching_pennies(0.0).unwrap();
        let g = game0.field(&vec![vec![0.5], vec![1.0]]).unwrap();
        assert!((g[0][0] - (-2.0)).abs() < 1e-15 && g[1][0].abs() < 1e-15);
    }

    #[test]
    fn matching_pennies_rejects_outside_points() {
        let game = HiddenGame::matching_pennies(0.75).unwrap();
        assert!(matches!(
            game.field(&vec![vec![1.1], vec![0.5]]),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn rps_field_values() {
        let game = HiddenGame::rock_paper_scissors(0.2).unwrap();
        let uniform = vec![vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3]];
        let g = game.field(&uniform).unwrap();
        assert!(flatten(&g).iter().all(|v| v.abs() < 1e-15));

        let game0 = HiddenGame::rock_paper_scissors(0.0).unwrap();
        let z = vec![vec![0.2, 0.3, 0.5], vec![1.0, 0.0, 0.0]];
        let g = game0.field(&z).unwrap();
        // First column of the payoff matrix, negated.
        assert_eq!(g[0], vec![0.0, -1.0, 1.0]);
    }

    #[test]
    fn shapley_field_is_normal_at_uniform() {
        let game = HiddenGame::shapley(0.2, 0.2).unwrap();
        let uniform = vec![vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3]];
        let g = game.field(&uniform).unwrap();
        // A*1 and B^T*1 are constant vectors, so g is simplex-normal there.
        let t = game.project_tangent(&g);
        assert!(flatten(&t).iter().all(|v| v.abs() <= 1e-12));
        let beta = 0.2;
        assert!((g[0][0] + (1.0 + beta) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn shapley_beta_limit_is_diagonal() {
        let (a, _) = shapley_matrices(1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((a[i][j] - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fields_are_exact_gradients_of_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let games = [
            HiddenGame::matching_pennies(0.75).unwrap(),
            HiddenGame::rock_paper_scissors(0.2).unwrap(),
            HiddenGame::shapley(0.2, 0.2).unwrap(),
            HiddenGame::el_farol(
                ElFarolParams { n_players: 6, capacity: 3, ..Default::default() },
                0.5,
            )
            .unwrap(),
        ];
        for game in &games {
            for _ in 0..20 {
                let z = game.sample_domain_point(&mut rng);
                fd_field_check(game, &z, 1e-7);
            }
        }
    }

    #[test]
    fn poisson_binomial_edge_cases() {
        assert_eq!(poisson_binomial_tail(&[0.3, 0.7], 0), 1.0);
        assert_eq!(poisson_binomial_tail(&[0.3, 0.7], 3), 0.0);
        assert!((poisson_binomial_tail(&[0.5, 0.5], 1) - 0.75).abs() < 1e-15);
    }

    fn brute_force_tail(probs: &[f64], c: usize) -> f64 {
        let n = probs.len();
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            let count = mask.count_ones() as usize;
            if count < c {
                continue;
            }
            let mut p = 1.0;
            for (j, &pj) in probs.iter().enumerate() {
                p *= if mask >> j & 1 == 1 { pj } else { 1.0 - pj };
            }
            total += p;
        }
        total
    }

    #[test]
    fn poisson_binomial_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.random_range(1..=12);
            let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
            for c in 0..=n + 1 {
                let dp = poisson_binomial_tail(&probs, c);
                let bf = brute_force_tail(&probs, c);
                assert!((dp - bf).abs() <= 1e-12, "n={n} c={c}: {dp} vs {bf}");
            }
        }
    }

    proptest! {
        #[test]
        fn poisson_binomial_monotone(
            seed in 0u64..500,
            n in 1usize..10,
            c in 1usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
            let c = c.min(n);
            // Nonincreasing in the threshold.
            prop_assert!(poisson_binomial_tail(&probs, c) <= poisson_binomial_tail(&probs, c - 1) + 1e-15);
            // Nondecreasing in each probability.
            let base = poisson_binomial_tail(&probs, c);
            for k in 0..n {
                let mut bumped = probs.clone();
                bumped[k] = (bumped[k] + 0.1).min(1.0);
                prop_assert!(poisson_binomial_tail(&bumped, c) + 1e-15 >= base);
            }
        }
    }

    #[test]
    fn el_farol_degenerate_payoffs_leave_regularizer() {
        // g == s and b == g reduce the payoff part to zero; allowed here by
        // constructing the field directly rather than through validation.
        let p = ElFarolParams { n_players: 2, capacity: 1, s: 1.0, b: 1.0, g: 1.0 };
        let mu = 0.5;
        let z = [0.8, 0.3];
        for i in 0..2 {
            let tail = poisson_binomial_tail(&[z[1 - i]], p.capacity);
            let g = (p.s - p.g) + tail * (p.g - p.b) + mu * (z[i] - 0.5);
            assert!((g - mu * (z[i] - 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn el_farol_field_hand_evaluation() {
        // Two players, capacity 1, payoffs (s, b, g) = (0, -1, 1), mu = 0.5,
        // both visiting: the tail is z_2 = 1 and the loss is the negated
        // expected payoff, so g_1 = (0-1) + 1*(1-(-1)) + 0.5*(1-0.5) = 1.25.
        let p = ElFarolParams { n_players: 2, capacity: 1, s: 0.0, b: -1.0, g: 1.0 };
        let game = HiddenGame::el_farol(p, 0.5).unwrap();
        let g = game.field(&vec![vec![1.0], vec![1.0]]).unwrap();
        assert!((g[0][0] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn el_farol_fixed_point_is_stationary() {
        let p = ElFarolParams::default();
        let game = HiddenGame::el_farol(p.clone(), 0.5).unwrap();
        let g = game.field(game.z_star()).unwrap();
        assert!(
            flatten(&g).iter().all(|v| v.abs() <= 1e-9),
            "field residual at fixed point: {:e}",
            flatten(&g).iter().fold(0.0f64, |m, v| m.max(v.abs()))
        );
        // The fixed point sits near, but not exactly at, capacity/n.
        let dist_cn = (game.z_star()[0][0] - p.capacity as f64 / p.n_players as f64).abs();
        assert!(dist_cn < 0.05, "fixed point {} vs c/n", game.z_star()[0][0]);
        assert!(dist_cn > 0.0);
    }

    #[test]
    fn el_farol_validation() {
        let bad = ElFarolParams { b: 0.9, ..Default::default() };
        assert!(HiddenGame::el_farol(bad, 0.5).is_err());
        let bad = ElFarolParams { capacity: 99, ..Default::default() };
        assert!(HiddenGame::el_farol(bad, 0.5).is_err());
    }

    #[test]
    fn kl_field_values() {
        let game = HiddenGame::kl_demo();
        let g = game.field(&vec![KL_TARGET.to_vec()]).unwrap();
        for v in &g[0] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let t = game.project_tangent(&g);
        assert!(flatten(&t).iter().all(|v| v.abs() < 1e-12));

        let g = game.field(&vec![vec![1.0 / 3.0; 3]]).unwrap();
        for (v, pk) in g[0].iter().zip(KL_TARGET) {
            assert!((v - ((1.0 / 3.0f64) / pk).ln() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_value_nonnegative_gibbs() {
        let game = HiddenGame::kl_demo();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let z = game.sample_domain_point(&mut rng);
            let kl = game.scalar_loss(0, &z).unwrap();
            assert!(kl >= -1e-12);
        }
        assert!(game.scalar_loss(0, &vec![KL_TARGET.to_vec()]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn monotonicity_probe_matching_pennies() {
        let game = HiddenGame::matching_pennies(0.75).unwrap();
        let (min_q, violations) = monotonicity_probe(&game, 1000, 3);
        assert!(min_q >= 0.75 - 1e-9, "min quotient {min_q}");
        assert_eq!(violations, 0);

        let game0 = HiddenGame::matching_pennies(0.0).unwrap();
        let (min_q, violations) = monotonicity_probe(&game0, 1000, 3);
        assert!(min_q >= -1e-9 && min_q.is_finite());
        assert_eq!(violations, 0);
    }

    #[test]
    fn monotonicity_probe_rps() {
        let game = HiddenGame::rock_paper_scissors(0.2).unwrap();
        let (min_q, violations) = monotonicity_probe(&game, 1000, 4);
        assert!(min_q >= 0.2 - 1e-6, "min quotient {min_q}");
        assert_eq!(violations, 0);
    }

    #[test]
    fn shapley_monotonicity_depends_on_modulus() {
        // The cross term -(A+B)/2 has largest tangent singular value
        // sqrt((0.5-1.5b)^2 + 0.75(1-b)^2)/2 = 0.36055... at beta = 0.2, so
        // the probe floor is mu minus that; mu = 0.2 is not monotone while
        // mu = 0.5 is strongly monotone with modulus ~0.139.
        let beta: f64 = 0.2;
        let sigma_cross =
            (((0.5 - 1.5 * beta).powi(2) + 0.75 * (1.0 - beta).powi(2)).sqrt()) / 2.0;

        let weak = HiddenGame::shapley(beta, 0.2).unwrap();
        let (min_q, violations) = monotonicity_probe(&weak, 2000, 5);
        assert!(min_q >= 0.2 - sigma_cross - 1e-9, "quotient {min_q} below theory floor");
        assert!(min_q < 0.2 && violations > 0, "mu=0.2 should show violations");

        let strong = HiddenGame::shapley(beta, 0.5).unwrap();
        let (min_q, _) = monotonicity_probe(&strong, 2000, 5);
        assert!(min_q >= 0.5 - sigma_cross - 1e-9);
        assert!(min_q > 0.1, "mu=0.5 is strongly monotone, got {min_q}");
    }

    #[test]
    fn el_farol_probe_strongly_monotone_with_reduced_modulus() {
        // The congestion coupling eats into the regularizer modulus: the
        // probe floor is mu - (g - b) * max pmf, not mu itself.
        let game = HiddenGame::el_farol(ElFarolParams::default(), 0.5).unwrap();
        let (min_q, _) = monotonicity_probe(&game, 500, 6);
        assert!(min_q > 0.2, "congestion game should stay strongly monotone, got {min_q}");
        assert!(min_q < 0.5, "coupling should reduce the observed modulus, got {min_q}");
    }

    #[test]
    fn fields_vanish_tangentially_at_reference_equilibria() {
        let games = [
            HiddenGame::matching_pennies(0.75).unwrap(),
            HiddenGame::rock_paper_scissors(0.2).unwrap(),
            HiddenGame::el_farol(ElFarolParams::default(), 0.5).unwrap(),
        ];
        for game in &games {
            let g = game.field(game.z_star()).unwrap();
            let t = game.project_tangent(&g);
            assert!(
                flatten(&t).iter().all(|v| v.abs() <= 1e-9),
                "{:?} field at z*",
                game.params()
            );
        }
        // Shapley and the KL demo vanish only after tangent projection.
        for game in [HiddenGame::shapley(0.2, 0.2).unwrap(), HiddenGame::kl_demo()] {
            let g = game.field(game.z_star()).unwrap();
            let t = game.project_tangent(&g);
            assert!(flatten(&t).iter().all(|v| v.abs() <= 1e-9));
        }
    }

    #[test]
    fn simplex_sampling_stays_in_domain() {
        let d = PlayerDomain::Simplex(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let z = d.sample(&mut rng);
            assert!(d.contains(&z, 1e-12));
        }
    }
}
