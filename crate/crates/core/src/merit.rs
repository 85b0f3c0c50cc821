//! Convergence metrics: the energy function, latent equilibrium distance,
//! tangent residual gaps, the restricted gap function, and the per-step
//! template-inequality residuals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{self, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::games::{HiddenGame, PlayerDomain};
use crate::numkit::norm2;
use crate::repmaps::ProductRepMap;
use crate::{flatten, profile_dist2, Profile};

/// A bundle of the convergence metrics at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MeritReport {
    /// Latent equilibrium distance `0.5 * ||phi(x) - z*||^2`.
    pub err: f64,
    /// Energy against the supplied test point (equals `err` at `z*`).
    pub energy: f64,
    pub tgap_latent: f64,
    pub tgap_control: f64,
    /// Sampled lower bound on the restricted gap.
    pub gap_restricted: f64,
    pub sample_count: usize,
}

/// `0.5 * ||z - z_hat||^2` over flat vectors.
pub fn energy(z: &[f64], z_hat: &[f64]) -> Result<f64> {
    if z.len() != z_hat.len() {
        return Err(Error::ShapeMismatch(format!(
            "energy between vectors of length {} and {}",
            z.len(),
            z_hat.len()
        )));
    }
    Ok(0.5 * z.iter().zip(z_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

/// Energy between two per-player profiles.
pub fn energy_profiles(z: &Profile, z_hat: &Profile) -> f64 {
    0.5 * profile_dist2(z, z_hat)
}

/// Latent equilibrium distance of a control profile.
pub fn err(x: &Profile, maps: &ProductRepMap, z_star: &Profile) -> Result<f64> {
    Ok(energy_profiles(&maps.eval(x)?, z_star))
}

/// Norm of the tangent-cone projection of the descent direction `-g(z)`.
///
/// Interior points keep the full field; simplex blocks lose their all-ones
/// normal; cube coordinates sitting on a face lose the outward component.
pub fn tgap_latent(z: &Profile, game: &HiddenGame) -> Result<f64> {
    let g = game.field(z)?;
    let mut total = 0.0;
    for ((gi, zi), domain) in g.iter().zip(z).zip(game.domain()) {
        match domain {
            PlayerDomain::Simplex(_) => {
                let t = domain.project_affine_tangent(gi);
                total += t.iter().map(|v| v * v).sum::<f64>();
            }
            PlayerDomain::Box01(_) => {
                for (&gv, &zv) in gi.iter().zip(zi) {
                    // Admissible displacements point inward at a face.
                    let c = if zv <= 0.0 {
                        (-gv).max(0.0)
                    } else if zv >= 1.0 {
                        gv.max(0.0)
                    } else {
                        gv.abs()
                    };
                    total += c * c;
                }
            }
        }
    }
    Ok(total.sqrt())
}

/// Euclidean norm of the control field `V(x)`.
pub fn tgap_control(x: &Profile, game: &HiddenGame, maps: &ProductRepMap) -> Result<f64> {
    let v = dynamics::control_field(game, maps, x)?;
    Ok(norm2(&flatten(&v)))
}

fn project_onto_domain(domain: &PlayerDomain, v: &mut [f64]) {
    match domain {
        PlayerDomain::Box01(_) => {
            for x in v.iter_mut() {
                *x = x.clamp(0.0, 1.0);
            }
        }
        PlayerDomain::Simplex(d) => {
            // Euclidean projection onto the simplex by sorting.
            let mut sorted: Vec<f64> = v.to_vec();
            sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite coordinates"));
            let mut cumulative = 0.0;
            let mut theta = 0.0;
            for (k, &u) in sorted.iter().enumerate() {
                cumulative += u;
                let candidate = (cumulative - 1.0) / (k + 1) as f64;
                if u - candidate > 0.0 {
                    theta = candidate;
                } else {
                    break;
                }
            }
            let _ = d;
            for x in v.iter_mut() {
                *x = (*x - theta).max(0.0);
            }
        }
    }
}

fn gap_objective(game: &HiddenGame, z_hat: &Profile, z: &Profile) -> f64 {
    match game.field(z) {
        Ok(g) => g
            .iter()
            .zip(z_hat)
            .zip(z)
            .map(|((gi, zhi), zi)| {
                gi.iter().zip(zhi).zip(zi).map(|((gv, zh), zv)| gv * (zh - zv)).sum::<f64>()
            })
            .sum(),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Monte-Carlo maximization of `<g(z), z_hat - z>` over the latent domain.
///
/// Every sampled candidate (and `z_hat` itself) is refined by a few steps of
/// projected gradient ascent, and the running maximum over everything
/// evaluated is returned. The result is a LOWER bound on the true restricted
/// gap; it is nonnegative because `z = z_hat` is always a candidate, and it
/// is nondecreasing in `samples` for a fixed seed because extra samples only
/// extend the evaluated set.
pub fn gap_restricted(
    z_hat: &Profile,
    game: &HiddenGame,
    samples: usize,
    refine_steps: usize,
    seed: u64,
) -> f64 {
    assert!(samples >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = gap_objective(game, z_hat, z_hat);
    best = best.max(refine(game, z_hat, z_hat.clone(), refine_steps));
    for _ in 0..samples {
        let z = game.sample_domain_point(&mut rng);
        best = best.max(gap_objective(game, z_hat, &z));
        best = best.max(refine(game, z_hat, z, refine_steps));
    }
    best
}

/// Projected gradient ascent on the gap objective from a given candidate,
/// with a finite-difference gradient and a halving step search.
fn refine(game: &HiddenGame, z_hat: &Profile, mut z: Profile, steps: usize) -> f64 {
    if steps == 0 {
        return gap_objective(game, z_hat, &z);
    }
    let h = 1e-6;
    let mut best = gap_objective(game, z_hat, &z);
    let mut step = 0.25;
    for _ in 0..steps {
        // Finite-difference gradient of the objective in z.
        let mut grad: Profile = Vec::with_capacity(z.len());
        for i in 0..z.len() {
            let mut gi = vec![0.0; z[i].len()];
            for k in 0..z[i].len() {
                let mut zp = z.clone();
                zp[i][k] += h;
                project_onto_domain(&game.domain()[i], &mut zp[i]);
                let mut zm = z.clone();
                zm[i][k] -= h;
                project_onto_domain(&game.domain()[i], &mut zm[i]);
                let denom = zp[i][k] - zm[i][k];
                gi[k] = if denom.abs() > 0.0 {
                    (gap_objective(game, z_hat, &zp) - gap_objective(game, z_hat, &zm)) / denom
                } else {
                    0.0
                };
            }
            grad.push(gi);
        }
        let mut candidate = z.clone();
        for i in 0..z.len() {
            for k in 0..z[i].len() {
                candidate[i][k] = z[i][k] + step * grad[i][k];
            }
            project_onto_domain(&game.domain()[i], &mut candidate[i]);
        }
        let val = gap_objective(game, z_hat, &candidate);
        if val > best {
            best = val;
            z = candidate;
        } else {
            step *= 0.5;
            if step < 1e-6 {
                break;
            }
        }
    }
    best
}

/// Evaluates both sides of the singular-value sandwich at one control point:
/// returns `(sigma_min * t, ||V(x)||, sigma_max * t)` where `t` is the
/// latent field norm projected onto the per-player Jacobian ranges and the
/// singular-value bounds are taken block-wise at this very point.
pub fn sandwich_probe(
    x: &Profile,
    game: &HiddenGame,
    maps: &ProductRepMap,
) -> Result<(f64, f64, f64)> {
    let z = maps.eval(x)?;
    let g = game.field(&z)?;
    let jacobians = maps.jacobians(x)?;
    let mut sigma_min = f64::INFINITY;
    let mut sigma_max = 0.0f64;
    let mut t2 = 0.0;
    let mut v2 = 0.0;
    for (j, gi) in jacobians.iter().zip(&g) {
        let f = crate::numkit::svd(j)?;
        sigma_min = sigma_min.min(f.sigma_min());
        sigma_max = sigma_max.max(f.sigma_max());
        // Range projection of the latent block: U_r U_r^T g_i with columns
        // below the relative cutoff dropped.
        let cutoff = crate::numkit::DEFAULT_RANK_TOL * f.sigma_max() * j.rows().max(j.cols()) as f64;
        let mut proj = vec![0.0; gi.len()];
        for (k, &s) in f.sigma.iter().enumerate() {
            if s <= cutoff {
                continue;
            }
            let coeff: f64 = (0..gi.len()).map(|r| f.u.get(r, k) * gi[r]).sum();
            for (r, p) in proj.iter_mut().enumerate() {
                *p += coeff * f.u.get(r, k);
            }
        }
        t2 += proj.iter().map(|p| p * p).sum::<f64>();
        let vi = j.transpose().matvec(gi)?;
        v2 += vi.iter().map(|p| p * p).sum::<f64>();
    }
    let t = t2.sqrt();
    Ok((sigma_min * t, v2.sqrt(), sigma_max * t))
}

/// Full metric bundle at a control profile.
pub fn merit_report(
    x: &Profile,
    game: &HiddenGame,
    maps: &ProductRepMap,
    z_hat: Option<&Profile>,
    gap_samples: usize,
    gap_refine_steps: usize,
    seed: u64,
) -> Result<MeritReport> {
    let z = maps.eval(x)?;
    let e = energy_profiles(&z, game.z_star());
    Ok(MeritReport {
        err: e,
        energy: z_hat.map_or(e, |zh| energy_profiles(&z, zh)),
        tgap_latent: tgap_latent(&z, game)?,
        tgap_control: tgap_control(x, game, maps)?,
        gap_restricted: gap_restricted(&z, game, gap_samples, gap_refine_steps, seed),
        sample_count: gap_samples,
    })
}

/// Per-step residual of the energy recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateResidual {
    pub n: u64,
    pub r: f64,
}

/// Second-order residuals `r_n = [E_{n+1} - E_n + gamma_n <g(z_n), z_n - z_hat>] / gamma_n^2`
/// along a recorded trajectory. For deterministic runs the first-order error
/// term vanishes, so bounded residuals certify the per-step energy bound.
pub fn template_check(
    record: &TrajectoryRecord,
    game: &HiddenGame,
    z_hat: &Profile,
) -> Result<Vec<TemplateResidual>> {
    let steps = record.template.as_ref().ok_or(Error::MissingRecording)?;
    let mut out = Vec::with_capacity(steps.len());
    for (idx, w) in steps.windows(2).enumerate() {
        let (cur, next) = (&w[0], &w[1]);
        if cur.gamma == 0.0 {
            continue;
        }
        let e_cur = energy_profiles(&cur.z, z_hat);
        let e_next = energy_profiles(&next.z, z_hat);
        let g = game.field(&cur.z)?;
        let mut drift = 0.0;
        for i in 0..g.len() {
            for k in 0..g[i].len() {
                drift += g[i][k] * (cur.z[i][k] - z_hat[i][k]);
            }
        }
        let r = (e_next - e_cur + cur.gamma * drift) / (cur.gamma * cur.gamma);
        out.push(TemplateResidual { n: idx as u64, r });
    }
    Ok(out)
}
