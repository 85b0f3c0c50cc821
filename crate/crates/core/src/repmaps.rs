//! Per-player neural representation maps: two-layer MLPs with zero biases,
//! exact analytic Jacobians, and singular-value diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, DenseMatrix};
use crate::Profile;

/// Scalar weights of one-dimensional maps are resampled until they clear this
/// floor, so the map's derivative cannot start out degenerate.
pub const WEIGHT_FLOOR: f64 = 0.05;

const RESAMPLE_LIMIT: usize = 100;

/// Activation functions used by the map heads and hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    /// `max(0, t) + min(0, exp(t) - 1)`, applied elementwise.
    CeLu,
    /// `1 / (1 + exp(-t))`, applied elementwise.
    Sigmoid,
    /// `exp(t_k) / sum_j exp(t_j)`; maps R^k onto the open simplex.
    Softmax,
    Identity,
    /// Softmax with an implicit extra zero logit: maps R^k into the interior
    /// of the k-dimensional simplex (k+1 coordinates).
    Logit,
}

fn celu(t: f64) -> f64 {
    t.max(0.0) + f64::min(0.0, f64::exp_m1(t.min(0.0)))
}

/// The left and right limits at 0 are both 1, so the derivative is total.
fn celu_deriv(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        t.exp()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softmax(t: &[f64]) -> Vec<f64> {
    let m = t.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = t.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

impl Activation {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            Activation::Logit => input_dim + 1,
            _ => input_dim,
        }
    }

    /// Applies the activation to a pre-activation vector.
    pub fn apply(&self, pre: &[f64]) -> Vec<f64> {
        match self {
            Activation::CeLu => pre.iter().map(|&t| celu(t)).collect(),
            Activation::Sigmoid => pre.iter().map(|&t| sigmoid(t)).collect(),
            Activation::Softmax => softmax(pre),
            Activation::Identity => pre.to_vec(),
            Activation::Logit => {
                let mut ext = pre.to_vec();
                ext.push(0.0);
                softmax(&ext)
            }
        }
    }

    /// Derivative of the activation at `pre` as an output-by-input matrix.
    ///
    /// The softmax-style heads use `diag(p) - p p^T`.
    pub fn local_jacobian(&self, pre: &[f64]) -> DenseMatrix {
        let k = pre.len();
        match self {
            Activation::CeLu => DenseMatrix::diag(&pre.iter().map(|&t| celu_deriv(t)).collect::<Vec<_>>()),
            Activation::Sigmoid => DenseMatrix::diag(
                &pre.iter()
                    .map(|&t| {
                        let s = sigmoid(t);
                        s * (1.0 - s)
                    })
                    .collect::<Vec<_>>(),
            ),
            Activation::Identity => DenseMatrix::identity(k),
            Activation::Softmax => {
                let p = softmax(pre);
                let mut j = DenseMatrix::zeros(k, k);
                for r in 0..k {
                    for c in 0..k {
                        let d = if r == c { p[r] } else { 0.0 };
                        j.set(r, c, d - p[r] * p[c]);
                    }
                }
                j
            }
            Activation::Logit => {
                let p = self.apply(pre);
                let mut j = DenseMatrix::zeros(k + 1, k);
                for r in 0..=k {
                    for c in 0..k {
                        let d = if r == c { p[r] } else { 0.0 };
                        j.set(r, c, d - p[r] * p[c]);
                    }
                }
                j
            }
        }
    }
}

/// A single player's representation map: `head(w2 * hidden(w1 * x))`, with
/// all biases fixed to zero.
#[derive(Debug, Clone)]
pub struct MlpRepMap {
    w1: DenseMatrix,
    w2: DenseMatrix,
    hidden_act: Activation,
    head: Activation,
}

impl MlpRepMap {
    pub fn new(w1: DenseMatrix, w2: DenseMatrix, hidden_act: Activation, head: Activation) -> Result<Self> {
        if w2.cols() != hidden_act.output_dim(w1.rows()) {
            return Err(Error::ShapeMismatch(format!(
                "hidden layer emits {} values but w2 expects {}",
                hidden_act.output_dim(w1.rows()),
                w2.cols()
            )));
        }
        Ok(Self { w1, w2, hidden_act, head })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim(self.w2.rows())
    }

    pub fn w1(&self) -> &DenseMatrix {
        &self.w1
    }

    pub fn w2(&self) -> &DenseMatrix {
        &self.w2
    }

    pub fn head(&self) -> Activation {
        self.head
    }

    /// Evaluates the map at a control vector.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "map expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry("map input".into()));
        }
        let a1 = self.w1.matvec(x)?;
        let h = self.hidden_act.apply(&a1);
        let a2 = self.w2.matvec(&h)?;
        Ok(self.head.apply(&a2))
    }

    /// Exact chain-rule Jacobian at `x` (output_dim by input_dim).
    pub fn jacobian(&self, x: &[f64]) -> Result<DenseMatrix> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "map expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let a1 = self.w1.matvec(x)?;
        let h = self.hidden_act.apply(&a1);
        let a2 = self.w2.matvec(&h)?;
        let d_head = self.head.local_jacobian(&a2);
        let d_hidden = self.hidden_act.local_jacobian(&a1);
        d_head.matmul(&self.w2)?.matmul(&d_hidden)?.matmul(&self.w1)
    }

    /// Central-difference Jacobian estimate with step `h`; the oracle used to
    /// cross-check [`Self::jacobian`].
    pub fn jacobian_fd(&self, x: &[f64], h: f64) -> Result<DenseMatrix> {
        assert!(h > 0.0, "finite-difference step must be positive");
        let mut j = DenseMatrix::zeros(self.output_dim(), self.input_dim());
        let mut xp = x.to_vec();
        for c in 0..self.input_dim() {
            xp[c] = x[c] + h;
            let fp = self.eval(&xp)?;
            xp[c] = x[c] - h;
            let fm = self.eval(&xp)?;
            xp[c] = x[c];
            for r in 0..self.output_dim() {
                j.set(r, c, (fp[r] - fm[r]) / (2.0 * h));
            }
        }
        Ok(j)
    }
}

/// Architecture descriptors for the game suite's maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MapSpec {
    /// Scalar sigmoid map: 1 -> 1 -> 1, weights uniform in [-1, 1].
    Mp,
    /// Simplex map: 5 -> 4 -> softmax(3), weights uniform in [-1, 1].
    Rps,
    /// Same architecture as [`MapSpec::Rps`].
    Shapley,
    /// Scalar sigmoid map: 5 -> 4 -> 1, first layer in [-0.85, 0.85].
    ElFarol,
    /// Fixed logit embedding of R^2 into the 2-simplex; not sampled.
    KlDemo,
    Custom {
        input_dim: usize,
        hidden_dim: usize,
        head_dim: usize,
        hidden_act: Activation,
        head: Activation,
        w1_range: (f64, f64),
        w2_range: (f64, f64),
    },
}

impl MapSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MapSpec::Mp => "MP",
            MapSpec::Rps => "RPS",
            MapSpec::Shapley => "Shapley",
            MapSpec::ElFarol => "ElFarol",
            MapSpec::KlDemo => "KLdemo",
            MapSpec::Custom { .. } => "Custom",
        }
    }

    pub fn from_name(name: &str) -> Option<MapSpec> {
        match name {
            "MP" => Some(MapSpec::Mp),
            "RPS" => Some(MapSpec::Rps),
            "Shapley" => Some(MapSpec::Shapley),
            "ElFarol" => Some(MapSpec::ElFarol),
            "KLdemo" => Some(MapSpec::KlDemo),
            _ => None,
        }
    }
}

fn sample_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..=hi)).collect();
    DenseMatrix::new(rows, cols, data).expect("finite uniform draw")
}

/// Samples one player's map for the given architecture, deterministically for
/// a given seed. Scalar maps are re-drawn until the faithfulness guard holds.
pub fn sample_map(spec: &MapSpec, seed: u64) -> Result<MlpRepMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        MapSpec::Mp => {
            for _ in 0..RESAMPLE_LIMIT {
                let w1 = sample_weights(&mut rng, 1, 1, -1.0, 1.0);
                let w2 = sample_weights(&mut rng, 1, 1, -1.0, 1.0);
                if w1.get(0, 0).abs() >= WEIGHT_FLOOR && w2.get(0, 0).abs() >= WEIGHT_FLOOR {
                    return MlpRepMap::new(w1, w2, Activation::CeLu, Activation::Sigmoid);
                }
            }
            Err(Error::ResampleLimit(RESAMPLE_LIMIT))
        }
        MapSpec::Rps | MapSpec::Shapley => {
            let w1 = sample_weights(&mut rng, 4, 5, -1.0, 1.0);
            let w2 = sample_weights(&mut rng, 3, 4, -1.0, 1.0);
            MlpRepMap::new(w1, w2, Activation::CeLu, Activation::Softmax)
        }
        MapSpec::ElFarol => {
            let w1 = sample_weights(&mut rng, 4, 5, -0.85, 0.85);
            let w2 = sample_weights(&mut rng, 1, 4, -1.0, 1.0);
            MlpRepMap::new(w1, w2, Activation::CeLu, Activation::Sigmoid)
        }
        MapSpec::KlDemo => MlpRepMap::new(
            DenseMatrix::identity(2),
            DenseMatrix::identity(2),
            Activation::Identity,
            Activation::Logit,
        ),
        MapSpec::Custom {
            input_dim,
            hidden_dim,
            head_dim,
            hidden_act,
            head,
            w1_range,
            w2_range,
        } => {
            let w1 = sample_weights(&mut rng, *hidden_dim, *input_dim, w1_range.0, w1_range.1);
            let w2 = sample_weights(&mut rng, *head_dim, *hidden_dim, w2_range.0, w2_range.1);
            MlpRepMap::new(w1, w2, *hidden_act, *head)
        }
    }
}

/// The product map `phi = (phi_1, ..., phi_N)`; its Jacobian is the
/// block-diagonal ensemble of the per-player Jacobians.
#[derive(Debug, Clone)]
pub struct ProductRepMap {
    spec: MapSpec,
    seed: u64,
    players: Vec<MlpRepMap>,
}

impl ProductRepMap {
    /// Samples `n_players` independent maps; each player's weights come from
    /// a sub-seed derived from `seed`, so the whole product is reproducible.
    pub fn sample(spec: &MapSpec, n_players: usize, seed: u64) -> Result<Self> {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let players = (0..n_players)
            .map(|_| sample_map(spec, master.random()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec: spec.clone(), seed, players })
    }

    pub fn from_players(spec: MapSpec, seed: u64, players: Vec<MlpRepMap>) -> Self {
        Self { spec, seed, players }
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn player(&self, i: usize) -> &MlpRepMap {
        &self.players[i]
    }

    pub fn players(&self) -> &[MlpRepMap] {
        &self.players
    }

    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.players.iter().map(MlpRepMap::input_dim).collect()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.players.iter().map(MlpRepMap::output_dim).collect()
    }

    /// Evaluates every player's map.
    pub fn eval(&self, x: &Profile) -> Result<Profile> {
        if x.len() != self.players.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} players, got {} control blocks",
                self.players.len(),
                x.len()
            )));
        }
        self.players.iter().zip(x).map(|(m, xi)| m.eval(xi)).collect()
    }

    /// Per-player Jacobian blocks at `x`.
    pub fn jacobians(&self, x: &Profile) -> Result<Vec<DenseMatrix>> {
        if x.len() != self.players.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} players, got {} control blocks",
                self.players.len(),
                x.len()
            )));
        }
        self.players.iter().zip(x).map(|(m, xi)| m.jacobian(xi)).collect()
    }

    /// Smallest and largest Jacobian singular values over a set of probe
    /// points. Rank-deficient heads legitimately report a minimum near zero.
    pub fn sv_bounds(&self, probes: &[Profile]) -> Result<(f64, f64)> {
        assert!(!probes.is_empty(), "sv_bounds needs at least one probe point");
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for x in probes {
            for j in self.jacobians(x)? {
                let f = numkit::svd(&j)?;
                lo = lo.min(f.sigma_min());
                hi = hi.max(f.sigma_max());
            }
        }
        Ok((lo, hi))
    }
}

#[derive(Serialize, Deserialize)]
struct PlayerWeights {
    w1: Vec<Vec<f64>>,
    w2: Vec<Vec<f64>>,
}

/// On-disk form of a sampled product map, so experiments replay exactly.
#[derive(Serialize, Deserialize)]
struct MapDocument {
    spec: String,
    seed: u64,
    players: Vec<PlayerWeights>,
}

impl ProductRepMap {
    pub fn to_json(&self) -> String {
        let doc = MapDocument {
            spec: self.spec.name().to_string(),
            seed: self.seed,
            players: self
                .players
                .iter()
                .map(|p| PlayerWeights { w1: p.w1.to_rows(), w2: p.w2.to_rows() })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("map document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MapDocument = serde_json::from_str(text)
            .map_err(|e| Error::ShapeMismatch(format!("map document: {e}")))?;
        let spec = MapSpec::from_name(&doc.spec)
            .ok_or_else(|| Error::ShapeMismatch(format!("unknown map spec '{}'", doc.spec)))?;
        let (hidden_act, head) = match spec {
            MapSpec::Mp | MapSpec::ElFarol => (Activation::CeLu, Activation::Sigmoid),
            MapSpec::Rps | MapSpec::Shapley => (Activation::CeLu, Activation::Softmax),
            MapSpec::KlDemo => (Activation::Identity, Activation::Logit),
            MapSpec::Custom { .. } => unreachable!("custom specs are not named"),
        };
        let players = doc
            .players
            .into_iter()
            .map(|p| {
                MlpRepMap::new(
                    DenseMatrix::from_rows(&p.w1)?,
                    DenseMatrix::from_rows(&p.w2)?,
                    hidden_act,
                    head,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, seed: doc.seed, players })
    }
}

/// Identity-like map (`w1 = w2 = I`, identity activations) used by tests and
/// baselines where the control and latent layers coincide.
pub fn identity_map(dims: &[usize]) -> ProductRepMap {
    let players = dims
        .iter()
        .map(|&d| {
            MlpRepMap::new(
                DenseMatrix::identity(d),
                DenseMatrix::identity(d),
                Activation::Identity,
                Activation::Identity,
            )
            .expect("identity map is well-formed")
        })
        .collect();
    ProductRepMap::from_players(
        MapSpec::Custom {
            input_dim: dims[0],
            hidden_dim: dims[0],
            head_dim: dims[0],
            hidden_act: Activation::Identity,
            head: Activation::Identity,
            w1_range: (1.0, 1.0),
            w2_range: (1.0, 1.0),
        },
        0,
        players,
    )
}
