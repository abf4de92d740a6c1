//! Domain types shared by every module: arms, reward vectors, problem
//! instances, observation batches, the environment contract and the
//! path-keyed random streams that make runs reproducible.

use std::fmt;
use std::ops::Deref;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Dense arm index in `[0, K)`. Ordering by index is the global tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmId(pub usize);

impl ArmId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for ArmId {
    fn from(i: usize) -> Self {
        ArmId(i)
    }
}

/// One score per objective, every objective oriented so larger is better.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector<T>(Vec<T>);

impl<T: Scalar> RewardVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("reward vector has no objectives".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "reward vector has non-finite entry {bad}"
            )));
        }
        Ok(RewardVector(values))
    }

    pub(crate) fn new_unchecked(values: Vec<T>) -> Self {
        RewardVector(values)
    }

    pub fn zeros(m: usize) -> Self {
        RewardVector(vec![T::zero(); m])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    /// Coordinate-wise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Self {
        RewardVector(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect())
    }

    /// Coordinate-wise mean of a non-empty sample.
    pub fn mean<'a, I>(samples: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a RewardVector<T>>,
    {
        let mut iter = samples.into_iter();
        let first = iter.next()?;
        let mut acc = first.0.clone();
        let mut n = 1usize;
        for s in iter {
            for (a, &v) in acc.iter_mut().zip(&s.0) {
                *a += v;
            }
            n += 1;
        }
        let n = T::of_usize(n);
        acc.iter_mut().for_each(|a| *a /= n);
        Some(RewardVector(acc))
    }
}

impl<T> Deref for RewardVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Ground truth for a bandit problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    means: Matrix<T>,
    features: Option<Matrix<T>>,
    theta: Option<Matrix<T>>,
    sigma: T,
}

/// On-disk JSON layout of an [`Instance`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstanceFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub m: usize,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<Vec<f64>>>,
}

impl<T: Scalar> Instance<T> {
    /// Instance given directly by its mean matrix (rows = arms).
    pub fn from_means(means: Matrix<T>, sigma: T) -> Result<Self> {
        let inst = Instance {
            means,
            features: None,
            theta: None,
            sigma,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Linear instance `means = features · theta`.
    pub fn linear(features: Matrix<T>, theta: Matrix<T>, sigma: T) -> Result<Self> {
        let means = features.matmul(&theta)?;
        let inst = Instance {
            means,
            features: Some(features),
            theta: Some(theta),
            sigma,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Mean matrix plus a feature map, without a known parameter.
    pub fn with_features(means: Matrix<T>, features: Matrix<T>, sigma: T) -> Result<Self> {
        let inst = Instance {
            means,
            features: Some(features),
            theta: None,
            sigma,
        };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<()> {
        let (k, m) = (self.means.nrows(), self.means.ncols());
        if k < 1 {
            return Err(Error::Instance("instance needs at least one arm".into()));
        }
        if m < 2 {
            return Err(Error::Instance(format!(
                "instance needs m >= 2 objectives, got {m}"
            )));
        }
        if !(self.sigma >= T::zero()) || !self.sigma.is_finite() {
            return Err(Error::Instance(format!(
                "noise scale must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.means.rows_iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Instance("non-finite mean".into()));
        }
        if let Some(f) = &self.features {
            if f.nrows() != k || f.ncols() < 1 {
                return Err(Error::Instance(format!(
                    "features must be {k}xd with d >= 1, got {}x{}",
                    f.nrows(),
                    f.ncols()
                )));
            }
            if let Some(theta) = &self.theta {
                if theta.nrows() != f.ncols() || theta.ncols() != m {
                    return Err(Error::Instance(format!(
                        "theta must be {}x{m}, got {}x{}",
                        f.ncols(),
                        theta.nrows(),
                        theta.ncols()
                    )));
                }
                let implied = f.matmul(theta)?;
                let tol = T::lit(1e-9);
                for i in 0..k {
                    for j in 0..m {
                        let (a, b) = (implied[(i, j)], self.means[(i, j)]);
                        if (a - b).abs() > tol * T::one().max(a.abs()) {
                            return Err(Error::Instance(format!(
                                "means[{i}][{j}] = {b} differs from features·theta = {a}"
                            )));
                        }
                    }
                }
            }
        } else if self.theta.is_some() {
            return Err(Error::Instance("theta given without features".into()));
        }
        Ok(())
    }

    pub fn num_arms(&self) -> usize {
        self.means.nrows()
    }

    pub fn num_objectives(&self) -> usize {
        self.means.ncols()
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn means(&self) -> &Matrix<T> {
        &self.means
    }

    pub fn mean(&self, arm: ArmId) -> RewardVector<T> {
        RewardVector(self.means.row(arm.0).to_vec())
    }

    pub fn features(&self) -> Option<&Matrix<T>> {
        self.features.as_ref()
    }

    pub fn theta(&self) -> Option<&Matrix<T>> {
        self.theta.as_ref()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|f| f.ncols())
    }

    /// Keeps only the first `k` arms.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k < 1 || k > self.num_arms() {
            return Err(Error::Config(format!(
                "cannot restrict a {}-arm instance to {k} arms",
                self.num_arms()
            )));
        }
        let take = |m: &Matrix<T>| Matrix::from_rows(&m.to_rows()[..k]);
        Ok(Instance {
            means: take(&self.means)?,
            features: self.features.as_ref().map(take).transpose()?,
            theta: self.theta.clone(),
            sigma: self.sigma,
        })
    }

    pub fn from_file_repr(file: &InstanceFile) -> Result<Self> {
        let conv = |rows: &Vec<Vec<f64>>| -> Result<Matrix<T>> {
            let rows: Vec<Vec<T>> = rows
                .iter()
                .map(|r| r.iter().map(|&v| T::lit(v)).collect())
                .collect();
            Matrix::from_rows(&rows)
        };
        let means = file.means.as_ref().map(conv).transpose()?;
        let features = file.features.as_ref().map(conv).transpose()?;
        let theta = file.theta.as_ref().map(conv).transpose()?;
        let sigma = T::lit(file.sigma);
        let inst = match (means, features, theta) {
            (Some(means), features, theta) => {
                let inst = Instance {
                    means,
                    features,
                    theta,
                    sigma,
                };
                inst.validate()?;
                inst
            }
            (None, Some(f), Some(th)) => Instance::linear(f, th, sigma)?,
            _ => {
                return Err(Error::Parse(
                    "instance needs `means`, or both `features` and `theta`".into(),
                ))
            }
        };
        if inst.num_arms() != file.k || inst.num_objectives() != file.m {
            return Err(Error::Parse(format!(
                "declared K={} m={} but matrices are {}x{}",
                file.k,
                file.m,
                inst.num_arms(),
                inst.num_objectives()
            )));
        }
        Ok(inst)
    }

    pub fn to_file_repr(&self) -> InstanceFile {
        let conv = |m: &Matrix<T>| -> Vec<Vec<f64>> {
            m.rows_iter()
                .map(|r| r.iter().map(|v| v.as_f64()).collect())
                .collect()
        };
        InstanceFile {
            k: self.num_arms(),
            m: self.num_objectives(),
            sigma: self.sigma.as_f64(),
            means: Some(conv(&self.means)),
            features: self.features.as_ref().map(conv),
            theta: self.theta.as_ref().map(conv),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("instance JSON: {e}")))?;
        Self::from_file_repr(&file)
    }
}

/// One recorded pull.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub arm: ArmId,
    pub feature: Vec<T>,
    pub reward: RewardVector<T>,
    pub round: usize,
}

/// Append-only log of `(arm, φ(arm), reward, round)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch<T> {
    rows: Vec<Observation<T>>,
}

impl<T> Default for ObservationBatch<T> {
    fn default() -> Self {
        ObservationBatch { rows: Vec::new() }
    }
}

impl<T: Scalar> ObservationBatch<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, obs: Observation<T>) {
        self.rows.push(obs);
    }

    pub fn rows(&self) -> &[Observation<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation<T>> {
        self.rows.iter()
    }

    /// Copy of the rows recorded in `round`.
    pub fn round(&self, round: usize) -> ObservationBatch<T> {
        ObservationBatch {
            rows: self
                .rows
                .iter()
                .filter(|o| o.round == round)
                .cloned()
                .collect(),
        }
    }

    pub fn count_for(&self, arm: ArmId) -> usize {
        self.rows.iter().filter(|o| o.arm == arm).count()
    }
}

impl<T> FromIterator<Observation<T>> for ObservationBatch<T> {
    fn from_iter<I: IntoIterator<Item = Observation<T>>>(iter: I) -> Self {
        ObservationBatch {
            rows: iter.into_iter().collect(),
        }
    }
}

/// Deterministic random stream keyed by `(seed, path)`.
///
/// The key is expanded into a ChaCha seed, so streams with equal keys
/// replay identical draws and streams on different paths are independent
/// regardless of the order in which they are created.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
    rng: ChaCha12Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, path: &[u64]) -> Self {
        let mut state = seed;
        // Fold the path length in so (s, [a]) and (s, [a, 0]) differ.
        let mut key =
            splitmix64(&mut state) ^ (path.len() as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
        for &p in path {
            state ^= key;
            state = state.wrapping_add(p.wrapping_mul(0xA076_1D64_78BD_642F));
            key = splitmix64(&mut state);
        }
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        RngStream {
            seed,
            path: path.to_vec(),
            rng: ChaCha12Rng::from_seed(bytes),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Independent sub-stream one level deeper.
    pub fn child(&self, index: u64) -> RngStream {
        let mut path = self.path.clone();
        path.push(index);
        RngStream::new(self.seed, &path)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.rng)
    }

    /// Uniform index in `[0, n)`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        rand::Rng::random_range(&mut self.rng, 0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// A reward source. Implementations are immutable after construction:
/// all randomness comes from the caller's stream.
pub trait Environment<T: Scalar>: Send + Sync {
    fn num_arms(&self) -> usize;

    fn num_objectives(&self) -> usize;

    /// Feature map φ as a K×d matrix, when the environment has one.
    fn features(&self) -> Option<&Matrix<T>>;

    /// True expected reward of every arm (K×m).
    fn means(&self) -> &Matrix<T>;

    /// Draws one reward vector for `arm`. Callers go through [`env_pull`],
    /// which has already range-checked the arm.
    fn sample(&self, arm: ArmId, rng: &mut RngStream) -> RewardVector<T>;
}

/// Pulls `arm` once.
pub fn env_pull<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    arm: ArmId,
    rng: &mut RngStream,
) -> Result<RewardVector<T>> {
    if arm.0 >= env.num_arms() {
        return Err(Error::Domain(format!(
            "arm {arm} out of range for {} arms",
            env.num_arms()
        )));
    }
    Ok(env.sample(arm, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_is_coordinate_wise() {
        let a = RewardVector::<f64>::new(vec![0.2, 0.6]).unwrap();
        let b = RewardVector::new(vec![0.4, 0.8]).unwrap();
        let m = RewardVector::mean([&a, &b]).unwrap();
        assert!((m[0] - 0.3).abs() < 1e-15 && (m[1] - 0.7).abs() < 1e-15);
        assert_eq!(b.sub(&a).values().len(), 2);
    }

    #[test]
    fn reward_vector_rejects_nan() {
        assert!(RewardVector::new(vec![0.1, f64::NAN]).is_err());
        assert!(RewardVector::new(vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn streams_replay_and_diverge() {
        let mut a = RngStream::new(7, &[1, 2, 3]);
        let mut b = RngStream::new(7, &[1, 2, 3]);
        let mut c = RngStream::new(7, &[1, 2, 4]);
        let mut d = RngStream::new(7, &[1, 2, 3, 0]);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        let xd: Vec<u64> = (0..8).map(|_| d.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_ne!(xa, xd);
        assert_eq!(RngStream::new(7, &[1, 2]).child(3).next_u64(), xa[0]);
    }

    #[test]
    fn linear_instance_checks_consistency() {
        let f = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let th = Matrix::from_rows(&[[0.3, 0.7], [0.5, 0.1]]).unwrap();
        let inst = Instance::linear(f.clone(), th.clone(), 0.1).unwrap();
        assert_eq!(inst.mean(ArmId(1)).values(), &[0.5, 0.1]);

        let mut file = inst.to_file_repr();
        file.means.as_mut().unwrap()[0][0] = 0.31;
        assert!(Instance::<f64>::from_file_repr(&file).is_err());
    }

    #[test]
    fn instance_needs_two_objectives() {
        let m = Matrix::from_rows(&[[1.0], [0.0]]).unwrap();
        assert!(matches!(
            Instance::from_means(m, 0.0),
            Err(Error::Instance(_))
        ));
    }

    #[test]
    fn instance_json_round_trip() {
        let text = r#"{"K": 2, "m": 2, "sigma": 0.5, "means": [[0.1, 0.2], [0.3, 0.4]]}"#;
        let inst = Instance::<f64>::from_json(text).unwrap();
        assert_eq!(inst.num_arms(), 2);
        let back = serde_json::to_string(&inst.to_file_repr()).unwrap();
        assert_eq!(Instance::<f64>::from_json(&back).unwrap(), inst);
    }
}
