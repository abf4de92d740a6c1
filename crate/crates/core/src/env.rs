//! Reward sources: Gaussian and linear synthetic environments, and a
//! replay environment that resamples recorded pulls.

use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::{ArmId, Environment, Instance, RewardVector, RngStream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Gaussian,
    Linear,
    Replay,
}

/// Token-length thresholds for [`brevity_score`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Brevity {
    pub tau_low: u64,
    pub tau_high: u64,
}

/// Piecewise-linear brevity: 1 up to `tau_low`, 0 from `tau_high` on.
pub fn brevity_score<T: Scalar>(length: u64, tau_low: u64, tau_high: u64) -> Result<T> {
    if tau_low >= tau_high {
        return Err(Error::Config(format!(
            "brevity thresholds need tau_low < tau_high, got {tau_low} and {tau_high}"
        )));
    }
    Ok(if length <= tau_low {
        T::one()
    } else if length >= tau_high {
        T::zero()
    } else {
        T::lit((tau_high - length) as f64 / (tau_high - tau_low) as f64)
    })
}

/// `μ(arm) + N(0, σ²)` per objective.
#[derive(Debug, Clone)]
pub struct GaussianEnv<T> {
    instance: Instance<T>,
}

impl<T: Scalar> GaussianEnv<T> {
    pub fn new(instance: Instance<T>) -> Self {
        GaussianEnv { instance }
    }

    pub fn instance(&self) -> &Instance<T> {
        &self.instance
    }
}

fn add_noise<T: Scalar>(mean: &[T], sigma: T, rng: &mut RngStream) -> RewardVector<T> {
    RewardVector::new_unchecked(
        mean.iter()
            .map(|&mu| mu + sigma * T::lit(rng.standard_normal()))
            .collect(),
    )
}

impl<T: Scalar> Environment<T> for GaussianEnv<T> {
    fn num_arms(&self) -> usize {
        self.instance.num_arms()
    }

    fn num_objectives(&self) -> usize {
        self.instance.num_objectives()
    }

    fn features(&self) -> Option<&Matrix<T>> {
        self.instance.features()
    }

    fn means(&self) -> &Matrix<T> {
        self.instance.means()
    }

    fn sample(&self, arm: ArmId, rng: &mut RngStream) -> RewardVector<T> {
        add_noise(
            self.instance.means().row(arm.index()),
            self.instance.sigma(),
            rng,
        )
    }
}

/// `φ(arm)ᵀθ + N(0, σ²)` per objective.
#[derive(Debug, Clone)]
pub struct LinearEnv<T> {
    instance: Instance<T>,
    theta_t: Matrix<T>,
}

impl<T: Scalar> LinearEnv<T> {
    pub fn new(instance: Instance<T>) -> Result<Self> {
        let theta_t = match (instance.features(), instance.theta()) {
            (Some(_), Some(theta)) => theta.transpose(),
            _ => {
                return Err(Error::Config(
                    "linear environment needs an instance with features and theta".into(),
                ))
            }
        };
        Ok(LinearEnv { instance, theta_t })
    }

    pub fn instance(&self) -> &Instance<T> {
        &self.instance
    }
}

impl<T: Scalar> Environment<T> for LinearEnv<T> {
    fn num_arms(&self) -> usize {
        self.instance.num_arms()
    }

    fn num_objectives(&self) -> usize {
        self.instance.num_objectives()
    }

    fn features(&self) -> Option<&Matrix<T>> {
        self.instance.features()
    }

    fn means(&self) -> &Matrix<T> {
        self.instance.means()
    }

    fn sample(&self, arm: ArmId, rng: &mut RngStream) -> RewardVector<T> {
        let phi = self
            .instance
            .features()
            .expect("checked in new")
            .row(arm.index());
        let mean: Vec<T> = self.theta_t.rows_iter().map(|col| dot(col, phi)).collect();
        add_noise(&mean, self.instance.sigma(), rng)
    }
}

/// Recorded reward vectors per arm, arms dense in `[0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTable<T> {
    records: Vec<Vec<RewardVector<T>>>,
}

impl<T: Scalar> ReplayTable<T> {
    pub fn new(records: Vec<Vec<RewardVector<T>>>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Config("replay table has no arms".into()));
        }
        let m = records
            .iter()
            .flatten()
            .next()
            .map(|r| r.dim())
            .ok_or_else(|| Error::Config("replay table has no records".into()))?;
        for (arm, rows) in records.iter().enumerate() {
            if rows.is_empty() {
                return Err(Error::Config(format!("replay arm {arm} has no records")));
            }
            if rows.iter().any(|r| r.dim() != m) {
                return Err(Error::Config(format!(
                    "replay arm {arm} has records of differing dimension (expected {m})"
                )));
            }
        }
        Ok(ReplayTable { records })
    }

    /// Parses `arm_id,len_tokens?,obj_1,…,obj_m`. With `brevity` set the
    /// `len_tokens` column is required and its score replaces `obj_2`
    /// (or becomes `obj_2` when the file has a single objective).
    pub fn from_csv<R: Read>(reader: R, brevity: Option<Brevity>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("replay header: {e}")))?
            .clone();
        if headers.get(0) != Some("arm_id") {
            return Err(Error::Parse(
                "replay CSV must start with an arm_id column".into(),
            ));
        }
        let has_len = headers.get(1) == Some("len_tokens");
        let first_obj = if has_len { 2 } else { 1 };
        let num_obj = headers.len().saturating_sub(first_obj);
        if brevity.is_some() && !has_len {
            return Err(Error::Config(
                "brevity needs a len_tokens column in the replay file".into(),
            ));
        }
        if num_obj == 0 || (num_obj < 2 && brevity.is_none()) {
            return Err(Error::Parse(format!(
                "replay CSV has {num_obj} objective columns"
            )));
        }

        let mut records: Vec<Vec<RewardVector<T>>> = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::Parse(format!("replay row {}: {e}", line + 1)))?;
            let field = |i: usize| row.get(i).unwrap_or("");
            let arm: usize = field(0).parse().map_err(|_| {
                Error::Parse(format!(
                    "replay row {}: bad arm_id {:?}",
                    line + 1,
                    field(0)
                ))
            })?;
            let mut values = (first_obj..first_obj + num_obj)
                .map(|i| {
                    field(i).parse::<f64>().map(T::lit).map_err(|_| {
                        Error::Parse(format!("replay row {}: bad value {:?}", line + 1, field(i)))
                    })
                })
                .collect::<Result<Vec<T>>>()?;
            if let Some(b) = brevity {
                let len: u64 = field(1).parse().map_err(|_| {
                    Error::Parse(format!(
                        "replay row {}: bad len_tokens {:?}",
                        line + 1,
                        field(1)
                    ))
                })?;
                let score = brevity_score(len, b.tau_low, b.tau_high)?;
                if values.len() >= 2 {
                    values[1] = score;
                } else {
                    values.push(score);
                }
            }
            if records.len() <= arm {
                records.resize_with(arm + 1, Vec::new);
            }
            records[arm].push(RewardVector::new(values)?);
        }
        Self::new(records)
    }

    pub fn from_path(path: &Path, brevity: Option<Brevity>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(file, brevity)
    }

    pub fn num_arms(&self) -> usize {
        self.records.len()
    }

    pub fn num_objectives(&self) -> usize {
        self.records[0][0].dim()
    }

    /// The first `k` arms.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.num_arms() {
            return Err(Error::Config(format!(
                "cannot keep {k} of {} replay arms",
                self.num_arms()
            )));
        }
        Ok(ReplayTable {
            records: self.records[..k].to_vec(),
        })
    }

    pub fn records(&self, arm: ArmId) -> &[RewardVector<T>] {
        &self.records[arm.index()]
    }

    /// Per-arm average of the records (K×m).
    pub fn means(&self) -> Matrix<T> {
        let rows: Vec<Vec<T>> = self
            .records
            .iter()
            .map(|r| {
                RewardVector::mean(r.iter())
                    .expect("non-empty")
                    .into_inner()
            })
            .collect();
        Matrix::from_rows(&rows).expect("rows share m")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayMode {
    /// Uniform draw with replacement.
    #[default]
    WithReplacement,
    /// Cycle through each arm's records in file order.
    Sequential,
}

/// Resamples recorded pulls. The sequential mode keeps one cursor per arm;
/// use a fresh environment per run.
#[derive(Debug)]
pub struct ReplayEnv<T> {
    table: ReplayTable<T>,
    means: Matrix<T>,
    features: Option<Matrix<T>>,
    mode: ReplayMode,
    cursors: Vec<AtomicUsize>,
}

impl<T: Scalar> ReplayEnv<T> {
    pub fn new(table: ReplayTable<T>, mode: ReplayMode) -> Self {
        let means = table.means();
        let cursors = (0..table.num_arms()).map(|_| AtomicUsize::new(0)).collect();
        ReplayEnv {
            table,
            means,
            features: None,
            mode,
            cursors,
        }
    }

    /// Attaches a feature map (e.g. reduced embeddings), one row per arm.
    pub fn with_features(mut self, features: Matrix<T>) -> Result<Self> {
        if features.nrows() != self.table.num_arms() {
            return Err(Error::Config(format!(
                "{} feature rows for {} replay arms",
                features.nrows(),
                self.table.num_arms()
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn table(&self) -> &ReplayTable<T> {
        &self.table
    }
}

impl<T: Scalar> Environment<T> for ReplayEnv<T> {
    fn num_arms(&self) -> usize {
        self.table.num_arms()
    }

    fn num_objectives(&self) -> usize {
        self.table.num_objectives()
    }

    fn features(&self) -> Option<&Matrix<T>> {
        self.features.as_ref()
    }

    fn means(&self) -> &Matrix<T> {
        &self.means
    }

    fn sample(&self, arm: ArmId, rng: &mut RngStream) -> RewardVector<T> {
        let rows = self.table.records(arm);
        let i = match self.mode {
            ReplayMode::WithReplacement => rng.index(rows.len()),
            ReplayMode::Sequential => {
                self.cursors[arm.index()].fetch_add(1, Ordering::Relaxed) % rows.len()
            }
        };
        rows[i].clone()
    }
}

pub enum EnvSource<T> {
    Instance(Instance<T>),
    Replay(ReplayTable<T>, ReplayMode),
}

pub fn make_environment<T: Scalar>(
    kind: EnvKind,
    source: EnvSource<T>,
) -> Result<Box<dyn Environment<T>>> {
    Ok(match (kind, source) {
        (EnvKind::Gaussian, EnvSource::Instance(i)) => Box::new(GaussianEnv::new(i)),
        (EnvKind::Linear, EnvSource::Instance(i)) => Box::new(LinearEnv::new(i)?),
        (EnvKind::Replay, EnvSource::Replay(t, mode)) => Box::new(ReplayEnv::new(t, mode)),
        (kind, _) => {
            return Err(Error::Config(format!(
                "environment kind {kind:?} does not match its source"
            )))
        }
    })
}
