//! Deterministic SGD for linear regression, logistic regression and one-hidden-
//! layer networks.
//!
//! Everything is written once against [`Arithmetic`], so the native fixed-point
//! run, the float reference and the in-circuit replay execute the same
//! sequence of operations. Loss is `0.5 * (y_hat - y)^2` for every model kind;
//! batch size is one and points are visited in dataset order.

use std::collections::HashSet;
use std::fmt;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{Arithmetic, Native};
use crate::fixed::{FixedPoint, FixedPointError, Scalar, ScaleConfig};
use crate::hashing::{self, DataPoint, HashDigest, HashError, ENVELOPE_VERSION};
use crate::sigmoid::{SigmoidPoly, SIGMOID_COEFFS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrainingError {
    #[error("expected {expected} features, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("expected {expected} initial values, got {got}")]
    InitLength { expected: usize, got: usize },
    #[error("duplicate uid {0} in dataset")]
    DuplicateUid(u64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unsupported model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Overflow(#[from] FixedPointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
    NeuralNet { hidden: usize },
    /// The one-weight sentinel standing for "no model yet".
    Empty,
}

impl ModelKind {
    /// Number of parameters for inputs of width `arity`.
    pub fn param_count(&self, arity: usize) -> usize {
        match *self {
            ModelKind::LinearRegression | ModelKind::LogisticRegression => arity + 1,
            ModelKind::NeuralNet { hidden } => hidden * arity + 2 * hidden + 1,
            ModelKind::Empty => 1,
        }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        match *self {
            ModelKind::NeuralNet { hidden } if hidden != 2 && hidden != 4 => Err(
                TrainingError::InvalidModel(format!("hidden layer width {hidden} (expected 2 or 4)")),
            ),
            ModelKind::Empty => Err(TrainingError::InvalidModel("the empty sentinel is not trainable".into())),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ModelKind::LinearRegression => "linear".into(),
            ModelKind::LogisticRegression => "logistic".into(),
            ModelKind::NeuralNet { hidden } => format!("nn{hidden}"),
            ModelKind::Empty => "empty".into(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = TrainingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" | "linear-regression" => Ok(ModelKind::LinearRegression),
            "logistic" | "logistic-regression" => Ok(ModelKind::LogisticRegression),
            "nn2" => Ok(ModelKind::NeuralNet { hidden: 2 }),
            "nn4" => Ok(ModelKind::NeuralNet { hidden: 4 }),
            other => Err(TrainingError::InvalidModel(other.to_string())),
        }
    }
}

/// Model parameters in canonical order: `[w_1..w_n, b]` for the linear kinds;
/// hidden weights row-major, hidden biases, output weights, output bias for
/// networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<S = FixedPoint> {
    pub kind: ModelKind,
    pub arity: usize,
    pub weights: Vec<S>,
}

impl ModelParams<FixedPoint> {
    /// The `empty` model committed to before any training.
    pub fn empty() -> Self {
        ModelParams {
            kind: ModelKind::Empty,
            arity: 0,
            weights: vec![FixedPoint::ZERO],
        }
    }

    pub fn digest(&self) -> Result<HashDigest, HashError> {
        hashing::hash_model(&self.weights)
    }
}

/// On-disk form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub version: u32,
    pub kind: ModelKind,
    pub arity: usize,
    pub weights: Vec<FixedPoint>,
}

impl From<&ModelParams> for ModelEnvelope {
    fn from(m: &ModelParams) -> Self {
        ModelEnvelope {
            version: ENVELOPE_VERSION,
            kind: m.kind,
            arity: m.arity,
            weights: m.weights.clone(),
        }
    }
}

impl From<ModelEnvelope> for ModelParams {
    fn from(e: ModelEnvelope) -> Self {
        ModelParams {
            kind: e.kind,
            arity: e.arity,
            weights: e.weights,
        }
    }
}

/// Hyperparameters of a training run. The initial values are the frozen
/// "random" initialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize, S::Context: Serialize",
    deserialize = "S: Deserialize<'de>, S::Context: Deserialize<'de>"
))]
pub struct TrainConfig<S: Scalar = FixedPoint> {
    pub kind: ModelKind,
    pub arity: usize,
    pub epochs: usize,
    pub learning_rate: S,
    pub init_values: Vec<S>,
    pub scale: S::Context,
}

impl TrainConfig<FixedPoint> {
    /// Ten epochs, learning rate 0.1, default initialisation for `kind`.
    pub fn new(kind: ModelKind, arity: usize, scale: ScaleConfig) -> Result<Self, TrainingError> {
        kind.validate()?;
        Ok(TrainConfig {
            kind,
            arity,
            epochs: 10,
            learning_rate: FixedPoint::from_decimal_str("0.1", &scale)?,
            init_values: default_init(kind, arity, &scale)?,
            scale,
        })
    }
}

impl<S: Scalar> TrainConfig<S> {
    pub fn validate(&self) -> Result<(), TrainingError> {
        self.kind.validate()?;
        if self.arity == 0 {
            return Err(TrainingError::InvalidModel("arity must be at least 1".into()));
        }
        let expected = self.kind.param_count(self.arity);
        if self.init_values.len() != expected {
            return Err(TrainingError::InitLength {
                expected,
                got: self.init_values.len(),
            });
        }
        Ok(())
    }

    pub fn sigmoid(&self) -> Result<SigmoidPoly<S>, TrainingError> {
        Ok(SigmoidPoly::from_coeffs(SIGMOID_COEFFS, &self.scale)?)
    }

    /// Re-expresses the configuration in another scalar type through `f64`.
    pub fn convert<T: Scalar>(&self, ctx: T::Context) -> Result<TrainConfig<T>, TrainingError> {
        let conv = |v: &S| T::from_f64(v.to_f64(&self.scale), &ctx);
        Ok(TrainConfig {
            kind: self.kind,
            arity: self.arity,
            epochs: self.epochs,
            learning_rate: conv(&self.learning_rate)?,
            init_values: self.init_values.iter().map(conv).collect::<Result<_, _>>()?,
            scale: ctx,
        })
    }
}

/// Zeros for the linear kinds; for networks, a fixed vector drawn once from a
/// seeded generator (uniform on `[-0.5, 0.5]`, five decimals).
pub fn default_init(kind: ModelKind, arity: usize, scale: &ScaleConfig) -> Result<Vec<FixedPoint>, TrainingError> {
    let n = kind.param_count(arity);
    match kind {
        ModelKind::NeuralNet { hidden } => {
            let seed = 0x5eed_0000_u64 ^ ((hidden as u64) << 8) ^ arity as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    let k: i64 = rng.gen_range(-50_000..=50_000);
                    let r = num_rational::BigRational::new(k.into(), 100_000.into());
                    FixedPoint::encode(&r, scale).map_err(TrainingError::from)
                })
                .collect()
        }
        _ => Ok(vec![FixedPoint::ZERO; n]),
    }
}

/// A feature vector with its label, in any scalar type.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub x: Vec<S>,
    pub y: S,
}

fn dot<V: Clone, A: Arithmetic<V>>(ar: &mut A, w: &[V], x: &[V], bias: &V) -> Result<V, A::Error> {
    let mut acc = ar.mul(&w[0], &x[0])?;
    for (wi, xi) in w.iter().zip(x).skip(1) {
        let t = ar.mul(wi, xi)?;
        acc = ar.add(&acc, &t);
    }
    Ok(ar.add(&acc, bias))
}

/// Model output for one input.
pub fn forward<V: Clone, A: Arithmetic<V>>(
    ar: &mut A,
    kind: ModelKind,
    arity: usize,
    sigmoid: &SigmoidPoly<V>,
    params: &[V],
    x: &[V],
) -> Result<V, A::Error> {
    match kind {
        ModelKind::LinearRegression => dot(ar, &params[..arity], x, &params[arity]),
        ModelKind::LogisticRegression => {
            let z = dot(ar, &params[..arity], x, &params[arity])?;
            sigmoid.eval(ar, &z)
        }
        ModelKind::NeuralNet { hidden } => {
            let (w, rest) = params.split_at(hidden * arity);
            let (b, rest) = rest.split_at(hidden);
            let (v, c) = rest.split_at(hidden);
            let mut h = Vec::with_capacity(hidden);
            for j in 0..hidden {
                let z = dot(ar, &w[j * arity..(j + 1) * arity], x, &b[j])?;
                h.push(sigmoid.eval(ar, &z)?);
            }
            let o = dot(ar, v, &h, &c[0])?;
            sigmoid.eval(ar, &o)
        }
        ModelKind::Empty => Ok(params[0].clone()),
    }
}

/// One SGD step on a single example; returns the updated parameters.
pub fn sgd_step<V: Clone, A: Arithmetic<V>>(
    ar: &mut A,
    kind: ModelKind,
    arity: usize,
    sigmoid: &SigmoidPoly<V>,
    learning_rate: &V,
    params: &[V],
    x: &[V],
    y: &V,
) -> Result<Vec<V>, A::Error> {
    // w_i -= g * x_i, b -= g
    fn descend<V: Clone, A: Arithmetic<V>>(ar: &mut A, w: &[V], b: &V, g: &V, x: &[V], out: &mut Vec<V>) -> Result<(), A::Error> {
        for (wi, xi) in w.iter().zip(x) {
            let t = ar.mul(g, xi)?;
            out.push(ar.sub(wi, &t));
        }
        out.push(ar.sub(b, g));
        Ok(())
    }

    let mut out = Vec::with_capacity(params.len());
    match kind {
        ModelKind::LinearRegression => {
            let pred = dot(ar, &params[..arity], x, &params[arity])?;
            let err = ar.sub(&pred, y);
            let g = ar.mul(learning_rate, &err)?;
            descend(ar, &params[..arity], &params[arity], &g, x, &mut out)?;
        }
        ModelKind::LogisticRegression => {
            let z = dot(ar, &params[..arity], x, &params[arity])?;
            let (pred, slope) = sigmoid.eval_with_derivative(ar, &z, true)?;
            let err = ar.sub(&pred, y);
            let delta = ar.mul(&err, &slope.expect("derivative requested"))?;
            let g = ar.mul(learning_rate, &delta)?;
            descend(ar, &params[..arity], &params[arity], &g, x, &mut out)?;
        }
        ModelKind::NeuralNet { hidden } => {
            let (w, rest) = params.split_at(hidden * arity);
            let (b, rest) = rest.split_at(hidden);
            let (v, c) = rest.split_at(hidden);
            let mut h = Vec::with_capacity(hidden);
            let mut h_slope = Vec::with_capacity(hidden);
            for j in 0..hidden {
                let z = dot(ar, &w[j * arity..(j + 1) * arity], x, &b[j])?;
                let (hj, sj) = sigmoid.eval_with_derivative(ar, &z, true)?;
                h.push(hj);
                h_slope.push(sj.expect("derivative requested"));
            }
            let o = dot(ar, v, &h, &c[0])?;
            let (pred, o_slope) = sigmoid.eval_with_derivative(ar, &o, true)?;
            let err = ar.sub(&pred, y);
            let delta_out = ar.mul(&err, &o_slope.expect("derivative requested"))?;
            let g_out = ar.mul(learning_rate, &delta_out)?;

            let mut hidden_w = Vec::with_capacity(hidden * arity);
            let mut hidden_b = Vec::with_capacity(hidden);
            for j in 0..hidden {
                // backpropagate through the pre-update output weight
                let back = ar.mul(&delta_out, &v[j])?;
                let delta_j = ar.mul(&back, &h_slope[j])?;
                let g_j = ar.mul(learning_rate, &delta_j)?;
                let mut row = Vec::with_capacity(arity + 1);
                descend(ar, &w[j * arity..(j + 1) * arity], &b[j], &g_j, x, &mut row)?;
                hidden_b.push(row.pop().expect("bias pushed last"));
                hidden_w.extend(row);
            }
            out.extend(hidden_w);
            out.extend(hidden_b);
            descend(ar, v, &c[0], &g_out, &h, &mut out)?;
        }
        ModelKind::Empty => out.extend_from_slice(params),
    }
    Ok(out)
}

/// SGD over `samples` in order for `cfg.epochs` epochs.
pub fn train_samples<S: Scalar>(samples: &[Sample<S>], cfg: &TrainConfig<S>) -> Result<ModelParams<S>, TrainingError> {
    cfg.validate()?;
    for s in samples {
        if s.x.len() != cfg.arity {
            return Err(TrainingError::ArityMismatch {
                expected: cfg.arity,
                got: s.x.len(),
            });
        }
    }
    let sigmoid = cfg.sigmoid()?;
    let mut ar = Native::<S>::new(&cfg.scale);
    let mut params = cfg.init_values.clone();
    for _ in 0..cfg.epochs {
        for s in samples {
            params = sgd_step(&mut ar, cfg.kind, cfg.arity, &sigmoid, &cfg.learning_rate, &params, &s.x, &s.y)?;
        }
    }
    Ok(ModelParams {
        kind: cfg.kind,
        arity: cfg.arity,
        weights: params,
    })
}

/// Ordered training set with a common arity and distinct uids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub arity: usize,
    pub points: Vec<DataPoint>,
}

impl Dataset {
    pub fn new(arity: usize, points: Vec<DataPoint>) -> Result<Self, TrainingError> {
        let mut seen = HashSet::new();
        for p in &points {
            if p.arity() != arity {
                return Err(TrainingError::ArityMismatch {
                    expected: arity,
                    got: p.arity(),
                });
            }
            if !seen.insert(p.uid) {
                return Err(TrainingError::DuplicateUid(p.uid));
            }
        }
        Ok(Dataset { arity, points })
    }

    pub fn empty(arity: usize) -> Self {
        Dataset {
            arity,
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains_uid(&self, uid: u64) -> bool {
        self.points.iter().any(|p| p.uid == uid)
    }

    pub fn samples(&self) -> Vec<Sample<FixedPoint>> {
        self.points
            .iter()
            .map(|p| Sample {
                x: p.x.clone(),
                y: p.y,
            })
            .collect()
    }
}

/// Trains on `d` in order with the fixed-point arithmetic.
pub fn train_model(d: &Dataset, cfg: &TrainConfig) -> Result<ModelParams, TrainingError> {
    if d.arity != cfg.arity {
        return Err(TrainingError::ArityMismatch {
            expected: cfg.arity,
            got: d.arity,
        });
    }
    train_samples(&d.samples(), cfg)
}

pub fn predict(m: &ModelParams, x: &[FixedPoint], scale: &ScaleConfig) -> Result<FixedPoint, TrainingError> {
    if x.len() != m.arity {
        return Err(TrainingError::ArityMismatch {
            expected: m.arity,
            got: x.len(),
        });
    }
    let sigmoid = SigmoidPoly::fixed(scale)?;
    let mut ar = Native::<FixedPoint>::new(scale);
    Ok(forward(&mut ar, m.kind, m.arity, &sigmoid, &m.weights, x)?)
}

/// Fraction of points whose thresholded prediction matches the label class.
/// Labels are `0`/`1`; a prediction equal to the threshold counts as class 1.
pub fn accuracy(
    m: &ModelParams,
    d: &Dataset,
    threshold: FixedPoint,
    scale: &ScaleConfig,
) -> Result<Ratio<usize>, TrainingError> {
    if d.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let t = threshold.raw_i128().unwrap_or(0);
    let half = scale.gamma() as i128 / 2;
    let mut correct = 0;
    for p in &d.points {
        let pred = predict(m, &p.x, scale)?.raw_i128().unwrap_or(i128::MIN);
        let label = p.y.raw_i128().unwrap_or(0);
        if (pred >= t) == (label >= half) {
            correct += 1;
        }
    }
    Ok(Ratio::new(correct, d.len()))
}
