//! Forward-kinematics estimators behind one interface, selected by name.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{Dataset, Target};
use crate::error::{Error, Result};
use crate::fk::{fk_solve, fk_trajectory, neutral_guess, FkProblem};
use crate::koopman::{KoopmanModel, DEFAULT_SVD_THRESHOLD};
use crate::params::RobotParams;
use crate::rnn::{RnnConfig, RnnModel};

/// Key under which an optional training time is stored in model files.
const TIME_KEY: &str = "train_time_s";

/// Maps motor angles `(θ1, θ2, θ3)` to `(β, γ, z_p)`.
pub trait FkEstimator: Send + Sync {
    /// Name the estimator is registered under; also the `kind` tag of its file.
    fn kind(&self) -> &str;

    fn predict(&self, theta: &[f64; 3]) -> Result<Target>;

    /// Predictions for an ordered sequence. Estimators that benefit from
    /// continuity along a trajectory override this.
    fn predict_all(&self, thetas: &[[f64; 3]]) -> Result<Vec<Target>> {
        thetas
            .iter()
            .enumerate()
            .map(|(i, t)| self.predict(t).map_err(|e| e.at_step(i)))
            .collect()
    }

    fn to_json(&self) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub svd_threshold: f64,
    pub rnn: RnnConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            svd_threshold: DEFAULT_SVD_THRESHOLD,
            rnn: RnnConfig::default(),
        }
    }
}

pub trait EstimatorFactory: Send + Sync {
    fn name(&self) -> &'static str;

    fn train(&self, train: &Dataset, val: Option<&Dataset>, options: &TrainOptions) -> Result<Box<dyn FkEstimator>>;

    fn load(&self, json: &str) -> Result<Box<dyn FkEstimator>>;
}

impl FkEstimator for KoopmanModel {
    fn kind(&self) -> &str {
        crate::koopman::model::MODEL_KIND
    }

    fn predict(&self, theta: &[f64; 3]) -> Result<Target> {
        Ok(KoopmanModel::predict(self, theta))
    }

    fn to_json(&self) -> Result<String> {
        KoopmanModel::to_json(self)
    }
}

impl FkEstimator for RnnModel {
    fn kind(&self) -> &str {
        crate::rnn::MODEL_KIND
    }

    fn predict(&self, theta: &[f64; 3]) -> Result<Target> {
        Ok(RnnModel::predict(self, theta))
    }

    fn to_json(&self) -> Result<String> {
        RnnModel::to_json(self)
    }
}

/// Newton forward kinematics wrapped as an estimator. Exact wherever the
/// solver converges to the generating pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleEstimator {
    kind: String,
    params: RobotParams,
}

pub const ORACLE_KIND: &str = "oracle";

impl OracleEstimator {
    pub fn new(params: RobotParams) -> Self {
        OracleEstimator {
            kind: ORACLE_KIND.into(),
            params,
        }
    }

    pub fn params(&self) -> &RobotParams {
        &self.params
    }
}

impl FkEstimator for OracleEstimator {
    fn kind(&self) -> &str {
        ORACLE_KIND
    }

    fn predict(&self, theta: &[f64; 3]) -> Result<Target> {
        let sol = fk_solve(&FkProblem::new(self.params, *theta))?;
        Ok(Target::new(sol.pose.beta(), sol.pose.gamma(), sol.pose.z_p()))
    }

    fn predict_all(&self, thetas: &[[f64; 3]]) -> Result<Vec<Target>> {
        let sols = fk_trajectory(&self.params, thetas, neutral_guess(&self.params))?;
        Ok(sols
            .iter()
            .map(|s| Target::new(s.pose.beta(), s.pose.gamma(), s.pose.z_p()))
            .collect())
    }

    fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub struct KoopmanFactory;

impl EstimatorFactory for KoopmanFactory {
    fn name(&self) -> &'static str {
        crate::koopman::model::MODEL_KIND
    }

    fn train(&self, train: &Dataset, _val: Option<&Dataset>, options: &TrainOptions) -> Result<Box<dyn FkEstimator>> {
        Ok(Box::new(KoopmanModel::fit(train, options.svd_threshold)?))
    }

    fn load(&self, json: &str) -> Result<Box<dyn FkEstimator>> {
        Ok(Box::new(KoopmanModel::from_json(json)?))
    }
}

pub struct RnnFactory;

impl EstimatorFactory for RnnFactory {
    fn name(&self) -> &'static str {
        crate::rnn::MODEL_KIND
    }

    fn train(&self, train: &Dataset, val: Option<&Dataset>, options: &TrainOptions) -> Result<Box<dyn FkEstimator>> {
        let val = val.ok_or_else(|| Error::InvalidArgument("rnn training needs a validation set".into()))?;
        let (model, _) = RnnModel::train(&options.rnn, train, val)?;
        Ok(Box::new(model))
    }

    fn load(&self, json: &str) -> Result<Box<dyn FkEstimator>> {
        Ok(Box::new(RnnModel::from_json(json)?))
    }
}

/// The oracle needs no data; training returns it unchanged.
pub struct OracleFactory {
    pub params: RobotParams,
}

impl EstimatorFactory for OracleFactory {
    fn name(&self) -> &'static str {
        ORACLE_KIND
    }

    fn train(&self, _train: &Dataset, _val: Option<&Dataset>, _options: &TrainOptions) -> Result<Box<dyn FkEstimator>> {
        Ok(Box::new(OracleEstimator::new(self.params)))
    }

    fn load(&self, json: &str) -> Result<Box<dyn FkEstimator>> {
        let est: OracleEstimator = serde_json::from_str(json)?;
        if est.kind != ORACLE_KIND {
            return Err(Error::InvalidArgument("oracle model file: kind is not 'oracle'".into()));
        }
        est.params.validate()?;
        Ok(Box::new(est))
    }
}

/// An estimator together with the wall-clock time its training took, when known.
pub struct Trained {
    pub estimator: Box<dyn FkEstimator>,
    pub train_time_s: Option<f64>,
}

#[derive(Default)]
pub struct Registry {
    factories: Vec<Box<dyn EstimatorFactory>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// Koopman, RNN and the Newton oracle for `params`.
    pub fn with_defaults(params: RobotParams) -> Self {
        let mut r = Registry::empty();
        r.register(Box::new(KoopmanFactory));
        r.register(Box::new(RnnFactory));
        r.register(Box::new(OracleFactory { params }));
        r
    }

    /// Adds a factory, replacing any with the same name.
    pub fn register(&mut self, factory: Box<dyn EstimatorFactory>) {
        self.factories.retain(|f| f.name() != factory.name());
        self.factories.push(factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.iter().map(|f| f.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn EstimatorFactory> {
        self.factories
            .iter()
            .find(|f| f.name() == name)
            .map(|f| f.as_ref())
            .ok_or_else(|| Error::UnknownEstimator(name.to_string()))
    }

    pub fn train(&self, name: &str, train: &Dataset, val: Option<&Dataset>, options: &TrainOptions) -> Result<Trained> {
        let factory = self.get(name)?;
        let start = Instant::now();
        let estimator = factory.train(train, val, options)?;
        Ok(Trained {
            estimator,
            train_time_s: Some(start.elapsed().as_secs_f64()),
        })
    }

    /// Loads a model file, dispatching on its `kind` field.
    pub fn load(&self, json: &str) -> Result<Trained> {
        let mut value: Value = serde_json::from_str(json)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::InvalidArgument("model file must hold a JSON object".into()))?;
        let train_time_s = match obj.remove(TIME_KEY) {
            None => None,
            Some(v) => Some(
                v.as_f64()
                    .ok_or_else(|| Error::InvalidArgument(format!("{TIME_KEY} must be a number")))?,
            ),
        };
        let kind = obj
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidArgument("model file has no kind".into()))?
            .to_string();
        let estimator = self.get(&kind)?.load(&value.to_string())?;
        Ok(Trained {
            estimator,
            train_time_s,
        })
    }
}

/// Serialises a trained estimator; the training time is written only when
/// `record_time` is set, so default outputs stay reproducible byte for byte.
pub fn save(trained: &Trained, record_time: bool) -> Result<String> {
    let json = trained.estimator.to_json()?;
    match (record_time, trained.train_time_s) {
        (true, Some(t)) => {
            let mut value: Value = serde_json::from_str(&json)?;
            if let Some(obj) = value.as_object_mut() {
                obj.insert(TIME_KEY.into(), t.into());
            }
            Ok(serde_json::to_string(&value)?)
        }
        _ => Ok(json),
    }
}
