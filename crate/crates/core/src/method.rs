//! The nine trainable recognition methods: three classifiers over each of
//! the two hand-crafted feature sets, plus the three networks.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::augment::source_id;
use crate::classical::{
    knn_fit, rf_fit, svm_fit, KnnConfig, KnnModel, RfConfig, RfModel, Standardizer, SvmConfig,
    SvmModel,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, evaluate_with, loso_cv, split, Evaluation, LosoResult, Split, SplitSpec};
use crate::features::{spatio_temporal_features, touch_pattern_features, FeatureSchema};
use crate::model_file::{ModelFile, ModelKind};
use crate::nn::{self, Architecture, Net, NetInput, Sample, TrainConfig};
use crate::preprocess::{pad_to_length, preprocess, PreprocessConfig, CONTACT_THRESHOLD, PAD_LENGTH};
use crate::types::{Recording, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    StKnn,
    StRf,
    StSvm,
    TpKnn,
    TpRf,
    TpSvm,
    Cnn,
    Lstm,
    Cnnlstm,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::StKnn,
        Method::StRf,
        Method::StSvm,
        Method::TpKnn,
        Method::TpRf,
        Method::TpSvm,
        Method::Cnn,
        Method::Lstm,
        Method::Cnnlstm,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::StKnn => "st-knn",
            Method::StRf => "st-rf",
            Method::StSvm => "st-svm",
            Method::TpKnn => "tp-knn",
            Method::TpRf => "tp-rf",
            Method::TpSvm => "tp-svm",
            Method::Cnn => "cnn",
            Method::Lstm => "lstm",
            Method::Cnnlstm => "cnnlstm",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == tag)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {tag:?}")))
    }

    pub fn architecture(self) -> Option<Architecture> {
        match self {
            Method::Cnn => Some(Architecture::CnnMhi),
            Method::Lstm => Some(Architecture::Lstm),
            Method::Cnnlstm => Some(Architecture::CnnLstm),
            _ => None,
        }
    }

    pub fn is_neural(self) -> bool {
        self.architecture().is_some()
    }

    pub fn feature_schema(self) -> Option<FeatureSchema> {
        match self {
            Method::StKnn | Method::StRf | Method::StSvm => Some(FeatureSchema::SpatioTemporalV1),
            Method::TpKnn | Method::TpRf | Method::TpSvm => Some(FeatureSchema::TouchPatternV1),
            _ => None,
        }
    }

    /// Schema tag stored in model files.
    pub fn schema_tag(self) -> &'static str {
        match (self.feature_schema(), self.architecture()) {
            (Some(s), _) => s.tag(),
            (None, Some(a)) => nn::input_schema(a),
            (None, None) => unreachable!("every method has inputs"),
        }
    }

    fn model_kind(self) -> ModelKind {
        match self {
            Method::StKnn | Method::TpKnn => ModelKind::Knn,
            Method::StRf | Method::TpRf => ModelKind::Rf,
            Method::StSvm | Method::TpSvm => ModelKind::Svm,
            Method::Cnn => ModelKind::Cnn,
            Method::Lstm => ModelKind::Lstm,
            Method::Cnnlstm => ModelKind::Cnnlstm,
        }
    }

    /// Fixed operating points, with and without augmentation.
    pub fn default_hyperparams(self, augmented: bool) -> Hyperparams {
        let st = self.feature_schema() == Some(FeatureSchema::SpatioTemporalV1);
        match self.model_kind() {
            ModelKind::Knn => Hyperparams::Knn {
                k: match (st, augmented) {
                    (true, _) => 7,
                    (false, false) => 4,
                    (false, true) => 1,
                },
            },
            ModelKind::Rf => Hyperparams::Rf {
                n_estimators: 200,
                max_depth: 9,
            },
            ModelKind::Svm => {
                let (c, g) = match (st, augmented) {
                    (true, false) => (7, -11),
                    (true, true) => (9, -13),
                    (false, false) => (13, -13),
                    (false, true) => (9, -7),
                };
                Hyperparams::Svm {
                    c: 2f64.powi(c),
                    gamma: 2f64.powi(g),
                }
            }
            _ => Hyperparams::Nn {
                max_epochs: 60,
                patience: 10,
            },
        }
    }

    /// Grid searched by leave-one-subject-out cross-validation. Every grid
    /// contains the default operating points.
    pub fn search_grid(self) -> Vec<Hyperparams> {
        match self.model_kind() {
            ModelKind::Knn => [1, 3, 4, 5, 7, 9].map(|k| Hyperparams::Knn { k }).to_vec(),
            ModelKind::Rf => {
                let mut g = Vec::new();
                for n_estimators in [100, 200] {
                    for max_depth in [6, 9] {
                        g.push(Hyperparams::Rf {
                            n_estimators,
                            max_depth,
                        });
                    }
                }
                g
            }
            ModelKind::Svm => {
                let mut g = Vec::new();
                for c in [7, 9, 13] {
                    for gamma in [-13, -11, -7] {
                        g.push(Hyperparams::Svm {
                            c: 2f64.powi(c),
                            gamma: 2f64.powi(gamma),
                        });
                    }
                }
                g
            }
            _ => vec![self.default_hyperparams(false)],
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparams {
    Knn { k: usize },
    Rf { n_estimators: usize, max_depth: usize },
    Svm { c: f64, gamma: f64 },
    Nn { max_epochs: usize, patience: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    /// Class probabilities for networks, vote shares otherwise.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Classifier {
    Knn(KnnModel),
    Rf(RfModel),
    Svm(SvmModel),
    Net(Net),
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub method: Method,
    pub hyper: Hyperparams,
    pub standardizer: Option<Standardizer>,
    pub classifier: Classifier,
}

/// Preprocessed copy of a recording; recordings longer than the pad budget
/// keep their first 64 frames.
pub fn prepare(rec: &Recording) -> Result<Recording> {
    let mut pre = preprocess(rec, &PreprocessConfig::default())?;
    if pre.frames.len() > PAD_LENGTH {
        pre.frames.truncate(PAD_LENGTH);
        pre.true_len = PAD_LENGTH;
    }
    Ok(pre)
}

/// Hand-crafted feature vector of a raw recording.
pub fn feature_vector(schema: FeatureSchema, rec: &Recording) -> Result<Vec<f64>> {
    let pre = prepare(rec)?;
    Ok(match schema {
        FeatureSchema::SpatioTemporalV1 => {
            let padded = pad_to_length(&pre, PAD_LENGTH)?;
            spatio_temporal_features(&padded)?.values
        }
        FeatureSchema::TouchPatternV1 => touch_pattern_features(&pre, CONTACT_THRESHOLD).values,
    })
}

/// Network input of a raw recording.
pub fn net_input(arch: Architecture, rec: &Recording) -> Result<NetInput> {
    Ok(nn::build_input(arch, &prepare(rec)?))
}

fn labels(train: &[Recording]) -> Result<Vec<usize>> {
    train
        .iter()
        .map(|r| {
            r.label
                .map(|c| c.id())
                .ok_or_else(|| Error::InvalidArgument(format!("recording {} has no label", r.id)))
        })
        .collect()
}

fn class_count(y: &[usize]) -> usize {
    y.iter().max().map_or(0, |m| m + 1).max(NUM_CLASSES)
}

/// Trains `method` on raw labeled recordings (augmented copies included,
/// recognized by their `+` ids).
pub fn fit(method: Method, train: &[Recording], hyper: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset(format!("no recordings to train {method}")));
    }
    let y = labels(train)?;
    if let Some(schema) = method.feature_schema() {
        let x: Vec<Vec<f64>> = train
            .iter()
            .map(|r| feature_vector(schema, r))
            .collect::<Result<_>>()?;
        return fit_vectors(method, &x, &y, hyper, seed);
    }
    let arch = method.architecture().expect("neural method");
    let Hyperparams::Nn {
        max_epochs,
        patience,
    } = *hyper
    else {
        return Err(Error::InvalidArgument(format!("{method} needs network hyperparameters")));
    };
    let samples: Vec<Sample> = train
        .iter()
        .zip(&y)
        .map(|(r, &label)| {
            Ok(Sample {
                input: net_input(arch, r)?,
                label,
                group: source_id(&r.id).to_string(),
                augmented: source_id(&r.id) != r.id,
            })
        })
        .collect::<Result<_>>()?;
    let cfg = TrainConfig {
        max_epochs,
        patience,
        seed,
        ..TrainConfig::default()
    };
    let trained = nn::train(arch, &samples, &cfg)?;
    Ok(TrainedModel {
        method,
        hyper: *hyper,
        standardizer: None,
        classifier: Classifier::Net(trained.net),
    })
}

/// Trains a classical method on precomputed feature rows.
pub fn fit_vectors(
    method: Method,
    x: &[Vec<f64>],
    y: &[usize],
    hyper: &Hyperparams,
    seed: u64,
) -> Result<TrainedModel> {
    if x.is_empty() {
        return Err(Error::EmptyDataset(format!("no rows to train {method}")));
    }
    let mismatch = || Error::InvalidArgument(format!("{hyper:?} does not fit {method}"));
    let (standardizer, classifier) = match (method.model_kind(), *hyper) {
        (ModelKind::Knn, Hyperparams::Knn { k }) => {
            let s = Standardizer::fit(x)?;
            let m = knn_fit(&s.apply_all(x), y, KnnConfig { k })?;
            (Some(s), Classifier::Knn(m))
        }
        (
            ModelKind::Rf,
            Hyperparams::Rf {
                n_estimators,
                max_depth,
            },
        ) => {
            let cfg = RfConfig {
                n_estimators,
                max_depth,
                seed,
                ..RfConfig::default()
            };
            (None, Classifier::Rf(rf_fit(x, y, cfg)?))
        }
        (ModelKind::Svm, Hyperparams::Svm { c, gamma }) => {
            let s = Standardizer::fit(x)?;
            let cfg = SvmConfig {
                seed,
                ..SvmConfig::new(c, gamma)
            };
            let mut m = svm_fit(&s.apply_all(x), y, cfg)?;
            if m.num_classes < class_count(y) {
                m.num_classes = class_count(y);
            }
            (Some(s), Classifier::Svm(m))
        }
        _ => return Err(mismatch()),
    };
    Ok(TrainedModel {
        method,
        hyper: *hyper,
        standardizer,
        classifier,
    })
}

fn pad_scores(mut s: Vec<f64>) -> Vec<f64> {
    s.resize(NUM_CLASSES, 0.0);
    s
}

impl TrainedModel {
    /// Classifies one raw recording.
    pub fn predict(&self, rec: &Recording) -> Result<Prediction> {
        match &self.classifier {
            Classifier::Net(net) => {
                let p = net.predict_proba(&net_input(net.arch, rec)?)?;
                Ok(Prediction {
                    label: nn_argmax(&p),
                    scores: p.to_vec(),
                })
            }
            _ => {
                let schema = self.method.feature_schema().expect("classical method");
                self.predict_vector(&feature_vector(schema, rec)?)
            }
        }
    }

    /// Classifies a precomputed feature row (classical methods only).
    pub fn predict_vector(&self, x: &[f64]) -> Result<Prediction> {
        let z;
        let x = match &self.standardizer {
            Some(s) => {
                if s.dimension() != x.len() {
                    return Err(Error::SchemaMismatch {
                        expected: format!("{} features", s.dimension()),
                        found: format!("{} features", x.len()),
                    });
                }
                z = s.apply(x);
                &z[..]
            }
            None => x,
        };
        match &self.classifier {
            Classifier::Knn(m) => Ok(Prediction {
                label: m.predict(x)?,
                scores: pad_scores(m.vote_shares(x, NUM_CLASSES)?),
            }),
            Classifier::Rf(m) => {
                let votes = m.votes(x)?;
                let total = votes.iter().sum::<usize>().max(1) as f64;
                Ok(Prediction {
                    label: m.predict(x)?,
                    scores: pad_scores(votes.iter().map(|v| *v as f64 / total).collect()),
                })
            }
            Classifier::Svm(m) => Ok(Prediction {
                label: m.predict(x)?,
                scores: pad_scores(m.vote_shares(x)?),
            }),
            Classifier::Net(_) => Err(Error::InvalidArgument(format!(
                "{} does not take feature vectors",
                self.method
            ))),
        }
    }

    pub fn to_model_file(&self) -> Result<ModelFile> {
        let mut mf = match &self.classifier {
            Classifier::Net(net) => net.to_model_file(),
            _ => ModelFile::new(self.method.model_kind(), self.method.schema_tag()),
        };
        mf.metadata.insert("method".into(), self.method.tag().into());
        mf.metadata.insert("hyperparams".into(), serde_json::to_value(self.hyper)?);
        if let Some(s) = &self.standardizer {
            s.write_params(&mut mf);
        }
        match &self.classifier {
            Classifier::Knn(m) => m.write_params(&mut mf),
            Classifier::Rf(m) => m.write_params(&mut mf),
            Classifier::Svm(m) => m.write_params(&mut mf),
            Classifier::Net(_) => {}
        }
        Ok(mf)
    }

    pub fn from_model_file(mf: &ModelFile) -> Result<Self> {
        let method = Method::from_tag(mf.meta_str("method")?)?;
        if method.model_kind() != mf.kind {
            return Err(Error::Model(format!(
                "method {method} stored under kind {}",
                mf.kind.tag()
            )));
        }
        if mf.schema != method.schema_tag() {
            return Err(Error::SchemaMismatch {
                expected: method.schema_tag().into(),
                found: mf.schema.clone(),
            });
        }
        let hyper: Hyperparams = serde_json::from_value(
            mf.metadata
                .get("hyperparams")
                .cloned()
                .ok_or_else(|| Error::Model("missing hyperparams".into()))?,
        )?;
        let standardizer = match method.model_kind() {
            ModelKind::Knn | ModelKind::Svm => Some(Standardizer::read_params(mf)?),
            _ => None,
        };
        let classifier = match method.model_kind() {
            ModelKind::Knn => Classifier::Knn(KnnModel::read_params(mf)?),
            ModelKind::Rf => Classifier::Rf(RfModel::read_params(mf)?),
            ModelKind::Svm => Classifier::Svm(SvmModel::read_params(mf)?),
            _ => Classifier::Net(Net::from_model_file(mf)?),
        };
        Ok(TrainedModel {
            method,
            hyper,
            standardizer,
            classifier,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_model_file()?.save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        TrainedModel::from_model_file(&ModelFile::load(path)?)
    }
}

/// Leave-one-subject-out search over [`Method::search_grid`]. Classical
/// features are computed once and shared by all folds.
pub fn cross_validate(method: Method, train: &[Recording], folds: usize, seed: u64) -> Result<LosoResult<Hyperparams>> {
    let grid = method.search_grid();
    match method.feature_schema() {
        Some(schema) => {
            let rows: HashMap<&str, Vec<f64>> = train
                .iter()
                .map(|r| Ok((r.id.as_str(), feature_vector(schema, r)?)))
                .collect::<Result<_>>()?;
            loso_cv(train, &grid, folds, seed, |h, fold_train, fold_test| {
                if let Hyperparams::Knn { k } = h {
                    if *k > fold_train.len() {
                        return Ok(None);
                    }
                }
                let x: Vec<Vec<f64>> = fold_train.iter().map(|r| rows[r.id.as_str()].clone()).collect();
                let model = fit_vectors(method, &x, &labels(fold_train)?, h, seed)?;
                let e = evaluate_with(fold_test, |r| Ok(model.predict_vector(&rows[r.id.as_str()])?.label))?;
                Ok(Some(e.accuracy))
            })
        }
        None => loso_cv(train, &grid, folds, seed, |h, fold_train, fold_test| {
            let model = fit(method, fold_train, h, seed)?;
            Ok(Some(evaluate(&model, fold_test)?.accuracy))
        }),
    }
}

/// Settings of one offline train/test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub augment: bool,
    pub cv: bool,
    pub cv_folds: usize,
    pub split: SplitSpec,
    /// Seed for model training (bootstrap, SMO partner choice, network
    /// initialization and shuffling).
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(method: Method, augment: bool, seed: u64) -> Self {
        ExperimentConfig {
            method,
            augment,
            cv: false,
            cv_folds: 5,
            split: SplitSpec {
                seed,
                augment_train_only: augment,
                ..SplitSpec::default()
            },
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: TrainedModel,
    pub hyper: Hyperparams,
    pub cv: Option<LosoResult<Hyperparams>>,
    pub train_size: usize,
    pub test_size: usize,
    pub evaluation: Evaluation,
    pub train_seconds: f64,
}

/// Split, optional cross-validated search, fit on the (optionally
/// augmented) training partition and score on the untouched test
/// partition.
pub fn run_experiment(ds: &[Recording], cfg: &ExperimentConfig) -> Result<Experiment> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("dataset has no recordings".into()));
    }
    let mut split_spec = cfg.split.clone();
    split_spec.augment_train_only = cfg.augment;
    let Split { train, test } = split(ds, &split_spec)?;
    let t0 = std::time::Instant::now();
    let (hyper, cv) = if cfg.cv && !cfg.method.is_neural() {
        let res = cross_validate(cfg.method, &train, cfg.cv_folds, cfg.seed)?;
        (res.best, Some(res))
    } else {
        (cfg.method.default_hyperparams(cfg.augment), None)
    };
    let model = fit(cfg.method, &train, &hyper, cfg.seed)?;
    let train_seconds = t0.elapsed().as_secs_f64();
    let evaluation = evaluate(&model, &test)?;
    Ok(Experiment {
        model,
        hyper,
        cv,
        train_size: train.len(),
        test_size: test.len(),
        evaluation,
        train_seconds,
    })
}

fn nn_argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}
