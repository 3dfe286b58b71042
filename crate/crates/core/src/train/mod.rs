//! Splitting, training, evaluation and the multi-model comparison harness.

mod compare;
mod fit;
mod metrics;
mod split;

pub use compare::{
    compare, read_aggregate_csv, write_aggregate_csv, write_curves_csv, AggregateRow, ClaimCheck, CompareSpec,
    Comparison, SeedStat,
};
pub use fit::{evaluate_loss, train_neural, TrainHistory, TrainSpec};
pub use metrics::{metrics, smoothness, Confusion, Metrics};
pub use split::{split, stratified_portion, SplitIndices, SplitSpec, MIN_PER_CLASS};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adasyn::{adasyn, AdasynConfig};
use crate::dataset::PulseDataset;
use crate::error::{Error, Result};
use crate::models::{KnnConfig, KnnModel, MlpConfig, Model, ModelConfig, ModelKind, NeuralNet, TransformerConfig};
use crate::rng::derive_seed;

/// Everything a single (model, portion, seed) run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSpec {
    pub split: SplitSpec,
    pub adasyn: AdasynConfig,
    pub use_adasyn: bool,
    pub train: TrainSpec,
    /// Base encoder; the GRN variant adds `grn_blocks` blocks to it.
    pub transformer: TransformerConfig,
    pub mlp: MlpConfig,
    pub knn: KnnConfig,
    pub grn_blocks: usize,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            adasyn: AdasynConfig::default(),
            use_adasyn: true,
            train: TrainSpec::default(),
            transformer: TransformerConfig::default(),
            mlp: MlpConfig::default(),
            knn: KnnConfig::default(),
            grn_blocks: 2,
        }
    }
}

impl RunSpec {
    pub fn model_config(&self, kind: ModelKind) -> ModelConfig {
        match kind {
            ModelKind::Transformer => ModelConfig::Transformer(TransformerConfig {
                grn_blocks: 0,
                ..self.transformer.clone()
            }),
            ModelKind::GrnTransformer => ModelConfig::Transformer(TransformerConfig {
                grn_blocks: self.grn_blocks,
                ..self.transformer.clone()
            }),
            ModelKind::Mlp => ModelConfig::Mlp(MlpConfig {
                grn_blocks: 0,
                ..self.mlp.clone()
            }),
            ModelKind::GrnMlp => ModelConfig::Mlp(MlpConfig {
                grn_blocks: self.grn_blocks,
                ..self.mlp.clone()
            }),
            ModelKind::Knn => ModelConfig::Knn(self.knn),
        }
    }

    pub fn lr(&self, kind: ModelKind) -> f64 {
        self.train.lr.unwrap_or_else(|| kind.default_lr())
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.adasyn.validate()?;
        self.train.validate()?;
        for kind in ModelKind::ALL {
            self.model_config(kind).validate()?;
        }
        if self.grn_blocks == 0 {
            return Err(Error::Config("grn_blocks must be positive for the GRN variants".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    pub portion: f64,
    pub seed: u64,
    pub config_hash: String,
    pub n_train: usize,
    pub n_synthetic: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub confusion: Confusion,
    pub metrics: Metrics,
    pub epochs: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_precision: Vec<f64>,
    pub val_recall: Vec<f64>,
    pub smoothness: Option<f64>,
    /// Seconds spent; kept out of the JSON so reports are reproducible.
    #[serde(skip)]
    pub wall_s: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// First 16 hex digits of the SHA-256 of the JSON of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&json))[..16].to_string())
}

/// Output of one pipeline run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub model: Model,
    pub report: EvalReport,
    /// Indices into the portion subset.
    pub split: SplitIndices,
    /// Rows of the full dataset forming the portion subset.
    pub portion_rows: Vec<usize>,
}

/// Test-set evaluation of any model.
pub fn evaluate(model: &Model, test: &PulseDataset) -> Result<(Confusion, Metrics)> {
    let probs = model.predict_proba(test.data())?;
    let c = Confusion::from_probs(&probs, &test.targets()?, 0.5)?;
    Ok((c, metrics(&c)?))
}

/// Subsample, split, oversample the training part, fit and evaluate.
/// Every random stage draws from its own seed derived from `seed`.
pub fn run_pipeline(data: &PulseDataset, kind: ModelKind, portion: f64, seed: u64, spec: &RunSpec) -> Result<RunOutput> {
    spec.validate()?;
    let start = Instant::now();
    let portion_rows = stratified_portion(data, portion, derive_seed(seed, "portion"))?;
    let subset = data.subset(&portion_rows);
    let split_spec = SplitSpec {
        seed: derive_seed(seed, "split"),
        ..spec.split
    };
    let parts = split(&subset, &split_spec)?;
    let fit_set = subset.subset(&parts.train);
    let val = subset.subset(&parts.val);
    let test = subset.subset(&parts.test);
    if (0..val.len()).any(|i| val.is_synthetic(i)) || (0..test.len()).any(|i| test.is_synthetic(i)) {
        return Err(Error::Consistency("synthetic rows found in validation or test data".into()));
    }
    let train = if spec.use_adasyn {
        adasyn(
            &fit_set,
            &AdasynConfig {
                seed: derive_seed(seed, "adasyn"),
                ..spec.adasyn
            },
        )?
    } else {
        fit_set.clone()
    };
    let n_synthetic = train.len() - fit_set.len();

    let config = spec.model_config(kind);
    let (model, history) = match &config {
        ModelConfig::Knn(k) => (Model::Knn(KnnModel::fit(&train, *k)?), TrainHistory::default()),
        cfg => {
            let mut net = NeuralNet::new(cfg, derive_seed(seed, "init"))?;
            let train_spec = TrainSpec {
                seed: derive_seed(seed, "train"),
                ..spec.train
            };
            let h = train_neural(&mut net, &train, &val, &train_spec, spec.lr(kind))?;
            (Model::Neural(net), h)
        }
    };
    let (confusion, m) = evaluate(&model, &test)?;
    let report = EvalReport {
        model: kind,
        portion,
        seed,
        config_hash: config_hash(&(kind, &config, spec))?,
        n_train: train.len(),
        n_synthetic,
        n_val: val.len(),
        n_test: test.len(),
        confusion,
        metrics: m,
        epochs: history.epochs(),
        best_epoch: history.best_epoch,
        smoothness: smoothness(&history.val_loss),
        train_loss: history.train_loss,
        val_loss: history.val_loss,
        val_precision: history.val_precision,
        val_recall: history.val_recall,
        wall_s: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        model,
        report,
        split: parts,
        portion_rows,
    })
}
