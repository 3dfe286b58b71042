//! Saves a trained model, reloads it and confirms identical predictions.

use grn_ppg::models::{load_checkpoint, save_checkpoint, Checkpoint, ModelKind};
use grn_ppg::synth::{build_corpus, CorpusConfig};
use grn_ppg::train::{run_pipeline, RunSpec};

fn main() {
    let data = build_corpus(&CorpusConfig { target_pulses: 800, ..Default::default() }).unwrap().dataset;
    let mut spec = RunSpec::default();
    spec.train.max_epochs = 2;
    let out = run_pipeline(&data, ModelKind::GrnMlp, 1.0, 4, &spec).unwrap();
    let dir = std::env::temp_dir().join("grn-ppg-checkpoint-demo");
    save_checkpoint(
        &dir,
        &Checkpoint {
            kind: ModelKind::GrnMlp,
            model: out.model.clone(),
            seed: 4,
            metrics: serde_json::to_value(out.report.metrics).unwrap(),
            extra: serde_json::Value::Null,
        },
    )
    .unwrap();
    let back = load_checkpoint(&dir).unwrap();
    let a = out.model.predict_proba(data.data()).unwrap();
    let b = back.model.predict_proba(data.data()).unwrap();
    println!("saved to {}", dir.display());
    println!("{} predictions, identical after reload: {}", a.len(), a == b);
}
