//! Trains one model end to end on a synthetic corpus: portion, split,
//! ADASYN, fit, test metrics.

use grn_ppg::models::ModelKind;
use grn_ppg::synth::{build_corpus, CorpusConfig};
use grn_ppg::train::{run_pipeline, RunSpec};

fn main() {
    let kind: ModelKind = std::env::args().nth(1).unwrap_or_else(|| "grn-mlp".into()).parse().unwrap();
    let data = build_corpus(&CorpusConfig { target_pulses: 2000, ..Default::default() }).unwrap().dataset;
    let mut spec = RunSpec::default();
    spec.train.max_epochs = 10;
    let out = run_pipeline(&data, kind, 1.0, 1, &spec).unwrap();
    let r = &out.report;
    println!("{kind}: {} train rows ({} synthetic), {} test", r.n_train, r.n_synthetic, r.n_test);
    println!("confusion {:?}", r.confusion);
    println!(
        "acc {:.3} pre {:.3} rec {:.3} f1 {:.3}, best epoch {} of {}",
        r.metrics.acc, r.metrics.pre, r.metrics.rec, r.metrics.f1, r.best_epoch, r.epochs
    );
    for (e, (t, v)) in r.train_loss.iter().zip(&r.val_loss).enumerate() {
        println!("epoch {:2}  train {t:.4}  val {v:.4}", e + 1);
    }
}
