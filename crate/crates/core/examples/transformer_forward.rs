//! Scores a few pulses with an untrained GRN-Transformer and its plain twin.

use grn_ppg::models::{ModelKind, NeuralNet};
use grn_ppg::synth::{build_corpus, CorpusConfig};
use grn_ppg::train::RunSpec;

fn main() {
    let data = build_corpus(&CorpusConfig { target_pulses: 8, ..Default::default() }).unwrap().dataset;
    let spec = RunSpec::default();
    for kind in [ModelKind::Transformer, ModelKind::GrnTransformer] {
        let net = NeuralNet::new(&spec.model_config(kind), 7).unwrap();
        let probs = net.predict_proba(data.data()).unwrap();
        println!(
            "{kind}: {} tensors, {} weights, p(artifact) = {:.3?}",
            net.params().len(),
            net.params().num_scalars(),
            probs
        );
    }
}
