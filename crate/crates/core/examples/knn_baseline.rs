//! Nearest-neighbor baseline on canonical pulses.

use grn_ppg::models::{KnnConfig, KnnModel, Model};
use grn_ppg::synth::{build_corpus, CorpusConfig};
use grn_ppg::train::{evaluate, split, SplitSpec};

fn main() {
    let data = build_corpus(&CorpusConfig { target_pulses: 2000, ..Default::default() }).unwrap().dataset;
    let parts = split(&data, &SplitSpec::default()).unwrap();
    let train = data.subset(&parts.train);
    let test = data.subset(&parts.test);
    for k in [1, 3, 5, 9] {
        let model = Model::Knn(KnnModel::fit(&train, KnnConfig { k }).unwrap());
        let (c, m) = evaluate(&model, &test).unwrap();
        println!("k = {k}: f1 {:.3} acc {:.3}  {:?}", m.f1, m.acc, c);
    }
}
