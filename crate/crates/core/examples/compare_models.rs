//! Small model grid over data portions and seeds, with aggregate rows.

use grn_ppg::models::ModelKind;
use grn_ppg::synth::{build_corpus, CorpusConfig};
use grn_ppg::train::{compare, CompareSpec, RunSpec, SeedStat};

fn main() {
    let data = build_corpus(&CorpusConfig { target_pulses: 2000, ..Default::default() }).unwrap().dataset;
    let mut run = RunSpec::default();
    run.train.max_epochs = 4;
    let spec = CompareSpec {
        models: vec![ModelKind::Knn, ModelKind::Mlp, ModelKind::GrnMlp],
        portions: vec![0.5, 1.0],
        seeds: vec![1, 2],
        threads: 0,
    };
    let result = compare(&data, &spec, &run).unwrap();
    for r in result.aggregates.iter().filter(|r| r.seed == SeedStat::Mean) {
        println!("{:>8} portion {:<4} f1 {:.3} acc {:.3}", r.model, r.portion, r.f1, r.acc);
    }
}
