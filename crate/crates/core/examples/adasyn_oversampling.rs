//! Oversamples the artifact class of a training split with ADASYN.

use grn_ppg::adasyn::{adasyn_detailed, AdasynConfig};
use grn_ppg::signal::Label;
use grn_ppg::synth::{build_corpus, CorpusConfig};
use grn_ppg::train::{split, SplitSpec};

fn main() {
    let data = build_corpus(&CorpusConfig { target_pulses: 1500, ..Default::default() }).unwrap().dataset;
    let parts = split(&data, &SplitSpec::default()).unwrap();
    let train = data.subset(&parts.train);
    let out = adasyn_detailed(&train, &AdasynConfig::default()).unwrap();
    println!(
        "train: {} artifact / {} normal",
        train.count(Label::Artifact),
        train.count(Label::Normal)
    );
    println!(
        "after ADASYN: {} artifact / {} normal ({} synthetic, k = {})",
        out.dataset.count(Label::Artifact),
        out.dataset.count(Label::Normal),
        out.generated,
        out.k
    );
    let busiest = out
        .allocation
        .iter()
        .zip(&out.minority_rows)
        .max_by_key(|(g, _)| **g)
        .unwrap();
    println!("largest allocation: {} rows seeded from {}", busiest.0, train.source_id(*busiest.1));
    println!("first synthetic id: {}", out.dataset.source_id(train.len()));
}
