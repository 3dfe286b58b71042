//! Builds a labeled synthetic corpus and checks it against the statistical
//! annotator.

use grn_ppg::signal::Label;
use grn_ppg::synth::{build_corpus, statistical_annotator, AnnotatorConfig, CorpusConfig};

fn main() {
    let corpus = build_corpus(&CorpusConfig { target_pulses: 2000, ..Default::default() }).unwrap();
    let ds = &corpus.dataset;
    println!(
        "{} pulses from {} frames, artifact prevalence {:.3}, {} rejected",
        ds.len(),
        corpus.frames,
        corpus.artifact_fraction(),
        corpus.report.len()
    );
    let flags = statistical_annotator(ds, &AnnotatorConfig::default()).unwrap();
    let agree = (0..ds.len())
        .filter(|&i| flags[i] == (ds.label(i) == Some(Label::Artifact)))
        .count();
    println!("annotator agreement {:.3}", agree as f64 / ds.len() as f64);
}
