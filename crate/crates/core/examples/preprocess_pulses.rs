//! Filters, segments and normalizes one synthetic 30 s frame.

use grn_ppg::signal::{preprocess, BandpassSpec, RejectionReason};
use grn_ppg::synth::{generate_frame, label_pulses, GeneratorConfig};

fn main() {
    let frame = generate_frame(&GeneratorConfig { seed: 3, ..Default::default() }).unwrap();
    let mut pre = preprocess(&frame.frame, &BandpassSpec::default(), "demo").unwrap();
    label_pulses(&frame, &mut pre.pulses).unwrap();
    println!("{} samples -> {} pulses", frame.frame.len(), pre.pulses.len());
    for reason in [RejectionReason::TooShort, RejectionReason::TooLong, RejectionReason::Degenerate] {
        println!("rejected {reason:?}: {}", pre.report.count(reason));
    }
    for p in pre.pulses.iter().take(5) {
        println!(
            "{}  start {:.2} s  {:.3} s  label {:?}  range {:.3}",
            p.source_id, p.start_s, p.duration_s, p.label, p.amplitude_range
        );
    }
}
