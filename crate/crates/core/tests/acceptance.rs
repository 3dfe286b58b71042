//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use grn_ppg::adasyn::{adasyn_detailed, AdasynConfig};
use grn_ppg::dataset::PulseDataset;
use grn_ppg::models::{
    glu, grn_forward, multi_head_attention, GluParams, GrnParams, KnnConfig, KnnModel, MhaParams, MlpConfig,
    ModelConfig, ModelKind, NeuralNet, ParamStore, TransformerConfig,
};
use grn_ppg::rng::seeded;
use grn_ppg::signal::{design_bandpass, filtfilt, preprocess, BandpassSpec, Label, SignalFrame, PULSE_LEN};
use grn_ppg::synth::{build_corpus, generate_frame, CorpusConfig, GeneratorConfig};
use grn_ppg::train::{compare, metrics, split, AggregateRow, CompareSpec, Confusion, RunSpec, SeedStat, SplitSpec};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

use common::*;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(101);
    let mut by_kind = Vec::new();
    let instances = 20;

    let mut g = GradCheck::default();
    for _ in 0..instances {
        let d = rng.gen_range(2..6);
        let rows = rng.gen_range(1..4);
        let mut store = ParamStore::new();
        let p = GluParams::init(&mut store, "glu", d, &mut rng).unwrap();
        randomize(&mut store, &mut rng, 1.0);
        let x = input_param(&mut store, "x", &[rows, d], &mut rng);
        g.merge(gradcheck(&mut store, 64, &mut rng, |ctx| {
            let xv = ctx.p(x);
            glu(ctx, &p, xv).unwrap()
        }));
    }
    by_kind.push(("glu", g));

    let mut g = GradCheck::default();
    for i in 0..instances {
        let d = rng.gen_range(2..6);
        let rows = rng.gen_range(1..4);
        let dc = if i % 2 == 0 { Some(rng.gen_range(1..4)) } else { None };
        let mut store = ParamStore::new();
        let p = GrnParams::init(&mut store, "grn", d, dc, &mut rng).unwrap();
        randomize(&mut store, &mut rng, 1.0);
        let a = input_param(&mut store, "a", &[rows, d], &mut rng);
        let c = dc.map(|dc| input_param(&mut store, "c", &[rows, dc], &mut rng));
        g.merge(gradcheck(&mut store, 64, &mut rng, |ctx| {
            let av = ctx.p(a);
            let cv = c.map(|c| ctx.p(c));
            grn_forward(ctx, &p, av, cv, 0.0).unwrap()
        }));
    }
    by_kind.push(("grn", g));

    let mut g = GradCheck::default();
    for _ in 0..instances {
        let heads = rng.gen_range(1..3);
        let d = heads * rng.gen_range(1..4);
        let t = rng.gen_range(1..5);
        let batch = rng.gen_range(1..3);
        let mut store = ParamStore::new();
        let p = MhaParams::init(&mut store, "mha", d, heads, &mut rng).unwrap();
        randomize(&mut store, &mut rng, 1.0);
        let x = input_param(&mut store, "x", &[batch * t, d], &mut rng);
        g.merge(gradcheck(&mut store, 64, &mut rng, |ctx| {
            let xv = ctx.p(x);
            multi_head_attention(ctx, &p, xv, t).unwrap()
        }));
    }
    by_kind.push(("attention", g));

    let nets: [(&str, ModelConfig); 2] = [
        (
            "transformer",
            ModelConfig::Transformer(TransformerConfig {
                d_model: 8,
                n_heads: 2,
                ff_hidden: 8,
                n_layers: 2,
                dropout: 0.0,
                grn_blocks: 2,
                ..Default::default()
            }),
        ),
        (
            "mlp",
            ModelConfig::Mlp(MlpConfig {
                hidden: vec![12, 10],
                dropout: 0.0,
                grn_blocks: 1,
                grn_width: 8,
            }),
        ),
    ];
    for (name, cfg) in nets {
        let mut g = GradCheck::default();
        for inst in 0..instances {
            let net = NeuralNet::new(&cfg, 1000 + inst as u64).unwrap();
            let mut store = net.params().clone();
            randomize(&mut store, &mut rng, 0.5);
            let x: Vec<f64> = (0..2 * PULSE_LEN).map(|_| rng.gen::<f64>()).collect();
            g.merge(gradcheck(&mut store, 12, &mut rng, |ctx| net.forward(ctx, &x, 2).unwrap()));
        }
        by_kind.push((name, g));
    }

    let secs = start.elapsed().as_secs_f64();
    let worst = by_kind.iter().map(|(_, g)| g.max_rel).fold(0.0, f64::max);
    let detail = by_kind
        .iter()
        .map(|(n, g)| format!("{n} {:.1e} ({} entries, worst {:.3e} vs {:.3e})", g.max_rel, g.checked, g.worst.0, g.worst.1))
        .collect::<Vec<_>>()
        .join(", ");
    check(worst < 1e-4 && secs < 120.0, format!("max rel err {worst:.2e} in {secs:.1} s; {detail}"))
}

fn c2_skip_identity() -> Outcome {
    let mut rng = seeded(202);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.gen_range(2..17);
        let rows = rng.gen_range(1..5);
        let mut store = ParamStore::new();
        let p = GrnParams::init(&mut store, "grn", d, None, &mut rng).unwrap();
        store.get_mut(p.glu.b4).data_mut().fill(-1e6);
        let a = random_vec(&mut rng, rows * d, 3.0);
        let at = grn_ppg::tensor::Tensor::new(&[rows, d], a.clone()).unwrap();
        let out = eval(&store, |ctx| {
            let av = ctx.tape.leaf(&at);
            grn_forward(ctx, &p, av, None, 0.0).unwrap()
        });
        let ln = layer_norm_ref(&a, d, &vec![1.0; d], &vec![0.0; d], 1e-5);
        worst = worst.max(max_abs_diff(&out, &ln));
    }
    check(worst < 1e-6, format!("max |grn(a) - LayerNorm(a)| = {worst:.2e} over 100 inputs"))
}

fn c3_oracles() -> Outcome {
    let mut rng = seeded(303);
    let (mut e_glu, mut e_grn, mut e_att): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..50 {
        let d = rng.gen_range(2..9);
        let rows = rng.gen_range(1..6);
        let mut store = ParamStore::new();
        let gp = GluParams::init(&mut store, "glu", d, &mut rng).unwrap();
        let dc = if i % 2 == 0 { Some(rng.gen_range(1..5)) } else { None };
        let rp = GrnParams::init(&mut store, "grn", d, dc, &mut rng).unwrap();
        randomize(&mut store, &mut rng, 1.0);
        let x = random_vec(&mut rng, rows * d, 2.0);
        let xt = grn_ppg::tensor::Tensor::new(&[rows, d], x.clone()).unwrap();
        let c = dc.map(|dc| random_vec(&mut rng, rows * dc, 2.0));
        let ct = c
            .as_ref()
            .map(|c| grn_ppg::tensor::Tensor::new(&[rows, c.len() / rows], c.clone()).unwrap());

        let out = eval(&store, |ctx| {
            let xv = ctx.tape.leaf(&xt);
            glu(ctx, &gp, xv).unwrap()
        });
        e_glu = e_glu.max(max_abs_diff(&out, &glu_ref(&store, &gp, &x, rows)));

        let out = eval(&store, |ctx| {
            let xv = ctx.tape.leaf(&xt);
            let cv = ct.as_ref().map(|c| ctx.tape.leaf(c));
            grn_forward(ctx, &rp, xv, cv, 0.0).unwrap()
        });
        e_grn = e_grn.max(max_abs_diff(&out, &grn_ref(&store, &rp, &x, rows, c.as_deref())));

        let heads = rng.gen_range(1..4);
        let d = heads * rng.gen_range(1..4);
        let t = rng.gen_range(1..7);
        let batch = rng.gen_range(1..4);
        let mut store = ParamStore::new();
        let mp = MhaParams::init(&mut store, "mha", d, heads, &mut rng).unwrap();
        randomize(&mut store, &mut rng, 1.0);
        let x = random_vec(&mut rng, batch * t * d, 2.0);
        let xt = grn_ppg::tensor::Tensor::new(&[batch * t, d], x.clone()).unwrap();
        let out = eval(&store, |ctx| {
            let xv = ctx.tape.leaf(&xt);
            multi_head_attention(ctx, &mp, xv, t).unwrap()
        });
        e_att = e_att.max(max_abs_diff(&out, &attention_ref(&store, &mp, &x, batch * t, t)));
    }
    let worst = e_glu.max(e_grn).max(e_att);
    check(
        worst < 1e-12,
        format!("50 instances each: glu {e_glu:.1e}, grn {e_grn:.1e}, attention {e_att:.1e}"),
    )
}

fn c4_filter() -> Outcome {
    let fs = 128.0;
    let cascade = design_bandpass(&BandpassSpec::default(), fs).map_err(|e| e.to_string())?;
    // H(z) from the raw coefficients
    let mag = |f: f64| {
        let zi = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
        cascade
            .sections
            .iter()
            .map(|s| {
                let num = s.b[0] + s.b[1] * zi + s.b[2] * zi * zi;
                let den = s.a[0] + s.a[1] * zi + s.a[2] * zi * zi;
                num / den
            })
            .product::<Complex64>()
            .norm()
    };
    let (h2, h005, h20) = (mag(2.0), mag(0.05), mag(20.0));
    let x: Vec<f64> = (0..3840).map(|i| (2.0 * PI * 2.0 * i as f64 / fs).sin()).collect();
    let y = filtfilt(&SignalFrame::new(x.clone(), fs, 0.0).unwrap(), &cascade)
        .map_err(|e| e.to_string())?
        .samples;
    let mid = 640..3200;
    let lag = (-20i64..=20)
        .max_by(|&a, &b| {
            let xc = |l: i64| mid.clone().map(|i| x[i] * y[(i as i64 + l) as usize]).sum::<f64>();
            xc(a).total_cmp(&xc(b))
        })
        .unwrap();
    check(
        h2 >= 0.9 && h005 <= 0.1 && h20 <= 0.1 && lag == 0,
        format!("|H(2)|={h2:.4} |H(0.05)|={h005:.4} |H(20)|={h20:.4}, filtfilt lag {lag} samples"),
    )
}

fn c5_pipeline_counts() -> Outcome {
    let mut counts = Vec::new();
    let mut bad_shape = 0;
    for seed in 1..=20 {
        let frame = generate_frame(&GeneratorConfig {
            artifact_rate: 0.0,
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let pre = preprocess(&frame.frame, &BandpassSpec::default(), "c5").map_err(|e| e.to_string())?;
        bad_shape += pre
            .pulses
            .iter()
            .filter(|p| p.samples.len() != 256 || p.samples.iter().any(|v| !(0.0..=1.0).contains(v)))
            .count();
        counts.push(pre.pulses.len());
    }
    let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
    check(
        lo >= 35 && hi <= 39 && bad_shape == 0,
        format!("20 clean 30 s frames: {lo}..={hi} pulses, {bad_shape} malformed"),
    )
}

fn toy_dataset(minority: usize, majority: usize, rng: &mut grn_ppg::rng::SeededRng) -> PulseDataset {
    let mut ds = PulseDataset::new();
    let template = |k: f64, i: usize| (2.0 * PI * k * i as f64 / PULSE_LEN as f64).sin() * 0.5 + 0.5;
    for n in 0..minority + majority {
        let artifact = n < minority;
        let k = if artifact { 2.0 } else { 1.0 };
        let row: Vec<f64> = (0..PULSE_LEN)
            .map(|i| (template(k, i) + rng.gen_range(-0.6..0.6)).clamp(0.0, 1.0))
            .collect();
        let label = if artifact { Label::Artifact } else { Label::Normal };
        ds.push(&row, Some(label), format!("toy{n}"), false, 1.0).unwrap();
    }
    ds
}

fn c6_adasyn() -> Outcome {
    let mut rng = seeded(606);
    let ds = toy_dataset(755, 3415, &mut rng);
    let out = adasyn_detailed(&ds, &AdasynConfig::default()).map_err(|e| e.to_string())?;
    let n0 = ds.len();
    let produced = out.dataset.len() - n0;
    let originals_kept = (0..n0).all(|i| out.dataset.row(i) == ds.row(i));

    // brute-force neighbor sets among the minority rows
    let minority: Vec<usize> = (0..n0).filter(|&i| ds.label(i) == Some(Label::Artifact)).collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut off_segment = 0;
    for (s, o) in out.origins.iter().enumerate() {
        let row = out.dataset.row(n0 + s);
        let seed = ds.row(o.seed);
        let mut near: Vec<(f64, usize)> = minority
            .iter()
            .filter(|&&j| j != o.seed)
            .map(|&j| (dist(seed, ds.row(j)), j))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let in_knn = near[..out.k].iter().any(|&(_, j)| j == o.neighbor);
        let nb = ds.row(o.neighbor);
        let on_segment = (0.0..=1.0).contains(&o.lambda)
            && row
                .iter()
                .zip(seed.iter().zip(nb))
                .all(|(r, (a, b))| ((r - a) - o.lambda * (b - a)).abs() < 1e-12);
        if !(in_knn && on_segment && ds.label(o.seed) == Some(Label::Artifact)) {
            off_segment += 1;
        }
    }

    // split first, oversample the training part only
    let mixed = toy_dataset(300, 1300, &mut rng);
    let parts = split(&mixed, &SplitSpec { seed: 6, ..Default::default() }).map_err(|e| e.to_string())?;
    let train = mixed.subset(&parts.train);
    let over = adasyn_detailed(&train, &AdasynConfig::default()).map_err(|e| e.to_string())?;
    let held_out = mixed.subset(&parts.val).len() + mixed.subset(&parts.test).len();
    let leaks = [&parts.val, &parts.test]
        .iter()
        .map(|idx| {
            let sub = mixed.subset(idx);
            (0..sub.len()).filter(|&i| sub.is_synthetic(i)).count()
        })
        .sum::<usize>();
    let syn_in_train = (0..over.dataset.len()).filter(|&i| over.dataset.is_synthetic(i)).count();

    check(
        produced == 2660 && out.generated == 2660 && originals_kept && off_segment == 0 && leaks == 0,
        format!(
            "755/3415 -> {produced} synthetic, {off_segment} off-segment; split check: {syn_in_train} synthetic in train, {leaks} in {held_out} held-out rows"
        ),
    )
}

fn c7_metrics() -> Outcome {
    let c = Confusion { tp: 873, fp: 97, tn: 3000, fn_: 27 };
    let m = metrics(&c).map_err(|e| e.to_string())?;
    let round2 = |v: f64| (v * 100.0).round() / 100.0;
    let headline = round2(m.pre) == 0.90 && round2(m.rec) == 0.97 && round2(m.f1) == 0.93;

    let mut rng = seeded(707);
    let mut mismatches = 0;
    for _ in 0..20 {
        let c = Confusion {
            tp: rng.gen_range(1..500),
            fp: rng.gen_range(0..500),
            tn: rng.gen_range(0..500),
            fn_: rng.gen_range(0..500),
        };
        let m = metrics(&c).map_err(|e| e.to_string())?;
        let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
        let pre = tp / (tp + fp);
        let rec = tp / (tp + fn_);
        let expect = [(tp + tn) / (tp + fp + tn + fn_), pre, rec, 2.0 * pre * rec / (pre + rec)];
        if [m.acc, m.pre, m.rec, m.f1] != expect {
            mismatches += 1;
        }
    }
    check(
        headline && mismatches == 0,
        format!("pre {:.4} rec {:.4} f1 {:.4}; {mismatches}/20 random mismatches", m.pre, m.rec, m.f1),
    )
}

/// Desk-scale surrogate experiment; the budget is fixed here.
fn surrogate_run_spec() -> RunSpec {
    let mut run = RunSpec::default();
    run.transformer.d_model = 64;
    run.transformer.ff_hidden = 64;
    run.transformer.n_layers = 2;
    run.train.max_epochs = 20;
    run
}

fn c8_surrogate() -> Outcome {
    let start = Instant::now();
    let corpus = build_corpus(&CorpusConfig {
        generator: GeneratorConfig { seed: 8, ..Default::default() },
        target_pulses: 4000,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let spec = CompareSpec {
        models: vec![ModelKind::Transformer, ModelKind::GrnTransformer],
        portions: vec![1.0],
        seeds: vec![1, 2, 3],
        threads: 1,
    };
    let result = compare(&corpus.dataset, &spec, &surrogate_run_spec()).map_err(|e| e.to_string())?;
    for f in result.flags() {
        println!("    flag: {f}");
    }
    let mean = |kind: ModelKind| -> &AggregateRow {
        result
            .aggregates
            .iter()
            .find(|r| r.model == kind && r.seed == SeedStat::Mean)
            .unwrap()
    };
    let (g, t) = (mean(ModelKind::GrnTransformer), mean(ModelKind::Transformer));
    for r in result.aggregates.iter().filter(|r| matches!(r.seed, SeedStat::Seed(_))) {
        println!(
            "    {} seed {}: f1 {:.4} smoothness {:.5} epochs {}",
            r.model, r.seed, r.f1, r.smoothness, r.epochs
        );
    }
    let a = g.f1 >= 0.85;
    let b = g.f1 >= t.f1 - 0.02;
    let c = g.smoothness <= t.smoothness;
    check(
        a && b && c,
        format!(
            "prevalence {:.3}; grn f1 {:.4} vs base {:.4}, smoothness {:.5} vs {:.5} [(a) {a} (b) {b} (c) {c}] in {:.0} s",
            corpus.artifact_fraction(),
            g.f1,
            t.f1,
            g.smoothness,
            t.smoothness,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "corpus_pulses = 600\n[run.train]\nmax_epochs = 2\n[run.transformer]\nd_model = 16\nff_hidden = 16\nn_layers = 1\n",
    )
    .map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let run = || -> Result<(Vec<u8>, Vec<u8>), String> {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_grn-ppg"))
            .args(["--seed", "5", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["train", "--model", "grn-transformer"])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        let report = std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?;
        let params = std::fs::read(out.join("checkpoint/params.bin")).map_err(|e| e.to_string())?;
        Ok((report, params))
    };
    let first = run()?;
    let second = run()?;
    check(
        first == second,
        format!("report {} bytes, params {} bytes, identical: {}", first.0.len(), first.1.len(), first == second),
    )
}

fn c10_knn() -> Outcome {
    let mut rng = seeded(1010);
    let mut mismatches = 0;
    let mut total = 0;
    for k in [1usize, 3, 5] {
        for _ in 0..3 {
            let n = 200;
            let centers: Vec<Vec<f64>> = (0..2).map(|_| random_vec(&mut rng, PULSE_LEN, 1.0)).collect();
            let mut data = Vec::with_capacity(n * PULSE_LEN);
            let mut targets = Vec::with_capacity(n);
            for _ in 0..n {
                let cls = rng.gen_bool(0.3);
                let c = &centers[usize::from(cls)];
                data.extend(c.iter().map(|v| v + rng.gen_range(-1.5..1.5)));
                targets.push(cls);
            }
            let model = KnnModel::from_parts(KnnConfig { k }, data.clone(), targets.clone()).map_err(|e| e.to_string())?;
            let mut queries: Vec<Vec<f64>> = (0..n).map(|i| data[i * PULSE_LEN..(i + 1) * PULSE_LEN].to_vec()).collect();
            queries.shuffle(&mut rng);
            queries.truncate(100);
            queries.extend((0..100).map(|_| {
                let c = &centers[usize::from(rng.gen_bool(0.5))];
                c.iter().map(|v| v + rng.gen_range(-1.5..1.5)).collect::<Vec<f64>>()
            }));
            for q in &queries {
                let mut d: Vec<(f64, usize)> = (0..n)
                    .map(|j| {
                        let row = &data[j * PULSE_LEN..(j + 1) * PULSE_LEN];
                        (row.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), j)
                    })
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let votes = d[..k].iter().filter(|&&(_, j)| targets[j]).count();
                let expect = if 2 * votes >= k { Label::Artifact } else { Label::Normal };
                let (got, _) = model.classify(q).map_err(|e| e.to_string())?;
                total += 1;
                if got != expect {
                    mismatches += 1;
                }
            }
        }
    }
    check(mismatches == 0, format!("{mismatches}/{total} mismatches for k in {{1, 3, 5}}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient correctness", c1_gradients),
        ("grn skip identity", c2_skip_identity),
        ("oracle equivalence", c3_oracles),
        ("filter contract", c4_filter),
        ("pipeline counts", c5_pipeline_counts),
        ("adasyn exactness", c6_adasyn),
        ("metric formulas", c7_metrics),
        ("synthetic surrogate experiment", c8_surrogate),
        ("determinism", c9_determinism),
        ("knn oracle", c10_knn),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let res = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match res {
            Ok(d) => println!("criterion {:2} PASS {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:2} FAIL {name}: {d}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
