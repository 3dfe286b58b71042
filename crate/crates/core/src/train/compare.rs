use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_pipeline, EvalReport, RunSpec};
use crate::dataset::PulseDataset;
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::signal::io::{csv_writer, fmt_sig9};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareSpec {
    pub models: Vec<ModelKind>,
    pub portions: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            models: vec![
                ModelKind::Transformer,
                ModelKind::GrnTransformer,
                ModelKind::Mlp,
                ModelKind::GrnMlp,
                ModelKind::Knn,
            ],
            portions: vec![0.025, 0.05, 0.075, 0.10],
            seeds: vec![1, 2, 3],
            threads: 0,
        }
    }
}

impl CompareSpec {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.portions.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("compare needs at least one model, portion and seed".into()));
        }
        if let Some(p) = self.portions.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::Config(format!("portion must be in (0, 1], got {p}")));
        }
        Ok(())
    }
}

/// Seed column of the aggregate CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeedStat {
    Seed(u64),
    Mean,
    Std,
}

impl fmt::Display for SeedStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedStat::Seed(s) => write!(f, "{s}"),
            SeedStat::Mean => f.write_str("mean"),
            SeedStat::Std => f.write_str("std"),
        }
    }
}

impl FromStr for SeedStat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(SeedStat::Mean),
            "std" => Ok(SeedStat::Std),
            _ => s
                .parse()
                .map(SeedStat::Seed)
                .map_err(|_| Error::Data(format!("bad seed column '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: ModelKind,
    pub portion: f64,
    pub seed: SeedStat,
    pub acc: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
    /// NaN when the run was too short to measure it.
    pub smoothness: f64,
    pub epochs: f64,
    pub wall_s: f64,
}

/// GRN-Transformer versus Transformer on one seed (or the seed mean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub portion: f64,
    pub seed: SeedStat,
    pub f1_grn: f64,
    pub f1_base: f64,
    pub smoothness_grn: f64,
    pub smoothness_base: f64,
    /// GRN F1 is no worse than the base F1 minus 0.02.
    pub f1_holds: bool,
    /// GRN validation curve is at least as smooth.
    pub smoothness_holds: bool,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub reports: Vec<EvalReport>,
    pub aggregates: Vec<AggregateRow>,
    pub claims: Vec<ClaimCheck>,
}

impl Comparison {
    /// Claims failing on some seed, as readable lines.
    pub fn flags(&self) -> Vec<String> {
        self.claims
            .iter()
            .flat_map(|c| {
                let mut v = Vec::new();
                if !c.f1_holds {
                    v.push(format!(
                        "portion {} seed {}: grn-transformer f1 {:.4} < transformer f1 {:.4} - 0.02",
                        c.portion, c.seed, c.f1_grn, c.f1_base
                    ));
                }
                if !c.smoothness_holds {
                    v.push(format!(
                        "portion {} seed {}: grn-transformer smoothness {:.5} > transformer {:.5}",
                        c.portion, c.seed, c.smoothness_grn, c.smoothness_base
                    ));
                }
                v
            })
            .collect()
    }
}

fn row_of(r: &EvalReport) -> AggregateRow {
    AggregateRow {
        model: r.model,
        portion: r.portion,
        seed: SeedStat::Seed(r.seed),
        acc: r.metrics.acc,
        pre: r.metrics.pre,
        rec: r.metrics.rec,
        f1: r.metrics.f1,
        smoothness: r.smoothness.unwrap_or(f64::NAN),
        epochs: r.epochs as f64,
        wall_s: r.wall_s,
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Per-run rows followed by `mean` and sample-`std` rows per model and portion.
pub fn aggregate(reports: &[EvalReport]) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = reports.iter().map(row_of).collect();
    let mut groups: BTreeMap<(usize, u64), Vec<&AggregateRow>> = BTreeMap::new();
    for r in &rows {
        let mi = ModelKind::ALL.iter().position(|k| *k == r.model).unwrap_or(0);
        groups.entry((mi, r.portion.to_bits())).or_default().push(r);
    }
    let mut extra = Vec::new();
    for ((mi, pb), g) in groups {
        let col = |f: fn(&AggregateRow) -> f64| mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
        let stats = [
            col(|r| r.acc),
            col(|r| r.pre),
            col(|r| r.rec),
            col(|r| r.f1),
            col(|r| r.smoothness),
            col(|r| r.epochs),
            col(|r| r.wall_s),
        ];
        for (seed, pick) in [(SeedStat::Mean, 0usize), (SeedStat::Std, 1)] {
            let v = |i: usize| if pick == 0 { stats[i].0 } else { stats[i].1 };
            extra.push(AggregateRow {
                model: ModelKind::ALL[mi],
                portion: f64::from_bits(pb),
                seed,
                acc: v(0),
                pre: v(1),
                rec: v(2),
                f1: v(3),
                smoothness: v(4),
                epochs: v(5),
                wall_s: v(6),
            });
        }
    }
    rows.extend(extra);
    rows
}

fn claims(rows: &[AggregateRow]) -> Vec<ClaimCheck> {
    let find = |model, portion: f64, seed| {
        rows.iter()
            .find(|r| r.model == model && r.portion == portion && r.seed == seed)
    };
    let mut out = Vec::new();
    for g in rows.iter().filter(|r| r.model == ModelKind::GrnTransformer && r.seed != SeedStat::Std) {
        if let Some(b) = find(ModelKind::Transformer, g.portion, g.seed) {
            out.push(ClaimCheck {
                portion: g.portion,
                seed: g.seed,
                f1_grn: g.f1,
                f1_base: b.f1,
                smoothness_grn: g.smoothness,
                smoothness_base: b.smoothness,
                f1_holds: g.f1 >= b.f1 - 0.02,
                smoothness_holds: g.smoothness <= b.smoothness,
            });
        }
    }
    out
}

/// Runs every (model, portion, seed) cell, in parallel across cells.
pub fn compare(data: &PulseDataset, spec: &CompareSpec, run: &RunSpec) -> Result<Comparison> {
    spec.validate()?;
    run.validate()?;
    let cells: Vec<(ModelKind, f64, u64)> = spec
        .models
        .iter()
        .flat_map(|&m| {
            spec.portions
                .iter()
                .flat_map(move |&p| spec.seeds.iter().map(move |&s| (m, p, s)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let reports: Vec<EvalReport> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, p, s)| {
                log::info!("compare: {m} portion {p} seed {s}");
                run_pipeline(data, m, p, s, run).map(|o| o.report)
            })
            .collect::<Result<_>>()
    })?;
    let aggregates = aggregate(&reports);
    let claims = claims(&aggregates);
    Ok(Comparison {
        reports,
        aggregates,
        claims,
    })
}

const AGG_HEADER: [&str; 10] = ["model", "portion", "seed", "acc", "pre", "rec", "f1", "smoothness", "epochs", "wall_s"];

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        fmt_sig9(v)
    }
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], w: W) -> Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(AGG_HEADER)?;
    for r in rows {
        wr.write_record([
            r.model.to_string(),
            fmt_sig9(r.portion),
            r.seed.to_string(),
            num(r.acc),
            num(r.pre),
            num(r.rec),
            num(r.f1),
            num(r.smoothness),
            num(r.epochs),
            num(r.wall_s),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_aggregate_csv<R: Read>(r: R) -> Result<Vec<AggregateRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().ne(AGG_HEADER) {
        return Err(Error::Data(format!("unexpected aggregate header {headers:?}")));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            if rec[i].is_empty() {
                return Ok(f64::NAN);
            }
            rec[i]
                .parse()
                .map_err(|_| Error::Data(format!("bad number '{}' in column {}", &rec[i], AGG_HEADER[i])))
        };
        out.push(AggregateRow {
            model: rec[0].parse()?,
            portion: f(1)?,
            seed: rec[2].parse()?,
            acc: f(3)?,
            pre: f(4)?,
            rec: f(5)?,
            f1: f(6)?,
            smoothness: f(7)?,
            epochs: f(8)?,
            wall_s: f(9)?,
        });
    }
    Ok(out)
}

pub fn write_curves_csv<W: Write>(reports: &[EvalReport], w: W) -> Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(["model", "portion", "seed", "epoch", "train_loss", "val_loss"])?;
    for r in reports {
        for (e, (t, v)) in r.train_loss.iter().zip(&r.val_loss).enumerate() {
            wr.write_record([
                r.model.to_string(),
                fmt_sig9(r.portion),
                r.seed.to_string(),
                (e + 1).to_string(),
                fmt_sig9(*t),
                fmt_sig9(*v),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}
