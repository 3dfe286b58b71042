//! Fixed-length pulse matrix with labels and provenance, plus the canonical
//! pulse CSV format (`source_id,label,s000..s255`).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::io::csv_writer;
use crate::signal::{CanonicalPulse, Label, PULSE_LEN};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseDataset {
    data: Vec<f64>,
    labels: Vec<Option<Label>>,
    source_ids: Vec<String>,
    synthetic: Vec<bool>,
    /// Pre-normalization amplitude range; NaN when unknown (e.g. read from CSV).
    amplitude_ranges: Vec<f64>,
}

impl PulseDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pulses(pulses: &[CanonicalPulse]) -> Result<Self> {
        let mut ds = Self::new();
        for p in pulses {
            ds.push(&p.samples, p.label, p.source_id.clone(), false, p.amplitude_range)?;
        }
        Ok(ds)
    }

    pub fn push(
        &mut self,
        row: &[f64],
        label: Option<Label>,
        source_id: String,
        synthetic: bool,
        amplitude_range: f64,
    ) -> Result<()> {
        if row.len() != PULSE_LEN {
            return Err(Error::Data(format!(
                "pulse rows need {PULSE_LEN} samples, got {}",
                row.len()
            )));
        }
        self.data.extend_from_slice(row);
        self.labels.push(label);
        self.source_ids.push(source_id);
        self.synthetic.push(synthetic);
        self.amplitude_ranges.push(amplitude_range);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * PULSE_LEN..(i + 1) * PULSE_LEN]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn label(&self, i: usize) -> Option<Label> {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Option<Label>] {
        &self.labels
    }

    pub fn source_id(&self, i: usize) -> &str {
        &self.source_ids[i]
    }

    pub fn is_synthetic(&self, i: usize) -> bool {
        self.synthetic[i]
    }

    pub fn amplitude_range(&self, i: usize) -> f64 {
        self.amplitude_ranges[i]
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// Labels as 0/1 targets; errors if any row is unlabeled.
    pub fn targets(&self) -> Result<Vec<f64>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.map(Label::as_f64)
                    .ok_or_else(|| Error::Data(format!("row {i} is unlabeled")))
            })
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == Some(label)).count()
    }

    /// Row indices grouped by label (unlabeled rows are skipped).
    pub fn indices_by_label(&self) -> BTreeMap<Label, Vec<usize>> {
        let mut m: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(l) = l {
                m.entry(*l).or_default().push(i);
            }
        }
        m
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::new();
        out.data.reserve(indices.len() * PULSE_LEN);
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
            out.source_ids.push(self.source_ids[i].clone());
            out.synthetic.push(self.synthetic[i]);
            out.amplitude_ranges.push(self.amplitude_ranges[i]);
        }
        out
    }

    pub fn extend(&mut self, other: &PulseDataset) {
        self.data.extend_from_slice(&other.data);
        self.labels.extend_from_slice(&other.labels);
        self.source_ids.extend_from_slice(&other.source_ids);
        self.synthetic.extend_from_slice(&other.synthetic);
        self.amplitude_ranges.extend_from_slice(&other.amplitude_ranges);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv_writer(w);
        let mut header = vec!["source_id".to_string(), "label".to_string()];
        header.extend((0..PULSE_LEN).map(|i| format!("s{i:03}")));
        wr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(PULSE_LEN + 2);
            rec.push(self.source_ids[i].clone());
            rec.push(Label::code(self.labels[i]).to_string());
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.len() != PULSE_LEN + 2
            || &headers[0] != "source_id"
            || &headers[1] != "label"
            || &headers[2] != "s000"
        {
            return Err(Error::Data(format!(
                "pulse CSV needs columns source_id,label,s000..s255 ({} found)",
                headers.len()
            )));
        }
        let mut ds = Self::new();
        let mut row = vec![0.0; PULSE_LEN];
        for (n, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != PULSE_LEN + 2 {
                return Err(Error::Data(format!("row {n} has {} columns", rec.len())));
            }
            let code: i64 = rec[1]
                .trim()
                .parse()
                .map_err(|e| Error::Data(format!("row {n}: bad label '{}': {e}", &rec[1])))?;
            let label = Label::from_code(code)?;
            for (j, v) in row.iter_mut().enumerate() {
                *v = rec[j + 2]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Data(format!("row {n}: bad sample '{}': {e}", &rec[j + 2])))?;
            }
            ds.push(&row, label, rec[0].to_string(), false, f64::NAN)?;
        }
        Ok(ds)
    }
}
