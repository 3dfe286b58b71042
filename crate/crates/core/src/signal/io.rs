//! Raw signal CSV (`t_s,ppg`) and float formatting shared by the CSV writers.

use std::io::{Read, Write};

use super::SignalFrame;
use crate::error::{Error, Result};

/// `%.9g`-style formatting: 9 significant digits, trailing zeros trimmed.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// CSV writer with `\n` record terminators.
pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_signal_csv<W: Write>(frame: &SignalFrame, w: W) -> Result<()> {
    let mut wr = csv_writer(w);
    wr.write_record(["t_s", "ppg"])?;
    for (i, v) in frame.samples.iter().enumerate() {
        wr.write_record([fmt_sig9(frame.time_of(i)), fmt_sig9(*v)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a `t_s,ppg` file; the sample rate is inferred from the time column.
pub fn read_signal_csv<R: Read>(r: R) -> Result<SignalFrame> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t_s" || &headers[1] != "ppg" {
        return Err(Error::Data(format!("expected header t_s,ppg, got {headers:?}")));
    }
    let mut t = Vec::new();
    let mut x = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Data(format!("bad number '{}': {e}", &rec[i])))
        };
        t.push(parse(0)?);
        x.push(parse(1)?);
    }
    if x.len() < 2 {
        return Err(Error::Data(format!("signal file has {} samples, need at least 2", x.len())));
    }
    let span = t[t.len() - 1] - t[0];
    if !(span > 0.0) {
        return Err(Error::Data("time column must be increasing".into()));
    }
    let fs = (t.len() - 1) as f64 / span;
    SignalFrame::new(x, fs, t[0])
}
