use std::io::{Read, Write};
use std::path::Path;

use crate::diagnostics::RunTrace;

use super::HarnessError;

pub const CSV_HEADER: [&str; 13] = [
    "step",
    "layer",
    "raw_ratio",
    "clipped_ratio",
    "saturated_high",
    "w_frob",
    "mtilde_frob",
    "q_frob",
    "d_frob",
    "s",
    "c_denom",
    "loss",
    "psi",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "run_id",
    "variant",
    "final_loss",
    "final_psi",
    "saturation_fraction",
    "max_weight_growth",
    "anchor_ratio",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// One parsed data row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub step: u64,
    pub layer: usize,
    pub raw_ratio: f64,
    pub clipped_ratio: f64,
    pub saturated_high: bool,
    pub w_frob: f64,
    pub mtilde_frob: f64,
    pub q_frob: f64,
    pub d_frob: f64,
    pub s: f64,
    pub c_denom: Option<f64>,
    pub loss: f64,
    pub psi: f64,
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Csv(e.to_string())
}

/// The CSV rows of a trace. Records of steps without a log entry get `NaN`
/// loss and Ψ.
pub fn trace_rows(trace: &RunTrace) -> Vec<CsvRow> {
    let mut logs = trace.logs.iter().peekable();
    trace
        .records
        .iter()
        .map(|r| {
            while logs.next_if(|l| l.step < r.step).is_some() {}
            let (loss, psi) = match logs.peek() {
                Some(l) if l.step == r.step => (l.loss, l.psi),
                _ => (f64::NAN, f64::NAN),
            };
            CsvRow {
                step: r.step,
                layer: r.layer,
                raw_ratio: r.raw_ratio,
                clipped_ratio: r.clipped_ratio,
                saturated_high: r.saturated_high,
                w_frob: r.w_frob,
                mtilde_frob: r.mtilde_frob,
                q_frob: r.q_frob,
                d_frob: r.d_frob,
                s: r.s,
                c_denom: r.c_denom,
                loss,
                psi,
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(trace: &RunTrace, out: W) -> Result<(), HarnessError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in trace_rows(trace) {
        wtr.write_record([
            r.step.to_string(),
            r.layer.to_string(),
            fmt_float(r.raw_ratio),
            fmt_float(r.clipped_ratio),
            r.saturated_high.to_string(),
            fmt_float(r.w_frob),
            fmt_float(r.mtilde_frob),
            fmt_float(r.q_frob),
            fmt_float(r.d_frob),
            fmt_float(r.s),
            r.c_denom.map(fmt_float).unwrap_or_default(),
            fmt_float(r.loss),
            fmt_float(r.psi),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| HarnessError::Csv(e.to_string()))?;
    Ok(())
}

pub fn csv_bytes(trace: &RunTrace) -> Result<Vec<u8>, HarnessError> {
    let mut buf = Vec::new();
    write_csv(trace, &mut buf)?;
    Ok(buf)
}

pub fn emit_csv(trace: &RunTrace, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, csv_bytes(trace)?).map_err(|e| HarnessError::io(path, e))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T, HarnessError> {
    let raw = rec
        .get(i)
        .ok_or_else(|| HarnessError::Csv(format!("missing column {}", CSV_HEADER[i])))?;
    raw.parse()
        .map_err(|_| HarnessError::Csv(format!("bad {} value '{raw}'", CSV_HEADER[i])))
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Csv(format!("unexpected header {header:?}")));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            Ok(CsvRow {
                step: field(&rec, 0)?,
                layer: field(&rec, 1)?,
                raw_ratio: field(&rec, 2)?,
                clipped_ratio: field(&rec, 3)?,
                saturated_high: field(&rec, 4)?,
                w_frob: field(&rec, 5)?,
                mtilde_frob: field(&rec, 6)?,
                q_frob: field(&rec, 7)?,
                d_frob: field(&rec, 8)?,
                s: field(&rec, 9)?,
                c_denom: match rec.get(10) {
                    Some("") | None => None,
                    Some(_) => Some(field(&rec, 10)?),
                },
                loss: field(&rec, 11)?,
                psi: field(&rec, 12)?,
            })
        })
        .collect()
}

pub fn load_csv(path: &Path) -> Result<Vec<CsvRow>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    parse_csv(file)
}

/// One line of the per-bundle summary file.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub run_id: String,
    pub variant: String,
    pub final_loss: f64,
    pub final_psi: f64,
    pub saturation_fraction: f64,
    pub max_weight_growth: f64,
    /// Mean raw ratio over the layers at the first logged step.
    pub anchor_ratio: f64,
}

impl SummaryRow {
    /// Same numbers `summary_from_rows` gets back from the written CSV.
    pub fn from_trace(trace: &RunTrace) -> Self {
        let (run_id, variant) = trace
            .config
            .as_ref()
            .map(|c| (c.id.clone(), c.method.name().to_string()))
            .unwrap_or_default();
        summary_from_rows(&run_id, &variant, &trace_rows(trace))
    }
}

/// Summary of one run's rows. Loss and Ψ come from the last row, growth is
/// the largest logged `‖W‖_F` over the first one per layer.
pub fn summary_from_rows(run_id: &str, variant: &str, rows: &[CsvRow]) -> SummaryRow {
    let mut growth = f64::NAN;
    let mut layers: Vec<usize> = rows.iter().map(|r| r.layer).collect();
    layers.sort_unstable();
    layers.dedup();
    for l in layers {
        let mut it = rows.iter().filter(|r| r.layer == l).map(|r| r.w_frob);
        if let Some(w0) = it.next() {
            let g = it.fold(w0, f64::max) / w0;
            growth = if growth.is_nan() { g } else { growth.max(g) };
        }
    }
    let first_step = rows.first().map(|r| r.step);
    let first: Vec<f64> = rows
        .iter()
        .take_while(|r| Some(r.step) == first_step)
        .map(|r| r.raw_ratio)
        .collect();
    let last = rows.last();
    let sat = rows.iter().filter(|r| r.saturated_high).count() as f64 / rows.len().max(1) as f64;
    SummaryRow {
        run_id: run_id.to_string(),
        variant: variant.to_string(),
        final_loss: last.map_or(f64::NAN, |r| r.loss),
        final_psi: last.map_or(f64::NAN, |r| r.psi),
        saturation_fraction: if rows.is_empty() { f64::NAN } else { sat },
        max_weight_growth: growth,
        anchor_ratio: if first.is_empty() {
            f64::NAN
        } else {
            first.iter().sum::<f64>() / first.len() as f64
        },
    }
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<(), HarnessError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        wtr.write_record([
            r.run_id.clone(),
            r.variant.clone(),
            fmt_float(r.final_loss),
            fmt_float(r.final_psi),
            fmt_float(r.saturation_fraction),
            fmt_float(r.max_weight_growth),
            fmt_float(r.anchor_ratio),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| HarnessError::Csv(e.to_string()))?;
    Ok(())
}

pub fn emit_summary(rows: &[SummaryRow], path: &Path) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    write_summary(rows, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::StepLog;
    use crate::optim::StepRecord;

    fn trace(layers: usize, steps: u64) -> RunTrace {
        let mut t = RunTrace::default();
        for step in 1..=steps {
            t.logs.push(StepLog {
                step,
                loss: 1.0 / step as f64,
                psi: std::f64::consts::PI / step as f64,
                grad_nuclear: vec![],
            });
            for layer in 0..layers {
                t.records.push(StepRecord {
                    layer,
                    step,
                    raw_ratio: 0.1 + 1.0 / 3.0 * step as f64,
                    clipped_ratio: 1.5,
                    saturated_high: layer == 0,
                    w_frob: 2f64.sqrt() * step as f64,
                    mtilde_frob: 1e-300,
                    q_frob: 123456.789e10,
                    d_frob: f64::MIN_POSITIVE,
                    s: 0.2 * 8f64.sqrt(),
                    c_denom: (layer == 1).then_some(0.7),
                });
            }
        }
        t
    }

    #[test]
    fn header_only_for_empty_trace() {
        let text = String::from_utf8(csv_bytes(&RunTrace::default()).unwrap()).unwrap();
        assert_eq!(
            text,
            "step,layer,raw_ratio,clipped_ratio,saturated_high,w_frob,mtilde_frob,q_frob,d_frob,s,c_denom,loss,psi\n"
        );
        assert!(parse_csv(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn row_count_and_round_trip() {
        let t = trace(2, 3);
        let bytes = csv_bytes(&t).unwrap();
        let rows = parse_csv(bytes.as_slice()).unwrap();
        assert_eq!(rows.len(), 6);
        for (row, rec) in rows.iter().zip(&t.records) {
            assert_eq!((row.step, row.layer), (rec.step, rec.layer));
            assert_eq!(row.raw_ratio.to_bits(), rec.raw_ratio.to_bits());
            assert_eq!(row.w_frob.to_bits(), rec.w_frob.to_bits());
            assert_eq!(row.mtilde_frob, rec.mtilde_frob);
            assert_eq!(row.q_frob, rec.q_frob);
            assert_eq!(row.d_frob, rec.d_frob);
            assert_eq!(row.s.to_bits(), rec.s.to_bits());
            assert_eq!(row.c_denom, rec.c_denom);
            assert_eq!(row.saturated_high, rec.saturated_high);
            assert_eq!(row.loss, 1.0 / rec.step as f64);
            assert_eq!(row.psi, std::f64::consts::PI / rec.step as f64);
        }
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn summary_rows() {
        let t = trace(2, 3);
        let s = SummaryRow::from_trace(&t);
        assert_eq!(s.saturation_fraction, 0.5);
        let rows = parse_csv(csv_bytes(&t).unwrap().as_slice()).unwrap();
        let again = summary_from_rows("x", "y", &rows);
        assert_eq!(again.saturation_fraction, 0.5);
        assert_eq!(again.anchor_ratio, s.anchor_ratio);
        let mut buf = Vec::new();
        write_summary(&[again], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "run_id,variant,final_loss,final_psi,saturation_fraction,max_weight_growth,anchor_ratio\n"
        ));
    }
}
