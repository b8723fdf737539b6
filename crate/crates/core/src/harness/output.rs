//! CSV output: per-trial traces and the experiment summary.

use std::io::Write;
use std::path::Path;

use crate::bandit::{RegretTrace, TraceRecord};
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 6] = [
    "t",
    "arm",
    "reward",
    "optimal_mean",
    "instant_regret",
    "cumulative_regret",
];

pub const SUMMARY_HEADER: [&str; 6] = [
    "algo",
    "env",
    "trial",
    "final_cumulative_regret",
    "wall_time_seconds",
    "status",
];

/// Plain decimal with at most 9 significant digits, trailing zeros removed.
pub fn format_decimal(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// One row per round. Arms are numbered from 1 in the file.
pub fn write_trace<W: Write>(trace: &RegretTrace, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace.records() {
        w.write_record([
            r.t.to_string(),
            (r.arm + 1).to_string(),
            format_decimal(r.reward),
            format_decimal(r.optimal_mean),
            format_decimal(r.instant_regret),
            format_decimal(r.cumulative_regret),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &RegretTrace, path: &Path) -> Result<()> {
    write_trace(trace, std::fs::File::create(path)?)
}

/// Parses a trace file written by [`write_trace`].
pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(parse_err(1, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(row, format!("bad field {k}")))
        };
        out.push(TraceRecord {
            t: num(0)? as usize,
            arm: match num(1)? as usize {
                0 => return Err(parse_err(row, "arms are numbered from 1".into())),
                a => a - 1,
            },
            reward: num(2)?,
            optimal_mean: num(3)?,
            instant_regret: num(4)?,
            cumulative_regret: num(5)?,
        });
    }
    Ok(out)
}

/// One line of the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algo: String,
    pub env: String,
    pub trial: usize,
    /// `None` when the trial failed.
    pub final_cumulative_regret: Option<f64>,
    /// Only recorded when timing is on.
    pub wall_time_seconds: Option<f64>,
    pub status: String,
}

/// Mean and sample standard deviation over the successful rows.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Trial rows followed by `mean` and `std` rows.
pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(format_decimal).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.algo.clone(),
            r.env.clone(),
            r.trial.to_string(),
            opt(r.final_cumulative_regret),
            opt(r.wall_time_seconds),
            r.status.clone(),
        ])
        .map_err(csv_err)?;
    }
    if let Some(first) = rows.first() {
        let ok: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.final_cumulative_regret)
            .collect();
        let times: Vec<f64> = rows.iter().filter_map(|r| r.wall_time_seconds).collect();
        let (mean, std) = mean_std(&ok);
        let (tmean, tstd) = mean_std(&times);
        let agg = |v: f64| {
            if v.is_nan() {
                String::new()
            } else {
                format_decimal(v)
            }
        };
        let status = format!("{}/{} ok", ok.len(), rows.len());
        for (label, value, time) in [("mean", mean, tmean), ("std", std, tstd)] {
            w.write_record([
                first.algo.clone(),
                first.env.clone(),
                label.to_string(),
                agg(value),
                agg(time),
                status.clone(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_file(rows: &[SummaryRow], path: &Path) -> Result<()> {
    write_summary(rows, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_formatting() {
        assert_eq!(format_decimal(0.0), "0");
        assert_eq!(format_decimal(-0.0), "0");
        assert_eq!(format_decimal(1.0), "1");
        assert_eq!(format_decimal(0.1), "0.1");
        assert_eq!(format_decimal(2.0 / 3.0), "0.666666667");
        assert_eq!(format_decimal(123456.789012), "123456.789");
        assert_eq!(format_decimal(-1e-12), "-0.000000000001");
        assert_eq!(format_decimal(1234567891234.0), "1234567891234");
        assert_eq!(format_decimal(9.9999999999), "10");
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn trace_round_trip() {
        let mut tr = RegretTrace::new();
        tr.push(1, 0.25, 1.0, 0.5);
        tr.push(0, 1.0, 1.0, 1.0);
        let mut buf = Vec::new();
        write_trace(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,arm,reward,optimal_mean,instant_regret,cumulative_regret\n1,2,0.25,1,0.5,0.5\n2,1,1,1,0,0.5\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trace_file(&tr, &p).unwrap();
        assert_eq!(read_trace_file(&p).unwrap(), tr.records());
    }

    #[test]
    fn summary_layout() {
        let row = |trial, v: Option<f64>| SummaryRow {
            algo: "random".into(),
            env: "synthetic:linear".into(),
            trial,
            final_cumulative_regret: v,
            wall_time_seconds: None,
            status: if v.is_some() {
                "ok".into()
            } else {
                "failed at t=3: boom".into()
            },
        };
        let mut buf = Vec::new();
        write_summary(
            &[row(0, Some(1.0)), row(1, Some(3.0)), row(2, None)],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "algo,env,trial,final_cumulative_regret,wall_time_seconds,status"
        );
        assert_eq!(lines[3], "random,synthetic:linear,2,,,failed at t=3: boom");
        assert_eq!(lines[4], "random,synthetic:linear,mean,2,,2/3 ok");
        assert_eq!(lines[5], "random,synthetic:linear,std,1.41421356,,2/3 ok");
    }
}
