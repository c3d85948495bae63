//! Gap-aware exponential smoothing and `%.9g`-style number formatting.

use std::io::{Read, Write};

use crate::error::{contract, Result, SorsError};

/// `y_k = b^d y_{k-1} + (1 - b^d) x_k` with `b = 2^(-1/half_life)`, `d` the
/// step gap and `y_0 = x_0`.
pub fn ema_smooth(series: &[(u64, f64)], half_life: f64) -> Result<Vec<(u64, f64)>> {
    if series.is_empty() {
        return Err(contract("cannot smooth an empty series"));
    }
    if !(half_life > 0.0) {
        return Err(contract("half-life must be positive"));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut y = series[0].1;
    out.push((series[0].0, y));
    for w in series.windows(2) {
        let ((s0, _), (s1, x)) = (w[0], w[1]);
        if s1 <= s0 {
            return Err(contract(format!("steps must increase strictly, got {s0} then {s1}")));
        }
        let decay = (-((s1 - s0) as f64) / half_life).exp2();
        y = decay * y + (1.0 - decay) * x;
        out.push((s1, y));
    }
    Ok(out)
}

/// Formats like C's `%.{precision}g`.
pub fn format_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

pub fn fmt9(x: f64) -> String {
    format_g(x, 9)
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Re-smooths the `raw_return` column of a CSV with `step` and `raw_return`
/// columns, per `seed` when that column exists. Writes the input columns
/// with `smoothed_return` added or replaced.
pub fn smooth_csv<R: Read, W: Write>(input: R, output: W, half_life: f64) -> Result<()> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let step_col = column("step").ok_or_else(|| missing_column("step"))?;
    let raw_col = column("raw_return").ok_or_else(|| missing_column("raw_return"))?;
    let seed_col = column("seed");
    let smooth_col = column("smoothed_return");

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = i + 2;
        let step = parse_field::<u64>(&record, step_col, line)?;
        let raw = parse_field::<f64>(&record, raw_col, line)?;
        let group = seed_col.map(|c| record[c].to_string()).unwrap_or_default();
        rows.push((group, step, raw, record));
    }

    let mut smoothed = vec![0.0; rows.len()];
    let mut groups: Vec<&str> = Vec::new();
    for (g, ..) in &rows {
        if !groups.contains(&g.as_str()) {
            groups.push(g);
        }
    }
    for g in groups {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].0 == g).collect();
        let series: Vec<(u64, f64)> = idx.iter().map(|&i| (rows[i].1, rows[i].2)).collect();
        for (&i, (_, y)) in idx.iter().zip(ema_smooth(&series, half_life)?) {
            smoothed[i] = y;
        }
    }

    let mut writer = csv::Writer::from_writer(output);
    let mut out_headers: Vec<&str> = headers.iter().collect();
    if smooth_col.is_none() {
        out_headers.push("smoothed_return");
    }
    writer.write_record(&out_headers).map_err(csv_error)?;
    for ((.., record), y) in rows.iter().zip(smoothed) {
        let mut fields: Vec<String> = record.iter().map(str::to_string).collect();
        match smooth_col {
            Some(c) => fields[c] = fmt9(y),
            None => fields.push(fmt9(y)),
        }
        writer.write_record(&fields).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, col: usize, line: usize) -> Result<T> {
    let text = record.get(col).unwrap_or("");
    text.parse().map_err(|_| SorsError::Parse {
        line,
        message: format!("cannot parse `{text}` in column {}", col + 1),
    })
}

fn missing_column(name: &str) -> SorsError {
    SorsError::Parse {
        line: 1,
        message: format!("missing `{name}` column"),
    }
}

pub(crate) fn csv_error(e: csv::Error) -> SorsError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SorsError::Io(io),
        other => SorsError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}
