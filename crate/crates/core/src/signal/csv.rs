//! CSV input/output for channel data.
//!
//! Format: a header row `time,<name>:<quantity>,...` followed by numeric
//! rows in SI units. The `time` column may be omitted when the sampling
//! rate is supplied explicitly. Empty or NaN cells mark missing samples.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::structural::Quantity;

use super::{Channel, TimeSeriesSet};

fn parse_quantity(tag: &str) -> Option<Quantity> {
    match tag {
        "accel" | "acceleration" | "a" => Some(Quantity::Acceleration),
        "vel" | "velocity" | "v" => Some(Quantity::Velocity),
        "disp" | "displacement" | "d" => Some(Quantity::Displacement),
        _ => None,
    }
}

/// Loads a channel CSV. When the first column is `time`, the sampling rate
/// is derived from it (rejecting non-uniform or non-monotonic stamps);
/// otherwise `fs` must be given.
pub fn load_csv(path: &Path, fs: Option<f64>) -> Result<TimeSeriesSet> {
    let file = std::fs::File::open(path)?;
    // `#`-prefixed lines are header comments and are skipped.
    let mut lines = BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim_start().starts_with('#')));

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
    let _ = header_line;
    let header = header?;
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if cols.is_empty() || cols[0].is_empty() {
        return Err(Error::Parse { line: 1, msg: "missing header".into() });
    }

    let has_time = cols[0].eq_ignore_ascii_case("time");
    let first_channel = usize::from(has_time);
    if cols.len() <= first_channel {
        return Err(Error::Parse { line: 1, msg: "no channel columns".into() });
    }
    if !has_time && fs.is_none() {
        return Err(Error::InvalidInput(
            "file has no time column; a sampling rate is required".into(),
        ));
    }

    let mut channels: Vec<Channel> = Vec::new();
    for col in &cols[first_channel..] {
        let (name, tag) = col.split_once(':').ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("channel header '{col}' must be '<name>:<quantity>'"),
        })?;
        let quantity = parse_quantity(tag.trim()).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("unknown quantity tag '{tag}' in header '{col}'"),
        })?;
        channels.push(Channel {
            name: name.trim().to_string(),
            quantity,
            values: Vec::new(),
            valid: Vec::new(),
        });
    }

    let mut times: Vec<(usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} cells, found {}", cols.len(), cells.len()),
            });
        }
        if has_time {
            let t: f64 = cells[0].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid time value '{}'", cells[0]),
            })?;
            if let Some(&(_, prev)) = times.last() {
                if t <= prev {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("non-monotonic time: {t} after {prev}"),
                    });
                }
            }
            times.push((line_no, t));
        }
        for (ch, cell) in channels.iter_mut().zip(&cells[first_channel..]) {
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                ch.values.push(0.0);
                ch.valid.push(false);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid number '{cell}'"),
                })?;
                if v.is_nan() {
                    ch.values.push(0.0);
                    ch.valid.push(false);
                } else {
                    ch.values.push(v);
                    ch.valid.push(true);
                }
            }
        }
    }
    if channels[0].values.is_empty() {
        return Err(Error::Parse { line: 1, msg: "file has no data rows".into() });
    }

    let (t0, rate) = if has_time {
        if times.len() < 2 {
            match fs {
                Some(f) => (times[0].1, f),
                None => {
                    return Err(Error::InvalidInput(
                        "cannot derive the sampling rate from a single sample".into(),
                    ))
                }
            }
        } else {
            let dt = (times[times.len() - 1].1 - times[0].1) / (times.len() - 1) as f64;
            for w in times.windows(2) {
                let step = w[1].1 - w[0].1;
                if (step - dt).abs() > 1e-6 * dt.max(1e-12) {
                    return Err(Error::Parse {
                        line: w[1].0,
                        msg: format!("non-uniform time step {step} (expected {dt})"),
                    });
                }
            }
            (times[0].1, 1.0 / dt)
        }
    } else {
        (0.0, fs.expect("checked above"))
    };

    TimeSeriesSet::new(t0, rate, channels)
}

/// Writes a channel set as CSV with a `time` column; masked samples are
/// emitted as `nan`. Lines in `header_comments` are prefixed with `#`.
pub fn write_csv(ts: &TimeSeriesSet, path: &Path, header_comments: &[String]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for line in header_comments {
        writeln!(file, "# {line}")?;
    }
    let mut header = String::from("time");
    for ch in &ts.channels {
        header.push(',');
        header.push_str(&ch.name);
        header.push(':');
        header.push_str(ch.quantity.short_name());
    }
    writeln!(file, "{header}")?;
    for k in 0..ts.n_samples() {
        let mut row = format!("{:.9}", ts.t0 + k as f64 / ts.fs);
        for ch in &ts.channels {
            if ch.valid[k] {
                row.push_str(&format!(",{:.12e}", ch.values[k]));
            } else {
                row.push_str(",nan");
            }
        }
        writeln!(file, "{row}")?;
    }
    Ok(())
}
