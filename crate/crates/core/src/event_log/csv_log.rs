use std::collections::HashMap;
use std::io::Write;

use super::{LogError, ParsedLog, Trace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub case_column: String,
    pub activity_column: String,
    /// Used to order events within a case when the header has it; ignored otherwise.
    pub timestamp_column: Option<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            case_column: "case_id".into(),
            activity_column: "activity".into(),
            timestamp_column: Some("timestamp".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, PartialOrd)]
enum TimeKey {
    Number(f64),
    Text(String),
}

impl TimeKey {
    fn parse(s: &str) -> Self {
        match s.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => TimeKey::Number(v),
            _ => TimeKey::Text(s.trim().to_string()),
        }
    }
}

/// Parse a comma-delimited event log. Cases keep first-appearance order;
/// events keep row order unless a timestamp column is present, in which case
/// they are stably sorted by it (numeric when every value parses, else textual).
pub fn parse_csv(bytes: &[u8], options: &CsvOptions) -> Result<ParsedLog, LogError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::Fields)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(LogError::Empty);
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LogError::MissingColumn {
                line: 1,
                column: name.to_string(),
            })
    };
    let case_col = column(&options.case_column)?;
    let act_col = column(&options.activity_column)?;
    let ts_col = options
        .timestamp_column
        .as_deref()
        .and_then(|name| headers.iter().position(|h| h == name));

    let mut order: Vec<String> = Vec::new();
    let mut events: HashMap<String, Vec<(Option<String>, String)>> = HashMap::new();
    let mut skipped_events = 0;
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| csv_error(e, line))?;
        rows += 1;
        let case = record.get(case_col).unwrap_or_default().to_string();
        let activity = record.get(act_col).unwrap_or_default().to_string();
        if case.is_empty() {
            return Err(LogError::Parse {
                line,
                message: format!("empty `{}` value", options.case_column),
            });
        }
        let entry = events.entry(case.clone()).or_insert_with(|| {
            order.push(case.clone());
            Vec::new()
        });
        if activity.is_empty() {
            skipped_events += 1;
            continue;
        }
        let ts = ts_col.and_then(|c| record.get(c)).map(str::to_string);
        entry.push((ts, activity));
    }
    if rows == 0 {
        return Err(LogError::Empty);
    }

    let mut log = ParsedLog {
        skipped_events,
        ..ParsedLog::default()
    };
    for case in order {
        let mut evs = events.remove(&case).unwrap_or_default();
        if ts_col.is_some() {
            let mut keys: Vec<TimeKey> = evs
                .iter()
                .map(|(ts, _)| TimeKey::parse(ts.as_deref().unwrap_or("")))
                .collect();
            if !keys.iter().all(|k| matches!(k, TimeKey::Number(_))) {
                keys = evs
                    .iter()
                    .map(|(ts, _)| TimeKey::Text(ts.clone().unwrap_or_default()))
                    .collect();
            }
            let mut idx: Vec<usize> = (0..evs.len()).collect();
            idx.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap_or(std::cmp::Ordering::Equal));
            evs = idx.into_iter().map(|i| evs[i].clone()).collect();
        }
        if evs.is_empty() {
            log.dropped_traces += 1;
            continue;
        }
        log.traces.push(Trace {
            case_id: case,
            activities: evs.into_iter().map(|(_, a)| a).collect(),
        });
    }
    if log.traces.is_empty() {
        return Err(LogError::Empty);
    }
    Ok(log)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> LogError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    LogError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Write traces as `case_id,activity` rows. Empty traces produce no rows.
pub fn write_csv<W: Write>(traces: &[Trace], writer: W) -> Result<(), LogError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| LogError::Io(std::io::Error::other(e));
    w.write_record(["case_id", "activity"]).map_err(io)?;
    for t in traces {
        for a in &t.activities {
            w.write_record([t.case_id.as_str(), a.as_str()]).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}
