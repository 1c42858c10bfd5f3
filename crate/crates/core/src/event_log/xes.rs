use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{LogError, ParsedLog, Trace};

const NAME_KEY: &[u8] = b"concept:name";

#[derive(Default)]
struct OpenTrace {
    case_id: Option<String>,
    activities: Vec<String>,
}

/// Read the `<trace>`/`<event>`/`<string key="concept:name">` subset of XES.
/// Events without a name are skipped and traces left empty are dropped; both
/// are counted in the result.
pub fn parse_xes(bytes: &[u8]) -> Result<ParsedLog, LogError> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut log = ParsedLog::default();
    let mut trace: Option<OpenTrace> = None;
    let mut event: Option<Option<String>> = None;
    let mut trace_index = 0usize;

    loop {
        let ev = reader.read_event_into(&mut buf).map_err(|e| LogError::Xml {
            position: reader.error_position(),
            message: e.to_string(),
        })?;
        match ev {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let name = e.local_name().as_ref().to_vec();
                let self_closing = matches!(ev, Event::Empty(_));
                let parent = stack.last().map(Vec::as_slice);
                match name.as_slice() {
                    b"trace" => trace = Some(OpenTrace::default()),
                    b"event" if trace.is_some() => event = Some(None),
                    b"string" => {
                        if let Some(value) = concept_name(e, &reader)? {
                            match (parent, event.as_mut(), trace.as_mut()) {
                                (Some(b"event"), Some(slot), _) => *slot = Some(value),
                                (Some(b"trace"), _, Some(t)) => t.case_id = Some(value),
                                _ => {}
                            }
                        }
                    }
                    _ => {}
                }
                if self_closing {
                    close(&name, &mut trace, &mut event, &mut log, &mut trace_index);
                } else {
                    stack.push(name);
                }
            }
            Event::End(e) => {
                let name = e.local_name().as_ref().to_vec();
                stack.pop();
                close(&name, &mut trace, &mut event, &mut log, &mut trace_index);
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(LogError::Xml {
            position: reader.buffer_position(),
            message: format!(
                "unexpected end of document inside <{}>",
                String::from_utf8_lossy(stack.last().unwrap())
            ),
        });
    }
    if log.traces.is_empty() && log.dropped_traces == 0 {
        return Err(LogError::Empty);
    }
    Ok(log)
}

fn close(
    name: &[u8],
    trace: &mut Option<OpenTrace>,
    event: &mut Option<Option<String>>,
    log: &mut ParsedLog,
    trace_index: &mut usize,
) {
    match name {
        b"event" => {
            if let (Some(ev), Some(t)) = (event.take(), trace.as_mut()) {
                match ev {
                    Some(activity) => t.activities.push(activity),
                    None => log.skipped_events += 1,
                }
            }
        }
        b"trace" => {
            if let Some(t) = trace.take() {
                *trace_index += 1;
                if t.activities.is_empty() {
                    log.dropped_traces += 1;
                } else {
                    log.traces.push(Trace {
                        case_id: t.case_id.unwrap_or_else(|| format!("trace_{}", *trace_index)),
                        activities: t.activities,
                    });
                }
            }
        }
        _ => {}
    }
}

fn concept_name(e: &BytesStart<'_>, reader: &Reader<&[u8]>) -> Result<Option<String>, LogError> {
    let mut key = None;
    let mut value = None;
    for attr in e.attributes() {
        let attr = attr.map_err(|err| LogError::Xml {
            position: reader.buffer_position(),
            message: err.to_string(),
        })?;
        let text = attr.unescape_value().map_err(|err| LogError::Xml {
            position: reader.buffer_position(),
            message: err.to_string(),
        })?;
        match attr.key.as_ref() {
            b"key" => key = Some(text.into_owned()),
            b"value" => value = Some(text.into_owned()),
            _ => {}
        }
    }
    Ok(match key {
        Some(k) if k.as_bytes() == NAME_KEY => value,
        _ => None,
    })
}
