use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

const CSV_HEADER: [&str; 5] = ["video_id", "tier", "value", "start_frame", "end_frame"];

/// One tier value over an inclusive frame interval of one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSpan {
    pub video_id: String,
    pub tier: String,
    pub value: String,
    pub start_frame: u64,
    pub end_frame: u64,
}

impl AnnotationSpan {
    /// Number of frames covered (intervals are inclusive on both ends).
    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn validated(mut self, record: usize) -> Result<Self, CorpusError> {
        self.video_id = self.video_id.trim().to_string();
        self.tier = self.tier.trim().to_string();
        self.value = self.value.trim().to_string();
        for (name, field) in [
            ("video_id", &self.video_id),
            ("tier", &self.tier),
            ("value", &self.value),
        ] {
            if field.is_empty() {
                return Err(CorpusError::Malformed {
                    record,
                    reason: format!("empty {name}"),
                });
            }
        }
        if self.end_frame < self.start_frame {
            return Err(CorpusError::InvertedSpan { record });
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanFormat {
    SpanCsv,
    SpanJsonl,
}

impl SpanFormat {
    /// Guess the format from a file extension (`.csv` / `.jsonl`).
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(SpanFormat::SpanCsv),
            "jsonl" | "ndjson" => Some(SpanFormat::SpanJsonl),
            _ => None,
        }
    }
}

impl FromStr for SpanFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "span_csv" => Ok(SpanFormat::SpanCsv),
            "span_jsonl" => Ok(SpanFormat::SpanJsonl),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// Parse an interchange file into spans, in file order.
///
/// Record numbers in errors are 1-based: data rows for `span_csv` (the
/// header is not counted), physical lines for `span_jsonl`.
pub fn parse_annotations<R: Read>(input: R, format: SpanFormat) -> Result<Vec<AnnotationSpan>, CorpusError> {
    match format {
        SpanFormat::SpanCsv => parse_csv(input),
        SpanFormat::SpanJsonl => parse_jsonl(input),
    }
}

fn parse_csv<R: Read>(input: R) -> Result<Vec<AnnotationSpan>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h?,
    };
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    if header != CSV_HEADER {
        return Err(CorpusError::Malformed {
            record: 0,
            reason: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }

    let mut spans = Vec::new();
    for (i, row) in records.enumerate() {
        let record = i + 1;
        let row = row.map_err(|e| CorpusError::Malformed {
            record,
            reason: e.to_string(),
        })?;
        if row.len() != 5 {
            return Err(CorpusError::Malformed {
                record,
                reason: format!("expected 5 fields, found {}", row.len()),
            });
        }
        let frame = |idx: usize, name: &str| -> Result<u64, CorpusError> {
            row[idx].trim().parse().map_err(|_| CorpusError::Malformed {
                record,
                reason: format!("{name} `{}` is not a non-negative integer", &row[idx]),
            })
        };
        let span = AnnotationSpan {
            video_id: row[0].to_string(),
            tier: row[1].to_string(),
            value: row[2].to_string(),
            start_frame: frame(3, "start_frame")?,
            end_frame: frame(4, "end_frame")?,
        };
        spans.push(span.validated(record)?);
    }
    Ok(spans)
}

fn parse_jsonl<R: Read>(input: R) -> Result<Vec<AnnotationSpan>, CorpusError> {
    let mut spans = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let record = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let span: AnnotationSpan = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            record,
            reason: e.to_string(),
        })?;
        spans.push(span.validated(record)?);
    }
    Ok(spans)
}

/// Write spans in the given interchange format. Parsing the output yields the
/// same spans, so `write_spans(parse(x))` is the canonical form of `x`.
pub fn write_spans<W: Write>(spans: &[AnnotationSpan], format: SpanFormat, mut out: W) -> Result<(), CorpusError> {
    match format {
        SpanFormat::SpanCsv => {
            let mut writer = csv::Writer::from_writer(out);
            writer.write_record(CSV_HEADER)?;
            for s in spans {
                writer.write_record([
                    s.video_id.as_str(),
                    s.tier.as_str(),
                    s.value.as_str(),
                    &s.start_frame.to_string(),
                    &s.end_frame.to_string(),
                ])?;
            }
            writer.flush()?;
        }
        SpanFormat::SpanJsonl => {
            for s in spans {
                let line = serde_json::to_string(s).expect("span serializes");
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}
