//! Event-file ingestion: parse the raw text format, reinsert the missing
//! Pockels cell openings, and compile everything into a compact binary file
//! for fast repeated analysis.
//!
//! Text format, one event per line: `timetag setting kind`, where the
//! timetag is in units of 156.25 ps, setting is 11/12/21/22, and kind is 15
//! (Pockels cell opening), 1 (detection side 1) or 2 (detection side 2).
//!
//! Binary format (little-endian): magic `BKC1`, u32 detection event count,
//! 4×u32 total openings per setting, then one 36-byte record per detection:
//! f64 raw_time (ps), f64 pockels_time (ps), u8 setting, u8 channel, 2 bytes
//! padding, 4×u32 cumulative opening counts. Openings are counted, not
//! stored; compilation is lossless for detections.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::{Setting, Side};

/// Picoseconds per raw tag unit (exactly 625/4).
pub const TICK_PS: f64 = 156.25;

/// Default Pockels cell opening period: 40 μs in tag units.
pub const DEFAULT_PERIOD_TICKS: u64 = 256_000;

const MAGIC: [u8; 4] = *b"BKC1";
const HEADER_LEN: usize = 24;
const RECORD_LEN: usize = 36;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed event line: {content:?}")]
    MalformedLine { line: usize, content: String },
    #[error("line {line}: unknown setting code {code}")]
    UnknownSetting { line: usize, code: u32 },
    #[error("line {line}: unknown event kind {kind}")]
    UnknownKind { line: usize, kind: u32 },
    #[error("event {index} is out of time order")]
    UnsortedInput { index: usize },
    #[error("bad magic: not a compiled event file")]
    BadMagic,
    #[error("file truncated: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("count mismatch: header declares {declared} events, body holds {found}")]
    CountMismatch { declared: u32, found: usize },
    #[error("record {index} is corrupt ({reason})")]
    CorruptRecord { index: usize, reason: &'static str },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Opening,
    Detection(Side),
}

/// One line of the raw text format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawEvent {
    pub timetag: u64,
    pub setting: Setting,
    pub kind: EventKind,
}

/// Parse a raw event stream; order is preserved, empty lines are skipped.
pub fn parse_events<R: BufRead>(reader: R) -> Result<Vec<RawEvent>, IngestError> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(parse_line(&line, line_no)?);
    }
    Ok(events)
}

fn parse_line(line: &str, line_no: usize) -> Result<RawEvent, IngestError> {
    let malformed = || IngestError::MalformedLine {
        line: line_no,
        content: line.to_string(),
    };
    let mut fields = line.split_whitespace();
    let timetag: u64 = fields
        .next()
        .ok_or_else(malformed)?
        .parse()
        .map_err(|_| malformed())?;
    let code: u32 = fields
        .next()
        .ok_or_else(malformed)?
        .parse()
        .map_err(|_| malformed())?;
    let kind_code: u32 = fields
        .next()
        .ok_or_else(malformed)?
        .parse()
        .map_err(|_| malformed())?;
    if fields.next().is_some() {
        return Err(malformed());
    }

    let setting = Setting::from_code(code).ok_or(IngestError::UnknownSetting {
        line: line_no,
        code,
    })?;
    let kind = match kind_code {
        15 => EventKind::Opening,
        1 => EventKind::Detection(Side::One),
        2 => EventKind::Detection(Side::Two),
        other => {
            return Err(IngestError::UnknownKind {
                line: line_no,
                kind: other,
            })
        }
    };

    Ok(RawEvent {
        timetag,
        setting,
        kind,
    })
}

/// Reinsert the openings missing from the distributed data: every recorded
/// opening gets a synthetic twin at `timetag + period/2` with the same
/// setting, and the whole stream is re-sorted into time order.
pub fn insert_missing_openings(events: Vec<RawEvent>, period_ticks: u64) -> Vec<RawEvent> {
    let half = period_ticks / 2;
    let mut out = Vec::with_capacity(events.len() * 3 / 2);
    out.extend_from_slice(&events);
    out.extend(
        events
            .iter()
            .filter(|e| e.kind == EventKind::Opening)
            .map(|e| RawEvent {
                timetag: e.timetag + half,
                ..*e
            }),
    );
    out.sort_by_key(|e| e.timetag);
    out
}

/// One compiled detection event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompiledEvent {
    /// Detection time in picoseconds.
    pub raw_time: f64,
    /// Time of the Pockels cell opening immediately preceding `raw_time`;
    /// negative infinity when no opening precedes the detection.
    pub pockels_time: f64,
    pub setting: Setting,
    pub channel: Side,
    /// Openings per setting, up to and including this event.
    pub trials: [u32; 4],
}

/// The compiled dataset: detections in ascending time order plus the total
/// opening counts per setting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompiledFile {
    pub total_trials: [u32; 4],
    pub events: Vec<CompiledEvent>,
}

impl CompiledFile {
    pub fn num_detection_events(&self) -> usize {
        self.events.len()
    }

    /// Detections with no preceding opening.
    pub fn orphan_detections(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.pockels_time == f64::NEG_INFINITY)
            .count()
    }
}

/// Convert a raw tag to picoseconds (one correctly-rounded multiply).
#[inline]
pub fn tag_to_ps(timetag: u64) -> f64 {
    timetag as f64 * TICK_PS
}

/// Compile a time-ordered raw stream: openings are counted per setting,
/// detections become records carrying the preceding opening time and the
/// cumulative opening counts.
pub fn compile(events: &[RawEvent]) -> Result<CompiledFile, IngestError> {
    let mut totals = [0u32; 4];
    let mut last_opening = f64::NEG_INFINITY;
    let mut out = Vec::new();
    let mut prev_tag = 0u64;

    for (index, ev) in events.iter().enumerate() {
        if ev.timetag < prev_tag {
            return Err(IngestError::UnsortedInput { index });
        }
        prev_tag = ev.timetag;

        match ev.kind {
            EventKind::Opening => {
                totals[ev.setting.index()] += 1;
                last_opening = tag_to_ps(ev.timetag);
            }
            EventKind::Detection(side) => {
                out.push(CompiledEvent {
                    raw_time: tag_to_ps(ev.timetag),
                    pockels_time: last_opening,
                    setting: ev.setting,
                    channel: side,
                    trials: totals,
                });
            }
        }
    }

    Ok(CompiledFile {
        total_trials: totals,
        events: out,
    })
}

/// Write the binary representation.
pub fn store<W: Write>(file: &CompiledFile, writer: &mut W) -> io::Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + file.events.len() * RECORD_LEN);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&(file.events.len() as u32).to_le_bytes());
    for t in file.total_trials {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    for ev in &file.events {
        buf.extend_from_slice(&ev.raw_time.to_le_bytes());
        buf.extend_from_slice(&ev.pockels_time.to_le_bytes());
        buf.push(ev.setting.index() as u8);
        buf.push(ev.channel.channel());
        buf.extend_from_slice(&[0u8; 2]);
        for t in ev.trials {
            buf.extend_from_slice(&t.to_le_bytes());
        }
    }
    writer.write_all(&buf)
}

/// Read the binary representation back; rejects bad magic, truncation, and
/// header/body count mismatches without returning a partial result.
pub fn load<R: Read>(reader: &mut R) -> Result<CompiledFile, IngestError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;

    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(IngestError::BadMagic);
        }
        return Err(IngestError::Truncated {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(IngestError::BadMagic);
    }

    let declared = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let mut total_trials = [0u32; 4];
    for (i, t) in total_trials.iter_mut().enumerate() {
        *t = u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    }

    let body = &bytes[HEADER_LEN..];
    if body.len() % RECORD_LEN != 0 {
        return Err(IngestError::Truncated {
            needed: HEADER_LEN + (body.len() / RECORD_LEN + 1) * RECORD_LEN,
            got: bytes.len(),
        });
    }
    let found = body.len() / RECORD_LEN;
    if found != declared as usize {
        return Err(IngestError::CountMismatch { declared, found });
    }

    let mut events = Vec::with_capacity(found);
    for index in 0..found {
        let rec = &body[index * RECORD_LEN..(index + 1) * RECORD_LEN];
        let raw_time = f64::from_le_bytes(rec[0..8].try_into().unwrap());
        let pockels_time = f64::from_le_bytes(rec[8..16].try_into().unwrap());
        let setting = Setting::from_index(rec[16] as usize).ok_or(IngestError::CorruptRecord {
            index,
            reason: "setting out of range",
        })?;
        let channel = Side::from_channel(rec[17]).ok_or(IngestError::CorruptRecord {
            index,
            reason: "channel out of range",
        })?;
        let mut trials = [0u32; 4];
        for (i, t) in trials.iter_mut().enumerate() {
            *t = u32::from_le_bytes(rec[20 + 4 * i..24 + 4 * i].try_into().unwrap());
        }
        events.push(CompiledEvent {
            raw_time,
            pockels_time,
            setting,
            channel,
            trials,
        });
    }

    Ok(CompiledFile {
        total_trials,
        events,
    })
}

pub fn store_path<P: AsRef<Path>>(file: &CompiledFile, path: P) -> io::Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    store(file, &mut writer)?;
    writer.flush()
}

pub fn load_path<P: AsRef<Path>>(path: P) -> Result<CompiledFile, IngestError> {
    let mut reader = BufReader::new(File::open(path)?);
    load(&mut reader)
}
