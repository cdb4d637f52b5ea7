//! System-call trace ingestion and preprocessing.
//!
//! Raw strace logs become [`SyscallEvent`] streams, event names are mapped
//! onto a compact [`Alphabet`], and the resulting [`BootSequence`] is
//! preprocessed (run-collapse, then truncation) before any alignment.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reserved symbol index for syscall names missing from the alphabet.
pub const UNKNOWN_SYMBOL: u16 = 0;

/// Display name of the reserved unknown symbol.
pub const UNKNOWN_NAME: &str = "UNKNOWN";

/// Ground-truth label carried by a boot sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Legitimate,
    Malicious,
    Unknown,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Legitimate => write!(f, "legitimate"),
            Label::Malicious => write!(f, "malicious"),
            Label::Unknown => write!(f, "unknown"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legitimate" => Ok(Label::Legitimate),
            "malicious" => Ok(Label::Malicious),
            "unknown" => Ok(Label::Unknown),
            other => Err(Error::Config(format!("unknown label: {other}"))),
        }
    }
}

/// One completed system call observed in a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyscallEvent {
    pub name: String,
    pub pid: Option<u32>,
    /// 0-based position in capture order.
    pub ordinal: usize,
}

/// Counters accumulated while parsing one trace stream.
///
/// `events + skipped_lines + blank_lines` always equals the number of
/// input lines; an `<unfinished ...>` / `<... resumed>` pair counts as one
/// event plus one skip.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseDiagnostics {
    pub events: usize,
    pub skipped_lines: usize,
    pub blank_lines: usize,
    pub malformed_lines: usize,
}

/// Parse an strace-format log into syscall events.
///
/// In lenient mode (`strict = false`) malformed lines are counted and
/// skipped; in strict mode the first malformed line aborts the parse.
pub fn parse_strace<R: BufRead>(reader: R, strict: bool) -> Result<(Vec<SyscallEvent>, ParseDiagnostics)> {
    let mut events = Vec::new();
    let mut diag = ParseDiagnostics::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            diag.blank_lines += 1;
            continue;
        }
        match classify_line(trimmed) {
            LineKind::Syscall { name, pid } => {
                events.push(SyscallEvent {
                    name,
                    pid,
                    ordinal: events.len(),
                });
                diag.events += 1;
            }
            LineKind::Skip => diag.skipped_lines += 1,
            LineKind::Malformed => {
                if strict {
                    return Err(Error::MalformedLine {
                        line_no: idx + 1,
                        text: trimmed.to_string(),
                    });
                }
                diag.malformed_lines += 1;
                diag.skipped_lines += 1;
            }
        }
    }
    Ok((events, diag))
}

enum LineKind {
    Syscall { name: String, pid: Option<u32> },
    Skip,
    Malformed,
}

fn classify_line(line: &str) -> LineKind {
    let (pid, rest) = strip_pid(line);
    let rest = rest.trim_start();

    // Signal banners and process exit banners carry no syscall.
    if (rest.starts_with("---") && rest.ends_with("---"))
        || (rest.starts_with("+++") && rest.ends_with("+++"))
    {
        return LineKind::Skip;
    }
    // The matching start of a `<... name resumed>` line was already
    // counted when it appeared as `<unfinished ...>`.
    if rest.starts_with("<...") && rest.contains("resumed") {
        return LineKind::Skip;
    }

    let name_len = rest
        .char_indices()
        .take_while(|(i, c)| {
            c.is_ascii_alphanumeric() || *c == '_' || (*i == 0 && *c == '_')
        })
        .count();
    if name_len == 0 {
        return LineKind::Malformed;
    }
    let (name, tail) = rest.split_at(name_len);
    if !tail.starts_with('(') || name.starts_with(|c: char| c.is_ascii_digit()) {
        return LineKind::Malformed;
    }
    LineKind::Syscall {
        name: name.to_string(),
        pid,
    }
}

/// Strip an optional leading PID, either `1234  call(...)` or
/// `[pid 1234] call(...)`.
fn strip_pid(line: &str) -> (Option<u32>, &str) {
    if let Some(rest) = line.strip_prefix("[pid") {
        let rest = rest.trim_start();
        if let Some(end) = rest.find(']') {
            if let Ok(pid) = rest[..end].trim().parse() {
                return (Some(pid), &rest[end + 1..]);
            }
        }
        return (None, line);
    }
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let tail = &line[digits..];
        if tail.starts_with(char::is_whitespace) {
            if let Ok(pid) = line[..digits].parse() {
                return (Some(pid), tail);
            }
        }
    }
    (None, line)
}

/// Bijection between syscall names and dense symbol indices.
///
/// Index 0 is always the reserved [`UNKNOWN_NAME`] symbol; stored alphabet
/// files carry only the ordered name list, indices are derived on load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    names: Vec<String>,
    index: HashMap<String, u16>,
    fingerprint: u64,
}

impl Alphabet {
    /// Build an alphabet from a deduplicated, order-significant name list.
    pub fn build<S: AsRef<str>>(names: &[S]) -> Result<Alphabet> {
        let mut index = HashMap::with_capacity(names.len() + 1);
        let mut owned = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let name = name.as_ref();
            if name.is_empty() || name == UNKNOWN_NAME {
                return Err(Error::DuplicateName(name.to_string()));
            }
            if index.insert(name.to_string(), (i + 1) as u16).is_some() {
                return Err(Error::DuplicateName(name.to_string()));
            }
            owned.push(name.to_string());
        }
        let fingerprint = fingerprint_names(&owned);
        Ok(Alphabet {
            names: owned,
            index,
            fingerprint,
        })
    }

    /// Alphabet length `l`, counting the reserved UNKNOWN symbol.
    pub fn len(&self) -> usize {
        self.names.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false // UNKNOWN is always present
    }

    /// Stable identity used to reject cross-alphabet alignments.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn index_of(&self, name: &str) -> Option<u16> {
        if name == UNKNOWN_NAME {
            return Some(UNKNOWN_SYMBOL);
        }
        self.index.get(name).copied()
    }

    pub fn name_of(&self, symbol: u16) -> Option<&str> {
        if symbol == UNKNOWN_SYMBOL {
            return Some(UNKNOWN_NAME);
        }
        self.names.get(symbol as usize - 1).map(|s| s.as_str())
    }

    /// Known names in index order, UNKNOWN excluded.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Load from a UTF-8 file with one syscall name per line.
    pub fn read_from(path: &Path) -> Result<Alphabet> {
        let text = std::fs::read_to_string(path)?;
        let names: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        Alphabet::build(&names)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for name in &self.names {
            out.push_str(name);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn fingerprint_names(names: &[String]) -> u64 {
    // FNV-1a over the ordered name list; stable across runs and platforms.
    let mut h: u64 = 0xcbf29ce484222325;
    for name in names {
        for b in name.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// An encoded boot-time syscall sequence with its capture metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootSequence {
    pub app_id: String,
    pub device_id: String,
    pub label: Label,
    pub symbols: Vec<u16>,
    pub preprocessed: bool,
    pub alphabet_fingerprint: u64,
}

impl BootSequence {
    /// Map symbols back to syscall names through the alphabet.
    pub fn names<'a>(&self, alphabet: &'a Alphabet) -> Vec<&'a str> {
        self.symbols
            .iter()
            .map(|&s| alphabet.name_of(s).unwrap_or(UNKNOWN_NAME))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Encode parsed events over an alphabet; unknown names map to the
/// reserved UNKNOWN symbol. Returns the raw sequence plus the count of
/// unknown names seen.
pub fn encode(
    events: &[SyscallEvent],
    alphabet: &Alphabet,
    app_id: &str,
    device_id: &str,
    label: Label,
) -> (BootSequence, usize) {
    let names: Vec<&str> = events.iter().map(|e| e.name.as_str()).collect();
    encode_names(&names, alphabet, app_id, device_id, label)
}

/// As [`encode`], but straight from syscall names.
pub fn encode_names<S: AsRef<str>>(
    names: &[S],
    alphabet: &Alphabet,
    app_id: &str,
    device_id: &str,
    label: Label,
) -> (BootSequence, usize) {
    let mut unknown = 0;
    let symbols = names
        .iter()
        .map(|n| match alphabet.index_of(n.as_ref()) {
            Some(idx) => idx,
            None => {
                unknown += 1;
                UNKNOWN_SYMBOL
            }
        })
        .collect();
    (
        BootSequence {
            app_id: app_id.to_string(),
            device_id: device_id.to_string(),
            label,
            symbols,
            preprocessed: false,
            alphabet_fingerprint: alphabet.fingerprint(),
        },
        unknown,
    )
}

/// Replace maximal runs of equal symbols by a single symbol.
pub fn collapse_repeats(sequence: &[u16]) -> Vec<u16> {
    let mut out = Vec::with_capacity(sequence.len());
    for &s in sequence {
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}

/// Keep the first `min(len, max_len)` symbols.
pub fn truncate(sequence: &[u16], max_len: usize) -> Result<Vec<u16>> {
    if max_len == 0 {
        return Err(Error::ZeroMaxLen);
    }
    Ok(sequence[..sequence.len().min(max_len)].to_vec())
}

/// Default maximum preprocessed length, the largest length the detector
/// is exercised at.
pub const DEFAULT_MAX_LEN: usize = 2500;

/// Full preprocessing: collapse runs, then truncate, in that order, so the
/// length budget counts distinct actions.
pub fn preprocess(sequence: &BootSequence, max_len: usize) -> Result<BootSequence> {
    let symbols = truncate(&collapse_repeats(&sequence.symbols), max_len)?;
    Ok(BootSequence {
        symbols,
        preprocessed: true,
        ..sequence.clone()
    })
}

/// Write a sequence file: `#app=<id> device=<id> label=<label>` header,
/// then one syscall name per line.
pub fn write_sequence_file<W: Write>(
    mut w: W,
    app_id: &str,
    device_id: &str,
    label: Label,
    names: &[&str],
) -> Result<()> {
    writeln!(w, "#app={app_id} device={device_id} label={label}")?;
    for name in names {
        writeln!(w, "{name}")?;
    }
    Ok(())
}

/// Contents of a sequence file before encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceFile {
    pub app_id: String,
    pub device_id: String,
    pub label: Label,
    pub names: Vec<String>,
}

impl SequenceFile {
    pub fn read_from(path: &Path) -> Result<SequenceFile> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|reason| Error::MalformedSequenceFile {
            path: path.display().to_string(),
            reason,
        })
    }

    pub fn parse(text: &str) -> std::result::Result<SequenceFile, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty file")?;
        let header = header.strip_prefix('#').ok_or("missing # header")?;
        let mut app_id = None;
        let mut device_id = None;
        let mut label = None;
        for field in header.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or("malformed header field")?;
            match key {
                "app" => app_id = Some(value.to_string()),
                "device" => device_id = Some(value.to_string()),
                "label" => label = Some(value.parse::<Label>().map_err(|e| e.to_string())?),
                other => return Err(format!("unknown header key {other}")),
            }
        }
        let names: Vec<String> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().to_string())
            .collect();
        Ok(SequenceFile {
            app_id: app_id.ok_or("header missing app")?,
            device_id: device_id.ok_or("header missing device")?,
            label: label.ok_or("header missing label")?,
            names,
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let names: Vec<&str> = self.names.iter().map(|s| s.as_str()).collect();
        write_sequence_file(
            std::io::BufWriter::new(file),
            &self.app_id,
            &self.device_id,
            self.label,
            &names,
        )
    }

    /// Encode over an alphabet; returns the raw sequence and the
    /// unknown-name count.
    pub fn encode(&self, alphabet: &Alphabet) -> (BootSequence, usize) {
        encode_names(&self.names, alphabet, &self.app_id, &self.device_id, self.label)
    }
}
