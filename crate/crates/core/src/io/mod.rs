//! File input, result serialization, and schema annotation support.

pub mod schema;

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use bigdecimal::BigDecimal;

use crate::error::{Error, ErrorCode, Result};
use crate::jdm::Item;

/// What to do with a line that fails to parse as JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnBadLine {
    #[default]
    Fail,
    Skip,
}

/// Counters observable from the outside; `files_opened` makes the laziness
/// of conditional branches testable, `lines_skipped` backs the
/// skip-and-count policy for malformed lines.
#[derive(Debug, Default)]
pub struct IoStats {
    pub files_opened: AtomicU64,
    pub lines_skipped: AtomicU64,
}

impl IoStats {
    pub fn reset(&self) {
        self.files_opened.store(0, Ordering::Relaxed);
        self.lines_skipped.store(0, Ordering::Relaxed);
    }

    pub fn files_opened(&self) -> u64 {
        self.files_opened.load(Ordering::Relaxed)
    }

    pub fn lines_skipped(&self) -> u64 {
        self.lines_skipped.load(Ordering::Relaxed)
    }
}

// ---------------------------------------------------------------------------
// Globbing
// ---------------------------------------------------------------------------

/// Expand a glob pattern (`*` and `?` only, per path component) against the
/// local filesystem. Matches are returned in lexicographic path order;
/// a pattern matching nothing yields an empty list.
pub fn glob_files(pattern: &str) -> Result<Vec<PathBuf>> {
    let (root, components): (PathBuf, Vec<&str>) = if let Some(rest) = pattern.strip_prefix('/') {
        (PathBuf::from("/"), rest.split('/').filter(|c| !c.is_empty()).collect())
    } else {
        (PathBuf::from("."), pattern.split('/').filter(|c| !c.is_empty()).collect())
    };
    if components.is_empty() {
        return Ok(Vec::new());
    }
    let mut matches = Vec::new();
    expand(&root, &components, &mut matches)?;
    matches.sort();
    Ok(matches)
}

fn expand(dir: &Path, components: &[&str], out: &mut Vec<PathBuf>) -> Result<()> {
    let (comp, rest) = components.split_first().expect("non-empty components");
    let is_last = rest.is_empty();
    if !comp.contains(['*', '?']) {
        let path = dir.join(comp);
        if is_last {
            if path.is_file() {
                out.push(path);
            }
        } else if path.is_dir() {
            expand(&path, rest, out)?;
        }
        return Ok(());
    }
    let entries = match std::fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(_) => return Ok(()), // unreadable directory matches nothing
    };
    for entry in entries {
        let entry = entry.map_err(io_error)?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if !wildcard_match(comp, name) {
            continue;
        }
        let path = entry.path();
        if is_last {
            if path.is_file() {
                out.push(path);
            }
        } else if path.is_dir() {
            expand(&path, rest, out)?;
        }
    }
    Ok(())
}

/// `*` matches any run of characters (within one component), `?` exactly one.
fn wildcard_match(pattern: &str, name: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let n: Vec<char> = name.chars().collect();
    // Classic two-pointer match with backtracking over the last star.
    let (mut pi, mut ni) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ni < n.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == n[ni]) {
            pi += 1;
            ni += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ni));
            pi += 1;
        } else if let Some((sp, sn)) = star {
            pi = sp + 1;
            ni = sn + 1;
            star = Some((sp, sn + 1));
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}

pub(crate) fn io_error(err: std::io::Error) -> Error {
    Error::new(ErrorCode::Io, err.to_string())
}

// ---------------------------------------------------------------------------
// Byte-range splits over line-oriented files
// ---------------------------------------------------------------------------

/// One byte range of one file. A split owns a line iff the line's first
/// byte falls inside `[start, end)`, which partitions every file's lines
/// without duplication or loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileSplit {
    pub path: PathBuf,
    pub start: u64,
    pub end: u64,
}

/// Cut the given files into roughly `partitions` byte-range splits,
/// in file order then offset order.
pub fn compute_splits(paths: &[PathBuf], partitions: usize) -> Result<Vec<FileSplit>> {
    let mut sizes = Vec::with_capacity(paths.len());
    let mut total: u64 = 0;
    for path in paths {
        let len = std::fs::metadata(path).map_err(io_error)?.len();
        sizes.push(len);
        total += len;
    }
    let partitions = partitions.max(1) as u64;
    let target = (total / partitions).max(1);
    let mut splits = Vec::new();
    for (path, size) in paths.iter().zip(sizes) {
        if size == 0 {
            continue;
        }
        let chunks = (size + target - 1) / target;
        for c in 0..chunks {
            let start = c * target;
            let end = if c + 1 == chunks { size } else { (c + 1) * target };
            splits.push(FileSplit { path: path.clone(), start, end });
        }
    }
    Ok(splits)
}

/// Iterator over the lines owned by one split, yielding
/// `(line_start_offset, line)`. Line numbers are recovered on demand via
/// [`line_number_at`], so the hot path never scans a file prefix.
pub struct SplitLines {
    reader: BufReader<File>,
    pos: u64,
    end: u64,
    buf: Vec<u8>,
    path: PathBuf,
}

impl SplitLines {
    pub fn open(split: &FileSplit, stats: Option<&IoStats>) -> Result<SplitLines> {
        let mut file = File::open(&split.path).map_err(|e| {
            Error::new(ErrorCode::Io, format!("{}: {}", split.path.display(), e))
        })?;
        if let Some(stats) = stats {
            stats.files_opened.fetch_add(1, Ordering::Relaxed);
        }
        let mut pos = 0u64;
        let mut reader;
        if split.start == 0 {
            reader = BufReader::with_capacity(64 * 1024, file);
        } else {
            // Start one byte early: consuming through the first newline at
            // or after start-1 leaves the reader exactly at the first line
            // whose first byte is ≥ start. That partial line (if any)
            // belongs to an earlier split.
            file.seek(SeekFrom::Start(split.start - 1)).map_err(io_error)?;
            reader = BufReader::with_capacity(64 * 1024, file);
            let mut skip = Vec::new();
            let n = reader.read_until(b'\n', &mut skip).map_err(io_error)? as u64;
            pos = split.start - 1 + n;
        }
        Ok(SplitLines {
            reader,
            pos: pos.max(split.start),
            end: split.end,
            buf: Vec::new(),
            path: split.path.clone(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// 1-based line number of the line starting at byte `offset`. Used for
/// error reporting only.
pub fn line_number_at(path: &Path, offset: u64) -> u64 {
    let Ok(file) = File::open(path) else { return 0 };
    let mut reader = BufReader::with_capacity(64 * 1024, file.take(offset));
    let mut count = 1u64;
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        count += buf[..n].iter().filter(|&&b| b == b'\n').count() as u64;
    }
    count
}

impl Iterator for SplitLines {
    type Item = Result<(u64, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.end {
            return None;
        }
        let line_start = self.pos;
        self.buf.clear();
        let n = match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(n) => n,
            Err(e) => return Some(Err(io_error(e))),
        };
        if n == 0 {
            return None;
        }
        self.pos += n as u64;
        let mut bytes = std::mem::take(&mut self.buf);
        if bytes.last() == Some(&b'\n') {
            bytes.pop();
        }
        match String::from_utf8(bytes) {
            Ok(line) => Some(Ok((line_start, line))),
            Err(_) => Some(Err(Error::new(
                ErrorCode::Io,
                format!(
                    "{}:{}: invalid UTF-8",
                    self.path.display(),
                    line_number_at(&self.path, line_start)
                ),
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputStyle {
    #[default]
    JsonLines,
    Pretty,
}

/// Plain (non-exponential) form of a decimal, normalized and always
/// containing a decimal point so the token round-trips as a decimal.
pub fn decimal_to_plain_string(d: &BigDecimal) -> String {
    let normalized = if d.as_bigint_and_exponent().0 == 0.into() {
        BigDecimal::from(0)
    } else {
        d.normalized()
    };
    let (digits, scale) = normalized.into_bigint_and_exponent();
    let negative = digits < 0.into();
    let digits = digits.magnitude().to_string();
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if scale <= 0 {
        out.push_str(&digits);
        for _ in 0..(-scale) {
            out.push('0');
        }
        out.push_str(".0");
    } else {
        let scale = scale as usize;
        if digits.len() > scale {
            let (int_part, frac_part) = digits.split_at(digits.len() - scale);
            out.push_str(int_part);
            out.push('.');
            out.push_str(frac_part);
        } else {
            out.push_str("0.");
            for _ in 0..(scale - digits.len()) {
                out.push('0');
            }
            out.push_str(&digits);
        }
    }
    out
}

/// Shortest round-trip form of a double. The form always carries an
/// exponent marker: it is what keeps doubles distinguishable from decimals
/// when the output is parsed again (a plain token with a point reads back
/// as a decimal).
pub fn double_to_string(d: f64) -> String {
    if d.is_nan() {
        return "NaN".to_string();
    }
    if d == f64::INFINITY {
        return "Infinity".to_string();
    }
    if d == f64::NEG_INFINITY {
        return "-Infinity".to_string();
    }
    format!("{d:e}")
}

pub fn escape_json_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{8}' => out.push_str("\\b"),
            '\u{c}' => out.push_str("\\f"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Serialize one item as a single-line JSON document.
pub fn serialize_item(item: &Item, out: &mut String) {
    match item {
        Item::Null => out.push_str("null"),
        Item::Boolean(b) => out.push_str(if *b { "true" } else { "false" }),
        Item::Integer(i) => out.push_str(&i.to_string()),
        Item::Decimal(d) => out.push_str(&decimal_to_plain_string(d)),
        Item::Double(d) => out.push_str(&double_to_string(*d)),
        Item::String(s) => escape_json_string(s, out),
        Item::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                serialize_item(item, out);
            }
            out.push(']');
        }
        Item::Object(obj) => {
            out.push('{');
            for (i, (key, value)) in obj.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                escape_json_string(key, out);
                out.push(':');
                serialize_item(value, out);
            }
            out.push('}');
        }
    }
}

/// Serialize one item with indentation.
pub fn serialize_item_pretty(item: &Item, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    let pad_inner = "  ".repeat(indent + 1);
    match item {
        Item::Array(items) if !items.is_empty() => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(",\n");
                }
                out.push_str(&pad_inner);
                serialize_item_pretty(item, indent + 1, out);
            }
            out.push('\n');
            out.push_str(&pad);
            out.push(']');
        }
        Item::Object(obj) if !obj.is_empty() => {
            out.push_str("{\n");
            for (i, (key, value)) in obj.iter().enumerate() {
                if i > 0 {
                    out.push_str(",\n");
                }
                out.push_str(&pad_inner);
                escape_json_string(key, out);
                out.push_str(": ");
                serialize_item_pretty(value, indent + 1, out);
            }
            out.push('\n');
            out.push_str(&pad);
            out.push('}');
        }
        _ => serialize_item(item, out),
    }
}

/// Serialize a sequence, one item per line (or pretty, blank-line
/// separated).
pub fn serialize_sequence<'a>(
    items: impl Iterator<Item = &'a Item>,
    style: OutputStyle,
    out: &mut String,
) {
    for item in items {
        match style {
            OutputStyle::JsonLines => serialize_item(item, out),
            OutputStyle::Pretty => serialize_item_pretty(item, 0, out),
        }
        out.push('\n');
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use std::str::FromStr;

    #[test]
    fn wildcard_matching() {
        assert!(wildcard_match("*.json", "a.json"));
        assert!(wildcard_match("*", "anything"));
        assert!(!wildcard_match("*.json", "a.jsonl"));
        assert!(wildcard_match("part-?.json", "part-1.json"));
        assert!(!wildcard_match("part-?.json", "part-10.json"));
        assert!(wildcard_match("a*b*c", "aXbYc"));
        assert!(!wildcard_match("a*b*c", "aXbY"));
    }

    #[test]
    fn decimal_plain_forms() {
        for (input, expected) in [
            ("3.5", "3.5"),
            ("3.50", "3.5"),
            ("3", "3.0"),
            ("0.05", "0.05"),
            ("-0.05", "-0.05"),
            ("100", "100.0"),
            ("1e2", "100.0"),
            ("0", "0.0"),
            ("0.0", "0.0"),
            ("-7", "-7.0"),
        ] {
            let d = BigDecimal::from_str(input).unwrap();
            assert_eq!(decimal_to_plain_string(&d), expected, "input {input}");
        }
    }

    #[test]
    fn double_forms() {
        assert_eq!(double_to_string(100.0), "1e2");
        assert_eq!(double_to_string(1.5), "1.5e0");
        assert_eq!(double_to_string(-0.25), "-2.5e-1");
        assert_eq!(double_to_string(1e300), "1e300");
        assert_eq!(double_to_string(f64::NAN), "NaN");
        assert_eq!(double_to_string(f64::NEG_INFINITY), "-Infinity");
        // Every finite form re-parses as the same double.
        for d in [100.0, 1.5, -0.25, 1e300, 5e-324, f64::MAX, 0.1 + 0.2] {
            let s = double_to_string(d);
            assert_eq!(s.parse::<f64>().unwrap(), d, "{s}");
        }
    }

    #[test]
    fn split_lines_partition_files_exactly() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        let mut expected = Vec::new();
        for i in 0..100 {
            let line = format!("line-{i:03}-{}", "x".repeat(i % 17));
            writeln!(tmp, "{line}").unwrap();
            expected.push(line);
        }
        tmp.flush().unwrap();
        let path = tmp.path().to_path_buf();
        for parts in [1usize, 2, 3, 7, 16] {
            let splits = compute_splits(std::slice::from_ref(&path), parts).unwrap();
            let mut got = Vec::new();
            for split in &splits {
                for line in SplitLines::open(split, None).unwrap() {
                    got.push(line.unwrap().1);
                }
            }
            assert_eq!(got, expected, "partitions={parts}");
        }
    }

    #[test]
    fn line_numbers_recovered_from_offsets() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        for i in 1..=50 {
            writeln!(tmp, "row {i}").unwrap();
        }
        tmp.flush().unwrap();
        let path = tmp.path().to_path_buf();
        let splits = compute_splits(std::slice::from_ref(&path), 4).unwrap();
        let mut seen = Vec::new();
        for split in &splits {
            for line in SplitLines::open(split, None).unwrap() {
                let (offset, text) = line.unwrap();
                let no = line_number_at(&path, offset);
                assert_eq!(text, format!("row {no}"));
                seen.push(no);
            }
        }
        assert_eq!(seen, (1..=50).collect::<Vec<_>>());
    }
}
