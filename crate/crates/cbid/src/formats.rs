//! Text file formats.
//!
//! * features: CSV, one sample per row, no header;
//! * labels: one 1-based integer per line;
//! * patches: features with the 0-based owner image index as first column;
//! * triplets: CSV `anchor,hit,miss,miss_class` with a header line;
//! * model: `cbid-model v1` envelope, see [`write_model`];
//! * trace: CSV `iter,objective,max_violation,chosen_class`;
//! * code database: bit count on the first line, then `id,label,hexcode`;
//! * predictions: CSV `query_id,predicted_label,score`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! writer round-trips through its reader exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cbid_core::data::{Label, Mode, Triplet};
use cbid_core::hamming::{CodeDatabase, CodeEntry};
use cbid_core::hashfn::{BinaryCode, CodeBook, HashFunction};
use cbid_core::trainer::{TraceRow, WeightMatrix};
use cbid_core::Matrix;

use crate::error::{CliError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(CliError::parse(path, line, format!("non-finite value {field:?}")));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("not an integer: {field:?}")))
}

fn parse_rows(path: &Path, text: &str) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut rows = Vec::new();
    let mut numbers = Vec::new();
    for (n, l) in lines(text) {
        let row = l
            .split(',')
            .map(|f| parse_f64(path, n, f))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            let first: &Vec<f64> = first;
            if row.len() != first.len() {
                return Err(CliError::parse(
                    path,
                    n,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
        numbers.push(n);
    }
    Ok((rows, numbers))
}

/// Feature matrix; an empty file gives a `0 x 0` matrix.
pub fn read_features(path: &Path) -> Result<Matrix> {
    let (rows, _) = parse_rows(path, &read_text(path)?)?;
    let cols = rows.first().map_or(0, Vec::len);
    Ok(Matrix::from_rows(&rows, cols)?)
}

pub fn write_features(path: &Path, x: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in x.iter_rows() {
        push_joined(&mut out, row);
        out.push('\n');
    }
    write_text(path, &out)
}

/// Patch features: owner image index and the patch matrix.
pub fn read_patches(path: &Path) -> Result<(Vec<usize>, Matrix)> {
    let (rows, numbers) = parse_rows(path, &read_text(path)?)?;
    let mut owner = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (row, n) in rows.iter().zip(numbers) {
        if row.len() < 2 {
            return Err(CliError::parse(path, n, "patch rows need an owner and at least one value"));
        }
        if row[0] < 0.0 || row[0].fract() != 0.0 {
            return Err(CliError::parse(path, n, format!("invalid owner index {}", row[0])));
        }
        owner.push(row[0] as usize);
        values.push(&row[1..]);
    }
    let cols = values.first().map_or(0, |r| r.len());
    Ok((owner, Matrix::from_rows(&values, cols)?))
}

pub fn read_labels(path: &Path) -> Result<Vec<Label>> {
    let text = read_text(path)?;
    let mut labels = Vec::new();
    for (n, l) in lines(&text) {
        let v: Label = parse_int(path, n, l)?;
        if v == 0 {
            return Err(CliError::parse(path, n, "labels are 1-based"));
        }
        labels.push(v);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[Label]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        writeln!(out, "{l}").unwrap();
    }
    write_text(path, &out)
}

const TRIPLET_HEADER: &str = "anchor,hit,miss,miss_class";

pub fn format_triplets(triples: &[Triplet]) -> String {
    let mut out = String::from(TRIPLET_HEADER);
    out.push('\n');
    for t in triples {
        writeln!(out, "{},{},{},{}", t.anchor, t.hit, t.miss, t.miss_class).unwrap();
    }
    out
}

pub fn read_triplets(path: &Path) -> Result<Vec<Triplet>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (n, l) in lines(&text) {
        if l == TRIPLET_HEADER {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 4 {
            return Err(CliError::parse(path, n, format!("expected 4 fields, found {}", f.len())));
        }
        out.push(Triplet {
            anchor: parse_int(path, n, f[0])?,
            hit: parse_int(path, n, f[1])?,
            miss: parse_int(path, n, f[2])?,
            miss_class: parse_int(path, n, f[3])?,
        });
    }
    Ok(out)
}

fn push_joined(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v}").unwrap();
    }
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Image => "image",
        Mode::Patch => "patch",
    }
}

pub fn parse_mode(s: &str) -> Option<Mode> {
    match s {
        "image" => Some(Mode::Image),
        "patch" => Some(Mode::Patch),
        _ => None,
    }
}

/// Learned hash functions and Hamming weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub mode: Mode,
    pub codebook: CodeBook,
    pub weights: WeightMatrix,
}

const MODEL_MAGIC: &str = "cbid-model v1";

/// Model envelope:
///
/// ```text
/// cbid-model v1
/// mode image
/// d <input dimension>
/// t <bits>
/// k <weight columns>
/// beta_1,...,beta_d,bias      (t lines)
/// w_1,...,w_k                 (t lines)
/// ```
pub fn format_model(m: &Model) -> String {
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC}").unwrap();
    writeln!(out, "mode {}", mode_name(m.mode)).unwrap();
    writeln!(out, "d {}", m.codebook.dim()).unwrap();
    writeln!(out, "t {}", m.codebook.bits()).unwrap();
    writeln!(out, "k {}", m.weights.columns()).unwrap();
    for h in m.codebook.functions() {
        push_joined(&mut out, h.beta());
        writeln!(out, ",{}", h.bias()).unwrap();
    }
    for s in 0..m.weights.bits() {
        push_joined(&mut out, m.weights.row(s));
        out.push('\n');
    }
    out
}

pub fn read_model(path: &Path) -> Result<Model> {
    let text = read_text(path)?;
    let mut it = lines(&text);
    let mut next = |what: &str| {
        it.next()
            .ok_or_else(|| CliError::parse(path, text.lines().count(), format!("missing {what}")))
    };
    let (n, magic) = next("header")?;
    if magic != MODEL_MAGIC {
        return Err(CliError::parse(path, n, format!("expected {MODEL_MAGIC:?}")));
    }
    let mut field = |key: &str| -> Result<(usize, String)> {
        let (n, l) = next(key)?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v.trim().to_string())),
            _ => Err(CliError::parse(path, n, format!("expected `{key} <value>`"))),
        }
    };
    let (n, mode) = field("mode")?;
    let mode = parse_mode(&mode).ok_or_else(|| CliError::parse(path, n, "mode must be image or patch"))?;
    let (n, d) = field("d")?;
    let d: usize = parse_int(path, n, &d)?;
    let (n, t) = field("t")?;
    let t: usize = parse_int(path, n, &t)?;
    let (n, k) = field("k")?;
    let k: usize = parse_int(path, n, &k)?;

    let mut codebook = CodeBook::new(d);
    for _ in 0..t {
        let (n, l) = next("hash function")?;
        let v = l
            .split(',')
            .map(|f| parse_f64(path, n, f))
            .collect::<Result<Vec<f64>>>()?;
        if v.len() != d + 1 {
            return Err(CliError::parse(path, n, format!("expected {} values, found {}", d + 1, v.len())));
        }
        let h = HashFunction::new(v[..d].to_vec(), v[d])
            .map_err(|e| CliError::parse(path, n, e.to_string()))?;
        codebook.push(h)?;
    }
    let mut w = Vec::with_capacity(t * k);
    for _ in 0..t {
        let (n, l) = next("weight row")?;
        let before = w.len();
        for f in l.split(',') {
            w.push(parse_f64(path, n, f)?);
        }
        if w.len() - before != k {
            return Err(CliError::parse(path, n, format!("expected {k} weights")));
        }
    }
    if let Ok((n, _)) = next("end") {
        return Err(CliError::parse(path, n, "trailing content"));
    }
    let weights = WeightMatrix::from_rows(t, k, w).map_err(|e| CliError::parse(path, 1, e.to_string()))?;
    Ok(Model {
        mode,
        codebook,
        weights,
    })
}

pub fn format_trace(trace: &[TraceRow]) -> String {
    let mut out = String::from("iter,objective,max_violation,chosen_class\n");
    for r in trace {
        writeln!(out, "{},{},{},{}", r.iter, r.objective, r.max_violation, r.chosen_class).unwrap();
    }
    out
}

/// Hex string of a code, two digits per byte; bit `s` is bit `7 - s % 8` of
/// byte `s / 8` (most significant first), set for `+1`.
pub fn code_to_hex(code: &BinaryCode) -> String {
    let mut bytes = vec![0u8; code.len().div_ceil(8)];
    for s in 0..code.len() {
        if code.bit(s) {
            bytes[s / 8] |= 0x80 >> (s % 8);
        }
    }
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

/// Inverse of [`code_to_hex`]; `None` on malformed input or set padding bits.
pub fn hex_to_code(hex: &str, bits: usize) -> Option<BinaryCode> {
    if hex.len() != bits.div_ceil(8) * 2 || !hex.is_ascii() {
        return None;
    }
    let mut flags = vec![false; bits];
    for j in 0..hex.len() / 2 {
        let b = u8::from_str_radix(&hex[2 * j..2 * j + 2], 16).ok()?;
        for i in 0..8 {
            let s = 8 * j + i;
            let set = b & (0x80 >> i) != 0;
            if s < bits {
                flags[s] = set;
            } else if set {
                return None;
            }
        }
    }
    Some(BinaryCode::from_bools(&flags))
}

pub fn format_db(db: &CodeDatabase) -> String {
    let mut out = String::new();
    writeln!(out, "{}", db.bits()).unwrap();
    for e in db.entries() {
        writeln!(out, "{},{},{}", e.id, e.label, code_to_hex(&e.code)).unwrap();
    }
    out
}

pub fn read_db(path: &Path) -> Result<CodeDatabase> {
    let text = read_text(path)?;
    let mut it = lines(&text);
    let (n, header) = it
        .next()
        .ok_or_else(|| CliError::parse(path, 1, "missing bit count header"))?;
    let bits: usize = parse_int(path, n, header)?;
    let mut entries = Vec::new();
    for (n, l) in it {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 3 {
            return Err(CliError::parse(path, n, format!("expected 3 fields, found {}", f.len())));
        }
        let code = hex_to_code(f[2].trim(), bits)
            .ok_or_else(|| CliError::parse(path, n, format!("invalid {bits}-bit hex code {:?}", f[2])))?;
        entries.push(CodeEntry {
            id: parse_int(path, n, f[0])?,
            label: parse_int(path, n, f[1])?,
            code,
        });
    }
    CodeDatabase::from_entries(bits, entries).map_err(|e| CliError::parse(path, 1, e.to_string()))
}

pub fn format_predictions(rows: &[(u64, Label, f64)]) -> String {
    let mut out = String::from("query_id,predicted_label,score\n");
    for (q, l, s) in rows {
        writeln!(out, "{q},{l},{s}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_layout() {
        let c = BinaryCode::from_signs(&[1, -1, -1, -1, -1, -1, -1, 1, 1]);
        assert_eq!(code_to_hex(&c), "8180");
        assert_eq!(hex_to_code("8180", 9), Some(c));
        assert_eq!(hex_to_code("81c0", 9), None);
        assert_eq!(hex_to_code("81", 9), None);
        assert_eq!(code_to_hex(&BinaryCode::zeros(0)), "");
    }
}
